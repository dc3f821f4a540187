"""Static SVG line plots for eyeball comparison with the published figures.

Output is deterministic (fixed hash salt, no embedded date) so repeated runs
with the same seed are byte identical.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["save_line_svg"]

plt.rcParams["svg.hashsalt"] = "rotorspin"


def save_line_svg(path, x, series: dict, xlabel: str, ylabel: str,
                  title: str = "", yerr: dict | None = None) -> None:
    """Write one SVG with a line per entry of ``series`` (label -> y array)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, y in series.items():
        if yerr and label in yerr:
            ax.errorbar(x, y, yerr=yerr[label], label=label, marker="o",
                        markersize=3, capsize=2, linewidth=1)
        else:
            ax.plot(x, y, label=label, linewidth=1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
