"""Instantaneous spectrum of the rotating NV-N14 system.

Builds the 9x9 ground-state Hamiltonian

    H = D Sz^2 - gamma_e S.B - gamma_n I.B + Q Iz^2
        + A_par Sz Iz + A_perp (Sx Ix + Sy Iy)

for the body-frame field at each rotation phase, eigendecomposes it, and
tracks the instantaneous eigenstates continuously over one rotation by
maximum-overlap matching with gauge-fixed phases. From the track it derives
the qubit transition frequency (the state tracked from |0,+1> against the one
tracked from |0,0>), projections onto the aligned-field eigenbasis, and the
hyperfine augmentation factor of the effective nuclear drive coupling.

The augmentation factor is reported as the ratio of the actual transition
matrix element of the rf coupling operator to the bare nuclear matrix element
for the same drive axis, so a pure (decoupled) nuclear spin gives exactly 1
and the aligned-field NV-enhanced value is ~20.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from rotorspin.geometry import (
    FieldGeometry,
    RotationConfig,
    static_field_nv_frame,
)
from rotorspin.spincore import (
    PhysicalConstants,
    basis_index,
    embed_electron,
    embed_nuclear,
    embed_pair,
    spin1_operators,
)
from rotorspin.util import TWO_PI, worker_count

__all__ = [
    "TrackingAmbiguityError",
    "EigenDecomposition",
    "AdiabaticTrack",
    "hamiltonian",
    "rf_operator",
    "eigendecompose",
    "build_track",
    "bare_projections",
    "transition_frequency",
    "augmentation_factor",
]

ETA_BARE_INDEX = basis_index(0, +1)   # polarized bright state |0,+1>
ZETA_BARE_INDEX = basis_index(0, 0)   # qubit partner state |0,0>


class TrackingAmbiguityError(RuntimeError):
    """Eigenstate continuity matching could not label a sample unambiguously."""


@lru_cache(maxsize=8)
def _hamiltonian_parts(c: PhysicalConstants):
    """Field-independent part and the three Zeeman operators (per Gauss)."""
    ops = spin1_operators()
    h0 = (
        c.d_zfs * embed_electron(ops.sz @ ops.sz)
        + c.quadrupole_q * embed_nuclear(ops.sz @ ops.sz)
        + c.a_par * embed_pair(ops.sz, ops.sz)
        + c.a_perp * (embed_pair(ops.sx, ops.sx) + embed_pair(ops.sy, ops.sy))
    )
    zeeman = tuple(
        -c.gamma_e * embed_electron(s) - c.gamma_n * embed_nuclear(s)
        for s in (ops.sx, ops.sy, ops.sz)
    )
    return h0, zeeman


def hamiltonian(b_vec, c: PhysicalConstants) -> np.ndarray:
    """9x9 Hamiltonian (rad/s) for a body-frame field vector in Gauss."""
    b = np.asarray(b_vec, dtype=float)
    if b.shape != (3,):
        raise ValueError(f"b_vec must be a 3-vector, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"field vector must be finite, got {b}")
    h0, (hx, hy, hz) = _hamiltonian_parts(c)
    return h0 + b[0] * hx + b[1] * hy + b[2] * hz


def hamiltonian_stack(b_vecs: np.ndarray, c: PhysicalConstants) -> np.ndarray:
    """Vectorized Hamiltonian for a stack of field vectors, shape (N, 3) -> (N, 9, 9)."""
    b = np.asarray(b_vecs, dtype=float)
    if b.ndim != 2 or b.shape[1] != 3:
        raise ValueError(f"b_vecs must have shape (N, 3), got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("field vectors must be finite")
    h0, zeeman = _hamiltonian_parts(c)
    h = np.broadcast_to(h0, (b.shape[0], 9, 9)).copy()
    for i in range(3):
        h += b[:, i, None, None] * zeeman[i]
    return h


def rf_operator(axis, c: PhysicalConstants) -> np.ndarray:
    """Drive coupling operator per unit field (rad/s/G): gamma_e S.a + gamma_n I.a.

    Generalizes the x-axis drive form to an arbitrary unit axis in the body
    frame. ``axis`` must be a unit 3-vector.
    """
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"axis must be a 3-vector, got shape {a.shape}")
    norm = np.linalg.norm(a)
    if norm == 0:
        raise ValueError("rf axis must be nonzero")
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"rf axis must be a unit vector, |axis| = {norm}")
    ops = spin1_operators()
    s_dot = a[0] * ops.sx + a[1] * ops.sy + a[2] * ops.sz
    return c.gamma_e * embed_electron(s_dot) + c.gamma_n * embed_nuclear(s_dot)


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigensystem of one Hamiltonian sample: ascending energies (rad/s) and
    the eigenvector matrix P (columns are eigenvectors)."""

    energies: np.ndarray
    vectors: np.ndarray


def eigendecompose(h: np.ndarray) -> EigenDecomposition:
    energies, vectors = np.linalg.eigh(h)
    return EigenDecomposition(energies=energies, vectors=vectors)


@dataclass(frozen=True)
class AdiabaticTrack:
    """Continuity-labeled instantaneous eigensystem over one rotation.

    ``energies[j, k]`` and ``vectors[j, :, k]`` follow state k continuously
    from phi_grid[0]; eigenvector phases are fixed so consecutive overlaps
    <v_k(phi_j)|v_k(phi_j+1)> are real and positive. ``label_bare_index[k]``
    is the dominant product-basis index of state k at phi = 0;
    ``eta_label``/``zeta_label`` are the labels of the states dominated by
    |0,+1> and |0,0> there.
    """

    phi_grid: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    label_bare_index: np.ndarray
    eta_label: int
    zeta_label: int
    geometry: FieldGeometry
    rotation: RotationConfig
    constants: PhysicalConstants

    @property
    def n_samples(self) -> int:
        return self.phi_grid.size

    def label_for_bare(self, bare_index: int) -> int:
        """Track label of the state whose phi=0 identity is the given basis index."""
        hits = np.nonzero(self.label_bare_index == bare_index)[0]
        if hits.size != 1:
            raise ValueError(f"no unique tracked state for bare index {bare_index}")
        return int(hits[0])


def _eigh_chunked(h: np.ndarray):
    """Batched eigh, chunked across worker threads (LAPACK releases the GIL)."""
    n = h.shape[0]
    workers = min(worker_count(), max(1, n // 256))
    if workers <= 1:
        return np.linalg.eigh(h)
    bounds = np.linspace(0, n, workers + 1, dtype=int)
    evals = np.empty((n, 9))
    evecs = np.empty((n, 9, 9), dtype=complex)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [
            pool.submit(np.linalg.eigh, h[lo:hi])
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        for (lo, hi), fut in zip(zip(bounds[:-1], bounds[1:]), futs):
            evals[lo:hi], evecs[lo:hi] = fut.result()
    return evals, evecs


def build_track(
    geom: FieldGeometry,
    rot: RotationConfig,
    c: PhysicalConstants,
    n_samples: int = 4096,
) -> AdiabaticTrack:
    """Eigendecompose H(phi) on a uniform grid over [0, 2*pi] and label states
    continuously by greedy maximum-overlap matching to the previous sample.

    Raises TrackingAmbiguityError when the best and second-best overlaps for
    some state differ by less than 1e-3 (raise n_samples), or when the best
    overlap falls below the 0.5 acceptance floor.
    """
    if n_samples < 64:
        raise ValueError(f"n_samples must be >= 64, got {n_samples}")
    phi = np.linspace(0.0, TWO_PI, n_samples)
    h = hamiltonian_stack(static_field_nv_frame(phi, geom), c)
    evals, evecs = _eigh_chunked(h)

    energies = np.empty_like(evals)
    vectors = np.empty_like(evecs)
    energies[0] = evals[0]
    vectors[0] = evecs[0]
    # canonical phase at phi = 0: largest component real positive
    for k in range(9):
        col = vectors[0][:, k]
        lead = col[np.argmax(np.abs(col))]
        vectors[0][:, k] = col * (np.conj(lead) / abs(lead))

    for j in range(1, n_samples):
        overlap = np.abs(vectors[j - 1].conj().T @ evecs[j]) ** 2
        perm = np.full(9, -1)
        taken = np.zeros(9, dtype=bool)
        for k in range(9):
            row = np.where(taken, -np.inf, overlap[k])
            order = np.argsort(row)[::-1]
            best, second = order[0], order[1]
            if row[best] - max(row[second], 0.0) < 1e-3:
                raise TrackingAmbiguityError(
                    f"ambiguous eigenstate match for label {k} at sample {j} "
                    f"(phi = {phi[j]:.6f} rad): overlaps "
                    f"{row[best]:.6f} vs {row[second]:.6f}; increase n_samples"
                )
            if row[best] < 0.5:
                raise TrackingAmbiguityError(
                    f"eigenstate continuity lost for label {k} at sample {j} "
                    f"(phi = {phi[j]:.6f} rad): best overlap {row[best]:.6f} < 0.5; "
                    "increase n_samples"
                )
            perm[k] = best
            taken[best] = True
        energies[j] = evals[j][perm]
        vectors[j] = evecs[j][:, perm]
        # gauge: make <v_k(j-1)|v_k(j)> real positive
        inner = np.einsum("ik,ik->k", vectors[j - 1].conj(), vectors[j])
        vectors[j] *= np.conj(inner) / np.abs(inner)

    label_bare = np.argmax(np.abs(vectors[0]) ** 2, axis=0)
    if len(set(label_bare.tolist())) != 9:
        raise TrackingAmbiguityError(
            "aligned-field eigenstates do not map one-to-one onto basis states"
        )
    label_bare = label_bare.astype(int)
    eta = int(np.nonzero(label_bare == ETA_BARE_INDEX)[0][0])
    zeta = int(np.nonzero(label_bare == ZETA_BARE_INDEX)[0][0])
    return AdiabaticTrack(
        phi_grid=phi,
        energies=energies,
        vectors=vectors,
        label_bare_index=label_bare,
        eta_label=eta,
        zeta_label=zeta,
        geometry=geom,
        rotation=rot,
        constants=c,
    )


def bare_projections(track: AdiabaticTrack, bare_index: int = ETA_BARE_INDEX) -> np.ndarray:
    """Populations of one tracked state in the aligned-field eigenbasis.

    ``bare_index`` selects the tracked state by its phi=0 identity (product
    basis index). Returns shape (n_samples, 9); column k is the weight on the
    aligned eigenstate whose dominant basis index is k; rows sum to 1.
    """
    label = track.label_for_bare(bare_index)
    aligned = track.vectors[0]
    amps = np.einsum("ik,nkj->nij", aligned.conj().T, track.vectors)[:, :, label]
    weights = np.abs(amps) ** 2
    # report columns in product-basis order of the aligned states
    out = np.empty_like(weights)
    out[:, track.label_bare_index] = weights
    return out


def transition_frequency(
    track: AdiabaticTrack,
    bare_pair: tuple[int, int] = (ETA_BARE_INDEX, ZETA_BARE_INDEX),
) -> np.ndarray:
    """Transition frequency |E_b - E_a| / 2*pi in Hz along the track for the
    pair of tracked states identified by their phi=0 basis indices."""
    la = track.label_for_bare(bare_pair[0])
    lb = track.label_for_bare(bare_pair[1])
    return np.abs(track.energies[:, lb] - track.energies[:, la]) / TWO_PI


def augmentation_factor(
    track: AdiabaticTrack,
    rf_axis,
    c: PhysicalConstants | None = None,
) -> np.ndarray:
    """Effective drive-coupling augmentation alpha'(phi) for the eta-zeta pair.

    alpha'(phi) = |<zeta(phi)| (gamma_e S.a + gamma_n I.a) |eta(phi)>| /
                  (gamma_n * |a_x + i a_y| / sqrt(2))

    i.e. the transformed matrix element normalized to the bare nuclear one for
    the same axis, so alpha' = 1 for a decoupled nuclear spin and ~20 at the
    aligned field. Raises if the axis has no transverse component (the bare
    coupling vanishes).
    """
    if c is None:
        c = track.constants
    a = np.asarray(rf_axis, dtype=float)
    op = rf_operator(a, c)
    a_perp = np.hypot(a[0], a[1])
    if a_perp < 1e-12:
        raise ValueError("rf axis has no component transverse to the NV axis; "
                         "the bare nuclear coupling vanishes")
    bare = abs(c.gamma_n) * a_perp / np.sqrt(2.0)
    eta_v = track.vectors[:, :, track.eta_label]
    zeta_v = track.vectors[:, :, track.zeta_label]
    element = np.abs(np.einsum("ni,ij,nj->n", zeta_v.conj(), op, eta_v))
    return element / bare


def tracked_matrix_element(
    track: AdiabaticTrack, rf_axis, c: PhysicalConstants | None = None
) -> np.ndarray:
    """Complex eta->zeta matrix element of the rf coupling per Gauss (rad/s/G).

    The magnitude is alpha' times the bare coupling; dynamics uses it directly
    so no normalization convention enters the propagators.
    """
    if c is None:
        c = track.constants
    op = rf_operator(np.asarray(rf_axis, dtype=float), c)
    eta_v = track.vectors[:, :, track.eta_label]
    zeta_v = track.vectors[:, :, track.zeta_label]
    return np.einsum("ni,ij,nj->n", zeta_v.conj(), op, eta_v)
