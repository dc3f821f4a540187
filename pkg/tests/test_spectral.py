import numpy as np
import pytest

from rotorspin.geometry import FieldGeometry, RotationConfig, field_nv_angle
from rotorspin.spectral import (
    TrackingAmbiguityError,
    augmentation_factor,
    bare_projections,
    build_track,
    eigendecompose,
    hamiltonian,
    rf_operator,
    tracked_matrix_element,
    transition_frequency,
)
from rotorspin.spincore import PhysicalConstants, basis_index, spin1_operators
from rotorspin.util import TWO_PI

X_AXIS = np.array([1.0, 0.0, 0.0])


class TestHamiltonian:
    def test_zero_field_quadrupole_element(self):
        c = PhysicalConstants()
        h = hamiltonian([0.0, 0.0, 0.0], c)
        idx = basis_index(0, 1)
        assert h[idx, idx].real / TWO_PI == pytest.approx(-4.9457e6)

    def test_hermitian_by_construction(self):
        c = PhysicalConstants()
        h = hamiltonian([123.0, -45.0, 480.0], c)
        assert np.max(np.abs(h - h.conj().T)) == 0.0

    def test_aligned_gap_is_5p1_mhz(self, track):
        f = transition_frequency(track)
        assert f[0] == pytest.approx(5.1e6, rel=0.02)

    def test_nonfinite_field_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            hamiltonian([np.nan, 0.0, 0.0], PhysicalConstants())

    def test_spectrum_depends_only_on_polar_angle(self):
        # two azimuth conventions at the same field tilt share the spectrum
        c = PhysicalConstants()
        theta, chi = 0.83, 1.23
        b1 = 480.0 * np.array([np.sin(theta), 0.0, np.cos(theta)])
        b2 = 480.0 * np.array([np.sin(theta) * np.cos(chi),
                               np.sin(theta) * np.sin(chi), np.cos(theta)])
        e1 = np.linalg.eigvalsh(hamiltonian(b1, c))
        e2 = np.linalg.eigvalsh(hamiltonian(b2, c))
        assert np.max(np.abs(e1 - e2) / np.abs(e1)) <= 1e-9

    def test_eigendecomposition_contract(self):
        c = PhysicalConstants()
        h = hamiltonian([200.0, 130.0, 400.0], c)
        dec = eigendecompose(h)
        scale = np.linalg.norm(h)
        for k in range(9):
            resid = h @ dec.vectors[:, k] - dec.energies[k] * dec.vectors[:, k]
            assert np.max(np.abs(resid)) <= scale * 1e-10
        gram = dec.vectors.conj().T @ dec.vectors
        assert np.max(np.abs(gram - np.eye(9))) <= 1e-10
        assert np.all(np.diff(dec.energies) >= 0)


class TestRfOperator:
    def test_x_axis_form(self):
        c = PhysicalConstants()
        ops = spin1_operators()
        expected = c.gamma_e * np.kron(ops.sx, ops.identity3) + \
            c.gamma_n * np.kron(ops.identity3, ops.sx)
        assert np.allclose(rf_operator(X_AXIS, c), expected, atol=0)

    def test_hermitian(self):
        c = PhysicalConstants()
        op = rf_operator(np.array([0.6, 0.0, 0.8]), c)
        assert np.max(np.abs(op - op.conj().T)) == 0.0

    def test_electron_matrix_element(self):
        c = PhysicalConstants()
        op = rf_operator(X_AXIS, c)
        i, j = basis_index(1, 1), basis_index(0, 1)
        assert op[i, j] == pytest.approx(c.gamma_e / np.sqrt(2.0))

    def test_zero_axis_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            rf_operator([0.0, 0.0, 0.0], PhysicalConstants())

    def test_non_unit_axis_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            rf_operator([1.0, 1.0, 0.0], PhysicalConstants())


class TestTrack:
    def test_initial_state_is_bare(self, track):
        proj = bare_projections(track, basis_index(0, 1))
        assert proj[0, basis_index(0, 1)] > 0.999

    def test_mid_rotation_mixing(self, track):
        # near phi = pi the tracked bright state is close to an equal
        # superposition of the m_I = +1 and -1 aligned states
        mid = track.n_samples // 2
        proj = bare_projections(track, basis_index(0, 1))
        w_plus = proj[mid, basis_index(0, 1)]
        w_minus = proj[mid, basis_index(0, -1)]
        assert abs(w_plus - w_minus) <= 0.2 * max(w_plus, w_minus)

    def test_energy_periodicity(self, track):
        e0, e1 = track.energies[0], track.energies[-1]
        assert np.max(np.abs(e1 - e0) / np.abs(e0)) <= 1e-6

    def test_label_continuity(self, track):
        v = track.vectors
        inner = np.einsum("nik,nik->nk", v[:-1].conj(), v[1:])
        assert np.min(np.abs(inner) ** 2) > 0.5

    def test_gauge_real_positive(self, track):
        v = track.vectors
        inner = np.einsum("nik,nik->nk", v[:-1].conj(), v[1:])
        assert np.max(np.abs(inner.imag)) <= 1e-12
        assert np.min(inner.real) > 0.0

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError, match="n_samples"):
            build_track(FieldGeometry(), RotationConfig(), PhysicalConstants(), 32)

    def test_degenerate_tracking_raises_with_sample_location(self):
        # a vanishing nuclear Zeeman term leaves the m_I = +/-1 pair
        # degenerate and the continuity matching ill-posed
        c = PhysicalConstants(gamma_n=0.0)
        with pytest.raises(TrackingAmbiguityError, match="phi ="):
            build_track(FieldGeometry(), RotationConfig(), c, 256)


class TestProjections:
    def test_rows_sum_to_one(self, track):
        proj = bare_projections(track)
        assert np.max(np.abs(proj.sum(axis=1) - 1.0)) <= 1e-10

    def test_symmetric_about_pi(self, track):
        proj = bare_projections(track)
        assert np.max(np.abs(proj - proj[::-1])) <= 1e-6


class TestTransitionFrequency:
    def test_modulation_depth(self, track):
        f = transition_frequency(track)
        depth = np.ptp(f) / f[0]
        assert 0.15 <= depth <= 0.25

    def test_periodic(self, track):
        f = transition_frequency(track)
        assert f[-1] == pytest.approx(f[0], rel=1e-9)

    def test_grid_convergence(self, sim_config, track):
        # interpolants of the 4096- and 8192-sample tracks agree at probe
        # points far better than 1e-6 relative
        fine = build_track(sim_config.geometry, sim_config.rotation,
                           sim_config.constants, 8192)
        probe = np.linspace(0.1, TWO_PI - 0.1, 1001)
        f1 = np.interp(probe, track.phi_grid, transition_frequency(track))
        f2 = np.interp(probe, fine.phi_grid, transition_frequency(fine))
        assert np.max(np.abs(f2 - f1) / f1) < 1e-6


class TestAugmentation:
    def test_aligned_value_near_twenty(self, track):
        a = augmentation_factor(track, X_AXIS)
        assert 14.0 <= a[0] <= 26.0

    def test_collapse_ratio(self, track):
        a = augmentation_factor(track, X_AXIS)
        assert a.max() / a.min() >= 5.0

    def test_decoupled_limit_is_unity(self):
        # with no transverse hyperfine coupling and the field aligned, the
        # Hamiltonian is diagonal in the product basis: block-decoupled
        # oracle gives exactly the bare nuclear matrix element
        c = PhysicalConstants(a_perp=0.0)
        h = hamiltonian([0.0, 0.0, 480.0], c)
        assert np.max(np.abs(h - np.diag(np.diag(h)))) == 0.0
        tr = build_track(FieldGeometry(), RotationConfig(), c, 512)
        a = augmentation_factor(tr, X_AXIS)
        assert a[0] == pytest.approx(1.0, abs=1e-3)

    def test_symmetric_about_pi(self, track):
        a = augmentation_factor(track, X_AXIS)
        assert np.max(np.abs(a - a[::-1])) <= 1e-6 * a.max()

    def test_axis_without_transverse_component_rejected(self, track):
        with pytest.raises(ValueError, match="transverse"):
            augmentation_factor(track, np.array([0.0, 0.0, 1.0]))

    def test_matrix_element_magnitude_matches_alpha(self, track, sim_config):
        a = augmentation_factor(track, X_AXIS)
        m = np.abs(tracked_matrix_element(track, X_AXIS))
        bare = abs(sim_config.constants.gamma_n) / np.sqrt(2.0)
        assert np.allclose(m, a * bare, rtol=1e-12)


def test_angle_covers_published_range(track):
    theta = field_nv_angle(track.phi_grid, track.geometry)
    assert np.degrees(theta.max()) == pytest.approx(109.47, abs=0.01)
