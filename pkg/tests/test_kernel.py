import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tslsd.kernel import (
    exactness_threshold,
    kernel_entry,
    kernel_mass,
    kernel_matrix,
    kernel_stability_check,
)
from tslsd.model import (
    SpectralAtomMeasure,
    apply_filter,
    ar1_model,
    arma11_model,
    block_model,
    identity_model,
    ma_model,
    power_psi,
)

GRID = np.linspace(-0.9, 0.9, 9)


def ma1_closed(a, b, tau):
    base = (1 + a * a) * (1 + b * b)
    if tau == 0:
        return base + 2 * a * b
    if tau == 1:
        return base / 2 + 1.5 * a * b
    return base / 2 + a * b


def ma1_grid_model():
    return ma_model(GRID)


class TestEntry:
    def test_ma1_values(self):
        m = ma_model([0.5])
        assert kernel_entry(m, 0, [0.5], [0.5]) == pytest.approx(2.0625, abs=1e-14)
        assert kernel_entry(m, 1, [0.5], [0.5]) == pytest.approx(1.15625, abs=1e-14)
        assert kernel_entry(m, 2, [0.5], [0.5]) == pytest.approx(1.03125, abs=1e-14)

    def test_identity(self):
        m = identity_model()
        assert kernel_entry(m, 0, [0.0], [0.0]) == pytest.approx(1.0, abs=1e-15)
        for tau in (1, 2, 7):
            assert kernel_entry(m, tau, [0.0], [0.0]) == pytest.approx(0.5, abs=1e-15)

    def test_symmetric(self):
        m = ma_model([[0.3, 0.1], [-0.6, 0.4]])
        a, b = m.measure.points
        assert kernel_entry(m, 1, a, b) == kernel_entry(m, 1, b, a)

    def test_ma_refuses_low_n(self):
        m = ma_model([0.5])
        with pytest.raises(ValueError):
            kernel_entry(m, 2, [0.5], [0.5], N=exactness_threshold(m, 2) - 1)
        kernel_entry(m, 2, [0.5], [0.5], N=exactness_threshold(m, 2))

    def test_rational_warns_low_n(self):
        with pytest.warns(UserWarning):
            kernel_entry(ar1_model([0.5]), 0, [0.5], [0.5], N=64)

    def test_integral_oracle_ar1(self):
        # direct numerical integral of cos^2 psi psi with scipy
        from scipy.integrate import quad

        m = ar1_model([0.6, -0.4])

        def f(t):
            return np.cos(2 * t) ** 2 * power_psi(m, [0.6], t) * power_psi(m, [-0.4], t)

        ref = quad(f, 0, 2 * np.pi, limit=200, epsabs=1e-12, epsrel=1e-12)[0] / (2 * np.pi)
        assert kernel_entry(m, 2, [0.6], [-0.4]) == pytest.approx(ref, rel=1e-11)


class TestMatrix:
    @pytest.mark.parametrize("tau", [0, 1, 2, 5])
    def test_closed_form_grid(self, tau):
        K = kernel_matrix(ma1_grid_model(), tau).entries
        ref = ma1_closed(GRID[:, None], GRID[None, :], tau)
        assert np.max(np.abs(K - ref)) <= 1e-12

    def test_single_atom_zero(self):
        assert kernel_matrix(ma_model([0.0]), 0).entries.tolist() == [[1.0]]

    def test_two_atoms(self):
        K = kernel_matrix(ma_model([0.5, -0.5]), 0).entries
        assert_allclose(K, [[2.0625, 1.0625], [1.0625, 2.0625]], atol=1e-14)

    def test_unit_b(self):
        m = ma_model([0.5, -0.5], b_values=[1.0, 1.0])
        assert np.array_equal(kernel_matrix(m, 1, use_b=True).entries, kernel_matrix(m, 1).entries)

    def test_b_weighting(self):
        m = ma_model([0.5, -0.5], b_values=[2.0, 3.0])
        K = kernel_matrix(m, 0).entries
        assert_allclose(kernel_matrix(m, 0, use_b=True).entries, K * np.outer([2, 3], [2, 3]))

    def test_use_b_without_values(self):
        with pytest.raises(ValueError):
            kernel_matrix(ma_model([0.5]), 0, use_b=True)

    def test_exact_symmetry(self):
        for m in (ma1_grid_model(), ar1_model(GRID), arma11_model(GRID * 0.9, GRID[::-1])):
            K = kernel_matrix(m, 1).entries
            assert np.array_equal(K, K.T)

    def test_positive_and_bounded(self):
        pts = np.linspace(-0.95, 0.95, 7)
        models = [
            ma_model(pts), ar1_model(pts),
            arma11_model(pts, pts[::-1]),
            block_model(np.full(7, 1 / 7), pts[:, None]),
            apply_filter(ma_model(pts), [1.0, 0.3]),
        ]
        for m in models:
            for tau in (0, 1, 3):
                K = kernel_matrix(m, tau).entries
                assert np.min(K) > 0
                assert np.max(K) <= m.L1 ** 4 * (1 + 1e-12)

    def test_doubling_exact_for_ma(self):
        m = ma_model(np.column_stack([GRID, GRID[::-1] * 0.5]))
        for tau in (0, 3):
            N = exactness_threshold(m, tau)
            d = np.max(np.abs(kernel_matrix(m, tau, N).entries - kernel_matrix(m, tau, 2 * N).entries))
            assert d <= 1e-13

    def test_rational_default_no_warning(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            kernel_matrix(ar1_model([0.5, -0.3]), 1)

    def test_rational_doubling_reported(self):
        with pytest.warns(UserWarning, match="doubling"):
            kernel_matrix(ar1_model([0.98]), 0, N=256)

    def test_matrix_matches_entry(self):
        m = arma11_model([0.5, -0.2], [0.2, 0.6])
        K = kernel_matrix(m, 2).entries
        for i, a in enumerate(m.measure.points):
            for j, b in enumerate(m.measure.points):
                assert K[i, j] == pytest.approx(kernel_entry(m, 2, a, b), rel=1e-13)

    def test_filtered_uses_modified_psi(self):
        c = [1.0, -0.5]
        f = apply_filter(identity_model(), c)
        # |1 - 0.5 e^{i t}|^4 averaged: psi = 1.25 - cos t, mean of psi^2 = 1.5625 + 0.5
        assert kernel_matrix(f, 0).entries[0, 0] == pytest.approx(2.0625, abs=1e-14)

    def test_mass(self):
        K = kernel_matrix(ma_model([0.5, -0.5]), 0)
        assert_allclose(kernel_mass(K, [0.5, 0.5]), [1.5625, 1.5625])


class TestStability:
    def test_ma1(self):
        rep = kernel_stability_check(ma_model([0.5, -0.2]))
        assert rep.passed and (rep.tau_a, rep.tau_b) == (2, 3)

    def test_ma0(self):
        # MA(0) is the identity model
        rep = kernel_stability_check(identity_model(SpectralAtomMeasure.uniform([[0.0]])))
        assert rep.passed and (rep.tau_a, rep.tau_b) == (1, 2)

    def test_lag_one_differs(self):
        m = ma_model([0.5])
        d = kernel_matrix(m, 1).entries[0, 0] - kernel_matrix(m, 2).entries[0, 0]
        assert d == pytest.approx(0.125, abs=1e-14)

    def test_rational_refused(self):
        with pytest.raises(ValueError):
            kernel_stability_check(ar1_model([0.5]))
