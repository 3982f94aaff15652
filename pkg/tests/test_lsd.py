import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from tslsd.kernel import kernel_matrix
from tslsd.lsd import (
    ConvergenceError,
    LsdProblem,
    SolverOptions,
    continuation_solve,
    contraction_level,
    fixed_point_map,
    lsd_second_moment,
    solve_beta,
    solve_block,
    solve_scalar,
    start_level,
    stieltjes_lsd,
)
from tslsd.model import ar1_model, arma11_model, identity_model, ma_model

GOLDEN = (math.sqrt(5) - 1) / 2


def quad_root(z, R):
    # C+ root of R s^2 + z s + 1 = 0 via numpy.roots
    r = np.roots([R, z, 1])
    return r[np.argmax(r.imag)]


def semicircle_s(z):
    r = np.sqrt(z * z - 4 + 0j)
    s = (-z + r) / 2
    return s if s.imag > 0 else (-z - r) / 2


def z_points(k, seed=0, vmin=1e-3, vmax=10.0, xmax=3.0):
    rng = np.random.default_rng(seed)
    v = np.exp(rng.uniform(np.log(vmin), np.log(vmax), k))
    return rng.uniform(-xmax, xmax, k) + 1j * v


def ma1_two():
    return ma_model([0.5, -0.5])


class TestFixedPointMap:
    def test_one_step(self):
        assert fixed_point_map(np.zeros(1), 1j, [[1.0]], [1.0])[0] == pytest.approx(1j)

    def test_zero_kernel(self):
        out = fixed_point_map(np.array([0.3j, 0.1 + 1j]), 1j, np.zeros((2, 2)), [0.5, 0.5])
        assert np.all(out == 0)

    def test_permutation_equivariant(self):
        K = np.array([[2.0, 1.0], [1.0, 2.0]])
        out = fixed_point_map(np.array([0.4j, 0.4j]), 0.3 + 1j, K, [0.5, 0.5])
        assert out[0] == out[1]
        b = np.array([0.1 + 0.4j, -0.2 + 0.7j])
        P = [1, 0]
        assert_allclose(fixed_point_map(b[P], 1j, K[np.ix_(P, P)], [0.5, 0.5]),
                        fixed_point_map(b, 1j, K, [0.5, 0.5])[P])

    def test_lower_half_plane(self):
        with pytest.raises(ValueError):
            fixed_point_map(np.zeros(1), 1.0, [[1.0]], [1.0])

    def test_pole(self):
        with pytest.raises(ZeroDivisionError):
            fixed_point_map(np.array([-1j]), 1j, [[1.0]], [1.0])


class TestSolveBeta:
    def test_iid(self):
        beta, it, r = solve_beta(1j, [[1.0]], [1.0])
        assert beta[0] == pytest.approx(GOLDEN * 1j, abs=1e-10)
        assert r <= 1e-10

    def test_half(self):
        beta, _, _ = solve_beta(1j, [[0.5]], [1.0])
        assert beta[0] == pytest.approx(1j * (math.sqrt(3) - 1) / 2, abs=1e-10)
        assert beta[0] == pytest.approx(0.5 * quad_root(1j, 0.5), abs=1e-10)

    def test_large_v_laurent(self):
        K = kernel_matrix(ma_model([0.5, -0.3, 0.8]), 0).entries
        w = np.array([0.2, 0.3, 0.5])
        m = K @ w
        for v in (20.0, 40.0, 80.0):
            beta, _, _ = solve_beta(1j * v, K, w)
            err = np.max(np.abs(beta + m / (1j * v)))
            assert err <= 2 * np.max(K @ m) / v ** 3

    def test_warm_start(self):
        b1, _, _ = solve_beta(0.3 + 0.5j, [[1.0]], [1.0])
        b2, it, _ = solve_beta(0.3 + 0.5j, [[1.0]], [1.0], beta0=b1)
        assert it == 0
        assert_allclose(b2, b1)

    def test_below_vmin(self):
        with pytest.raises(ValueError):
            solve_beta(1e-6j, [[1.0]], [1.0])

    def test_nonconvergence_error(self):
        with pytest.raises(ConvergenceError) as exc:
            solve_beta(0.01j, [[1.0]], [1.0], tol=1e-30, max_iter=3)
        assert exc.value.residual > 0


class TestClosedForms:
    def test_scalar_values(self):
        assert solve_scalar(1j, 1.0) == pytest.approx(GOLDEN * 1j, abs=1e-12)
        assert solve_scalar(1j, 0.5) == pytest.approx(1j * (math.sqrt(3) - 1), abs=1e-12)
        assert solve_scalar(3j, 1.0) == pytest.approx(1j * (math.sqrt(13) - 3) / 2, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-5, 5), st.floats(1e-4, 20), st.floats(0.05, 5))
    def test_scalar_matches_roots(self, x, y, R):
        z = complex(x, y)
        s = solve_scalar(z, R)
        assert s.imag > 0
        assert abs(R * s * s + z * s + 1) <= 1e-9 * (1 + abs(z) * abs(s))

    def test_scalar_branch_is_herglotz_not_real_part_sign(self):
        # on the real-axis approach both signs of Re z must give Im s > 0
        for x in (-3.0, -1.0, 1.0, 3.0):
            assert solve_scalar(x + 1e-4j, 1.0).imag > 0

    def test_iid_lsd_semicircle(self):
        z = z_points(40, seed=1)
        sol = continuation_solve(z, [[1.0]], [1.0])
        ref = np.array([semicircle_s(zz) for zz in z])
        assert np.max(np.abs(sol.s - ref)) <= 1e-9

    def test_path_equivalence(self):
        z = z_points(20, seed=2)
        for R in (0.5, 1.0, 2.0):
            s_closed = solve_scalar(z, R)
            s_beta = np.array([stieltjes_lsd(zz, solve_beta(zz, [[R]], [1.0])[0], [1.0]) for zz in z])
            s_block = np.array([solve_block(zz, [1.0], [[R]])[1] for zz in z])
            assert np.max(np.abs(s_beta - s_closed)) <= 1e-10
            assert np.max(np.abs(s_block - s_closed)) <= 1e-10


class TestBlock:
    def test_degenerate_merge(self):
        for z in (1j, 0.5 + 0.2j, -1.5 + 0.01j):
            _, s = solve_block(z, [0.5, 0.5], np.ones((2, 2)))
            assert s == pytest.approx(solve_scalar(z, 1.0), abs=1e-10)

    def test_cross_path(self):
        R = np.array([[1.3, 0.4], [0.4, 0.8]])
        om = np.array([0.3, 0.7])
        for z in z_points(10, seed=3):
            beta_b, s_b = solve_block(z, om, R)
            beta_g, _, _ = solve_beta(z, R, om)
            assert np.max(np.abs(beta_b - beta_g)) <= 1e-10
            assert s_b == pytest.approx(stieltjes_lsd(z, beta_g, om), abs=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            solve_block(1j, [0.4, 0.4], np.ones((2, 2)))
        with pytest.raises(ValueError):
            solve_block(1j, [0.5, 0.5], [[1.0, 0.2], [0.3, 1.0]])
        with pytest.raises(ValueError):
            solve_block(1j, [0.5, 0.5], [[1.0, -0.2], [-0.2, 1.0]])


class TestContinuation:
    def test_center(self):
        v = 1e-3
        sol = continuation_solve([1j * v], [[1.0]], [1.0])
        ref = (-1j * v + 1j * math.sqrt(v * v + 4)) / 2
        assert sol.s[0] == pytest.approx(ref, abs=1e-10)
        assert sol.s[0].imag == pytest.approx(0.99950, abs=1e-5)

    def test_outside_support(self):
        sol = continuation_solve([3 + 1e-3j], [[1.0]], [1.0])
        assert 0 < sol.s[0].imag <= 1e-2

    def test_iteration_budget(self):
        prob = LsdProblem.from_model(ma1_two(), 0)
        x = np.linspace(-3, 3, 121)
        sol = prob.solve(np.concatenate([x + 1e-3j, x + 0.1j, x + 1j]))
        assert sol.all_converged
        assert np.max(sol.max_level_iterations) <= 50

    def test_herglotz(self):
        for model in (ma1_two(), ar1_model([0.5, -0.3]), arma11_model([0.5], [0.2])):
            for tau in (0, 1, 3):
                prob = LsdProblem.from_model(model, tau)
                sol = prob.solve(z_points(60, seed=tau))
                assert sol.all_converged
                assert np.all(sol.s.imag > 0)
                assert np.all(sol.beta.imag > 0)
                assert np.max(sol.residual) <= 1e-10

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            continuation_solve([1e-6j], [[1.0]], [1.0])
        with pytest.raises(ValueError):
            continuation_solve([], [[1.0]], [1.0])

    def test_levels(self):
        K = kernel_matrix(ma1_two(), 0).entries
        w = [0.5, 0.5]
        assert contraction_level(K, w, L1=1.5) == pytest.approx(math.sqrt(2) * 1.5)
        assert contraction_level([[0.1]], [1.0], L1=0.2) == 1.0
        assert start_level(K, w, L1=1.5) == pytest.approx(max(math.sqrt(2) * 1.5, 2 * math.sqrt(1.5625)))

    def test_chunking_independent(self):
        z = z_points(30, seed=7)
        a = continuation_solve(z, [[1.0]], [1.0])
        b = continuation_solve(z, [[1.0]], [1.0], chunk=7)
        assert np.array_equal(a.s, b.s)

    def test_options_override(self):
        sol = continuation_solve([1j], [[1.0]], [1.0], options=SolverOptions(tol=1e-6))
        assert sol.residual[0] <= 1e-6


class TestMoments:
    def test_second_moment(self):
        assert lsd_second_moment([[1.0]], [1.0]) == 1.0
        assert lsd_second_moment([[0.5]], [1.0]) == 0.5
        K = kernel_matrix(ma1_two(), 0).entries
        assert lsd_second_moment(K, [0.5, 0.5]) == pytest.approx(1.5625, abs=1e-14)

    @pytest.mark.parametrize("model", [ma_model([0.5, -0.5]), ar1_model([0.5]),
                                       arma11_model([0.5], [0.2])], ids=["ma1", "ar1", "arma11"])
    @pytest.mark.parametrize("tau", [0, 1])
    def test_mass_tails(self, model, tau):
        prob = LsdProblem.from_model(model, tau)
        m2 = prob.second_moment
        m = prob.mass
        c = 4 * np.max(prob.K @ m)
        for v in (10.0, 20.0, 40.0):
            sol = prob.solve([1j * v])
            assert abs(1j * v * sol.s[0] + 1) <= 4 * m2 / v ** 2
            assert np.max(np.abs(1j * v * sol.beta[0] + m)) <= c / v ** 2

    def test_tau_stationarity(self):
        model = ma_model([0.5, -0.5])
        z = z_points(20, seed=4)
        s2 = LsdProblem.from_model(model, 2).solve(z).s
        s3 = LsdProblem.from_model(model, 3).solve(z).s
        assert np.max(np.abs(s2 - s3)) <= 1e-10

    def test_continuity(self):
        prob = LsdProblem.from_model(ma1_two(), 0)
        z = z_points(20, seed=5, vmin=0.1)
        delta = 1e-6
        s0 = prob.solve(z).s
        s1 = continuation_solve(z, prob.K + delta, prob.weights, L1=prob.L1).s
        assert np.all(np.abs(s1 - s0) <= delta / z.imag ** 2)


def test_csv(tmp_path):
    sol = continuation_solve([1j, 0.5 + 0.2j], [[1.0]], [1.0])
    path = tmp_path / "lsd.csv"
    sol.to_csv(path, "hdr")
    lines = path.read_text().splitlines()
    assert lines[0] == "# hdr"
    assert lines[1] == "re_z,im_z,re_s,im_s,iterations,residual"
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    assert_allclose(data[:, 2] + 1j * data[:, 3], sol.s, rtol=0, atol=0)


def test_identity_problem():
    prob = LsdProblem.from_model(identity_model(), 0)
    assert prob.second_moment == pytest.approx(1.0)
    assert prob.support_radius() == pytest.approx(2.0)
