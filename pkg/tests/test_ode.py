import json
import math

import numpy as np
import pytest

from qode import (
    MAX_OP,
    ConfigurationError,
    InadmissiblePError,
    NumericError,
    WeightedNorm,
    boltzmann,
    certify_decay,
    choose_even_p,
    f_infinity_field,
    integrate,
    lse,
    lyapunov_series,
    mdp_ode_system,
    random_mdp,
    save_trajectory_csv,
    solve_fixed_point,
    synthetic_affine_system,
    vector_field,
)
from qode.mdp import build_sampling_distribution
from qode.ode import OdeSystem, INF_NORM_CONTRACTION


def scalar_system(d=1.0, alpha=0.5, b=1.0):
    return synthetic_affine_system(alpha, np.array([1.0]), np.array([b]), np.array([d]))


class TestVectorField:
    def test_zero_at_fixed_point(self, mdp53):
        system = mdp_ode_system(mdp53, MAX_OP)
        q_star = solve_fixed_point(mdp53, MAX_OP, tol=1e-10).q_star
        assert np.max(np.abs(vector_field(system, q_star))) <= 1e-10

    def test_unit_mdp_field(self, unit_mdp):
        system = mdp_ode_system(unit_mdp, MAX_OP)
        np.testing.assert_allclose(vector_field(system, np.array([0.0])), [1.0])

    def test_linear_in_gain(self):
        a = np.array([0.5, -0.25, 1.0])
        b = np.array([1.0, 2.0, -1.0])
        full = synthetic_affine_system(0.5, a, b, np.ones(3))
        half = synthetic_affine_system(0.5, a, b, np.full(3, 0.5))
        q = np.array([0.3, -2.0, 5.0])
        np.testing.assert_array_equal(
            vector_field(half, q), 0.5 * vector_field(full, q)
        )


class TestIntegrate:
    def test_equilibrium_preserved(self, mdp53):
        system = mdp_ode_system(mdp53, lse(10.0))
        q_star = solve_fixed_point(mdp53, lse(10.0), tol=1e-12).q_star
        traj = integrate(system, q_star, t_end=2.0, h=1e-3, stride=100)
        assert np.max(np.abs(traj.states - q_star[None, :])) <= 1e-9

    def test_scalar_rk4_matches_analytic(self):
        system = scalar_system()
        traj = integrate(system, np.array([0.0]), t_end=1.0, h=1e-3)
        x_star = float(system.fixed_point[0])
        exact = x_star - x_star * math.exp(-0.5 * 1.0)
        assert traj.states[-1, 0] == pytest.approx(exact, abs=1e-10)

    def test_euler_first_order(self):
        system = scalar_system()
        x_star = float(system.fixed_point[0])

        def err(h):
            traj = integrate(system, np.array([0.0]), t_end=1.0, h=h, scheme="euler")
            exact = x_star + (0.0 - x_star) * np.exp(-0.5 * traj.times)
            return float(np.max(np.abs(traj.states[:, 0] - exact)))

        ratio = err(2e-3) / err(1e-3)
        assert abs(ratio - 2.0) <= 0.4

    def test_divergence_guard(self):
        # a deliberately mislabeled system whose map actually expands
        bad = OdeSystem(
            n=1, bellman=lambda x: 3.0 * x + 1.0, d_diag=np.array([1.0]),
            alpha=0.5, regime=INF_NORM_CONTRACTION, bellman_limit=lambda x: 3.0 * x,
        )
        with pytest.raises(NumericError):
            integrate(bad, np.array([1.0]), t_end=40.0, h=1e-2)

    def test_grid_validation(self):
        system = scalar_system()
        with pytest.raises(ValueError):
            integrate(system, np.array([0.0]), t_end=1.0, h=1e-3, stride=7)
        with pytest.raises(ValueError):
            integrate(system, np.array([0.0]), t_end=0.0005, h=1e-3)
        with pytest.raises(ValueError):
            integrate(system, np.array([0.0]), t_end=1.0, h=1e-3, scheme="rk45")

    def test_csv_output(self, tmp_path):
        system = scalar_system()
        traj = integrate(system, np.array([0.0]), t_end=0.01, h=1e-3)
        path = tmp_path / "traj.csv"
        save_trajectory_csv(traj, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,q_0"
        assert len(lines) == 12


class TestLyapunovSeries:
    def test_zero_at_equilibrium(self):
        system = scalar_system()
        traj = integrate(system, system.fixed_point, t_end=0.1, h=1e-3)
        v = lyapunov_series(traj, system.fixed_point, WeightedNorm(2, system.weights))
        assert v[0] == 0.0

    def test_weight_mismatch_rejected(self):
        system = scalar_system(d=0.5)
        traj = integrate(system, np.array([0.0]), t_end=0.1, h=1e-3)
        with pytest.raises(ConfigurationError):
            lyapunov_series(traj, system.fixed_point, WeightedNorm(2, np.array([1.0])))

    def test_decreasing_and_slope_bounded(self, mdp53):
        system = mdp_ode_system(mdp53, MAX_OP)
        q_star = solve_fixed_point(mdp53, MAX_OP, tol=1e-12).q_star
        q0 = np.random.default_rng(0).uniform(-5, 5, system.n)
        traj = integrate(system, q0, t_end=10.0, h=1e-3, stride=10)
        cert = certify_decay(traj, q_star, system, p="auto")
        v = cert.observed_series
        assert np.all(np.diff(v) < 0.0)
        dt = float(traj.times[1] - traj.times[0])
        slopes = np.diff(v) / dt
        assert np.all(slopes <= cert.rate * v[:-1] + 1e-6)


class TestChooseEvenP:
    @pytest.mark.parametrize(
        "n,alpha,expected", [(1, 0.5, 2), (2, 0.5, 2), (4, 0.9, 16)]
    )
    def test_examples(self, n, alpha, expected):
        p = choose_even_p(n, alpha)
        assert p == expected
        assert alpha * n ** (1.0 / p) < 1.0

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            choose_even_p(4, 1.0)
        with pytest.raises(ValueError):
            choose_even_p(0, 0.5)


class TestCertifyDecay:
    def test_trivial_at_equilibrium(self, mdp53):
        system = mdp_ode_system(mdp53, MAX_OP)
        q_star = solve_fixed_point(mdp53, MAX_OP, tol=1e-12).q_star
        traj = integrate(system, q_star, t_end=1.0, h=1e-3, stride=10)
        cert = certify_decay(traj, q_star, system, p="auto")
        assert cert.passed and cert.max_violation == 0.0

    def test_scalar_rate_identity(self):
        for d in (0.25, 1.0, 3.0):
            system = scalar_system(d=d, alpha=0.5)
            traj = integrate(system, np.array([0.0]), t_end=1.0, h=1e-3)
            cert = certify_decay(traj, system.fixed_point, system, p=2)
            assert cert.rate == pytest.approx(-d * 0.5, rel=1e-14)
            assert cert.passed

    def test_random_mdp_auto_p(self):
        m = random_mdp(4, 2, seed=9, gamma=0.9)
        system = mdp_ode_system(m, MAX_OP)
        q_star = solve_fixed_point(m, MAX_OP, tol=1e-12).q_star
        q0 = np.random.default_rng(1).uniform(-5, 5, 8)
        traj = integrate(system, q0, t_end=20.0, h=1e-3, stride=20)
        cert = certify_decay(traj, q_star, system, p="auto", tol_int=1e-6)
        assert cert.p == choose_even_p(8, 0.9)
        assert cert.passed
        assert cert.observed_inf is not None  # eq-type infinity envelope checked too

    def test_inadmissible_p(self):
        m = random_mdp(4, 2, seed=9, gamma=0.9)
        system = mdp_ode_system(m, MAX_OP)
        q_star = solve_fixed_point(m, MAX_OP).q_star
        traj = integrate(system, q_star, t_end=0.01, h=1e-3)
        with pytest.raises(InadmissiblePError) as exc_info:
            certify_decay(traj, q_star, system, p=2)
        assert exc_info.value.min_even_p == choose_even_p(8, 0.9)
        assert "minimum admissible even p" in str(exc_info.value)

    def test_json_schema(self):
        system = scalar_system()
        traj = integrate(system, np.array([0.0]), t_end=0.01, h=1e-3)
        cert = certify_decay(traj, system.fixed_point, system, p=2)
        doc = json.loads(json.dumps(cert.to_dict()))
        for key in ("p", "rate", "w_min", "w_max", "max_violation", "passed", "samples"):
            assert key in doc
        assert set(doc["samples"][0]) == {"t", "observed", "bound"}


class TestFInfinityField:
    def test_origin_equilibrium(self, mdp53):
        system = mdp_ode_system(mdp53, lse(10.0))
        np.testing.assert_array_equal(
            f_infinity_field(system, np.zeros(system.n)), np.zeros(system.n)
        )

    def test_max_kind_exact_residual(self, mdp53):
        dist = build_sampling_distribution(mdp53)
        system = mdp_ode_system(mdp53, MAX_OP, dist)
        q = np.random.default_rng(2).uniform(-5, 5, system.n)
        c = 1e4
        resid = np.max(np.abs(vector_field(system, c * q) / c - f_infinity_field(system, q)))
        dr_inf = np.max(dist.d_matrix_diag * np.abs(mdp53.r_flat)) / c
        assert resid == pytest.approx(dr_inf, rel=1e-12)

    def test_smooth_kind_limit_decreasing(self, mdp53):
        dist = build_sampling_distribution(mdp53)
        d_inf = float(np.max(dist.d_matrix_diag))
        q = np.random.default_rng(2).uniform(-5, 5, mdp53.n_pairs)
        lam = 1.0
        system = mdp_ode_system(mdp53, lse(lam), dist)
        resids = []
        for c in [10.0**k for k in range(1, 7)]:
            resid = float(np.max(np.abs(
                vector_field(system, c * q) / c - f_infinity_field(system, q)
            )))
            bound = d_inf * (0.9 * math.log(3) / (lam * c)
                             + float(np.max(np.abs(mdp53.r_flat))) / c)
            assert resid <= bound * (1 + 1e-9)
            resids.append(resid)
        assert all(a >= b - 1e-15 for a, b in zip(resids, resids[1:]))


class TestSyntheticSystem:
    def test_scalar_case_fields(self):
        system = scalar_system(d=1.0, alpha=0.5, b=1.0)
        assert system.fixed_point[0] == pytest.approx(2.0)
        assert system.regime == "p_norm_contraction"

    def test_sign_flip_isometry(self):
        from qode.operators import weighted_norm

        rng = np.random.default_rng(6)
        a = np.where(rng.random(6) < 0.5, -1.0, 1.0)
        system = synthetic_affine_system(0.7, a, rng.uniform(-3, 3, 6), np.ones(6))
        x, y = rng.uniform(-5, 5, 6), rng.uniform(-5, 5, 6)
        for p in (2, 4, 8):
            norm = WeightedNorm(p, np.ones(6))
            lhs = weighted_norm(system.bellman(x) - system.bellman(y), norm)
            assert lhs == pytest.approx(0.7 * weighted_norm(x - y, norm), rel=1e-13)

    def test_certificates_pass_n6(self):
        rng = np.random.default_rng(12)
        system = synthetic_affine_system(
            0.7, rng.uniform(-1, 1, 6), rng.uniform(-5, 5, 6), np.full(6, 0.8)
        )
        q0 = rng.uniform(-5, 5, 6)
        traj = integrate(system, q0, t_end=10.0, h=1e-3, stride=10)
        for p in (2, 4, 8):
            assert certify_decay(traj, system.fixed_point, system, p=p).passed

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            synthetic_affine_system(1.0, np.ones(2), np.zeros(2), np.ones(2))
        with pytest.raises(ValueError):
            synthetic_affine_system(0.5, np.array([1.5, 0.0]), np.zeros(2), np.ones(2))
