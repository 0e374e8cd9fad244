import math
from dataclasses import replace

import numpy as np
import pytest

import dlss
from dlss import FD2, FD4, SPECTRAL, Field, FieldKind, LinearSolver, SolverConfig
from dlss.solver import TimeSeriesRecord, Trajectory, jacobian, residual

TWO_PI = 2.0 * math.pi


def cosine_density(grid, amplitude=0.1):
    return Field(grid, 1.0 + amplitude * np.cos(grid.nodes), FieldKind.DENSITY)


def log_field(grid, u_values):
    return Field(grid, np.log(u_values), FieldKind.LOG_DENSITY)


class TestSolverConfig:
    def test_defaults(self):
        config = SolverConfig(tau=1e-3)
        assert config.epsilon == 0.0
        assert config.newton_tol == 1e-8
        assert config.backend is SPECTRAL
        assert config.linear_solver is LinearSolver.DENSE

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tau": 0.0},
            {"tau": -1e-3},
            {"tau": math.nan},
            {"tau": 1e-3, "epsilon": -1e-6},
            {"tau": 1e-3, "newton_tol": 0.0},
            {"tau": 1e-3, "max_newton": 0},
            {"tau": 1e-3, "damping": 0.0},
            {"tau": 1e-3, "damping": 1.5},
        ],
    )
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_rejects_banded_with_spectral_backend(self):
        # spectral differentiation gives a dense Jacobian; no band to exploit
        with pytest.raises(ValueError):
            SolverConfig(tau=1e-3, linear_solver=LinearSolver.BANDED)

    def test_banded_with_fd_backend_allowed(self):
        config = SolverConfig(tau=1e-3, backend=FD2, linear_solver=LinearSolver.BANDED)
        assert config.linear_solver is LinearSolver.BANDED


class TestResidual:
    def test_constant_state_is_stationary_without_regularization(self, grid64):
        y = log_field(grid64, np.full(64, 2.0))
        r = residual(y, y, SolverConfig(tau=1e-2))
        assert np.abs(r.values).max() < 1e-13

    def test_regularization_anchors_log_density(self, grid64):
        # with epsilon > 0 the constant state picks up an epsilon * y term
        y = log_field(grid64, np.full(64, 2.0))
        r = residual(y, y, SolverConfig(tau=1e-2, epsilon=1e-3))
        assert np.allclose(r.values, 1e-3 * math.log(2.0), atol=1e-15)

    def test_time_derivative_term(self, grid64):
        y_prev = log_field(grid64, np.full(64, 1.0))
        y = log_field(grid64, np.full(64, 1.0 + 1e-6))
        tau = 1e-2
        r = residual(y, y_prev, SolverConfig(tau=tau))
        expected = (math.exp(math.log(1.0 + 1e-6)) - 1.0) / tau
        assert np.allclose(r.values, expected, rtol=1e-9)


class TestJacobian:
    @pytest.mark.parametrize("backend", [SPECTRAL, FD2, FD4])
    def test_matches_directional_difference(self, grid64, backend):
        rng = np.random.default_rng(3)
        u = np.exp(0.5 * np.sin(grid64.nodes) + 0.2 * np.cos(2 * grid64.nodes))
        y = log_field(grid64, u)
        y_prev = log_field(grid64, np.roll(u, 1))
        config = SolverConfig(tau=1e-3, epsilon=1e-5, backend=backend)
        jac = jacobian(y, config)
        direction = rng.standard_normal(64)
        direction /= np.abs(direction).max()
        h = 1e-6
        r_plus = residual(y.with_values(y.values + h * direction), y_prev, config)
        r_minus = residual(y.with_values(y.values - h * direction), y_prev, config)
        fd = (r_plus.values - r_minus.values) / (2.0 * h)
        exact = jac @ direction
        scale = np.abs(exact).max()
        assert np.abs(fd - exact).max() / scale < 1e-4


class TestNewtonStep:
    def test_converged_input_returned_unchanged(self, grid64):
        y = log_field(grid64, np.full(64, 1.5))
        y_new, rnorm = dlss.newton_step(y, y, SolverConfig(tau=1e-2))
        assert rnorm < 1e-13
        assert np.array_equal(y_new.values, y.values)

    def test_quadratic_contraction(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-30, max_newton=50)
        y_prev = log_field(grid64, 1.0 + 0.1 * np.cos(grid64.nodes))
        y = y_prev
        norms = []
        for _ in range(4):
            y, rnorm = dlss.newton_step(y, y_prev, config)
            norms.append(rnorm)
        # successive residuals fall superlinearly until the roundoff floor
        assert norms[1] < 0.3 * norms[0]
        assert norms[2] < 0.3 * norms[1] or norms[2] < 1e-10

    def test_rejects_mismatched_grids(self, grid64, grid128):
        ya = log_field(grid64, np.ones(64))
        yb = log_field(grid128, np.ones(128))
        with pytest.raises(ValueError):
            dlss.newton_step(ya, yb, SolverConfig(tau=1e-3))


class TestStep:
    def test_single_step_converges(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        y_prev = log_field(grid64, 1.0 + 0.1 * np.cos(grid64.nodes))
        y, iters = dlss.step(y_prev, config)
        r = residual(y, y_prev, config)
        assert np.abs(r.values).max() <= config.newton_tol
        assert 1 <= iters <= config.max_newton

    def test_step_preserves_mass_to_newton_tolerance(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        y_prev = log_field(grid64, 1.0 + 0.2 * np.cos(grid64.nodes))
        y, _ = dlss.step(y_prev, config)
        m_prev = dlss.integrate(Field(grid64, np.exp(y_prev.values)))
        m_new = dlss.integrate(Field(grid64, np.exp(y.values)))
        # mass defect per step is bounded by tau * L * ||F||_inf
        assert abs(m_new - m_prev) <= 2.0 * config.tau * grid64.length * config.newton_tol

    def test_exhausted_iterations_raise(self, grid64):
        config = SolverConfig(tau=0.05, newton_tol=1e-9, max_newton=1)
        y_prev = log_field(grid64, np.exp(1.5 * np.cos(grid64.nodes)))
        with pytest.raises(dlss.NoConvergence) as excinfo:
            dlss.step(y_prev, config)
        assert excinfo.value.iterations == 1


class TestSolve:
    def test_records_cover_requested_horizon(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj = dlss.solve(cosine_density(grid64), 0.01, config)
        assert len(traj.records) == 11
        assert traj.records[0].t == 0.0
        assert traj.records[-1].t == pytest.approx(0.01, rel=1e-12)

    def test_record_every_thins_output(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj = dlss.solve(cosine_density(grid64), 0.01, config, record_every=5)
        assert [round(r.t, 6) for r in traj.records] == [0.0, 0.005, 0.01]

    def test_final_record_kept_when_off_lattice_of_record_every(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj = dlss.solve(cosine_density(grid64), 0.01, config, record_every=4)
        assert traj.records[-1].t == pytest.approx(0.01, rel=1e-12)

    def test_mass_conservation_over_many_steps(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj = dlss.solve(cosine_density(grid64), 1.0, config, record_every=100)
        m0 = traj.records[0].mass
        drift = max(abs(r.mass - m0) / m0 for r in traj.records)
        assert drift < 1e-9

    @pytest.mark.parametrize("backend", [SPECTRAL, FD2])
    def test_entropy_and_lyapunov_decay(self, grid64, backend):
        config = SolverConfig(tau=1e-3, newton_tol=1e-9, backend=backend)
        traj = dlss.solve(cosine_density(grid64, 0.3), 0.5, config, record_every=10)
        assert dlss.lyapunov_check(traj)
        assert traj.records[-1].entropy_rel < traj.records[0].entropy_rel

    def test_entropy_decay_beats_spectral_gap_bound(self, grid64):
        # E(t) <= E(0) exp(-M t) with M = 32 pi^4 / L^4 = 2 at L = 2 pi
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj = dlss.solve(cosine_density(grid64), 1.0, config, record_every=1000)
        e0 = traj.records[0].entropy_rel
        eT = traj.records[-1].entropy_rel
        assert eT <= e0 * math.exp(-2.0 * 1.0) * 1.05

    def test_regularized_run_close_to_unregularized(self, grid64):
        base = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj0 = dlss.solve(cosine_density(grid64), 0.1, base)
        traj1 = dlss.solve(cosine_density(grid64), 0.1, replace(base, epsilon=1e-8))
        diff = np.abs(
            np.exp(traj0.final_y.values) - np.exp(traj1.final_y.values)
        ).max()
        assert diff < 1e-5

    def test_mass_renormalization_compensates_regularization_leak(self, grid64):
        # the epsilon terms inject mass at rate -eps * int y; the flag
        # shifts log u after each step to restore the initial mass
        u0 = cosine_density(grid64, 0.3)
        leaky = SolverConfig(tau=1e-3, epsilon=1e-6, newton_tol=1e-10)
        pinned = replace(leaky, renormalize_mass=True)
        drift = lambda traj: max(
            abs(r.mass - traj.records[0].mass) / traj.records[0].mass
            for r in traj.records
        )
        assert drift(dlss.solve(u0, 0.2, leaky, record_every=20)) > 1e-10
        assert drift(dlss.solve(u0, 0.2, pinned, record_every=20)) < 1e-13

    def test_tau_halving_rescues_oversized_step(self, grid64):
        # tau = 0.05 with max_newton = 5 cannot converge directly; the
        # stepper must subdivide.  Total iteration count proves it did.
        u0 = Field(grid64, np.exp(1.5 * np.cos(grid64.nodes)), FieldKind.DENSITY)
        config = SolverConfig(tau=0.05, newton_tol=1e-9, max_newton=5)
        traj = dlss.solve(u0, 0.05, config)
        assert traj.records[-1].t == pytest.approx(0.05)
        assert traj.records[-1].newton_iters > config.max_newton
        assert dlss.lyapunov_check(traj)

    def test_tau_halving_gives_up_eventually(self, grid64):
        u0 = Field(grid64, np.exp(1.5 * np.cos(grid64.nodes)), FieldKind.DENSITY)
        config = SolverConfig(tau=0.05, newton_tol=1e-9, max_newton=1)
        with pytest.raises(dlss.NoConvergence) as excinfo:
            dlss.solve(u0, 0.05, config)
        assert excinfo.value.step_index == 1

    def test_off_lattice_horizon_rejected(self, grid64):
        config = SolverConfig(tau=1e-3)
        with pytest.raises(ValueError):
            dlss.solve(cosine_density(grid64), 0.0105, config)

    def test_nonpositive_horizon_rejected(self, grid64):
        config = SolverConfig(tau=1e-3)
        with pytest.raises(ValueError):
            dlss.solve(cosine_density(grid64), 0.0, config)

    def test_bad_record_every_rejected(self, grid64):
        config = SolverConfig(tau=1e-3)
        with pytest.raises(ValueError):
            dlss.solve(cosine_density(grid64), 0.01, config, record_every=0)

    def test_tiny_initial_values_clamped(self, grid64):
        vals = np.ones(64)
        vals[5] = 1e-20
        u0 = Field(grid64, vals, FieldKind.DENSITY)
        config = SolverConfig(tau=1e-5, newton_tol=1e-6)
        traj = dlss.solve(u0, 1e-4, config)
        assert traj.clamped_nodes >= 1

    def test_deterministic(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        a = dlss.solve(cosine_density(grid64), 0.05, config)
        b = dlss.solve(cosine_density(grid64), 0.05, config)
        assert a.records == b.records
        assert np.array_equal(a.final_y.values, b.final_y.values)

    def test_snapshots_on_request(self, grid64):
        config = SolverConfig(tau=1e-3, newton_tol=1e-10)
        traj = dlss.solve(cosine_density(grid64), 0.01, config, snapshot_every=5)
        assert [round(t, 6) for t, _ in traj.snapshots] == [0.0, 0.005, 0.01]
        assert all(f.kind is FieldKind.DENSITY for _, f in traj.snapshots)

    def test_banded_linear_solver_agrees_with_dense(self, grid128):
        dense = SolverConfig(tau=1e-3, newton_tol=1e-9, backend=FD4)
        banded = replace(dense, linear_solver=LinearSolver.BANDED)
        ta = dlss.solve(cosine_density(grid128, 0.2), 0.05, dense)
        tb = dlss.solve(cosine_density(grid128, 0.2), 0.05, banded)
        diff = np.abs(ta.final_y.values - tb.final_y.values).max()
        assert diff < 1e-7


class TestLyapunovCheck:
    def _record_at(self, t, entropy, lyap):
        return TimeSeriesRecord(
            t=t, mass=TWO_PI, entropy_rel=entropy, lyap=lyap,
            production=0.0, min_u=1.0, newton_iters=1,
        )

    def _trajectory(self, grid, records):
        config = SolverConfig(tau=1.0, newton_tol=1e-12)
        final = Field(grid, np.zeros(grid.n_points), FieldKind.LOG_DENSITY)
        return Trajectory(grid=grid, config=config, records=tuple(records), final_y=final)

    def test_accepts_decaying_records(self, grid64):
        records = [self._record_at(float(k), 1.0 / (k + 1), 10.0 - k) for k in range(4)]
        assert dlss.lyapunov_check(self._trajectory(grid64, records))

    def test_rejects_entropy_increase(self, grid64):
        records = [self._record_at(0.0, 1.0, 10.0), self._record_at(1.0, 1.1, 9.0)]
        assert not dlss.lyapunov_check(self._trajectory(grid64, records))

    def test_rejects_time_reversed_records(self, grid64):
        records = [self._record_at(1.0, 1.0, 10.0), self._record_at(0.0, 0.5, 9.0)]
        assert not dlss.lyapunov_check(self._trajectory(grid64, records))

    def test_tolerates_increase_within_newton_slack(self, grid64):
        records = [
            self._record_at(0.0, 1.0, 10.0),
            self._record_at(1.0, 1.0 + 5e-12, 10.0 - 1e-3),
        ]
        assert dlss.lyapunov_check(self._trajectory(grid64, records))
