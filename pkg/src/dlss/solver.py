"""Implicit Euler time stepping for u_t + (u (log u)_xx)_xx = 0, periodic.

The unknown is the log-density y = log u, so positivity of u = e^y is
automatic.  One backward Euler step solves

    F(y) = (e^y - e^{y_prev}) / tau + D2 (e^y D2 y) - eps D2 y + eps y = 0

by damped Newton with the exact Jacobian

    J(y) = diag(e^y)/tau + D2 (diag(e^y) D2 + diag(e^y D2 y)) - eps D2 + eps I.

The eps terms are the optional lower-order regularisation; eps = 0 is the
plain equation.  Discrete mass h * sum(e^y) is conserved by the eps = 0
scheme up to the Newton residual because D2 annihilates constants and is
symmetric, and the same two facts make h * sum(e^y (log-mean shifted))
entropies decay step by step: convexity of s -> s log s plus summation by
parts transfer the continuum Lyapunov argument verbatim to the grid.

``newton_step`` always refactorises (textbook damped Newton; its
quadratic contraction is part of the contract).  ``solve`` reuses one LU
across iterations and steps, refreshing it whenever contraction degrades;
the accepted iterate still has to pass the same residual tolerance, so
recycling changes the iteration count, never the solution quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import NoConvergence, NonPositiveDensity, SingularJacobian
from .functionals import report
from .grid import (
    POSITIVITY_FLOOR,
    DiffBackend,
    Field,
    FieldKind,
    PeriodicGrid,
    SPECTRAL,
    derivative,
    diff_matrix,
    integrate,
)
from .linalg import CyclicBandedLU, DenseLU

__all__ = [
    "LinearSolver",
    "SolverConfig",
    "TimeSeriesRecord",
    "Trajectory",
    "residual",
    "jacobian",
    "newton_step",
    "step",
    "solve",
    "lyapunov_check",
]

_MAX_BACKTRACKS = 40
_MAX_TAU_HALVINGS = 5
# Chord iterations whose contraction factor exceeds this trigger a fresh LU.
_REFRESH_CONTRACTION = 0.25

Array = np.ndarray


class LinearSolver(Enum):
    DENSE = "dense"
    BANDED = "banded"


@dataclass(frozen=True)
class SolverConfig:
    """Time step, regularisation and Newton parameters for one run.

    ``newton_tol`` bounds the sup norm of the residual F.  Evaluating F in
    double precision has a noise floor of roughly eps * (pi N / L)^4 *
    |u''| because high-mode rounding debris passes through two second
    derivatives: about 1e-11 at N = 64 and 3e-9 at N = 256 on the unit
    circle scale.  Tolerances below that floor cannot converge; the
    default 1e-8 is safe up to N = 256, larger grids need a looser value.
    """

    tau: float
    epsilon: float = 0.0
    newton_tol: float = 1e-8
    max_newton: int = 25
    damping: float = 0.5
    backend: DiffBackend = SPECTRAL
    linear_solver: LinearSolver = LinearSolver.DENSE
    renormalize_mass: bool = False

    def __post_init__(self):
        if not self.tau > 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.newton_tol > 0.0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.max_newton < 1:
            raise ValueError(f"max_newton must be at least 1, got {self.max_newton}")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if self.linear_solver is LinearSolver.BANDED and self.backend is SPECTRAL:
            raise ValueError(
                "banded linear solver needs a finite-difference backend; "
                "the spectral second derivative is dense"
            )


@dataclass(frozen=True)
class TimeSeriesRecord:
    """Monitored quantities at one accepted time level."""

    t: float
    mass: float
    entropy_rel: float
    lyap: float
    production: float
    min_u: float
    newton_iters: int


@dataclass(frozen=True)
class Trajectory:
    """Result of a full run.

    ``records`` are strictly increasing in t (the time stepper only ever
    appends accepted levels).  ``snapshots`` is empty unless requested.
    ``clamped_nodes`` counts initial values lifted to the positivity
    clamp before taking logs.
    """

    grid: PeriodicGrid
    config: SolverConfig
    records: tuple[TimeSeriesRecord, ...]
    final_y: Field
    snapshots: tuple[tuple[float, Field], ...] = ()
    clamped_nodes: int = 0


def _check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def residual(y: Field, y_prev: Field, config: SolverConfig) -> Field:
    """Backward Euler residual F(y) given the previous log-density."""
    _check_same_grid(y, y_prev)
    r = _residual_values(y.values, np.exp(y_prev.values), y.grid, config)
    return Field(y.grid, r, FieldKind.GENERIC)


def _residual_values(y: Array, eu_prev: Array, grid: PeriodicGrid, config: SolverConfig) -> Array:
    ey = np.exp(y)
    yf = Field(grid, y, FieldKind.LOG_DENSITY)
    d2y = derivative(yf, 2, config.backend).values
    flux = derivative(Field(grid, ey * d2y), 2, config.backend).values
    r = (ey - eu_prev) / config.tau + flux
    if config.epsilon != 0.0:
        r += config.epsilon * (y - d2y)
    return r


def jacobian(y: Field, config: SolverConfig) -> np.ndarray:
    """Exact dense Jacobian of the residual at y."""
    d2 = diff_matrix(y.grid, 2, config.backend)
    ey = np.exp(y.values)
    d2y = d2 @ y.values
    # D2 diag(b) is column scaling; avoids a second matrix product.
    jac = d2 @ (ey[:, None] * d2)
    jac += d2 * (ey * d2y)[None, :]
    if config.epsilon != 0.0:
        jac = jac - config.epsilon * d2
        jac[np.diag_indices_from(jac)] += config.epsilon
    jac[np.diag_indices_from(jac)] += ey / config.tau
    return jac


def _factorise(jac: np.ndarray, config: SolverConfig):
    if config.linear_solver is LinearSolver.BANDED:
        halfwidth = config.backend.order  # two stacked D2 stencils of halfwidth order/2
        if jac.shape[0] > 4 * halfwidth:
            return CyclicBandedLU(jac, halfwidth)
        # tiny grids: the corner split degenerates, dense is exact and cheap
    return DenseLU(jac)


class _NewtonWorkspace:
    """Shared LU and bookkeeping for chord Newton across steps."""

    __slots__ = ("factor", "stale")

    def __init__(self):
        self.factor = None
        self.stale = False

    def refresh(self, y: Array, grid: PeriodicGrid, config: SolverConfig) -> None:
        self.factor = _factorise(jacobian(Field(grid, y, FieldKind.LOG_DENSITY), config), config)
        self.stale = False

    def invalidate(self) -> None:
        self.factor = None


def _newton_loop(
    y0: Array,
    eu_prev: Array,
    grid: PeriodicGrid,
    config: SolverConfig,
    workspace: _NewtonWorkspace,
    reuse: bool,
) -> tuple[Array, int, float]:
    """Damped (possibly chord) Newton on one step; returns (y, iters, |F|_inf).

    With ``reuse`` off the Jacobian is refactorised every iteration.  With
    it on, the workspace factor is kept until either the line search fails
    or the contraction factor climbs above _REFRESH_CONTRACTION.
    """
    y = y0.copy()
    r = _residual_values(y, eu_prev, grid, config)
    rnorm = float(np.abs(r).max())
    iters = 0
    while rnorm > config.newton_tol:
        if iters >= config.max_newton:
            raise NoConvergence(
                f"Newton did not reach {config.newton_tol:.1e} in {config.max_newton} "
                f"iterations (residual {rnorm:.3e})",
                iterations=iters,
                residual=rnorm,
            )
        if not reuse or workspace.factor is None:
            workspace.refresh(y, grid, config)
        delta = workspace.factor.solve(-r)

        lam = 1.0
        for _ in range(_MAX_BACKTRACKS + 1):
            y_trial = y + lam * delta
            r_trial = _residual_values(y_trial, eu_prev, grid, config)
            rnorm_trial = float(np.abs(r_trial).max())
            if rnorm_trial < rnorm or rnorm_trial <= config.newton_tol:
                break
            lam *= config.damping
        else:
            if reuse and workspace.stale:
                # the stale factor pointed uphill; retry iteration with a fresh one
                workspace.invalidate()
                continue
            raise NoConvergence(
                f"line search failed to reduce the residual after "
                f"{_MAX_BACKTRACKS} reductions (residual {rnorm:.3e})",
                iterations=iters,
                residual=rnorm,
            )

        contraction = rnorm_trial / rnorm if rnorm > 0.0 else 0.0
        y, r, rnorm = y_trial, r_trial, rnorm_trial
        iters += 1
        if reuse:
            if workspace.stale and contraction > _REFRESH_CONTRACTION:
                workspace.invalidate()
            else:
                workspace.stale = True
        else:
            workspace.invalidate()
    return y, iters, rnorm


def newton_step(y: Field, y_prev: Field, config: SolverConfig) -> tuple[Field, float]:
    """One damped Newton iteration from ``y`` toward F = 0; returns the new
    iterate and its residual sup norm.

    The direction solves J delta = -F exactly; backtracking shrinks the
    step by ``damping`` until the residual norm decreases.  Already
    converged input is returned unchanged.
    """
    _check_same_grid(y, y_prev)
    grid = y.grid
    eu_prev = np.exp(y_prev.values)
    r = _residual_values(y.values, eu_prev, grid, config)
    rnorm = float(np.abs(r).max())
    if rnorm <= config.newton_tol:
        return Field(grid, y.values, FieldKind.LOG_DENSITY), rnorm
    factor = _factorise(jacobian(y, config), config)
    delta = factor.solve(-r)
    lam = 1.0
    for _ in range(_MAX_BACKTRACKS + 1):
        y_trial = y.values + lam * delta
        r_trial = _residual_values(y_trial, eu_prev, grid, config)
        rnorm_trial = float(np.abs(r_trial).max())
        if rnorm_trial < rnorm or rnorm_trial <= config.newton_tol:
            return Field(grid, y_trial, FieldKind.LOG_DENSITY), rnorm_trial
        lam *= config.damping
    raise NoConvergence(
        f"line search failed to reduce the residual after {_MAX_BACKTRACKS} "
        f"reductions (residual {rnorm:.3e})",
        iterations=1,
        residual=rnorm,
    )


def step(y_prev: Field, config: SolverConfig) -> tuple[Field, int]:
    """Advance one time level; returns the converged iterate and the number
    of Newton iterations it took."""
    workspace = _NewtonWorkspace()
    y, iters, _ = _newton_loop(
        y_prev.values, np.exp(y_prev.values), y_prev.grid, config, workspace, reuse=False
    )
    return Field(y_prev.grid, y, FieldKind.LOG_DENSITY), iters


def _advance(
    y: Array,
    grid: PeriodicGrid,
    config: SolverConfig,
    workspace: _NewtonWorkspace,
    depth: int,
    step_index: int,
) -> tuple[Array, int]:
    """One macro step of size config.tau, recursively halving on failure."""
    entered_with_factor = workspace.factor is not None
    try:
        try:
            y_new, iters, _ = _newton_loop(y, np.exp(y), grid, config, workspace, reuse=True)
            return y_new, iters
        except (NoConvergence, SingularJacobian):
            if not entered_with_factor:
                raise
            # the factor recycled from the previous step may just be too
            # stale; one clean retry before touching tau
            workspace.invalidate()
            y_new, iters, _ = _newton_loop(y, np.exp(y), grid, config, workspace, reuse=True)
            return y_new, iters
    except (NoConvergence, SingularJacobian) as exc:
        if depth >= _MAX_TAU_HALVINGS:
            raise NoConvergence(
                f"step {step_index}: no convergence even after {depth} time step "
                f"halvings (tau = {config.tau:.3e})",
                iterations=getattr(exc, "iterations", None),
                residual=getattr(exc, "residual", None),
                step_index=step_index,
            ) from exc
        half = replace(config, tau=0.5 * config.tau)
        sub_workspace = _NewtonWorkspace()  # factor depends on tau
        total = 0
        for _ in range(2):
            y, iters = _advance(y, grid, half, sub_workspace, depth + 1, step_index)
            total += iters
        workspace.invalidate()
        return y, total


def solve(
    u0: Field,
    t_final: float,
    config: SolverConfig,
    record_every: int = 1,
    snapshot_every: int = 0,
) -> Trajectory:
    """Run the scheme from density ``u0`` to time ``t_final``.

    The number of steps is round(t_final / tau); t_final must sit on the
    step lattice to within one part in 1e-8.  Initial values at or below
    the clamp 1e-12 * max(u0) are lifted to it before taking logs; the
    count of lifted nodes is reported on the trajectory.  Individual steps
    that fail to converge are retried with halved tau (recursively, at
    most five halvings) before giving up.
    """
    if not t_final > 0.0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    if record_every < 1:
        raise ValueError(f"record_every must be at least 1, got {record_every}")
    n_steps = int(round(t_final / config.tau))
    if n_steps < 1 or abs(n_steps * config.tau - t_final) > 1e-8 * max(1.0, t_final):
        raise ValueError(
            f"t_final = {t_final} is not an integer multiple of tau = {config.tau}"
        )

    grid = u0.grid
    u0_vals = u0.values
    if u0_vals.max() <= POSITIVITY_FLOOR:
        raise NonPositiveDensity("initial density is nonpositive everywhere")
    clamp = 1e-12 * u0_vals.max()
    clamped_nodes = int(np.count_nonzero(u0_vals < clamp))
    y = np.log(np.maximum(u0_vals, clamp))

    mass0 = float(grid.spacing * np.exp(y).sum())

    def record_at(t: float, iters: int) -> TimeSeriesRecord:
        u = Field(grid, np.exp(y), FieldKind.DENSITY)
        rep = report(u, config.backend)
        return TimeSeriesRecord(
            t=t,
            mass=rep.mass,
            entropy_rel=rep.entropy_rel,
            lyap=rep.lyap_u_minus_logu,
            production=rep.production,
            min_u=float(u.values.min()),
            newton_iters=iters,
        )

    records = [record_at(0.0, 0)]
    snapshots: list[tuple[float, Field]] = []
    if snapshot_every > 0:
        snapshots.append((0.0, Field(grid, np.exp(y), FieldKind.DENSITY)))

    workspace = _NewtonWorkspace()
    for k in range(1, n_steps + 1):
        y, iters = _advance(y, grid, config, workspace, depth=0, step_index=k)
        if config.renormalize_mass and config.epsilon != 0.0:
            # eps terms break conservation; shift log u to restore the mass
            mass_k = float(grid.spacing * np.exp(y).sum())
            y += math.log(mass0 / mass_k)
            workspace.invalidate()
        t = k * config.tau
        if k % record_every == 0 or k == n_steps:
            records.append(record_at(t, iters))
        if snapshot_every > 0 and (k % snapshot_every == 0 or k == n_steps):
            snapshots.append((t, Field(grid, np.exp(y), FieldKind.DENSITY)))

    return Trajectory(
        grid=grid,
        config=config,
        records=tuple(records),
        final_y=Field(grid, y, FieldKind.LOG_DENSITY),
        snapshots=tuple(snapshots),
        clamped_nodes=clamped_nodes,
    )


def lyapunov_check(trajectory: Trajectory) -> bool:
    """True when the records are in time order and both Lyapunov
    functionals decay, allowing 10 * newton_tol slack per time step."""
    records = trajectory.records
    slack_per_step = 10.0 * trajectory.config.newton_tol
    tau = trajectory.config.tau
    for prev, cur in zip(records, records[1:]):
        if cur.t <= prev.t:
            return False
        n_sub = max(1, int(round((cur.t - prev.t) / tau)))
        slack = slack_per_step * n_sub
        if cur.entropy_rel > prev.entropy_rel + slack:
            return False
        if cur.lyap > prev.lyap + slack:
            return False
    return True
