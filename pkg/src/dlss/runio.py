"""Run configuration files, time-series CSV output, decay-rate fitting
and the randomised identity test suite.

Config files are flat ``key = value`` lines.  ``#`` starts a comment,
blank lines and ``[section]`` headers are cosmetic, every key must be
known and appear at most once.  Structural problems raise ``ParseError``
with the offending line number; admissibility problems raise
``ValidationError`` with the offending field.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import (
    InsufficientData,
    NonPositiveEntropy,
    ParseError,
    ValidationError,
)
from .grid import DiffBackend, Field, FieldKind, PeriodicGrid, make_grid
from .rng import SplitMix64, random_log_density
from .solver import LinearSolver, SolverConfig, TimeSeriesRecord, Trajectory
from . import functionals
from .grid import SPECTRAL, derivative, integrate

__all__ = [
    "RunConfig",
    "DecayReport",
    "parse_config",
    "emit_timeseries",
    "read_timeseries",
    "fit_decay",
    "default_fit_window",
    "identity_suite",
    "TIMESERIES_HEADER",
]

TIMESERIES_HEADER = "t,mass,entropy_rel,lyap,production,min_u,newton_iters"

_COMMANDS = ("solve", "certify", "heatflow", "fit", "identity")
_BACKENDS = ("spectral", "fd2", "fd4")
_LINEAR_SOLVERS = ("dense", "banded")
_U0_KINDS = ("constant", "cosine", "file")


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of one run-configuration file."""

    command: str
    length: float
    n_points: int
    t_final: float | None = None
    tau: float | None = None
    epsilon: float = 0.0
    newton_tol: float = 1e-10
    max_newton: int = 25
    damping: float = 0.5
    backend_name: str = "spectral"
    linear_solver_name: str = "dense"
    renormalize_mass: bool = False
    u0_kind: str = "cosine"
    u0_value: float = 1.0
    u0_base: float = 1.0
    u0_amplitude: float = 0.1
    u0_mode: int = 1
    u0_path: str | None = None
    output: str | None = None
    record_every: int = 1
    snapshot_every: int = 0
    seed: int = 0

    def make_grid(self) -> PeriodicGrid:
        return make_grid(self.length, self.n_points)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            tau=self.tau,
            epsilon=self.epsilon,
            newton_tol=self.newton_tol,
            max_newton=self.max_newton,
            damping=self.damping,
            backend=DiffBackend.from_name(self.backend_name),
            linear_solver=LinearSolver(self.linear_solver_name),
            renormalize_mass=self.renormalize_mass,
        )

    def initial_density(self, grid: PeriodicGrid) -> Field:
        if self.u0_kind == "constant":
            vals = np.full(grid.n_points, self.u0_value)
        elif self.u0_kind == "cosine":
            theta = (2.0 * math.pi * self.u0_mode / grid.length) * grid.nodes
            vals = self.u0_base + self.u0_amplitude * np.cos(theta)
        else:
            try:
                vals = np.loadtxt(self.u0_path, dtype=float).ravel()
            except OSError as exc:
                raise ValidationError("u0_path", f"cannot read {self.u0_path!r}: {exc}")
            except ValueError as exc:
                raise ValidationError("u0_path", f"malformed data: {exc}")
            if vals.size != grid.n_points:
                raise ValidationError(
                    "u0_path",
                    f"expected {grid.n_points} values, found {vals.size}",
                )
            if not np.all(np.isfinite(vals)) or vals.min() <= 0.0:
                raise ValidationError("u0_path", "density values must be finite and positive")
        return Field(grid, vals, FieldKind.DENSITY)


# key -> (RunConfig attribute, converter name)
_SCHEMA = {
    "command": ("command", "str"),
    "L": ("length", "float"),
    "N": ("n_points", "int"),
    "T": ("t_final", "float"),
    "tau": ("tau", "float"),
    "epsilon": ("epsilon", "float"),
    "newton_tol": ("newton_tol", "float"),
    "max_newton": ("max_newton", "int"),
    "damping": ("damping", "float"),
    "backend": ("backend_name", "str"),
    "linear_solver": ("linear_solver_name", "str"),
    "renormalize_mass": ("renormalize_mass", "bool"),
    "u0": ("u0_kind", "str"),
    "u0_value": ("u0_value", "float"),
    "u0_base": ("u0_base", "float"),
    "u0_amplitude": ("u0_amplitude", "float"),
    "u0_mode": ("u0_mode", "int"),
    "u0_path": ("u0_path", "str"),
    "output": ("output", "str"),
    "record_every": ("record_every", "int"),
    "snapshot_every": ("snapshot_every", "int"),
    "seed": ("seed", "int"),
}


def _convert(kind: str, raw: str, key: str, line_no: int):
    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ParseError(line_no, f"value for {key!r} must be true or false, got {raw!r}")
    try:
        return float(raw) if kind == "float" else int(raw)
    except ValueError:
        raise ParseError(line_no, f"invalid {kind} for {key!r}: {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration file body."""
    seen: dict[str, object] = {}
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(line_no, f"malformed section header {line!r}")
            continue
        if "=" not in line:
            raise ParseError(line_no, f"expected 'key = value', got {line!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            raise ParseError(line_no, f"unknown key {key!r}")
        if key in seen:
            raise ParseError(line_no, f"duplicate key {key!r}")
        attr, kind = _SCHEMA[key]
        seen[attr] = _convert(kind, raw_value, key, line_no)

    for key in ("command", "L", "N"):
        attr, _ = _SCHEMA[key]
        if attr not in seen:
            raise ValidationError(key, "required")
    cfg = RunConfig(**seen)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.command not in _COMMANDS:
        raise ValidationError("command", f"must be one of {_COMMANDS}, got {cfg.command!r}")
    if not cfg.length > 0.0 or not math.isfinite(cfg.length):
        raise ValidationError("L", f"must be positive and finite, got {cfg.length}")
    if cfg.n_points < 8 or cfg.n_points % 2 != 0:
        raise ValidationError("N", f"must be even and at least 8, got {cfg.n_points}")
    if cfg.backend_name not in _BACKENDS:
        raise ValidationError("backend", f"must be one of {_BACKENDS}, got {cfg.backend_name!r}")
    if cfg.linear_solver_name not in _LINEAR_SOLVERS:
        raise ValidationError(
            "linear_solver", f"must be one of {_LINEAR_SOLVERS}, got {cfg.linear_solver_name!r}"
        )
    if cfg.linear_solver_name == "banded" and cfg.backend_name == "spectral":
        raise ValidationError(
            "linear_solver", "banded solver requires a finite-difference backend"
        )
    if cfg.epsilon < 0.0:
        raise ValidationError("epsilon", f"must be nonnegative, got {cfg.epsilon}")
    if not cfg.newton_tol > 0.0:
        raise ValidationError("newton_tol", f"must be positive, got {cfg.newton_tol}")
    if cfg.max_newton < 1:
        raise ValidationError("max_newton", f"must be at least 1, got {cfg.max_newton}")
    if not 0.0 < cfg.damping <= 1.0:
        raise ValidationError("damping", f"must lie in (0, 1], got {cfg.damping}")
    if cfg.record_every < 1:
        raise ValidationError("record_every", f"must be at least 1, got {cfg.record_every}")
    if cfg.snapshot_every < 0:
        raise ValidationError("snapshot_every", f"must be nonnegative, got {cfg.snapshot_every}")
    if cfg.seed < 0:
        raise ValidationError("seed", f"must be nonnegative, got {cfg.seed}")

    if cfg.command == "solve":
        if cfg.t_final is None:
            raise ValidationError("T", "required")
        if cfg.tau is None:
            raise ValidationError("tau", "required")
        if not cfg.t_final > 0.0:
            raise ValidationError("T", f"must be positive, got {cfg.t_final}")
        if not cfg.tau > 0.0:
            raise ValidationError("tau", f"must be positive, got {cfg.tau}")
        if cfg.u0_kind not in _U0_KINDS:
            raise ValidationError("u0", f"must be one of {_U0_KINDS}, got {cfg.u0_kind!r}")
        if cfg.u0_kind == "constant" and not cfg.u0_value > 0.0:
            raise ValidationError("u0_value", f"must be positive, got {cfg.u0_value}")
        if cfg.u0_kind == "cosine":
            if not cfg.u0_base > 0.0:
                raise ValidationError("u0_base", f"must be positive, got {cfg.u0_base}")
            if abs(cfg.u0_amplitude) >= cfg.u0_base:
                raise ValidationError(
                    "u0_amplitude",
                    f"|amplitude| = {abs(cfg.u0_amplitude)} must stay below base = {cfg.u0_base}",
                )
            if cfg.u0_mode < 0:
                raise ValidationError("u0_mode", f"must be nonnegative, got {cfg.u0_mode}")
        if cfg.u0_kind == "file" and not cfg.u0_path:
            raise ValidationError("u0_path", "required")


def _format_float(x: float) -> str:
    return f"{x:.17g}"


def emit_timeseries(trajectory: Trajectory, path: str) -> None:
    """Write the trajectory's records as CSV: 17 significant digits, LF
    line endings, atomic replace so readers never see a partial file."""
    records = trajectory.records
    lines = [TIMESERIES_HEADER]
    for r in records:
        lines.append(
            ",".join(
                (
                    _format_float(r.t),
                    _format_float(r.mass),
                    _format_float(r.entropy_rel),
                    _format_float(r.lyap),
                    _format_float(r.production),
                    _format_float(r.min_u),
                    str(r.newton_iters),
                )
            )
        )
    body = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".timeseries-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(body)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_timeseries(path: str) -> list[TimeSeriesRecord]:
    """Inverse of ``emit_timeseries``; the 17-digit format round-trips
    doubles bit for bit."""
    with open(path, "r", newline="") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0] != TIMESERIES_HEADER:
        raise ParseError(1, f"expected header {TIMESERIES_HEADER!r}")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ParseError(line_no, f"expected 7 fields, found {len(parts)}")
        try:
            records.append(
                TimeSeriesRecord(
                    t=float(parts[0]),
                    mass=float(parts[1]),
                    entropy_rel=float(parts[2]),
                    lyap=float(parts[3]),
                    production=float(parts[4]),
                    min_u=float(parts[5]),
                    newton_iters=int(parts[6]),
                )
            )
        except ValueError as exc:
            raise ParseError(line_no, f"malformed record: {exc}") from None
    return records


@dataclass(frozen=True)
class DecayReport:
    """Least-squares exponential decay rate of an entropy series."""

    fitted_rate: float
    theoretical_M: float
    ratio: float
    fit_window: tuple[float, float]
    r_squared: float


def default_fit_window(series) -> tuple[float, float]:
    """Skip the initial transient (first 20% of the time span) and stop
    once the entropy falls below 1e-12 of its starting value."""
    arr = np.asarray(series, dtype=float)
    t, e = arr[:, 0], arr[:, 1]
    t_lo = t[0] + 0.2 * (t[-1] - t[0])
    floor = 1e-12 * e[0]
    above = t[e >= floor]
    t_hi = above[-1] if above.size else t[-1]
    return float(t_lo), float(t_hi)


def fit_decay(series, window: tuple[float, float], length: float) -> DecayReport:
    """Fit log E(t) = log E0 - rate * t on the samples inside ``window``
    and compare the rate against the sharp value 32 pi^4 / L^4."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"series must be an array of (t, E) pairs, got shape {arr.shape}")
    t_lo, t_hi = window
    mask = (arr[:, 0] >= t_lo) & (arr[:, 0] <= t_hi)
    t = arr[mask, 0]
    e = arr[mask, 1]
    if t.size < 10:
        raise InsufficientData(
            f"decay fit needs at least 10 samples in the window, found {t.size}"
        )
    if e.min() <= 0.0:
        raise NonPositiveEntropy(
            f"entropy must be strictly positive inside the window, min = {e.min():.3e}"
        )
    log_e = np.log(e)
    slope, intercept = np.polyfit(t, log_e, 1)
    fitted = log_e - (slope * t + intercept)
    ss_res = float((fitted ** 2).sum())
    ss_tot = float(((log_e - log_e.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot < 1e-30 else 1.0 - ss_res / ss_tot
    theoretical = 32.0 * math.pi ** 4 / length ** 4
    rate = -float(slope)
    return DecayReport(
        fitted_rate=rate,
        theoretical_M=theoretical,
        ratio=rate / theoretical,
        fit_window=(float(t_lo), float(t_hi)),
        r_squared=r_squared,
    )


def _rel_err(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30)


def identity_suite(
    grid: PeriodicGrid,
    backend: DiffBackend = SPECTRAL,
    trials: int = 100,
    seed: int = 0,
    n_modes: int | None = None,
) -> dict:
    """Check the pointwise-derived integral identities on random smooth
    positive densities and report the worst relative error for each.

    Checked per trial:
      * summation by parts: int u u_xx = -int u_x^2,
      * int u_x^2 u_xx / u^2 = (2/3) int u_x^4 / u^3,
      * int u ((log u)_xx)^2 = 4 int ((sqrt u)_xx)^2 + (1/12) int u_x^4 / u^3.

    The random densities depend only on (seed, n_modes, trial index), so
    running the suite on a refined grid probes the same continuum fields.
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    if n_modes is None:
        n_modes = max(2, grid.n_points // 8)
    stream = SplitMix64(seed)
    worst = {"summation_by_parts": 0.0, "quartic_identity": 0.0, "production_decomposition": 0.0}
    for _ in range(trials):
        trial_seed = stream.next_u64()
        u = random_log_density(grid, n_modes, trial_seed)
        vals = u.values

        ux = derivative(u, 1, backend).values
        uxx = derivative(u, 2, backend).values
        sbp_lhs = integrate(Field(grid, vals * uxx))
        sbp_rhs = -integrate(Field(grid, ux * ux))
        worst["summation_by_parts"] = max(worst["summation_by_parts"], _rel_err(sbp_lhs, sbp_rhs))

        quart_lhs = integrate(Field(grid, ux * ux * uxx / (vals * vals)))
        quart_rhs = (2.0 / 3.0) * integrate(Field(grid, ux ** 4 / vals ** 3))
        worst["quartic_identity"] = max(worst["quartic_identity"], _rel_err(quart_lhs, quart_rhs))

        production = functionals.entropy_production(u, backend)
        sqrt_part, quartic_part = functionals.production_decomposition(u, backend)
        worst["production_decomposition"] = max(
            worst["production_decomposition"], _rel_err(production, sqrt_part + quartic_part)
        )

    return {
        "L": grid.length,
        "N": grid.n_points,
        "backend": backend.name,
        "trials": trials,
        "seed": seed,
        "n_modes": n_modes,
        "max_rel_err": worst,
        "overall_max_rel_err": max(worst.values()),
    }
