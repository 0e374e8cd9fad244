"""Uniform periodic grid on [0, L) and the discrete calculus built on it.

Derivatives come in two interchangeable flavours: Fourier collocation
(exact for every resolvable trigonometric polynomial) and periodic central
finite differences of consistency order 2 or 4.  Quadrature is the
rectangle rule, which on a uniform periodic grid integrates trigonometric
polynomials up to the aliasing limit exactly and is therefore spectrally
accurate for smooth periodic integrands.

Both derivative backends are linear circulant operators; ``diff_matrix``
materialises any of them as a dense matrix for Jacobian assembly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np
from scipy.linalg import circulant

from .errors import NonPositiveDensity

__all__ = [
    "POSITIVITY_FLOOR",
    "PeriodicGrid",
    "FieldKind",
    "Field",
    "DiffBackend",
    "SPECTRAL",
    "FD2",
    "FD4",
    "make_grid",
    "derivative",
    "diff_matrix",
    "integrate",
    "mean",
    "project_mean_zero",
]

# Densities at or below this are treated as vacuum; log() is meaningless there.
POSITIVITY_FLOOR = 1e-300


@dataclass(frozen=True)
class PeriodicGrid:
    """Discretised circle of circumference ``length`` with ``n_points`` nodes.

    Nodes are x_j = j * spacing, j = 0..n_points-1; the right endpoint is
    identified with the left one and carries no node of its own.
    """

    length: float
    n_points: int

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def nodes(self) -> np.ndarray:
        return _nodes(self.length, self.n_points)


@lru_cache(maxsize=None)
def _nodes(length: float, n_points: int) -> np.ndarray:
    x = np.arange(n_points) * (length / n_points)
    x.setflags(write=False)
    return x


def make_grid(length: float, n_points: int) -> PeriodicGrid:
    """Validated grid constructor.

    ``n_points`` must be even (the Fourier backend pairs modes +-k and
    needs an unambiguous Nyquist mode) and at least 8 so that fourth-order
    operators have room to act.
    """
    if not np.isfinite(length) or length <= 0.0:
        raise ValueError(f"grid length must be positive and finite, got {length!r}")
    if n_points % 2 != 0:
        raise ValueError(f"n_points must be even, got odd value {n_points}")
    if n_points < 8:
        raise ValueError(f"n_points must be at least 8, got {n_points}")
    return PeriodicGrid(float(length), int(n_points))


class FieldKind(enum.Enum):
    DENSITY = "density"
    LOG_DENSITY = "log_density"
    GENERIC = "generic"


@dataclass(frozen=True)
class Field:
    """Nodal values of a function on a periodic grid.

    ``DENSITY`` fields must be strictly positive (above the floor);
    ``LOG_DENSITY`` and ``GENERIC`` fields are unconstrained apart from
    finiteness.  Values are stored as a read-only float64 array so fields
    can be shared without defensive copies.
    """

    grid: PeriodicGrid
    values: np.ndarray
    kind: FieldKind = FieldKind.GENERIC

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_points,):
            raise ValueError(
                f"values shape {vals.shape} does not match grid with "
                f"{self.grid.n_points} nodes"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if self.kind is FieldKind.DENSITY and vals.min() <= POSITIVITY_FLOOR:
            raise NonPositiveDensity(
                f"density minimum {vals.min():.3e} is at or below the floor"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray, kind: FieldKind | None = None) -> "Field":
        return Field(self.grid, values, self.kind if kind is None else kind)


class _BackendKind(enum.Enum):
    SPECTRAL = "spectral"
    FINITE_DIFFERENCE = "finite_difference"


@dataclass(frozen=True)
class DiffBackend:
    """Choice of discrete differentiation rule.

    ``SPECTRAL`` differentiates in Fourier space; odd derivatives zero the
    Nyquist mode (its sawtooth has no well-defined odd derivative on the
    collocation grid).  ``FiniteDifference(order)`` composes the classical
    periodic central stencils of the given consistency order; higher
    derivatives are built by stencil convolution, so D^(4) = D^(2) o D^(2)
    holds exactly, matching the operator products used by the time stepper.
    """

    kind: _BackendKind
    order: int = 0  # consistency order; 0 for spectral (exact)

    def __post_init__(self):
        if self.kind is _BackendKind.FINITE_DIFFERENCE and self.order not in (2, 4):
            raise ValueError(f"finite difference order must be 2 or 4, got {self.order}")

    @property
    def name(self) -> str:
        if self.kind is _BackendKind.SPECTRAL:
            return "spectral"
        return f"fd{self.order}"

    @staticmethod
    def from_name(name: str) -> "DiffBackend":
        try:
            return _BACKENDS_BY_NAME[name.lower()]
        except KeyError:
            raise ValueError(
                f"unknown backend {name!r}; expected one of {sorted(_BACKENDS_BY_NAME)}"
            ) from None


SPECTRAL = DiffBackend(_BackendKind.SPECTRAL)
FD2 = DiffBackend(_BackendKind.FINITE_DIFFERENCE, 2)
FD4 = DiffBackend(_BackendKind.FINITE_DIFFERENCE, 4)

_BACKENDS_BY_NAME = {"spectral": SPECTRAL, "fd2": FD2, "fd4": FD4}


def _spectral_derivative(values: np.ndarray, order: int, length: float) -> np.ndarray:
    n = values.size
    fhat = np.fft.rfft(values)
    wave = (2.0 * np.pi / length) * np.arange(fhat.size)
    fhat *= (1j * wave) ** order
    if order % 2 == 1 and n % 2 == 0:
        fhat[-1] = 0.0
    return np.fft.irfft(fhat, n=n)


# Central periodic stencils on the unit-spacing grid, as {offset: weight}.
_BASE_TAPS = {
    (1, 2): {-1: -0.5, 1: 0.5},
    (2, 2): {-1: 1.0, 0: -2.0, 1: 1.0},
    (1, 4): {-2: 1.0 / 12.0, -1: -8.0 / 12.0, 1: 8.0 / 12.0, 2: -1.0 / 12.0},
    (2, 4): {-2: -1.0 / 12.0, -1: 16.0 / 12.0, 0: -30.0 / 12.0, 1: 16.0 / 12.0, 2: -1.0 / 12.0},
}


def _convolve_taps(a: dict, b: dict) -> dict:
    out: dict = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            out[ka + kb] = out.get(ka + kb, 0.0) + va * vb
    return out


@lru_cache(maxsize=None)
def _fd_taps(order: int, fd_order: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Unit-spacing taps for the ``order``-th derivative at consistency
    ``fd_order``, built by composing second- and first-derivative stencils."""
    taps = {0: 1.0}
    for _ in range(order // 2):
        taps = _convolve_taps(taps, _BASE_TAPS[(2, fd_order)])
    if order % 2 == 1:
        taps = _convolve_taps(taps, _BASE_TAPS[(1, fd_order)])
    offsets = tuple(sorted(taps))
    return offsets, tuple(taps[o] for o in offsets)


def _fd_derivative(values: np.ndarray, order: int, spacing: float, fd_order: int) -> np.ndarray:
    offsets, weights = _fd_taps(order, fd_order)
    out = np.zeros_like(values)
    for off, w in zip(offsets, weights):
        # (D f)_j includes w * f_{j+off}; roll(-off) aligns f_{j+off} with slot j
        out += w * np.roll(values, -off)
    out *= spacing ** (-order)
    return out


def derivative(f: Field, order: int, backend: DiffBackend = SPECTRAL) -> Field:
    """``order``-th periodic derivative of ``f`` as a GENERIC field."""
    if order < 0:
        raise ValueError(f"derivative order must be nonnegative, got {order}")
    if order == 0:
        return Field(f.grid, f.values, FieldKind.GENERIC)
    if backend.kind is _BackendKind.SPECTRAL:
        out = _spectral_derivative(f.values, order, f.grid.length)
    else:
        out = _fd_derivative(f.values, order, f.grid.spacing, backend.order)
    return Field(f.grid, out, FieldKind.GENERIC)


@lru_cache(maxsize=None)
def _diff_matrix_cached(length: float, n_points: int, order: int, backend: DiffBackend) -> np.ndarray:
    grid = PeriodicGrid(length, n_points)
    delta = np.zeros(n_points)
    delta[0] = 1.0
    col = derivative(Field(grid, delta), order, backend).values
    # circulant(c)[i, j] = c[(i - j) mod n] = weight tying f_j to (Df)_i
    mat = circulant(col)
    mat.setflags(write=False)
    return mat


def diff_matrix(grid: PeriodicGrid, order: int, backend: DiffBackend = SPECTRAL) -> np.ndarray:
    """Dense circulant matrix of the chosen derivative; read-only and cached.

    Agrees with ``derivative`` to rounding for every field, which keeps
    Jacobians consistent with the residuals they linearise.
    """
    return _diff_matrix_cached(grid.length, grid.n_points, order, backend)


def integrate(f: Field) -> float:
    """Rectangle rule: spacing times the nodal sum."""
    return float(f.grid.spacing * f.values.sum())


def mean(f: Field) -> float:
    return float(f.values.mean())


def project_mean_zero(f: Field) -> Field:
    """Subtract the mean; the result is GENERIC (it may change sign)."""
    return Field(f.grid, f.values - f.values.mean(), FieldKind.GENERIC)
