"""Direct solvers for the Newton systems.

Periodic finite-difference Jacobians are banded up to two wraparound
corner blocks.  ``CyclicBandedLU`` factorises the banded core with LAPACK
``gbtrf`` and folds the corners back in through a rank-2b Woodbury
correction, so a factor-once / solve-many workflow costs O(N b^2) per
factorisation and O(N b) per solve instead of O(N^3) / O(N^2) dense.

The splitting A = B + U V^T (B banded, U V^T the corners) requires the
band and the corners to be disjoint, i.e. n > 4 * halfwidth; tiny grids
should use the dense path instead.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import dgbtrf, dgbtrs

from .errors import SingularJacobian

__all__ = ["DenseLU", "CyclicBandedLU"]


class DenseLU:
    """Thin wrapper over scipy's dense LU with the package's error type."""

    def __init__(self, mat: np.ndarray):
        try:
            self._lu = lu_factor(mat)
        except Exception as exc:  # LinAlgError on exact singularity
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(self._lu[0])):
            raise SingularJacobian("dense LU produced non-finite factors")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        out = lu_solve(self._lu, rhs)
        if not np.all(np.isfinite(out)):
            raise SingularJacobian("dense solve produced non-finite values")
        return out


def _band_storage(mat: np.ndarray, halfwidth: int) -> np.ndarray:
    """LAPACK gbtrf layout: A[i, j] lives at ab[2*hw + i - j, j]."""
    n = mat.shape[0]
    hw = halfwidth
    ab = np.zeros((3 * hw + 1, n))
    for off in range(-hw, hw + 1):
        diag = np.diagonal(mat, offset=off)
        if off >= 0:
            ab[2 * hw - off, off:] = diag
        else:
            ab[2 * hw - off, : n + off] = diag
    return ab


class CyclicBandedLU:
    """Factorisation of a periodic banded matrix.

    ``mat`` must vanish outside the band |i - j| <= halfwidth and the two
    halfwidth x halfwidth wraparound corners.  Entries elsewhere are
    silently ignored, so callers should only hand over matrices with the
    advertised sparsity.
    """

    def __init__(self, mat: np.ndarray, halfwidth: int):
        n = mat.shape[0]
        hw = halfwidth
        if hw < 1:
            raise ValueError(f"halfwidth must be positive, got {hw}")
        if n <= 4 * hw:
            raise ValueError(
                f"cyclic banded split needs n > 4*halfwidth, got n={n}, halfwidth={hw}"
            )
        self._n = n
        self._hw = hw

        ab = _band_storage(mat, hw)
        lu, ipiv, info = dgbtrf(ab, hw, hw)
        if info != 0:
            raise SingularJacobian(f"banded LU failed with LAPACK info={info}")
        self._lu = lu
        self._ipiv = ipiv

        # Corners as a rank-2*hw update: A = B + U V^T with
        # U[:hw, :hw] = top-right block, U[-hw:, hw:] = bottom-left block,
        # V placing them against the opposite edge's identity.
        top_right = mat[:hw, n - hw:]
        bottom_left = mat[n - hw:, :hw]
        u = np.zeros((n, 2 * hw))
        u[:hw, :hw] = top_right
        u[n - hw:, hw:] = bottom_left
        self._binv_u = self._solve_banded(u)
        cap = np.eye(2 * hw)
        cap[:hw, :] += self._binv_u[n - hw:, :]
        cap[hw:, :] += self._binv_u[:hw, :]
        try:
            self._cap_lu = lu_factor(cap)
        except Exception as exc:
            raise SingularJacobian(f"corner capacitance singular: {exc}") from exc

    def _solve_banded(self, rhs: np.ndarray) -> np.ndarray:
        x, info = dgbtrs(self._lu, self._hw, self._hw, rhs, self._ipiv)
        if info != 0:
            raise SingularJacobian(f"banded back-substitution failed, info={info}")
        return x

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        n, hw = self._n, self._hw
        x0 = self._solve_banded(rhs)
        # V^T x0 stacks the bottom edge (seen by the top-right corner)
        # over the top edge (seen by the bottom-left corner).
        vtx = np.concatenate([x0[n - hw:], x0[:hw]])
        z = lu_solve(self._cap_lu, vtx)
        out = x0 - self._binv_u @ z
        if not np.all(np.isfinite(out)):
            raise SingularJacobian("cyclic banded solve produced non-finite values")
        return out
