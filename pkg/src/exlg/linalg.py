"""Dense symmetric eigensolves, PSD square roots, and block mixing.

Everything downstream (mixing matrices, Wasserstein distances, theory
constants) funnels through the three operations here, so they are kept
deliberately small: a cyclic Jacobi eigensolver (bitwise reproducible, no
external solver), an eigendecomposition-based PSD root with explicit
clipping policy, and a block-apply that contracts only over the agent axis.

Matrices here are tiny (network size or data dimension, tens at most), so
O(n^3) with a Python sweep loop is more than fast enough.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

__all__ = [
    "SymMatrix",
    "Spectrum",
    "EigenConvergenceError",
    "NotPSDError",
    "sym_eig",
    "psd_sqrt",
    "mix_apply",
]

# Sweep budget for the Jacobi iteration.  Convergence for n <= 64 is
# typically 6-10 sweeps; hitting this limit means the input was not a real
# symmetric matrix (NaN/Inf slip through to here only if validation was
# bypassed).
_MAX_SWEEPS = 100
_OFF_TOL = 1e-14


class EigenConvergenceError(RuntimeError):
    """Jacobi sweeps exhausted without annihilating the off-diagonal."""


class NotPSDError(ValueError):
    """Matrix handed to psd_sqrt has an eigenvalue below the clip window."""


@dataclasses.dataclass(frozen=True)
class SymMatrix:
    """A validated square symmetric matrix.

    The constructor symmetrizes via (a + a.T)/2, so ``entries`` is exactly
    symmetric; non-square or non-finite input is rejected.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a = (a + a.T) / 2.0
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is not None:
            return np.asarray(self.entries, dtype=dtype)
        return self.entries


@dataclasses.dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (ascending) and matching orthonormal eigenvectors.

    ``vectors[:, j]`` belongs to ``values[j]``; reconstruction and
    orthonormality hold to 1e-10 relative (see tests).
    """

    values: np.ndarray
    vectors: np.ndarray


def _as_sym(a) -> np.ndarray:
    if isinstance(a, SymMatrix):
        return a.entries
    return SymMatrix(np.asarray(a, dtype=float)).entries


def sym_eig(a) -> Spectrum:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Parameters
    ----------
    a : array_like or SymMatrix
        Square symmetric matrix (symmetrized on entry if handed raw).

    Returns
    -------
    Spectrum
        Eigenvalues sorted ascending (stable order, so exact ties keep
        their sweep order) with the rotated eigenvector columns.

    Raises
    ------
    EigenConvergenceError
        If the off-diagonal mass has not fallen below 1e-14 * ||a||_F
        after the sweep budget; the message names the offending matrix.
    """
    A = _as_sym(a).copy()
    n = A.shape[0]
    if n == 1:
        return Spectrum(values=A.diagonal().copy(), vectors=np.ones((1, 1)))
    V = np.eye(n)
    target = _OFF_TOL * max(np.linalg.norm(A), 1e-300)
    for _sweep in range(_MAX_SWEEPS):
        # Off-diagonal Frobenius mass, summed directly (a sum-of-squares
        # subtraction cancels catastrophically near convergence).
        strict = A[~np.eye(n, dtype=bool)]
        off = math.sqrt(float(np.sum(strict * strict)))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # Stable rotation angle: t = sign(th)/(|th| + sqrt(th^2+1)).
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = A[:, p].copy()
                col_q = A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p = A[p, :].copy()
                row_q = A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = 0.0
                A[q, p] = 0.0
                v_p = V[:, p].copy()
                v_q = V[:, q].copy()
                V[:, p] = c * v_p - s * v_q
                V[:, q] = s * v_p + c * v_q
    else:
        raise EigenConvergenceError(
            f"Jacobi failed to converge on a {n}x{n} matrix after "
            f"{_MAX_SWEEPS} sweeps (off-diagonal norm {off:.3e}, "
            f"target {target:.3e}); first rows: {np.asarray(a)[:2]}"
        )
    vals = A.diagonal().copy()
    order = np.argsort(vals, kind="stable")
    return Spectrum(values=vals[order], vectors=V[:, order])


def psd_sqrt(a, clip_tol: float | None = None) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-clip_tol, 0) are clamped to zero; anything below
    -clip_tol raises ``NotPSDError`` reporting the offending eigenvalue.
    ``clip_tol`` defaults to 1e-10 times the spectral norm of ``a``.
    """
    spec = sym_eig(a)
    vals = spec.values
    snorm = float(np.max(np.abs(vals))) if vals.size else 0.0
    if clip_tol is None:
        clip_tol = 1e-10 * snorm
    lo = float(vals[0])
    if lo < -clip_tol:
        raise NotPSDError(
            f"matrix is not PSD within the clip window: eigenvalue {lo:.6e} "
            f"< -{clip_tol:.6e}"
        )
    clipped = np.clip(vals, 0.0, None)
    root = (spec.vectors * np.sqrt(clipped)) @ spec.vectors.T
    return (root + root.T) / 2.0


def mix_apply(m, x: np.ndarray) -> np.ndarray:
    """Apply an (N, N) mixing matrix across the agent axis of an (N, d) block.

    Row i of the result is sum_j m[i, j] * x[j]; equivalent to
    (m kron I_d) acting on the stacked vector, without ever forming the
    Kronecker product.
    """
    m = np.asarray(m, dtype=float)
    x = np.asarray(x, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"mixing matrix must be square, got shape {m.shape}")
    if x.ndim != 2 or x.shape[0] != m.shape[0]:
        raise ValueError(
            f"state block shape {x.shape} incompatible with "
            f"{m.shape[0]} agents"
        )
    return m @ x
