"""Small dense symmetric eigensolvers.

The graphs handled here have at most a few dozen vertices, so a cyclic
Jacobi sweep is plenty fast and keeps the spectrum computation free of
LAPACK-specific ordering or sign conventions.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray


def _off_norm(a: NDArray[np.float64]) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def jacobi_eigh(
    matrix: ArrayLike, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Args:
        matrix: (n, n) symmetric matrix.
        tol: stop once the off-diagonal Frobenius norm drops below
            ``tol * max(1, ||A||_F)``.
        max_sweeps: hard cap on full sweeps over the upper triangle.

    Returns:
        ``(w, v)`` with eigenvalues ``w`` sorted ascending and the matching
        orthonormal eigenvectors as the columns of ``v``.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    for _ in range(max_sweeps):
        if _off_norm(a) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # rotation angle chosen to annihilate a[p, q] (stable small-angle form)
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        if _off_norm(a) > threshold:
            raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def jacobi_eigvalsh(matrix: ArrayLike, tol: float = 1e-12) -> NDArray[np.float64]:
    """Sorted eigenvalues of a symmetric matrix (see :func:`jacobi_eigh`)."""
    return jacobi_eigh(matrix, tol=tol)[0]


def sym2x2_eigvals(a: float, b: float, d: float) -> tuple[float, float]:
    """Eigenvalues ``(lo, hi)`` of the symmetric matrix ``[[a, b], [b, d]]``."""
    mean = 0.5 * (a + d)
    radius = math.hypot(0.5 * (a - d), b)
    return mean - radius, mean + radius
