"""Finite cut-off pairwise potential.

``phi(d) = f(d) + lam * g(d)`` where ``f`` is a bounded rational barrier that
is active only inside the risky radius and ``g`` is a quintic smooth step that
rises from 0 at the risky radius to 1 at the cautionary radius.  Beyond the
cautionary radius the potential is flat, so pairs farther apart than that
exert no force on each other at all.

All scalar functions accept a float or an ndarray of distances.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DomainError

# Below this separation the direction between two agents is undefined.
EPS_DIST = 1e-6


class DegenerateDistanceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class PotentialParams:
    """Zone radii (m) and shape constants of one pair interaction.

    ``lam`` is the plateau value beyond the cautionary radius and ``mu`` the
    peak value at zero distance; ``0 < lam < mu`` and
    ``0 < d_risky < d_cautionary``.
    """

    d_risky: float
    d_cautionary: float
    lam: float
    mu: float

    def __post_init__(self) -> None:
        for name in ("d_risky", "d_cautionary", "lam", "mu"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if not self.d_risky < self.d_cautionary:
            raise ValueError(
                f"risky radius ({self.d_risky}) must be smaller than cautionary radius "
                f"({self.d_cautionary})")
        if not self.lam < self.mu:
            raise ValueError(f"lambda ({self.lam}) must be smaller than mu ({self.mu})")


def _check_distance(d: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError("distance must be non-negative")
    return arr


def _out(x: NDArray[np.float64], like: ArrayLike):
    return float(x) if np.ndim(like) == 0 else x


# -- array kernels; parameters may be scalars or arrays broadcastable with d --

def _f(d, dr, mu):
    inside = d <= dr
    c = dr**3 / mu
    # dr^3 / (dr^3 / mu) can miss mu by an ulp, so pin d = 0 and clamp its neighbours
    val = np.where(d == 0, mu, np.minimum((dr - d) ** 3 / (d + c), mu))
    return np.where(inside, val, 0.0)


def _s(d, dr, dc):
    return np.clip((d - dr) / (dc - dr), 0.0, 1.0)


def _quintic(s):
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _g(d, dr, dc):
    s = _s(d, dr, dc)
    # upper half through g(s) = 1 - g(1 - s) so rounding never pushes g above 1
    return np.where(s <= 0.5, _quintic(s), 1.0 - _quintic(1.0 - s))


def _dg(d, dr, dc):
    s = _s(d, dr, dc)
    return 30.0 * s**2 * (1.0 - s) ** 2 / (dc - dr)


def _dphi(d, dr, dc, lam, mu):
    c = dr**3 / mu
    barrier = -((dr - d) ** 2) * (2.0 * d + 3.0 * c + dr) / (d + c) ** 2
    return np.where(d < dr, barrier, np.where(d < dc, lam * _dg(d, dr, dc), 0.0))


def _phi(d, dr, dc, lam, mu):
    return _f(d, dr, mu) + lam * _g(d, dr, dc)


# -- public API --

def f_core(d: ArrayLike, p: PotentialParams):
    """Rational barrier ``(dr - d)^3 / (d + dr^3/mu)`` inside the risky radius, else 0."""
    arr = _check_distance(d)
    return _out(_f(arr, p.d_risky, p.mu), d)


def smooth_step(d: ArrayLike, p: PotentialParams):
    """Quintic step: 0 up to ``d_risky``, 1 from ``d_cautionary``, ``10s^3 - 15s^4 + 6s^5`` between."""
    arr = _check_distance(d)
    return _out(_g(arr, p.d_risky, p.d_cautionary), d)


def smooth_step_binomial(d: ArrayLike, p: PotentialParams):
    """The same step written as its binomial sum.

    ``s^3 * sum_{k=0..2} C(k+2, k) C(5, 2-k) ((dr - d)/(dc - dr))^k`` on the open
    band.  Kept as an independent reference for :func:`smooth_step`.
    """
    arr = _check_distance(d)
    dr, dc = p.d_risky, p.d_cautionary
    s = (arr - dr) / (dc - dr)
    w = (dr - arr) / (dc - dr)
    total = sum(math.comb(k + 2, k) * math.comb(5, 2 - k) * w**k for k in range(3))
    val = np.where(arr <= dr, 0.0, np.where(arr >= dc, 1.0, s**3 * total))
    return _out(val, d)


def smooth_step_derivative(d: ArrayLike, p: PotentialParams):
    arr = _check_distance(d)
    return _out(_dg(arr, p.d_risky, p.d_cautionary), d)


def phi(d: ArrayLike, p: PotentialParams):
    """Pair potential; equals ``mu`` at contact and ``lam`` beyond the cautionary radius."""
    arr = _check_distance(d)
    return _out(_phi(arr, p.d_risky, p.d_cautionary, p.lam, p.mu), d)


def dphi_dd(d: ArrayLike, p: PotentialParams):
    """Radial derivative of :func:`phi` in closed form.

    Negative inside the risky zone (repulsive), small and positive across the
    cautionary band, exactly zero beyond it.
    """
    arr = _check_distance(d)
    return _out(_dphi(arr, p.d_risky, p.d_cautionary, p.lam, p.mu), d)


def repulsion_vector(p_i: ArrayLike, p_j: ArrayLike, p: PotentialParams) -> NDArray[np.float64]:
    """Acceleration on agent ``i`` from object ``j``: minus the gradient of phi w.r.t. ``p_i``.

    If the two points are closer than :data:`EPS_DIST` the direction is
    undefined; a fixed ``+x`` direction with magnitude ``|dphi_dd(EPS_DIST)|``
    is returned and a :class:`DegenerateDistanceWarning` is issued.
    """
    diff = np.asarray(p_i, dtype=np.float64) - np.asarray(p_j, dtype=np.float64)
    dist = float(np.linalg.norm(diff))
    if dist < EPS_DIST:
        warnings.warn(f"degenerate distance {dist:.3g} m; using +x fallback direction",
                      DegenerateDistanceWarning, stacklevel=2)
        return np.array([abs(dphi_dd(EPS_DIST, p)), 0.0, 0.0])
    return -dphi_dd(dist, p) * diff / dist


def potential_table(p: PotentialParams, d_max: float | None = None,
                    points: int = 401) -> NDArray[np.float64]:
    """Rows of ``(d, f, g, phi, dphi)`` on a uniform grid from 0 to ``d_max``.

    ``d_max`` defaults to 1.5 times the cautionary radius.
    """
    if points < 2:
        raise ValueError("need at least two grid points")
    if d_max is None:
        d_max = 1.5 * p.d_cautionary
    d = np.linspace(0.0, d_max, points)
    return np.column_stack([d, f_core(d, p), smooth_step(d, p), phi(d, p), dphi_dd(d, p)])


class PairPotentials:
    """A global :class:`PotentialParams` with optional per-pair overrides.

    Overrides are symmetric: the entry for ``(i, j)`` also applies to ``(j, i)``.
    Obstacle interactions always use ``default``.
    """

    def __init__(self, default: PotentialParams,
                 overrides: dict[tuple[int, int], PotentialParams] | None = None):
        self.default = default
        self.overrides: dict[tuple[int, int], PotentialParams] = {}
        for (i, j), params in (overrides or {}).items():
            if i == j:
                raise ValueError(f"override for pair ({i}, {j}) is a self pair")
            self.overrides[(min(i, j), max(i, j))] = params

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PairPotentials):
            return NotImplemented
        return self.default == other.default and self.overrides == other.overrides

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"PairPotentials(default={self.default!r}, overrides={self.overrides!r})"

    def for_pair(self, i: int, j: int) -> PotentialParams:
        return self.overrides.get((min(i, j), max(i, j)), self.default)

    def arrays(self, n: int) -> tuple[NDArray[np.float64], ...]:
        """(n, n) arrays of ``d_risky, d_cautionary, lam, mu``."""
        d = self.default
        out = [np.full((n, n), v) for v in (d.d_risky, d.d_cautionary, d.lam, d.mu)]
        for (i, j), p in self.overrides.items():
            if j >= n:
                raise ValueError(f"override pair ({i}, {j}) out of range for {n} agents")
            for arr, v in zip(out, (p.d_risky, p.d_cautionary, p.lam, p.mu)):
                arr[i, j] = arr[j, i] = v
        return tuple(out)
