"""Lyapunov certificate for the pure-consensus regime.

With every gate open and no repulsion active, the stacked errors obey

    e_p' = e_v,   e_v' = -gamma_p M e_p - gamma_v M e_v,   M = (L + Delta) kron I3.

The certificate is ``V = [e_p; e_v]^T P [e_p; e_v]`` with

    P  = [[(gamma_p + gamma_v gamma) M^2, gamma M], [gamma M, M]]
    MM = blockdiag(gamma (gamma_p - theta_p) M^2, (gamma_v - theta_v) M^2 - gamma M)

and ``V' = -2 e^T blockdiag(gamma gamma_p M^2, gamma_v M^2 - gamma M) e <= -2 e^T MM e``,
which gives ``V(t) <= V(0) exp(-zeta t)`` for ``zeta = 2 lambda_min(MM) / lambda_max(P)``.

Every block is a polynomial in ``M``, so both matrices split into one scalar
or 2x2 problem per eigenvalue of ``L + Delta``; nothing of size 3n is formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import potential as pot
from .controller import ControllerGains
from .errors import InfeasibleGainsError
from .graph import CommGraph, build_matrices, is_connected
from .linalg import sym2x2_eigvals
from .potential import PairPotentials


@dataclass(frozen=True)
class StabilityReport:
    condition_mu: dict = field(default_factory=dict)
    condition_p: bool = False
    condition_v: bool = False
    condition_pv: bool = False
    margin_p: float = math.nan
    margin_v: float = math.nan
    margin_pv: float = math.nan
    p_positive_definite: bool = False
    lemma1: bool = False
    connected: bool = False
    has_leader: bool = False
    eigenvalues: tuple = ()
    lambda_min_M: float = math.nan
    lambda_max_P: float = math.nan
    zeta: float = 0.0

    @property
    def gains_feasible(self) -> bool:
        """Graph and gain conditions (everything except the initial-distance check)."""
        return (self.lemma1 and self.condition_p and self.condition_v
                and self.condition_pv and self.p_positive_definite)

    @property
    def feasible(self) -> bool:
        return self.gains_feasible and all(self.condition_mu.values())

    def as_dict(self) -> dict:
        out = {
            "feasible": self.feasible,
            "lemma1": self.lemma1,
            "connected": self.connected,
            "has_leader": self.has_leader,
            "condition_mu": all(self.condition_mu.values()),
            "condition_p": self.condition_p,
            "condition_v": self.condition_v,
            "condition_pv": self.condition_pv,
            "p_positive_definite": self.p_positive_definite,
            "margin_p": self.margin_p,
            "margin_v": self.margin_v,
            "margin_pv": self.margin_pv,
            "eigenvalues": list(self.eigenvalues),
            "lambda_min_M": self.lambda_min_M,
            "lambda_max_P": self.lambda_max_P,
            "zeta": self.zeta,
        }
        failed = [f"{i}-{j}" for (i, j), ok in sorted(self.condition_mu.items()) if not ok]
        out["condition_mu_failed_pairs"] = failed
        return out


def _spectral_bounds(eig: NDArray[np.float64], k: ControllerGains) -> tuple[float, float, float]:
    """``(lambda_min(MM), lambda_max(P), lambda_min(P))`` from the spectrum of ``L + Delta``."""
    a = k.gamma_p + k.gamma_v * k.gamma
    mm_min = math.inf
    p_max = -math.inf
    p_min = math.inf
    for lam in eig:
        lam = float(lam)
        mm_min = min(mm_min, k.gamma * (k.gamma_p - k.theta_p) * lam**2,
                     (k.gamma_v - k.theta_v) * lam**2 - k.gamma * lam)
        lo, hi = sym2x2_eigvals(a * lam**2, k.gamma * lam, lam)
        p_max = max(p_max, hi)
        p_min = min(p_min, lo)
    return mm_min, p_max, p_min


def check_theorem(g: CommGraph, k: ControllerGains, pp=None,
                  initial_positions: ArrayLike | None = None) -> StabilityReport:
    """Evaluate the sufficient conditions for collision-free, converging formation.

    The two matrix inequalities are checked per eigenvalue ``lam`` of
    ``L + Delta`` as ``(gamma_v - theta_v) lam^2 - gamma lam > 0`` and
    ``(gamma_p + gamma_v gamma) lam^2 - gamma^2 lam > 0``.  ``condition_mu``
    maps each neighbour pair ``(i, j)``, ``i < j``, to ``mu_ij > phi_ij(d_ij(0))``;
    it is empty when no positions are given.
    """
    mats = build_matrices(g)
    eig = mats.eigenvalues_l_plus_delta
    connected = is_connected(g)
    lemma1 = connected and g.has_leader and mats.positive_definite

    margin_p = k.gamma_p - k.theta_p
    margin_v = min((k.gamma_v - k.theta_v) * lam**2 - k.gamma * lam for lam in eig)
    a = k.gamma_p + k.gamma_v * k.gamma
    margin_pv = min(a * lam**2 - k.gamma**2 * lam for lam in eig)
    mm_min, p_max, p_min = _spectral_bounds(eig, k)

    cond_mu = {}
    if initial_positions is not None:
        if pp is None:
            raise ValueError("potential parameters are needed to check initial distances")
        pp = pp if isinstance(pp, PairPotentials) else PairPotentials(pp)
        p = np.asarray(initial_positions, dtype=np.float64)
        for i in range(g.n_agents):
            for j in range(i + 1, g.n_agents):
                if g.adjacency[i, j] > 0:
                    params = pp.for_pair(i, j)
                    d0 = float(np.linalg.norm(p[i] - p[j]))
                    cond_mu[(i, j)] = bool(params.mu > pot.phi(d0, params))

    report = StabilityReport(
        condition_mu=cond_mu,
        condition_p=bool(margin_p > 0),
        condition_v=bool(lemma1 and margin_v > 0),
        condition_pv=bool(lemma1 and margin_pv > 0),
        margin_p=float(margin_p),
        margin_v=float(margin_v),
        margin_pv=float(margin_pv),
        p_positive_definite=bool(lemma1 and p_min > 0),
        lemma1=bool(lemma1),
        connected=bool(connected),
        has_leader=g.has_leader,
        eigenvalues=tuple(float(x) for x in eig),
        lambda_min_M=float(mm_min),
        lambda_max_P=float(p_max),
    )
    if report.feasible and mm_min > 0:
        object.__setattr__(report, "zeta", 2.0 * mm_min / p_max)
    return report


def zeta(g: CommGraph, k: ControllerGains) -> float:
    """Guaranteed decay rate ``2 lambda_min(MM) / lambda_max(P)`` (1/s)."""
    report = check_theorem(g, k)
    if not report.gains_feasible or report.lambda_min_M <= 0:
        raise InfeasibleGainsError(
            "gains violate the stability conditions; run check_theorem for details", report)
    return 2.0 * report.lambda_min_M / report.lambda_max_P


def assemble_P(g: CommGraph, k: ControllerGains) -> NDArray[np.float64]:
    """Dense (6n, 6n) Lyapunov matrix.  Only meant for small ``n`` and testing."""
    m = np.kron(build_matrices(g).l_plus_delta, np.eye(3))
    a = k.gamma_p + k.gamma_v * k.gamma
    return np.block([[a * m @ m, k.gamma * m], [k.gamma * m, m]])


def assemble_MM(g: CommGraph, k: ControllerGains) -> NDArray[np.float64]:
    """Dense (6n, 6n) decay matrix.  Only meant for small ``n`` and testing."""
    m = np.kron(build_matrices(g).l_plus_delta, np.eye(3))
    z = np.zeros_like(m)
    return np.block([[k.gamma * (k.gamma_p - k.theta_p) * m @ m, z],
                     [z, (k.gamma_v - k.theta_v) * m @ m - k.gamma * m]])


def _as_rows(e: ArrayLike, n: int) -> NDArray[np.float64]:
    arr = np.asarray(e, dtype=np.float64)
    if arr.size != 3 * n:
        raise ValueError(f"stacked error has {arr.size} entries, expected {3 * n}")
    return arr.reshape(n, 3)


class LyapunovFunction:
    """``V(e_p, e_v)`` evaluated through ``L + Delta`` rather than the 6n x 6n matrix."""

    def __init__(self, g: CommGraph, k: ControllerGains):
        self.n = g.n_agents
        self.lpd = build_matrices(g).l_plus_delta
        self.a = k.gamma_p + k.gamma_v * k.gamma
        self.gamma = k.gamma

    def __call__(self, e_p: ArrayLike, e_v: ArrayLike) -> float:
        ep = _as_rows(e_p, self.n)
        ev = _as_rows(e_v, self.n)
        mp = self.lpd @ ep
        mv = self.lpd @ ev
        return float(self.a * np.sum(mp * mp) + 2.0 * self.gamma * np.sum(ep * mv)
                     + np.sum(ev * mv))


def lyapunov_value(e_p: ArrayLike, e_v: ArrayLike, g: CommGraph, k: ControllerGains) -> float:
    """Quadratic form ``[e_p; e_v]^T P [e_p; e_v]`` for agent-major stacked errors."""
    return LyapunovFunction(g, k)(e_p, e_v)


@dataclass(frozen=True)
class DecayReport:
    """Outcome of checking ``V(t) <= V(t_w) exp(-zeta (t - t_w))`` on linear-regime windows.

    ``windows`` holds ``(t_start, t_end, max_ratio)`` for every qualifying window.
    """

    applicable: bool
    zeta: float
    max_ratio: float
    windows: tuple = ()
    reason: str = ""

    def certified(self, tol: float = 0.05) -> bool:
        return self.applicable and self.max_ratio <= 1.0 + tol


def linear_regime_mask(trace) -> NDArray[np.bool_]:
    """Steps where every gate is exactly 1, no repulsion acts and no axis saturates."""
    return (np.all(trace.gamma == 1.0, axis=1)
            & np.all(trace.u_c == 0.0, axis=(1, 2))
            & ~np.any(trace.saturated, axis=1))


def monitor_decay(trace, g: CommGraph, k: ControllerGains, min_steps: int = 2) -> DecayReport:
    """Check the exponential Lyapunov bound on every pure-consensus window of a trace.

    Windows are maximal runs of :func:`linear_regime_mask` steps inside one
    reference segment (the reference velocity jumps at waypoints, which
    resets the error dynamics).  Steps outside any window are ignored.
    """
    try:
        rate = zeta(g, k)
    except InfeasibleGainsError:
        return DecayReport(False, 0.0, math.nan, reason="gains infeasible")

    mask = linear_regime_mask(trace)
    seg = np.asarray(trace.segment)
    windows = []
    worst = -math.inf
    start = None
    n_steps = len(trace.t)
    for idx in range(n_steps + 1):
        ok = idx < n_steps and mask[idx] and (start is None or seg[idx] == seg[start])
        if ok and start is None:
            start = idx
            continue
        if ok:
            continue
        if start is not None:
            stop = idx
            if stop - start >= min_steps and trace.V[start] > 0:
                tt = trace.t[start:stop]
                bound = trace.V[start] * np.exp(-rate * (tt - tt[0]))
                ratio = float(np.max(trace.V[start:stop] / bound))
                windows.append((float(tt[0]), float(tt[-1]), ratio))
                worst = max(worst, ratio)
            start = None
        if idx < n_steps and mask[idx]:
            start = idx
    if not windows:
        return DecayReport(False, rate, math.nan, reason="no pure-consensus window")
    return DecayReport(True, rate, worst, tuple(windows))
