"""Collision-free consensus formation control law.

The acceleration command of agent ``i`` is

    u_i = sat( u_c,i + Gamma_i * u_f,i )

* ``u_c,i`` is minus the position gradient of the summed pair potentials
  over graph neighbours and active obstacles;
* ``u_f,i = -gamma_p [(L + Delta) e_p]_i - gamma_v [(L + Delta) e_v]_i`` is the
  leader-follower consensus term on tracking errors;
* ``Gamma_i`` is the product of smooth steps over the same objects.  It is
  1 while nothing is inside the cautionary radius and 0 as soon as something
  is inside the risky radius, so avoidance overrides formation keeping.

Obstacles take part in ``u_c`` and ``Gamma`` but never in the consensus sums.

The module-level functions evaluate one agent with plain neighbour loops and
are meant for inspection and testing.  :class:`Controller` evaluates the
whole swarm at once and is what the simulator calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import potential as pot
from .graph import CommGraph, build_matrices, neighbors
from .potential import EPS_DIST, PairPotentials
from .vehicle import FormationSpec, ReferenceTrajectory, stacked_errors

DEFAULT_U_MAX = 2.0


@dataclass(frozen=True)
class ControllerGains:
    """Consensus gains and Lyapunov certificate parameters.

    Attributes:
        gamma_p: position gain (1/s^2).
        gamma_v: velocity gain (1/s).
        gamma: cross-coupling weight of the Lyapunov certificate (1/s).
        theta_p, theta_v: decay margins carved out of ``gamma_p``/``gamma_v``.
        u_max: per-axis acceleration saturation (m/s^2).
    """

    gamma_p: float
    gamma_v: float
    gamma: float
    theta_p: float
    theta_v: float
    u_max: float = DEFAULT_U_MAX

    def __post_init__(self) -> None:
        for name in ("gamma_p", "gamma_v", "gamma", "theta_p", "theta_v", "u_max"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")


@dataclass(frozen=True, eq=False)
class ObstacleState:
    """Uncontrolled object moving with constant velocity from ``active_from`` on.

    ``position`` is where the obstacle appears at ``active_from``.  Before that
    it does not exist for the controller or the collision checks.
    """

    position: NDArray[np.float64]
    velocity: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    active_from: float = 0.0

    def __post_init__(self) -> None:
        for name in ("position", "velocity"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape != (3,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"obstacle {name} must be a finite 3-vector")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not math.isfinite(self.active_from):
            raise ValueError("obstacle activation time must be finite")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObstacleState):
            return NotImplemented
        return (np.array_equal(self.position, other.position)
                and np.array_equal(self.velocity, other.velocity)
                and self.active_from == other.active_from)

    __hash__ = None  # type: ignore[assignment]

    def is_active(self, t: float) -> bool:
        return t >= self.active_from

    def position_at(self, t: float) -> NDArray[np.float64]:
        return self.position + self.velocity * (t - self.active_from)


def active_obstacle_positions(obstacles: list[ObstacleState], t: float) -> NDArray[np.float64]:
    """(m, 3) positions of the obstacles active at ``t``."""
    pts = [ob.position_at(t) for ob in obstacles if ob.is_active(t)]
    return np.array(pts, dtype=np.float64).reshape(-1, 3)


def _as_potentials(pp) -> PairPotentials:
    return pp if isinstance(pp, PairPotentials) else PairPotentials(pp)


def _pair_repulsion(diff: NDArray[np.float64], params: pot.PotentialParams,
                    fallback_sign: float) -> NDArray[np.float64]:
    dist = float(np.linalg.norm(diff))
    if dist < EPS_DIST:
        return np.array([fallback_sign * abs(pot.dphi_dd(EPS_DIST, params)), 0.0, 0.0])
    return -pot.dphi_dd(dist, params) * diff / dist


def collision_input(i: int, positions: ArrayLike, obstacle_positions: ArrayLike,
                    g: CommGraph, pp) -> NDArray[np.float64]:
    """Summed repulsion on agent ``i`` from graph neighbours and active obstacles.

    Coincident agents are pushed apart along ``x``: the lower index towards
    ``+x``, the higher towards ``-x``.  An agent on top of an obstacle goes ``+x``.
    """
    pp = _as_potentials(pp)
    p = np.asarray(positions, dtype=np.float64)
    u = np.zeros(3)
    for j in sorted(neighbors(g, i)):
        u += _pair_repulsion(p[i] - p[j], pp.for_pair(i, j), 1.0 if i < j else -1.0)
    for q in np.asarray(obstacle_positions, dtype=np.float64).reshape(-1, 3):
        u += _pair_repulsion(p[i] - q, pp.default, 1.0)
    return u


def gate_gamma(i: int, positions: ArrayLike, obstacle_positions: ArrayLike,
               g: CommGraph, pp) -> float:
    """Formation gate of agent ``i``: product of smooth steps over detected objects."""
    pp = _as_potentials(pp)
    p = np.asarray(positions, dtype=np.float64)
    gate = 1.0
    for j in sorted(neighbors(g, i)):
        gate *= pot.smooth_step(float(np.linalg.norm(p[i] - p[j])), pp.for_pair(i, j))
    for q in np.asarray(obstacle_positions, dtype=np.float64).reshape(-1, 3):
        gate *= pot.smooth_step(float(np.linalg.norm(p[i] - q)), pp.default)
    return gate


def formation_input(i: int, e_p: ArrayLike, e_v: ArrayLike, g: CommGraph,
                    k: ControllerGains, gate: float = 1.0) -> NDArray[np.float64]:
    """Gated leader-follower consensus term for agent ``i``.

    ``e_p``/``e_v`` are the (n, 3) tracking errors of all agents.
    """
    e_p = np.asarray(e_p, dtype=np.float64)
    e_v = np.asarray(e_v, dtype=np.float64)
    delta = g.leader_mask[i]
    cp = delta * e_p[i]
    cv = delta * e_v[i]
    for j in sorted(neighbors(g, i)):
        a = g.adjacency[i, j]
        cp = cp + a * (e_p[i] - e_p[j])
        cv = cv + a * (e_v[i] - e_v[j])
    return gate * (-k.gamma_p * cp - k.gamma_v * cv)


def control(i: int, t: float, positions: ArrayLike, velocities: ArrayLike,
            obstacles: list[ObstacleState], formation: FormationSpec,
            trajectory: ReferenceTrajectory, g: CommGraph, pp,
            k: ControllerGains) -> NDArray[np.float64]:
    """Saturated acceleration command of agent ``i`` at time ``t``."""
    p = np.asarray(positions, dtype=np.float64)
    v = np.asarray(velocities, dtype=np.float64)
    obs = active_obstacle_positions(obstacles, t)
    e_p, e_v = stacked_errors(p, v, formation, trajectory, t)
    u_c = collision_input(i, p, obs, g, pp)
    gate = gate_gamma(i, p, obs, g, pp)
    u_f = formation_input(i, e_p, e_v, g, k, gate)
    return np.clip(u_c + u_f, -k.u_max, k.u_max)


@dataclass(frozen=True)
class ControlBreakdown:
    """Swarm-wide control evaluation at one instant.

    ``u_f`` already includes the gate.  ``saturated[i]`` is set when any axis
    of agent ``i`` was clipped.  ``degenerate`` lists ``(i, j)`` pairs closer
    than :data:`~cutoff_formation.potential.EPS_DIST`; obstacle partners are
    given as ``"ob<k>"`` labels.
    """

    u: NDArray[np.float64]
    u_c: NDArray[np.float64]
    u_f: NDArray[np.float64]
    gate: NDArray[np.float64]
    saturated: NDArray[np.bool_]
    e_p: NDArray[np.float64]
    e_v: NDArray[np.float64]
    degenerate: tuple = ()


class Controller:
    """Vectorised evaluation of the control law for a fixed graph and gains."""

    def __init__(self, g: CommGraph, pp, k: ControllerGains,
                 formation: FormationSpec, trajectory: ReferenceTrajectory,
                 obstacles: list[ObstacleState] | tuple = ()):
        self.graph = g
        self.potentials = _as_potentials(pp)
        self.gains = k
        self.formation = formation
        self.trajectory = trajectory
        self.obstacles = list(obstacles)
        n = g.n_agents
        if formation.n_agents != n:
            raise ValueError(f"formation has {formation.n_agents} agents, graph has {n}")
        self.n = n
        self.l_plus_delta = build_matrices(g).l_plus_delta
        self.nbr = g.adjacency > 0
        self.dr, self.dc, self.lam, self.mu = self.potentials.arrays(n)
        dflt = self.potentials.default
        self.ob_params = (dflt.d_risky, dflt.d_cautionary, dflt.lam, dflt.mu)
        upper = np.triu(np.ones((n, n), dtype=bool), 1)
        # lower index pushed to +x, higher to -x when two agents coincide
        self.fallback_sign = np.where(upper, 1.0, -1.0)
        self._fallback_mag = np.abs(pot._dphi(EPS_DIST, self.dr, self.dc, self.lam, self.mu))
        self._ob_fallback_mag = abs(float(pot._dphi(EPS_DIST, *self.ob_params)))
        self._const_offsets = formation.position(0.0) if formation.is_constant else None

    def obstacle_positions(self, t: float) -> NDArray[np.float64]:
        return active_obstacle_positions(self.obstacles, t)

    def errors(self, t: float, positions: NDArray[np.float64],
               velocities: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
        r, v0 = self.trajectory.sample(t)
        if self._const_offsets is not None:
            return positions - self._const_offsets - r, velocities - v0
        return stacked_errors(positions, velocities, self.formation, self.trajectory, t)

    def evaluate(self, t: float, positions: NDArray[np.float64],
                 velocities: NDArray[np.float64]) -> ControlBreakdown:
        p = positions
        k = self.gains
        degenerate = []

        diff = p[:, None, :] - p[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        dphi = pot._dphi(dist, self.dr, self.dc, self.lam, self.mu)
        dphi = np.where(self.nbr, dphi, 0.0)
        gates = np.where(self.nbr, pot._g(dist, self.dr, self.dc), 1.0)
        close = self.nbr & (dist < EPS_DIST)
        safe = np.where(close, 1.0, dist)
        np.fill_diagonal(safe, 1.0)
        u_c = np.einsum("ij,ijk->ik", -dphi / safe, diff)
        if np.any(close):
            for i, j in zip(*np.nonzero(close)):
                u_c[i] += np.array([self.fallback_sign[i, j] * self._fallback_mag[i, j], 0.0, 0.0])
                if i < j:
                    degenerate.append((int(i), int(j)))
        gate = gates.prod(axis=1)

        if self.obstacles:
            obs_idx = [m for m, ob in enumerate(self.obstacles) if ob.is_active(t)]
            if obs_idx:
                q = np.array([self.obstacles[m].position_at(t) for m in obs_idx])
                dq = p[:, None, :] - q[None, :, :]
                oq = np.sqrt(np.einsum("ijk,ijk->ij", dq, dq))
                dphi_o = pot._dphi(oq, *self.ob_params)
                close_o = oq < EPS_DIST
                safe_o = np.where(close_o, 1.0, oq)
                u_c = u_c + np.einsum("ij,ijk->ik", -dphi_o / safe_o, dq)
                if np.any(close_o):
                    for i, m in zip(*np.nonzero(close_o)):
                        u_c[i] += np.array([self._ob_fallback_mag, 0.0, 0.0])
                        degenerate.append((int(i), f"ob{obs_idx[m]}"))
                gate = gate * pot._g(oq, self.ob_params[0], self.ob_params[1]).prod(axis=1)

        e_p, e_v = self.errors(t, p, velocities)
        lpd = self.l_plus_delta
        u_f = gate[:, None] * (-k.gamma_p * (lpd @ e_p) - k.gamma_v * (lpd @ e_v))
        raw = u_c + u_f
        u = np.clip(raw, -k.u_max, k.u_max)
        saturated = np.any(np.abs(raw) > k.u_max, axis=1)
        return ControlBreakdown(u, u_c, u_f, gate, saturated, e_p, e_v, tuple(degenerate))

    def acceleration(self, t: float, positions: NDArray[np.float64],
                     velocities: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.evaluate(t, positions, velocities).u
