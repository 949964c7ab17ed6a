"""Outer-loop vehicle model, formation shape and reference trajectory.

Each quadrotor is a double integrator ``p' = v, v' = u`` in the world frame;
the inner attitude loop is assumed fast enough that ``u`` is realised
immediately.  :func:`attitude_reference` maps ``u`` to the thrust/attitude
set-points an inner loop would receive but never feeds back into the motion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import UnsupportedAttitudeError

log = logging.getLogger(__name__)

GRAVITY = 9.81
ATTITUDE_MODES = ("literal", "consistent")


def _vec3(x: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.array(x, dtype=np.float64).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AgentState:
    position: NDArray[np.float64]
    velocity: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AgentState):
            return NotImplemented
        return (np.array_equal(self.position, other.position)
                and np.array_equal(self.velocity, other.velocity))

    __hash__ = None  # type: ignore[assignment]


def vector_field(p: ArrayLike, v: ArrayLike, u: ArrayLike) -> tuple[NDArray, NDArray]:
    """Right-hand side of the double integrator: ``(p', v') = (v, u)``."""
    return np.asarray(v, dtype=np.float64), np.asarray(u, dtype=np.float64)


def step_dynamics(s: AgentState, u: ArrayLike, dt: float) -> AgentState:
    """Advance one agent by ``dt`` with ``u`` held constant.

    With a constant input the double integrator is integrated exactly, so this
    matches any Runge-Kutta scheme of order >= 2 to rounding.
    """
    u = _vec3(u, "u")
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt!r}")
    p = s.position + s.velocity * dt + 0.5 * u * dt * dt
    v = s.velocity + u * dt
    return AgentState(p, v)


@dataclass(frozen=True)
class AttitudeReference:
    thrust: float
    roll: float
    pitch: float
    yaw: float
    mass: float
    gravity: float
    clamped: bool = False


def attitude_reference(u: ArrayLike, psi: float = 0.0, mass: float = 0.033,
                       gravity: float = GRAVITY, mode: str = "literal") -> AttitudeReference:
    """Thrust and roll/pitch set-points realising the acceleration ``u``.

    ``mode="literal"`` evaluates the roll numerator with squared ``u_x``/``u_y``
    (the historical form of this mapping); ``mode="consistent"`` uses the
    unsquared components, which is the true inverse of the thrust-direction
    model.  An arcsin argument outside ``[-1, 1]`` is clamped and
    ``clamped`` is set on the result.
    """
    if mode not in ATTITUDE_MODES:
        raise ValueError(f"unknown attitude mode {mode!r}")
    ux, uy, uz = (float(c) for c in _vec3(u, "u"))
    if uz + gravity <= 0:
        raise UnsupportedAttitudeError(
            f"u_z + g = {uz + gravity:.6g} <= 0 would require inverted flight")
    thrust = mass * math.sqrt(ux * ux + uy * uy + (uz + gravity) ** 2)
    if mode == "literal":
        num = mass * ux**2 * math.sin(psi) - mass * uy**2 * math.cos(psi)
    else:
        num = mass * ux * math.sin(psi) - mass * uy * math.cos(psi)
    arg = num / thrust
    clamped = abs(arg) > 1.0
    roll = math.asin(max(-1.0, min(1.0, arg)))
    pitch = math.atan((ux * math.cos(psi) + uy * math.sin(psi)) / (uz + gravity))
    return AttitudeReference(thrust, roll, pitch, psi, mass, gravity, clamped)


def attitude_table(u: ArrayLike, psi: float = 0.0, mass: float = 0.033,
                   gravity: float = GRAVITY, mode: str = "literal") -> NDArray[np.float64]:
    """Vectorised :func:`attitude_reference` over rows of ``u`` (shape (k, 3)).

    Returns (k, 5) rows of ``thrust, roll, pitch, yaw, clamped``.  Rows that
    would need inverted flight (``u_z + g <= 0``) are NaN with ``clamped = 0``.
    """
    if mode not in ATTITUDE_MODES:
        raise ValueError(f"unknown attitude mode {mode!r}")
    u = np.asarray(u, dtype=np.float64).reshape(-1, 3)
    ux, uy, uz = u[:, 0], u[:, 1], u[:, 2] + gravity
    ok = uz > 0
    thrust = mass * np.sqrt(ux * ux + uy * uy + uz * uz)
    if mode == "literal":
        num = mass * ux**2 * math.sin(psi) - mass * uy**2 * math.cos(psi)
    else:
        num = mass * ux * math.sin(psi) - mass * uy * math.cos(psi)
    arg = num / thrust
    clamped = np.abs(arg) > 1.0
    roll = np.arcsin(np.clip(arg, -1.0, 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        pitch = np.arctan((ux * math.cos(psi) + uy * math.sin(psi)) / uz)
    out = np.column_stack([thrust, roll, pitch, np.full_like(thrust, psi),
                           clamped.astype(np.float64)])
    out[~ok, :4] = np.nan
    out[~ok, 4] = 0.0
    return out


def thrust_acceleration(ref: AttitudeReference) -> NDArray[np.float64]:
    """World-frame acceleration produced by a thrust/attitude set-point (ZYX Euler angles)."""
    phi, theta, psi = ref.roll, ref.pitch, ref.yaw
    a = ref.thrust / ref.mass
    return np.array([
        a * (math.cos(phi) * math.sin(theta) * math.cos(psi) + math.sin(phi) * math.sin(psi)),
        a * (math.cos(phi) * math.sin(theta) * math.sin(psi) - math.sin(phi) * math.cos(psi)),
        a * math.cos(phi) * math.cos(theta) - ref.gravity,
    ])


@dataclass(frozen=True, eq=False)
class FormationSpec:
    """Per-agent polynomial offsets ``f_p,i(t) = sum_k coeffs[i, k] * t**k``.

    Attributes:
        coeffs: (n_agents, degree + 1, 3) polynomial coefficients in m, m/s, ...
        velocity_bound: strict bound on ``||f_v,i(t)||`` (m/s).
        acceleration_bound: strict bound on ``||f_a,i(t)||`` (m/s^2).
    """

    coeffs: NDArray[np.float64]
    velocity_bound: float
    acceleration_bound: float

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=np.float64)
        if c.ndim != 3 or c.shape[2] != 3 or c.shape[1] < 1:
            raise ValueError(f"coefficients must have shape (n, k, 3), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("formation coefficients must be finite")
        for name in ("velocity_bound", "acceleration_bound"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, offsets: ArrayLike, velocity_bound: float = 1.0,
                 acceleration_bound: float = 1.0) -> FormationSpec:
        off = np.asarray(offsets, dtype=np.float64)
        return cls(off[:, None, :], velocity_bound, acceleration_bound)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FormationSpec):
            return NotImplemented
        return (np.array_equal(self.coeffs, other.coeffs)
                and self.velocity_bound == other.velocity_bound
                and self.acceleration_bound == other.acceleration_bound)

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_agents(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_constant(self) -> bool:
        return self.coeffs.shape[1] == 1 or not np.any(self.coeffs[:, 1:, :])

    def _eval(self, t: float, order: int) -> NDArray[np.float64]:
        k = self.coeffs.shape[1]
        out = np.zeros((self.n_agents, 3))
        for j in range(order, k):
            factor = math.perm(j, order)
            out += factor * self.coeffs[:, j, :] * t ** (j - order)
        return out

    def position(self, t: float) -> NDArray[np.float64]:
        """(n, 3) offsets at time ``t``."""
        return self._eval(t, 0)

    def velocity(self, t: float) -> NDArray[np.float64]:
        return self._eval(t, 1)

    def acceleration(self, t: float) -> NDArray[np.float64]:
        return self._eval(t, 2)

    def check_bounds(self, t_final: float, rate: float = 1000.0) -> None:
        """Raise ``ValueError`` if the derivative bounds fail on a ``rate`` Hz grid over [0, t_final]."""
        if self.is_constant:
            return
        ts = np.linspace(0.0, t_final, int(round(t_final * rate)) + 1)
        for t in ts:
            vmax = float(np.max(np.linalg.norm(self.velocity(t), axis=1)))
            if not vmax < self.velocity_bound:
                raise ValueError(f"formation velocity {vmax:.6g} m/s at t={t:.6g} s "
                                 f"exceeds bound {self.velocity_bound}")
            amax = float(np.max(np.linalg.norm(self.acceleration(t), axis=1)))
            if not amax < self.acceleration_bound:
                raise ValueError(f"formation acceleration {amax:.6g} m/s^2 at t={t:.6g} s "
                                 f"exceeds bound {self.acceleration_bound}")


@dataclass(frozen=True, eq=False)
class ReferenceTrajectory:
    """Piecewise-linear formation origin through timed waypoints.

    Between consecutive waypoints the reference moves with constant velocity.
    Before the first waypoint and after the last one it holds still.
    """

    times: NDArray[np.float64]
    points: NDArray[np.float64]

    def __post_init__(self) -> None:
        t = np.array(self.times, dtype=np.float64).reshape(-1)
        x = np.array(self.points, dtype=np.float64)
        if t.size == 0:
            raise ValueError("trajectory needs at least one waypoint")
        if x.shape != (t.size, 3):
            raise ValueError(f"waypoint positions must have shape ({t.size}, 3), got {x.shape}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise ValueError("waypoints must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        t.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)

    @classmethod
    def hold(cls, point: ArrayLike, t_end: float) -> ReferenceTrajectory:
        """A stationary reference on ``[0, t_end]``."""
        p = np.asarray(point, dtype=np.float64)
        return cls(np.array([0.0, t_end]), np.stack([p, p]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ReferenceTrajectory):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.points, other.points)

    __hash__ = None  # type: ignore[assignment]

    @property
    def segment_velocities(self) -> NDArray[np.float64]:
        """(W-1, 3) constant velocity of each segment."""
        return np.diff(self.points, axis=0) / np.diff(self.times)[:, None]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def beyond_horizon(self, t: float) -> bool:
        return t > self.times[-1]

    def sample(self, t: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Reference position ``r(t)`` and velocity ``v0(t)``.

        At a knot the outgoing segment's velocity is reported.
        """
        if t < self.times[0]:
            return self.points[0].copy(), np.zeros(3)
        if t >= self.times[-1]:
            return self.points[-1].copy(), np.zeros(3)
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        v0 = (self.points[k + 1] - self.points[k]) / (self.times[k + 1] - self.times[k])
        return self.points[k] + v0 * (t - self.times[k]), v0


def tracking_errors(s: AgentState, formation: FormationSpec, trajectory: ReferenceTrajectory,
                    i: int, t: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Position and velocity error of agent ``i`` w.r.t. its slot in the formation."""
    if trajectory.beyond_horizon(t):
        log.warning("t=%.6g s is past the last waypoint (%.6g s); reference clamped",
                    t, trajectory.t_end)
    r, v0 = trajectory.sample(t)
    e_p = s.position - formation.position(t)[i] - r
    e_v = s.velocity - formation.velocity(t)[i] - v0
    return e_p, e_v


def stacked_errors(positions: NDArray[np.float64], velocities: NDArray[np.float64],
                   formation: FormationSpec, trajectory: ReferenceTrajectory,
                   t: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(n, 3) error arrays for every agent at time ``t``."""
    r, v0 = trajectory.sample(t)
    return positions - formation.position(t) - r, velocities - formation.velocity(t) - v0
