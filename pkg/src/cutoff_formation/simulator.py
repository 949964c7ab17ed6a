"""Fixed-step closed-loop simulation of the formation controller.

The integrator is classical RK4.  By default the control law is re-evaluated
at every RK4 stage, which integrates the continuous-time closed loop with
fourth-order accuracy.  ``integration="zoh"`` instead holds the command from
the start of each step (the double integrator is then stepped exactly), which
mimics a fixed-rate command stream.

Runs are deterministic: the same :class:`Scenario` always yields
bit-identical traces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .controller import Controller, ControllerGains, ObstacleState
from .errors import CollisionError, InfeasibleGainsError
from .graph import CommGraph
from .potential import PairPotentials, PotentialParams
from .stability import DecayReport, LyapunovFunction, StabilityReport, check_theorem, monitor_decay
from .vehicle import AgentState, FormationSpec, ReferenceTrajectory

log = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_COLLISION_RADIUS = 0.05
INTEGRATION_MODES = ("rk4", "zoh")


@dataclass(frozen=True)
class Scenario:
    """Complete description of one experiment.

    ``mass``, ``gravity`` and ``attitude_mode`` only affect the reported
    thrust/attitude set-points, never the motion.
    """

    graph: CommGraph
    gains: ControllerGains
    potential: PairPotentials
    formation: FormationSpec
    trajectory: ReferenceTrajectory
    initial_states: tuple
    obstacles: tuple = ()
    dt: float = DEFAULT_DT
    t_final: float = 28.0
    collision_radius: float = DEFAULT_COLLISION_RADIUS
    seed: int = 0
    integration: str = "rk4"
    mass: float = 0.033
    gravity: float = 9.81
    attitude_mode: str = "literal"
    name: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.potential, PotentialParams):
            object.__setattr__(self, "potential", PairPotentials(self.potential))
        object.__setattr__(self, "initial_states", tuple(self.initial_states))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        n = self.graph.n_agents
        if self.formation.n_agents != n:
            raise ValueError(f"formation defines {self.formation.n_agents} agents, graph has {n}")
        if len(self.initial_states) != n:
            raise ValueError(f"{len(self.initial_states)} initial states for {n} agents")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.t_final) and self.t_final > 0):
            raise ValueError(f"t_final must be positive, got {self.t_final!r}")
        if self.dt > self.t_final:
            raise ValueError("dt must not exceed t_final")
        if not (self.collision_radius > 0):
            raise ValueError("collision_radius must be positive")
        radii = [self.potential.default.d_risky] + [
            p.d_risky for p in self.potential.overrides.values()]
        if not self.collision_radius < min(radii):
            raise ValueError(f"collision_radius ({self.collision_radius}) must be smaller "
                             f"than every risky radius ({min(radii)})")
        if self.integration not in INTEGRATION_MODES:
            raise ValueError(f"integration must be one of {INTEGRATION_MODES}")
        if self.attitude_mode not in ("literal", "consistent"):
            raise ValueError("attitude_mode must be 'literal' or 'consistent'")
        if not (self.mass > 0 and self.gravity > 0):
            raise ValueError("mass and gravity must be positive")

    @property
    def n_agents(self) -> int:
        return self.graph.n_agents

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def tracking_start(self) -> float:
        """Time at which the reference first starts moving (``inf`` if it never does)."""
        vel = self.trajectory.segment_velocities
        for k, v in enumerate(vel):
            if np.any(v != 0):
                return float(self.trajectory.times[k])
        return math.inf

    def initial_positions(self) -> NDArray[np.float64]:
        return np.array([s.position for s in self.initial_states])

    def initial_velocities(self) -> NDArray[np.float64]:
        return np.array([s.velocity for s in self.initial_states])

    def stability_report(self) -> StabilityReport:
        return check_theorem(self.graph, self.gains, self.potential, self.initial_positions())


@dataclass(frozen=True)
class Event:
    """Something worth logging during a run.

    ``kind`` is one of ``enter_cautionary``, ``exit_cautionary``,
    ``enter_risky``, ``exit_risky``, ``collision``, ``degenerate_distance``,
    ``obstacle_active`` or ``reference_clamped``.  ``a`` is an agent index;
    ``b`` is another agent index, an obstacle label ``"ob<k>"`` or ``None``.
    """

    time: float
    kind: str
    a: int | None = None
    b: int | str | None = None
    distance: float = math.nan


@dataclass
class SimTrace:
    """Time-indexed record of a run; all series share ``t``.

    Shapes: ``p, v, u, u_c, u_f, e_p, e_v`` are (K, n, 3); ``gamma`` and
    ``saturated`` (K, n); ``pair_dist`` (K, P) over ``pairs``;
    ``obstacle_dist`` (K, n, m) with NaN while an obstacle is inactive;
    ``V`` and ``segment`` (K,).
    """

    scenario: Scenario
    t: NDArray[np.float64]
    p: NDArray[np.float64]
    v: NDArray[np.float64]
    u: NDArray[np.float64]
    u_c: NDArray[np.float64]
    u_f: NDArray[np.float64]
    gamma: NDArray[np.float64]
    saturated: NDArray[np.bool_]
    e_p: NDArray[np.float64]
    e_v: NDArray[np.float64]
    V: NDArray[np.float64]
    segment: NDArray[np.int64]
    pairs: list
    pair_dist: NDArray[np.float64]
    obstacle_dist: NDArray[np.float64]
    events: list = field(default_factory=list)
    zeta: float = 0.0
    collision: Event | None = None

    @property
    def n_agents(self) -> int:
        return self.p.shape[1]

    @property
    def halted(self) -> bool:
        return self.collision is not None

    def lyapunov_bound(self) -> NDArray[np.float64]:
        """``V(0) exp(-zeta t)``; NaN everywhere when no decay rate is certified."""
        if self.zeta <= 0 or len(self.V) == 0:
            return np.full_like(self.t, np.nan)
        return self.V[0] * np.exp(-self.zeta * (self.t - self.t[0]))


ZONE_KINDS = (("cautionary", 1), ("risky", 0))


def detect_events(t0: float, t1: float, d0: NDArray[np.float64], d1: NDArray[np.float64],
                  labels: list, d_risky: NDArray[np.float64],
                  d_cautionary: NDArray[np.float64]) -> list[Event]:
    """Zone boundary crossings between two consecutive samples.

    ``d0``/``d1`` are distances of the pairs in ``labels`` at ``t0``/``t1``; a
    NaN in ``d0`` means the object did not exist yet and counts as infinitely
    far.  Crossing times are linearly interpolated.  Being inside a zone means
    ``d <= radius``.
    """
    events = []
    for idx, (a, b) in enumerate(labels):
        prev, cur = d0[idx], d1[idx]
        if np.isnan(cur):
            continue
        for zone, radius in (("cautionary", d_cautionary[idx]), ("risky", d_risky[idx])):
            if np.isnan(prev):
                if cur <= radius:
                    events.append(Event(t1, f"enter_{zone}", a, b, float(cur)))
                continue
            if prev > radius >= cur:
                kind = f"enter_{zone}"
            elif prev <= radius < cur:
                kind = f"exit_{zone}"
            else:
                continue
            tc = t0 + (radius - prev) / (cur - prev) * (t1 - t0)
            events.append(Event(float(tc), kind, a, b, float(radius)))
    events.sort(key=lambda e: e.time)
    return events


def _segment_index(traj: ReferenceTrajectory, t: float) -> int:
    return int(np.searchsorted(traj.times, t, side="right"))


def run(sc: Scenario, *, force: bool = False) -> SimTrace:
    """Simulate ``sc`` from 0 to ``t_final``.

    Raises :class:`InfeasibleGainsError` when the stability conditions fail,
    unless ``force`` is set, and :class:`CollisionError` (carrying the trace up
    to the offending step) when any distance drops below ``collision_radius``.
    """
    report = sc.stability_report()
    if not report.feasible and not force:
        raise InfeasibleGainsError("scenario fails the stability conditions "
                                   "(pass force=True to simulate anyway)", report)

    n = sc.n_agents
    ctrl = Controller(sc.graph, sc.potential, sc.gains, sc.formation, sc.trajectory,
                      sc.obstacles)
    lyap = LyapunovFunction(sc.graph, sc.gains)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    pi = np.array([i for i, _ in pairs], dtype=int)
    pj = np.array([j for _, j in pairs], dtype=int)
    pair_params = [sc.potential.for_pair(i, j) for i, j in pairs]
    pair_dr = np.array([p.d_risky for p in pair_params])
    pair_dc = np.array([p.d_cautionary for p in pair_params])
    obstacles = list(sc.obstacles)
    m = len(obstacles)
    ob_labels = [(i, f"ob{k}") for i in range(n) for k in range(m)]
    ob_dr = np.full(n * m, sc.potential.default.d_risky)
    ob_dc = np.full(n * m, sc.potential.default.d_cautionary)

    steps = sc.n_steps
    size = steps + 1
    tr = SimTrace(
        scenario=sc,
        t=np.zeros(size), p=np.zeros((size, n, 3)), v=np.zeros((size, n, 3)),
        u=np.zeros((size, n, 3)), u_c=np.zeros((size, n, 3)), u_f=np.zeros((size, n, 3)),
        gamma=np.zeros((size, n)), saturated=np.zeros((size, n), dtype=bool),
        e_p=np.zeros((size, n, 3)), e_v=np.zeros((size, n, 3)), V=np.zeros(size),
        segment=np.zeros(size, dtype=np.int64), pairs=pairs,
        pair_dist=np.zeros((size, len(pairs))), obstacle_dist=np.full((size, n, m), np.nan),
        zeta=report.zeta,
    )

    pos = sc.initial_positions()
    vel = sc.initial_velocities()
    dt = sc.dt
    prev_pd = prev_od = None
    clamped_logged = False
    active = [False] * m

    def accel(t, p_, v_):
        return ctrl.evaluate(t, p_, v_).u

    for k in range(size):
        t = k * dt
        cb = ctrl.evaluate(t, pos, vel)
        tr.t[k] = t
        tr.p[k] = pos
        tr.v[k] = vel
        tr.u[k] = cb.u
        tr.u_c[k] = cb.u_c
        tr.u_f[k] = cb.u_f
        tr.gamma[k] = cb.gate
        tr.saturated[k] = cb.saturated
        tr.e_p[k] = cb.e_p
        tr.e_v[k] = cb.e_v
        tr.V[k] = lyap(cb.e_p, cb.e_v)
        tr.segment[k] = _segment_index(sc.trajectory, t)

        diff = pos[pi] - pos[pj]
        pd = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        tr.pair_dist[k] = pd
        for ob_k, ob in enumerate(obstacles):
            if ob.is_active(t):
                if not active[ob_k]:
                    active[ob_k] = True
                    tr.events.append(Event(t, "obstacle_active", None, f"ob{ob_k}"))
                tr.obstacle_dist[k, :, ob_k] = np.linalg.norm(pos - ob.position_at(t), axis=1)
        od = tr.obstacle_dist[k].reshape(-1)

        if not clamped_logged and sc.trajectory.beyond_horizon(t):
            clamped_logged = True
            tr.events.append(Event(t, "reference_clamped"))
        for a, b in cb.degenerate:
            tr.events.append(Event(t, "degenerate_distance", a, b))
        if k > 0:
            tr.events.extend(detect_events(t - dt, t, prev_pd, pd, pairs, pair_dr, pair_dc))
            if m:
                tr.events.extend(detect_events(t - dt, t, prev_od, od, ob_labels, ob_dr, ob_dc))
        elif m:
            tr.events.extend(detect_events(t, t, np.full_like(od, np.nan), od,
                                           ob_labels, ob_dr, ob_dc))
        prev_pd, prev_od = pd, od

        hit = _first_collision(t, pd, pairs, od, ob_labels, sc.collision_radius)
        if hit is not None:
            tr.events.append(hit)
            tr.collision = hit
            _truncate(tr, k + 1)
            raise CollisionError(hit.time, (hit.a, hit.b), hit.distance, tr)

        if k == steps:
            break
        if sc.integration == "zoh":
            u = cb.u
            pos = pos + vel * dt + 0.5 * u * dt * dt
            vel = vel + u * dt
        else:
            h = 0.5 * dt
            k1p, k1v = vel, cb.u
            k2p = vel + h * k1v
            k2v = accel(t + h, pos + h * k1p, k2p)
            k3p = vel + h * k2v
            k3v = accel(t + h, pos + h * k2p, k3p)
            k4p = vel + dt * k3v
            k4v = accel(t + dt, pos + dt * k3p, k4p)
            pos = pos + (dt / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
            vel = vel + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return tr


def _first_collision(t, pd, pairs, od, ob_labels, radius) -> Event | None:
    candidates = []
    if pd.size and pd.min() < radius:
        idx = int(np.argmin(pd))
        candidates.append(Event(t, "collision", pairs[idx][0], pairs[idx][1], float(pd[idx])))
    if od.size and np.nanmin(od, initial=np.inf) < radius:
        idx = int(np.nanargmin(od))
        candidates.append(Event(t, "collision", ob_labels[idx][0], ob_labels[idx][1],
                                float(od[idx])))
    if not candidates:
        return None
    return min(candidates, key=lambda e: e.distance)


def _truncate(tr: SimTrace, size: int) -> None:
    for name in ("t", "p", "v", "u", "u_c", "u_f", "gamma", "saturated", "e_p", "e_v", "V",
                 "segment", "pair_dist", "obstacle_dist"):
        setattr(tr, name, getattr(tr, name)[:size])


@dataclass
class Metrics:
    min_pair_distance: float
    min_pair_distance_time: float
    per_pair_min: dict
    min_obstacle_distance: float | None
    min_obstacle_distance_time: float | None
    per_obstacle_min: dict
    formation_error: NDArray[np.float64]
    formation_time: float | None
    settling_time: float | None
    tolerance: float
    decay: DecayReport
    n_events: int
    collision: Event | None

    def as_dict(self) -> dict:
        return {
            "min_pair_distance": self.min_pair_distance,
            "min_pair_distance_time": self.min_pair_distance_time,
            "per_pair_min": {f"{i}-{j}": v for (i, j), v in self.per_pair_min.items()},
            "min_obstacle_distance": self.min_obstacle_distance,
            "min_obstacle_distance_time": self.min_obstacle_distance_time,
            "per_obstacle_min": {f"{i}-{b}": v for (i, b), v in self.per_obstacle_min.items()},
            "final_formation_error": float(self.formation_error[-1]),
            "formation_time": self.formation_time,
            "settling_time": self.settling_time,
            "settling_tolerance": self.tolerance,
            "decay_applicable": self.decay.applicable,
            "decay_max_ratio": self.decay.max_ratio,
            "zeta": self.decay.zeta,
            "n_events": self.n_events,
            "collision": None if self.collision is None else {
                "time": self.collision.time, "a": self.collision.a, "b": self.collision.b,
                "distance": self.collision.distance},
        }


def metrics(trace: SimTrace, tol: float = 0.05) -> Metrics:
    """Summary statistics of a (possibly halted) trace.

    ``formation_error`` is ``max_i ||e_p,i(t)||`` per step.  ``formation_time``
    is the first instant every agent is within ``tol`` of its slot;
    ``settling_time`` the instant after which that stays true to the end.
    Obstacle entries are ``None`` when the scenario has no obstacles.
    """
    t = trace.t
    if trace.pair_dist.shape[1]:
        idx = np.unravel_index(np.argmin(trace.pair_dist), trace.pair_dist.shape)
        min_pd = float(trace.pair_dist[idx])
        min_pd_t = float(t[idx[0]])
        per_pair = {pair: float(trace.pair_dist[:, c].min()) for c, pair in enumerate(trace.pairs)}
    else:
        min_pd, min_pd_t, per_pair = math.inf, math.nan, {}

    od = trace.obstacle_dist
    min_od = min_od_t = None
    per_ob = {}
    if od.shape[2] and np.any(~np.isnan(od)):
        flat = np.where(np.isnan(od), np.inf, od)
        idx = np.unravel_index(np.argmin(flat), flat.shape)
        min_od = float(flat[idx])
        min_od_t = float(t[idx[0]])
        for i in range(od.shape[1]):
            for kk in range(od.shape[2]):
                col = od[:, i, kk]
                if np.any(~np.isnan(col)):
                    per_ob[(i, f"ob{kk}")] = float(np.nanmin(col))

    err = np.max(np.linalg.norm(trace.e_p, axis=2), axis=1)
    inside = err < tol
    formation_time = float(t[np.argmax(inside)]) if np.any(inside) else None
    settling_time = None
    if inside.size and inside[-1]:
        outside = np.flatnonzero(~inside)
        settling_time = float(t[0]) if outside.size == 0 else float(t[outside[-1] + 1])

    sc = trace.scenario
    decay = monitor_decay(trace, sc.graph, sc.gains)
    return Metrics(min_pd, min_pd_t, per_pair, min_od, min_od_t, per_ob, err,
                   formation_time, settling_time, tol, decay, len(trace.events),
                   trace.collision)


def random_scenario(n_agents: int, seed: int, *, spread: float = 3.0,
                    t_final: float = 10.0, dt: float = 1e-2) -> Scenario:
    """A complete-graph hover scenario with random, well separated start positions.

    Used for randomized checks; offsets sit on a circle so the final formation
    keeps every pair outside the cautionary radius.
    """
    rng = np.random.default_rng(seed)
    params = PotentialParams(0.4, 0.7, 1e-3, 0.5)
    radius = max(1.0, 0.8 * n_agents / math.pi)
    ang = 2 * math.pi * np.arange(n_agents) / n_agents
    offsets = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_agents)])
    starts: list[NDArray] = []
    while len(starts) < n_agents:
        cand = rng.uniform(-spread, spread, size=3) * np.array([1.0, 1.0, 0.2])
        if all(np.linalg.norm(cand - s) > params.d_cautionary for s in starts):
            starts.append(cand)
    return Scenario(
        graph=CommGraph.from_topology("complete", n_agents),
        gains=ControllerGains(2.0, 3.0, 0.2, 1.3, 1.3),
        potential=PairPotentials(params),
        formation=FormationSpec.constant(offsets),
        trajectory=ReferenceTrajectory.hold([0.0, 0.0, 1.0], t_final),
        initial_states=tuple(AgentState(s + np.array([0, 0, 1.0]), np.zeros(3)) for s in starts),
        dt=dt, t_final=t_final, seed=seed, name=f"random-{n_agents}-{seed}",
    )
