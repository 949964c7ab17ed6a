"""Reading and writing scenario documents (TOML).

The format is documented in ``docs/scenario-format.md``.  Parsing is strict:
unknown keys are rejected, every required key must be present and every
error names the dotted key path it refers to.
"""

from __future__ import annotations

import math
import sys
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib as tomli
else:
    import tomli

from .controller import DEFAULT_U_MAX, ControllerGains, ObstacleState
from .errors import InvalidGraphError, ScenarioError
from .graph import TOPOLOGIES, CommGraph, is_connected
from .potential import PairPotentials, PotentialParams
from .simulator import DEFAULT_COLLISION_RADIUS, DEFAULT_DT, INTEGRATION_MODES, Scenario
from .vehicle import ATTITUDE_MODES, AgentState, FormationSpec, ReferenceTrajectory

SECTIONS = {"graph", "gains", "potential", "formation", "trajectory", "agents", "obstacles",
            "sim", "name"}
REQUIRED_SECTIONS = ("graph", "gains", "potential", "formation", "trajectory", "agents", "sim")

BUILTIN = ("demo_paper", "linear_regime")


# -- small typed accessors -------------------------------------------------

class _Section:
    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ScenarioError("expected a table", path)
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def key(self, name: str) -> str:
        return f"{self.path}.{name}"

    def has(self, name: str) -> bool:
        return name in self.data

    def raw(self, name: str, default: Any = ...) -> Any:
        self.used.add(name)
        if name not in self.data:
            if default is ...:
                raise ScenarioError("missing required key", self.key(name))
            return default
        return self.data[name]

    def number(self, name: str, default: Any = ..., *, positive: bool = False,
               nonneg: bool = False) -> float:
        val = self.raw(name, default)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ScenarioError(f"expected a number, got {val!r}", self.key(name))
        val = float(val)
        if not math.isfinite(val):
            raise ScenarioError("value must be finite", self.key(name))
        if positive and val <= 0:
            raise ScenarioError(f"must be > 0, got {val}", self.key(name))
        if nonneg and val < 0:
            raise ScenarioError(f"must be >= 0, got {val}", self.key(name))
        return val

    def string(self, name: str, default: Any = ..., choices: tuple | None = None) -> str:
        val = self.raw(name, default)
        if not isinstance(val, str):
            raise ScenarioError(f"expected a string, got {val!r}", self.key(name))
        if choices is not None and val not in choices:
            raise ScenarioError(f"must be one of {list(choices)}, got {val!r}", self.key(name))
        return val

    def integer(self, name: str, default: Any = ...) -> int:
        val = self.raw(name, default)
        if isinstance(val, bool) or not isinstance(val, int):
            raise ScenarioError(f"expected an integer, got {val!r}", self.key(name))
        return val

    def array(self, name: str, shape: tuple, default: Any = ...) -> np.ndarray:
        """Numeric array; ``None`` entries in ``shape`` accept any length."""
        val = self.raw(name, default)
        return _to_array(val, shape, self.key(name))

    def finish(self) -> None:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ScenarioError(f"unknown key(s): {', '.join(extra)}", self.path)


def _to_array(val: Any, shape: tuple, path: str) -> np.ndarray:
    def check(x, depth):
        if isinstance(x, list):
            for item in x:
                check(item, depth + 1)
        elif isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ScenarioError(f"expected numbers, found {x!r}", path)

    if not isinstance(val, list):
        raise ScenarioError(f"expected an array, got {val!r}", path)
    check(val, 0)
    try:
        arr = np.array(val, dtype=np.float64)
    except ValueError as exc:
        raise ScenarioError(f"ragged array ({exc})", path) from None
    if arr.ndim != len(shape) or any(s is not None and s != a for s, a in zip(shape, arr.shape)):
        want = "x".join("n" if s is None else str(s) for s in shape)
        raise ScenarioError(f"expected an array of shape {want}, got {arr.shape}", path)
    if not np.all(np.isfinite(arr)):
        raise ScenarioError("array entries must be finite", path)
    return arr


# -- parsing ---------------------------------------------------------------

def _parse_graph(sec: _Section) -> CommGraph:
    if sec.has("adjacency") and sec.has("topology"):
        raise ScenarioError("give either 'adjacency' or 'topology', not both", sec.path)
    if sec.has("adjacency"):
        adj = sec.array("adjacency", (None, None))
        n = adj.shape[0]
        if sec.has("n_agents") and sec.integer("n_agents") != n:
            raise ScenarioError("n_agents disagrees with adjacency size", sec.key("n_agents"))
        if sec.has("weight"):
            raise ScenarioError("'weight' only applies to named topologies", sec.key("weight"))
    else:
        name = sec.string("topology", choices=TOPOLOGIES)
        n = sec.integer("n_agents")
        if n < 1:
            raise ScenarioError("must be >= 1", sec.key("n_agents"))
        weight = sec.number("weight", 1.0, positive=True)
        adj = CommGraph.from_topology(name, n, weight).adjacency
    leaders = sec.array("leaders", (n,), np.ones(n).tolist())
    sec.finish()
    try:
        g = CommGraph(adj, leaders)
    except InvalidGraphError as exc:
        raise ScenarioError(str(exc), sec.path) from None
    if not g.has_leader:
        raise ScenarioError("at least one agent must know the reference (leaders)",
                            sec.key("leaders"))
    if not is_connected(g):
        raise ScenarioError("communication graph is not connected", sec.path)
    return g


def _parse_gains(sec: _Section) -> ControllerGains:
    vals = {k: sec.number(k, positive=True)
            for k in ("gamma_p", "gamma_v", "gamma", "theta_p", "theta_v")}
    vals["u_max"] = sec.number("u_max", DEFAULT_U_MAX, positive=True)
    sec.finish()
    return ControllerGains(**vals)


def _potential_params(sec: _Section) -> PotentialParams:
    dr = sec.number("d_risky", positive=True)
    dc = sec.number("d_cautionary", positive=True)
    lam = sec.number("lambda", positive=True)
    mu = sec.number("mu", positive=True)
    if not dr < dc:
        raise ScenarioError(f"d_risky ({dr}) must be smaller than d_cautionary ({dc})",
                            sec.key("d_risky"))
    if not lam < mu:
        raise ScenarioError(f"lambda ({lam}) must be smaller than mu ({mu})",
                            sec.key("lambda"))
    return PotentialParams(dr, dc, lam, mu)


def _parse_potential(sec: _Section, n: int) -> PairPotentials:
    default = _potential_params(sec)
    overrides = {}
    pairs = sec.raw("pairs", [])
    if not isinstance(pairs, list):
        raise ScenarioError("expected an array of tables", sec.key("pairs"))
    for idx, item in enumerate(pairs):
        sub = _Section(item, f"{sec.path}.pairs[{idx}]")
        agents = sub.array("agents", (2,))
        i, j = (int(x) for x in agents)
        if not (np.array_equal(agents, [i, j]) and 0 <= i < n and 0 <= j < n and i != j):
            raise ScenarioError("agents must be two distinct agent indices", sub.key("agents"))
        overrides[(i, j)] = _potential_params(sub)
        sub.finish()
    sec.finish()
    return PairPotentials(default, overrides)


def _parse_formation(sec: _Section, n: int) -> FormationSpec:
    if sec.has("offsets") == sec.has("coefficients"):
        raise ScenarioError("give exactly one of 'offsets' or 'coefficients'", sec.path)
    if sec.has("offsets"):
        coeffs = sec.array("offsets", (n, 3))[:, None, :]
    else:
        coeffs = sec.array("coefficients", (n, None, 3))
    vb = sec.number("velocity_bound", positive=True)
    ab = sec.number("acceleration_bound", positive=True)
    sec.finish()
    return FormationSpec(coeffs, vb, ab)


def _parse_trajectory(sec: _Section) -> ReferenceTrajectory:
    wp = sec.array("waypoints", (None, 4))
    sec.finish()
    try:
        return ReferenceTrajectory(wp[:, 0], wp[:, 1:])
    except ValueError as exc:
        raise ScenarioError(str(exc), sec.key("waypoints")) from None


def _parse_agents(sec: _Section, n: int) -> tuple:
    pos = sec.array("positions", (n, 3))
    vel = sec.array("velocities", (n, 3), np.zeros((n, 3)).tolist())
    sec.finish()
    return tuple(AgentState(p, v) for p, v in zip(pos, vel))


def _parse_obstacles(items: Any) -> tuple:
    if not isinstance(items, list):
        raise ScenarioError("expected an array of tables ([[obstacles]])", "obstacles")
    out = []
    for idx, item in enumerate(items):
        sec = _Section(item, f"obstacles[{idx}]")
        pos = sec.array("position", (3,))
        vel = sec.array("velocity", (3,), [0.0, 0.0, 0.0])
        start = sec.number("active_from", 0.0, nonneg=True)
        sec.finish()
        out.append(ObstacleState(pos, vel, start))
    return tuple(out)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises :class:`ScenarioError` with the offending key path (or line and
    column for syntax errors).
    """
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        msg = str(exc).split(" (at line")[0]
        raise ScenarioError(msg, line=getattr(exc, "lineno", None),
                            column=getattr(exc, "colno", None)) from None

    extra = sorted(set(doc) - SECTIONS)
    if extra:
        raise ScenarioError(f"unknown section(s): {', '.join(extra)}")
    for name in REQUIRED_SECTIONS:
        if name not in doc:
            raise ScenarioError("missing required section", name)
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ScenarioError("expected a string", "name")

    graph = _parse_graph(_Section(doc["graph"], "graph"))
    n = graph.n_agents
    gains = _parse_gains(_Section(doc["gains"], "gains"))
    potential = _parse_potential(_Section(doc["potential"], "potential"), n)
    formation = _parse_formation(_Section(doc["formation"], "formation"), n)
    trajectory = _parse_trajectory(_Section(doc["trajectory"], "trajectory"))
    states = _parse_agents(_Section(doc["agents"], "agents"), n)
    obstacles = _parse_obstacles(doc.get("obstacles", []))

    sim = _Section(doc["sim"], "sim")
    t_final = sim.number("t_final", positive=True)
    dt = sim.number("dt", DEFAULT_DT, positive=True)
    radius = sim.number("collision_radius", DEFAULT_COLLISION_RADIUS, positive=True)
    seed = sim.integer("seed", 0)
    integration = sim.string("integration", "rk4", INTEGRATION_MODES)
    mass = sim.number("mass", 0.033, positive=True)
    gravity = sim.number("gravity", 9.81, positive=True)
    attitude_mode = sim.string("attitude_mode", "literal", ATTITUDE_MODES)
    sim.finish()

    if dt > t_final:
        raise ScenarioError("dt must not exceed t_final", "sim.dt")
    if abs(round(t_final / dt) * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ScenarioError("t_final must be a whole number of steps", "sim.t_final")
    radii = [potential.default.d_risky] + [p.d_risky for p in potential.overrides.values()]
    if not radius < min(radii):
        raise ScenarioError(f"must be smaller than every risky radius ({min(radii)})",
                            "sim.collision_radius")
    try:
        formation.check_bounds(t_final)
    except ValueError as exc:
        raise ScenarioError(str(exc), "formation") from None

    return Scenario(graph=graph, gains=gains, potential=potential, formation=formation,
                    trajectory=trajectory, initial_states=states, obstacles=obstacles,
                    dt=dt, t_final=t_final, collision_radius=radius, seed=seed,
                    integration=integration, mass=mass, gravity=gravity,
                    attitude_mode=attitude_mode, name=name)


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text(encoding="utf-8"))


def builtin_scenario_text(name: str) -> str:
    if name not in BUILTIN:
        raise KeyError(f"unknown built-in scenario {name!r}; choose from {BUILTIN}")
    path = resources.files("cutoff_formation") / "scenarios" / f"{name}.toml"
    return path.read_text(encoding="utf-8")


def builtin_scenario(name: str = "demo_paper") -> Scenario:
    return parse_scenario(builtin_scenario_text(name))


# -- printing --------------------------------------------------------------

def _params_dict(p: PotentialParams) -> dict:
    return {"d_risky": p.d_risky, "d_cautionary": p.d_cautionary, "lambda": p.lam, "mu": p.mu}


def _rows(a: np.ndarray) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def scenario_to_dict(sc: Scenario) -> dict:
    potential = _params_dict(sc.potential.default)
    if sc.potential.overrides:
        potential["pairs"] = [{"agents": [i, j], **_params_dict(p)}
                              for (i, j), p in sorted(sc.potential.overrides.items())]
    if sc.formation.coeffs.shape[1] == 1:
        formation = {"offsets": _rows(sc.formation.coeffs[:, 0, :])}
    else:
        formation = {"coefficients": _rows(sc.formation.coeffs)}
    formation["velocity_bound"] = sc.formation.velocity_bound
    formation["acceleration_bound"] = sc.formation.acceleration_bound
    k = sc.gains
    doc = {
        "name": sc.name,
        "graph": {"adjacency": _rows(sc.graph.adjacency),
                  "leaders": [int(x) for x in sc.graph.leader_mask]},
        "gains": {"gamma": k.gamma, "gamma_p": k.gamma_p, "gamma_v": k.gamma_v,
                  "theta_p": k.theta_p, "theta_v": k.theta_v, "u_max": k.u_max},
        "potential": potential,
        "formation": formation,
        "trajectory": {"waypoints": _rows(np.column_stack([sc.trajectory.times,
                                                           sc.trajectory.points]))},
        "agents": {"positions": _rows(sc.initial_positions()),
                   "velocities": _rows(sc.initial_velocities())},
        "sim": {"t_final": sc.t_final, "dt": sc.dt, "collision_radius": sc.collision_radius,
                "seed": sc.seed, "integration": sc.integration, "mass": sc.mass,
                "gravity": sc.gravity, "attitude_mode": sc.attitude_mode},
    }
    if sc.obstacles:
        doc["obstacles"] = [{"position": _rows(ob.position), "velocity": _rows(ob.velocity),
                             "active_from": ob.active_from} for ob in sc.obstacles]
    return doc


def dump_scenario(sc: Scenario) -> str:
    """Serialise a scenario so that ``parse_scenario(dump_scenario(sc)) == sc``."""
    return tomli_w.dumps(scenario_to_dict(sc))
