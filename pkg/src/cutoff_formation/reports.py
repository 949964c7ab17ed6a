"""CSV and text reports for a simulation trace.

Every file is UTF-8 with LF line endings, numbers use ``%.9g`` and each file
is written to a temporary sibling first and then renamed into place, so a
reader never sees a half-written report.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .simulator import SimTrace, metrics
from .vehicle import attitude_table

NUMBER_FORMAT = "%.9g"

TRACE_COLUMNS = ("t", "agent_id", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz",
                 "ucx", "ucy", "ucz", "ufx", "ufy", "ufz", "gamma_i", "ep_norm", "ev_norm")
DISTANCE_COLUMNS = ("t", "i", "j", "d_ij")
OBSTACLE_COLUMNS = ("t", "agent_id", "obstacle_id", "d")
LYAPUNOV_COLUMNS = ("t", "V", "bound")
ATTITUDE_COLUMNS = ("t", "agent_id", "thrust", "roll", "pitch", "yaw", "clamped")

FILES = {
    "trace": "trace.csv",
    "distances": "distances.csv",
    "obstacles": "obstacle_distances.csv",
    "lyapunov": "lyapunov.csv",
    "attitude": "attitude.csv",
    "summary": "summary.txt",
    "summary_json": "summary.json",
}


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        os.chmod(tmp, 0o666 & ~_umask())
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_table(columns: tuple, rows: np.ndarray) -> str:
    """Header line plus one ``%.9g`` comma-separated line per row."""
    lines = [",".join(columns)]
    if rows.size:
        fmt = ",".join([NUMBER_FORMAT] * rows.shape[1])
        # adding 0.0 turns -0.0 into 0.0
        lines.extend(fmt % tuple(r) for r in (rows + 0.0).tolist())
    return "\n".join(lines) + "\n"


def trace_rows(tr: SimTrace) -> np.ndarray:
    k, n = tr.gamma.shape
    t = np.repeat(tr.t, n)
    agent = np.tile(np.arange(n, dtype=np.float64), k)
    cols = [t[:, None], agent[:, None], tr.p.reshape(-1, 3), tr.v.reshape(-1, 3),
            tr.u.reshape(-1, 3), tr.u_c.reshape(-1, 3), tr.u_f.reshape(-1, 3),
            tr.gamma.reshape(-1, 1),
            np.linalg.norm(tr.e_p, axis=2).reshape(-1, 1),
            np.linalg.norm(tr.e_v, axis=2).reshape(-1, 1)]
    return np.hstack(cols)


def distance_rows(tr: SimTrace) -> np.ndarray:
    k, n_pairs = tr.pair_dist.shape
    if n_pairs == 0:
        return np.zeros((0, 4))
    pairs = np.array(tr.pairs, dtype=np.float64)
    return np.column_stack([np.repeat(tr.t, n_pairs), np.tile(pairs[:, 0], k),
                            np.tile(pairs[:, 1], k), tr.pair_dist.reshape(-1)])


def obstacle_rows(tr: SimTrace) -> np.ndarray:
    """Agent-obstacle distances, skipping steps where the obstacle is inactive."""
    k, n, m = tr.obstacle_dist.shape
    t = np.repeat(tr.t, n * m)
    agent = np.tile(np.repeat(np.arange(n, dtype=np.float64), m), k)
    ob = np.tile(np.arange(m, dtype=np.float64), k * n)
    d = tr.obstacle_dist.reshape(-1)
    keep = ~np.isnan(d)
    return np.column_stack([t[keep], agent[keep], ob[keep], d[keep]])


def lyapunov_rows(tr: SimTrace) -> np.ndarray:
    return np.column_stack([tr.t, tr.V, tr.lyapunov_bound()])


def attitude_rows(tr: SimTrace) -> np.ndarray:
    """Thrust/attitude set-points (yaw held at zero); NaN where no upright solution exists."""
    sc = tr.scenario
    k, n = tr.gamma.shape
    att = attitude_table(tr.u.reshape(-1, 3), 0.0, sc.mass, sc.gravity, sc.attitude_mode)
    return np.column_stack([np.repeat(tr.t, n), np.tile(np.arange(n, dtype=np.float64), k), att])


def _fmt(x) -> str:
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return NUMBER_FORMAT % x
    return str(x)


def summary_text(tr: SimTrace) -> str:
    sc = tr.scenario
    m = metrics(tr)
    lines = [f"scenario: {sc.name or '(unnamed)'}",
             f"agents: {sc.n_agents}",
             f"dt: {_fmt(sc.dt)} s, t_final: {_fmt(sc.t_final)} s, integration: {sc.integration}",
             f"simulated until: {_fmt(float(tr.t[-1]))} s ({len(tr.t)} samples)"]
    if tr.halted:
        c = tr.collision
        lines.append(f"status: HALTED by collision at t={_fmt(c.time)} s between {c.a} and {c.b} "
                     f"(d={_fmt(c.distance)} m, radius {_fmt(sc.collision_radius)} m)")
    else:
        lines.append("status: completed, no collision")
    lines.append(f"min inter-agent distance: {_fmt(m.min_pair_distance)} m "
                 f"at t={_fmt(m.min_pair_distance_time)} s")
    for (i, j), d in m.per_pair_min.items():
        lines.append(f"  pair {i}-{j}: {_fmt(d)} m")
    if m.min_obstacle_distance is None:
        lines.append("min obstacle distance: n/a (no obstacles)")
    else:
        lines.append(f"min obstacle distance: {_fmt(m.min_obstacle_distance)} m "
                     f"at t={_fmt(m.min_obstacle_distance_time)} s")
        for (i, b), d in m.per_obstacle_min.items():
            lines.append(f"  agent {i} - {b}: {_fmt(d)} m")
    lines.append(f"formation tolerance: {_fmt(m.tolerance)} m")
    lines.append(f"formation first reached: {_fmt(m.formation_time)} s")
    lines.append(f"settling time: {_fmt(m.settling_time)} s")
    lines.append(f"final max formation error: {_fmt(float(m.formation_error[-1]))} m")
    lines.append(f"zeta: {_fmt(tr.zeta)} 1/s")
    if m.decay.applicable:
        lines.append(f"lyapunov decay ratio (max V / bound over pure-consensus windows): "
                     f"{_fmt(m.decay.max_ratio)} over {len(m.decay.windows)} window(s)")
    else:
        lines.append(f"lyapunov decay ratio: n/a ({m.decay.reason})")
    lines.append(f"events: {len(tr.events)}")
    for ev in tr.events:
        parts = [f"  t={_fmt(ev.time)}", ev.kind]
        if ev.a is not None:
            parts.append(f"a={ev.a}")
        if ev.b is not None:
            parts.append(f"b={ev.b}")
        if not math.isnan(ev.distance):
            parts.append(f"d={_fmt(ev.distance)}")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def summary_json(tr: SimTrace) -> str:
    m = metrics(tr).as_dict()
    m["halted"] = tr.halted
    m["scenario"] = tr.scenario.name
    m["t_end"] = float(tr.t[-1])
    m["events"] = [{"time": e.time, "kind": e.kind, "a": e.a, "b": e.b,
                    "distance": None if math.isnan(e.distance) else e.distance}
                   for e in tr.events]

    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, list):
            return [clean(v) for v in x]
        return x

    return json.dumps(clean(m), indent=2, sort_keys=True) + "\n"


def write_reports(tr: SimTrace, out_dir: str | os.PathLike, *,
                  attitude: bool = True) -> dict[str, Path]:
    """Write the CSV set and summaries for ``tr`` into ``out_dir``.

    Returns the written paths keyed by report kind.  The obstacle CSV is
    only written when the scenario has obstacles.  I/O failures surface as
    ``OSError`` naming the path.
    """
    out = Path(out_dir)
    tables = {
        "trace": (TRACE_COLUMNS, trace_rows(tr)),
        "distances": (DISTANCE_COLUMNS, distance_rows(tr)),
        "lyapunov": (LYAPUNOV_COLUMNS, lyapunov_rows(tr)),
    }
    if tr.obstacle_dist.shape[2]:
        tables["obstacles"] = (OBSTACLE_COLUMNS, obstacle_rows(tr))
    if attitude:
        tables["attitude"] = (ATTITUDE_COLUMNS, attitude_rows(tr))

    written = {}
    for kind, (cols, rows) in tables.items():
        path = out / FILES[kind]
        atomic_write(path, format_table(cols, rows))
        written[kind] = path
    for kind, text in (("summary", summary_text(tr)), ("summary_json", summary_json(tr))):
        path = out / FILES[kind]
        atomic_write(path, text)
        written[kind] = path
    return written
