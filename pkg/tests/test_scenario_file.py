from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutoff_formation.controller import ObstacleState
from cutoff_formation.errors import ScenarioError
from cutoff_formation.potential import PairPotentials, PotentialParams
from cutoff_formation.scenario_file import (
    BUILTIN,
    builtin_scenario,
    dump_scenario,
    load_scenario,
    parse_scenario,
)
from cutoff_formation.simulator import random_scenario
from cutoff_formation.vehicle import FormationSpec

MINIMAL = """
[graph]
topology = "path"
n_agents = 2

[gains]
gamma = 0.2
gamma_p = 2.0
gamma_v = 3.0
theta_p = 1.3
theta_v = 1.3

[potential]
d_risky = 0.4
d_cautionary = 0.7
lambda = 0.001
mu = 0.5

[formation]
offsets = [[0.5, 0, 0], [-0.5, 0, 0]]
velocity_bound = 1.0
acceleration_bound = 1.0

[trajectory]
waypoints = [[0, 0, 0, 1], [10, 0, 0, 1]]

[agents]
positions = [[0.5, 0, 1], [-0.5, 0, 1]]

[sim]
t_final = 10.0
"""


def edit(old: str, new: str) -> str:
    assert old in MINIMAL
    return MINIMAL.replace(old, new)


def test_minimal_document_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.dt == 0.001 and sc.gains.u_max == 2.0 and sc.collision_radius == 0.05
    assert sc.integration == "rk4" and sc.seed == 0 and sc.obstacles == ()
    np.testing.assert_array_equal(sc.graph.leader_mask, [1, 1])
    np.testing.assert_array_equal(sc.initial_velocities(), np.zeros((2, 3)))
    assert sc.potential.default == PotentialParams(0.4, 0.7, 1e-3, 0.5)


def test_lambda_not_below_mu_rejected():
    with pytest.raises(ScenarioError, match=r"potential\.lambda.*smaller than mu"):
        parse_scenario(edit("lambda = 0.001", "lambda = 0.5"))


def test_radii_order_rejected():
    with pytest.raises(ScenarioError, match=r"potential\.d_risky"):
        parse_scenario(edit("d_risky = 0.4", "d_risky = 0.8"))


@pytest.mark.parametrize("old, new, key", [
    ("gamma_p = 2.0\n", "", "gains.gamma_p"),
    ("gamma = 0.2", "gamma = 0.2\nkappa = 1.0", "gains"),
    ("t_final = 10.0", "t_final = 10.0\ndt = -1.0", "sim.dt"),
    ("t_final = 10.0", "t_final = 10.0\ncollision_radius = 0.5", "sim.collision_radius"),
    ("t_final = 10.0", "t_final = 10.0\nintegration = \"euler\"", "sim.integration"),
    ("t_final = 10.0", "t_final = 10.0003", "sim.t_final"),
    ("positions = [[0.5, 0, 1], [-0.5, 0, 1]]", "positions = [[0.5, 0, 1]]", "agents.positions"),
    ("offsets = [[0.5, 0, 0], [-0.5, 0, 0]]", "offsets = [[0.5, 0], [-0.5, 0]]", "formation.offsets"),
    ("mu = 0.5", "mu = \"big\"", "potential.mu"),
    ("n_agents = 2", "n_agents = 2\nleaders = [0, 0]", "graph.leaders"),
    ("topology = \"path\"", "topology = \"star\"", "graph.topology"),
    ("waypoints = [[0, 0, 0, 1], [10, 0, 0, 1]]", "waypoints = [[0, 0, 0, 1], [0, 0, 0, 1]]",
     "trajectory.waypoints"),
])
def test_errors_name_key_path(old, new, key):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(edit(old, new))
    assert info.value.key == key
    assert f"[{key}" in str(info.value)


def test_unknown_section_and_missing_section():
    with pytest.raises(ScenarioError, match="unknown section"):
        parse_scenario(MINIMAL + "\n[extra]\na = 1\n")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(MINIMAL.replace("[sim]\nt_final = 10.0\n", ""))
    assert info.value.key == "sim"


def test_syntax_error_has_line_and_column():
    with pytest.raises(ScenarioError) as info:
        parse_scenario("[graph]\ntopology = \"path\"\nn_agents = = 2\n")
    assert info.value.line == 3 and info.value.column is not None
    assert "line 3" in str(info.value)


def test_disconnected_adjacency_rejected():
    doc = edit('topology = "path"\nn_agents = 2', "adjacency = [[0, 0], [0, 0]]")
    with pytest.raises(ScenarioError, match="not connected"):
        parse_scenario(doc)
    doc = edit('topology = "path"\nn_agents = 2', "adjacency = [[0, 1], [2, 0]]")
    with pytest.raises(ScenarioError, match="symmetric"):
        parse_scenario(doc)


def test_formation_bounds_checked():
    doc = edit("offsets = [[0.5, 0, 0], [-0.5, 0, 0]]",
               "coefficients = [[[0.5, 0, 0], [2.0, 0, 0]], [[-0.5, 0, 0], [0, 0, 0]]]")
    with pytest.raises(ScenarioError, match=r"\[formation\].*velocity"):
        parse_scenario(doc)


def test_pair_overrides_and_obstacles():
    doc = MINIMAL.replace("[formation]", """[[potential.pairs]]
agents = [1, 0]
d_risky = 0.3
d_cautionary = 0.5
lambda = 0.002
mu = 0.4

[formation]""") + """
[[obstacles]]
position = [1, 1, 1]
velocity = [0, -0.1, 0]
active_from = 2.5
"""
    sc = parse_scenario(doc)
    assert sc.potential.for_pair(0, 1) == PotentialParams(0.3, 0.5, 0.002, 0.4)
    assert sc.obstacles == (ObstacleState([1, 1, 1], [0, -0.1, 0], 2.5),)
    assert parse_scenario(dump_scenario(sc)) == sc
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc.replace("agents = [1, 0]", "agents = [1, 1]"))
    assert info.value.key == "potential.pairs[0].agents"


@pytest.mark.parametrize("name", BUILTIN)
def test_builtin_round_trip(name):
    sc = builtin_scenario(name)
    assert parse_scenario(dump_scenario(sc)) == sc
    assert sc.stability_report().feasible


def test_demo_scenario_values():
    sc = builtin_scenario("demo_paper")
    k = sc.gains
    assert (k.gamma, k.gamma_p, k.gamma_v, k.theta_p, k.theta_v) == (0.2, 2.0, 3.0, 1.3, 1.3)
    assert sc.potential.default == PotentialParams(0.4, 0.7, 1e-3, 0.5)
    np.testing.assert_array_equal(sc.formation.position(0.0),
                                  [[0.4, 0.45, 0], [-0.4, 0.45, 0], [0.4, -0.45, 0],
                                   [-0.4, -0.45, 0]])
    np.testing.assert_array_equal(sc.obstacles[0].position, [0.2, 0.2, 0.4])
    assert np.linalg.norm(sc.trajectory.segment_velocities[1]) == pytest.approx(0.4)
    assert sc.t_final == 28.0 and sc.dt == 1e-3


def test_load_from_file(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(MINIMAL, encoding="utf-8")
    assert load_scenario(path) == parse_scenario(MINIMAL)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000), st.floats(1e-3, 0.05),
       st.sampled_from(["rk4", "zoh"]), st.booleans())
def test_round_trip_property(n, seed, dt, mode, with_pairs):
    sc = random_scenario(n, seed)
    rng = np.random.default_rng(seed)
    coeffs = np.concatenate([sc.formation.coeffs, 0.01 * rng.normal(size=(n, 2, 3))], axis=1)
    overrides = {(0, n - 1): PotentialParams(0.3, 0.6, 1e-3, 0.3)} if with_pairs and n > 1 else {}
    sc = dataclasses.replace(
        sc, dt=dt, t_final=dt * 400, integration=mode,
        formation=FormationSpec(coeffs, 5.0, 5.0),
        potential=PairPotentials(sc.potential.default, overrides),
        obstacles=tuple(ObstacleState(rng.normal(size=3), rng.normal(size=3),
                                      float(rng.uniform(0, 3))) for _ in range(seed % 3)))
    assert parse_scenario(dump_scenario(sc)) == sc
