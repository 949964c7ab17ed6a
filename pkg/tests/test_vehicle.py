from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from cutoff_formation.errors import UnsupportedAttitudeError
from cutoff_formation.vehicle import (
    AgentState,
    FormationSpec,
    ReferenceTrajectory,
    attitude_reference,
    attitude_table,
    stacked_errors,
    step_dynamics,
    thrust_acceleration,
    tracking_errors,
    vector_field,
)


def test_agent_state_validation():
    s = AgentState([1, 2, 3], [0, 0, 0])
    assert s == AgentState(np.array([1.0, 2.0, 3.0]), np.zeros(3))
    with pytest.raises(ValueError):
        AgentState([1, 2], [0, 0, 0])
    with pytest.raises(ValueError):
        AgentState([1, 2, np.nan], [0, 0, 0])
    with pytest.raises(ValueError):
        s.position[0] = 5.0


def test_constant_input_step_is_exact():
    s = AgentState([0, 0, 1], [1, 0, 0])
    out = step_dynamics(s, [0, 2, 0], 0.5)
    np.testing.assert_allclose(out.position, [0.5, 0.25, 1.0])
    np.testing.assert_allclose(out.velocity, [1.0, 1.0, 0.0])
    v, u = vector_field(s.position, s.velocity, [0, 2, 0])
    np.testing.assert_array_equal(v, s.velocity)
    np.testing.assert_array_equal(u, [0, 2, 0])
    with pytest.raises(ValueError):
        step_dynamics(s, [0, 0, 0], 0.0)


def test_hover_attitude():
    ref = attitude_reference([0, 0, 0], mass=0.033)
    assert ref.thrust == pytest.approx(0.033 * 9.81)
    assert ref.roll == 0.0 and ref.pitch == 0.0 and not ref.clamped


def test_consistent_attitude_round_trip(rng):
    for _ in range(200):
        u = rng.uniform(-3, 3, 3)
        psi = rng.uniform(-math.pi, math.pi)
        ref = attitude_reference(u, psi, mode="consistent")
        np.testing.assert_allclose(thrust_acceleration(ref), u, atol=1e-12)


def test_literal_attitude_squares_lateral_components():
    g, m = 9.81, 0.033
    ref = attitude_reference([0, 1.5, 0], 0.0, m, g, mode="literal")
    assert ref.roll == pytest.approx(math.asin(-1.5**2 / math.hypot(1.5, g)))
    # the squared numerator loses the sign of u_y
    flipped = attitude_reference([0, -1.5, 0], 0.0, m, g, mode="literal")
    assert flipped.roll == pytest.approx(ref.roll)
    assert attitude_reference([0, -1.5, 0], 0.0, m, g, mode="consistent").roll > 0


def test_literal_attitude_clamps():
    ref = attitude_reference([0, 4.0, -8.0], mode="literal")
    assert ref.clamped
    assert ref.roll == pytest.approx(-math.pi / 2)


def test_inverted_flight_rejected():
    with pytest.raises(UnsupportedAttitudeError):
        attitude_reference([0, 0, -9.81])
    with pytest.raises(ValueError):
        attitude_reference([0, 0, 0], mode="other")


@pytest.mark.parametrize("mode", ["literal", "consistent"])
def test_attitude_table_matches_scalar(rng, mode):
    u = rng.uniform(-4, 4, (300, 3))
    u[:5, 2] = -12.0
    tab = attitude_table(u, 0.4, mode=mode)
    for row, ui in zip(tab, u):
        try:
            ref = attitude_reference(ui, 0.4, mode=mode)
        except UnsupportedAttitudeError:
            assert np.all(np.isnan(row[:4])) and row[4] == 0
            continue
        np.testing.assert_allclose(row, [ref.thrust, ref.roll, ref.pitch, ref.yaw,
                                         float(ref.clamped)], atol=1e-14)


def test_formation_polynomial():
    # agent 0 static, agent 1 with offset (t, t^2, 0)
    coeffs = np.zeros((2, 3, 3))
    coeffs[0, 0] = [1, 0, 0]
    coeffs[1, 1] = [1, 0, 0]
    coeffs[1, 2] = [0, 1, 0]
    f = FormationSpec(coeffs, 10.0, 10.0)
    assert not f.is_constant
    np.testing.assert_allclose(f.position(2.0), [[1, 0, 0], [2, 4, 0]])
    np.testing.assert_allclose(f.velocity(2.0), [[0, 0, 0], [1, 4, 0]])
    np.testing.assert_allclose(f.acceleration(2.0), [[0, 0, 0], [0, 2, 0]])
    f.check_bounds(1.0)
    with pytest.raises(ValueError, match="velocity"):
        FormationSpec(coeffs, 2.0, 10.0).check_bounds(3.0)
    with pytest.raises(ValueError, match="acceleration"):
        FormationSpec(coeffs, 10.0, 1.5).check_bounds(1.0)


def test_formation_constant_and_validation():
    f = FormationSpec.constant([[0.4, 0.45, 0], [-0.4, 0.45, 0]])
    assert f.is_constant and f.n_agents == 2
    np.testing.assert_array_equal(f.velocity(3.0), np.zeros((2, 3)))
    f.check_bounds(100.0)
    assert f == FormationSpec.constant([[0.4, 0.45, 0], [-0.4, 0.45, 0]])
    with pytest.raises(ValueError):
        FormationSpec(np.zeros((2, 3)), 1.0, 1.0)
    with pytest.raises(ValueError):
        FormationSpec.constant([[0, 0, 0]], velocity_bound=0.0)


@pytest.fixture
def line():
    return ReferenceTrajectory([0, 15, 26, 28], [[-2, 0, 0.4], [-2, 0, 0.4],
                                                [2.4, 0, 0.4], [2.4, 0, 0.4]])


def test_trajectory_sampling(line):
    r, v = line.sample(10.0)
    np.testing.assert_allclose(r, [-2, 0, 0.4])
    np.testing.assert_array_equal(v, 0)
    r, v = line.sample(15.0)  # outgoing segment at a knot
    np.testing.assert_allclose(v, [0.4, 0, 0])
    r, v = line.sample(20.5)
    np.testing.assert_allclose(r, [0.2, 0, 0.4])
    np.testing.assert_allclose(v, [0.4, 0, 0])
    r, v = line.sample(40.0)
    np.testing.assert_allclose(r, [2.4, 0, 0.4])
    np.testing.assert_array_equal(v, 0)
    r, v = line.sample(-1.0)
    np.testing.assert_allclose(r, [-2, 0, 0.4])
    np.testing.assert_allclose(line.segment_velocities, [[0, 0, 0], [0.4, 0, 0], [0, 0, 0]])
    assert line.t_end == 28.0 and line.beyond_horizon(28.5) and not line.beyond_horizon(28.0)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        ReferenceTrajectory([0, 0], [[0, 0, 0], [1, 0, 0]])
    with pytest.raises(ValueError):
        ReferenceTrajectory([0, 1], [[0, 0, 0]])
    with pytest.raises(ValueError):
        ReferenceTrajectory([], np.zeros((0, 3)))


def test_tracking_errors(line, caplog):
    f = FormationSpec.constant([[0.4, 0.45, 0], [-0.4, 0.45, 0]])
    s = AgentState([0.5, 0.5, 0.4], [0.4, 0, 0])
    e_p, e_v = tracking_errors(s, f, line, 0, 20.5)
    np.testing.assert_allclose(e_p, [-0.1, 0.05, 0.0], atol=1e-12)
    np.testing.assert_allclose(e_v, [0, 0, 0], atol=1e-15)
    P = np.array([[0.5, 0.5, 0.4], [-0.2, 0.45, 0.4]])
    V = np.array([[0.4, 0, 0], [0, 0, 0]])
    ep, ev = stacked_errors(P, V, f, line, 20.5)
    np.testing.assert_allclose(ep[0], e_p)
    np.testing.assert_allclose(ep[1], [0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(ev[1], [-0.4, 0, 0])
    with caplog.at_level(logging.WARNING):
        tracking_errors(s, f, line, 0, 30.0)
    assert "past the last waypoint" in caplog.text


def test_errors_affine_in_offsets(line, rng):
    # shifting an offset by c shifts that agent's position error by -c
    offs = rng.normal(size=(3, 3))
    shift = rng.normal(size=3)
    P, V = rng.normal(size=(2, 3, 3))
    a, _ = stacked_errors(P, V, FormationSpec.constant(offs), line, 5.0)
    offs2 = offs.copy()
    offs2[1] += shift
    b, _ = stacked_errors(P, V, FormationSpec.constant(offs2), line, 5.0)
    np.testing.assert_allclose(b[1], a[1] - shift)
    np.testing.assert_array_equal(b[[0, 2]], a[[0, 2]])
