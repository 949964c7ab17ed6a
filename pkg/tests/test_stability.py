from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutoff_formation.controller import ControllerGains
from cutoff_formation.errors import InfeasibleGainsError
from cutoff_formation.graph import CommGraph, build_matrices
from cutoff_formation.stability import (
    LyapunovFunction,
    assemble_MM,
    assemble_P,
    check_theorem,
    lyapunov_value,
    zeta,
)

from test_graph import random_connected


def closed_loop_matrix(g, k):
    m = np.kron(build_matrices(g).l_plus_delta, np.eye(3))
    z = np.zeros_like(m)
    return np.block([[z, np.eye(len(m))], [-k.gamma_p * m, -k.gamma_v * m]])


gains_strategy = st.builds(
    ControllerGains,
    gamma_p=st.floats(0.1, 5.0), gamma_v=st.floats(0.1, 5.0), gamma=st.floats(0.01, 1.0),
    theta_p=st.floats(0.05, 4.0), theta_v=st.floats(0.05, 4.0),
)


def test_example_gains_on_k4(k4, gains):
    r = check_theorem(k4, gains)
    assert r.feasible and r.gains_feasible
    np.testing.assert_allclose(r.eigenvalues, [1, 5, 5, 5], atol=1e-12)
    assert r.lambda_min_M == pytest.approx(0.14)
    # largest P eigenvalue sits on lambda = 5: [[65, 1], [1, 5]]
    assert r.lambda_max_P == pytest.approx(35 + np.hypot(30, 1), rel=1e-12)
    assert r.zeta == pytest.approx(0.28 / (35 + np.hypot(30, 1)), rel=1e-12)
    assert zeta(k4, gains) == r.zeta
    assert r.margin_p == pytest.approx(0.7)


def test_single_agent_rate(gains):
    g = CommGraph(np.zeros((1, 1)), [1])
    # P = [[2.6, 0.2], [0.2, 1]], MM = diag(0.14, 1.5)
    p_max = 1.8 + np.hypot(0.8, 0.2)
    assert zeta(g, gains) == pytest.approx(0.28 / p_max, rel=1e-12)
    assert zeta(g, gains) == pytest.approx(0.1067, abs=5e-5)


def test_gamma_p_perturbation_fails(k4, gains):
    bad = dataclasses.replace(gains, gamma_p=1.0)
    r = check_theorem(k4, bad)
    assert not r.condition_p and not r.feasible and r.zeta == 0.0
    with pytest.raises(InfeasibleGainsError) as info:
        zeta(k4, bad)
    assert info.value.report is not None and not info.value.report.condition_p


def test_velocity_condition_fails(k4, gains):
    # (gamma_v - theta_v) lam^2 - gamma lam <= 0 at lam = 1
    r = check_theorem(k4, dataclasses.replace(gains, gamma_v=1.4, gamma=0.2))
    assert not r.condition_v and not r.feasible


def test_no_leader_infeasible(gains):
    g = CommGraph.from_topology("complete", 3, leader_mask=[0, 0, 0])
    r = check_theorem(g, gains)
    assert not r.lemma1 and not r.feasible and r.zeta == 0.0
    assert not r.has_leader and r.connected


def test_initial_distance_condition(k4, gains, params):
    ok = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    r = check_theorem(k4, gains, params, ok)
    assert all(r.condition_mu.values()) and len(r.condition_mu) == 6
    coincident = ok.copy()
    coincident[1] = coincident[0]
    r = check_theorem(k4, gains, params, coincident)
    assert r.condition_mu[(0, 1)] is False and not r.feasible and r.gains_feasible
    assert r.as_dict()["condition_mu_failed_pairs"] == ["0-1"]
    with pytest.raises(ValueError):
        check_theorem(k4, gains, None, ok)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1), gains_strategy)
def test_spectral_reduction_matches_dense(n, seed, k):
    g = random_connected(np.random.default_rng(seed), n, leaders=1)
    r = check_theorem(g, k)
    p_eig = np.linalg.eigvalsh(assemble_P(g, k))
    mm_eig = np.linalg.eigvalsh(assemble_MM(g, k))
    scale = max(1.0, np.abs(p_eig).max(), np.abs(mm_eig).max())
    assert abs(r.lambda_max_P - p_eig[-1]) <= 1e-10 * scale
    assert abs(r.lambda_min_M - mm_eig[0]) <= 1e-10 * scale
    assert r.p_positive_definite == (p_eig[0] > 0)
    assert (r.zeta > 0) == r.feasible


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**31 - 1), gains_strategy)
def test_lyapunov_derivative_identity(n, seed, k):
    # A^T P + P A = -2 blockdiag(gamma gamma_p M^2, gamma_v M^2 - gamma M)
    g = random_connected(np.random.default_rng(seed), n, leaders=1)
    a = closed_loop_matrix(g, k)
    p = assemble_P(g, k)
    m = np.kron(build_matrices(g).l_plus_delta, np.eye(3))
    z = np.zeros_like(m)
    q = np.block([[k.gamma * k.gamma_p * m @ m, z], [z, k.gamma_v * m @ m - k.gamma * m]])
    lhs = a.T @ p + p @ a
    np.testing.assert_allclose(lhs, -2 * q, atol=1e-9 * max(1.0, np.abs(q).max()))
    # and the decay matrix is a lower bound: Q - MM is positive semidefinite
    gap = np.linalg.eigvalsh(q - assemble_MM(g, k))
    assert gap[0] >= -1e-9 * max(1.0, np.abs(q).max())


def test_lyapunov_function_matches_dense(rng, gains):
    g = CommGraph.from_topology("ring", 5, leader_mask=[1, 0, 0, 0, 0])
    p = assemble_P(g, gains)
    for _ in range(20):
        e_p, e_v = rng.normal(size=(2, 5, 3))
        x = np.concatenate([e_p.reshape(-1), e_v.reshape(-1)])
        assert lyapunov_value(e_p, e_v, g, gains) == pytest.approx(x @ p @ x, rel=1e-12)
    with pytest.raises(ValueError):
        LyapunovFunction(g, gains)(np.zeros(3), np.zeros(3))


def test_rate_grows_with_decay_margin(k4):
    # raising theta only shrinks the certified rate
    base = ControllerGains(2.0, 3.0, 0.2, 1.0, 1.0)
    rates = [zeta(k4, dataclasses.replace(base, theta_p=tp)) for tp in (0.5, 1.0, 1.5, 1.9)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_report_dict(k4, gains):
    d = check_theorem(k4, gains).as_dict()
    assert d["feasible"] is True and d["eigenvalues"] == pytest.approx([1, 5, 5, 5])
    assert set(d) >= {"zeta", "lambda_max_P", "lambda_min_M", "condition_p", "condition_v"}
