"""Undirected communication graphs with a leader mask.

The leader mask ``delta`` marks agents that know the reference trajectory.
Stacked consensus dynamics are governed by ``(L + Delta) kron I3``; that
Kronecker product is never formed here because its spectrum is the spectrum
of ``L + Delta`` with every eigenvalue repeated three times.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidGraphError
from .linalg import jacobi_eigvalsh

TOPOLOGIES = ("complete", "ring", "path")

# L + Delta counts as positive definite only above this floor.
PD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CommGraph:
    """Weighted undirected graph over ``n_agents`` vertices.

    Attributes:
        adjacency: (n, n) symmetric, non-negative weights with a zero diagonal.
        leader_mask: (n,) 0/1 vector; ``leader_mask[i] == 1`` if agent ``i``
            knows the reference trajectory.
    """

    adjacency: NDArray[np.float64]
    leader_mask: NDArray[np.float64]

    def __post_init__(self) -> None:
        a = np.array(self.adjacency, dtype=np.float64)
        delta = np.array(self.leader_mask, dtype=np.float64).reshape(-1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidGraphError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidGraphError("adjacency has non-finite entries")
        if np.any(a < 0):
            raise InvalidGraphError("adjacency has negative weights")
        if not np.array_equal(a, a.T):
            raise InvalidGraphError("adjacency is not symmetric (graph must be undirected)")
        if np.any(np.diag(a) != 0):
            raise InvalidGraphError("adjacency diagonal must be zero (no self loops)")
        if delta.shape != (a.shape[0],):
            raise InvalidGraphError(
                f"leader mask has length {delta.size}, expected {a.shape[0]}")
        if not np.all((delta == 0) | (delta == 1)):
            raise InvalidGraphError("leader mask entries must be 0 or 1")
        a.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "leader_mask", delta)

    @property
    def n_agents(self) -> int:
        return self.adjacency.shape[0]

    @property
    def has_leader(self) -> bool:
        return bool(np.any(self.leader_mask == 1))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CommGraph):
            return NotImplemented
        return (np.array_equal(self.adjacency, other.adjacency)
                and np.array_equal(self.leader_mask, other.leader_mask))

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_topology(cls, name: str, n_agents: int, weight: float = 1.0,
                      leader_mask: ArrayLike | None = None) -> CommGraph:
        """Build a named topology (``complete``, ``ring`` or ``path``)."""
        if n_agents < 1:
            raise InvalidGraphError("a graph needs at least one agent")
        if weight <= 0:
            raise InvalidGraphError("topology weight must be positive")
        a = np.zeros((n_agents, n_agents))
        if name == "complete":
            a[:] = weight
            np.fill_diagonal(a, 0.0)
        elif name in ("ring", "path"):
            for i in range(n_agents - 1):
                a[i, i + 1] = a[i + 1, i] = weight
            if name == "ring" and n_agents > 2:
                a[0, -1] = a[-1, 0] = weight
        else:
            raise InvalidGraphError(f"unknown topology {name!r}; expected one of {TOPOLOGIES}")
        if leader_mask is None:
            leader_mask = np.ones(n_agents)
        return cls(a, np.asarray(leader_mask, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class GraphMatrices:
    degree: NDArray[np.float64]
    laplacian: NDArray[np.float64]
    l_plus_delta: NDArray[np.float64]
    eigenvalues_l_plus_delta: NDArray[np.float64]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues_l_plus_delta[0])

    @property
    def positive_definite(self) -> bool:
        return self.lambda_min > PD_TOL


def build_matrices(g: CommGraph) -> GraphMatrices:
    """Degree, Laplacian and ``L + Delta`` with its ascending spectrum."""
    degree = np.diag(g.adjacency.sum(axis=1))
    laplacian = degree - g.adjacency
    lpd = laplacian + np.diag(g.leader_mask)
    eig = jacobi_eigvalsh(lpd)
    for m in (degree, laplacian, lpd, eig):
        m.setflags(write=False)
    return GraphMatrices(degree, laplacian, lpd, eig)


def is_connected(g: CommGraph) -> bool:
    """True iff edges with positive weight join all vertices into one component."""
    n = g.n_agents
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(g.adjacency[i] > 0):
            j = int(j)
            if j not in seen:
                seen.add(j)
                queue.append(j)
    return len(seen) == n


def neighbors(g: CommGraph, i: int) -> set[int]:
    if not 0 <= i < g.n_agents:
        raise IndexError(f"agent index {i} out of range for {g.n_agents} agents")
    return {int(j) for j in np.flatnonzero(g.adjacency[i] > 0)}


def lemma1_holds(g: CommGraph) -> bool:
    """Connected, at least one leader, and ``L + Delta`` numerically positive definite."""
    return is_connected(g) and g.has_leader and build_matrices(g).positive_definite
