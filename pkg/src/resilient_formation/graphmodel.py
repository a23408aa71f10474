"""Leader-follower digraphs, exchange matrices and their scaling certificates.

Conventions: ``adjacency[i, j] = a_ij > 0`` means follower ``i`` receives
information from follower ``j``. ``leader_links[k, i] = a_ik`` is the weight
of the edge from leader ``k`` into follower ``i``. Leaders never have incoming
edges, so they do not appear as rows anywhere.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DimensionMismatch,
    EmptyConnectedSet,
    IndefiniteCertificate,
    SingularExchangeMatrix,
    WeightError,
)

PD_TOL = 1e-9
_SINGULAR_RCOND = 1e-12


def _frozen(a: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Digraph:
    """Weighted leader-follower digraph stored densely."""

    adjacency: NDArray[np.float64]
    leader_links: NDArray[np.float64]
    name: str = ""

    def __post_init__(self) -> None:
        adj = _frozen(self.adjacency)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DimensionMismatch(f"adjacency must be square, got {adj.shape}")
        links = np.array(self.leader_links, dtype=np.float64)
        if links.ndim == 1:
            links = links[None, :]
        if links.shape[1] != adj.shape[0]:
            raise DimensionMismatch(
                f"leader links have {links.shape[1]} entries for {adj.shape[0]} followers"
            )
        if np.any(adj < 0) or np.any(links < 0):
            raise ValueError("edge weights must be nonnegative")
        if np.any(np.diag(adj) != 0):
            raise ValueError("adjacency diagonal must be zero (no self loops)")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "leader_links", _frozen(links))

    @property
    def n_followers(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_leaders(self) -> int:
        return self.leader_links.shape[0]

    @classmethod
    def from_edges(
        cls,
        n_followers: int,
        edges: Sequence[tuple],
        leader_edges: Sequence[tuple] = (),
        n_leaders: int = 1,
        name: str = "",
    ) -> "Digraph":
        """Build from 0-based follower edges ``(j, i[, w])`` meaning j -> i,
        and leader edges ``(k, i[, w])`` meaning leader k -> follower i."""
        adj = np.zeros((n_followers, n_followers))
        for e in edges:
            j, i = e[0], e[1]
            adj[i, j] = e[2] if len(e) > 2 else 1.0
        links = np.zeros((n_leaders, n_followers))
        for e in leader_edges:
            k, i = e[0], e[1]
            links[k, i] = e[2] if len(e) > 2 else 1.0
        return cls(adj, links, name)


@dataclass(frozen=True)
class ExchangeMatrix:
    H: NDArray[np.float64]
    provenance: str = ""


@dataclass(frozen=True)
class ScalingCertificate:
    """Diagonal scaling Theta with Q = H^T Theta + Theta H positive definite."""

    theta: NDArray[np.float64]
    Q: NDArray[np.float64]
    H: NDArray[np.float64]
    graph_index: int = 0

    @property
    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0])


@dataclass(frozen=True)
class SpectralConstants:
    mu: float
    lambda_m: float
    sigma_m: float
    Phi: NDArray[np.float64]
    certificates: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "lambda_m": self.lambda_m,
            "sigma_m": self.sigma_m,
            "Phi": np.diag(self.Phi).tolist(),
        }


def laplacian(g: Digraph) -> NDArray[np.float64]:
    """Follower Laplacian: l_ii = sum_j a_ij, l_ij = -a_ij."""
    adj = g.adjacency
    return np.diag(adj.sum(axis=1)) - adj


def _reachable(g: Digraph, sources: Sequence[int]) -> set[int]:
    """Followers reachable from the given leader indices."""
    seen: set[int] = set()
    queue = deque()
    for k in sources:
        for i in np.flatnonzero(g.leader_links[k] > 0):
            if i not in seen:
                seen.add(int(i))
                queue.append(int(i))
    while queue:
        j = queue.popleft()
        # j -> i whenever a_ij > 0
        for i in np.flatnonzero(g.adjacency[:, j] > 0):
            if i not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return seen


def has_leader_rooted_spanning_tree(g: Digraph, leader: int = 0) -> bool:
    return len(_reachable(g, [leader])) == g.n_followers


def satisfies_containment_reachability(g: Digraph) -> bool:
    """Every follower is either well-informed (linked to all leaders) or
    uninformed and reachable from some well-informed follower."""
    linked = g.leader_links > 0
    well = np.all(linked, axis=0)
    partial = np.any(linked, axis=0) & ~well
    if np.any(partial) or not np.any(well):
        return False
    seen = set(int(i) for i in np.flatnonzero(well))
    queue = deque(seen)
    while queue:
        j = queue.popleft()
        for i in np.flatnonzero(g.adjacency[:, j] > 0):
            if int(i) not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return len(seen) == g.n_followers


def exchange_matrix(g: Digraph, leader: int = 0) -> ExchangeMatrix:
    """H = L + diag(a_i0) for the single-leader network."""
    H = laplacian(g) + np.diag(g.leader_links[leader])
    return ExchangeMatrix(H, g.name)


def multi_leader_exchange(
    g: Digraph, gamma: ArrayLike | None = None, tol: float = 1e-12
) -> tuple[list[NDArray[np.float64]], NDArray[np.float64]]:
    """Per-leader matrices H_k = gamma_k L + diag(a_ik) and their sum."""
    m = g.n_leaders
    gamma = np.full(m, 1.0 / m) if gamma is None else np.asarray(gamma, dtype=float)
    if gamma.shape != (m,):
        raise WeightError(f"expected {m} convex weights, got shape {gamma.shape}")
    if np.any(gamma <= 0) or abs(gamma.sum() - 1.0) > tol:
        raise WeightError(f"convex weights must be positive and sum to 1, got {gamma}")
    L = laplacian(g)
    if m == 1:
        H_ks = [exchange_matrix(g).H]
    else:
        H_ks = [gamma[k] * L + np.diag(g.leader_links[k]) for k in range(m)]
    H_bar = H_ks[0].copy()
    for Hk in H_ks[1:]:
        H_bar = H_bar + Hk
    return H_ks, H_bar


def lemma1_scaling(
    H: ExchangeMatrix | NDArray[np.float64], graph_index: int = 0, tol: float = PD_TOL
) -> ScalingCertificate:
    """Theta = diag(H^{-T} 1) and its certificate Q = H^T Theta + Theta H."""
    Hm = H.H if isinstance(H, ExchangeMatrix) else np.asarray(H, dtype=float)
    n = Hm.shape[0]
    if n == 0 or np.linalg.cond(Hm) > 1.0 / _SINGULAR_RCOND:
        raise SingularExchangeMatrix(
            f"exchange matrix of graph {graph_index} is singular; no leader-rooted spanning tree"
        )
    q = np.linalg.solve(Hm.T, np.ones(n))
    if np.any(q <= 0):
        raise IndefiniteCertificate(f"scaling vector not positive: {q}")
    theta = np.diag(q)
    Q = Hm.T @ theta + theta @ Hm
    Q = 0.5 * (Q + Q.T)
    cert = ScalingCertificate(theta, Q, Hm.copy(), graph_index)
    if cert.min_eig <= tol:
        raise IndefiniteCertificate(
            f"lambda_min(Q) = {cert.min_eig:.3e} <= {tol:g} for graph {graph_index}"
        )
    return cert


def _scaled_min_eig(theta: NDArray, Q: NDArray) -> float:
    # lambda_min(Theta^{-1} Q) through the congruent symmetric form
    s = 1.0 / np.sqrt(np.diag(theta))
    return float(np.linalg.eigvalsh(s[:, None] * Q * s[None, :])[0])


def spectral_constants(
    certs: Sequence[ScalingCertificate], bad_graphs: Sequence[ExchangeMatrix | NDArray]
) -> SpectralConstants:
    """Switching constants over the connected (certified) and bad graphs."""
    if not certs:
        raise EmptyConnectedSet("at least one graph must contain a leader-rooted spanning tree")
    thetas = [np.diag(c.theta) for c in certs]
    if len(certs) == 1:
        mu = 1.0
    else:
        mu = max(float(t.max() / t.min()) for t in thetas)
    lambda_m = min(_scaled_min_eig(c.theta, c.Q) for c in certs)
    phi = np.mean(thetas, axis=0)
    sigma_m = 0.0
    for Hb in bad_graphs:
        Hm = Hb.H if isinstance(Hb, ExchangeMatrix) else np.asarray(Hb, dtype=float)
        S = (Hm.T * phi[None, :]) / phi[:, None] + Hm
        sigma_m = max(sigma_m, float(np.linalg.svd(S, compute_uv=False)[0]))
    return SpectralConstants(mu, lambda_m, sigma_m, np.diag(phi), tuple(certs))
