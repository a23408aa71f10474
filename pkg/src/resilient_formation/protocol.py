"""Distributed update laws as pure functions.

Every function maps current signals to a rate or an output; the integrator
owns all state. Follower indices are 0-based and refer to rows of the active
digraph.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError
from .graphmodel import Digraph

RHO_SOURCES = ("state", "output", "structured")


@dataclass(frozen=True)
class CompensationConfig:
    """Boundary layer theta_j(t) = exp(-vartheta0_j t) of the compensation term.

    ``rho_source`` selects how rho_bar is formed:
    ``state`` uses B_rho^T P_rho rho with the true error state (simulation
    only), ``output`` and ``structured`` map the measured residual ytilde
    through the gains from :func:`synthesis.output_rho_gains`.
    """

    vartheta0: tuple[float, ...] = (1.0, 1.0)
    rho_source: str = "state"

    def __post_init__(self) -> None:
        v = tuple(float(x) for x in np.atleast_1d(self.vartheta0))
        if not v or min(v) <= 0:
            raise ConfigError("vartheta0 entries must be strictly positive")
        if self.rho_source not in RHO_SOURCES:
            raise ConfigError(f"rho_source must be one of {RHO_SOURCES}")
        object.__setattr__(self, "vartheta0", v)

    def theta(self, t: float) -> NDArray[np.float64]:
        return np.exp(-np.asarray(self.vartheta0) * t)


def consensus_error(
    zetas: NDArray[np.float64], x0: ArrayLike, g: Digraph, leader: int = 0
) -> NDArray[np.float64]:
    """xi_i = sum_j a_ij (zeta_i - zeta_j) + a_i0 (zeta_i - x0), one row per follower."""
    zetas = np.asarray(zetas, float)
    x0 = np.asarray(x0, float)
    adj = g.adjacency
    links = g.leader_links[leader]
    out = np.zeros_like(zetas)
    for i in range(zetas.shape[0]):
        acc = links[i] * (zetas[i] - x0)
        for j in np.flatnonzero(adj[i]):
            acc = acc + adj[i, j] * (zetas[i] - zetas[j])
        out[i] = acc
    return out


def containment_error(
    zetas: NDArray[np.float64],
    leader_states: Sequence[ArrayLike],
    g: Digraph,
) -> NDArray[np.float64]:
    """xi_bar_i = sum_j a_ij (zeta_i - zeta_j) + sum_k a_ik (zeta_i - x_k)."""
    zetas = np.asarray(zetas, float)
    adj = g.adjacency
    out = np.zeros_like(zetas)
    for i in range(zetas.shape[0]):
        acc = np.zeros(zetas.shape[1])
        for k, xk in enumerate(leader_states):
            acc = acc + g.leader_links[k, i] * (zetas[i] - np.asarray(xk, float))
        for j in np.flatnonzero(adj[i]):
            acc = acc + adj[i, j] * (zetas[i] - zetas[j])
        out[i] = acc
    return out


def estimator_rate(zeta_i, xi_i, K0, A0, C0) -> NDArray[np.float64]:
    """zeta_i' = A0 zeta_i - K0 C0 xi_i."""
    return A0 @ zeta_i - K0 @ (C0 @ xi_i)


def residual(y_corrupted, xhat, yhat_a, C) -> NDArray[np.float64]:
    """ytilde = y^c - C xhat - yhat^a."""
    return np.asarray(y_corrupted, float) - C @ xhat - yhat_a


def compensation(rho_bar, epshat, t: float, cfg: CompensationConfig) -> NDArray[np.float64]:
    """f_j = rho_bar_j / sqrt(rho_bar_j^2 + theta_j^2) * epshat_j."""
    rho_bar = np.asarray(rho_bar, float)
    th = cfg.theta(t)
    return rho_bar / np.sqrt(rho_bar**2 + th**2) * np.asarray(epshat, float)


def adaptive_rate(rho_bar, t: float, cfg: CompensationConfig) -> NDArray[np.float64]:
    """epshat_j' = rho_bar_j^2 / sqrt(rho_bar_j^2 + theta_j^2) >= 0."""
    rho_bar = np.asarray(rho_bar, float)
    th = cfg.theta(t)
    return rho_bar**2 / np.sqrt(rho_bar**2 + th**2)


def observer_rate(xhat, u, ytilde, A, B, L) -> NDArray[np.float64]:
    """xhat' = A xhat + B u + L ytilde."""
    return A @ xhat + B @ u + L @ ytilde


def attack_estimator_rate(ytilde, f, M) -> NDArray[np.float64]:
    """yhat^a' = M ytilde + f."""
    return M @ ytilde + f


def control(xhat, zeta, h, K1, K2, K3) -> NDArray[np.float64]:
    """u = K1 xhat + K2 zeta + K3 h (zeta is zeta_bar in the containment case)."""
    return K1 @ xhat + K2 @ zeta + K3 @ h
