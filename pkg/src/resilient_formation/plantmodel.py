"""Agent, leader and formation-shape models plus the regulator equation solver."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch, NoSolution

RESIDUAL_TOL = 1e-10


def _mat(a: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.atleast_2d(np.array(a, dtype=np.float64))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LinearPlant:
    """x' = A x + B u, y = C x."""

    A: NDArray[np.float64]
    B: NDArray[np.float64]
    C: NDArray[np.float64]
    agent_id: int = 0

    def __post_init__(self) -> None:
        A, B, C = _mat(self.A, "A"), _mat(self.B, "B"), _mat(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n:
            raise DimensionMismatch(
                f"agent {self.agent_id}: inconsistent shapes A{A.shape} B{B.shape} C{C.shape}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class LeaderModel:
    """x0' = A0 x0, y0 = C0 x0."""

    A0: NDArray[np.float64]
    C0: NDArray[np.float64]

    def __post_init__(self) -> None:
        A0, C0 = _mat(self.A0, "A0"), _mat(self.C0, "C0")
        if A0.shape[0] != A0.shape[1] or C0.shape[1] != A0.shape[0]:
            raise DimensionMismatch(f"leader shapes A0{A0.shape} C0{C0.shape}")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "C0", C0)

    @property
    def r(self) -> int:
        return self.A0.shape[0]

    @property
    def p(self) -> int:
        return self.C0.shape[0]


@dataclass(frozen=True)
class RegulatorSolution:
    X: NDArray[np.float64]
    U: NDArray[np.float64]
    residual_primary: float
    residual_output: float


@dataclass(frozen=True)
class FormationShape:
    """Formation generator h' = A_h h, y_h = C_h h with its regulator pair."""

    A_h: NDArray[np.float64]
    C_h: NDArray[np.float64]
    X_h: NDArray[np.float64]
    U_h: NDArray[np.float64]
    h0: NDArray[np.float64]

    @property
    def q(self) -> int:
        return self.A_h.shape[0]


def _solve_matrix_pair(A, B, C, S, R, tol):
    """Solve X S = A X + B U and R = C X for (X, U) by vectorization.

    Column-major vec identities: vec(X S) = (S^T kron I) vec X,
    vec(A X) = (I kron A) vec X, vec(B U) = (I kron B) vec U.
    """
    n, m = B.shape
    r = S.shape[0]
    p = C.shape[0]
    if S.shape != (r, r) or R.shape != (p, r) or C.shape[1] != n:
        raise DimensionMismatch(
            f"cannot pair plant (n={n}, m={m}, p={p}) with generator S{S.shape}, R{R.shape}"
        )
    I_n, I_r = np.eye(n), np.eye(r)
    top = np.hstack([np.kron(S.T, I_n) - np.kron(I_r, A), -np.kron(I_r, B)])
    bottom = np.hstack([np.kron(I_r, C), np.zeros((p * r, m * r))])
    lhs = np.vstack([top, bottom])
    rhs = np.concatenate([np.zeros(n * r), R.reshape(-1, order="F")])
    z, *_ = sla.lstsq(lhs, rhs, lapack_driver="gelsd")
    X = z[: n * r].reshape((n, r), order="F")
    U = z[n * r :].reshape((m, r), order="F")
    res1 = float(np.linalg.norm(X @ S - A @ X - B @ U))
    res2 = float(np.linalg.norm(R - C @ X))
    if res1 > tol or res2 > tol:
        raise NoSolution(
            f"regulator equations inconsistent (residuals {res1:.2e}, {res2:.2e})"
        )
    return X, U, res1, res2


def solve_regulator(
    plant: LinearPlant, leader: LeaderModel, tol: float = RESIDUAL_TOL
) -> RegulatorSolution:
    """Minimum-norm (X, U) with X A0 = A X + B U and C0 = C X."""
    X, U, r1, r2 = _solve_matrix_pair(plant.A, plant.B, plant.C, leader.A0, leader.C0, tol)
    return RegulatorSolution(X, U, r1, r2)


def solve_formation_regulator(
    plant: LinearPlant, A_h: ArrayLike, C_h: ArrayLike, tol: float = RESIDUAL_TOL
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    X_h, U_h, _, _ = _solve_matrix_pair(
        plant.A, plant.B, plant.C, np.atleast_2d(np.asarray(A_h, float)),
        np.atleast_2d(np.asarray(C_h, float)), tol,
    )
    return X_h, U_h


def make_formation_shape(
    plant: LinearPlant, A_h: ArrayLike, C_h: ArrayLike, h0: ArrayLike, tol: float = RESIDUAL_TOL
) -> FormationShape:
    A_h = _mat(A_h, "A_h")
    C_h = _mat(C_h, "C_h")
    h0 = np.asarray(h0, dtype=float).reshape(-1)
    if h0.shape[0] != A_h.shape[0]:
        raise DimensionMismatch(f"h0 has length {h0.shape[0]}, generator order {A_h.shape[0]}")
    X_h, U_h = solve_formation_regulator(plant, A_h, C_h, tol)
    return FormationShape(A_h, C_h, X_h, U_h, h0)


def formation_state(shape: FormationShape, t: float) -> tuple[NDArray, NDArray]:
    """h(t) = expm(A_h t) h0 and y_h(t) = C_h h(t)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    h = sla.expm(shape.A_h * t) @ shape.h0
    return h, shape.C_h @ h


def rotation_generator(omega: float = 1.0) -> NDArray[np.float64]:
    return np.array([[0.0, omega], [-omega, 0.0]])


def phase_offset_h0(agent_index: int, n_agents: int = 6, amplitude: float = 10.0) -> NDArray:
    """Initial formation state giving h_1 = a sin(t + phi_i), h_2 = a cos(t + phi_i)
    with phi_i = 2 pi i / n_agents (i is 0-based)."""
    phase = 2.0 * np.pi * agent_index / n_agents
    return amplitude * np.array([np.sin(phase), np.cos(phase)])
