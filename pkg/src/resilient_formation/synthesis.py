"""Offline gain design and certification.

Covers the leader-estimator gain K0 (single leader and containment), the
state-feedback gain K1, the coupling gains K2/K3, and the observer pair
(L, M) for the augmented error system. Explicit gains supplied by a config
are certified, never replaced.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray

from .errors import (
    DetectabilityFailure,
    EmptyGainInterval,
    LyapunovFailure,
    ObservabilityFailure,
    StabilizabilityFailure,
    CertificationError,
)
from .graphmodel import PD_TOL, SpectralConstants
from .plantmodel import FormationShape, LeaderModel, LinearPlant, RegulatorSolution

log = logging.getLogger(__name__)

HURWITZ_MARGIN = 0.5
BETA_RTOL = 1e-4
BETA_FLOOR = 1e-6  # beta must be strictly positive


def _sym(M: NDArray) -> NDArray:
    return 0.5 * (M + M.T)


def _max_eig(M: NDArray) -> float:
    return float(np.linalg.eigvalsh(_sym(M))[-1])


def spectral_abscissa(A: NDArray) -> float:
    return float(np.max(np.linalg.eigvals(A).real))


# --------------------------------------------------------------------------
# leader estimator


@dataclass(frozen=True)
class EstimatorGainCertificate:
    K0: NDArray[np.float64]
    P0: NDArray[np.float64]
    beta: float
    kappa0: float
    epsilon: float
    R0: NDArray[np.float64]
    Q0: NDArray[np.float64]
    alpha: float
    kappa_interval: tuple[float, float]
    margin_first: float
    margin_second: float
    delta: float
    constants: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        lo, hi = self.kappa_interval
        return {
            "K0": self.K0.tolist(),
            "P0": self.P0.tolist(),
            "beta": self.beta,
            "kappa0": self.kappa0,
            "epsilon": self.epsilon,
            "R0": self.R0.tolist(),
            "Q0": self.Q0.tolist(),
            "alpha": self.alpha,
            "kappa_interval": [lo, None if math.isinf(hi) else hi],
            "margin_first": self.margin_first,
            "margin_second": self.margin_second,
            "delta": self.delta,
            "constants": self.constants,
        }


def first_constraint(P0, A0, C0, R0, Q0) -> NDArray:
    return _sym(P0 @ A0 + A0.T @ P0 - C0.T @ np.linalg.solve(R0, C0) + Q0)


def second_constraint(P0, A0, C0, R0, beta, epsilon) -> NDArray:
    return _sym(P0 @ A0 + A0.T @ P0 + epsilon * C0.T @ np.linalg.solve(R0, C0) - beta * P0)


def _riccati_in_inverse(A0, D, delta):
    """Solve A S + S A^T - S D S + delta I = 0 for S = P0^{-1}.

    Substituting S = P^{-1} and congruence by P gives
    P A + A^T P - D + delta P^2 = 0, hence P A + A^T P - D < 0 strictly.
    D may be indefinite or rank deficient; it is factored as V diag(d) V^T
    over its nonzero spectrum.
    """
    r = A0.shape[0]
    d, V = np.linalg.eigh(_sym(D))
    keep = np.abs(d) > 1e-12 * max(1.0, np.abs(d).max(initial=0.0))
    if not np.any(keep):
        S = sla.solve_continuous_lyapunov(A0, -delta * np.eye(r))
    else:
        B = V[:, keep]
        Rinv = np.diag(1.0 / d[keep])
        S = sla.solve_continuous_are(A0.T, B, delta * np.eye(r), Rinv)
    return _sym(S)


def _solve_first_constraint(A0, C0, R0, Q0, delta0=1e-2, min_delta=1e-8):
    D = C0.T @ np.linalg.solve(R0, C0) - Q0
    delta = delta0
    last_err: Exception | None = None
    while delta >= min_delta:
        try:
            S = _riccati_in_inverse(A0, D, delta)
            if np.all(np.isfinite(S)) and np.linalg.eigvalsh(S)[0] > 0:
                P0 = _sym(np.linalg.inv(S))
                if _max_eig(first_constraint(P0, A0, C0, R0, Q0)) < -PD_TOL:
                    return P0, delta
        except (np.linalg.LinAlgError, ValueError) as err:
            last_err = err
        delta *= 0.5
    raise DetectabilityFailure(
        "no positive definite P0 satisfies the first estimator inequality"
        + (f" ({last_err})" if last_err else "")
    )


def minimal_beta(P0, A0, C0, R0, epsilon, rtol=BETA_RTOL) -> float:
    """Smallest beta (to rtol) with the second inequality strict for fixed P0.

    Returns ``BETA_FLOOR`` when the inequality already holds there.
    """

    def ok(b: float) -> bool:
        return _max_eig(second_constraint(P0, A0, C0, R0, b, epsilon)) < -PD_TOL

    if ok(BETA_FLOOR):
        return BETA_FLOOR
    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e12:
            raise CertificationError("second estimator inequality cannot be met")
    lo = BETA_FLOOR
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def kappa_interval(sc: SpectralConstants, epsilon: float) -> tuple[float, float]:
    lo = 1.0 / sc.lambda_m
    hi = math.inf if sc.sigma_m == 0 else epsilon / sc.sigma_m
    return lo, hi


def design_estimator_gain(
    leader: LeaderModel,
    sc: SpectralConstants,
    R0: ArrayLike | None = None,
    Q0: ArrayLike | None = None,
    epsilon: float = 1.0,
    kappa0: float | None = None,
    delta: float = 1e-2,
) -> EstimatorGainCertificate:
    """K0 = kappa0 P0^{-1} C0^T R0^{-1} with a certified (P0, beta) pair.

    P0 comes from a Riccati equation with margin delta (first inequality);
    beta is then bisected for that P0 (second inequality). kappa0 defaults to
    the geometric midpoint of (1/lambda_m, epsilon/sigma_m), or 2/lambda_m
    when no bad graph carries any coupling.
    """
    A0, C0 = leader.A0, leader.C0
    r, p = leader.r, leader.p
    R0 = np.eye(p) if R0 is None else np.asarray(R0, float)
    Q0 = 4.0 * np.eye(r) if Q0 is None else np.asarray(Q0, float)
    if np.linalg.eigvalsh(_sym(R0))[0] <= 0 or np.linalg.eigvalsh(_sym(Q0))[0] <= 1.0:
        raise CertificationError("design weights need R0 > 0 and Q0 > I")
    P0, used_delta = _solve_first_constraint(A0, C0, R0, Q0, delta)
    beta = minimal_beta(P0, A0, C0, R0, epsilon)
    lo, hi = kappa_interval(sc, epsilon)
    if lo >= hi:
        raise EmptyGainInterval(
            f"kappa0 interval ({lo:.4g}, {hi:.4g}) is empty; raise epsilon or change graphs"
        )
    if kappa0 is None:
        kappa0 = 2.0 * lo if math.isinf(hi) else math.sqrt(lo * hi)
    elif not lo < kappa0 < hi:
        raise EmptyGainInterval(f"kappa0 = {kappa0} outside ({lo:.4g}, {hi:.4g})")
    K0 = kappa0 * np.linalg.solve(P0, C0.T @ np.linalg.inv(R0))
    alpha = float(np.linalg.eigvalsh(_sym(Q0))[0] / np.linalg.eigvalsh(P0)[-1])
    return EstimatorGainCertificate(
        K0=K0,
        P0=P0,
        beta=beta,
        kappa0=float(kappa0),
        epsilon=float(epsilon),
        R0=R0,
        Q0=Q0,
        alpha=alpha,
        kappa_interval=(lo, hi),
        margin_first=-_max_eig(first_constraint(P0, A0, C0, R0, Q0)),
        margin_second=-_max_eig(second_constraint(P0, A0, C0, R0, beta, epsilon)),
        delta=used_delta,
        constants=sc.to_dict(),
    )


def design_containment_estimator_gain(
    leader: LeaderModel,
    sc_bar: SpectralConstants,
    R0: ArrayLike | None = None,
    Q0: ArrayLike | None = None,
    epsilon: float = 1.0,
    kappa0: float | None = None,
    delta: float = 1e-2,
) -> EstimatorGainCertificate:
    """Same design with constants computed from the summed matrices sum_k H_k."""
    return design_estimator_gain(leader, sc_bar, R0, Q0, epsilon, kappa0, delta)


# --------------------------------------------------------------------------
# state feedback and coupling gains


def design_state_feedback(plant: LinearPlant, margin: float = HURWITZ_MARGIN) -> NDArray:
    """LQR gain on the shifted pair (A + margin I, B) with identity weights."""
    A, B = plant.A, plant.B
    n, m = plant.n, plant.m
    for lam in np.linalg.eigvals(A):
        if lam.real >= -margin:
            pbh = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(pbh, tol=1e-9) < n:
                raise StabilizabilityFailure(
                    f"agent {plant.agent_id}: mode {lam:.4g} not controllable"
                )
    try:
        P = sla.solve_continuous_are(A + margin * np.eye(n), B, np.eye(n), np.eye(m))
    except (np.linalg.LinAlgError, ValueError) as err:
        raise StabilizabilityFailure(f"agent {plant.agent_id}: {err}") from err
    return -B.T @ P


def certify_state_feedback(plant: LinearPlant, K1: ArrayLike) -> float:
    """Spectral abscissa of A + B K1; raises unless negative."""
    K1 = np.atleast_2d(np.asarray(K1, float))
    a = spectral_abscissa(plant.A + plant.B @ K1)
    if a >= 0:
        raise CertificationError(f"agent {plant.agent_id}: A + B K1 not Hurwitz (abscissa {a:.4g})")
    return a


def coupling_gains(
    reg: RegulatorSolution, form: FormationShape, K1: ArrayLike
) -> tuple[NDArray, NDArray]:
    """K2 = U - K1 X and K3 = U_h - K1 X_h."""
    K1 = np.atleast_2d(np.asarray(K1, float))
    return reg.U - K1 @ reg.X, form.U_h - K1 @ form.X_h


# --------------------------------------------------------------------------
# augmented observer


def augmented_matrices(plant: LinearPlant) -> tuple[NDArray, NDArray, NDArray]:
    """(A_bar, C_bar, B_rho) for the error state rho = (x_tilde, ya_tilde)."""
    n, p = plant.n, plant.p
    A_bar = sla.block_diag(plant.A, np.zeros((p, p)))
    C_bar = np.hstack([plant.C, np.eye(p)])
    B_rho = np.vstack([np.zeros((n, p)), np.eye(p)])
    return A_bar, C_bar, B_rho


def observer_matrix(plant: LinearPlant, L: ArrayLike, M: ArrayLike) -> NDArray:
    """A_rho = [[A - L C, -L], [-M C, -M]] = A_bar - [L; M] C_bar."""
    A_bar, C_bar, _ = augmented_matrices(plant)
    G = np.vstack([np.atleast_2d(np.asarray(L, float)), np.atleast_2d(np.asarray(M, float))])
    return A_bar - G @ C_bar


def _obsv_rank(A: NDArray, C: NDArray) -> int:
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks), tol=1e-9))


def check_augmented_observability(plant: LinearPlant) -> bool:
    """Observability of (A, C A), equivalent to that of (A_bar, C_bar)."""
    return _obsv_rank(plant.A, plant.C @ plant.A) == plant.n


def certify_observer(plant: LinearPlant, L: ArrayLike, M: ArrayLike, Q_rho: ArrayLike | None = None):
    """Solve P A_rho + A_rho^T P = -Q_rho and check P > 0."""
    A_rho = observer_matrix(plant, L, M)
    k = A_rho.shape[0]
    Q_rho = np.eye(k) if Q_rho is None else np.asarray(Q_rho, float)
    if spectral_abscissa(A_rho) >= 0:
        raise LyapunovFailure(f"agent {plant.agent_id}: A_rho is not Hurwitz")
    P = _sym(sla.solve_continuous_lyapunov(A_rho.T, -Q_rho))
    res = float(np.linalg.norm(P @ A_rho + A_rho.T @ P + Q_rho))
    if np.linalg.eigvalsh(P)[0] <= PD_TOL or res > 1e-8 * max(1.0, np.linalg.norm(P)):
        raise LyapunovFailure(f"agent {plant.agent_id}: Lyapunov certificate failed (res {res:.2e})")
    return P, Q_rho, res


def design_observer_gains(plant: LinearPlant, margin: float = HURWITZ_MARGIN):
    """(L, M, P_rho, Q_rho) placing eig(A_rho) left of -margin.

    [L; M] is the Kalman-type gain of the dual shifted Riccati equation for
    (A_bar + margin I, C_bar) with identity weights.
    """
    if not check_augmented_observability(plant):
        raise ObservabilityFailure(f"agent {plant.agent_id}: (A, C A) is not observable")
    A_bar, C_bar, _ = augmented_matrices(plant)
    k, p = A_bar.shape[0], plant.p
    try:
        S = sla.solve_continuous_are((A_bar + margin * np.eye(k)).T, C_bar.T, np.eye(k), np.eye(p))
    except (np.linalg.LinAlgError, ValueError) as err:
        raise ObservabilityFailure(f"agent {plant.agent_id}: {err}") from err
    G = S @ C_bar.T
    L, M = G[: plant.n], G[plant.n :]
    P_rho, Q_rho, _ = certify_observer(plant, L, M)
    return L, M, P_rho, Q_rho


# --------------------------------------------------------------------------
# compensation gains


def output_rho_gains(plant: LinearPlant, P_rho: NDArray) -> dict[str, NDArray]:
    """Maps ytilde -> rho_bar for the measurable realizations of rho_bar.

    ``structured``: the weighting C_bar^T C_bar P C_bar^T C_bar is matched to
    P_rho in least squares with P = K^+ P_rho K^+ (K = C_bar^T C_bar); then
    rho_bar = C_bar P C_bar^T ytilde since C_bar B_rho = I.
    ``output``: rho_bar = B_rho^T P_rho C_bar^+ ytilde, the minimum-norm
    reconstruction of rho from ytilde.
    """
    _, C_bar, B_rho = augmented_matrices(plant)
    K = C_bar.T @ C_bar
    Kp = np.linalg.pinv(K)
    P_fit = _sym(Kp @ P_rho @ Kp)
    F_struct = C_bar @ P_fit @ C_bar.T
    F_out = B_rho.T @ P_rho @ np.linalg.pinv(C_bar)
    residual = float(np.linalg.norm(K @ P_fit @ K - P_rho) / np.linalg.norm(P_rho))
    return {"structured": F_struct, "output": F_out, "structured_residual": residual}


# --------------------------------------------------------------------------
# per-agent bundle


@dataclass(frozen=True)
class AgentGainSet:
    K1: NDArray[np.float64]
    K2: NDArray[np.float64]
    K3: NDArray[np.float64]
    L: NDArray[np.float64]
    M: NDArray[np.float64]
    P_rho: NDArray[np.float64]
    Q_rho: NDArray[np.float64]
    source: str = "auto"
    feedback_abscissa: float = 0.0
    observer_abscissa: float = 0.0
    lyapunov_residual: float = 0.0
    F_structured: NDArray | None = None
    F_output: NDArray | None = None
    structured_residual: float = 0.0

    def to_dict(self) -> dict:
        d = {}
        for k in ("K1", "K2", "K3", "L", "M", "P_rho", "Q_rho", "F_structured", "F_output"):
            v = getattr(self, k)
            d[k] = None if v is None else np.asarray(v).tolist()
        d.update(
            source=self.source,
            feedback_abscissa=self.feedback_abscissa,
            observer_abscissa=self.observer_abscissa,
            lyapunov_residual=self.lyapunov_residual,
            structured_residual=self.structured_residual,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentGainSet":
        arr = {k: (None if d.get(k) is None else np.atleast_2d(np.asarray(d[k], float)))
               for k in ("K1", "K2", "K3", "L", "M", "P_rho", "Q_rho", "F_structured", "F_output")}
        return cls(
            source=d.get("source", "auto"),
            feedback_abscissa=float(d.get("feedback_abscissa", 0.0)),
            observer_abscissa=float(d.get("observer_abscissa", 0.0)),
            lyapunov_residual=float(d.get("lyapunov_residual", 0.0)),
            structured_residual=float(d.get("structured_residual", 0.0)),
            **arr,
        )


def design_agent_gains(
    plant: LinearPlant,
    reg: RegulatorSolution,
    form: FormationShape,
    explicit: dict | None = None,
    margin: float = HURWITZ_MARGIN,
    k_tol: float = 1e-6,
) -> AgentGainSet:
    """Design (or certify explicitly supplied) K1, K2, K3, L, M for one agent."""
    explicit = explicit or {}
    source = "explicit" if explicit else "auto"
    if "K1" in explicit:
        K1 = np.atleast_2d(np.asarray(explicit["K1"], float))
    else:
        K1 = design_state_feedback(plant, margin)
    fb = certify_state_feedback(plant, K1)
    K2, K3 = coupling_gains(reg, form, K1)
    for name, computed in (("K2", K2), ("K3", K3)):
        if name in explicit:
            given = np.atleast_2d(np.asarray(explicit[name], float))
            gap = float(np.max(np.abs(given - computed)))
            if gap > k_tol:
                log.warning(
                    "agent %d: supplied %s differs from U - K1 X by %.3g; using the exact value",
                    plant.agent_id, name, gap,
                )
    if "L" in explicit and "M" in explicit:
        L = np.atleast_2d(np.asarray(explicit["L"], float))
        M = np.atleast_2d(np.asarray(explicit["M"], float))
        P_rho, Q_rho, res = certify_observer(plant, L, M)
    else:
        L, M, P_rho, Q_rho = design_observer_gains(plant, margin)
        _, _, res = certify_observer(plant, L, M)
    F = output_rho_gains(plant, P_rho)
    return AgentGainSet(
        K1=K1, K2=K2, K3=K3, L=L, M=M, P_rho=P_rho, Q_rho=Q_rho, source=source,
        feedback_abscissa=fb,
        observer_abscissa=spectral_abscissa(observer_matrix(plant, L, M)),
        lyapunov_residual=res,
        F_structured=F["structured"],
        F_output=F["output"],
        structured_residual=F["structured_residual"],
    )
