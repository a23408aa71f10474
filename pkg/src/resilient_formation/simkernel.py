"""Fixed-step RK4 simulation of the full closed loop.

The rate field is assembled once per topology into a dense linear operator;
only the compensation terms (f, epshat') are evaluated nonlinearly. A
reference evaluator built from :mod:`protocol` computes the same field agent
by agent and is used to cross-check the assembly.

State layout (flat vector): leaders x_k, then per agent
(x_i, h_i, zeta_i, xhat_i, yhat^a_i, epshat_i).
"""

from __future__ import annotations

import bisect
import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from . import protocol
from .errors import EventStraddle, NonFinite, DegenerateSeries
from .graphmodel import Digraph, laplacian
from .plantmodel import FormationShape, LinearPlant, RegulatorSolution
from .protocol import CompensationConfig
from .switching import SwitchingSchedule, sigma_at
from .synthesis import AgentGainSet, augmented_matrices
from .threat import AttackProfile, StackedAttacks, attack_signal

log = logging.getLogger(__name__)

MODES = ("resilient", "standard")
BLOWUP_NORM = 1e12


@dataclass(frozen=True)
class AgentModel:
    plant: LinearPlant
    reg: RegulatorSolution
    shape: FormationShape
    gains: AgentGainSet
    attack: AttackProfile


@dataclass(frozen=True)
class ClosedLoop:
    """Everything needed to integrate one run."""

    agents: tuple[AgentModel, ...]
    A0: NDArray
    C0: NDArray
    K0: NDArray
    graphs: tuple[Digraph, ...]
    schedule: SwitchingSchedule
    compensation: CompensationConfig
    gamma: NDArray

    @property
    def n_leaders(self) -> int:
        return self.graphs[0].n_leaders

    @property
    def n_agents(self) -> int:
        return len(self.agents)


class Layout:
    """Slices of every block in the flat state vector."""

    def __init__(self, sys: ClosedLoop):
        r = sys.A0.shape[0]
        self.r = r
        off = 0
        self.leaders = []
        for _ in range(sys.n_leaders):
            self.leaders.append(slice(off, off + r))
            off += r
        self.blocks = []
        for ag in sys.agents:
            n, p, q = ag.plant.n, ag.plant.p, ag.shape.q
            b = {}
            for name, size in (("x", n), ("h", q), ("zeta", r), ("xhat", n), ("ya", p), ("eps", p)):
                b[name] = slice(off, off + size)
                off += size
            self.blocks.append(b)
        self.size = off
        self.eps_idx = np.concatenate([np.arange(b["eps"].start, b["eps"].stop) for b in self.blocks])
        self.ya_idx = np.concatenate([np.arange(b["ya"].start, b["ya"].stop) for b in self.blocks])


@dataclass
class WorldState:
    t: float
    s: NDArray[np.float64]
    layout: Layout = field(repr=False)

    def block(self, agent: int, name: str) -> NDArray:
        return self.s[self.layout.blocks[agent][name]]

    def leader(self, k: int = 0) -> NDArray:
        return self.s[self.layout.leaders[k]]

    def copy(self) -> "WorldState":
        return WorldState(self.t, self.s.copy(), self.layout)


class AssembledField:
    """s' = A_g s + W ya(t), plus f(rho_bar) on the yhat^a rows and epshat' = adaptive(rho_bar)."""

    def __init__(self, sys: ClosedLoop, mode: str = "resilient"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.sys = sys
        self.mode = mode
        self.lay = lay = Layout(sys)
        N = sys.n_agents
        size = lay.size
        p_tot = sum(ag.plant.p for ag in sys.agents)
        self.p_sizes = [ag.plant.p for ag in sys.agents]
        self._ya_off = np.cumsum([0] + self.p_sizes)
        base = np.zeros((size, size))
        W = np.zeros((size, p_tot))
        Gs = np.zeros((p_tot, size))
        Ga = np.zeros((p_tot, p_tot))
        A0, C0, K0 = sys.A0, sys.C0, sys.K0
        for k, sl in enumerate(lay.leaders):
            base[sl, sl] = A0
        resilient = mode == "resilient"
        for i, ag in enumerate(sys.agents):
            b = lay.blocks[i]
            A, B, C = ag.plant.A, ag.plant.B, ag.plant.C
            g = ag.gains
            ps = slice(self._ya_off[i], self._ya_off[i + 1])
            # u = K1 xhat + K2 zeta + K3 h
            for tgt in ("x", "xhat"):
                base[b[tgt], b[tgt]] += A
                base[b[tgt], b["xhat"]] += B @ g.K1
                base[b[tgt], b["zeta"]] += B @ g.K2
                base[b[tgt], b["h"]] += B @ g.K3
            base[b["h"], b["h"]] = ag.shape.A_h
            base[b["zeta"], b["zeta"]] += A0
            # ytilde = C x + ya - C xhat - yhat^a
            base[b["xhat"], b["x"]] += g.L @ C
            base[b["xhat"], b["xhat"]] -= g.L @ C
            W[b["xhat"], ps] = g.L
            if resilient:
                base[b["xhat"], b["ya"]] -= g.L
                base[b["ya"], b["x"]] += g.M @ C
                base[b["ya"], b["xhat"]] -= g.M @ C
                base[b["ya"], b["ya"]] -= g.M
                W[b["ya"], ps] = g.M
                src = sys.compensation.rho_source
                if src == "state":
                    _, _, B_rho = augmented_matrices(ag.plant)
                    R = B_rho.T @ g.P_rho  # acts on (x - xhat, ya - yhat^a)
                    n = ag.plant.n
                    Gs[ps, b["x"]] = R[:, :n]
                    Gs[ps, b["xhat"]] = -R[:, :n]
                    Gs[ps, b["ya"]] = -R[:, n:]
                    Ga[ps, ps] = R[:, n:]
                else:
                    F = g.F_structured if src == "structured" else g.F_output
                    Gs[ps, b["x"]] = F @ C
                    Gs[ps, b["xhat"]] = -F @ C
                    Gs[ps, b["ya"]] = -F
                    Ga[ps, ps] = F
        self._base, self._W, self._Gs, self._Ga = base, W, Gs, Ga
        self._ops: dict[int, NDArray] = {}
        self.event_times = sys.schedule.times
        self._attacks = StackedAttacks([ag.attack for ag in sys.agents])
        v0 = sys.compensation.vartheta0
        self._v0 = np.concatenate([
            np.asarray(v0[:p] if len(v0) >= p else (v0[0],) * p, float) for p in self.p_sizes
        ])

    def operator(self, gidx: int) -> NDArray:
        """Linear part for graph gidx (estimator coupling differs per graph)."""
        if gidx in self._ops:
            return self._ops[gidx]
        sys, lay = self.sys, self.lay
        g = sys.graphs[gidx]
        Aop = self._base.copy()
        KC = sys.K0 @ sys.C0
        H = laplacian(g) + np.diag(g.leader_links.sum(axis=0))
        N = sys.n_agents
        for i in range(N):
            zi = lay.blocks[i]["zeta"]
            for j in range(N):
                if H[i, j] != 0:
                    Aop[zi, lay.blocks[j]["zeta"]] -= H[i, j] * KC
            for k, lk in enumerate(lay.leaders):
                if g.leader_links[k, i] != 0:
                    Aop[zi, lk] += g.leader_links[k, i] * KC
        self._ops[gidx] = Aop
        return Aop

    def attacks(self, t: float) -> NDArray:
        return self._attacks(t)

    def rho_bar(self, t: float, s: NDArray, ya: NDArray | None = None) -> NDArray:
        ya = self.attacks(t) if ya is None else ya
        return self._Gs @ s + self._Ga @ ya

    def __call__(self, t: float, s: NDArray, gidx: int) -> NDArray:
        ya = self.attacks(t)
        ds = self.operator(gidx) @ s + self._W @ ya
        if self.mode == "resilient":
            rb = self._Gs @ s + self._Ga @ ya
            th = np.exp(-self._v0 * t)
            den = np.sqrt(rb**2 + th**2)
            eps = s[self.lay.eps_idx]
            ds[self.lay.ya_idx] += rb / den * eps
            ds[self.lay.eps_idx] = rb**2 / den
        return ds


def reference_rate(
    sys: ClosedLoop, mode: str, t: float, s: NDArray, gidx: int, containment: bool | None = None
) -> NDArray:
    """Agent-by-agent evaluation of the same field from the protocol laws.

    ``containment`` forces the multi-leader error law (default: only when
    there is more than one leader).
    """
    lay = Layout(sys)
    g = sys.graphs[gidx]
    out = np.zeros_like(s)
    leaders = [s[sl] for sl in lay.leaders]
    for sl, xk in zip(lay.leaders, leaders):
        out[sl] = sys.A0 @ xk
    zetas = np.array([s[b["zeta"]] for b in lay.blocks])
    if containment is None:
        containment = sys.n_leaders > 1
    if not containment:
        xi = protocol.consensus_error(zetas, leaders[0], g)
    else:
        xi = protocol.containment_error(zetas, leaders, g)
    cfg = sys.compensation
    for i, ag in enumerate(sys.agents):
        b = lay.blocks[i]
        pl, gn = ag.plant, ag.gains
        x, h, zeta, xhat = s[b["x"]], s[b["h"]], s[b["zeta"]], s[b["xhat"]]
        ya_hat, eps = s[b["ya"]], s[b["eps"]]
        u = protocol.control(xhat, zeta, h, gn.K1, gn.K2, gn.K3)
        ya = attack_signal(ag.attack, t)
        yc = pl.C @ x + ya
        out[b["x"]] = pl.A @ x + pl.B @ u
        out[b["h"]] = ag.shape.A_h @ h
        out[b["zeta"]] = protocol.estimator_rate(zeta, xi[i], sys.K0, sys.A0, sys.C0)
        if mode == "resilient":
            yt = protocol.residual(yc, xhat, ya_hat, pl.C)
            if cfg.rho_source == "state":
                _, _, B_rho = augmented_matrices(pl)
                rho = np.concatenate([x - xhat, ya - ya_hat])
                rb = B_rho.T @ gn.P_rho @ rho
            else:
                F = gn.F_structured if cfg.rho_source == "structured" else gn.F_output
                rb = F @ yt
            p = pl.p
            v0 = cfg.vartheta0 if len(cfg.vartheta0) >= p else (cfg.vartheta0[0],) * p
            ci = CompensationConfig(tuple(v0[:p]), cfg.rho_source)
            f = protocol.compensation(rb, eps, t, ci)
            out[b["ya"]] = protocol.attack_estimator_rate(yt, f, gn.M)
            out[b["eps"]] = protocol.adaptive_rate(rb, t, ci)
        else:
            yt = protocol.residual(yc, xhat, np.zeros(pl.p), pl.C)
        out[b["xhat"]] = protocol.observer_rate(xhat, u, yt, pl.A, pl.B, gn.L)
    return out


def _rk4(fun, t, s, dt, gidx):
    k1 = fun(t, s, gidx)
    k2 = fun(t + 0.5 * dt, s + 0.5 * dt * k1, gidx)
    k3 = fun(t + 0.5 * dt, s + 0.5 * dt * k2, gidx)
    k4 = fun(t + dt, s + dt * k3, gidx)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(ws: WorldState, dt: float, fld: AssembledField) -> WorldState:
    """One RK4 step with the topology frozen over [t, t + dt)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0, t1 = ws.t, ws.t + dt
    tol = 1e-9 * dt
    times = fld.event_times
    k = bisect.bisect_right(times, t0 + tol)
    if k < len(times) and times[k] < t1 - tol:
        raise EventStraddle(f"switching event at {times[k]} lies inside ({t0}, {t1})")
    gidx = sigma_at(fld.sys.schedule, min(t0 + tol, fld.sys.schedule.horizon))
    s_new = _rk4(fld, t0, ws.s, dt, gidx)
    if not np.all(np.isfinite(s_new)):
        raise NonFinite(f"state became non-finite at t = {t1:.6g}")
    return WorldState(t1, s_new, ws.layout)


@dataclass
class Trajectory:
    t: NDArray
    states: NDArray
    layout: Layout = field(repr=False)
    mode: str = "resilient"
    diverged: bool = False
    blowup_time: float | None = None
    series: dict = field(default_factory=dict)

    def final(self, name: str) -> NDArray:
        return self.series[name][-1]


def initial_state(
    sys: ClosedLoop,
    leader_states: Sequence,
    x0s: Sequence,
    xhat0s: Sequence,
    zeta0s: Sequence,
) -> WorldState:
    lay = Layout(sys)
    s = np.zeros(lay.size)
    for sl, xk in zip(lay.leaders, leader_states):
        s[sl] = xk
    for i, ag in enumerate(sys.agents):
        b = lay.blocks[i]
        s[b["x"]] = x0s[i]
        s[b["h"]] = ag.shape.h0
        s[b["zeta"]] = zeta0s[i]
        s[b["xhat"]] = xhat0s[i]
    return WorldState(0.0, s, lay)


def derived_series(sys: ClosedLoop, traj: Trajectory) -> dict:
    """Error signals along the sampled trajectory."""
    lay = traj.layout
    S = traj.states
    gamma = np.asarray(sys.gamma, float)
    xc = sum(gamma[k] * S[:, sl] for k, sl in enumerate(lay.leaders))
    ya = np.array([
        np.concatenate([attack_signal(ag.attack, t) for ag in sys.agents]) for t in traj.t
    ])
    off = np.cumsum([0] + [ag.plant.p for ag in sys.agents])
    N = sys.n_agents
    xi_n, xt_n, yat_n, e_all, y_all, id_err = [], [], [], [], [], []
    for i, ag in enumerate(sys.agents):
        b = lay.blocks[i]
        C = ag.plant.C
        x, h, z, xh, yh = S[:, b["x"]], S[:, b["h"]], S[:, b["zeta"]], S[:, b["xhat"]], S[:, b["ya"]]
        xi_n.append(np.linalg.norm(z - xc, axis=1))
        xt_n.append(np.linalg.norm(x - xh, axis=1))
        yat_n.append(np.linalg.norm(ya[:, off[i]:off[i + 1]] - yh, axis=1))
        y = x @ C.T
        e = y - h @ ag.shape.C_h.T - xc @ sys.C0.T
        xbar = x - xc @ ag.reg.X.T - h @ ag.shape.X_h.T
        id_err.append(np.max(np.abs(e - xbar @ C.T), axis=1))
        e_all.append(e)
        y_all.append(y)
    e_stack = np.stack(e_all, axis=1)
    E = np.sqrt(np.sum(e_stack**2, axis=(1, 2))) / N
    return {
        "xi_norm": np.stack(xi_n, axis=1),
        "xtilde_norm": np.stack(xt_n, axis=1),
        "yatilde_norm": np.stack(yat_n, axis=1),
        "e": e_stack,
        "y": np.stack(y_all, axis=1),
        "E": E,
        "identity_error": np.max(np.stack(id_err, axis=1), axis=1),
        "epshat": S[:, lay.eps_idx],
    }


def simulate(
    sys: ClosedLoop,
    ws0: WorldState,
    dt: float = 1e-3,
    horizon: float | None = None,
    mode: str = "resilient",
    decimate: int = 10,
    raise_on_divergence: bool = False,
) -> Trajectory:
    """Integrate from ws0 to the horizon, sampling every ``decimate`` steps."""
    horizon = sys.schedule.horizon if horizon is None else horizon
    n_steps = int(round(horizon / dt))
    fld = AssembledField(sys, mode)
    times = [0.0]
    states = [ws0.s.copy()]
    ws = ws0
    diverged, blowup = False, None
    for k in range(1, n_steps + 1):
        try:
            nxt = step(ws, dt, fld)
        except NonFinite:
            if raise_on_divergence:
                raise
            diverged, blowup = True, ws.t
            break
        # re-anchor time on the grid to avoid drift
        ws = WorldState(k * dt, nxt.s, nxt.layout)
        if np.max(np.abs(ws.s)) > BLOWUP_NORM:
            if raise_on_divergence:
                raise NonFinite(f"state norm exceeded {BLOWUP_NORM:g} at t = {ws.t:.6g}")
            diverged, blowup = True, ws.t
            times.append(ws.t)
            states.append(ws.s.copy())
            break
        if k % decimate == 0 or k == n_steps:
            times.append(ws.t)
            states.append(ws.s.copy())
    traj = Trajectory(np.array(times), np.array(states), fld.lay, mode, diverged, blowup)
    traj.series = derived_series(sys, traj)
    return traj


def decay_fit(
    t: NDArray, series: NDArray, floor: float = 1e-12
) -> tuple[float, float, float]:
    """Fit series ~ c exp(-rate t) on the tail half; returns (rate, c, rms log residual).

    Samples at or below ``floor * max(series)`` count as zero (round-off
    floor); the fit then uses the prefix before the first such sample.
    """
    t = np.asarray(t, float)
    y = np.asarray(series, float)
    if t.size < 3 or t[-1] - t[0] <= 0:
        raise DegenerateSeries("need at least three samples over a positive span")
    if np.any(y < 0) or not np.all(np.isfinite(y)):
        raise DegenerateSeries("series must be finite and nonnegative")
    zero = np.flatnonzero(y <= floor * y.max())
    if zero.size:
        if zero[0] < 3:
            raise DegenerateSeries("series reaches zero before a fit is possible")
        t, y = t[: zero[0]], y[: zero[0]]
    mid = t[0] + 0.5 * (t[-1] - t[0])
    sel = t >= mid
    A = np.vstack([np.ones(sel.sum()), t[sel]]).T
    coef, *_ = np.linalg.lstsq(A, np.log(y[sel]), rcond=None)
    res = np.log(y[sel]) - A @ coef
    return float(-coef[1]), float(math.exp(coef[0])), float(np.sqrt(np.mean(res**2)))


def write_csv(path: str | Path, traj: Trajectory) -> None:
    ser = traj.series
    N = ser["y"].shape[1]
    p = ser["y"].shape[2]
    header = ["t"]
    header += [f"y{i + 1}_{j + 1}" for i in range(N) for j in range(p)]
    header += [f"e{i + 1}_{j + 1}" for i in range(N) for j in range(p)]
    header += [f"xi_norm{i + 1}" for i in range(N)]
    header += [f"xtilde_norm{i + 1}" for i in range(N)]
    header += [f"yatilde_norm{i + 1}" for i in range(N)]
    header += ["E"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(traj.t):
            row = [t, *ser["y"][k].ravel(), *ser["e"][k].ravel(), *ser["xi_norm"][k],
                   *ser["xtilde_norm"][k], *ser["yatilde_norm"][k], ser["E"][k]]
            w.writerow([repr(float(v)) for v in row])


def summary(traj: Trajectory) -> dict:
    ser = traj.series
    out = {
        "mode": traj.mode,
        "t_final": float(traj.t[-1]),
        "diverged": traj.diverged,
        "blowup_time": traj.blowup_time,
        "E_initial": float(ser["E"][0]),
        "E_final": float(ser["E"][-1]),
        "max_xi_norm_final": float(ser["xi_norm"][-1].max()),
        "max_xtilde_norm_final": float(ser["xtilde_norm"][-1].max()),
        "max_yatilde_norm_final": float(ser["yatilde_norm"][-1].max()),
        "max_e_norm_final": float(np.linalg.norm(ser["e"][-1], axis=1).max()),
        "max_identity_error": float(ser["identity_error"].max()),
    }
    if not traj.diverged and traj.t[-1] > 5.0:
        try:
            rate, pref, res = decay_fit(traj.t, ser["xi_norm"].max(axis=1))
            out["xi_decay_fit"] = {"rate": rate, "prefactor": pref, "residual": res}
        except DegenerateSeries as err:
            out["xi_decay_fit"] = {"error": str(err)}
    return out


def write_summary(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def run(config, mode: str | None = None, gains: dict | None = None, **overrides) -> Trajectory:
    """Build an experiment from an ExperimentConfig and integrate it.

    ``overrides`` may set ``dt``, ``horizon`` or ``decimate``.
    """
    from .config import build_experiment  # config depends on this module

    cfg = copy.deepcopy(config)
    for key in ("dt", "horizon", "decimate"):
        if overrides.get(key) is not None:
            cfg.integrator[key] = overrides[key]
    ex = build_experiment(cfg, gains)
    mode = mode or (cfg.mode if cfg.mode != "both" else "resilient")
    return simulate(
        ex.system,
        ex.initial_state(),
        dt=cfg.dt,
        horizon=cfg.horizon,
        mode=mode,
        decimate=int(cfg.integrator.get("decimate", 10)),
    )
