"""Piecewise-constant switching signals over a topology set.

An event ``(t_k, g)`` means graph ``g`` is active on ``[t_k, t_{k+1})``. The
activation ratio is audited from t_eps = 0, the strictest reading of the
connected/bad time-share condition.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateSchedule, InfeasibleRequest, OutOfHorizon
from .graphmodel import (
    Digraph,
    has_leader_rooted_spanning_tree,
    satisfies_containment_reachability,
)

_TIME_EPS = 1e-12


@dataclass(frozen=True)
class TopologySet:
    graphs: tuple[Digraph, ...]
    connected_set: tuple[int, ...]
    bad_set: tuple[int, ...]

    @classmethod
    def classify(cls, graphs: Sequence[Digraph]) -> "TopologySet":
        """Split graphs into the connected and bad index sets.

        Single-leader graphs need a leader-rooted spanning tree; multi-leader
        graphs need the well-informed/uninformed reachability structure.
        """
        connected, bad = [], []
        for idx, g in enumerate(graphs):
            ok = (
                has_leader_rooted_spanning_tree(g)
                if g.n_leaders == 1
                else satisfies_containment_reachability(g)
            )
            (connected if ok else bad).append(idx)
        return cls(tuple(graphs), tuple(connected), tuple(bad))

    def __len__(self) -> int:
        return len(self.graphs)

    def is_connected(self, idx: int) -> bool:
        return idx in self.connected_set


@dataclass(frozen=True)
class SwitchingSchedule:
    events: tuple[tuple[float, int], ...]
    horizon: float
    dwell_floor: float = 0.0
    avg_dwell: float = math.inf
    chatter_bound: float = 0.0
    ratio_bound: float = math.inf

    def __post_init__(self) -> None:
        ev = tuple((float(t), int(g)) for t, g in self.events)
        object.__setattr__(self, "events", ev)
        times = [t for t, _ in ev]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DegenerateSchedule("event times must be strictly increasing")
        if ev and ev[0][0] != 0.0:
            raise DegenerateSchedule("first event must be at t = 0")

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.events]

    def intervals(self) -> list[tuple[float, float, int]]:
        out = []
        for k, (t, g) in enumerate(self.events):
            end = self.events[k + 1][0] if k + 1 < len(self.events) else self.horizon
            out.append((t, end, g))
        return out

    def snap_to_grid(self, dt: float) -> "SwitchingSchedule":
        """Round event times to multiples of dt, merging collapsed intervals."""
        snapped: list[tuple[float, int]] = []
        for t, g in self.events:
            ts = round(t / dt) * dt
            if snapped and abs(ts - snapped[-1][0]) < 0.5 * dt:
                snapped[-1] = (snapped[-1][0], g)
            elif snapped and snapped[-1][1] == g:
                continue
            else:
                snapped.append((ts, g))
        merged = [snapped[0]]
        for t, g in snapped[1:]:
            if g != merged[-1][1]:
                merged.append((t, g))
        return SwitchingSchedule(
            tuple(merged), self.horizon, self.dwell_floor, self.avg_dwell,
            self.chatter_bound, self.ratio_bound,
        )

    def to_dict(self) -> dict:
        return {
            "events": [[t, g] for t, g in self.events],
            "horizon": self.horizon,
            "dwell_floor": self.dwell_floor,
            "avg_dwell": None if math.isinf(self.avg_dwell) else self.avg_dwell,
            "chatter_bound": self.chatter_bound,
            "ratio_bound": None if math.isinf(self.ratio_bound) else self.ratio_bound,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SwitchingSchedule":
        def _f(v):
            return math.inf if v is None else float(v)

        return cls(
            tuple((float(t), int(g)) for t, g in d["events"]),
            float(d["horizon"]),
            float(d.get("dwell_floor", 0.0)),
            _f(d.get("avg_dwell")),
            float(d.get("chatter_bound", 0.0)),
            _f(d.get("ratio_bound")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SwitchingSchedule":
        return cls.from_dict(json.loads(text))


def sigma_at(s: SwitchingSchedule, t: float) -> int:
    """Graph index active at t (right-continuous)."""
    if not s.events:
        raise DegenerateSchedule("schedule has no events")
    if t < 0 or t > s.horizon + _TIME_EPS:
        raise OutOfHorizon(f"t = {t} outside [0, {s.horizon}]")
    k = bisect.bisect_right(s.times, t) - 1
    return s.events[k][1]


def activation_times(
    s: SwitchingSchedule, ts: TopologySet, t: float
) -> tuple[float, float]:
    """(T^c(t), T^b(t)) accumulated from 0 to t."""
    tc = tb = 0.0
    for start, end, g in s.intervals():
        if start >= t:
            break
        span = min(end, t) - start
        if ts.is_connected(g):
            tc += span
        else:
            tb += span
    return tc, tb


def activation_series(
    s: SwitchingSchedule, ts: TopologySet, sample_times: Sequence[float]
) -> np.ndarray:
    """Rows (t, T^c, T^b) for the requested times."""
    return np.array([(t, *activation_times(s, ts, t)) for t in sample_times])


def write_activation_csv(
    path: str | Path, s: SwitchingSchedule, ts: TopologySet, dt: float = 0.01
) -> None:
    grid = np.linspace(0.0, s.horizon, int(round(s.horizon / dt)) + 1)
    rows = activation_series(s, ts, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "T_c", "T_b"])
        for r in rows:
            w.writerow([f"{v:.12g}" for v in r])


def required_chatter_bound(s: SwitchingSchedule, tau_a: float) -> float:
    """Smallest N_0 with N(t_j, t_l) <= N_0 + (t_l - t_j)/tau_a over all event pairs.

    Switches are the events after the initial one; the worst window starts
    just before a switch and ends just after another.
    """
    sw = [t for t, _ in s.events[1:]]
    if not sw or math.isinf(tau_a):
        return float(len(sw))
    n0 = 0.0
    for j in range(len(sw)):
        for l in range(j, len(sw)):
            n0 = max(n0, (l - j + 1) - (sw[l] - sw[j]) / tau_a)
    return n0


def realized_ratio(s: SwitchingSchedule, ts: TopologySet) -> float:
    """sup_t T^b(t)/T^c(t); the sup is attained at the end of a bad interval."""
    worst = 0.0
    for _, end, g in s.intervals():
        if ts.is_connected(g):
            continue
        tc, tb = activation_times(s, ts, end)
        if tc <= 0.0:
            return math.inf
        worst = max(worst, tb / tc)
    return worst


@dataclass
class ValidationReport:
    dwell_ok: bool
    min_interval: float
    realized_avg_dwell: float
    required_avg_dwell: float
    avg_dwell_ok: bool
    chatter_bound_required: float
    realized_ratio: float
    ratio_bound_required: float
    ratio_ok: bool
    tau_a_condition: bool
    pi_condition: bool
    parameters: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (
            self.dwell_ok and self.avg_dwell_ok and self.ratio_ok
            and self.tau_a_condition and self.pi_condition
        )

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items()}
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = None
        d["passed"] = self.passed
        return d


def validate_schedule(
    s: SwitchingSchedule,
    ts: TopologySet,
    eta_star: float,
    alpha: float,
    beta: float,
    mu: float,
    eta: float,
) -> ValidationReport:
    """Audit a realized schedule against the dwell and ratio conditions.

    The two design inequalities are tau_a > ln(mu)/(eta* - eta) and
    pi < (alpha - eta*)/(beta + eta*), evaluated with the schedule's declared
    tau_a and pi; the realized schedule must then respect both declared values.
    """
    if not s.events or s.horizon <= 0:
        raise DegenerateSchedule("schedule needs events and a positive horizon")
    if not (alpha > eta_star > eta > 0) or beta <= 0 or mu < 1:
        raise ValueError("require alpha > eta* > eta > 0, beta > 0, mu >= 1")
    spans = [end - start for start, end, _ in s.intervals()]
    min_iv = min(spans)
    # the final interval is truncated by the horizon, not a switch
    dwell_spans = spans[:-1] if len(spans) > 1 else spans
    dwell_ok = min(dwell_spans) >= s.dwell_floor - _TIME_EPS if len(spans) > 1 else True
    n_sw = len(s.events) - 1
    realized_tau = s.horizon / n_sw if n_sw else math.inf
    req_tau = math.log(mu) / (eta_star - eta)
    n0 = required_chatter_bound(s, s.avg_dwell)
    avg_ok = n0 <= s.chatter_bound + _TIME_EPS
    ratio = realized_ratio(s, ts)
    req_pi = (alpha - eta_star) / (beta + eta_star)
    return ValidationReport(
        dwell_ok=bool(dwell_ok),
        min_interval=float(min_iv),
        realized_avg_dwell=float(realized_tau),
        required_avg_dwell=float(req_tau),
        avg_dwell_ok=bool(avg_ok),
        chatter_bound_required=float(n0),
        realized_ratio=float(ratio),
        ratio_bound_required=float(req_pi),
        ratio_ok=bool(ratio <= s.ratio_bound + _TIME_EPS),
        tau_a_condition=bool(s.avg_dwell > req_tau),
        pi_condition=bool(s.ratio_bound < req_pi),
        parameters={
            "eta_star": eta_star, "eta": eta, "alpha": alpha, "beta": beta, "mu": mu,
            "tau_a": None if math.isinf(s.avg_dwell) else s.avg_dwell,
            "pi": None if math.isinf(s.ratio_bound) else s.ratio_bound,
        },
    )


def choose_decay_rates(alpha: float, beta: float, mu: float, pi: float, tau_a: float):
    """Pick (eta*, eta) at the midpoints of their admissible intervals.

    eta* must satisfy pi < (alpha - eta*)/(beta + eta*), i.e.
    eta* < (alpha - pi beta)/(1 + pi); eta must satisfy eta < eta* - ln(mu)/tau_a.
    """
    upper = min(alpha, (alpha - pi * beta) / (1.0 + pi))
    if upper <= 0:
        raise InfeasibleRequest(
            f"no eta* exists: alpha={alpha:.4g}, beta={beta:.4g}, pi={pi:.4g}"
        )
    eta_star = 0.5 * upper
    eta_upper = eta_star - (math.log(mu) / tau_a if mu > 1 else 0.0)
    if eta_upper <= 0:
        raise InfeasibleRequest(f"tau_a={tau_a} too small for mu={mu}")
    return eta_star, 0.5 * eta_upper


def generate_schedule(
    ts: TopologySet,
    horizon: float,
    dwell_floor: float,
    ratio_target: float,
    seed: int,
    avg_dwell: float = 1.0,
    chatter_bound: float = 1.0,
    dt: float | None = None,
) -> SwitchingSchedule:
    """Greedy ratio-feasible schedule.

    Connected intervals last between 2 and 3 average dwell times; a bad
    interval of length ``dwell_floor * m`` (m random in 1..3) follows only if
    the running ratio stays at or below ``ratio_target`` after it.
    """
    if not ts.connected_set:
        raise InfeasibleRequest("topology set has no connected graph")
    if not (0 <= ratio_target < 1) or dwell_floor <= 0:
        raise InfeasibleRequest("need 0 <= ratio_target < 1 and dwell_floor > 0")
    rng = np.random.default_rng(seed)
    lo = max(dwell_floor, 2.0 * avg_dwell)
    hi = max(lo, 3.0 * avg_dwell)
    events: list[tuple[float, int]] = []
    t = tc = tb = 0.0

    def q(x: float) -> float:
        return round(x / dt) * dt if dt else x

    while t < horizon - _TIME_EPS:
        g = int(rng.choice(ts.connected_set))
        if events and events[-1][1] == g and len(ts.connected_set) > 1:
            g = int(rng.choice([c for c in ts.connected_set if c != g]))
        span = q(rng.uniform(lo, hi))
        if not events or events[-1][1] != g:
            events.append((q(t), g))
        t_end = min(horizon, t + span)
        tc += t_end - t
        t = t_end
        if t >= horizon - _TIME_EPS or not ts.bad_set or ratio_target == 0:
            continue
        bspan = q(dwell_floor * int(rng.integers(1, 4)))
        if tb + bspan <= ratio_target * tc and t + bspan < horizon:
            events.append((q(t), int(rng.choice(ts.bad_set))))
            tb += bspan
            t += bspan
    sched = SwitchingSchedule(
        tuple(events), horizon, dwell_floor, avg_dwell, chatter_bound, ratio_target
    )
    n0 = required_chatter_bound(sched, avg_dwell)
    if n0 > chatter_bound:
        sched = SwitchingSchedule(
            sched.events, horizon, dwell_floor, avg_dwell, math.ceil(n0), sched.ratio_bound
        )
    return sched
