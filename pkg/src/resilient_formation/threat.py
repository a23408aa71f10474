"""False-data-injection sensor attack profiles.

A profile describes the signal an adversary adds to one agent's measured
output, y^c = y + phi * y^a(t). Signals start at ``start_time`` and are zero
before it. The derivative bound is carried for test oracles only; the
controllers never see it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, DimensionMismatch

KINDS = ("none", "ramp", "sinusoid", "table")


@dataclass(frozen=True)
class AttackProfile:
    agent_id: int
    p: int
    active: bool = True
    kind: str = "none"
    params: dict[str, Any] = field(default_factory=dict)
    start_time: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}; expected one of {KINDS}")
        if self.start_time < 0:
            raise ConfigError("attack start_time must be >= 0")
        for key in ("slope", "amplitude", "frequency", "phase", "offset"):
            if key in self.params:
                v = np.broadcast_to(np.asarray(self.params[key], float), (self.p,))
                if v.shape != (self.p,):
                    raise DimensionMismatch(f"attack parameter {key} must have length {self.p}")
        if self.kind == "table":
            times = np.asarray(self.params["times"], float)
            values = np.asarray(self.params["values"], float)
            if values.shape != (times.size, self.p) or np.any(np.diff(times) <= 0):
                raise ConfigError("table attack needs increasing times and a (len(times), p) array")

    def _vec(self, key: str, default: float = 0.0) -> NDArray:
        return np.broadcast_to(np.asarray(self.params.get(key, default), float), (self.p,))

    def raw(self, t: float) -> NDArray[np.float64]:
        """y^a(t) without the activation flag."""
        tau = t - self.start_time
        if self.kind == "none" or tau < 0:
            return np.zeros(self.p)
        if self.kind == "ramp":
            return self._vec("offset") + self._vec("slope") * tau
        if self.kind == "sinusoid":
            w = self._vec("frequency", 1.0)
            return self._vec("amplitude") * np.sin(w * tau + self._vec("phase"))
        times = np.asarray(self.params["times"], float)
        values = np.asarray(self.params["values"], float)
        return np.array([np.interp(tau, times, values[:, j]) for j in range(self.p)])

    def derivative_bound(self) -> NDArray[np.float64]:
        """Componentwise sup |d/dt y^a| (oracle use only)."""
        if not self.active or self.kind == "none":
            return np.zeros(self.p)
        if self.kind == "ramp":
            return np.abs(self._vec("slope"))
        if self.kind == "sinusoid":
            return np.abs(self._vec("amplitude") * self._vec("frequency", 1.0))
        times = np.asarray(self.params["times"], float)
        values = np.asarray(self.params["values"], float)
        return np.max(np.abs(np.diff(values, axis=0) / np.diff(times)[:, None]), axis=0)

    def to_dict(self) -> dict:
        params = {k: (np.asarray(v).tolist() if not isinstance(v, (int, float)) else v)
                  for k, v in self.params.items()}
        return {
            "agent_id": self.agent_id,
            "p": self.p,
            "active": self.active,
            "kind": self.kind,
            "params": params,
            "start_time": self.start_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttackProfile":
        return cls(
            agent_id=int(d["agent_id"]),
            p=int(d["p"]),
            active=bool(d.get("active", True)),
            kind=d.get("kind", "none"),
            params=dict(d.get("params", {})),
            start_time=float(d.get("start_time", 0.0)),
        )


def ramp_attack(agent_id: int, slope: ArrayLike, start_time: float = 0.0) -> AttackProfile:
    slope = np.asarray(slope, float)
    return AttackProfile(agent_id, slope.size, True, "ramp", {"slope": slope.tolist()}, start_time)


def attack_signal(p: AttackProfile, t: float) -> NDArray[np.float64]:
    """phi^a * y^a(t)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not p.active:
        return np.zeros(p.p)
    return p.raw(t)


def corrupt(y_true: ArrayLike, p: AttackProfile, t: float) -> NDArray[np.float64]:
    y = np.asarray(y_true, float)
    if y.shape != (p.p,):
        raise DimensionMismatch(f"output has shape {y.shape}, attack profile expects ({p.p},)")
    return y + attack_signal(p, t)


class StackedAttacks:
    """Vectorized evaluation of several profiles, concatenated in order.

    Ramp and inactive profiles are evaluated in closed form; other kinds fall
    back to :func:`attack_signal` one profile at a time.
    """

    def __init__(self, profiles: list[AttackProfile]):
        self.profiles = list(profiles)
        self.sizes = [p.p for p in self.profiles]
        self._fast = all(not p.active or p.kind in ("none", "ramp") for p in self.profiles)
        if self._fast:
            off, slope, start = [], [], []
            for p in self.profiles:
                ramp = p.active and p.kind == "ramp"
                off.append(p._vec("offset") if ramp else np.zeros(p.p))
                slope.append(p._vec("slope") if ramp else np.zeros(p.p))
                start.append(np.full(p.p, p.start_time))
            self._off = np.concatenate(off)
            self._slope = np.concatenate(slope)
            self._start = np.concatenate(start)
            self._live = np.concatenate([np.full(p.p, p.active and p.kind == "ramp")
                                         for p in self.profiles])

    def __call__(self, t: float) -> NDArray[np.float64]:
        if self._fast:
            tau = t - self._start
            return np.where(self._live & (tau >= 0), self._off + self._slope * tau, 0.0)
        return np.concatenate([attack_signal(p, t) for p in self.profiles])
