"""Experiment configuration, JSON round-trip, and assembly into a runnable system."""

from __future__ import annotations

import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, RFSError
from .graphmodel import (
    Digraph,
    SpectralConstants,
    exchange_matrix,
    lemma1_scaling,
    multi_leader_exchange,
    spectral_constants,
)
from .plantmodel import LeaderModel, LinearPlant, make_formation_shape, solve_regulator
from .protocol import CompensationConfig
from .simkernel import AgentModel, ClosedLoop, WorldState, initial_state
from .switching import (
    SwitchingSchedule,
    TopologySet,
    ValidationReport,
    choose_decay_rates,
    generate_schedule,
    validate_schedule,
)
from .synthesis import AgentGainSet, EstimatorGainCertificate, design_agent_gains, design_estimator_gain
from .threat import AttackProfile

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """Plain-data description of one experiment (JSON-serializable)."""

    name: str
    leader: dict
    leader_initial: list
    agents: list
    graphs: list
    schedule: dict
    estimator: dict = field(default_factory=dict)
    compensation: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    zeta0: list | None = None
    gain_source: str = "auto"
    gamma: list | None = None
    mode: str = "resilient"
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"name", "leader", "leader_initial", "agents", "graphs", "schedule"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**copy.deepcopy(d))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON: {err}") from err

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            return cls.from_json(Path(path).read_text())
        except OSError as err:
            raise ConfigError(str(err)) from err

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @property
    def dt(self) -> float:
        return float(self.integrator.get("dt", 1e-3))

    @property
    def horizon(self) -> float:
        return float(self.integrator.get("horizon", 20.0))


@dataclass
class Experiment:
    """A config resolved into certified models, gains and schedule."""

    config: ExperimentConfig
    leader: LeaderModel
    topology: TopologySet
    constants: SpectralConstants
    estimator: EstimatorGainCertificate
    agents: tuple[AgentModel, ...]
    schedule: SwitchingSchedule
    report: ValidationReport
    decay_rates: tuple[float, float]
    system: ClosedLoop

    def initial_state(self) -> WorldState:
        cfg = self.config
        return initial_state(
            self.system,
            [np.asarray(x, float) for x in cfg.leader_initial],
            [np.asarray(a["x0"], float) for a in cfg.agents],
            [np.asarray(a["xhat0"], float) for a in cfg.agents],
            _zeta0(cfg, self.leader.r),
        )

    def gains_document(self) -> dict:
        return {
            "name": self.config.name,
            "estimator": self.estimator.to_dict(),
            "agents": [ag.gains.to_dict() for ag in self.agents],
            "validation": self.report.to_dict(),
            "decay_rates": {"eta_star": self.decay_rates[0], "eta": self.decay_rates[1]},
        }


def _zeta0(cfg: ExperimentConfig, r: int) -> list:
    if cfg.zeta0 is None:
        return [np.zeros(r) for _ in cfg.agents]
    if len(cfg.zeta0) != len(cfg.agents):
        raise ConfigError("zeta0 needs one entry per agent")
    return [np.asarray(z, float) for z in cfg.zeta0]


def _digraph(d: dict, n_followers: int) -> Digraph:
    adj = np.asarray(d.get("adjacency", np.zeros((n_followers, n_followers))), float)
    links = np.atleast_2d(np.asarray(d["leader_links"], float))
    return Digraph(adj, links, d.get("name", ""))


def topology_constants(topology: TopologySet) -> SpectralConstants:
    """Spectral constants from the exchange matrices (summed over leaders if M > 1)."""

    def mat(g: Digraph):
        return exchange_matrix(g).H if g.n_leaders == 1 else multi_leader_exchange(g)[1]

    certs = [lemma1_scaling(mat(topology.graphs[i]), i) for i in topology.connected_set]
    bad = [mat(topology.graphs[i]) for i in topology.bad_set]
    return spectral_constants(certs, bad)


def build_topology(cfg: ExperimentConfig) -> TopologySet:
    n = len(cfg.agents)
    graphs = [_digraph(g, n) for g in cfg.graphs]
    m = {g.n_leaders for g in graphs}
    if len(m) != 1 or m.pop() != len(cfg.leader_initial):
        raise ConfigError("every graph needs one leader-link row per leader")
    return TopologySet.classify(graphs)


def build_schedule(cfg: ExperimentConfig, topology: TopologySet) -> SwitchingSchedule:
    sd = cfg.schedule
    tau_a = float(cfg.estimator.get("tau_a", 1.0))
    pi = float(cfg.estimator.get("pi", 0.05))
    if "events" in sd:
        sched = SwitchingSchedule(
            tuple((float(t), int(g)) for t, g in sd["events"]),
            cfg.horizon,
            float(sd.get("dwell_floor", 0.0)),
            tau_a,
            float(sd.get("chatter_bound", 1.0)),
            pi,
        )
    else:
        gen = sd.get("generate", {})
        sched = generate_schedule(
            topology,
            cfg.horizon,
            float(gen.get("dwell_floor", 0.2)),
            float(gen.get("ratio_target", pi)),
            int(gen.get("seed", 0)),
            avg_dwell=tau_a,
            chatter_bound=float(gen.get("chatter_bound", 1.0)),
            dt=cfg.dt,
        )
    for _, g in sched.events:
        if not 0 <= g < len(topology):
            raise ConfigError(f"schedule references unknown graph {g}")
    return sched.snap_to_grid(cfg.dt)


def build_experiment(cfg: ExperimentConfig, gains: dict | None = None) -> Experiment:
    """Resolve, design and certify everything a run needs.

    ``gains`` may be a previously emitted gains document; its matrices are
    then certified and used instead of designing new ones.
    """
    try:
        leader = LeaderModel(cfg.leader["A0"], cfg.leader["C0"])
    except KeyError as err:
        raise ConfigError(f"leader needs A0 and C0 ({err})") from err
    if cfg.mode not in ("resilient", "standard", "both"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.gain_source not in ("auto", "explicit"):
        raise ConfigError(f"gain_source must be auto or explicit, got {cfg.gain_source!r}")
    topology = build_topology(cfg)
    sc = topology_constants(topology)
    est = cfg.estimator
    if gains is not None:
        K0_doc = gains["estimator"]
        kappa0 = float(K0_doc["kappa0"])
    else:
        kappa0 = est.get("kappa0")
    cert = design_estimator_gain(
        leader,
        sc,
        est.get("R0"),
        est.get("Q0"),
        float(est.get("epsilon", 1.0)),
        None if kappa0 is None else float(kappa0),
        float(est.get("delta", 1e-2)),
    )
    if gains is not None and not np.allclose(cert.K0, np.asarray(gains["estimator"]["K0"]), atol=1e-9):
        raise ConfigError("gains document does not match the config's estimator design")

    agents = []
    for idx, a in enumerate(cfg.agents):
        try:
            plant = LinearPlant(a["A"], a["B"], a["C"], agent_id=int(a.get("id", idx + 1)))
            reg = solve_regulator(plant, leader)
            shape = make_formation_shape(plant, a["A_h"], a["C_h"], a["h0"])
        except KeyError as err:
            raise ConfigError(f"agent {idx + 1} missing {err}") from err
        if gains is not None:
            explicit = {k: gains["agents"][idx][k] for k in ("K1", "L", "M")}
        elif cfg.gain_source == "explicit":
            explicit = a.get("gains")
            if not explicit:
                raise ConfigError(f"agent {idx + 1} has no explicit gains")
        else:
            explicit = None
        ags = design_agent_gains(plant, reg, shape, explicit)
        attack = AttackProfile.from_dict({"agent_id": plant.agent_id, "p": plant.p,
                                          **a.get("attack", {"kind": "none"})})
        agents.append(AgentModel(plant, reg, shape, ags, attack))

    sched = build_schedule(cfg, topology)
    tau_a = float(est.get("tau_a", 1.0))
    pi = float(est.get("pi", 0.05))
    eta_star, eta = choose_decay_rates(cert.alpha, cert.beta, sc.mu, pi, tau_a)
    report = validate_schedule(sched, topology, eta_star, cert.alpha, cert.beta, sc.mu, eta)
    m = len(cfg.leader_initial)
    gamma = np.full(m, 1.0 / m) if cfg.gamma is None else np.asarray(cfg.gamma, float)
    comp = CompensationConfig(
        tuple(cfg.compensation.get("vartheta0", (1.0,) * leader.p)),
        cfg.compensation.get("rho_source", "state"),
    )
    system = ClosedLoop(
        tuple(agents), leader.A0, leader.C0, cert.K0, topology.graphs, sched, comp, gamma
    )
    return Experiment(cfg, leader, topology, sc, cert, tuple(agents), sched, report,
                      (eta_star, eta), system)
