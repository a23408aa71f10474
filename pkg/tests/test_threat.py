from __future__ import annotations

import numpy as np
import pytest

from resilient_formation import presets
from resilient_formation.errors import ConfigError, DimensionMismatch
from resilient_formation.threat import AttackProfile, StackedAttacks, attack_signal, corrupt, ramp_attack


def agent_attack(i: int) -> AttackProfile:
    return ramp_attack(i + 1, presets.attack_slopes(i))


def test_agent1_ramp_value():
    np.testing.assert_allclose(attack_signal(agent_attack(0), 10.0), [1.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(corrupt([1.0, 1.0], agent_attack(0), 10.0), [2.0, 3.0], atol=1e-12)


@pytest.mark.parametrize("i", range(6))
def test_ramp_slopes(i):
    k = i + 1
    np.testing.assert_allclose(attack_signal(agent_attack(i), 3.0), [0.3 * k, 0.6 * k], atol=1e-12)


@pytest.mark.parametrize(
    "profile",
    [
        agent_attack(5),
        AttackProfile(1, 2, kind="sinusoid", params={"amplitude": [1.0, 2.0], "frequency": [3.0, 0.5]}),
        AttackProfile(1, 2, kind="table", params={"times": [0, 1, 3], "values": [[0, 0], [2, -1], [2, 3]]}),
    ],
)
def test_derivative_bound_by_finite_differences(profile):
    t = np.linspace(0.0, 10.0, 20001)
    vals = np.array([attack_signal(profile, s) for s in t])
    fd = np.abs(np.diff(vals, axis=0) / np.diff(t)[:, None]).max(axis=0)
    bound = profile.derivative_bound()
    assert np.all(fd <= bound + 1e-6)
    assert np.all(fd >= 0.99 * bound - 1e-6)


def test_ramp_is_unbounded_with_bounded_derivative():
    p = agent_attack(2)
    assert np.linalg.norm(attack_signal(p, 1e6)) > 1e5
    np.testing.assert_allclose(p.derivative_bound(), [0.3, 0.6])


def test_inactive_and_delayed():
    p = AttackProfile(1, 2, active=False, kind="ramp", params={"slope": [1, 1]})
    np.testing.assert_array_equal(attack_signal(p, 5.0), [0, 0])
    d = ramp_attack(1, [1.0, 1.0], start_time=2.0)
    np.testing.assert_array_equal(attack_signal(d, 1.0), [0, 0])
    np.testing.assert_allclose(attack_signal(d, 3.0), [1, 1])


def test_errors():
    with pytest.raises(ValueError):
        attack_signal(agent_attack(0), -1.0)
    with pytest.raises(DimensionMismatch):
        corrupt([1.0, 2.0, 3.0], agent_attack(0), 1.0)
    with pytest.raises(ConfigError):
        AttackProfile(1, 2, kind="laser")


def test_dict_round_trip():
    p = agent_attack(3)
    assert AttackProfile.from_dict(p.to_dict()) == p


def test_stacked_matches_individual():
    profiles = [agent_attack(i) for i in range(6)] + [
        AttackProfile(7, 2, kind="sinusoid", params={"amplitude": [1.0, 1.0]})
    ]
    fast = StackedAttacks(profiles[:6])
    slow = StackedAttacks(profiles)
    for t in (0.0, 0.37, 12.5):
        ref = np.concatenate([attack_signal(p, t) for p in profiles])
        np.testing.assert_allclose(slow(t), ref, atol=1e-15)
        np.testing.assert_allclose(fast(t), ref[:12], atol=1e-15)
