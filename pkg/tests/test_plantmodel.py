from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as sla

from resilient_formation import presets
from resilient_formation.errors import DimensionMismatch, NoSolution
from resilient_formation.plantmodel import (
    LeaderModel,
    LinearPlant,
    formation_state,
    make_formation_shape,
    phase_offset_h0,
    rotation_generator,
    solve_formation_regulator,
    solve_regulator,
)

LEADER = LeaderModel(presets.A0, presets.C0)


def plant(i: int) -> LinearPlant:
    A, B, C = presets.agent_matrices(i)
    return LinearPlant(A, B, C, agent_id=i + 1)


def test_agent1_regulator_closed_form():
    reg = solve_regulator(plant(0), LEADER)
    np.testing.assert_allclose(reg.X, [[1, 0], [0, -3]], atol=1e-12)
    np.testing.assert_allclose(reg.U, [[-6, 0]], atol=1e-12)


@pytest.mark.parametrize("i", range(3))
def test_second_order_closed_forms(i):
    a, b, *_ = presets.PARAMS[i]
    reg = solve_regulator(plant(i), LEADER)
    np.testing.assert_allclose(reg.X, [[1, 0], [0, -3]], atol=1e-9)
    np.testing.assert_allclose(reg.U, [[-6 / b, 3 * (a + 1) / b]], atol=1e-9)
    X_h, U_h = solve_formation_regulator(plant(i), rotation_generator(1.0), presets.C_H)
    np.testing.assert_allclose(X_h, [[1, 0], [-1, 1]], atol=1e-9)
    np.testing.assert_allclose(U_h, [[(a - 1) / b, -(a + 1) / b]], atol=1e-9)


@pytest.mark.parametrize("i", range(6))
def test_regulator_residuals(i):
    pl = plant(i)
    reg = solve_regulator(pl, LEADER)
    assert np.linalg.norm(reg.X @ LEADER.A0 - pl.A @ reg.X - pl.B @ reg.U) <= 1e-10
    assert np.linalg.norm(LEADER.C0 - pl.C @ reg.X) <= 1e-10
    S = rotation_generator(1.0)
    X_h, U_h = solve_formation_regulator(pl, S, presets.C_H)
    assert np.linalg.norm(X_h @ S - pl.A @ X_h - pl.B @ U_h) <= 1e-10
    assert np.linalg.norm(np.asarray(presets.C_H) - pl.C @ X_h) <= 1e-10


def test_third_order_regulator_rational():
    # agent 4: C pins the first two rows of X; the third comes from row 2 of X A0 = A X + B U
    reg = solve_regulator(plant(3), LEADER)
    X = reg.X
    np.testing.assert_allclose(X[:2], [[1, 0], [0, -3]], atol=1e-12)
    # row 2 of X A0 = A X: [0,-3] A0 = -X[1] + X[2]  ->  X[2] = [0,-3] A0 + [0,-3]
    np.testing.assert_allclose(X[2], np.array([0, -3]) @ LEADER.A0 + np.array([0, -3]), atol=1e-12)


def test_rank_deficient_output_raises():
    pl = LinearPlant([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]], [[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(NoSolution):
        solve_regulator(pl, LEADER)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        make_formation_shape(plant(0), rotation_generator(), presets.C_H, [1.0, 2.0, 3.0])


def test_formation_norm_conserved_and_initial_value():
    sh = make_formation_shape(plant(0), rotation_generator(1.0), presets.C_H, phase_offset_h0(0))
    np.testing.assert_allclose(sh.h0, [0.0, 10.0], atol=1e-12)
    for t in np.linspace(0, 20, 41):
        h, y_h = formation_state(sh, t)
        assert np.linalg.norm(h) == pytest.approx(10.0, rel=1e-12)
        # h1 = 10 sin(t), h2 = 10 cos(t)
        np.testing.assert_allclose(h, [10 * np.sin(t), 10 * np.cos(t)], atol=1e-9)
        np.testing.assert_allclose(y_h, np.asarray(presets.C_H) @ h, atol=1e-12)


def test_phase_offsets_evenly_spaced():
    phases = [np.arctan2(*phase_offset_h0(i)) for i in range(6)]
    gaps = np.diff(np.unwrap(phases))
    np.testing.assert_allclose(gaps, 2 * np.pi / 6, atol=1e-12)


def test_leader_matches_expm():
    x0 = np.array([1.0, -1.0])
    x = sla.expm(LEADER.A0 * 2.0) @ x0
    # A0 has eigenvalues +-i sqrt(5): the flow is periodic with period 2 pi / sqrt 5
    T = 2 * np.pi / np.sqrt(5.0)
    np.testing.assert_allclose(sla.expm(LEADER.A0 * T) @ x0, x0, atol=1e-10)
    assert np.all(np.isfinite(x))


def test_agent3_u_is_rational():
    reg = solve_regulator(plant(2), LEADER)
    fr = [Fraction(v).limit_denominator(100) for v in reg.U.ravel()]
    assert fr == [Fraction(-2), Fraction(-1)]
