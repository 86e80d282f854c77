import numpy as np
import pytest

from cardlearn import grounding
from cardlearn.constraints import VariableSpace
from cardlearn.dcopt import AnnealSchedule
from cardlearn.grounding import GroundingBatch
from cardlearn.numkit import Rng


def batch(sbar, anchor, free, alpha=0.5, t2=0.0):
    sched = AnnealSchedule(t=t2, step=1.0, eps=1e-3, t_cap=1e12)
    return GroundingBatch(np.array(sbar, float), np.array(anchor, float), np.array(free, bool), alpha, sched)


def grounding_gd(w, b, anchor_row, prev_row, alpha, t2, steps=100_000):
    """Gradient-descent oracle for one row's grounding subproblem."""
    s = prev_row.copy()
    lip = 2 * (np.linalg.norm(w, 2) ** 2 + alpha)
    lr = 1.0 / lip
    for _ in range(steps):
        g = 2 * w.T @ (w @ s - b) + 2 * alpha * (s - anchor_row) + t2 * (1 - 2 * prev_row)
        s -= lr * g
    return s


class TestGroundStep:
    def test_zero_constraints_returns_anchor(self):
        anchor = np.array([[0.2, 0.8, 0.5]])
        gb = batch(np.zeros((1, 3)), anchor, [True, True, True], alpha=0.5)
        out = grounding.ground_step(gb, np.zeros((2, 3)), np.zeros(2))
        np.testing.assert_allclose(out.sbar, anchor, atol=1e-12)

    def test_huge_alpha_pins_to_anchor(self):
        rng = Rng(3)
        anchor = rng.uniform(6).reshape(2, 3)
        w = (rng.uniform(6).reshape(2, 3) < 0.5).astype(float)
        gb = batch(rng.uniform(6).reshape(2, 3), anchor, [True] * 3, alpha=1e6)
        out = grounding.ground_step(gb, w, np.ones(2))
        np.testing.assert_allclose(out.sbar, anchor, atol=1e-4)

    def test_matches_gradient_descent_oracle(self):
        w = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
        b = np.array([1.0, 1.0])
        anchor = np.array([[0.6, 0.3, 0.55]])
        prev = np.array([[0.5, 0.5, 0.5]])
        alpha, t2 = 0.5, 0.3
        want = grounding_gd(w, b, anchor[0], prev[0], alpha, t2)
        assert 0.0 < want.min() and want.max() < 1.0
        gb = batch(prev, anchor, [True] * 3, alpha=alpha, t2=t2)
        out = grounding.ground_step(gb, w, b)
        np.testing.assert_allclose(out.sbar[0], want, atol=1e-6)

    def test_clamped_coordinates_stay_at_anchor(self):
        rng = Rng(8)
        anchor = (rng.uniform(8).reshape(2, 4) < 0.5).astype(float)
        gb = batch(rng.uniform(8).reshape(2, 4), anchor, [False, True, True, False], alpha=0.5)
        w = (rng.uniform(12).reshape(3, 4) < 0.5).astype(float)
        out = grounding.ground_step(gb, w, np.ones(3))
        np.testing.assert_array_equal(out.sbar[:, 0], anchor[:, 0])
        np.testing.assert_array_equal(out.sbar[:, 3], anchor[:, 3])

    def test_shape_mismatch(self):
        gb = batch(np.zeros((1, 3)), np.zeros((1, 3)), [True] * 3)
        with pytest.raises(grounding.ShapeMismatch):
            grounding.ground_step(gb, np.zeros((2, 4)), np.zeros(2))

    def test_singular_system(self):
        gb = batch(np.zeros((1, 2)), np.zeros((1, 2)), [True, True], alpha=0.0)
        with pytest.raises(grounding.SingularSystem):
            grounding.ground_step(gb, np.array([[1.0, 1.0]]), np.ones(1))

    def test_objective_descends_after_clamp(self):
        rng = Rng(44)
        for _ in range(10):
            n, d, m = 6, 5, 3
            w = (rng.uniform(m * d).reshape(m, d) < 0.5).astype(float)
            b = np.round(rng.uniform(m, 0, 3))
            anchor = rng.uniform(n * d).reshape(n, d)
            prev = rng.uniform(n * d).reshape(n, d)
            t2 = float(rng.uniform(1, 0, 2)[0])
            gb = batch(prev, anchor, [True] * d, alpha=0.5, t2=t2)
            before = grounding.eq5_objective(gb, w, b, t2)
            out = grounding.ground_step(gb, w, b)
            after = grounding.eq5_objective(out, w, b, t2)
            assert np.all(after <= before + 1e-9)


class TestBinarizeGrounding:
    def test_boolean_identity(self):
        gb = batch([[1.0, 0.0]], [[1.0, 0.0]], [True, True])
        np.testing.assert_array_equal(grounding.binarize_grounding(gb), [[1, 0]])

    def test_rejects_half(self):
        gb = batch([[0.5, 0.0]], [[0.5, 0.0]], [True, True])
        with pytest.raises(Exception):
            grounding.binarize_grounding(gb)


class TestMakeTargets:
    def test_full_latent(self):
        space = VariableSpace(0, 3, 0)
        gb = batch([[0.1, 0.2, 0.3]], [[0.1, 0.2, 0.3]], [True] * 3)
        np.testing.assert_allclose(grounding.make_targets(gb, space), [[0.1, 0.2, 0.3]])

    def test_no_latent(self):
        space = VariableSpace(2, 0, 1)
        gb = batch([[0.1, 0.2, 0.3]], [[0.1, 0.2, 0.3]], [False] * 3)
        assert grounding.make_targets(gb, space).shape == (1, 0)

    def test_slice_position(self):
        space = VariableSpace(1, 2, 1)
        gb = batch([[0.9, 0.1, 0.2, 0.8]], [[0.9, 0.1, 0.2, 0.8]], [False, True, True, False])
        np.testing.assert_allclose(grounding.make_targets(gb, space), [[0.1, 0.2]])


class TestAuxiliaryBudget:
    def test_within_budget(self):
        grounding.check_auxiliary_budget(VariableSpace(20, 19, 1))

    def test_exceeds_budget(self):
        with pytest.raises(ValueError):
            grounding.check_auxiliary_budget(VariableSpace(1, 3, 1))
