import json

import numpy as np
import pytest

from mmdot.errors import InvalidModelError, ShapeError
from mmdot.kernels import GAUSSIAN, KRONECKER_DELTA, KernelSpec, eval_kernel
from mmdot.transport_map import (
    TransportMapModel,
    conditional_objective,
    conditional_weights,
    default_domain_radius,
    load_model,
    map_point_closed_form,
    map_point_sgd,
    map_points_closed_form,
    model_from_dict,
    model_to_dict,
    save_model,
)

GAUSS1 = KernelSpec(GAUSSIAN, sigma=1.0)
DELTA = KernelSpec(KRONECKER_DELTA)


def weights_model(weights, targets, x_probe):
    """Model whose conditional weights at x_probe equal the given vector.

    One source point equal to the probe under the delta kernel gives a
    kernel vector of [1], so the single beta column realizes the weights
    exactly.
    """
    weights = np.asarray(weights, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    beta = weights[:, None]
    return TransportMapModel(
        beta_star=beta,
        source_points=np.atleast_2d(np.asarray(x_probe, dtype=float)),
        target_points=targets,
        kernel1=DELTA,
    )


class TestModelValidation:
    def test_shape_mismatch_sources(self):
        with pytest.raises(ShapeError):
            TransportMapModel(
                beta_star=np.ones((2, 3)),
                source_points=np.zeros((2, 1)),  # needs 3 source points
                target_points=np.zeros((2, 1)),
                kernel1=GAUSS1,
            )

    def test_negative_beta_rejected(self):
        with pytest.raises(InvalidModelError):
            TransportMapModel(
                beta_star=np.array([[-0.1]]),
                source_points=np.zeros((1, 1)),
                target_points=np.zeros((1, 1)),
                kernel1=GAUSS1,
            )

    def test_user_cost_requires_callbacks(self):
        with pytest.raises(InvalidModelError):
            TransportMapModel(
                beta_star=np.ones((1, 1)),
                source_points=np.zeros((1, 1)),
                target_points=np.zeros((1, 1)),
                kernel1=GAUSS1,
                cost_kind="user",
            )


class TestConditionalWeights:
    def test_single_target_normalizes_to_one(self):
        model = TransportMapModel(
            beta_star=np.array([[0.3]]),
            source_points=np.array([[0.0]]),
            target_points=np.array([[5.0]]),
            kernel1=GAUSS1,
        )
        w = conditional_weights(model, [0.7])
        np.testing.assert_allclose(w.weights, [1.0])
        assert w.normalized and not w.fallback_used

    def test_delta_kernel_identity_beta_picks_basis_vector(self):
        X = np.array([[0.0], [1.0], [2.0]])
        model = TransportMapModel(
            beta_star=np.eye(3),
            source_points=X,
            target_points=X.copy(),
            kernel1=DELTA,
        )
        for i in range(3):
            w = conditional_weights(model, X[i]).weights
            np.testing.assert_allclose(w, np.eye(3)[i])

    def test_matches_scalar_double_sum(self):
        rng = np.random.default_rng(4)
        beta = rng.random((2, 2))
        X = rng.normal(size=(2, 2))
        Y = rng.normal(size=(2, 2))
        model = TransportMapModel(
            beta_star=beta, source_points=X, target_points=Y, kernel1=GAUSS1
        )
        x = rng.normal(size=2)
        raw = np.array(
            [
                sum(beta[j, i] * eval_kernel(GAUSS1, X[i], x) for i in range(2))
                for j in range(2)
            ]
        )
        expected = raw / raw.sum()
        got = conditional_weights(model, x).weights
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_weights_on_simplex(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            model = TransportMapModel(
                beta_star=rng.random((4, 3)),
                source_points=rng.normal(size=(3, 2)),
                target_points=rng.normal(size=(4, 2)),
                kernel1=GAUSS1,
            )
            w = conditional_weights(model, rng.normal(size=2))
            assert np.all(w.weights >= 0.0)
            assert abs(w.weights.sum() - 1.0) <= 1e-12

    def test_far_point_uniform_fallback(self):
        model = TransportMapModel(
            beta_star=np.ones((2, 1)),
            source_points=np.array([[0.0]]),
            target_points=np.array([[0.0], [2.0]]),
            kernel1=KernelSpec(GAUSSIAN, sigma=0.01),
        )
        w = conditional_weights(model, [100.0])
        assert w.fallback_used
        np.testing.assert_allclose(w.weights, [0.5, 0.5])

    def test_dimension_mismatch(self):
        model = TransportMapModel(
            beta_star=np.ones((1, 1)),
            source_points=np.zeros((1, 2)),
            target_points=np.zeros((1, 2)),
            kernel1=GAUSS1,
        )
        with pytest.raises(ShapeError):
            conditional_weights(model, [0.0])


class TestClosedForm:
    def test_single_target(self):
        model = TransportMapModel(
            beta_star=np.array([[1.0]]),
            source_points=np.array([[0.0]]),
            target_points=np.array([[3.0, -1.0]]),
            kernel1=GAUSS1,
        )
        for x in ([0.0], [5.0], [-2.0]):
            np.testing.assert_allclose(map_point_closed_form(model, x), [3.0, -1.0])

    def test_uniform_weights_over_two_scalars(self):
        model = weights_model([0.5, 0.5], [[0.0], [2.0]], [0.0])
        np.testing.assert_allclose(map_point_closed_form(model, [0.0]), [1.0])

    def test_convex_combination(self):
        model = weights_model([0.25, 0.75], [[0.0, 0.0], [4.0, 0.0]], [0.0])
        np.testing.assert_allclose(map_point_closed_form(model, [0.0]), [3.0, 0.0])

    def test_out_of_sample_point_accepted(self):
        rng = np.random.default_rng(6)
        model = TransportMapModel(
            beta_star=rng.random((3, 3)),
            source_points=rng.normal(size=(3, 2)),
            target_points=rng.normal(size=(3, 2)),
            kernel1=GAUSS1,
        )
        y = map_point_closed_form(model, [10.0, -10.0])
        assert np.all(np.isfinite(y))

    def test_batch_matches_pointwise(self):
        rng = np.random.default_rng(7)
        model = TransportMapModel(
            beta_star=rng.random((4, 3)),
            source_points=rng.normal(size=(3, 2)),
            target_points=rng.normal(size=(4, 3)),
            kernel1=GAUSS1,
        )
        P = rng.normal(size=(6, 2))
        batch, fallback = map_points_closed_form(model, P)
        assert batch.shape == (6, 3)
        assert not fallback.any()
        for i in range(6):
            np.testing.assert_allclose(
                batch[i], map_point_closed_form(model, P[i]), atol=1e-12
            )

    def test_empty_batch(self):
        model = weights_model([1.0], [[0.0]], [0.0])
        out, flags = map_points_closed_form(model, np.zeros((0, 1)))
        assert out.shape == (0, 1) and flags.shape == (0,)


def euclidean_cost(y, yj):
    return float(np.linalg.norm(y - yj))


def euclidean_grad(y, yj):
    d = y - yj
    n = np.linalg.norm(d)
    return d / n if n > 0 else np.zeros_like(d)


class TestSgd:
    def test_agrees_with_closed_form(self):
        rng = np.random.default_rng(8)
        for seed in range(5):
            model = TransportMapModel(
                beta_star=rng.random((5, 5)),
                source_points=rng.normal(size=(5, 3)),
                target_points=rng.normal(size=(5, 3)),
                kernel1=GAUSS1,
            )
            x = rng.normal(size=3)
            yc = map_point_closed_form(model, x)
            ys = map_point_sgd(model, x, steps=10_000, seed=seed)
            scale = max(np.linalg.norm(yc), default_domain_radius(model))
            assert np.linalg.norm(ys - yc) / scale <= 1e-2

    def test_single_target_euclidean_cost(self):
        model = TransportMapModel(
            beta_star=np.array([[1.0]]),
            source_points=np.array([[0.0]]),
            target_points=np.array([[1.0, 2.0]]),
            kernel1=GAUSS1,
            cost_kind="user",
            cost_fn=euclidean_cost,
            cost_grad=euclidean_grad,
        )
        y = map_point_sgd(model, [0.0], steps=10_000, seed=0, domain_radius=5.0)
        assert np.linalg.norm(y - [1.0, 2.0]) <= 1e-2

    def test_median_degeneracy_objective_value(self):
        # Even weights over scalar targets {0, 2} with Euclidean cost: every
        # point of [0, 2] is optimal with value 1; assert on the value only.
        model = TransportMapModel(
            beta_star=np.array([[0.5], [0.5]]),
            source_points=np.array([[0.0]]),
            target_points=np.array([[0.0], [2.0]]),
            kernel1=DELTA,
            cost_kind="user",
            cost_fn=euclidean_cost,
            cost_grad=euclidean_grad,
        )
        y = map_point_sgd(model, [0.0], steps=10_000, seed=1, domain_radius=4.0)
        assert abs(conditional_objective(model, [0.0], y) - 1.0) <= 1e-2

    def test_nonpositive_steps_rejected(self):
        model = weights_model([1.0], [[0.0]], [0.0])
        with pytest.raises(ValueError):
            map_point_sgd(model, [0.0], steps=0)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(9)
        model = TransportMapModel(
            beta_star=rng.random((3, 3)),
            source_points=rng.normal(size=(3, 2)),
            target_points=rng.normal(size=(3, 2)),
            kernel1=GAUSS1,
        )
        a = map_point_sgd(model, [0.1, 0.2], steps=500, seed=42)
        b = map_point_sgd(model, [0.1, 0.2], steps=500, seed=42)
        assert np.array_equal(a, b)


def test_power_cost_objective_convex_along_segments():
    # For cost |y - y_j|^p with p >= 1 the conditional objective is convex in
    # y; check the midpoint inequality on random 1-d instances.
    rng = np.random.default_rng(10)
    for p in (1.0, 1.5, 2.0, 3.0):
        model = TransportMapModel(
            beta_star=rng.random((4, 1)),
            source_points=np.array([[0.0]]),
            target_points=rng.normal(size=(4, 1)),
            kernel1=DELTA,
            cost_kind="user",
            cost_fn=lambda y, yj, p=p: float(np.abs(y - yj).sum() ** p),
            cost_grad=lambda y, yj: y - yj,  # unused here
        )
        for _ in range(20):
            a, b = rng.normal(size=2) * 3.0
            fa = conditional_objective(model, [0.0], [a])
            fb = conditional_objective(model, [0.0], [b])
            fm = conditional_objective(model, [0.0], [(a + b) / 2.0])
            assert fm <= 0.5 * (fa + fb) + 1e-9


class TestSerialization:
    def make_model(self):
        rng = np.random.default_rng(11)
        return TransportMapModel(
            beta_star=rng.random((3, 4)),
            source_points=rng.normal(size=(4, 2)),
            target_points=rng.normal(size=(3, 2)),
            kernel1=KernelSpec(GAUSSIAN, sigma=0.8),
        )

    def test_round_trip_bit_identical_mappings(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.beta_star, model.beta_star)
        assert np.array_equal(loaded.source_points, model.source_points)
        assert loaded.kernel1 == model.kernel1
        x = np.array([0.3, -0.4])
        assert np.array_equal(
            map_point_closed_form(loaded, x), map_point_closed_form(model, x)
        )

    def test_dict_round_trip(self):
        model = self.make_model()
        again = model_from_dict(model_to_dict(model))
        assert np.array_equal(again.target_points, model.target_points)

    def test_written_file_is_json(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "model.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        assert set(doc) == {
            "beta_star",
            "source_points",
            "target_points",
            "kernel",
            "cost_kind",
        }
