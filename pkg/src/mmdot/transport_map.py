"""Barycentric-projection transport maps from solved plan coefficients.

The map sends a source point ``x`` to the minimizer over ``y`` of the
conditional expected cost, where the conditional distribution over the
target samples has (unnormalized) weights ``w_j = sum_i beta[j, i] k1(x_i, x)``.
For squared-Euclidean cost the minimizer is the weighted target mean in
closed form; general costs route through projected averaged SGD.  Because
the kernel smooths over the source samples, the map is defined at
out-of-sample ``x`` as well.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .embeddings import SQEUCLIDEAN, USER_SUPPLIED
from .errors import InvalidModelError, NumericalFailureError, ShapeError
from .kernels import KernelSpec, gram

_WEIGHT_NEG_TOL = 1e-12
_WEIGHT_SUM_FLOOR = 1e-12


@dataclass(frozen=True)
class TransportMapModel:
    """Frozen bundle needed to evaluate the barycentric map anywhere.

    ``cost_fn(y, y_j)`` and ``cost_grad(y, y_j)`` must be supplied for
    user-defined costs; they are ignored for squared-Euclidean.
    """

    beta_star: np.ndarray
    source_points: np.ndarray
    target_points: np.ndarray
    kernel1: KernelSpec
    cost_kind: str = SQEUCLIDEAN
    cost_fn: Callable | None = None
    cost_grad: Callable | None = None

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float)
        src = np.atleast_2d(np.asarray(self.source_points, dtype=float))
        tgt = np.atleast_2d(np.asarray(self.target_points, dtype=float))
        n, m = beta.shape
        if src.shape[0] != m:
            raise ShapeError(
                f"beta has {m} source columns but {src.shape[0]} source points"
            )
        if tgt.shape[0] != n:
            raise ShapeError(
                f"beta has {n} target rows but {tgt.shape[0]} target points"
            )
        if np.any(beta < 0):
            raise InvalidModelError("beta_star must be nonnegative")
        if self.cost_kind == USER_SUPPLIED and (
            self.cost_fn is None or self.cost_grad is None
        ):
            raise InvalidModelError("user-supplied cost requires cost_fn and cost_grad")
        object.__setattr__(self, "beta_star", beta)
        object.__setattr__(self, "source_points", src)
        object.__setattr__(self, "target_points", tgt)

    @property
    def source_dim(self):
        return self.source_points.shape[1]

    @property
    def target_dim(self):
        return self.target_points.shape[1]


@dataclass(frozen=True)
class MapWeights:
    """Conditional weights over the target samples for one source point."""

    weights: np.ndarray
    normalized: bool
    fallback_used: bool


def conditional_weights(model: TransportMapModel, x) -> MapWeights:
    """Weights ``w_j = sum_i beta[j, i] k1(x_i, x)``, normalized to the simplex.

    The barycentric argmin is invariant to positive scaling of the weights,
    so normalization is semantics-preserving and makes the SGD sampling
    distribution well defined.  If every weight is (numerically) zero, for
    example an out-of-sample point far from all sources under a narrow
    Gaussian kernel, uniform weights are used and flagged.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != model.source_dim:
        raise ShapeError(
            f"point dimension {x.shape[0]} does not match sources {model.source_dim}"
        )
    kvec = gram(model.kernel1, model.source_points, x[None, :]).entries[:, 0]
    w = model.beta_star @ kvec
    if np.any(w < -_WEIGHT_NEG_TOL):
        raise InvalidModelError(
            f"materially negative conditional weight: min={w.min():g}"
        )
    np.maximum(w, 0.0, out=w)
    total = float(w.sum())
    if total > _WEIGHT_SUM_FLOOR:
        return MapWeights(weights=w / total, normalized=True, fallback_used=False)
    n = w.shape[0]
    return MapWeights(
        weights=np.full(n, 1.0 / n), normalized=True, fallback_used=True
    )


def map_point_closed_form(model: TransportMapModel, x) -> np.ndarray:
    """Weighted target mean; exact barycentric map for squared-Euclidean cost."""
    if model.cost_kind != SQEUCLIDEAN:
        raise InvalidModelError("closed form is only valid for squared-Euclidean cost")
    w = conditional_weights(model, x).weights
    return w @ model.target_points


def map_points_closed_form(model: TransportMapModel, X):
    """Vectorized closed-form map over a batch of source points.

    Returns ``(mapped, fallback_flags)`` with one row per input row.
    """
    if model.cost_kind != SQEUCLIDEAN:
        raise InvalidModelError("closed form is only valid for squared-Euclidean cost")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.zeros((0, model.target_dim)), np.zeros(0, dtype=bool)
    if X.shape[1] != model.source_dim:
        raise ShapeError(
            f"point dimension {X.shape[1]} does not match sources {model.source_dim}"
        )
    K = gram(model.kernel1, model.source_points, X).entries  # m x N
    W = model.beta_star @ K  # n x N
    if np.any(W < -_WEIGHT_NEG_TOL):
        raise InvalidModelError(
            f"materially negative conditional weight: min={W.min():g}"
        )
    np.maximum(W, 0.0, out=W)
    totals = W.sum(axis=0)
    fallback = totals <= _WEIGHT_SUM_FLOOR
    n = W.shape[0]
    W[:, fallback] = 1.0 / n
    totals = np.where(fallback, 1.0, totals)
    W /= totals
    return W.T @ model.target_points, fallback


def default_domain_radius(model: TransportMapModel) -> float:
    """Twice the max distance of any target point from the target mean."""
    center = model.target_points.mean(axis=0)
    spread = float(np.max(np.linalg.norm(model.target_points - center, axis=1)))
    return max(2.0 * spread, 1e-12)


def _subgradient(model: TransportMapModel, y, yj):
    if model.cost_kind == SQEUCLIDEAN:
        return 2.0 * (y - yj)
    return np.asarray(model.cost_grad(y, yj), dtype=float)


def map_point_sgd(
    model: TransportMapModel,
    x,
    steps: int = 10_000,
    step_scale: float | None = None,
    seed: int = 0,
    domain_radius: float | None = None,
) -> np.ndarray:
    """Projected averaged SGD on the conditional expected cost.

    At step ``t`` a target index is sampled with probability ``w_j``, a
    subgradient of ``c(., y_j)`` is taken at the current iterate, the step
    size is ``step_scale / sqrt(t)``, and the iterate is projected onto the
    Euclidean ball of ``domain_radius`` around the weighted target mean.
    The running average of the iterates is returned.
    """
    if steps <= 0:
        raise ValueError("steps must be positive")
    w = conditional_weights(model, x).weights
    Y = model.target_points
    center = w @ Y
    if domain_radius is None:
        domain_radius = default_domain_radius(model)
    if step_scale is None:
        # Scale so a unit-subgradient step at t=1 traverses a fraction of
        # the feasible ball; keeps the variance of the averaged iterate low.
        grad_bound = max(
            float(np.linalg.norm(_subgradient(model, center, Y[j])))
            for j in range(Y.shape[0])
        )
        grad_bound = max(grad_bound, 2.0 * domain_radius, 1e-12)
        step_scale = domain_radius / grad_bound

    rng = np.random.default_rng(seed)
    idx = rng.choice(Y.shape[0], size=steps, p=w)
    y = center.copy()
    avg = np.zeros_like(y)
    for t in range(1, steps + 1):
        g = _subgradient(model, y, Y[idx[t - 1]])
        if not np.all(np.isfinite(g)):
            raise NumericalFailureError("non-finite subgradient")
        y = y - (step_scale / np.sqrt(t)) * g
        dy = y - center
        nrm = float(np.linalg.norm(dy))
        if nrm > domain_radius:
            y = center + dy * (domain_radius / nrm)
        avg += (y - avg) / t
    return avg


def conditional_objective(model: TransportMapModel, x, y) -> float:
    """Value of the conditional expected cost at candidate ``y``."""
    w = conditional_weights(model, x).weights
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if model.cost_kind == SQEUCLIDEAN:
        return float(np.sum(w * np.sum((model.target_points - y) ** 2, axis=1)))
    return float(
        sum(wj * model.cost_fn(y, yj) for wj, yj in zip(w, model.target_points))
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: TransportMapModel) -> dict:
    return {
        "beta_star": model.beta_star.tolist(),
        "source_points": model.source_points.tolist(),
        "target_points": model.target_points.tolist(),
        "kernel": {"kind": model.kernel1.kind, "sigma": model.kernel1.sigma},
        "cost_kind": model.cost_kind,
    }


def model_from_dict(doc: dict, cost_fn=None, cost_grad=None) -> TransportMapModel:
    kernel = KernelSpec(kind=doc["kernel"]["kind"], sigma=doc["kernel"]["sigma"])
    return TransportMapModel(
        beta_star=np.array(doc["beta_star"], dtype=float),
        source_points=np.array(doc["source_points"], dtype=float),
        target_points=np.array(doc["target_points"], dtype=float),
        kernel1=kernel,
        cost_kind=doc.get("cost_kind", SQEUCLIDEAN),
        cost_fn=cost_fn,
        cost_grad=cost_grad,
    )


def save_model(model: TransportMapModel, path) -> None:
    """Write the model as JSON, atomically (temp file then rename).

    Python's float repr is shortest-round-trip, so a written model reads
    back bit-identically.
    """
    if model.cost_kind != SQEUCLIDEAN:
        raise InvalidModelError("only squared-Euclidean models are serializable")
    payload = json.dumps(model_to_dict(model), indent=2)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> TransportMapModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
