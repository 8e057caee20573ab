"""Feature-based ranking track.

A linear model scores each (context, item) pair through a joint feature
vector.  The objectives sum, per relevant item, a logistic surrogate of
how many other items outrank it; the transformed variants push that sum
through a slow-growth transform so the optimizer may give up on the
bottom of a list to win at the top.  A batch trainer minimizes the
RHO1-transformed objective over a regularization grid and keeps the
model with the best validation NDCG.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import losses
from .errors import DivergenceError
from .losses import TransformKind

DEFAULT_LAMBDA_GRID = (1e-9, 1e-7, 1e-5, 1e-3, 1e-1, 10.0, 1e3)


def exp2_gain(labels):
    """Default relevance gain v(t) = 2**t - 1."""
    return np.exp2(np.asarray(labels, dtype=np.float64)) - 1.0


@dataclass
class ContextBlock:
    """One context: its items, their feature rows, and relevance scores."""

    context_id: str
    item_ids: list
    features: np.ndarray  # (n_items, feature_dim)
    scores: np.ndarray  # relevance values, >= 0
    weight: float = 1.0

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        n = len(self.item_ids)
        if len(set(self.item_ids)) != n:
            raise ValueError(f"context {self.context_id!r}: duplicate item ids")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ValueError(f"context {self.context_id!r}: features must be (n_items, dim)")
        if self.scores.shape != (n,):
            raise ValueError(f"context {self.context_id!r}: scores must be (n_items,)")
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise ValueError(f"context {self.context_id!r}: scores must be finite and >= 0")
        if not np.all(np.isfinite(self.features)):
            raise ValueError(f"context {self.context_id!r}: features must be finite")
        if not (np.isfinite(self.weight) and self.weight > 0):
            raise ValueError(f"context {self.context_id!r}: weight must be > 0")

    @property
    def n_items(self):
        return len(self.item_ids)


@dataclass
class RankingDataset:
    """Contexts sharing one feature space; each needs >= 2 items."""

    contexts: list
    feature_dim: int

    def __post_init__(self):
        for ctx in self.contexts:
            if ctx.features.shape[1] != self.feature_dim:
                raise ValueError(
                    f"context {ctx.context_id!r} has feature dim "
                    f"{ctx.features.shape[1]}, dataset expects {self.feature_dim}"
                )
            if ctx.n_items < 2:
                raise ValueError(
                    f"context {ctx.context_id!r} has {ctx.n_items} item(s); "
                    "need >= 2 for pairwise terms"
                )

    @property
    def n_contexts(self):
        return len(self.contexts)


@dataclass
class LinearModel:
    """Weight vector of the linear scoring function."""

    omega: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if self.omega.ndim != 1:
            raise ValueError("omega must be a vector")
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("omega must be finite")

    @property
    def dim(self):
        return self.omega.shape[0]


def score(model, features):
    """Dot product of the weight vector with one or many feature rows."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.shape[-1] != model.dim:
        raise ValueError(f"feature dim {feats.shape[-1]} != model dim {model.dim}")
    out = feats @ model.omega
    return float(out) if out.ndim == 0 else out


def rank_of(model, ctx, item_index):
    """Number of items in the context scoring strictly above the given one.

    Exact ties do not count, so equal scores all get rank 0.
    """
    if not 0 <= item_index < ctx.n_items:
        raise IndexError(f"item index {item_index} out of range for {ctx.n_items} items")
    s = ctx.features @ model.omega
    return int(np.count_nonzero(s > s[item_index]))


def _pairwise_surrogate_sums(s):
    # per item: sum of logistic losses over score gaps to every other item
    diffs = s[:, None] - s[None, :]
    return losses.logistic_loss(diffs).sum(axis=1) - 1.0  # drop the self term


def _misorder_counts(s):
    return (s[:, None] < s[None, :]).sum(axis=1).astype(np.float64)


def objective_basic(model, data, lam=0.0, gain=exp2_gain):
    """Untransformed convex objective: gain-weighted sums of logistic losses."""
    _check_model(model, data)
    total = 0.0
    for ctx in data.contexts:
        s = ctx.features @ model.omega
        total += ctx.weight * float(gain(ctx.scores) @ _pairwise_surrogate_sums(s))
    return total + 0.5 * float(lam) * float(model.omega @ model.omega)


def objective_robirank(model, data, lam=0.0, kind=TransformKind.RHO1, gain=exp2_gain):
    """Transformed objective: per-item surrogate sums pushed through a transform.

    RHO1 gives the trainable objective; RHO2 gives its tighter but
    harder-to-optimize sibling.  At lam=0, RHO1 >= RHO2 >= the exact
    indicator objective for any model.
    """
    _check_model(model, data)
    total = 0.0
    for ctx in data.contexts:
        s = ctx.features @ model.omega
        inner = _pairwise_surrogate_sums(s)
        total += ctx.weight * float(gain(ctx.scores) @ losses.transform(kind, inner))
    return total + 0.5 * float(lam) * float(model.omega @ model.omega)


def objective_indicator(model, data, gain=exp2_gain):
    """Evaluation-only objective with exact misorder counts instead of surrogates.

    Equals the total gain minus the summed position-discounted gain, so it
    is the quantity the transformed objectives upper-bound.
    """
    _check_model(model, data)
    total = 0.0
    for ctx in data.contexts:
        s = ctx.features @ model.omega
        ranks = _misorder_counts(s)
        total += ctx.weight * float(
            gain(ctx.scores) @ losses.transform(TransformKind.RHO2, ranks)
        )
    return total


def gradient_robirank(model, data, lam=0.0, kind=TransformKind.RHO1, gain=exp2_gain):
    """Exact analytic gradient of objective_robirank in the weight vector."""
    _check_model(model, data)
    grad = float(lam) * model.omega.copy()
    for ctx in data.contexts:
        s = ctx.features @ model.omega
        diffs = s[:, None] - s[None, :]
        inner = losses.logistic_loss(diffs).sum(axis=1) - 1.0
        outer = ctx.weight * gain(ctx.scores) * losses.transform_grad(kind, inner)
        pair_grad = outer[:, None] * losses.logistic_loss_grad(diffs)
        np.fill_diagonal(pair_grad, 0.0)
        coeff = pair_grad.sum(axis=1) - pair_grad.sum(axis=0)
        grad += ctx.features.T @ coeff
    return grad


def dcg(model, ctx, gain=exp2_gain):
    """Position-discounted gain using exact strict-misorder ranks."""
    s = ctx.features @ model.omega
    ranks = _misorder_counts(s)
    return ctx.weight * float(gain(ctx.scores) @ (1.0 / np.log2(ranks + 2.0)))


def ndcg_at_k(model, ctx, k, gain=exp2_gain):
    """Truncated, normalized discounted gain in [0, 1].

    Items are ordered by model score descending with ties broken by item
    id ascending; the achieved top-k discounted gain is divided by the
    best achievable one.  A context whose gains are all zero scores 1.0
    (vacuously perfect).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    s = ctx.features @ model.omega
    g = gain(ctx.scores)
    n = ctx.n_items
    order = sorted(range(n), key=lambda i: (-s[i], ctx.item_ids[i]))
    kk = min(k, n)
    disc = 1.0 / np.log2(np.arange(kk) + 2.0)
    achieved = float(g[order[:kk]] @ disc)
    ideal = float(np.sort(g)[::-1][:kk] @ disc)
    if ideal <= 0.0:
        return 1.0
    # identical orderings can sum the same terms in a different order,
    # leaving the ratio one ulp above 1
    return min(achieved / ideal, 1.0)


@dataclass
class TrainConfig:
    """Settings for the batch trainer."""

    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    kind: TransformKind = TransformKind.RHO1
    select_k: int = 10
    tol: float = 1e-6
    max_iters: int = 500
    init: str = "zeros"  # or "gaussian"
    init_scale: float = 0.1
    seed: int = 0
    gain: object = field(default=exp2_gain)

    def __post_init__(self):
        if not self.lambda_grid:
            raise ValueError("lambda_grid must be non-empty")
        if self.init not in ("zeros", "gaussian"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.select_k < 1:
            raise ValueError("select_k must be >= 1")


@dataclass
class TrainReport:
    """Outcome of a grid-search training run."""

    model: LinearModel
    chosen_lambda: float
    validation_ndcg: float
    grid_ndcg: dict


def _minimize_weights(data, lam, config, x0):
    def fun(w):
        m = LinearModel(w)
        f = objective_robirank(m, data, lam, config.kind, config.gain)
        if not np.isfinite(f):
            raise DivergenceError(f"objective became non-finite at lambda={lam!r}")
        g = gradient_robirank(m, data, lam, config.kind, config.gain)
        return f, g

    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": config.max_iters, "gtol": config.tol, "ftol": 1e-14},
    )
    if not np.all(np.isfinite(res.x)):
        raise DivergenceError(f"weights became non-finite at lambda={lam!r}")
    return res.x


def mean_ndcg(model, data, k, gain=exp2_gain):
    """Arithmetic mean of ndcg_at_k over all contexts."""
    return float(np.mean([ndcg_at_k(model, ctx, k, gain) for ctx in data.contexts]))


def train_with_report(data_train, data_validation, config=None):
    """Grid-search train; returns the chosen model plus selection details."""
    config = config or TrainConfig()
    if data_train.feature_dim != data_validation.feature_dim:
        raise ValueError(
            f"train feature dim {data_train.feature_dim} != "
            f"validation feature dim {data_validation.feature_dim}"
        )
    if data_train.n_contexts == 0:
        raise ValueError("training dataset has no contexts")
    d = data_train.feature_dim
    if config.init == "zeros":
        x0 = np.zeros(d)
    else:
        x0 = np.random.default_rng(config.seed).normal(0.0, config.init_scale, d)
    best = None
    grid_ndcg = {}
    for lam in config.lambda_grid:
        omega = _minimize_weights(data_train, float(lam), config, x0)
        model = LinearModel(omega)
        v = mean_ndcg(model, data_validation, config.select_k, config.gain)
        grid_ndcg[float(lam)] = v
        if best is None or v > best.validation_ndcg:
            best = TrainReport(model, float(lam), v, grid_ndcg)
    best.grid_ndcg = grid_ndcg
    return best


def train(data_train, data_validation, config=None):
    """Train over the regularization grid; keep the best-validating model.

    Deterministic given the config (the seed only feeds the optional
    Gaussian initialization).
    """
    return train_with_report(data_train, data_validation, config).model


def _check_model(model, data):
    if model.dim != data.feature_dim:
        raise ValueError(f"model dim {model.dim} != dataset feature dim {data.feature_dim}")
