"""Latent retrieval track.

Scores come from learned context and item embeddings, and the training
signal is positive-only: a set of observed (context, item) pairs.  The
exact objective pushes, per observed pair, the summed logistic
surrogate over all other items through the unbounded slow-growth
transform.  Because that transform sits outside the sum, a plain
sampled gradient would be biased; introducing one positive auxiliary
variable per pair linearizes the transform into an upper bound that is
tight at a closed-form setting of the auxiliaries.  The bound admits an
unbiased three-row sparse gradient estimate, which drives the
alternating trainer: a block of stochastic embedding updates, then the
closed-form auxiliary refresh.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import _kernels, losses
from .errors import DivergenceError
from .losses import LN2


@dataclass
class InteractionSet:
    """Observed (context, item) pairs over dense index spaces."""

    num_contexts: int
    num_items: int
    pairs: np.ndarray  # (n, 2) int64
    context_ids: list = None
    item_ids: list = None

    def __post_init__(self):
        self.pairs = np.ascontiguousarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        n = self.pairs.shape[0]
        if n:
            if self.pairs.min() < 0:
                raise ValueError("pair indices must be >= 0")
            if self.pairs[:, 0].max() >= self.num_contexts:
                raise ValueError("context index out of range")
            if self.pairs[:, 1].max() >= self.num_items:
                raise ValueError("item index out of range")
            keys = self.pairs[:, 0] * np.int64(self.num_items) + self.pairs[:, 1]
            if np.unique(keys).size != n:
                raise ValueError("pairs must be unique")

    @property
    def n_pairs(self):
        return self.pairs.shape[0]

    def covers_all_contexts(self):
        return np.unique(self.pairs[:, 0]).size == self.num_contexts


@dataclass
class LatentModel:
    """Embedding blocks: one row per context and per item."""

    dim: int
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.V = np.ascontiguousarray(self.V, dtype=np.float64)
        if self.U.ndim != 2 or self.V.ndim != 2:
            raise ValueError("U and V must be 2-d")
        if self.U.shape[1] != self.dim or self.V.shape[1] != self.dim:
            raise ValueError("embedding width must equal dim")
        if not (np.all(np.isfinite(self.U)) and np.all(np.isfinite(self.V))):
            raise ValueError("embeddings must be finite")

    @property
    def num_contexts(self):
        return self.U.shape[0]

    @property
    def num_items(self):
        return self.V.shape[0]


@dataclass
class AuxVars:
    """One positive linearization variable per observed pair."""

    xi: np.ndarray

    def __post_init__(self):
        self.xi = np.ascontiguousarray(self.xi, dtype=np.float64)
        if self.xi.ndim != 1:
            raise ValueError("xi must be a vector")
        if not np.all(np.isfinite(self.xi)) or np.any(self.xi <= 0.0):
            raise ValueError("xi values must be finite and > 0")


@dataclass
class SgdConfig:
    """Settings for the serial alternating trainer."""

    dim: int
    eta: float
    inner_updates: int = None  # defaults to the number of observed pairs
    outer_rounds: int = 50
    mu: float = 0.0
    seed: int = 0
    include_scale_constants: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError("eta must be > 0")
        if self.inner_updates is not None and self.inner_updates < 1:
            raise ValueError("inner_updates must be >= 1")
        if self.outer_rounds < 1:
            raise ValueError("outer_rounds must be >= 1")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


@dataclass
class RoundStats:
    """Per-round progress record emitted by the serial trainer."""

    round: int
    elapsed_seconds: float
    updates_done: int
    bound_before_xi: float
    bound_after_xi: float
    exact_objective: float


@dataclass
class SparseGradient:
    """Stochastic gradient touching exactly three embedding rows."""

    pair_index: int
    x: int
    y: int
    y_neg: int
    d_u: np.ndarray
    d_v_pos: np.ndarray
    d_v_neg: np.ndarray

    def add_to(self, dU, dV, weight=1.0):
        dU[self.x] += weight * self.d_u
        dV[self.y] += weight * self.d_v_pos
        dV[self.y_neg] += weight * self.d_v_neg


def latent_score(model, x, y):
    """Dot product of the context and item embedding rows."""
    if not 0 <= x < model.num_contexts:
        raise IndexError(f"context index {x} out of range")
    if not 0 <= y < model.num_items:
        raise IndexError(f"item index {y} out of range")
    return float(model.U[x] @ model.V[y])


def _check_shapes(model, data):
    if model.num_contexts != data.num_contexts or model.num_items != data.num_items:
        raise ValueError(
            f"model is {model.num_contexts}x{model.num_items}, "
            f"data is {data.num_contexts}x{data.num_items}"
        )


def pair_surrogate_sums(model, data):
    """Per observed pair: summed logistic surrogate over all other items."""
    _check_shapes(model, data)
    n = data.n_pairs
    out = np.empty(n, dtype=np.float64)
    if n == 0:
        return out
    px = data.pairs[:, 0]
    py = data.pairs[:, 1]
    order = np.argsort(px, kind="stable")
    sorted_out = np.empty(n, dtype=np.float64)
    _kernels.pair_inner_sums(
        model.U, model.V, np.ascontiguousarray(px[order]), np.ascontiguousarray(py[order]), sorted_out
    )
    out[order] = sorted_out
    return out


def _frobenius_penalty(model, mu):
    if mu == 0.0:
        return 0.0
    return 0.5 * mu * (float(np.sum(model.U * model.U)) + float(np.sum(model.V * model.V)))


def _exact_from_sums(sums):
    return float(np.sum(np.log1p(sums))) / LN2


def _bound_from_sums(sums, xi):
    return float(np.sum(-np.log2(xi) + (xi * (sums + 1.0) - 1.0) / LN2))


def exact_objective(model, data, mu=0.0):
    """Exact transformed objective; costs O(pairs * items * dim)."""
    sums = pair_surrogate_sums(model, data)
    return _exact_from_sums(sums) + _frobenius_penalty(model, mu)


def bound_objective(model, aux, data, mu=0.0):
    """Linearized upper bound; >= exact_objective for any positive auxiliaries."""
    if aux.xi.shape[0] != data.n_pairs:
        raise ValueError(f"aux has {aux.xi.shape[0]} entries, data has {data.n_pairs} pairs")
    sums = pair_surrogate_sums(model, data)
    return _bound_from_sums(sums, aux.xi) + _frobenius_penalty(model, mu)


def xi_step(model, data):
    """Closed-form minimizer of the bound over the auxiliaries; values in (0, 1]."""
    sums = pair_surrogate_sums(model, data)
    return AuxVars(1.0 / (sums + 1.0))


def sg_term(model, aux, data, pair_index, y_neg):
    """Deterministic core of the stochastic gradient for a given draw."""
    x, y = (int(v) for v in data.pairs[pair_index])
    if y_neg == y:
        raise ValueError("y_neg must differ from the observed item")
    if not 0 <= y_neg < data.num_items:
        raise IndexError(f"item index {y_neg} out of range")
    ux = model.U[x]
    vdiff = model.V[y] - model.V[y_neg]
    scale = data.n_pairs * (data.num_items - 1) * float(aux.xi[pair_index]) / LN2
    g = scale * losses.logistic_loss_grad(float(ux @ vdiff))
    return SparseGradient(
        pair_index=pair_index,
        x=x,
        y=y,
        y_neg=y_neg,
        d_u=g * vdiff,
        d_v_pos=g * ux,
        d_v_neg=-g * ux,
    )


def sg_estimate(model, aux, data, rng):
    """Unbiased sparse estimate of the bound gradient in the embeddings.

    Draws an observed pair uniformly, then a contrast item uniformly from
    the remaining items; the regularizer is excluded (the trainer applies
    it as per-row shrinkage instead).
    """
    _check_shapes(model, data)
    if data.num_items < 2:
        raise ValueError("need at least 2 items to sample a contrast")
    j = int(rng.integers(data.n_pairs))
    y = int(data.pairs[j, 1])
    r = int(rng.integers(data.num_items - 1))
    y_neg = r + 1 if r >= y else r
    return sg_term(model, aux, data, j, y_neg)


def bound_gradient_dense(model, aux, data):
    """Exact gradient of the non-regularized bound in (U, V); O(pairs * items * dim)."""
    _check_shapes(model, data)
    dU = np.zeros_like(model.U)
    dV = np.zeros_like(model.V)
    order = np.argsort(data.pairs[:, 0], kind="stable")
    s = None
    cur = -1
    for j in order:
        x, y = (int(v) for v in data.pairs[j])
        if x != cur:
            s = model.V @ model.U[x]
            cur = x
        w = losses.logistic_loss_grad(s[y] - s)
        w[y] = 0.0
        c = float(aux.xi[j]) / LN2
        wsum = float(w.sum())
        dU[x] += c * (wsum * model.V[y] - w @ model.V)
        dV[y] += c * wsum * model.U[x]
        dV -= c * np.outer(w, model.U[x])
    return dU, dV


def baseline_objective(model, data):
    """Reporting-only objective: harmonic number of one plus the strict rank
    of each observed item among all items."""
    _check_shapes(model, data)
    m = data.num_items
    harmonic = np.concatenate(([0.0], np.cumsum(1.0 / np.arange(1, m + 1))))
    order = np.argsort(data.pairs[:, 0], kind="stable")
    total = 0.0
    s = None
    cur = -1
    for j in order:
        x, y = (int(v) for v in data.pairs[j])
        if x != cur:
            s = model.V @ model.U[x]
            cur = x
        rank = int(np.count_nonzero(s > s[y]))
        total += harmonic[1 + rank]
    return total


def init_model(data, dim, rng):
    """Seeded Gaussian embeddings with variance 1/dim, so scores start O(1)."""
    sigma = 1.0 / np.sqrt(dim)
    U = rng.normal(0.0, sigma, (data.num_contexts, dim))
    V = rng.normal(0.0, sigma, (data.num_items, dim))
    return LatentModel(dim, U, V)


def _require_trainable(data):
    if data.num_items < 2:
        raise ValueError("need at least 2 items to train")
    if data.n_pairs == 0:
        raise ValueError("no observed pairs to train on")
    if not data.covers_all_contexts():
        raise ValueError("every context must appear in at least one observed pair")


def serial_train(data, config, progress=None):
    """Alternating trainer: stochastic embedding updates, then the
    closed-form auxiliary refresh, for the configured number of rounds.

    Per update, the three touched rows take a step against the sampled
    gradient after multiplicative shrinkage (1 - eta * mu); the large
    constant factors of the unbiased estimator are folded into eta
    unless include_scale_constants is set.  Deterministic given the
    seed.  `progress` is called with (RoundStats, live model) after
    every auxiliary refresh.
    """
    _require_trainable(data)
    rng = np.random.default_rng(config.seed)
    model = init_model(data, config.dim, rng)
    U, V = model.U, model.V
    n, m = data.n_pairs, data.num_items
    inner = config.inner_updates if config.inner_updates is not None else n
    scale = (n * (m - 1) / LN2) if config.include_scale_constants else 1.0
    aux = xi_step(model, data)

    px = np.ascontiguousarray(data.pairs[:, 0])
    py = np.ascontiguousarray(data.pairs[:, 1])
    all_pair_idx = np.arange(n, dtype=np.int64)
    all_items = np.arange(m, dtype=np.int64)

    t0 = time.perf_counter()
    updates_done = 0
    for r in range(config.outer_rounds):
        choice = rng.integers(0, n, size=inner)
        negraw = rng.integers(0, m - 1, size=inner)
        _kernels.sgd_block_updates(
            U, V, px, py, aux.xi, all_pair_idx, choice, negraw,
            all_items, all_items, config.eta, config.mu, scale,
        )
        updates_done += inner
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
            raise DivergenceError(
                f"non-finite embeddings at round {r} with eta={config.eta!r}"
            )
        sums = pair_surrogate_sums(model, data)
        penalty = _frobenius_penalty(model, config.mu)
        bound_before = _bound_from_sums(sums, aux.xi) + penalty
        aux = AuxVars(1.0 / (sums + 1.0))
        bound_after = _bound_from_sums(sums, aux.xi) + penalty
        if progress is not None:
            progress(
                RoundStats(
                    round=r,
                    elapsed_seconds=time.perf_counter() - t0,
                    updates_done=updates_done,
                    bound_before_xi=bound_before,
                    bound_after_xi=bound_after,
                    exact_objective=_exact_from_sums(sums) + penalty,
                ),
                model,
            )
    return model, aux
