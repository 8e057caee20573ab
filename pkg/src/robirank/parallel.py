"""Stratified in-process parallel trainer.

Contexts are dealt once into balanced worker blocks; items are re-dealt
into balanced blocks at every round.  During a round each worker runs
stochastic updates only on its own (context block x item block) stratum,
so no two workers ever touch a common embedding row and the worker pool
needs no locks, only a barrier between rounds.  After each round's
barrier every auxiliary variable is refreshed against the full item set,
sharded by the fixed context partition.

Workers are threads; the update kernel releases the GIL, so strata run
truly in parallel.  Determinism holds for a fixed (seed, p): all random
draws happen on the coordinator before threads are dispatched, and the
written row sets are disjoint by construction.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, losses
from .errors import DivergenceError
from .lcr import (
    AuxVars,
    _bound_from_sums,
    _require_trainable,
    bound_gradient_dense,
    init_model,
)
from .losses import LN2


@dataclass
class ContextPartition:
    """Fixed balanced assignment of contexts to workers."""

    p: int
    assignment: np.ndarray


@dataclass
class ItemPartition:
    """Per-round balanced assignment of items to workers."""

    round_id: int
    p: int
    assignment: np.ndarray


@dataclass
class ParallelConfig:
    """Settings for the stratified parallel trainer."""

    dim: int
    eta: float
    p: int = 1
    inner_updates_per_worker: int = None  # defaults to ceil(pairs / p)
    outer_rounds: int = 50
    mu: float = 0.0
    seed: int = 0
    track_ownership: bool = False
    objective_sample: int = 512

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError("eta must be > 0")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.inner_updates_per_worker is not None and self.inner_updates_per_worker < 1:
            raise ValueError("inner_updates_per_worker must be >= 1")
        if self.outer_rounds < 1:
            raise ValueError("outer_rounds must be >= 1")
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


@dataclass
class ParallelRoundStats:
    """Per-round progress record emitted by the parallel trainer."""

    round: int
    elapsed_seconds: float
    updates_done: int
    bound_on_sample: float
    conflicts: int = None  # only populated when ownership tracking is on
    max_u_block: int = 0
    max_v_block: int = 0


def make_partitions(n, p, rng):
    """Random exhaustive assignment of n indices to p balanced parts.

    Part sizes differ by at most one; the first n % p parts get the
    extra element.  Deterministic given the generator state.
    """
    if p < 1 or p > n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    perm = rng.permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    base, rem = divmod(n, p)
    start = 0
    for q in range(p):
        size = base + (1 if q < rem else 0)
        assignment[perm[start : start + size]] = q
        start += size
    return assignment


def _qualifying(data, cpart_assign, ipart_assign, q):
    px = data.pairs[:, 0]
    py = data.pairs[:, 1]
    return np.flatnonzero((cpart_assign[px] == q) & (ipart_assign[py] == q))


def stratum_objective(model, aux, data, cpart, ipart, q):
    """Bound objective restricted to worker q's stratum (no regularizer).

    Sums over observed pairs whose context and item both belong to
    worker q, with the inner surrogate restricted to worker q's items.
    With p=1 this is exactly the non-regularized bound objective.
    """
    if not 0 <= q < cpart.p:
        raise ValueError(f"worker {q} out of range for p={cpart.p}")
    block = np.flatnonzero(ipart.assignment == q)
    idx = _qualifying(data, cpart.assignment, ipart.assignment, q)
    total = 0.0
    s = None
    cur = -1
    for j in idx[np.argsort(data.pairs[idx, 0], kind="stable")]:
        x, y = (int(v) for v in data.pairs[j])
        if x != cur:
            s = model.V[block] @ model.U[x]
            cur = x
        sy = float(model.U[x] @ model.V[y])
        t = float(np.sum(losses.logistic_loss(sy - s))) - 1.0  # drop the self term
        xi = float(aux.xi[j])
        total += -np.log2(xi) + (xi * (t + 1.0) - 1.0) / LN2
    return total


def stratum_gradient_dense(model, aux, data, cpart_assign, ipart_assign, q):
    """Exact gradient of worker q's stratum objective, embedded in full (U, V)."""
    dU = np.zeros_like(model.U)
    dV = np.zeros_like(model.V)
    block = np.flatnonzero(ipart_assign == q)
    if block.size == 0:
        return dU, dV
    pos = {int(i): k for k, i in enumerate(block)}
    idx = _qualifying(data, cpart_assign, ipart_assign, q)
    s = None
    cur = -1
    for j in idx[np.argsort(data.pairs[idx, 0], kind="stable")]:
        x, y = (int(v) for v in data.pairs[j])
        if x != cur:
            s = model.V[block] @ model.U[x]
            cur = x
        sy = float(model.U[x] @ model.V[y])
        w = losses.logistic_loss_grad(sy - s)
        w[pos[y]] = 0.0
        c = float(aux.xi[j]) / LN2
        wsum = float(w.sum())
        dU[x] += c * (wsum * model.V[y] - w @ model.V[block])
        dV[y] += c * wsum * model.U[x]
        dV[block] -= c * np.outer(w, model.U[x])
    return dU, dV


def _locate_divergence(U, V, cpart_assign, ipart_assign):
    bad_u = np.flatnonzero(~np.all(np.isfinite(U), axis=1))
    if bad_u.size:
        return int(cpart_assign[bad_u[0]])
    bad_v = np.flatnonzero(~np.all(np.isfinite(V), axis=1))
    if bad_v.size:
        return int(ipart_assign[bad_v[0]])
    return -1


def parallel_train(data, config, progress=None):
    """Barrier-synchronous stratified training; returns (model, auxiliaries).

    Per round: deal the items, let each worker run its update budget on
    its stratum (skipping workers whose stratum has no usable pairs),
    join, refresh the auxiliaries against the full item set sharded by
    the context partition, and report progress.  Worker q's random
    stream is spawned from the seed and worker id; the partition and
    initialization streams are separate, so the partition sequence does
    not depend on p.
    """
    _require_trainable(data)
    p = config.p
    if p > data.num_items:
        raise ValueError(f"p={p} exceeds number of items {data.num_items}")
    if p > data.num_contexts:
        raise ValueError(f"p={p} exceeds number of contexts {data.num_contexts}")

    ss = np.random.SeedSequence(config.seed)
    init_ss, coord_ss, *worker_ss = ss.spawn(2 + p)
    init_rng = np.random.default_rng(init_ss)
    coord_rng = np.random.default_rng(coord_ss)
    worker_rngs = [np.random.default_rng(s) for s in worker_ss]

    model = init_model(data, config.dim, init_rng)
    U, V = model.U, model.V
    n, m = data.n_pairs, data.num_items
    px = np.ascontiguousarray(data.pairs[:, 0])
    py = np.ascontiguousarray(data.pairs[:, 1])

    cpart = ContextPartition(p, make_partitions(data.num_contexts, p, coord_rng))
    pair_shards = [np.flatnonzero(cpart.assignment[px] == q) for q in range(p)]
    shard_orders = [shard[np.argsort(px[shard], kind="stable")] for shard in pair_shards]
    sample_idx = coord_rng.choice(n, size=min(config.objective_sample, n), replace=False)
    sample_order = np.ascontiguousarray(sample_idx[np.argsort(px[sample_idx], kind="stable")])
    max_u_block = int(np.max(np.bincount(cpart.assignment, minlength=p)))

    inner = (
        config.inner_updates_per_worker
        if config.inner_updates_per_worker is not None
        else -(-n // p)
    )

    xi = xi_parallel_step(U, V, px, py, shard_orders, p, n)
    pool = ThreadPoolExecutor(max_workers=p)
    try:
        t0 = time.perf_counter()
        updates_done = 0
        for r in range(config.outer_rounds):
            ipart_assign = make_partitions(m, p, coord_rng)
            blocks = [np.ascontiguousarray(np.flatnonzero(ipart_assign == q)) for q in range(p)]
            pos_in_block = np.empty(m, dtype=np.int64)
            for q in range(p):
                pos_in_block[blocks[q]] = np.arange(blocks[q].size)

            tasks = []
            written_u, written_v = [], []
            for q in range(p):
                bsize = blocks[q].size
                qual = pair_shards[q][ipart_assign[py[pair_shards[q]]] == q]
                if qual.size == 0 or bsize < 2:
                    # nothing this worker can sample this round; not an error
                    tasks.append(None)
                    written_u.append(set())
                    written_v.append(set())
                    continue
                choice = worker_rngs[q].integers(0, qual.size, size=inner)
                negraw = worker_rngs[q].integers(0, bsize - 1, size=inner)
                tasks.append((qual, choice, negraw, blocks[q]))
                if config.track_ownership:
                    drawn = qual[choice]
                    ys = py[drawn]
                    rr = negraw + (negraw >= pos_in_block[ys])
                    written_u.append(set(px[drawn].tolist()))
                    written_v.append(set(ys.tolist()) | set(blocks[q][rr].tolist()))

            def run(task):
                if task is None:
                    return 0
                qual, choice, negraw, block = task
                _kernels.sgd_block_updates(
                    U, V, px, py, xi, qual, choice, negraw,
                    block, pos_in_block, config.eta, config.mu, 1.0,
                )
                return choice.shape[0]

            done = list(pool.map(run, tasks))  # join = the round barrier
            updates_done += int(sum(done))

            if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V))):
                worker = _locate_divergence(U, V, cpart.assignment, ipart_assign)
                raise DivergenceError(
                    f"non-finite embeddings at round {r} on worker {worker} "
                    f"with eta={config.eta!r}"
                )

            conflicts = None
            if config.track_ownership:
                conflicts = 0
                for a, b in itertools.combinations(range(p), 2):
                    conflicts += len(written_u[a] & written_u[b])
                    conflicts += len(written_v[a] & written_v[b])

            def refresh(order):
                if order.size == 0:
                    return
                out = np.empty(order.size, dtype=np.float64)
                _kernels.pair_inner_sums(
                    U, V, np.ascontiguousarray(px[order]), np.ascontiguousarray(py[order]), out
                )
                xi[order] = 1.0 / (out + 1.0)

            list(pool.map(refresh, shard_orders))  # synchronized auxiliary refresh

            if progress is not None:
                sums = np.empty(sample_order.size, dtype=np.float64)
                _kernels.pair_inner_sums(
                    U, V,
                    np.ascontiguousarray(px[sample_order]),
                    np.ascontiguousarray(py[sample_order]),
                    sums,
                )
                progress(
                    ParallelRoundStats(
                        round=r,
                        elapsed_seconds=time.perf_counter() - t0,
                        updates_done=updates_done,
                        bound_on_sample=_bound_from_sums(sums, xi[sample_order]),
                        conflicts=conflicts,
                        max_u_block=max_u_block,
                        max_v_block=int(max(b.size for b in blocks)),
                    ),
                    model,
                )
    finally:
        pool.shutdown(wait=True)
    return model, AuxVars(xi.copy())


def xi_parallel_step(U, V, px, py, shard_orders, p, n):
    """Full-item auxiliary refresh, sharded by the fixed context partition."""
    xi = np.empty(n, dtype=np.float64)
    for order in shard_orders:
        if order.size == 0:
            continue
        out = np.empty(order.size, dtype=np.float64)
        _kernels.pair_inner_sums(
            U, V, np.ascontiguousarray(px[order]), np.ascontiguousarray(py[order]), out
        )
        xi[order] = 1.0 / (out + 1.0)
    return xi


@dataclass
class IdentityCheckResult:
    """Comparison of the full bound gradient against the partition average."""

    lhs: np.ndarray  # exact bound gradient, flattened over (U, V)
    mean_rhs: np.ndarray  # average over item partitions of the stratum-gradient sum
    scaled_mean_rhs: np.ndarray  # mean_rhs times the fitted constant
    constant: float  # least-squares scalar aligning mean_rhs with lhs
    cosine: float
    n_partitions: int


def _balanced_profiles(m, p):
    base, rem = divmod(m, p)
    return [base + 1 if q < rem else base for q in range(p)]


def _enumerate_assignments(m, sizes):
    assignment = np.empty(m, dtype=np.int64)

    def rec(remaining, q):
        if q == len(sizes) - 1:
            assignment[list(remaining)] = q
            yield assignment
            return
        for combo in itertools.combinations(sorted(remaining), sizes[q]):
            assignment[list(combo)] = q
            yield from rec(remaining - set(combo), q + 1)

    yield from rec(set(range(m)), 0)


def ssgd_identity_check(model, aux, data, p, trials=0, rng=None, mode="exhaustive"):
    """Check that averaging stratum gradients over item partitions recovers the
    direction of the full bound gradient, and fit the proportionality constant.

    The context partition is drawn once from `rng` and held fixed.  In
    exhaustive mode every balanced item partition is enumerated (only
    for 8 items or fewer); otherwise `trials` partitions are sampled.
    The constant is reported rather than asserted: finite item counts
    make it differ from the square-of-workers value suggested by the
    coarse argument.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    cpart_assign = make_partitions(data.num_contexts, p, rng)
    m = data.num_items

    dU, dV = bound_gradient_dense(model, aux, data)
    lhs = np.concatenate([dU.ravel(), dV.ravel()])

    if mode == "exhaustive":
        if m > 8:
            raise ValueError(f"exhaustive enumeration limited to 8 items, got {m}")
        parts = _enumerate_assignments(m, _balanced_profiles(m, p))
    elif mode == "sample":
        if trials < 1:
            raise ValueError("sample mode needs trials >= 1")
        parts = (make_partitions(m, p, rng) for _ in range(trials))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    acc = np.zeros_like(lhs)
    count = 0
    for ipart_assign in parts:
        for q in range(p):
            gU, gV = stratum_gradient_dense(model, aux, data, cpart_assign, ipart_assign, q)
            acc += np.concatenate([gU.ravel(), gV.ravel()])
        count += 1
    mean_rhs = acc / count

    denom = float(mean_rhs @ mean_rhs)
    constant = float(lhs @ mean_rhs) / denom if denom > 0 else 0.0
    norms = float(np.linalg.norm(lhs)) * float(np.linalg.norm(mean_rhs))
    cosine = float(lhs @ mean_rhs) / norms if norms > 0 else 0.0
    return IdentityCheckResult(
        lhs=lhs,
        mean_rhs=mean_rhs,
        scaled_mean_rhs=constant * mean_rhs,
        constant=constant,
        cosine=cosine,
        n_partitions=count,
    )
