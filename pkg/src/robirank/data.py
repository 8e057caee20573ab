"""Data ingestion and synthetic generators.

Two text formats are supported: the qid-grouped sparse feature format
used by the public ranking benchmarks (one item per line, items grouped
by query id), and whitespace-separated implicit-feedback triplets
``<user> <item> [count]``.  Both parsers raise on the first malformed
line with its line number and never silently drop a record.

The synthetic generators exist so the whole pipeline can be exercised
at desk scale: a planted-weights ranking problem whose noise-free
optimum is known, and a block-preference interaction set whose ideal
scorer is known.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError
from .lcr import InteractionSet, LatentModel
from .ltr import ContextBlock, LinearModel, RankingDataset


def parse_letor(lines):
    """Parse ``<label> qid:<id> <fid>:<val> ... # comment`` lines.

    Contexts are keyed by qid in first-appearance order (interleaving is
    fine); feature indices are 1-based and must be strictly increasing
    within a line; the feature dimension is the maximum index seen in
    the whole stream, and missing entries are zero.
    """
    order = []
    groups = {}
    max_fid = 0
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) < 2:
            raise ParseError(ln, "expected '<label> qid:<id> ...'")
        try:
            label = int(toks[0])
        except ValueError:
            raise ParseError(ln, f"bad relevance label {toks[0]!r}") from None
        if label < 0:
            raise ParseError(ln, f"relevance label must be >= 0, got {label}")
        if not toks[1].startswith("qid:") or len(toks[1]) == 4:
            raise ParseError(ln, f"expected qid:<id>, got {toks[1]!r}")
        qid = toks[1][4:]
        feats = []
        prev = 0
        for tok in toks[2:]:
            fid_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(ln, f"malformed feature {tok!r}")
            try:
                fid = int(fid_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(ln, f"malformed feature {tok!r}") from None
            if fid < 1:
                raise ParseError(ln, f"feature indices are 1-based, got {fid}")
            if fid == prev:
                raise ParseError(ln, f"duplicate feature index {fid}")
            if fid < prev:
                raise ParseError(ln, f"feature index {fid} not strictly increasing")
            prev = fid
            feats.append((fid, val))
        max_fid = max(max_fid, prev)
        if qid not in groups:
            order.append(qid)
            groups[qid] = []
        groups[qid].append((label, feats))

    contexts = []
    for qid in order:
        rows = groups[qid]
        feat = np.zeros((len(rows), max_fid))
        labels = np.empty(len(rows))
        for i, (label, feats) in enumerate(rows):
            labels[i] = label
            for fid, val in feats:
                feat[i, fid - 1] = val
        ids = [f"{i:06d}" for i in range(len(rows))]
        contexts.append(ContextBlock(qid, ids, feat, labels, 1.0))
    return RankingDataset(contexts, max_fid)


def write_letor(dataset, stream):
    """Serialize a ranking dataset densely in the qid feature format.

    Every feature index is written (including zeros) so that
    parse -> write -> parse reproduces the structure exactly.  Labels
    must be integral.
    """
    for ctx in dataset.contexts:
        for i in range(ctx.n_items):
            w = float(ctx.scores[i])
            if not w.is_integer():
                raise ValueError(
                    f"context {ctx.context_id!r}: label {w!r} is not an integer"
                )
            feats = " ".join(
                f"{fid + 1}:{float(ctx.features[i, fid])!r}"
                for fid in range(dataset.feature_dim)
            )
            stream.write(f"{int(w)} qid:{ctx.context_id} {feats}\n")


def parse_triplets(lines):
    """Parse ``<user> <item> [count]`` triplet lines into an interaction set.

    Ids are interned to dense indices in first-appearance order,
    duplicate pairs are collapsed, and the optional play count is
    validated and discarded.
    """
    users = {}
    items = {}
    seen = set()
    pairs = []
    for ln, raw in enumerate(lines, start=1):
        toks = raw.split()
        if not toks:
            continue
        if len(toks) < 2:
            raise ParseError(ln, "expected '<user> <item> [count]'")
        if len(toks) > 3:
            raise ParseError(ln, f"too many fields ({len(toks)})")
        if len(toks) == 3:
            try:
                count = int(toks[2])
            except ValueError:
                raise ParseError(ln, f"bad count {toks[2]!r}") from None
            if count < 1:
                raise ParseError(ln, f"count must be >= 1, got {count}")
        u = users.setdefault(toks[0], len(users))
        i = items.setdefault(toks[1], len(items))
        if (u, i) not in seen:
            seen.add((u, i))
            pairs.append((u, i))
    return InteractionSet(
        len(users),
        len(items),
        np.array(pairs, dtype=np.int64).reshape(-1, 2),
        context_ids=list(users),
        item_ids=list(items),
    )


def align_test_set(train, test):
    """Re-index a separately parsed test set onto the training vocabulary.

    Pairs whose user or item never appeared in training are dropped
    (they cannot be scored); returns the aligned set and the number of
    dropped pairs.
    """
    if train.context_ids is None or test.context_ids is None:
        raise ValueError("both sets need id vocabularies to be aligned")
    umap = {cid: i for i, cid in enumerate(train.context_ids)}
    imap = {iid: i for i, iid in enumerate(train.item_ids)}
    kept = []
    dropped = 0
    seen = set()
    for u, i in test.pairs:
        uid = test.context_ids[u]
        iid = test.item_ids[i]
        if uid in umap and iid in imap:
            key = (umap[uid], imap[iid])
            if key not in seen:
                seen.add(key)
                kept.append(key)
        else:
            dropped += 1
    aligned = InteractionSet(
        train.num_contexts,
        train.num_items,
        np.array(kept, dtype=np.int64).reshape(-1, 2),
        context_ids=train.context_ids,
        item_ids=train.item_ids,
    )
    return aligned, dropped


def _planted_seed_pair(seed):
    return np.random.SeedSequence(seed).spawn(2)


def synthetic_rank_planted_model(dim, seed):
    """The weight vector the ranking generator plants for a given seed."""
    w_ss, _ = _planted_seed_pair(seed)
    return LinearModel(np.random.default_rng(w_ss).normal(size=dim))


def make_synthetic_rank(num_contexts, items_per_context, dim, noise, seed):
    """Planted-weights ranking data: Gaussian features, labels in {0, 1, 2}
    by per-context thirds of the planted score plus noise.

    Returns (train, validation, test) datasets sharing the feature
    space.  With noise=0 the planted weights order every context by
    label, so their truncated metrics are all 1.
    """
    if num_contexts < 1 or items_per_context < 2 or dim < 1:
        raise ValueError("need num_contexts >= 1, items_per_context >= 2, dim >= 1")
    w_ss, data_ss = _planted_seed_pair(seed)
    wstar = np.random.default_rng(w_ss).normal(size=dim)
    rng = np.random.default_rng(data_ss)

    def make_split(n_ctx, tag):
        contexts = []
        for c in range(n_ctx):
            feat = rng.normal(size=(items_per_context, dim))
            u = feat @ wstar + noise * rng.normal(size=items_per_context)
            positions = np.argsort(np.argsort(u))
            labels = (positions * 3) // items_per_context
            ids = [f"{i:06d}" for i in range(items_per_context)]
            contexts.append(ContextBlock(f"{tag}{c}", ids, feat, labels.astype(float), 1.0))
        return RankingDataset(contexts, dim)

    side = max(2, num_contexts // 3)
    return (
        make_split(num_contexts, "train-q"),
        make_split(side, "valid-q"),
        make_split(side, "test-q"),
    )


def make_synthetic_lcr(num_contexts, num_items, blocks, density, seed, max_retries=100):
    """Block-preference interactions: users and items are dealt round-robin
    into blocks, and every within-block pair is observed with the given
    probability.  Observed pairs form the training set; the remaining
    within-block pairs form the held-out test set (disjoint by
    construction, empty at density 1).
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    if blocks > num_items:
        raise ValueError(f"{blocks} blocks but only {num_items} items")
    ublock = np.arange(num_contexts) % blocks
    iblock = np.arange(num_items) % blocks
    rng = np.random.default_rng(seed)
    train_pairs = []
    test_pairs = []
    for u in range(num_contexts):
        cand = np.flatnonzero(iblock == ublock[u])
        for _ in range(max_retries):
            keep = rng.random(cand.size) < density
            if keep.any():
                break
        else:
            raise ValueError(
                f"context {u} still empty after {max_retries} retries; raise density"
            )
        train_pairs.extend((u, int(i)) for i in cand[keep])
        test_pairs.extend((u, int(i)) for i in cand[~keep])
    train = InteractionSet(
        num_contexts, num_items, np.array(train_pairs, dtype=np.int64).reshape(-1, 2)
    )
    test = InteractionSet(
        num_contexts, num_items, np.array(test_pairs, dtype=np.int64).reshape(-1, 2)
    )
    return train, test


def block_oracle_model(num_contexts, num_items, blocks):
    """Ideal scorer for the block generator: embeddings are block indicators,
    so same-block pairs score 1 and cross-block pairs score 0."""
    U = np.zeros((num_contexts, blocks))
    V = np.zeros((num_items, blocks))
    U[np.arange(num_contexts), np.arange(num_contexts) % blocks] = 1.0
    V[np.arange(num_items), np.arange(num_items) % blocks] = 1.0
    return LatentModel(blocks, U, V)
