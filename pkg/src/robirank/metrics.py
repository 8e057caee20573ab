"""Evaluation metrics: mean truncated NDCG curves for the feature track
and top-k precision for the latent track."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ltr import exp2_gain, ndcg_at_k


@dataclass
class MetricReport:
    """Per-context metric values plus their mean at one truncation level."""

    metric: str
    k: int
    values: np.ndarray
    mean: float
    n_contexts: int

    @classmethod
    def from_values(cls, metric, k, values):
        values = np.asarray(values, dtype=np.float64)
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError(f"{metric}@{k}: values must lie in [0, 1]")
        mean = float(values.mean()) if values.size else 0.0
        return cls(metric, int(k), values, mean, int(values.size))

    def csv_row(self):
        return f"{self.metric},{self.k},{self.mean!r},{self.n_contexts}"


def mean_ndcg_curve(model, data, ks, gain=exp2_gain):
    """One MetricReport per truncation level, averaged over contexts."""
    if not ks:
        raise ValueError("ks must be non-empty")
    reports = []
    for k in ks:
        vals = [ndcg_at_k(model, ctx, k, gain) for ctx in data.contexts]
        reports.append(MetricReport.from_values("ndcg", k, vals))
    return reports


def precision_at_k(model, train, test, k, exclude_train=True):
    """Fraction of each test context's top-k candidates that are test items.

    Candidates are all items ranked by score descending (ties broken by
    item index ascending), excluding that context's training items by
    default.  The denominator stays k even when fewer candidates exist.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if model.num_items != test.num_items:
        raise ValueError(
            f"model has {model.num_items} items, test set has {test.num_items}"
        )
    if test.n_pairs and int(test.pairs[:, 0].max()) >= model.num_contexts:
        raise ValueError("test context index out of range for the model")

    train_items = {}
    if exclude_train:
        for u, i in train.pairs:
            train_items.setdefault(int(u), set()).add(int(i))
    test_items = {}
    for u, i in test.pairs:
        test_items.setdefault(int(u), set()).add(int(i))

    values = []
    for u in sorted(test_items):
        s = model.V @ model.U[u]
        excluded = train_items.get(u, set())
        cand = np.array(
            [i for i in range(model.num_items) if i not in excluded], dtype=np.int64
        )
        top = cand[np.argsort(-s[cand], kind="stable")[:k]]
        hits = sum(1 for i in top if int(i) in test_items[u])
        values.append(hits / k)
    return MetricReport.from_values("prec", k, values)
