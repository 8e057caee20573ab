"""Self-contained property checks shared by the verify command and the
acceptance tests.

Every check builds its own seeded random instances, compares an
implementation against an independent oracle (central finite
differences, exhaustive enumeration, or a from-scratch evaluation), and
reports the measured error so failures are diagnosable.  Loss functions
are reached through their module so a deliberately broken derivative
(e.g. in a mutation test) is picked up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses, lcr, ltr, parallel
from .losses import TransformKind


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (
            f"{status} {self.name}: measured={self.measured:.3e} "
            f"limit={self.threshold:.3e}{extra}"
        )


def _central_diff(f, t, h=1e-5):
    return (f(t + h) - f(t - h)) / (2.0 * h)


def _rel(err, ref, floor=1e-12):
    return err / max(ref, floor)


def random_rank_instance(rng, n_contexts=3, n_items=5, dim=5):
    """Small feature-track dataset with at least one positive gain."""
    contexts = []
    for c in range(n_contexts):
        feats = rng.normal(size=(n_items, dim))
        labels = rng.integers(0, 3, size=n_items).astype(float)
        if labels.max() == 0:
            labels[rng.integers(n_items)] = 2.0
        ids = [f"{i:04d}" for i in range(n_items)]
        contexts.append(ltr.ContextBlock(f"q{c}", ids, feats, labels, 1.0))
    return ltr.RankingDataset(contexts, dim)


def random_latent_instance(rng, n_contexts=3, n_items=5, dim=2, n_pairs=None):
    """Small interaction set (every context covered) plus a random model."""
    n_pairs = n_pairs if n_pairs is not None else min(2 * n_contexts, n_contexts * n_items)
    chosen = set()
    for x in range(n_contexts):  # coverage first
        chosen.add((x, int(rng.integers(n_items))))
    while len(chosen) < n_pairs:
        chosen.add((int(rng.integers(n_contexts)), int(rng.integers(n_items))))
    pairs = np.array(sorted(chosen), dtype=np.int64)
    data = lcr.InteractionSet(n_contexts, n_items, pairs)
    model = lcr.LatentModel(
        dim,
        rng.normal(0, 1.0 / np.sqrt(dim), (n_contexts, dim)),
        rng.normal(0, 1.0 / np.sqrt(dim), (n_items, dim)),
    )
    return data, model


def check_scalar_gradients(seed=0, n_points=20, h=1e-5, tol=1e-5):
    """All scalar derivatives against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    t_loss = rng.uniform(-20.0, 20.0, n_points)
    t_pos = rng.uniform(0.0, 40.0, n_points)
    for t in t_loss:
        fd = _central_diff(lambda v: losses.logistic_loss(v), t, h)
        worst = max(worst, _rel(abs(fd - losses.logistic_loss_grad(t)), abs(fd)))
        for kind in TransformKind:
            fd = _central_diff(lambda v: losses.robust_loss(kind, v), t, h)
            worst = max(worst, _rel(abs(fd - losses.robust_loss_grad(kind, t)), abs(fd)))
    for t in t_pos:
        for kind in TransformKind:
            fd = _central_diff(lambda v: losses.transform(kind, v), max(t, h), h)
            worst = max(
                worst, _rel(abs(fd - losses.transform_grad(kind, max(t, h))), abs(fd))
            )
    return CheckResult("scalar derivatives vs finite differences", worst <= tol, worst, tol)


def check_ltr_gradient(seed=0, n_instances=20, h=1e-5, tol=1e-5):
    """Analytic feature-track gradient against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        data = random_rank_instance(rng, n_contexts=2 + i % 3, n_items=4 + i % 3, dim=5)
        omega = rng.normal(scale=0.5, size=5)
        lam = [0.0, 0.1][i % 2]
        kind = list(TransformKind)[i % 2]
        model = ltr.LinearModel(omega)
        grad = ltr.gradient_robirank(model, data, lam, kind)
        fd = np.empty_like(omega)
        for j in range(omega.size):
            e = np.zeros_like(omega)
            e[j] = h
            fd[j] = (
                ltr.objective_robirank(ltr.LinearModel(omega + e), data, lam, kind)
                - ltr.objective_robirank(ltr.LinearModel(omega - e), data, lam, kind)
            ) / (2 * h)
        worst = max(worst, _rel(np.linalg.norm(fd - grad), np.linalg.norm(fd)))
    return CheckResult("ranking objective gradient vs finite differences", worst <= tol, worst, tol)


def check_bound_gradient(seed=0, n_instances=20, h=1e-5, tol=1e-5):
    """Dense bound gradient in the embeddings against central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        data, model = random_latent_instance(rng, 3, 4 + i % 2, dim=2)
        aux = lcr.xi_step(model, data)
        dU, dV = lcr.bound_gradient_dense(model, aux, data)
        grad = np.concatenate([dU.ravel(), dV.ravel()])
        theta = np.concatenate([model.U.ravel(), model.V.ravel()])
        nu = model.U.size

        def at(vec):
            m = lcr.LatentModel(
                model.dim, vec[:nu].reshape(model.U.shape), vec[nu:].reshape(model.V.shape)
            )
            return lcr.bound_objective(m, aux, data, mu=0.0)

        fd = np.empty_like(theta)
        for j in range(theta.size):
            e = np.zeros_like(theta)
            e[j] = h
            fd[j] = (at(theta + e) - at(theta - e)) / (2 * h)
        worst = max(worst, _rel(np.linalg.norm(fd - grad), np.linalg.norm(fd)))
    return CheckResult("bound gradient vs finite differences", worst <= tol, worst, tol)


def check_bound_chain(seed=0, n_instances=100):
    """Transformed objectives dominate the exact-indicator objective, strictly."""
    rng = np.random.default_rng(seed)
    min_margin = np.inf
    for i in range(n_instances):
        data = random_rank_instance(rng, n_contexts=1 + i % 3, n_items=3 + i % 4, dim=4)
        model = ltr.LinearModel(rng.normal(scale=0.7, size=4))
        l1 = ltr.objective_robirank(model, data, 0.0, TransformKind.RHO1)
        l2 = ltr.objective_robirank(model, data, 0.0, TransformKind.RHO2)
        lx = ltr.objective_indicator(model, data)
        min_margin = min(min_margin, l1 - l2, l2 - lx)
    return CheckResult(
        "objective chain rho1 >= rho2 >= indicator (strict)",
        min_margin > 0.0,
        min_margin,
        0.0,
        detail="measured is the smallest gap",
    )


def check_linearization(seed=0, n_instances=50, n_draws=100, tight_tol=1e-10, slack_tol=1e-12):
    """Bound is tight at the closed-form auxiliaries and dominates elsewhere."""
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    worst_violation = -np.inf
    for i in range(n_instances):
        data, model = random_latent_instance(rng, 2 + i % 3, 4 + i % 3, dim=2)
        exact = lcr.exact_objective(model, data)
        star = lcr.xi_step(model, data)
        worst_gap = max(worst_gap, abs(lcr.bound_objective(model, star, data) - exact))
        for _ in range(n_draws):
            xi = star.xi * np.exp(rng.normal(0.0, 1.0, star.xi.shape))
            bound = lcr.bound_objective(model, lcr.AuxVars(xi), data)
            worst_violation = max(worst_violation, exact - bound)
    passed = worst_gap <= tight_tol and worst_violation <= slack_tol
    return CheckResult(
        "linearized bound tight at closed form, dominant elsewhere",
        passed,
        max(worst_gap, worst_violation),
        tight_tol,
        detail=f"tight gap {worst_gap:.2e}, worst dominance violation {worst_violation:.2e}",
    )


def check_unbiasedness(seed=0, n_instances=10, tol=1e-10):
    """Exhaustive average of the sparse estimator equals the dense gradient."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_instances):
        data, model = random_latent_instance(
            rng, n_contexts=2 + i % 2, n_items=3 + i % 2, dim=1 + i % 3, n_pairs=6
        )
        aux = lcr.xi_step(model, data)
        dU, dV = lcr.bound_gradient_dense(model, aux, data)
        exact = np.concatenate([dU.ravel(), dV.ravel()])
        accU = np.zeros_like(model.U)
        accV = np.zeros_like(model.V)
        n, m = data.n_pairs, data.num_items
        for j in range(n):
            y = int(data.pairs[j, 1])
            for y_neg in range(m):
                if y_neg == y:
                    continue
                lcr.sg_term(model, aux, data, j, y_neg).add_to(
                    accU, accV, weight=1.0 / (n * (m - 1))
                )
        mean = np.concatenate([accU.ravel(), accV.ravel()])
        worst = max(worst, _rel(np.linalg.norm(mean - exact), np.linalg.norm(exact)))
    return CheckResult(
        "sampled gradient unbiased (exhaustive enumeration)", worst <= tol, worst, tol
    )


def check_ssgd_identity(seed=0, n_instances=5, p=2, n_items=4, cos_tol=0.999, spread_tol=0.05):
    """Partition-averaged stratum gradients align with the full bound gradient."""
    rng = np.random.default_rng(seed)
    cosines = []
    constants = []
    for _ in range(n_instances):
        data, model = random_latent_instance(rng, n_contexts=4, n_items=n_items, dim=2, n_pairs=7)
        aux = lcr.xi_step(model, data)
        res = parallel.ssgd_identity_check(model, aux, data, p, rng=rng, mode="exhaustive")
        cosines.append(res.cosine)
        constants.append(res.constant)
    spread = (max(constants) - min(constants)) / np.mean(constants)
    passed = min(cosines) >= cos_tol and spread <= spread_tol
    return CheckResult(
        "stratified gradient identity (exhaustive partitions)",
        passed,
        min(cosines),
        cos_tol,
        detail=(
            f"fitted constants {', '.join(f'{c:.4f}' for c in constants)}; "
            f"spread {spread:.2%}"
        ),
    )


def run_all(seed=0):
    """Run every check; returns the list of results."""
    return [
        check_scalar_gradients(seed),
        check_ltr_gradient(seed),
        check_bound_gradient(seed),
        check_bound_chain(seed),
        check_linearization(seed),
        check_unbiasedness(seed),
        check_ssgd_identity(seed),
    ]
