"""Command-line entry point.

Subcommands: ``train-rank`` (feature track: grid-train, pick by
validation NDCG, emit the test NDCG curve), ``train-lcr`` (latent
track: serial or stratified-parallel training with a per-round metric
time series), ``eval`` (recompute metrics from a checkpoint), and
``verify`` (run the oracle property suites).

Every output file is written atomically and starts with ``#`` header
lines carrying the full run configuration, so a run can be reproduced
from its own artifacts.  With ``--clock logical`` the time column of
the training CSV counts rounds instead of wall seconds, which makes
reruns byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import checks, data as dataio, lcr, ltr, metrics, parallel
from .checkpoint import atomic_write_text, load_checkpoint, save_checkpoint
from .errors import DivergenceError, ParseError

DEFAULT_ETA_GRID = tuple(2.0**k for k in range(-8, 3))


def _parse_floats(text):
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_ks(text):
    ks = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1)
            ks.extend(range(int(lo), int(hi) + 1))
        else:
            ks.append(int(tok))
    if not ks or min(ks) < 1:
        raise ValueError(f"bad truncation list {text!r}")
    return ks


def _config_header(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    return "# config: " + json.dumps(cfg, sort_keys=True, default=str)


def _read_letor(path):
    with open(path, "r", encoding="utf-8") as fh:
        return dataio.parse_letor(fh)


def _read_triplets(path):
    with open(path, "r", encoding="utf-8") as fh:
        return dataio.parse_triplets(fh)


def cmd_train_rank(args):
    train = _read_letor(args.train)
    valid = _read_letor(args.valid)
    test = _read_letor(args.test)
    config = ltr.TrainConfig(
        lambda_grid=_parse_floats(args.lambda_grid),
        select_k=args.select_k,
        init=args.init,
        seed=args.seed,
    )
    report = ltr.train_with_report(train, valid, config)
    ks = _parse_ks(args.ks)
    curve = metrics.mean_ndcg_curve(report.model, test, ks)
    lines = [
        _config_header(args),
        f"# chosen_lambda: {report.chosen_lambda!r}",
        f"# validation_ndcg_at_{config.select_k}: {report.validation_ndcg!r}",
        "k,ndcg",
    ]
    lines += [f"{rep.k},{rep.mean!r}" for rep in curve]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    save_checkpoint(args.checkpoint, report.model)
    print(f"chose lambda={report.chosen_lambda!r} "
          f"(validation ndcg@{config.select_k}={report.validation_ndcg:.4f})")
    print(f"wrote curve to {args.out} and model to {args.checkpoint}")
    return 0


def _run_lcr_candidate(train, aligned_test, args, eta):
    rows = []
    raw_rows = []

    def progress(stats, model):
        p1 = metrics.precision_at_k(model, train, aligned_test, 1)
        p10 = metrics.precision_at_k(model, train, aligned_test, 10)
        if args.clock == "logical":
            tick = float(stats.round)
        else:
            tick = stats.elapsed_seconds
        rows.append(f"{tick!r},{p1.mean!r},{p10.mean!r}")
        objective = (
            stats.exact_objective
            if isinstance(stats, lcr.RoundStats)
            else stats.bound_on_sample
        )
        raw_rows.append(
            f"{stats.round},{tick!r},{stats.updates_done},{objective!r}"
        )

    inner = args.inner_updates if args.inner_updates > 0 else None
    if args.workers == 1:
        config = lcr.SgdConfig(
            dim=args.dim, eta=eta, inner_updates=inner,
            outer_rounds=args.rounds, mu=args.mu, seed=args.seed,
        )
        model, aux = lcr.serial_train(train, config, progress=progress)
    else:
        config = parallel.ParallelConfig(
            dim=args.dim, eta=eta, p=args.workers, inner_updates_per_worker=inner,
            outer_rounds=args.rounds, mu=args.mu, seed=args.seed,
        )
        model, aux = parallel.parallel_train(train, config, progress=progress)
    final = lcr.exact_objective(model, train, args.mu)
    return model, aux, final, rows, raw_rows


def cmd_train_lcr(args):
    train = _read_triplets(args.train)
    test_raw = _read_triplets(args.test)
    aligned_test, dropped = dataio.align_test_set(train, test_raw)
    if dropped:
        print(f"dropped {dropped} test pair(s) with users/items unseen in training")

    if args.eta is not None:
        etas = [args.eta]
    else:
        etas = list(_parse_floats(args.eta_grid))
    best = None
    for eta in etas:
        try:
            candidate = _run_lcr_candidate(train, aligned_test, args, eta)
        except DivergenceError as exc:
            if len(etas) == 1:
                raise
            print(f"skipping eta={eta!r}: {exc}")
            continue
        if best is None or candidate[2] < best[1][2]:
            best = (eta, candidate)
    if best is None:
        raise DivergenceError("every step size in the grid diverged")
    eta, (model, _aux, final, rows, raw_rows) = best

    lines = [
        _config_header(args),
        f"# chosen_eta: {eta!r}",
        f"# final_exact_objective: {final!r}",
        "elapsed_seconds,precision_at_1,precision_at_10",
    ]
    atomic_write_text(args.out, "\n".join(lines + rows) + "\n")
    save_checkpoint(args.checkpoint, model)
    if args.progress_out:
        header = [
            _config_header(args),
            "round,elapsed_seconds,updates_done,objective",
        ]
        atomic_write_text(args.progress_out, "\n".join(header + raw_rows) + "\n")
    print(f"chose eta={eta!r} (final exact objective {final:.4f})")
    print(f"wrote metrics to {args.out} and model to {args.checkpoint}")
    return 0


def _parse_metric_list(text):
    specs = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        name, sep, k = tok.partition("@")
        if not sep:
            raise ValueError(f"metric {tok!r} needs a truncation, e.g. ndcg@10")
        specs.append((name.lower(), int(k)))
    if not specs:
        raise ValueError(f"empty metric list {text!r}")
    return specs


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    rows = []
    if isinstance(model, ltr.LinearModel):
        dataset = _read_letor(args.test)
        if model.dim != dataset.feature_dim:
            raise ValueError(
                f"checkpoint expects feature dim {model.dim}, "
                f"dataset has {dataset.feature_dim}"
            )
        specs = (
            _parse_metric_list(args.metrics)
            if args.metrics
            else [("ndcg", k) for k in _parse_ks(args.ks or "1-20")]
        )
        for name, k in specs:
            if name != "ndcg":
                raise ValueError(f"metric {name!r} not available for a linear model")
            rep = metrics.mean_ndcg_curve(model, dataset, [k])[0]
            rows.append(rep.csv_row())
    else:
        if not args.train:
            raise ValueError(
                "latent checkpoints need --train to map user/item ids to "
                "embedding rows"
            )
        test_raw = _read_triplets(args.test)
        train = _read_triplets(args.train)
        if model.num_items != train.num_items:
            raise ValueError(
                f"checkpoint has {model.num_items} items, "
                f"dataset has {train.num_items}"
            )
        if model.num_contexts != train.num_contexts:
            raise ValueError(
                f"checkpoint has {model.num_contexts} contexts, "
                f"dataset has {train.num_contexts}"
            )
        test, _ = dataio.align_test_set(train, test_raw)
        specs = (
            _parse_metric_list(args.metrics)
            if args.metrics
            else [("prec", k) for k in ([1, 10] if args.ks is None else _parse_ks(args.ks))]
        )
        for name, k in specs:
            if name not in ("prec", "precision"):
                raise ValueError(f"metric {name!r} not available for a latent model")
            rep = metrics.precision_at_k(model, train, test, k)
            rows.append(rep.csv_row())
    print(_config_header(args))
    print("metric,k,mean,n_contexts")
    for row in rows:
        print(row)
    return 0


def cmd_verify(args):
    results = checks.run_all(args.seed)
    failed = 0
    for res in results:
        print(res.line())
        failed += 0 if res.passed else 1
    if failed:
        print(f"{failed} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robirank",
        description="Train and evaluate robust-loss ranking models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train-rank", help="train the feature-based ranking track")
    tr.add_argument("--train", required=True, help="training file (qid feature format)")
    tr.add_argument("--valid", required=True, help="validation file")
    tr.add_argument("--test", required=True, help="test file")
    tr.add_argument("--lambda-grid", default="1e-9,1e-7,1e-5,1e-3,1e-1,10,1e3",
                    help="comma-separated regularization grid")
    tr.add_argument("--ks", default="1-20", help="truncation levels for the output curve")
    tr.add_argument("--select-k", type=int, default=10,
                    help="truncation used for validation selection")
    tr.add_argument("--init", choices=("zeros", "gaussian"), default="zeros")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True, help="output CSV path (k,ndcg rows)")
    tr.add_argument("--checkpoint", required=True, help="output model path")
    tr.set_defaults(func=cmd_train_rank)

    tl = sub.add_parser("train-lcr", help="train the latent retrieval track")
    tl.add_argument("--train", required=True, help="training triplet file")
    tl.add_argument("--test", required=True, help="test triplet file")
    tl.add_argument("--dim", type=int, default=10, help="embedding dimension")
    tl.add_argument("--eta", type=float, default=None, help="fixed step size")
    tl.add_argument("--eta-grid", default=",".join(repr(e) for e in DEFAULT_ETA_GRID),
                    help="step-size grid searched when --eta is not given")
    tl.add_argument("--mu", type=float, default=0.0, help="embedding shrinkage strength")
    tl.add_argument("--workers", type=int, default=1, help="worker count (1 = serial)")
    tl.add_argument("--inner-updates", type=int, default=0,
                    help="updates per round (per worker when parallel); 0 = automatic")
    tl.add_argument("--rounds", type=int, default=50, help="outer rounds")
    tl.add_argument("--seed", type=int, default=0)
    tl.add_argument("--clock", choices=("wall", "logical"), default="wall",
                    help="time column: wall seconds, or round counter for "
                         "byte-identical reruns")
    tl.add_argument("--out", required=True, help="output CSV path (per-round metrics)")
    tl.add_argument("--checkpoint", required=True, help="output model path")
    tl.add_argument("--progress-out", default=None,
                    help="optional CSV with the raw per-round progress stream")
    tl.set_defaults(func=cmd_train_lcr)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--train", default=None,
                    help="training triplets (latent track: defines the candidate "
                         "exclusion sets)")
    ev.add_argument("--test", required=True, help="dataset to evaluate on")
    ev.add_argument("--metrics", default=None,
                    help="comma list like ndcg@1,ndcg@5 or prec@1,prec@10")
    ev.add_argument("--ks", default=None, help="shorthand truncation list")
    ev.set_defaults(func=cmd_eval)

    vf = sub.add_parser("verify", help="run the oracle property suites")
    vf.add_argument("--seed", type=int, default=0)
    vf.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, ParseError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
