"""Command-line entry point wiring the five subcommands:
generate, train, predict, analyze, evaluate.

Exit codes: 0 success, 1 usage error, 2 data/model error. Per-iteration
and per-fold metrics go to stdout as line-delimited JSON records; human
logs go to stderr (verbosity via the SOCIALTOPICS_LOG environment
variable).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import analysis, evaluation, predictor, synthgen, trainer
from .corpus import Vocabulary, load_dataset, save_dataset
from .errors import DataError, ModelError
from .model import Checkpoint, UserFeatures

log = logging.getLogger("socialtopics")

LOG_ENV = "SOCIALTOPICS_LOG"


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2
    # for data/model errors
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _parse_range(text):
    """'3' -> (3, 3); '2:5' -> (2, 5)."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            v = int(parts[0])
            return (v, v)
        if len(parts) == 2:
            return (int(parts[0]), int(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected N or LO:HI, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="socialtopics", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="simulate a synthetic dataset")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--v", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--docs-per-user", type=_parse_range, required=True,
                   metavar="N|LO:HI")
    p.add_argument("--words-per-doc", type=_parse_range, required=True,
                   metavar="N|LO:HI")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--lambda1", type=float, default=0.1)
    p.add_argument("--lambda0", type=float, default=1.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-users", required=True)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-truth", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a model by collapsed Gibbs sampling")
    p.add_argument("--users", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fix-hyper", action="store_true")
    p.add_argument("--min-token-freq", type=int, default=1)
    p.add_argument("--convergence", type=float, default=0.01)
    p.add_argument("--burn-in", type=float, default=0.5)
    p.add_argument("--lambda0", type=float, default=None,
                   help="manual zero-link pseudo-count (default: computed)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--plot", help="optional training-trace figure (png/pdf)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="infer per-user features from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--users", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--out", required=True, help="features file path")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("analyze", help="summarize topics and friendship pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--top-words", type=int, default=5)
    p.add_argument("--top-pairs", type=int, default=10)
    p.add_argument("--out-summary", required=True)
    p.add_argument("--out-dot", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("evaluate", help="paired cross-validated label prediction")
    p.add_argument("--users", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reg", type=float, default=1.0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--min-token-freq", type=int, default=1)
    p.add_argument("--plot", help="optional per-fold accuracy figure (png/pdf)")
    p.set_defaults(func=_cmd_evaluate)

    return parser


def _emit(record: dict):
    print(json.dumps(record), flush=True)


def _cmd_generate(args) -> int:
    spec = synthgen.GenSpec(
        k=args.k,
        v=args.v,
        p=args.p,
        docs_per_user=args.docs_per_user,
        words_per_doc=args.words_per_doc,
        alpha=args.alpha,
        eta=args.eta,
        delta=args.delta,
        lambda1=args.lambda1,
        lambda0=args.lambda0,
        sigma2=args.sigma2,
    )
    dataset, truth = synthgen.generate_dataset(spec, args.seed)
    save_dataset(dataset, args.out_users, args.out_edges)
    doc = {
        "beta": truth.params.beta.tolist(),
        "beta_back": truth.params.beta_back.tolist(),
        "phi": truth.params.phi.tolist(),
        "nu": truth.params.nu.tolist(),
        "sigma2": truth.params.sigma2,
        "theta": truth.theta.tolist(),
        "tokens": list(dataset.vocab.id_to_token),
        "seed": args.seed,
    }
    with open(args.out_truth, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    log.info(
        "generated %d users, %d edges, %d tokens -> %s",
        dataset.n_users, len(dataset.edges), dataset.n_tokens, args.out_users,
    )
    return 0


def _cmd_train(args) -> int:
    dataset = load_dataset(
        args.users, args.edges, min_token_freq=args.min_token_freq
    )
    cfg = trainer.TrainConfig(
        k=args.k,
        max_iters=args.iters,
        convergence=args.convergence,
        seed=args.seed,
        burn_in=args.burn_in,
        fix_hyper=args.fix_hyper,
        lambda0=args.lambda0,
    )
    result = trainer.train(dataset, cfg, metrics_cb=_emit)
    result.checkpoint.save(args.out)
    log.info("checkpoint written to %s", args.out)
    if args.plot:
        from . import report

        report.plot_train_metrics(result.history, args.plot)
        log.info("training trace figure written to %s", args.plot)
    return 0


def _cmd_predict(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    vocab = Vocabulary(ckpt.vocab)
    dataset = load_dataset(args.users, args.edges, vocab=vocab)
    if dataset.n_unknown_dropped:
        log.warning(
            "dropped %d tokens outside the trained vocabulary",
            dataset.n_unknown_dropped,
        )
    params = ckpt.recover_params()
    cfg = predictor.PredictConfig(
        iters=args.iters, seed=args.seed, threads=args.threads
    )
    features, errors = predictor.predict_all(dataset, params, ckpt.hyper, cfg)
    for uid, msg in errors:
        log.error("user %s: %s", uid, msg)
    predictor.save_features(args.out, dataset, features)
    log.info(
        "features for %d users and %d edges written to %s",
        dataset.n_users, len(dataset.edges), args.out,
    )
    return 0


def _cmd_analyze(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    params = ckpt.recover_params()
    _, theta, _, pairs, scores = predictor.load_features(args.features)
    if theta.shape[0] == 0:
        raise DataError(f"{args.features}: no user records")
    popularity = analysis.topic_popularity(theta)
    rankings = analysis.rank_topic_pairs(pairs, popularity, args.top_pairs)
    features = UserFeatures(theta=theta, pairs=pairs, scores=scores)
    analysis.export_viz(
        params,
        features,
        rankings,
        args.out_summary,
        args.out_dot,
        vocab=ckpt.vocab,
        top_words=args.top_words,
    )
    log.info("summary -> %s, graph -> %s", args.out_summary, args.out_dot)
    return 0


def _cmd_evaluate(args) -> int:
    dataset = load_dataset(
        args.users, args.edges, min_token_freq=args.min_token_freq
    )
    _ = Checkpoint.load(args.checkpoint)  # validates the model file
    user_ids, theta, _, _, _ = predictor.load_features(args.features)
    by_id = {uid: r for r, uid in enumerate(user_ids)}
    try:
        rows = [by_id[u.id] for u in dataset.users]
    except KeyError as exc:
        raise DataError(f"features file lacks user {exc.args[0]!r}") from exc
    theta = theta[rows]

    bow = evaluation.bow_matrix(dataset)
    both = evaluation.concat_features(bow, theta)
    res_bow = evaluation.cross_validate(
        dataset, bow, args.folds, args.seed, reg=args.reg, threads=args.threads
    )
    res_both = evaluation.cross_validate(
        dataset, both, args.folds, args.seed, reg=args.reg, threads=args.threads
    )
    for fi in range(args.folds):
        _emit(
            {
                "fold": fi,
                "bow_accuracy": res_bow.fold_accuracies[fi],
                "combined_accuracy": res_both.fold_accuracies[fi],
                "test_size": res_bow.fold_sizes[fi],
            }
        )
    stat, p_value = analysis.chi_square_test(
        res_bow.correct, res_bow.total, res_both.correct, res_both.total
    )
    _emit(
        {
            "bow_mean_accuracy": res_bow.mean_accuracy,
            "combined_mean_accuracy": res_both.mean_accuracy,
            "chi_square": stat,
            "p_value": p_value,
            "labeled_users": res_bow.total,
        }
    )
    if args.plot:
        from . import report

        report.plot_cv_accuracies(
            res_bow.fold_accuracies, res_both.fold_accuracies, args.plot
        )
        log.info("accuracy figure written to %s", args.plot)
    return 0


def dispatch(argv) -> int:
    """Parse argv and run one subcommand; returns the process exit code."""
    level = os.environ.get(LOG_ENV, "info").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataError, ModelError) as exc:
        log.error("%s", exc)
        return 2
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return 2
    except OSError as exc:
        log.error("%s", exc)
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
