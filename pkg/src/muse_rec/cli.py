"""Command-line entry point: synth, ingest, stats, augment, train, evaluate."""

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from . import corpus, synth
from .augment import reorder_augment, transition_augment
from .corpus import ConfigError, ParseError, SplitSpec, ValidationError
from .evaluation import unique_transition_rate
from .trainer import (
    MuseRecommender,
    load_checkpoint,
    parse_config_file,
    save_checkpoint,
    _batched_scores,
)
from .transitions import build_transitions

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; this tool reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog + ": error: " + message) from None


def _open_input(path: str):
    if not os.path.exists(path):
        raise ConfigError(f"input file not found: {path}")
    return open(path, "r", encoding="utf-8")


def _parse_day_range(text: str):
    try:
        lo, hi = text.split(":")
        return (int(lo), int(hi))
    except ValueError:
        raise ConfigError(f"bad day range {text!r}, expected LO:HI") from None


def cmd_synth(args) -> int:
    config = synth.SynthConfig(
        n_tracks=args.n_tracks,
        n_clusters=args.n_clusters,
        n_sessions=args.n_sessions,
        session_len_range=(args.min_len, args.max_session_len),
        shuffle_fraction=args.shuffle_fraction,
        skip_prob_shuffle=args.skip_prob,
        within_cluster_prob=args.within_cluster_prob,
        seed=args.seed,
        n_days=args.n_days,
    )
    with open(args.out, "w", encoding="utf-8") as f:
        synth.write_log(config, f)
    print(f"wrote {args.n_sessions} sessions to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    with _open_input(args.log) as f:
        raw = corpus.parse_log(f)
    spec = SplitSpec(
        _parse_day_range(args.split_train),
        _parse_day_range(args.split_valid),
        _parse_day_range(args.split_test),
    )
    train_raw, valid_raw, test_raw = corpus.split_by_day(raw, spec)
    vocab = corpus.build_vocabulary(train_raw, args.min_count)
    if len(vocab) == 0:
        print("warning: vocabulary is empty", file=sys.stderr)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, sessions in (
        ("train", train_raw),
        ("valid", valid_raw),
        ("test", test_raw),
    ):
        processed = corpus.preprocess(sessions, vocab, args.max_len)
        with open(os.path.join(args.out_dir, f"{name}.tsv"), "w", encoding="utf-8") as f:
            corpus.write_sessions(processed, f)
        print(f"{name}: {len(processed)} sessions")
    with open(os.path.join(args.out_dir, "vocab.tsv"), "w", encoding="utf-8") as f:
        vocab.write(f)
    print(f"vocabulary: {len(vocab)} tracks")
    return 0


def cmd_stats(args) -> int:
    with _open_input(args.sessions) as f:
        sessions = corpus.read_sessions(f)
    shuffle = [s for s in sessions if s.shuffle]
    non_shuffle = [s for s in sessions if not s.shuffle]
    print(f"sessions: {len(sessions)}")
    if sessions:
        print(f"shuffle proportion: {len(shuffle) / len(sessions):.4f}")
    for name, subset in (("all", sessions), ("shuffle", shuffle), ("non_shuffle", non_shuffle)):
        if subset and any(len(s) >= 2 for s in subset):
            rate = unique_transition_rate(subset)
            print(f"unique transition rate [{name}]: {rate:.2f}%")
        else:
            print(f"unique transition rate [{name}]: n/a")
    return 0


def cmd_augment(args) -> int:
    with _open_input(args.sessions) as f:
        sessions = corpus.read_sessions(f)
    if not sessions:
        raise ConfigError("no sessions to augment")
    dim = max(max(s.tracks) for s in sessions) + 1
    transitions = build_transitions(sessions, dim, args.log_mode)
    out = []
    for i, s in enumerate(sessions):
        rng = np.random.default_rng((args.seed, i))
        if s.shuffle:
            out.append(transition_augment(s, transitions, rng, args.max_len))
        else:
            out.append(reorder_augment(s, args.gamma, rng))
    with open(args.out, "w", encoding="utf-8") as f:
        corpus.write_sessions(out, f)
    print(f"wrote {len(out)} augmented sessions to {args.out}")
    return 0


_CONFIG_TYPES = {
    "epochs": int, "batch_size": int, "seed": int, "hidden_dim": int,
    "max_len": int, "kappa": int, "warmup_epochs": int, "threads": int,
    "learning_rate": float, "gamma": float, "alpha": float, "lam": float,
    "mu": float, "nu": float, "variance_eps": float, "grad_clip": float,
    "augment_shuffle": lambda s: s.lower() in ("1", "true", "yes"),
    "augment_nonshuffle": lambda s: s.lower() in ("1", "true", "yes"),
    "log_mode": str, "optimizer": str,
}


def cmd_train(args) -> int:
    params = {}
    if args.config:
        with _open_input(args.config) as f:
            for key, value in parse_config_file(f).items():
                if key not in _CONFIG_TYPES:
                    raise ConfigError(f"unknown config key {key!r}")
                params[key] = _CONFIG_TYPES[key](value)
    for key in _CONFIG_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            params[key] = flag
    with _open_input(args.train) as f:
        train_sessions = corpus.read_sessions(f)
    valid_sessions = []
    if args.valid:
        with _open_input(args.valid) as f:
            valid_sessions = corpus.read_sessions(f)
    if args.n_tracks:
        params["n_tracks"] = args.n_tracks
    rec = MuseRecommender(**params).fit(train_sessions, valid_sessions)
    save_checkpoint(rec.model_, args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as f:
            rec.report_.write_csv(f)
    print(f"best epoch: {rec.report_.best_epoch}")
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.model)
    with _open_input(args.test) as f:
        sessions = corpus.read_sessions(f)
    instances = corpus.sessions_to_instances(sessions)
    instances = [i for i in instances if i.label < model.n_tracks]

    def score_fn(prefix):
        return _batched_scores(model, [prefix], args.max_len)[0]

    from .evaluation import evaluate as run_eval

    report = run_eval(score_fn, instances)
    print(report.format_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            report.write_csv(f)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="muse", description="Shuffle-aware music session recommender")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic session log")
    p.add_argument("--out", required=True)
    p.add_argument("--n-tracks", type=int, default=2000)
    p.add_argument("--n-clusters", type=int, default=20)
    p.add_argument("--n-sessions", type=int, default=20000)
    p.add_argument("--min-len", type=int, default=8)
    p.add_argument("--max-session-len", type=int, default=20)
    p.add_argument("--shuffle-fraction", type=float, default=0.4)
    p.add_argument("--skip-prob", type=float, default=0.3)
    p.add_argument("--within-cluster-prob", type=float, default=0.95)
    p.add_argument("--n-days", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="preprocess a raw log into session files")
    p.add_argument("--log", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split-train", required=True, metavar="LO:HI")
    p.add_argument("--split-valid", required=True, metavar="LO:HI")
    p.add_argument("--split-test", required=True, metavar="LO:HI")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--max-len", type=int, default=20)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="session counts and unique transition rates")
    p.add_argument("--sessions", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("augment", help="write augmented views of a session file")
    p.add_argument("--sessions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--log-mode", choices=("log1p", "log_nonzero"), default="log1p")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train a model on a session file")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="training curve CSV")
    p.add_argument("--n-tracks", type=int)
    for key, conv in _CONFIG_TYPES.items():
        flag = "--" + key.replace("_", "-")
        if key in ("augment_shuffle", "augment_nonshuffle"):
            p.add_argument(flag, type=conv, default=None, metavar="BOOL")
        else:
            p.add_argument(flag, type=conv, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a session file")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", help="metrics CSV")
    p.add_argument("--max-len", type=int, default=20)
    p.set_defaults(func=cmd_evaluate)
    return parser


def dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return USAGE_ERROR
        return USAGE_ERROR if e.code else 0
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
