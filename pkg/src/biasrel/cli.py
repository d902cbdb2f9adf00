"""Command-line entry point ``biasrel``.

Every analysis subcommand reads the same YAML config as ``run`` and emits
only its own tables (plus the manifest).  Flags override config values.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .embeddings import EmbeddingParseError
from .pipeline import ANALYSES, ConfigError, StageError, load_config, run
from .resources import WordList
from .synth import synth_ensemble

logger = logging.getLogger("biasrel")


def _overrides(args) -> dict:
    over: dict = {}
    if getattr(args, "output_dir", None):
        over["output_dir"] = args.output_dir
    if getattr(args, "rules", None):
        over["rules"] = args.rules.split(",")
    nbm = {}
    if getattr(args, "k", None) is not None:
        nbm["k"] = args.k
    if getattr(args, "exclude", None):
        nbm["exclusions"] = args.exclude.split(",")
    if getattr(args, "exclude_pair_words", False):
        nbm["exclude_pair_words"] = True
    if nbm:
        over["nbm"] = nbm
    if getattr(args, "targets", None):
        over["targets"] = args.targets.split(",")
    if getattr(args, "basepairs", None):
        over["basepairs"] = args.basepairs
    if getattr(args, "pair_budget", None) is not None:
        over["stability"] = {"pair_budget": args.pair_budget}
    if getattr(args, "svd", None):
        over.setdefault("stability", {})["method"] = args.svd
    if getattr(args, "zscore", False):
        over["interrater"] = {"zscore": True}
    if getattr(args, "aggregate", None):
        over["pair_tests"] = {"aggregate": args.aggregate}
    if getattr(args, "n_jobs", None) is not None:
        over["n_jobs"] = args.n_jobs
    return over


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True,
                   help="YAML config path, or 'smoke' for the bundled synthetic config")
    p.add_argument("--output-dir", help="report directory (overrides config)")
    p.add_argument("--rules", help="comma-separated subset of dbwa,ripa,nbm")
    p.add_argument("--k", type=int, help="neighbourhood size for nbm")
    p.add_argument("--exclude", help="comma-separated tokens banned as nbm neighbours")
    p.add_argument("--exclude-pair-words", action="store_true",
                   help="also ban the base-pair words as nbm neighbours")
    p.add_argument("--targets", help="comma-separated list names or paths")
    p.add_argument("--basepairs", help="'bundled', 'synthetic' or a TSV path")
    p.add_argument("--pair-budget", type=int, help="cap on model pairs for stability")
    p.add_argument("--svd", choices=("jacobi", "lapack"), help="SVD used by Procrustes")
    p.add_argument("--zscore", action="store_true",
                   help="z-score each rule before the inter-rater ICC")
    p.add_argument("--aggregate", choices=("median", "mean"),
                   help="per-pair collapse used by the singular/plural test")
    p.add_argument("--n-jobs", type=int, help="threads for the neighbour scan")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biasrel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="all analyses enabled in the config")
    _add_common(p)
    for name in ANALYSES:
        p = sub.add_parser(name, help=f"only the {name} reports")
        _add_common(p)
    p = sub.add_parser("synth", help="write a synthetic seed ensemble to disk")
    p.add_argument("out_dir")
    p.add_argument("--vocab-size", type=int, default=300)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seeds", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bundled-words", action="store_true",
                   help="include the bundled base-pair and query words")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth":
        _, res = synth_ensemble(args.vocab_size, args.dim, args.seeds, args.noise, args.rotate,
                                seed=args.seed, out_dir=args.out_dir,
                                bundled_words=args.bundled_words)
        for f in res.files:
            print(f)
        return 0
    try:
        cfg = load_config(args.config, _overrides(args))
        only = None if args.command == "run" else (args.command,)
        report = run(cfg, only=only)
    except (ConfigError, StageError, EmbeddingParseError, FileNotFoundError, ValueError) as exc:
        print(f"biasrel: error: {exc}", file=sys.stderr)
        return 2
    for name, path in report.written.items():
        print(path)
    print(Path(cfg["output_dir"]) / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
