"""Command-line entry point: ``fmar mine | evaluate | recommend``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import SECTIONS, RunConfig, apply_overrides, derive_seed, dump_config, load_config, run_fields
from .experiment import VARIANTS, format_table, run_pipeline, write_report
from .fm import DivergenceError, FeatureIndex, FmModel, predict, train_sgd
from .ingest import DuplicateRatingError, ParseError, extract_transactions, load_ratings
from .mining import mine_rules, write_rules
from .profiles import build_profiles, neighbor_expand, shortlist

log = logging.getLogger("fmar")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PIPELINE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class PipelineError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _override_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("config overrides")
    for f in run_fields():
        if f.name in ("data_path", "output_dir", "seed"):
            continue
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"ov:{f.name}", metavar=f.name.upper())
    defaults = RunConfig()
    for section in SECTIONS:
        for f in dataclasses.fields(getattr(defaults, section)):
            flag = f"--{section}-{f.name.replace('_', '-')}"
            group.add_argument(flag, dest=f"ov:{section}.{f.name}", metavar=f.name.upper())


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--data", help="ratings file (user item rating timestamp)")
    common.add_argument("--seed", type=int, help="top-level seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    _override_flags(common)

    parser = _Parser(prog="fmar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("mine", parents=[common], help="mine association rules from the ratings")
    sub.add_parser("evaluate", parents=[common], help="run the FM vs FMAR comparison")
    rec = sub.add_parser("recommend", parents=[common], help="rank unrated items for one user")
    rec.add_argument("--user", type=int, required=True)
    rec.add_argument("--top-n", type=int, default=10)
    rec.add_argument("--variant", choices=VARIANTS, default="apriori")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        overrides = {k[3:]: v for k, v in vars(args).items() if k.startswith("ov:") and v is not None}
        overrides.update(
            {k: v for k, v in (("data_path", args.data), ("output_dir", args.out), ("seed", args.seed)) if v is not None}
        )
        return apply_overrides(cfg, overrides)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {exc.filename}") from None
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _load(cfg: RunConfig):
    try:
        return load_ratings(cfg.data_path)
    except FileNotFoundError:
        raise DataError(f"data file not found: {cfg.data_path}") from None
    except (ParseError, DuplicateRatingError) as exc:
        raise DataError(f"{cfg.data_path}: {exc}") from None


def write_manifest(cfg: RunConfig, out: Path, command: str) -> None:
    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "derived_seeds": {"split": derive_seed(cfg.seed, "split"), "fm": derive_seed(cfg.seed, "fm")},
        "versions": {"fmar": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    (out / "config.ini").write_text(dump_config(cfg), encoding="utf-8")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_mine(cfg: RunConfig) -> dict[str, Path]:
    data = _load(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    txns = extract_transactions(data, cfg.favor_threshold)
    paths = {}
    for name in VARIANTS:
        p = getattr(cfg, name)
        try:
            frequents, rules = mine_rules(txns, p.min_support, p.min_confidence, p.min_lift, algorithm=name)
        except Exception as exc:
            raise PipelineError(f"mining ({name})", exc) from exc
        paths[name] = out / f"rules_{name}.txt"
        write_rules(rules, paths[name])
        print(f"{name}: {len(rules)} rules, {len(frequents)} frequent itemsets, {len(txns)} transactions")
    write_manifest(cfg, out, "mine")
    return paths


def cmd_evaluate(cfg: RunConfig) -> dict[str, Path]:
    data = _load(cfg)
    started = time.perf_counter()
    try:
        _, report = run_pipeline(cfg, data)
    except DivergenceError as exc:
        raise PipelineError("training", exc) from exc
    except Exception as exc:
        raise PipelineError("evaluation", exc) from exc
    log.info("evaluation finished in %.1fs", time.perf_counter() - started)
    out = Path(cfg.output_dir)
    paths = write_report(report, out, cfg.ndcg_k)
    write_manifest(cfg, out, "evaluate")
    print(format_table(report, cfg.ndcg_k), end="")
    return paths


def _cached_model(cfg: RunConfig, data, index: FeatureIndex) -> FmModel:
    path = Path(cfg.output_dir) / f"fm_{cfg.digest()[:12]}.bin"
    if path.exists():
        model = FmModel.load(path)
        if model.dimension == index.dimension:
            return model
    try:
        model = train_sgd(data, cfg.train_config(), index)
    except DivergenceError as exc:
        raise PipelineError("training", exc) from exc
    path.parent.mkdir(parents=True, exist_ok=True)
    model.save(path)
    return model


def cmd_recommend(cfg: RunConfig, user: int, top_n: int, variant: str = "apriori") -> list[tuple[int, float]]:
    if top_n < 0:
        raise UsageError("--top-n must be non-negative")
    data = _load(cfg)
    if user not in data.by_user:
        raise DataError(f"unknown user {user}")
    if top_n == 0:
        return []
    index = FeatureIndex.from_dataset(data)
    model = _cached_model(cfg, data, index)
    params = getattr(cfg, variant)
    txns = extract_transactions(data, cfg.favor_threshold)
    _, rules = mine_rules(txns, params.min_support, params.min_confidence, params.min_lift, algorithm=variant)
    store = build_profiles(rules, data, cfg.favor_threshold, users=None if cfg.neighbors else [user])
    if cfg.neighbors:
        profile = neighbor_expand(store, user, cfg.neighbors, data, cfg.similarity)
        store = dataclasses.replace(store, profiles={user: profile})
    rated = data.user_ratings(user)
    unrated = [i for i in index.item_index if i not in rated]
    if not unrated:
        return []
    kept, fallback = shortlist(user, unrated, store)
    if fallback:
        print(f"note: profile of user {user} covers no unrated item; scoring all {len(kept)} candidates",
              file=sys.stderr)
    scored = sorted(((predict(model, index.encode(user, i)), i) for i in kept), key=lambda t: (-t[0], t[1]))
    ranked = [(i, s) for s, i in scored[:top_n]]
    print(f"user {user}: {len(kept)} candidates scored (fallback={'yes' if fallback else 'no'})")
    for rank, (item, score) in enumerate(ranked, start=1):
        print(f"{rank}\t{item}\t{score:.4f}")
    return ranked


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "mine":
            cmd_mine(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        else:
            cmd_recommend(cfg, args.user, args.top_n, args.variant)
    except UsageError as exc:
        print(f"fmar: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"fmar: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"fmar: pipeline error in {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
