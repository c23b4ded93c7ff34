"""End-to-end comparison of plain FM scoring against rule-filtered scoring.

For every evaluation user the held-out items form the *original* candidate
set. Each FMAR variant (Apriori rules, FP-growth rules) shortlists those
candidates through the user's profile; the FM scores both sets and the
report compares MAE, NDCG@k and the number of predictions made.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path

import numpy as np

from .config import RunConfig, derive_seed
from .fm import FeatureIndex, FmModel, predict, train_sgd
from .ingest import EvalSplit, RatingDataset, extract_transactions, load_ratings, select_eval_users, split_per_user
from .metrics import FiveNumber, five_number, mae, ndcg_at_k, wilcoxon_rank_sum
from .mining import AssociationRule, mine_rules
from .profiles import ProfileStore, UserProfile, build_profiles, neighbor_expand, shortlist

log = logging.getLogger(__name__)

VARIANTS = ("apriori", "fpgrowth")
ENGINES = ("fm",) + tuple(f"fmar_{v}" for v in VARIANTS)

USER_COLUMNS = (
    "variant", "user_id", "mae_full", "mae_short", "ndcg_full", "ndcg_short",
    "n_pred_full", "n_pred_short", "fallback_used",
)
SUMMARY_COLUMNS = ("engine", "metric", "statistic", "value")


@dataclass(frozen=True)
class UserResult:
    user_id: int
    mae_full: float
    mae_short: float
    ndcg_full: float
    ndcg_short: float
    n_pred_full: int
    n_pred_short: int
    fallback_used: bool


@dataclass
class VariantRun:
    name: str
    n_transactions: int
    n_itemsets: int
    rules: list[AssociationRule]
    store: ProfileStore


@dataclass
class ExperimentReport:
    per_user: dict[str, list[UserResult]]
    mean_mae: dict[str, float] = field(default_factory=dict)
    mean_ndcg: dict[str, float] = field(default_factory=dict)
    total_predictions: dict[str, int] = field(default_factory=dict)
    fallback_users: dict[str, int] = field(default_factory=dict)
    tests: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    five_number: dict[tuple[str, str], FiveNumber] = field(default_factory=dict)
    rule_counts: dict[str, int] = field(default_factory=dict)
    itemset_counts: dict[str, int] = field(default_factory=dict)
    skipped_users: list[int] = field(default_factory=list)
    unseen_test_records: int = 0

    def engine_values(self, engine: str, metric: str) -> list[float]:
        """Per-user values of ``metric`` (mae, ndcg or n_pred) for one engine."""
        if engine == "fm":
            rows = self.per_user[VARIANTS[0]]
            return [getattr(r, f"{metric}_full") for r in rows]
        rows = self.per_user[engine.removeprefix("fmar_")]
        return [getattr(r, f"{metric}_short") for r in rows]

    def reduction_factor(self, variant: str) -> float:
        short = self.total_predictions[f"fmar_{variant}"]
        return self.total_predictions["fm"] / short if short else float("inf")


def mine_variant(name: str, train: RatingDataset, cfg: RunConfig, users=None) -> VariantRun:
    params = getattr(cfg, name)
    txns = extract_transactions(train, cfg.favor_threshold)
    frequents, rules = mine_rules(txns, params.min_support, params.min_confidence, params.min_lift, algorithm=name)
    store = build_profiles(rules, train, cfg.favor_threshold, users=users)
    log.info("%s: %d transactions, %d frequent itemsets, %d rules", name, len(txns), len(frequents), len(rules))
    return VariantRun(name, len(txns), len(frequents), rules, store)


def _score(model: FmModel, index: FeatureIndex, user: int, items, clamp: bool) -> np.ndarray:
    preds = np.array([predict(model, index.encode(user, i)) for i in items], dtype=np.float64)
    return np.clip(preds, 1.0, 5.0) if clamp else preds


def evaluate_user(
    user: int,
    truth: dict[int, int],
    model: FmModel,
    index: FeatureIndex,
    profile: UserProfile,
    cfg: RunConfig,
) -> UserResult:
    items = sorted(truth)
    full_preds = _score(model, index, user, items, cfg.clamp_predictions)
    store = ProfileStore({user: profile})
    kept, fallback = shortlist(user, items, store)
    short_items = sorted(kept)
    short_preds = _score(model, index, user, short_items, cfg.clamp_predictions)
    full_truth = [truth[i] for i in items]
    short_truth = [truth[i] for i in short_items]
    return UserResult(
        user_id=user,
        mae_full=mae(full_preds, full_truth),
        mae_short=mae(short_preds, short_truth),
        ndcg_full=ndcg_at_k(list(zip(full_preds, full_truth)), cfg.ndcg_k),
        ndcg_short=ndcg_at_k(list(zip(short_preds, short_truth)), cfg.ndcg_k),
        n_pred_full=len(items),
        n_pred_short=len(short_items),
        fallback_used=fallback,
    )


def run_experiment(split: EvalSplit, cfg: RunConfig, model: FmModel | None = None) -> ExperimentReport:
    train = split.train
    index = FeatureIndex.from_dataset(train)
    users = sorted(split.test_by_user)
    if model is None:
        started = time.perf_counter()
        model = train_sgd(train, cfg.train_config(), index)
        log.info("trained FM in %.1fs", time.perf_counter() - started)

    variants = {name: mine_variant(name, train, cfg, users=None if cfg.neighbors else users) for name in VARIANTS}
    report = ExperimentReport(per_user={name: [] for name in VARIANTS})
    for name, run in variants.items():
        report.rule_counts[name] = len(run.rules)
        report.itemset_counts[name] = run.n_itemsets

    for user in users:
        truth = {}
        for rec in split.test_by_user[user]:
            if rec.item_id in index.item_index:
                truth[rec.item_id] = rec.rating
            else:
                report.unseen_test_records += 1
        if not truth:
            log.warning("user %d has no scorable test items; skipped", user)
            report.skipped_users.append(user)
            continue
        for name, run in variants.items():
            if cfg.neighbors:
                profile = neighbor_expand(run.store, user, cfg.neighbors, train, cfg.similarity)
            else:
                profile = run.store.get(user)
            report.per_user[name].append(evaluate_user(user, truth, model, index, profile, cfg))
    if report.unseen_test_records:
        log.info("%d test ratings name items absent from training and were not scored", report.unseen_test_records)
    _aggregate(report)
    return report


def _aggregate(report: ExperimentReport) -> None:
    if not report.per_user[VARIANTS[0]]:
        return
    for engine in ENGINES:
        for metric in ("mae", "ndcg", "n_pred"):
            report.five_number[(engine, metric)] = five_number(report.engine_values(engine, metric))
        report.mean_mae[engine] = float(np.mean(report.engine_values(engine, "mae")))
        report.mean_ndcg[engine] = float(np.mean(report.engine_values(engine, "ndcg")))
        report.total_predictions[engine] = int(sum(report.engine_values(engine, "n_pred")))
    for variant in VARIANTS:
        engine = f"fmar_{variant}"
        report.fallback_users[engine] = sum(r.fallback_used for r in report.per_user[variant])
        report.tests[engine] = {
            metric: tuple(wilcoxon_rank_sum(report.engine_values("fm", metric), report.engine_values(engine, metric)))
            for metric in ("mae", "ndcg")
        }


def run_pipeline(cfg: RunConfig, data: RatingDataset | None = None) -> tuple[EvalSplit, ExperimentReport]:
    """Load, select, split and evaluate according to ``cfg``."""
    data = data if data is not None else load_ratings(cfg.data_path)
    users = select_eval_users(data, cfg.eval_users)
    split = split_per_user(data, users, cfg.test_frac, derive_seed(cfg.seed, "split"))
    return split, run_experiment(split, cfg)


# ---------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_user_csv(report: ExperimentReport, path: str | PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(USER_COLUMNS)
        for variant in VARIANTS:
            for r in report.per_user[variant]:
                writer.writerow([variant] + [_fmt(getattr(r, c)) for c in USER_COLUMNS[1:]])


def summary_rows(report: ExperimentReport):
    for engine in ENGINES:
        if engine not in report.mean_mae:
            continue
        yield engine, "mae", "mean", report.mean_mae[engine]
        yield engine, "ndcg", "mean", report.mean_ndcg[engine]
        yield engine, "n_pred", "total", report.total_predictions[engine]
        for metric in ("mae", "ndcg", "n_pred"):
            for stat, value in report.five_number[(engine, metric)]._asdict().items():
                yield engine, metric, stat, value
    for variant in VARIANTS:
        engine = f"fmar_{variant}"
        if engine not in report.tests:
            continue
        yield engine, "n_pred", "reduction_factor", report.reduction_factor(variant)
        yield engine, "fallback", "users", report.fallback_users[engine]
        yield engine, "rules", "count", report.rule_counts[variant]
        yield engine, "itemsets", "count", report.itemset_counts[variant]
        for metric, (u, p) in report.tests[engine].items():
            yield f"fm_vs_{engine}", metric, "u_statistic", u
            yield f"fm_vs_{engine}", metric, "p_value", p
    yield "all", "test_records", "unseen_items", report.unseen_test_records
    yield "all", "users", "skipped", len(report.skipped_users)


def write_summary_csv(report: ExperimentReport, path: str | PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary_rows(report):
            writer.writerow([_fmt(v) for v in row])


def format_table(report: ExperimentReport, k: int = 10) -> str:
    lines = [
        f"{'engine':<16}{'mean MAE':>10}{f'mean NDCG@{k}':>14}{'predictions':>13}{'MAE p':>10}{'NDCG p':>10}",
    ]
    for engine in ENGINES:
        if engine not in report.mean_mae:
            continue
        tests = report.tests.get(engine)
        mae_p = f"{tests['mae'][1]:.3g}" if tests else "-"
        ndcg_p = f"{tests['ndcg'][1]:.3g}" if tests else "-"
        lines.append(
            f"{engine:<16}{report.mean_mae[engine]:>10.4f}{report.mean_ndcg[engine]:>14.4f}"
            f"{report.total_predictions[engine]:>13d}{mae_p:>10}{ndcg_p:>10}"
        )
    lines.append("")
    for variant in VARIANTS:
        engine = f"fmar_{variant}"
        if engine in report.tests:
            lines.append(
                f"{engine}: {report.reduction_factor(variant):.2f}x fewer predictions, "
                f"{report.fallback_users[engine]} fallback users, {report.rule_counts[variant]} rules"
            )
    for engine in ENGINES:
        if (engine, "mae") not in report.five_number:
            continue
        for metric in ("mae", "ndcg", "n_pred"):
            s = report.five_number[(engine, metric)]
            lines.append(
                f"{engine:<16}{metric:<7} min={s.minimum:.4g} q1={s.q1:.4g} "
                f"median={s.median:.4g} q3={s.q3:.4g} max={s.maximum:.4g}"
            )
    return "\n".join(lines) + "\n"


def write_report(report: ExperimentReport, out_dir: str | PathLike, k: int = 10) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "per_user": out / "per_user.csv",
        "summary": out / "summary.csv",
        "table": out / "report.txt",
    }
    write_user_csv(report, paths["per_user"])
    write_summary_csv(report, paths["summary"])
    paths["table"].write_text(format_table(report, k), encoding="utf-8")
    return paths
