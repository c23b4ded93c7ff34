import csv

import numpy as np
import pytest

from fmar.cli import main
from fmar.config import RunConfig, apply_overrides, derive_seed, dump_config, parse_config
from fmar.experiment import ENGINES, SUMMARY_COLUMNS, USER_COLUMNS, run_pipeline
from fmar.ingest import load_ratings
from fmar.mining import read_rules


def write_synthetic(tmp_path):
    rng = np.random.default_rng(7)
    taste = rng.normal(size=(40, 3))
    appeal = rng.normal(size=(60, 3))
    lines = []
    for u in range(40):
        n = 30 + 2 * u if u < 5 else int(rng.integers(10, 30))
        # every user rates items 1-6 and nearly always likes them, which yields strong rules
        rated = set(range(6)) | set(rng.choice(np.arange(6, 60), size=n, replace=False).tolist())
        for i in sorted(rated):
            base = 4.8 if i < 6 else 3.0
            r = int(np.clip(np.rint(base + taste[u] @ appeal[i] / 3 + rng.normal(scale=0.4)), 1, 5))
            lines.append(f"{u + 1}\t{i + 1}\t{r}\t{len(lines)}\n")
    path = tmp_path / "synthetic.data"
    path.write_text("".join(lines))
    return path


@pytest.fixture
def synthetic(tmp_path):
    return write_synthetic(tmp_path)


FAST = ["--fm-epochs", "5", "--apriori-min-support", "5", "--fpgrowth-min-support", "3", "--eval-users", "5"]


def test_config_defaults_match_experiment():
    cfg = RunConfig()
    assert (cfg.apriori.min_support, cfg.apriori.min_confidence, cfg.apriori.min_lift) == (250, 0.65, 1.0)
    assert (cfg.fpgrowth.min_support, cfg.fpgrowth.min_confidence) == (60, 0.65)
    assert (cfg.fm.k, cfg.fm.epochs, cfg.eval_users, cfg.test_frac, cfg.ndcg_k) == (8, 100, 50, 0.7, 10)
    assert cfg.favor_threshold == 3


def test_config_round_trip(tmp_path):
    cfg = apply_overrides(RunConfig(), {"seed": "5", "fm.k": "4", "apriori.min_lift": 0.5, "clamp_predictions": "yes"})
    assert cfg.seed == 5 and cfg.fm.k == 4 and cfg.apriori.min_lift == 0.5 and cfg.clamp_predictions
    text = dump_config(cfg)
    assert parse_config(text) == cfg
    assert dump_config(parse_config(text)) == text


def test_config_errors():
    with pytest.raises(ValueError):
        apply_overrides(RunConfig(), {"nope": "1"})
    with pytest.raises(ValueError):
        apply_overrides(RunConfig(), {"fm.nope": "1"})
    with pytest.raises(ValueError):
        parse_config("[apriori]\nmin_support = 0\n")
    with pytest.raises(ValueError):
        parse_config("[extra]\nx = 1\n")


def test_derived_seeds_differ_by_stage():
    assert derive_seed(17, "split") != derive_seed(17, "fm")
    assert derive_seed(17, "fm") == derive_seed(17, "fm")


def test_mine_toy_rules(toy_ratings, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["mine", "--data", str(toy_ratings), "--out", str(out), "--apriori-min-support", "2",
               "--apriori-min-confidence", "0.6", "--apriori-min-lift", "0", "--fpgrowth-min-support", "2",
               "--fpgrowth-min-confidence", "0.6", "--fpgrowth-min-lift", "0"])
    assert rc == 0
    expected = {((a,), (c,)) for a, c in [(1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)]}
    for name in ("apriori", "fpgrowth"):
        rules = read_rules(out / f"rules_{name}.txt")
        assert {(r.antecedent, r.consequent) for r in rules} == expected
        assert all(r.confidence == pytest.approx(2 / 3) and r.lift == pytest.approx(8 / 9) for r in rules)
    assert "6 rules, 6 frequent itemsets" in capsys.readouterr().out
    assert (out / "manifest.json").exists()


def test_mine_unreachable_support(toy_ratings, tmp_path):
    out = tmp_path / "out"
    assert main(["mine", "--data", str(toy_ratings), "--out", str(out), "--apriori-min-support", "5",
                 "--fpgrowth-min-support", "5"]) == 0
    assert (out / "rules_apriori.txt").read_text() == ""
    assert (out / "rules_fpgrowth.txt").read_text() == ""


def test_exit_codes(tmp_path, toy_ratings, capsys):
    assert main(["mine", "--data", str(tmp_path / "missing.data"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err
    bad = tmp_path / "bad.data"
    bad.write_text("1\t1\t9\t0\n")
    assert main(["evaluate", "--data", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["mine", "--data", str(toy_ratings), "--config", str(tmp_path / "none.ini")]) == 1
    assert main(["mine", "--data", str(toy_ratings), "--eval-users", "-3"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_evaluate_pipeline_error(synthetic, tmp_path):
    rc = main(["evaluate", "--data", str(synthetic), "--out", str(tmp_path), "--eval-users", "5",
               "--fm-epochs", "50", "--fm-learning-rate", "50"])
    assert rc == 3


def test_evaluate_deterministic(synthetic, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main(["evaluate", "--data", str(synthetic), "--out", str(out), "--seed", "3", *FAST]) == 0
    for name in ("per_user.csv", "summary.csv", "report.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    with open(outs[0] / "per_user.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == USER_COLUMNS
    assert len(rows) == 1 + 2 * 5
    with open(outs[0] / "summary.csv") as fh:
        assert tuple(next(csv.reader(fh))) == SUMMARY_COLUMNS


def test_evaluate_single_user(synthetic, tmp_path):
    out = tmp_path / "one"
    args = ["evaluate", "--data", str(synthetic), "--out", str(out), *FAST, "--eval-users", "1"]
    assert main(args) == 0
    rows = (out / "per_user.csv").read_text().splitlines()
    assert len(rows) == 3
    assert {r.split(",")[0] for r in rows[1:]} == {"apriori", "fpgrowth"}


def test_evaluate_from_config_file(synthetic, tmp_path):
    cfg = apply_overrides(RunConfig(), {"data_path": str(synthetic), "output_dir": str(tmp_path / "o"),
                                        "fm.epochs": 3, "eval_users": 2, "apriori.min_support": 5,
                                        "fpgrowth.min_support": 3})
    ini = tmp_path / "run.ini"
    ini.write_text(dump_config(cfg))
    assert main(["evaluate", "--config", str(ini)]) == 0
    assert (tmp_path / "o" / "config.ini").read_text() == dump_config(cfg)


def test_report_conservation(synthetic):
    cfg = apply_overrides(RunConfig(), {"fm.epochs": 5, "eval_users": 5, "apriori.min_support": 5,
                                        "fpgrowth.min_support": 3, "neighbors": 2})
    split, report = run_pipeline(cfg, load_ratings(synthetic))
    for variant, rows in report.per_user.items():
        assert len(rows) == 5
        assert sum(r.n_pred_short for r in rows) == report.total_predictions[f"fmar_{variant}"]
        assert sum(r.n_pred_full for r in rows) == report.total_predictions["fm"]
        for r in rows:
            assert r.n_pred_short <= r.n_pred_full
            assert 0 <= r.ndcg_short <= 1 and 0 <= r.ndcg_full <= 1
            if r.fallback_used:
                assert (r.mae_short, r.ndcg_short, r.n_pred_short) == (r.mae_full, r.ndcg_full, r.n_pred_full)
    assert set(report.mean_mae) == set(ENGINES)


def test_recommend(synthetic, tmp_path, capsys):
    base = ["recommend", "--data", str(synthetic), "--out", str(tmp_path), "--fm-epochs", "5",
            "--apriori-min-support", "6", "--user", "3"]
    assert main(base + ["--top-n", "0"]) == 0
    assert main(base + ["--top-n", "5"]) == 0
    first = capsys.readouterr().out
    assert main(base + ["--top-n", "5"]) == 0
    assert capsys.readouterr().out == first
    ranked = [line.split("\t") for line in first.splitlines()[1:]]
    assert 1 <= len(ranked) <= 5
    rated = {r.item_id for r in load_ratings(synthetic).user_records(3)}
    assert not rated & {int(item) for _, item, _ in ranked}
    assert main(base[:-1] + ["999"]) == 2


def test_synthetic_fixture_exercises_shortlisting(synthetic):
    cfg = apply_overrides(RunConfig(), {"fm.epochs": 3, "eval_users": 5, "apriori.min_support": 5,
                                        "fpgrowth.min_support": 3})
    _, report = run_pipeline(cfg, load_ratings(synthetic))
    assert report.rule_counts["fpgrowth"] > 0
    assert any(not r.fallback_used for r in report.per_user["fpgrowth"])
