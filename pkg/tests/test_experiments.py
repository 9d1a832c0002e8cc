import json

import numpy as np
import pytest

from vsatraj import experiments as ex
from vsatraj import models


def tiny_plan(**kw):
    base = dict(name="tiny", synth=dict(vehicles=16, duration=50.0, lane_change_rate=3.0, seed=1), stride=5,
                dimension=32, scale=[50.0, 5.0], seeds=[0, 1], variants=["linear", "lstm_numerical", "lstm_spa3"],
                model=dict(hidden_size=6, epochs=2, batch_size=32))
    base.update(kw)
    return ex.ExperimentPlan(**base)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    report, stats = ex.run(tiny_plan(), out)
    return out, report, stats


def test_plan_validation():
    with pytest.raises(ex.PlanError):
        ex.ExperimentPlan().validate()
    with pytest.raises(ex.PlanError):
        tiny_plan(dataset="x.csv").validate()
    with pytest.raises(ex.PlanError):
        tiny_plan(variants=["gru"]).validate()
    with pytest.raises(ex.PlanError):
        tiny_plan(setups=["z"]).validate()
    with pytest.raises(ex.PlanError):
        tiny_plan(extensions=[["all", "busy"]]).validate()
    with pytest.raises(ex.PlanError):
        tiny_plan(model={"dropout": 0.5}).validate()
    with pytest.raises(ex.PlanError):
        ex.ExperimentPlan.from_dict({"plan": {"colour": "red"}})


def test_plan_matrix_and_extensions():
    p = tiny_plan(setups=["a", "d"], extensions=[["lane_change_future", "all"]])
    assert p.matrix == {"a": ("all", "all"), "d": ("lane_change_any", "lane_change_any"),
                        "x1": ("lane_change_future", "all")}


def test_plan_file_roundtrip(tmp_path):
    p = tiny_plan()
    (tmp_path / "p.json").write_text(json.dumps(p.to_dict()))
    assert ex.ExperimentPlan.from_file(tmp_path / "p.json").to_dict() == p.to_dict()
    (tmp_path / "p.toml").write_text('[plan]\nname = "t"\ndataset = "rec.csv"\nseeds = [4]\n')
    q = ex.ExperimentPlan.from_file(tmp_path / "p.toml")
    assert q.seeds == [4] and q.dataset == str(tmp_path / "rec.csv")


def test_pinned_plan_is_shipped_and_valid():
    plan = ex.ExperimentPlan.from_file(ex.pinned_plan_path())
    assert plan.synth["vehicles"] == 200
    assert plan.seeds == [0, 1, 2]
    assert set(plan.variants) == set(models.MODEL_VARIANTS)


def test_run_produces_full_matrix(tiny_run):
    out, report, stats = tiny_run
    assert stats.trained == 2 * 2 * 2 and stats.failed == 0
    assert len(report.cells) == 3 * 8
    assert (out / "report.json").exists()
    assert len(list((out / "curves").glob("*.csv"))) == 24
    cell = report.cell("lstm_spa3", "d")
    assert cell.train_selector == "lane_change_any" and set(cell.per_seed) == {0, 1}
    for ck in cell.checkpoints.values():
        assert (out / ck).exists()


def test_linear_baseline_is_invariant_to_training_subset(tiny_run):
    _, report, _ = tiny_run
    for a, b in (("a", "b"), ("c", "d"), ("e", "f"), ("g", "h")):
        ja, jb = report.cell("linear", a).to_json(), report.cell("linear", b).to_json()
        assert json.dumps(ja["per_seed"]) == json.dumps(jb["per_seed"])
    assert ex.check_claims(report)["baseline_invariance"] is True


def test_rerun_reuses_cells_and_is_identical(tiny_run):
    out, report, _ = tiny_run
    again, stats = ex.run(tiny_plan(), out)
    assert stats.trained == 0 and stats.reused == 8
    assert again.dumps() == report.dumps()
    assert ex.ComparisonReport.load(out).dumps() == report.dumps()


def test_fresh_run_is_bitwise_identical(tiny_run, tmp_path):
    _, report, _ = tiny_run
    again, stats = ex.run(tiny_plan(), tmp_path)
    assert stats.trained == 8
    assert again.dumps() == report.dumps()


def test_empty_eval_subset_reports_gaps(tiny_run):
    _, report, _ = tiny_run
    crowded = report.sample_counts["0"]["eval"]["crowded"]
    cell = report.cell("lstm_numerical", "e")
    assert (cell.value("rmse_y") is None) == (crowded == 0)
    ranking = ex.compare(report, "rmse_y")
    if crowded == 0:
        assert "lstm_numerical" in ranking.gaps["e"]
        assert "n/a" in ranking.table()


def test_curves_csv_matches_report(tiny_run):
    out, report, _ = tiny_run
    cell = report.cell("lstm_numerical", "a")
    mean, std = cell.curve("rmse_y")
    rows = (out / "curves" / "lstm_numerical_a.csv").read_text().splitlines()
    assert rows[0].startswith("step,horizon_s")
    last = rows[-1].split(",")
    assert float(last[1]) == 5.0
    assert float(last[4]) == mean[-1] and float(last[5]) == std[-1]


def test_cell_statistics_by_hand():
    reps = {s: models.EvalReport(np.full(20, float(s)), np.full(20, 2.0 * s), 10) for s in (1, 2, 3)}
    cell = ex.CellResult("m", "a", "all", "all", reps)
    assert cell.value("rmse_x") == pytest.approx((2.0, np.std([1, 2, 3])))
    assert cell.value("aggregate")[0] == pytest.approx(np.mean([np.sqrt(5) * s for s in (1, 2, 3)]))
    with pytest.raises(ex.PlanError):
        cell.value("rmse_x", horizon=9.0)
    back = ex.CellResult.from_json(json.loads(json.dumps(cell.to_json())))
    assert back.value("rmse_y") == cell.value("rmse_y")


def test_deltas_and_claims_on_synthetic_report():
    def rep(v):
        return models.EvalReport(np.full(20, v), np.full(20, v), 5)

    r = ex.ComparisonReport({}, "fp", 0.25)
    for setup, (tr, ev) in ex.SETUPS.items():
        r.add(ex.CellResult("linear", setup, tr, ev, {0: rep(3.0)}))
        r.add(ex.CellResult("lstm_spa1", setup, tr, ev, {0: rep(2.0 if tr == "all" else 1.5)}))
        r.add(ex.CellResult("lstm_spa3", setup, tr, ev, {0: rep(2.5 if tr == "all" else 1.0)}))
        r.add(ex.CellResult("lstm_numerical", setup, tr, ev, {0: rep(2.8)}))
    claims = ex.check_claims(r)
    assert claims == {"baseline_invariance": True, "lstm_beats_linear": True,
                      "spa_lateral_on_lane_changes": True, "spa3_gains_from_lane_change_training": True}
    d = {(x["variant"], x["eval_selector"]): x["delta_mean"] for x in r.deltas("rmse_y")}
    assert d[("lstm_spa3", "lane_change_any")] == pytest.approx(-1.5)
    assert d[("linear", "all")] == 0.0
    ranking = ex.compare(r, "rmse_y")
    assert [v for v, *_ in ranking.rows["d"]] == ["lstm_spa3", "lstm_spa1", "lstm_numerical", "linear"]


def test_failed_cell_is_reported(tmp_path):
    plan = tiny_plan(variants=["lstm_numerical"], seeds=[0], model=dict(hidden_size=4, epochs=2,
                                                                         learning_rate=1e200))
    report, stats = ex.run(plan, tmp_path)
    assert stats.failed == 2
    assert {c.status for c in report.failed} == {"failed"}
    assert ex.compare(report, "rmse_y").gaps["a"] == ["lstm_numerical"]
