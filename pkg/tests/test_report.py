import csv
import io
import json
from pathlib import Path
from xml.etree import ElementTree

from floorplan_nav.backends import BackendConfig
from floorplan_nav.bench import ExperimentConfig, TrialRecord, run_experiment
from floorplan_nav import report as report_mod
from floorplan_nav.report import hypothesis_report, rates_csv, report_json, write_report

GOLDEN = Path(__file__).parent / "golden" / "report_small.json"


def _golden_config():
    return ExperimentConfig(name="golden", tasks_per_map=2, trials_per_task=3, seed=1,
                            backend=BackendConfig("mock_noisy", seed=1, p_error=0.3))


def _rec(arm, correct, map_id="m", trial=0, start="A", outcome=None):
    outcome = outcome or ("correct" if correct else "goal_not_reached")
    return TrialRecord("e", map_id, map_id, arm, False, "dense", "hard", start, "B", trial, "r", outcome,
                       outcome == "correct", 9, None)


def test_report_matches_golden_file():
    assert report_json(hypothesis_report(run_experiment(_golden_config()))) == GOLDEN.read_text()


def test_report_schema():
    rep = json.loads(GOLDEN.read_text())
    assert set(rep) == {"alpha", "maps", "trials", "rates", "hypotheses"}
    assert [h["id"] for h in rep["hypotheses"]] == ["H1", "H2", "H3"]
    for h in rep["hypotheses"]:
        assert {"available", "scopes", "significant", "arm_a", "arm_b"} <= set(h)
        assert [s["scope"] for s in h["scopes"]] == ["map1", "pooled"]
        for s in h["scopes"]:
            assert {"a", "b", "welch_trial", "welch_task", "z_test", "significant"} <= set(s)


def test_written_files_are_byte_identical_across_runs(tmp_path):
    a = write_report(hypothesis_report(run_experiment(_golden_config())), tmp_path / "a")
    b = write_report(hypothesis_report(run_experiment(_golden_config())), tmp_path / "b")
    assert [p.name for p in a] == [p.name for p in b]
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
    names = {p.name for p in a}
    assert {"report.json", "rates.csv", "tests.csv", "H1_map_size.svg"} <= names
    for p in a:
        if p.suffix == ".svg":
            ElementTree.fromstring(p.read_text())


def test_missing_arm_marks_comparison_unavailable(tmp_path):
    recs = [_rec("orig-dense-hard", True, trial=i) for i in range(5)]
    rep = hypothesis_report(recs)
    for h in rep["hypotheses"]:
        assert h["available"] is False and h["significant"] is None
    assert "doubled-dense-hard" in rep["hypotheses"][0]["missing_arms"]
    write_report(rep, tmp_path)
    ElementTree.fromstring((tmp_path / "H1_map_size.svg").read_text())
    rows = list(csv.reader(io.StringIO(report_mod.tests_csv(rep))))
    assert rows[1][-1] == "false"


def test_significant_difference_is_flagged():
    recs = [_rec("orig-dense-hard", i < 48, trial=i) for i in range(50)]
    recs += [_rec("doubled-dense-hard", i < 30, trial=i) for i in range(50)]
    h1 = hypothesis_report(recs)["hypotheses"][0]
    pooled = h1["scopes"][-1]
    assert h1["significant"] is True
    assert pooled["welch_trial"]["t"] > 0
    assert (pooled["a"]["rate"], pooled["b"]["rate"]) == (0.96, 0.6)


def test_zero_variance_falls_back_to_z_test():
    recs = [_rec("orig-dense-hard", True, trial=i) for i in range(10)]
    recs += [_rec("doubled-dense-hard", False, trial=i) for i in range(10)]
    pooled = hypothesis_report(recs)["hypotheses"][0]["scopes"][-1]
    assert pooled["welch_trial"]["degenerate"] is True
    assert pooled["significant"] is True
    same = [_rec("orig-dense-hard", True, trial=i) for i in range(10)]
    same += [_rec("doubled-dense-hard", True, trial=i) for i in range(10)]
    assert hypothesis_report(same)["hypotheses"][0]["significant"] is False


def test_infrastructure_failures_reported_separately():
    recs = [_rec("orig-dense-hard", True, trial=i) for i in range(4)]
    recs.append(_rec("orig-dense-hard", False, trial=9, outcome="infrastructure_failure"))
    rep = hypothesis_report(recs)
    row = next(r for r in rep["rates"] if r["scope"] == "pooled")
    assert (row["trials"], row["infrastructure_failures"], row["rate"]) == (4, 1, 1.0)


def test_per_map_and_pooled_scopes():
    recs = []
    for m in ("m1", "m2"):
        recs += [_rec("orig-dense-hard", i % 2 == 0, map_id=m, trial=i) for i in range(6)]
        recs += [_rec("orig-sparse-hard", i % 3 == 0, map_id=m, trial=i) for i in range(6)]
    h3 = hypothesis_report(recs)["hypotheses"][2]
    assert [s["scope"] for s in h3["scopes"]] == ["m1", "m2", "pooled"]
    assert h3["scopes"][-1]["a"]["trials"] == 12
    text = rates_csv(hypothesis_report(recs))
    assert text.splitlines()[0] == "arm,scope,successes,trials,infrastructure_failures,rate"
