import json
import subprocess
import sys
from collections import Counter

import pytest

from floorplan_nav import cli
from floorplan_nav.floorplan import load_plan

TASK = ["--map", "builtin:map1", "--start", "Terrasse Couverte", "--goal", "Chambre 1"]
TERRACE_ROUTE = ["ApproachDoor(D8)", "OpenDoor(D8)", "GoThrough(D8)",
          "ApproachDoor(D7)", "OpenDoor(D7)", "GoThrough(D7)",
          "ApproachDoor(D4)", "OpenDoor(D4)", "GoThrough(D4)"]

# every public operation a user may need from the command line
OPERATIONS = {
    "check_invariants", "build_connectivity", "oracle_plan", "serialize_plan", "room_hop_distance",
    "classify_task", "double_map", "apply_labeling", "rasterize", "render_png", "build_prompt", "query",
    "mock_noisy_respond", "parse_plan_json", "parse_plan_lines", "validate_plan", "grade_connectivity",
    "astar", "approach_pose", "execute", "sample_tasks", "run_experiment", "success_rate",
    "hypothesis_report", "welch_t_test",
}


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def lines(out):
    return [json.loads(x) for x in out.splitlines() if x.strip()]


def _as_lines(plan):
    return [f"{a['action']}({a['target']})" for a in plan]


def test_every_operation_reachable_exactly_once():
    counts = Counter(op for _, ops in cli.DISPATCH.values() for op in ops)
    assert set(counts) == OPERATIONS
    assert all(n == 1 for n in counts.values())


def test_help_lists_every_command():
    text = cli.build_parser().format_help()
    for path in cli.DISPATCH:
        assert path[0] in text


def test_every_dispatch_path_parses():
    parser = cli.build_parser()
    for path in cli.DISPATCH:
        with pytest.raises(SystemExit) as exc:
            parser.parse_args(list(path) + ["--help"])
        assert exc.value.code == 0


def test_oracle_lines(capsys):
    code, out, _ = run(capsys, "oracle", *TASK, "--format", "lines")
    assert code == 0
    assert out.splitlines() == TERRACE_ROUTE


def test_oracle_json_and_pretty(capsys):
    _, out, _ = run(capsys, "oracle", *TASK)
    assert _as_lines(json.loads(out)["plan"]) == TERRACE_ROUTE
    _, pretty, _ = run(capsys, "--pretty", "oracle", *TASK)
    assert pretty != out


def test_graph_and_classify(capsys):
    _, out, _ = run(capsys, "graph", "--map", "builtin:map1")
    g = json.loads(out)
    assert len(g["nodes"]) == 9 and len(g["edges"]) == 9
    _, out, _ = run(capsys, "classify", *TASK)
    assert json.loads(out) == {"start": "Terrasse Couverte", "goal": "Chambre 1", "distance": 3, "class": "hard"}


def test_validate_plan_distant_door(capsys, tmp_path):
    plan = tmp_path / "p.txt"
    plan.write_text("ApproachDoor(D8)\nOpenDoor(D5)\n")
    code, out, err = run(capsys, "validate-plan", *TASK, "--plan", str(plan))
    assert code == 1
    verdict = json.loads(out)
    assert (verdict["outcome"], verdict["failing_index"]) == ("infeasible_action", 1)
    assert "D5" in err


def test_validate_plan_accepts_oracle_response(capsys, tmp_path):
    plan = tmp_path / "p.txt"
    plan.write_text("Door connections:\nD8: Terrasse Couverte - Hall\nFinal plan:\n"
                    + json.dumps({"plan": TERRACE_ROUTE}))
    code, out, _ = run(capsys, "validate-plan", *TASK, "--plan", str(plan), "--grade-connections")
    verdict = json.loads(out)
    assert code == 0 and verdict["outcome"] == "correct" and verdict["minimal"] is True
    assert verdict["connections"]["precision"] == 1.0
    # the plain lines format does not tolerate prose
    plan.write_text("Sure, here it is:\n" + "\n".join(TERRACE_ROUTE))
    code, out, _ = run(capsys, "validate-plan", *TASK, "--plan", str(plan), "--format", "lines")
    assert code == 1 and json.loads(out)["outcome"] == "malformed"


def test_simulate(capsys, tmp_path):
    plan = tmp_path / "p.txt"
    plan.write_text("\n".join(TERRACE_ROUTE))
    code, out, _ = run(capsys, "simulate", *TASK, "--plan", str(plan))
    assert code == 0
    log = json.loads(out)
    assert log["outcome"] == "success" and len(log["records"]) == 9
    plan.write_text("ApproachDoor(D8)\nOpenDoor(D5)\n")
    code, out, _ = run(capsys, "simulate", *TASK, "--plan", str(plan))
    assert code == 1


def test_stats_identical_files(capsys, tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("outcome\n1\n0\n1\n1\n")
    code, out, _ = run(capsys, "stats", "ttest", "--a", str(a), "--b", str(a))
    r = json.loads(out)
    assert code == 0 and r["t"] == 0.0 and r["p_two_sided"] == 1.0


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["oracle", "--no-such-flag"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["teleport"])
    assert exc.value.code == 2


def test_domain_error_exit_1(capsys):
    code, _, err = run(capsys, "oracle", "--map", "builtin:map1", "--start", "Nowhere", "--goal", "Hall")
    assert code == 1 and err.startswith("error:")


def test_mock_query_is_reproducible(capsys):
    argv = ["--seed", "3", "query", *TASK, "--backend", "mock-noisy", "--p-error", "0.5"]
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second
    t = json.loads(first)
    assert t["backend"] == "mock_noisy|seed=3|p=0.5"
    assert "latency_ms" not in t
    _, raw, _ = run(capsys, "--seed", "3", "query", *TASK, "--backend", "mock-noisy", "--p-error", "0.5",
                    "--raw-mock")
    assert "Final plan" in raw


def test_oracle_query_gives_terrace_route(capsys):
    _, out, _ = run(capsys, "query", *TASK, "--backend", "mock-oracle")
    t = json.loads(out)
    # transcripts keep the plan in its canonical serialized form
    assert _as_lines(json.loads(t["plan"])["plan"]) == TERRACE_ROUTE


def test_transforms_and_images(capsys, tmp_path):
    doubled = tmp_path / "d.json"
    code, _, _ = run(capsys, "transform", "double", "--map", "builtin:map1", "--bridge-room", "Corridor",
                     "--out", str(doubled))
    assert code == 0
    plan = load_plan(doubled)
    assert (len(plan.rooms), len(plan.doors)) == (18, 19)
    code, _, _ = run(capsys, "map", "validate", "--map", str(doubled))
    assert code == 0

    sparse = tmp_path / "s.json"
    assert run(capsys, "transform", "relabel", "--map", "builtin:map1", "--scheme", "sparse",
               "--out", str(sparse))[0] == 0
    pgm = tmp_path / "g.pgm"
    assert run(capsys, "rasterize", "--map", "builtin:map1", "--out", str(pgm))[0] == 0
    assert pgm.read_bytes().startswith(b"P5")
    png = tmp_path / "m.png"
    assert run(capsys, "render", "--map", "builtin:map1", "--out", str(png))[0] == 0
    assert png.read_bytes().startswith(b"\x89PNG")
    img = tmp_path / "p.png"
    code, out, _ = run(capsys, "prompt", *TASK, "--image-out", str(img))
    assert code == 0 and img.exists()
    assert "Terrasse Couverte" in out


def test_bench_run_and_report(capsys, tmp_path):
    records = tmp_path / "r.jsonl"
    code, out, _ = run(capsys, "bench", "run", "--maps", "builtin:map1", "--records", str(records),
                       "--tasks", "2", "--trials", "3", "--backend", "mock-noisy",
                       "--arm-p-error", "orig-dense-hard=0", "orig-sparse-hard=1")
    assert code == 0
    rates = {r["arm"]: r["rate"] for r in lines(out)}
    assert rates["orig-dense-hard"] == 1.0 and rates["orig-sparse-hard"] == 0.0
    assert len(records.read_text().splitlines()) == 4 * 2 * 3
    out_dir = tmp_path / "rep"
    code, out, _ = run(capsys, "bench", "report", "--records", str(records), "--out", str(out_dir))
    assert code == 0
    assert [h["hypothesis"] for h in lines(out)] == ["H1", "H2", "H3"]
    assert (out_dir / "report.json").exists()


def test_console_script_module_entry():
    proc = subprocess.run([sys.executable, "-m", "floorplan_nav.cli", "oracle", *TASK, "--format", "lines"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0
    assert proc.stdout.splitlines() == TERRACE_ROUTE
