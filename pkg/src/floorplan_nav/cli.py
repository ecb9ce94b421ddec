"""Command-line entry point: ``floorplan-nav <command> ...``.

Machine output is one JSON document per line on stdout; ``--pretty`` prints
human-readable text instead. Diagnostics go to stderr. Exit status is 0 on
success, 1 on a domain failure (bad map, infeasible plan, failed query) and
2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, report
from .backends import BackendConfig, BackendConfigError, MockContext, TranscriptCache, mock_noisy_respond, query
from .floorplan import MapValidationError, check_invariants, load_plan, save_plan
from .grammar import PlanParseError, parse_connectivity_claim, parse_plan, parse_plan_json, parse_plan_lines, serialize_plan
from .graph import NavTask, NoPathError, build_connectivity, classify_task, oracle_plan, room_hop_distance
from .grid import NoPathFound, RasterError, rasterize
from .executor import ApproachError, execute
from .prompts import PromptError, PromptSpec, build_prompt
from .render import render_png
from .stats import DegenerateInputError, welch_t_test
from .transforms import BridgeSpec, apply_labeling, double_map
from .validate import grade_connectivity, validate_plan

log = logging.getLogger("floorplan_nav")


class DomainFailure(Exception):
    """Raised by a handler after it has printed its result, to exit with 1."""


DOMAIN_ERRORS = (MapValidationError, PlanParseError, NoPathError, NoPathFound, RasterError, ApproachError,
                 PromptError, BackendConfigError, bench.ExperimentConfigError, DegenerateInputError,
                 KeyError, ValueError, OSError)


# ------------------------------------------------------------------ output

def emit(args, obj) -> None:
    if getattr(args, "pretty", False):
        print(_pretty(obj))
    else:
        print(json.dumps(obj, ensure_ascii=False, separators=(",", ":"), sort_keys=False))


def _pretty(obj, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(obj, dict):
        lines = []
        for k, v in obj.items():
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{pad}{k}:")
                lines.append(_pretty(v, indent + 1))
            else:
                lines.append(f"{pad}{k}: {v}")
        return "\n".join(lines)
    if isinstance(obj, list):
        lines = []
        for v in obj:
            if isinstance(v, dict):
                lines.append(_pretty(v, indent))
            elif isinstance(v, list):
                lines.append(f"{pad}- {' '.join(map(str, v))}")
            else:
                lines.append(f"{pad}- {v}")
        return "\n".join(lines)
    return f"{pad}{obj}"


# ----------------------------------------------------------------- helpers

def _graph_and_task(args):
    plan = load_plan(args.map)
    graph = build_connectivity(plan)
    start, goal = graph.require_room(args.start), graph.require_room(args.goal)
    hops = room_hop_distance(graph, start, goal)
    diff = "degenerate" if start == goal else ("easy" if hops == 1 else "hard")
    return plan, graph, NavTask(plan.map_id, start, goal, diff)


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _door_states(spec: str | None) -> dict[str, bool]:
    return {d.strip(): True for d in (spec or "").split(",") if d.strip()}


def _backend_from_args(args) -> BackendConfig:
    kind = args.backend.replace("-", "_")
    return BackendConfig(
        kind=kind,
        endpoint=args.endpoint,
        model=args.model or "",
        credential_env=args.credential_env,
        adapter=args.adapter,
        temperature=args.temperature,
        timeout=args.timeout,
        max_retries=args.max_retries,
        seed=args.seed,
        p_error=args.p_error,
        script_path=args.script,
        max_in_flight=args.max_in_flight,
    )


# ---------------------------------------------------------------- handlers

def cmd_map_validate(args):
    plan = load_plan(args.map, strict=not args.lenient)
    check_invariants(plan)
    emit(args, {"ok": True, "map_id": plan.map_id, "rooms": len(plan.rooms), "doors": len(plan.doors),
                "labels": len(plan.labels)})


def cmd_graph(args):
    g = build_connectivity(load_plan(args.map))
    emit(args, {"map_id": g.map_id, "nodes": list(g.nodes), "edges": [list(e) for e in g.edges]})


def cmd_oracle(args):
    _, graph, task = _graph_and_task(args)
    plan = oracle_plan(graph, task)
    if args.format == "lines" or args.pretty:
        print(serialize_plan(plan, "lines"))
    else:
        print(serialize_plan(plan, "json"))


def cmd_classify(args):
    plan = load_plan(args.map)
    graph = build_connectivity(plan)
    start, goal = graph.require_room(args.start), graph.require_room(args.goal)
    task = NavTask(plan.map_id, start, goal, "degenerate" if start == goal else "easy")
    emit(args, {"start": start, "goal": goal, "distance": room_hop_distance(graph, start, goal),
                "class": classify_task(graph, task)})


def cmd_transform_double(args):
    plan = load_plan(args.map)
    out = double_map(plan, BridgeSpec(args.bridge_room, args.width, args.center, not args.translate))
    save_plan(out, args.out)
    new = sorted(set(d.door_id for d in out.doors) - set(d.door_id for d in plan.doors))
    emit(args, {"map_id": out.map_id, "rooms": len(out.rooms), "doors": len(out.doors), "bridge": new,
                "out": str(args.out)})


def cmd_transform_relabel(args):
    out = apply_labeling(load_plan(args.map), args.scheme)
    save_plan(out, args.out)
    kinds: dict[str, int] = {}
    for lab in out.labels:
        kinds[lab.kind] = kinds.get(lab.kind, 0) + 1
    emit(args, {"map_id": out.map_id, "scheme": args.scheme, "labels": kinds, "out": str(args.out)})


def cmd_rasterize(args):
    grid = rasterize(load_plan(args.map), args.resolution)
    grid.save_pgm(args.out)
    emit(args, {"height": grid.height, "width": grid.width, "resolution": grid.resolution,
                "origin": list(grid.origin), "out": str(args.out)})


def cmd_render(args):
    plan = load_plan(args.map)
    if args.labeling:
        plan = apply_labeling(plan, args.labeling)
    data = render_png(plan, args.px_per_unit)
    Path(args.out).write_bytes(data)
    emit(args, {"bytes": len(data), "out": str(args.out)})


def _prompt_for(args, plan, graph, task):
    image = render_png(apply_labeling(plan, args.labeling) if args.labeling else plan, args.px_per_unit)
    return build_prompt(PromptSpec(graph.display_name(task.start_room), graph.display_name(task.goal_room),
                                   args.template, args.profile, not args.no_connections, image))


def cmd_prompt(args):
    plan, graph, task = _graph_and_task(args)
    prompt = _prompt_for(args, plan, graph, task)
    if args.image_out:
        Path(args.image_out).write_bytes(prompt.image)
    if args.pretty:
        print(prompt.text)
    else:
        emit(args, {"prompt_hash": prompt.prompt_hash, "text": prompt.text, "image_bytes": len(prompt.image)})


def cmd_query(args):
    plan, graph, task = _graph_and_task(args)
    backend = _backend_from_args(args)
    if args.raw_mock:
        # the mock's answer alone, without prompt rendering or transcript bookkeeping
        if backend.kind != "mock_noisy":
            raise ValueError("--raw-mock needs --backend mock-noisy")
        print(mock_noisy_respond(task, graph, backend.seed, backend.p_error, args.trial))
        return
    prompt = _prompt_for(args, plan, graph, task)
    cache = TranscriptCache(args.cache_dir) if args.cache_dir else None
    t = query(backend, prompt, args.trial, context=MockContext(graph, task, args.profile), cache=cache,
              replay=args.replay)
    d = t.to_dict()
    if backend.is_mock:
        # wall-clock fields would make mock output irreproducible
        d.pop("latency_ms")
        d.pop("timestamp")
    emit(args, d)
    if not t.ok:
        raise DomainFailure(f"query failed: {t.error_kind}: {t.error_detail}")


def cmd_validate_plan(args):
    _, graph, task = _graph_and_task(args)
    text = _read_text(args.plan)
    parser = {"auto": parse_plan, "json": parse_plan_json, "lines": parse_plan_lines}[args.format]
    try:
        plan = parser(text, args.profile)
    except PlanParseError as exc:
        emit(args, {"outcome": exc.outcome, "failing_index": None, "trace": [task.start_room],
                    "detail": str(exc), "minimal": None})
        raise DomainFailure(str(exc)) from None
    verdict = validate_plan(graph, task, plan, _door_states(args.open), args.pedantic)
    out = json.loads(verdict.to_json())
    if args.grade_connections:
        precision, recall = grade_connectivity(parse_connectivity_claim(text), graph)
        out["connections"] = {"precision": precision, "recall": recall}
    emit(args, out)
    if not verdict.correct:
        raise DomainFailure(verdict.detail)


def cmd_simulate(args):
    plan, _, task = _graph_and_task(args)
    actions = parse_plan(_read_text(args.plan), args.profile)
    grid = rasterize(plan, args.resolution)
    result = execute(grid, plan, actions, task, _door_states(args.open), args.pedantic)
    out = result.to_dict()
    out["path_length"] = result.path_length
    emit(args, out)
    if not result.success:
        raise DomainFailure(result.detail)


def _bench_config(args) -> bench.ExperimentConfig:
    if args.config:
        cfg = bench.ExperimentConfig.load(args.config)
    else:
        cfg = bench.ExperimentConfig(maps=tuple(args.maps or ("builtin:map1",)))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.backend:
        changes["backend"] = _backend_from_args(args)
    if args.tasks:
        changes["tasks_per_map"] = args.tasks
    if args.trials:
        changes["trials_per_task"] = args.trials
    if args.arm_p_error:
        p = dict(kv.split("=", 1) for kv in args.arm_p_error)
        changes["arms"] = tuple(replace(a, p_error=float(p[a.name])) if a.name in p else a
                                for a in changes.get("arms", cfg.arms))
    return replace(cfg, **changes)


def cmd_bench_run(args):
    cfg = _bench_config(args)
    cache = TranscriptCache(args.cache_dir) if args.cache_dir else None
    records = bench.run_experiment(cfg, args.records, cache=cache, replay=args.replay)
    for row in bench.success_rate(records, ("map_id", "arm")):
        emit(args, row.to_dict(("map_id", "arm")))
    infra = sum(r.infrastructure_failure for r in records)
    if infra:
        print(f"{infra} trials failed for infrastructure reasons", file=sys.stderr)


def cmd_bench_report(args):
    records = bench.load_records(args.records)
    rep = report.hypothesis_report(records, args.alpha)
    written = report.write_report(rep, args.out) if args.out else []
    for h in rep["hypotheses"]:
        pooled = h["scopes"][-1] if h["scopes"] else None
        emit(args, {
            "hypothesis": h["id"], "name": h["name"], "available": h["available"],
            "rate_a": pooled["a"]["rate"] if pooled else None, "rate_b": pooled["b"]["rate"] if pooled else None,
            "t": (pooled.get("welch_trial") or {}).get("t") if pooled else None,
            "p": (pooled.get("welch_trial") or {}).get("p_two_sided") if pooled else None,
            "significant": h["significant"],
        })
    for p in written:
        print(f"wrote {p}", file=sys.stderr)


def _read_outcomes(path: str) -> list[float]:
    values = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            for cell in row:
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    if values:
                        raise ValueError(f"{path}: non-numeric value {cell!r}") from None
                    # a header row before any data is fine
    return values


def cmd_stats_ttest(args):
    res = welch_t_test(_read_outcomes(args.a), _read_outcomes(args.b))
    emit(args, res.to_dict())


# ----------------------------------------------------------------- parser

# command path -> (handler, library operations it exposes)
DISPATCH = {
    ("map", "validate"): (cmd_map_validate, ("check_invariants",)),
    ("graph",): (cmd_graph, ("build_connectivity",)),
    ("oracle",): (cmd_oracle, ("oracle_plan", "serialize_plan")),
    ("classify",): (cmd_classify, ("room_hop_distance", "classify_task")),
    ("transform", "double"): (cmd_transform_double, ("double_map",)),
    ("transform", "relabel"): (cmd_transform_relabel, ("apply_labeling",)),
    ("rasterize",): (cmd_rasterize, ("rasterize",)),
    ("render",): (cmd_render, ("render_png",)),
    ("prompt",): (cmd_prompt, ("build_prompt",)),
    ("query",): (cmd_query, ("query", "mock_noisy_respond")),
    ("validate-plan",): (cmd_validate_plan, ("parse_plan_json", "parse_plan_lines", "validate_plan",
                                             "grade_connectivity")),
    ("simulate",): (cmd_simulate, ("astar", "approach_pose", "execute")),
    ("bench", "run"): (cmd_bench_run, ("sample_tasks", "run_experiment", "success_rate")),
    ("bench", "report"): (cmd_bench_report, ("hypothesis_report",)),
    ("stats", "ttest"): (cmd_stats_ttest, ("welch_t_test",)),
}


def _add_task_args(p):
    p.add_argument("--map", required=True, help="map JSON file, or builtin:NAME")
    p.add_argument("--start", required=True, help="start room id or display name")
    p.add_argument("--goal", required=True, help="goal room id or display name")


def _add_prompt_args(p):
    p.add_argument("--template", default="instructional", choices=("instructional", "draft_persona"))
    p.add_argument("--profile", default="strict", choices=("strict", "extended"))
    p.add_argument("--no-connections", action="store_true", help="omit the door-connections request")
    p.add_argument("--labeling", choices=("sparse", "dense"), help="relabel the map before rendering")
    p.add_argument("--px-per-unit", type=int, default=16)


def _add_backend_args(p, required: bool):
    p.add_argument("--backend", required=required,
                   choices=("http-chat", "mock-oracle", "mock-scripted", "mock-noisy",
                            "http_chat", "mock_oracle", "mock_scripted", "mock_noisy"))
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--credential-env", help="environment variable holding the API key")
    p.add_argument("--adapter", default="content_parts", choices=("content_parts", "image_blocks"))
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--p-error", type=float, default=0.0, help="mock-noisy corruption probability")
    p.add_argument("--script", help="response file for mock-scripted")
    p.add_argument("--cache-dir", help="transcript cache directory")
    p.add_argument("--replay", action="store_true", help="answer from the cache only; never send a request")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a subcommand's default never overwrites a value given before it
    common.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS,
                        help="human-readable output instead of JSON lines")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="seed for sampling and mock backends")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log to stderr")

    parser = argparse.ArgumentParser(prog="floorplan-nav", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(path, help_text):
        if len(path) == 1:
            return sub.add_parser(path[0], help=help_text, parents=[common])
        group = groups[path[0]]
        return group.add_parser(path[1], help=help_text, parents=[common])

    groups = {}
    for name, text in (("map", "map file checks"), ("transform", "map transforms"),
                       ("bench", "benchmark runs and reports"), ("stats", "statistical tests")):
        g = sub.add_parser(name, help=text)
        groups[name] = g.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    p = add(("map", "validate"), "check a map file against the map invariants")
    p.add_argument("--map", required=True)
    p.add_argument("--lenient", action="store_true", help="warn about unknown keys instead of failing")

    p = add(("graph",), "print the room/door connectivity graph")
    p.add_argument("--map", required=True)

    p = add(("oracle",), "print the ground-truth shortest plan")
    _add_task_args(p)
    p.add_argument("--format", default="json", choices=("json", "lines"))

    p = add(("classify",), "hop distance and easy/hard class of a task")
    _add_task_args(p)

    p = add(("transform", "double"), "join a map to a copy of itself through one new door")
    p.add_argument("--map", required=True)
    p.add_argument("--bridge-room", required=True, help="room on the east edge that receives the new door")
    p.add_argument("--width", type=float)
    p.add_argument("--center", type=float, help="door centre along the east edge")
    p.add_argument("--translate", action="store_true", help="translate the copy instead of mirroring it")
    p.add_argument("--out", required=True)

    p = add(("transform", "relabel"), "replace labels with the sparse or dense scheme")
    p.add_argument("--map", required=True)
    p.add_argument("--scheme", required=True, choices=("sparse", "dense"))
    p.add_argument("--out", required=True)

    p = add(("rasterize",), "write the occupancy grid as a PGM image")
    p.add_argument("--map", required=True)
    p.add_argument("--resolution", type=float, default=1.0, help="map units per cell")
    p.add_argument("--out", required=True)

    p = add(("render",), "write the labeled floor-plan PNG")
    p.add_argument("--map", required=True)
    p.add_argument("--labeling", choices=("sparse", "dense"))
    p.add_argument("--px-per-unit", type=int, default=16)
    p.add_argument("--out", required=True)

    p = add(("prompt",), "build the text and image prompt for a task")
    _add_task_args(p)
    _add_prompt_args(p)
    p.add_argument("--image-out", help="also write the prompt image here")

    p = add(("query",), "ask a backend for a plan and print the transcript")
    _add_task_args(p)
    _add_prompt_args(p)
    _add_backend_args(p, required=True)
    p.add_argument("--trial", type=int, default=0, help="trial index (part of the cache key and mock seed)")
    p.add_argument("--raw-mock", action="store_true", help="print only the mock-noisy response text")

    p = add(("validate-plan",), "judge a plan file against the connectivity graph")
    _add_task_args(p)
    p.add_argument("--plan", required=True, help="plan or raw response file, - for stdin")
    p.add_argument("--format", default="auto", choices=("auto", "json", "lines"))
    p.add_argument("--profile", default="strict", choices=("strict", "extended"))
    p.add_argument("--open", help="comma-separated doors that start open")
    p.add_argument("--pedantic", action="store_true", help="require ApproachDoor before OpenDoor/GoThrough")
    p.add_argument("--grade-connections", action="store_true", help="score the response's door list too")

    p = add(("simulate",), "execute a plan on the occupancy grid with A*")
    _add_task_args(p)
    p.add_argument("--plan", required=True, help="plan or raw response file, - for stdin")
    p.add_argument("--profile", default="strict", choices=("strict", "extended"))
    p.add_argument("--resolution", type=float, default=1.0)
    p.add_argument("--open", help="comma-separated doors that start open")
    p.add_argument("--pedantic", action="store_true")

    p = add(("bench", "run"), "run trials and append them to a records file")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--maps", nargs="+", help="map files when no config is given")
    p.add_argument("--records", required=True, help="JSON-lines records file (resumed if present)")
    p.add_argument("--tasks", type=int, help="tasks per map")
    p.add_argument("--trials", type=int, help="trials per task")
    p.add_argument("--arm-p-error", nargs="+", metavar="ARM=P", help="per-arm mock error rate")
    _add_backend_args(p, required=False)

    p = add(("bench", "report"), "hypothesis tests over a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--out", help="directory for report.json, CSV tables and SVG charts")
    p.add_argument("--alpha", type=float, default=report.DEFAULT_ALPHA)

    p = add(("stats", "ttest"), "Welch t-test on two CSV files of 0/1 outcomes")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("pretty", False), ("seed", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    path = (args.command,) + ((args.subcommand,) if getattr(args, "subcommand", None) else ())
    handler, _ = DISPATCH[path]
    if getattr(args, "backend", None) and args.seed is None:
        args.seed = 0
    try:
        handler(args)
    except DomainFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DOMAIN_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
