"""Benchmark protocol: sample tasks, run trials against a backend, tally success.

An experiment crosses maps with *arms*. An arm fixes the map variant
(original or doubled, sparse or dense labels) and the task difficulty. Each
map/arm pair gets ``tasks_per_map`` sampled tasks, each asked
``trials_per_task`` times. Every trial becomes one JSON line in the records
file, written as soon as it finishes, so a killed run picks up where it
stopped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .backends import BackendConfig, MockContext, QueryJob, TranscriptCache, query_many
from .floorplan import FloorPlan, dumps_plan, load_plan, natural_key
from .graph import ConnectivityGraph, NavTask, all_pairs_distances, build_connectivity
from .prompts import PromptSpec, build_prompt
from .render import render_png
from .transforms import BridgeSpec, apply_labeling, double_map, east_edge_rooms
from .validate import evaluate_response

log = logging.getLogger(__name__)

DIFFICULTY_HOPS = {"easy": 1, "hard": 3}
INFRA_FAILURE = "infrastructure_failure"


class ExperimentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArmSpec:
    """One experimental condition. ``p_error`` overrides the mock error rate."""

    name: str
    double: bool = False
    labeling: str = "dense"
    difficulty: str = "hard"
    p_error: float | None = None

    def __post_init__(self):
        if self.labeling not in ("sparse", "dense"):
            raise ExperimentConfigError(f"arm {self.name!r}: unknown labeling {self.labeling!r}")
        if self.difficulty not in ("easy", "hard", "any"):
            raise ExperimentConfigError(f"arm {self.name!r}: unknown difficulty {self.difficulty!r}")


def protocol_arms(p_errors: Mapping[str, float] | None = None) -> tuple[ArmSpec, ...]:
    """The four conditions behind the size, difficulty and labeling comparisons."""
    p = dict(p_errors or {})
    return (
        ArmSpec("orig-dense-hard", False, "dense", "hard", p.get("orig-dense-hard")),
        ArmSpec("doubled-dense-hard", True, "dense", "hard", p.get("doubled-dense-hard")),
        ArmSpec("doubled-dense-easy", True, "dense", "easy", p.get("doubled-dense-easy")),
        ArmSpec("orig-sparse-hard", False, "sparse", "hard", p.get("orig-sparse-hard")),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    maps: tuple[str, ...] = ("builtin:map1",)
    arms: tuple[ArmSpec, ...] = field(default_factory=protocol_arms)
    tasks_per_map: int = 5
    trials_per_task: int = 10
    backend: BackendConfig = field(default_factory=BackendConfig)
    profile: str = "strict"
    template_id: str = "instructional"
    ask_connections: bool = True
    seed: int = 0
    bridge_room: str | None = None  # None: first room on the east edge
    pedantic: bool = False
    px_per_unit: int = 16

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "arms", tuple(self.arms))
        if self.tasks_per_map < 1 or self.trials_per_task < 1:
            raise ExperimentConfigError("tasks_per_map and trials_per_task must be >= 1")
        if not self.maps or not self.arms:
            raise ExperimentConfigError("need at least one map and one arm")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ExperimentConfigError(f"duplicate arm names in {names}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["maps"] = list(self.maps)
        d["arms"] = [asdict(a) for a in self.arms]
        return d

    @classmethod
    def from_dict(cls, data: Mapping) -> ExperimentConfig:
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ExperimentConfigError(f"unknown config fields {sorted(unknown)}")
        if "maps" in data:
            data["maps"] = tuple(data["maps"])
        if "arms" in data:
            data["arms"] = tuple(ArmSpec(**a) for a in data["arms"])
        if "backend" in data:
            data["backend"] = BackendConfig.from_dict(data["backend"])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    map_id: str
    variant_id: str
    arm: str
    doubled: bool
    labeling: str
    difficulty: str
    start_room: str
    goal_room: str
    trial_index: int
    transcript_ref: str
    outcome: str
    correct: bool
    plan_length: int | None
    minimal: bool | None
    failing_index: int | None = None
    error_kind: str | None = None

    def __post_init__(self):
        if self.correct != (self.outcome == "correct"):
            raise ValueError("correct must hold exactly when the outcome is 'correct'")

    @property
    def key(self) -> tuple:
        return (self.map_id, self.arm, self.start_room, self.goal_room, self.trial_index)

    @property
    def infrastructure_failure(self) -> bool:
        return self.outcome == INFRA_FAILURE

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping) -> TrialRecord:
        return cls(**data)


# ----------------------------------------------------------------- sampling

def qualifying_pairs(graph: ConnectivityGraph, difficulty: str) -> list[tuple[str, str]]:
    dist = all_pairs_distances(graph)
    pairs = []
    for (a, b), d in dist.items():
        if a == b:
            continue
        if difficulty == "any" or d == DIFFICULTY_HOPS[difficulty]:
            pairs.append((a, b))
    return sorted(pairs, key=lambda p: (natural_key(p[0]), natural_key(p[1])))


def sample_tasks(graph: ConnectivityGraph, n: int, difficulty: str, seed) -> list[NavTask]:
    """``n`` distinct ordered (start, goal) pairs of the given difficulty.

    ``difficulty`` is easy (1 door), hard (3 doors) or any (reachable, distinct).
    """
    if len(graph.nodes) < 2:
        raise ValueError("need at least two rooms to sample tasks")
    if difficulty not in ("easy", "hard", "any"):
        raise ValueError(f"unknown difficulty {difficulty!r}")
    pairs = qualifying_pairs(graph, difficulty)
    if len(pairs) < n:
        raise ValueError(f"map {graph.map_id!r} has only {len(pairs)} {difficulty} pairs, {n} requested")
    chosen = random.Random(f"tasks|{seed}").sample(pairs, n)
    if difficulty != "any":
        return [NavTask(graph.map_id, a, b, difficulty) for a, b in chosen]
    # NavTask has no "other" class; anything beyond one door counts as hard
    dist = all_pairs_distances(graph)
    return [NavTask(graph.map_id, a, b, "easy" if dist[(a, b)] == 1 else "hard") for a, b in chosen]


# -------------------------------------------------------------------- running

def _derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@lru_cache(maxsize=64)
def _render_cached(map_json: str, px_per_unit: int) -> bytes:
    from .floorplan import loads_plan

    return render_png(loads_plan(map_json), px_per_unit)


@dataclass(frozen=True)
class MapVariant:
    base_id: str
    plan: FloorPlan
    graph: ConnectivityGraph
    image: bytes


def build_variant(base: FloorPlan, arm: ArmSpec, bridge_room: str | None, px_per_unit: int) -> MapVariant:
    plan = base
    if arm.double:
        room = bridge_room or (east_edge_rooms(base) or [None])[0]
        if room is None:
            raise ExperimentConfigError(f"map {base.map_id!r} has no room on its east edge to bridge")
        plan = double_map(base, BridgeSpec(room))
    plan = apply_labeling(plan, arm.labeling)
    return MapVariant(base.map_id, plan, build_connectivity(plan), _render_cached(dumps_plan(plan), px_per_unit))


def arm_backend(config: ExperimentConfig, arm: ArmSpec) -> BackendConfig:
    """Backend for one arm: mocks get an arm-specific seed and error rate.

    Distinct seeds keep two arms with equal error rates from producing
    identical outcome sequences.
    """
    b = config.backend
    if not b.is_mock:
        return b
    changes = {"seed": _derive_seed(b.seed, config.seed, arm.name)}
    if arm.p_error is not None:
        changes["p_error"] = arm.p_error
    return replace(b, **changes)


def _read_records(path: Path) -> list[TrialRecord]:
    """Complete lines only; a torn last line from a crash is cut off."""
    if not path.exists():
        return []
    raw = path.read_bytes()
    cut = raw.rfind(b"\n") + 1
    if cut < len(raw):
        log.warning("dropping incomplete trailing record in %s", path)
        with open(path, "r+b") as fh:
            fh.truncate(cut)
    return [TrialRecord.from_dict(json.loads(line)) for line in raw[:cut].decode("utf-8").splitlines() if line.strip()]


def load_records(path: str | Path) -> list[TrialRecord]:
    return _read_records(Path(path))


def plan_trials(config: ExperimentConfig):
    """Yield (arm, variant, task, trial_index) in canonical order."""
    for map_ref in config.maps:
        base = load_plan(map_ref)
        variants: dict[tuple, MapVariant] = {}
        for arm in config.arms:
            vkey = (arm.double, arm.labeling)
            if vkey not in variants:
                variants[vkey] = build_variant(base, arm, config.bridge_room, config.px_per_unit)
            variant = variants[vkey]
            # labeling does not change the graph, so arms that differ only in labels share tasks
            tasks = sample_tasks(variant.graph, config.tasks_per_map, arm.difficulty,
                                 _derive_seed(config.seed, base.map_id, arm.double, arm.difficulty))
            for task in tasks:
                for trial in range(config.trials_per_task):
                    yield arm, variant, task, trial


def run_experiment(config: ExperimentConfig, records_path: str | Path | None = None, *,
                   cache: TranscriptCache | None = None, replay: bool = False, transport=None,
                   env: Mapping[str, str] | None = None) -> list[TrialRecord]:
    """Run every trial not already in ``records_path`` and return all records in order."""
    path = Path(records_path) if records_path else None
    done = {r.key: r for r in _read_records(path)} if path else {}
    pending = []
    order = []
    for arm, variant, task, trial in plan_trials(config):
        key = (variant.base_id, arm.name, task.start_room, task.goal_room, trial)
        order.append(key)
        if key not in done:
            pending.append((arm, variant, task, trial))
    log.info("%s: %d trials, %d already recorded", config.name, len(order), len(order) - len(pending))

    out = open(path, "a", encoding="utf-8") if path else None
    try:
        by_arm: dict[str, list] = {}
        for item in pending:
            by_arm.setdefault(item[0].name, []).append(item)
        for arm in config.arms:
            items = by_arm.get(arm.name, [])
            if not items:
                continue
            backend = arm_backend(config, arm)
            jobs = []
            for _, variant, task, trial in items:
                prompt = build_prompt(PromptSpec(
                    variant.graph.display_name(task.start_room), variant.graph.display_name(task.goal_room),
                    config.template_id, config.profile, config.ask_connections, variant.image,
                ))
                jobs.append(QueryJob(prompt, trial, MockContext(variant.graph, task, config.profile)))
            results = query_many(backend, jobs, cache=cache, replay=replay, transport=transport, env=env)
            for (_, variant, task, trial), transcript in zip(items, results):
                rec = _judge(config, arm, variant, task, trial, transcript)
                done[rec.key] = rec
                if out:
                    out.write(rec.to_json() + "\n")
                    out.flush()
    finally:
        if out:
            out.close()
    return [done[k] for k in order]


def _judge(config, arm, variant, task, trial, transcript) -> TrialRecord:
    common = dict(
        experiment=config.name, map_id=variant.base_id, variant_id=variant.plan.map_id, arm=arm.name,
        doubled=arm.double, labeling=arm.labeling, difficulty=task.difficulty, start_room=task.start_room,
        goal_room=task.goal_room, trial_index=trial, transcript_ref=transcript.key,
    )
    if not transcript.ok:
        return TrialRecord(**common, outcome=INFRA_FAILURE, correct=False, plan_length=None, minimal=None,
                           error_kind=transcript.error_kind)
    plan, verdict = evaluate_response(variant.graph, task, transcript.response_text or "", config.profile,
                                      pedantic=config.pedantic)
    return TrialRecord(**common, outcome=verdict.outcome, correct=verdict.correct,
                       plan_length=len(plan) if plan is not None else None, minimal=verdict.minimal,
                       failing_index=verdict.failing_index)


# -------------------------------------------------------------- aggregation

@dataclass(frozen=True)
class RateRow:
    group: tuple
    successes: int
    trials: int
    infrastructure_failures: int

    @property
    def rate(self) -> float | None:
        return self.successes / self.trials if self.trials else None

    def to_dict(self, keys: Sequence[str]) -> dict:
        d = dict(zip(keys, self.group))
        d.update(successes=self.successes, trials=self.trials,
                 infrastructure_failures=self.infrastructure_failures, rate=self.rate)
        return d


def success_rate(records: Iterable[TrialRecord], group_by: Sequence[str] = ("arm",)) -> list[RateRow]:
    """Correct / (total - infrastructure failures) per group, groups in first-seen order.

    A group made only of infrastructure failures has rate None.
    """
    groups: dict[tuple, list[int]] = {}
    for r in records:
        key = tuple(getattr(r, k) for k in group_by)
        g = groups.setdefault(key, [0, 0, 0])
        if r.infrastructure_failure:
            g[2] += 1
        else:
            g[1] += 1
            g[0] += int(r.correct)
    return [RateRow(k, s, n, f) for k, (s, n, f) in groups.items()]
