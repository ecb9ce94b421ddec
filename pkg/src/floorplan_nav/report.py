"""Hypothesis report: success rates and two-sample tests for three arm pairs.

Each comparison is evaluated per map and pooled over maps. Two pooling modes
are emitted for the t-test: ``trial`` treats every trial as one 0/1
observation, ``task`` averages the trials of each task first. The
significance flag uses the pooled trial-level Welch test, falling back to
the two-proportion z-test when both groups have zero variance.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

from .bench import TrialRecord
from .floorplan import natural_key
from .stats import DegenerateInputError, two_proportion_z_test, welch_t_test

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class Comparison:
    id: str
    name: str
    arm_a: str
    arm_b: str
    question: str


COMPARISONS = (
    Comparison("H1", "map_size", "orig-dense-hard", "doubled-dense-hard",
               "Do hard tasks succeed less often on doubled maps?"),
    Comparison("H2", "task_difficulty", "doubled-dense-easy", "doubled-dense-hard",
               "Do hard tasks succeed less often than easy ones on doubled maps?"),
    Comparison("H3", "label_density", "orig-dense-hard", "orig-sparse-hard",
               "Do sparse labels lower success on hard tasks?"),
)


def _outcomes(records: Sequence[TrialRecord]) -> list[int]:
    return [int(r.correct) for r in records if not r.infrastructure_failure]


def _task_means(records: Sequence[TrialRecord]) -> list[float]:
    by_task: dict[tuple, list[int]] = {}
    for r in records:
        if not r.infrastructure_failure:
            by_task.setdefault((r.map_id, r.start_room, r.goal_room), []).append(int(r.correct))
    return [sum(v) / len(v) for _, v in sorted(by_task.items())]


def _group_summary(records: Sequence[TrialRecord]) -> dict:
    xs = _outcomes(records)
    return {
        "successes": sum(xs),
        "trials": len(xs),
        "infrastructure_failures": sum(r.infrastructure_failure for r in records),
        "rate": sum(xs) / len(xs) if xs else None,
    }


def _welch(a, b) -> dict:
    try:
        return welch_t_test(a, b).to_dict() | {"degenerate": False}
    except DegenerateInputError as exc:
        return {"degenerate": True, "reason": str(exc)}


def _compare(a_recs: Sequence[TrialRecord], b_recs: Sequence[TrialRecord], alpha: float) -> dict:
    ga, gb = _group_summary(a_recs), _group_summary(b_recs)
    out = {"a": ga, "b": gb}
    if not ga["trials"] or not gb["trials"]:
        out.update(welch_trial=None, welch_task=None, z_test=None, significant=None,
                   note="a group has no non-infrastructure trials")
        return out
    out["welch_trial"] = _welch(_outcomes(a_recs), _outcomes(b_recs))
    out["welch_task"] = _welch(_task_means(a_recs), _task_means(b_recs))
    z = two_proportion_z_test(ga["successes"], ga["trials"], gb["successes"], gb["trials"])
    out["z_test"] = z.to_dict()
    w = out["welch_trial"]
    p = z.p_two_sided if w["degenerate"] else w["p_two_sided"]
    out["significant"] = p < alpha
    return out


def hypothesis_report(records: Iterable[TrialRecord], alpha: float = DEFAULT_ALPHA,
                      comparisons: Sequence[Comparison] = COMPARISONS) -> dict:
    records = list(records)
    by_arm: dict[str, list[TrialRecord]] = {}
    for r in records:
        by_arm.setdefault(r.arm, []).append(r)
    maps = sorted({r.map_id for r in records}, key=natural_key)

    rates = []
    for arm in sorted(by_arm):
        for m in maps:
            recs = [r for r in by_arm[arm] if r.map_id == m]
            if recs:
                rates.append({"arm": arm, "scope": m} | _group_summary(recs))
        rates.append({"arm": arm, "scope": "pooled"} | _group_summary(by_arm[arm]))

    hyps = []
    for c in comparisons:
        entry = {"id": c.id, "name": c.name, "question": c.question, "arm_a": c.arm_a, "arm_b": c.arm_b}
        missing = [arm for arm in (c.arm_a, c.arm_b) if not _outcomes(by_arm.get(arm, []))]
        if missing:
            entry.update(available=False, missing_arms=missing, scopes=[], significant=None)
            hyps.append(entry)
            continue
        scopes = []
        for m in maps:
            a = [r for r in by_arm[c.arm_a] if r.map_id == m]
            b = [r for r in by_arm[c.arm_b] if r.map_id == m]
            if a and b:
                scopes.append({"scope": m} | _compare(a, b, alpha))
        pooled = {"scope": "pooled"} | _compare(by_arm[c.arm_a], by_arm[c.arm_b], alpha)
        scopes.append(pooled)
        entry.update(available=True, missing_arms=[], scopes=scopes, significant=pooled["significant"])
        hyps.append(entry)
    return {"alpha": alpha, "maps": maps, "trials": len(records), "rates": rates, "hypotheses": hyps}


# ------------------------------------------------------------------ output

def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rates_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["arm", "scope", "successes", "trials", "infrastructure_failures", "rate"]
    w.writerow(cols)
    for row in report["rates"]:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def tests_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["hypothesis", "name", "scope", "arm_a", "rate_a", "n_a", "arm_b", "rate_b", "n_b",
                "t", "df", "p_welch", "t_task", "p_welch_task", "z", "p_z", "significant", "available"])
    for h in report["hypotheses"]:
        if not h["available"]:
            w.writerow([h["id"], h["name"], "pooled", h["arm_a"], "", "", h["arm_b"], "", "",
                        "", "", "", "", "", "", "", "", "false"])
            continue
        for s in h["scopes"]:
            wt, wk, z = s.get("welch_trial") or {}, s.get("welch_task") or {}, s.get("z_test") or {}
            w.writerow([h["id"], h["name"], s["scope"], h["arm_a"], _fmt(s["a"]["rate"]), s["a"]["trials"],
                        h["arm_b"], _fmt(s["b"]["rate"]), s["b"]["trials"], _fmt(wt.get("t")),
                        _fmt(wt.get("degrees_of_freedom")), _fmt(wt.get("p_two_sided")), _fmt(wk.get("t")),
                        _fmt(wk.get("p_two_sided")), _fmt(z.get("z")), _fmt(z.get("p_two_sided")),
                        _fmt(s["significant"]), "true"])
    return buf.getvalue()


_SVG_COLORS = ("#4a7ab5", "#d98c3a")


def hypothesis_svg(h: dict) -> str:
    """Grouped bar chart of the two arms' success rates, one group per scope."""
    title = f"{h['id']} {h['name']}: {h['arm_a']} vs {h['arm_b']}"
    plot_h, top, left = 200, 40, 50
    scopes = h["scopes"] if h["available"] else []
    group_w = 90
    width = left + 20 + max(1, len(scopes)) * group_w + 170
    height = top + plot_h + 50
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-size="13">{escape(title)}</text>',
    ]
    base = top + plot_h
    for tick in range(5):
        v = tick / 4
        y = base - v * plot_h
        out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + len(scopes or [0]) * group_w + 10}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    if not h["available"]:
        out.append(f'<text x="{left + 10}" y="{top + plot_h / 2:.1f}">unavailable: no trials for '
                   f'{escape(", ".join(h["missing_arms"]))}</text>')
    for i, s in enumerate(scopes):
        x0 = left + 10 + i * group_w
        for j, side in enumerate(("a", "b")):
            rate = s[side]["rate"]
            bh = (rate or 0.0) * plot_h
            x = x0 + j * 35
            out.append(f'<rect x="{x}" y="{base - bh:.1f}" width="30" height="{bh:.1f}" fill="{_SVG_COLORS[j]}"/>')
            label = "n/a" if rate is None else f"{rate:.2f}"
            out.append(f'<text x="{x + 15}" y="{base - bh - 4:.1f}" text-anchor="middle">{label}</text>')
        mark = " *" if s["significant"] else ""
        out.append(f'<text x="{x0 + 32}" y="{base + 16}" text-anchor="middle">{escape(s["scope"])}{mark}</text>')
    lx = left + 20 + max(1, len(scopes)) * group_w
    for j, arm in enumerate((h["arm_a"], h["arm_b"])):
        out.append(f'<rect x="{lx}" y="{top + j * 18}" width="12" height="12" fill="{_SVG_COLORS[j]}"/>')
        out.append(f'<text x="{lx + 18}" y="{top + j * 18 + 10}">{escape(arm)}</text>')
    out.append(f'<text x="{lx}" y="{top + 50}">* p &lt; alpha (Welch, per trial)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(report: dict, out_dir: str | Path) -> list[Path]:
    """report.json, rates.csv, tests.csv and one SVG per hypothesis."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "report.json": report_json(report),
        "rates.csv": rates_csv(report),
        "tests.csv": tests_csv(report),
    }
    for h in report["hypotheses"]:
        files[f"{h['id']}_{h['name']}.svg"] = hypothesis_svg(h)
    written = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)
    return written
