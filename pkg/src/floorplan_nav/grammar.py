"""Navigation plan grammar: ``ApproachDoor(x)``, ``OpenDoor(x)``, ``GoThrough(x)``
and, in the extended profile, ``GoTo(room)``.

Two wire forms are understood. The JSON form is an object
``{"plan": [{"action": "OpenDoor", "target": "D4"}, ...]}`` (the list may also
hold ``"Verb(Target)"`` strings, and a bare array of such strings is accepted).
The line form has one ``Verb(Target)`` per non-empty line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

DOOR_VERBS = ("ApproachDoor", "OpenDoor", "GoThrough")
ROOM_VERBS = ("GoTo",)
PROFILES = ("strict", "extended")

_ACTION_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\(\s*([^()\n]*?)\s*\)\s*[.,;]?\s*$")
_LIST_MARKER = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s+")
_DOOR_WORD = re.compile(r"^door\s+", re.IGNORECASE)


def verbs_for(profile: str) -> tuple[str, ...]:
    if profile not in PROFILES:
        raise ValueError(f"unknown grammar profile {profile!r}")
    return DOOR_VERBS + (ROOM_VERBS if profile == "extended" else ())


@dataclass(frozen=True)
class Action:
    verb: str
    target: str

    @property
    def is_door_action(self) -> bool:
        return self.verb in DOOR_VERBS

    def __str__(self) -> str:
        return f"{self.verb}({self.target})"


@dataclass(frozen=True)
class Plan:
    actions: tuple[Action, ...] = ()
    profile: str = "strict"

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if self.profile not in PROFILES:
            raise ValueError(f"unknown grammar profile {self.profile!r}")
        if self.profile == "strict" and any(a.verb in ROOM_VERBS for a in self.actions):
            raise ValueError("GoTo actions require the extended profile")

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self):
        return iter(self.actions)

    def lines(self) -> list[str]:
        return [str(a) for a in self.actions]


class PlanParseError(ValueError):
    """A VLM response could not be turned into a Plan.

    ``outcome`` is the verdict class the failure maps to: ``malformed`` for
    syntax problems, ``unknown_action`` when the response is well formed but
    uses a verb the prompt never defined.
    """

    def __init__(self, detail: str, outcome: str = "malformed", offset: int | None = None,
                 line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{detail} ({', '.join(where)})" if where else detail)
        self.detail = detail
        self.outcome = outcome
        self.offset = offset
        self.line = line


def _clean_target(raw: str) -> str:
    target = " ".join(str(raw).split())
    return _DOOR_WORD.sub("", target)


def make_action(verb: str, target: str, profile: str, *, line: int | None = None,
                offset: int | None = None) -> Action:
    """Build an Action, rejecting verbs outside the profile."""
    allowed = verbs_for(profile)
    if verb in ROOM_VERBS and profile == "strict":
        raise PlanParseError(f"{verb} is only defined in the extended profile", line=line, offset=offset)
    if verb not in allowed:
        raise PlanParseError(f"undefined action {verb!r}", outcome="unknown_action", line=line, offset=offset)
    target = _clean_target(target)
    if not target:
        raise PlanParseError(f"{verb} has an empty target", line=line, offset=offset)
    if any(c in target for c in "()\n"):
        raise PlanParseError(f"invalid target {target!r}", line=line, offset=offset)
    return Action(verb, target)


def _as_text(data: str | bytes) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise PlanParseError("response is not valid UTF-8", offset=exc.start) from None
    if not isinstance(data, str):
        raise PlanParseError(f"expected text, got {type(data).__name__}")
    return data


def parse_plan_lines(text: str | bytes, profile: str = "strict") -> Plan:
    """Parse one ``Verb(Target)`` per non-empty line.

    >>> parse_plan_lines("OpenDoor( D4 )").actions
    (Action(verb='OpenDoor', target='D4'),)
    """
    text = _as_text(text)
    actions = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _ACTION_RE.match(_LIST_MARKER.sub("", line, count=1))
        if not m:
            raise PlanParseError(f"cannot parse {line.strip()[:60]!r} as Verb(Target)", line=lineno)
        actions.append(make_action(m.group(1), m.group(2), profile, line=lineno))
    return Plan(tuple(actions), profile)


def _action_from_json(item, profile: str, index: int) -> Action:
    if isinstance(item, str):
        m = _ACTION_RE.match(item)
        if not m:
            raise PlanParseError(f"plan entry {index} {item[:60]!r} is not Verb(Target)")
        return make_action(m.group(1), m.group(2), profile)
    if isinstance(item, dict):
        verb, target = item.get("action"), item.get("target")
        if not isinstance(verb, str) or not isinstance(target, (str, int)) or isinstance(target, bool):
            raise PlanParseError(f"plan entry {index} needs string 'action' and 'target' fields")
        return make_action(verb.strip(), str(target), profile)
    raise PlanParseError(f"plan entry {index} has unsupported type {type(item).__name__}")


_OPENER_RUN = re.compile(r"[\s\[{]*")


def _is_action_string_list(value) -> bool:
    return isinstance(value, list) and all(isinstance(v, str) and _ACTION_RE.match(v) for v in value)


def extract_json_payload(text: str):
    """Find the plan-bearing JSON value inside free text.

    Returns the first decodable object with a ``plan`` key; failing that, the
    first array made only of ``Verb(Target)`` strings. Raises PlanParseError
    with the offset of the best decode failure if neither exists.
    """
    decoder = json.JSONDecoder()
    stripped = text.strip()
    try:
        whole = json.loads(stripped)
    except (json.JSONDecodeError, RecursionError):
        whole = None
    else:
        if (isinstance(whole, dict) and "plan" in whole) or _is_action_string_list(whole):
            return whole

    fallback = None
    first_error: int | None = None
    skip_to = 0
    for m in re.finditer(r"[\[{]", text):
        start = m.start()
        if start < skip_to:
            continue
        try:
            value, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError as exc:
            if first_error is None:
                first_error = exc.pos
            continue
        except RecursionError:
            if first_error is None:
                first_error = start
            # later starts inside this run of openers nest at least as deep
            skip_to = _OPENER_RUN.match(text, start).end()
            continue
        if isinstance(value, dict) and "plan" in value:
            return value
        if fallback is None and _is_action_string_list(value):
            fallback = value
    if fallback is not None:
        return fallback
    raise PlanParseError("no JSON value with a 'plan' key found", offset=first_error if first_error is not None else 0)


def parse_plan_json(text: str | bytes, profile: str = "strict") -> Plan:
    """Parse the JSON plan format, tolerating prose around the JSON value."""
    text = _as_text(text)
    payload = extract_json_payload(text)
    items = payload["plan"] if isinstance(payload, dict) else payload
    if not isinstance(items, list):
        raise PlanParseError("'plan' must be a list")
    return Plan(tuple(_action_from_json(item, profile, i) for i, item in enumerate(items)), profile)


def parse_plan(text: str | bytes, profile: str = "strict") -> Plan:
    """Try the JSON form first, then the line form.

    The error from the JSON attempt is re-raised when both fail, unless the
    line parser got far enough to identify an undefined verb.
    """
    try:
        return parse_plan_json(text, profile)
    except PlanParseError as json_err:
        if json_err.outcome == "unknown_action":
            raise
        try:
            return parse_plan_lines(text, profile)
        except PlanParseError as line_err:
            if line_err.outcome == "unknown_action":
                raise
            raise json_err from None


def serialize_plan(plan: Plan, fmt: str = "json") -> str:
    if fmt == "json":
        body = [{"action": a.verb, "target": a.target} for a in plan.actions]
        return json.dumps({"plan": body}, separators=(",", ":"), ensure_ascii=False)
    if fmt == "lines":
        return "\n".join(plan.lines())
    raise ValueError(f"unknown plan format {fmt!r}")


# ------------------------------------------------------- connectivity claims

@dataclass(frozen=True)
class ConnectivityClaim:
    """Door/room connections a VLM said it saw, right or wrong."""

    claimed_edges: tuple[tuple[str, str, str], ...] = field(default_factory=tuple)


_CLAIM_PATTERNS = (
    # D8: Terrasse Couverte <-> Hall   /   D8 - A - B
    re.compile(r"^\s*(?:door\s+)?(?P<door>[A-Za-z]+\d+['\w]*)\s*[:=\-]\s*(?P<a>.+?)\s*(?:<->|<=>|--|->|↔|–|-|/|,|\band\b)\s*(?P<b>.+?)\s*$", re.IGNORECASE),
    # Door D8 connects A and B / D8 connects A to B
    re.compile(r"^\s*(?:door\s+)?(?P<door>[A-Za-z]+\d+['\w]*)\s+(?:connects|links|joins)\s+(?P<a>.+?)\s+(?:and|to|with)\s+(?P<b>.+?)\s*[.;]?\s*$", re.IGNORECASE),
)


def _claims_from_json(payload) -> list[tuple[str, str, str]]:
    edges = []
    for item in payload:
        if isinstance(item, dict):
            door = item.get("door") or item.get("id")
            rooms = item.get("rooms") or item.get("connects")
            if isinstance(door, str) and isinstance(rooms, list) and len(rooms) == 2:
                edges.append((_clean_target(door), str(rooms[0]).strip(), str(rooms[1]).strip()))
    return edges


def parse_connectivity_claim(text: str | bytes) -> ConnectivityClaim:
    """Pull claimed door connections out of a response.

    Understands a JSON ``"connections"`` list of ``{"door", "rooms": [a, b]}``
    objects anywhere in the text, otherwise prose lines such as
    ``D8: Terrasse Couverte <-> Hall`` or ``Door D8 connects Hall and Corridor``.
    """
    try:
        text = _as_text(text)
    except PlanParseError:
        return ConnectivityClaim()
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", text):
        try:
            value, _ = decoder.raw_decode(text, m.start())
        except (json.JSONDecodeError, RecursionError):
            continue
        if isinstance(value, dict) and isinstance(value.get("connections"), list):
            return ConnectivityClaim(tuple(_claims_from_json(value["connections"])))
    edges = []
    for line in text.splitlines():
        line = _LIST_MARKER.sub("", line, count=1)
        for pat in _CLAIM_PATTERNS:
            m = pat.match(line)
            if m:
                edges.append((_clean_target(m.group("door")), m.group("a").strip(" .;\"'"), m.group("b").strip(" .;\"'")))
                break
    return ConnectivityClaim(tuple(edges))
