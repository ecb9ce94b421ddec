import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from floorplan_nav.grammar import (
    Action,
    Plan,
    PlanParseError,
    parse_connectivity_claim,
    parse_plan,
    parse_plan_json,
    parse_plan_lines,
    serialize_plan,
)

GOTO_RESPONSE = """ApproachDoor(D1)
OpenDoor(D1)
GoThrough(D1)
ApproachDoor(D3)
OpenDoor(D3)
GoThrough(D3)
GoTo(308)"""


def test_single_action_json():
    plan = parse_plan_json('{"plan":[{"action":"ApproachDoor","target":"D8"}]}')
    assert plan.actions == (Action("ApproachDoor", "D8"),)


def test_empty_plan():
    assert parse_plan_json('{"plan":[]}').actions == ()


def test_bare_array_of_action_strings():
    plan = parse_plan_json('["ApproachDoor(D8)", "OpenDoor(D8)"]')
    assert plan.lines() == ["ApproachDoor(D8)", "OpenDoor(D8)"]


def test_prose_around_json():
    text = 'Sure! Here it is:\n```json\n{"plan":[{"action":"OpenDoor","target":"D4"}]}\n```\nGood luck.'
    assert parse_plan_json(text).lines() == ["OpenDoor(D4)"]


def test_first_object_with_plan_key_wins():
    text = '{"connections": []} then {"plan":[{"action":"OpenDoor","target":"D1"}]} and {"plan":[]}'
    assert parse_plan_json(text).lines() == ["OpenDoor(D1)"]


def test_malformed_json_reports_offset():
    with pytest.raises(PlanParseError) as exc:
        parse_plan_json('noise {"plan": [ {"action": "OpenDoor", ')
    assert exc.value.outcome == "malformed"
    assert exc.value.offset is not None


def test_goto_rejected_under_strict_json():
    with pytest.raises(PlanParseError) as exc:
        parse_plan_json('{"plan":[{"action":"GoTo","target":"308"}]}')
    assert exc.value.outcome == "malformed"
    assert "extended" in str(exc.value)


def test_goto_response_under_extended_profile():
    plan = parse_plan_lines(GOTO_RESPONSE, "extended")
    assert len(plan) == 7
    assert plan.actions[-1] == Action("GoTo", "308")
    with pytest.raises(PlanParseError) as exc:
        parse_plan_lines(GOTO_RESPONSE, "strict")
    assert exc.value.line == 7


def test_whitespace_in_target():
    assert parse_plan_lines("OpenDoor( D4 )").actions == (Action("OpenDoor", "D4"),)


def test_unknown_verb_is_reported_on_its_line():
    with pytest.raises(PlanParseError) as exc:
        parse_plan_lines("FlyTo(D1)")
    assert exc.value.line == 1
    assert exc.value.outcome == "unknown_action"


def test_verb_case_must_match():
    with pytest.raises(PlanParseError):
        parse_plan_lines("opendoor(D4)")


def test_unparseable_line_number():
    with pytest.raises(PlanParseError) as exc:
        parse_plan_lines("OpenDoor(D1)\n\nwalk somewhere")
    assert exc.value.line == 3
    assert exc.value.outcome == "malformed"


def test_list_markers_are_tolerated():
    assert parse_plan_lines("1. OpenDoor(D1)\n- GoThrough(D1)").lines() == ["OpenDoor(D1)", "GoThrough(D1)"]


def test_parse_plan_falls_back_to_lines():
    assert parse_plan("ApproachDoor(D2)\nOpenDoor(D2)").lines() == ["ApproachDoor(D2)", "OpenDoor(D2)"]


def test_door_prefix_in_target_is_dropped():
    assert parse_plan_json('{"plan":[{"action":"OpenDoor","target":"Door D4"}]}').actions[0].target == "D4"


def test_strict_plan_cannot_hold_goto():
    with pytest.raises(ValueError):
        Plan((Action("GoTo", "A"),), "strict")


def test_serialize_formats():
    plan = Plan((Action("ApproachDoor", "D8"), Action("OpenDoor", "D8")))
    assert serialize_plan(plan) == ('{"plan":[{"action":"ApproachDoor","target":"D8"},'
                                    '{"action":"OpenDoor","target":"D8"}]}')
    assert serialize_plan(plan, "lines") == "ApproachDoor(D8)\nOpenDoor(D8)"
    with pytest.raises(ValueError):
        serialize_plan(plan, "yaml")


def test_invalid_utf8_is_malformed():
    with pytest.raises(PlanParseError) as exc:
        parse_plan(b'{"plan": [\xff]}')
    assert exc.value.outcome == "malformed"


def test_deep_nesting_does_not_crash():
    with pytest.raises(PlanParseError):
        parse_plan("[" * 100_000)


# ------------------------------------------------------------- properties

door_ids = st.integers(1, 999).map(lambda n: f"D{n}")
room_ids = st.builds(lambda w, n: f"{w} {n}" if n else w,
                     st.sampled_from(["Hall", "Kitchen", "Lab", "308", "Chambre"]), st.integers(0, 9))


door_actions = st.builds(Action, st.sampled_from(["ApproachDoor", "OpenDoor", "GoThrough"]), door_ids)
room_actions = st.builds(Action, st.just("GoTo"), room_ids)


def plans():
    strict = st.lists(door_actions, max_size=12).map(lambda a: Plan(tuple(a), "strict"))
    extended = st.lists(door_actions | room_actions, max_size=12).map(lambda a: Plan(tuple(a), "extended"))
    return strict | extended


@settings(max_examples=200)
@given(plans())
def test_round_trip_both_formats(plan):
    assert parse_plan_json(serialize_plan(plan, "json"), plan.profile) == plan
    assert parse_plan_lines(serialize_plan(plan, "lines"), plan.profile) == plan


prose = st.text(alphabet=st.characters(blacklist_characters="[{", blacklist_categories=("Cs",)), max_size=80)


@settings(max_examples=200)
@given(plans(), prose)
def test_prepending_prose_never_changes_the_parse(plan, prefix):
    body = serialize_plan(plan, "json")
    assert parse_plan_json(prefix + body, plan.profile) == parse_plan_json(body, plan.profile)


@settings(max_examples=500)
@given(st.binary(max_size=200))
def test_arbitrary_bytes_never_crash(data):
    try:
        parse_plan(data)
    except PlanParseError:
        pass


@settings(max_examples=300)
@given(st.text(alphabet='{}[]":,ApproachDoorGThugD0123 \n()plan', max_size=120))
def test_json_like_noise_never_crashes(text):
    try:
        parse_plan(text)
    except PlanParseError:
        pass


# ------------------------------------------------------------ connectivity

def test_prose_connectivity_claims():
    claim = parse_connectivity_claim(
        "Connections:\n- D8: Terrasse Couverte <-> Hall\nDoor D7 connects Hall and Corridor.\nrandom line"
    )
    assert claim.claimed_edges == (("D8", "Terrasse Couverte", "Hall"), ("D7", "Hall", "Corridor"))


def test_json_connectivity_claims():
    text = json.dumps({"connections": [{"door": "D1", "rooms": ["A", "B"]}], "plan": []})
    assert parse_connectivity_claim(text).claimed_edges == (("D1", "A", "B"),)


def test_no_claims():
    assert parse_connectivity_claim("nothing here").claimed_edges == ()
    assert parse_connectivity_claim(b"\xff").claimed_edges == ()
