import pytest

from floorplan_nav.executor import ApproachError, approach_pose, execute, start_cell
from floorplan_nav.grammar import parse_plan_lines
from floorplan_nav.graph import NavTask, build_connectivity, oracle_plan
from floorplan_nav.grid import rasterize


@pytest.fixture(scope="module")
def grid1(map1):
    return rasterize(map1)


def test_terrace_route_execution(map1, graph1, grid1, terrace_task):
    log = execute(grid1, map1, oracle_plan(graph1, terrace_task), terrace_task)
    assert log.success
    assert log.final_room == "Chambre 1"
    assert len(log.records) == 9
    assert log.path_length == 21.0
    for rec in log.records:
        for (r0, c0), (r1, c1) in zip(rec.path, rec.path[1:]):
            assert abs(r0 - r1) + abs(c0 - c1) == 1


def test_approach_pose_is_next_to_the_door_on_the_right_side(map1, grid1):
    for d in map1.doors:
        for room in d.connects:
            cell = approach_pose(grid1, map1, d.door_id, room)
            assert grid1.room_of(cell) == room
            assert min(abs(cell[0] - r) + abs(cell[1] - c) for r, c in grid1.door_cells(d.door_id)) == 1


def test_approach_pose_rejects_foreign_room(map1, grid1):
    with pytest.raises(ApproachError):
        approach_pose(grid1, map1, "D5", "Hall")


def test_start_cell_is_in_the_room(map1, grid1):
    for room in map1.rooms:
        assert grid1.room_of(start_cell(grid1, map1, room.room_id)) == room.room_id


def test_distant_door_fails(map1, grid1, terrace_task):
    log = execute(grid1, map1, parse_plan_lines("ApproachDoor(D8)\nOpenDoor(D5)"), terrace_task)
    assert (log.outcome, log.failing_index) == ("infeasible_action", 1)
    assert log.final_room == "Terrasse Couverte"


def test_closed_door(map1, grid1, terrace_task):
    log = execute(grid1, map1, parse_plan_lines("ApproachDoor(D8)\nGoThrough(D8)"), terrace_task)
    assert (log.outcome, log.failing_index) == ("door_closed", 1)


def test_lenient_auto_approach_vs_pedantic(map1, grid1, terrace_task):
    plan = parse_plan_lines("OpenDoor(D8)\nGoThrough(D8)")
    task = NavTask("map1", "Terrasse Couverte", "Hall")
    assert execute(grid1, map1, plan, task).success
    log = execute(grid1, map1, plan, task, pedantic=True)
    assert (log.outcome, log.failing_index) == ("not_adjacent", 0)


def test_goal_not_reached(map1, grid1, graph1, terrace_task):
    plan = oracle_plan(graph1, terrace_task)
    log = execute(grid1, map1, type(plan)(plan.actions[:6]), terrace_task)
    assert log.outcome == "goal_not_reached"
    assert log.final_room == "Corridor"


def test_initially_open_door(map1, grid1):
    task = NavTask("map1", "Terrasse Couverte", "Hall")
    log = execute(grid1, map1, parse_plan_lines("GoThrough(D8)"), task, door_states={"D8": True})
    assert log.success


def test_goto_extended(map1, grid1):
    task = NavTask("map1", "Hall", "Corridor")
    plan = parse_plan_lines("ApproachDoor(D7)\nOpenDoor(D7)\nGoTo(Corridor)", "extended")
    log = execute(grid1, map1, plan, task)
    assert log.success and log.final_room == "Corridor"
    bad = parse_plan_lines("GoTo(Corridor)", "extended")
    assert execute(grid1, map1, bad, task).outcome == "infeasible_action"


def test_log_json_is_serialisable(map1, grid1, graph1, terrace_task):
    import json

    data = json.loads(execute(grid1, map1, oracle_plan(graph1, terrace_task), terrace_task).to_json())
    assert data["outcome"] == "success"
    assert len(data["records"]) == 9


def test_fine_resolution_also_succeeds(map1, graph1, terrace_task):
    grid = rasterize(map1, 0.5)
    log = execute(grid, map1, oracle_plan(graph1, terrace_task), terrace_task)
    assert log.success
