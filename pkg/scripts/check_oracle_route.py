"""Print the ground-truth plan for Terrasse Couverte -> Chambre 1 and check it two ways."""

import argparse

from floorplan_nav import build_connectivity, execute, load_plan, oracle_plan, rasterize, validate_plan
from floorplan_nav.graph import NavTask


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--map", default="builtin:map1")
    parser.add_argument("--start", default="Terrasse Couverte")
    parser.add_argument("--goal", default="Chambre 1")
    args = parser.parse_args(argv)

    plan = load_plan(args.map)
    graph = build_connectivity(plan)
    task = NavTask(plan.map_id, args.start, args.goal)
    actions = oracle_plan(graph, task)
    for i, act in enumerate(actions.actions, start=1):
        print(f"{i:2d}  {act}")
    verdict = validate_plan(graph, task, actions)
    log = execute(rasterize(plan), plan, actions, task)
    print(f"validator: {verdict.outcome} (minimal={verdict.minimal})")
    print(f"simulator: {log.outcome}, ends in {log.final_room}, path length {log.path_length:g}")
    return 0 if verdict.correct and log.success else 1


if __name__ == "__main__":
    raise SystemExit(main())
