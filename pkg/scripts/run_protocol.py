"""Run the four-arm protocol and write the hypothesis report.

With no backend options the arms are driven by the noisy mock, with a low
error rate on the arms expected to do well and a high one on the others, so
the whole pipeline can be exercised offline. Pass --config to use a real
backend described in an experiment config file.
"""

import argparse
from pathlib import Path

from floorplan_nav.backends import BackendConfig
from floorplan_nav.bench import ExperimentConfig, protocol_arms, run_experiment, success_rate
from floorplan_nav.report import hypothesis_report, write_report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="experiment config JSON; overrides the mock setup below")
    parser.add_argument("--out", default="protocol_out", help="output directory")
    parser.add_argument("--maps", nargs="+", default=["builtin:map1"])
    parser.add_argument("--tasks", type=int, default=5)
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--low", type=float, default=0.05, help="mock error rate for the easier arms")
    parser.add_argument("--high", type=float, default=0.35, help="mock error rate for the harder arms")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        rates = {"orig-dense-hard": args.low, "doubled-dense-easy": args.low,
                 "doubled-dense-hard": args.high, "orig-sparse-hard": args.high}
        config = ExperimentConfig(name="protocol", maps=tuple(args.maps), arms=protocol_arms(rates),
                                  tasks_per_map=args.tasks, trials_per_task=args.trials, seed=args.seed,
                                  backend=BackendConfig("mock_noisy", seed=args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_experiment(config, out / "records.jsonl")
    for row in success_rate(records, ("map_id", "arm")):
        rate = "n/a" if row.rate is None else f"{row.rate:.3f}"
        print(f"{row.group[0]:>10}  {row.group[1]:<20} {row.successes:>4}/{row.trials:<4} {rate}")
    report = hypothesis_report(records)
    for h in report["hypotheses"]:
        pooled = h["scopes"][-1] if h["scopes"] else {}
        welch = pooled.get("welch_trial") or {}
        print(f"{h['id']} {h['name']:<16} t={welch.get('t')} p={welch.get('p_two_sided')} significant={h['significant']}")
    for path in write_report(report, out):
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
