"""Command line entry point: run, replay, and report on campaigns."""

from __future__ import annotations

import argparse
import sys

from .campaign import replay_experiment, run_experiment
from .reports import (
    cycles_report_for_campaign,
    removal_report_for_campaign,
    thresholds_report_for_campaign,
)
from .scenario import ScenarioError, load_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hanr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a simulated campaign")
    run.add_argument("--scenario", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.add_argument("--until-run", type=int, default=None, help="stop after this run")

    replay = sub.add_parser("replay", help="re-run the engine over exported PM records")
    replay.add_argument("--pm", required=True)
    replay.add_argument("--scenario", required=True)
    replay.add_argument("--out", required=True)

    report = sub.add_parser("report", help="emit a report from a campaign directory")
    report.add_argument("--campaign", required=True)
    report.add_argument("--kind", required=True, choices=["thresholds", "removals", "cycles"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            scenario = load_scenario(args.scenario)
            if args.seed is not None:
                scenario.seed = args.seed
            outputs = run_experiment(scenario, args.out, until_run=args.until_run)
            print(f"completed {outputs.runs_executed} runs -> {outputs.out_dir}")
        elif args.command == "replay":
            scenario = load_scenario(args.scenario)
            outputs = replay_experiment(scenario, args.pm, args.out)
            print(f"replayed {outputs.runs_executed} runs -> {outputs.out_dir}")
        else:
            if args.kind == "thresholds":
                print(thresholds_report_for_campaign(args.campaign))
            elif args.kind == "removals":
                print(removal_report_for_campaign(args.campaign))
            else:
                print(cycles_report_for_campaign(args.campaign))
    except ScenarioError as exc:
        print(f"error: scenario: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
