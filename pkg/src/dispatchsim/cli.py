"""Command line entry point: run scenarios, validate files, replay traces.

Exit codes: 0 success, 1 feasibility violation, 2 policy protocol error,
3 malformed scenario.
"""
from __future__ import annotations

import argparse
import json
import sys

from .engine import FeasibilityError, run_simulation
from .model import SimulationError
from .policy import (BUILTIN_POLICIES, PolicyBinding, ProtocolError,
                     greedy_policy, make_policy, reject_all_policy)
from .reporting import compute_metrics, read_trace, replay_trace, write_trace
from .scenario import ScenarioError, load_scenario, with_seed

EXIT_OK = 0
EXIT_FEASIBILITY = 1
EXIT_PROTOCOL = 2
EXIT_SCENARIO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dispatchsim",
        description="Discrete-event simulator for dynamic pickup-and-delivery "
                    "dispatching.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario with a policy")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    group = run.add_mutually_exclusive_group()
    group.add_argument("--policy-builtin", choices=sorted(BUILTIN_POLICIES),
                       default="greedy", help="built-in policy (default: greedy)")
    group.add_argument("--policy-cmd", help="external policy command; it is "
                       "spawned once and spoken to over stdin/stdout")
    run.add_argument("--policy-dir", help="exchange state/action via JSON files "
                     "in this directory instead of pipes (requires --policy-cmd)")
    run.add_argument("--policy-timeout-ms", type=int, default=30000,
                     help="per-decision timeout for external policies")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--trace", help="write the event trace (ndjson) here")
    run.add_argument("--metrics", help="write summary metrics (JSON) here")
    run.add_argument("--lenient", action="store_true",
                     help="log infeasible actions instead of aborting")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True)

    rep = sub.add_parser("replay", help="re-validate a recorded trace")
    rep.add_argument("--scenario", required=True)
    rep.add_argument("--trace", required=True)
    return parser


def _make_policy(args):
    if args.policy_cmd:
        mode = "file_exchange" if args.policy_dir else "subprocess"
        binding = PolicyBinding(mode=mode, command=args.policy_cmd,
                                directory=args.policy_dir,
                                timeout=args.policy_timeout_ms / 1000.0)
        return make_policy(binding)
    if args.policy_builtin == "reject-all":
        return reject_all_policy
    return greedy_policy


def _cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = with_seed(scenario, args.seed)
    policy = _make_policy(args)
    strict = False if args.lenient else None
    result = run_simulation(scenario, policy, strict=strict)
    if args.trace:
        write_trace(result.history, args.trace)
    metrics = compute_metrics(result.history, scenario)
    if args.metrics:
        with open(args.metrics, "w", encoding="utf-8") as fh:
            json.dump(metrics, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"simulated {len(result.history.records)} events to "
          f"t={result.final_state.time}; delivered "
          f"{metrics['orders']['delivered']}/{metrics['orders']['requested']} "
          f"orders, fleet travel {metrics['fleet_travel']}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    load_scenario(args.scenario)
    print(f"{args.scenario}: ok")
    return EXIT_OK


def _cmd_replay(args) -> int:
    scenario = load_scenario(args.scenario)
    records = read_trace(args.trace)
    problems = replay_trace(records, scenario)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_FEASIBILITY
    print(f"{args.trace}: {len(records)} events replayed, all states and "
          f"actions valid")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_replay(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except ProtocolError as exc:
        print(f"policy protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (FeasibilityError, SimulationError) as exc:
        print(f"feasibility error: {exc}", file=sys.stderr)
        if isinstance(exc, FeasibilityError):
            for violation in exc.violations:
                print(f"  {violation}", file=sys.stderr)
        return EXIT_FEASIBILITY


if __name__ == "__main__":
    sys.exit(main())
