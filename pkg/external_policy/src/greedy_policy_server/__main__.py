"""Serve greedy routing decisions over the line-delimited JSON protocol.

Usage: python -m greedy_policy_server SCENARIO.json

Reads ``state`` messages from stdin, writes one ``action`` message per
decision to stdout, and exits 0 on the ``end`` message.  Malformed input or
a protocol version mismatch exits 2 with a diagnostic on stderr.
"""
import argparse
import json
import sys

from . import PROTOCOL_VERSION
from .core import ScenarioFileError, decide, load_scenario

EXIT_PROTOCOL = 2


def serve(scenario, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            print(f"greedy-policy-server: invalid JSON: {exc}",
                  file=sys.stderr)
            return EXIT_PROTOCOL
        if msg.get("type") == "end":
            return 0
        if msg.get("protocol_version") != PROTOCOL_VERSION:
            print(f"greedy-policy-server: unsupported protocol version "
                  f"{msg.get('protocol_version')!r}", file=sys.stderr)
            return EXIT_PROTOCOL
        if msg.get("type") != "state" or "data" not in msg:
            print(f"greedy-policy-server: expected a state message, got "
                  f"{msg.get('type')!r}", file=sys.stderr)
            return EXIT_PROTOCOL
        try:
            action = decide(msg["data"], scenario)
        except (KeyError, TypeError) as exc:
            print(f"greedy-policy-server: malformed state document: {exc!r}",
                  file=sys.stderr)
            return EXIT_PROTOCOL
        reply = {"type": "action", "protocol_version": PROTOCOL_VERSION,
                 "data": action}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
    return 0  # input closed without an end message


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="greedy-policy-server",
        description="External greedy routing policy (wire protocol v1).")
    parser.add_argument("scenario", help="scenario JSON file (fleet + travel)")
    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioFileError as exc:
        print(f"greedy-policy-server: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    return serve(scenario)


if __name__ == "__main__":
    sys.exit(main())
