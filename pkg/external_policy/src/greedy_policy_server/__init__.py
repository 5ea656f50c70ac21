"""Standalone greedy insertion policy for the dispatchsim wire protocol.

Deliberately self-contained: it reads the scenario JSON and the state
documents itself rather than importing the simulator, demonstrating that a
policy can live in any language or process.  The decision rule mirrors the
simulator's built-in greedy policy exactly, so traces produced through this
server are byte-identical to in-process runs.
"""

from .core import Scenario, decide, load_scenario

PROTOCOL_VERSION = 1

__all__ = ["PROTOCOL_VERSION", "Scenario", "decide", "load_scenario"]
