"""Packet traffic on scale-free networks and DFA of the resulting load series."""

from .graph import (
    Network,
    all_pairs_shortest_paths,
    canonical_shortest_path,
    generate_scale_free,
    shortest_next_hops,
)
from .traffic import Packet, SimConfig, SimState, TimeSeries, run, step

__all__ = [
    "Network",
    "Packet",
    "SimConfig",
    "SimState",
    "TimeSeries",
    "all_pairs_shortest_paths",
    "canonical_shortest_path",
    "generate_scale_free",
    "run",
    "shortest_next_hops",
    "step",
]

__version__ = "0.1.0"
