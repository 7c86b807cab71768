"""Discrete-time packet traffic with degree-dependent rates.

Every node of degree k creates ``lam * k`` packets per step (in expectation)
and may forward at most ``1 + beta * k`` packets per step, realized through
stochastic rounding of the fractional parts.  Queues are FIFO; a step is
synchronous: all routing decisions observe the queue lengths as of the start
of the step, and arrivals plus newly created packets land at the queue tails
afterwards.

Three routing strategies are supported:

* ``liu`` - forward along a uniformly chosen minimal-hop next hop;
* ``echenique`` - minimize ``h * d(l, dest) + (1 - h) * n_l / (1 + beta*k_l)``
  over the neighbors ``l``;
* ``zhang`` - minimize the estimated residual delivery time, the sum of
  ``n_s / (1 + beta*k_s)`` over the nodes of the canonical shortest path from
  the neighbor to the destination (destination excluded).

Two engines produce bit-identical results: a plain Python one (this module,
the readable reference) and a compiled one (:mod:`trafficdfa._kernel`) that
consumes the exact same random stream.  ``run``/``run_detailed`` pick the
compiled engine when it is available.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .graph import Network, generate_scale_free, shortest_next_hops

STRATEGIES = ("liu", "echenique", "zhang")

# absolute tolerance for strategy-value ties
TIE_TOL = 1e-12

# spawn-key tags for deriving independent child streams from one config seed
_NET_STREAM = 0
_SIM_STREAM = 1


def derive_seed(base_seed: int, *key: int) -> int:
    """Derive a 64-bit child seed from ``base_seed`` and a counter key.

    The mapping is deterministic and collision-resistant, so per-cell seeds
    in a parameter sweep do not depend on scheduling or worker count.
    """
    ss = np.random.SeedSequence(base_seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


class Packet(NamedTuple):
    destination: int
    birth_time: int


class StepStats(NamedTuple):
    created: int
    delivered: int
    queued: int


@dataclass(frozen=True)
class SimConfig:
    """All parameters of one simulation run."""

    strategy: str = "liu"
    lam: float = 0.01
    beta: float = 0.1
    h: float = 0.85
    steps: int = 11000
    warmup: int = 1000
    seed: int = 7
    n_nodes: int = 1000
    links_per_new_node: int = 3

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.h <= 1.0:
            raise ValueError("h must lie in [0, 1]")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= self.warmup < self.steps:
            raise ValueError("warmup must satisfy 0 <= warmup < steps")
        if self.n_nodes < self.links_per_new_node + 1:
            raise ValueError("n_nodes too small for links_per_new_node")


@dataclass
class TimeSeries:
    """Average packets per node, one sample per retained step."""

    values: np.ndarray
    start_step: int = 1
    dt: int = 1

    def __len__(self) -> int:
        return len(self.values)

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.start_step, self.start_step + len(self.values))


def save_series(series: TimeSeries, path: str | Path) -> None:
    """Write a ``t,avg_packets`` CSV; values keep full float precision."""
    lines = ["t,avg_packets"]
    for t, v in zip(series.steps, series.values):
        lines.append(f"{t},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_series(path: str | Path) -> TimeSeries:
    """Read a CSV written by :func:`save_series`."""
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "t,avg_packets":
        raise ValueError(f"{path}: expected header 't,avg_packets'")
    ts: list[int] = []
    vals: list[float] = []
    for row in rows[1:]:
        row = row.strip()
        if not row:
            continue
        t_str, v_str = row.split(",")
        ts.append(int(t_str))
        vals.append(float(v_str))
    if not vals:
        raise ValueError(f"{path}: no samples")
    return TimeSeries(np.array(vals), start_step=ts[0])


def stochastic_round(x, rng):
    """floor(x) plus a Bernoulli draw on the fractional part.

    Exact in expectation: ``E[stochastic_round(x)] == x``.  Accepts a scalar
    or an array; the array form consumes a single vector draw so that scalar
    and compiled callers can reproduce the same stream.
    """
    if np.ndim(x) == 0:
        x = float(x)
        if x < 0:
            raise ValueError("x must be >= 0")
        base = math.floor(x)
        frac = x - base
        if frac > 0.0 and rng.random() < frac:
            base += 1
        return base
    x = np.asarray(x, dtype=np.float64)
    if (x < 0).any():
        raise ValueError("x must be >= 0")
    base = np.floor(x)
    frac = x - base
    out = base.astype(np.int64)
    if (frac > 0).any():
        out += rng.random(x.shape) < frac
    return out


def capacity(beta: float, k: int, rng) -> int:
    """Packets a node of degree ``k`` may forward this step; always >= 1."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return 1 + stochastic_round(beta * k, rng)


def _rand_index(rng, k: int) -> int:
    # float-based uniform index; guards the half-ulp edge at powers of two
    r = int(rng.random() * k)
    return k - 1 if r >= k else r


class SimState:
    """Mutable simulation state: FIFO queues, clock, RNG and counters."""

    def __init__(self, net: Network, cfg: SimConfig, sim_seed: int | None = None):
        n = net.node_count
        self.queues: list[deque[Packet]] = [deque() for _ in range(n)]
        self.clock = 0
        self.rng = np.random.default_rng(
            derive_seed(cfg.seed, _SIM_STREAM) if sim_seed is None else sim_seed
        )
        self.created_total = 0
        self.delivered_total = 0
        self.inflow = np.zeros(n, dtype=np.int64)
        self._nonempty: set[int] = set()
        # per-run rate tables shared with the compiled engine
        (
            self._cap_base,
            self._cap_frac,
            self._invcap,
        ) = rate_tables(net.degree, cfg.beta)

    @property
    def total_queued(self) -> int:
        return self.created_total - self.delivered_total


def rate_tables(degree: np.ndarray, beta: float):
    """Capacity tables for a given beta: integer base, fractional part, 1/(1+beta*k)."""
    bk = beta * degree.astype(np.float64)
    cap_base = 1 + np.floor(bk).astype(np.int64)
    cap_frac = bk - np.floor(bk)
    invcap = 1.0 / (1.0 + bk)
    return cap_base, cap_frac, invcap


def create_packets(state: SimState, net: Network, lam: float) -> int:
    """Create this step's packets at every node, appending to queue tails.

    Node ``i`` gains ``stochastic_round(lam * k_i)`` packets, each addressed
    to a uniformly random node other than ``i``.  Returns the number created.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    n = net.node_count
    counts = stochastic_round(lam * net.degree.astype(np.float64), state.rng)
    total = int(counts.sum())
    if total == 0:
        return 0
    rng = state.rng
    birth = state.clock
    for i in np.flatnonzero(counts):
        i = int(i)
        q = state.queues[i]
        for _ in range(int(counts[i])):
            dest = _rand_index(rng, n - 1)
            if dest >= i:
                dest += 1
            q.append(Packet(dest, birth))
        state.inflow[i] += int(counts[i])
        state._nonempty.add(i)
    state.created_total += total
    return total


def route_liu(state: SimState, net: Network, at: int, pkt: Packet, rng) -> int:
    """Uniform random choice among the minimal-hop next hops."""
    j = pkt.destination
    if at == j:
        raise ValueError("packet already at destination")
    cands = shortest_next_hops(net, at, j)
    if len(cands) == 1:
        return int(cands[0])
    return int(cands[_rand_index(rng, len(cands))])


def echenique_cost(
    net: Network, l: int, j: int, qlens, beta: float, h: float
) -> float:
    """Score of forwarding toward neighbor ``l`` for a packet bound to ``j``."""
    inv = 1.0 / (1.0 + beta * float(net.degree[l]))
    return h * float(net.dist[j, l]) + (1.0 - h) * (qlens[l] * inv)


def zhang_cost(net: Network, l: int, j: int, qlens, beta: float) -> float:
    """Estimated residual delivery time from ``l`` to ``j``.

    Sums ``n_s / (1 + beta*k_s)`` over the canonical shortest path from ``l``
    to ``j``, excluding the destination itself (``l`` included).
    """
    row = net.next_toward[j]
    tot = 0.0
    s = l
    while s != j:
        tot += qlens[s] * (1.0 / (1.0 + beta * float(net.degree[s])))
        s = int(row[s])
    return tot


def _pick_min(net, at: int, j: int, scores, rng) -> int:
    """Argmin over neighbors with deterministic tie-breaking.

    Ties within TIE_TOL of the minimum are re-ranked by hop distance to the
    destination; remaining ties are resolved uniformly at random.
    """
    nbrs = net.adjacency[at]
    vmin = min(scores)
    ties = [int(l) for l, s in zip(nbrs, scores) if s <= vmin + TIE_TOL]
    if len(ties) > 1:
        drow = net.dist[j]
        dmin = min(int(drow[l]) for l in ties)
        ties = [l for l in ties if int(drow[l]) == dmin]
    if len(ties) == 1:
        return ties[0]
    return ties[_rand_index(rng, len(ties))]


def route_echenique(
    state: SimState, net: Network, at: int, pkt: Packet, beta: float, h: float, rng
) -> int:
    """Next hop minimizing distance traded off against neighbor congestion."""
    j = pkt.destination
    if at == j:
        raise ValueError("packet already at destination")
    if not 0.0 <= h <= 1.0:
        raise ValueError("h must lie in [0, 1]")
    qlens = [len(q) for q in state.queues]
    scores = [echenique_cost(net, int(l), j, qlens, beta, h) for l in net.adjacency[at]]
    return _pick_min(net, at, j, scores, rng)


def route_zhang(
    state: SimState, net: Network, at: int, pkt: Packet, beta: float, rng
) -> int:
    """Next hop minimizing the path-load estimate of remaining delivery time."""
    j = pkt.destination
    if at == j:
        raise ValueError("packet already at destination")
    qlens = [len(q) for q in state.queues]
    scores = [zhang_cost(net, int(l), j, qlens, beta) for l in net.adjacency[at]]
    return _pick_min(net, at, j, scores, rng)


def step(state: SimState, net: Network, cfg: SimConfig) -> StepStats:
    """Advance the simulation by one synchronous step.

    Phases: (1) every node with a nonempty queue forwards up to its sampled
    capacity from the queue head, observing start-of-step queue lengths;
    packets reaching their destination are destroyed; the rest are staged.
    (2) staged arrivals are appended to the target queue tails in staging
    order.  (3) new packets are created and appended.  Nodes are processed in
    ascending index order.
    """
    rng = state.rng
    qlens = [len(q) for q in state.queues]
    active = sorted(state._nonempty)
    staged: list[tuple[int, Packet]] = []
    delivered = 0

    strategy = cfg.strategy
    h = cfg.h
    h1 = 1.0 - cfg.h
    beta = cfg.beta
    dist = net.dist
    toward = net.next_toward
    adjacency = net.adjacency
    invcap = state._invcap
    cap_base = state._cap_base
    cap_frac = state._cap_frac

    for i in active:
        q = state.queues[i]
        cap = int(cap_base[i])
        if cap_frac[i] > 0.0 and rng.random() < cap_frac[i]:
            cap += 1
        for _ in range(min(cap, len(q))):
            pkt = q.popleft()
            j = pkt.destination
            if strategy == "liu":
                drow = dist[j]
                target = int(drow[i]) - 1
                nbrs = adjacency[i]
                cands = [int(l) for l in nbrs if drow[l] == target]
                hop = cands[0] if len(cands) == 1 else cands[_rand_index(rng, len(cands))]
            else:
                nbrs = adjacency[i]
                if strategy == "echenique":
                    drow = dist[j]
                    scores = [
                        h * float(drow[l]) + h1 * (qlens[l] * invcap[l]) for l in nbrs
                    ]
                else:
                    trow = toward[j]
                    scores = []
                    for l in nbrs:
                        tot = 0.0
                        s = int(l)
                        while s != j:
                            tot += qlens[s] * invcap[s]
                            s = int(trow[s])
                        scores.append(tot)
                hop = _pick_min(net, i, j, scores, rng)
            if hop == j:
                delivered += 1
            else:
                staged.append((hop, pkt))
        if not q:
            state._nonempty.discard(i)

    for hop, pkt in staged:
        state.queues[hop].append(pkt)
        state.inflow[hop] += 1
        state._nonempty.add(hop)

    created = create_packets(state, net, cfg.lam)
    state.delivered_total += delivered
    state.clock += 1
    return StepStats(created, delivered, state.total_queued)


@dataclass
class RunResult:
    """A finished run: the retained series plus bookkeeping for diagnostics."""

    series: TimeSeries
    inflow: np.ndarray
    created_total: int
    delivered_total: int
    network: Network


def build_network(cfg: SimConfig) -> Network:
    """The network a config implies; its seed is derived from ``cfg.seed``."""
    return generate_scale_free(
        cfg.n_nodes, cfg.links_per_new_node, seed=derive_seed(cfg.seed, _NET_STREAM)
    )


def _run_python(net: Network, cfg: SimConfig, sim_seed: int) -> RunResult:
    state = SimState(net, cfg, sim_seed=sim_seed)
    n = net.node_count
    values = np.empty(cfg.steps)
    for t in range(cfg.steps):
        stats = step(state, net, cfg)
        values[t] = stats.queued / n
    series = TimeSeries(values[cfg.warmup :], start_step=cfg.warmup + 1)
    return RunResult(
        series, state.inflow, state.created_total, state.delivered_total, net
    )


def _run_compiled(net: Network, cfg: SimConfig, sim_seed: int) -> RunResult:
    from . import _kernel

    indptr, indices = net._csr
    cap_base, cap_frac, invcap = rate_tables(net.degree, cfg.beta)
    rates = cfg.lam * net.degree.astype(np.float64)
    create_base = np.floor(rates).astype(np.int64)
    create_frac = rates - np.floor(rates)
    values, inflow, created, delivered = _kernel.run_sim(
        indptr,
        indices,
        net.dist,
        net.next_toward,
        cap_base,
        cap_frac,
        create_base,
        create_frac,
        bool((create_frac > 0).any()),
        STRATEGIES.index(cfg.strategy),
        cfg.h,
        invcap,
        cfg.steps,
        net.node_count,
        np.random.default_rng(sim_seed),
    )
    series = TimeSeries(values[cfg.warmup :], start_step=cfg.warmup + 1)
    return RunResult(series, inflow, int(created), int(delivered), net)


def run_detailed(
    cfg: SimConfig,
    net: Network | None = None,
    sim_seed: int | None = None,
    engine: str = "auto",
) -> RunResult:
    """Run a full simulation and keep per-node inflow counters.

    ``net`` and ``sim_seed`` default to the values derived from ``cfg.seed``;
    passing them explicitly lets sweeps share one network across many seeds.
    ``engine`` is ``auto`` (compiled when available), ``compiled`` or
    ``python``; both engines give bit-identical output.
    """
    if net is None:
        net = build_network(cfg)
    if sim_seed is None:
        sim_seed = derive_seed(cfg.seed, _SIM_STREAM)
    if engine == "auto":
        try:
            from . import _kernel  # noqa: F401

            engine = "compiled"
        except ImportError:
            engine = "python"
    if engine == "compiled":
        return _run_compiled(net, cfg, sim_seed)
    if engine == "python":
        return _run_python(net, cfg, sim_seed)
    raise ValueError(f"unknown engine {engine!r}")


def run(cfg: SimConfig) -> TimeSeries:
    """Build the configured network, simulate, and return the load series."""
    return run_detailed(cfg).series
