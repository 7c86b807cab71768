"""Built-in calibration and self-consistency checks.

Run by the ``validate`` CLI command; every check is quick enough for a
pre-flight sanity pass and prints a measured value next to its acceptance
window, so regressions show up as numbers, not just booleans.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dfa as dfa_mod
from . import graph as graph_mod
from . import traffic as traffic_mod


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str
    expected: str


def _white_noise_alpha() -> CheckResult:
    rng = np.random.default_rng(101)
    alphas = [dfa_mod.analyze(rng.standard_normal(2**13)).alpha for _ in range(10)]
    mean = float(np.mean(alphas))
    return CheckResult(
        "white_noise_alpha", 0.45 <= mean <= 0.55, f"{mean:.4f}", "[0.45, 0.55]"
    )


def _brownian_alpha() -> CheckResult:
    rng = np.random.default_rng(202)
    alphas = [
        dfa_mod.analyze(np.cumsum(rng.standard_normal(2**15))).alpha for _ in range(5)
    ]
    mean = float(np.mean(alphas))
    return CheckResult(
        "brownian_alpha", 1.35 <= mean <= 1.65, f"{mean:.4f}", "[1.35, 1.65]"
    )


def _packet_conservation() -> CheckResult:
    rng = np.random.default_rng(303)
    net = graph_mod.generate_scale_free(25, 2, seed=1)
    steps_total = 0
    violations = 0
    for trial in range(10):
        cfg = traffic_mod.SimConfig(
            strategy=("liu", "echenique", "zhang")[trial % 3],
            lam=float(rng.uniform(0, 0.3)),
            beta=float(rng.uniform(0, 0.5)),
            steps=1000,
            warmup=0,
            seed=trial,
            n_nodes=25,
            links_per_new_node=2,
        )
        state = traffic_mod.SimState(net, cfg, sim_seed=trial)
        for _ in range(1000):
            traffic_mod.step(state, net, cfg)
            steps_total += 1
            if sum(len(q) for q in state.queues) != state.total_queued:
                violations += 1
    return CheckResult(
        "packet_conservation",
        violations == 0,
        f"{violations} violations in {steps_total} steps",
        "0 violations in 10000 steps",
    )


def _fifo_order() -> CheckResult:
    line = graph_mod.Network([[1], [0, 2], [1, 3], [2]])
    cfg = traffic_mod.SimConfig(
        lam=0.0, beta=0.0, steps=10, warmup=0, seed=0, n_nodes=4, links_per_new_node=1
    )
    state = traffic_mod.SimState(line, cfg, sim_seed=0)
    tags = [0, 3, 0, 3, 0]
    for i, dest in enumerate(tags):
        state.queues[1].append(traffic_mod.Packet(dest, i))
    state._nonempty.add(1)
    state.created_total += len(tags)
    order = []
    for _ in range(10):
        before = list(state.queues[1])
        traffic_mod.step(state, line, cfg)
        if before:
            order.append(before[0].birth_time)  # head must leave first
    ok = order == sorted(order) and state.delivered_total == len(tags)
    return CheckResult(
        "fifo_order", ok, f"departures {order}", "strictly in arrival order"
    )


def _echenique_h1_shortest() -> CheckResult:
    net = graph_mod.generate_scale_free(60, 3, seed=5)
    cfg = traffic_mod.SimConfig(
        steps=10, warmup=0, seed=0, n_nodes=60, links_per_new_node=3
    )
    state = traffic_mod.SimState(net, cfg, sim_seed=7)
    rng = np.random.default_rng(7)
    for _ in range(300):
        node = int(rng.integers(0, 60))
        state.queues[node].append(traffic_mod.Packet((node + 1) % 60, 0))
    bad = 0
    trials = 1000
    for _ in range(trials):
        i, j = rng.integers(0, 60, 2)
        if i == j:
            continue
        hop = traffic_mod.route_echenique(
            state, net, int(i), traffic_mod.Packet(int(j), 0), beta=0.1, h=1.0,
            rng=state.rng,
        )
        if net.dist[hop, j] != net.dist[i, j] - 1:
            bad += 1
    return CheckResult(
        "echenique_h1_shortest", bad == 0, f"{bad} off-path hops / {trials}", "0"
    )


def _zhang_empty_queue_hops() -> CheckResult:
    net = graph_mod.generate_scale_free(60, 3, seed=6)
    cfg = traffic_mod.SimConfig(
        steps=10, warmup=0, seed=0, n_nodes=60, links_per_new_node=3
    )
    state = traffic_mod.SimState(net, cfg, sim_seed=8)
    rng = np.random.default_rng(8)
    bad = 0
    trials = 1000
    for _ in range(trials):
        i, j = rng.integers(0, 60, 2)
        if i == j:
            continue
        hop = traffic_mod.route_zhang(
            state, net, int(i), traffic_mod.Packet(int(j), 0), beta=0.1, rng=state.rng
        )
        if net.dist[hop, j] != net.dist[i, j] - 1:
            bad += 1
    return CheckResult(
        "zhang_empty_queue_hops", bad == 0, f"{bad} non-decreasing hops / {trials}", "0"
    )


def _simulate_determinism() -> CheckResult:
    cfg = traffic_mod.SimConfig(
        strategy="echenique", lam=0.05, beta=0.05, steps=300, warmup=50,
        n_nodes=80, seed=9,
    )
    a = traffic_mod.run(cfg)
    b = traffic_mod.run(cfg)
    same = np.array_equal(a.values, b.values)
    return CheckResult(
        "simulate_determinism", same, "bit-identical" if same else "diverged",
        "bit-identical repeat",
    )


def _engine_parity() -> CheckResult:
    net = graph_mod.generate_scale_free(50, 3, seed=3)
    cfg = traffic_mod.SimConfig(
        strategy="zhang", lam=0.08, beta=0.04, steps=200, warmup=0,
        n_nodes=50, seed=4,
    )
    py = traffic_mod.run_detailed(cfg, net=net, sim_seed=11, engine="python")
    try:
        co = traffic_mod.run_detailed(cfg, net=net, sim_seed=11, engine="compiled")
    except ImportError:
        return CheckResult("engine_parity", True, "compiled engine unavailable", "skip")
    same = np.array_equal(py.series.values, co.series.values)
    return CheckResult(
        "engine_parity", same, "bit-identical" if same else "diverged",
        "python == compiled",
    )


def _dfa_scale_equivariance() -> CheckResult:
    rng = np.random.default_rng(404)
    sig = np.sin(0.01 * np.arange(2048)) + rng.standard_normal(2048)
    a = dfa_mod.analyze(sig)
    b = dfa_mod.analyze(5.0 * sig)
    rel = float(np.max(np.abs(b.points[:, 1] - 5.0 * a.points[:, 1]) / b.points[:, 1]))
    alpha_shift = abs(b.alpha - a.alpha)
    ok = rel <= 1e-12 and alpha_shift <= 1e-12
    return CheckResult(
        "dfa_scale_equivariance", ok, f"relF={rel:.2e} dalpha={alpha_shift:.2e}",
        "<= 1e-12",
    )


def _stochastic_round_mean() -> CheckResult:
    rng = np.random.default_rng(505)
    draws = traffic_mod.stochastic_round(np.full(10**6, 0.06), rng)
    mean = float(draws.mean())
    return CheckResult(
        "stochastic_round_mean", abs(mean - 0.06) < 0.001, f"{mean:.5f}",
        "0.060 +/- 0.001",
    )


ALL_CHECKS = [
    _white_noise_alpha,
    _brownian_alpha,
    _packet_conservation,
    _fifo_order,
    _echenique_h1_shortest,
    _zhang_empty_queue_hops,
    _simulate_determinism,
    _engine_parity,
    _dfa_scale_equivariance,
    _stochastic_round_mean,
]


def run_checks() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]


def format_table(results: list[CheckResult]) -> str:
    name_w = max(len(r.name) for r in results)
    meas_w = max(len(r.measured) for r in results)
    lines = [f"{'check':<{name_w}}  status  {'measured':<{meas_w}}  expected"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.name:<{name_w}}  {status:<6}  {r.measured:<{meas_w}}  {r.expected}")
    return "\n".join(lines)
