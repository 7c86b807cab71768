"""Sweep beta, fit the scaling exponent per beta, and classify phases.

The traffic phases are read off two observables of the load series:

* the late-window growth slope of the raw series separates congestion
  (linear growth) from stationarity, giving the threshold ``beta_c``;
* the DFA exponent of the detrended series separates the uncorrelated free
  regime (alpha near 0.5) from the increasingly correlated buffer regime,
  giving the threshold ``beta_1`` where alpha departs from its high-beta
  plateau.

Labels: free (beta > beta_1), buffer (beta_c < beta <= beta_1), congestion
(beta <= beta_c).
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.stats import linregress

from . import dfa as dfa_mod
from . import traffic
from .graph import Network
from .traffic import SimConfig, TimeSeries

FREE = "free"
BUFFER = "buffer"
CONGESTION = "congestion"

# smallest DFA box size for traffic series: below this the box-wise slope is
# dominated by the packet transit and queue relaxation transient (slowest for
# the path-load strategy), not by the load correlation under study
TRAFFIC_MIN_BOX = 128

# growth slope (packets per node per step) above which a series counts as
# linearly growing when only curve data are available; congested runs at the
# standard rates sit orders of magnitude above, stationary runs far below
CURVE_SLOPE_THRESHOLD = 1e-5

# a probe run is congested when its growth slope exceeds this many times its
# own standard error
SLOPE_SIGMA = 5.0


def traffic_box_sizes(n: int, count: int = 20) -> np.ndarray:
    """Box grid for load series: log-spaced over [TRAFFIC_MIN_BOX, n//4]."""
    if n < 8 * TRAFFIC_MIN_BOX:
        return dfa_mod.default_box_sizes(n, count)
    grid = np.geomspace(TRAFFIC_MIN_BOX, n // 4, count)
    return np.unique(np.round(grid).astype(np.int64))


def growth_fit(series: TimeSeries, window_fraction: float = 0.5):
    """Least-squares slope and stderr over the trailing window of the series."""
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    values = np.asarray(series.values, dtype=np.float64)
    if len(values) < 100:
        raise ValueError("series too short for a growth fit")
    start = len(values) - max(int(len(values) * window_fraction), 3)
    window = values[start:]
    t = np.arange(start, len(values), dtype=np.float64)
    res = linregress(t, window)
    return float(res.slope), float(res.stderr)


def growth_slope(series: TimeSeries, window_fraction: float = 0.5) -> float:
    """Late-window linear slope of the raw load series, per step."""
    return growth_fit(series, window_fraction)[0]


@dataclass
class AlphaPoint:
    beta: float
    alpha: float
    alpha_stderr: float
    growth_slope: float


@dataclass
class AlphaCurve:
    strategy: str
    entries: list[AlphaPoint]
    ensemble_size: int

    @property
    def betas(self) -> np.ndarray:
        return np.array([e.beta for e in self.entries])

    @property
    def alphas(self) -> np.ndarray:
        return np.array([e.alpha for e in self.entries])


@dataclass
class PhaseReport:
    strategy: str
    beta_c: float
    beta_1: float
    betas: list[float]
    labels: list[str]
    ensemble_size: int


@dataclass
class BetaCEstimate:
    beta_c: float
    bracket: tuple[float, float]
    hub_beta: float  # analytic cross-check from the hub saturation criterion
    probes: list[tuple[float, float, float]]  # (beta, slope, stderr)


def classify(beta: float, beta_c: float, beta_1: float) -> str:
    """Phase label for one beta; boundaries are closed on the lower side."""
    if beta_c > beta_1:
        raise ValueError("beta_c must not exceed beta_1")
    if beta <= beta_c:
        return CONGESTION
    if beta <= beta_1:
        return BUFFER
    return FREE


def bisect_threshold(
    predicate: Callable[[float], bool], lo: float, hi: float, tol: float
) -> float:
    """Bisection on a predicate that is True at lo and False at hi."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def analyze_series(values) -> dfa_mod.DfaResult:
    """DFA pipeline for a load series, on the traffic box grid."""
    return dfa_mod.analyze(values, traffic_box_sizes(len(values)))


def run_cell(cfg: SimConfig, net: Network, beta: float, sim_seed: int) -> AlphaPoint:
    """One (beta, seed) simulation reduced to its alpha and growth slope."""
    cell_cfg = replace(cfg, beta=beta)
    res = traffic.run_detailed(cell_cfg, net=net, sim_seed=sim_seed)
    result = analyze_series(res.series.values)
    slope, _ = growth_fit(res.series)
    return AlphaPoint(beta, result.alpha, result.alpha_stderr, slope)


def cell_seed(base_seed: int, beta_index: int, run_index: int) -> int:
    """Per-cell stream seed; independent of scheduling and worker count."""
    return traffic.derive_seed(base_seed, traffic._SIM_STREAM, beta_index, run_index)


def _pool_net(cfg: SimConfig) -> Network:
    return traffic.build_network(cfg)


_WORKER_NET: Network | None = None
_WORKER_CFG: SimConfig | None = None


def _worker_init(cfg: SimConfig) -> None:
    global _WORKER_NET, _WORKER_CFG
    _WORKER_CFG = cfg
    _WORKER_NET = _pool_net(cfg)


def _worker_cell(args):
    bi, ri, beta = args
    assert _WORKER_NET is not None and _WORKER_CFG is not None
    try:
        point = run_cell(_WORKER_CFG, _WORKER_NET, beta, cell_seed(_WORKER_CFG.seed, bi, ri))
        return bi, ri, point, None
    except Exception as exc:  # cell failures must not abort the sweep
        return bi, ri, None, repr(exc)


CellKey = tuple[int, int]


def sweep_cells(
    cfg: SimConfig,
    betas,
    ensemble: int,
    workers: int = 1,
    done: dict[CellKey, AlphaPoint] | None = None,
    on_cell: Callable[[int, int, AlphaPoint | None, str | None], None] | None = None,
) -> tuple[dict[CellKey, AlphaPoint], dict[CellKey, str]]:
    """Run every missing (beta, run) cell; results are keyed, not ordered.

    The same network (derived from ``cfg.seed``) underlies every cell, so the
    sweep probes one quenched topology; cells differ in their traffic stream
    seeds.  Aggregation over the keyed results is deterministic regardless of
    worker count or scheduling.
    """
    betas = [float(b) for b in betas]
    results: dict[CellKey, AlphaPoint] = dict(done or {})
    failures: dict[CellKey, str] = {}
    todo = [
        (bi, ri, beta)
        for bi, beta in enumerate(betas)
        for ri in range(ensemble)
        if (bi, ri) not in results
    ]
    if not todo:
        return results, failures

    if workers <= 1:
        net = _pool_net(cfg)
        for bi, ri, beta in todo:
            try:
                point = run_cell(cfg, net, beta, cell_seed(cfg.seed, bi, ri))
                err = None
            except Exception as exc:
                point, err = None, repr(exc)
            if point is not None:
                results[(bi, ri)] = point
            else:
                failures[(bi, ri)] = err or "failed"
            if on_cell is not None:
                on_cell(bi, ri, point, err)
        return results, failures

    with ProcessPoolExecutor(
        max_workers=workers, initializer=_worker_init, initargs=(cfg,)
    ) as pool:
        for bi, ri, point, err in pool.map(_worker_cell, todo, chunksize=4):
            if point is not None:
                results[(bi, ri)] = point
            else:
                failures[(bi, ri)] = err or "failed"
            if on_cell is not None:
                on_cell(bi, ri, point, err)
    return results, failures


def aggregate_curve(
    strategy: str,
    betas,
    ensemble: int,
    cells: dict[CellKey, AlphaPoint],
) -> AlphaCurve:
    """Reduce per-cell results to one entry per beta (mean over the ensemble)."""
    entries = []
    for bi, beta in enumerate(betas):
        runs = [cells[(bi, ri)] for ri in range(ensemble) if (bi, ri) in cells]
        if not runs:
            entries.append(AlphaPoint(float(beta), np.nan, np.nan, np.nan))
            continue
        alphas = np.array([r.alpha for r in runs])
        slopes = np.array([r.growth_slope for r in runs])
        if len(runs) > 1:
            stderr = float(alphas.std(ddof=1) / np.sqrt(len(runs)))
        else:
            stderr = float(runs[0].alpha_stderr)
        entries.append(
            AlphaPoint(float(beta), float(alphas.mean()), stderr, float(slopes.mean()))
        )
    return AlphaCurve(strategy, entries, ensemble)


def sweep_alpha(
    cfg: SimConfig, betas, ensemble: int, workers: int = 1
) -> AlphaCurve:
    """alpha(beta) for one strategy: ``ensemble`` runs per beta, averaged."""
    betas = [float(b) for b in betas]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly ascending")
    if ensemble < 1:
        raise ValueError("ensemble must be >= 1")
    cells, _ = sweep_cells(cfg, betas, ensemble, workers=workers)
    return aggregate_curve(cfg.strategy, betas, ensemble, cells)


def estimate_beta_c(
    cfg: SimConfig,
    beta_lo: float,
    beta_hi: float,
    tol: float = 0.002,
    slope_sigma: float = SLOPE_SIGMA,
) -> BetaCEstimate:
    """Bisection for the congestion threshold of ``cfg.strategy``.

    A beta counts as congested when the late-window growth slope of the raw
    series exceeds ``slope_sigma`` times its standard error.  The probe runs
    share the network and the traffic stream seed implied by ``cfg.seed``, so
    the estimate is deterministic.  The returned ``hub_beta`` is the analytic
    cross-check: the beta at which the hub's measured inflow rate equals its
    delivery capacity ``1 + beta * k_hub``, with the inflow rate taken from
    the free-phase run at ``beta_hi``.
    """
    if not 0 <= beta_lo < beta_hi:
        raise ValueError("need 0 <= beta_lo < beta_hi")
    net = traffic.build_network(cfg)
    sim_seed = traffic.derive_seed(cfg.seed, traffic._SIM_STREAM)
    probes: list[tuple[float, float, float]] = []

    def probe(beta: float) -> tuple[bool, traffic.RunResult]:
        res = traffic.run_detailed(replace(cfg, beta=beta), net=net, sim_seed=sim_seed)
        slope, stderr = growth_fit(res.series)
        probes.append((beta, slope, stderr))
        return slope > slope_sigma * stderr, res

    congested_lo, _ = probe(beta_lo)
    if not congested_lo:
        raise ValueError(
            f"no congestion in bracket: growth at beta_lo={beta_lo} is not significant"
        )
    congested_hi, free_run = probe(beta_hi)
    if congested_hi:
        raise ValueError(
            f"bracket does not reach the free phase: still congested at beta_hi={beta_hi}"
        )

    beta_c = bisect_threshold(lambda b: probe(b)[0], beta_lo, beta_hi, tol)

    hub = net.hub_index
    hub_rate = float(free_run.inflow[hub]) / cfg.steps
    hub_beta = (hub_rate - 1.0) / float(net.degree[hub])
    return BetaCEstimate(beta_c, (beta_lo, beta_hi), hub_beta, probes)


def detect_beta1(curve: AlphaCurve, beta_c: float) -> float:
    """beta where alpha departs from its high-beta plateau, else ``beta_c``.

    The plateau is the top quartile of the grid (at least 3 entries); the
    departure point is the largest beta above ``beta_c`` whose alpha exceeds
    the plateau mean by more than twice the plateau standard deviation.  The
    exceedance must persist at the next lower beta as well ("constant to
    increasing" means a sustained rise): an isolated fluctuation above the
    threshold is not a departure.
    """
    above = [e for e in curve.entries if e.beta > beta_c and np.isfinite(e.alpha)]
    if len(above) < 5:
        raise ValueError("need at least 5 curve entries above beta_c")
    above.sort(key=lambda e: e.beta)
    n_plateau = max(3, len(above) // 4)
    plateau = above[-n_plateau:]
    mean = float(np.mean([e.alpha for e in plateau]))
    std = float(np.std([e.alpha for e in plateau], ddof=1))
    threshold = mean + 2.0 * std
    exceeds = [e.alpha > threshold for e in above]
    for idx in range(len(above) - 1, -1, -1):
        if exceeds[idx] and (idx == 0 or exceeds[idx - 1]):
            return above[idx].beta
    return beta_c


def beta_c_from_curve(
    curve: AlphaCurve, slope_threshold: float = CURVE_SLOPE_THRESHOLD
) -> float:
    """Congestion threshold read off a finished curve's growth slopes.

    Returns the midpoint between the largest congested beta and the next
    grid point, or the grid minimum when no entry shows linear growth.
    """
    entries = sorted(
        (e for e in curve.entries if np.isfinite(e.growth_slope)),
        key=lambda e: e.beta,
    )
    if not entries:
        raise ValueError("curve has no usable growth slopes")
    congested = [e.beta for e in entries if e.growth_slope > slope_threshold]
    if not congested:
        return entries[0].beta
    last = max(congested)
    higher = [e.beta for e in entries if e.beta > last]
    if not higher:
        return last
    return 0.5 * (last + min(higher))


def phase_report(curve: AlphaCurve) -> PhaseReport:
    """Thresholds and per-beta labels for a finished curve.

    When too few entries sit above ``beta_c`` to resolve a plateau departure,
    ``beta_1`` falls back to ``beta_c`` (no buffer region resolvable).
    """
    beta_c = beta_c_from_curve(curve)
    try:
        beta_1 = detect_beta1(curve, beta_c)
    except ValueError:
        beta_1 = beta_c
    if beta_1 < beta_c:
        beta_1 = beta_c
    labels = [classify(e.beta, beta_c, beta_1) for e in curve.entries]
    return PhaseReport(
        curve.strategy,
        beta_c,
        beta_1,
        [e.beta for e in curve.entries],
        labels,
        curve.ensemble_size,
    )


def save_curve(curve: AlphaCurve, path: str | Path, report: PhaseReport | None = None) -> None:
    """CSV export: beta, alpha, alpha_stderr, growth_slope, phase."""
    if report is None:
        report = phase_report(curve)
    lines = ["beta,alpha,alpha_stderr,growth_slope,phase"]
    for entry, label in zip(curve.entries, report.labels):
        lines.append(
            f"{float(entry.beta)!r},{float(entry.alpha)!r},"
            f"{float(entry.alpha_stderr)!r},{float(entry.growth_slope)!r},{label}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_curve(path: str | Path, strategy: str = "", ensemble: int = 0) -> AlphaCurve:
    """Read a curve CSV written by :func:`save_curve`."""
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0].strip() != "beta,alpha,alpha_stderr,growth_slope,phase":
        raise ValueError(f"{path}: unexpected curve header")
    entries = []
    for row in rows[1:]:
        row = row.strip()
        if not row:
            continue
        b, a, se, gs, _phase = row.split(",")
        entries.append(AlphaPoint(float(b), float(a), float(se), float(gs)))
    if not entries:
        raise ValueError(f"{path}: empty curve")
    return AlphaCurve(strategy, entries, ensemble)


def save_report(report: PhaseReport, path: str | Path) -> None:
    payload = {
        "strategy": report.strategy,
        "beta_c": report.beta_c,
        "beta_1": report.beta_1,
        "grid": report.betas,
        "ensemble": report.ensemble_size,
        "labels": report.labels,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
