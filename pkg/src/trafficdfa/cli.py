"""Command-line front end.

Commands: simulate | dfa | sweep | phases | validate.  Every artifact is
written once into the chosen output directory together with a manifest that
records the fully resolved configuration and seeds, which is enough to
reproduce the artifact byte for byte.

Configuration comes from defaults, then an optional flat ``key=value`` config
file, then command-line flags, in increasing priority.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime error,
4 every sweep cell failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, dfa as dfa_mod, phase, traffic, validate as validate_mod
from .traffic import STRATEGIES, SimConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_SWEEP_FAILED = 4


class ConfigError(Exception):
    pass


# config-file / flag name -> SimConfig field
_KEY_TO_FIELD = {
    "strategy": "strategy",
    "lambda": "lam",
    "beta": "beta",
    "h": "h",
    "steps": "steps",
    "warmup": "warmup",
    "seed": "seed",
    "nodes": "n_nodes",
    "links": "links_per_new_node",
}
_FIELD_TYPES = {
    "strategy": str,
    "lam": float,
    "beta": float,
    "h": float,
    "steps": int,
    "warmup": int,
    "seed": int,
    "n_nodes": int,
    "links_per_new_node": int,
}


def parse_config_file(path: str | Path) -> dict:
    """Flat key=value text; '#' starts a comment, blank lines ignored."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        field = _KEY_TO_FIELD[key]
        try:
            values[field] = _FIELD_TYPES[field](val.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def resolve_config(args) -> SimConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key, field in _KEY_TO_FIELD.items():
        flag = "lam" if key == "lambda" else key
        val = getattr(args, flag, None)
        if val is not None:
            values[field] = val
    try:
        return SimConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_beta_grid(spec: str) -> list[float]:
    """Parse 'lo:hi:count:log' (or ':lin') into an ascending beta grid."""
    parts = spec.split(":")
    if len(parts) != 4 or parts[3] not in ("log", "lin"):
        raise ConfigError(f"bad beta grid {spec!r}, expected lo:hi:count:log|lin")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad beta grid {spec!r}: {exc}") from exc
    if not (0 <= lo < hi and count >= 2):
        raise ConfigError(f"bad beta grid {spec!r}: need 0 <= lo < hi and count >= 2")
    if parts[3] == "log":
        if lo <= 0:
            raise ConfigError("log beta grid needs lo > 0")
        return [float(b) for b in np.geomspace(lo, hi, count)]
    return [float(b) for b in np.linspace(lo, hi, count)]


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fresh(path: Path) -> Path:
    # artifacts are write-once per run directory
    if path.exists():
        raise RuntimeError(f"refusing to overwrite existing artifact {path}")
    return path


def _write_manifest(out: Path, command: str, cfg: SimConfig | None, extra: dict) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "config": asdict(cfg) if cfg is not None else None,
    }
    payload.update(extra)
    (out / "manifest.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    out = _prepare_out(args)
    series_path = _fresh(out / "series.csv")
    series = traffic.run(cfg)
    traffic.save_series(series, series_path)
    _write_manifest(
        out,
        "simulate",
        cfg,
        {
            "outputs": ["series.csv"],
            "net_seed": traffic.derive_seed(cfg.seed, traffic._NET_STREAM),
            "sim_seed": traffic.derive_seed(cfg.seed, traffic._SIM_STREAM),
        },
    )
    print(f"wrote {series_path} ({len(series)} samples)")
    return EXIT_OK


def cmd_dfa(args) -> int:
    out = _prepare_out(args)
    try:
        series = traffic.load_series(args.input)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read series: {exc}") from exc
    if len(series.values) < dfa_mod.MIN_SIGNAL_LEN:
        raise ConfigError(f"series too short for DFA: {len(series.values)}")
    csv_path = _fresh(out / "dfa.csv")
    json_path = _fresh(out / "dfa_result.json")

    detrended = dfa_mod.remove_global_trend(series.values)
    points = dfa_mod.dfa(detrended, args.boxes)
    if dfa_mod.is_degenerate(points):
        result = dfa_mod.DfaResult(
            points, float("nan"), float("nan"), None,
            (int(points[0, 0]), int(points[-1, 0])),
        )
        dfa_mod.save_result(result, csv_path, json_path)
        payload = json.loads(json_path.read_text())
        payload["degenerate"] = True
        json_path.write_text(json.dumps(payload, indent=2) + "\n")
        print(f"wrote {csv_path} (degenerate: fluctuations below noise floor)")
    else:
        crossover = dfa_mod.detect_crossover(points) if len(points) >= 6 else None
        hi = crossover if crossover is not None else int(points[-1, 0])
        alpha, stderr = dfa_mod.fit_scaling(points, (int(points[0, 0]), hi))
        result = dfa_mod.DfaResult(points, alpha, stderr, crossover, (int(points[0, 0]), hi))
        dfa_mod.save_result(result, csv_path, json_path)
        print(f"wrote {csv_path} (alpha={alpha:.4f}, crossover={crossover})")
    _write_manifest(out, "dfa", None, {"input": str(args.input), "outputs": ["dfa.csv", "dfa_result.json"]})
    return EXIT_OK


def _journal_load(path: Path):
    done: dict[tuple[str, int, int], dict] = {}
    if not path.exists():
        return done
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        done[(rec["strategy"], rec["bi"], rec["ri"])] = rec
    return done


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    out = _prepare_out(args)
    strategies = args.strategies.split(",") if args.strategies else list(STRATEGIES)
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    betas = parse_beta_grid(args.betas)
    ensemble = args.ensemble
    if ensemble < 1:
        raise ConfigError("ensemble must be >= 1")

    manifest_path = out / "manifest.json"
    manifest = {
        "command": "sweep",
        "version": __version__,
        "config": asdict(cfg),
        "strategies": strategies,
        "betas": betas,
        "ensemble": ensemble,
    }
    if manifest_path.exists():
        previous = json.loads(manifest_path.read_text())
        if {k: previous.get(k) for k in manifest} != manifest:
            raise ConfigError(
                "output directory holds a sweep with a different configuration"
            )
    else:
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    journal_path = out / "cells.jsonl"
    journal = _journal_load(journal_path)
    any_success = any(rec.get("status") == "ok" for rec in journal.values())
    total_failed = 0

    with journal_path.open("a") as journal_file:
        for strategy in strategies:
            scfg = replace(cfg, strategy=strategy)
            done = {
                (rec["bi"], rec["ri"]): phase.AlphaPoint(
                    rec["beta"], rec["alpha"], rec["alpha_stderr"], rec["growth_slope"]
                )
                for key, rec in journal.items()
                if key[0] == strategy and rec.get("status") == "ok"
            }

            def on_cell(bi, ri, point, err, strategy=strategy):
                rec = {"strategy": strategy, "bi": bi, "ri": ri}
                if point is not None:
                    rec.update(
                        status="ok",
                        beta=point.beta,
                        alpha=point.alpha,
                        alpha_stderr=point.alpha_stderr,
                        growth_slope=point.growth_slope,
                    )
                else:
                    rec.update(status="failed", error=err)
                journal_file.write(json.dumps(rec) + "\n")
                journal_file.flush()

            cells, failures = phase.sweep_cells(
                scfg, betas, ensemble, workers=args.workers, done=done, on_cell=on_cell
            )
            total_failed += len(failures)
            any_success = any_success or bool(cells)
            if not cells:
                print(f"{strategy}: every cell failed", file=sys.stderr)
                continue
            curve = phase.aggregate_curve(strategy, betas, ensemble, cells)
            report = phase.phase_report(curve)
            name = (
                "alpha_vs_beta.csv"
                if len(strategies) == 1
                else f"alpha_vs_beta_{strategy}.csv"
            )
            phase.save_curve(curve, out / name, report)
            print(f"wrote {out / name} ({len(curve.entries)} rows)")

    if not any_success:
        return EXIT_SWEEP_FAILED
    if total_failed:
        print(f"{total_failed} cells failed; see {journal_path}", file=sys.stderr)
    return EXIT_OK


def cmd_phases(args) -> int:
    out = _prepare_out(args)
    try:
        curve = phase.load_curve(args.curve, strategy=args.strategies or "")
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read curve: {exc}") from exc
    report_path = _fresh(out / "phase_report.json")
    report = phase.phase_report(curve)
    phase.save_report(report, report_path)
    _write_manifest(
        out, "phases", None, {"input": str(args.curve), "outputs": ["phase_report.json"]}
    )
    print(
        f"wrote {report_path} (beta_c={report.beta_c:.4f}, beta_1={report.beta_1:.4f})"
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    results = validate_mod.run_checks()
    print(validate_mod.format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficdfa",
        description="Packet traffic on scale-free networks and DFA of the load series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, with_beta=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--strategy", dest="strategy", choices=STRATEGIES)
        p.add_argument("--lambda", dest="lam", type=float, help="creation rate per unit degree")
        if with_beta:
            p.add_argument("--beta", type=float, help="delivery capacity per unit degree")
        p.add_argument("--h", type=float, help="distance weight of the echenique strategy")
        p.add_argument("--nodes", type=int, help="network size")
        p.add_argument("--links", type=int, help="edges per new node")
        p.add_argument("--steps", type=int, help="simulation horizon")
        p.add_argument("--warmup", type=int, help="discarded prefix steps")
        p.add_argument("--seed", type=int, help="base seed")

    p = sub.add_parser("simulate", help="run one simulation, write series.csv")
    add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dfa", help="DFA of a series.csv, write dfa.csv + JSON")
    p.add_argument("--input", required=True, help="series.csv to analyze")
    p.add_argument("--out", default="out")
    p.add_argument(
        "--boxes",
        type=lambda s: [int(x) for x in s.split(",")],
        default=None,
        help="comma-separated box sizes (default: log grid)",
    )
    p.set_defaults(func=cmd_dfa)

    p = sub.add_parser("sweep", help="alpha(beta) sweep, write alpha_vs_beta csv")
    add_config_flags(p, with_beta=False)
    p.add_argument(
        "--strategies",
        help="comma-separated strategies (default: all three)",
    )
    p.add_argument("--betas", default="0.02:0.2:25:log", help="grid lo:hi:count:log|lin")
    p.add_argument("--ensemble", type=int, default=10, help="runs per beta")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("phases", help="phase report from an alpha_vs_beta csv")
    p.add_argument("--curve", required=True, help="alpha_vs_beta csv")
    p.add_argument("--strategies", help="strategy tag recorded in the report")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_phases)

    p = sub.add_parser("validate", help="run the built-in calibration suite")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures map to a distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
