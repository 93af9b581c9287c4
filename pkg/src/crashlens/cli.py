"""Command-line entry point: ``crashlens {minima,fit,simulate}``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import data_io, fitting, scaling, simulation
from .model import CrashProcessParams, DomainError, LpplParams

log = logging.getLogger("crashlens")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_NOT_CONVERGED = 4

BOUND_KEYS = {"tc": "t_c", "t_c": "t_c", "omega": "omega", "alpha": "alpha", "phi": "phi", "psi": "psi"}


class UsageError(Exception):
    pass


def parse_bounds(text: str) -> dict:
    """``"tc=600:700,omega=15:20"`` -> ``{"t_c": (600.0, 700.0), "omega": (15.0, 20.0)}``."""
    out = {}
    if not text:
        return out
    for item in text.split(","):
        try:
            key, rng = item.split("=")
            lo, hi = rng.split(":")
            name = BOUND_KEYS[key.strip()]
            out[name] = (float(lo), float(hi))
        except (ValueError, KeyError):
            raise UsageError(f"bad bound {item!r}; expected name=lo:hi with name in {sorted(set(BOUND_KEYS))}") from None
    return out


def _default_seed() -> int:
    raw = os.environ.get("CRASHLENS_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"CRASHLENS_SEED must be an integer, got {raw!r}") from None


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, type=Path, help="price CSV with a header row")
    p.add_argument("--date-col", default="date")
    p.add_argument("--price-col", default="close")
    p.add_argument("--from", dest="start", default=None, help="first date of the window (inclusive)")
    p.add_argument("--to", dest="end", default=None, help="last date of the window (inclusive)")


def _add_minima_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--win", type=int, default=10, help="half-width of the local-minimum window")
    p.add_argument("--smooth", type=int, default=1, help="moving-average width applied first (1 = none)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashlens", description="Log-periodic crash analysis")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("minima", help="detect minima and report scaling estimates")
    _add_input_args(p)
    _add_minima_args(p)
    p.add_argument("--output", type=Path, help="write the JSON report here instead of stdout")

    p = sub.add_parser("fit", help="fit the log-periodic power law")
    _add_input_args(p)
    _add_minima_args(p)
    p.add_argument("--output", type=Path, help="fit table CSV; a JSON sidecar is written next to it")
    p.add_argument("--bounds", default="", help="e.g. tc=600:700,omega=15:20,alpha=0.1:1")
    p.add_argument("--harmonic", type=int, choices=(1, 2), default=1)
    p.add_argument("--starts", type=int, default=16)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init", choices=("none", "minima"), default="none")
    p.add_argument("--aggregate", choices=("last", "mean"), default="last")
    p.add_argument("--max-iter", type=int, default=4000)

    p = sub.add_parser("simulate", help="generate synthetic data")
    p.add_argument("mode", choices=("lppl", "path", "nocrash", "lattice"))
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None)
    g = p.add_argument_group("lppl")
    for name, default in (("A", 8.8106), ("B", -0.0165957), ("C", -0.0444881), ("alpha", 0.554188),
                          ("phi", 0.0), ("omega", 19.5637)):
        g.add_argument(f"--{name}", type=float, default=default)
    g.add_argument("--D", type=float, default=None)
    g.add_argument("--psi", type=float, default=None)
    g.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sd added to log-prices")
    g.add_argument("--start-date", default="2006-01-18", help="first business-day label")
    g = p.add_argument_group("path / nocrash")
    for name, default in (("B0", 0.05), ("B1", 0.02), ("beta", 0.5), ("psi-prime", 0.0),
                          ("kappa", 0.2), ("p0", 100.0), ("dt", 0.1)):
        g.add_argument(f"--{name}", type=float, default=default)
    g = p.add_argument_group("shared window")
    g.add_argument("--tc", type=float, default=672.319)
    g.add_argument("--t0", type=float, default=0.0)
    g.add_argument("--t-end", type=float, default=408.0)
    g = p.add_argument_group("lattice")
    g.add_argument("--side", type=int, default=32)
    g.add_argument("--K", type=float, default=0.5)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--sweeps", type=int, default=100)
    g.add_argument("--burn-in", type=int, default=None)
    g.add_argument("--K-grid", default=None, help="comma-separated couplings; writes a magnetization curve")
    return parser


def _json_dump(obj, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load(args) -> data_io.PriceSeries:
    return data_io.ingest_csv(args.input, args.date_col, args.price_col, args.start, args.end)


def _triple_report(minima: scaling.MinimaSet) -> list:
    rows = []
    for tr in minima.triples():
        lam = scaling.estimate_lambda(*tr)
        row = {"times": list(tr), "lambda": lam, "t_c": None, "omega": None}
        if lam > 1:
            row["t_c"] = scaling.estimate_tc(*tr)
            row["omega"] = scaling.omega_from_lambda(lam)
        rows.append(row)
    return rows


def cmd_minima(args) -> int:
    series = _load(args)
    minima = scaling.detect_minima(series, args.win, args.smooth)
    report = {
        "window": args.win,
        "smoothing": args.smooth,
        "indices": list(minima.times),
        "dates": [series.label(p) for p in minima.positions],
        "triples": _triple_report(minima),
    }
    _json_dump(report, args.output)
    return EXIT_OK


def cmd_fit(args) -> int:
    bounds = parse_bounds(args.bounds)
    seed = args.seed if args.seed is not None else _default_seed()
    spec = fitting.FitSpec(
        harmonic_order=args.harmonic,
        multistart=args.starts,
        seed=seed,
        max_iterations=args.max_iter,
        **bounds,
    )
    series = _load(args)
    init = None
    if args.init == "minima":
        minima = scaling.detect_minima(series, args.win, args.smooth)
        mode = "last_triple" if args.aggregate == "last" else "mean_over_triples"
        init = scaling.scaling_from_minima(minima, mode)
        log.info("scaling init: lambda=%.4f t_c=%.3f omega=%.4f", init.lam, init.t_c, init.omega)
    result = fitting.fit(series, spec, init)
    summary = result.summary()
    summary["init"] = None if init is None else {"lambda": init.lam, "t_c": init.t_c, "omega": init.omega}
    if args.output is not None:
        data_io.export_fit(series, result, args.output)
    _json_dump(summary)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _simulate(args, seed: int):
    """Validate everything, compute, and return a writer closure."""
    if args.mode == "lppl":
        params = LpplParams(A=args.A, B=args.B, C=args.C, alpha=args.alpha, t_c=args.tc,
                            phi=args.phi, omega=args.omega, D=args.D, psi=args.psi)
        series = simulation.gen_lppl_series(params, args.t0, args.t_end, args.noise, seed, args.start_date)
        return lambda path: data_io.write_columns(
            path, ["time_index", "date", "log_price", "close"],
            [[int(t) for t in series.times], list(series.labels),
             [float(v) for v in series.log_prices], [math.exp(v) for v in series.log_prices]])

    if args.mode in ("path", "nocrash"):
        process = CrashProcessParams(B0=args.B0, B1=args.B1, beta=args.beta, t_c=args.tc,
                                     omega=args.omega, psi_prime=args.psi_prime, kappa=args.kappa)
        config = simulation.PathConfig(process, args.p0, args.t0, args.t_end, args.dt, seed)
        if args.mode == "path":
            series, crash_time = simulation.simulate_path(config)
            crashed = [int(crash_time is not None and t >= crash_time) for t in series.times]
        else:
            series = simulation.nocrash_log_price(config)
            crashed = [0] * len(series)
        return lambda path: data_io.write_columns(
            path, ["time", "log_price", "price", "crashed"],
            [[float(t) for t in series.times], [float(v) for v in series.log_prices],
             [math.exp(v) for v in series.log_prices], crashed])

    config = simulation.LatticeConfig(side=args.side, K=args.K, sigma=args.sigma, sweeps=args.sweeps,
                                      seed=seed, burn_in=args.burn_in)
    if args.K_grid:
        try:
            grid = [float(k) for k in args.K_grid.split(",")]
        except ValueError:
            raise UsageError(f"bad --K-grid {args.K_grid!r}") from None
        for K in grid:
            simulation.LatticeConfig(side=args.side, K=K, sigma=args.sigma, sweeps=args.sweeps)
        curve = simulation.magnetization_curve(config, grid)
        return lambda path: data_io.write_columns(
            path, ["K", "mean_abs_magnetization"], [[k for k, _ in curve], [m for _, m in curve]])
    _, trace = simulation.run_lattice(config)
    return lambda path: data_io.write_columns(
        path, ["sweep", "abs_magnetization"], [list(range(1, len(trace) + 1)), [float(m) for m in trace]])


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    write = _simulate(args, seed)
    write(args.output)
    return EXIT_OK


COMMANDS = {"minima": cmd_minima, "fit": cmd_fit, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except fitting.InfeasibleBoxError as exc:
        print(f"crashlens: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ValueError, DomainError, OSError) as exc:
        print(f"crashlens: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
