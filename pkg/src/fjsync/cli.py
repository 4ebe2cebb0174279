"""Command-line front end: analytic mixtures, simulation runs, the joint-queue
solver, and reproduction of the published validation tables.

Every subcommand accepts ``--config file.json`` (keys = flag names with
underscores); explicit flags override config values.  Delimited outputs land
in ``--outdir`` (default: $FJSYNC_OUTDIR or the current directory), and
``--plot`` additionally renders a matplotlib figure next to them.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analytic, ck, fixtures, gof, simulate
from .analytic import INFINITE, NetworkParams


def _servers(text):
    if str(text).lower() in ("inf", "infinity"):
        return INFINITE
    return int(text)


def _float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip()]


def _int_list(text):
    return [_servers(x) for x in str(text).split(",") if x.strip()]


def _sweep(text):
    """Either 'start:stop:step' or a comma list."""
    if ":" in str(text):
        start, stop, step = (float(x) for x in str(text).split(":"))
        return [round(v, 12) for v in np.arange(start, stop + step / 2, step)]
    return _float_list(text)


def _merged_options(args, defaults: dict) -> dict:
    """Config-file values override defaults; explicit flags override both."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            merged.update(json.load(fh))
    for key, value in vars(args).items():
        if key in ("config", "command", "func") or value is None:
            continue
        merged[key] = value
    return merged


def _outdir(opts) -> Path:
    out = Path(opts.get("outdir") or os.environ.get("FJSYNC_OUTDIR", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_from_options(opts) -> NetworkParams:
    if opts.get("inf_servers"):
        return NetworkParams(
            opts.get("lam") or 1.0, INFINITE, opts["mua"], INFINITE, opts["mub"]
        )
    lam = opts["lam"]
    n_a, n_b = opts["na"], opts["nb"]
    mu_a = opts.get("mua")
    mu_b = opts.get("mub")
    if mu_a is None:
        mu_a = lam / (n_a * opts["psi_a"])
    if mu_b is None:
        mu_b = lam / (n_b * opts["psi_b"])
    return NetworkParams(lam, n_a, mu_a, n_b, mu_b)


def _write_rows_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------- analytic

ANALYTIC_DEFAULTS = {
    "lam": None, "na": 1, "mua": None, "nb": 1, "mub": None,
    "psi_a": None, "psi_b": None, "inf_servers": False,
    "outdir": None, "plot": False, "prefix": "analytic",
}


def cmd_analytic(args) -> int:
    opts = _merged_options(args, ANALYTIC_DEFAULTS)
    params = _params_from_options(opts)
    density = analytic.waiting_time_density(params)
    t_mean = density.mean()
    rho = analytic.little_occupancy(params.lam, t_mean)
    payload = {
        "params": params.as_dict(),
        "mixture": json.loads(density.to_json()),
        "t_mean": t_mean,
        "little_occupancy": rho,
    }
    print(json.dumps(payload, indent=2))
    out = _outdir(opts)
    with open(out / f"{opts['prefix']}.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    if opts["plot"]:
        from . import plots

        plots.plot_waiting_density(density, out / f"{opts['prefix']}_density.png")
    return 0


# ---------------------------------------------------------------- simulate

SIMULATE_DEFAULTS = {
    "lam": None, "na": 1, "mua": None, "nb": 1, "mub": None,
    "psi_a": None, "psi_b": None, "inf_servers": False,
    "n_jobs": 100_000, "seed": None, "warmup": 0.0,
    "outdir": None, "prefix": "sim", "plot": False,
}


def cmd_simulate(args) -> int:
    opts = _merged_options(args, SIMULATE_DEFAULTS)
    if opts["seed"] is None:
        print("simulate: --seed is required", file=sys.stderr)
        return 2
    params = _params_from_options(opts)
    result = simulate.run_simulation(
        params, int(opts["n_jobs"]), int(opts["seed"]), float(opts["warmup"])
    )
    out = _outdir(opts)
    result.write_samples_csv(out / f"{opts['prefix']}_samples.csv")
    result.write_summary_json(out / f"{opts['prefix']}_summary.json")
    print(json.dumps(result.summary(), indent=2))
    if opts["plot"]:
        from . import plots

        plots.plot_waiting_density(
            analytic.waiting_time_density(params),
            out / f"{opts['prefix']}_density.png",
            samples=result.t_sync,
        )
    return 0


# ---------------------------------------------------------------- ck-solve

CK_DEFAULTS = {
    "lam": None, "mua": None, "mub": None, "psi_a": None, "psi_b": None,
    "n": 190, "d3_tol": 1e-11, "max_iter": 5_000_000,
    "outdir": None, "prefix": "ck", "plot": False,
}


def _ck_rates(opts):
    if opts.get("mua") is not None:
        return opts["lam"], opts["mua"], opts["mub"]
    # utilization parametrization: unit-rate time scale
    return 1.0, 1.0 / opts["psi_a"], 1.0 / opts["psi_b"]


def cmd_ck_solve(args) -> int:
    opts = _merged_options(args, CK_DEFAULTS)
    lam, mu_a, mu_b = _ck_rates(opts)
    grid, diag = ck.solve_stationary(
        lam, mu_a, mu_b,
        n=int(opts["n"]), d3_tol=float(opts["d3_tol"]),
        max_iter=int(opts["max_iter"]),
    )
    corr = ck.sojourn_correlation(grid)
    out = _outdir(opts)
    grid.write_csv(out / f"{opts['prefix']}_grid.csv")
    payload = {
        "lambda": lam, "mu_a": mu_a, "mu_b": mu_b,
        "psi_a": grid.psi_a, "psi_b": grid.psi_b, "n": grid.n,
        "d1": diag.d1, "d2": diag.d2, "d3": diag.d3,
        "iterations": diag.iterations, "converged": diag.converged,
        "gamma_history": diag.gamma_history,
        "residual": ck.ck_residual(grid),
        "correlation": corr,
    }
    with open(out / f"{opts['prefix']}_diag.json", "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(json.dumps(payload, indent=2))
    return 0


# ---------------------------------------------------------------- fig3

FIG3_DEFAULTS = {
    "psi_b_values": [0.05, 0.35, 0.65, 0.90],
    "psi_a_sweep": "0.05:0.90:0.05",
    "n": 190, "d3_tol": 1e-11, "max_iter": 5_000_000,
    "outdir": None, "prefix": "fig3", "plot": False,
}


def cmd_fig3(args) -> int:
    opts = _merged_options(args, FIG3_DEFAULTS)
    psi_b_values = opts["psi_b_values"]
    if isinstance(psi_b_values, str):
        psi_b_values = _float_list(psi_b_values)
    psi_a_values = _sweep(opts["psi_a_sweep"])
    rows = []
    for psi_b in sorted(psi_b_values):
        for psi_a in sorted(psi_a_values):
            grid, _ = ck.solve_stationary(
                1.0, 1.0 / psi_a, 1.0 / psi_b,
                n=int(opts["n"]), d3_tol=float(opts["d3_tol"]),
                max_iter=int(opts["max_iter"]),
            )
            rows.append(
                {"psi_a": psi_a, "psi_b": psi_b, "R": ck.sojourn_correlation(grid)}
            )
    out = _outdir(opts)
    csv_path = out / f"{opts['prefix']}.csv"
    _write_rows_csv(
        csv_path,
        ["psi_a", "psi_b", "R"],
        [[f"{r['psi_a']:.17g}", f"{r['psi_b']:.17g}", f"{r['R']:.17g}"] for r in rows],
    )
    print(f"wrote {csv_path} ({len(rows)} points)")
    if opts["plot"]:
        from . import plots

        plots.plot_correlation_curves(rows, out / f"{opts['prefix']}.png")
    return 0


# ---------------------------------------------------------------- validate

VALIDATE_DEFAULTS = {
    "mode": "table3", "n_jobs": 100_000, "seed": None, "n_seeds": 5,
    "lam": 1.0, "psi_grid": [0.1, 0.2, 0.5, 0.75, 0.8],
    "n_grid": [1, 2, 3, 5, 6, 8], "workers": 1,
    "outdir": None, "prefix": "validate", "plot": False,
}


def _region_points(regions, n_grid, psi_grid):
    """Grid points lying inside any published acceptance region."""
    points = set()
    for region in regions:
        n_hi = region["n_max"] if region["n_max"] is not None else math.inf
        ns = [n for n in n_grid if region["n_min"] <= n <= n_hi]
        for n_a in ns:
            for n_b in ns:
                for psi_a in psi_grid:
                    if psi_a > region["psi_a_max"]:
                        continue
                    for psi_b in psi_grid:
                        if psi_b > region["psi_b_max"]:
                            continue
                        points.add((n_a, n_b, psi_a, psi_b))
    return sorted(points)


def _validate_table3(opts, out: Path) -> None:
    fixture = fixtures.table3_cells()
    seeds = [int(opts["seed"]) + i for i in range(int(opts["n_seeds"]))]
    rows = []
    mismatches = 0
    for cell in fixture["cells"]:
        params = NetworkParams.from_utilization(
            cell["lambda"], cell["n_a"], cell["psi_a"], cell["n_b"], cell["psi_b"]
        )
        stats, verdicts, deltas = [], [], []
        for seed in seeds:
            rep = gof.hypothesis1_verdict(params, int(opts["n_jobs"]), seed)
            stats.append(rep.chi2)
            verdicts.append(rep.accepted)
            deltas.append(rep.delta_t_rel)
        accepted = sum(verdicts) > len(verdicts) / 2
        match = accepted == (not cell["rejected"])
        mismatches += not match
        rows.append(
            [
                cell["lambda"], cell["n_a"], cell["n_b"],
                cell["psi_a"], cell["psi_b"],
                f"{np.median(stats):.6g}", accepted,
                not cell["rejected"], match,
                f"{100 * np.median(deltas):.4g}", cell["delta_pct"],
            ]
        )
    _write_rows_csv(
        out / f"{opts['prefix']}_table3.csv",
        [
            "lambda", "n_a", "n_b", "psi_a", "psi_b", "chi2_median",
            "accepted", "published_accepted", "verdict_match",
            "delta_pct", "published_delta_pct",
        ],
        rows,
    )
    print(f"table3: {len(rows)} cells, {mismatches} verdict mismatch(es)")


def _validate_region(opts, out: Path) -> None:
    psi_grid = opts["psi_grid"]
    if isinstance(psi_grid, str):
        psi_grid = _float_list(psi_grid)
    n_grid = opts["n_grid"]
    if isinstance(n_grid, str):
        n_grid = _int_list(n_grid)
    points = _region_points(fixtures.table1_regions()["regions"], n_grid, psi_grid)
    seeds = [int(opts["seed"]) + i for i in range(int(opts["n_seeds"]))]
    rows = gof.validity_region_scan(
        points, float(opts["lam"]), int(opts["n_jobs"]), seeds,
        workers=int(opts["workers"]),
    )
    _write_rows_csv(
        out / f"{opts['prefix']}_region.csv",
        ["n_a", "n_b", "psi_a", "psi_b", "chi2", "accepted", "delta_t_rel"],
        [
            [
                r["n_a"], r["n_b"], r["psi_a"], r["psi_b"],
                f"{r['chi2']:.6g}", r["accepted"], f"{r['delta_t_rel']:.6g}",
            ]
            for r in rows
        ],
    )
    n_acc = sum(r["accepted"] for r in rows)
    print(f"region scan: {n_acc}/{len(rows)} points accepted")
    if opts["plot"]:
        from . import plots

        plots.plot_region_scan(rows, out / f"{opts['prefix']}_region.png")


def cmd_validate(args) -> int:
    opts = _merged_options(args, VALIDATE_DEFAULTS)
    if opts["seed"] is None:
        print("validate: --seed is required", file=sys.stderr)
        return 2
    out = _outdir(opts)
    if opts["mode"] == "table3":
        _validate_table3(opts, out)
    elif opts["mode"] == "region":
        _validate_region(opts, out)
    else:
        print(f"validate: unknown mode {opts['mode']!r}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------- parser

def _add_common(sub):
    sub.add_argument("--config", help="JSON file with option defaults")
    sub.add_argument("--outdir", help="output directory (default $FJSYNC_OUTDIR or .)")
    sub.add_argument("--prefix", help="output filename prefix")
    sub.add_argument("--plot", action="store_true", default=None,
                     help="also render a matplotlib figure")


def _add_network(sub):
    sub.add_argument("--lambda", "--lam", dest="lam", type=float,
                     help="arrival rate")
    sub.add_argument("--na", type=_servers, help="branch-a servers (int or 'inf')")
    sub.add_argument("--mua", type=float, help="branch-a per-server rate")
    sub.add_argument("--nb", type=_servers, help="branch-b servers (int or 'inf')")
    sub.add_argument("--mub", type=float, help="branch-b per-server rate")
    sub.add_argument("--psi-a", dest="psi_a", type=float,
                     help="branch-a utilization (alternative to --mua)")
    sub.add_argument("--psi-b", dest="psi_b", type=float,
                     help="branch-b utilization (alternative to --mub)")
    sub.add_argument("--inf-servers", dest="inf_servers", action="store_true",
                     default=None, help="infinite servers in both branches")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fjsync",
        description="Fork-join marked-pair synchronizer: analytics, simulation, validation",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("analytic", help="closed-form waiting density, mean, occupancy")
    _add_common(p)
    _add_network(p)
    p.set_defaults(func=cmd_analytic)

    p = commands.add_parser("simulate", help="seeded simulation run: samples CSV + summary JSON")
    _add_common(p)
    _add_network(p)
    p.add_argument("--n-jobs", dest="n_jobs", type=int, help="number of forked pairs")
    p.add_argument("--seed", type=int, help="PRNG seed (required)")
    p.add_argument("--warmup", type=float, help="warmup fraction to discard [0, 1)")
    p.set_defaults(func=cmd_simulate)

    p = commands.add_parser("ck-solve", help="stationary joint queue-length solver")
    _add_common(p)
    p.add_argument("--lambda", "--lam", dest="lam", type=float)
    p.add_argument("--mua", type=float)
    p.add_argument("--mub", type=float)
    p.add_argument("--psi-a", dest="psi_a", type=float)
    p.add_argument("--psi-b", dest="psi_b", type=float)
    p.add_argument("--n", type=int, help="grid truncation size")
    p.add_argument("--d3-tol", dest="d3_tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.set_defaults(func=cmd_ck_solve)

    p = commands.add_parser("fig3", help="correlation curves R(psi_a) per psi_b")
    _add_common(p)
    p.add_argument("--psi-b-values", dest="psi_b_values", help="comma list")
    p.add_argument("--psi-a-sweep", dest="psi_a_sweep",
                   help="'start:stop:step' or comma list")
    p.add_argument("--n", type=int)
    p.add_argument("--d3-tol", dest="d3_tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.set_defaults(func=cmd_fig3)

    p = commands.add_parser("validate", help="reproduce the published verdict tables")
    _add_common(p)
    p.add_argument("--mode", choices=["table3", "region"])
    p.add_argument("--n-jobs", dest="n_jobs", type=int)
    p.add_argument("--seed", type=int, help="base PRNG seed (required)")
    p.add_argument("--n-seeds", dest="n_seeds", type=int,
                   help="seeds per point for the majority verdict")
    p.add_argument("--lambda", "--lam", dest="lam", type=float,
                   help="arrival rate for region scans")
    p.add_argument("--psi-grid", dest="psi_grid", help="comma list")
    p.add_argument("--n-grid", dest="n_grid", help="comma list (int or 'inf')")
    p.add_argument("--workers", type=int, help="parallel grid points")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"fjsync: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
