"""Command line entry point: ``qmrigid <command> ...``.

Every command runs as a one-stage campaign, so ``--out DIR`` produces the
same JSON report and manifest a campaign would.  The exit code is 0 only if
every asserted invariant holds.
"""
from __future__ import annotations

import argparse
import json
import sys
from importlib.resources import files
from pathlib import Path

from . import io as qio
from .campaign import OK_STATES, CampaignConfig, ConfigError, Stage, emit_plot_data, run_campaign
from .generators import KINDS, GeneratorError


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        out[key] = _value(val)
    return out


def _generator(args) -> dict:
    return {"kind": args.kind, "params": _params(args.param)}


def _add_generator(p, required=True):
    p.add_argument("--kind", choices=KINDS, required=required)
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="generator parameter, value parsed as JSON (repeatable)")


def _add_input(p):
    """A space from a generator or from a distance CSV."""
    _add_generator(p, required=False)
    p.add_argument("--dist", type=Path, help="distance CSV (first line n, then n rows)")


def _space_params(args, params: dict) -> tuple[dict, dict]:
    if args.dist is not None:
        params["input"] = "file"
        return params, {"file": qio.read_distance_csv(args.dist)}
    if args.kind is None:
        raise ConfigError("give --kind (with --param) or --dist")
    params["generator"] = _generator(args)
    return params, {}


def _stage_params(args) -> tuple[dict, dict]:
    c = args.command
    if c == "gen":
        return {**_generator(args), "write_matrix_max": args.write_matrix_max}, {}
    if c == "desnowflake":
        p = {"pairs": args.pairs, "max_ratio": args.max_ratio, "max_growth": args.max_growth}
        if args.eps is not None:
            p["eps"] = args.eps
        if args.k_window:
            p["k_window"] = args.k_window
        if args.reference:
            p["reference"] = args.reference
        return _space_params(args, p)
    if c == "cube-check":
        fams = []
        for f in args.family or ["2:1000:200", "3:200:500"]:
            try:
                n, count, max_sets = map(int, f.split(":"))
            except ValueError:
                raise ConfigError(f"--family expects n:count:max_sets, got {f!r}") from None
            fams.append({"n": n, "count": count, "max_sets": max_sets})
        return {"families": fams, "grid": args.grid}, {}
    if c == "hyperbolicity":
        if args.dist is not None or args.kind is not None:
            p = {"base": args.base}
            if args.max_delta is not None:
                p["max_delta"] = args.max_delta
            return _space_params(args, p)
        return {"trees": {"count": args.trees, "n": args.tree_size},
                "disk": {"n": args.disk_size, "radius": args.radius, "seeds": args.disk_seeds},
                "max_deviation": args.max_deviation}, {}
    if c == "visual":
        return {"group": args.group, "depth": args.depth, "eps_grid": args.eps_grid}, {}
    if c == "orbit":
        return {"group": args.group, "R": args.R, "margin": args.margin,
                "lattice_check": args.lattice_check}, {}
    if c == "entropy":
        p = {"group": args.group, "R": args.R or args.window[1], "window": args.window}
        if args.expect_slope is not None:
            p.update(expect_slope=args.expect_slope, tol=args.tol)
        if args.max_slope is not None:
            p["max_slope"] = args.max_slope
        return p, {}
    if c == "elevator":
        return {"group": args.group, "runs": args.runs, "r_range": args.r_range, "L": args.L,
                "max_ratio": args.max_ratio, "scaling_runs": args.scaling_runs}, {}
    raise ConfigError(f"unknown command {c!r}")  # pragma: no cover


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmrigid", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help, seeded):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, required=seeded, default=None if seeded else 0,
                       help="random seed" + (" (required)" if seeded else " (unused, deterministic)"))
        p.add_argument("--out", type=Path, help="directory for the report and manifest")
        p.add_argument("--json", action="store_true", help="print the full report")
        return p

    p = cmd("gen", "generate a sample space or group model", True)
    _add_generator(p)
    p.add_argument("--write-matrix-max", type=int, default=2000,
                   help="write the distance CSV only up to this many points")

    p = cmd("desnowflake", "chain-metric recovery of d**(1/eps)", True)
    _add_input(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--pairs", type=int, default=500)
    p.add_argument("--k-window", type=int, nargs=2, metavar=("KMIN", "KMAX"))
    p.add_argument("--reference", choices=["unsnowflaked"])
    p.add_argument("--max-ratio", type=float, default=16.0)
    p.add_argument("--max-growth", type=float, default=0.1)

    p = cmd("cube-check", "length-volume inequality on random box covers", True)
    p.add_argument("--family", action="append", metavar="N:COUNT:MAX_SETS")
    p.add_argument("--grid", type=int, nargs=2, default=[2, 12], metavar=("MLO", "MHI"))

    p = cmd("hyperbolicity", "four-point delta (trees and disk samples, or a given space)", True)
    _add_input(p)
    p.add_argument("--base", type=int, default=0)
    p.add_argument("--max-delta", type=float)
    p.add_argument("--trees", type=int, default=10)
    p.add_argument("--tree-size", type=int, default=200)
    p.add_argument("--disk-size", type=int, default=200)
    p.add_argument("--disk-seeds", type=int, default=5)
    p.add_argument("--radius", type=float, default=6.0)
    p.add_argument("--max-deviation", type=float, default=0.2)

    p = cmd("visual", "visual metric sweep on a limit-set sample", False)
    p.add_argument("--group", default="schottky:0.9")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--eps-grid", type=float, nargs=3, default=[0.1, 1.5, 15],
                   metavar=("LO", "HI", "COUNT"))

    p = cmd("orbit", "orbit counts N(R) of a group model", False)
    p.add_argument("--group", default="psl2z")
    p.add_argument("--R", type=float, default=8.0)
    p.add_argument("--margin", type=float, default=2.0)
    p.add_argument("--lattice-check", action="store_true")

    p = cmd("entropy", "exponential growth rate of orbit counts", False)
    p.add_argument("--group", default="psl2z")
    p.add_argument("--R", type=float)
    p.add_argument("--window", type=float, nargs=2, default=[6.0, 12.0], metavar=("LO", "HI"))
    p.add_argument("--expect-slope", type=float)
    p.add_argument("--tol", type=float, default=0.15)
    p.add_argument("--max-slope", type=float)

    p = cmd("elevator", "conformal elevator constants on seeded balls", True)
    p.add_argument("--group", default="triangle:2,3,7")
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--r-range", type=float, nargs=2, default=[1e-3, 1e-1], metavar=("RMIN", "RMAX"))
    p.add_argument("--L", type=float, nargs="+", default=[2, 8, 32])
    p.add_argument("--max-ratio", type=float, default=10.0)
    p.add_argument("--scaling-runs", type=int, default=8)

    p = sub.add_parser("campaign", help="run a campaign config")
    p.add_argument("config", nargs="?", default="acceptance",
                   help="config path, or 'acceptance' for the shipped acceptance config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="override the output directory")

    p = sub.add_parser("plot-data", help="flat CSV view of a report")
    p.add_argument("report", type=Path)
    p.add_argument("--view", required=True)
    p.add_argument("--out", type=Path, help="CSV file (default: stdout)")
    return ap


def _print_stage(entry: dict, stream=None):
    stream = stream or sys.stdout
    line = f"{entry['name']}: {entry['status'].upper()}"
    if "wall_time_s" in entry:
        line += f" ({entry['wall_time_s']:.1f}s)"
    print(line, file=stream)
    for k, v in entry.get("invariants", {}).items():
        print(f"  {'ok  ' if v else 'FAIL'} {k}", file=stream)
    for key in ("error", "reason"):
        if key in entry:
            print(f"  {key}: {entry[key]}", file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot-data":
            text = emit_plot_data(str(args.report), args.view)
            if args.out:
                args.out.write_text(text)
            else:
                sys.stdout.write(text)
            return 0
        if args.command == "campaign":
            path = files("qmrigid") / "configs" / "acceptance.json" if args.config == "acceptance" \
                else Path(args.config)
            cfg = CampaignConfig.load(path, out=args.out, seed=args.seed)
            res = run_campaign(cfg, log=lambda m: print(m, flush=True))
            print("campaign:", "PASS" if res.ok else "FAIL")
            return 0 if res.ok else 1
        params, pre = _stage_params(args)
        stage = Stage(args.command, args.command, params, tuple(pre))
        cfg = CampaignConfig(args.seed, str(args.out) if args.out else None, (stage,))
        res = run_campaign(cfg, preloaded=pre)
    except (ConfigError, GeneratorError, qio.SchemaError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    entry = res.manifest["stages"][0]
    _print_stage(entry)
    if args.json and args.command in res.reports:
        sys.stdout.write(qio.dumps(res.reports[args.command]))
    return 0 if entry["status"] in OK_STATES else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
