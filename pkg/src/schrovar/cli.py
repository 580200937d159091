"""Command-line interface: ``schrovar <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import NumericalFailure, SchrovarError, UndefinedCriticalRadius
from .grid import Ball, SpatialGrid, TimeGrid, make_geometric_time_grid
from .harness import (
    BoundParams,
    ExperimentConfig,
    build_function_family,
    verify_kernel_bounds,
    verify_theorem,
    write_json,
    write_rows_csv,
)
from .potentials import CriticalRadiusField, parse_spec_string, potential_from_spec
from .semigroup import handle_from_spec, heat_kernel
from .varops import OPERATORS, BlockStructure, SampledCurve, apply_operator, sample_curve
from .weights import CampanatoParams, blo_defect, bmo_norm, weight_from_spec


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchrovarError(f"cannot read {path}: {exc}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_rho(args) -> int:
    V = potential_from_spec(args.potential, args.d)
    x = _floats(args.x)
    if args.quadrature:
        grid = SpatialGrid.centered(args.d, args.half_width, args.n)
        field = CriticalRadiusField(V, grid=grid, use_closed_form=False)
    else:
        field = CriticalRadiusField(V)
    print(f"{field(x):.12g}")
    return 0


def _engine_spec(args) -> dict:
    if args.config:
        spec = _load_json(args.config)
        return spec.get("engine", spec)
    return {"L": args.L, "n": args.n, "m": args.m, "potential": args.potential, "d": args.d,
            "k": args.k, "beta": args.beta}


def cmd_kernel(args) -> int:
    handle = handle_from_spec(_engine_spec(args))
    value = heat_kernel(handle, args.t, _floats(args.x), _floats(args.y))
    print(f"{float(np.asarray(value).reshape(-1)[0]):.12g}")
    return 0


def _read_curve(path) -> SampledCurve:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"t", "value"} <= set(rows[0]):
        raise SchrovarError("curve CSV needs columns t,value")
    t = np.array([float(r["t"]) for r in rows])
    v = np.array([float(r["value"]) for r in rows])
    return SampledCurve(TimeGrid(t), v, {"source": str(path)})


def _generated_curve(cfg: dict, seed: int) -> SampledCurve:
    handle = handle_from_spec(cfg["engine"])
    d = handle.d
    fam = build_function_family([cfg.get("function", {"family": "constant", "values": [1.0]})], d,
                                [cfg.get("x", [0.0] * d)], None, seed)
    grid = handle.grid()
    f = fam[0](grid.points().reshape(-1, d)).reshape(grid.shape)
    tw = cfg.get("time", {"min": 0.01, "max": 4.0, "n": 32})
    tgrid = make_geometric_time_grid(float(tw["min"]), float(tw["max"]), int(tw["n"]))
    return sample_curve(handle, f, np.asarray(cfg.get("x", [0.0] * d), dtype=float), tgrid, grid)


def cmd_varop(args) -> int:
    if args.curve:
        curve = _read_curve(args.curve)
    elif args.config:
        curve = _generated_curve(_load_json(args.config), args.seed)
    else:
        raise SchrovarError("varop needs --curve or --config")
    blocks = None
    if args.op == "osc" and args.blocks != "dyadic":
        blocks = BlockStructure(np.asarray(_floats(args.blocks)))
    value = apply_operator(args.op, curve, args.sigma, blocks)
    print(f"{float(value):.12g}")
    return 0


def _centers(text: str, d: int) -> np.ndarray:
    """``"0,0,0;0.5,0,0"`` or ``"lattice:extent=1,per_axis=3"``."""
    if text.startswith("lattice"):
        spec = parse_spec_string(text)
        ax = np.linspace(-float(spec.get("extent", 1.0)), float(spec.get("extent", 1.0)), int(spec.get("per_axis", 3)))
        mesh = np.meshgrid(*([ax] * d), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)
    return np.array([_floats(c) for c in text.split(";")]).reshape(-1, d)


def cmd_norm(args) -> int:
    V = potential_from_spec(args.potential, args.d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rho = CriticalRadiusField(V)
        params = CampanatoParams(args.alpha, args.p, args.theta, weight_from_spec(args.weight), rho, args.q)
    centers = _centers(args.centers, args.d)
    fspec = parse_spec_string(args.function)
    fspec["family"] = fspec.pop("kind")
    for key in ("values", "scales"):
        if key in fspec:
            fspec[key] = [fspec[key]]
    fn = build_function_family([fspec], args.d, centers[:1], rho, args.seed)[0]
    estimator = bmo_norm if args.space == "bmo" else blo_defect
    est = estimator(fn, params, centers, n_radii=args.n_radii)
    out = _out_dir(args)
    rows = [{"experiment_id": f"norm-{args.space}", "f_id": fn.fid, "center": r.center, "radius": r.radius,
             "lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio} for r in est.records]
    csv_path = write_rows_csv(rows, out / f"norm_{args.space}.csv")
    json_path = write_json({"value": est.value, "small_ball_part": est.small_ball_part,
                            "rho_ball_part": est.rho_ball_part, "family_size": est.family_size,
                            "witness_balls": [[b.center.tolist(), b.radius] for b in est.witness_balls]},
                           out / f"norm_{args.space}.json")
    print(f"{est.value:.12g}")
    print(csv_path)
    print(json_path)
    return 0


def cmd_verify_bounds(args) -> int:
    cfg = _load_json(args.config)
    if "engine" not in cfg:
        raise SchrovarError("verify-bounds config needs an engine")
    reports = verify_kernel_bounds(cfg["engine"], BoundParams(**cfg.get("bounds", {})), cfg.get("samples"),
                                   refine=bool(cfg.get("refine", False)), seed=args.seed)
    path = write_json([r.to_dict() for r in reports], _out_dir(args) / "bounds.json")
    for r in reports:
        print(f"{r.inequality_id}\t{r.constant:.6g}")
    print(path)
    return 0


def cmd_verify_theorem(args) -> int:
    config = ExperimentConfig.load(args.config, theorem_mode=not args.explore)
    if args.seed is not None:
        config.seed = args.seed
    report = verify_theorem(config, theorem_mode=not args.explore, workers=args.workers)
    out = _out_dir(args)
    csv_path = write_rows_csv(report.rows(), out / f"{config.experiment_id}.csv")
    json_path = write_json(report.to_dict(), out / f"{config.experiment_id}.json")
    print(f"sup_ratio\t{report.sup_ratio:.6g}")
    print(f"spread\t{report.spread:.6g}")
    if report.flagged:
        print("warning: ratio spread across radius levels exceeds the gate")
    print(csv_path)
    print(json_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schrovar", description="Schroedinger semigroup variation workbench")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--explore", action="store_true", help="skip theorem-mode parameter checks")

    sp = sub.add_parser("rho", help="critical radius at a point")
    common(sp)
    sp.add_argument("--potential", default="abs2m:m=1")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--x", default="0,0,0")
    sp.add_argument("--quadrature", action="store_true", help="use the midpoint rule instead of the closed form")
    sp.add_argument("--half-width", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=161)
    sp.set_defaults(func=cmd_rho)

    sp = sub.add_parser("kernel", help="kernel value t^k d_t^k W_t(x, y)")
    common(sp)
    sp.add_argument("--potential", default="abs2m:m=1")
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--L", type=float, default=12.0)
    sp.add_argument("--n", type=int, default=1024)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--k", type=int, default=0)
    sp.add_argument("--beta", type=float, default=1.0)
    sp.add_argument("--t", type=float, required=True)
    sp.add_argument("--x", required=True)
    sp.add_argument("--y", required=True)
    sp.set_defaults(func=cmd_kernel)

    sp = sub.add_parser("varop", help="variational functional of a curve")
    common(sp)
    sp.add_argument("--op", choices=OPERATORS, default="var")
    sp.add_argument("--sigma", type=float, default=3.0)
    sp.add_argument("--blocks", default="dyadic", help="'dyadic' or comma-separated boundaries")
    sp.add_argument("--curve", help="CSV with columns t,value")
    sp.set_defaults(func=cmd_varop)

    sp = sub.add_parser("norm", help="BMO / BLO norm estimate over a ball family")
    common(sp)
    sp.add_argument("--space", choices=("bmo", "blo"), default="bmo")
    sp.add_argument("--potential", default="abs2m:m=1")
    sp.add_argument("--d", type=int, default=3)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--p", type=float, default=2.0)
    sp.add_argument("--theta", type=float, default=0.1)
    sp.add_argument("--q", type=float, default=4.0)
    sp.add_argument("--weight", default="constant")
    sp.add_argument("--centers", default="lattice:extent=0.5,per_axis=2")
    sp.add_argument("--function", default="constant:values=1")
    sp.add_argument("--n-radii", type=int, default=6)
    sp.set_defaults(func=cmd_norm)

    sp = sub.add_parser("verify-bounds", help="certify kernel bounds from a JSON config")
    common(sp)
    sp.set_defaults(func=cmd_verify_bounds)

    sp = sub.add_parser("verify-theorem", help="condition (i)/(ii) ratio sweep from a JSON config")
    common(sp)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_verify_theorem)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.command in ("verify-bounds", "verify-theorem") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return 1
    if args.seed is None and args.command != "verify-theorem":
        args.seed = 0
    try:
        return args.func(args)
    except (NumericalFailure, UndefinedCriticalRadius, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (SchrovarError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
