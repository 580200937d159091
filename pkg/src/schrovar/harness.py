"""Experiment orchestration: kernel bound certification and BMO -> BLO ratio sweeps.

Test functions are finite sums of separable products g_1(x_1)...g_d(x_d).
Their semigroup curves factor through the 1D engines, so high-resolution
axis engines serve any dimension without a d-dimensional grid.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConstraintViolation, InvalidArgument, OutOfDomain, UndefinedCriticalRadius
from .grid import (
    Ball,
    SpatialGrid,
    TimeGrid,
    ball_cells,
    ball_mean,
    make_dyadic_time_grid,
    merge_time_points,
)
from .potentials import CriticalRadiusField, potential_from_spec
from .reports import BoundCheckReport, _plain, argmax_report
from .semigroup import (
    KernelHandle,
    _leibniz,
    compositions,
    engine_handle,
    expansion_coefficients,
    handle_from_spec,
    kernel_rows,
    mass_defect,
    psi_profile,
    spectral_factor,
)
from .varops import BlockStructure, SampledCurve, apply_operator
from .weights import CampanatoParams, bmo_norm, default_radii, weight_from_spec

CSV_COLUMNS = ("experiment_id", "f_id", "center", "radius", "lhs", "rhs", "ratio")
CONFIG_KEYS = ("engine", "operator", "sigma", "blocks", "alpha", "p", "theta", "q", "weight",
               "functions", "balls", "time", "seed")
THEOREM_OPERATORS = ("var", "osc", "sv", "max")


# --------------------------------------------------------------------------- test functions


@dataclass(frozen=True, eq=False)
class SeparableFunction:
    """f(x) = sum_j coef_j * prod_i g_{j,i}(x_i); a factor ``None`` means 1."""

    fid: str
    terms: tuple
    dimension: int

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        p = p.reshape(-1, self.dimension) if p.shape[-1] == self.dimension else p.reshape(-1, 1)
        out = np.zeros(p.shape[0])
        for coef, factors in self.terms:
            val = np.full(p.shape[0], float(coef))
            for i, g in enumerate(factors):
                if g is not None:
                    val = val * g(p[:, i])
            out += val
        return out

    @property
    def is_zero(self) -> bool:
        return all(c == 0 for c, _ in self.terms)


def constant_function(value: float, d: int) -> SeparableFunction:
    return SeparableFunction(f"F1-const-{value:g}", ((float(value), (None,) * d),), d)


def _gauss(c, s):
    return lambda x: np.exp(-((x - c) ** 2) / (2 * s * s))


def _smooth_box(c, s):
    eps = s / 4
    return lambda x: 0.5 * (np.tanh((x - c + s) / eps) - np.tanh((x - c - s) / eps))


def bump_function(center, scale: float, shape: str = "gaussian", fid: str | None = None) -> SeparableFunction:
    center = np.atleast_1d(np.asarray(center, dtype=float))
    make = {"gaussian": _gauss, "box": _smooth_box}.get(shape)
    if make is None:
        raise InvalidArgument(f"unknown bump shape {shape!r}")
    factors = tuple(make(c, scale) for c in center)
    return SeparableFunction(fid or f"F2-{shape}-s{scale:.3g}", ((1.0, factors),), center.size)


def _clipped_log(a, eps):
    return lambda x: np.log(np.maximum(np.abs(x - a), eps))


def log_profile(center, clip: float, fid: str | None = None) -> SeparableFunction:
    """sum_i log max(|x_i - a_i|, clip)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = center.size
    terms = tuple(
        (1.0, tuple(_clipped_log(a, clip) if i == j else None for j in range(d))) for i, a in enumerate(center)
    )
    return SeparableFunction(fid or f"F3-log-clip{clip:.3g}", terms, d)


def _cos(w, ph):
    return lambda x: np.cos(w * x + ph)


def trig_polynomial(d: int, n_terms: int, max_freq: float, rng: np.random.Generator, fid: str) -> SeparableFunction:
    terms = []
    for _ in range(n_terms):
        coef = rng.normal() / math.sqrt(n_terms)
        factors = tuple(_cos(rng.uniform(0, max_freq), rng.uniform(0, 2 * math.pi)) for _ in range(d))
        terms.append((float(coef), factors))
    return SeparableFunction(fid, tuple(terms), d)


def zero_function(d: int) -> SeparableFunction:
    return SeparableFunction("F0-zero", ((0.0, (None,) * d),), d)


def build_function_family(specs: Sequence[dict], d: int, centers, rho: CriticalRadiusField | None,
                          seed: int, min_scale: float = 0.0) -> list:
    """Functions from config entries keyed by ``family``.

    - ``{"family": "zero"}``
    - ``{"family": "constant", "values": [...]}``
    - ``{"family": "bump", "scales": [...], "shape": "gaussian"|"box"}``; scales are
      fractions of rho at each ball center, one bump per (center, scale)
    - ``{"family": "log", "clip": real}``; one profile per center, clip as a fraction of rho
    - ``{"family": "trig", "count": int, "terms": int, "max_freq": real}``
    """
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float).reshape(-1, d)
    out = []
    for spec in specs:
        fam = spec.get("family")
        if fam == "zero":
            out.append(zero_function(d))
        elif fam == "constant":
            out.extend(constant_function(v, d) for v in spec.get("values", [1.0]))
        elif fam in ("bump", "log"):
            if rho is None:
                raise InvalidArgument(f"{fam} functions need a critical radius")
            for ci, c in enumerate(centers):
                rc = rho(c)
                if fam == "bump":
                    shape = spec.get("shape", "gaussian")
                    for s in spec.get("scales", [0.01, 0.0316, 0.1, 0.316, 1.0]):
                        scale = max(s * rc, min_scale)
                        out.append(bump_function(c, scale, shape, f"F2-{shape}-c{ci}-s{s:g}"))
                else:
                    clip = max(spec.get("clip", 0.01) * rc, min_scale)
                    out.append(log_profile(c, clip, f"F3-log-c{ci}"))
        elif fam == "trig":
            for j in range(int(spec.get("count", 2))):
                out.append(trig_polynomial(d, int(spec.get("terms", 4)), float(spec.get("max_freq", 4.0)), rng,
                                           f"F4-trig-{j}"))
        else:
            raise InvalidArgument(f"unknown function family {fam!r}")
    return out


# --------------------------------------------------------------------------- curves on ball lattices


def separable_curves(handle: KernelHandle, fn: SeparableFunction, coords: Sequence[np.ndarray], times) -> np.ndarray:
    """t^k d_t^k exp(-tL) fn on the tensor lattice of ``coords``; shape (n_t, *lens)."""
    if handle.engines is None or handle.beta != 1.0:
        raise InvalidArgument("separable curves need axis engines and beta = 1")
    d, k = handle.d, handle.k
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lens = [len(c) for c in coords]
    basis = [e.eigenfunctions(c) for e, c in zip(handle.engines, coords)]
    factors = [{a: e.factor(times, a) for a in range(k + 1)} for e in handle.engines]
    total = np.zeros((times.size, *lens))
    for coef, gs in fn.terms:
        if coef == 0:
            continue
        axis_curves = []
        for i, (e, g) in enumerate(zip(handle.engines, gs)):
            gv = np.ones(e.n) if g is None else g(e.nodes)
            c = e.project(gv)
            shape = [times.size] + [1] * d
            shape[1 + i] = lens[i]
            axis_curves.append({a: ((factors[i][a] * c) @ basis[i].T).reshape(shape) for a in range(k + 1)})
        total = total + coef * _leibniz(k, d, lambda i, a: axis_curves[i][a])
    return total


def tensor_curves(handle: KernelHandle, f_grid: np.ndarray, coords: Sequence[np.ndarray], times) -> np.ndarray:
    """Same as :func:`separable_curves` for a function sampled on the handle grid (any beta)."""
    d = handle.d
    times = np.atleast_1d(np.asarray(times, dtype=float))
    W = expansion_coefficients(handle, f_grid)
    F = spectral_factor(handle.eigenvalue_tensor(), times, handle.k, handle.beta) * W
    out = F
    for e, c in zip(handle.engines, coords):
        # contract the leading mode axis; lattice axes accumulate at the end
        out = np.tensordot(out, e.eigenfunctions(c), axes=(1, 1))
    return out.reshape(times.size, *[len(c) for c in coords])


def curves_on_ball(handle: KernelHandle, fn, ball: Ball, times, cells_per_radius: int = 8):
    """Curves at every lattice cell center of ``ball``: (BallCells, values (n_t, n_cells))."""
    lattice = SpatialGrid.around_ball(ball, cells_per_radius)
    cells = ball_cells(ball, lattice)
    if isinstance(fn, SeparableFunction) and handle.beta == 1.0:
        vals = separable_curves(handle, fn, cells.coords, times)
    else:
        grid = handle.grid()
        f_grid = fn(grid.points().reshape(-1, handle.d)).reshape(grid.shape) if callable(fn) else fn
        vals = tensor_curves(handle, f_grid, cells.coords, times)
    return cells, vals[:, cells.mask]


# --------------------------------------------------------------------------- configuration


@dataclass
class ExperimentConfig:
    engine: dict
    operator: str
    sigma: float
    blocks: object
    alpha: float
    p: float
    theta: float
    q: float
    weight: dict
    functions: list
    balls: dict
    time: dict
    seed: int
    experiment_id: str = "experiment"

    @classmethod
    def from_dict(cls, data: dict, theorem_mode: bool = True, experiment_id: str = "experiment") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise InvalidArgument("configuration must be a JSON object")
        missing = [k for k in CONFIG_KEYS if k not in data]
        extra = [k for k in data if k not in CONFIG_KEYS]
        if missing or extra:
            raise InvalidArgument(f"config keys: missing {missing}, unexpected {extra}")
        try:
            cfg = cls(
                engine=dict(data["engine"]),
                operator=str(data["operator"]),
                sigma=float(data["sigma"]),
                blocks=data["blocks"],
                alpha=float(data["alpha"]),
                p=float(data["p"]),
                theta=float(data["theta"]),
                q=float(data["q"]),
                weight=data["weight"],
                functions=list(data["functions"]),
                balls=dict(data["balls"]),
                time=dict(data["time"]),
                seed=int(data["seed"]),
                experiment_id=experiment_id,
            )
        except (TypeError, ValueError) as exc:
            raise InvalidArgument(f"malformed config value: {exc}") from exc
        cfg.validate(theorem_mode)
        return cfg

    @classmethod
    def load(cls, path, theorem_mode: bool = True) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgument(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, theorem_mode, experiment_id=path.stem)

    @property
    def dimension(self) -> int:
        pot = self.engine.get("potential")
        return int(self.engine.get("d", pot.get("d", 1) if isinstance(pot, dict) else 1))

    def validate(self, theorem_mode: bool = True):
        if self.operator not in THEOREM_OPERATORS:
            raise InvalidArgument(f"operator must be one of {THEOREM_OPERATORS}")
        if not (self.blocks == "dyadic" or isinstance(self.blocks, list)):
            raise InvalidArgument("blocks must be 'dyadic' or a list of reals")
        for key in ("min", "max", "n"):
            if key not in self.time:
                raise InvalidArgument(f"time window is missing {key!r}")
        if "centers" not in self.balls:
            raise InvalidArgument("ball family needs centers")
        if theorem_mode:
            if self.operator == "var" and not self.sigma > 2:
                raise ConstraintViolation("theorem runs need sigma > 2")
            self.campanato_params(None).require_theorem_mode()

    def time_grid(self) -> TimeGrid:
        t0, t1, n = float(self.time["min"]), float(self.time["max"]), int(self.time["n"])
        blocks = max(1, math.ceil(math.log2(t1) - 1e-12) - math.floor(math.log2(t0) + 1e-12))
        grid = make_dyadic_time_grid(t0, t1, max(1, round(n / blocks)))
        if isinstance(self.blocks, list):
            grid = merge_time_points(grid, self.blocks)
        return grid

    def block_structure(self, tgrid: TimeGrid) -> BlockStructure:
        if self.blocks == "dyadic":
            return BlockStructure.dyadic(tgrid)
        return BlockStructure(np.asarray(self.blocks, dtype=float))

    def campanato_params(self, rho: CriticalRadiusField | None) -> CampanatoParams:
        if rho is None:
            rho = _PlaceholderRho(self.dimension)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return CampanatoParams(self.alpha, self.p, self.theta, weight_from_spec(self.weight), rho, self.q)


class _PlaceholderRho:
    """Stand-in used only for parameter validation before a potential is built."""

    def __init__(self, d):
        self.dimension = d


def rho_field_for(handle: KernelHandle, engine_spec: dict) -> CriticalRadiusField:
    if handle.closed_form == "free":
        raise UndefinedCriticalRadius("the free kernel has no critical radius")
    V = potential_from_spec(engine_spec["potential"], handle.d)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return CriticalRadiusField(V)


# --------------------------------------------------------------------------- theorem harness


@dataclass
class TheoremReport:
    condition_i: list
    condition_ii: list
    sup_ratio: float
    spread: float
    level_sups: dict
    family_sensitivity: list
    flagged: bool
    skipped: list
    witness: dict | None
    details: dict = field(default_factory=dict)

    def rows(self) -> list:
        return self.condition_i + self.condition_ii

    def to_dict(self) -> dict:
        return _plain({
            "sup_ratio": self.sup_ratio,
            "spread": self.spread,
            "flagged": self.flagged,
            "level_sups": {str(k): v for k, v in self.level_sups.items()},
            "family_sensitivity": self.family_sensitivity,
            "skipped": self.skipped,
            "witness": self.witness,
            "condition_i_count": len(self.condition_i),
            "condition_ii_count": len(self.condition_ii),
            **self.details,
        })


def _operator_values(op, tgrid, values, sigma, blocks):
    return np.asarray(apply_operator(op, SampledCurve(tgrid, values), sigma, blocks), dtype=float)


def _evaluate_ball(handle, fn, ball, level, cond, tgrid, op, sigma, blocks, params, fnorm, cpr, exp_id):
    cells, vals = curves_on_ball(handle, fn, ball, tgrid.times, cpr)
    Tf = _operator_values(op, tgrid, vals, sigma, blocks)
    dv = cells.cell_volume
    lhs = float(np.abs(Tf).sum() * dv) if cond == "i" else float((Tf - Tf.min()).sum() * dv)
    w = params.weight(cells.points())
    rhs = cells.volume**params.alpha * float(w.sum() * dv) * fnorm
    return {
        "experiment_id": exp_id,
        "f_id": fn.fid,
        "center": ball.center.tolist(),
        "radius": ball.radius,
        "lhs": lhs,
        "rhs": rhs,
        "ratio": 0.0 if lhs == 0 else lhs / rhs,
        "condition": cond,
        "level": level,
    }


def verify_theorem(config: ExperimentConfig, theorem_mode: bool = True, handle: KernelHandle | None = None,
                   functions: Sequence | None = None, workers: int = 1, spread_gate: float = 10.0) -> TheoremReport:
    """Ratios of the two sufficient conditions for T: BMO -> BLO.

    Condition (i): int_B |T f| over B(x0, rho(x0)) against |B|^alpha w(B) ||f||.
    Condition (ii): int_B (T f - min_B T f) over smaller balls against the same
    right side.  ||f|| is the estimated BMO norm over a ball family that
    contains every tested ball.
    """
    if theorem_mode:
        config.validate(True)
    if handle is None:
        handle = handle_from_spec(config.engine)
    rho = rho_field_for(handle, config.engine)
    params = config.campanato_params(rho)
    d = handle.d
    balls_spec = config.balls
    centers = np.asarray(balls_spec["centers"], dtype=float).reshape(-1, d)
    n_radii = int(balls_spec.get("n_radii", 5))
    floor = float(balls_spec.get("floor_fraction", 0.01))
    cpr = int(balls_spec.get("cells_per_radius", 8))
    norm_radii = int(balls_spec.get("norm_radii", 2 * n_radii))
    min_scale = 2.0 * max(e.h for e in handle.engines) if handle.engines else 0.0
    if functions is None:
        functions = build_function_family(config.functions, d, centers, rho, config.seed, min_scale)
    tgrid = config.time_grid()
    blocks = config.block_structure(tgrid) if config.operator == "osc" else None
    fractions = default_radii(1.0, n_radii, floor)

    tasks, skipped, norms = [], [], {}
    for fn in functions:
        rads = [np.union1d(default_radii(rho(c), norm_radii, floor), rho(c) * fractions) for c in centers]
        est = bmo_norm(fn, params, centers, radii=rads, cells_per_radius=cpr)
        if not est.value > 0:
            skipped.append(fn.fid)
            continue
        norms[fn.fid] = est.value
        for c in centers:
            rc = rho(c)
            tasks.append((fn, Ball(c, rc), 1.0, "i"))
            for s in fractions:
                tasks.append((fn, Ball(c, s * rc), float(s), "ii"))

    def run(task):
        fn, ball, level, cond = task
        return _evaluate_ball(handle, fn, ball, level, cond, tgrid, config.operator, config.sigma, blocks,
                              params, norms[fn.fid], cpr, config.experiment_id)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(t) for t in tasks]

    cond_i = [r for r in rows if r["condition"] == "i"]
    cond_ii = [r for r in rows if r["condition"] == "ii"]
    level_sups: dict = {}
    for r in rows:
        key = round(r["level"], 12)
        level_sups[key] = max(level_sups.get(key, 0.0), r["ratio"])
    sup_ratio = max((r["ratio"] for r in rows), default=0.0)
    positive = [v for v in level_sups.values() if v > 0]
    if not positive:
        spread = 1.0
    elif len(positive) < len(level_sups):
        spread = math.inf
    else:
        spread = max(positive) / min(positive)
    witness = max(rows, key=lambda r: r["ratio"]) if rows and sup_ratio > 0 else None

    # sup ratio over growing prefixes of the function family
    order = {fn.fid: i for i, fn in enumerate(functions)}
    sensitivity = []
    for size in range(1, len(functions) + 1):
        sub = [r["ratio"] for r in rows if order[r["f_id"]] < size]
        sensitivity.append((size, max(sub, default=0.0)))

    details = {
        "operator": config.operator,
        "sigma": config.sigma,
        "k": handle.k,
        "dimension": d,
        "family_size": len(functions),
        "norms": norms,
        "time_points": len(tgrid),
        "theorem_mode": params.theorem_mode,
    }
    return TheoremReport(cond_i, cond_ii, sup_ratio, spread, level_sups, sensitivity,
                         bool(spread > spread_gate), skipped, witness, details)


def decomposition_scenario(f: np.ndarray, B0: Ball, grid: SpatialGrid):
    """Split f = (f - f_B) 1_{2B} + (f - f_B) 1_{(2B)^c} + f_B on the grid."""
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise InvalidArgument("f is not sampled on the grid")
    double = B0.scaled(2.0)
    if not grid.contains_ball(double):
        raise OutOfDomain("2B escapes the grid box")
    fB = ball_mean(f, B0, grid)
    cells = ball_cells(double, grid)
    inside = np.zeros(grid.shape, dtype=bool)
    block = inside[cells.slices]
    block[cells.mask] = True
    inside[cells.slices] = block
    dev = f - fB
    f1 = np.where(inside, dev, 0.0)
    f2 = np.where(inside, 0.0, dev)
    f3 = np.full(grid.shape, fB)
    return f1, f2, f3


# --------------------------------------------------------------------------- kernel bound certification


def _safe_rho(rho: CriticalRadiusField | None, pts: np.ndarray) -> np.ndarray:
    if rho is None:
        return np.full(pts.shape[0], math.inf)
    return np.array([rho(p) for p in pts])


def _default_points(d: int, extent: float, per_axis: int) -> np.ndarray:
    ax = np.linspace(-extent, extent, per_axis)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=-1)


@dataclass
class BoundParams:
    c: float = 0.125
    N: tuple = (1, 2, 4)
    delta: float | None = None
    q: float = 4.0
    cap: float = 10.0
    h_fractions: tuple = (0.1, 0.3, 1.0)
    small_time_ratio: float = 0.5

    def delta0(self, d: int) -> float:
        return min(1.0, 2.0 - d / self.q)

    def hoelder_exponent(self, d: int) -> float:
        return 0.9 * self.delta0(d) if self.delta is None else self.delta


def _kernel_reports(handle: KernelHandle, rho, points, times, bp: BoundParams, rng_seed: int) -> list:
    d, k = handle.d, handle.k
    P = np.asarray(points, dtype=float).reshape(-1, d)
    rho_p = _safe_rho(rho, P)
    ii, jj = np.meshgrid(np.arange(len(P)), np.arange(len(P)), indexing="ij")
    ii, jj = ii.reshape(-1), jj.reshape(-1)
    X, Y = P[ii], P[jj]
    rx, ry = rho_p[ii], rho_p[jj]
    z2 = np.sum((X - Y) ** 2, axis=1)
    reports = []

    # size bound with Gaussian decay, for each N
    lhs_a, gauss_a, fac_a, wit_a = [], [], [], []
    for t in times:
        keep = bp.c * z2 / t <= bp.cap
        K = np.abs(kernel_rows(handle, t, X[keep], Y[keep]))
        gauss = t ** (-d / 2) * np.exp(-bp.c * z2[keep] / t)
        lhs_a.append(K)
        gauss_a.append(gauss)
        fac_a.append(1 + math.sqrt(t) / rx[keep] + math.sqrt(t) / ry[keep])
        wit_a.extend({"x": x.tolist(), "y": y.tolist(), "t": float(t)} for x, y in zip(X[keep], Y[keep]))
    lhs_a, gauss_a, fac_a = map(np.concatenate, (lhs_a, gauss_a, fac_a))
    if lhs_a.size == 0:
        raise InvalidArgument("sample set is empty after the Gaussian cap")
    for N in bp.N:
        reports.append(argmax_report(f"kernel-gaussian-decay-N{N}", lhs_a, gauss_a * fac_a ** (-N), wit_a,
                                     c=bp.c, N=N, k=k))

    # Hoelder regularity in x with |h| <= sqrt t
    delta = bp.hoelder_exponent(d)
    rng = np.random.default_rng(rng_seed)
    L = handle.box_half_width
    lhs_b, rhs_b, wit_b = [], [], []
    for t in times:
        keep = bp.c * z2 / t <= bp.cap
        Xk, Yk = X[keep], Y[keep]
        for frac in bp.h_fractions:
            dirs = rng.normal(size=Xk.shape)
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            h = frac * math.sqrt(t) * dirs
            Xh = Xk + h
            inside = np.all(np.abs(Xh) < L, axis=1)
            if not inside.any():
                continue
            diff = np.abs(kernel_rows(handle, t, Xh[inside], Yk[inside]) - kernel_rows(handle, t, Xk[inside], Yk[inside]))
            zz = np.sum((Xk[inside] - Yk[inside]) ** 2, axis=1)
            rhs = frac**delta * t ** (-d / 2) * np.exp(-bp.c * zz / t)
            lhs_b.append(diff)
            rhs_b.append(rhs)
            wit_b.extend({"x": x.tolist(), "y": y.tolist(), "h": hv.tolist(), "t": float(t)}
                          for x, y, hv in zip(Xk[inside], Yk[inside], h[inside]))
    reports.append(argmax_report("kernel-hoelder-regularity", np.concatenate(lhs_b) if lhs_b else [],
                                 np.concatenate(rhs_b) if rhs_b else [], wit_b, delta=delta, c=bp.c, k=k))

    # mass defect of the derivative kernel, with a log-log slope fit at small scales
    hk = handle if k >= 1 else handle.with_order(1)
    d0 = bp.delta0(d)
    N0 = min(bp.N)
    lhs_c, rhs_c, wit_c, slopes = [], [], [], []
    for p, rp in zip(P, rho_p):
        if not math.isfinite(rp):
            continue
        defects = np.array([abs(mass_defect(hk, p, t)) for t in times])
        s = np.sqrt(times) / rp
        lhs_c.extend(defects)
        rhs_c.extend(s**d0 * (1 + s) ** (-N0))
        wit_c.extend({"x": p.tolist(), "t": float(t)} for t in times)
        small = (s <= bp.small_time_ratio) & (defects > 0)
        if small.sum() >= 3:
            slopes.append(float(np.polyfit(np.log(s[small]), np.log(defects[small]), 1)[0]))
    reports.append(argmax_report("kernel-mass-defect", lhs_c, rhs_c, wit_c, delta0=d0, N=N0, k=hk.k,
                                 slopes=slopes, min_slope=min(slopes) if slopes else None))

    # distance to the free kernel
    free = psi_profile(k, d)
    expo = 2.0 - d / bp.q
    lhs_d, rhs_d, wit_d = [], [], []
    for t in times:
        keep = bp.c * z2 / t <= bp.cap
        if handle.closed_form == "free":
            diff = np.zeros(int(keep.sum()))
        else:
            K = kernel_rows(handle, t, X[keep], Y[keep])
            diff = np.abs(np.atleast_1d(K) - free.kernel(X[keep] - Y[keep], t))
        m = np.maximum(rx[keep], ry[keep])
        rhs = t ** (-d / 2) * np.exp(-bp.c * z2[keep] / t) * (math.sqrt(t) / m) ** expo
        lhs_d.append(diff)
        rhs_d.append(rhs)
        wit_d.extend({"x": x.tolist(), "y": y.tolist(), "t": float(t)} for x, y in zip(X[keep], Y[keep]))
    reports.append(argmax_report("kernel-free-comparison", np.concatenate(lhs_d), np.concatenate(rhs_d), wit_d,
                                 exponent=expo, c=bp.c, k=k))
    return reports


def verify_kernel_bounds(engine_spec: dict, params: BoundParams | dict | None = None, samples: dict | None = None,
                         refine: bool = False, seed: int = 0) -> list:
    """Empirical constants of the kernel size, regularity, mass and free-comparison bounds.

    ``samples``: ``{"points": [[...]], "t": {"min", "max", "n"}}``; every
    ordered pair of points is tested at every time.  With ``refine`` the
    engine is rebuilt with n and m doubled and each report carries the
    (n, constant) refinement trend.
    """
    bp = params if isinstance(params, BoundParams) else BoundParams(**(params or {}))
    samples = samples or {}
    handle = handle_from_spec(engine_spec)
    d = handle.d
    rho = None if handle.closed_form == "free" else rho_field_for(handle, engine_spec)
    if "points" in samples:
        points = np.asarray(samples["points"], dtype=float).reshape(-1, d)
    else:
        ext = 0.4 * min(handle.box_half_width, 5.0)
        points = _default_points(d, ext, 9 if d == 1 else 3)
    if points.size == 0:
        raise InvalidArgument("empty sample set")
    ts = samples.get("t", {"min": 0.05, "max": 2.0, "n": 8})
    times = np.geomspace(float(ts["min"]), float(ts["max"]), int(ts["n"]))
    reports = _kernel_reports(handle, rho, points, times, bp, seed)
    if refine:
        if handle.engines is None:
            raise InvalidArgument("closed-form kernels have nothing to refine")
        n = handle.engines[0].n
        m = handle.engines[0].m
        fine_spec = {**engine_spec, "n": 2 * n + 1, "m": min(2 * m, 2 * n + 1)}
        fine = _kernel_reports(handle_from_spec(fine_spec), rho, points, times, bp, seed)
        for coarse_r, fine_r in zip(reports, fine):
            coarse_r.refinement = [(n, coarse_r.constant), (2 * n + 1, fine_r.constant)]
    return reports


# --------------------------------------------------------------------------- output


def write_rows_csv(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            center = r["center"]
            cstr = ";".join(repr(float(v)) for v in np.atleast_1d(center))
            w.writerow([r["experiment_id"], r["f_id"], cstr, repr(float(r["radius"])), repr(float(r["lhs"])),
                        repr(float(r["rhs"])), repr(float(r["ratio"]))])
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True, default=str) + "\n")
    return path
