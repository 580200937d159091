"""Weights, the A_p^{rho,theta} constant, and BMO/BLO norm estimation over ball families.

Norms are suprema over finite ball families, so every estimate here is a
lower bound for the true norm; ess inf / ess sup over a ball are the min / max
over the grid cell centers inside it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConstraintViolation, DegenerateBall, InvalidArgument, InvalidWeight, OutOfDomain
from .grid import Ball, SampledFunction, SpatialGrid, ball_cells
from .potentials import CriticalRadiusField, parse_spec_string, psi_theta
from .reports import BoundCheckReport, argmax_report

WEIGHT_KINDS = ("constant", "power", "table")


@dataclass(frozen=True, eq=False)
class Weight:
    evaluator: Callable[[np.ndarray], np.ndarray]
    kind: str = "constant"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise InvalidArgument(f"unknown weight kind {self.kind!r}")

    def __call__(self, points) -> np.ndarray:
        vals = np.asarray(self.evaluator(np.asarray(points, dtype=float)), dtype=float)
        if np.any(~(vals > 0)):
            raise InvalidWeight(f"{self.kind} weight is not strictly positive on the sample")
        return vals

    def power(self, exponent: float) -> "Weight":
        """The weight w^exponent (used for the dual weight w^{-1/(p-1)})."""
        return Weight(lambda p: self.evaluator(p) ** exponent, self.kind, {**self.params, "power": exponent})


def constant_weight(value: float = 1.0) -> Weight:
    if value <= 0:
        raise InvalidWeight("weight must be positive")
    return Weight(lambda p: np.full(p.shape[:-1], float(value)), "constant", {"value": value})


def power_weight(a: float) -> Weight:
    """w(x) = (1 + |x|)^a."""
    return Weight(lambda p: (1.0 + np.sqrt(np.sum(p * p, axis=-1))) ** a, "power", {"a": a})


def table_weight(values: np.ndarray, grid: SpatialGrid) -> Weight:
    vals = np.asarray(values, dtype=float)
    if vals.shape != grid.shape:
        raise InvalidArgument("table shape does not match grid")
    if np.any(vals <= 0):
        raise InvalidWeight("tabulated weight must be positive")
    h, lo = grid.spacing, grid.lower

    def evaluate(p):
        idx = np.clip(np.floor((p - lo) / h).astype(int), 0, grid.n - 1)
        return vals[tuple(idx[..., i] for i in range(grid.dimension))]

    return Weight(evaluate, "table", {"n": grid.n})


def weight_from_spec(spec) -> Weight:
    if spec is None:
        return constant_weight()
    if isinstance(spec, str):
        spec = parse_spec_string(spec)
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return constant_weight(float(spec.get("value", 1.0)))
    if kind == "power":
        return power_weight(float(spec.get("a", 0.0)))
    if kind == "table":
        raise InvalidArgument("table weights are built programmatically with table_weight")
    raise InvalidArgument(f"unknown weight kind {kind!r}")


@dataclass
class CampanatoParams:
    """Parameters of BMO^alpha_{L,w} / BLO^alpha_{L,w} and of the weight class."""

    alpha: float
    p: float
    theta: float
    weight: Weight
    rho: CriticalRadiusField
    q: float

    def __post_init__(self):
        if not 0 <= self.alpha < 1:
            raise InvalidArgument("alpha must lie in [0, 1)")
        if not self.p > 1:
            raise InvalidArgument("p must exceed 1")
        if not self.theta > 0:
            raise InvalidArgument("theta must be positive")
        if not self.q > 1:
            raise InvalidArgument("q must exceed 1")
        if self.q <= self.dimension / 2:
            warnings.warn(f"q = {self.q} <= d/2: potential outside the supported reverse Hoelder range", stacklevel=2)

    @property
    def dimension(self) -> int:
        return self.rho.dimension

    @property
    def delta0(self) -> float:
        return min(1.0, 2.0 - self.dimension / self.q)

    @property
    def constraint_lhs(self) -> float:
        d = self.dimension
        return 2.0 * (d * (self.p + self.alpha - 1.0) + self.p * self.theta)

    @property
    def theorem_mode(self) -> bool:
        """Whether 2(d(p+alpha-1) + p theta) < min{1, 2 - d/q}."""
        return self.constraint_lhs < self.delta0

    def require_theorem_mode(self):
        if not self.theorem_mode:
            raise ConstraintViolation(
                f"2(d(p+alpha-1)+p*theta) = {self.constraint_lhs:.4g} is not below "
                f"min(1, 2-d/q) = {self.delta0:.4g}"
            )


@dataclass
class BallRecord:
    center: tuple
    radius: float
    part: str
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return 0.0 if self.lhs == 0 else self.lhs / self.rhs


@dataclass
class NormEstimate:
    value: float
    small_ball_part: float
    rho_ball_part: float
    witness_balls: list
    records: list = field(default_factory=list)

    @property
    def family_size(self) -> int:
        return len(self.records)


@dataclass
class BallTerms:
    """Midpoint integrals over one ball used by the norm estimators."""

    ball: Ball
    volume: float
    weight_mass: float
    mean: float
    abs_integral: float
    oscillation: float
    defect: float
    minimum: float


def ball_terms(f: SampledFunction, ball: Ball, weight: Weight, grid: SpatialGrid | None = None,
               cells_per_radius: int = 8) -> BallTerms:
    g = grid if grid is not None else SpatialGrid.around_ball(ball, cells_per_radius)
    cells = ball_cells(ball, g)
    if cells.count == 0:
        raise DegenerateBall(f"{ball!r} contains no grid cell centers")
    vals = cells.values(f)
    dv = cells.cell_volume
    w = weight(cells.points())
    mean = vals.mean()
    lo = vals.min()
    return BallTerms(
        ball,
        cells.volume,
        float(w.sum() * dv),
        float(mean),
        float(np.abs(vals).sum() * dv),
        float(np.abs(vals - mean).sum() * dv),
        float((vals - lo).sum() * dv),
        float(lo),
    )


def ball_weight(w: Weight, ball: Ball, grid: SpatialGrid | None = None, cells_per_radius: int = 8) -> float:
    """w(B) by the midpoint rule."""
    g = grid if grid is not None else SpatialGrid.around_ball(ball, cells_per_radius)
    cells = ball_cells(ball, g)
    if cells.count == 0:
        raise DegenerateBall(f"{ball!r} contains no grid cell centers")
    return float(w(cells.points()).sum() * cells.cell_volume)


def ap_ball_factor(w: Weight, p: float, theta: float, ball: Ball, rho: CriticalRadiusField,
                   grid: SpatialGrid | None = None, cells_per_radius: int = 8) -> float:
    """(Psi-mean of w) * (Psi-mean of w^{-1/(p-1)})^{p-1} on one ball."""
    g = grid if grid is not None else SpatialGrid.around_ball(ball, cells_per_radius)
    cells = ball_cells(ball, g)
    if cells.count == 0:
        raise DegenerateBall(f"{ball!r} contains no grid cell centers")
    vals = w(cells.points())
    norm = psi_theta(ball, rho(ball.center), theta) * cells.volume
    dv = cells.cell_volume
    a = vals.sum() * dv / norm
    b = (vals ** (-1.0 / (p - 1.0))).sum() * dv / norm
    return float(a * b ** (p - 1.0))


@dataclass
class ApReport:
    constant: float
    worst_ball: Ball
    per_ball: np.ndarray


def ap_rho_theta_constant(w: Weight, p: float, theta: float, balls: Sequence[Ball], grid: SpatialGrid | None,
                          rho: CriticalRadiusField, cells_per_radius: int = 8) -> ApReport:
    if not p > 1:
        raise InvalidArgument("p must exceed 1")
    if not balls:
        raise InvalidArgument("empty ball family")
    vals = np.array([ap_ball_factor(w, p, theta, b, rho, grid, cells_per_radius) for b in balls])
    i = int(np.argmax(vals))
    return ApReport(float(vals[i]), balls[i], vals)


def default_radii(rho_x: float, n_radii: int = 6, floor_fraction: float = 0.01) -> np.ndarray:
    """Log-spaced radii in [floor_fraction * rho, rho), excluding rho itself."""
    if n_radii < 1:
        return np.array([])
    return rho_x * np.geomspace(floor_fraction, 1.0, n_radii + 1)[:-1]


def _ball_family(params: CampanatoParams, centers, radii, grid, n_radii, floor_fraction):
    centers = np.asarray(centers, dtype=float).reshape(-1, params.dimension)
    out = []
    for i, c in enumerate(centers):
        rx = params.rho(c)
        rs = default_radii(rx, n_radii, floor_fraction) if radii is None else np.asarray(radii[i], dtype=float)
        if grid is not None:
            small = rs < 4 * grid.spacing
            if small.any():
                warnings.warn(f"dropping {int(small.sum())} radii below four grid cells", stacklevel=3)
            rs = rs[~small]
        for r in rs:
            out.append((Ball(c, r), "small" if r < rx else "rho"))
        out.append((Ball(c, rx), "rho"))
    return out


def _estimate(f, params, centers, radii, grid, n_radii, floor_fraction, cells_per_radius, small_key):
    records, small, rho_part = [], [], []
    for ball, part in _ball_family(params, centers, radii, grid, n_radii, floor_fraction):
        try:
            terms = ball_terms(f, ball, params.weight, grid, cells_per_radius)
        except DegenerateBall as exc:
            warnings.warn(str(exc), stacklevel=3)
            continue
        rhs = terms.volume**params.alpha * terms.weight_mass
        lhs = getattr(terms, small_key) if part == "small" else terms.abs_integral
        rec = BallRecord(tuple(ball.center.tolist()), ball.radius, part, lhs, rhs)
        records.append(rec)
        (small if part == "small" else rho_part).append(rec)

    def best(recs):
        if not recs:
            return 0.0, None
        r = max(recs, key=lambda x: x.ratio)
        return r.ratio, r

    s_val, s_rec = best(small)
    r_val, r_rec = best(rho_part)
    witnesses = [Ball(r.center, r.radius) for r in (s_rec, r_rec) if r is not None]
    return NormEstimate(max(s_val, r_val), s_val, r_val, witnesses, records)


def bmo_norm(f: SampledFunction, params: CampanatoParams, centers, radii=None, grid: SpatialGrid | None = None,
             n_radii: int = 6, floor_fraction: float = 0.01, cells_per_radius: int = 8) -> NormEstimate:
    """Estimate of the BMO^alpha_{L,w} norm over a stratified ball family.

    Balls with r < rho(center) contribute mean oscillation, balls with
    r >= rho(center) contribute size; one ball of radius rho(center) is
    always included per center.  ``radii[i]`` lists radii for ``centers[i]``;
    by default ``n_radii`` log-spaced radii in [floor_fraction*rho, rho).
    """
    return _estimate(f, params, centers, radii, grid, n_radii, floor_fraction, cells_per_radius, "oscillation")


def blo_defect(f: SampledFunction, params: CampanatoParams, centers, radii=None, grid: SpatialGrid | None = None,
               n_radii: int = 6, floor_fraction: float = 0.01, cells_per_radius: int = 8) -> NormEstimate:
    """Like :func:`bmo_norm` with f - min_B f in place of |f - f_B| on small balls."""
    return _estimate(f, params, centers, radii, grid, n_radii, floor_fraction, cells_per_radius, "defect")


def check_weight_growth(w: Weight, p: float, theta: float, ball: Ball, kmax: int, rho: CriticalRadiusField,
                        grid: SpatialGrid | None = None,
                        fractions: Sequence[float] = (0.125, 0.25, 0.5, 0.75, 1.0)) -> list:
    """Empirical constants of the subset bound w(B)/w(E) <= C (Psi|B|/|E|)^p
    and the dilation bound w(2^k B)/w(B) <= C 2^{k p (theta + d)}."""
    d = ball.dimension
    if grid is None:
        cells = max(8, int(8 * 2**kmax))
        while (2 * cells + 1) ** d > 2_500_000 and cells > 8:
            cells //= 2
        grid = SpatialGrid.around_ball(ball.scaled(2**kmax), cells)
    k_ok = kmax
    while k_ok > 0 and not grid.contains_ball(ball.scaled(2**k_ok)):
        k_ok -= 1
    if k_ok < kmax:
        warnings.warn(f"dilations beyond 2^{k_ok} leave the box; kmax reduced", stacklevel=2)
    big = ball_cells(ball, grid)
    wb = float(w(big.points()).sum() * big.cell_volume)
    psi = psi_theta(ball, rho(ball.center), theta)

    lhs_b, rhs_b, wit_b = [], [], []
    for s in fractions:
        sub = ball_cells(ball.scaled(s), grid)
        if sub.count == 0:
            continue
        we = float(w(sub.points()).sum() * sub.cell_volume)
        lhs_b.append(wb / we)
        rhs_b.append((psi * big.volume / sub.volume) ** p)
        wit_b.append({"subball_fraction": s})
    lhs_c, rhs_c, wit_c = [], [], []
    for k in range(1, k_ok + 1):
        dil = ball_cells(ball.scaled(2**k), grid)
        lhs_c.append(float(w(dil.points()).sum() * dil.cell_volume) / wb)
        rhs_c.append(2.0 ** (k * p * (theta + d)))
        wit_c.append({"k": k})
    base = {"center": ball.center.tolist(), "radius": ball.radius}
    return [
        argmax_report("weight-subset-ratio", lhs_b, rhs_b, [{**base, **x} for x in wit_b]),
        argmax_report("weight-dilation-growth", lhs_c, rhs_c, [{**base, **x} for x in wit_c], kmax=k_ok),
    ]


def _nu_mean(f, ball, params, nu, grid, cells_per_radius, centered: bool) -> tuple:
    g = grid if grid is not None else SpatialGrid.around_ball(ball, cells_per_radius)
    cells = ball_cells(ball, g)
    if cells.count == 0:
        raise DegenerateBall(f"{ball!r} contains no grid cell centers")
    vals = cells.values(f)
    w = params.weight(cells.points())
    dv = cells.cell_volume
    dev = np.abs(vals - vals.mean()) if centered else np.abs(vals)
    inner = (dev**nu * w ** (1.0 - nu)).sum() * dv / (w.sum() * dv)
    return float(cells.volume ** (-params.alpha) * inner ** (1.0 / nu)), cells.volume


def check_self_improvement(f: SampledFunction, params: CampanatoParams, nu: float, centers,
                           small_fractions: Sequence[float] = (0.01, 0.03, 0.1, 0.3, 1.0),
                           large_factors: Sequence[float] = (1.0, 2.0, 4.0, 8.0),
                           c: float = 1.0, grid: SpatialGrid | None = None,
                           cells_per_radius: int = 8, norm: NormEstimate | None = None) -> list:
    """Empirical constants of the weighted L^nu Campanato bounds.

    Small balls (r <= c rho) compare the nu-mean oscillation with the norm;
    large balls (r >= rho) compare the nu-mean size with (1 + r/rho)^gamma
    times the norm, with gamma fitted by least squares on log-log data.
    """
    p_dual = params.p / (params.p - 1.0)
    if not 1 < nu <= p_dual * (1 + 1e-12):
        raise InvalidArgument("nu must lie in (1, p']")
    centers = np.asarray(centers, dtype=float).reshape(-1, params.dimension)
    if norm is None:
        norm = bmo_norm(f, params, centers, grid=grid, cells_per_radius=cells_per_radius)
    nf = norm.value

    lhs_s, wit_s = [], []
    for x in centers:
        rx = params.rho(x)
        for s in small_fractions:
            if s > c:
                continue
            val, _ = _nu_mean(f, Ball(x, s * rx), params, nu, grid, cells_per_radius, True)
            lhs_s.append(val)
            wit_s.append({"center": x.tolist(), "radius": s * rx})
    lhs_l, growth, wit_l = [], [], []
    for x in centers:
        rx = params.rho(x)
        for a in large_factors:
            try:
                val, _ = _nu_mean(f, Ball(x, a * rx), params, nu, grid, cells_per_radius, False)
            except OutOfDomain:
                continue
            lhs_l.append(val)
            growth.append(1.0 + a)
            wit_l.append({"center": x.tolist(), "radius": a * rx})

    lhs_l, growth = np.asarray(lhs_l), np.asarray(growth)
    gamma_raw, resid = 0.0, 0.0
    ok = lhs_l > 0
    if nf > 0 and ok.sum() >= 2 and np.ptp(np.log(growth[ok])) > 0:
        X = np.log(growth[ok])
        Y = np.log(lhs_l[ok] / nf)
        A = np.vstack([X, np.ones_like(X)]).T
        (gamma_raw, icpt), *_ = np.linalg.lstsq(A, Y, rcond=None)
        resid = float(np.sqrt(np.mean((A @ np.array([gamma_raw, icpt]) - Y) ** 2)))
    gamma = max(float(gamma_raw), 0.0)
    return [
        argmax_report("campanato-nu-oscillation", lhs_s, [nf] * len(lhs_s), wit_s, nu=nu, norm=nf),
        argmax_report("campanato-nu-size", lhs_l, nf * growth**gamma, wit_l, nu=nu, norm=nf,
                      gamma=gamma, gamma_raw=float(gamma_raw), fit_residual=resid),
    ]
