"""Potentials V >= 0, reverse Hoelder constants, the critical radius and Psi_theta."""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BoxTooSmall,
    DegenerateBall,
    InvalidArgument,
    OutOfDomain,
    UndefinedCriticalRadius,
)
from .grid import Ball, SpatialGrid, ball_cells, unit_ball_volume, unit_sphere_area

KINDS = ("constant", "abs2m", "separable", "table")


@dataclass(frozen=True, eq=False)
class Potential:
    """A nonnegative potential on R^d.

    ``evaluator`` maps points of shape ``(..., d)`` to values of shape ``(...)``.
    ``ball_integral(center, r)`` is an optional closed form for the integral
    of V over B(center, r); it may return ``None`` where no closed form is known.
    ``components`` holds the per-axis 1D potentials when V(x) = sum_i v_i(x_i).
    """

    dimension: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    kind: str
    ball_integral: Callable[[np.ndarray, float], float | None] | None = None
    components: tuple | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidArgument("dimension must be positive")
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown potential kind {self.kind!r}")

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if self.dimension == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        return np.asarray(self.evaluator(pts), dtype=float)

    def axis_potentials(self) -> tuple:
        """1D potentials whose sum over coordinates is V."""
        if self.dimension == 1:
            return (self,)
        if self.components is None:
            raise InvalidArgument(f"{self.kind} potential in d={self.dimension} is not separable")
        return self.components

    @property
    def is_separable(self) -> bool:
        return self.dimension == 1 or self.components is not None

    def closed_ball_integral(self, center, r: float) -> float | None:
        if self.ball_integral is None:
            return None
        return self.ball_integral(np.atleast_1d(np.asarray(center, dtype=float)), float(r))

    def scaled(self, lam: float) -> "Potential":
        """The potential lam * V."""
        if lam <= 0:
            raise InvalidArgument("scale must be positive")
        bi = self.ball_integral
        comps = None if self.components is None else tuple(c.scaled(lam) for c in self.components)

        def integral(c, r):
            v = bi(c, r)
            return None if v is None else lam * v

        return Potential(
            self.dimension,
            lambda p: lam * self.evaluator(p),
            self.kind,
            integral if bi is not None else None,
            comps,
            {**self.params, "scale": lam * self.params.get("scale", 1.0)},
        )

    def describe(self) -> str:
        extra = ",".join(f"{k}={v}" for k, v in self.params.items() if k != "scale")
        return f"{self.kind}({extra})" if extra else self.kind


def constant_potential(value: float = 1.0, d: int = 1) -> Potential:
    if value <= 0:
        raise InvalidArgument("constant potential must be positive")
    wd = unit_ball_volume(d)
    comps = None
    if d > 1:
        comps = tuple(constant_potential(value / d, 1) for _ in range(d))
    return Potential(
        d,
        lambda p: np.full(p.shape[:-1], float(value)),
        "constant",
        lambda c, r: value * wd * r**d,
        comps,
        {"value": value},
    )


def abs2m_potential(m: int = 1, d: int = 1) -> Potential:
    """V(y) = |y|^{2m}."""
    m = int(m)
    if m < 1:
        raise InvalidArgument("m must be a positive integer")
    wd, sd = unit_ball_volume(d), unit_sphere_area(d)

    def evaluate(p):
        return np.sum(p * p, axis=-1) ** m

    def integral(c, r):
        if d == 1:
            a, b = c[0] - r, c[0] + r
            return (b ** (2 * m + 1) - a ** (2 * m + 1)) / (2 * m + 1)
        if m == 1:
            # |c + z|^2 integrates to |c|^2 |B| + int_B |z|^2 (odd term vanishes)
            return float(c @ c) * wd * r**d + sd * r ** (d + 2) / (d + 2)
        if not np.any(c):
            return sd * r ** (d + 2 * m) / (d + 2 * m)
        return None

    comps = None
    if m == 1 and d > 1:
        comps = tuple(abs2m_potential(1, 1) for _ in range(d))
    return Potential(d, evaluate, "abs2m", integral, comps, {"m": m})


def separable_potential(components: Sequence[Potential]) -> Potential:
    """V(x) = sum_i v_i(x_i) from 1D potentials."""
    comps = tuple(components)
    if not comps or any(c.dimension != 1 for c in comps):
        raise InvalidArgument("separable potentials need 1D components")
    d = len(comps)

    def evaluate(p):
        return sum(c.evaluator(p[..., i : i + 1]) for i, c in enumerate(comps))

    return Potential(d, evaluate, "separable", None, comps, {"axes": [c.describe() for c in comps]})


def table_potential(values: np.ndarray, grid: SpatialGrid) -> Potential:
    """Piecewise-constant potential on the cells of ``grid`` (zero outside)."""
    vals = np.asarray(values, dtype=float)
    if vals.shape != grid.shape:
        raise InvalidArgument("table shape does not match grid")
    if np.any(vals < 0):
        raise InvalidArgument("tabulated potential has negative entries")
    h, lo = grid.spacing, grid.lower

    def evaluate(p):
        idx = np.floor((p - lo) / h).astype(int)
        inside = np.all((idx >= 0) & (idx < grid.n), axis=-1)
        idx = np.clip(idx, 0, grid.n - 1)
        out = vals[tuple(idx[..., i] for i in range(grid.dimension))]
        return np.where(inside, out, 0.0)

    return Potential(grid.dimension, evaluate, "table", None, None, {"n": grid.n})


def parse_spec_string(text: str) -> dict:
    """``"abs2m:m=1"`` -> ``{"kind": "abs2m", "m": 1}``."""
    kind, _, rest = text.partition(":")
    spec: dict = {"kind": kind.strip()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = item.partition("=")
        try:
            num = float(val)
            spec[key.strip()] = int(num) if num.is_integer() and "." not in val else num
        except ValueError:
            spec[key.strip()] = val.strip()
    return spec


def potential_from_spec(spec, d: int | None = None) -> Potential:
    """Build a potential from a CLI/JSON spec (string or dict)."""
    if isinstance(spec, str):
        spec = parse_spec_string(spec)
    spec = dict(spec)
    kind = spec.pop("kind", None)
    d = int(spec.pop("d", d or 1))
    if kind == "constant":
        return constant_potential(float(spec.get("value", 1.0)), d)
    if kind == "abs2m":
        return abs2m_potential(int(spec.get("m", 1)), d)
    if kind == "separable":
        axes = spec.get("axes")
        if not axes or len(axes) != d:
            raise InvalidArgument("separable potential needs one axis spec per dimension")
        return separable_potential([potential_from_spec(a, 1) for a in axes])
    if kind == "table":
        path = spec.get("path")
        if path is None:
            raise InvalidArgument("table potential needs a path")
        data = np.loadtxt(path, delimiter=",", ndmin=1)
        half = float(spec.get("half_width", 1.0))
        grid = SpatialGrid.centered(d, half, int(round(data.size ** (1 / d))))
        return table_potential(data.reshape(grid.shape), grid)
    raise InvalidArgument(f"unknown potential kind {kind!r}")


@dataclass(frozen=True)
class RHqReport:
    q: float
    constant: float
    family_size: int
    worst_ball: Ball


def rh_q_constant(V: Potential, q: float, balls: Sequence[Ball], grid: SpatialGrid | None = None) -> RHqReport:
    """Largest (mean V^q)^{1/q} / (mean V) over a finite ball family."""
    if not q > 1:
        raise InvalidArgument("q must exceed 1")
    if not balls:
        raise InvalidArgument("empty ball family")
    best, worst = -np.inf, None
    for ball in balls:
        g = grid if grid is not None else SpatialGrid.around_ball(ball, 16)
        cells = ball_cells(ball, g)
        if cells.count == 0:
            raise DegenerateBall(f"{ball!r} contains no grid cell centers")
        v = V(cells.points())
        mean_v = v.mean()
        if mean_v <= 0:
            raise DegenerateBall(f"mean of V vanishes on {ball!r}")
        ratio = np.mean(v**q) ** (1 / q) / mean_v
        if ratio > best:
            best, worst = float(ratio), ball
    return RHqReport(float(q), best, len(balls), worst)


def stratified_balls(centers, r_min: float, r_max: float, n_radii: int) -> list[Ball]:
    """Log-spaced radii in [r_min, r_max] around each center."""
    radii = np.geomspace(r_min, r_max, n_radii) if n_radii > 1 else np.array([r_max])
    return [Ball(c, r) for c in centers for r in radii]


class CriticalRadiusField:
    """rho(x) = sup{r : r^{2-d} int_{B(x,r)} V <= 1}, by bisection.

    The closed-form ball integral of V is used when available and
    ``use_closed_form`` is set; otherwise the midpoint rule on ``grid``.
    Evaluations are cached per point; the cache is guarded by a lock.
    """

    def __init__(
        self,
        potential: Potential,
        grid: SpatialGrid | None = None,
        tolerance: float = 1e-10,
        use_closed_form: bool = True,
        r_max: float | None = None,
        max_iter: int = 200,
    ):
        self.potential = potential
        self.grid = grid
        self.tolerance = float(tolerance)
        self.use_closed_form = use_closed_form
        self.max_iter = max_iter
        if r_max is None:
            r_max = grid.half_width if grid is not None else 1e3
        self.r_max = float(r_max)
        self._cache: dict = {}
        self._lock = threading.Lock()
        if grid is None and not (use_closed_form and potential.ball_integral is not None):
            raise InvalidArgument("a grid is required when no closed-form ball integral exists")
        if potential.dimension < 3:
            warnings.warn(
                f"critical radius in d={potential.dimension} uses exponent d-2 outside the d >= 3 theory",
                stacklevel=2,
            )

    @property
    def dimension(self) -> int:
        return self.potential.dimension

    def __call__(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = tuple(np.round(x, 12))
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = self._compute(x)
        with self._lock:
            self._cache.setdefault(key, value)
        return value

    def many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1, self.dimension)
        return np.array([self(x) for x in xs])

    def _mass_function(self, x):
        V, d = self.potential, self.dimension
        if self.use_closed_form and V.closed_ball_integral(x, 1.0) is not None:
            return (lambda r: V.closed_ball_integral(x, r)), (1e-12 * self.r_max, self.r_max)
        g = self.grid
        if g is None:
            raise InvalidArgument("no closed form at this point and no grid given")
        if not g.contains_point(x):
            raise OutOfDomain(f"point {x} outside grid box")
        reach = float(np.min(np.minimum(x - g.lower, g.upper - x)))
        cells = ball_cells(Ball(x, reach), g)
        pts = cells.points()
        dist = np.sqrt(np.sum((pts - x) ** 2, axis=-1))
        order = np.argsort(dist, kind="stable")
        dist = dist[order]
        cum = np.cumsum(V(pts)[order]) * g.cell_volume

        def mass(r):
            i = int(np.searchsorted(dist, r * (1 + 1e-12), side="right"))
            return float(cum[i - 1]) if i > 0 else 0.0

        return mass, (g.spacing, reach)

    def _compute(self, x) -> float:
        d = self.dimension
        mass, (lo, hi) = self._mass_function(x)
        if mass(hi) <= 0:
            raise UndefinedCriticalRadius(f"V vanishes on the box around {x}")

        def g(r):
            return r ** (2 - d) * mass(r) - 1.0

        if g(hi) <= 0:
            raise BoxTooSmall(f"critical radius at {x} exceeds the box reach {hi:.6g}")
        if g(lo) > 0:
            return float(lo)
        for _ in range(self.max_iter):
            mid = 0.5 * (lo + hi)
            if g(mid) <= 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < self.tolerance:
                break
        return 0.5 * (lo + hi)


def psi_theta(ball: Ball, rho_at_center: float, theta: float) -> float:
    """(1 + r / rho(center))^theta."""
    if rho_at_center <= 0 or theta <= 0:
        raise InvalidArgument("rho and theta must be positive")
    return (1.0 + ball.radius / rho_at_center) ** theta


def rho_comparability(field: CriticalRadiusField, x0s, n_samples: int = 16, seed: int = 0) -> float:
    """Largest max(rho(x)/rho(x0), rho(x0)/rho(x)) over sampled |x - x0| < rho(x0)."""
    rng = np.random.default_rng(seed)
    worst = 1.0
    for x0 in np.asarray(x0s, dtype=float).reshape(-1, field.dimension):
        r0 = field(x0)
        dirs = rng.normal(size=(n_samples, field.dimension))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = r0 * rng.uniform(0, 1, n_samples) ** (1 / field.dimension)
        for x in x0 + dirs * radii[:, None]:
            r = field(x)
            worst = max(worst, r / r0, r0 / r)
    return float(worst)
