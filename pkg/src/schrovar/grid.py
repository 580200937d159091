"""Spatial grids, balls, midpoint quadrature over balls, and time grids.

Every integral over a ball is a midpoint-rule sum over the grid cells whose
centers lie in the ball.  The same cell count is used for the discrete ball
volume, so ball means of constants are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DegenerateBall, InvalidArgument, OutOfDomain

SampledFunction = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]

_REL_TOL = 1e-12


def unit_ball_volume(d: int) -> float:
    """Lebesgue measure of the unit ball in R^d."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def unit_sphere_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1} in R^d."""
    return d * unit_ball_volume(d)


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float)).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        r = float(self.radius)
        if not (r > 0 and math.isfinite(r)):
            raise InvalidArgument(f"ball radius must be positive, got {r}")
        object.__setattr__(self, "radius", r)

    @property
    def dimension(self) -> int:
        return self.center.size

    @property
    def volume(self) -> float:
        """Exact Lebesgue volume omega_d r^d."""
        return unit_ball_volume(self.dimension) * self.radius**self.dimension

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def __repr__(self):
        c = ", ".join(f"{v:.6g}" for v in self.center)
        return f"Ball(center=({c}), radius={self.radius:.6g})"


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Tensor-product grid of cell centers with a common spacing on every axis.

    Each node is the center of a cube of side ``spacing``; the cubes tile the
    box ``[lower - h/2, upper + h/2]`` on every axis.
    """

    axes: tuple

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if not axes:
            raise InvalidArgument("grid needs at least one axis")
        n = axes[0].size
        if n < 2:
            raise InvalidArgument("each axis needs at least two nodes")
        h = (axes[0][-1] - axes[0][0]) / (n - 1)
        for a in axes:
            if a.ndim != 1 or a.size != n:
                raise InvalidArgument("all axes must share the same node count")
            steps = np.diff(a)
            if np.any(steps <= 0):
                raise InvalidArgument("grid nodes must be strictly increasing")
            if np.max(np.abs(steps - h)) > _REL_TOL * max(1.0, float(np.max(np.abs(a)))):
                raise InvalidArgument("grid spacing is not uniform")
            a.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "_h", float(h))

    @classmethod
    def centered(cls, d: int, half_width: float, n: int) -> "SpatialGrid":
        """Interior nodes of a Dirichlet box [-L, L]^d: x_i = -L + i h, h = 2L/(n+1)."""
        if d < 1 or n < 2 or half_width <= 0:
            raise InvalidArgument("need d >= 1, n >= 2 and a positive half-width")
        nodes = dirichlet_nodes(half_width, n)
        return cls(tuple(nodes for _ in range(d)))

    @classmethod
    def around_ball(cls, ball: Ball, cells_per_radius: int = 8) -> "SpatialGrid":
        """Local lattice with spacing r/cells_per_radius and a node at the center."""
        if cells_per_radius < 1:
            raise InvalidArgument("cells_per_radius must be >= 1")
        h = ball.radius / cells_per_radius
        offs = h * np.arange(-cells_per_radius, cells_per_radius + 1)
        return cls(tuple(c + offs for c in ball.center))

    @property
    def dimension(self) -> int:
        return len(self.axes)

    @property
    def n(self) -> int:
        return self.axes[0].size

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dimension

    @property
    def spacing(self) -> float:
        return self._h

    @property
    def cell_volume(self) -> float:
        return self._h**self.dimension

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes]) - self._h / 2

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes]) + self._h / 2

    @property
    def half_width(self) -> float:
        return float(np.max(np.maximum(np.abs(self.lower), np.abs(self.upper))))

    def points(self) -> np.ndarray:
        """All nodes as an array of shape grid.shape + (d,)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(func(self.points()), dtype=float)

    def contains_ball(self, ball: Ball) -> bool:
        tol = 1e-12 * max(1.0, self.half_width)
        return bool(
            np.all(ball.center - ball.radius >= self.lower - tol)
            and np.all(ball.center + ball.radius <= self.upper + tol)
        )

    def contains_point(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def dirichlet_nodes(half_width: float, n: int) -> np.ndarray:
    h = 2.0 * half_width / (n + 1)
    return -half_width + h * np.arange(1, n + 1)


@dataclass(frozen=True, eq=False)
class BallCells:
    """Grid cells whose centers lie in a ball: index boxes plus membership mask."""

    slices: tuple
    mask: np.ndarray
    coords: tuple
    cell_volume: float

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def volume(self) -> float:
        return self.count * self.cell_volume

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.coords, indexing="ij")
        return np.stack([m[self.mask] for m in mesh], axis=-1)

    def values(self, f: SampledFunction) -> np.ndarray:
        if callable(f):
            return np.asarray(f(self.points()), dtype=float).reshape(-1)
        return np.asarray(f)[self.slices][self.mask]


def ball_cells(ball: Ball, grid: SpatialGrid) -> BallCells:
    if ball.dimension != grid.dimension:
        raise InvalidArgument("ball and grid dimensions differ")
    if not grid.contains_ball(ball):
        raise OutOfDomain(f"{ball!r} escapes the grid box")
    r = ball.radius
    slices, coords = [], []
    for c, axis in zip(ball.center, grid.axes):
        lo = int(np.searchsorted(axis, c - r * (1 + _REL_TOL), side="left"))
        hi = int(np.searchsorted(axis, c + r * (1 + _REL_TOL), side="right"))
        slices.append(slice(lo, hi))
        coords.append(axis[lo:hi])
    sq = None
    for c, ax in zip(ball.center, coords):
        term = (ax - c) ** 2
        sq = term if sq is None else np.add.outer(sq, term)
    mask = sq <= r * r * (1 + 1e-12)
    return BallCells(tuple(slices), np.asarray(mask), tuple(coords), grid.cell_volume)


def resolve_grid(ball: Ball, grid: SpatialGrid | None, cells_per_radius: int = 8) -> SpatialGrid:
    return grid if grid is not None else SpatialGrid.around_ball(ball, cells_per_radius)


def ball_quadrature(f: SampledFunction, ball: Ball, grid: SpatialGrid | None = None) -> float:
    """Midpoint-rule integral of ``f`` over ``ball``.

    ``f`` is either an array of shape ``grid.shape`` or a vectorized callable
    mapping points of shape ``(N, d)`` to ``N`` values.  With ``grid=None``
    a local lattice around the ball is used (callables only).
    """
    if grid is None and not callable(f):
        raise InvalidArgument("array-valued f needs its grid")
    cells = ball_cells(ball, resolve_grid(ball, grid))
    return float(cells.values(f).sum() * cells.cell_volume)


def ball_mean(f: SampledFunction, ball: Ball, grid: SpatialGrid | None = None) -> float:
    if grid is None and not callable(f):
        raise InvalidArgument("array-valued f needs its grid")
    cells = ball_cells(ball, resolve_grid(ball, grid))
    if cells.count == 0:
        raise DegenerateBall(f"{ball!r} contains no grid cell centers")
    return float(cells.values(f).sum() / cells.count)


def discrete_volume(ball: Ball, grid: SpatialGrid | None = None) -> float:
    return ball_cells(ball, resolve_grid(ball, grid)).volume


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray
    kind: str = "explicit"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1).copy()
        if t.size == 0:
            raise InvalidArgument("empty time grid")
        if t[0] <= 0:
            raise InvalidArgument("times must be positive")
        if np.any(np.diff(t) <= 0):
            raise InvalidArgument("times must be strictly increasing")
        if self.kind not in ("geometric", "dyadic-blocked", "explicit"):
            raise InvalidArgument(f"unknown time grid kind {self.kind!r}")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return self.times.size


def make_geometric_time_grid(t_min: float, t_max: float, n: int) -> TimeGrid:
    """``n`` times from ``t_min`` to ``t_max`` with a constant ratio."""
    if not t_min > 0:
        raise InvalidArgument("t_min must be positive")
    if not t_max > t_min:
        raise InvalidArgument("t_max must exceed t_min")
    if n < 2:
        raise InvalidArgument("need at least two times")
    t = np.geomspace(t_min, t_max, n)
    t[0], t[-1] = t_min, t_max
    return TimeGrid(t, "geometric")


def make_dyadic_time_grid(t_min: float, t_max: float, per_block: int) -> TimeGrid:
    """Geometric grid that contains every power of two in the window.

    The window is widened outward to the enclosing powers of two; each dyadic
    block [2^j, 2^{j+1}] gets ``per_block`` geometric steps.
    """
    if not (0 < t_min < t_max):
        raise InvalidArgument("need 0 < t_min < t_max")
    if per_block < 1:
        raise InvalidArgument("per_block must be >= 1")
    j0 = math.floor(math.log2(t_min) + 1e-12)
    j1 = math.ceil(math.log2(t_max) - 1e-12)
    exps = j0 + np.arange((j1 - j0) * per_block + 1) / per_block
    t = np.exp2(exps)
    return TimeGrid(t, "dyadic-blocked", {"per_block": per_block, "j_range": (j0, j1)})


def merge_time_points(grid: TimeGrid, extra: Sequence[float]) -> TimeGrid:
    t = np.union1d(grid.times, np.asarray(extra, dtype=float))
    return TimeGrid(t, "explicit")
