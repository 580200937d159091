"""Variational functionals of sampled curves t -> T_t f(x).

All functionals accept values of shape ``(n_times,)`` or ``(n_times, ...)``;
trailing axes are independent curves evaluated in one vectorized pass.
Suprema over continuous time are restricted to the sampled times.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
import numpy as np

from .errors import InvalidArgument
from .grid import TimeGrid
from .semigroup import point_curve


@dataclass(frozen=True, eq=False)
class SampledCurve:
    times: TimeGrid
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.times, TimeGrid):
            object.__setattr__(self, "times", TimeGrid(self.times))
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[:1] != (len(self.times),):
            raise InvalidArgument("values and times have different lengths")
        object.__setattr__(self, "values", vals)

    def restrict(self, mask) -> "SampledCurve":
        return SampledCurve(TimeGrid(self.times.times[mask]), self.values[mask], self.provenance)


@dataclass(frozen=True, eq=False)
class BlockStructure:
    """Block boundaries t_j; each must be one of the curve's sample times."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float).reshape(-1)
        if b.size < 2:
            raise InvalidArgument("need at least two block boundaries")
        if b[0] <= 0 or np.any(np.diff(b) <= 0):
            raise InvalidArgument("block boundaries must be positive and strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def dyadic(cls, times: TimeGrid) -> "BlockStructure":
        """Powers of two inside the time window."""
        t = times.times
        j = np.arange(math.ceil(math.log2(t[0]) - 1e-12), math.floor(math.log2(t[-1]) + 1e-12) + 1)
        return cls(np.exp2(j))

    def check_aligned(self, times: TimeGrid):
        t = times.times
        idx = np.searchsorted(t, self.boundaries)
        for b, i in zip(self.boundaries, idx):
            hits = [k for k in (i - 1, i) if 0 <= k < t.size and abs(t[k] - b) <= 1e-12 * b]
            if not hits:
                raise InvalidArgument(f"block boundary {b!r} is not a sample time")


def rho_variation(values, sigma: float):
    """Largest (sum |v_{i_{l+1}} - v_{i_l}|^sigma)^{1/sigma} over index subsequences.

    Dynamic program: best[i] = max_{j<i} |v_i - v_j|^sigma + best[j].
    """
    if sigma < 1:
        raise InvalidArgument("sigma must be >= 1")
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    if n < 2:
        return 0.0 if v.ndim <= 1 else np.zeros(v.shape[1:])
    best = np.zeros_like(v)
    for i in range(1, n):
        cand = np.abs(v[i] - v[:i]) ** sigma + best[:i]
        best[i] = cand.max(axis=0)
    out = best.max(axis=0) ** (1.0 / sigma)
    return float(out) if v.ndim == 1 else out


def rho_variation_bruteforce(values, sigma: float) -> float:
    """Exhaustive enumeration over all index subsequences (oracle, n <= ~14)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    n = v.size
    best = 0.0
    for mask in range(1, 1 << n):
        idx = [i for i in range(n) if mask >> i & 1]
        if len(idx) < 2:
            continue
        s = sum(abs(v[b] - v[a]) ** sigma for a, b in zip(idx, idx[1:]))
        best = max(best, s)
    return best ** (1.0 / sigma)


def _block_masks(times: np.ndarray, lows, highs, closed_left: bool):
    for lo, hi in zip(lows, highs):
        tol_lo, tol_hi = 1e-12 * lo, 1e-12 * hi
        left = times >= lo - tol_lo if closed_left else times > lo + tol_lo
        yield left & (times <= hi + tol_hi)


def oscillation(curve: SampledCurve, blocks: BlockStructure | None = None):
    """l^2 sum over blocks [t_j, t_{j+1}] of the range of the curve in the block."""
    if blocks is None:
        blocks = BlockStructure.dyadic(curve.times)
    blocks.check_aligned(curve.times)
    t, v = curve.times.times, curve.values
    total = np.zeros(v.shape[1:])
    b = blocks.boundaries
    for j, mask in enumerate(_block_masks(t, b[:-1], b[1:], closed_left=True)):
        if not mask.any():
            warnings.warn(f"block [{b[j]:.4g}, {b[j + 1]:.4g}] holds no sample; skipped", stacklevel=2)
            continue
        seg = v[mask]
        total = total + (seg.max(axis=0) - seg.min(axis=0)) ** 2
    out = np.sqrt(total)
    return float(out) if v.ndim == 1 else out


def dyadic_block_index(times: np.ndarray) -> np.ndarray:
    """Integer k with t in (2^{-k}, 2^{-k+1}]."""
    # ceil(1 - log2 t), with log2 snapped onto integers at exact powers of two
    lg = np.log2(times)
    snapped = np.where(np.abs(lg - np.round(lg)) < 1e-12, np.round(lg), lg)
    return np.ceil(1.0 - snapped).astype(int)


def short_variation(curve: SampledCurve):
    """l^2 over k of the 2-variation of the curve restricted to (2^{-k}, 2^{-k+1}]."""
    t, v = curve.times.times, curve.values
    ks = dyadic_block_index(t)
    total = np.zeros(v.shape[1:])
    for k in np.unique(ks):
        mask = ks == k
        if mask.sum() < 2:
            continue
        total = total + np.asarray(rho_variation(v[mask], 2.0)) ** 2
    out = np.sqrt(total)
    return float(out) if v.ndim == 1 else out


def maximal(curve: SampledCurve):
    v = curve.values
    if v.size == 0:
        raise InvalidArgument("empty curve")
    out = np.abs(v).max(axis=0)
    return float(out) if v.ndim == 1 else out


def total_variation(curve: SampledCurve):
    v = curve.values
    out = np.abs(np.diff(v, axis=0)).sum(axis=0)
    return float(out) if v.ndim == 1 else out


OPERATORS = ("var", "osc", "sv", "max", "tv")


def apply_operator(op: str, curve: SampledCurve, sigma: float = 3.0, blocks: BlockStructure | None = None):
    if op == "var":
        return rho_variation(curve.values, sigma)
    if op == "osc":
        return oscillation(curve, blocks)
    if op == "sv":
        return short_variation(curve)
    if op == "max":
        return maximal(curve)
    if op == "tv":
        return total_variation(curve)
    raise InvalidArgument(f"unknown operator {op!r}; expected one of {OPERATORS}")


def sample_curve(handle, f, x, tgrid: TimeGrid, grid=None) -> SampledCurve:
    """Curve t -> t^k d_t^k exp(-tL) f(x) on the grid times."""
    if grid is None:
        grid = handle.grid()
    vals = point_curve(handle, f, grid, x, tgrid.times)
    return SampledCurve(tgrid, vals, {"x": np.atleast_1d(x).tolist(), "k": handle.k, "beta": handle.beta})
