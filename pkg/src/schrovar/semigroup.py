"""Kernels of t^k d_t^k exp(-tL) by truncated eigen-expansion.

One-dimensional operators -d^2/dx^2 + V on a Dirichlet box [-L, L] are
discretized on the interior nodes x_i = -L + i h.  Multi-dimensional kernels
exist only for separable potentials and are assembled from the 1D factors.
Closed-form kernels (free heat kernel, Mehler) serve as oracles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.linalg
from numpy.polynomial import Polynomial

from .errors import InvalidArgument, InvalidDiscretization, NumericalFailure, OutOfDomain
from .grid import SpatialGrid, dirichlet_nodes
from .potentials import Potential, potential_from_spec

STENCILS = ("sine", "fd2")


class SpectralEngine1D:
    """Eigenpairs of a discretized 1D Schroedinger operator on [-L, L].

    Eigenvectors are stored as grid functions orthonormal for the inner
    product ``h * sum(u * v)``.  Values between nodes come from the sine
    series that interpolates each eigenvector (exact for the sine basis).
    """

    def __init__(self, L, nodes, potential_values, eigenvalues, eigenvectors, stencil, potential=None):
        self.L = float(L)
        self.nodes = nodes
        self.n = nodes.size
        self.h = 2.0 * self.L / (self.n + 1)
        self.potential_values = potential_values
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.m = eigenvalues.size
        self.stencil = stencil
        self.potential = potential
        # eigenvector(x) = sum_j A[j] sin(j pi (x + L) / 2L)
        self._sine_coeffs = scipy.fft.dst(eigenvectors, type=1, axis=0) / (self.n + 1)
        self._modes = np.pi * np.arange(1, self.n + 1) / (2 * self.L)
        self._mass = self.h * eigenvectors.sum(axis=0)
        for arr in (nodes, potential_values, eigenvalues, eigenvectors, self._sine_coeffs):
            arr.setflags(write=False)

    def grid(self, d: int = 1) -> SpatialGrid:
        return SpatialGrid(tuple(self.nodes for _ in range(d)))

    def eigenfunctions(self, x) -> np.ndarray:
        """Eigenfunction values at arbitrary points in the box, shape (len(x), m)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(np.abs(x) > self.L * (1 + 1e-12)):
            raise OutOfDomain(f"points outside [-{self.L}, {self.L}]")
        return np.sin(np.multiply.outer(x + self.L, self._modes)) @ self._sine_coeffs

    def project(self, g) -> np.ndarray:
        """Expansion coefficients h * Phi^T g of grid function(s) g (first axis)."""
        return self.h * np.tensordot(self.eigenvectors, np.asarray(g, dtype=float), axes=(0, 0))

    @property
    def eigenfunction_integrals(self) -> np.ndarray:
        """Quadrature of each eigenfunction over the box."""
        return self._mass

    def factor(self, t, order: int = 0, beta: float = 1.0) -> np.ndarray:
        """(-t lam^beta)^order exp(-t lam^beta); shape t.shape + (m,)."""
        return spectral_factor(self.eigenvalues, t, order, beta)

    def evolve(self, coeffs, times, order: int = 0, x=None, beta: float = 1.0) -> np.ndarray:
        """t^order d_t^order exp(-tL) g for each time, evaluated at ``x`` (nodes by default).

        ``coeffs`` are expansion coefficients from :meth:`project`.
        Returns shape (len(times), len(x)).
        """
        F = self.factor(np.atleast_1d(times), order, beta) * coeffs
        basis = self.eigenvectors if x is None else self.eigenfunctions(x)
        return F @ basis.T


def spectral_factor(lam, t, order: int = 0, beta: float = 1.0) -> np.ndarray:
    lb = lam if beta == 1.0 else lam**beta
    s = np.multiply.outer(np.asarray(t, dtype=float), lb)
    out = np.exp(-s)
    if order:
        out = out * (-s) ** order
    return out


def _sine_hamiltonian(L: float, n: int, v: np.ndarray) -> np.ndarray:
    j = np.arange(1, n + 1)
    S = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(j, j) / (n + 1))
    kappa2 = (np.pi * j / (2 * L)) ** 2
    H = (S * kappa2) @ S
    H[np.diag_indices(n)] += v
    return H


def build_spectral_engine(
    V1d: Potential | None, L: float, n: int, m: int | None = None, stencil: str = "sine"
) -> SpectralEngine1D:
    """Lowest ``m`` eigenpairs of -d^2/dx^2 + V on [-L, L] with Dirichlet walls.

    ``stencil="sine"`` uses the sine-basis kinetic matrix, exact for the
    Dirichlet Laplacian at the nodes; ``"fd2"`` is the three-point
    second-difference stencil solved as a tridiagonal problem.  ``V1d=None``
    gives the free operator.
    """
    if n < 64:
        raise InvalidArgument("need at least 64 nodes")
    m = n if m is None else int(m)
    if not 1 <= m <= n:
        raise InvalidArgument("truncation m must lie in [1, n]")
    if L <= 0:
        raise InvalidArgument("box half-width must be positive")
    if stencil not in STENCILS:
        raise InvalidArgument(f"unknown stencil {stencil!r}")
    if V1d is not None and V1d.dimension != 1:
        raise InvalidArgument("engine potential must be one-dimensional")
    nodes = dirichlet_nodes(L, n)
    v = np.zeros(n) if V1d is None else np.asarray(V1d(nodes[:, None]), dtype=float).reshape(n)
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise InvalidArgument("potential must be finite and nonnegative on the nodes")
    h = 2.0 * L / (n + 1)
    try:
        if stencil == "fd2":
            lam, vec = scipy.linalg.eigh_tridiagonal(
                2.0 / h**2 + v, -np.ones(n - 1) / h**2, select="i", select_range=(0, m - 1)
            )
        else:
            lam, vec = scipy.linalg.eigh(_sine_hamiltonian(L, n, v), subset_by_index=(0, m - 1))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"eigen-solver failed: {exc}") from exc
    if lam[0] <= 0:
        raise InvalidDiscretization(f"lowest eigenvalue {lam[0]:.3e} is not positive")
    # deterministic sign: largest-magnitude entry positive
    idx = np.argmax(np.abs(vec), axis=0)
    vec = vec * np.sign(vec[idx, np.arange(m)])
    return SpectralEngine1D(L, nodes, v, lam, vec / np.sqrt(h), stencil, V1d)


@dataclass(frozen=True, eq=False)
class PsiProfile:
    """Radial profile with t^k d_t^k W_t(z) = t^{-d/2} psi(|z| / sqrt(t)).

    ``coefficients`` are those of the polynomial P in v = u^2 with
    psi(u) = (4 pi)^{-d/2} exp(-u^2/4) P(u^2).
    """

    k: int
    d: int
    coefficients: np.ndarray

    def __call__(self, u) -> np.ndarray:
        u2 = np.asarray(u, dtype=float) ** 2
        return (4 * np.pi) ** (-self.d / 2) * np.exp(-u2 / 4) * Polynomial(self.coefficients)(u2)

    def kernel(self, z, t) -> np.ndarray:
        """Free kernel at displacement ``z`` (shape (..., d)) and time ``t``."""
        z = np.asarray(z, dtype=float)
        if self.d == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        r = np.sqrt(np.sum(z * z, axis=-1))
        t = np.asarray(t, dtype=float)
        return t ** (-self.d / 2) * self(r / np.sqrt(t))


@lru_cache(maxsize=None)
def _psi_coefficients(k: int, d: int) -> tuple:
    v = Polynomial([0.0, 1.0])
    P = Polynomial([1.0])
    for i in range(k):
        # t d_t acting on t^{-d/2} exp(-v/4) P(v), v = s/t; then subtract i for t^{i+1} d^{i+1}
        DP = -(d / 2) * P - v * P.deriv() + v * P / 4
        P = DP - i * P
    return tuple(P.coef)


def psi_profile(k: int, d: int) -> PsiProfile:
    if k < 0 or d < 1:
        raise InvalidArgument("need k >= 0 and d >= 1")
    return PsiProfile(int(k), int(d), np.array(_psi_coefficients(int(k), int(d))))


@lru_cache(maxsize=None)
def _mehler_derivative(order: int):
    import sympy as sp

    t, x, y = sp.symbols("t x y", positive=True)
    K = (2 * sp.pi * sp.sinh(2 * t)) ** sp.Rational(-1, 2) * sp.exp(
        -(sp.cosh(2 * t) * (x**2 + y**2) - 2 * x * y) / (2 * sp.sinh(2 * t))
    )
    expr = t**order * sp.diff(K, t, order) if order else K
    return sp.lambdify((t, x, y), sp.simplify(expr), "numpy")


def mehler_kernel(t, x, y, order: int = 0) -> np.ndarray:
    """t^order d_t^order of the kernel of exp(-t(-d^2/dx^2 + x^2)) on R."""
    fn = _mehler_derivative(int(order))
    return np.asarray(fn(np.asarray(t, dtype=float), np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)


@lru_cache(maxsize=None)
def compositions(k: int, d: int) -> tuple:
    """All (a_1..a_d) >= 0 with sum k, paired with the multinomial k!/prod a_i!."""
    out = []
    for a in itertools.product(range(k + 1), repeat=d):
        if sum(a) == k:
            out.append((a, math.factorial(k) // math.prod(math.factorial(i) for i in a)))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class KernelHandle:
    """Kernel of t^k d_t^k exp(-t L^beta) in dimension d.

    Either ``engines`` (one 1D engine per axis, separable potential) or a
    closed-form tag ``"free"`` / ``"mehler"`` (V = |x|^2) is set.
    """

    d: int
    engines: tuple | None = None
    closed_form: str | None = None
    k: int = 0
    beta: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 0:
            raise InvalidArgument("derivative order must be >= 0")
        if not 0 < self.beta <= 1:
            raise InvalidArgument("beta must lie in (0, 1]")
        if (self.engines is None) == (self.closed_form is None):
            raise InvalidArgument("give exactly one of engines or a closed-form tag")
        if self.engines is not None:
            engines = tuple(self.engines)
            if len(engines) != self.d:
                raise InvalidArgument("need one engine per axis")
            object.__setattr__(self, "engines", engines)
        elif self.closed_form not in ("free", "mehler"):
            raise InvalidArgument(f"unknown closed form {self.closed_form!r}")
        elif self.beta != 1.0:
            raise InvalidArgument("closed-form kernels support beta = 1 only")

    def with_order(self, k: int) -> "KernelHandle":
        return KernelHandle(self.d, self.engines, self.closed_form, k, self.beta, self.meta)

    def with_beta(self, beta: float) -> "KernelHandle":
        return KernelHandle(self.d, self.engines, self.closed_form, self.k, beta, self.meta)

    @property
    def box_half_width(self) -> float:
        return min(e.L for e in self.engines) if self.engines else math.inf

    def grid(self) -> SpatialGrid:
        if self.engines is None:
            raise InvalidArgument("closed-form kernels have no native grid")
        return SpatialGrid(tuple(e.nodes for e in self.engines))

    def eigenvalue_tensor(self) -> np.ndarray:
        lam = None
        for e in self.engines:
            lam = e.eigenvalues if lam is None else np.add.outer(lam, e.eigenvalues)
        return lam


def engine_handle(potential: Potential, L: float, n: int, m: int | None = None, k: int = 0,
                  beta: float = 1.0, stencil: str = "sine") -> KernelHandle:
    """Build one engine per axis of a separable potential (identical axes share an engine)."""
    built: dict = {}
    engines = []
    for comp in potential.axis_potentials():
        key = id(comp) if comp.kind == "table" else (comp.kind, tuple(sorted(comp.params.items())))
        if key not in built:
            built[key] = build_spectral_engine(comp, L, n, m, stencil)
        engines.append(built[key])
    return KernelHandle(potential.dimension, tuple(engines), None, k, beta, {"potential": potential.describe()})


def handle_from_spec(spec: dict) -> KernelHandle:
    """Engine spec ``{"L", "n", "m", "potential", "beta", "k"}`` (plus optional ``"stencil"``, ``"d"``)."""
    try:
        pot_spec = spec["potential"]
        d = int(spec.get("d", pot_spec.get("d", 1) if isinstance(pot_spec, dict) else 1))
        if pot_spec in ("free", {"kind": "free"}):
            return KernelHandle(d, None, "free", int(spec.get("k", 0)))
        V = potential_from_spec(pot_spec, d)
        return engine_handle(V, float(spec["L"]), int(spec["n"]), spec.get("m"), int(spec.get("k", 0)),
                             float(spec.get("beta", 1.0)), spec.get("stencil", "sine"))
    except KeyError as exc:
        raise InvalidArgument(f"engine spec is missing {exc}") from exc


def _as_points(x, d: int) -> np.ndarray:
    """Attach the coordinate axis: in d = 1 every entry is a point, else the last axis holds coordinates."""
    x = np.asarray(x, dtype=float)
    if d == 1:
        x = x[..., None]
    if x.shape[-1] != d:
        raise InvalidArgument(f"points must have {d} coordinates")
    return x


def _axis_kernels(engine: SpectralEngine1D, t: float, xs, ys, orders) -> dict:
    fx, fy = engine.eigenfunctions(xs), engine.eigenfunctions(ys)
    prod = fx * fy
    return {a: prod @ engine.factor(t, a) for a in orders}


def heat_kernel(handle: KernelHandle, t: float, x, y) -> np.ndarray:
    """t^k d_t^k of the kernel at (x, y); vectorized over leading point axes."""
    t = float(t)
    if not t > 0:
        raise InvalidArgument("t must be positive")
    d = handle.d
    X, Y = np.broadcast_arrays(_as_points(x, d), _as_points(y, d))
    shape = X.shape[:-1]
    out = kernel_rows(handle, t, X.reshape(-1, d), Y.reshape(-1, d))
    return out.reshape(shape) if shape else float(out[0])


def kernel_rows(handle: KernelHandle, t: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Kernel at point pairs given as two (N, d) arrays; returns shape (N,)."""
    if not t > 0:
        raise InvalidArgument("t must be positive")
    d, k = handle.d, handle.k
    if handle.closed_form == "free":
        out = psi_profile(k, d).kernel(X - Y, t)
    elif handle.closed_form == "mehler":
        out = _leibniz(
            k, d, lambda i, a: mehler_kernel(t, X[:, i], Y[:, i], a)
        )
    elif handle.beta == 1.0:
        cache = {}

        def axis(i, a):
            eng = handle.engines[i]
            key = (id(eng), i)
            if key not in cache:
                cache[key] = _axis_kernels(eng, t, X[:, i], Y[:, i], range(k + 1))
            return cache[key][a]

        out = _leibniz(k, d, axis)
    else:
        out = _tensor_kernel(handle, t, X, Y)
    return np.asarray(out, dtype=float).reshape(-1)


def _leibniz(k: int, d: int, axis_value) -> np.ndarray:
    total = 0.0
    for a, coef in compositions(k, d):
        term = coef
        for i, ai in enumerate(a):
            term = term * axis_value(i, ai)
        total = total + term
    return np.asarray(total, dtype=float)


def _tensor_kernel(handle: KernelHandle, t: float, X, Y) -> np.ndarray:
    lam = handle.eigenvalue_tensor()
    if lam.size > 5_000_000:
        raise InvalidArgument("tensor expansion too large; lower m")
    F = spectral_factor(lam, t, handle.k, handle.beta)
    out = np.empty(X.shape[0])
    per_axis = [e.eigenfunctions(X[:, i]) * e.eigenfunctions(Y[:, i]) for i, e in enumerate(handle.engines)]
    letters = "abcdefgh"[: handle.d]
    expr = ",".join(f"z{c}" for c in letters) + "," + letters + "->z"
    out = np.einsum(expr, *per_axis, F, optimize=True)
    return out


def _check_grid(handle: KernelHandle, grid: SpatialGrid):
    if grid.dimension != handle.d:
        raise InvalidArgument("grid dimension does not match kernel")
    if handle.engines is not None:
        for e, ax in zip(handle.engines, grid.axes):
            if ax.size != e.n or not np.allclose(ax, e.nodes, rtol=0, atol=1e-12 * e.L):
                raise InvalidArgument("grid does not match the engine nodes")


def expansion_coefficients(handle: KernelHandle, f: np.ndarray) -> np.ndarray:
    """Tensor of coefficients h^d Phi^T f over all multi-indices."""
    c = np.asarray(f, dtype=float)
    for e in handle.engines:
        # contracting axis 0 each time rotates the mode axes to the end in order
        c = np.tensordot(c, e.eigenvectors * e.h, axes=(0, 0))
    return c


def _factor_tensor(handle: KernelHandle, t) -> np.ndarray:
    lam = handle.eigenvalue_tensor()
    if lam.size > 5_000_000:
        raise InvalidArgument("tensor expansion too large; use the separable path or lower m")
    return spectral_factor(lam, t, handle.k, handle.beta)


def apply_semigroup(handle: KernelHandle, f: np.ndarray, grid: SpatialGrid, t: float) -> np.ndarray:
    """(t^k d_t^k exp(-t L^beta) f) on the grid nodes."""
    if not t > 0:
        raise InvalidArgument("t must be positive")
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise InvalidArgument("f is not sampled on the grid")
    _check_grid(handle, grid)
    if handle.engines is None:
        pts = grid.points().reshape(-1, handle.d)
        if pts.shape[0] > 4096:
            raise InvalidArgument("closed-form application limited to 4096 nodes")
        n = pts.shape[0]
        K = kernel_rows(handle, t, np.repeat(pts, n, axis=0), np.tile(pts, (n, 1))).reshape(n, n)
        return (K @ f.reshape(-1) * grid.cell_volume).reshape(grid.shape)
    c = expansion_coefficients(handle, f) * _factor_tensor(handle, t)
    for e in handle.engines:
        c = np.tensordot(c, e.eigenvectors, axes=(0, 1))
    return c


def point_curve(handle: KernelHandle, f: np.ndarray, grid: SpatialGrid, x, times) -> np.ndarray:
    """Values of t^k d_t^k exp(-tL) f at the point x for every t in ``times``."""
    _check_grid(handle, grid)
    x = _as_points(x, handle.d).reshape(handle.d)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if handle.engines is None:
        pts = grid.points().reshape(-1, handle.d)
        X = np.broadcast_to(x, pts.shape)
        vals = np.stack([kernel_rows(handle, t, X, pts) for t in times])
        return vals @ f.reshape(-1) * grid.cell_volume
    W = expansion_coefficients(handle, f)
    for i, e in enumerate(handle.engines):
        shape = [1] * handle.d
        shape[i] = -1
        W = W * e.eigenfunctions(x[i : i + 1])[0].reshape(shape)
    F = _factor_tensor(handle, times)
    return F.reshape(times.size, -1) @ W.reshape(-1)


def mass_defect(handle: KernelHandle, x, t: float, grid: SpatialGrid | None = None) -> float:
    """Quadrature of the kernel row at x; for k = 0 returns 1 - mass."""
    if not t > 0:
        raise InvalidArgument("t must be positive")
    d, k = handle.d, handle.k
    x = _as_points(x, d).reshape(d)
    if handle.engines is None:
        if grid is None:
            raise InvalidArgument("closed-form kernels need a quadrature grid")
        pts = grid.points().reshape(-1, d)
        row = kernel_rows(handle, t, np.broadcast_to(x, pts.shape), pts)
        mass = float(row.sum() * grid.cell_volume)
    elif handle.beta == 1.0:
        rows = []
        for i, e in enumerate(handle.engines):
            phi = e.eigenfunctions(x[i : i + 1])[0] * e.eigenfunction_integrals
            rows.append({a: float(phi @ e.factor(t, a)) for a in range(k + 1)})
        mass = float(_leibniz(k, d, lambda i, a: rows[i][a]))
    else:
        W = 1.0
        for i, e in enumerate(handle.engines):
            shape = [1] * d
            shape[i] = -1
            W = W * (e.eigenfunctions(x[i : i + 1])[0] * e.eigenfunction_integrals).reshape(shape)
        mass = float(np.sum(_factor_tensor(handle, t) * W))
    return 1.0 - mass if k == 0 else mass


def poisson_kernel_by_subordination(handle: KernelHandle, t: float, x, y, n_nodes: int = 2000) -> np.ndarray:
    """exp(-t L^{1/2}) kernel from heat kernels, weighted by t e^{-t^2/4s} / (2 sqrt(pi) s^{3/2})."""
    if handle.k != 0 or handle.beta != 1.0:
        raise InvalidArgument("subordination cross-check starts from the k = 0 heat kernel")
    lam_min = min(e.eigenvalues[0] for e in handle.engines) if handle.engines else 1e-3
    u = np.linspace(math.log(t * t / 400.0), math.log(60.0 / lam_min), n_nodes)
    s = np.exp(u)
    eta = t / (2 * math.sqrt(math.pi)) * s ** (-1.5) * np.exp(-t * t / (4 * s))
    vals = np.stack([np.asarray(heat_kernel(handle, si, x, y)) for si in s])
    w = eta * s
    return np.trapezoid(w.reshape((-1,) + (1,) * (vals.ndim - 1)) * vals, u, axis=0)


def free_box_kernel(k: int, t: float, x, y, L: float, images: int = 4) -> np.ndarray:
    """t^k d_t^k of the Dirichlet heat kernel of -d^2/dx^2 on [-L, L] by images.

    Built from the free radial profile:
    sum_n W(x - y + 4nL) - W(x + y + 2L + 4nL).
    """
    prof = psi_profile(k, 1)
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    out = 0.0
    for n in range(-images, images + 1):
        out = out + prof.kernel(x - y + 4 * n * L, t) - prof.kernel(x + y + 2 * L + 4 * n * L, t)
    return np.asarray(out)
