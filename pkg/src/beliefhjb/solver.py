"""Monotone finite-difference solver for the value-function obstacle problem.

The grid covers the closed cube including its faces. On a face ``x_i in {0, 1}``
the coefficient ``a_i = k_i x_i^2 (1 - x_i)^2`` vanishes exactly, so the
second-difference stencil along that axis is never read and no boundary
condition enters the scheme.

Iteration (Jacobi, explicit pseudo-time)::

    res = max(max_i {a_i D2_i V - c_i}, g - V)
    V  <- max(V + tau * res, g)

with ``tau = 0.9 / max(max_node sum_i 2 a_i / h_i^2, 1)``. Both branches are
nondecreasing in every neighbour value under this step, so the sweep is a
monotone map and its fixed point (``res == 0``) is unique.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GridError, NoConvergence
from .model import ProblemSpec, obstacle_g, value_bounds

__all__ = [
    "Grid",
    "ValueField",
    "PolicyField",
    "SolveReport",
    "Scheme",
    "STOP",
    "build_grid",
    "default_tol",
    "discrete_residual",
    "solve_value",
    "extract_policy",
    "lipschitz_estimate",
    "constant_policy",
]

STOP = 0
FROM_OBSTACLE = "FROM_OBSTACLE"
FROM_UPPER = "FROM_UPPER"


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on ``[0, 1]^d``; nodes are stored row-major (axis 0 slowest)."""

    n: tuple

    @property
    def d(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple:
        return tuple(1.0 / (m - 1) for m in self.n)

    @property
    def shape(self) -> tuple:
        return tuple(self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axes(self):
        return [np.arange(m) / (m - 1) for m in self.n]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, d)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def interior_mask(self) -> np.ndarray:
        masks = np.meshgrid(*[np.r_[False, np.ones(m - 2, bool), False] for m in self.n],
                            indexing="ij")
        return np.logical_and.reduce([m.ravel() for m in masks])

    def to_dict(self):
        return {"d": self.d, "n": list(self.n)}


@dataclass
class ValueField:
    grid: Grid
    values: np.ndarray
    space: str = "V"

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.size:
            raise ValueError(f"field has {self.values.size} entries, grid has {self.grid.size}")

    def nd(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


@dataclass
class PolicyField:
    """Per-node action code: 0 = STOP, ``i`` = continue learning alternative ``i`` (1-based)."""

    grid: Grid
    actions: np.ndarray

    def __post_init__(self):
        self.actions = np.ascontiguousarray(self.actions, dtype=np.int8).ravel()
        if self.actions.size != self.grid.size:
            raise ValueError("policy size does not match grid")

    def label(self, j) -> str:
        a = int(self.actions[j])
        return "STOP" if a == STOP else f"CONTINUE({a})"


@dataclass
class SolveReport:
    iterations: int
    residual: float
    init: str
    tol: float
    tau: float
    converged: bool
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, timing=False):
        d = {
            "iterations": self.iterations,
            "residual": self.residual,
            "init": self.init,
            "tol": self.tol,
            "tau": self.tau,
            "converged": self.converged,
        }
        if timing:
            d["wall_time"] = self.wall_time
        return d


def build_grid(d: int, n) -> Grid:
    n = tuple(int(m) for m in np.broadcast_to(np.atleast_1d(n), (d,)))
    if any(m < 3 for m in n):
        raise GridError(f"every axis needs at least 3 nodes, got {n}")
    return Grid(n)


def default_tol(d: int) -> float:
    return 1e-8 if d == 1 else 1e-6


class Scheme:
    """Precomputed coefficients of the explicit scheme for one ``(spec, grid)``."""

    def __init__(self, spec: ProblemSpec, grid: Grid, backend=None):
        self.spec = spec
        self.grid = grid
        self.kern = kernels if backend is None else kernels.load(backend)
        x = grid.coords()
        self.x = x
        self.g = np.ascontiguousarray(obstacle_g(spec, x), dtype=float)
        self.coef = np.ascontiguousarray((spec.k * (x * (1.0 - x)) ** 2).T)
        self.inv_h2 = np.array([1.0 / h**2 for h in grid.h])
        self.c = np.asarray(spec.c, float)
        self.shape = np.asarray(grid.shape, np.int64)
        rate = (2.0 * self.coef * self.inv_h2[:, None]).sum(axis=0).max()
        # tau <= 1 keeps the obstacle branch (1 - tau) V + tau g monotone too
        self.tau = 0.9 / max(rate, 1.0)

    def residual(self, V):
        out = np.empty(self.grid.size)
        sup = self.kern.residual(np.ascontiguousarray(V, float), self.g, self.coef,
                                 self.inv_h2, self.c, self.shape, out)
        return out, sup

    def sweep(self, V, tau=None):
        """Return ``(T(V), sup|res(V)|)`` without touching ``V``."""
        V = np.ascontiguousarray(V, float)
        out = np.empty_like(V)
        res = np.empty_like(V)
        sup = self.kern.sweep(V, self.g, self.coef, self.inv_h2, self.c, self.shape,
                              self.tau if tau is None else tau, out, res)
        return out, sup

    def initial(self, init):
        if isinstance(init, str):
            key = init.upper()
            if key == FROM_OBSTACLE:
                return self.g.copy(), FROM_OBSTACLE
            if key == FROM_UPPER:
                return np.full(self.grid.size, value_bounds(self.spec)[1]), FROM_UPPER
            raise ValueError(f"unknown init {init!r}")
        vals = init.values if isinstance(init, ValueField) else init
        vals = np.array(vals, dtype=float).ravel()
        if vals.size != self.grid.size:
            raise ValueError("GIVEN field does not match grid")
        return vals, "GIVEN"

    def branch_values(self, V):
        """Diffusion branches ``a_i D2_i V - c_i`` per node, shape ``(d, size)``."""
        Vn = np.asarray(V, float).reshape(self.grid.shape)
        out = np.empty((self.grid.d, self.grid.size))
        for i in range(self.grid.d):
            d2 = np.zeros(self.grid.shape)
            lo = [slice(None)] * self.grid.d
            mid = list(lo)
            hi = list(lo)
            lo[i], mid[i], hi[i] = slice(0, -2), slice(1, -1), slice(2, None)
            d2[tuple(mid)] = (Vn[tuple(hi)] - 2.0 * Vn[tuple(mid)]) + Vn[tuple(lo)]
            out[i] = self.coef[i] * d2.ravel() * self.inv_h2[i] - self.c[i]
        return out


def discrete_residual(spec: ProblemSpec, grid: Grid, V: ValueField) -> ValueField:
    res, _ = Scheme(spec, grid).residual(V.values)
    return ValueField(grid, res, "residual")


def solve_value(spec: ProblemSpec, grid: Grid, init=FROM_OBSTACLE, tol=None,
                max_iters=20_000_000, backend=None):
    """Iterate the projected scheme until ``sup|res| <= tol``.

    ``init`` is ``"FROM_OBSTACLE"``, ``"FROM_UPPER"`` or a field/array (GIVEN).
    Raises :class:`NoConvergence` if ``max_iters`` sweeps do not suffice.
    """
    if tol is None:
        tol = default_tol(grid.d)
    if not tol > 0:
        raise ValueError("tol must be positive")
    scheme = Scheme(spec, grid, backend)
    V, tag = scheme.initial(init)
    V = np.ascontiguousarray(np.maximum(V, scheme.g))
    t0 = time.perf_counter()
    iters, sup = scheme.kern.iterate(V, scheme.g, scheme.coef, scheme.inv_h2, scheme.c,
                                     scheme.shape, scheme.tau, float(tol), int(max_iters))
    report = SolveReport(int(iters), float(sup), tag, float(tol), scheme.tau,
                         bool(sup <= tol), time.perf_counter() - t0)
    if not report.converged:
        raise NoConvergence(
            f"no convergence after {iters} sweeps (residual {sup:.3e} > tol {tol:.1e})",
            iterations=int(iters), residual=float(sup))
    return ValueField(grid, V, "V"), report


def extract_policy(spec: ProblemSpec, grid: Grid, V: ValueField, contact_tol=1e-5) -> PolicyField:
    """STOP where ``V - g <= contact_tol``; otherwise learn the alternative with the largest diffusion branch."""
    scheme = Scheme(spec, grid)
    branches = scheme.branch_values(V.values)
    act = (np.argmax(branches, axis=0) + 1).astype(np.int8)
    act[V.values - scheme.g <= contact_tol] = STOP
    return PolicyField(grid, act)


def constant_policy(d: int, action: int) -> PolicyField:
    grid = build_grid(d, 3)
    return PolicyField(grid, np.full(grid.size, action, np.int8))


def lipschitz_estimate(V: ValueField, grid: Grid | None = None) -> float:
    """Largest axis-aligned difference quotient between neighbouring nodes."""
    grid = V.grid if grid is None else grid
    Vn = V.values.reshape(grid.shape)
    best = 0.0
    for i, h in enumerate(grid.h):
        best = max(best, float(np.abs(np.diff(Vn, axis=i)).max()) / h)
    return best
