"""Desk-scale checks of the comparison machinery on discrete fields.

Covers barrier-modified fields ``u - eps*Phi`` / ``v + eps*Phi``, the
doubling-of-variables maximiser and its separation bound, residual-sign
surrogates for sub/supersolutions, and the two-sided convergence experiment
(solves started below and above must squeeze onto one fixed point).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NoConvergence, PairSearchTooLarge
from .model import ProblemSpec, obstacle_branches, to_u, value_bounds
from .operator import (PRINTED, TRANSFORMED, F_eps_values, F_values, branch_scale,
                       eval_Phi, theta_monotonicity)
from .solver import (FROM_OBSTACLE, FROM_UPPER, Grid, Scheme, ValueField, default_tol,
                     lipschitz_estimate, solve_value)

__all__ = [
    "VerifyReport",
    "BarrierField",
    "DoublingResult",
    "make_barrier_fields",
    "doubling_maximize",
    "doubling_experiment",
    "check_residual_sign",
    "comparison_experiment",
    "adversarial_experiment",
    "bounds_check",
    "complementarity_check",
    "barrier_identity_check",
    "theta_check",
    "scheme_monotonicity_check",
    "kink_mask",
]

MAX_LISTED = 100
PAIR_BUDGET = 10**8
SLACK_C = 2.0


@dataclass
class VerifyReport:
    name: str
    passed: bool
    params: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    n_violations: int = 0
    # in-memory by-products (e.g. converged fields); never serialised
    extras: dict = field(default_factory=dict, repr=False)

    def add_violations(self, items):
        items = list(items)
        self.n_violations += len(items)
        room = MAX_LISTED - len(self.violations)
        if room > 0:
            self.violations.extend(items[:room])

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "params": self.params,
            "values": self.values,
            "n_violations": self.n_violations,
            "violations": self.violations[:MAX_LISTED],
        }


def _node_list(grid, idx, extra=None):
    coords = grid.coords()
    out = []
    for j in np.asarray(idx).ravel()[:MAX_LISTED]:
        item = {"node": int(j), "x": [float(v) for v in coords[j]]}
        if extra is not None:
            item["value"] = float(extra[j])
        out.append(item)
    return out


# ---------------------------------------------------------------- barriers

@dataclass
class BarrierField:
    """Barrier-shifted field on the interior nodes of ``base.grid``.

    ``sign=-1`` gives ``u - eps*Phi`` (diverges to -inf at the faces),
    ``sign=+1`` gives ``v + eps*Phi``.
    """

    base: ValueField
    eps: float
    sign: int
    index: np.ndarray
    x: np.ndarray
    values: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.base.grid


def _barrier(field_, eps, sign):
    grid = field_.grid
    idx = np.flatnonzero(grid.interior_mask())
    x = grid.coords()[idx]
    phi, _, _ = eval_Phi(x)
    vals = field_.values[idx] + sign * eps * phi
    return BarrierField(field_, float(eps), sign, idx, np.ascontiguousarray(x),
                        np.ascontiguousarray(vals))


def make_barrier_fields(u: ValueField, v: ValueField, eps: float):
    """``(u - eps*Phi, v + eps*Phi)`` restricted to interior nodes."""
    if u.grid != v.grid:
        raise ValueError("fields must share a grid")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    return _barrier(u, eps, -1), _barrier(v, eps, +1)


# ---------------------------------------------------------------- doubling

@dataclass
class DoublingResult:
    alpha: float
    eps: float
    x_star: np.ndarray
    y_star: np.ndarray
    value: float
    separation: float
    lhs: float
    bound: float
    lip_u: float
    lip_v: float
    diagonal_max: float
    holds: bool
    diagonal_ok: bool

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "eps": self.eps,
            "x_star": [float(v) for v in self.x_star],
            "y_star": [float(v) for v in self.y_star],
            "M": self.value,
            "alpha_separation": self.lhs,
            "bound": self.bound,
            "lip_u": self.lip_u,
            "lip_v": self.lip_v,
            "diagonal_max": self.diagonal_max,
            "holds": self.holds,
            "diagonal_ok": self.diagonal_ok,
        }


def _pair_argmax(ue, ve, X, Y, alpha, threads, kern, chunk=64):
    n = ue.size
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]

    def work(b):
        return kern.argmax_pairs(ue, ve, X, Y, float(alpha), b[0], b[1])

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    best, bx, by = -math.inf, -1, -1
    # chunks are in x order and each returns its first maximiser, so strict >
    # reproduces the sequential lexicographic tie-break
    for val, ix, iy in parts:
        if val > best:
            best, bx, by = val, ix, iy
    return best, bx, by


def doubling_maximize(u_eps: BarrierField, v_eps: BarrierField, alpha: float, *,
                      lip_u=None, lip_v=None, budget=PAIR_BUDGET, threads=1,
                      backend=None) -> DoublingResult:
    """Exhaustive maximisation of ``u_eps(x) - v_eps(y) - alpha/2 |x - y|^2`` over node pairs."""
    if u_eps.grid != v_eps.grid:
        raise ValueError("barrier fields must share a grid")
    n = u_eps.values.size
    if n * n > budget:
        raise PairSearchTooLarge(f"{n * n} node pairs exceed the budget of {budget}")
    kern = kernels if backend is None else kernels.load(backend)
    best, bx, by = _pair_argmax(u_eps.values, v_eps.values, u_eps.x, v_eps.x, alpha,
                                threads, kern)
    xs, ys = u_eps.x[bx], v_eps.x[by]
    sep = float(np.sqrt(((xs - ys) ** 2).sum()))
    lu = lipschitz_estimate(u_eps.base) if lip_u is None else float(lip_u)
    lv = lipschitz_estimate(v_eps.base) if lip_v is None else float(lip_v)
    h = max(u_eps.grid.h)
    bound = 2.0 * max(lu, lv) + SLACK_C * h * alpha
    diag = float((u_eps.values - v_eps.values).max())
    return DoublingResult(
        alpha=float(alpha), eps=u_eps.eps, x_star=xs.copy(), y_star=ys.copy(), value=float(best),
        separation=sep, lhs=alpha * sep, bound=bound, lip_u=lu, lip_v=lv,
        diagonal_max=diag, holds=bool(alpha * sep <= bound), diagonal_ok=bool(best >= diag),
    )


def doubling_experiment(u: ValueField, v: ValueField, alphas=(1, 10, 100, 1000),
                        epss=(1e-1, 1e-2, 1e-3), *, budget=PAIR_BUDGET, threads=1,
                        backend=None) -> VerifyReport:
    """Run the separation bound over an ``(alpha, eps)`` ladder."""
    lu, lv = lipschitz_estimate(u), lipschitz_estimate(v)
    rep = VerifyReport("doubling_bound", True,
                       params={"alphas": [float(a) for a in alphas],
                               "eps": [float(e) for e in epss],
                               "n": list(u.grid.n), "slack_C": SLACK_C},
                       values={"lip_u": lu, "lip_v": lv, "runs": []})
    worst = -math.inf
    for eps in epss:
        ue, ve = make_barrier_fields(u, v, eps)
        for a in alphas:
            res = doubling_maximize(ue, ve, a, lip_u=lu, lip_v=lv, budget=budget,
                                    threads=threads, backend=backend)
            rep.values["runs"].append(res.to_dict())
            worst = max(worst, res.lhs - res.bound)
            if not (res.holds and res.diagonal_ok):
                rep.passed = False
                rep.add_violations([res.to_dict()])
    rep.values["max_lhs_minus_bound"] = worst
    return rep


# ------------------------------------------------------------ residual sign

def kink_mask(spec: ProblemSpec, grid: Grid) -> np.ndarray:
    """Nodes where the top two obstacle branches are within ``h * Lip(g)``."""
    br = np.sort(obstacle_branches(spec, grid.coords()), axis=-1)
    lip = float(spec.spread.max())
    return (br[:, -1] - br[:, -2]) <= max(grid.h) * lip


def _central_jets(field_: ValueField):
    grid = field_.grid
    un = field_.values.reshape(grid.shape)
    d = grid.d
    p = np.zeros((grid.size, d))
    a = np.zeros((grid.size, d))
    for i, h in enumerate(grid.h):
        lo = [slice(None)] * d
        mid = list(lo)
        hi = list(lo)
        lo[i], mid[i], hi[i] = slice(0, -2), slice(1, -1), slice(2, None)
        pi = np.zeros(grid.shape)
        ai = np.zeros(grid.shape)
        pi[tuple(mid)] = (un[tuple(hi)] - un[tuple(lo)]) / (2.0 * h)
        ai[tuple(mid)] = (un[tuple(hi)] - 2.0 * un[tuple(mid)] + un[tuple(lo)]) / h**2
        p[:, i] = pi.ravel()
        a[:, i] = ai.ravel()
    return p, a


def check_residual_sign(spec: ProblemSpec, field_: ValueField, side: str, *, tol_sign=None,
                        solver_tol=None, consistency_allowance=True, exclude_kinks=False,
                        p2_sign=TRANSFORMED, k=None) -> VerifyReport:
    """Sign of ``F`` on central-difference jets of a u-space field at interior nodes.

    ``side="SUB"`` passes iff ``F <= tol_sign`` everywhere, ``"SUPER"`` iff
    ``F >= -tol_sign``. When ``tol_sign`` is not given it is
    ``10 * solver_tol * max e^{-u}`` (the solver tolerance pushed through the
    transform), plus, with ``consistency_allowance``, the leading truncation
    term ``max_i k_i s_i^2 h_i^2 (D2_i u)^2 / 4`` that central differences
    incur under the exponential change of variables.

    ``exclude_kinks`` drops obstacle kink nodes from the SUPER test.
    """
    side = side.upper()
    if side not in ("SUB", "SUPER"):
        raise ValueError("side must be SUB or SUPER")
    grid = field_.grid
    kk = spec.k if k is None else np.asarray(k, float)
    inner = grid.interior_mask()
    x = grid.coords()
    p, a = _central_jets(field_)
    F, branch = F_values(spec, x[inner], field_.values[inner], p[inner], a[inner],
                         k=kk, p2_sign=p2_sign)
    allowance = 0.0
    if tol_sign is None:
        stol = default_tol(grid.d) if solver_tol is None else solver_tol
        tol_sign = 10.0 * stol * float(np.exp(-field_.values).max())
        if consistency_allowance:
            s2 = (x[inner] * (1.0 - x[inner])) ** 2
            h2 = np.asarray(grid.h) ** 2
            allowance = float((kk * s2 * h2 * a[inner] ** 2 / 4.0).max())
            tol_sign += allowance
    check = np.ones(F.shape, bool)
    if exclude_kinks and side == "SUPER":
        check &= ~kink_mask(spec, grid)[inner]
    bad = (F > tol_sign) if side == "SUB" else (F < -tol_sign)
    bad &= check
    nodes = np.flatnonzero(inner)
    full = np.full(grid.size, np.nan)
    full[inner] = F
    rep = VerifyReport(
        f"residual_sign_{side.lower()}", not bad.any(),
        params={"tol_sign": float(tol_sign), "consistency_allowance": allowance,
                "exclude_kinks": bool(exclude_kinks), "p2_sign": int(p2_sign)},
        values={"F_max": float(F[check].max()) if check.any() else None,
                "F_min": float(F[check].min()) if check.any() else None,
                "checked_nodes": int(check.sum())},
    )
    rep.add_violations(_node_list(grid, nodes[bad], full))
    rep.n_violations = int(bad.sum())
    return rep


# ------------------------------------------------------- two-sided solving

def comparison_experiment(spec: ProblemSpec, grid: Grid, tol=None, max_iters=20_000_000,
                          backend=None) -> VerifyReport:
    """Lock-step solves from the obstacle (below) and the upper bound (above).

    Checks the below-iterate never exceeds the above-iterate, that both reach
    the same fixed point within ``10 * tol``, and that the order flips in
    u-space (the transform is decreasing).
    """
    tol = default_tol(grid.d) if tol is None else float(tol)
    scheme = Scheme(spec, grid, backend)
    lo, _ = scheme.initial(FROM_OBSTACLE)
    hi, _ = scheme.initial(FROM_UPPER)
    lo = np.maximum(lo, scheme.g)
    hi = np.maximum(hi, scheme.g)
    it_lo = it_hi = sweeps = 0
    done_lo = done_hi = False
    order_breaks = 0
    first_break = None
    worst_gap = -math.inf
    while not (done_lo and done_hi):
        gap = float((lo - hi).max())
        worst_gap = max(worst_gap, gap)
        if gap > 0:
            order_breaks += 1
            if first_break is None:
                first_break = {"sweep": sweeps, "node": int(np.argmax(lo - hi)), "gap": gap}
        if sweeps >= max_iters:
            raise NoConvergence(f"comparison experiment exceeded {max_iters} sweeps",
                                iterations=sweeps)
        if not done_lo:
            nxt, sup = scheme.sweep(lo)
            if sup <= tol:
                done_lo = True
            else:
                lo = nxt
                it_lo += 1
        if not done_hi:
            nxt, sup = scheme.sweep(hi)
            if sup <= tol:
                done_hi = True
            else:
                hi = nxt
                it_hi += 1
        sweeps += 1
    dist = float(np.abs(lo - hi).max())
    u_lo, u_hi = to_u(spec, lo), to_u(spec, hi)
    u_flip_ok = bool(np.all(u_lo >= u_hi))
    rep = VerifyReport(
        "comparison_experiment",
        passed=order_breaks == 0 and dist <= 10 * tol and u_flip_ok,
        params={"n": list(grid.n), "tol": tol},
        values={"iterations_below": it_lo, "iterations_above": it_hi,
                "sup_distance": dist, "max_below_minus_above": worst_gap,
                "order_breaks": order_breaks, "u_order_flipped": u_flip_ok},
    )
    if first_break is not None:
        rep.add_violations([first_break])
        rep.n_violations = order_breaks
    rep.extras.update(below=ValueField(grid, lo), above=ValueField(grid, hi))
    return rep


def adversarial_experiment(spec: ProblemSpec, grid: Grid, seeds=(0, 1, 2, 3, 4), tol=None,
                           reference: ValueField | None = None, backend=None) -> VerifyReport:
    """Random in-bounds starting fields must converge to the reference fixed point."""
    tol = default_tol(grid.d) if tol is None else float(tol)
    if reference is None:
        reference, _ = solve_value(spec, grid, FROM_OBSTACLE, tol, backend=backend)
    lower, upper = value_bounds(spec)
    dists = []
    for s in seeds:
        rng = np.random.default_rng(s)
        start = rng.uniform(lower, upper, grid.size)
        V, _ = solve_value(spec, grid, start, tol, backend=backend)
        dists.append(float(np.abs(V.values - reference.values).max()))
    bad = [{"seed": int(s), "sup_distance": d} for s, d in zip(seeds, dists) if d > 10 * tol]
    rep = VerifyReport("adversarial_init", not bad, params={"seeds": list(seeds), "tol": tol},
                       values={"sup_distances": dists})
    rep.add_violations(bad)
    return rep


# -------------------------------------------------------- solution checks

def bounds_check(spec: ProblemSpec, V: ValueField, tol: float) -> VerifyReport:
    lower, upper = value_bounds(spec)
    bad = np.flatnonzero((V.values < lower - tol) | (V.values > upper + tol))
    rep = VerifyReport("value_bounds", bad.size == 0,
                       params={"lower": lower, "upper": upper, "tol": tol},
                       values={"min": float(V.values.min()), "max": float(V.values.max())})
    rep.add_violations(_node_list(V.grid, bad, V.values))
    rep.n_violations = int(bad.size)
    return rep


def complementarity_check(spec: ProblemSpec, V: ValueField, tol: float) -> VerifyReport:
    """``min(V - g, c_min - max_i a_i D2_i V) <= 10 tol`` and ``V >= g - tol`` nodewise."""
    scheme = Scheme(spec, V.grid)
    br = scheme.branch_values(V.values) + scheme.c[:, None]
    comp = np.minimum(V.values - scheme.g, scheme.c.min() - br.max(axis=0))
    bad = np.flatnonzero((comp > 10 * tol) | (V.values < scheme.g - tol))
    rep = VerifyReport("complementarity", bad.size == 0, params={"tol": tol},
                       values={"max_complementarity": float(comp.max()),
                               "min_V_minus_g": float((V.values - scheme.g).min())})
    rep.add_violations(_node_list(V.grid, bad, comp))
    rep.n_violations = int(bad.size)
    return rep


def _random_jets(spec, rng, n, p_scale=5.0, a_scale=50.0, r_range=(-3.0, 3.0)):
    x = rng.uniform(0.0, 1.0, (n, spec.d))
    x = np.clip(x, 1e-6, 1 - 1e-6)
    r = rng.uniform(*r_range, n)
    p = rng.normal(0.0, p_scale, (n, spec.d))
    a = rng.normal(0.0, a_scale, (n, spec.d))
    return x, r, p, a


def barrier_identity_check(spec: ProblemSpec, n=100_000, eps_values=(1e-3, -1e-3, 1e-1, -1e-1),
                           seed=0, rel_tol=1e-12, p2_sign=PRINTED, k=None) -> VerifyReport:
    """``F_eps(x, p - eps DPhi, A - eps D2Phi; r) == F(x, r, p, A)`` on random interior jets.

    The relative error is taken against the largest summand of ``F`` at that
    jet, i.e. the conditioning of the floating-point evaluation.
    """
    rng = np.random.default_rng(seed)
    x, r, p, a = _random_jets(spec, rng, n)
    _, grad, hess = eval_Phi(x)
    ref, _ = F_values(spec, x, r, p, a, k=k, p2_sign=p2_sign)
    scale = np.maximum(np.abs(ref), branch_scale(spec, x, r, p, a, k=k))
    worst = 0.0
    rep = VerifyReport("barrier_identity", True,
                       params={"n": n, "eps": list(eps_values), "seed": seed,
                               "rel_tol": rel_tol, "p2_sign": p2_sign})
    for eps in eps_values:
        val, _ = F_eps_values(spec, eps, x, p - eps * grad, a - eps * hess, r, k=k,
                              p2_sign=p2_sign)
        rel = np.abs(val - ref) / scale
        worst = max(worst, float(rel.max()))
        bad = np.flatnonzero(rel > rel_tol)
        if bad.size:
            rep.passed = False
            rep.add_violations([{"eps": eps, "x": x[j].tolist(), "rel_err": float(rel[j])}
                                for j in bad[:10]])
    rep.values["max_rel_err"] = worst
    return rep


def theta_check(spec: ProblemSpec, R=2.0, n=100_000, seed=0, p2_sign=PRINTED,
                k=None) -> VerifyReport:
    """Sample ``r' <= r <= R`` and confirm ``F(r) - F(r') >= theta (r - r')``."""
    rng = np.random.default_rng(seed)
    x, _, p, a = _random_jets(spec, rng, n)
    r = R - rng.exponential(1.0, n)
    rp = r - rng.exponential(1.0, n)
    theta = theta_monotonicity(spec, R)
    Fr, _ = F_values(spec, x, r, p, a, k=k, p2_sign=p2_sign)
    Frp, _ = F_values(spec, x, rp, p, a, k=k, p2_sign=p2_sign)
    slack = (Fr - Frp) - theta * (r - rp)
    bad = np.flatnonzero(slack < 0)
    rep = VerifyReport("theta_monotonicity", bad.size == 0,
                       params={"R": R, "n": n, "seed": seed},
                       values={"theta": theta, "min_slack": float(slack.min())})
    rep.add_violations([{"x": x[j].tolist(), "r": float(r[j]), "r_prime": float(rp[j]),
                         "slack": float(slack[j])} for j in bad[:MAX_LISTED]])
    rep.n_violations = int(bad.size)
    return rep


def scheme_monotonicity_check(spec: ProblemSpec, grid: Grid, pairs=100, seed=0,
                              backend=None) -> VerifyReport:
    """Random ordered pairs ``U <= W``: one sweep must keep ``T(U) <= T(W)``."""
    rng = np.random.default_rng(seed)
    scheme = Scheme(spec, grid, backend)
    lower, upper = value_bounds(spec)
    worst = -math.inf
    bad = []
    for t in range(pairs):
        U = rng.uniform(lower - 0.5, upper + 0.5, grid.size)
        W = U + rng.exponential(0.1, grid.size) * (rng.random(grid.size) < 0.7)
        TU, _ = scheme.sweep(U)
        TW, _ = scheme.sweep(W)
        gap = float((TU - TW).max())
        worst = max(worst, gap)
        if gap > 0:
            bad.append({"pair": t, "gap": gap})
    rep = VerifyReport("scheme_monotonicity", not bad,
                       params={"pairs": pairs, "seed": seed, "n": list(grid.n), "tau": scheme.tau},
                       values={"max_TU_minus_TW": worst})
    rep.add_violations(bad)
    return rep
