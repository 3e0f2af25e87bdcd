"""Batch entry point: ``beliefhjb {solve,simulate,verify,doubling,all} --config FILE``.

Writes ``value.csv``, ``policy.csv``, ``residual.csv``, optionally
``episodes.csv``, and ``summary.json`` into the output directory.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage/config/dependency
error, 3 numerical failure (no convergence).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import kernels
from .config import RunConfig, load_config
from .errors import BeliefHJBError, ConfigError, DependencyError, NoConvergence
from .model import make_spec, to_u, value_bounds
from .simulator import estimate_value_mc, simulate_episodes, write_episodes_csv
from .solver import (STOP, Grid, PolicyField, ValueField, build_grid, constant_policy,
                     discrete_residual, extract_policy, lipschitz_estimate, solve_value)
from .verify import (VerifyReport, barrier_identity_check, bounds_check, check_residual_sign,
                     comparison_experiment, complementarity_check, doubling_experiment,
                     scheme_monotonicity_check, theta_check)

log = logging.getLogger("beliefhjb")

COMMANDS = ("solve", "simulate", "verify", "doubling", "all")
EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


# ------------------------------------------------------------------ CSV I/O

def _fmt(v):
    return format(float(v), ".17g")


def write_field_csv(path, field_: ValueField, column="value"):
    coords = field_.grid.coords()
    d = field_.grid.d
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join([f"x_{i + 1}" for i in range(d)] + [column]) + "\n")
        for j in range(coords.shape[0]):
            fh.write(",".join([_fmt(t) for t in coords[j]] + [_fmt(field_.values[j])]) + "\n")


def write_policy_csv(path, policy: PolicyField):
    coords = policy.grid.coords()
    d = policy.grid.d
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join([f"x_{i + 1}" for i in range(d)] + ["action"]) + "\n")
        for j in range(coords.shape[0]):
            fh.write(",".join([_fmt(t) for t in coords[j]] + [str(int(policy.actions[j]))]) + "\n")


def _read_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    coords, vals = data[:, :-1], data[:, -1]
    n = tuple(len(np.unique(coords[:, i])) for i in range(coords.shape[1]))
    grid = Grid(n)
    if not np.allclose(grid.coords(), coords, rtol=0, atol=1e-12):
        raise DependencyError(f"{path} is not a full tensor grid in lexicographic order")
    return grid, vals


def read_field_csv(path, space="V") -> ValueField:
    grid, vals = _read_csv(path)
    return ValueField(grid, vals, space)


def read_policy_csv(path) -> PolicyField:
    grid, vals = _read_csv(path)
    return PolicyField(grid, vals.astype(np.int8))


def interpolate(field_: ValueField, x) -> float:
    """Multilinear interpolation of a grid field at point ``x``."""
    grid = field_.grid
    vals = field_.nd()
    x = np.asarray(x, float)
    lo_idx, wts = [], []
    for i, m in enumerate(grid.n):
        s = min(max(x[i] * (m - 1), 0.0), m - 1.0)
        j = min(int(math.floor(s)), m - 2)
        lo_idx.append(j)
        wts.append(s - j)
    total = 0.0
    for corner in range(2 ** grid.d):
        idx, w = [], 1.0
        for i in range(grid.d):
            bit = (corner >> i) & 1
            idx.append(lo_idx[i] + bit)
            w *= wts[i] if bit else 1.0 - wts[i]
        total += w * vals[tuple(idx)]
    return float(total)


# ----------------------------------------------------------------- pipeline

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


class Pipeline:
    def __init__(self, cfg: RunConfig, threads=1):
        self.cfg = cfg
        self.threads = max(1, int(threads))
        self.spec = cfg.spec
        self.grid = build_grid(self.spec.d, cfg.n)
        self.checks: list[dict] = []
        self.sections: dict = {}
        self.V: ValueField | None = None
        self.policy: PolicyField | None = None
        os.makedirs(cfg.out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.cfg.out_dir, name)

    def record(self, rep: VerifyReport):
        self.checks.append(rep.to_dict())
        log.info("%-28s %s", rep.name, "PASS" if rep.passed else "FAIL")

    # commands
    def solve(self):
        s = self.cfg.solver
        V, report = solve_value(self.spec, self.grid, s.init, s.tol, s.max_iters)
        policy = extract_policy(self.spec, self.grid, V, s.contact_tol)
        res = discrete_residual(self.spec, self.grid, V)
        write_field_csv(self.path("value.csv"), V)
        write_policy_csv(self.path("policy.csv"), policy)
        write_field_csv(self.path("residual.csv"), res, "residual")
        self.V, self.policy = V, policy
        self.sections["solve"] = {
            **report.to_dict(),
            "n": list(self.grid.n),
            "lipschitz_estimate": lipschitz_estimate(V),
            "continuation_fraction": float(np.mean(policy.actions != STOP)),
            # informational only: nondecreasing along each axis, up to solver tolerance
            "monotone_in_x": [bool((np.diff(V.nd(), axis=i) >= -s.tol).all())
                              for i in range(self.grid.d)],
        }
        self.record(VerifyReport("solve_converged", report.converged,
                                 values={"iterations": report.iterations,
                                         "residual": report.residual}))
        self.record(bounds_check(self.spec, V, s.tol))
        self.record(complementarity_check(self.spec, V, s.tol))

    def _load_solution(self):
        if self.policy is not None:
            return
        pol_path, val_path = self.path("policy.csv"), self.path("value.csv")
        if not (os.path.exists(pol_path) and os.path.exists(val_path)):
            raise DependencyError(
                "simulate with policy=FROM_SOLVER needs a prior solve: run 'solve' first "
                "(same output directory) or set policy = STOP")
        self.policy = read_policy_csv(pol_path)
        self.V = read_field_csv(val_path)
        if self.policy.grid.d != self.spec.d:
            raise DependencyError("stored policy dimension does not match the config")

    def simulate(self):
        sim = self.cfg.simulate
        if sim.policy == "FROM_SOLVER":
            self._load_solution()
            policy = self.policy
        else:
            policy = constant_policy(self.spec.d, STOP)
        est, paths = estimate_value_mc(self.spec, policy, sim.x0, sim.M, sim.dt, sim.t_max,
                                       sim.seed, self.threads, return_paths=True)
        section = {"policy": sim.policy, "x0": sim.x0, "dt": sim.dt, "t_max": sim.t_max,
                   **est.to_dict()}
        if sim.episodes_csv:
            write_episodes_csv(self.path("episodes.csv"), paths)
        if sim.policy == "FROM_SOLVER":
            lower, upper = value_bounds(self.spec)
            span = upper - lower
            vh = interpolate(self.V, sim.x0)
            over = est.mean - (vh + 3 * est.stderr + 0.01 * span)
            under = (vh - est.mean) - 0.05 * span
            section["V_h_x0"] = vh
            self.record(VerifyReport(
                "mc_cross_validation", over <= 0 and under <= 0,
                params={"x0": sim.x0, "M": sim.M, "dt": sim.dt, "seed": sim.seed,
                        "bias_budget": 0.01 * span, "gap_budget": 0.05 * span},
                values={"V_h": vh, "mean": est.mean, "stderr": est.stderr,
                        "mean_minus_upper_limit": over, "gap_minus_budget": under}))
        self.sections["simulate"] = section
        self.record(self._martingale())

    def _martingale(self):
        sim = self.cfg.simulate
        cont = constant_policy(self.spec.d, 1)
        rows, ok = [], True
        for x1 in sim.martingale_x0:
            x0 = [x1] + [0.5] * (self.spec.d - 1)
            for attempt, seed in enumerate((sim.seed, sim.seed + 1)):
                out = simulate_episodes(self.spec, cont, x0, sim.M, sim.dt, sim.martingale_t_max,
                                        seed, self.threads)
                xs = out["x"][:, 0]
                se = float(xs.std(ddof=1) / math.sqrt(xs.size))
                dev = float(xs.mean() - x1)
                good = abs(dev) <= 3 * se
                rows.append({"x0": x1, "seed": seed, "mean": float(xs.mean()), "stderr": se,
                             "deviation": dev, "passed": good})
                if good:
                    break
            ok &= good
        return VerifyReport("belief_martingale", ok,
                            params={"M": sim.M, "t_max": sim.martingale_t_max, "dt": sim.dt},
                            values={"runs": rows})

    def verify(self):
        s, v = self.cfg.solver, self.cfg.verify
        comp = comparison_experiment(self.spec, self.grid, s.tol, s.max_iters)
        self.record(comp)
        V = self.V if self.V is not None else comp.extras["below"]
        u = ValueField(self.grid, to_u(self.spec, V.values), "u")
        for side in ("SUB", "SUPER"):
            self.record(check_residual_sign(self.spec, u, side, solver_tol=s.tol))
        self.record(barrier_identity_check(self.spec, v.samples, seed=self.cfg.simulate.seed))
        self.record(theta_check(self.spec, v.theta_R, v.samples, seed=self.cfg.simulate.seed))
        mgrid = build_grid(self.spec.d, v.monotone_n)
        self.record(scheme_monotonicity_check(self.spec, mgrid, v.monotone_pairs,
                                              seed=self.cfg.simulate.seed))

    def doubling(self):
        s, v = self.cfg.solver, self.cfg.verify
        grid = build_grid(self.spec.d, v.doubling_n)
        partner = make_spec(self.spec.pi_low, self.spec.pi_high, self.spec.pi0, self.spec.sigma,
                            [c * v.partner_cost_scale for c in self.spec.c], self.spec.b)
        Vu, _ = solve_value(self.spec, grid, "FROM_OBSTACLE", s.tol, s.max_iters)
        Vv, _ = solve_value(partner, grid, "FROM_OBSTACLE", s.tol, s.max_iters)
        u = ValueField(grid, to_u(self.spec, Vu.values), "u")
        w = ValueField(grid, to_u(self.spec, Vv.values), "u")
        rep = doubling_experiment(u, w, v.alpha, v.eps, budget=v.pair_budget,
                                  threads=self.threads)
        rep.params["partner_cost_scale"] = v.partner_cost_scale
        self.record(rep)

    def summary(self, command, error=None):
        failures = [c["name"] for c in self.checks if not c["passed"]]
        config = self.cfg.to_dict()
        config.pop("out_dir")  # where results land is not part of their content
        doc = {
            "command": command,
            "config": config,
            "checks": self.checks,
            "failures": failures,
            "passed": error is None and not failures,
        }
        doc.update(self.sections)
        if error is not None:
            doc["error"] = error.to_dict()
        return _clean(doc)


def write_summary(path, doc):
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def run(command: str, cfg: RunConfig, threads=1):
    """Execute ``command``; returns ``(exit_code, summary_dict)``."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    pipe = Pipeline(cfg, threads)
    steps = {"solve": ["solve"], "simulate": ["simulate"], "verify": ["verify"],
             "doubling": ["doubling"], "all": ["solve", "simulate", "verify", "doubling"]}[command]
    error, code = None, EXIT_OK
    try:
        for step in steps:
            getattr(pipe, step)()
    except NoConvergence as exc:
        error, code = exc, EXIT_NUMERIC
    except (DependencyError, ConfigError) as exc:
        error, code = exc, EXIT_USAGE
    doc = pipe.summary(command, error)
    write_summary(pipe.path("summary.json"), doc)
    if code == EXIT_OK and doc["failures"]:
        code = EXIT_CHECK
    return code, doc


def build_parser():
    ap = argparse.ArgumentParser(prog="beliefhjb", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, metavar="PATH")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    ap.add_argument("--seed", type=int, metavar="N", help="RNG seed (overrides config)")
    ap.add_argument("--threads", type=int, default=1, metavar="N",
                    help="worker threads; never changes results")
    ap.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.threads < 1:
        print(json.dumps({"failures": [{"code": "USAGE_ERROR",
                                        "message": "--threads must be >= 1"}]}), file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(json.dumps({"failures": [exc.to_dict()]}), file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.simulate = replace(cfg.simulate, seed=args.seed)
    log.info("beliefhjb %s (kernels: %s)", args.command, kernels.BACKEND)
    try:
        code, doc = run(args.command, cfg, args.threads)
    except BeliefHJBError as exc:
        print(json.dumps({"failures": [exc.to_dict()]}), file=sys.stderr)
        return EXIT_USAGE
    if code != EXIT_OK:
        fails = doc.get("failures", [])
        if "error" in doc:
            fails = fails + [doc["error"]]
        print(json.dumps({"exit": code, "failures": fails}), file=sys.stderr)
    elif not args.quiet:
        log.info("all checks passed")
    return code


if __name__ == "__main__":
    sys.exit(main())
