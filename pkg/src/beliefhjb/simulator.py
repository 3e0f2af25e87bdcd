"""Monte Carlo simulation of belief paths under a learning/stopping policy.

Beliefs are stored as log-odds ``z = log(x / (1 - x))`` so they stay in the
open cube for any finite ``z``. By Ito's formula the learned coordinate moves as

    dz = [ m(x) / (x(1-x)) - (1 - 2x) s(x)^2 / (2 x^2 (1-x)^2) ] dt + s(x) / (x(1-x)) dW

where ``m`` and ``s`` are the belief drift and diffusion. With
``m = (D / sigma^2) x(1-x) (pi - lo(1-x) - hi x)`` and ``s = (D / sigma) x(1-x)``
(``D = hi - lo``) the ``x(1-x)`` factors cancel analytically; the kernels use
the cancelled form.

Path ``j`` draws from its own Philox stream keyed by ``(seed, j)``: first the
``d`` payoff draws, then one normal per learning step, in blocks.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import PayoffRealization, ProblemSpec, obstacle_g, sde_coeffs
from .solver import PolicyField

__all__ = [
    "BeliefState",
    "EpisodeResult",
    "McEstimate",
    "ZCAP",
    "sample_prior",
    "step_belief",
    "run_episode",
    "simulate_episodes",
    "estimate_value_mc",
    "path_rng",
    "default_dt",
    "default_t_max",
    "write_episodes_csv",
]

ZCAP = 40.0
BLOCK = 2048
CHUNK = 256


def default_dt(spec: ProblemSpec) -> float:
    return 1e-3 / float(spec.k.max())


def default_t_max(spec: ProblemSpec) -> float:
    return 50.0 / float(spec.k.min())


def path_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(j)])))


def _logit(x):
    x = np.asarray(x, float)
    return np.log(x) - np.log1p(-x)


def _expit(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, float)))


@dataclass
class BeliefState:
    z: np.ndarray
    T: np.ndarray
    t: float = 0.0

    @classmethod
    def from_belief(cls, x0):
        x0 = np.atleast_1d(np.asarray(x0, float))
        if np.any(x0 <= 0) or np.any(x0 >= 1):
            raise ValueError("initial belief must lie strictly inside (0, 1)^d")
        return cls(_logit(x0), np.zeros(x0.size), 0.0)

    @property
    def x(self) -> np.ndarray:
        return _expit(self.z)


@dataclass
class EpisodeResult:
    payoff: float
    reward: float
    cost: float
    stop_time: float
    T: np.ndarray
    x_final: np.ndarray
    truncated: bool
    saturations: int = 0


@dataclass
class McEstimate:
    mean: float
    stderr: float
    M: int
    seed: int
    truncated_fraction: float = 0.0
    saturations: int = 0

    def to_dict(self):
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "M": self.M,
            "seed": self.seed,
            "truncated_fraction": self.truncated_fraction,
            "saturations": self.saturations,
        }


def sample_prior(spec: ProblemSpec, x0, rng: np.random.Generator) -> PayoffRealization:
    """Independent draws: ``pi_i`` is the high level with probability ``x0_i``."""
    x0 = np.atleast_1d(np.asarray(x0, float))
    u = rng.random(spec.d)
    pi = np.where(u < x0, spec.pi_high, spec.pi_low)
    return PayoffRealization(tuple(float(p) for p in pi))


def _z_coeffs(spec):
    lo = np.asarray(spec.pi_low, float)
    spread = spec.spread
    sig = np.asarray(spec.sigma, float)
    return lo, spread, spread / sig**2, spread / sig


def step_belief(spec: ProblemSpec, state: BeliefState, i: int, dt: float,
                pi: PayoffRealization, rng=None, dW=None) -> BeliefState:
    """One Euler-Maruyama step of alternative ``i`` in log-odds coordinates.

    ``dW`` may be supplied directly; otherwise it is ``sqrt(dt) * rng.standard_normal()``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dW is None:
        dW = math.sqrt(dt) * rng.standard_normal()
    x = state.x
    xi = x[i]
    m, s = sde_coeffs(spec, x, pi, i)
    q = xi * (1.0 - xi)
    drift = m / q - (1.0 - 2.0 * xi) * s * s / (2.0 * q * q)
    z = state.z.copy()
    z[i] = np.clip(z[i] + drift * dt + (s / q) * dW, -ZCAP, ZCAP)
    T = state.T.copy()
    T[i] += dt
    return BeliefState(z, T, state.t + dt)


def _run_chunk(spec, policy, x0, dt, max_steps, seed, j0, j1, kern):
    d = spec.d
    m = j1 - j0
    rngs = [path_rng(seed, j) for j in range(j0, j1)]
    pis = np.empty((m, d))
    for r, rng in enumerate(rngs):
        pis[r] = sample_prior(spec, x0, rng).pi
    z = np.tile(_logit(x0), (m, 1))
    steps = np.zeros((m, d), np.int64)
    total = np.zeros(m, np.int64)
    status = np.zeros(m, np.int8)
    sat = np.zeros(m, np.int64)
    lo, spread, snr, vol = _z_coeffs(spec)
    pshape = np.asarray(policy.grid.shape, np.int64)
    while True:
        live = np.flatnonzero(status == 0)
        if live.size == 0:
            break
        normals = np.empty((live.size, BLOCK))
        for r, p in enumerate(live):
            rngs[p].standard_normal(BLOCK, out=normals[r])
        zl, sl, tl, stl, satl = (np.ascontiguousarray(a[live]) for a in (z, steps, total, status, sat))
        kern.advance_paths(zl, sl, tl, stl, satl, np.ascontiguousarray(pis[live]), normals,
                           policy.actions, pshape, lo, spread, snr, vol,
                           int(max_steps), float(dt), math.sqrt(dt), ZCAP)
        z[live], steps[live], total[live], status[live], sat[live] = zl, sl, tl, stl, satl
    return z, steps, total, status, sat, pis


def simulate_episodes(spec: ProblemSpec, policy: PolicyField, x0, M: int, dt=None,
                      t_max=None, seed=0, threads=1, backend=None):
    """Run ``M`` independent episodes; returns a dict of per-path arrays.

    Paths are grouped into fixed chunks, so ``threads`` only changes scheduling,
    never the numbers.
    """
    if policy.grid.d != spec.d:
        raise ValueError("policy grid dimension does not match spec")
    dt = default_dt(spec) if dt is None else float(dt)
    t_max = default_t_max(spec) if t_max is None else float(t_max)
    if not dt > 0:
        raise ValueError("dt must be positive")
    x0 = np.atleast_1d(np.asarray(x0, float))
    if np.any(x0 <= 0) or np.any(x0 >= 1):
        raise ValueError("x0 must lie strictly inside (0, 1)^d")
    kern = kernels if backend is None else kernels.load(backend)
    max_steps = int(round(t_max / dt))
    bounds = [(j, min(j + CHUNK, M)) for j in range(0, M, CHUNK)]

    def work(b):
        return _run_chunk(spec, policy, x0, dt, max_steps, seed, b[0], b[1], kern)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    z, steps, total, status, sat, pis = (np.concatenate(a) for a in zip(*parts))
    x = _expit(z)
    T = steps * dt
    reward = np.atleast_1d(obstacle_g(spec, x))
    cost = (T * np.asarray(spec.c)).sum(axis=1)
    return {
        "x": x,
        "T": T,
        "stop_time": total * dt,
        "reward": reward,
        "cost": cost,
        "payoff": reward - cost,
        "truncated": status == 2,
        "saturations": sat,
        "pi": pis,
    }


def run_episode(spec: ProblemSpec, policy: PolicyField, x0, dt, t_max, rng=None,
                seed=0, backend=None) -> EpisodeResult:
    """One episode. Uses ``rng`` if given, otherwise path 0 of the ``seed`` streams."""
    if rng is None:
        out = simulate_episodes(spec, policy, x0, 1, dt, t_max, seed=seed, backend=backend)
    else:
        out = _episode_with_rng(spec, policy, x0, dt, t_max, rng, backend)
    k = 0
    return EpisodeResult(
        payoff=float(out["payoff"][k]),
        reward=float(out["reward"][k]),
        cost=float(out["cost"][k]),
        stop_time=float(out["stop_time"][k]),
        T=out["T"][k].copy(),
        x_final=out["x"][k].copy(),
        truncated=bool(out["truncated"][k]),
        saturations=int(out["saturations"][k]),
    )


def _episode_with_rng(spec, policy, x0, dt, t_max, rng, backend):
    kern = kernels if backend is None else kernels.load(backend)
    x0 = np.atleast_1d(np.asarray(x0, float))
    pi = np.asarray(sample_prior(spec, x0, rng).pi)[None, :]
    z = _logit(x0)[None, :].copy()
    steps = np.zeros((1, spec.d), np.int64)
    total = np.zeros(1, np.int64)
    status = np.zeros(1, np.int8)
    sat = np.zeros(1, np.int64)
    lo, spread, snr, vol = _z_coeffs(spec)
    while status[0] == 0:
        normals = rng.standard_normal((1, BLOCK))
        kern.advance_paths(z, steps, total, status, sat, pi, normals, policy.actions,
                           np.asarray(policy.grid.shape, np.int64), lo, spread, snr, vol,
                           int(round(t_max / dt)), float(dt), math.sqrt(dt), ZCAP)
    x = _expit(z)
    T = steps * dt
    reward = np.atleast_1d(obstacle_g(spec, x))
    cost = (T * np.asarray(spec.c)).sum(axis=1)
    return {"x": x, "T": T, "stop_time": total * dt, "reward": reward, "cost": cost,
            "payoff": reward - cost, "truncated": status == 2, "saturations": sat}


def estimate_value_mc(spec: ProblemSpec, policy: PolicyField, x0, M: int, dt=None, t_max=None,
                      seed=0, threads=1, backend=None, return_paths=False):
    """Mean payoff and standard error over ``M`` paths."""
    if M < 2:
        raise ValueError("need M >= 2 paths")
    out = simulate_episodes(spec, policy, x0, M, dt, t_max, seed, threads, backend)
    pay = out["payoff"]
    est = McEstimate(
        mean=float(np.mean(pay)),
        stderr=float(np.std(pay, ddof=1) / math.sqrt(M)),
        M=int(M),
        seed=int(seed),
        truncated_fraction=float(np.mean(out["truncated"])),
        saturations=int(out["saturations"].sum()),
    )
    return (est, out) if return_paths else est


def write_episodes_csv(path, out, seed_index_base=0):
    d = out["T"].shape[1]
    header = ["seed_index", "payoff", "stop_time"] + [f"T_{i + 1}" for i in range(d)] + ["truncated"]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for j in range(out["payoff"].size):
            row = [str(seed_index_base + j), format(out["payoff"][j], ".17g"),
                   format(out["stop_time"][j], ".17g")]
            row += [format(t, ".17g") for t in out["T"][j]]
            row.append("1" if out["truncated"][j] else "0")
            fh.write(",".join(row) + "\n")
