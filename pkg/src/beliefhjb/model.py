"""Problem data for the optimal-learning stopping problem.

A decision maker chooses among ``d`` alternatives whose payoffs are each one
of two levels. Beliefs ``x_i`` (probability of the high level) diffuse while
an alternative is investigated; the decision maker pays ``c_i`` per unit of
learning time and stops to collect

    g(x) = max(max_i {pi_high_i x_i + pi_low_i (1 - x_i)}, pi0).

The value ``V`` is mapped to ``u = log(b - V)`` for the transformed operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "ProblemSpec",
    "PayoffRealization",
    "DiffusionCoeffs",
    "validate_spec",
    "make_spec",
    "obstacle_g",
    "obstacle_branches",
    "to_u",
    "from_u",
    "sde_coeffs",
    "value_bounds",
    "diffusion_coeffs",
]


@dataclass(frozen=True)
class ProblemSpec:
    """Payoff levels, outside option, noise, costs and transform shift."""

    pi_low: tuple
    pi_high: tuple
    pi0: float
    sigma: tuple
    c: tuple
    b: float

    @property
    def d(self) -> int:
        return len(self.pi_high)

    @property
    def spread(self) -> np.ndarray:
        return np.asarray(self.pi_high, float) - np.asarray(self.pi_low, float)

    @property
    def k(self) -> np.ndarray:
        """Curvature scale ``(pi_high - pi_low)^2 / (2 sigma^2)`` per alternative."""
        return self.spread**2 / (2.0 * np.asarray(self.sigma, float) ** 2)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "pi_low": list(self.pi_low),
            "pi_high": list(self.pi_high),
            "pi0": self.pi0,
            "sigma": list(self.sigma),
            "c": list(self.c),
            "b": self.b,
        }


@dataclass(frozen=True)
class PayoffRealization:
    pi: tuple

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pi, float)


@dataclass(frozen=True)
class DiffusionCoeffs:
    k: np.ndarray = field(repr=False)

    def __call__(self, x):
        """``a_i(x) = k_i x_i^2 (1 - x_i)^2``, exactly zero on the faces."""
        x = np.asarray(x, float)
        return self.k * (x * (1.0 - x)) ** 2


def diffusion_coeffs(spec: ProblemSpec) -> DiffusionCoeffs:
    return DiffusionCoeffs(spec.k)


def _as_tuple(v, d, name):
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a vector", "BAD_SHAPE")
    if arr.size == 1 and d > 1:
        arr = np.full(d, arr[0])
    if arr.size != d:
        raise ValidationError(f"{name} has length {arr.size}, expected {d}", "BAD_SHAPE")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite", "NONFINITE")
    return tuple(float(a) for a in arr)


def validate_spec(raw: ProblemSpec) -> ProblemSpec:
    """Return ``raw`` unchanged if every standing assumption holds, else raise.

    Raised codes: ``BAD_SHAPE``, ``NONFINITE``, ``PAYOFF_ORDER``,
    ``NONPOSITIVE_OUTSIDE_OPTION``, ``NONPOSITIVE_COST``,
    ``NONPOSITIVE_NOISE``, ``SHIFT_TOO_SMALL``.
    """
    d = len(raw.pi_high)
    if d < 1:
        raise ValidationError("need at least one alternative", "BAD_SHAPE")
    for name in ("pi_low", "sigma", "c"):
        if len(getattr(raw, name)) != d:
            raise ValidationError(f"{name} has length {len(getattr(raw, name))}, expected {d}", "BAD_SHAPE")
    vals = np.array([*raw.pi_low, *raw.pi_high, *raw.sigma, *raw.c, raw.pi0, raw.b], float)
    if not np.all(np.isfinite(vals)):
        raise ValidationError("all spec entries must be finite", "NONFINITE")
    lo, hi = np.asarray(raw.pi_low), np.asarray(raw.pi_high)
    if np.any(lo >= hi):
        i = int(np.argmax(lo >= hi))
        raise ValidationError(f"pi_low[{i}] must be < pi_high[{i}]", "PAYOFF_ORDER")
    if not raw.pi0 > 0:
        raise ValidationError("pi0 must be > 0", "NONPOSITIVE_OUTSIDE_OPTION")
    if np.any(np.asarray(raw.c) <= 0):
        raise ValidationError("every cost c[i] must be > 0", "NONPOSITIVE_COST")
    if np.any(np.asarray(raw.sigma) <= 0):
        raise ValidationError("every noise sigma[i] must be > 0", "NONPOSITIVE_NOISE")
    top = max(hi.max(), raw.pi0)
    if not raw.b > top:
        raise ValidationError(f"b={raw.b} must exceed max(pi_high, pi0)={top}", "SHIFT_TOO_SMALL")
    return raw


def make_spec(pi_low, pi_high, pi0, sigma=1.0, c=1.0, b=None) -> ProblemSpec:
    """Build and validate a spec; scalars broadcast, ``b`` defaults to ``max(pi_high, pi0) + 1``."""
    d = np.atleast_1d(np.asarray(pi_high)).size
    hi = _as_tuple(pi_high, d, "pi_high")
    if b is None:
        b = max(max(hi), float(pi0)) + 1.0
    spec = ProblemSpec(
        pi_low=_as_tuple(pi_low, d, "pi_low"),
        pi_high=hi,
        pi0=float(pi0),
        sigma=_as_tuple(sigma, d, "sigma"),
        c=_as_tuple(c, d, "c"),
        b=float(b),
    )
    return validate_spec(spec)


def obstacle_branches(spec: ProblemSpec, x) -> np.ndarray:
    """Values of the ``d`` affine payoffs and ``pi0``; last axis has length ``d + 1``."""
    x = np.asarray(x, float)
    lo = np.asarray(spec.pi_low)
    hi = np.asarray(spec.pi_high)
    aff = hi * x + lo * (1.0 - x)
    out = np.empty(aff.shape[:-1] + (spec.d + 1,))
    out[..., :-1] = aff
    out[..., -1] = spec.pi0
    return out


def obstacle_g(spec: ProblemSpec, x):
    """Stopping reward at belief ``x`` (shape ``(..., d)``)."""
    x = np.asarray(x, float)
    if x.ndim == 0:
        x = x[None]
    g = obstacle_branches(spec, x).max(axis=-1)
    return float(g) if g.ndim == 0 else g


def to_u(spec: ProblemSpec, V):
    V = np.asarray(V, float)
    if np.any(V >= spec.b):
        raise DomainError(f"to_u needs V < b={spec.b}")
    u = np.log(spec.b - V)
    return float(u) if u.ndim == 0 else u


def from_u(spec: ProblemSpec, u):
    V = spec.b - np.exp(np.asarray(u, float))
    return float(V) if V.ndim == 0 else V


def sde_coeffs(spec: ProblemSpec, x, pi: PayoffRealization, i: int):
    """Drift and diffusion of belief ``i`` while alternative ``i`` is learned."""
    xi = float(np.asarray(x, float)[i])
    lo, hi = spec.pi_low[i], spec.pi_high[i]
    s = spec.sigma[i]
    q = xi * (1.0 - xi)
    drift = (hi - lo) / s**2 * q * (pi.pi[i] - lo * (1.0 - xi) - hi * xi)
    diffusion = (hi - lo) / s * q
    return drift, diffusion


def value_bounds(spec: ProblemSpec):
    """``(pi0, max pi_high)``; the upper bound is lifted to ``pi0`` if the outside option dominates."""
    return spec.pi0, max(max(spec.pi_high), spec.pi0)
