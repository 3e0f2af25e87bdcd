"""Pointwise evaluation of the transformed HJB operator and its barrier variants.

For ``x`` in the open cube, ``r`` in R, gradient ``p`` and symmetric ``A``::

    F(x, r, p, A) = max( max_i { -k_i s_i(x)^2 (A_ii + q p_i^2) - c_i e^{-r} },
                         1 - (b - g(x)) e^{-r} )

with ``s_i(x) = x_i (1 - x_i)``. ``q = -1`` (the default, ``p2_sign``) is the
printed form of the operator; ``q = +1`` is the form obtained by substituting
``V = b - e^u`` into the value equation, and is what the residual checks on
solver output use. ``k_i`` defaults to 1.

All array functions broadcast over leading axes; the last axis indexes
alternatives.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import ProblemSpec, obstacle_g

__all__ = [
    "Jet",
    "PRINTED",
    "TRANSFORMED",
    "F_values",
    "eval_F",
    "eval_Phi",
    "eval_f_eps",
    "F_eps_values",
    "eval_F_eps",
    "theta_monotonicity",
    "branch_scale",
]

PRINTED = -1
TRANSFORMED = 1


class Jet:
    """Second-order data ``(x, r, p, A)`` at an interior point.

    Only the lower triangle of ``A`` is stored; reads mirror it, so the matrix
    is symmetric by construction.
    """

    __slots__ = ("x", "r", "p", "_tril")

    def __init__(self, x, r, p, A):
        x = np.atleast_1d(np.asarray(x, float))
        if np.any(x <= 0.0) or np.any(x >= 1.0):
            raise DomainError("jet point must be strictly inside the unit cube")
        A = np.asarray(A, float).reshape(x.size, x.size)
        self.x = x
        self.r = float(r)
        self.p = np.atleast_1d(np.asarray(p, float))
        self._tril = np.tril(A)

    @property
    def A(self) -> np.ndarray:
        return self._tril + np.tril(self._tril, -1).T

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self._tril).copy()

    def __repr__(self):
        return f"Jet(x={self.x!r}, r={self.r!r}, p={self.p!r}, A={self.A!r})"


def _scale(spec, k):
    return np.ones(spec.d) if k is None else np.asarray(k, float)


def _branches(spec, x, r, p, a_diag, k, p2_sign, f=None):
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    a_diag = np.asarray(a_diag, float)
    r = np.asarray(r, float)
    kk = _scale(spec, k)
    c = np.asarray(spec.c, float)
    s2 = (x * (1.0 - x)) ** 2
    er = np.exp(-r)[..., None]
    diff = -kk * s2 * (a_diag + p2_sign * p * p) - c * er
    if f is not None:
        diff = diff + kk * f
    obst = 1.0 - (spec.b - obstacle_g(spec, x)) * np.exp(-r)
    shape = np.broadcast_shapes(diff.shape[:-1], np.shape(obst))
    out = np.empty(shape + (spec.d + 1,))
    out[..., :-1] = diff
    out[..., -1] = obst
    return out


def F_values(spec: ProblemSpec, x, r, p, a_diag, *, k=None, p2_sign=PRINTED):
    """Vectorised ``F``; returns ``(value, branch)``.

    ``branch`` is the 0-based index of the attaining branch, ``d`` meaning the
    obstacle branch. Ties go to the lowest alternative, obstacle last.
    """
    br = _branches(spec, x, r, p, a_diag, k, p2_sign)
    idx = np.argmax(br, axis=-1)
    val = np.take_along_axis(br, idx[..., None], axis=-1)[..., 0]
    return val, idx


def eval_F(spec: ProblemSpec, jet: Jet, *, k=None, p2_sign=PRINTED):
    """``F`` at a single jet; returns ``(value, branch)`` with branch ``d`` = obstacle."""
    val, idx = F_values(spec, jet.x, jet.r, jet.p, jet.diag, k=k, p2_sign=p2_sign)
    return float(val), int(idx)


def eval_Phi(x):
    """Log barrier ``-sum(log x_i + log(1 - x_i))`` with gradient and Hessian diagonal."""
    x = np.asarray(x, float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError("barrier is undefined on the cube boundary", "BARRIER_DOMAIN")
    y = 1.0 - x
    value = -(np.log(x) + np.log(y)).sum(axis=-1)
    grad = -1.0 / x + 1.0 / y
    hess = 1.0 / x**2 + 1.0 / y**2
    return value, grad, hess


def eval_f_eps(eps, xi, pi, *, p2_sign=PRINTED):
    """Barrier perturbation of one diffusion branch.

    Printed form (``p2_sign=-1``)::

        -eps((1-x)^2 + x^2) + eps^2 (1-2x)^2 + 2 eps x(1-x)(2x-1) p
    """
    xi = np.asarray(xi, float)
    pi = np.asarray(pi, float)
    lin = -eps * ((1.0 - xi) ** 2 + xi**2)
    rest = eps**2 * (1.0 - 2.0 * xi) ** 2 + 2.0 * eps * xi * (1.0 - xi) * (2.0 * xi - 1.0) * pi
    return lin - p2_sign * rest


def F_eps_values(spec: ProblemSpec, eps, x, p, a_diag, r_frozen, *, k=None, p2_sign=PRINTED):
    """Vectorised barrier-modified operator with the value frozen at ``r_frozen``."""
    f = eval_f_eps(eps, x, p, p2_sign=p2_sign)
    br = _branches(spec, x, r_frozen, p, a_diag, k, p2_sign, f=f)
    idx = np.argmax(br, axis=-1)
    val = np.take_along_axis(br, idx[..., None], axis=-1)[..., 0]
    return val, idx


def eval_F_eps(spec: ProblemSpec, eps, x, p, A, r_frozen, *, k=None, p2_sign=PRINTED):
    x = np.atleast_1d(np.asarray(x, float))
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise DomainError("x must be strictly inside the unit cube")
    A = np.asarray(A, float).reshape(x.size, x.size)
    val, idx = F_eps_values(spec, eps, x, p, np.diagonal(A), r_frozen, k=k, p2_sign=p2_sign)
    return float(val), int(idx)


def theta_monotonicity(spec: ProblemSpec, R) -> float:
    """Slope ``theta`` with ``F(r) - F(r') >= theta (r - r')`` for all ``r' <= r <= R``.

    Each branch is ``const - w e^{-r}`` with ``w >= min(min c, b - max g)``
    and ``e^{-r'} - e^{-r} >= e^{-R} (r - r')``; ``max g`` sits at a corner.
    """
    gmax = max(max(spec.pi_high), spec.pi0)
    return float(np.exp(-R) * min(min(spec.c), spec.b - gmax))


def branch_scale(spec: ProblemSpec, x, r, p, a_diag, *, k=None):
    """Largest summand magnitude over all branches, for conditioning-aware error bounds."""
    x = np.asarray(x, float)
    kk = _scale(spec, k)
    s2 = (x * (1.0 - x)) ** 2
    er = np.exp(-np.asarray(r, float))
    diff = kk * s2 * (np.abs(a_diag) + np.asarray(p, float) ** 2) + np.asarray(spec.c) * er[..., None]
    obst = 1.0 + (spec.b - obstacle_g(spec, x)) * er
    return np.maximum(diff.max(axis=-1), obst)
