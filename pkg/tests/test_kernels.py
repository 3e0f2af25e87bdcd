import math

import numpy as np
import pytest

from beliefhjb import build_grid, kernels
from beliefhjb.kernels import available, load
from beliefhjb.solver import Scheme

BACKENDS = available()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled core not built")


def test_backend_listing():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS
    with pytest.raises(ValueError):
        load("fortran")


@needs_both
@pytest.mark.parametrize("d, n", [(1, 41), (2, 13), (3, 7)])
def test_sweep_parity(spec2, std_spec, d, n):
    from beliefhjb import make_spec
    spec = {1: std_spec, 2: spec2,
            3: make_spec([0, 0, 0.2], [2, 2.5, 1.5], 1.0, sigma=[1, 1.5, 0.7])}[d]
    grid = build_grid(d, n)
    rng = np.random.default_rng(d)
    V = rng.uniform(1.0, 2.5, grid.size)
    out = {}
    for name in ("cython", "python"):
        sch = Scheme(spec, grid, name)
        res, sup_r = sch.residual(V)
        nxt, sup_s = sch.sweep(V)
        W = np.maximum(V.copy(), sch.g)
        it = sch.kern.iterate(W, sch.g, sch.coef, sch.inv_h2, sch.c, sch.shape, sch.tau, 1e-6, 500)
        out[name] = (res, sup_r, nxt, sup_s, W, it)
    a, b = out["cython"], out["python"]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(np.asarray(x), np.asarray(y))


@needs_both
def test_argmax_pairs_parity():
    rng = np.random.default_rng(1)
    X = rng.random((60, 2))
    ue, ve = rng.normal(size=60), rng.normal(size=60)
    for alpha in (1.0, 100.0):
        r1 = load("cython").argmax_pairs(ue, ve, X, X, alpha, 0, 60)
        r2 = load("python").argmax_pairs(ue, ve, X, X, alpha, 0, 60)
        assert r1 == r2
    best, ix, iy = r1
    brute = ue[:, None] - ve[None, :] - alpha / 2 * ((X[:, None] - X[None]) ** 2).sum(-1)
    assert best == brute.max()
    assert (ix, iy) == np.unravel_index(np.argmax(brute), brute.shape)


def test_argmax_pairs_empty_range():
    X = np.zeros((3, 1))
    best, ix, iy = load("python").argmax_pairs(np.zeros(3), np.zeros(3), X, X, 1.0, 2, 2)
    assert best == -math.inf and ix == iy == -1


@needs_both
def test_advance_paths_parity(std_spec):
    from beliefhjb.simulator import simulate_episodes
    from beliefhjb.solver import constant_policy
    pol = constant_policy(1, 1)
    a = simulate_episodes(std_spec, pol, [0.4], 300, 1e-3, 0.5, seed=5, backend="cython")
    b = simulate_episodes(std_spec, pol, [0.4], 300, 1e-3, 0.5, seed=5, backend="python")
    np.testing.assert_array_equal(a["T"], b["T"])
    np.testing.assert_allclose(a["x"], b["x"], rtol=1e-12)


def test_env_forces_fallback():
    import os
    import subprocess
    import sys
    env = dict(os.environ, BELIEFHJB_BACKEND="python")
    r = subprocess.run([sys.executable, "-c", "import beliefhjb.kernels as k; print(k.BACKEND)"],
                       env=env, capture_output=True, text=True, check=True)
    assert r.stdout.strip() == "python"
