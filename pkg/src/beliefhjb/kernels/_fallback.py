"""Pure numpy implementations of the hot kernels.

Arithmetic is written in the same order as the compiled core so both backends
agree to the last bit wherever no transcendental function is involved.
"""
import numpy as np

BACKEND = "python"

RUNNING, STOPPED, TRUNCATED = 0, 1, 2


def _axis_slices(ndim, axis):
    lo = [slice(None)] * ndim
    mid = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(0, -2)
    mid[axis] = slice(1, -1)
    hi[axis] = slice(2, None)
    return tuple(lo), tuple(mid), tuple(hi)


def residual(V, g, coef, inv_h2, c, shape, out):
    """Nodewise ``max(max_i {a_i D2_i V - c_i}, g - V)``; returns its sup-norm."""
    shape = tuple(int(s) for s in shape)
    Vn = V.reshape(shape)
    res = g - V
    d2 = np.zeros(shape)
    for i in range(len(shape)):
        lo, mid, hi = _axis_slices(len(shape), i)
        d2[...] = 0.0
        d2[mid] = (Vn[hi] - 2.0 * Vn[mid]) + Vn[lo]
        val = coef[i] * d2.ravel() * inv_h2[i] - c[i]
        np.maximum(res, val, out=res)
    out[...] = res
    return float(np.abs(res).max())


def sweep(V, g, coef, inv_h2, c, shape, tau, V_out, res_out):
    """One projected Jacobi step ``V_out = max(V + tau * res(V), g)``; returns ``sup|res(V)|``."""
    sup = residual(V, g, coef, inv_h2, c, shape, res_out)
    np.maximum(V + tau * res_out, g, out=V_out)
    return sup


def iterate(V, g, coef, inv_h2, c, shape, tau, tol, max_iters):
    """Sweep ``V`` in place until ``sup|res| <= tol``; returns ``(sweeps, sup_res)``."""
    res = np.empty_like(V)
    nxt = np.empty_like(V)
    it = 0
    while True:
        sup = residual(V, g, coef, inv_h2, c, shape, res)
        if sup <= tol or it >= max_iters:
            return it, sup
        np.maximum(V + tau * res, g, out=nxt)
        V[...] = nxt
        it += 1


def argmax_pairs(ue, ve, X, Y, alpha, i0, i1):
    """First maximiser of ``ue[x] - ve[y] - alpha/2 |X_x - Y_y|^2`` for ``i0 <= x < i1``."""
    if i1 <= i0:
        return -np.inf, -1, -1
    Xs = X[i0:i1]
    dist2 = (Xs[:, None, 0] - Y[None, :, 0]) ** 2
    for l in range(1, X.shape[1]):
        dist2 = dist2 + (Xs[:, None, l] - Y[None, :, l]) ** 2
    vals = (ue[i0:i1, None] - ve[None, :]) - (0.5 * alpha) * dist2
    flat = int(np.argmax(vals))
    ix, iy = divmod(flat, vals.shape[1])
    return float(vals[ix, iy]), ix + i0, iy


def advance_paths(z, steps, total, status, sat, pis, normals,
                  actions, pshape, lo, spread, snr, vol,
                  max_steps, dt, sqrt_dt, zcap):
    """Advance each path along its own row of standard normals.

    A path stops when the policy says STOP (status 1), when ``max_steps``
    learning steps have been taken (status 2), or pauses with status 0 once
    its row of normals is used up. Arrays are modified in place.
    """
    m, d = z.shape
    K = normals.shape[1]
    pshape = np.asarray(pshape, np.int64)
    pstrides = np.ones(d, np.int64)
    for i in range(d - 2, -1, -1):
        pstrides[i] = pstrides[i + 1] * pshape[i + 1]
    live = np.flatnonzero(status == RUNNING)
    for col in range(K):
        if live.size == 0:
            break
        zl = z[live]
        x = 1.0 / (1.0 + np.exp(-zl))
        node = np.floor(x * (pshape - 1) + 0.5).astype(np.int64)
        act = actions[(node * pstrides).sum(axis=1)]
        stop = act == 0
        status[live[stop]] = STOPPED
        trunc = ~stop & (total[live] >= max_steps)
        status[live[trunc]] = TRUNCATED
        go = ~stop & ~trunc
        live, x, act = live[go], x[go], act[go]
        if live.size == 0:
            break
        ai = act.astype(np.int64) - 1
        xi = x[np.arange(live.size), ai]
        dw = normals[live, col] * sqrt_dt
        drift = snr[ai] * ((pis[live, ai] - lo[ai]) - spread[ai] * xi) - 0.5 * (1.0 - 2.0 * xi) * vol[ai] * vol[ai]
        znew = z[live, ai] + drift * dt + vol[ai] * dw
        over = np.abs(znew) > zcap
        znew = np.where(over, np.copysign(zcap, znew), znew)
        np.add.at(sat, live[over], 1)
        z[live, ai] = znew
        steps[live, ai] += 1
        total[live] += 1
