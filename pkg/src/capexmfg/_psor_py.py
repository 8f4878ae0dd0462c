"""Pure-Python twin of the compiled PSOR kernel.

Same sweep order, same operation order, same clipping; results are
bit-identical to ``_psor`` (the C build disables FMA contraction).  Used when
the extension is unavailable or when CAPEXMFG_BACKEND=python.
"""
import numpy as np


def _clip(v, c0):
    if v < 0.0:
        return 0.0
    if v > c0:
        return c0
    return v


def _residual(u, b, lo, dg, up, c0, n):
    r = 0.0
    v = _clip(2.0 * u[1] - u[2], c0)
    d = abs(u[0] - v)
    if d > r:
        r = d
    v = _clip(2.0 * u[n - 2] - u[n - 3], c0)
    d = abs(u[n - 1] - v)
    if d > r:
        r = d
    for i in range(1, n - 1):
        au = lo[i] * u[i - 1] + dg[i] * u[i] + up[i] * u[i + 1]
        if u[i] < c0:
            d = abs(au - b[i])
        else:
            d = au - b[i]
            if d < 0.0:
                d = 0.0
        if d > r:
            r = d
    return r


def psor_solve(u, b, lo, dg, up, c0, omega, tol, max_sweeps):
    """Run projected SOR sweeps in place; returns (sweeps, last_change, lcp_residual)."""
    n = len(u)
    if n < 3:
        raise ValueError("need at least 3 spatial nodes")
    uu = [float(v) for v in u]
    bb = [float(v) for v in b]
    ll = [float(v) for v in lo]
    dd = [float(v) for v in dg]
    pp = [float(v) for v in up]
    c0 = float(c0)
    omega = float(omega)
    sweeps = 0
    change = tol + 1.0
    while sweeps < max_sweeps:
        change = 0.0
        v = _clip(2.0 * uu[1] - uu[2], c0)
        d = abs(v - uu[0])
        if d > change:
            change = d
        uu[0] = v
        for i in range(1, n - 1):
            gs = (bb[i] - ll[i] * uu[i - 1] - pp[i] * uu[i + 1]) / dd[i]
            v = _clip(uu[i] + omega * (gs - uu[i]), c0)
            d = abs(v - uu[i])
            if d > change:
                change = d
            uu[i] = v
        v = _clip(2.0 * uu[n - 2] - uu[n - 3], c0)
        d = abs(v - uu[n - 1])
        if d > change:
            change = d
        uu[n - 1] = v
        sweeps += 1
        if change <= tol:
            break
    resid = _residual(uu, bb, ll, dd, pp, c0, n)
    u[:] = np.asarray(uu)
    return sweeps, change, resid


def lcp_residual(u, b, lo, dg, up, c0):
    """Sup-norm complementarity residual of a candidate solution."""
    n = len(u)
    return _residual(
        [float(v) for v in u], [float(v) for v in b], [float(v) for v in lo],
        [float(v) for v in dg], [float(v) for v in up], float(c0), n,
    )
