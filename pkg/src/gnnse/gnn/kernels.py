"""Compiled loops for the per-edge and per-node hot paths.

Every loop visits edges in their given order, so sums over a receiver's
edges are accumulated in edge order regardless of how many other nodes are
present.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def gather_add(r, s, bias, ir, js, act, slope):
    """``r[ir[e]] + s[js[e]] + bias``, times ``slope`` where not positive if ``act``.

    ``slope`` is a scalar of the array dtype so no mixed-precision rounding
    happens inside the loop.
    """
    E = ir.shape[0]
    d = r.shape[1]
    out = np.empty((E, d), dtype=r.dtype)
    for e in range(E):
        a = ir[e]
        b = js[e]
        for j in range(d):
            x = r[a, j] + s[b, j] + bias[j]
            if act and not x > 0:
                x = x * slope
            out[e, j] = x
    return out


@njit(cache=True)
def gather_add_backward(g, out, ir, js, nr, ns, act, slope):
    d = g.shape[1]
    dr = np.zeros((nr, d), dtype=g.dtype)
    ds = np.zeros((ns, d), dtype=g.dtype)
    db = np.zeros(d, dtype=g.dtype)
    for e in range(g.shape[0]):
        a = ir[e]
        b = js[e]
        for j in range(d):
            x = g[e, j]
            if act and not out[e, j] > 0:
                x = x * slope
            dr[a, j] += x
            ds[b, j] += x
            db[j] += x
    return dr, ds, db


@njit(cache=True)
def scatter_rows(v, ids, n):
    """``out[ids[e]] += v[e]`` in edge order."""
    d = v.shape[1]
    out = np.zeros((n, d), dtype=v.dtype)
    for e in range(v.shape[0]):
        a = ids[e]
        for j in range(d):
            out[a, j] += v[e, j]
    return out


@njit(cache=True)
def weighted_scatter(w, v, mu, ids, n):
    """``out[ids[e]] += w[e] * (v[e] - mu)`` in edge order."""
    d = v.shape[1]
    out = np.zeros((n, d), dtype=v.dtype)
    for e in range(v.shape[0]):
        a = ids[e]
        we = w[e]
        for j in range(d):
            out[a, j] += we * (v[e, j] - mu[j])
    return out


@njit(cache=True)
def weighted_scatter_backward(g, w, v, mu, shift, ids):
    E, d = v.shape
    dv = np.empty((E, d), dtype=v.dtype)
    dw = np.zeros(E, dtype=v.dtype)
    for e in range(E):
        a = ids[e]
        we = w[e]
        acc = dw[e]
        for j in range(d):
            ge = g[a, j]
            dv[e, j] = we * ge + shift[j]
            acc += ge * (v[e, j] - mu[j])
        dw[e] = acc
    return dv, dw


@njit(cache=True)
def gru_backward(g, gh, h, r, z, n):
    M, d = h.shape
    dgi = np.empty((M, 3 * d), dtype=h.dtype)
    dgh = np.empty((M, 3 * d), dtype=h.dtype)
    dh = np.empty_like(h)
    for i in range(M):
        for j in range(d):
            gg = g[i, j]
            rr = r[i, j]
            zz = z[i, j]
            nn = n[i, j]
            dh[i, j] = gg * zz
            dn = gg * (1.0 - zz) * (1.0 - nn * nn)
            dr = dn * gh[i, 2 * d + j] * rr * (1.0 - rr)
            dz = gg * (h[i, j] - nn) * zz * (1.0 - zz)
            dgi[i, j] = dr
            dgi[i, d + j] = dz
            dgi[i, 2 * d + j] = dn
            dgh[i, j] = dr
            dgh[i, d + j] = dz
            dgh[i, 2 * d + j] = dn * rr
    return dgi, dgh, dh
