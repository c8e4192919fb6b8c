"""Hot-loop kernels, numba-compiled when available.

Every kernel has a pure-numpy twin with identical semantics; the numpy
versions remain importable for testing and as a fallback when numba is
missing.  All kernels accept read-only float64 arrays.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def proj_simplex_py(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    k = ks[u - css / ks > 0][-1]
    theta = css[k - 1] / k
    return np.maximum(v - theta, 0.0)


def proj_product_py(coords: np.ndarray, split: int) -> np.ndarray:
    return np.concatenate([proj_simplex_py(coords[:split]), proj_simplex_py(coords[split:])])


def blend3_py(a: float, x, b: float, y, c: float, z) -> np.ndarray:
    return a * x + b * y + c * z


def entropic_blend_py(d1, d2, lin, alpha: float, tau: float, split: int):
    dual = alpha * d1 + (1.0 - alpha) * d2 - tau * lin
    out = np.empty_like(dual)
    for lo, hi in ((0, split), (split, dual.size)):
        block = dual[lo:hi] - dual[lo:hi].max()
        dual[lo:hi] = block
        e = np.exp(block)
        out[lo:hi] = e / e.sum()
    return out, dual


def blend3_proj_product_py(a: float, x, b: float, y, c: float, z, split: int) -> np.ndarray:
    return proj_product_py(blend3_py(a, x, b, y, c, z), split)


def kahan_add_py(total, comp, v) -> None:
    y = v - comp
    t = total + y
    comp[:] = (t - total) - y
    total[:] = t


def rowcol_eval_py(A, i: int, j: int, sy: float, sx: float) -> np.ndarray:
    return np.concatenate([A[i, :] * sy, A[:, j] * sx])


def weighted_index_py(w: np.ndarray, u: float) -> int:
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    return int(np.searchsorted(cum, u, side="right"))


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _njit = numba.njit(cache=True, fastmath=False, nogil=True)

    @_njit
    def _proj_simplex_nb(v):
        d = v.size
        u = np.sort(v.copy())[::-1]
        css = 0.0
        theta = 0.0
        for i in range(d):
            css += u[i]
            t = (css - 1.0) / (i + 1)
            if u[i] - t > 0.0:
                theta = t
        out = np.empty(d)
        for i in range(d):
            x = v[i] - theta
            out[i] = x if x > 0.0 else 0.0
        return out

    @_njit
    def _proj_product_nb(coords, split):
        out = np.empty(coords.size)
        out[:split] = _proj_simplex_nb(coords[:split])
        out[split:] = _proj_simplex_nb(coords[split:])
        return out

    @_njit
    def _blend3_nb(a, x, b, y, c, z):
        d = x.size
        out = np.empty(d)
        for i in range(d):
            out[i] = a * x[i] + b * y[i] + c * z[i]
        return out

    @_njit
    def _entropic_blend_nb(d1, d2, lin, alpha, tau, split):
        d = d1.size
        dual = np.empty(d)
        out = np.empty(d)
        for i in range(d):
            dual[i] = alpha * d1[i] + (1.0 - alpha) * d2[i] - tau * lin[i]
        for b in range(2):
            lo = 0 if b == 0 else split
            hi = split if b == 0 else d
            mx = dual[lo]
            for i in range(lo + 1, hi):
                if dual[i] > mx:
                    mx = dual[i]
            s = 0.0
            for i in range(lo, hi):
                dual[i] -= mx
                out[i] = np.exp(dual[i])
                s += out[i]
            for i in range(lo, hi):
                out[i] /= s
        return out, dual

    @_njit
    def _blend3_proj_product_nb(a, x, b, y, c, z, split):
        return _proj_product_nb(_blend3_nb(a, x, b, y, c, z), split)

    @_njit
    def _kahan_add_nb(total, comp, v):
        for i in range(total.size):
            y = v[i] - comp[i]
            t = total[i] + y
            comp[i] = (t - total[i]) - y
            total[i] = t

    @_njit
    def _rowcol_eval_nb(A, i, j, sy, sx):
        m, n = A.shape
        out = np.empty(n + m)
        for k in range(n):
            out[k] = A[i, k] * sy
        for k in range(m):
            out[n + k] = A[k, j] * sx
        return out

    @_njit
    def _weighted_index_nb(w, u):
        s = 0.0
        for i in range(w.size):
            s += w[i]
        cum = np.empty(w.size)
        acc = 0.0
        for i in range(w.size):
            acc += w[i] / s
            cum[i] = acc
        cum[w.size - 1] = 1.0
        lo, hi = 0, w.size  # first index with u < cum[idx]
        while lo < hi:
            mid = (lo + hi) // 2
            if cum[mid] <= u:
                lo = mid + 1
            else:
                hi = mid
        return lo

    proj_simplex = _proj_simplex_nb
    proj_product = _proj_product_nb
    blend3 = _blend3_nb
    blend3_proj_product = _blend3_proj_product_nb
    entropic_blend = _entropic_blend_nb
    kahan_add = _kahan_add_nb
    rowcol_eval = _rowcol_eval_nb
    weighted_index = _weighted_index_nb
else:  # pragma: no cover
    proj_simplex = proj_simplex_py
    proj_product = proj_product_py
    blend3 = blend3_py
    blend3_proj_product = blend3_proj_product_py
    entropic_blend = entropic_blend_py
    kahan_add = kahan_add_py
    rowcol_eval = rowcol_eval_py
    weighted_index = weighted_index_py


def warm_up() -> None:
    """Trigger kernel compilation (no-op once the disk cache is hot)."""
    v = np.array([0.4, 0.6])
    z = np.array([0.5, 0.5, 0.5, 0.5])
    proj_simplex(v)
    proj_product(z, 2)
    blend3(0.5, z, 0.5, z, -0.1, z)
    blend3_proj_product(0.5, z, 0.5, z, -0.1, z, 2)
    entropic_blend(z, z, z, 0.5, 0.1, 2)
    kahan_add(z.copy(), z.copy(), z)
    rowcol_eval(np.eye(2), 0, 0, 1.0, 1.0)
    weighted_index(v, 0.3)
