"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names dispatch on :data:`sdmeq._jit.HAS_NUMBA`; the ``*_numpy``
variants are always importable so the two paths can be compared.
"""
import numpy as np

from ._jit import HAS_NUMBA, njit


# ----------------------------------------------------------------------------
# supervised LMS over a cyclic sample stream
# ----------------------------------------------------------------------------
#
# r: (L, d2) samples at s per symbol, L = n_sym * s, treated as periodic.
# Output k sees Y_k = [y_k; y_{k-1}; ...; y_{k-M+1}], y_k = r[k s + i0 + p],
# p = 0..s-1, and is compared with x[k - delta]. W is updated in place.


def lms_numpy(r, x, W, mu, i0, s, M, delta, err, div_level=10.0, div_run=1000):
    L, d2 = r.shape
    n_sym = x.shape[0]
    j = np.repeat(np.arange(M), s)
    p = np.tile(np.arange(s), M)
    off = i0 - j * s + p
    run = 0
    for k in range(n_sym):
        Y = r[(k * s + off) % L].ravel()
        e = x[(k - delta) % n_sym] - W @ Y
        err[k] = e
        W += (mu[k] * e)[:, None] * Y.conj()[None, :]
        pw = np.vdot(e, e).real
        if not np.isfinite(pw):
            return k
        if pw > div_level * d2:
            run += 1
            if run >= div_run:
                return k
        else:
            run = 0
    return -1


@njit(cache=True, nogil=True)
def _lms_jit(r, x, W, mu, i0, s, M, delta, err, div_level, div_run):
    L = r.shape[0]
    d2 = r.shape[1]
    n_sym = x.shape[0]
    D = M * s * d2
    Y = np.empty(D, dtype=np.complex128)
    Yc = np.empty(D, dtype=np.complex128)
    run = 0
    for k in range(n_sym):
        for jj in range(M):
            for p in range(s):
                idx = ((k - jj) * s + i0 + p) % L
                base = (jj * s + p) * d2
                for n in range(d2):
                    v = r[idx, n]
                    Y[base + n] = v
                    Yc[base + n] = np.conj(v)
        ref = (k - delta) % n_sym
        pw = 0.0
        for o in range(d2):
            acc = 0j
            for q in range(D):
                acc += W[o, q] * Y[q]
            e = x[ref, o] - acc
            err[k, o] = e
            pw += e.real * e.real + e.imag * e.imag
            g = mu[k] * e
            for q in range(D):
                W[o, q] += g * Yc[q]
        if not np.isfinite(pw):
            return k
        if pw > div_level * d2:
            run += 1
            if run >= div_run:
                return k
        else:
            run = 0
    return -1


def lms(r, x, W, mu, i0, s, M, delta, err, div_level=10.0, div_run=1000):
    """Run the LMS recurrence; returns the symbol index of divergence or -1."""
    if HAS_NUMBA:
        return int(_lms_jit(r, x, W, mu, int(i0), int(s), int(M), int(delta), err,
                            float(div_level), int(div_run)))
    return lms_numpy(r, x, W, mu, i0, s, M, delta, err, div_level, div_run)


def fixed_filter(r, W, i0, s, M, n_sym, chunk=2048):
    """Outputs ``W Y_k`` for every k of a cyclic stream (no adaptation)."""
    L, d2 = r.shape
    j = np.repeat(np.arange(M), s)
    p = np.tile(np.arange(s), M)
    off = i0 - j * s + p
    out = np.empty((n_sym, W.shape[0]), dtype=np.complex128)
    Wt = W.T
    for a in range(0, n_sym, chunk):
        k = np.arange(a, min(a + chunk, n_sym))
        Y = r[(k[:, None] * s + off[None, :]) % L].reshape(k.size, -1)
        out[a:a + k.size] = Y @ Wt
    return out
