"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba versions are compiled from explicit loops; the numpy versions are
vectorized equivalents. Set ``EPRYOUNG_DISABLE_NUMBA=1`` (or run without numba
installed) to select the numpy path. Both families are always importable as
``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` so tests and benchmarks can compare them.
"""

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "USE_NUMBA",
    "NUMBA_AVAILABLE",
    "NUMBA_KERNELS",
    "NUMPY_KERNELS",
    "kummer_series",
    "modular_fold",
    "ptot_moments",
    "phase_scan",
    "bootstrap_variances",
    "grid_fold_moments",
]

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

_flag = os.environ.get("EPRYOUNG_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = NUMBA_AVAILABLE and _flag not in ("1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# loop implementations (compiled by numba)


def _kummer_series_loop(a, b, x, rtol, max_terms):
    n = a.shape[0]
    out = np.empty(n)
    ok = np.ones(n, dtype=np.bool_)
    for i in range(n):
        term = 1.0
        total = 1.0
        k = 0
        while True:
            term = term * (a[i] + k) * x / ((b + k) * (k + 1.0))
            total += term
            k += 1
            if abs(term) < rtol * abs(total):
                break
            if k >= max_terms:
                ok[i] = False
                break
        out[i] = total
    return out, ok


def _fold_scalar(v, period):
    half = 0.5 * period
    r = (v + half) % period
    if r >= period:
        r -= period
    return r - half


def _modular_fold_loop(values, period):
    out = np.empty(values.shape[0])
    for i in range(values.shape[0]):
        out[i] = _fold_scalar(values[i], period)
    return out


def _ptot_moments_loop(u1, u2, period, shift):
    n = u1.shape[0]
    s1 = 0.0
    s2 = 0.0
    half_shift = 0.5 * shift
    for i in range(n):
        s = _fold_scalar(u1[i] + half_shift, period) + _fold_scalar(u2[i] + half_shift, period)
        s1 += s
        s2 += s * s
    return s1 / n, s2 / n


def _phase_scan_loop(u1, u2, period, shifts):
    out = np.empty(shifts.shape[0])
    for k in range(shifts.shape[0]):
        m1, m2 = _ptot_moments_loop(u1, u2, period, shifts[k])
        out[k] = m2 - m1 * m1
    return out


def _bootstrap_variances_loop(x, idx):
    nres, n = idx.shape
    out = np.empty(nres)
    for r in range(nres):
        s1 = 0.0
        s2 = 0.0
        for i in range(n):
            v = x[idx[r, i]]
            s1 += v
            s2 += v * v
        m1 = s1 / n
        out[r] = s2 / n - m1 * m1
    return out


def _grid_fold_moments_loop(density, axis, period):
    n = axis.shape[0]
    folded = np.empty(n)
    for i in range(n):
        folded[i] = _fold_scalar(axis[i], period)
    mass = 0.0
    s1 = 0.0
    s2 = 0.0
    for i in range(n):
        for j in range(n):
            w = density[i, j]
            s = folded[i] + folded[j]
            mass += w
            s1 += w * s
            s2 += w * s * s
    if mass > 0.0:
        return mass, s1 / mass, s2 / mass
    return mass, 0.0, 0.0


# ---------------------------------------------------------------------------
# numpy implementations


def _kummer_series_numpy(a, b, x, rtol, max_terms):
    a = np.asarray(a, dtype=float)
    term = np.ones_like(a)
    total = np.ones_like(a)
    active = np.ones(a.shape, dtype=bool)
    for k in range(max_terms):
        term = np.where(active, term * (a + k) * x / ((b + k) * (k + 1.0)), 0.0)
        total = total + term
        active &= ~(np.abs(term) < rtol * np.abs(total))
        if not active.any():
            return total, np.ones(a.shape, dtype=bool)
    return total, ~active


def _modular_fold_numpy(values, period):
    half = 0.5 * period
    r = np.mod(np.asarray(values, dtype=float) + half, period)
    r = np.where(r >= period, r - period, r)
    return r - half


def _ptot_moments_numpy(u1, u2, period, shift):
    s = _modular_fold_numpy(u1 + 0.5 * shift, period) + _modular_fold_numpy(u2 + 0.5 * shift, period)
    return float(np.mean(s)), float(np.mean(s * s))


def _phase_scan_numpy(u1, u2, period, shifts):
    out = np.empty(len(shifts))
    for k, sh in enumerate(shifts):
        m1, m2 = _ptot_moments_numpy(u1, u2, period, sh)
        out[k] = m2 - m1 * m1
    return out


def _bootstrap_variances_numpy(x, idx):
    xs = x[idx]
    return xs.var(axis=1)


def _grid_fold_moments_numpy(density, axis, period):
    f = _modular_fold_numpy(axis, period)
    s = f[:, None] + f[None, :]
    mass = float(density.sum())
    if mass <= 0.0:
        return mass, 0.0, 0.0
    m1 = float((density * s).sum()) / mass
    m2 = float((density * s * s).sum()) / mass
    return mass, m1, m2


NUMPY_KERNELS = {
    "kummer_series": _kummer_series_numpy,
    "modular_fold": _modular_fold_numpy,
    "ptot_moments": _ptot_moments_numpy,
    "phase_scan": _phase_scan_numpy,
    "bootstrap_variances": _bootstrap_variances_numpy,
    "grid_fold_moments": _grid_fold_moments_numpy,
}

if NUMBA_AVAILABLE:
    _jit = numba.njit(cache=True, nogil=True)
    _fold_scalar = _jit(_fold_scalar)
    _ptot_moments_loop = _jit(_ptot_moments_loop)
    NUMBA_KERNELS = {
        "kummer_series": _jit(_kummer_series_loop),
        "modular_fold": _jit(_modular_fold_loop),
        "ptot_moments": _ptot_moments_loop,
        "phase_scan": _jit(_phase_scan_loop),
        "bootstrap_variances": _jit(_bootstrap_variances_loop),
        "grid_fold_moments": _jit(_grid_fold_moments_loop),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = dict(NUMPY_KERNELS)

_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS
log.debug("epryoung kernels: %s", "numba" if USE_NUMBA else "numpy")


def _f64(v):
    return np.ascontiguousarray(v, dtype=np.float64)


def kummer_series(a, b, x, rtol=1e-16, max_terms=500):
    """Sum the Kummer series for each entry of ``a``; returns (values, converged)."""
    a = _f64(np.atleast_1d(a))
    return _active["kummer_series"](a, float(b), float(x), float(rtol), int(max_terms))


def modular_fold(values, period):
    """Fold ``values`` into the half-open cell [-period/2, period/2)."""
    v = _f64(np.atleast_1d(values))
    return _active["modular_fold"](v, float(period))


def ptot_moments(u1, u2, period, shift=0.0):
    """First and second raw moments of fold(u1 + shift/2) + fold(u2 + shift/2)."""
    m1, m2 = _active["ptot_moments"](_f64(u1), _f64(u2), float(period), float(shift))
    return float(m1), float(m2)


def phase_scan(u1, u2, period, shifts):
    """Variance of the folded total for each coordinate shift in ``shifts``."""
    return _active["phase_scan"](_f64(u1), _f64(u2), float(period), _f64(shifts))


def bootstrap_variances(x, idx):
    """Population variance of ``x[idx[r]]`` for each resample row ``r``."""
    return _active["bootstrap_variances"](_f64(x), np.ascontiguousarray(idx, dtype=np.int64))


def grid_fold_moments(density, axis, period):
    """(mass, m1, m2) of fold(p1)+fold(p2) under a density tabulated on axis x axis."""
    mass, m1, m2 = _active["grid_fold_moments"](_f64(density), _f64(axis), float(period))
    return float(mass), float(m1), float(m2)
