"""Special functions and small numerical primitives.

Kummer's confluent hypergeometric function (series form, small arguments),
a removable-singularity-safe sinc, a scan-and-bisect root finder that returns
the leftmost root, and composite Simpson quadrature on uniform grids.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, InvalidParameterError, NoRootError

__all__ = [
    "GridSpec",
    "kummer_m",
    "kummer_m_dx",
    "find_smallest_root",
    "sinc",
    "simpson_weights",
    "integrate_1d",
    "integrate_2d",
]

KUMMER_RTOL = 1e-16
KUMMER_MAX_TERMS = 500


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid ``lo, lo + h, ..., hi`` with ``n`` points."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise InvalidParameterError("grid bounds must be finite")
        if not self.lo < self.hi:
            raise InvalidParameterError(f"grid needs lo < hi, got lo={self.lo}, hi={self.hi}")
        if int(self.n) != self.n or self.n < 2:
            raise InvalidParameterError(f"grid needs an integer n >= 2, got {self.n}")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, int(self.n))

    def odd(self) -> "GridSpec":
        """Same interval with ``n`` rounded up to the next odd count."""
        return self if self.n % 2 == 1 else GridSpec(self.lo, self.hi, self.n + 1)


def _check_b(b):
    if b <= 0 and float(b).is_integer():
        raise InvalidParameterError(f"Kummer M undefined for b = {b} (zero or negative integer)")


def kummer_m(a, b, x):
    """Confluent hypergeometric function M(a, b, x) = 1F1(a; b; x).

    Sums the power series with the term recurrence
    t_{k+1} = t_k (a + k) x / ((b + k)(k + 1)) until a term drops below
    1e-16 of the partial sum. Only meant for moderate ``|x|`` (a few units);
    there is no asymptotic branch.

    Parameters
    ----------
    a : float or array_like
        Upper parameter; arrays are evaluated elementwise.
    b : float
        Lower parameter, not zero or a negative integer.
    x : float
        Argument.

    Returns
    -------
    float or np.ndarray
        Matches the shape of ``a``.

    Raises
    ------
    InvalidParameterError
        If ``b`` is 0, -1, -2, ...
    ConvergenceError
        If the series has not converged after 500 terms.
    """
    _check_b(b)
    scalar = np.ndim(a) == 0
    a_arr = np.asarray(a, dtype=float)
    vals, ok = kernels.kummer_series(a_arr.ravel(), b, x, KUMMER_RTOL, KUMMER_MAX_TERMS)
    if not np.all(ok):
        raise ConvergenceError(
            f"Kummer series did not converge in {KUMMER_MAX_TERMS} terms (b={b}, x={x})"
        )
    if scalar:
        return float(vals[0])
    return vals.reshape(a_arr.shape)


def kummer_m_dx(a, b, x):
    """Derivative dM(a, b, x)/dx = (a / b) M(a + 1, b + 1, x)."""
    _check_b(b)
    a_arr = np.asarray(a, dtype=float)
    out = a_arr / b * kummer_m(a_arr + 1.0, b + 1.0, x)
    return float(out) if np.ndim(a) == 0 else out


def find_smallest_root(f, lo, hi, scan_steps=10_000, tol=1e-12, vectorized=False):
    """Leftmost root of ``f`` on [lo, hi].

    The interval is scanned in ``scan_steps`` uniform pieces; the first sign
    change is refined by bisection until the bracket is no wider than ``tol``.
    With ``vectorized=True`` the scan calls ``f`` once on the whole array.

    Raises
    ------
    NoRootError
        If no sign change (or exact zero) is found on the scan grid.
    """
    if scan_steps < 2:
        raise InvalidParameterError("scan_steps must be >= 2")
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    xs = np.linspace(lo, hi, int(scan_steps) + 1)
    if vectorized:
        fs = np.asarray(f(xs), dtype=float)
    else:
        fs = np.array([f(x) for x in xs], dtype=float)

    zero = np.flatnonzero(fs == 0.0)
    change = np.flatnonzero(fs[:-1] * fs[1:] < 0.0)
    first_zero = zero[0] if zero.size else None
    first_change = change[0] if change.size else None
    if first_zero is None and first_change is None:
        raise NoRootError(f"no sign change of f on [{lo}, {hi}] with {scan_steps} scan steps")
    if first_zero is not None and (first_change is None or first_zero <= first_change):
        return float(xs[first_zero])

    a, b = xs[first_change], xs[first_change + 1]
    fa = fs[first_change]
    while b - a > tol:
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        fm = float(f(m))
        if fm == 0.0:
            return float(m)
        if np.signbit(fm) == np.signbit(fa):
            a, fa = m, fm
        else:
            b = m
    return float(0.5 * (a + b))


def sinc(x):
    """Unnormalized sinc, sin(x)/x, with sinc(0) = 1.

    Uses a Taylor branch for |x| < 1e-4. Even by construction, since it is
    evaluated on |x|.
    """
    ax = np.abs(np.asarray(x, dtype=float))
    small = ax < 1e-4
    safe = np.where(small, 1.0, ax)
    x2 = ax * ax
    out = np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(safe) / safe)
    return float(out) if np.ndim(x) == 0 else out


def simpson_weights(grid: GridSpec) -> np.ndarray:
    """Composite Simpson weights; ``grid.n`` must be odd."""
    n = int(grid.n)
    if n % 2 == 0:
        raise InvalidParameterError("Simpson weights need an odd point count")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * grid.spacing / 3.0


def integrate_1d(f, grid: GridSpec) -> float:
    """Composite Simpson integral of the vectorized ``f`` over the grid interval.

    An even point count is rounded up to the next odd one.
    """
    g = grid.odd()
    return float(np.dot(simpson_weights(g), f(g.points())))


def integrate_2d(f, gx: GridSpec, gy: GridSpec) -> float:
    """Tensor-product Simpson integral of ``f(X, Y)`` (broadcasting, 'ij' layout)."""
    gx, gy = gx.odd(), gy.odd()
    x = gx.points()[:, None]
    y = gy.points()[None, :]
    vals = np.broadcast_to(f(x, y), (gx.n, gy.n))
    return float(simpson_weights(gx) @ vals @ simpson_weights(gy))
