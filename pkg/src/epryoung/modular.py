"""Modular variables, fringe functions and the modular entanglement criterion.

A position x splits as ``x = N_x d + xbar`` with ``xbar`` in the half-open
cell [-d/2, d/2); a momentum splits the same way with period h/d. The
criterion certifies entanglement when

    (d/h)^2 Var(pbar_1 + pbar_2) + Var(N_x1 - N_x2) < 2 C

with C the smallest root of a Kummer-function equation (about 0.0782).
"""

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidParameterError
from .specfun import find_smallest_root, kummer_m, kummer_m_dx

__all__ = [
    "ModularFrame",
    "ModularDecomposition",
    "CriterionReport",
    "EULER_GAMMA",
    "decompose_position",
    "decompose_momentum",
    "modular_part",
    "integer_part",
    "fringe_function",
    "squeezing_s2",
    "squeezing_s2_asymptotic",
    "squeezing_s2_shifted",
    "criterion_root_function",
    "criterion_constant",
    "criterion_threshold",
    "evaluate_criterion",
]

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class ModularFrame:
    """Slit separation ``d`` and Planck constant ``h`` of the unit system.

    Defaults are the natural units hbar = d = 1, so h = 2 pi and the grating
    momentum h/d is 2 pi.
    """

    d: float = 1.0
    h: float = 2.0 * math.pi

    def __post_init__(self):
        if not (self.d > 0 and self.h > 0):
            raise InvalidParameterError(f"frame needs d > 0 and h > 0, got d={self.d}, h={self.h}")

    @property
    def hbar(self) -> float:
        return self.h / (2.0 * math.pi)

    @property
    def momentum_period(self) -> float:
        return self.h / self.d

    def rescaled(self, factor: float) -> "ModularFrame":
        return ModularFrame(d=self.d * factor, h=self.h)


@dataclass(frozen=True)
class ModularDecomposition:
    integer_part: int
    modular_part: float


@dataclass(frozen=True)
class CriterionReport:
    lhs: float
    threshold: float
    entangled: bool
    lhs_stderr: float = 0.0

    @property
    def margin(self) -> float:
        """Relative distance below threshold, (2C - lhs) / 2C."""
        return (self.threshold - self.lhs) / self.threshold


def modular_part(values, period):
    """Vectorized modular component in [-period/2, period/2)."""
    return kernels.modular_fold(values, period).reshape(np.shape(values))


def integer_part(values, period):
    """Vectorized integer component matching :func:`modular_part`."""
    v = np.asarray(values, dtype=float)
    return np.rint((v - modular_part(v, period)) / period).astype(np.int64)


def _decompose(value, period):
    mod = float(modular_part(float(value), period)[()])
    return ModularDecomposition(int(round((value - mod) / period)), mod)


def decompose_position(x: float, frame: ModularFrame) -> ModularDecomposition:
    """Split ``x`` into (N_x, xbar) with ``x = N_x d + xbar``."""
    return _decompose(x, frame.d)


def decompose_momentum(p: float, frame: ModularFrame) -> ModularDecomposition:
    """Split ``p`` into (N_p, pbar) with ``p = N_p h/d + pbar``."""
    return _decompose(p, frame.momentum_period)


def fringe_function(n_slits: int, xi):
    """N-slit fringe kernel F_N(xi) = 1 + (2/N) sum_j (N - j) cos(2 pi j xi).

    Period 1 in ``xi``, maximum N at integer ``xi``, mean 1 over a period.
    """
    if n_slits < 1:
        raise InvalidParameterError("fringe_function needs N >= 1")
    xi = np.asarray(xi, dtype=float)
    out = np.ones_like(xi)
    for j in range(1, n_slits):
        out = out + (2.0 * (n_slits - j) / n_slits) * np.cos(2.0 * np.pi * j * xi)
    return float(out) if out.ndim == 0 else out


def _s2_terms(n_slits):
    if n_slits < 1:
        raise InvalidParameterError("squeezing function needs N >= 1")
    j = np.arange(1, n_slits, dtype=float)
    return j, (n_slits - j) / (n_slits * j * j)


def squeezing_s2(n_slits: int) -> float:
    """S_2(N) = (6/pi^2) sum_{j=1}^{N-1} (N - j) / (N j^2); S_2(1) = 0."""
    _, t = _s2_terms(n_slits)
    return float(6.0 / math.pi**2 * t.sum())


def squeezing_s2_asymptotic(n_slits: int) -> float:
    """Large-N form 1 - 6 (1 + gamma + ln N) / (pi^2 N)."""
    if n_slits < 1:
        raise InvalidParameterError("squeezing function needs N >= 1")
    return 1.0 - 6.0 * (1.0 + EULER_GAMMA + math.log(n_slits)) / (math.pi**2 * n_slits)


def squeezing_s2_shifted(n_slits: int, phi: float) -> float:
    """S_2(N, phi): each harmonic j weighted by cos(j phi)."""
    j, t = _s2_terms(n_slits)
    return float(6.0 / math.pi**2 * np.sum(t * np.cos(j * phi)))


def criterion_root_function(mu):
    """d/dx [exp(-pi x^2) M(1/4 - pi mu / 2, 1/2, 2 pi x^2)] at x = 1/2.

    Chain rule: the x-derivative of the Kummer argument 2 pi x^2 is 4 pi x.
    Accepts scalars or arrays of ``mu``.
    """
    a = 0.25 - 0.5 * math.pi * np.asarray(mu, dtype=float)
    x = 0.5
    arg = 2.0 * math.pi * x * x
    damp = math.exp(-math.pi * x * x)
    out = -2.0 * math.pi * x * damp * kummer_m(a, 0.5, arg) + damp * kummer_m_dx(a, 0.5, arg) * (
        4.0 * math.pi * x
    )
    return float(out) if np.ndim(mu) == 0 else out


_C_LOCK = threading.Lock()
_C_VALUE = None


def criterion_constant() -> float:
    """Criterion constant C: smallest root of the Kummer equation on (0, 0.5].

    Computed on first use and cached; the initialization is guarded by a lock.
    """
    global _C_VALUE
    if _C_VALUE is None:
        with _C_LOCK:
            if _C_VALUE is None:
                _C_VALUE = find_smallest_root(
                    criterion_root_function, 0.0, 0.5, scan_steps=10_000, tol=1e-12, vectorized=True
                )
    return _C_VALUE


def criterion_threshold() -> float:
    """Right-hand side 2C of the criterion."""
    return 2.0 * criterion_constant()


def evaluate_criterion(var_ptot: float, var_nrel: float, frame: ModularFrame, stderr_lhs: float = 0.0) -> CriterionReport:
    """Evaluate (d^2/h^2) var_ptot + var_nrel against 2C.

    ``var_ptot`` is in momentum-squared units of ``frame``; ``var_nrel`` is
    dimensionless. ``stderr_lhs`` is carried through unchanged.
    """
    if var_ptot < 0 or var_nrel < 0:
        raise InvalidParameterError("variances must be nonnegative")
    if stderr_lhs < 0:
        raise InvalidParameterError("stderr must be nonnegative")
    lhs = (frame.d / frame.h) ** 2 * var_ptot + var_nrel
    thr = criterion_threshold()
    return CriterionReport(lhs=float(lhs), threshold=thr, entangled=bool(lhs < thr), lhs_stderr=float(stderr_lhs))
