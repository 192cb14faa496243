"""Moments and variances of the modular observables.

Closed forms for the ideal, phase-shifted, mixed, separable and extended-source
cases; an exact cell-average evaluation for arbitrary slit-pair states; and a
grid evaluation that tabulates the joint momentum density and folds it into
the modular cell. The grid route is what the critical-width sweeps use.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import CoverageError, InvalidParameterError, NoRootError, PreconditionError
from .modular import ModularFrame, criterion_constant, modular_part, squeezing_s2, squeezing_s2_shifted
from .states import (
    EprSource,
    GratingSpec,
    SetupWarning,
    SlitPairState,
    build_separable_state,
    build_suboptimal_state,
    momentum_axis,
    iter_momentum_density,
)

__all__ = [
    "MomentSet",
    "ideal_variance_ptot",
    "ideal_variance_ptot_shifted",
    "mixture_variance_ptot",
    "extended_source_variance_ptot",
    "classical_admixture_threshold",
    "separable_variance_nrel",
    "separable_admixture_threshold",
    "separable_admixture_threshold_numeric",
    "analytic_moments_nrel",
    "cell_variance_ptot",
    "fold_variance_grid",
    "numeric_variance_ptot",
    "default_grid_per_cell",
    "criterion_lhs_suboptimal",
    "critical_sigma_rel",
    "critical_sigma_cm",
]

DEFAULT_GRID_PER_CELL = 64
# principal maxima are 1/N of a cell wide; the fold error scales as (N / grid_per_cell)^2
GRID_PER_SLIT = 16
FOLD_BLOCK_ELEMENTS = 4_000_000
DEFAULT_N_CELLS = 24
# sinc^2 tails decay like 1/p^2; 24 cells enclose about 82% of the a = 0.1 d envelope
DEFAULT_MIN_COVERAGE = 0.8
SIGMA_REL_BRACKET = (0.05, 1.0)
SIGMA_CM_BRACKET = (0.02, 2.0)
SWEEP_XTOL = 1e-4


@dataclass(frozen=True)
class MomentSet:
    """Raw moments of one modular observable and its variance."""

    observable: str
    moments: tuple
    variance: float

    def moment(self, order: int) -> float:
        for m, v in self.moments:
            if m == order:
                return v
        raise KeyError(order)


def _clamped_variance(m1, m2, scale=1.0):
    var = m2 - m1 * m1
    if var < 0:
        if var < -1e-12 * max(scale, 1.0):
            raise ArithmeticError(f"negative variance {var!r}")
        var = 0.0
    return float(var)


def _uniform_variance(frame):
    return frame.momentum_period**2 / 6.0


def ideal_variance_ptot(n_slits: int, frame: ModularFrame = ModularFrame()) -> float:
    """Var(pbar_tot) = (h^2 / 6 d^2) (1 - S_2(N)) for the ideal MME state."""
    return _uniform_variance(frame) * (1.0 - squeezing_s2(n_slits))


def ideal_variance_ptot_shifted(n_slits: int, phi: float, frame: ModularFrame = ModularFrame()) -> float:
    """Ideal variance when the fringe pattern is offset by the phase ``phi``."""
    return _uniform_variance(frame) * (1.0 - squeezing_s2_shifted(n_slits, phi))


def mixture_variance_ptot(n_slits: int, w: float, frame: ModularFrame = ModularFrame()) -> float:
    """Variance for the MME state with classical slit-pair admixture ``w``."""
    if not 0.0 <= w <= 1.0:
        raise InvalidParameterError(f"admixture weight must lie in [0, 1], got {w}")
    return _uniform_variance(frame) * (1.0 - (1.0 - w) * squeezing_s2(n_slits))


def extended_source_variance_ptot(
    n_slits: int,
    frame: ModularFrame = ModularFrame(),
    s0_p_cm: float = 0.0,
    xi_cm_mag: float = 1.0,
    exact_harmonics: bool = False,
) -> float:
    """Variance averaged over a Gaussian spread ``s0_p_cm`` of pair momenta.

    The default damps S_2 as a whole by exp(-(s0 d)^2 / (2 h^2 |xi|^2)).
    With ``exact_harmonics=True`` each harmonic j of the fringe is averaged
    separately, exp(-j^2 (s0 d)^2 / (2 h^2 |xi|^4)); the two agree for N = 2
    at |xi| = 1.
    """
    if s0_p_cm < 0:
        raise InvalidParameterError("s0_p_cm must be >= 0")
    if xi_cm_mag < 1:
        raise InvalidParameterError("|xi_cm| is at least 1")
    z = (s0_p_cm * frame.d / frame.h) ** 2
    if not exact_harmonics:
        return _uniform_variance(frame) * (1.0 - math.exp(-z / (2.0 * xi_cm_mag**2)) * squeezing_s2(n_slits))
    j = np.arange(1, n_slits, dtype=float)
    terms = (n_slits - j) / (n_slits * j * j) * np.exp(-j * j * z / (2.0 * xi_cm_mag**4))
    return _uniform_variance(frame) * (1.0 - 6.0 / math.pi**2 * float(terms.sum()))


def classical_admixture_threshold(n_slits: int) -> float:
    """Largest admixture still detected: (12 C - 1) / S_2(N) + 1, clamped to [0, 1]."""
    if n_slits < 2:
        raise InvalidParameterError("threshold needs N >= 2")
    w = (12.0 * criterion_constant() - 1.0) / squeezing_s2(n_slits) + 1.0
    return min(max(w, 0.0), 1.0)


def separable_variance_nrel(n_slits: int) -> float:
    """Var(N_x,rel) = (N^2 - 1) / 6 for two independent uniform slit choices."""
    if n_slits < 1:
        raise InvalidParameterError("N must be >= 1")
    return (n_slits * n_slits - 1.0) / 6.0


def separable_admixture_threshold() -> float:
    """Separable admixture bound 4 C (from the N_x,rel term alone, N = 2)."""
    return 4.0 * criterion_constant()


def separable_admixture_threshold_numeric(n_slits: int = 2, frame: ModularFrame = None, **grid) -> dict:
    """Admixture of the separable product state at which the full criterion fails.

    The criterion left side is affine in the admixture weight, so the
    threshold follows from its two endpoints: the ideal value and the
    separable value with a numerically folded momentum variance.

    Returns
    -------
    dict
        ``threshold`` (clamped to [0, 1]), ``lhs_ideal``, ``lhs_separable`` and
        ``var_ptot_separable``.
    """
    g = GratingSpec(n_slits, d=frame.d if frame else 1.0, a=grid.pop("a", 0.1 * (frame.d if frame else 1.0)))
    frame = frame or ModularFrame(d=g.d)
    state = build_separable_state(g, hbar=frame.hbar)
    var_sep = numeric_variance_ptot(state, frame, **grid)
    lhs0 = ideal_variance_ptot(n_slits, frame) / frame.momentum_period**2
    lhs1 = var_sep / frame.momentum_period**2 + separable_variance_nrel(n_slits)
    w = (2.0 * criterion_constant() - lhs0) / (lhs1 - lhs0)
    return {
        "threshold": min(max(w, 0.0), 1.0),
        "lhs_ideal": lhs0,
        "lhs_separable": lhs1,
        "var_ptot_separable": var_sep,
    }


def analytic_moments_nrel(state: SlitPairState, m_max: int = 2) -> MomentSet:
    """Moments of N_x1 - N_x2 from the slit-pair weights.

    Exact because the slit windows are disjoint: every particle found behind
    slit n has N_x = n (up to the centering offset, which cancels in the
    difference).
    """
    if m_max < 2:
        raise InvalidParameterError("m_max must be >= 2")
    n = state.grating.slit_indices
    diff = n[:, None] - n[None, :]
    w = state.weights
    moments = tuple((m, float(np.sum(w * diff**m))) for m in range(1, m_max + 1))
    var = _clamped_variance(moments[0][1], moments[1][1])
    return MomentSet("N_x_rel", moments, var)


def _cell_integral_matrices(idx, eps):
    # I_k(j) = int_{-1/2}^{1/2} u^k exp(-2 pi i j u) du for integer j
    j = np.rint(idx[:, None] - idx[None, :]).astype(int)
    jf = j.astype(float)
    sign = np.where(j % 2 == 0, 1.0, -1.0)
    safe = np.where(j == 0, 1.0, jf)
    i0 = (j == 0).astype(complex)
    i1 = np.where(j == 0, 0.0, sign * 1j / (2.0 * np.pi * safe))
    i2 = np.where(j == 0, 1.0 / 12.0, sign / (2.0 * np.pi**2 * safe**2)).astype(complex)
    shift = np.exp(-2j * np.pi * eps * jf)
    return i0 * shift, i1 * shift, i2 * shift


def cell_variance_ptot(state: SlitPairState, frame: ModularFrame = None, admixture_w: float = 0.0, phase: float = 0.0) -> float:
    """Exact Var(pbar_tot) of a slit-pair state by averaging over one modular cell.

    With a < d the single-pair envelope, periodized over momentum cells, is
    exactly flat (its position autocorrelation vanishes at every lattice
    shift). The folded density is therefore |A(u)|^2 on the unit cell, where A
    is the slit-pair phase sum in u = p d / h, and all moments reduce to
    closed-form cell integrals of u^k exp(-2 pi i j u).
    """
    frame = _frame_of(state, frame)
    if not 0.0 <= admixture_w <= 1.0:
        raise InvalidParameterError("admixture weight must lie in [0, 1]")
    c = state.coeffs
    cc = np.conj(c)
    i0, i1, i2 = _cell_integral_matrices(state.grating.slit_indices, phase / (4.0 * math.pi))

    def term(x, y):
        return complex(np.sum(c * (x @ cc @ y.T)))

    m1 = (term(i1, i0) + term(i0, i1)).real
    m2 = (term(i2, i0) + term(i0, i2) + 2.0 * term(i1, i1)).real
    m1 = (1.0 - admixture_w) * m1
    m2 = (1.0 - admixture_w) * m2 + admixture_w / 6.0
    return frame.momentum_period**2 * _clamped_variance(m1, m2)


def _frame_of(state, frame):
    expected = ModularFrame(d=state.grating.d, h=2.0 * math.pi * state.hbar)
    if frame is None:
        return expected
    if not (math.isclose(frame.d, expected.d, rel_tol=1e-12) and math.isclose(frame.h, expected.h, rel_tol=1e-12)):
        raise InvalidParameterError(f"frame {frame} does not match the state's grating and hbar")
    return frame


def fold_variance_grid(density, axis, period):
    """Variance of fold(p1) + fold(p2) under a density tabulated on axis x axis.

    Returns (variance, m1, mass) with moments normalized by the tabulated mass.
    """
    mass, m1, m2 = kernels.grid_fold_moments(np.asarray(density, dtype=float), axis, period)
    if mass <= 0:
        raise CoverageError("tabulated density has no mass")
    return _clamped_variance(m1, m2, period**2), m1, mass


def default_grid_per_cell(n_slits: int) -> int:
    """Grid points per modular cell: 64, or 16 per slit for more than 4 slits."""
    return max(DEFAULT_GRID_PER_CELL, GRID_PER_SLIT * int(n_slits))


def numeric_variance_ptot(
    state: SlitPairState,
    frame: ModularFrame = None,
    grid_per_cell: int = None,
    n_cells: int = DEFAULT_N_CELLS,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
    admixture_w: float = 0.0,
    phase: float = 0.0,
    details: bool = False,
):
    """Var(pbar_tot) from the tabulated joint momentum density.

    The density is tabulated on whole modular cells (see
    :func:`states.momentum_axis`), folded into the cell and renormalized on
    the grid. The first moment is always subtracted. Cell edges fall between
    grid points, so folding is a sum over cell blocks; the grid is generated
    in bands of whole cells and never held in full.

    Parameters
    ----------
    grid_per_cell : int, optional
        Defaults to :func:`default_grid_per_cell` for the state's slit count.
    min_coverage : float
        Minimum fraction of the total probability (known exactly from
        normalization) that the grid must enclose.
    details : bool
        Also return a dict with ``coverage``, ``m1``, ``n_cells`` and
        ``grid_per_cell``.

    Raises
    ------
    CoverageError
        If the enclosed probability is below ``min_coverage``.
    """
    frame = _frame_of(state, frame)
    period = frame.momentum_period
    gpc = default_grid_per_cell(state.grating.n_slits) if grid_per_cell is None else int(grid_per_cell)
    axis, step, n_used = momentum_axis(period, gpc, n_cells)
    band = gpc * max(1, FOLD_BLOCK_ELEMENTS // (gpc * axis.size))
    folded = np.zeros((gpc, gpc))
    for _, block in iter_momentum_density(state, axis, band, admixture_w=admixture_w, phase=phase):
        folded += block.reshape(-1, gpc, n_used, gpc).sum(axis=(0, 2))
    u = modular_part(axis[:gpc], period)
    mass = float(folded.sum())
    if mass <= 0:
        raise CoverageError("tabulated density has no mass")
    s = u[:, None] + u[None, :]
    m1 = float((folded * s).sum()) / mass
    m2 = float((folded * s * s).sum()) / mass
    var = _clamped_variance(m1, m2, period**2)
    coverage = mass * step * step
    if coverage < min_coverage:
        raise CoverageError(
            f"grid of {n_used} cells encloses {coverage:.4f} of the probability (< {min_coverage}); increase n_cells"
        )
    if details:
        return var, {"coverage": coverage, "m1": m1, "n_cells": n_used, "grid_per_cell": gpc}
    return var


def criterion_lhs_suboptimal(src: EprSource, g: GratingSpec, frame: ModularFrame = None, method: str = "grid", **grid) -> float:
    """Criterion left side for a finite EPR source (no MME approximation).

    ``method='grid'`` folds the tabulated momentum density;
    ``method='cell'`` uses the exact cell average.
    """
    frame = frame or ModularFrame(d=g.d)
    state = build_suboptimal_state(g, src, hbar=frame.hbar)
    if method == "grid":
        var_p = numeric_variance_ptot(state, frame, **grid)
    elif method == "cell":
        var_p = cell_variance_ptot(state, frame)
    else:
        raise InvalidParameterError(f"unknown method {method!r}")
    var_n = analytic_moments_nrel(state).variance
    return (frame.d / frame.h) ** 2 * var_p + var_n


def critical_sigma_rel(
    g: GratingSpec,
    frame: ModularFrame = None,
    sigma_cm: float = None,
    method: str = "grid",
    mass: float = 1.0,
    **grid,
) -> float:
    """Relative width at which the criterion stops detecting entanglement.

    Center-of-mass width fixed at 1.5 N d unless given. The root of
    lhs(sigma_rel) = 2C is searched in (0.05 d, d) with Brent's method to
    an absolute tolerance of 1e-4 (in units of d times d).
    """
    if g.n_slits < 2:
        raise PreconditionError("critical widths need N >= 2")
    frame = frame or ModularFrame(d=g.d)
    sigma_cm = 1.5 * g.extent if sigma_cm is None else sigma_cm
    thr = 2.0 * criterion_constant()

    def f(s):
        src = EprSource(s * g.d, sigma_cm, mass=mass)
        return criterion_lhs_suboptimal(src, g, frame, method=method, **grid) - thr

    lo, hi = SIGMA_REL_BRACKET
    return g.d * _root_in(f, lo, hi, "critical sigma_rel")


def critical_sigma_cm(
    g: GratingSpec,
    frame: ModularFrame = None,
    sigma_rel: float = None,
    method: str = "grid",
    mass: float = 1.0,
    **grid,
) -> float:
    """Center-of-mass width at which N-slit interference drops to N-1 slits.

    Operational definition: the suboptimal state's Var(pbar_tot) equals the
    ideal value for N - 1 slits. Relative width fixed at 0.1 d unless given;
    the root is searched in (0.02, 2) N d.
    """
    if g.n_slits < 3:
        raise PreconditionError("the center-of-mass critical width needs N >= 3")
    frame = frame or ModularFrame(d=g.d)
    sigma_rel = 0.1 * g.d if sigma_rel is None else sigma_rel
    target = ideal_variance_ptot(g.n_slits - 1, frame)

    def f(s):
        with warnings.catch_warnings():
            # the lower bracket end is narrower than sigma_rel for small N
            warnings.simplefilter("ignore", SetupWarning)
            src = EprSource(sigma_rel, s * g.extent, mass=mass)
        state = build_suboptimal_state(g, src, hbar=frame.hbar)
        if method == "cell":
            v = cell_variance_ptot(state, frame)
        else:
            v = numeric_variance_ptot(state, frame, **grid)
        return (v - target) / frame.momentum_period**2

    lo, hi = SIGMA_CM_BRACKET
    return g.extent * _root_in(f, lo, hi, "critical sigma_cm")


def _root_in(f, lo, hi, what):
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoRootError(f"{what}: no crossing in [{lo:g}, {hi:g}] (f = {flo:.3g}, {fhi:.3g})")
    return float(brentq(f, lo, hi, xtol=SWEEP_XTOL))
