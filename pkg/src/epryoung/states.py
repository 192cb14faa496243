"""EPR sources, grating passage and post-grating two-particle states.

A post-grating state is stored parametrically: a coefficient matrix over slit
pairs (n, n') together with the intra-slit pair wavefunction

    Psi_s(x1, x2) = exp(-(x1 - x2)^2 / (4 sigma^2 xi)) chi_a(x1) chi_a(x2),

which is shared by every slit pair (translated by (n d, n' d)). All momentum
space quantities follow from the Fourier transform of Psi_s and the phase sum
over slit pairs. Default units are hbar = d = m = 1.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import InvalidParameterError, PreconditionError
from .modular import decompose_position, integer_part, modular_part
from .specfun import GridSpec, simpson_weights, sinc

__all__ = [
    "HBAR",
    "SetupWarning",
    "GratingSpec",
    "EprSource",
    "Displacement",
    "SourceEnsemble",
    "SlitPairState",
    "SetupDiagnostics",
    "DisplacedDiagnostics",
    "dispersion_factors",
    "max_propagation_time",
    "validate_setup",
    "validate_displaced",
    "displaced_arrays",
    "build_mme_state",
    "build_suboptimal_state",
    "build_separable_state",
    "intra_slit_density",
    "position_density",
    "envelope_amplitude",
    "envelope_points",
    "envelope_grid",
    "interference_factor",
    "interference_grid",
    "momentum_amplitude",
    "momentum_axis",
    "momentum_density_grid",
    "iter_momentum_density",
    "far_field_map",
    "screen_coordinate",
    "far_field_valid",
]

HBAR = 1.0

SLIT_RATIO_MIN = 5.0
ILLUMINATION_RATIO_MIN = 1.0
# policy thresholds for the "much smaller than" displacement conditions
R1_MAX = 0.2
R2_MAX = 0.2
FAR_FIELD_FACTOR = 10.0


class SetupWarning(UserWarning):
    """A physical condition for clean nonlocal interference is not met."""


@dataclass(frozen=True)
class GratingSpec:
    n_slits: int
    d: float = 1.0
    a: float = 0.1

    def __post_init__(self):
        if int(self.n_slits) != self.n_slits or self.n_slits < 1:
            raise InvalidParameterError(f"n_slits must be a positive integer, got {self.n_slits}")
        if not self.d > 0:
            raise InvalidParameterError(f"slit separation must be positive, got {self.d}")
        if not 0 < self.a < self.d:
            raise InvalidParameterError(f"slit width must satisfy 0 < a < d, got a={self.a}, d={self.d}")

    @property
    def slit_indices(self) -> np.ndarray:
        """Centered slit labels -(N-1)/2, ..., (N-1)/2 (half-integers for even N)."""
        return np.arange(self.n_slits) - 0.5 * (self.n_slits - 1)

    @property
    def extent(self) -> float:
        return self.n_slits * self.d

    @property
    def position_origin(self) -> float:
        """Offset that puts every slit center in the middle of a modular cell."""
        return 0.5 * self.d if self.n_slits % 2 == 0 else 0.0


@dataclass(frozen=True)
class EprSource:
    """Finite EPR pair source.

    ``sigma_x_cm`` is the center-of-mass position width, hbar / (2 sigma_p_cm).
    ``t_grating`` is the flight time from the source to the gratings.
    """

    sigma_x_rel: float
    sigma_x_cm: float
    mass: float = 1.0
    t_grating: float = 0.0

    def __post_init__(self):
        for name in ("sigma_x_rel", "sigma_x_cm", "mass"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.t_grating >= 0:
            raise InvalidParameterError(f"t_grating must be >= 0, got {self.t_grating}")
        if self.sigma_x_rel >= self.sigma_x_cm:
            warnings.warn(
                f"sigma_x_rel={self.sigma_x_rel} >= sigma_x_cm={self.sigma_x_cm}: not an EPR-squeezed source",
                SetupWarning,
                stacklevel=2,
            )

    def sigma_p_cm(self, hbar: float = HBAR) -> float:
        return hbar / (2.0 * self.sigma_x_cm)


@dataclass(frozen=True)
class Displacement:
    """Phase-space offset of a displaced EPR pair."""

    x_cm0: float = 0.0
    x_rel0: float = 0.0
    p_cm0: float = 0.0
    p_rel0: float = 0.0

    def is_zero(self) -> bool:
        return self.x_cm0 == 0 and self.x_rel0 == 0 and self.p_cm0 == 0 and self.p_rel0 == 0


@dataclass(frozen=True)
class SourceEnsemble:
    """Gaussian widths of the distribution of displacements."""

    s0_x_cm: float = 0.0
    s0_x_rel: float = 0.0
    s0_p_cm: float = 0.0
    s0_p_rel: float = 0.0

    def __post_init__(self):
        for name in ("s0_x_cm", "s0_x_rel", "s0_p_cm", "s0_p_rel"):
            if not getattr(self, name) >= 0:
                raise InvalidParameterError(f"{name} must be >= 0")

    def is_degenerate(self) -> bool:
        return self.s0_x_cm == 0 and self.s0_x_rel == 0 and self.s0_p_cm == 0 and self.s0_p_rel == 0


@dataclass(frozen=True, eq=False)
class SlitPairState:
    """Post-grating state: slit-pair coefficients plus intra-slit parameters.

    ``coeffs[i, j]`` multiplies the pair (n_i, n'_j) with n from
    ``grating.slit_indices``. ``sigma_rel_eff = inf`` means the intra-slit
    wavefunction carries no position correlation (a product of slit boxes).
    ``norm`` is the sum of squared coefficients before normalization.
    """

    grating: GratingSpec
    coeffs: np.ndarray
    sigma_rel_eff: float
    xi_rel: complex = 1.0 + 0.0j
    norm: float = 1.0
    mass: float = 1.0
    hbar: float = HBAR
    _pair_norm2: float = field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex if np.iscomplexobj(self.coeffs) else float)
        n = self.grating.n_slits
        if c.shape != (n, n):
            raise InvalidParameterError(f"coeffs must be {n}x{n}, got {c.shape}")
        total = float(np.sum(np.abs(c) ** 2))
        if abs(total - 1.0) > 1e-12:
            raise InvalidParameterError(f"coefficients not normalized: sum |c|^2 = {total!r}")
        if not self.sigma_rel_eff > 0:
            raise InvalidParameterError("sigma_rel_eff must be positive (inf allowed)")
        if not self.norm > 0:
            raise InvalidParameterError("norm must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "xi_rel", complex(self.xi_rel))
        object.__setattr__(self, "_pair_norm2", _pair_norm2(self.grating.a, self.sigma_rel_eff, self.xi_rel))

    @property
    def weights(self) -> np.ndarray:
        """Slit-pair probabilities |c_nn'|^2."""
        return np.abs(self.coeffs) ** 2

    @property
    def correlated(self) -> bool:
        return math.isfinite(self.sigma_rel_eff)


@dataclass(frozen=True)
class SetupDiagnostics:
    slit_correlation_ratio: float
    illumination_ratio: float
    t_max: float
    neighbor_suppression: float
    margin_decrease: float
    conditions_met: bool
    warnings: tuple = ()


@dataclass(frozen=True)
class DisplacedDiagnostics:
    x_cm_T: float
    x_rel_T: float
    n_rel_T: int
    xbar_rel_T: float
    r1_ratio: float
    r2_ratio: float
    r1_ok: bool
    r2_ok: bool
    r3_ok: bool
    effective_order: int
    fringe_phase: float
    warnings: tuple = ()

    @property
    def conditions_met(self) -> bool:
        return self.r1_ok and self.r2_ok and self.r3_ok


# ---------------------------------------------------------------------------
# free propagation and setup conditions


def dispersion_factors(src: EprSource, t: float = None, hbar: float = HBAR):
    """Complex dispersion factors (xi_cm, xi_rel) after flight time ``t``.

    Defaults to ``src.t_grating``.
    """
    t = src.t_grating if t is None else t
    if t < 0:
        raise InvalidParameterError("time must be >= 0")
    xi_cm = complex(1.0, hbar * t / (4.0 * src.sigma_x_cm**2 * src.mass))
    xi_rel = complex(1.0, hbar * t / (src.sigma_x_rel**2 * src.mass))
    return xi_cm, xi_rel


def max_propagation_time(src: EprSource, hbar: float = HBAR) -> float:
    """Longest source-to-grating time keeping the relative spread bounded."""
    return src.sigma_x_rel**2 * src.mass / hbar


def validate_setup(src: EprSource, g: GratingSpec, hbar: float = HBAR) -> SetupDiagnostics:
    """Check slit correlation and uniform illumination at the grating time.

    Thresholds (slit ratio >= 5, illumination ratio >= 1) produce warnings in
    the diagnostics, never exceptions.
    """
    xi_cm, xi_rel = dispersion_factors(src, hbar=hbar)
    w_rel = src.sigma_x_rel * abs(xi_rel)
    w_cm = src.sigma_x_cm * abs(xi_cm)
    slit_ratio = g.d / w_rel
    illum_ratio = w_cm / g.extent
    notes = []
    if slit_ratio < SLIT_RATIO_MIN:
        notes.append(f"slit correlation weak: d/(sigma_rel|xi_rel|) = {slit_ratio:.3g} < {SLIT_RATIO_MIN:g}")
    if illum_ratio < ILLUMINATION_RATIO_MIN:
        notes.append(f"non-uniform illumination: sigma_cm|xi_cm|/(N d) = {illum_ratio:.3g} < {ILLUMINATION_RATIO_MIN:g}")
    t_max = max_propagation_time(src, hbar)
    if src.t_grating > t_max:
        notes.append(f"flight time {src.t_grating:.3g} exceeds T_max = {t_max:.3g}")
    return SetupDiagnostics(
        slit_correlation_ratio=slit_ratio,
        illumination_ratio=illum_ratio,
        t_max=t_max,
        neighbor_suppression=math.exp(-((g.d / (2.0 * w_rel)) ** 2)),
        margin_decrease=1.0 - math.exp(-((g.extent / (4.0 * w_cm)) ** 2)),
        conditions_met=bool(slit_ratio >= SLIT_RATIO_MIN and illum_ratio >= ILLUMINATION_RATIO_MIN),
        warnings=tuple(notes),
    )


def displaced_arrays(src: EprSource, g: GratingSpec, x_cm0, x_rel0, p_cm0, p_rel0, hbar: float = HBAR):
    """Vectorized classical displacement bookkeeping for many offsets.

    Returns a dict of arrays: x_cm_T, x_rel_T, n_rel_T, xbar_rel_T,
    effective_order, fringe_phase and the boolean r1/r2/r3 flags.
    """
    t = src.t_grating
    m = src.mass
    x_cm_T = np.asarray(x_cm0, dtype=float) + np.asarray(p_cm0, dtype=float) * t / (2.0 * m)
    x_rel_T = np.asarray(x_rel0, dtype=float) + 2.0 * np.asarray(p_rel0, dtype=float) * t / m
    n_rel = integer_part(x_rel_T, g.d)
    xbar = modular_part(x_rel_T, g.d)
    xi_cm, _ = dispersion_factors(src, hbar=hbar)
    h = 2.0 * math.pi * hbar
    phase = -np.asarray(p_cm0, dtype=float) * g.d / (h * abs(xi_cm) ** 2)
    return {
        "x_cm_T": x_cm_T,
        "x_rel_T": x_rel_T,
        "n_rel_T": n_rel,
        "xbar_rel_T": xbar,
        "r1_ratio": np.abs(x_cm_T) / g.extent,
        "r2_ratio": np.abs(n_rel) / g.n_slits,
        "r1_ok": np.abs(x_cm_T) / g.extent <= R1_MAX,
        "r2_ok": np.abs(n_rel) / g.n_slits <= R2_MAX,
        "r3_ok": np.abs(xbar) < 0.5 * g.a,
        "effective_order": np.maximum(g.n_slits - np.abs(n_rel), 0),
        "fringe_phase": phase,
    }


def validate_displaced(src: EprSource, g: GratingSpec, disp: Displacement, hbar: float = HBAR) -> DisplacedDiagnostics:
    """Conditions for a displaced EPR pair to still give N'-slit interference.

    r1: |x_cm(T)| / (N d) <= 0.2; r2: |N_x,rel(T)| / N <= 0.2 (both policy
    thresholds for "much smaller than"); r3: |xbar_rel(T)| < a/2, otherwise
    the pair is blocked by the gratings. The fringe pattern of the displaced
    pair is F_{N'} shifted by ``fringe_phase`` radians.
    """
    r = displaced_arrays(src, g, disp.x_cm0, disp.x_rel0, disp.p_cm0, disp.p_rel0, hbar)
    dec = decompose_position(float(r["x_rel_T"]), _frame_for(g))
    notes = []
    if not r["r1_ok"]:
        notes.append(f"center-of-mass offset {float(r['x_cm_T']):.3g} not small against N d (policy 0.2)")
    if not r["r2_ok"]:
        notes.append(f"relative slit offset {dec.integer_part} not small against N (policy 0.2)")
    if not r["r3_ok"]:
        notes.append(f"modular relative offset {dec.modular_part:.3g} >= a/2: pair blocked by the gratings")
    return DisplacedDiagnostics(
        x_cm_T=float(r["x_cm_T"]),
        x_rel_T=float(r["x_rel_T"]),
        n_rel_T=dec.integer_part,
        xbar_rel_T=dec.modular_part,
        r1_ratio=float(r["r1_ratio"]),
        r2_ratio=float(r["r2_ratio"]),
        r1_ok=bool(r["r1_ok"]),
        r2_ok=bool(r["r2_ok"]),
        r3_ok=bool(r["r3_ok"]),
        effective_order=int(r["effective_order"]),
        fringe_phase=float(r["fringe_phase"]),
        warnings=tuple(notes),
    )


def _frame_for(g):
    from .modular import ModularFrame

    return ModularFrame(d=g.d)


# ---------------------------------------------------------------------------
# state construction


def build_mme_state(g: GratingSpec, src: EprSource, hbar: float = HBAR) -> SlitPairState:
    """Ideal modular-momentum-entangled state: equal-weight opposite slit pairs."""
    diag = validate_setup(src, g, hbar)
    for note in diag.warnings:
        warnings.warn(note, SetupWarning, stacklevel=2)
    _, xi_rel = dispersion_factors(src, hbar=hbar)
    n = g.n_slits
    return SlitPairState(
        grating=g,
        coeffs=np.eye(n) / math.sqrt(n),
        sigma_rel_eff=src.sigma_x_rel,
        xi_rel=xi_rel,
        norm=float(n),
        mass=src.mass,
        hbar=hbar,
    )


def suboptimal_weights(g: GratingSpec, src: EprSource, hbar: float = HBAR) -> np.ndarray:
    """Unnormalized Gaussian slit-pair weights of a finite EPR source."""
    xi_cm, xi_rel = dispersion_factors(src, hbar=hbar)
    n = g.slit_indices
    s = (n[:, None] + n[None, :]) * g.d
    r = (n[:, None] - n[None, :]) * g.d
    return np.exp(
        -(s**2) / (16.0 * src.sigma_x_cm**2 * abs(xi_cm) ** 2)
        - r**2 / (4.0 * src.sigma_x_rel**2 * abs(xi_rel) ** 2)
    )


def build_suboptimal_state(g: GratingSpec, src: EprSource, hbar: float = HBAR) -> SlitPairState:
    """Post-grating state of a finite EPR source without the MME approximation.

    Slit pairs keep their Gaussian weights in (n + n') d and (n - n') d. The
    quadratic phases picked up during flight are dropped, so the flight time
    must not exceed :func:`max_propagation_time`.

    Raises
    ------
    PreconditionError
        If ``src.t_grating`` exceeds T_max.
    """
    t_max = max_propagation_time(src, hbar)
    if src.t_grating > t_max:
        raise PreconditionError(
            f"t_grating={src.t_grating:.4g} exceeds T_max={t_max:.4g}: flight phases are not modeled"
        )
    c = suboptimal_weights(g, src, hbar)
    total = float(np.sum(c**2))
    _, xi_rel = dispersion_factors(src, hbar=hbar)
    return SlitPairState(
        grating=g,
        coeffs=c / math.sqrt(total),
        sigma_rel_eff=src.sigma_x_rel,
        xi_rel=xi_rel,
        norm=total,
        mass=src.mass,
        hbar=hbar,
    )


def build_separable_state(g: GratingSpec, mass: float = 1.0, hbar: float = HBAR) -> SlitPairState:
    """Product of two independent N-slit single-particle states."""
    n = g.n_slits
    return SlitPairState(
        grating=g,
        coeffs=np.full((n, n), 1.0 / n),
        sigma_rel_eff=math.inf,
        xi_rel=1.0,
        norm=float(n * n),
        mass=mass,
        hbar=hbar,
    )


# ---------------------------------------------------------------------------
# position space


def _pair_norm2(a, sigma, xi):
    """Integral of |Psi_s|^2 over the slit box [-a/2, a/2]^2."""
    if not math.isfinite(sigma):
        return a * a
    kappa = (1.0 / complex(xi)).real / (2.0 * sigma * sigma)
    if kappa * a * a < 1e-10:
        return a * a * (1.0 - kappa * a * a / 6.0)
    rk = math.sqrt(kappa)
    # 2 * int_0^a (a - y) exp(-kappa y^2) dy
    return 2.0 * (a * math.sqrt(math.pi) * erf(rk * a) / (2.0 * rk) - (1.0 - math.exp(-kappa * a * a)) / (2.0 * kappa))


def _pair_gauss(state: SlitPairState, y):
    if not state.correlated:
        return np.ones(np.shape(y), dtype=complex)
    return np.exp(-np.asarray(y) ** 2 / (4.0 * state.sigma_rel_eff**2 * state.xi_rel))


def intra_slit_density(state: SlitPairState, x1, x2):
    """Normalized |Psi_s(x1, x2)|^2 for one slit pair centered at the origin."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    half = 0.5 * state.grating.a * (1.0 + 1e-12)  # tolerate round-off at the slit edges
    inside = (np.abs(x1) <= half) & (np.abs(x2) <= half)
    val = np.abs(_pair_gauss(state, x1 - x2)) ** 2 / state._pair_norm2
    return np.where(inside, val, 0.0)


def position_density(state: SlitPairState, x1, x2):
    """Joint position density just behind the gratings.

    Slits do not overlap (a < d), so the density is the weighted sum of
    disjoint translated copies of |Psi_s|^2.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    g = state.grating
    n = g.slit_indices
    # nearest slit center on each side
    i1 = np.clip(np.rint(x1 / g.d - n[0]).astype(int), 0, g.n_slits - 1)
    i2 = np.clip(np.rint(x2 / g.d - n[0]).astype(int), 0, g.n_slits - 1)
    w = state.weights[i1, i2]
    return w * intra_slit_density(state, x1 - n[i1] * g.d, x2 - n[i2] * g.d)


# ---------------------------------------------------------------------------
# momentum space


def _phi_prefactor(state):
    return 1.0 / (2.0 * math.pi * state.hbar * math.sqrt(state._pair_norm2))


def envelope_amplitude(state: SlitPairState, p1, p2, n_points: int = 2001, chunk: int = 2048):
    """Normalized momentum wavefunction of a single slit pair, by convolution.

    Evaluates the convolution of the two single-slit sinc amplitudes with the
    momentum-space Gaussian of the relative motion,

        int dk g~(k) chi~(p1 - k) chi~(p2 + k),

    written in the variable t = 2k. The Gaussian confines the integrand to
    |t| <= 16 hbar / sigma (e^-64 cutoff); composite Simpson with ``n_points``
    nodes. The result is normalized so that |amplitude|^2 integrates to 1 over
    the whole (p1, p2) plane.
    """
    p1, p2 = np.broadcast_arrays(np.asarray(p1, dtype=float), np.asarray(p2, dtype=float))
    shape = p1.shape
    a = state.grating.a
    hb = state.hbar
    pref = _phi_prefactor(state)
    if not state.correlated:
        out = pref * a * a * sinc(p1 * a / (2 * hb)) * sinc(p2 * a / (2 * hb))
        return np.asarray(out, dtype=complex)

    sig = state.sigma_rel_eff
    xi = state.xi_rel
    grid = GridSpec(-16.0 * hb / sig, 16.0 * hb / sig, n_points).odd()
    t = grid.points()
    wts = simpson_weights(grid)
    gauss = np.sqrt(4.0 * math.pi * sig * sig * xi) * np.exp(-xi * (t * sig / (2.0 * hb)) ** 2) * wts
    f1 = p1.ravel()
    f2 = p2.ravel()
    out = np.empty(f1.size, dtype=complex)
    for lo in range(0, f1.size, chunk):
        q1 = f1[lo : lo + chunk, None]
        q2 = f2[lo : lo + chunk, None]
        s = sinc((2.0 * q1 + t) * a / (4.0 * hb)) * sinc((2.0 * q2 - t) * a / (4.0 * hb))
        out[lo : lo + chunk] = (s * gauss).sum(axis=1)
    out *= 0.5 * a * a * pref / (2.0 * math.pi * hb)
    return out.reshape(shape)


def _gl_nodes(state, pmax, nodes=None):
    a = state.grating.a
    if nodes is None:
        nodes = 64
        if state.correlated:
            nodes = max(nodes, int(6.0 * a / state.sigma_rel_eff) + 16)
        nodes = max(nodes, int(pmax * a / (2.0 * state.hbar)) + 24)
        nodes = min(nodes, 1024)
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * a * x, 0.5 * a * w


def _gl_pieces(state, p1, p2, nodes):
    pmax = float(max(np.max(np.abs(p1), initial=0.0), np.max(np.abs(p2), initial=0.0)))
    x, w = _gl_nodes(state, pmax, nodes)
    G = _pair_gauss(state, x[:, None] - x[None, :])
    return x, w, G


def envelope_points(state: SlitPairState, p1, p2, nodes: int = None):
    """Same quantity as :func:`envelope_amplitude`, by Gauss-Legendre quadrature
    of the position-space Fourier integral over the slit box."""
    p1, p2 = np.broadcast_arrays(np.asarray(p1, dtype=float), np.asarray(p2, dtype=float))
    shape = p1.shape
    f1, f2 = p1.ravel(), p2.ravel()
    x, w, G = _gl_pieces(state, f1, f2, nodes)
    hb = state.hbar
    E1 = w[None, :] * np.exp(-1j * f1[:, None] * x[None, :] / hb)
    E2 = w[None, :] * np.exp(-1j * f2[:, None] * x[None, :] / hb)
    H = E2 @ G.T
    out = np.sum(E1 * H, axis=1) * _phi_prefactor(state)
    return out.reshape(shape)


def envelope_grid(state: SlitPairState, axis1, axis2=None, nodes: int = None):
    """Envelope amplitude on the tensor grid axis1 x axis2 (matrix form)."""
    axis1 = np.asarray(axis1, dtype=float)
    axis2 = axis1 if axis2 is None else np.asarray(axis2, dtype=float)
    x, w, G = _gl_pieces(state, axis1, axis2, nodes)
    hb = state.hbar
    E1 = w[None, :] * np.exp(-1j * axis1[:, None] * x[None, :] / hb)
    E2 = w[None, :] * np.exp(-1j * axis2[:, None] * x[None, :] / hb)
    return (E1 @ G @ E2.T) * _phi_prefactor(state)


def _phase_matrix(state, p):
    g = state.grating
    return np.exp(-1j * np.asarray(p, dtype=float)[..., None] * g.slit_indices * g.d / state.hbar)


def interference_factor(state: SlitPairState, p1, p2, phase: float = 0.0):
    """Slit-pair phase sum  sum_nn' c_nn' exp(-i (p1 n + p2 n') d / hbar).

    ``phase`` shifts the fringe pattern F(xi) -> F(xi + phase / 2pi) by
    evaluating both momenta at p + phase * hbar / (2 d).
    """
    p1, p2 = np.broadcast_arrays(np.asarray(p1, dtype=float), np.asarray(p2, dtype=float))
    delta = 0.5 * phase * state.hbar / state.grating.d
    E1 = _phase_matrix(state, p1.ravel() + delta)
    E2 = _phase_matrix(state, p2.ravel() + delta)
    out = np.sum((E1 @ state.coeffs) * E2, axis=1)
    return out.reshape(p1.shape)


def interference_grid(state: SlitPairState, axis, phase: float = 0.0):
    delta = 0.5 * phase * state.hbar / state.grating.d
    E = _phase_matrix(state, np.asarray(axis, dtype=float) + delta)
    return E @ state.coeffs @ E.T


def momentum_amplitude(state: SlitPairState, p1, p2, phase: float = 0.0, fast: bool = False):
    """Two-particle momentum wavefunction behind the gratings.

    Phase sum over slit pairs times the single-pair envelope. ``fast=True``
    uses the Gauss-Legendre envelope instead of the convolution quadrature.
    """
    env = envelope_points(state, p1, p2) if fast else envelope_amplitude(state, p1, p2)
    return interference_factor(state, p1, p2, phase) * env


def momentum_axis(period: float, grid_per_cell: int, n_cells: int):
    """Cell-aligned momentum axis for folding.

    Covers ``n_cells`` whole modular cells centered on the origin (an even
    count is rounded up to the next odd one) with ``grid_per_cell`` midpoints
    per cell. Cell edges fall exactly between grid points.

    Returns
    -------
    axis : np.ndarray
    step : float
    n_cells : int
        The odd cell count actually used.
    """
    if grid_per_cell < 2 or n_cells < 1:
        raise InvalidParameterError("need grid_per_cell >= 2 and n_cells >= 1")
    n_cells = int(n_cells) | 1
    step = period / grid_per_cell
    m = grid_per_cell * n_cells
    half = 0.5 * n_cells * period
    return -half + step * (np.arange(m) + 0.5), step, n_cells


def iter_momentum_density(
    state: SlitPairState, axis, block_rows: int, admixture_w: float = 0.0, phase: float = 0.0
):
    """Joint momentum density on axis x axis, yielded in bands of rows.

    Yields ``(start, block)`` with ``block`` covering rows
    ``start:start + block_rows`` and all columns. The quadrature nodes are
    fixed by the whole axis, so the bands tile :func:`momentum_density_grid`
    exactly while only one band is held in memory.
    """
    if not 0.0 <= admixture_w <= 1.0:
        raise InvalidParameterError("admixture weight must lie in [0, 1]")
    if block_rows < 1:
        raise InvalidParameterError("block_rows must be >= 1")
    axis = np.asarray(axis, dtype=float)
    hb = state.hbar
    x, w, G = _gl_pieces(state, axis, axis, None)
    right = G @ (w[None, :] * np.exp(-1j * axis[:, None] * x[None, :] / hb)).T * _phi_prefactor(state)
    delta = 0.5 * phase * hb / state.grating.d
    ph_right = state.coeffs @ _phase_matrix(state, axis + delta).T
    for start in range(0, axis.size, block_rows):
        rows = axis[start : start + block_rows]
        E1 = w[None, :] * np.exp(-1j * rows[:, None] * x[None, :] / hb)
        env2 = np.abs(E1 @ right) ** 2
        if admixture_w == 1.0:
            yield start, env2
            continue
        fr = np.abs(_phase_matrix(state, rows + delta) @ ph_right) ** 2
        yield start, env2 * ((1.0 - admixture_w) * fr + admixture_w)


def momentum_density_grid(state: SlitPairState, axis, admixture_w: float = 0.0, phase: float = 0.0):
    """Joint momentum density on axis x axis.

    ``admixture_w`` mixes in the slit-pair dephased state (same envelope, no
    interference term); ``phase`` shifts the fringes as in
    :func:`interference_factor`. Normalized over the whole plane, so the grid
    sum times the cell area is the enclosed probability.
    """
    axis = np.asarray(axis, dtype=float)
    return np.vstack([b for _, b in iter_momentum_density(state, axis, max(axis.size, 1), admixture_w, phase)])


def far_field_map(x, mass: float, t2: float):
    """Screen position to effective momentum, p = m x / T2."""
    if not t2 > 0:
        raise InvalidParameterError("T2 must be positive")
    return mass * np.asarray(x, dtype=float) / t2


def screen_coordinate(p, mass: float, t2: float):
    """Inverse of :func:`far_field_map`."""
    if not t2 > 0:
        raise InvalidParameterError("T2 must be positive")
    return np.asarray(p, dtype=float) * t2 / mass


def far_field_valid(g: GratingSpec, mass: float, t2: float, hbar: float = HBAR) -> bool:
    """Dispersion-dominated regime: T2 >= 10 m N^2 d^2 / hbar."""
    return bool(t2 >= FAR_FIELD_FACTOR * mass * g.n_slits**2 * g.d**2 / hbar)
