"""Seeded Monte Carlo generation of coincidence events.

Near-field events are particle positions directly behind the gratings; far
field events are effective momenta (or screen positions). Every batch of
``CHUNK_SIZE`` events draws from its own generator, derived from
``(seed, stream, chunk)``, so output does not depend on the worker count.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from .errors import CoverageError, DegenerateEnsembleError, InvalidParameterError
from .modular import ModularFrame, fringe_function
from .states import (
    Displacement,
    EprSource,
    GratingSpec,
    SetupWarning,
    SlitPairState,
    SourceEnsemble,
    build_mme_state,
    displaced_arrays,
    intra_slit_density,
    momentum_axis,
    momentum_density_grid,
    screen_coordinate,
)

log = logging.getLogger(__name__)

__all__ = [
    "CHUNK_SIZE",
    "EventRecord",
    "EventBatch",
    "SamplerConfig",
    "sample_near",
    "sample_far",
    "sample_ensemble",
]

CHUNK_SIZE = 8192
NEAR_PIXELS = 256
STREAM_NEAR = 0
STREAM_FAR = 1
STREAM_ENSEMBLE = 2
MAX_REJECTION = 0.9


class EventRecord(NamedTuple):
    plane: str
    u1: float
    u2: float
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class EventBatch:
    """Columnar block of events of one detection plane.

    ``far_t2`` and ``mass`` are set when far-field coordinates are screen
    positions rather than momenta.
    """

    plane: str
    u1: np.ndarray
    u2: np.ndarray
    weight: np.ndarray = None
    seed: Optional[int] = None
    far_t2: Optional[float] = None
    mass: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.plane not in ("near", "far"):
            raise InvalidParameterError(f"plane must be 'near' or 'far', got {self.plane!r}")
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        if u1.shape != u2.shape or u1.ndim != 1:
            raise InvalidParameterError("u1 and u2 must be 1-d arrays of equal length")
        w = np.ones_like(u1) if self.weight is None else np.asarray(self.weight, dtype=float)
        if w.shape != u1.shape:
            raise InvalidParameterError("weight length mismatch")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2))):
            raise InvalidParameterError("event coordinates must be finite")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "weight", w)

    def __len__(self):
        return self.u1.size

    @property
    def screen(self) -> bool:
        return self.plane == "far" and self.far_t2 is not None

    def records(self):
        """Iterate as :class:`EventRecord` tuples."""
        for a, b, w in zip(self.u1.tolist(), self.u2.tolist(), self.weight.tolist()):
            yield EventRecord(self.plane, a, b, w)

    def momenta(self):
        """Far-field coordinates as momenta, converting screen positions."""
        if self.plane != "far":
            raise InvalidParameterError("momenta are only defined for far-field events")
        if self.far_t2 is None:
            return self.u1, self.u2
        return self.mass * self.u1 / self.far_t2, self.mass * self.u2 / self.far_t2

    def subset(self, idx) -> "EventBatch":
        return EventBatch(self.plane, self.u1[idx], self.u2[idx], self.weight[idx], self.seed, self.far_t2, self.mass)


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    n_events: int = 10_000
    admixture_w: float = 0.0
    phase_shift: float = 0.0
    ensemble: Optional[SourceEnsemble] = None
    far_t2: Optional[float] = None
    grid_per_cell: int = 64
    n_cells: int = 24
    min_coverage: float = 0.8

    def __post_init__(self):
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if int(self.n_events) != self.n_events or self.n_events < 1:
            raise InvalidParameterError("n_events must be a positive integer")
        if not 0.0 <= self.admixture_w <= 1.0:
            raise InvalidParameterError("admixture_w must lie in [0, 1]")
        if not math.isfinite(self.phase_shift):
            raise InvalidParameterError("phase_shift must be finite")
        if self.far_t2 is not None and not self.far_t2 > 0:
            raise InvalidParameterError("far_t2 must be positive")


def _rng(seed, stream, chunk):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(stream, chunk))))


def _chunks(n_events):
    return [(i, min(CHUNK_SIZE, n_events - i * CHUNK_SIZE)) for i in range(-(-n_events // CHUNK_SIZE))]


def _run(fn, n_events, jobs):
    parts = _chunks(n_events)
    if jobs is None or jobs <= 1 or len(parts) == 1:
        out = [fn(c, k) for c, k in parts]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(lambda ck: fn(*ck), parts))
    return out


class _Table:
    """Inverse-CDF table over a regular 2-d pixel grid."""

    def __init__(self, density, x0, step):
        flat = np.ascontiguousarray(density, dtype=float).ravel()
        cdf = np.cumsum(flat)
        if not cdf[-1] > 0:
            raise CoverageError("density table has no mass")
        self.mass = float(cdf[-1])
        self.cdf = cdf / cdf[-1]
        self.n = density.shape[1]
        self.x0 = x0
        self.step = step

    def draw(self, rng, k):
        u = rng.random(k)
        jit = rng.random((k, 2))
        idx = np.minimum(np.searchsorted(self.cdf, u, side="right"), self.cdf.size - 1)
        i, j = np.divmod(idx, self.n)
        x1 = self.x0 + self.step * (i + jit[:, 0])
        x2 = self.x0 + self.step * (j + jit[:, 1])
        return x1, x2


@lru_cache(maxsize=4)
def _near_table(state):
    a = state.grating.a
    step = a / NEAR_PIXELS
    c = -0.5 * a + step * (np.arange(NEAR_PIXELS) + 0.5)
    dens = intra_slit_density(state, c[:, None], c[None, :])
    return _Table(dens, -0.5 * a, step)


@lru_cache(maxsize=4)
def _far_tables(state, grid_per_cell, n_cells, phase, min_coverage):
    period = 2.0 * math.pi * state.hbar / state.grating.d
    axis, step, n_used = momentum_axis(period, grid_per_cell, n_cells)
    coherent = momentum_density_grid(state, axis, phase=phase)
    envelope = momentum_density_grid(state, axis, admixture_w=1.0)
    coverage = float(coherent.sum()) * step * step
    if coverage < min_coverage:
        raise CoverageError(f"far-field grid encloses {coverage:.4f} of the probability (< {min_coverage})")
    x0 = axis[0] - 0.5 * step
    return _Table(coherent, x0, step), _Table(envelope, x0, step), coverage


def sample_near(state: SlitPairState, cfg: SamplerConfig, jobs: int = 1) -> EventBatch:
    """Positions directly behind the gratings.

    A slit pair is drawn with probability |c_nn'|^2, then the positions inside
    the pair from the intra-slit density (256 x 256 pixel inverse CDF with
    uniform jitter). The classical admixture only removes coherence between
    slit pairs, so ``cfg.admixture_w`` does not change near-field statistics.
    """
    g = state.grating
    pair_cdf = np.cumsum(state.weights.ravel())
    pair_cdf /= pair_cdf[-1]
    idx_n = g.slit_indices
    table = _near_table(state)

    def chunk(c, k):
        rng = _rng(cfg.seed, STREAM_NEAR, c)
        pair = np.minimum(np.searchsorted(pair_cdf, rng.random(k), side="right"), pair_cdf.size - 1)
        i, j = np.divmod(pair, g.n_slits)
        y1, y2 = table.draw(rng, k)
        return idx_n[i] * g.d + y1, idx_n[j] * g.d + y2

    parts = _run(chunk, cfg.n_events, jobs)
    return EventBatch("near", np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]), seed=cfg.seed)


def _far_output(p1, p2, cfg, mass, diagnostics):
    if cfg.far_t2 is not None:
        return EventBatch(
            "far",
            screen_coordinate(p1, mass, cfg.far_t2),
            screen_coordinate(p2, mass, cfg.far_t2),
            seed=cfg.seed,
            far_t2=cfg.far_t2,
            mass=mass,
            diagnostics=diagnostics,
        )
    return EventBatch("far", p1, p2, seed=cfg.seed, diagnostics=diagnostics)


def sample_far(state: SlitPairState, cfg: SamplerConfig, frame: ModularFrame = None, jobs: int = 1) -> EventBatch:
    """Far-field momenta from the tabulated joint density.

    Each event picks the classical component with probability
    ``cfg.admixture_w`` (envelope only) or the coherent component (envelope
    times fringes, shifted by ``cfg.phase_shift``). Both tables use the same
    cell-aligned grid as :func:`observables.numeric_variance_ptot`.
    """
    if frame is not None and not math.isclose(frame.momentum_period, 2.0 * math.pi * state.hbar / state.grating.d):
        raise InvalidParameterError("frame does not match the state")
    coherent, envelope, coverage = _far_tables(
        state, cfg.grid_per_cell, cfg.n_cells, float(cfg.phase_shift), cfg.min_coverage
    )
    w = cfg.admixture_w

    def chunk(c, k):
        rng = _rng(cfg.seed, STREAM_FAR, c)
        classical = rng.random(k) < w
        a1, a2 = coherent.draw(rng, k)
        b1, b2 = envelope.draw(rng, k)
        return np.where(classical, b1, a1), np.where(classical, b2, a2)

    parts = _run(chunk, cfg.n_events, jobs)
    p1 = np.concatenate([p[0] for p in parts])
    p2 = np.concatenate([p[1] for p in parts])
    return _far_output(p1, p2, cfg, state.mass, {"coverage": coverage})


def sample_ensemble(
    src: EprSource,
    g: GratingSpec,
    ens: SourceEnsemble,
    cfg: SamplerConfig,
    frame: ModularFrame = None,
    center: Displacement = None,
    jobs: int = 1,
) -> EventBatch:
    """Far-field events from a Gaussian ensemble of displaced EPR pairs.

    Per event a displacement is drawn around ``center``. Pairs whose modular
    relative offset exceeds a/2 are blocked by the gratings and redrawn (the
    fraction is reported in ``diagnostics``). Accepted pairs interfere with
    order N' = N - |N_x,rel| and a fringe phase set by their center-of-mass
    momentum; momenta are drawn from the envelope table and kept with
    probability F_N'(xi + phase / 2 pi) / N'.

    With zero widths and no center offset this is exactly :func:`sample_far`
    on the MME state, same stream included.

    Raises
    ------
    DegenerateEnsembleError
        If more than 90% of drawn displacements are blocked.
    """
    center = center or Displacement()
    hbar = frame.hbar if frame is not None else 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SetupWarning)
        state = build_mme_state(g, src, hbar=hbar)
    if ens.is_degenerate() and center.is_zero():
        return sample_far(state, cfg, frame, jobs)

    _, envelope, coverage = _far_tables(state, cfg.grid_per_cell, cfg.n_cells, 0.0, cfg.min_coverage)
    mu = np.array([center.x_cm0, center.x_rel0, center.p_cm0, center.p_rel0])
    sd = np.array([ens.s0_x_cm, ens.s0_x_rel, ens.s0_p_cm, ens.s0_p_rel])
    period_inv = g.d / (2.0 * math.pi * hbar)
    w = cfg.admixture_w

    def accept_prob(order, xi):
        out = np.ones_like(xi)
        for n_ord in np.unique(order):
            if n_ord > 1:
                sel = order == n_ord
                out[sel] = fringe_function(int(n_ord), xi[sel]) / n_ord
        return out

    def chunk(c, k):
        rng = _rng(cfg.seed, STREAM_ENSEMBLE, c)
        p1 = np.empty(k)
        p2 = np.empty(k)
        filled = 0
        stats = np.zeros(5)  # drawn, blocked, r1 pass, r2 pass, fringe proposals
        while filled < k:
            need = k - filled
            gam = mu + sd * rng.standard_normal((need, 4))
            r = displaced_arrays(src, g, gam[:, 0], gam[:, 1], gam[:, 2], gam[:, 3], hbar)
            ok = r["r3_ok"] & (r["effective_order"] > 0)
            stats[0] += need
            stats[1] += need - int(ok.sum())
            stats[2] += int(r["r1_ok"].sum())
            stats[3] += int(r["r2_ok"].sum())
            order = r["effective_order"][ok]
            phase = r["fringe_phase"][ok] + cfg.phase_shift
            m = order.size
            if m == 0:
                if stats[1] > MAX_REJECTION * stats[0] and stats[0] >= 1000:
                    break
                continue
            classical = rng.random(m) < w
            done = np.zeros(m, dtype=bool)
            q1 = np.empty(m)
            q2 = np.empty(m)
            while not done.all():
                todo = np.flatnonzero(~done)
                a1, a2 = envelope.draw(rng, todo.size)
                stats[4] += todo.size
                xi = (a1 + a2) * period_inv + phase[todo] / (2.0 * math.pi)
                keep = classical[todo] | (rng.random(todo.size) < accept_prob(order[todo], xi))
                sel = todo[keep]
                q1[sel] = a1[keep]
                q2[sel] = a2[keep]
                done[sel] = True
            p1[filled : filled + m] = q1
            p2[filled : filled + m] = q2
            filled += m
        return p1[:filled], p2[:filled], stats

    parts = _run(chunk, cfg.n_events, jobs)
    stats = np.sum([p[2] for p in parts], axis=0)
    rejection = stats[1] / stats[0]
    if rejection > MAX_REJECTION or sum(p[0].size for p in parts) < cfg.n_events:
        raise DegenerateEnsembleError(f"{rejection:.1%} of drawn displacements are blocked by the gratings")
    diag = {
        "coverage": coverage,
        "n_drawn": int(stats[0]),
        "n_blocked": int(stats[1]),
        "rejection_fraction": float(rejection),
        "r1_pass_rate": float(stats[2] / stats[0]),
        "r2_pass_rate": float(stats[3] / stats[0]),
        "fringe_acceptance": float(cfg.n_events / stats[4]),
    }
    for key in ("r1_pass_rate", "r2_pass_rate"):
        if diag[key] < 0.5:
            warnings.warn(f"ensemble {key} = {diag[key]:.2f} < 0.5", SetupWarning, stacklevel=2)
    p1 = np.concatenate([p[0] for p in parts])
    p2 = np.concatenate([p[1] for p in parts])
    return _far_output(p1, p2, cfg, src.mass, diag)
