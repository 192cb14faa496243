"""Command-line interface.

Subcommands: validate, pattern, sample, analyze, sweep, constants and
emit-config. Exit status is 0 on success, 1 for usage or configuration
errors, 2 for numerical failures and 3 for I/O or event-format problems.
"""

import argparse
import json
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import analyze_events, fringe_histogram
from .errors import ConfigError, EPRYoungError
from .io import config_sha, default_config, dump_config, load_config, read_events, write_events, write_table
from .modular import criterion_constant, criterion_threshold, squeezing_s2
from .observables import (
    classical_admixture_threshold,
    critical_sigma_cm,
    critical_sigma_rel,
    criterion_lhs_suboptimal,
    extended_source_variance_ptot,
    ideal_variance_ptot,
    ideal_variance_ptot_shifted,
    mixture_variance_ptot,
    separable_admixture_threshold,
    separable_admixture_threshold_numeric,
)
from .sampler import sample_ensemble, sample_far, sample_near
from .states import (
    GratingSpec,
    SetupWarning,
    SourceEnsemble,
    build_mme_state,
    build_separable_state,
    build_suboptimal_state,
    dispersion_factors,
    momentum_axis,
    momentum_density_grid,
    position_density,
    validate_displaced,
    validate_setup,
)

log = logging.getLogger("epryoung")

TABLE1_N = (2, 3, 4, 5, 10, 20, 30)
SWEEP_PARAMS = ("sigma_rel", "sigma_cm", "w", "phi", "s0_p_cm", "N")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_jobs():
    try:
        return max(1, int(os.environ.get("EPRYOUNG_JOBS", "1")))
    except ValueError:
        return 1


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else default_config()
    samp = cfg.sampler
    if getattr(args, "seed", None) is not None:
        samp = replace(samp, seed=args.seed)
    if getattr(args, "n_events", None) is not None:
        samp = replace(samp, n_events=args.n_events)
    return replace(cfg, sampler=samp) if samp is not cfg.sampler else cfg


def _state(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SetupWarning)
        if cfg.state == "mme":
            return build_mme_state(cfg.grating, cfg.source, cfg.hbar)
        if cfg.state == "suboptimal":
            return build_suboptimal_state(cfg.grating, cfg.source, cfg.hbar)
        return build_separable_state(cfg.grating, cfg.source.mass, cfg.hbar)


def _emit(obj, stream=None):
    (stream or sys.stdout).write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------


def cmd_validate(args):
    cfg = _config(args)
    diag = validate_setup(cfg.source, cfg.grating, cfg.hbar)
    print(f"slit correlation ratio   d/(sigma_rel|xi_rel|) = {diag.slit_correlation_ratio:.4g}  (>= 5)")
    print(f"illumination ratio       sigma_cm|xi_cm|/(N d) = {diag.illumination_ratio:.4g}  (>= 1)")
    print(f"T_max                    = {diag.t_max:.4g}  (T = {cfg.source.t_grating:.4g})")
    print(f"neighbor suppression     = {diag.neighbor_suppression:.4g}")
    print(f"margin amplitude decrease = {diag.margin_decrease:.4g}")
    print(f"conditions_met = {str(diag.conditions_met).lower()}")
    notes = list(diag.warnings)
    if cfg.displacement is not None:
        dd = validate_displaced(cfg.source, cfg.grating, cfg.displacement, cfg.hbar)
        print(f"x_cm(T) = {dd.x_cm_T:.4g}, x_rel(T) = {dd.x_rel_T:.4g} -> N_rel = {dd.n_rel_T}, xbar_rel = {dd.xbar_rel_T:.4g}")
        print(f"r1 |x_cm|/(N d) = {dd.r1_ratio:.3g} ({'ok' if dd.r1_ok else 'fails'}, policy threshold 0.2)")
        print(f"r2 |N_rel|/N = {dd.r2_ratio:.3g} ({'ok' if dd.r2_ok else 'fails'}, policy threshold 0.2)")
        print(f"r3 |xbar_rel| < a/2: {'ok' if dd.r3_ok else 'fails'}")
        print(f"effective order N' = {dd.effective_order}, fringe phase = {dd.fringe_phase:.4g} rad")
        notes += list(dd.warnings)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    return 0


def _antidiagonal_marginal(dens, axis, step):
    # density of u1 + u2 on the grid of pairwise sums (uniform axis)
    n = axis.size
    i = np.add.outer(np.arange(n), np.arange(n))
    marg = np.bincount(i.ravel(), weights=dens.ravel(), minlength=2 * n - 1) * step
    sums = 2.0 * axis[0] + step * np.arange(2 * n - 1)
    return sums, marg


def cmd_pattern(args):
    cfg = _config(args)
    state = _state(cfg)
    sha = config_sha(cfg)
    g = cfg.grating
    period = cfg.frame.momentum_period
    if args.plane == "far":
        axis, step, _ = momentum_axis(period, args.grid, args.cells)
        dens = momentum_density_grid(state, axis, cfg.sampler.admixture_w, cfg.sampler.phase_shift)
        scale = 1.0 / period
        cols = ("p1", "p2", "density")
    else:
        half = 0.5 * g.extent
        step = g.extent / (args.grid * g.n_slits)
        axis = -half + step * (np.arange(args.grid * g.n_slits) + 0.5)
        dens = position_density(state, axis[:, None], axis[None, :])
        scale = 1.0 / g.d
        cols = ("x1", "x2", "density")
    sums, marg = _antidiagonal_marginal(dens, axis, step)
    stride = max(1, args.stride)
    sub = axis[::stride]
    rows = ((a, b, dens[i * stride, j * stride]) for i, a in enumerate(sub) for j, b in enumerate(sub))
    write_table(args.out + ".joint.csv", cols, rows, cfg.sampler.seed, sha)
    keep = np.abs(sums * scale) <= args.extent
    write_table(
        args.out + ".sum.csv",
        ("scaled_sum", cols[0][0] + "_sum", "density"),
        zip(sums[keep] * scale, sums[keep], marg[keep]),
        cfg.sampler.seed,
        sha,
    )
    print(f"wrote {args.out}.joint.csv and {args.out}.sum.csv")
    return 0


def cmd_sample(args):
    cfg = _config(args)
    sha = config_sha(cfg)
    os.makedirs(cfg.output_dir if args.out_dir is None else args.out_dir, exist_ok=True)
    out_dir = cfg.output_dir if args.out_dir is None else args.out_dir
    state = _state(cfg)
    written = []
    if args.plane in ("near", "both"):
        batch = sample_near(state, cfg.sampler, jobs=args.jobs)
        path = os.path.join(out_dir, f"{cfg.prefix}_near.csv")
        write_events(path, batch, sha, cfg.grating, cfg.hbar, cfg.source.mass)
        written.append(path)
    if args.plane in ("far", "both"):
        ens = cfg.ensemble
        disp = cfg.displacement
        if (ens is not None and not ens.is_degenerate()) or (disp is not None and not disp.is_zero()):
            batch = sample_ensemble(
                cfg.source, cfg.grating, ens or SourceEnsemble(), cfg.sampler, cfg.frame, center=disp, jobs=args.jobs
            )
            for k, v in batch.diagnostics.items():
                log.info("ensemble %s = %s", k, v)
        else:
            batch = sample_far(state, cfg.sampler, cfg.frame, jobs=args.jobs)
        path = os.path.join(out_dir, f"{cfg.prefix}_far.csv")
        write_events(path, batch, sha, cfg.grating, cfg.hbar, cfg.source.mass)
        written.append(path)
    for p in written:
        print(p)
    return 0


def cmd_analyze(args):
    near, near_meta = read_events(args.near)
    far, far_meta = read_events(args.far)
    cfg = load_config(args.config) if args.config else None
    grating = cfg.grating if cfg else near_meta.get("grating") or far_meta.get("grating") or GratingSpec(2)
    frame = cfg.frame if cfg else default_config().frame
    if not math.isclose(frame.d, grating.d):
        frame = replace(frame, d=grating.d)
    x_offset = grating.position_origin if args.x_offset is None else args.x_offset
    res = analyze_events(near, far, frame, auto_phase=args.auto_phase, phi=args.phi, x_offset=x_offset, seed=args.seed)
    rep = res["report"]
    hist = fringe_histogram(far, "sum", args.bins, frame)
    single = fringe_histogram(far, "single1", args.bins, frame)
    record = {
        "lhs": rep.lhs,
        "lhs_stderr": rep.lhs_stderr,
        "threshold": rep.threshold,
        "entangled": rep.entangled,
        "margin": rep.margin,
        "phi": res["phi"],
        "var_nrel": res["nrel"].variance,
        "var_nrel_stderr": res["nrel"].stderr_variance,
        "var_ptot": res["ptot"].variance,
        "var_ptot_stderr": res["ptot"].stderr_variance,
        "n_near": len(near),
        "n_far": len(far),
        "fringe_period": hist.period,
        "visibility": hist.visibility,
        "single_grating_amplitude": single.grating_amplitude,
        "single_grating_amplitude_se": single.grating_amplitude_se,
        "config_sha": far_meta.get("config_sha"),
        "seed": far_meta.get("seed"),
    }
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            _emit(record, fh)
    if args.hist_out:
        write_table(
            args.hist_out, ("center", "count", "density"), zip(hist.centers, hist.counts, hist.density),
            far_meta.get("seed"), far_meta.get("config_sha"),
        )
    print(
        f"lhs = {rep.lhs:.5f} +/- {rep.lhs_stderr:.5f}, 2C = {rep.threshold:.5f}, "
        f"entangled = {str(rep.entangled).lower()}, phi = {res['phi']:.4f}",
        file=sys.stderr,
    )
    _emit(record)
    return 0


# sweep rows run in worker processes; they must be module-level functions


def _sweep_point(task):
    param, value, cfg_text, method = task
    from .io import parse_config

    cfg = parse_config(cfg_text)
    g, src, frame = cfg.grating, cfg.source, cfg.frame
    thr = criterion_threshold()
    per = frame.momentum_period**2
    try:
        if param == "w":
            lhs = mixture_variance_ptot(g.n_slits, value, frame) / per
        elif param == "phi":
            lhs = ideal_variance_ptot_shifted(g.n_slits, value, frame) / per
        elif param == "s0_p_cm":
            xi_cm, _ = dispersion_factors(src, hbar=cfg.hbar)
            lhs = extended_source_variance_ptot(g.n_slits, frame, value, abs(xi_cm)) / per
        elif param == "N":
            lhs = ideal_variance_ptot(int(value), frame) / per
        elif param in ("sigma_rel", "sigma_cm"):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", SetupWarning)
                if param == "sigma_rel":
                    src = replace(src, sigma_x_rel=value * g.d, t_grating=0.0)
                else:
                    src = replace(src, sigma_x_cm=value * g.extent, t_grating=0.0)
            # grid resolution follows the slit count; only the cell count comes from the config
            grid = {"n_cells": cfg.sampler.n_cells}
            lhs = criterion_lhs_suboptimal(src, g, frame, method=method, **(grid if method == "grid" else {}))
        else:
            raise ConfigError(f"unknown sweep parameter {param!r}")
    except EPRYoungError as exc:
        return {"parameter": param, "value": value, "lhs": None, "threshold": thr, "verdict": None, "error": str(exc)}
    return {"parameter": param, "value": value, "lhs": lhs, "threshold": thr, "verdict": lhs < thr, "error": None}


def _table1_point(task):
    quantity, n, method = task
    g = GratingSpec(n, d=1.0, a=0.1)
    try:
        if quantity == "sigma_rel_crit":
            val = critical_sigma_rel(g, method=method) / g.d
        else:
            val = critical_sigma_cm(g, method=method) / g.extent
        err = None
    except EPRYoungError as exc:
        val, err = None, str(exc)
    return {"quantity": quantity, "n_slits": n, "value": val, "method": method, "error": err}


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _parse_values(text):
    if ":" in text:
        lo, hi, n = text.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args):
    cfg = _config(args)
    sha = config_sha(cfg)
    jobs = args.jobs
    if args.table1:
        ns = [int(v) for v in args.n_values.split(",")] if args.n_values else list(TABLE1_N)
        tasks = [("sigma_rel_crit", n, args.method) for n in ns]
        tasks += [("sigma_cm_crit", n, args.method) for n in ns if n >= 3]
        rows = _map(_table1_point, tasks, jobs)
        header = ("quantity", "n_slits", "value", "method", "error")
    else:
        if args.param is None or args.values is None:
            raise ConfigError("sweep needs --param and --values (or --table1)")
        text = dump_config(cfg)
        tasks = [(args.param, v, text, args.method) for v in _parse_values(args.values)]
        rows = _map(_sweep_point, tasks, jobs)
        header = ("parameter", "value", "lhs", "threshold", "verdict", "error")
    out = open(args.out, "w", encoding="utf-8", newline="\n") if args.out else sys.stdout
    try:
        write_table(out, header, ([r[h] for h in header] for r in rows), cfg.sampler.seed, sha)
    finally:
        if args.out:
            out.close()
    if args.jsonl:
        with open(args.jsonl, "w", encoding="utf-8") as fh:
            for r in rows:
                _emit(r, fh)
    failed = [r for r in rows if r["error"]]
    for r in failed:
        print(f"warning: row failed: {r['error']}", file=sys.stderr)
    return 0


def cmd_constants(args):
    c = criterion_constant()
    lhs2 = ideal_variance_ptot(2) / (2.0 * math.pi) ** 2
    out = {
        "C": c,
        "threshold_2C": 2.0 * c,
        "S2_2": squeezing_s2(2),
        "ideal_lhs_N2": lhs2,
        "ideal_lhs_over_2C_N2": lhs2 / (2.0 * c),
        "classical_admixture_threshold_N2": classical_admixture_threshold(2),
        "separable_admixture_threshold_4C": separable_admixture_threshold(),
    }
    if args.numeric:
        out["separable_admixture_threshold_numeric_N2"] = separable_admixture_threshold_numeric(2)["threshold"]
    _emit(out)
    return 0


def cmd_emit_config(args):
    text = dump_config(load_config(args.config) if args.config else default_config(args.n_slits))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = _Parser(prog="epryoung", description="Nonlocal N-slit interference of EPR pairs: simulation and analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", "-c", help="INI configuration file (defaults if omitted)")
        return sp

    sp = with_config(sub.add_parser("validate", help="check the setup conditions"))
    sp.set_defaults(func=cmd_validate)

    sp = with_config(sub.add_parser("pattern", help="tabulate the joint density and its sum-axis marginal"))
    sp.add_argument("--plane", choices=("near", "far"), default="far")
    sp.add_argument("--grid", type=int, default=64, help="points per modular cell (far) or per slit spacing (near)")
    sp.add_argument("--cells", type=int, default=24, help="modular cells per axis (far)")
    sp.add_argument("--stride", type=int, default=4, help="subsampling of the joint table")
    sp.add_argument("--extent", type=float, default=3.0, help="|scaled sum| range of the marginal table")
    sp.add_argument("--out", default="pattern")
    sp.set_defaults(func=cmd_pattern)

    sp = with_config(sub.add_parser("sample", help="generate event files"))
    sp.add_argument("--plane", choices=("near", "far", "both"), default="both")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n-events", type=int)
    sp.add_argument("--out-dir")
    sp.add_argument("--jobs", type=int, default=_default_jobs())
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("analyze", help="evaluate the criterion from event files")
    sp.add_argument("near")
    sp.add_argument("far")
    sp.add_argument("--config", "-c")
    sp.add_argument("--auto-phase", action="store_true", help="fit the phase origin")
    sp.add_argument("--phi", type=float, default=0.0)
    sp.add_argument("--x-offset", type=float, help="position cell origin (default from the slit count parity)")
    sp.add_argument("--bins", type=int, default=512)
    sp.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    sp.add_argument("--out", help="write the report record (JSON line)")
    sp.add_argument("--hist-out", help="write the sum-axis histogram CSV")
    sp.set_defaults(func=cmd_analyze)

    sp = with_config(sub.add_parser("sweep", help="criterion sweeps and critical widths"))
    sp.add_argument("--param", choices=SWEEP_PARAMS)
    sp.add_argument("--values", help="lo:hi:n or a comma list")
    sp.add_argument("--table1", action="store_true", help="critical widths for N in 2,3,4,5,10,20,30")
    sp.add_argument("--n-values", help="comma list overriding the --table1 slit counts")
    sp.add_argument("--method", choices=("grid", "cell"), default="grid")
    sp.add_argument("--jobs", type=int, default=_default_jobs())
    sp.add_argument("--out", help="CSV output (stdout if omitted)")
    sp.add_argument("--jsonl", help="also write one JSON record per row")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("constants", help="print the criterion constants")
    sp.add_argument("--numeric", action="store_true", help="include the numeric separable threshold")
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("emit-config", help="print a configuration file")
    sp.add_argument("--config", "-c", help="normalize an existing file instead of the defaults")
    sp.add_argument("--n-slits", type=int, default=2)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_emit_config)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except EPRYoungError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
