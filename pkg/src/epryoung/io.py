"""Experiment configuration files and event/table CSV files.

Configurations are INI files (``configparser``) with a fixed set of
sections and keys; unknown keys are rejected. Event files are UTF-8 CSV with
a comment preamble carrying the seed, the configuration hash and the unit
system, followed by the header ``plane,u1,u2,weight``.
"""

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, EPRYoungError, EventFormatError
from .modular import ModularFrame
from .sampler import EventBatch, SamplerConfig
from .states import Displacement, EprSource, GratingSpec, SourceEnsemble

__all__ = [
    "STATE_KINDS",
    "ExperimentConfig",
    "default_config",
    "parse_config",
    "load_config",
    "dump_config",
    "config_sha",
    "write_events",
    "read_events",
    "write_table",
]

STATE_KINDS = ("mme", "suboptimal", "separable")
EVENT_HEADER = "plane,u1,u2,weight"


@dataclass(frozen=True)
class ExperimentConfig:
    grating: GratingSpec
    source: EprSource
    sampler: SamplerConfig
    displacement: Optional[Displacement] = None
    ensemble: Optional[SourceEnsemble] = None
    hbar: float = 1.0
    state: str = "mme"
    output_dir: str = "."
    prefix: str = "run"

    def __post_init__(self):
        if self.state not in STATE_KINDS:
            raise ConfigError(f"state must be one of {STATE_KINDS}, got {self.state!r}")
        if not self.hbar > 0:
            raise ConfigError("hbar must be positive")

    @property
    def frame(self) -> ModularFrame:
        return ModularFrame(d=self.grating.d, h=2.0 * math.pi * self.hbar)

    @property
    def x_offset(self) -> float:
        return self.grating.position_origin


def default_config(n_slits: int = 2) -> ExperimentConfig:
    """Defaults: a = 0.1 d, sigma_rel = 0.05 d, sigma_cm = 3 N d, T = T_max / 2."""
    g = GratingSpec(n_slits, d=1.0, a=0.1)
    sigma_rel = 0.05 * g.d
    src = EprSource(sigma_rel, 3.0 * g.extent, mass=1.0, t_grating=0.5 * sigma_rel**2)
    return ExperimentConfig(grating=g, source=src, sampler=SamplerConfig(seed=42, n_events=100_000))


_SCHEMA = {
    "grating": {"n_slits": int, "d": float, "a": float},
    "source": {"sigma_x_rel": float, "sigma_x_cm": float, "mass": float, "t_grating": float},
    "displacement": {"x_cm0": float, "x_rel0": float, "p_cm0": float, "p_rel0": float},
    "ensemble": {"s0_x_cm": float, "s0_x_rel": float, "s0_p_cm": float, "s0_p_rel": float},
    "sampler": {
        "seed": int,
        "n_events": int,
        "admixture_w": float,
        "phase_shift": float,
        "far_t2": float,
        "grid_per_cell": int,
        "n_cells": int,
        "min_coverage": float,
        "state": str,
    },
    "units": {"hbar": float},
    "output": {"directory": str, "prefix": str},
}


def _convert(section, key, raw):
    typ = _SCHEMA[section][key]
    raw = raw.strip()
    if section == "sampler" and key == "far_t2" and raw.lower() in ("", "none"):
        return None
    try:
        if typ is int:
            return int(raw, 0)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse INI text; missing keys take the defaults, unknown ones are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values.setdefault(section, {})[key] = _convert(section, key, raw)

    base = default_config(values.get("grating", {}).get("n_slits", 2))
    try:
        g = replace(base.grating, **values.get("grating", {}))
        src_vals = values.get("source", {})
        if "sigma_x_rel" in src_vals and "t_grating" not in src_vals:
            src_vals = dict(src_vals, t_grating=0.5 * src_vals["sigma_x_rel"] ** 2 * src_vals.get("mass", 1.0))
        if "n_slits" in values.get("grating", {}) and "sigma_x_cm" not in src_vals:
            src_vals = dict(src_vals, sigma_x_cm=3.0 * g.extent)
        src = replace(base.source, **src_vals)
        samp_vals = dict(values.get("sampler", {}))
        state = samp_vals.pop("state", "mme")
        sampler = replace(base.sampler, **samp_vals)
        disp = Displacement(**values["displacement"]) if "displacement" in values else None
        ens = SourceEnsemble(**values["ensemble"]) if "ensemble" in values else None
        out = values.get("output", {})
        return ExperimentConfig(
            grating=g,
            source=src,
            sampler=sampler,
            displacement=disp,
            ensemble=ens,
            hbar=values.get("units", {}).get("hbar", 1.0),
            state=state,
            output_dir=out.get("directory", "."),
            prefix=out.get("prefix", "run"),
        )
    except ConfigError:
        raise
    except (EPRYoungError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text for ``cfg``; parse(dump(cfg)) reproduces it."""
    out = io.StringIO()

    def section(name, pairs):
        out.write(f"[{name}]\n")
        for k, v in pairs:
            out.write(f"{k} = {_fmt(v)}\n")
        out.write("\n")

    section("grating", [(f.name, getattr(cfg.grating, f.name)) for f in fields(GratingSpec)])
    section("source", [(f.name, getattr(cfg.source, f.name)) for f in fields(EprSource)])
    if cfg.displacement is not None:
        section("displacement", [(f.name, getattr(cfg.displacement, f.name)) for f in fields(Displacement)])
    if cfg.ensemble is not None:
        section("ensemble", [(f.name, getattr(cfg.ensemble, f.name)) for f in fields(SourceEnsemble)])
    samp = [(f.name, getattr(cfg.sampler, f.name)) for f in fields(SamplerConfig) if f.name != "ensemble"]
    section("sampler", samp + [("state", cfg.state)])
    section("units", [("hbar", cfg.hbar)])
    section("output", [("directory", cfg.output_dir), ("prefix", cfg.prefix)])
    return out.getvalue().rstrip("\n") + "\n"


def config_sha(cfg: ExperimentConfig) -> str:
    """Short SHA-256 of the canonical configuration text."""
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()[:16]


def _units(hbar, d, mass):
    return f"units=natural(hbar={hbar:g},d={d:g},m={mass:g})"


def preamble(seed, sha, hbar=1.0, d=1.0, mass=1.0) -> str:
    return f"# seed={seed}, config_sha={sha}, {_units(hbar, d, mass)}\n"


def write_events(path, batch: EventBatch, sha: str, grating: GratingSpec = None, hbar: float = 1.0, mass: float = 1.0):
    """Write an event batch; output is byte-identical for identical input."""
    d = grating.d if grating is not None else 1.0
    lines = [preamble(batch.seed, sha, hbar, d, mass)]
    if grating is not None:
        lines.append(f"# grating: n_slits={grating.n_slits}, d={grating.d!r}, a={grating.a!r}\n")
    if batch.screen:
        lines.append(f"# far_field: mass={batch.mass!r}, t2={batch.far_t2!r}\n")
    lines.append(EVENT_HEADER + "\n")
    body = np.column_stack([batch.u1, batch.u2, batch.weight])
    buf = io.StringIO()
    np.savetxt(buf, body, fmt="%.17g", delimiter=",")
    prefix = batch.plane + ","
    lines.extend(prefix + row + "\n" for row in buf.getvalue().splitlines())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def _parse_meta(line):
    out = {}
    for part in line.split(","):
        if "=" in part:
            k, v = part.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def read_events(path) -> tuple:
    """Read an event file.

    Returns
    -------
    batch : EventBatch
    meta : dict
        ``seed``, ``config_sha`` and, when present, ``grating``
        (a :class:`GratingSpec`).
    """
    meta = {}
    far = {}
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    body_start = None
    for i, line in enumerate(lines):
        if line.startswith("#"):
            content = line[1:].strip()
            if content.startswith("grating:"):
                kv = _parse_meta(content[len("grating:"):])
                try:
                    meta["grating"] = GratingSpec(int(kv["n_slits"]), float(kv["d"]), float(kv["a"]))
                except (KeyError, ValueError) as exc:
                    raise EventFormatError(f"{path}: bad grating line: {exc}") from None
            elif content.startswith("far_field:"):
                far = _parse_meta(content[len("far_field:"):])
            else:
                for k, v in _parse_meta(content).items():
                    meta.setdefault(k, v)
            continue
        if line.strip() != EVENT_HEADER:
            raise EventFormatError(f"{path}: expected header {EVENT_HEADER!r}, got {line!r}")
        body_start = i + 1
        break
    if body_start is None:
        raise EventFormatError(f"{path}: missing header line")
    rows = [ln.split(",") for ln in lines[body_start:] if ln.strip()]
    if not rows:
        raise EventFormatError(f"{path}: no events")
    planes = {r[0] for r in rows}
    if len(planes) != 1 or not planes <= {"near", "far"}:
        raise EventFormatError(f"{path}: mixed or unknown planes {sorted(planes)}")
    try:
        vals = np.array([[float(x) for x in r[1:4]] for r in rows])
    except ValueError as exc:
        raise EventFormatError(f"{path}: {exc}") from None
    if vals.shape[1] != 3 or any(len(r) != 4 for r in rows):
        raise EventFormatError(f"{path}: every record needs 4 fields")
    try:
        seed = int(meta["seed"]) if meta.get("seed", "None") != "None" else None
        t2 = float(far["t2"]) if far else None
        mass = float(far["mass"]) if far else None
        batch = EventBatch(planes.pop(), vals[:, 0], vals[:, 1], vals[:, 2], seed, t2, mass)
    except (ValueError, EPRYoungError) as exc:
        raise EventFormatError(f"{path}: {exc}") from None
    meta["seed"] = seed
    return batch, meta


def write_table(path_or_file, header, rows, seed=None, sha=None):
    """CSV table with a comment line (config hash, seed) and a column header."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", encoding="utf-8", newline="\n") if own else path_or_file
    try:
        fh.write(f"# config_sha={sha}, seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")
    finally:
        if own:
            fh.close()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.10g" % v
    return "" if v is None else str(v)
