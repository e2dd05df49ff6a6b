"""Run configuration: a sectioned plain-text key-value file.

Every physical quantity carries its unit in the key name (pump_fwhm_mm,
dt_ps, ...) because unit slips are the main reproduction hazard in this
parameter space.  Unknown sections or keys are rejected (typo safety),
and environment variables TWINBEAM_<SECTION>_<KEY> override file values.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .detector import DetectorConfig, cells_per_pixel
from .lattice import ConfigError, GridSpec, make_grid
from .phasematch import (BBO_SELLMEIER_E, BBO_SELLMEIER_O, CrystalConfig,
                         matching_angle_deg)
from .propagator import PumpConfig

ENV_PREFIX = "TWINBEAM_"

_KNOWN_KEYS: Dict[str, Tuple[str, ...]] = {
    "grid": ("nx", "ny", "nt", "dt_ps", "nz", "dx_um", "cells_per_pixel"),
    "crystal": ("length_mm", "theta_deg", "lambda_pump_nm", "sellmeier_o",
                "sellmeier_e", "pump_walkoff_mrad", "idler_walkoff_mrad"),
    "pump": ("fwhm_mm", "duration_ps", "gains", "plane_wave"),
    "detector": ("lens_f_cm", "pixel_um", "region_width_px",
                 "region_height_px", "eta", "sigma_b_pe", "background",
                 "center_px"),
    "analysis": ("dx_symm_px", "n_list", "shift_range_px", "pairing",
                 "pool_shots"),
    "io": ("out_dir", "master_seed", "shots", "workers"),
}

DEFAULTS = """
[grid]
nx = 128
ny = 128
nt = 16
dt_ps = 0.15
nz = 64
cells_per_pixel = 2

[crystal]
length_mm = 4.0
theta_deg = matched
lambda_pump_nm = 352.0

[pump]
fwhm_mm = 0.8
duration_ps = 1.0
gains = 1.0
plane_wave = false

[detector]
lens_f_cm = 10.0
pixel_um = 20.0
region_width_px = 48
region_height_px = 24
eta = 0.75
sigma_b_pe = 0.0
background = false

[analysis]
dx_symm_px = 0
n_list = 1,2,4,8
shift_range_px = 10
pairing = round

[io]
out_dir = twinbeam_out
master_seed = 20040704
shots = 10
workers = 1
"""


@dataclass(frozen=True)
class AnalysisSettings:
    dx_symm_px: Tuple[float, ...] = (0.0,)
    n_list: Tuple[int, ...] = (1, 2, 4, 8)
    shift_range_px: int = 10
    pairing: str = "round"
    pool_shots: bool = False


@dataclass(frozen=True)
class IOSettings:
    out_dir: str = "twinbeam_out"
    master_seed: int = 20040704
    shots: int = 10
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    crystal: CrystalConfig
    pump: PumpConfig              # gain field holds the first gain
    gains: Tuple[float, ...]
    detector: DetectorConfig
    analysis: AnalysisSettings
    io: IOSettings
    background: bool = False
    digest: str = ""

    @property
    def lambda_signal_m(self) -> float:
        return self.crystal.lambda_s

    def pump_at(self, gain: float) -> PumpConfig:
        return replace(self.pump, gain=gain)


def _parse_bool(s: str, where: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {s!r}")


def _parse_float(s: str, where: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {s!r}")


def _parse_int(s: str, where: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {s!r}")


def _parse_list(s: str, where: str, conv=float):
    try:
        return tuple(conv(tok) for tok in s.replace(";", ",").split(",")
                     if tok.strip() != "")
    except ValueError:
        raise ConfigError(f"{where}: expected a comma-separated list, "
                          f"got {s!r}")


def _read_ini(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"configuration parse error: {err}")
    return cp


def _apply_env(cp: configparser.ConfigParser, environ=None):
    env = os.environ if environ is None else environ
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        section, _, key = rest.partition("_")
        # keys themselves contain underscores; find the known split
        matched = False
        for sec, keys in _KNOWN_KEYS.items():
            if rest.startswith(sec + "_") and rest[len(sec) + 1:] in keys:
                if not cp.has_section(sec):
                    cp.add_section(sec)
                cp.set(sec, rest[len(sec) + 1:], value)
                matched = True
                break
        if not matched:
            raise ConfigError(f"environment override {name} does not match "
                              "any known section_key")


def load_config(path: Optional[str] = None, text: Optional[str] = None,
                overrides: Optional[Dict[str, str]] = None,
                environ=None) -> RunConfig:
    """Parse, override and validate a run configuration.

    overrides maps "section.key" to raw string values (used by the CLI
    flags); env variables TWINBEAM_SECTION_KEY take effect between file
    and CLI overrides.
    """
    cp = _read_ini(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"configuration file not found: {path}")
        user = _read_ini(p.read_text())
        for sec in user.sections():
            if sec not in _KNOWN_KEYS:
                raise ConfigError(f"unknown configuration section [{sec}]")
            for key, val in user.items(sec):
                if key not in _KNOWN_KEYS[sec]:
                    raise ConfigError(f"unknown key '{key}' in section "
                                      f"[{sec}]")
                cp.set(sec, key, val)
    if text is not None:
        user = _read_ini(text)
        for sec in user.sections():
            if sec not in _KNOWN_KEYS:
                raise ConfigError(f"unknown configuration section [{sec}]")
            for key, val in user.items(sec):
                if key not in _KNOWN_KEYS[sec]:
                    raise ConfigError(f"unknown key '{key}' in section "
                                      f"[{sec}]")
                cp.set(sec, key, val)
    _apply_env(cp, environ)
    for dotted, val in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        if sec not in _KNOWN_KEYS or key not in _KNOWN_KEYS[sec]:
            raise ConfigError(f"unknown override {dotted!r}")
        cp.set(sec, key, str(val))
    return _build(cp)


def _build(cp: configparser.ConfigParser) -> RunConfig:
    g = dict(cp.items("grid"))
    c = dict(cp.items("crystal"))
    p = dict(cp.items("pump"))
    d = dict(cp.items("detector"))
    a = dict(cp.items("analysis"))
    o = dict(cp.items("io"))

    # crystal
    kw = {}
    if "sellmeier_o" in c:
        kw["sellmeier_o"] = _parse_list(c["sellmeier_o"], "crystal.sellmeier_o")
    if "sellmeier_e" in c:
        kw["sellmeier_e"] = _parse_list(c["sellmeier_e"], "crystal.sellmeier_e")
    if "pump_walkoff_mrad" in c:
        kw["pump_walkoff_rad"] = 1e-3 * _parse_float(
            c["pump_walkoff_mrad"], "crystal.pump_walkoff_mrad")
    if "idler_walkoff_mrad" in c:
        kw["idler_walkoff_rad"] = 1e-3 * _parse_float(
            c["idler_walkoff_mrad"], "crystal.idler_walkoff_mrad")
    crystal = CrystalConfig(
        length_m=1e-3 * _parse_float(c["length_mm"], "crystal.length_mm"),
        theta_deg=50.0,  # provisional; resolved right below
        lambda_pump_m=1e-9 * _parse_float(c["lambda_pump_nm"],
                                          "crystal.lambda_pump_nm"),
        **kw)
    theta_raw = c["theta_deg"].strip().lower()
    if theta_raw == "matched":
        crystal = replace(crystal, theta_deg=matching_angle_deg(crystal))
    else:
        crystal = replace(crystal,
                          theta_deg=_parse_float(theta_raw, "crystal.theta_deg"))

    # pump
    gains = _parse_list(p["gains"], "pump.gains")
    if not gains:
        raise ConfigError("pump.gains must list at least one gain")
    pump = PumpConfig(
        fwhm_m=1e-3 * _parse_float(p["fwhm_mm"], "pump.fwhm_mm"),
        duration_s=1e-12 * _parse_float(p["duration_ps"], "pump.duration_ps"),
        gain=gains[0],
        plane_wave=_parse_bool(p["plane_wave"], "pump.plane_wave"))

    # detector
    center = None
    if "center_px" in d and d["center_px"].strip():
        vals = _parse_list(d["center_px"], "detector.center_px")
        if len(vals) != 2:
            raise ConfigError("detector.center_px must be 'cy,cx'")
        center = (vals[0], vals[1])
    det = DetectorConfig(
        lens_f_m=1e-2 * _parse_float(d["lens_f_cm"], "detector.lens_f_cm"),
        pixel_pitch_m=1e-6 * _parse_float(d["pixel_um"], "detector.pixel_um"),
        region_width_px=_parse_int(d["region_width_px"],
                                   "detector.region_width_px"),
        region_height_px=_parse_int(d["region_height_px"],
                                    "detector.region_height_px"),
        eta_tot=_parse_float(d["eta"], "detector.eta"),
        sigma_b_pe=_parse_float(d["sigma_b_pe"], "detector.sigma_b_pe"),
        center=center)
    background = _parse_bool(d["background"], "detector.background")

    # grid: dx either explicit or derived from the detector geometry
    nx = _parse_int(g["nx"], "grid.nx")
    ny = _parse_int(g["ny"], "grid.ny")
    nt = _parse_int(g["nt"], "grid.nt")
    nz = _parse_int(g["nz"], "grid.nz")
    dt = 1e-12 * _parse_float(g["dt_ps"], "grid.dt_ps")
    lam_s = crystal.lambda_s
    if "dx_um" in g and g["dx_um"].strip():
        dx = 1e-6 * _parse_float(g["dx_um"], "grid.dx_um")
    else:
        m = _parse_int(g["cells_per_pixel"], "grid.cells_per_pixel")
        if m < 1:
            raise ConfigError("grid.cells_per_pixel must be >= 1")
        dx = m * det.lens_f_m * lam_s / (det.pixel_pitch_m * nx)
    dz = crystal.length_m / nz
    grid = make_grid(nx, ny, nt, dx, dx, dt, nz, dz,
                     pump_fwhm=None if pump.plane_wave else pump.fwhm_m,
                     crystal_length=crystal.length_m)
    cells_per_pixel(grid, det, lam_s)  # validates integer pitch mapping

    analysis = AnalysisSettings(
        dx_symm_px=_parse_list(a["dx_symm_px"], "analysis.dx_symm_px"),
        n_list=_parse_list(a["n_list"], "analysis.n_list", conv=int),
        shift_range_px=_parse_int(a["shift_range_px"],
                                  "analysis.shift_range_px"),
        pairing=a["pairing"].strip(),
        pool_shots=_parse_bool(a.get("pool_shots", "false"),
                               "analysis.pool_shots"))
    if analysis.pairing not in ("round", "interp"):
        raise ConfigError("analysis.pairing must be 'round' or 'interp'")

    ios = IOSettings(
        out_dir=o["out_dir"].strip(),
        master_seed=_parse_int(o["master_seed"], "io.master_seed"),
        shots=_parse_int(o["shots"], "io.shots"),
        workers=_parse_int(o["workers"], "io.workers"))
    if ios.shots < 1 or ios.workers < 1:
        raise ConfigError("io.shots and io.workers must be >= 1")

    buf = io.StringIO()
    cp.write(buf)
    digest = hashlib.sha256(buf.getvalue().encode()).hexdigest()[:16]

    if background and det.sigma_b_pe <= 0:
        raise ConfigError("detector.background = true requires a positive "
                          "detector.sigma_b_pe")
    return RunConfig(grid=grid, crystal=crystal, pump=pump, gains=gains,
                     detector=det, analysis=analysis, io=ios,
                     background=background, digest=digest)
