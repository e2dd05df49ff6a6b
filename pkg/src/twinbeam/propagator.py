"""Split-step propagation of the coupled signal/idler envelopes.

The pump is a known classical field propagating linearly (analytic
Gaussian diffraction + walk-off in a frame co-moving at the pump group
velocity); the down-converted envelopes are lattice fields evolved with a
Strang scheme: half linear step (spectral phase exp(i D(q, Omega) dz)
per field, including walk-off), full nonlinear step (exact local two-mode
Bogoliubov rotation per cell with the pump evaluated at the step
midpoint), half linear step.  The exact per-cell rotation preserves
|U|^2 - |V|^2 = 1 at every step, so photon bookkeeping carries no secular
drift.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.fft as _sfft

from .lattice import (ComplexField, ConfigError, GridSpec, ShotSeed,
                      sample_vacuum)
from .phasematch import CrystalConfig, DispersionSet, dispersion_coeffs, kz

_FFT_WORKERS = min(4, os.cpu_count() or 1)

MAX_STEP_GAIN = 0.1  # per-step nonlinear phase contract g*dz/L < 0.1


class NumericalDivergenceError(RuntimeError):
    """Field went non-finite during propagation."""

    def __init__(self, step: int):
        super().__init__(f"non-finite field values at z-step {step}")
        self.step = step


@dataclass(frozen=True)
class PumpConfig:
    """Classical pump pulse.

    fwhm_m and duration_s are intensity FWHMs; gain is the dimensionless
    peak parameter g (amplification of the collinear mode at exact
    matching is cosh^2(g)).  plane_wave replaces the Gaussian envelope by
    a constant amplitude (the analytic-oracle mode).
    """

    fwhm_m: float = 1e-3
    duration_s: float = 1e-12
    gain: float = 1.0
    plane_wave: bool = False

    def __post_init__(self):
        if self.gain < 0:
            raise ConfigError("pump gain must be non-negative")
        if not (self.fwhm_m > 0 and self.duration_s > 0):
            raise ConfigError("pump FWHM values must be positive")

    def digest(self) -> str:
        text = (f"{self.fwhm_m:.9e}|{self.duration_s:.9e}|{self.gain:.9e}"
                f"|{int(self.plane_wave)}")
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def pump_transverse(pump: PumpConfig, crystal: CrystalConfig, z: float,
                    grid: GridSpec, disp: DispersionSet) -> np.ndarray:
    """Transverse pump envelope (complex, 2D) at depth z: analytic
    Gaussian-beam diffraction plus the walk-off displacement rho_p * z."""
    if pump.plane_wave:
        return np.ones((grid.ny, grid.nx), dtype=np.complex128)
    # amplitude 1/e radius from the intensity FWHM
    w0 = pump.fwhm_m / math.sqrt(2.0 * math.log(2.0))
    kp = disp.pump.k0
    zr = 0.5 * kp * w0 ** 2
    qz = z - 1j * zr  # e^{+ikz} convention; A(0) = exp(-r^2/w0^2)
    x = grid.x() - disp.pump.walkoff * z
    y = grid.y()
    r2 = y[:, None] ** 2 + x[None, :] ** 2
    return (-1j * zr / qz) * np.exp(1j * kp * r2 / (2.0 * qz))


def pump_temporal(pump: PumpConfig, grid: GridSpec) -> np.ndarray:
    """Temporal pump amplitude (real, nt).  The time origin rides with the
    pump group velocity; pump GVD is neglected (the dispersion length
    exceeds crystals of interest by orders of magnitude)."""
    if pump.plane_wave:
        return np.ones(grid.nt)
    t = grid.t()
    return np.exp(-2.0 * math.log(2.0) * (t / pump.duration_s) ** 2)


def pump_field(pump: PumpConfig, crystal: CrystalConfig, z: float,
               grid: GridSpec, disp: Optional[DispersionSet] = None) -> np.ndarray:
    """Normalized pump envelope A(x, y, t) / A_peak at depth z."""
    if not 0.0 <= z <= crystal.length_m * (1 + 1e-12):
        raise ConfigError(f"z = {z} outside the crystal [0, {crystal.length_m}]")
    if disp is None and not pump.plane_wave:
        disp = dispersion_coeffs(crystal)
    trans = pump_transverse(pump, crystal, z, grid, disp)
    temp = pump_temporal(pump, grid)
    return trans[:, :, None] * temp[None, None, :]


def plane_wave_gain(g, delta, length_m):
    """Analytic Bogoliubov coefficients (U, V) for a uniform pump.

    a_s(out) = U a_s(in) + V a_i*(in) for the mode pair with longitudinal
    mismatch delta (rad/m) over a crystal of the given length; satisfies
    |U|^2 - |V|^2 = 1 identically.  At delta = 0, |V|^2 = sinh^2(g).
    Arguments broadcast as numpy arrays.
    """
    g = np.asarray(g, dtype=float)
    d = 0.5 * np.asarray(delta, dtype=float) * length_m
    phi = np.lib.scimath.sqrt(g ** 2 - d ** 2 + 0j)
    # sinh(phi)/phi, stable at phi -> 0
    small = np.abs(phi) < 1e-8
    phi_safe = np.where(small, 1.0, phi)
    sinhc = np.where(small, 1.0 + phi ** 2 / 6.0, np.sinh(phi_safe) / phi_safe)
    common = np.exp(1j * d)
    U = common * (np.cosh(phi) - 1j * d * sinhc)
    V = common * g * sinhc
    return U, V


@dataclass(frozen=True)
class ShotResult:
    """Near-field output of one simulated shot (crystal exit face)."""

    signal_out: ComplexField
    idler_out: ComplexField
    seed: ShotSeed
    gain: float
    pump_digest: str
    n_evanescent: int = 0
    extras: dict = field(default_factory=dict)


def _to_spectral(d: np.ndarray) -> np.ndarray:
    out = _sfft.fft2(d, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS)
    if d.shape[2] > 1:
        out = _sfft.ifft(out, axis=2, norm="ortho", workers=_FFT_WORKERS)
    return out


def _from_spectral(d: np.ndarray) -> np.ndarray:
    out = d
    if d.shape[2] > 1:
        out = _sfft.fft(out, axis=2, norm="ortho", workers=_FFT_WORKERS)
    return _sfft.ifft2(out, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS)


def linear_phase_rates(grid: GridSpec, disp: DispersionSet,
                       paraxial: bool = False):
    """Spectral phase rates D(q, Omega) (rad/m) for signal and idler.

    D = kz - k0 - k1_pump * Omega, i.e. propagation in a frame co-moving
    with the pump group velocity.  Evanescent cells are returned as a
    boolean mask and excluded from the dynamics.
    """
    qx = grid.qx()[None, :, None]
    qy = grid.qy()[:, None, None]
    om = grid.omega()[None, None, :]
    k1_ref = disp.pump.k1
    rates, masks = [], []
    for wave in (disp.signal, disp.idler):
        d = kz(wave, qx, qy, om, paraxial) - wave.k0 - k1_ref * om
        bad = ~np.isfinite(d)
        rates.append(np.where(bad, 0.0, d))
        masks.append(bad)
    n_ev = int(np.count_nonzero(masks[0])) + int(np.count_nonzero(masks[1]))
    return rates[0], rates[1], masks[0], masks[1], n_ev


def _step_phase(rate, bad, dz):
    h = np.exp(1j * rate * dz)
    if bad.any():
        h = np.where(bad, 0.0, h)
    return h


def _mirror_cells(a: np.ndarray) -> np.ndarray:
    """Index map k -> (-k mod n) on every axis (DFT conjugation partner)."""
    out = a[::-1, ::-1, ::-1]
    for ax in range(3):
        out = np.roll(out, 1, axis=ax)
    return out


def effective_pair_mismatch(grid: GridSpec, disp: DispersionSet,
                            paraxial: bool = False) -> np.ndarray:
    """Mismatch actually realized by the lattice dynamics, per signal cell.

    For a plane-wave pump the spectral cell k of the signal couples only
    the idler cell at the modular negation -k; the pair evolves as an
    analytic two-mode squeezer with this mismatch, so
    plane_wave_gain(g, effective_pair_mismatch(...), L) predicts every
    per-cell photon number exactly (up to splitting error).  It equals
    the physical phase_mismatch(q, Omega) everywhere except on Nyquist
    rows, where the lattice aliases the pairing.
    """
    d_s, d_i, bad_s, bad_i, _ = linear_phase_rates(grid, disp, paraxial)
    delta = disp.collinear_mismatch - (d_s + _mirror_cells(d_i))
    delta[bad_s | _mirror_cells(bad_i)] = np.nan
    return delta


def propagate_shot(grid: GridSpec, crystal: CrystalConfig, pump: PumpConfig,
                   seed: ShotSeed, paraxial: bool = False,
                   inputs: Optional[Tuple[ComplexField, ComplexField]] = None
                   ) -> ShotResult:
    """Propagate one shot of vacuum noise through the crystal.

    Draws the Wigner vacuum for (seed) unless explicit input fields are
    given (used by convergence tests that must reuse one noise draw).
    """
    L = crystal.length_m
    if abs(grid.crystal_length - L) > 1e-9 * L:
        raise ConfigError(f"grid nz*dz = {grid.crystal_length:.6e} m does not "
                          f"cover the crystal length {L:.6e} m")
    if pump.gain > 0 and pump.gain * grid.dz / L >= MAX_STEP_GAIN:
        raise ConfigError(
            f"step too coarse: per-step nonlinear phase g*dz/L = "
            f"{pump.gain * grid.dz / L:.3f} must stay below {MAX_STEP_GAIN}; "
            f"increase nz")

    disp = dispersion_coeffs(crystal)
    if inputs is None:
        sig, idl = sample_vacuum(grid, seed)
    else:
        sig, idl = inputs
    a_s = sig.data.astype(np.complex128, copy=True)
    a_i = idl.data.astype(np.complex128, copy=True)

    d_s, d_i, bad_s, bad_i, n_ev = linear_phase_rates(grid, disp, paraxial)
    h_s = _step_phase(d_s, bad_s, grid.dz)
    h_i = _step_phase(d_i, bad_i, grid.dz)
    hh_s = _step_phase(d_s, bad_s, 0.5 * grid.dz)
    hh_i = _step_phase(d_i, bad_i, 0.5 * grid.dz)

    delta0 = disp.collinear_mismatch
    dz = grid.dz
    temp = pump_temporal(pump, grid)[None, None, :]

    def lin(d, h):
        return _from_spectral(_to_spectral(d) * h)

    a_s = lin(a_s, hh_s)
    a_i = lin(a_i, hh_i)
    for step in range(grid.nz):
        z_mid = (step + 0.5) * dz
        trans = pump_transverse(pump, crystal, z_mid, grid, disp)
        mag = np.abs(trans)
        with np.errstate(invalid="ignore"):
            phase = np.where(mag > 0, trans / np.where(mag > 0, mag, 1.0), 1.0)
        phase = (phase * np.exp(1j * delta0 * z_mid))[:, :, None]
        r = (pump.gain * dz / L) * mag[:, :, None] * temp
        ch, sh = np.cosh(r), np.sinh(r)
        new_s = ch * a_s + phase * (sh * np.conj(a_i))
        a_i = ch * a_i + phase * (sh * np.conj(a_s))
        a_s = new_s
        if step == grid.nz - 1:
            a_s, a_i = lin(a_s, hh_s), lin(a_i, hh_i)
        else:
            a_s, a_i = lin(a_s, h_s), lin(a_i, h_i)
        if not np.isfinite(a_s.ravel()[::263]).all() \
                or not np.isfinite(a_i.ravel()[::263]).all():
            if not (np.isfinite(a_s).all() and np.isfinite(a_i).all()):
                raise NumericalDivergenceError(step)

    return ShotResult(
        signal_out=ComplexField(grid, "ordinary", a_s),
        idler_out=ComplexField(grid, "extraordinary", a_i),
        seed=seed, gain=pump.gain, pump_digest=pump.digest(),
        n_evanescent=n_ev,
    )
