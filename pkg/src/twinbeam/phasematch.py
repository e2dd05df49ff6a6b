"""Crystal dispersion model for the type-II interaction.

Wavenumbers, group delays, group-velocity dispersion and spatial walk-off
for the three interacting waves (o signal, e idler, e pump) in a uniaxial
crystal, plus the longitudinal phase mismatch on the lattice and the
predicted far-field ring geometry.

The refractive-index model is a classic three-term Sellmeier form

    n^2 = A + B / (lam_um^2 + C) + D * lam_um^2

with coefficients supplied by configuration.  The defaults are standard
published fits for beta-barium borate; they are validated by the
collinear-matching self-test rather than trusted blindly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .lattice import ConfigError

C_LIGHT = 299792458.0  # m/s

# n^2 = A + B/(lam^2 + C) + D lam^2, lam in microns (Eimerl-style BBO fit)
BBO_SELLMEIER_O = (2.7405, 0.0184, -0.0179, -0.0155)
BBO_SELLMEIER_E = (2.3730, 0.0128, -0.0156, -0.0044)


def _sell_f(lam_um, coefs):
    A, B, C, D = coefs
    return A + B / (lam_um ** 2 + C) + D * lam_um ** 2


def _sell_f1(lam_um, coefs):
    _, B, C, D = coefs
    return -2.0 * B * lam_um / (lam_um ** 2 + C) ** 2 + 2.0 * D * lam_um


def _sell_f2(lam_um, coefs):
    _, B, C, D = coefs
    s = lam_um ** 2 + C
    return -2.0 * B / s ** 2 + 8.0 * B * lam_um ** 2 / s ** 3 + 2.0 * D


def index_o(lam_m, coefs):
    """Ordinary index and its first two wavelength derivatives (SI)."""
    lam = lam_m * 1e6
    f = _sell_f(lam, coefs)
    if f <= 0:
        raise ConfigError(f"index model non-physical (n^2 = {f:.4g}) at "
                          f"{lam_m * 1e9:.1f} nm")
    n = math.sqrt(f)
    f1 = _sell_f1(lam, coefs)
    f2 = _sell_f2(lam, coefs)
    n1 = f1 / (2.0 * n)
    n2 = f2 / (2.0 * n) - f1 ** 2 / (4.0 * n ** 3)
    # derivatives taken per micron; convert to per meter
    return n, n1 * 1e6, n2 * 1e12


def index_e(theta_rad, lam_m, coefs_o, coefs_e):
    """Extraordinary index at propagation angle theta, with derivatives."""
    lam = lam_m * 1e6
    fo, fe = _sell_f(lam, coefs_o), _sell_f(lam, coefs_e)
    if fo <= 0 or fe <= 0:
        raise ConfigError(f"index model non-physical at {lam_m * 1e9:.1f} nm")
    co, si = math.cos(theta_rad) ** 2, math.sin(theta_rad) ** 2
    # u = 1/n^2 = cos^2/no^2 + sin^2/ne^2; chain-rule through g = 1/f
    u = co / fo + si / fe
    fo1, fe1 = _sell_f1(lam, coefs_o), _sell_f1(lam, coefs_e)
    fo2, fe2 = _sell_f2(lam, coefs_o), _sell_f2(lam, coefs_e)
    u1 = -co * fo1 / fo ** 2 - si * fe1 / fe ** 2
    u2 = (-co * fo2 / fo ** 2 + 2 * co * fo1 ** 2 / fo ** 3
          - si * fe2 / fe ** 2 + 2 * si * fe1 ** 2 / fe ** 3)
    n = u ** -0.5
    n1 = -0.5 * u1 * u ** -1.5
    n2 = -0.5 * u2 * u ** -1.5 + 0.75 * u1 ** 2 * u ** -2.5
    return n, n1 * 1e6, n2 * 1e12


def walkoff_angle(theta_rad, lam_m, coefs_o, coefs_e):
    """Poynting walk-off of the e-wave (rad), positive along +x."""
    no, _, _ = index_o(lam_m, coefs_o)
    lam = lam_m * 1e6
    ne2 = _sell_f(lam, coefs_e)
    nth, _, _ = index_e(theta_rad, lam_m, coefs_o, coefs_e)
    return math.atan(0.5 * nth ** 2 * math.sin(2 * theta_rad)
                     * (1.0 / ne2 - 1.0 / no ** 2))


@dataclass(frozen=True)
class CrystalConfig:
    """Crystal geometry and index model.

    theta_deg is the cut angle between the optic axis and the pump
    direction; phi_deg is kept for bookkeeping only (a uniaxial model has
    no azimuthal dependence).  lambda_signal_m defaults to the degenerate
    value 2*lambda_pump_m.
    """

    length_m: float = 4e-3
    theta_deg: float = 48.746
    phi_deg: float = 0.0
    lambda_pump_m: float = 352e-9
    lambda_signal_m: Optional[float] = None
    degenerate: bool = True
    sellmeier_o: Tuple[float, float, float, float] = BBO_SELLMEIER_O
    sellmeier_e: Tuple[float, float, float, float] = BBO_SELLMEIER_E
    pump_walkoff_rad: Optional[float] = None   # override; derived if None
    idler_walkoff_rad: Optional[float] = None

    def __post_init__(self):
        if not self.length_m > 0:
            raise ConfigError("crystal length must be positive")
        if not 0.0 < self.theta_deg < 90.0:
            raise ConfigError("cut angle must satisfy 0 < theta < 90 deg")
        if not self.lambda_pump_m > 0:
            raise ConfigError("pump wavelength must be positive")
        ls = self.lambda_s
        if self.degenerate and abs(ls - 2 * self.lambda_pump_m) > 1e-6 * ls:
            raise ConfigError("degenerate mode requires lambda_s = 2*lambda_p "
                              "within 1e-6 relative")

    @property
    def lambda_s(self) -> float:
        return (2.0 * self.lambda_pump_m if self.lambda_signal_m is None
                else self.lambda_signal_m)

    @property
    def lambda_i(self) -> float:
        # energy conservation 1/li = 1/lp - 1/ls
        return 1.0 / (1.0 / self.lambda_pump_m - 1.0 / self.lambda_s)

    @property
    def theta_rad(self) -> float:
        return math.radians(self.theta_deg)


@dataclass(frozen=True)
class WaveDispersion:
    """k and its first two frequency derivatives at one carrier."""

    k0: float        # rad/m
    k1: float        # s/m, group delay dk/dOmega
    k2: float        # s^2/m, GVD
    walkoff: float   # rad, transverse walk-off slope (0 for o-waves)

    def k_of_omega(self, omega):
        """Wavenumber magnitude at frequency offset omega (2nd order)."""
        return self.k0 + self.k1 * omega + 0.5 * self.k2 * omega ** 2


@dataclass(frozen=True)
class DispersionSet:
    signal: WaveDispersion
    idler: WaveDispersion
    pump: WaveDispersion

    @property
    def collinear_mismatch(self) -> float:
        """Residual Delta at q = 0, Omega = 0 (rad/m)."""
        return self.pump.k0 - self.signal.k0 - self.idler.k0


def _wave_dispersion(n, n1, n2, lam_m, walkoff) -> WaveDispersion:
    k0 = 2.0 * math.pi * n / lam_m
    k1 = (n - lam_m * n1) / C_LIGHT
    k2 = lam_m ** 3 * n2 / (2.0 * math.pi * C_LIGHT ** 2)
    if not (np.isfinite(k0) and np.isfinite(k1) and np.isfinite(k2)) or k0 <= 0:
        raise ConfigError("dispersion evaluation produced non-physical values")
    return WaveDispersion(k0, k1, k2, walkoff)


def dispersion_coeffs(crystal: CrystalConfig) -> DispersionSet:
    """Evaluate k0, k1, k2 and walk-off for signal (o), idler (e), pump (e).

    Derivatives are exact analytic chain-rule expressions; the test suite
    holds them against a Richardson-extrapolated finite-difference oracle.
    """
    th = crystal.theta_rad
    so, se = crystal.sellmeier_o, crystal.sellmeier_e
    ls, li, lp = crystal.lambda_s, crystal.lambda_i, crystal.lambda_pump_m

    sig = _wave_dispersion(*index_o(ls, so), ls, 0.0)
    rho_i = (crystal.idler_walkoff_rad if crystal.idler_walkoff_rad is not None
             else walkoff_angle(th, li, so, se))
    idl = _wave_dispersion(*index_e(th, li, so, se), li, rho_i)
    rho_p = (crystal.pump_walkoff_rad if crystal.pump_walkoff_rad is not None
             else walkoff_angle(th, lp, so, se))
    pmp = _wave_dispersion(*index_e(th, lp, so, se), lp, rho_p)
    return DispersionSet(sig, idl, pmp)


def matching_angle_deg(crystal: CrystalConfig,
                       lo: float = 20.0, hi: float = 85.0) -> float:
    """Cut angle (deg) with exact collinear matching for this index model."""

    def dk(theta_deg):
        c = replace(crystal, theta_deg=theta_deg)
        return dispersion_coeffs(c).collinear_mismatch

    return float(brentq(dk, lo, hi, xtol=1e-10))


def matched_crystal(crystal: CrystalConfig = CrystalConfig()) -> CrystalConfig:
    """Copy of the configuration re-cut for exact collinear matching."""
    return replace(crystal, theta_deg=matching_angle_deg(crystal))


def kz(wave: WaveDispersion, qx, qy, omega, paraxial: bool = False):
    """Longitudinal wavenumber of a wave at (qx, qy, omega).

    Non-paraxial by default: kz = sqrt(k^2 - q^2) - walkoff * qx.
    Evanescent cells (|q| >= k) come back NaN; callers exclude them from
    the gain.  The paraxial flag switches to k - q^2/(2k).
    """
    k = wave.k_of_omega(np.asarray(omega, dtype=float))
    q2 = np.asarray(qx, dtype=float) ** 2 + np.asarray(qy, dtype=float) ** 2
    if paraxial:
        kz_chrom = k - q2 / (2.0 * k)
    else:
        arg = k ** 2 - q2
        with np.errstate(invalid="ignore"):
            kz_chrom = np.where(arg > 0.0, np.sqrt(np.where(arg > 0, arg, 1.0)),
                                np.nan)
    return kz_chrom - wave.walkoff * np.asarray(qx, dtype=float)


def phase_mismatch(qx, qy, omega, disp: DispersionSet,
                   paraxial: bool = False, symmetrized: bool = False):
    """Longitudinal mismatch Delta(q, Omega) for the pair (q,Om | -q,-Om).

    Delta = kz_pump(0, 0) - kz_signal(q, Omega) - kz_idler(-q, -Omega).
    Positive walk-off tilts the e-wave rays towards +x.  symmetrized
    averages the two role assignments (signal at q vs signal at -q),
    which is even under (q, Omega) -> (-q, -Omega) by construction.
    """
    qx = np.asarray(qx, dtype=float)
    qy = np.asarray(qy, dtype=float)
    omega = np.asarray(omega, dtype=float)
    kzp = disp.pump.k0  # pump carrier on axis; its walk-off term vanishes
    d = (kzp - kz(disp.signal, qx, qy, omega, paraxial)
         - kz(disp.idler, -qx, -qy, -omega, paraxial))
    if symmetrized:
        d_swap = (kzp - kz(disp.signal, -qx, -qy, -omega, paraxial)
                  - kz(disp.idler, qx, qy, omega, paraxial))
        d = 0.5 * (d + d_swap)
    return d


@dataclass(frozen=True)
class RingGeometry:
    """Far-field ring prediction for the signal wave at one band.

    The ring passes through q = 0 (tangent to the collinear direction);
    the idler ring is its point reflection.  Detector-plane lengths use
    x = f * lambda * q / (2 pi).
    """

    center_qx: float          # rad/m, circle center on the walk-off axis
    radius_q: float           # rad/m
    outer_qx: float           # rad/m, exact on-axis outer crossing
    width_q: float            # rad/m, radial thickness over the band
    lens_f: float
    lambda_m: float

    def to_detector(self, q) -> float:
        return self.lens_f * self.lambda_m * q / (2.0 * math.pi)

    @property
    def center_x_m(self) -> float:
        return self.to_detector(self.center_qx)

    @property
    def radius_m(self) -> float:
        return self.to_detector(self.radius_q)

    @property
    def outer_x_m(self) -> float:
        return self.to_detector(self.outer_qx)

    @property
    def width_m(self) -> float:
        return self.to_detector(self.width_q)


def _omega_of_wavelength(lam, lam0):
    return 2.0 * math.pi * C_LIGHT * (1.0 / lam - 1.0 / lam0)


def ring_geometry(disp: DispersionSet, lens_f: float, bandwidth_m: float,
                  lambda_m: float = 704e-9) -> RingGeometry:
    """Predict center, radius and width of the degenerate signal ring.

    bandwidth_m is the FWHM of the selected wavelength band around the
    degenerate wavelength.  The quadratic (small-q) ring is the circle
    q^2 / kbar - rho_i * qx = delta(Omega); the outer crossing is refined
    with the exact non-paraxial mismatch.
    """
    if lens_f <= 0:
        raise ConfigError("lens focal length must be positive")
    ks, ki = disp.signal.k0, disp.idler.k0
    kbar = 2.0 * ks * ki / (ks + ki)
    rho = disp.idler.walkoff
    d0 = disp.collinear_mismatch
    center = 0.5 * kbar * rho
    radius = math.sqrt(max(center ** 2 + kbar * d0, 0.0))

    # exact on-axis outer crossing of Delta(qx, 0, 0) = 0
    outer = 2.0 * radius if radius > 0 else 0.0
    if outer > 0:
        f = lambda qx: float(phase_mismatch(qx, 0.0, 0.0, disp))
        lo, hi = 0.5 * outer, min(1.5 * outer, 0.99 * min(ks, ki))
        try:
            outer = float(brentq(f, lo, hi, xtol=1e-3))
        except ValueError:
            pass  # keep the quadratic estimate if the bracket fails

    # radial spread of the on-axis crossing over the wavelength band
    dw = abs(_omega_of_wavelength(lambda_m + bandwidth_m / 2.0, lambda_m))
    widths = []
    for om in (-dw, dw):
        delta = (d0 - (disp.signal.k1 - disp.idler.k1) * om
                 - 0.5 * (disp.signal.k2 + disp.idler.k2) * om ** 2)
        r2 = center ** 2 + kbar * delta
        widths.append(math.sqrt(max(r2, 0.0)))
    width = abs(widths[1] - widths[0])
    return RingGeometry(center, radius, outer, width, lens_f, lambda_m)
