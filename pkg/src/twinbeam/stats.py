"""Pixel-pair correlation estimators and sweep procedures.

All spatial statistics are single-shot: averages run over the symmetric
pixel pairs of one frame pair, never over successive shots (pooling is an
explicit option of the callers).  Pairing is the point reflection
p <-> 2c - p about the declared symmetry center c, with the misalignment
offset applied to the idler index.

Frames produced by the Wigner sampler carry a known deterministic
variance baseline (vacuum_var = quarter of the contributing cell count
per pixel).  Every second moment of a single field estimated here removes
that baseline, so the reported variances and correlation degrees estimate
photon-number statistics; cross moments between the two fields need no
correction.  The baseline is zero for semiclassical and external frames,
in which case every formula reduces to its plain textbook form.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .detector import DetectorFrame, bin_frame


class EstimatorError(ValueError):
    """Raised when an estimator's preconditions are not met."""


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class PixelPairEnsemble:
    """Paired (n_s, n_i) samples over symmetric pixel pairs."""

    n_s: np.ndarray
    n_i: np.ndarray
    center: Tuple[float, float] = (0.0, 0.0)
    offset: Tuple[float, float] = (0.0, 0.0)   # (dy, dx) applied to idler
    binning: int = 1
    pairing: str = "round"            # "round" | "interp"
    dropped: int = 0
    vacuum_var_s: float = 0.0
    vacuum_var_i: float = 0.0
    sigma_b_pe: float = 0.0
    background_included: bool = False
    gain: float = 0.0
    master_seed: int = 0
    shot_index: int = 0

    def __post_init__(self):
        if self.n_s.shape != self.n_i.shape or self.n_s.ndim != 1:
            raise EstimatorError("paired arrays must be 1D and equal length")
        if self.n_s.size < 2:
            raise EstimatorError("fewer than 2 valid pixel pairs")
        self.n_s.setflags(write=False)
        self.n_i.setflags(write=False)

    @property
    def k(self) -> int:
        return self.n_s.size

    @classmethod
    def from_arrays(cls, n_s, n_i, **kw) -> "PixelPairEnsemble":
        return cls(np.asarray(n_s, float).ravel(),
                   np.asarray(n_i, float).ravel(), **kw)


def _check_congruent(frame_s: DetectorFrame, frame_i: DetectorFrame):
    if frame_s.shape != frame_i.shape:
        raise EstimatorError(f"frames not congruent: {frame_s.shape} vs "
                             f"{frame_i.shape}")
    if frame_s.background_included != frame_i.background_included:
        raise EstimatorError("frames disagree on background inclusion")


def build_ensemble(frame_s: DetectorFrame, frame_i: DetectorFrame,
                   center: Optional[Tuple[float, float]] = None,
                   dx: float = 0.0, dy: float = 0.0,
                   pairing: str = "round") -> PixelPairEnsemble:
    """Pair every signal pixel p with the idler pixel 2c - p + (dy, dx).

    Fractional targets are resolved to the nearest pixel by default;
    pairing="interp" uses bilinear interpolation instead (flagged, and the
    idler vacuum baseline is scaled by the squared interpolation weights).
    Out-of-bounds pairs are dropped and counted.
    """
    _check_congruent(frame_s, frame_i)
    if center is None:
        if frame_s.center != frame_i.center:
            raise EstimatorError("frames declare different symmetry centers")
        center = frame_s.center
    cy, cx = center
    h, w = frame_s.shape
    rows, cols = np.mgrid[0:h, 0:w]
    ty = 2.0 * cy - rows + dy
    tx = 2.0 * cx - cols + dx

    vac_i = frame_i.vacuum_var
    if pairing == "round":
        iy = np.floor(ty + 0.5).astype(int)
        ix = np.floor(tx + 0.5).astype(int)
        ok = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
        n_s = frame_s.data[rows[ok], cols[ok]]
        n_i = frame_i.data[iy[ok], ix[ok]]
    elif pairing == "interp":
        fy = np.floor(ty).astype(int)
        fx = np.floor(tx).astype(int)
        uy, ux = ty - fy, tx - fx
        ok = (fy >= 0) & (fy + 1 < h) & (fx >= 0) & (fx + 1 < w)
        f00 = frame_i.data[fy[ok], fx[ok]]
        f01 = frame_i.data[fy[ok], fx[ok] + 1]
        f10 = frame_i.data[fy[ok] + 1, fx[ok]]
        f11 = frame_i.data[fy[ok] + 1, fx[ok] + 1]
        wy, wx = uy[ok], ux[ok]
        n_i = ((1 - wy) * (1 - wx) * f00 + (1 - wy) * wx * f01
               + wy * (1 - wx) * f10 + wy * wx * f11)
        n_s = frame_s.data[rows[ok], cols[ok]]
        # weights are uniform across pairs (constant fractional part)
        wy0, wx0 = float(uy.flat[0]), float(ux.flat[0])
        w2 = (((1 - wy0) ** 2 + wy0 ** 2) * ((1 - wx0) ** 2 + wx0 ** 2))
        vac_i = frame_i.vacuum_var * w2
    else:
        raise EstimatorError(f"unknown pairing mode {pairing!r}")

    dropped = h * w - int(ok.sum())
    if frame_s.sigma_b_pe != frame_i.sigma_b_pe:
        raise EstimatorError("frames declare different background sigma")
    return PixelPairEnsemble(
        n_s=np.ascontiguousarray(n_s, dtype=float),
        n_i=np.ascontiguousarray(n_i, dtype=float),
        center=(cy, cx), offset=(dy, dx), binning=frame_s.binning,
        pairing=pairing, dropped=dropped,
        vacuum_var_s=frame_s.vacuum_var, vacuum_var_i=vac_i,
        sigma_b_pe=frame_s.sigma_b_pe,
        background_included=frame_s.background_included,
        gain=frame_s.gain, master_seed=frame_s.master_seed,
        shot_index=frame_s.shot_index)


# ---------------------------------------------------------------------------
# scalar estimators


def difference_variance(e: PixelPairEnsemble) -> float:
    """Variance of the pe difference n_s - n_i over the pixel pairs.

    For Wigner-sampled frames the deterministic symmetric-ordering
    baseline of both pixels is removed; the result then estimates the
    photon-number difference variance (and the background variance, if
    background was added, remains in - see background_correct).
    """
    d = e.n_s - e.n_i
    return float(np.var(d)) - e.vacuum_var_s - e.vacuum_var_i


def background_correct(var_measured: float, sigma_b: float) -> float:
    """sigma^2_{s-i} = sigma^2_{(s+b)-(i+b)} - 2 sigma_b^2.

    May legitimately come back negative (over-subtraction); callers flag
    rather than clamp.
    """
    if sigma_b < 0:
        raise EstimatorError("sigma_b must be non-negative")
    return var_measured - 2.0 * sigma_b ** 2


def snl_normalize(var: float, mean_sum: float) -> float:
    """Normalize a difference variance to the shot-noise level
    <n_s + n_i>; values below 1 are sub-shot-noise."""
    if not mean_sum > 0:
        raise EstimatorError(f"mean_sum must be positive, got {mean_sum}")
    return var / mean_sum


def ensemble_moments(e: PixelPairEnsemble) -> Dict[str, float]:
    """Means, baseline-corrected self variances and the cross covariance."""
    mean_s = float(np.mean(e.n_s))
    mean_i = float(np.mean(e.n_i))
    var_s = float(np.var(e.n_s)) - e.vacuum_var_s
    var_i = float(np.var(e.n_i)) - e.vacuum_var_i
    if e.background_included:
        var_s -= e.sigma_b_pe ** 2
        var_i -= e.sigma_b_pe ** 2
    cov = float(np.mean(e.n_s * e.n_i)) - mean_s * mean_i
    return {"mean_s": mean_s, "mean_i": mean_i,
            "mean_sum": mean_s + mean_i,
            "var_s": var_s, "var_i": var_i, "cov": cov}


def gamma_zero(e: PixelPairEnsemble) -> float:
    """Cross-correlation degree of the ensemble at its own pairing."""
    m = ensemble_moments(e)
    denom = m["var_s"] * m["var_i"]
    if denom <= 0:
        raise EstimatorError("non-positive self variance; gamma undefined")
    return m["cov"] / math.sqrt(denom)


def corrected_difference_variance(e: PixelPairEnsemble) -> Tuple[float, float]:
    """(measured, background-corrected) difference variance for the
    ensemble, using its recorded background sigma."""
    measured = difference_variance(e)
    if e.background_included:
        return measured, background_correct(measured, e.sigma_b_pe)
    return measured, measured


def quantum_bound(mean: float, variance: Optional[float] = None,
                  M: Optional[float] = None) -> float:
    """Classical ceiling for the correlation degree.

    Empirical form 1 - <n>/sigma^2 (from measured single-beam moments) or
    thermal-model form <n>/(M + <n>); a measured gamma peak above the
    bound certifies quantum correlation.
    """
    if (variance is None) == (M is None):
        raise EstimatorError("provide exactly one of variance or M")
    if variance is not None:
        if not variance > 0:
            raise EstimatorError("variance must be positive")
        return 1.0 - mean / variance
    if not M > 0:
        raise EstimatorError("M must be positive")
    return mean / (M + mean)


@dataclass(frozen=True)
class DegeneracyFit:
    m: float
    residual_rms: float
    unbounded: bool = False


def fit_degeneracy(means: Sequence[float],
                   variances: Sequence[float]) -> DegeneracyFit:
    """Least-squares fit of M in the thermal law sigma^2 = n (1 + n/M).

    Linear in 1/M.  Poissonian data (sigma^2 = n) comes back with the
    unbounded flag and M = inf.
    """
    mu = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    if mu.size < 2:
        raise EstimatorError("need at least 2 points to fit M")
    if np.ptp(mu) <= 1e-12 * max(1.0, np.abs(mu).max()):
        raise EstimatorError("degenerate design: all means equal")
    d = v - mu
    denom = float(np.sum(mu ** 4))
    if denom <= 0:
        raise EstimatorError("means are all zero")
    x = float(np.sum(d * mu ** 2)) / denom
    if x <= 0 or not np.isfinite(x):
        return DegeneracyFit(math.inf, float(np.sqrt(np.mean(d ** 2))), True)
    m = 1.0 / x
    resid = v - mu - mu ** 2 / m
    return DegeneracyFit(m, float(np.sqrt(np.mean(resid ** 2))), False)


def thermal_m_direct(means: Sequence[float],
                     variances: Sequence[float]) -> float:
    """Direct single-gain estimate of M: average of n^2 / (sigma^2 - n)
    over points with super-Poissonian variance."""
    mu = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    excess = v - mu
    ok = (excess > 0) & (mu > 0)
    if not ok.any():
        return math.inf
    return float(np.mean(mu[ok] ** 2 / excess[ok]))


@dataclass(frozen=True)
class CauchySchwarzResult:
    margin: float                 # pe^2; > 0 certifies the violation
    violated: bool
    cross: float                  # <delta n_s delta n_i>
    self_s: float                 # <: delta n_s^2 :> = sigma_s^2 - <n_s>
    self_i: float
    negative_self: bool = False   # sub-Poissonian marginal; direct form used


def cauchy_schwarz_check(e: PixelPairEnsemble) -> CauchySchwarzResult:
    """Cross-correlation vs normally-ordered self-correlation margin.

    margin = <delta n_s delta n_i> - sqrt(<:dn_s^2:><:dn_i^2:>).  When a
    normally-ordered self-correlation is negative the geometric mean is
    replaced by the direct symmetrized form (flagged).
    """
    m = ensemble_moments(e)
    cross = m["cov"]
    self_s = m["var_s"] - m["mean_s"]
    self_i = m["var_i"] - m["mean_i"]
    if self_s >= 0 and self_i >= 0:
        rhs = math.sqrt(self_s * self_i)
        neg = False
    else:
        rhs = 0.5 * (m["var_s"] + m["var_i"]) - 0.5 * m["mean_sum"]
        neg = True
    margin = cross - rhs
    return CauchySchwarzResult(margin, margin > 0, cross, self_s, self_i, neg)


# ---------------------------------------------------------------------------
# correlation degree vs shift


@dataclass(frozen=True)
class CorrelationProfile:
    shifts_x: np.ndarray
    gamma_x: np.ndarray
    shifts_y: np.ndarray
    gamma_y: np.ndarray
    peak: float
    peak_shift: Tuple[int, int]        # (sy, sx) relative to exact mirror
    surface: Optional[np.ndarray] = None
    surface_shifts: Optional[Tuple[np.ndarray, np.ndarray]] = None


def _pair_sums(a: np.ndarray, b: np.ndarray):
    """All-shift pair sums via FFT convolution.

    Index u of each output equals sum_p a[p] * b[u - p] over valid p, for
    u on the full (2h-1, 2w-1) lattice.
    """
    ones_a = np.ones_like(a)
    ones_b = np.ones_like(b)
    s_ab = fftconvolve(a, b, mode="full")
    s_a = fftconvolve(a, ones_b, mode="full")
    s_b = fftconvolve(ones_a, b, mode="full")
    s_a2 = fftconvolve(a * a, ones_b, mode="full")
    s_b2 = fftconvolve(ones_a, b * b, mode="full")
    count = fftconvolve(ones_a, ones_b, mode="full")
    return s_ab, s_a, s_b, s_a2, s_b2, np.rint(count)


def correlation_surface(frame_s: DetectorFrame, frame_i: DetectorFrame,
                        center: Optional[Tuple[float, float]] = None,
                        min_pairs: int = 2):
    """gamma over every integer shift of the mirrored pairing.

    Entry (sy, sx) is the correlation degree of pairs
    (p, round(2c) - p + (sy, sx)); the baseline-corrected self variances
    enter the denominator.  Shifts with fewer than min_pairs pairs or a
    non-positive variance are NaN.
    """
    _check_congruent(frame_s, frame_i)
    if center is None:
        center = frame_s.center
    ry = math.floor(2.0 * center[0] + 0.5)
    rx = math.floor(2.0 * center[1] + 0.5)
    a = np.asarray(frame_s.data, float)
    b = np.asarray(frame_i.data, float)
    if np.var(a) <= 0 or np.var(b) <= 0:
        raise EstimatorError("zero variance frame; correlation undefined")
    s_ab, s_a, s_b, s_a2, s_b2, k = _pair_sums(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_a = s_a / k
        mean_b = s_b / k
        var_a = s_a2 / k - mean_a ** 2 - frame_s.vacuum_var
        var_b = s_b2 / k - mean_b ** 2 - frame_i.vacuum_var
        if frame_s.background_included:
            var_a = var_a - frame_s.sigma_b_pe ** 2
            var_b = var_b - frame_i.sigma_b_pe ** 2
        cov = s_ab / k - mean_a * mean_b
        gamma = cov / np.sqrt(var_a * var_b)
    gamma[(k < min_pairs) | ~np.isfinite(gamma)] = np.nan
    h, w = a.shape
    sy = np.arange(2 * h - 1) - ry
    sx = np.arange(2 * w - 1) - rx
    return gamma, sy, sx


def correlation_degree(frame_s: DetectorFrame, frame_i: DetectorFrame,
                       center: Optional[Tuple[float, float]] = None,
                       shift_range: int = 10,
                       full_surface: bool = False) -> CorrelationProfile:
    """Correlation degree profiles along each axis through the peak.

    The peak is searched on the full 2D shift surface within
    +-shift_range of the exact mirror pairing; the per-axis profiles
    are sections of that surface through the peak (the default, matching
    how transverse profiles are usually displayed); full_surface=True
    additionally returns the windowed 2D surface.
    """
    gamma, sy, sx = correlation_surface(frame_s, frame_i, center)
    iy0 = int(np.where(sy == 0)[0][0])
    ix0 = int(np.where(sx == 0)[0][0])
    r = int(shift_range)
    wy = slice(max(iy0 - r, 0), min(iy0 + r + 1, gamma.shape[0]))
    wx = slice(max(ix0 - r, 0), min(ix0 + r + 1, gamma.shape[1]))
    window = gamma[wy, wx]
    if np.all(np.isnan(window)):
        raise EstimatorError("correlation undefined everywhere in range")
    flat = np.nanargmax(window)
    py, px = np.unravel_index(flat, window.shape)
    py += wy.start
    px += wx.start
    profile_x = gamma[py, wx]
    profile_y = gamma[wy, px]
    return CorrelationProfile(
        shifts_x=sx[wx].copy(), gamma_x=profile_x.copy(),
        shifts_y=sy[wy].copy(), gamma_y=profile_y.copy(),
        peak=float(gamma[py, px]),
        peak_shift=(int(sy[py]), int(sx[px])),
        surface=window.copy() if full_surface else None,
        surface_shifts=(sy[wy].copy(), sx[wx].copy()) if full_surface else None)


def fwhm_interpolated(x: np.ndarray, y: np.ndarray) -> float:
    """FWHM of a sampled single-peak profile by linear interpolation.

    Raises if the maximum sits on the range boundary or a half-maximum
    crossing is not bracketed (range too narrow).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ok = np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 3:
        raise EstimatorError("profile too short for a FWHM estimate")
    ipk = int(np.argmax(y))
    if ipk in (0, x.size - 1):
        raise EstimatorError("profile peak at range boundary; widen the "
                             "shift range")
    half = y[ipk] / 2.0

    def cross(side):
        idx = range(ipk, 0, -1) if side < 0 else range(ipk, x.size - 1)
        for i in idx:
            j = i - 1 if side < 0 else i + 1
            if (y[i] - half) * (y[j] - half) <= 0 and y[i] != y[j]:
                t = (half - y[i]) / (y[j] - y[i])
                return x[i] + t * (x[j] - x[i])
        raise EstimatorError("half-maximum not bracketed; widen the shift "
                             "range")

    return float(cross(+1) - cross(-1))


def coherence_length(profile: CorrelationProfile,
                     axis: str = "x") -> float:
    """FWHM (in pixels) of the correlation-degree profile on one axis."""
    if axis == "x":
        return fwhm_interpolated(profile.shifts_x, profile.gamma_x)
    if axis == "y":
        return fwhm_interpolated(profile.shifts_y, profile.gamma_y)
    raise EstimatorError(f"unknown axis {axis!r}")


# ---------------------------------------------------------------------------
# per-ensemble report


@dataclass
class CorrelationReport:
    """All single-shot estimators for one frame pair."""

    mean_s: float
    mean_i: float
    mean_sum: float
    diff_var_measured: float       # pe^2, before background subtraction
    diff_var: float                # pe^2, background corrected
    sigma2_norm: float             # diff_var / mean_sum
    gamma_peak: float
    gamma_peak_shift: Tuple[int, int]
    gamma_profile_x: List[Tuple[float, float]]
    gamma_profile_y: List[Tuple[float, float]]
    x_coh_px: Dict[str, float]
    x_coh_m: Dict[str, float]
    gamma_lim_empirical: float
    gamma_lim_thermal: Optional[float]
    m_thermal_direct: float
    cs_margin: float
    cs_violated: bool
    subshot: bool
    k_pairs: int
    dropped_pairs: int
    flags: List[str]
    gain: float
    master_seed: int
    shot_index: int
    binning: int

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(asdict(self), indent=indent, default=float)

    def to_text(self) -> str:
        lines = [
            f"pairs K={self.k_pairs} (dropped {self.dropped_pairs}), "
            f"binning N={self.binning}, gain g={self.gain}",
            f"<n_s> = {self.mean_s:.4g} pe, <n_i> = {self.mean_i:.4g} pe, "
            f"<n_s+n_i> = {self.mean_sum:.4g} pe",
            f"sigma2(s-i) measured = {self.diff_var_measured:.4g} pe^2, "
            f"corrected = {self.diff_var:.4g} pe^2",
            f"sigma2/SNL = {self.sigma2_norm:.4g}  "
            f"[{'sub' if self.subshot else 'above'} shot noise]",
            f"gamma peak = {self.gamma_peak:.4g} at shift "
            f"{self.gamma_peak_shift}",
            f"x_coh = {self.x_coh_px.get('x', float('nan')):.3g} px (x), "
            f"{self.x_coh_px.get('y', float('nan')):.3g} px (y)",
            f"gamma_lim empirical = {self.gamma_lim_empirical:.4g}"
            + (f", thermal = {self.gamma_lim_thermal:.4g}"
               if self.gamma_lim_thermal is not None else ""),
            f"M (direct thermal estimate) = {self.m_thermal_direct:.4g}",
            f"Cauchy-Schwarz margin = {self.cs_margin:.4g} pe^2 "
            f"[{'violated (quantum)' if self.cs_violated else 'classical'}]",
        ]
        if self.flags:
            lines.append("flags: " + ", ".join(self.flags))
        return "\n".join(lines)


def analyze_pair(frame_s: DetectorFrame, frame_i: DetectorFrame,
                 dx: float = 0.0, dy: float = 0.0,
                 shift_range: int = 10, pairing: str = "round",
                 m_thermal: Optional[float] = None) -> CorrelationReport:
    """Full estimator suite for one frame pair."""
    e = build_ensemble(frame_s, frame_i, dx=dx, dy=dy, pairing=pairing)
    mom = ensemble_moments(e)
    measured, corrected = corrected_difference_variance(e)
    flags = []
    if corrected < 0:
        flags.append("negative corrected difference variance "
                     "(over-subtraction); reported unclamped")
    sigma2n = snl_normalize(corrected, mom["mean_sum"]) \
        if mom["mean_sum"] > 0 else math.nan
    if not mom["mean_sum"] > 0:
        flags.append("non-positive mean sum; SNL normalization undefined")

    prof = correlation_degree(frame_s, frame_i, shift_range=shift_range)
    xc_px, xc_m = {}, {}
    for ax in ("x", "y"):
        try:
            w = coherence_length(prof, ax)
            xc_px[ax] = w
            xc_m[ax] = w * frame_s.pixel_pitch_m * frame_s.binning
        except EstimatorError as err:
            xc_px[ax] = math.nan
            xc_m[ax] = math.nan
            flags.append(f"x_coh({ax}) unavailable: {err}")

    mean_si = 0.5 * mom["mean_sum"]
    var_si = 0.5 * (mom["var_s"] + mom["var_i"])
    try:
        glim = quantum_bound(mean_si, variance=var_si)
    except EstimatorError:
        glim = math.nan
        flags.append("gamma_lim empirical undefined (non-positive variance)")
    glim_t = (quantum_bound(mean_si, M=m_thermal)
              if m_thermal is not None else None)
    cs = cauchy_schwarz_check(e)
    if cs.negative_self:
        flags.append("negative normally-ordered self-correlation; direct "
                     "Cauchy-Schwarz form used")
    return CorrelationReport(
        mean_s=mom["mean_s"], mean_i=mom["mean_i"], mean_sum=mom["mean_sum"],
        diff_var_measured=measured, diff_var=corrected,
        sigma2_norm=sigma2n,
        gamma_peak=prof.peak, gamma_peak_shift=prof.peak_shift,
        gamma_profile_x=list(zip(map(float, prof.shifts_x),
                                 map(float, prof.gamma_x))),
        gamma_profile_y=list(zip(map(float, prof.shifts_y),
                                 map(float, prof.gamma_y))),
        x_coh_px=xc_px, x_coh_m=xc_m,
        gamma_lim_empirical=glim, gamma_lim_thermal=glim_t,
        m_thermal_direct=thermal_m_direct(
            [mom["mean_s"], mom["mean_i"]], [mom["var_s"], mom["var_i"]]),
        cs_margin=cs.margin, cs_violated=cs.violated,
        subshot=bool(np.isfinite(sigma2n) and sigma2n < 1.0),
        k_pairs=e.k, dropped_pairs=e.dropped, flags=flags,
        gain=frame_s.gain, master_seed=frame_s.master_seed,
        shot_index=frame_s.shot_index, binning=frame_s.binning)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepTable:
    kind: str                       # "gain" | "binning" | "misalignment"
    columns: List[str]
    rows: List[Dict[str, float]]
    meta: Dict[str, object] = field(default_factory=dict)

    def sorted_rows(self) -> List[Dict[str, float]]:
        key = self.columns[0]
        return sorted(self.rows, key=lambda r: (r[key], r.get("shot", 0)))

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.sorted_rows()], dtype=float)

    def to_csv(self) -> str:
        out = ["# twinbeam sweep kind=" + self.kind]
        for k, v in sorted(self.meta.items()):
            if isinstance(v, (int, float, str)):
                out.append(f"# {k} = {v}")
        out.append(",".join(self.columns))
        for r in self.sorted_rows():
            out.append(",".join(_fmt(r.get(c)) for c in self.columns))
        return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _row_stats(frame_s: DetectorFrame, frame_i: DetectorFrame,
               dx: float = 0.0, shift_range: int = 8) -> Dict[str, float]:
    e = build_ensemble(frame_s, frame_i, dx=dx)
    mom = ensemble_moments(e)
    _, corrected = corrected_difference_variance(e)
    row = {
        "sigma2_norm": snl_normalize(corrected, mom["mean_sum"]),
        "mean_sum_pe": mom["mean_sum"],
        "var_s": mom["var_s"], "var_i": mom["var_i"],
        "mean_s": mom["mean_s"], "mean_i": mom["mean_i"],
        "master_seed": frame_s.master_seed, "shot": frame_s.shot_index,
    }
    try:
        prof = correlation_degree(frame_s, frame_i, shift_range=shift_range)
        row["gamma_peak"] = prof.peak
        row["x_coh_px"] = coherence_length(prof, "x")
    except EstimatorError:
        row["gamma_peak"] = math.nan
        row["x_coh_px"] = math.nan
    return row


BIN_COLUMNS = ["binning", "sigma2_norm", "mean_sum_pe", "gamma_peak",
               "x_coh_px", "master_seed", "shot"]


def sweep_binning(pairs: Sequence[Tuple[DetectorFrame, DetectorFrame]],
                  n_list: Sequence[int], shift_range: int = 8) -> SweepTable:
    """sigma2/SNL per shot per NxN binning (single-shot statistics)."""
    rows = []
    for fs, fi in pairs:
        for n in n_list:
            bs, bi = bin_frame(fs, n), bin_frame(fi, n)
            r = _row_stats(bs, bi, shift_range=max(2, shift_range // n))
            r["binning"] = n
            rows.append({c: r.get(c, math.nan) for c in BIN_COLUMNS})
    return SweepTable("binning", BIN_COLUMNS, rows)


MIS_COLUMNS = ["dx_symm_px", "sigma2_norm", "mean_sum_pe", "gamma_peak",
               "x_coh_px", "master_seed", "shot"]


@dataclass
class MisalignmentFits:
    m_thermal: float
    x_coh_px: float
    saturation_measured: float
    saturation_predicted: float        # 1 + <n_{s,i}>/M form
    saturation_predicted_sum_form: float  # 1 + <n_s+n_i>/(2M) form
    crossing_dx_px: float
    crossing_over_xcoh: float


def sweep_misalignment(pairs: Sequence[Tuple[DetectorFrame, DetectorFrame]],
                       dx_list: Sequence[float],
                       shift_range: int = 10) -> SweepTable:
    """sigma2/SNL versus symmetry-center misalignment for one gain group.

    dx_list must include 0 (the aligned reference).  The attached fits
    report the thermal degeneracy factor from single-beam statistics, the
    measured saturation at the largest offset against both predicted
    forms, and the sub/above-shot-noise crossing point.
    """
    dx_list = list(dx_list)
    if not any(d == 0 for d in dx_list):
        raise EstimatorError("dx_list must include 0")
    rows = []
    means_sb, vars_sb = [], []
    xcohs = []
    for fs, fi in pairs:
        for dx in dx_list:
            r = _row_stats(fs, fi, dx=dx, shift_range=shift_range)
            r["dx_symm_px"] = dx
            if dx == 0:
                means_sb += [r["mean_s"], r["mean_i"]]
                vars_sb += [r["var_s"], r["var_i"]]
                if np.isfinite(r["x_coh_px"]):
                    xcohs.append(r["x_coh_px"])
            rows.append({c: r.get(c, math.nan) for c in MIS_COLUMNS})
    table = SweepTable("misalignment", MIS_COLUMNS, rows)

    m_th = thermal_m_direct(means_sb, vars_sb)
    x_coh = float(np.mean(xcohs)) if xcohs else math.nan
    dxs = np.array(sorted(set(dx_list)), dtype=float)
    prof = np.array([np.mean([r["sigma2_norm"] for r in rows
                              if r["dx_symm_px"] == d]) for d in dxs])
    mean_si = 0.5 * np.mean([r["mean_sum_pe"] for r in rows
                             if r["dx_symm_px"] == 0])
    sat_meas = float(prof[-1])
    sat_pred = 1.0 + mean_si / m_th if np.isfinite(m_th) else 1.0
    crossing = math.nan
    for i in range(len(dxs) - 1):
        if (prof[i] - 1.0) * (prof[i + 1] - 1.0) <= 0 and prof[i] != prof[i + 1]:
            t = (1.0 - prof[i]) / (prof[i + 1] - prof[i])
            crossing = float(dxs[i] + t * (dxs[i + 1] - dxs[i]))
            break
    table.meta["fits"] = MisalignmentFits(
        m_thermal=m_th, x_coh_px=x_coh,
        saturation_measured=sat_meas, saturation_predicted=sat_pred,
        saturation_predicted_sum_form=sat_pred,
        crossing_dx_px=crossing,
        crossing_over_xcoh=crossing / x_coh if x_coh else math.nan)
    return table
