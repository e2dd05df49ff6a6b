"""Detection chain: lens far field, efficiency loss, pixel integration.

The far field is sampled on the centered lattice-frequency grid: the
collinear direction q = 0 is the cell at index n/2, the detection region
is placed symmetrically around it, and the declared symmetry center of a
frame is the exact pixel coordinate of that cell.  Lattice modes are the
exact eigenmodes of the periodic dynamics, so mirror pairing about the
center cell is artifact-free (exact when each pixel is a single cell;
fractional-pixel rounding otherwise, as for a real CCD).

Pixel values are real-valued photoelectron (pe) estimates in the Wigner
(symmetric-ordering) convention: n = sum over cells and time slices of
(|a|^2 - 1/2).  The same convention puts a known deterministic baseline
of 1/4 per contributing cell into every pixel *variance*; frames record
it (vacuum_var) so the estimators can remove it.  A Poissonian
integer-sampling path is provided for the semiclassical calibration
tests only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from .lattice import (ComplexField, ConfigError, GridSpec, ShotSeed,
                      STREAM_BACKGROUND_IDLER, STREAM_BACKGROUND_SIGNAL,
                      STREAM_LOSS_IDLER, STREAM_LOSS_SIGNAL, centered_fft2)


@dataclass(frozen=True)
class DetectorConfig:
    """Lens + CCD geometry and the lumped detection efficiency."""

    lens_f_m: float = 0.1
    pixel_pitch_m: float = 20e-6
    region_width_px: int = 100   # along x (walk-off axis)
    region_height_px: int = 40
    eta_tot: float = 0.75
    sigma_b_pe: float = 7.0
    center: Optional[Tuple[float, float]] = None  # (cy, cx) region px coords

    def __post_init__(self):
        if not 0.0 <= self.eta_tot <= 1.0:
            raise ConfigError("eta_tot must lie in [0, 1]")
        if self.sigma_b_pe < 0:
            raise ConfigError("sigma_b must be non-negative")
        if self.lens_f_m <= 0 or self.pixel_pitch_m <= 0:
            raise ConfigError("lens focal length and pixel pitch must be positive")
        if self.region_width_px < 1 or self.region_height_px < 1:
            raise ConfigError("region box must be at least 1x1 pixels")


def cell_pitch_m(grid: GridSpec, det: DetectorConfig, lambda_m: float) -> float:
    """Far-field cell size mapped to the detector plane, f*lambda/(n*dx)."""
    return det.lens_f_m * lambda_m / (grid.nx * grid.dx)


def cells_per_pixel(grid: GridSpec, det: DetectorConfig, lambda_m: float) -> int:
    """Integer number of far-field cells per detector pixel (per axis)."""
    for n, d in ((grid.nx, grid.dx), (grid.ny, grid.dy)):
        m = det.pixel_pitch_m * n * d / (det.lens_f_m * lambda_m)
        if abs(m - round(m)) > 1e-6 or round(m) < 1:
            raise ConfigError(
                f"pixel pitch is {m:.6f} far-field cells; it must be an "
                "integer multiple of f*lambda/(n*dx) - adjust dx, nx or the "
                "lens focal length")
    return int(round(det.pixel_pitch_m * grid.nx * grid.dx
                     / (det.lens_f_m * lambda_m)))


def far_field(f: ComplexField, det: DetectorConfig,
              lambda_m: float = 704e-9) -> ComplexField:
    """Unitary lens transform to the detector plane, per temporal slice.

    Output index j along each transverse axis corresponds monotonically
    to the detector coordinate x_j = lens_f * lambda * q_j / (2 pi) with
    q_j = (j - n/2 + 1/2) * 2 pi / (n dx).
    """
    grid = f.grid
    m = cells_per_pixel(grid, det, lambda_m)
    for span, need, name in (
            (grid.nx, det.region_width_px * m, "width"),
            (grid.ny, det.region_height_px * m, "height")):
        if need > span:
            raise ConfigError(
                f"detector region {name} ({need} cells) exceeds the mapped "
                f"far-field extent ({span} cells)")
    return f.with_data(shifted_fft2(f.data))


def apply_loss(f: ComplexField, eta: float, seed: ShotSeed) -> ComplexField:
    """Lumped detection efficiency as a vacuum admixture.

    a' = sqrt(eta) a + sqrt(1-eta) v with v fresh Wigner vacuum; models
    the full detection line (transmission plus CCD efficiency).
    """
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must lie in [0, 1]")
    if eta == 1.0:
        return f
    stream = (STREAM_LOSS_SIGNAL if f.pol == "ordinary"
              else STREAM_LOSS_IDLER)
    rng = seed.rng(stream)
    v = 0.5 * (rng.standard_normal(f.grid.shape)
               + 1j * rng.standard_normal(f.grid.shape))
    return f.with_data(math.sqrt(eta) * f.data + math.sqrt(1.0 - eta) * v)


@dataclass(frozen=True)
class DetectorFrame:
    """Photoelectron values for one detection region, plus acquisition
    metadata.  Values are real (Wigner intensity integrals), so single
    pixels may legitimately be negative."""

    label: str                      # "signal" | "idler"
    data: np.ndarray = field(repr=False)
    pixel_pitch_m: float = 20e-6
    binning: int = 1
    eta: float = 1.0
    sigma_b_pe: float = 0.0         # per current (possibly binned) pixel
    gain: float = 0.0
    master_seed: int = 0
    shot_index: int = 0
    background_included: bool = False
    sampling: str = "wigner"        # "wigner" | "poisson" | "external"
    vacuum_var: float = 0.0         # Wigner baseline per pixel (pe^2)
    center: Tuple[float, float] = (0.0, 0.0)  # (cy, cx), fractional px
    cells_per_pixel: int = 1
    nt: int = 1
    trimmed: Tuple[int, int] = (0, 0)  # rows/cols dropped by binning

    def __post_init__(self):
        if self.data.ndim != 2:
            raise ValueError("frame data must be 2D")
        self.data.setflags(write=False)

    @property
    def shape(self):
        return self.data.shape


def _region_slices(grid: GridSpec, det: DetectorConfig, m: int):
    w_cells = det.region_width_px * m
    h_cells = det.region_height_px * m
    if w_cells % 2 or h_cells % 2:
        raise ConfigError(
            "region span in far-field cells must be even so the box can be "
            "centered on the symmetry corner; adjust region size or pixel "
            "pitch")
    x0 = (grid.nx - w_cells) // 2
    y0 = (grid.ny - h_cells) // 2
    return slice(y0, y0 + h_cells), slice(x0, x0 + w_cells)


def integrate_pixels(f: ComplexField, det: DetectorConfig,
                     lambda_m: float = 704e-9, gain: float = 0.0,
                     seed: Optional[ShotSeed] = None) -> DetectorFrame:
    """Integrate a far-field field over detector pixels.

    pe value per pixel: sum over the pixel's cells and all time slices of
    (|a|^2 - 1/2); the -1/2 per (cell x slice) is the symmetric-ordering
    correction, exact for the mean.  The per-pixel variance baseline
    (cells * nt / 4) is recorded as vacuum_var, not subtracted from the
    data.
    """
    grid = f.grid
    m = cells_per_pixel(grid, det, lambda_m)
    sy, sx = _region_slices(grid, det, m)
    inten = np.abs(f.data[sy, sx, :]) ** 2
    h, w = det.region_height_px, det.region_width_px
    # sum m x m cell blocks and the whole temporal axis
    block = inten.reshape(h, m, w, m, grid.nt).sum(axis=(1, 3, 4))
    ncells = m * m * grid.nt
    pe = block - 0.5 * ncells
    label = "signal" if f.pol == "ordinary" else "idler"
    center = det.center if det.center is not None else ((h - 1) / 2.0,
                                                        (w - 1) / 2.0)
    return DetectorFrame(
        label=label, data=pe, pixel_pitch_m=det.pixel_pitch_m, binning=1,
        eta=det.eta_tot, sigma_b_pe=0.0, gain=gain,
        master_seed=seed.master_seed if seed else 0,
        shot_index=seed.shot_index if seed else 0,
        background_included=False, sampling="wigner",
        vacuum_var=ncells / 4.0, center=center, cells_per_pixel=m,
        nt=grid.nt)


def add_background(frame: DetectorFrame, sigma_b: float,
                   seed: ShotSeed) -> DetectorFrame:
    """Add zero-mean Gaussian background of standard deviation sigma_b
    (pe) to every pixel and set the background flag."""
    if sigma_b < 0:
        raise ConfigError("sigma_b must be non-negative")
    if sigma_b == 0.0:
        return frame
    stream = (STREAM_BACKGROUND_SIGNAL if frame.label == "signal"
              else STREAM_BACKGROUND_IDLER)
    rng = seed.rng(stream)
    noisy = frame.data + sigma_b * rng.standard_normal(frame.data.shape)
    return replace(frame, data=noisy, sigma_b_pe=sigma_b,
                   background_included=True)


def bin_frame(frame: DetectorFrame, n: int) -> DetectorFrame:
    """Non-overlapping NxN pixel sums.

    Region dimensions not divisible by N lose trailing rows/columns
    (recorded in metadata).  The declared symmetry center, the per-pixel
    background sigma and the Wigner variance baseline transform with the
    binning.
    """
    if n < 1 or int(n) != n:
        raise ConfigError("binning factor must be a positive integer")
    n = int(n)
    h, w = frame.data.shape
    if n > h or n > w:
        raise ConfigError(f"binning factor {n} exceeds the region {h}x{w}")
    if n == 1:
        return frame
    h2, w2 = h // n, w // n
    trimmed = (h - h2 * n, w - w2 * n)
    d = frame.data[:h2 * n, :w2 * n].reshape(h2, n, w2, n).sum(axis=(1, 3))
    cy, cx = frame.center
    center = ((cy - (n - 1) / 2.0) / n, (cx - (n - 1) / 2.0) / n)
    return replace(frame, data=d, binning=frame.binning * n,
                   sigma_b_pe=frame.sigma_b_pe * n,
                   vacuum_var=frame.vacuum_var * n * n,
                   center=center, trimmed=trimmed)


def poisson_frame(intensity: np.ndarray, seed: ShotSeed, label: str,
                  pixel_pitch_m: float = 20e-6,
                  center: Optional[Tuple[float, float]] = None,
                  stream: int = None) -> DetectorFrame:
    """Semiclassical integer-sampling pipeline: Poissonian pe counts for a
    deterministic intensity map (pe per pixel).  Calibration tests only."""
    intensity = np.asarray(intensity, dtype=float)
    if (intensity < 0).any():
        raise ValueError("intensity map must be non-negative")
    from .lattice import STREAM_SEMICLASSICAL
    rng = seed.rng(STREAM_SEMICLASSICAL if stream is None else stream)
    data = rng.poisson(intensity).astype(float)
    h, w = intensity.shape
    if center is None:
        center = ((h - 1) / 2.0, (w - 1) / 2.0)
    return DetectorFrame(label=label, data=data, pixel_pitch_m=pixel_pitch_m,
                         binning=1, eta=1.0, sigma_b_pe=0.0, gain=0.0,
                         master_seed=seed.master_seed,
                         shot_index=seed.shot_index,
                         background_included=False, sampling="poisson",
                         vacuum_var=0.0, center=center, cells_per_pixel=1,
                         nt=1)
