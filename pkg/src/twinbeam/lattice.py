"""Numerical lattices, complex field storage and FFT plumbing.

The transverse/temporal lattice carries the signal and idler envelopes in
units of sqrt(photons per lattice cell).  Vacuum input is sampled in the
symmetric-ordering convention: half a photon per cell on average, i.e.
independent circular complex Gaussians with <|a|^2> = 1/2.

All Fourier transforms here are unitary (norm="ortho") so that the total
photon estimate sum(|a|^2) is basis independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np


class ConfigError(ValueError):
    """Raised when a configuration block violates one of its invariants."""


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


# Independent random streams per shot, keyed by (master_seed, shot, stream).
STREAM_VACUUM_SIGNAL = 0
STREAM_VACUUM_IDLER = 1
STREAM_LOSS_SIGNAL = 2
STREAM_LOSS_IDLER = 3
STREAM_BACKGROUND_SIGNAL = 4
STREAM_BACKGROUND_IDLER = 5
STREAM_SEMICLASSICAL = 6


@dataclass(frozen=True)
class ShotSeed:
    """Deterministic identity of one laser shot.

    The same (master_seed, shot_index) reproduces bit-identical noise in
    every stage of the pipeline, independently of the order in which shots
    are simulated.
    """

    master_seed: int
    shot_index: int = 0

    def rng(self, stream: int) -> np.random.Generator:
        # SeedSequence spawn keys make the streams independent and
        # order-free; shots are re-runnable in isolation.
        ss = np.random.SeedSequence(self.master_seed,
                                    spawn_key=(self.shot_index, stream))
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class GridSpec:
    """Sampling lattice: nx x ny transverse cells, nt temporal slices.

    dx, dy, dt are the cell pitches (m, m, s); nz z-steps of length dz (m)
    cover the crystal.
    """

    nx: int
    ny: int
    nt: int
    dx: float
    dy: float
    dt: float
    nz: int
    dz: float

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.ny, self.nx, self.nt)

    @property
    def ncells(self) -> int:
        return self.nx * self.ny * self.nt

    @property
    def span_x(self) -> float:
        return self.nx * self.dx

    @property
    def span_y(self) -> float:
        return self.ny * self.dy

    @property
    def crystal_length(self) -> float:
        return self.nz * self.dz

    @property
    def q_nyquist(self) -> float:
        """Largest resolvable transverse wavenumber magnitude (rad/m)."""
        return np.pi / max(self.dx, self.dy)

    def qx(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.nx, self.dx)

    def qy(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.ny, self.dy)

    def omega(self) -> np.ndarray:
        """Angular-frequency offsets from the carrier (rad/s)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.nt, self.dt)

    def x(self) -> np.ndarray:
        return (np.arange(self.nx) - self.nx / 2) * self.dx

    def y(self) -> np.ndarray:
        return (np.arange(self.ny) - self.ny / 2) * self.dy

    def t(self) -> np.ndarray:
        return (np.arange(self.nt) - self.nt / 2) * self.dt


def make_grid(nx, ny, nt, dx, dy, dt, nz, dz,
              pump_fwhm=None, crystal_length=None) -> GridSpec:
    """Validate and build a GridSpec.

    pump_fwhm (m), when given, enforces the anti-aliasing margin: the
    transverse span must be at least 4x the pump FWHM so that walk-off
    shifted light wrapping around the periodic box never re-enters the
    pumped region.  crystal_length (m), when given, must equal nz*dz to
    1 part in 1e9.
    """
    for name, v in (("nx", nx), ("ny", ny), ("nt", nt), ("nz", nz)):
        if int(v) != v or v <= 0:
            raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    for name, v in (("dx", dx), ("dy", dy), ("dt", dt), ("dz", dz)):
        if not (v > 0):
            raise ConfigError(f"{name} must be strictly positive, got {v!r}")
    for name, v in (("nx", nx), ("ny", ny), ("nt", nt)):
        if not _is_pow2(int(v)):
            raise ConfigError(f"{name} must be a power of two, got {v}")
    if pump_fwhm is not None:
        if nx * dx < 4.0 * pump_fwhm or ny * dy < 4.0 * pump_fwhm:
            raise ConfigError(
                "transverse span too small: need span >= 4 x pump FWHM "
                f"({nx * dx:.3e} x {ny * dy:.3e} m vs FWHM {pump_fwhm:.3e} m)")
    if crystal_length is not None:
        if abs(nz * dz - crystal_length) > 1e-9 * crystal_length:
            raise ConfigError(
                f"nz*dz = {nz * dz:.12e} m does not match the crystal "
                f"length {crystal_length:.12e} m")
    return GridSpec(int(nx), int(ny), int(nt), float(dx), float(dy),
                    float(dt), int(nz), float(dz))


@dataclass(frozen=True)
class ComplexField:
    """One polarization envelope on the lattice, sqrt(photons/cell) units.

    data axes are (y, x, t).  Instances are treated as immutable; all
    operations return new fields.
    """

    grid: GridSpec
    pol: str  # "ordinary" | "extraordinary"
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.data.shape != self.grid.shape:
            raise ValueError(f"data shape {self.data.shape} does not match "
                             f"grid {self.grid.shape}")
        self.data.setflags(write=False)

    def with_data(self, data: np.ndarray) -> "ComplexField":
        return replace(self, data=data)

    def total_photons(self) -> float:
        """Symmetric-ordered photon estimate sum(|a|^2) - ncells/2."""
        return float(np.sum(np.abs(self.data) ** 2) - self.grid.ncells / 2.0)


def sample_vacuum(grid: GridSpec, seed: ShotSeed) -> Tuple[ComplexField, ComplexField]:
    """Draw the Wigner vacuum input for one shot: signal (o) and idler (e).

    Each cell is an independent circular complex Gaussian with
    <|a|^2> = 1/2 (variance 1/4 in each quadrature).
    """
    fields = []
    for stream, pol in ((STREAM_VACUUM_SIGNAL, "ordinary"),
                        (STREAM_VACUUM_IDLER, "extraordinary")):
        rng = seed.rng(stream)
        a = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        fields.append(ComplexField(grid, pol, 0.5 * a))
    return fields[0], fields[1]


def _axes(mode: str):
    if mode == "xy":
        return (0, 1)
    if mode == "xyt":
        return (0, 1, 2)
    raise ValueError(f"unknown transform mode {mode!r}")


def fft_forward(f: ComplexField, mode: str = "xy") -> ComplexField:
    """Unitary transform to the spectral domain.

    "xy" transforms the transverse axes to (qy, qx); "xyt" additionally
    maps t -> Omega with the e^{-i Omega t} envelope convention (an
    inverse FFT along the time axis), so that a cell (q, Omega) pairs
    with (-q, -Omega) under phase conjugation.
    """
    d = np.fft.fft2(f.data, axes=(0, 1), norm="ortho")
    if mode == "xyt":
        d = np.fft.ifft(d, axis=2, norm="ortho")
    elif mode != "xy":
        _axes(mode)
    return f.with_data(d)


def fft_backward(f: ComplexField, mode: str = "xy") -> ComplexField:
    """Inverse of fft_forward; backward(forward(a)) == a to rounding."""
    d = f.data
    if mode == "xyt":
        d = np.fft.fft(d, axis=2, norm="ortho")
    elif mode != "xy":
        _axes(mode)
    return f.with_data(np.fft.ifft2(d, axes=(0, 1), norm="ortho"))


def centered_fft2(data: np.ndarray) -> np.ndarray:
    """Unitary 2D transform with centered (fftshifted) frequency ordering.

    Output index j along an axis of length n holds the amplitude of the
    lattice mode q_j = (j - n/2) * dq, monotonically: the q = 0 mode sits
    at index n/2, and the q -> -q partner of index j is n - j (the
    Nyquist column j = 0 is its own alias).  Standard lattice modes are
    the exact eigenmodes of the periodic dynamics, so pairing statistics
    on this grid is artifact-free.
    """
    return np.fft.fftshift(np.fft.fft2(data, axes=(0, 1), norm="ortho"),
                           axes=(0, 1))
