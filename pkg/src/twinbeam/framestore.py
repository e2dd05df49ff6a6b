"""Bit-exact frame persistence and CSV ingestion.

One file holds one shot: the signal region then the idler region, as
little-endian float64 row-major payloads behind a fixed binary header, so
the pairing of the two regions can never be lost.  A CRC-32 of the
payload detects corruption; a version field refuses files written by an
incompatible layout.

Byte layout (all little-endian):

    offset  size  field
    0       4     magic "TBFR"
    4       2     format version (currently 1)
    6       1     endianness marker (1 = little)
    7       1     flags: bit0 background_included
    8       1     sampling kind (0 wigner, 1 poisson, 2 external)
    9       3     reserved (zero)
    12      4     region height (pixels, u32)
    16      4     region width (pixels, u32)
    20      4     binning N (u32)
    24      4     cells per pixel (u32)
    28      4     temporal slices nt (u32)
    32      8     pixel pitch (m, f64)
    40      8     eta_tot (f64)
    48      8     sigma_b (pe, f64)
    56      8     gain g (f64)
    64      8     master seed (u64)
    72      8     shot index (u64)
    80      8     center y (f64, region pixel coords)
    88      8     center x (f64)
    96      8     vacuum variance per pixel (pe^2, f64)
    104     8     reserved (zero)
    112     -     signal payload, then idler payload (h*w f64 each)
    end     4     CRC-32 of both payloads (u32)
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .detector import DetectorFrame

MAGIC = b"TBFR"
VERSION = 1
_HEADER = struct.Struct("<4sHBBB3xIIIII d d d d Q Q d d d d")
_SAMPLING = {"wigner": 0, "poisson": 1, "external": 2}
_SAMPLING_BACK = {v: k for k, v in _SAMPLING.items()}


class FrameFormatError(IOError):
    """Base class for frame-file problems."""


class ChecksumError(FrameFormatError):
    pass


class VersionError(FrameFormatError):
    pass


class TruncatedFileError(FrameFormatError):
    pass


def write_frames(frame_s: DetectorFrame, frame_i: DetectorFrame,
                 path: Union[str, Path]) -> None:
    """Persist one shot (signal + idler regions) to a frame file."""
    if frame_s.shape != frame_i.shape:
        raise ValueError("signal and idler regions must be congruent")
    for k in ("pixel_pitch_m", "binning", "eta", "sigma_b_pe", "gain",
              "master_seed", "shot_index", "background_included", "sampling",
              "vacuum_var", "center", "cells_per_pixel", "nt"):
        if getattr(frame_s, k) != getattr(frame_i, k):
            raise ValueError(f"signal/idler metadata disagree on {k}")
    h, w = frame_s.shape
    header = _HEADER.pack(
        MAGIC, VERSION, 1, int(frame_s.background_included),
        _SAMPLING[frame_s.sampling], h, w, frame_s.binning,
        frame_s.cells_per_pixel, frame_s.nt, frame_s.pixel_pitch_m,
        frame_s.eta, frame_s.sigma_b_pe, frame_s.gain, frame_s.master_seed,
        frame_s.shot_index, frame_s.center[0], frame_s.center[1],
        frame_s.vacuum_var, 0.0)
    payload = (np.ascontiguousarray(frame_s.data, dtype="<f8").tobytes()
               + np.ascontiguousarray(frame_i.data, dtype="<f8").tobytes())
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    Path(path).write_bytes(header + payload + struct.pack("<I", crc))


def read_frames(path: Union[str, Path]) -> Tuple[DetectorFrame, DetectorFrame]:
    """Load one shot; byte-exact inverse of write_frames."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size + 4:
        raise TruncatedFileError(f"{path}: file shorter than the header")
    head = blob[:_HEADER.size]
    if head[:4] != MAGIC:
        raise FrameFormatError(f"{path}: not a twinbeam frame file "
                               f"(bad magic {head[:4]!r})")
    (_, version, endian, flags, sampling, h, w, binning, cpp, nt, pitch,
     eta, sigma_b, gain, seed, shot, cy, cx, vac, _res) = _HEADER.unpack(head)
    if version != VERSION:
        raise VersionError(f"{path}: format version {version} is not "
                           f"supported (expected {VERSION})")
    if endian != 1:
        raise FrameFormatError(f"{path}: unsupported endianness marker "
                               f"{endian}")
    n = h * w * 8
    expected = _HEADER.size + 2 * n + 4
    if len(blob) != expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} bytes, found {len(blob)}")
    payload = blob[_HEADER.size:_HEADER.size + 2 * n]
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    meta = dict(pixel_pitch_m=pitch, binning=binning, eta=eta,
                sigma_b_pe=sigma_b, gain=gain, master_seed=seed,
                shot_index=shot, background_included=bool(flags & 1),
                sampling=_SAMPLING_BACK.get(sampling, "external"),
                vacuum_var=vac, center=(cy, cx), cells_per_pixel=cpp, nt=nt)
    sig = np.frombuffer(payload[:n], dtype="<f8").reshape(h, w).copy()
    idl = np.frombuffer(payload[n:], dtype="<f8").reshape(h, w).copy()
    return (DetectorFrame(label="signal", data=sig, **meta),
            DetectorFrame(label="idler", data=idl, **meta))


def _parse_csv_block(lines, path, row_offset=0) -> np.ndarray:
    rows = []
    width = None
    for i, line in enumerate(lines):
        cells = [c.strip() for c in line.split(",")]
        try:
            vals = [float(c) for c in cells if c != ""]
        except ValueError as err:
            raise FrameFormatError(
                f"{path}: non-numeric cell in row {row_offset + i + 1}: {err}")
        if not vals:
            continue
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise FrameFormatError(
                f"{path}: ragged row {row_offset + i + 1}: expected "
                f"{width} columns, found {len(vals)}")
        rows.append(vals)
    if not rows:
        raise FrameFormatError(f"{path}: no numeric data found")
    return np.array(rows, dtype=float)


def import_csv(source, pixel_pitch_m: float,
               sigma_b_pe: float = 0.0,
               center: Optional[Tuple[float, float]] = None,
               background_included: bool = False,
               gain: float = 0.0) -> Tuple[DetectorFrame, DetectorFrame]:
    """Ingest externally acquired (pre-calibrated) CCD regions from CSV.

    source is either one path whose contents hold two blank-line
    separated numeric blocks (signal then idler), or a (signal_path,
    idler_path) pair.  Dialect: comma separated, dot decimal, no header
    row.  pixel_pitch_m is mandatory; frames come back with
    sampling="external" and no Wigner baseline.
    """
    if pixel_pitch_m is None or not pixel_pitch_m > 0:
        raise FrameFormatError("pixel_pitch_m metadata is mandatory for CSV "
                               "import and must be positive")
    if isinstance(source, (tuple, list)):
        if len(source) != 2:
            raise FrameFormatError("expected (signal, idler) paths")
        blocks = []
        for p in source:
            text = Path(p).read_text()
            blocks.append(_parse_csv_block(text.splitlines(), p))
        sig, idl = blocks
        name = str(source[0])
    else:
        text = Path(source).read_text()
        parts = [b for b in text.split("\n\n") if b.strip()]
        if len(parts) != 2:
            raise FrameFormatError(
                f"{source}: expected two blank-line separated blocks "
                f"(signal, idler), found {len(parts)}")
        sig = _parse_csv_block(parts[0].splitlines(), source)
        off = parts[0].count("\n") + 2
        idl = _parse_csv_block(parts[1].splitlines(), source, row_offset=off)
        name = str(source)
    if sig.shape != idl.shape:
        raise FrameFormatError(f"{name}: signal and idler blocks are not "
                               f"congruent: {sig.shape} vs {idl.shape}")
    h, w = sig.shape
    c = center if center is not None else ((h - 1) / 2.0, (w - 1) / 2.0)
    meta = dict(pixel_pitch_m=pixel_pitch_m, binning=1, eta=1.0,
                sigma_b_pe=sigma_b_pe, gain=gain, master_seed=0, shot_index=0,
                background_included=background_included, sampling="external",
                vacuum_var=0.0, center=c, cells_per_pixel=1, nt=1)
    return (DetectorFrame(label="signal", data=sig, **meta),
            DetectorFrame(label="idler", data=idl, **meta))
