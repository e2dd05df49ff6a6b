"""Shot orchestration: propagation -> detection -> frames.

One shot is a pure function of (RunConfig, gain, ShotSeed); distinct
shots share no mutable state and may run in parallel processes.
"""

from __future__ import annotations

from typing import Optional, Tuple

from .config import RunConfig
from .detector import (DetectorFrame, add_background, apply_loss, far_field,
                       integrate_pixels)
from .lattice import ShotSeed
from .propagator import propagate_shot


def simulate_frames(cfg: RunConfig, gain: float, seed: ShotSeed
                    ) -> Tuple[DetectorFrame, DetectorFrame]:
    """Simulate one laser shot and return the (signal, idler) frames."""
    pump = cfg.pump_at(gain)
    shot = propagate_shot(cfg.grid, cfg.crystal, pump, seed)
    lam = cfg.lambda_signal_m
    frames = []
    for out in (shot.signal_out, shot.idler_out):
        far = far_field(out, cfg.detector, lam)
        far = apply_loss(far, cfg.detector.eta_tot, seed)
        frame = integrate_pixels(far, cfg.detector, lam, gain=gain, seed=seed)
        if cfg.background:
            frame = add_background(frame, cfg.detector.sigma_b_pe, seed)
        frames.append(frame)
    return frames[0], frames[1]


def shot_seed(cfg: RunConfig, gain_index: int, shot: int) -> ShotSeed:
    """Global shot numbering: every (gain, shot) is a distinct pulse."""
    return ShotSeed(cfg.io.master_seed, gain_index * cfg.io.shots + shot)


def simulate_one(cfg: RunConfig, gain_index: int, shot: int
                 ) -> Tuple[float, int, DetectorFrame, DetectorFrame]:
    """Worker entry point (picklable) for the process pool."""
    gain = cfg.gains[gain_index]
    fs, fi = simulate_frames(cfg, gain, shot_seed(cfg, gain_index, shot))
    return gain, shot, fs, fi
