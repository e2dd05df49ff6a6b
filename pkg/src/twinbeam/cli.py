"""Command-line orchestration: simulate, analyze, sweep, selftest.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 self-test failure, 1 unexpected error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import framestore, stats
from .config import RunConfig, load_config
from .detector import DetectorFrame, poisson_frame
from .lattice import ConfigError, ShotSeed
from .pipeline import shot_seed, simulate_frames, simulate_one
from .propagator import NumericalDivergenceError, plane_wave_gain

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_SELFTEST = 4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", default=None,
                   help="run-configuration file (sectioned key=value)")
    p.add_argument("--out", metavar="DIR", default=None,
                   help="output directory (overrides io.out_dir)")
    p.add_argument("--seed", metavar="U64", type=int, default=None,
                   help="master seed (overrides io.master_seed)")
    p.add_argument("--workers", metavar="N", type=int, default=None,
                   help="parallel workers (overrides io.workers)")
    p.add_argument("--shots", metavar="N", type=int, default=None,
                   help="shots per gain (overrides io.shots)")


def _load(args) -> RunConfig:
    overrides = {}
    if args.out is not None:
        overrides["io.out_dir"] = args.out
    if args.seed is not None:
        overrides["io.master_seed"] = str(args.seed)
    if args.workers is not None:
        overrides["io.workers"] = str(args.workers)
    if args.shots is not None:
        overrides["io.shots"] = str(args.shots)
    return load_config(path=args.config, overrides=overrides)


def frame_filename(gain: float, shot: int) -> str:
    return f"frames_g{gain:g}_s{shot:04d}.tbf"


def _simulate_all(cfg: RunConfig):
    """Yield (gain, shot, frame_s, frame_i) for every configured pulse."""
    jobs = [(gi, s) for gi in range(len(cfg.gains))
            for s in range(cfg.io.shots)]
    if cfg.io.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=cfg.io.workers) as pool:
            futures = [pool.submit(simulate_one, cfg, gi, s) for gi, s in jobs]
            for fut in futures:
                yield fut.result()
    else:
        for gi, s in jobs:
            yield simulate_one(cfg, gi, s)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.io.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_gain = {}
    for gain, shot, fs, fi in _simulate_all(cfg):
        path = out / frame_filename(gain, shot)
        framestore.write_frames(fs, fi, path)
        e = stats.build_ensemble(fs, fi)
        mean_sum = float(np.mean(e.n_s + e.n_i))
        per_gain.setdefault(gain, []).append(mean_sum)
        print(f"g={gain:g} shot={shot}: <n_s+n_i> = {mean_sum:.3f} pe "
              f"-> {path}")
    for gain in sorted(per_gain):
        vals = per_gain[gain]
        print(f"g={gain:g}: {len(vals)} shots, mean <n_s+n_i> = "
              f"{np.mean(vals):.3f} pe")
    return EXIT_OK


def _collect_frames(paths: Sequence[str]) -> List[Tuple[DetectorFrame,
                                                        DetectorFrame]]:
    files: List[str] = []
    for p in paths:
        if os.path.isdir(p):
            files.extend(sorted(glob.glob(os.path.join(p, "*.tbf"))))
        else:
            files.extend(sorted(glob.glob(p)) or [p])
    if not files:
        raise ConfigError("no frame files matched the given paths")
    return [framestore.read_frames(f) for f in files]


def cmd_analyze(args) -> int:
    cfg = _load(args)
    out = Path(cfg.io.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.csv:
        src = args.csv[0] if len(args.csv) == 1 else tuple(args.csv)
        pitch = args.csv_pixel_um * 1e-6
        pairs = [framestore.import_csv(src, pixel_pitch_m=pitch,
                                       sigma_b_pe=args.csv_sigma_b,
                                       background_included=args.csv_sigma_b > 0)]
    else:
        pairs = _collect_frames(args.frames or [cfg.io.out_dir])

    shift = cfg.analysis.shift_range_px
    scatter_rows = []
    reports = []
    for fs, fi in pairs:
        rep = stats.analyze_pair(fs, fi, shift_range=shift,
                                 pairing=cfg.analysis.pairing,
                                 m_thermal=args.m_thermal)
        reports.append(rep)
        scatter_rows.append({
            "mean_sum_pe": rep.mean_sum, "sigma2_norm": rep.sigma2_norm,
            "gamma_peak": rep.gamma_peak, "gain": rep.gain,
            "master_seed": rep.master_seed, "shot": rep.shot_index})
        print(f"--- shot {rep.shot_index} (g={rep.gain:g}) ---")
        print(rep.to_text())
    table = stats.SweepTable(
        "gain", ["mean_sum_pe", "sigma2_norm", "gamma_peak", "gain",
                 "master_seed", "shot"], scatter_rows,
        meta={"config_digest": cfg.digest})
    (out / "scatter.csv").write_text(table.to_csv())
    (out / "reports.json").write_text(
        "[" + ",\n".join(r.to_json() for r in reports) + "]")
    print(f"wrote {out / 'scatter.csv'} and {out / 'reports.json'}")
    return EXIT_OK


GNUPLOT_STUB = """# gnuplot stub for twinbeam sweep output
set datafile separator ','
set key autotitle columnhead
# adjust columns to taste, e.g.:
# plot 'SWEEP.csv' using 1:2 with points
"""


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = Path(cfg.io.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_gain = {}
    for gain, shot, fs, fi in _simulate_all(cfg):
        by_gain.setdefault(gain, []).append((fs, fi))

    tables = []
    if args.kind == "binning":
        for gain, pairs in sorted(by_gain.items()):
            t = stats.sweep_binning(pairs, cfg.analysis.n_list,
                                    shift_range=cfg.analysis.shift_range_px)
            t.meta.update(gain=gain, config_digest=cfg.digest,
                          master_seed=cfg.io.master_seed)
            tables.append((f"sweep_binning_g{gain:g}.csv", t))
    elif args.kind == "misalignment":
        dx_list = cfg.analysis.dx_symm_px
        if 0.0 not in dx_list:
            dx_list = (0.0,) + tuple(dx_list)
        for gain, pairs in sorted(by_gain.items()):
            t = stats.sweep_misalignment(pairs, dx_list,
                                         shift_range=cfg.analysis.shift_range_px)
            fits = t.meta.pop("fits")
            t.meta.update(gain=gain, config_digest=cfg.digest,
                          master_seed=cfg.io.master_seed,
                          m_thermal=fits.m_thermal, x_coh_px=fits.x_coh_px,
                          saturation_measured=fits.saturation_measured,
                          saturation_predicted=fits.saturation_predicted,
                          crossing_dx_px=fits.crossing_dx_px)
            tables.append((f"sweep_misalignment_g{gain:g}.csv", t))
    elif args.kind == "gain":
        rows = []
        for gain, pairs in sorted(by_gain.items()):
            for fs, fi in pairs:
                e = stats.build_ensemble(fs, fi)
                mom = stats.ensemble_moments(e)
                _, var = stats.corrected_difference_variance(e)
                rows.append({"gain": gain,
                             "mean_sum_pe": mom["mean_sum"],
                             "sigma2_norm": stats.snl_normalize(
                                 var, mom["mean_sum"]),
                             "master_seed": fs.master_seed,
                             "shot": fs.shot_index})
        t = stats.SweepTable("gain", ["gain", "mean_sum_pe", "sigma2_norm",
                                      "master_seed", "shot"], rows,
                             meta={"config_digest": cfg.digest})
        x = t.column("mean_sum_pe")
        y = t.column("sigma2_norm")
        if len(x) >= 2 and np.ptp(x) > 0:
            slope, intercept = np.polyfit(x, y, 1)
            t.meta.update(trend_slope_per_pe=float(slope),
                          trend_intercept=float(intercept))
        tables.append(("sweep_gain.csv", t))
    else:
        raise ConfigError(f"unknown sweep kind {args.kind!r}")

    for name, t in tables:
        (out / name).write_text(t.to_csv())
        print(f"wrote {out / name}")
        for k, v in t.meta.items():
            if isinstance(v, float):
                print(f"  {k} = {v:.4g}")
    (out / "plot_sweep.gp").write_text(GNUPLOT_STUB)
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Semiclassical calibration battery; failures set the exit status."""
    checks: List[Tuple[str, bool, str]] = []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" +
              (f"  ({detail})" if detail else ""))

    # symplectic identity battery for the analytic squeezer
    rng = np.random.default_rng(7)
    gs = rng.uniform(0, 3, 64)
    deltas = rng.uniform(-5e4, 5e4, 64)
    u, v = plane_wave_gain(gs, deltas, 4e-3)
    err = np.abs(np.abs(u) ** 2 - np.abs(v) ** 2 - 1.0).max()
    check("plane-wave oracle |U|^2-|V|^2 = 1", err < 1e-12,
          f"max deviation {err:.2e}")

    # FFT unitarity
    from .lattice import ComplexField, fft_backward, fft_forward, make_grid
    grid = make_grid(32, 32, 4, 1e-5, 1e-5, 1e-13, 8, 5e-4)
    data = (rng.standard_normal(grid.shape)
            + 1j * rng.standard_normal(grid.shape))
    f = ComplexField(grid, "ordinary", data)
    rt = fft_backward(fft_forward(f, "xyt"), "xyt")
    err = np.abs(rt.data - f.data).max()
    check("FFT round trip", err < 1e-12, f"max deviation {err:.2e}")
    p1 = np.sum(np.abs(f.data) ** 2)
    p2 = np.sum(np.abs(fft_forward(f, "xyt").data) ** 2)
    check("Parseval", abs(p1 - p2) / p1 < 1e-12,
          f"relative {abs(p1 - p2) / p1:.2e}")

    # SNL calibration: coherent split beam + background, corrected
    seed = ShotSeed(424242, 0)
    level = 400.0
    shape = (40, 100)  # 4000 pixels, as in the reference regions
    inten = np.full(shape, level)
    fs = poisson_frame(inten, seed, "signal", stream=10)
    fi = poisson_frame(inten, seed, "idler", stream=11)
    from .detector import add_background
    sigma_b = 7.0
    fsb = add_background(fs, sigma_b, seed)
    fib = add_background(fi, sigma_b, seed)
    e = stats.build_ensemble(fsb, fib)
    measured = stats.difference_variance(e)
    corrected = stats.background_correct(measured, sigma_b)
    mean_sum = float(np.mean(e.n_s + e.n_i))
    norm_corr = stats.snl_normalize(corrected, mean_sum)
    norm_raw = stats.snl_normalize(measured, mean_sum)
    check("coherent split beam at SNL after background correction",
          abs(norm_corr - 1.0) < 0.10, f"sigma2/SNL = {norm_corr:.4f}")
    check("uncorrected variance sits above SNL", norm_raw > 1.0,
          f"sigma2/SNL = {norm_raw:.4f}")

    # background standard deviation recovery
    zero = poisson_frame(np.zeros(shape), seed, "signal", stream=12)
    zb = add_background(zero, sigma_b, seed)
    sd = float(np.std(zb.data))
    check("background sigma recovered on a zero frame",
          abs(sd - sigma_b) < 0.2, f"sd = {sd:.3f} pe")

    failed = [c for c in checks if not c[1]]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_SELFTEST


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="twinbeam",
        description="Twin-beam far-field simulator and spatial "
                    "quantum-correlation analysis")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate shot ensembles to frame "
                                        "files")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="run the estimator suite on frames")
    _add_common(p)
    p.add_argument("frames", nargs="*",
                   help="frame files, globs or directories (default: "
                        "io.out_dir)")
    p.add_argument("--csv", nargs="+", metavar="PATH", default=None,
                   help="import external CSV region(s) instead of frame "
                        "files (one two-block file or signal idler)")
    p.add_argument("--csv-pixel-um", type=float, default=20.0,
                   help="pixel pitch for CSV import (microns)")
    p.add_argument("--csv-sigma-b", type=float, default=0.0,
                   help="declared background sigma for CSV import (pe)")
    p.add_argument("--m-thermal", type=float, default=None,
                   help="degeneracy factor for the thermal-form bound")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="gain / binning / misalignment sweeps")
    _add_common(p)
    p.add_argument("--kind", choices=("gain", "binning", "misalignment"),
                   required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="calibration and oracle battery")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalDivergenceError as err:
        print(f"numerical divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except framestore.FrameFormatError as err:
        print(f"frame file error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except stats.EstimatorError as err:
        print(f"analysis error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
