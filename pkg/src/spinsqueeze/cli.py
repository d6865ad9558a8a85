"""Batch front end: deterministic pipelines from a config file.

Subcommands: simulate, tomogram, reconstruct, chi-curve, calibrate.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import warnings

import numpy as np

from . import metrology, modes, sequences, tomography, wigner
from .config import ConfigError, RunConfig, default_config_text, load_config
from .modes import ConvergenceError


class DataError(ValueError):
    pass


def _write_atomic(path: str, text: str):
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_twist(cfg: RunConfig, seed: int, verbose=True):
    """Twist spec per config, running the floor calibration when asked."""
    t = cfg["twist"]
    if t["mode"] == "none":
        return cfg.twist(), 0.0
    if t["mode"] == "profile":
        prof = modes.split_sequence_profile(
            cfg.trap(), cfg.scattering(), cfg["physical"]["n_atoms"],
            cfg.twist_time, n_times=t["profile_points"],
            overshoot=t["overshoot"], curve_points=t["curve_points"],
            grid_points=cfg["modes"]["grid_points"],
            transverse=cfg["modes"]["transverse"],
            tol=cfg["modes"]["tolerance"])
        twist = cfg.twist(profile_tables=modes.split_profile_tables(prof))
    else:
        twist = cfg.twist()
    if t["mode"] == "constant" and t["chi_per_s"] is not None:
        return twist, twist.integral
    if t["target_floor_db"] is None:
        raise ConfigError("[twist] needs chi_per_s or target_floor_db")
    seq = cfg.sequence(0.0, twist)
    scale = sequences.calibrate_twist(
        seq, cfg.loss(), cfg["physical"]["n_atoms"],
        target_db=t["target_floor_db"],
        n_traj=t["calibration_trajectories"], seed=seed + 40_000_019)
    twist = twist.with_scale(scale)
    if verbose:
        print(f"calibrated twist: integral(chi dt) = {twist.integral:.6g} rad "
              f"(floor target {t['target_floor_db']} dB)")
    return twist, twist.integral


def cmd_simulate(cfg: RunConfig, out_dir: str, seed: int, shots: int) -> int:
    thetas = [np.radians(t) for t in cfg["run"]["theta_grid_deg"]]
    twist, integral = _build_twist(cfg, seed)
    seq = cfg.sequence(0.0, twist)
    records = sequences.run_scan(seq, thetas, shots, cfg.noise(), cfg.loss(),
                                 base_seed=seed)
    imaging = cfg.imaging()
    if imaging.sigma_n0 > 0 or imaging.sigma_n1 > 0:
        records = tomography.add_imaging_noise_batch(records, imaging,
                                                     seed=seed + 999_331)
    path = os.path.join(out_dir, "shots.csv")
    _write_atomic(path, tomography.records_to_csv(records))
    n_mean = float(np.mean([r.total for r in records]))
    print(f"wrote {len(records)} shots ({shots} per angle, "
          f"{len(thetas)} angles) to {path}")
    print(f"mean total atom count: {n_mean:.2f}")
    return 0


def cmd_tomogram(cfg: RunConfig, out_dir: str, records_path: str) -> int:
    with open(records_path, encoding="utf-8") as fh:
        records = tomography.records_from_csv(fh.read())
    if not records:
        raise DataError("no shot records in input")
    tcfg = cfg["tomography"]
    center = tcfg["postselect_center"]
    if center is None:
        center = float(np.mean([r.total for r in records]))
    records = tomography.post_select(records, center,
                                     tcfg["postselect_halfwidth"])
    if not records:
        raise DataError("post selection removed every shot")
    n_mean = float(np.mean([r.total for r in records]))
    tg = tomography.tomogram(
        records, n_mean, imaging=cfg.imaging(),
        drift_window=tcfg["drift_window"], drift_order=tcfg["drift_order"],
        drift_theta_range_deg=(tcfg["drift_theta_min_deg"],
                               tcfg["drift_theta_max_deg"]))
    _write_atomic(os.path.join(out_dir, "tomogram.csv"),
                  tomography.tomogram_to_csv(tg))
    mn = tg.minimum()
    contrast = tcfg["contrast"]
    if contrast is None:
        contrast = 1.0
    report = metrology.report_from_measurement(
        n_mean, mn.normalized_db, contrast, theta_min=mn.theta)
    _write_atomic(os.path.join(out_dir, "report.txt"), report.as_text())
    _write_atomic(os.path.join(out_dir, "report.csv"), report.as_csv_row())
    print(f"tomogram over {len(tg.rows)} angles, <N> = {n_mean:.2f}")
    print(f"minimum {mn.normalized_db:+.3f} dB at "
          f"{np.degrees(mn.theta):.2f} deg")
    print(report.as_text(), end="")
    return 0


def _fold_angle(theta_deg: float):
    """Map a tomography angle to [-90, 90) using S_{theta+180} = -S_theta."""
    t = theta_deg % 360.0
    tf = (t + 90.0) % 180.0 - 90.0
    flip = abs(((t - tf) % 360.0) - 180.0) < 1e-9
    return tf, flip


def cmd_reconstruct(cfg: RunConfig, out_dir: str, records_path: str) -> int:
    with open(records_path, encoding="utf-8") as fh:
        records = tomography.records_from_csv(fh.read())
    if not records:
        raise DataError("no shot records in input")
    groups: dict[float, list] = {}
    for r in records:
        tf, flip = _fold_angle(np.degrees(r.theta))
        groups.setdefault(round(tf, 9), []).append(-r.sz if flip else r.sz)
    angles_deg = sorted(groups)
    if len(angles_deg) < 8:
        warnings.warn(f"only {len(angles_deg)} distinct angles in "
                      "[-90, 90): reconstruction is ill-posed")
    n_atoms = cfg["physical"]["n_atoms"]
    half = cfg["wigner"]["halfwidth_spin"]
    if half is None:
        half = 2.0 * np.sqrt(n_atoms)
    npts = cfg["wigner"]["grid_points"]
    s_grid = np.linspace(-half, half, npts)
    marginals = np.empty((len(angles_deg), npts))
    for i, a in enumerate(angles_deg):
        marginals[i] = wigner.smooth_histogram(np.asarray(groups[a]), s_grid)
    ps = wigner.ProjectionSet(angles=np.radians(np.array(angles_deg)),
                              s_grid=s_grid, marginals=marginals)
    axis = np.linspace(-half, half, npts)
    grid = wigner.inverse_radon(ps, axis, axis,
                                filter_name=cfg["wigner"]["filter"])
    _write_atomic(os.path.join(out_dir, "wigner_grid.csv"),
                  wigner.grid_to_csv(grid))
    _write_atomic(os.path.join(out_dir, "wigner_grid.dat"),
                  wigner.grid_to_gnuplot(grid))
    print(f"reconstructed {npts}x{npts} grid over +-{half:.1f} spin units "
          f"from {len(angles_deg)} angles; integral = {grid.integral():.4f}")
    try:
        contour = wigner.contour_at(grid)
        _write_atomic(os.path.join(out_dir, "contour.csv"),
                      wigner.contour_to_csv(contour))
        print(f"1/sqrt(e) contour area = {contour.enclosed_area:.3f}, "
              f"orientation = "
              f"{np.degrees(wigner.contour_orientation(contour)):.2f} deg")
    except wigner.ClippedContourError as exc:
        warnings.warn(f"contour skipped: {exc}")
    return 0


def cmd_chi_curve(cfg: RunConfig, out_dir: str) -> int:
    trap = cfg.trap()
    scat = cfg.scattering()
    n = cfg["physical"]["n_atoms"]
    seps = [1e-6 * s for s in cfg["modes"]["separations_um"]]
    rows = modes.chi_lambda_curve(
        trap, scat, n, seps, grid_points=cfg["modes"]["grid_points"],
        transverse=cfg["modes"]["transverse"], tol=cfg["modes"]["tolerance"])
    _write_atomic(os.path.join(out_dir, "chi_curve.csv"),
                  modes.curve_to_csv(rows))
    prof = modes.split_sequence_profile(
        trap, scat, n, cfg.twist_time,
        n_times=cfg["twist"]["profile_points"],
        overshoot=cfg["twist"]["overshoot"],
        curve_points=cfg["twist"]["curve_points"],
        grid_points=cfg["modes"]["grid_points"],
        transverse=cfg["modes"]["transverse"], tol=cfg["modes"]["tolerance"])
    _write_atomic(os.path.join(out_dir, "split_profile.csv"),
                  modes.split_profile_to_csv(prof))
    print("separation_um  lambda    chi_per_s")
    for s, lam, chi in rows:
        print(f"{s * 1e6:12.3f}  {lam:8.5f}  {chi:10.5g}")
    print(f"split profile: min lambda = {prof.lambda_t.min():.4f}, "
          f"contrast estimate = {prof.contrast_estimate:.4f}, "
          f"integral(chi dt) = "
          f"{np.trapezoid(prof.chi_t, prof.times):.6g} rad")
    return 0


def cmd_calibrate(cfg: RunConfig, out_dir: str, record_paths) -> int:
    if len(record_paths) < 3:
        raise DataError("need at least 3 record CSVs (one per atom-number "
                        "bin)")
    pairs = []
    for path in record_paths:
        with open(path, encoding="utf-8") as fh:
            recs = tomography.records_from_csv(fh.read())
        if len(recs) < 2:
            raise DataError(f"{path}: need at least 2 shots per bin")
        sz = np.array([r.sz for r in recs])
        n_mean = float(np.mean([r.total for r in recs]))
        var, _ = tomography.subtract_imaging_noise(float(np.var(sz, ddof=1)),
                                                   cfg.imaging())
        pairs.append((n_mean, var))
    try:
        a, b, rescale = tomography.calibration_fit(pairs)
    except np.linalg.LinAlgError as exc:
        raise DataError(f"calibration fit failed: {exc}") from exc
    text = (f"slope_a = {a:.6g}\nquadratic_b = {b:.6g}\n"
            f"rescale = {rescale:.6g}\n")
    _write_atomic(os.path.join(out_dir, "calibration.txt"), text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="spinsqueeze",
        description="Spin-squeezing simulation and analysis pipelines")
    p.add_argument("--config", help="INI config file (defaults when omitted)")
    p.add_argument("--seed", type=int, help="override [run] seed")
    p.add_argument("--out", help="override [run] out_dir")
    p.add_argument("--shots", type=int, help="override [run] shots_per_theta")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", help="run the sequence scan, write shots.csv")
    t = sub.add_parser("tomogram", help="variance-vs-angle table and report")
    t.add_argument("records", help="shot CSV from simulate")
    r = sub.add_parser("reconstruct", help="Wigner function reconstruction")
    r.add_argument("records", help="shot CSV from simulate")
    sub.add_parser("chi-curve", help="chi(lambda) table and split profile")
    c = sub.add_parser("calibrate", help="projection-noise calibration fit")
    c.add_argument("records", nargs="+", help="shot CSVs binned by N")
    g = sub.add_parser("write-config", help="print the default config")
    _ = g
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["run"]["seed"] = args.seed
        if args.shots is not None:
            if args.shots < 1:
                raise ConfigError("--shots must be >= 1")
            cfg.values["run"]["shots_per_theta"] = args.shots
        out_dir = args.out if args.out is not None else cfg["run"]["out_dir"]
        seed = cfg["run"]["seed"]
        shots = cfg["run"]["shots_per_theta"]

        if args.command == "write-config":
            print(default_config_text(), end="")
            return 0
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, seed, shots)
        if args.command == "tomogram":
            return cmd_tomogram(cfg, out_dir, args.records)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, out_dir, args.records)
        if args.command == "chi-curve":
            return cmd_chi_curve(cfg, out_dir)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, out_dir, args.records)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except (DataError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
