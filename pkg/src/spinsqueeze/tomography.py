"""Shot-record statistics: imaging noise, drift correction, variance vs angle.

A ShotRecord is one experimental realization: measured atom counts (n0, n1)
at a tomography angle theta.  The pipeline groups records by angle, corrects
slow drifts of n1-n0 with a Savitzky-Golay filter, subtracts photon shot
noise of the imaging system from the variance, and reports the normalized
variance 4*Var(S_theta)/<N> in dB (0 dB = projection noise of uncorrelated
atoms).
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import savgol_filter


@dataclass(frozen=True)
class ShotRecord:
    """One realization: counts in the two states at tomography angle theta."""

    shot: int
    theta: float  # rad
    n0: float
    n1: float

    @property
    def total(self) -> float:
        return self.n0 + self.n1

    @property
    def sz(self) -> float:
        return 0.5 * (self.n1 - self.n0)


@dataclass(frozen=True)
class ImagingNoiseSpec:
    """Additive Gaussian atom-count noise of the imaging system, per state."""

    sigma_n0: float = 0.0
    sigma_n1: float = 0.0

    def __post_init__(self):
        if self.sigma_n0 < 0 or self.sigma_n1 < 0:
            raise ValueError("imaging noise sigmas must be >= 0")

    @property
    def variance_sz(self) -> float:
        """Contribution of imaging noise to Var(Sz): (s0^2 + s1^2)/4."""
        return 0.25 * (self.sigma_n0 ** 2 + self.sigma_n1 ** 2)

    @classmethod
    def combined(cls, atoms: float) -> "ImagingNoiseSpec":
        """Equal per-state sigmas with sqrt(s0^2+s1^2)/2 = atoms."""
        s = atoms * np.sqrt(2.0)
        return cls(sigma_n0=s, sigma_n1=s)


@dataclass(frozen=True)
class TomogramRow:
    theta: float  # rad
    n_shots: int
    variance_raw: float
    variance_corrected: float
    normalized_db: float
    stderr_db: float


@dataclass(frozen=True)
class Tomogram:
    rows: tuple
    n_mean: float

    def minimum(self) -> TomogramRow:
        return min(self.rows, key=lambda r: r.normalized_db)

    def row_at(self, theta: float, atol: float = 1e-9) -> TomogramRow:
        for r in self.rows:
            if abs(r.theta - theta) <= atol:
                return r
        raise KeyError(f"no tomogram row at theta={theta}")


def add_imaging_noise(record: ShotRecord, spec: ImagingNoiseSpec,
                      rng) -> ShotRecord:
    """Add independent Gaussian imaging noise to both counts of one record."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    dn0 = spec.sigma_n0 * rng.standard_normal()
    dn1 = spec.sigma_n1 * rng.standard_normal()
    return replace(record, n0=record.n0 + dn0, n1=record.n1 + dn1)


def add_imaging_noise_batch(records, spec: ImagingNoiseSpec, seed):
    """Noise every record with a single stream in record order."""
    rng = np.random.default_rng(seed)
    return [add_imaging_noise(r, spec, rng) for r in records]


def post_select(records, center: float, half_width: float):
    """Keep shots whose total count is within half_width of center."""
    if half_width <= 0:
        raise ValueError("half_width must be > 0")
    kept = [r for r in records if abs(r.total - center) <= half_width]
    if not kept:
        warnings.warn("post selection removed every shot", stacklevel=2)
    return kept


def drift_correct(records, window: int = 300, order: int = 2):
    """Remove slow drifts of n1-n0 within one theta group.

    Subtracts a Savitzky-Golay smoothed copy of the series and re-centers on
    the original mean, so white noise passes through while slow drifts
    (period >> window) are removed.  Falls back to plain mean subtraction
    (a no-op after re-centering) when the group is shorter than the window.
    """
    n = len(records)
    if n == 0:
        return []
    d = np.array([r.n1 - r.n0 for r in records])
    total = np.array([r.total for r in records])
    win = int(window)
    if win % 2 == 0:
        win += 1
    if order >= win:
        raise ValueError("order must be smaller than the window")
    if n < win:
        warnings.warn(
            f"only {n} shots < window {win}: falling back to global mean "
            "subtraction", stacklevel=2)
        smooth = np.full(n, d.mean())
    else:
        smooth = savgol_filter(d, win, order, mode="interp")
    d_corr = d - smooth + d.mean()
    out = []
    for r, dc, tt in zip(records, d_corr, total):
        out.append(replace(r, n0=0.5 * (tt - dc), n1=0.5 * (tt + dc)))
    return out


def subtract_imaging_noise(variance_sz: float, spec: ImagingNoiseSpec):
    """Photon-shot-noise corrected variance; returns (value, negative_flag)."""
    if variance_sz < 0:
        raise ValueError("variance must be >= 0")
    corr = variance_sz - spec.variance_sz
    return corr, corr < 0.0


def tomogram(records, n_mean: float, imaging: ImagingNoiseSpec | None = None,
             drift_window: int = 300, drift_order: int = 2,
             drift_theta_range_deg: tuple = (90.0, 360.0)) -> Tomogram:
    """Group records by exact theta and compute the variance table.

    Sz = (n1-n0)/2 per shot; drift correction applies only in the configured
    theta range (degrees); the normalization is 4*Var_corr/n_mean, in dB.
    """
    if imaging is None:
        imaging = ImagingNoiseSpec()
    groups: dict[float, list] = {}
    for r in records:
        groups.setdefault(r.theta, []).append(r)
    rows = []
    lo_deg, hi_deg = drift_theta_range_deg
    for theta in sorted(groups):
        grp = groups[theta]
        if len(grp) < 2:
            raise ValueError(f"need >= 2 shots per angle, theta={theta}")
        tdeg = np.degrees(theta) % 360.0
        if lo_deg < tdeg < hi_deg:
            grp = drift_correct(grp, drift_window, drift_order)
        sz = np.array([r.sz for r in grp])
        var_raw = float(np.var(sz, ddof=1))
        var_corr, negative = subtract_imaging_noise(var_raw, imaging)
        if negative:
            warnings.warn(
                f"imaging-noise correction exceeds the raw variance at "
                f"theta={np.degrees(theta):.2f} deg", stacklevel=2)
        norm = 4.0 * var_corr / n_mean
        db = 10.0 * np.log10(norm) if norm > 0 else -np.inf
        stderr = 10.0 / np.log(10.0) * np.sqrt(2.0 / (len(grp) - 1))
        rows.append(TomogramRow(theta=theta, n_shots=len(grp),
                                variance_raw=var_raw,
                                variance_corrected=var_corr,
                                normalized_db=db, stderr_db=stderr))
    return Tomogram(rows=tuple(rows), n_mean=n_mean)


def calibration_fit(variance_by_n):
    """Least-squares fit Var(Sz) = a*N + b*N^2 over atom-number bins.

    Returns (a, b, rescale); rescale = a/(1/4) is the factor by which the
    recorded atom counts were scaled relative to truth (divide counts by it
    to restore the projection-noise slope 1/4).
    """
    pts = np.asarray(variance_by_n, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need >= 3 (N, Var) pairs")
    n = pts[:, 0]
    v = pts[:, 1]
    if np.unique(n).size < 3:
        raise ValueError("need >= 3 distinct N bins")
    design = np.column_stack([n, n * n])
    coef, _, rank, _ = np.linalg.lstsq(design, v, rcond=None)
    if rank < 2:
        raise np.linalg.LinAlgError("rank-deficient calibration design")
    a, b = float(coef[0]), float(coef[1])
    return a, b, a / 0.25


# ---------------------------------------------------------------------------
# CSV schemas

SHOT_HEADER = ["shot", "theta_deg", "n0", "n1"]
TOMOGRAM_HEADER = ["theta_deg", "n_shots", "var_raw", "var_corr", "norm_db",
                   "stderr_db"]


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SHOT_HEADER)
    for r in records:
        w.writerow([r.shot, format(np.degrees(r.theta), ".6f"),
                    _fmt(r.n0), _fmt(r.n1)])
    return buf.getvalue()


def records_from_csv(text: str):
    rdr = csv.reader(io.StringIO(text))
    try:
        header = next(rdr)
    except StopIteration:
        raise ValueError("empty shot CSV") from None
    if [h.strip() for h in header] != SHOT_HEADER:
        missing = set(SHOT_HEADER) - {h.strip() for h in header}
        raise ValueError(f"bad shot CSV header, missing columns: "
                         f"{sorted(missing) or header}")
    out = []
    for i, row in enumerate(rdr):
        if not row:
            continue
        if len(row) != 4:
            raise ValueError(f"shot CSV row {i + 2}: expected 4 fields")
        out.append(ShotRecord(shot=int(row[0]),
                              theta=float(np.radians(float(row[1]))),
                              n0=float(row[2]), n1=float(row[3])))
    return out


def tomogram_to_csv(tg: Tomogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TOMOGRAM_HEADER)
    for r in tg.rows:
        w.writerow([format(np.degrees(r.theta), ".6f"), r.n_shots,
                    _fmt(r.variance_raw), _fmt(r.variance_corrected),
                    _fmt(r.normalized_db), _fmt(r.stderr_db)])
    return buf.getvalue()
