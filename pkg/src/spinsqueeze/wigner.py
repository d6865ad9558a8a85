"""Tomographic reconstruction of W(Sy, Sz) from per-angle marginals.

The measured quantity at tomography angle theta is S_theta =
cos(theta) Sz - sin(theta) Sy, i.e. the projection of the (Sy, Sz) plane
onto the unit vector (-sin theta, cos theta).  Histograms of S_theta are
smoothed with a cubic spline into continuous marginals; a filtered
back-projection (frequency-domain ramp filter, optionally Hann-windowed)
inverts the Radon transform on the plane tangent to the Bloch sphere.
Angles spanning [-90 deg, 90 deg) cover the full tomographic range since
projections at theta and theta+180 deg are mirror images.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from skimage import measure


class ClippedContourError(RuntimeError):
    """The requested level set runs into the grid boundary."""


@dataclass(frozen=True)
class ProjectionSet:
    """Marginals of S_theta on a common s grid, one row per angle (rad)."""

    angles: np.ndarray
    s_grid: np.ndarray
    marginals: np.ndarray  # shape (n_angles, n_s)

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=float)
        s = np.asarray(self.s_grid, dtype=float)
        marg = np.asarray(self.marginals, dtype=float)
        if marg.shape != (ang.size, s.size):
            raise ValueError("marginals must be (n_angles, n_s)")
        if np.any(np.diff(ang) <= 0):
            raise ValueError("angles must be strictly increasing")
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "marginals", marg)

    def validate_normalization(self, atol: float = 1e-6):
        ds = self.s_grid[1] - self.s_grid[0]
        integrals = self.marginals.sum(axis=1) * ds
        if np.any(np.abs(integrals - 1.0) > atol):
            raise ValueError(
                f"marginals must integrate to 1, got {integrals}")


@dataclass(frozen=True)
class WignerGrid:
    """Quasi-probability on a regular (Sy, Sz) grid.

    values[i, j] = W(sy_axis[i], sz_axis[j]); entries may be negative.
    """

    sy_axis: np.ndarray
    sz_axis: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.sy_axis.size, self.sz_axis.size):
            raise ValueError("values must be (n_sy, n_sz)")

    def integral(self) -> float:
        dy = self.sy_axis[1] - self.sy_axis[0]
        dz = self.sz_axis[1] - self.sz_axis[0]
        return float(self.values.sum() * dy * dz)

    def second_moment(self, theta: float) -> float:
        """Variance of cos(theta) Sz - sin(theta) Sy under W(y, z)."""
        y, z = np.meshgrid(self.sy_axis, self.sz_axis, indexing="ij")
        s = np.cos(theta) * z - np.sin(theta) * y
        w = self.values / self.values.sum()
        mean = float((w * s).sum())
        return float((w * s * s).sum() - mean ** 2)


@dataclass(frozen=True)
class ContourResult:
    level: float            # fraction of the maximum
    polyline: np.ndarray    # closed, columns (sy, sz)
    enclosed_area: float


def smooth_histogram(samples, grid) -> np.ndarray:
    """Continuous marginal from discrete outcomes: histogram + cubic spline.

    Bin width follows Freedman-Diaconis; the bin-center densities are
    interpolated with a cubic spline evaluated on `grid`, clipped at zero
    and renormalized.  Requires at least 30 samples.
    """
    samples = np.asarray(samples, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if samples.size < 30:
        raise ValueError("need at least 30 samples for a marginal")
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    width = 2.0 * iqr / samples.size ** (1.0 / 3.0)
    span = samples.max() - samples.min()
    dg = grid[1] - grid[0]
    if width <= 0 or span <= 0:
        # degenerate sample set: a single bin-wide peak
        out = np.zeros(grid.size)
        out[np.argmin(np.abs(grid - samples[0]))] = 1.0
        return out / (out.sum() * dg)
    nbins = max(int(np.ceil(span / width)), 4)
    hist, edges = np.histogram(samples, bins=nbins, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    spline = CubicSpline(centers, hist, bc_type="natural", extrapolate=False)
    out = spline(grid)
    out[~np.isfinite(out)] = 0.0
    out = np.clip(out, 0.0, None)
    total = out.sum() * dg
    if total <= 0:
        raise ValueError("smoothed marginal vanished on the given grid")
    return out / total


def forward_radon(grid: WignerGrid, angles) -> ProjectionSet:
    """Line integrals of the grid: the marginal of S_theta per angle.

    Serves as the oracle for the inverse transform.  The integration runs
    along the direction orthogonal to the measurement axis with bilinear
    sampling.
    """
    angles = np.asarray(angles, dtype=float)
    y = grid.sy_axis
    z = grid.sz_axis
    ny, nz = y.size, z.size
    half = 0.5 * min(y[-1] - y[0], z[-1] - z[0])
    n_s = max(ny, nz)
    s = np.linspace(-half, half, n_s)
    du = s[1] - s[0]
    u = np.arange(-half, half + 0.5 * du, du)
    marg = np.empty((angles.size, n_s))
    for k, th in enumerate(angles):
        # point = s*nhat + u*uhat, nhat = (-sin, cos), uhat = (cos, sin)
        sy = -np.sin(th) * s[:, None] + np.cos(th) * u[None, :]
        sz = np.cos(th) * s[:, None] + np.sin(th) * u[None, :]
        vals = _bilinear(grid.values, y, z, sy, sz)
        marg[k] = vals.sum(axis=1) * du
    return ProjectionSet(angles=angles, s_grid=s, marginals=marg)


def _bilinear(values, y_axis, z_axis, y, z):
    dy = y_axis[1] - y_axis[0]
    dz = z_axis[1] - z_axis[0]
    fy = (y - y_axis[0]) / dy
    fz = (z - z_axis[0]) / dz
    iy = np.clip(np.floor(fy).astype(int), 0, y_axis.size - 2)
    iz = np.clip(np.floor(fz).astype(int), 0, z_axis.size - 2)
    ty = np.clip(fy - iy, 0.0, 1.0)
    tz = np.clip(fz - iz, 0.0, 1.0)
    inside = (fy >= 0) & (fy <= y_axis.size - 1) & (fz >= 0) & (fz <= z_axis.size - 1)
    v = ((1 - ty) * (1 - tz) * values[iy, iz]
         + ty * (1 - tz) * values[iy + 1, iz]
         + (1 - ty) * tz * values[iy, iz + 1]
         + ty * tz * values[iy + 1, iz + 1])
    return np.where(inside, v, 0.0)


def inverse_radon(projections: ProjectionSet, sy_axis, sz_axis,
                  filter_name: str = "hann") -> WignerGrid:
    """Filtered back-projection onto the given output grid.

    filter_name: 'ram-lak' for the plain ramp, 'hann' for the Hann-windowed
    ramp (default; damps noise amplification).  Fewer than 8 angles is
    ill-posed and only warned about.
    """
    import warnings
    if filter_name not in ("ram-lak", "hann"):
        raise ValueError("filter must be 'ram-lak' or 'hann'")
    angles = projections.angles
    if angles.size < 8:
        warnings.warn(f"only {angles.size} projection angles: reconstruction "
                      "is ill-posed", stacklevel=2)
    s = projections.s_grid
    ds = s[1] - s[0]
    n_s = s.size
    npad = 2 ** int(np.ceil(np.log2(4 * n_s)))
    # band-limited ramp built in real space (avoids the DC bias of sampling
    # |f| directly), then optionally Hann-windowed in frequency space
    h = np.zeros(npad)
    h[0] = 1.0 / (4.0 * ds * ds)
    odd = np.arange(1, n_s + 1, 2)
    h[odd] = -1.0 / (np.pi * odd * ds) ** 2
    h[npad - odd] = h[odd]
    filt = np.fft.rfft(h).real
    if filter_name == "hann":
        freqs = np.fft.rfftfreq(npad, d=ds)
        filt *= 0.5 * (1.0 + np.cos(np.pi * freqs / freqs[-1]))

    # filtered projections decay slowly (~ -1/s^2), and back-projected pixels
    # reach |s| up to sqrt(2) * s_max at the grid corners, so keep the
    # convolution tails on an extended s range instead of clipping at s_max
    next_ = int(np.ceil(0.5 * n_s)) + 1
    idx = np.arange(-next_, n_s + next_)
    s_ext = s[0] + idx * ds
    filtered = np.empty((angles.size, idx.size))
    for k in range(angles.size):
        p = np.zeros(npad)
        p[:n_s] = projections.marginals[k]
        q = np.fft.irfft(np.fft.rfft(p) * filt, npad) * ds
        filtered[k] = q[idx % npad]

    sy_axis = np.asarray(sy_axis, dtype=float)
    sz_axis = np.asarray(sz_axis, dtype=float)
    y, z = np.meshgrid(sy_axis, sz_axis, indexing="ij")
    out = np.zeros_like(y)
    # angular quadrature over the half-turn; when the grid includes both
    # endpoints of a full 180 deg span they are the same projection mirrored,
    # so trapezoid weights halve them
    if angles.size > 1:
        step = np.diff(angles)
        if abs((angles[-1] - angles[0]) - np.pi) < 0.6 * step.min():
            dth = np.empty(angles.size)
            dth[1:-1] = 0.5 * (angles[2:] - angles[:-2])
            dth[0] = 0.5 * step[0]
            dth[-1] = 0.5 * step[-1]
        else:
            dth = np.gradient(angles)
    else:
        dth = np.array([np.pi])
    for k, th in enumerate(angles):
        sval = np.cos(th) * z - np.sin(th) * y
        out += dth[k] * np.interp(sval, s_ext, filtered[k], left=0.0,
                                  right=0.0)
    return WignerGrid(sy_axis=sy_axis, sz_axis=sz_axis, values=out)


def contour_at(grid: WignerGrid, fraction: float = 1.0 / np.sqrt(np.e)
               ) -> ContourResult:
    """Closed level-set contour at fraction * max, enclosing the maximum.

    Marching squares via skimage; raises ClippedContourError when the level
    set is open at the grid boundary.  The level is relative, so the result
    is invariant under positive rescaling of the grid values.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    vals = grid.values
    vmax = vals.max()
    if vmax <= 0:
        raise ValueError("grid has no positive maximum")
    level = fraction * vmax
    imax = np.unravel_index(np.argmax(vals), vals.shape)
    peak = np.array([grid.sy_axis[imax[0]], grid.sz_axis[imax[1]]])
    contours = measure.find_contours(vals, level)
    dy = grid.sy_axis[1] - grid.sy_axis[0]
    dz = grid.sz_axis[1] - grid.sz_axis[0]
    best = None
    for c in contours:
        closed = np.allclose(c[0], c[-1])
        pts = np.column_stack([grid.sy_axis[0] + c[:, 0] * dy,
                               grid.sz_axis[0] + c[:, 1] * dz])
        if not closed:
            continue
        if _winding_contains(pts, peak):
            area = _polygon_area(pts)
            if best is None or area < best[1]:
                best = (pts, area)
    if best is None:
        raise ClippedContourError(
            "no closed contour around the maximum: the level set is clipped "
            "by the grid boundary")
    return ContourResult(level=fraction, polyline=best[0],
                         enclosed_area=best[1])


def _polygon_area(pts: np.ndarray) -> float:
    x = pts[:, 0]
    y = pts[:, 1]
    return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _winding_contains(pts: np.ndarray, point: np.ndarray) -> bool:
    d = pts[:-1] - point
    d2 = pts[1:] - point
    ang = np.arctan2(d[:, 0] * d2[:, 1] - d[:, 1] * d2[:, 0],
                     (d * d2).sum(axis=1))
    return abs(ang.sum()) > np.pi


def contour_orientation(contour: ContourResult) -> float:
    """Angle theta of the contour's narrow axis in the S_theta convention.

    Computed from the principal axes of the polygon points: the minor axis
    direction (uy, uz) corresponds to measuring cos(theta) Sz -
    sin(theta) Sy with (-sin theta, cos theta) = (uy, uz).
    """
    pts = contour.polyline[:-1]
    pts = pts - pts.mean(axis=0)
    cov = pts.T @ pts / pts.shape[0]
    w, v = np.linalg.eigh(cov)
    minor = v[:, 0]  # eigenvector of the smaller variance
    theta = np.arctan2(-minor[0], minor[1])
    theta = (theta + 0.5 * np.pi) % np.pi - 0.5 * np.pi
    return float(theta)


# ---------------------------------------------------------------------------
# file formats

def grid_to_csv(grid: WignerGrid) -> str:
    """Row-major CSV with axis header rows: first row sy, first column sz."""
    lines = ["sy_axis," + ",".join(format(v, ".10g") for v in grid.sy_axis)]
    for j, zval in enumerate(grid.sz_axis):
        row = [format(zval, ".10g")]
        row += [format(v, ".10g") for v in grid.values[:, j]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def grid_to_gnuplot(grid: WignerGrid) -> str:
    """gnuplot 'nonuniform matrix' format: splot 'file' nonuniform matrix."""
    first = [str(grid.sy_axis.size)] + [format(v, ".10g") for v in grid.sy_axis]
    lines = [" ".join(first)]
    for j, zval in enumerate(grid.sz_axis):
        row = [format(zval, ".10g")]
        row += [format(v, ".10g") for v in grid.values[:, j]]
        lines.append(" ".join(row))
    return "\n".join(lines) + "\n"


def contour_to_csv(contour: ContourResult) -> str:
    lines = ["sy,sz"]
    for p in contour.polyline:
        lines.append(f"{p[0]:.10g},{p[1]:.10g}")
    return "\n".join(lines) + "\n"
