"""Squeezing and entanglement figures of merit.

The Wineland squeezing parameter xi^2 = N * Var(S_theta_min)/<Sx>^2 measures
metrological gain; xi^2 < 1 also witnesses bipartite entanglement.  The
depth witness generalizes this: for a state separable into clusters of at
most k atoms, the normalized variance 4*Var/N is bounded below by the
minimal-variance curve of a single spin j = k/2, so a measured point below
the curve proves clusters of at least k+1 atoms.

Cluster bookkeeping behind the bound: write the total state as a product of
n = N/k clusters of spin j = k/2 (mixtures only help, since variance is
concave in the state).  Then Var(Sz) >= sum_i Var(Jz_i) >= sum_i F~_j(x_i)
with x_i = <Jx_i>/j, and with F~_j convex the sum is minimized by equal
sharing x_i = x = 2<Sx>/N; since n*j = N/2,

    4*Var(Sz)/N >= F~_j(x) / (j/2) =: F_j(x),

normalized so every curve passes F_j(1) = 1 (coherent state).  F~_j(x) is
the true minimum of Var(Jz) over spin-j states with <Jx> = x*j; because the
variance subtracts <Jz>^2 the minimizer may be tilted, so the generator is
(Jz - c)^2 - mu*Jx with the offset c solved self-consistently (c = <Jz>).
For j = 1/2 this reproduces F_{1/2}(x) = x^2, i.e. exactly the xi^2 = 1
boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dicke import SpinExpectations, ladder_couplings


@dataclass(frozen=True)
class SqueezingReport:
    """Figures of merit of one squeezing measurement."""

    theta_min: float       # rad, in [-pi/2, pi/2)
    min_variance: float
    contrast: float
    xi_squared: float
    xi_squared_db: float
    depth: int

    def as_text(self) -> str:
        lines = [
            f"theta_min_deg = {np.degrees(self.theta_min):.4f}",
            f"min_variance = {self.min_variance:.6g}",
            f"contrast = {self.contrast:.6g}",
            f"xi_squared = {self.xi_squared:.6g}",
            f"xi_squared_db = {self.xi_squared_db:.4f}",
            f"entanglement_depth = {self.depth}",
        ]
        return "\n".join(lines) + "\n"

    def as_csv_row(self) -> str:
        head = "theta_min_deg,min_variance,contrast,xi_squared,xi_squared_db,depth"
        row = (f"{np.degrees(self.theta_min):.6f},{self.min_variance:.10g},"
               f"{self.contrast:.10g},{self.xi_squared:.10g},"
               f"{self.xi_squared_db:.6f},{self.depth}")
        return head + "\n" + row + "\n"


@dataclass(frozen=True)
class DepthCurve:
    """Minimal normalized variance vs mean-spin fraction for one spin j."""

    j: float
    xs: np.ndarray
    values: np.ndarray  # Var(Jz)_min / (j/2), so the coherent endpoint is 1

    def __call__(self, x: float) -> float:
        return float(np.interp(x, self.xs, self.values))


def min_variance_angle(exp: SpinExpectations, degenerate_rtol: float = 1e-9):
    """Angle and value of the smallest transverse variance.

    Var(theta) for S_theta = cos(theta) Sz - sin(theta) Sy is harmonic in
    2*theta, so the minimum is the small eigenvalue of cov_yz.  Returns
    (theta_min in [-pi/2, pi/2), min variance, degenerate flag).
    """
    cov = exp.cov_yz
    vyy, vzz, cyz = cov[0, 0], cov[1, 1], cov[0, 1]
    mean = 0.5 * (vyy + vzz)
    a = 0.5 * (vzz - vyy)
    rad = math.hypot(a, cyz)
    if rad <= degenerate_rtol * max(mean, 1e-300):
        return 0.0, float(mean), True
    psi = math.atan2(cyz, a)
    theta = 0.5 * (np.pi - psi)
    theta = (theta + 0.5 * np.pi) % np.pi - 0.5 * np.pi
    return float(theta), float(mean - rad), False


def squeezing_parameter(n_atoms: float, min_variance: float,
                        mean_sx: float) -> float:
    """Wineland parameter xi^2 = N Var_min / <Sx>^2."""
    if mean_sx == 0:
        raise ValueError("undefined contrast: <Sx> = 0")
    return float(n_atoms * min_variance / mean_sx ** 2)


def to_db(ratio: float) -> float:
    return 10.0 * math.log10(ratio)


def _jx_matrix(j: float) -> np.ndarray:
    n = int(round(2 * j))
    g = ladder_couplings(n)
    jx = np.zeros((n + 1, n + 1))
    jx[np.arange(n), np.arange(1, n + 1)] = 0.5 * g
    jx[np.arange(1, n + 1), np.arange(n)] = 0.5 * g
    return jx


def _ground_tilted(j: float, mu: float, jx: np.ndarray, m: np.ndarray):
    """Ground state of (Jz-c)^2 - mu*Jx with c = <Jz> self-consistent.

    Returns (x = <Jx>/j, variance of Jz).  The symmetric point c = 0 is a
    fixed point, so the iteration is seeded slightly off zero to find the
    tilted branch whenever it is lower.
    """
    best = None
    for c_seed in (0.0, 0.25 * j):
        c = c_seed
        state = None
        for _ in range(300):
            h = np.diag((m - c) ** 2) - mu * jx
            w, v = np.linalg.eigh(h)
            state = v[:, 0]
            cz = float(np.dot(state * state, m))
            if abs(cz - c) < 1e-12 * (1 + abs(c)):
                c = cz
                break
            c = cz if c_seed == 0.0 else 0.5 * (c + cz)
        p = state * state
        var = float(np.dot(p, m * m) - np.dot(p, m) ** 2)
        x = float(state @ jx @ state) / j
        if best is None or var < best[1] - 1e-15:
            best = (x, var)
    return best


def _min_variance_at_x(j: float, x: float, jx, m, tol: float = 1e-8) -> float:
    """Minimal Var(Jz) over spin-j states with <Jx> = x*j (bisection on mu)."""
    if x >= 1.0 - 1e-12:
        return 0.5 * j
    if x < 0:
        raise ValueError("mean-spin fraction must be in [0, 1]")
    mu_lo, mu_hi = 1e-9, 1.0
    while _ground_tilted(j, mu_hi, jx, m)[0] < x:
        mu_hi *= 2.0
        if mu_hi > 1e12:
            raise RuntimeError("constraint infeasible: x out of reach")
    for _ in range(200):
        mu = 0.5 * (mu_lo + mu_hi)
        xm, var = _ground_tilted(j, mu, jx, m)
        if abs(xm - x) < tol:
            return var
        if xm < x:
            mu_lo = mu
        else:
            mu_hi = mu
    return _ground_tilted(j, 0.5 * (mu_lo + mu_hi), jx, m)[1]


def depth_curve(j: float, x_grid) -> DepthCurve:
    """Normalized minimal-variance curve for a single spin j.

    j must be a positive half-integer; values are Var_min/(j/2) so the
    coherent endpoint x = 1 maps to 1 for every j.
    """
    twoj = 2 * j
    if twoj < 1 or abs(twoj - round(twoj)) > 1e-12:
        raise ValueError("j must be a positive half-integer")
    xs = np.asarray(list(x_grid), dtype=float)
    if np.any(xs < 0) or np.any(xs > 1):
        raise ValueError("x grid must lie in [0, 1]")
    n = int(round(twoj))
    m = np.arange(n + 1) - j
    jx = _jx_matrix(j)
    vals = np.array([_min_variance_at_x(j, x, jx, m) / (0.5 * j) for x in xs])
    return DepthCurve(j=j, xs=xs, values=vals)


def entanglement_depth(n_atoms: float, min_variance: float, mean_sx: float,
                       max_cluster: int = 12) -> int:
    """Proven entanglement depth of a (variance, mean spin) measurement.

    Returns 1 + the largest cluster size k whose spin-k/2 separability curve
    the point falls below, or 1 when the point is above every curve (no
    entanglement proven).  The curves drop with k, so the scan stops at the
    first k that fails.
    """
    x = 2.0 * abs(mean_sx) / n_atoms
    if x > 1.0:
        raise ValueError("mean spin exceeds N/2")
    v_norm = 4.0 * min_variance / n_atoms
    depth = 1
    n = int(round(n_atoms))
    for k in range(1, min(max_cluster, n) + 1):
        j = 0.5 * k
        m = np.arange(k + 1) - j
        jx = _jx_matrix(j)
        bound = _min_variance_at_x(j, x, jx, m) / (0.5 * j)
        if v_norm < bound:
            depth = k + 1
        else:
            break
    return depth


def squeezing_report(n_atoms: float, exp: SpinExpectations,
                     contrast: float | None = None) -> SqueezingReport:
    """Report from exact state moments; contrast defaults to 2|<Sx>|/N."""
    theta, var, degen = min_variance_angle(exp)
    if degen:
        warnings.warn("isotropic transverse covariance; theta_min set to 0",
                      stacklevel=2)
    if contrast is None:
        contrast = 2.0 * abs(exp.sx) / n_atoms
    mean_sx = 0.5 * contrast * n_atoms
    xi2 = squeezing_parameter(n_atoms, var, mean_sx)
    depth = entanglement_depth(n_atoms, var, mean_sx)
    return SqueezingReport(theta_min=theta, min_variance=var,
                           contrast=contrast, xi_squared=xi2,
                           xi_squared_db=to_db(xi2), depth=depth)


def report_from_measurement(n_atoms: float, normalized_variance_db: float,
                            contrast: float,
                            theta_min: float = 0.0) -> SqueezingReport:
    """Report from measured normalized variance (dB) and Ramsey contrast."""
    var = 10.0 ** (normalized_variance_db / 10.0) * 0.25 * n_atoms
    mean_sx = 0.5 * contrast * n_atoms
    xi2 = squeezing_parameter(n_atoms, var, mean_sx)
    depth = entanglement_depth(n_atoms, var, mean_sx)
    return SqueezingReport(theta_min=theta_min, min_variance=var,
                           contrast=contrast, xi_squared=xi2,
                           xi_squared_db=to_db(xi2), depth=depth)
