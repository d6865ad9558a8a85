"""Stationary two-component modes in split traps and the twist strength chi.

The two hyperfine components sit in harmonic traps whose minima are offset
by a separation s along the weak (longitudinal) axis.  Transverse motion is
reduced to a local Gaussian of width sigma(z); by default sigma follows the
interpolation sigma^4 = sigma_ho^4 (1 + 4 abar n(z)) built from the local
line density, which reproduces the harmonic-oscillator ground state at low
density and the exact cigar Thomas-Fermi equation of state at high density.
A fixed bare width (transverse="fixed") is available for oracle tests.

The twist rate follows from atom-number derivatives of the chemical
potentials,

    chi = (d_mu0/dN0 + d_mu1/dN1 - d_mu0/dN1 - d_mu1/dN0) / (2 hbar),

evaluated at N0 = N1 = N/2 by symmetric finite differences, each evaluation
a fresh ground-state solve.  With overlapping identical modes the cross and
direct terms cancel in proportion to a00 + a11 - 2*a01, which vanishes for
the Rb87 ratios 100.4 : 97.7 : 95.0; separating the modes kills the cross
terms and turns the twist on.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar

A_BOHR = 5.29177210903e-11
RB87_MASS = 1.44316060e-25  # kg


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class TrapSpec:
    """Harmonic trap: longitudinal and transverse frequencies (Hz) and the
    relative displacement of the |1> minimum along the long axis (m)."""

    f_long: float = 109.0
    f_ax: float = 500.0
    separation: float = 0.0

    def __post_init__(self):
        if self.f_long <= 0 or self.f_ax <= 0:
            raise ValueError("trap frequencies must be > 0")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")

    def with_separation(self, s: float) -> "TrapSpec":
        return TrapSpec(self.f_long, self.f_ax, s)


@dataclass(frozen=True)
class ScatteringSpec:
    """s-wave scattering lengths in Bohr radii and the atomic mass (kg)."""

    a00: float = 100.4
    a01: float = 97.7
    a11: float = 95.0
    mass: float = RB87_MASS

    def __post_init__(self):
        if min(self.a00, self.a01, self.a11) <= 0:
            raise ValueError("scattering lengths must be > 0")

    def g3d(self, j: int, k: int) -> float:
        a = {(0, 0): self.a00, (1, 1): self.a11}.get((j, k), self.a01)
        return 4.0 * np.pi * hbar ** 2 * (a * A_BOHR) / self.mass

    @property
    def a_mean(self) -> float:
        """Mean scattering length (m) driving the transverse broadening.

        The same value enters both components so that the a00+a11-2*a01
        cancellation of chi at full overlap is preserved exactly.
        """
        return 0.25 * (self.a00 + self.a11 + 2 * self.a01) * A_BOHR


@dataclass(frozen=True)
class ModeProfile:
    """Converged longitudinal densities, each normalized to unit integral."""

    grid: np.ndarray
    density0: np.ndarray
    density1: np.ndarray
    n0: float
    n1: float
    transverse: str = "eos"

    @property
    def dz(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass(frozen=True)
class SplitProfile:
    """Phenomenological splitting sequence: overlap and twist rate vs time."""

    times: np.ndarray
    lambda_t: np.ndarray
    chi_t: np.ndarray
    contrast_estimate: float


def _sigma(scat: ScatteringSpec, trap: TrapSpec, n_line: np.ndarray,
           transverse: str) -> np.ndarray:
    wt = 2 * np.pi * trap.f_ax
    s_ho = math.sqrt(hbar / (2 * scat.mass * wt))
    if transverse == "fixed":
        return np.full_like(n_line, s_ho)
    if transverse == "eos":
        return s_ho * (1.0 + 4.0 * scat.a_mean * n_line) ** 0.25
    raise ValueError("transverse must be 'eos' or 'fixed'")


def _eperp(scat: ScatteringSpec, trap: TrapSpec, sig: np.ndarray) -> np.ndarray:
    wt = 2 * np.pi * trap.f_ax
    return hbar ** 2 / (4 * scat.mass * sig ** 2) + scat.mass * wt ** 2 * sig ** 2


def default_grid(trap: TrapSpec, scat: ScatteringSpec, n_total: float,
                 grid_points: int = 512, halfwidth: float | None = None):
    """Uniform longitudinal grid spanning +-6 Thomas-Fermi radii."""
    wl = 2 * np.pi * trap.f_long
    wt = 2 * np.pi * trap.f_ax
    s_ho = math.sqrt(hbar / (2 * scat.mass * wt))
    a_long = math.sqrt(hbar / (scat.mass * wl))
    g1d = scat.g3d(0, 0) / (4 * np.pi * s_ho ** 2)
    mu_tf = ((0.75 * max(n_total, 2.0) * g1d)
             * math.sqrt(scat.mass * wl ** 2 / 2.0)) ** (2.0 / 3.0)
    r_tf = math.sqrt(2 * mu_tf / (scat.mass * wl ** 2))
    if halfwidth is None:
        halfwidth = 6.0 * max(r_tf, 2.0 * a_long) + 1.5 * trap.separation
    return np.linspace(-halfwidth, halfwidth, grid_points)


def stationary_modes(trap: TrapSpec, scat: ScatteringSpec, n0: float,
                     n1: float, *, grid_points: int = 512,
                     halfwidth: float | None = None,
                     transverse: str = "eos", tol: float = 1e-10,
                     max_iter: int = 60000,
                     return_trace: bool = False):
    """Coupled ground-state profiles from imaginary-time propagation.

    The transverse width field is frozen during each inner imaginary-time
    relaxation (which keeps the inner energy monotone) and updated in an
    outer fixed-point loop until both the energy and the width settle.
    Converged when the relative energy change per step drops below `tol`.
    """
    if n0 < 0 or n1 < 0 or (n0 == 0 and n1 == 0):
        raise ValueError("need n0, n1 >= 0 and not both zero")
    z = default_grid(trap, scat, n0 + n1, grid_points, halfwidth)
    dz = z[1] - z[0]
    npts = z.size
    wl = 2 * np.pi * trap.f_long
    k = 2 * np.pi * np.fft.fftfreq(npts, dz)
    kin_energy = hbar ** 2 * k ** 2 / (2 * scat.mass)
    v0 = 0.5 * scat.mass * wl ** 2 * (z + 0.5 * trap.separation) ** 2
    v1 = 0.5 * scat.mass * wl ** 2 * (z - 0.5 * trap.separation) ** 2
    g = {(j, kk): scat.g3d(j, kk) for j in (0, 1) for kk in (0, 1)}

    wt = 2 * np.pi * trap.f_ax
    a_long = math.sqrt(hbar / (scat.mass * wl))

    def normed(p):
        nrm = math.sqrt(float(np.sum(np.abs(p) ** 2)) * dz)
        return p / nrm

    psi0 = normed(np.exp(-(z + 0.5 * trap.separation) ** 2 / (2 * (2 * a_long) ** 2)))
    psi1 = normed(np.exp(-(z - 0.5 * trap.separation) ** 2 / (2 * (2 * a_long) ** 2)))

    def energy(p0, p1, sig):
        d0 = np.abs(p0) ** 2
        d1 = np.abs(p1) ** 2
        ep = _eperp(scat, trap, sig)
        gf = 1.0 / (4 * np.pi * sig ** 2)
        ke0 = float(np.sum(kin_energy * np.abs(np.fft.fft(p0)) ** 2)) * dz / npts
        ke1 = float(np.sum(kin_energy * np.abs(np.fft.fft(p1)) ** 2)) * dz / npts
        e = n0 * ke0 + n1 * ke1
        e += float(np.sum(n0 * d0 * (v0 + ep) + n1 * d1 * (v1 + ep))) * dz
        e += float(np.sum(gf * (0.5 * g[(0, 0)] * (n0 * d0) ** 2
                                + g[(0, 1)] * (n0 * d0) * (n1 * d1)
                                + 0.5 * g[(1, 1)] * (n1 * d1) ** 2))) * dz
        return e

    trace: list[float] = []
    dt0 = 0.2 / wt
    sig = _sigma(scat, trap, n0 * np.abs(psi0) ** 2 + n1 * np.abs(psi1) ** 2,
                 transverse)
    e_prev = energy(psi0, psi1, sig)
    converged = False
    window = 25  # detects the slow longitudinal modes, not just step noise
    it = 0
    for outer in range(200):
        ep = _eperp(scat, trap, sig)
        gf = 1.0 / (4 * np.pi * sig ** 2)
        dt = dt0
        kin = np.exp(-kin_energy * dt / hbar)
        recent: list[float] = [e_prev]
        while it < max_iter:
            d0 = np.abs(psi0) ** 2
            d1 = np.abs(psi1) ** 2
            u0 = v0 + ep + gf * (g[(0, 0)] * n0 * d0 + g[(0, 1)] * n1 * d1)
            u1 = v1 + ep + gf * (g[(1, 1)] * n1 * d1 + g[(0, 1)] * n0 * d0)
            h0 = np.exp(-0.5 * u0 * dt / hbar)
            h1 = np.exp(-0.5 * u1 * dt / hbar)
            q0 = normed(h0 * np.fft.ifft(kin * np.fft.fft(h0 * psi0)).real)
            q1 = normed(h1 * np.fft.ifft(kin * np.fft.fft(h1 * psi1)).real)
            e = energy(q0, q1, sig)
            rel = (e - e_prev) / max(abs(e_prev), 1e-300)
            if rel > tol and dt > dt0 / 4096:
                dt *= 0.5
                kin = np.exp(-kin_energy * dt / hbar)
                continue
            psi0, psi1 = q0, q1
            it += 1
            trace.append(e)
            e_prev = e
            recent.append(e)
            if len(recent) > window + 1:
                recent.pop(0)
                drop = (recent[0] - recent[-1]) / max(abs(e), 1e-300)
                if drop < window * tol:
                    break
        else:
            raise ConvergenceError(
                f"imaginary time did not converge within {max_iter} steps",
                residual=abs(rel))
        new_sig = _sigma(scat, trap,
                         n0 * np.abs(psi0) ** 2 + n1 * np.abs(psi1) ** 2,
                         transverse)
        dsig = float(np.max(np.abs(new_sig - sig)) / np.max(sig))
        e_new = energy(psi0, psi1, new_sig)
        drel = abs(e_new - e_prev) / max(abs(e_prev), 1e-300)
        sig = new_sig
        e_prev = e_new
        # width error feeds mu only quadratically; 1e-7 relative is far below
        # the finite-difference noise floor of the chi derivatives
        if dsig < 1e-7 and drel < 100 * tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError("transverse width did not settle",
                               residual=dsig)

    profile = ModeProfile(grid=z, density0=np.abs(psi0) ** 2,
                          density1=np.abs(psi1) ** 2, n0=n0, n1=n1,
                          transverse=transverse)
    if return_trace:
        return profile, np.array(trace)
    return profile


def chemical_potential(trap: TrapSpec, scat: ScatteringSpec,
                       modes: ModeProfile, which: int) -> float:
    """mu_j = <psi_j| h_j |psi_j> + sum_k g_jk N_k Int |psi_j|^2 |psi_k|^2.

    Kinetic term evaluated spectrally; the transverse zero-point and
    broadening energy are part of h_j.  Returns Joules.
    """
    if which not in (0, 1):
        raise ValueError("which must be 0 or 1")
    z = modes.grid
    dz = modes.dz
    npts = z.size
    k = 2 * np.pi * np.fft.fftfreq(npts, dz)
    wl = 2 * np.pi * trap.f_long
    n_line = modes.n0 * modes.density0 + modes.n1 * modes.density1
    sig = _sigma(scat, trap, n_line, modes.transverse)
    ep = _eperp(scat, trap, sig)
    gf = 1.0 / (4 * np.pi * sig ** 2)
    d_own = modes.density0 if which == 0 else modes.density1
    d_oth = modes.density1 if which == 0 else modes.density0
    n_oth = modes.n1 if which == 0 else modes.n0
    n_own = modes.n0 if which == 0 else modes.n1
    sign = +0.5 if which == 0 else -0.5
    v = 0.5 * scat.mass * wl ** 2 * (z + sign * trap.separation) ** 2
    psi = np.sqrt(d_own)
    ke = float(np.sum(hbar ** 2 * k ** 2 / (2 * scat.mass)
                      * np.abs(np.fft.fft(psi)) ** 2)) * dz / npts
    pe = float(np.sum((v + ep) * d_own)) * dz
    g_own = scat.g3d(which, which)
    g_x = scat.g3d(0, 1)
    mean = (g_own * n_own * float(np.sum(gf * d_own * d_own)) * dz
            + g_x * n_oth * float(np.sum(gf * d_own * d_oth)) * dz)
    return ke + pe + mean


def overlap_lambda(modes: ModeProfile) -> float:
    """Normalized density overlap in [0, 1]; 1 iff the densities agree."""
    dz = modes.dz
    num = float(np.sum(modes.density0 * modes.density1)) * dz
    den = math.sqrt(float(np.sum(modes.density0 ** 2)) * dz
                    * float(np.sum(modes.density1 ** 2)) * dz)
    if den == 0:
        return 0.0
    return min(num / den, 1.0)


def chi_from_modes(trap: TrapSpec, scat: ScatteringSpec, n_total: float,
                   dn: float | None = None, **solver_opts) -> float:
    """Twist rate chi (rad/s) from symmetric finite differences of mu_j.

    Four fresh solves at (N/2 +- dn, N/2) and (N/2, N/2 +- dn); the default
    step is N/100.
    """
    if n_total < 2:
        raise ValueError("need at least two atoms")
    if dn is None:
        dn = n_total / 100.0
    half = 0.5 * n_total
    mus = {}
    for key, (a, b) in {
        "0p": (half + dn, half), "0m": (half - dn, half),
        "1p": (half, half + dn), "1m": (half, half - dn),
    }.items():
        modes = stationary_modes(trap, scat, a, b, **solver_opts)
        mus[key] = (chemical_potential(trap, scat, modes, 0),
                    chemical_potential(trap, scat, modes, 1))
    d0mu0 = (mus["0p"][0] - mus["0m"][0]) / (2 * dn)
    d1mu1 = (mus["1p"][1] - mus["1m"][1]) / (2 * dn)
    d1mu0 = (mus["1p"][0] - mus["1m"][0]) / (2 * dn)
    d0mu1 = (mus["0p"][1] - mus["0m"][1]) / (2 * dn)
    return (d0mu0 + d1mu1 - d1mu0 - d0mu1) / (2 * hbar)


def chi_lambda_curve(trap: TrapSpec, scat: ScatteringSpec, n_total: float,
                     separations, dn: float | None = None,
                     **solver_opts) -> np.ndarray:
    """Rows (separation, lambda, chi) over a sweep of trap separations."""
    separations = np.asarray(list(separations), dtype=float)
    if np.any(np.diff(separations) <= 0) and separations.size > 1:
        raise ValueError("separations must be sorted ascending")
    rows = np.empty((separations.size, 3))
    for i, s in enumerate(separations):
        t = trap.with_separation(float(s))
        modes = stationary_modes(t, scat, 0.5 * n_total, 0.5 * n_total,
                                 **solver_opts)
        lam = overlap_lambda(modes)
        chi = chi_from_modes(t, scat, n_total, dn=dn, **solver_opts)
        rows[i] = (s, lam, chi)
    return rows


def split_sequence_profile(trap: TrapSpec, scat: ScatteringSpec,
                           n_total: float, duration: float,
                           n_times: int = 33, overshoot: float = 10.0,
                           curve_points: int = 7,
                           **solver_opts) -> SplitProfile:
    """Phenomenological splitting sequence: overlap and twist rate vs time.

    Each component's center performs one full cosine oscillation over the
    duration toward its displaced minimum; the mutual mean-field repulsion
    carries the clouds far beyond the bare trap displacement, which is
    folded into a fixed overshoot factor on the separation amplitude (the
    bare trap offset of 0.52 um is small compared to the cloud, while the
    observed modes separate almost completely mid-sequence).  The overlap at
    each displacement comes from fresh stationary solves; chi(t) follows by
    interpolating the chi(lambda) curve.
    """
    if duration <= 0:
        raise ValueError("duration must be > 0")
    if n_times < 5:
        raise ValueError("need at least 5 time samples")
    times = np.linspace(0.0, duration, n_times)
    d_amp = overshoot * trap.separation
    seps = 0.5 * d_amp * (1.0 - np.cos(2 * np.pi * times / duration))

    # lambda(t) from stationary modes at each displacement (symmetric halves
    # share solves)
    uniq = {}
    lam_t = np.empty(n_times)
    for i, s in enumerate(seps):
        key = round(float(s), 12)
        if key not in uniq:
            t = trap.with_separation(float(s))
            modes = stationary_modes(t, scat, 0.5 * n_total, 0.5 * n_total,
                                     **solver_opts)
            uniq[key] = (overlap_lambda(modes), modes)
        lam_t[i] = uniq[key][0]

    # chi(lambda) from a coarse separation sweep up to the maximum excursion
    if seps.max() > 0:
        curve_seps = np.linspace(0.0, seps.max(), curve_points)
        curve = chi_lambda_curve(trap, scat, n_total, curve_seps,
                                 **solver_opts)
        lam_curve = curve[:, 1]
        chi_curve = curve[:, 2]
        order = np.argsort(lam_curve)
        chi_t = np.interp(lam_t, lam_curve[order], chi_curve[order])
    else:
        chi_t = np.full(n_times,
                        chi_from_modes(trap.with_separation(0.0), scat,
                                       n_total, **solver_opts))

    # contrast from the wavefunction overlap of the recombined modes
    final = uniq[round(float(seps[-1]), 12)][1]
    contrast = float(np.sum(np.sqrt(final.density0 * final.density1))
                     * final.dz)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be increasing")
    return SplitProfile(times=times, lambda_t=lam_t, chi_t=chi_t,
                        contrast_estimate=min(contrast, 1.0))


def split_profile_tables(profile: SplitProfile):
    """(times, chi values) arrays for TwistSpec profile fields."""
    return profile.times.copy(), profile.chi_t.copy()


def curve_to_csv(rows: np.ndarray) -> str:
    lines = ["separation_um,lambda,chi_per_s"]
    for s, lam, chi in rows:
        lines.append(f"{s * 1e6:.6f},{lam:.8f},{chi:.8g}")
    return "\n".join(lines) + "\n"


def split_profile_to_csv(profile: SplitProfile) -> str:
    lines = ["time_ms,lambda,chi_per_s"]
    for t, lam, chi in zip(profile.times, profile.lambda_t, profile.chi_t):
        lines.append(f"{t * 1e3:.6f},{lam:.8f},{chi:.8g}")
    lines.append(f"# contrast_estimate,{profile.contrast_estimate:.8f},")
    return "\n".join(lines) + "\n"
