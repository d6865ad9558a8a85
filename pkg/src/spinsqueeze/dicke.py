"""Collective spin states of N two-level atoms and their exact evolutions.

Everything lives in the fully symmetric (Dicke) sector, a ladder of N+1
levels |S=N/2, m>, m = -N/2 ... +N/2, where m is the Sz eigenvalue and the
populations are N1 = N/2 + m, N0 = N/2 - m.  Rotations and pulses are exact
unitaries obtained from eigendecompositions of tridiagonal generators; the
nonlinear twist is diagonal and costs O(N).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln

NORM_TOL = 1e-10

_BASIS_CACHE: dict[int, np.ndarray] = {}
_BASIS_CACHE_MAX = 16


def m_values(n_atoms: int) -> np.ndarray:
    """Sz eigenvalues m = -N/2 ... +N/2 (half-integers for odd N)."""
    return np.arange(n_atoms + 1) - 0.5 * n_atoms


def ladder_couplings(n_atoms: int) -> np.ndarray:
    """Matrix elements <m+1|S+|m> = sqrt((S-m)(S+m+1)), length N."""
    s = 0.5 * n_atoms
    m = m_values(n_atoms)[:-1]
    return np.sqrt((s - m) * (s + m + 1.0))


@dataclass(frozen=True)
class CollectiveSpinState:
    """Normalized amplitude vector over the Dicke ladder of N atoms."""

    n_atoms: int
    amplitudes: np.ndarray

    def __post_init__(self):
        # N = 0 is allowed as the endpoint of total particle loss
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be >= 0")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_atoms + 1,):
            raise ValueError(
                f"amplitude vector must have length N+1 = {self.n_atoms + 1}, "
                f"got {amps.shape}"
            )
        norm = np.sum(np.abs(amps) ** 2)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm deviates from 1 by {abs(norm - 1.0):.3e}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def m(self) -> np.ndarray:
        return m_values(self.n_atoms)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class SpinExpectations:
    """First moments and the transverse (Sy, Sz) covariance matrix."""

    sx: float
    sy: float
    sz: float
    cov_yz: np.ndarray  # 2x2, index order (Sy, Sz)


@dataclass(frozen=True)
class PulseSpec:
    """A coupling pulse: Rabi frequency, phase, detuning, duration."""

    rabi: float
    phase: float = 0.0
    detuning: float = 0.0
    duration: float = 0.0

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError("rabi must be >= 0")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")

    @property
    def area(self) -> float:
        return self.rabi * self.duration


def make_coherent_state(n_atoms: int, polar: float, azimuth: float = 0.0
                        ) -> CollectiveSpinState:
    """Spin-coherent state pointing along (polar, azimuth).

    polar=0 is the +z pole (all atoms in |1>), polar=pi the -z pole (all in
    |0>); polar=pi/2, azimuth=0 gives the binomial state along +x.
    """
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    amps = coherent_amplitudes(n_atoms, polar, azimuth)
    return CollectiveSpinState(n_atoms, amps)


def coherent_amplitudes(n_atoms: int, polar: float, azimuth: float = 0.0
                        ) -> np.ndarray:
    """Amplitude vector of the spin-coherent state (log-binomial, stable)."""
    n = n_atoms
    m = m_values(n)
    c = np.cos(0.5 * polar)
    s = np.sin(0.5 * polar)
    amps = np.zeros(n + 1, dtype=complex)
    if s == 0.0:
        amps[-1] = 1.0
        return amps
    if c == 0.0:
        amps[0] = 1.0
        return amps
    i = np.arange(n + 1)
    logb = 0.5 * (gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1))
    logmag = logb + i * np.log(abs(c)) + (n - i) * np.log(abs(s))
    amps = np.exp(logmag) * np.exp(-1j * m * azimuth)
    if c < 0:
        amps *= np.power(-1.0 + 0j, i)
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2))
    return amps


def rotation_basis(n_atoms: int, cache: bool = True) -> np.ndarray:
    """Orthogonal eigenbasis V of Sx, so exp(-i t Sx) = V diag(e^{-i t m}) V^T.

    Sx is real symmetric tridiagonal with eigenvalues m; the columns of V are
    ordered so eigenvalue k is m_values(n)[k].  The matrix is cached because
    building it costs O(N^2) while every rotation reuses it.
    """
    if cache and n_atoms in _BASIS_CACHE:
        return _BASIS_CACHE[n_atoms]
    off = 0.5 * ladder_couplings(n_atoms)
    _, v = eigh_tridiagonal(np.zeros(n_atoms + 1), off)
    v = np.ascontiguousarray(v)
    if cache:
        if len(_BASIS_CACHE) >= _BASIS_CACHE_MAX:
            _BASIS_CACHE.pop(next(iter(_BASIS_CACHE)))
        _BASIS_CACHE[n_atoms] = v
    return v


def apply_rotation(state: CollectiveSpinState, axis_azimuth: float,
                   angle: float) -> CollectiveSpinState:
    """Exact rotation exp(-i angle S_phi), S_phi = cos(phi) Sx - sin(phi) Sy.

    Uses S_phi = e^{i phi Sz} Sx e^{-i phi Sz} and the cached Sx eigenbasis.
    """
    m = state.m
    v = rotation_basis(state.n_atoms)
    psi = state.amplitudes * np.exp(-1j * axis_azimuth * m)
    psi = v @ (np.exp(-1j * angle * m) * (v.T @ psi))
    psi *= np.exp(1j * axis_azimuth * m)
    return CollectiveSpinState(state.n_atoms, psi)


def evolve_oat(state: CollectiveSpinState, detuning: float, chi: float,
               time: float) -> CollectiveSpinState:
    """Twisting evolution under delta*Sz + chi*Sz^2: diagonal phases, O(N)."""
    if time < 0:
        raise ValueError("time must be >= 0")
    m = state.m
    psi = state.amplitudes * np.exp(-1j * (detuning * m + chi * m * m) * time)
    return CollectiveSpinState(state.n_atoms, psi)


def evolve_pulse(state: CollectiveSpinState, pulse: PulseSpec,
                 chi: float = 0.0) -> CollectiveSpinState:
    """Exact evolution under delta*Sz + Omega*S_phi + chi*Sz^2 for the pulse
    duration.

    The phase is gauged away with e^{i phi Sz}, leaving a real symmetric
    tridiagonal generator that is diagonalized exactly.
    """
    m = state.m
    diag = pulse.detuning * m + chi * m * m
    off = 0.5 * pulse.rabi * ladder_couplings(state.n_atoms)
    w, u = eigh_tridiagonal(diag, off)
    psi = state.amplitudes * np.exp(-1j * pulse.phase * m)
    psi = u @ (np.exp(-1j * w * pulse.duration) * (u.T @ psi))
    psi *= np.exp(1j * pulse.phase * m)
    return CollectiveSpinState(state.n_atoms, psi)


def expectations(state: CollectiveSpinState) -> SpinExpectations:
    """First and second moments of (Sx, Sy, Sz) from the amplitudes.

    Sz is diagonal; everything else contracts ladder couplings, so the whole
    computation is O(N).
    """
    psi = state.amplitudes
    m = state.m
    g = ladder_couplings(state.n_atoms)
    p = np.abs(psi) ** 2

    sz = float(np.dot(p, m))
    sz2 = float(np.dot(p, m * m))

    # r_i = conj(c_{i+1}) c_i g_i  ->  <S+> = sum r
    r = np.conj(psi[1:]) * psi[:-1] * g
    splus = np.sum(r)
    sx = float(splus.real)
    sy = float(splus.imag)

    # <S+^2>, <S+ S->, <S- S+>
    if state.n_atoms >= 2:
        spp = np.sum(np.conj(psi[2:]) * psi[:-2] * g[:-1] * g[1:])
    else:
        spp = 0.0
    spm = float(np.dot(p[1:], g ** 2))   # <S+ S-> : lowers from m, g_{m-1}^2
    smp = float(np.dot(p[:-1], g ** 2))  # <S- S+>

    sy2 = 0.25 * (spm + smp - 2.0 * np.real(spp))
    # symmetrized <Sy Sz + Sz Sy>/2 = Im(sum r_i (2 m_i + 1)) / 2
    t = np.sum(r * (2.0 * m[:-1] + 1.0))
    cyz = 0.5 * float(t.imag) - sy * sz

    vyy = sy2 - sy * sy
    vzz = sz2 - sz * sz
    cov = np.array([[vyy, cyz], [cyz, vzz]])
    return SpinExpectations(sx=sx, sy=sy, sz=sz, cov_yz=cov)


def variance_along(state: CollectiveSpinState, theta: float) -> float:
    """Variance of S_theta = cos(theta) Sz - sin(theta) Sy."""
    e = expectations(state)
    return variance_from_cov(e.cov_yz, theta)


def variance_from_cov(cov_yz: np.ndarray, theta: float) -> float:
    """Var(cos(theta) Sz - sin(theta) Sy) given the (Sy, Sz) covariance."""
    c, s = np.cos(theta), np.sin(theta)
    vyy, vzz = cov_yz[0, 0], cov_yz[1, 1]
    cyz = cov_yz[0, 1]
    return float(c * c * vzz + s * s * vyy - 2.0 * c * s * cyz)


def sample_sz(state: CollectiveSpinState, rng) -> float:
    """Draw one Sz outcome m from the Born distribution |c_m|^2.

    `rng` is an integer seed or a numpy Generator.  Deterministic per seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    p = state.probabilities()
    cum = np.cumsum(p)
    cum /= cum[-1]
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    idx = min(idx, state.n_atoms)
    return float(state.m[idx])
