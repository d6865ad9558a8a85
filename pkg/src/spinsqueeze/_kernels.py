"""Monte Carlo wavefunction kernel for twisting with particle loss.

During the twisting segment the Hamiltonian (delta*Sz + chi(t)*Sz^2) and all
jump-rate operators L^dag L are diagonal in the Dicke basis, so the no-jump
evolution has a closed form and jump times follow an inhomogeneous Poisson
process whose intensity is the state-averaged decay rate.  Trajectories are
sampled exactly by thinning: candidate times from a dominating constant rate
(the maximum level rate over the occupied window), acceptance with the exact
state-dependent intensity.  No time-step error.

Performance structure, which matters at N ~ 1e3 with ~1e2 jumps per shot:
  - amplitudes with relative probability below 1e-30 of the peak are treated
    as zero (the occupied window);
  - level decay rates are cubic polynomials in m, so the accumulated decay
    exponent and twist phase stay polynomials in m across segments (jumps
    only shift the expansion point); amplitudes are materialized with a
    single complex-exponential pass at the end;
  - the probability vector needed for jump statistics is decayed with one
    real-exponential pass per candidate time.

The same algorithm exists twice: a numba @njit build (default) and a pure
numpy twin.  Both consume an identical MT19937 stream (numba's np.random
matches numpy's legacy RandomState bit for bit), so the two backends agree
to floating-point rounding.  Set SPINSQUEEZE_DISABLE_NUMBA=1 to force the
numpy path.
"""

from __future__ import annotations

import os

import numpy as np

# loss channels in fixed order: (atoms removed from |0>, atoms removed from |1>)
CHANNELS = ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0))
N_CHANNELS = len(CHANNELS)

WINDOW_CUT = 1e-30  # relative probability below which a level is dropped

_DISABLE = os.environ.get("SPINSQUEEZE_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # no-op decorator
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _rate_poly(rates, half):
    """Coefficients (c0..c3) of Gamma(m) = sum_c rate_c <L^dag L>_m.

    N0 = N/2 - m and N1 = N/2 + m take integer eigenvalues on the ladder, so
    the falling-factorial diagonals are exact polynomials that never go
    negative on physical levels.
    """
    g0, g1, g00, g01, g11, g000 = (rates[0], rates[1], rates[2], rates[3],
                                   rates[4], rates[5])
    h = half
    c0 = (g0 * h + g1 * h + g00 * (h * h - h) + g01 * h * h
          + g11 * (h * h - h) + g000 * (h ** 3 - 3 * h * h + 2 * h))
    c1 = (-g0 + g1 + g00 * (1.0 - 2 * h) + g11 * (2 * h - 1.0)
          + g000 * (-3 * h * h + 6 * h - 2.0))
    c2 = g00 + g11 - g01 + g000 * (3 * h - 3.0)
    c3 = -g000
    return c0, c1, c2, c3


def _mcwf_twist_impl(amps, n_atoms, delta, tgrid, chi_cum, tmax,
                     rates, seed, jump_times, jump_channels):
    """One exact loss trajectory over the twisting segment.

    Returns (final amplitudes at the final atom number, final N, jump count).
    """
    np.random.seed(seed)
    n = n_atoms
    dim0 = n + 1
    psi = amps.copy()
    p = np.empty(dim0)
    gamma = np.empty(dim0)
    njump = 0
    maxjump = jump_times.shape[0]
    ngrid = tgrid.shape[0]

    pmax = 0.0
    for i in range(dim0):
        q = psi[i].real ** 2 + psi[i].imag ** 2
        p[i] = q
        if q > pmax:
            pmax = q
    cut = pmax * WINDOW_CUT
    lo = 0
    while lo < n and p[lo] <= cut:
        psi[lo] = 0.0
        lo += 1
    hi = n
    while hi > lo and p[hi] <= cut:
        psi[hi] = 0.0
        hi -= 1

    # accumulated decay exponent D(m) = d0 + d1 m + d2 m^2 + d3 m^3 and twist
    # phase alpha*m + beta*m^2, both pending until final materialization
    d0 = 0.0
    d1 = 0.0
    d2 = 0.0
    d3 = 0.0
    alpha = 0.0
    beta = 0.0

    t = 0.0
    seg_start = 0.0
    while True:
        half = 0.5 * n
        (g0, g1, g00, g01, g11, g000) = (rates[0], rates[1], rates[2],
                                         rates[3], rates[4], rates[5])
        c0 = (g0 * half + g1 * half + g00 * (half * half - half)
              + g01 * half * half + g11 * (half * half - half)
              + g000 * (half ** 3 - 3 * half * half + 2 * half))
        c1 = (-g0 + g1 + g00 * (1.0 - 2 * half) + g11 * (2 * half - 1.0)
              + g000 * (-3 * half * half + 6 * half - 2.0))
        c2 = g00 + g11 - g01 + g000 * (3 * half - 3.0)
        c3 = -g000

        lam = 0.0
        for i in range(lo, hi + 1):
            m = i - half
            g = c0 + m * (c1 + m * (c2 + m * c3))
            if g < 0.0:
                g = 0.0
            gamma[i] = g
            if g > lam:
                lam = g

        jumped = False
        while True:  # candidate times within one inter-jump segment
            u = np.random.random()
            if lam > 0.0:
                tau = -np.log1p(-u) / lam
            else:
                tau = (tmax - t) + 1.0
            if tau >= tmax - t or njump >= maxjump:
                t = tmax
                break
            t += tau
            psum = 0.0
            lsum = 0.0
            for i in range(lo, hi + 1):
                q = p[i] * np.exp(-gamma[i] * tau)
                p[i] = q
                psum += q
                lsum += q * gamma[i]
            u2 = np.random.random()
            if u2 * lam * psum <= lsum:
                jumped = True
                break

        # bank the segment into the pending polynomials
        dt_seg = t - seg_start
        chi_seg = (_interp_scalar(tgrid, chi_cum, ngrid, t)
                   - _interp_scalar(tgrid, chi_cum, ngrid, seg_start))
        d0 += 0.5 * c0 * dt_seg
        d1 += 0.5 * c1 * dt_seg
        d2 += 0.5 * c2 * dt_seg
        d3 += 0.5 * c3 * dt_seg
        alpha += delta * dt_seg
        beta += chi_seg
        seg_start = t

        if not jumped:
            break

        # channel selection with probability rate-weighted <L^dag L>
        w0 = 0.0
        w1 = 0.0
        w2 = 0.0
        w3 = 0.0
        w4 = 0.0
        w5 = 0.0
        for i in range(lo, hi + 1):
            q = p[i]
            m = i - half
            n0 = half - m
            n1 = half + m
            w0 += q * g0 * n0
            w1 += q * g1 * n1
            w2 += q * g00 * n0 * (n0 - 1.0)
            w3 += q * g01 * n0 * n1
            w4 += q * g11 * n1 * (n1 - 1.0)
            w5 += q * g000 * n0 * (n0 - 1.0) * (n0 - 2.0)
        wtot = w0 + w1 + w2 + w3 + w4 + w5
        if wtot <= 0.0:
            continue
        u3 = np.random.random() * wtot
        if u3 <= w0:
            chan = 0
        elif u3 <= w0 + w1:
            chan = 1
        elif u3 <= w0 + w1 + w2:
            chan = 2
        elif u3 <= w0 + w1 + w2 + w3:
            chan = 3
        elif u3 <= w0 + w1 + w2 + w3 + w4:
            chan = 4
        else:
            chan = 5
        k0 = 0
        k1 = 0
        if chan == 0:
            k0 = 1
        elif chan == 1:
            k1 = 1
        elif chan == 2:
            k0 = 2
        elif chan == 3:
            k0 = 1
            k1 = 1
        elif chan == 4:
            k1 = 2
        else:
            k0 = 3

        new_n = n - k0 - k1
        if new_n < 0:
            break
        new_lo = lo - k1
        if new_lo < 0:
            new_lo = 0
        new_hi = hi - k1
        if new_hi > new_n:
            new_hi = new_n
        pmax = 0.0
        psum = 0.0
        ssum = 0.0
        for i2 in range(new_lo, new_hi + 1):  # left shift: reads stay ahead
            i = i2 + k1
            m = i - half
            n0 = half - m
            n1 = half + m
            f = 1.0
            for j in range(k0):
                f *= n0 - j
            for j in range(k1):
                f *= n1 - j
            if f < 0.0:
                f = 0.0
            q = p[i] * f
            p[i2] = q
            psum += q
            if q > pmax:
                pmax = q
            val = psi[i] * np.sqrt(f)
            psi[i2] = val
            ssum += val.real ** 2 + val.imag ** 2
        for i2 in range(new_hi + 1, hi + 1):
            psi[i2] = 0.0
            p[i2] = 0.0
        if psum <= 0.0 or ssum <= 0.0:
            break
        inv = 1.0 / psum
        sinv = 1.0 / np.sqrt(ssum)
        for i2 in range(new_lo, new_hi + 1):
            p[i2] *= inv
            psi[i2] *= sinv
        # re-center pending polynomials: old m = new m + s
        s = 0.5 * (k1 - k0)
        if s != 0.0:
            nd0 = d0 + s * (d1 + s * (d2 + s * d3))
            nd1 = d1 + s * (2.0 * d2 + 3.0 * s * d3)
            nd2 = d2 + 3.0 * s * d3
            d0 = nd0
            d1 = nd1
            d2 = nd2
            alpha += 2.0 * beta * s
        n = new_n
        cut = pmax * WINDOW_CUT / psum
        lo = new_lo
        while lo < new_hi and p[lo] <= cut:
            psi[lo] = 0.0
            lo += 1
        hi = new_hi
        while hi > lo and p[hi] <= cut:
            psi[hi] = 0.0
            hi -= 1
        jump_times[njump] = t
        jump_channels[njump] = chan
        njump += 1
        if n == 0:
            break

    # materialize the pending decay and phases in one pass
    half = 0.5 * n
    emin = np.inf
    for i in range(lo, hi + 1):
        m = i - half
        e = d0 + m * (d1 + m * (d2 + m * d3))
        if e < emin:
            emin = e
    nrm = 0.0
    for i in range(lo, hi + 1):
        m = i - half
        e = d0 + m * (d1 + m * (d2 + m * d3)) - emin
        ph = alpha * m + beta * m * m
        psi[i] = psi[i] * np.exp(complex(-e, -ph))
        nrm += psi[i].real ** 2 + psi[i].imag ** 2
    nrm = np.sqrt(nrm)
    for i in range(lo, hi + 1):
        psi[i] /= nrm

    return psi[:n + 1], n, njump


def _interp_scalar(tgrid, values, ngrid, t):
    if t <= tgrid[0]:
        return values[0]
    if t >= tgrid[ngrid - 1]:
        return values[ngrid - 1]
    lo = 0
    hi = ngrid - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tgrid[mid] <= t:
            lo = mid
        else:
            hi = mid
    f = (t - tgrid[lo]) / (tgrid[lo + 1] - tgrid[lo])
    return values[lo] + f * (values[lo + 1] - values[lo])


def _mcwf_twist_numpy(amps, n_atoms, delta, tgrid, chi_cum, tmax,
                      rates, seed, jump_times, jump_channels):
    """Vectorized numpy twin of the njit kernel; identical RNG stream."""
    rs = np.random.RandomState(seed)
    n = n_atoms
    psi = amps.copy()
    p = np.abs(psi) ** 2
    njump = 0
    maxjump = jump_times.shape[0]

    cut = p.max() * WINDOW_CUT
    occ = np.nonzero(p > cut)[0]
    lo, hi = int(occ[0]), int(occ[-1])
    psi[:lo] = 0.0
    psi[hi + 1:] = 0.0

    poly_d = np.zeros(4)
    alpha = 0.0
    beta = 0.0
    t = 0.0
    seg_start = 0.0
    while True:
        half = 0.5 * n
        c = np.array(_rate_poly(rates, half))
        m = np.arange(lo, hi + 1) - half
        gamma = np.clip(c[0] + m * (c[1] + m * (c[2] + m * c[3])), 0.0, None)
        lam = float(gamma.max()) if gamma.size else 0.0

        jumped = False
        while True:
            u = rs.random_sample()
            tau = -np.log1p(-u) / lam if lam > 0.0 else (tmax - t) + 1.0
            if tau >= tmax - t or njump >= maxjump:
                t = tmax
                break
            t += tau
            p[lo:hi + 1] *= np.exp(-gamma * tau)
            psum = float(p[lo:hi + 1].sum())
            lsum = float(np.dot(p[lo:hi + 1], gamma))
            u2 = rs.random_sample()
            if u2 * lam * psum <= lsum:
                jumped = True
                break

        dt_seg = t - seg_start
        chi_seg = float(np.interp(t, tgrid, chi_cum)
                        - np.interp(seg_start, tgrid, chi_cum))
        poly_d += 0.5 * c * dt_seg
        alpha += delta * dt_seg
        beta += chi_seg
        seg_start = t
        if not jumped:
            break

        n0 = half - m
        n1 = half + m
        diag = np.empty((N_CHANNELS, m.size))
        diag[0] = rates[0] * n0
        diag[1] = rates[1] * n1
        diag[2] = rates[2] * n0 * (n0 - 1.0)
        diag[3] = rates[3] * n0 * n1
        diag[4] = rates[4] * n1 * (n1 - 1.0)
        diag[5] = rates[5] * n0 * (n0 - 1.0) * (n0 - 2.0)
        w = diag @ p[lo:hi + 1]
        wtot = float(w.sum())
        if wtot <= 0.0:
            continue
        u3 = rs.random_sample() * wtot
        chan = min(int(np.searchsorted(np.cumsum(w), u3, side="left")),
                   N_CHANNELS - 1)
        k0, k1 = CHANNELS[chan]
        new_n = n - k0 - k1
        if new_n < 0:
            break
        new_lo = max(lo - k1, 0)
        new_hi = min(hi - k1, new_n)
        i2 = np.arange(new_lo, new_hi + 1)
        i = i2 + k1
        mm = i - half
        f = np.ones(i.size)
        for j in range(k0):
            f *= (half - mm) - j
        for j in range(k1):
            f *= (half + mm) - j
        f = np.clip(f, 0.0, None)
        pv = p[i] * f
        sv = psi[i] * np.sqrt(f)
        psum = float(pv.sum())
        ssum = float(np.vdot(sv, sv).real)
        psi[new_lo:new_hi + 1] = 0.0
        p[new_lo:new_hi + 1] = 0.0
        if psum <= 0.0 or ssum <= 0.0:
            break
        p[new_lo:new_hi + 1] = pv / psum
        psi[new_lo:new_hi + 1] = sv / np.sqrt(ssum)
        psi[new_hi + 1:hi + 1] = 0.0
        p[new_hi + 1:hi + 1] = 0.0
        s = 0.5 * (k1 - k0)
        if s != 0.0:
            d0, d1, d2, d3 = poly_d
            poly_d = np.array([d0 + s * (d1 + s * (d2 + s * d3)),
                               d1 + s * (2.0 * d2 + 3.0 * s * d3),
                               d2 + 3.0 * s * d3, d3])
            alpha += 2.0 * beta * s
        n = new_n
        cut = p[new_lo:new_hi + 1].max() * WINDOW_CUT
        occ = np.nonzero(p[new_lo:new_hi + 1] > cut)[0]
        lo2 = new_lo + int(occ[0])
        hi2 = new_lo + int(occ[-1])
        psi[new_lo:lo2] = 0.0
        psi[hi2 + 1:new_hi + 1] = 0.0
        lo, hi = lo2, hi2
        jump_times[njump] = t
        jump_channels[njump] = chan
        njump += 1
        if n == 0:
            break

    half = 0.5 * n
    m = np.arange(lo, hi + 1) - half
    e = poly_d[0] + m * (poly_d[1] + m * (poly_d[2] + m * poly_d[3]))
    e -= e.min()
    psi[lo:hi + 1] *= np.exp(-e - 1j * (alpha * m + beta * m * m))
    psi[lo:hi + 1] /= np.linalg.norm(psi[lo:hi + 1])
    return psi[:n + 1], n, njump


if HAVE_NUMBA:
    _interp_scalar = njit(cache=True)(_interp_scalar)
    _mcwf_twist_njit = njit(cache=True)(_mcwf_twist_impl)


def mcwf_twist(amps, n_atoms, delta, tgrid, chi_cum, tmax, rates, seed):
    """Run one loss trajectory; returns (amps, n_final, jump_times, channels).

    Dispatches to the numba build when available (and not disabled via the
    SPINSQUEEZE_DISABLE_NUMBA env flag), otherwise to the numpy twin.
    """
    amps = np.ascontiguousarray(amps, dtype=np.complex128)
    tgrid = np.ascontiguousarray(tgrid, dtype=np.float64)
    chi_cum = np.ascontiguousarray(chi_cum, dtype=np.float64)
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    cap = max(int(n_atoms), 8)
    jt = np.zeros(cap)
    jc = np.zeros(cap, dtype=np.int32)
    fn = _mcwf_twist_njit if HAVE_NUMBA else _mcwf_twist_numpy
    psi, nfin, njump = fn(amps, int(n_atoms), float(delta), tgrid, chi_cum,
                          float(tmax), rates, np.uint32(seed), jt, jc)
    return np.asarray(psi).copy(), int(nfin), jt[:njump].copy(), jc[:njump].copy()


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"
