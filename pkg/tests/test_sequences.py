import numpy as np
import pytest
from scipy.linalg import expm

import spinsqueeze as sq
from spinsqueeze import dicke, sequences
from conftest import dense_operators


OMEGA = 2 * np.pi * 2100.0


def quiet_noise(n_atoms):
    return sq.NoiseSpec(atom_number_mean=n_atoms)


class TestSampleNoise:
    def test_zero_rms_gives_means(self):
        spec = sq.NoiseSpec(atom_number_mean=800)
        r = sq.sample_noise(spec, 3)
        assert r.phase_offset == 0.0
        assert r.detuning_prep == 0.0 and r.detuning_tomo == 0.0
        assert r.power_scale == 1.0
        assert r.n_atoms == 800

    def test_phase_rms_statistics(self):
        spec = sq.NoiseSpec(phase_rms=np.radians(8.0))
        rng = np.random.default_rng(0)
        draws = np.array([sq.sample_noise(spec, rng).phase_offset
                          for _ in range(100000)])
        assert abs(draws.std() - np.radians(8.0)) < 0.02 * np.radians(8.0)

    def test_atom_number_statistics(self):
        spec = sq.NoiseSpec(atom_number_mean=1250, atom_number_rms=45)
        rng = np.random.default_rng(1)
        ns = np.array([sq.sample_noise(spec, rng).n_atoms
                       for _ in range(100000)])
        assert abs(ns.std() - 45) < 1.0
        assert abs(ns.mean() - 1250) < 1.0

    def test_correlation_switch(self):
        spec = sq.NoiseSpec(detuning_rms=10.0, detuning_correlated=True)
        r = sq.sample_noise(spec, 5)
        assert r.detuning_prep == r.detuning_tomo
        spec2 = sq.NoiseSpec(detuning_rms=10.0)
        r2 = sq.sample_noise(spec2, 5)
        assert r2.detuning_prep != r2.detuning_tomo


class TestEulerBatchPath:
    @pytest.mark.parametrize("n", [1, 2, 3, 7])  # includes half-integer spin
    def test_zxz_identity_on_spin_reps(self, n):
        rng = np.random.default_rng(31 + n)
        sx, sy, sz = dense_operators(n)
        m = dicke.m_values(n)
        v = dicke.rotation_basis(n)
        for _ in range(10):
            om = rng.uniform(0.1, 5)
            det = rng.uniform(-3, 3)
            phi = rng.uniform(0, 2 * np.pi)
            tau = rng.uniform(0, 3)
            axis, ang = sequences.pulse_axis_angle(om, phi, det, tau)
            a, b, c = sequences.zxz_angles(sequences.su2_matrix(axis, ang))
            u_ref = expm(-1j * tau * (det * sz
                                      + om * (np.cos(phi) * sx
                                              - np.sin(phi) * sy)))
            u_got = (np.diag(np.exp(-1j * a * m))
                     @ (v @ np.diag(np.exp(-1j * b * m)) @ v.T)
                     @ np.diag(np.exp(-1j * c * m)))
            assert np.abs(u_ref - u_got).max() < 1e-10

    def test_scalar_and_batch_paths_agree(self):
        # same seeds: identical realizations, same Born distribution
        n = 60
        noise = sq.NoiseSpec(phase_rms=0.05, detuning_rms=300.0,
                             pulse_power_rel_rms=0.01, atom_number_mean=n,
                             atom_number_rms=3)
        loss = sq.LossSpec(rate1=(0.4, 0.4))
        twist = sq.TwistSpec(duration=1.0, chi=0.01)
        seq = sq.standard_sequence(OMEGA, twist, np.radians(12.0))
        records = sq.ensemble(seq, noise, loss, 40, base_seed=900)
        for i in (0, 7, 23):
            res = sq.run_sequence(seq, noise, loss, seed=900 + i)
            st = res.final_state
            rec = records[i]
            assert st.n_atoms == int(rec.total)
            # Born sample comes from the same uniform draw
            rng = np.random.default_rng(900 + i)
            sq.sample_noise(noise, rng)
            rng.integers(0, 2 ** 32)
            u = rng.random()
            cum = np.cumsum(st.probabilities())
            cum /= cum[-1]
            pick = min(int(np.searchsorted(cum, u, side="right")), st.n_atoms)
            assert st.m[pick] == rec.sz


class TestRunSequence:
    def test_ramsey_fringe(self):
        # free detuning turns the final <Sz> sinusoidal in delta*T
        n = 200
        seq0 = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=1e-3),
                                    0.5 * np.pi)
        phases = np.linspace(0, 2 * np.pi, 9)
        szs = []
        for ph in phases:
            twist = sq.TwistSpec(duration=1e-3, free_detuning=ph / 1e-3)
            seq = sq.standard_sequence(OMEGA, twist, 0.5 * np.pi)
            res = sq.run_sequence(seq, quiet_noise(n), sq.LossSpec(), seed=4)
            szs.append(sq.expectations(res.final_state).sz)
        szs = np.array(szs)
        # amplitude N/2, phase offset fixed: fit against sinusoid
        ref = 0.5 * n * np.sin(phases + np.angle(szs[0] + 1j * szs[2]
                                                 * np.sign(szs[2])))
        assert szs.max() > 0.45 * n and szs.min() < -0.45 * n
        # exact sinusoid: residual of projection onto {1, sin, cos}
        a = np.column_stack([np.ones_like(phases), np.sin(phases),
                             np.cos(phases)])
        resid = szs - a @ np.linalg.lstsq(a, szs, rcond=None)[0]
        assert np.abs(resid).max() < 1e-6 * n

    def test_best_squeezing_far_below_sql(self):
        n = 100
        q_best = 0.4 / (0.5 * n) ** (2 / 3)  # near the twisting optimum
        twist = sq.TwistSpec(duration=1.0, chi=q_best)
        st = sq.evolve_oat(sq.make_coherent_state(n, np.pi / 2, 0.0),
                           0.0, q_best, 1.0)
        from spinsqueeze.metrology import min_variance_angle
        theta, vmin, _ = min_variance_angle(sq.expectations(st))
        theta = theta % np.pi
        seq = sq.standard_sequence(OMEGA, twist, theta)
        res = sq.run_sequence(seq, quiet_noise(n), sq.LossSpec(), seed=8)
        var = sq.expectations(res.final_state).cov_yz[1, 1]
        db = 10 * np.log10(var / (0.25 * n))
        assert db < -6.0
        assert abs(var - vmin) < 1e-6 * n

    def test_final_n_bounded(self):
        seq = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=2e-3), 0.1)
        loss = sq.LossSpec(rate1=(5.0, 5.0))
        res = sq.run_sequence(seq, quiet_noise(50), loss, seed=3)
        assert res.final_state.n_atoms <= 50


class TestEnsemble:
    def test_projection_noise(self):
        n = 400
        seq = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=1e-3), 0.0)
        recs = sq.ensemble(seq, quiet_noise(n), sq.LossSpec(), 10000,
                           base_seed=77)
        sz = np.array([r.sz for r in recs])
        assert abs(np.var(sz, ddof=1) - 0.25 * n) < 0.05 * 0.25 * n

    def test_bit_identical_reruns(self):
        seq = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=1e-3,
                                                       chi=1e-4), 0.3)
        noise = sq.NoiseSpec(phase_rms=0.1, atom_number_mean=80,
                             atom_number_rms=5)
        loss = sq.LossSpec(rate1=(0.5, 0.5))
        a = sq.ensemble(seq, noise, loss, 200, base_seed=123)
        b = sq.ensemble(seq, noise, loss, 200, base_seed=123)
        assert a == b

    def test_matches_exact_variance_curve(self):
        # zero noise, zero loss: ensemble variance vs angle equals the exact
        # state's variance_along within Monte Carlo error
        n = 150
        q = 0.5 / (0.5 * n) ** (2 / 3)
        twist = sq.TwistSpec(duration=1.0, chi=q)
        st = sq.evolve_oat(sq.make_coherent_state(n, np.pi / 2, 0.0),
                           0.0, q, 1.0)
        thetas = np.radians([0.0, 10.0, 30.0, 90.0])
        seq = sq.standard_sequence(OMEGA, twist, 0.0)
        recs = sq.run_scan(seq, thetas, 10000, quiet_noise(n), sq.LossSpec(),
                           base_seed=5150)
        for k, th in enumerate(thetas):
            sz = np.array([r.sz for r in recs[k * 10000:(k + 1) * 10000]])
            v_exact = sq.variance_along(st, th)
            v_mc = np.var(sz, ddof=1)
            # variance-of-variance for ~normal data
            stderr = v_exact * np.sqrt(2.0 / (sz.size - 1))
            assert abs(v_mc - v_exact) < 3.5 * stderr

    def test_phase_noise_adds_sin2theta_variance(self):
        n = 300
        dphi = np.radians(7.0)
        noise = sq.NoiseSpec(phase_rms=dphi, atom_number_mean=n)
        seq0 = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=1e-3), 0.0)
        thetas = np.radians([30.0, 90.0])
        recs = sq.run_scan(seq0, thetas, 20000, noise, sq.LossSpec(),
                           base_seed=321)
        sx = 0.5 * n
        for k, th in enumerate(thetas):
            sz = np.array([r.sz for r in recs[k * 20000:(k + 1) * 20000]])
            extra = np.var(sz, ddof=1) - 0.25 * n
            predicted = np.sin(th) ** 2 * (sx * dphi) ** 2
            assert abs(extra - predicted) < 0.1 * predicted + 0.03 * n

    def test_detuning_noise_raises_180deg_point(self):
        n = 300
        noise = sq.NoiseSpec(detuning_rms=2 * np.pi * 40.0,
                             atom_number_mean=n)
        seq = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=1e-3), 0.0)
        recs = sq.run_scan(seq, [np.pi], 20000, noise, sq.LossSpec(),
                           base_seed=11)
        sz = np.array([r.sz for r in recs])
        v = np.var(sz, ddof=1)
        stderr = 0.25 * n * np.sqrt(2.0 / (sz.size - 1))
        assert v > 0.25 * n + 4 * stderr

    def test_counts_are_consistent(self):
        seq = sq.standard_sequence(OMEGA, sq.TwistSpec(duration=1e-3), 0.2)
        noise = sq.NoiseSpec(atom_number_mean=60, atom_number_rms=4)
        loss = sq.LossSpec(rate1=(1.0, 1.0))
        recs = sq.ensemble(seq, noise, loss, 100, base_seed=9)
        for r in recs:
            assert r.n0 >= 0 and r.n1 >= 0
            assert float(r.n0).is_integer() and float(r.n1).is_integer()
            assert r.total <= 60 + 4 * 6


class TestCalibration:
    def test_floor_calibration_hits_target(self):
        n = 300
        loss = sq.LossSpec(rate1=(1.0, 1.0), rate2=(0, 5e-3, 1e-3),
                           rate3=1e-6)
        twist = sq.TwistSpec(duration=12.7e-3, chi=1.0)
        seq = sq.standard_sequence(OMEGA, twist, 0.0)
        target = -9.0
        scale = sq.calibrate_twist(seq, loss, n, target_db=target,
                                   n_traj=400, seed=77, tol_db=0.05)
        db, theta_min, n_mean = sequences.scan_variance_floor(
            seq, loss, n, 400, 77, scale)
        assert abs(db - target) <= 0.06
        assert n_mean < n

    def test_unreachable_floor_raises(self):
        n = 40
        loss = sq.LossSpec(rate1=(30.0, 30.0))  # massive loss
        twist = sq.TwistSpec(duration=12.7e-3, chi=1.0)
        seq = sq.standard_sequence(OMEGA, twist, 0.0)
        with pytest.raises(RuntimeError):
            sq.calibrate_twist(seq, loss, n, target_db=-20.0, n_traj=150,
                               seed=5)
