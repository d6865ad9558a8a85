import numpy as np
import pytest

import spinsqueeze as sq
from spinsqueeze import tomography as tg


def coherent_records(n_atoms, theta, n_shots, seed, shot0=0):
    st = sq.make_coherent_state(n_atoms, np.pi / 2, 0.0)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_shots):
        m = sq.sample_sz(st, rng)
        out.append(sq.ShotRecord(shot=shot0 + i, theta=theta,
                                 n0=0.5 * n_atoms - m, n1=0.5 * n_atoms + m))
    return out


class TestImagingNoise:
    def test_zero_sigma_identity(self):
        r = sq.ShotRecord(0, 0.0, 600.0, 650.0)
        out = sq.add_imaging_noise(r, sq.ImagingNoiseSpec(), 1)
        assert out == r

    def test_combined_seven_atoms(self):
        spec = sq.ImagingNoiseSpec.combined(7.0)
        assert abs(spec.sigma_n0 - 7.0 * np.sqrt(2.0)) < 1e-12
        combined = np.sqrt(spec.sigma_n0 ** 2 + spec.sigma_n1 ** 2) / 2.0
        assert abs(combined - 7.0) < 1e-12
        assert abs(spec.variance_sz - 49.0) < 1e-12

    def test_sample_sigma(self):
        spec = sq.ImagingNoiseSpec(sigma_n0=9.9, sigma_n1=9.9)
        rng = np.random.default_rng(2)
        r = sq.ShotRecord(0, 0.0, 600.0, 650.0)
        n0s = np.array([sq.add_imaging_noise(r, spec, rng).n0
                        for _ in range(100000)])
        assert abs(n0s.std() - 9.9) < 0.02 * 9.9


class TestPostSelect:
    def test_gaussian_retention(self):
        rng = np.random.default_rng(3)
        totals = rng.normal(1250, 45, 10000)
        recs = [sq.ShotRecord(i, 0.0, 0.5 * t, 0.5 * t)
                for i, t in enumerate(totals)]
        kept = sq.post_select(recs, 1250.0, 150.0)
        frac = len(kept) / len(recs)
        assert 0.995 <= frac <= 1.0
        assert [r.shot for r in kept] == sorted(r.shot for r in kept)

    def test_infinite_width_identity(self):
        recs = [sq.ShotRecord(0, 0.0, 10.0, 20.0)]
        assert sq.post_select(recs, 0.0, np.inf) == recs

    def test_empty_selection_warns(self):
        recs = [sq.ShotRecord(0, 0.0, 10.0, 20.0)]
        with pytest.warns(UserWarning):
            out = sq.post_select(recs, 1000.0, 1.0)
        assert out == []


class TestDriftCorrect:
    def test_constant_offset_preserved(self):
        recs = [sq.ShotRecord(i, 0.0, 100.0, 140.0) for i in range(500)]
        out = sq.drift_correct(recs, window=300, order=2)
        assert np.allclose([r.n1 - r.n0 for r in out], 40.0)
        assert np.allclose([r.total for r in out], 240.0)

    def test_removes_slow_drift(self):
        rng = np.random.default_rng(4)
        n = 3000
        white = rng.normal(0, np.sqrt(312.5), n)
        drift = 20.0 * np.sin(2 * np.pi * np.arange(n) / 3000.0)
        d = white + drift
        recs = [sq.ShotRecord(i, 0.0, 625 - 0.5 * di, 625 + 0.5 * di)
                for i, di in enumerate(d)]
        out = sq.drift_correct(recs, window=300, order=2)
        var = np.var([r.n1 - r.n0 for r in out], ddof=1)
        assert abs(var - np.var(white, ddof=1)) < 0.05 * np.var(white,
                                                                ddof=1)

    def test_nearly_transparent_on_white_noise(self):
        rng = np.random.default_rng(5)
        n = 5000
        white = rng.normal(0, 10.0, n)
        recs = [sq.ShotRecord(i, 0.0, -0.5 * w, 0.5 * w)
                for i, w in enumerate(white)]
        out = sq.drift_correct(recs, window=300, order=2)
        var0 = np.var(white, ddof=1)
        var1 = np.var([r.n1 - r.n0 for r in out], ddof=1)
        assert var0 - var1 < 0.02 * var0

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        d = rng.normal(0, 10.0, 2000) + np.linspace(0, 30, 2000)
        recs = [sq.ShotRecord(i, 0.0, -0.5 * x, 0.5 * x)
                for i, x in enumerate(d)]
        once = sq.drift_correct(recs, 300, 2)
        twice = sq.drift_correct(once, 300, 2)
        v1 = np.var([r.n1 - r.n0 for r in once], ddof=1)
        v2 = np.var([r.n1 - r.n0 for r in twice], ddof=1)
        assert abs(v2 - v1) < 0.01 * v1

    def test_short_group_falls_back(self):
        recs = [sq.ShotRecord(i, 0.0, 0.0, float(i)) for i in range(50)]
        with pytest.warns(UserWarning):
            out = sq.drift_correct(recs, window=300, order=2)
        assert len(out) == 50


class TestSubtractImagingNoise:
    def test_zero_spec_identity(self):
        v, neg = sq.subtract_imaging_noise(312.5, sq.ImagingNoiseSpec())
        assert v == 312.5 and not neg

    def test_paper_arithmetic(self):
        # raw -2.3 dB at <N>=1250 with a 7-atom combined correction
        n = 1250.0
        raw = 10 ** (-0.23) * 0.25 * n
        corr, neg = sq.subtract_imaging_noise(raw,
                                              sq.ImagingNoiseSpec.combined(7.0))
        db = 10 * np.log10(4 * corr / n)
        assert not neg
        assert abs(db - (-3.645)) < 0.01

    def test_negative_flagged(self):
        v, neg = sq.subtract_imaging_noise(10.0,
                                           sq.ImagingNoiseSpec.combined(7.0))
        assert neg and v < 0


class TestTomogram:
    def test_coherent_is_sql(self):
        n = 1250
        recs = []
        for k, th in enumerate(np.radians([0.0, 30.0, 120.0])):
            recs += coherent_records(n, th, 4000, seed=100 + k,
                                     shot0=4000 * k)
        t = sq.tomogram(recs, float(n))
        for row in t.rows:
            assert abs(row.normalized_db) < 3.5 * row.stderr_db

    def test_anti_squeezed_maximum(self):
        n = 200
        q = 0.5 / (0.5 * n) ** (2 / 3)
        st = sq.evolve_oat(sq.make_coherent_state(n, np.pi / 2, 0.0),
                           0.0, q, 1.0)
        from spinsqueeze.metrology import min_variance_angle
        theta_min, vmin, _ = min_variance_angle(sq.expectations(st))
        anti = theta_min + 0.5 * np.pi
        v_anti = sq.variance_along(st, anti)
        assert 10 * np.log10(v_anti / (0.25 * n)) > 5.0
        assert vmin < 0.25 * n

    def test_imaging_round_trip(self):
        # noisy ensemble + correction recovers the noiseless variance
        n = 900
        spec = sq.ImagingNoiseSpec.combined(7.0)
        base = coherent_records(n, 0.0, 10000, seed=8)
        noisy = tg.add_imaging_noise_batch(base, spec, seed=9)
        t = sq.tomogram(noisy, float(n), imaging=spec)
        row = t.rows[0]
        v_true = np.var([r.sz for r in base], ddof=1)
        stderr = v_true * np.sqrt(2.0 / 9999)
        assert abs(row.variance_corrected - v_true) < 3.5 * stderr

    def test_requires_two_shots(self):
        with pytest.raises(ValueError):
            sq.tomogram([sq.ShotRecord(0, 0.0, 1.0, 2.0)], 3.0)


class TestCalibrationFit:
    def test_exact_projection_noise(self):
        rng = np.random.default_rng(10)
        pairs = []
        for n in np.linspace(200, 1600, 8):
            recs = coherent_records(int(n), 0.0, 4000,
                                    seed=int(n) + 1)
            pairs.append((n, np.var([r.sz for r in recs], ddof=1)))
        a, b, rescale = sq.calibration_fit(pairs)
        assert abs(a - 0.25) < 0.03 * 0.25
        assert abs(b) < 2e-5
        assert abs(rescale - 1.0) < 0.05

    def test_prescaled_counts_give_slope_022(self):
        scale = 0.88
        pairs = []
        for n in np.linspace(200, 1600, 8):
            recs = coherent_records(int(n), 0.0, 4000, seed=int(n) + 7)
            var = np.var([scale * r.sz for r in recs], ddof=1)
            pairs.append((scale * n, var))
        a, b, rescale = sq.calibration_fit(pairs)
        assert abs(a - 0.22) < 0.05 * 0.22
        assert abs(rescale - 0.88) < 0.05 * 0.88

    def test_recovers_quadratic_noise(self):
        rng = np.random.default_rng(11)
        b_true = 1e-5
        pairs = []
        for n in np.linspace(200, 1600, 10):
            var = 0.25 * n + b_true * n * n \
                + rng.normal(0, 0.25 * n * np.sqrt(2.0 / 10000))
            pairs.append((n, var))
        a, b, _ = sq.calibration_fit(pairs)
        assert abs(b - b_true) < 0.2 * b_true

    def test_rank_deficient(self):
        with pytest.raises(Exception):
            sq.calibration_fit([(100.0, 25.0), (100.0, 25.0),
                                (100.0, 25.0)])


class TestCsvRoundTrip:
    def test_records(self):
        recs = [sq.ShotRecord(0, np.radians(6.0), 600.0, 651.5),
                sq.ShotRecord(1, np.radians(6.0), 612.25, 640.0)]
        text = tg.records_to_csv(recs)
        assert text.splitlines()[0] == "shot,theta_deg,n0,n1"
        back = tg.records_from_csv(text)
        assert len(back) == 2
        assert abs(back[0].theta - recs[0].theta) < 1e-9
        assert back[1].n0 == recs[1].n0

    def test_missing_column_named(self):
        with pytest.raises(ValueError, match="theta_deg"):
            tg.records_from_csv("shot,n0,n1\n0,1,2\n")

    def test_tomogram_csv(self):
        recs = coherent_records(100, 0.0, 500, seed=12)
        t = sq.tomogram(recs, 100.0)
        text = tg.tomogram_to_csv(t)
        head = text.splitlines()[0]
        assert head == "theta_deg,n_shots,var_raw,var_corr,norm_db,stderr_db"
