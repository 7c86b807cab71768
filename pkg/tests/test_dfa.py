import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trafficdfa import dfa
from trafficdfa.dfa import (
    DfaResult,
    analyze,
    default_box_sizes,
    detect_crossover,
    fit_scaling,
    fluctuation,
    integrate_profile,
    is_degenerate,
    remove_global_trend,
    save_result,
)

import reference


class TestRemoveGlobalTrend:
    def test_exact_line_vanishes(self):
        j = np.arange(100)
        out = remove_global_trend(3.0 + 2.0 * j)
        assert np.abs(out).max() < 1e-9

    def test_constant_vanishes(self):
        out = remove_global_trend(np.full(50, 7.0))
        assert np.abs(out).max() < 1e-9

    def test_noisy_ramp_residual(self, rng):
        j = np.arange(10_000)
        sig = 5.0 * j + rng.normal(0, 1, 10_000)
        out = remove_global_trend(sig)
        assert abs(out.mean()) < 0.05
        refit = np.polyfit(j, out, 1)[0]
        assert abs(refit) < 1e-3

    def test_zero_mean_zero_slope(self, rng):
        sig = rng.normal(0, 3, 500) + 0.2 * np.arange(500)
        out = remove_global_trend(sig)
        scale = np.abs(sig).max()
        assert abs(out.mean()) < 1e-9 * scale
        assert abs(np.polyfit(np.arange(500), out, 1)[0]) < 1e-9 * scale

    def test_too_short(self):
        with pytest.raises(ValueError):
            remove_global_trend([1.0])


class TestIntegrateProfile:
    def test_constant_gives_zero(self):
        assert np.abs(integrate_profile(np.full(20, 3.0))).max() < 1e-12

    def test_hand_sum(self):
        out = integrate_profile([1.0, -1.0, 1.0, -1.0])
        assert np.allclose(out, [1.0, 0.0, 1.0, 0.0])

    def test_endpoint_telescopes_to_zero(self, rng):
        sig = rng.normal(0, 2, 5000)
        prof = integrate_profile(sig)
        assert abs(prof[-1]) < 1e-9 * len(sig) * np.abs(sig).max()

    def test_length_preserved(self, rng):
        assert len(integrate_profile(rng.normal(0, 1, 77))) == 77


class TestFluctuation:
    def test_linear_profile_annihilated(self):
        prof = 3.0 + 0.5 * np.arange(256)
        for m in (4, 8, 16, 32, 64):
            assert fluctuation(prof, m) < 1e-9

    def test_white_noise_slope_half(self, rng):
        sig = rng.normal(0, 1, 2**14)
        prof = integrate_profile(sig)
        ms = np.array([8, 16, 32, 64, 128, 256, 512, 1024])
        fs = np.array([fluctuation(prof, int(m)) for m in ms])
        slope = np.polyfit(np.log10(ms), np.log10(fs), 1)[0]
        assert abs(slope - 0.5) < 0.05

    def test_random_walk_slope_three_halves(self, rng):
        walk = np.cumsum(rng.normal(0, 1, 2**16))
        prof = integrate_profile(walk)
        ms = np.unique(np.round(np.geomspace(8, 2**12, 12)).astype(int))
        fs = np.array([fluctuation(prof, int(m)) for m in ms])
        slope = np.polyfit(np.log10(ms), np.log10(fs), 1)[0]
        assert abs(slope - 1.5) < 0.1

    def test_box_size_bounds(self, rng):
        prof = integrate_profile(rng.normal(0, 1, 100))
        with pytest.raises(ValueError):
            fluctuation(prof, 3)
        with pytest.raises(ValueError):
            fluctuation(prof, 26)

    def test_matches_naive_reference(self, rng):
        # independent loop-and-polyfit oracle on the same inputs
        for n in (256, 1000, 4097):
            sig = rng.normal(0, 1, n)
            ms = [4, 8, 16, n // 8, n // 4]
            mine = dfa.dfa(sig, sorted(set(ms)))
            ref = reference.dfa_points_reference(sig, mine[:, 0])
            assert np.allclose(mine[:, 1], ref[:, 1], rtol=1e-9)


class TestDfaPoints:
    def test_default_grid_shape(self):
        sizes = default_box_sizes(10_000)
        assert sizes[0] == 4
        assert sizes[-1] == 2500
        assert (np.diff(sizes) > 0).all()
        assert 15 <= len(sizes) <= 20

    def test_white_noise_alpha(self, rng):
        pts = dfa.dfa(rng.normal(0, 1, 2**14))
        slope = np.polyfit(np.log10(pts[:, 0]), np.log10(pts[:, 1]), 1)[0]
        assert abs(slope - 0.5) < 0.05

    def test_smoke_small_signal(self, rng):
        pts = dfa.dfa(rng.normal(0, 1, 64), [4, 8, 16])
        assert pts.shape == (3, 2)
        assert (pts[:, 1] > 0).all()
        assert np.isfinite(pts).all()

    def test_rejects_bad_sizes(self, rng):
        sig = rng.normal(0, 1, 64)
        with pytest.raises(ValueError):
            dfa.dfa(sig, [8, 4])
        with pytest.raises(ValueError):
            dfa.dfa(sig, [4, 8, 32])
        with pytest.raises(ValueError):
            dfa.dfa(rng.normal(0, 1, 8))


class TestFitScaling:
    def grid(self):
        return np.unique(np.round(np.geomspace(4, 2000, 20)).astype(int))

    def test_exact_power_law(self):
        m = self.grid()
        alpha, stderr = fit_scaling(np.column_stack([m, m**0.7]), (4, 2000))
        assert alpha == pytest.approx(0.7, abs=1e-12)
        assert stderr == pytest.approx(0.0, abs=1e-12)

    def test_constant_is_flat(self):
        m = self.grid()
        alpha, _ = fit_scaling(np.column_stack([m, np.full(len(m), 5.0)]), (4, 2000))
        assert alpha == pytest.approx(0.0, abs=1e-12)

    def test_noisy_power_law(self, rng):
        m = self.grid()
        f = m**1.2 * np.exp(rng.normal(0, 0.01, len(m)))
        alpha, _ = fit_scaling(np.column_stack([m, f]), (4, 2000))
        assert alpha == pytest.approx(1.2, abs=0.05)

    def test_range_restriction(self):
        m = self.grid()
        f = np.where(m <= 100, m**1.0, 100**0.5 * m**0.5)
        alpha, _ = fit_scaling(np.column_stack([m, f]), (4, 100))
        assert alpha == pytest.approx(1.0, abs=1e-9)

    def test_nonpositive_excluded_with_warning(self):
        m = self.grid().astype(float)
        f = m**0.5
        f[3] = 0.0
        with pytest.warns(UserWarning, match="excluded"):
            alpha, _ = fit_scaling(np.column_stack([m, f]), (4, 2000))
        assert alpha == pytest.approx(0.5, abs=0.01)

    def test_too_few_points(self):
        pts = np.array([[4.0, 2.0], [8.0, 3.0]])
        with pytest.raises(ValueError):
            fit_scaling(pts, (4, 8))


def two_slope_points(break_m=100.0, s1=1.0, s2=0.2, noise=0.0, rng=None):
    m = np.array(sorted(set(np.round(np.geomspace(4, 2500, 24)).astype(int)) | {int(break_m)}))
    f = np.where(m <= break_m, m**s1, break_m ** (s1 - s2) * m**s2)
    if noise and rng is not None:
        f = f * np.exp(rng.normal(0, noise, len(m)))
    return np.column_stack([m, f]).astype(float)


class TestDetectCrossover:
    def test_noiseless_two_slope_exact(self):
        assert detect_crossover(two_slope_points()) == 100

    def test_pure_power_law_none(self):
        m = np.unique(np.round(np.geomspace(4, 2500, 24)).astype(int))
        assert detect_crossover(np.column_stack([m, m**0.8]).astype(float)) is None

    def test_noisy_two_slope_within_one_step(self, rng):
        pts = two_slope_points(noise=0.02, rng=rng)
        got = detect_crossover(pts)
        ms = pts[:, 0]
        idx = int(np.argmin(np.abs(ms - 100)))
        neighborhood = ms[max(idx - 1, 0) : idx + 2]
        assert got in neighborhood

    def test_small_bend_rejected(self):
        # slope change below the gate is treated as a single scaling regime
        pts = two_slope_points(s1=0.6, s2=0.5)
        assert detect_crossover(pts) is None

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            detect_crossover(np.array([[4.0, 1.0], [8.0, 2.0], [16.0, 3.0]]))


class TestAnalyzePipeline:
    def test_white_noise_window(self, rng):
        alphas = [analyze(rng.normal(0, 1, 2**13)).alpha for _ in range(10)]
        assert 0.4 < np.mean(alphas) < 0.6

    def test_trend_invariance(self, rng):
        # the pipeline removes the global trend first, so an affine ramp
        # must not move F(m) by more than a whisker
        sig = rng.normal(0, 1, 4096)
        base = analyze(sig)
        ramped = analyze(sig + 17.0 + 0.3 * np.arange(4096))
        assert np.allclose(base.points[:, 1], ramped.points[:, 1], rtol=1e-6)
        assert base.alpha == pytest.approx(ramped.alpha, abs=1e-6)

    def test_scale_equivariance_exact(self, rng):
        sig = np.sin(0.02 * np.arange(2048)) + rng.normal(0, 0.5, 2048)
        a = analyze(sig)
        b = analyze(4.0 * sig)
        assert np.allclose(b.points[:, 1], 4.0 * a.points[:, 1], rtol=1e-12)
        assert b.alpha == pytest.approx(a.alpha, abs=1e-12)

    def test_reversal_near_symmetry(self, rng):
        # two-sided coverage makes F(m) reversal-invariant up to the one
        # sample offset between the forward and reflected profiles
        sig = rng.normal(0, 1, 4096)
        a = dfa.dfa(sig, [4, 8, 16, 32, 64])
        b = dfa.dfa(sig[::-1], [4, 8, 16, 32, 64])
        assert np.allclose(a[:, 1], b[:, 1], rtol=0.05)

    def test_monotone_f_for_correlated_signal(self, rng):
        sig = np.cumsum(rng.normal(0, 1, 2**13))  # strongly correlated
        pts = dfa.dfa(sig)
        diffs = np.diff(pts[:, 1])
        assert (diffs > 0).sum() >= len(diffs) - 1  # one grid inversion allowed

    def test_fit_range_respects_crossover(self, rng):
        res = analyze(rng.normal(0, 1, 2**12))
        lo, hi = res.fit_range
        assert lo == res.points[0, 0]
        if res.crossover is not None:
            assert hi == res.crossover
        else:
            assert hi == res.points[-1, 0]

    def test_result_fields_finite(self, rng):
        res = analyze(rng.normal(0, 1, 1024))
        assert np.isfinite(res.alpha)
        assert np.isfinite(res.alpha_stderr)
        assert (res.points[:, 1] >= 0).all()

    @given(st.integers(0, 10**6))
    @settings(max_examples=20, deadline=None)
    def test_alpha_reasonable_for_any_white_noise(self, seed):
        sig = np.random.default_rng(seed).normal(0, 1, 1024)
        res = analyze(sig)
        assert -0.5 < res.alpha < 1.5


class TestDegenerate:
    def test_linear_ramp_is_degenerate(self):
        sig = 0.01 * np.arange(4096)
        pts = dfa.dfa(remove_global_trend(sig))
        assert is_degenerate(pts)

    def test_noise_is_not(self, rng):
        assert not is_degenerate(dfa.dfa(rng.normal(0, 1, 1024)))


class TestResultIO:
    def test_round_trip_files(self, tmp_path, rng):
        res = analyze(rng.normal(0, 1, 1024))
        csv = tmp_path / "dfa.csv"
        js = tmp_path / "dfa_result.json"
        save_result(res, csv, js)
        lines = csv.read_text().splitlines()
        assert lines[0] == "m,F"
        assert len(lines) == len(res.points) + 1
        import json

        payload = json.loads(js.read_text())
        assert payload["alpha"] == pytest.approx(res.alpha)
        assert payload["n_points"] == len(res.points)
        assert payload["fit_range"] == list(res.fit_range)
