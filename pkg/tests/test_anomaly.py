import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsad.anomaly import (
    DetectionReport, Threshold, aggregate_chi2, classify, detect, evaluate, f_beta_score, histogram_edges,
    p_value, residual_calibration, residuals, residuals_from_predictions, threshold_for_fp_rate,
)
from cpsad.errors import ContractError, DomainError
from cpsad.model import Prediction
from cpsad.numerics import SeededRng

from conftest import binomial_sigma

TABLE = {1: 0.317, 2: 4.6e-2, 3: 2.7e-3, 4: 6.3e-5, 5: 5.7e-7}


class TestResiduals:
    def test_zero(self, rng):
        y = rng.normal((10, 2))
        assert not residuals(y, y, np.ones_like(y)).any()

    def test_unit(self, rng):
        y = rng.normal((10, 2))
        s = np.exp(rng.normal((10, 2)))
        np.testing.assert_allclose(residuals(y, y + s, s), 1.0, rtol=1e-15)

    def test_from_predictions(self):
        preds = [Prediction([1.0], [0.0]), Prediction([2.0], [math.log(2)])]
        r = residuals_from_predictions(np.array([[0.0], [0.0]]), preds)
        np.testing.assert_allclose(r[:, 0], [1.0, 1.0])

    def test_misaligned(self):
        with pytest.raises(ContractError):
            residuals(np.zeros((3, 1)), np.zeros((4, 1)), np.ones((3, 1)))

    def test_self_consistency(self):
        # observations drawn from the predictive distribution itself
        n = 10**5
        r = SeededRng(31)
        mu = r.normal((n, 1), sd=3.0)
        sigma = np.exp(r.normal((n, 1), sd=0.5))
        y = mu + sigma * r.normal((n, 1))
        res = residuals(y, mu, sigma)
        for R in (1, 2, 3):
            p = p_value(R)
            assert abs(np.mean(np.abs(res) > R) - p) <= 3 * binomial_sigma(p, n)


class TestPValue:
    def test_zero(self):
        assert p_value(0.0) == 1.0

    @pytest.mark.parametrize("R", [1, 2, 3, 4, 5])
    def test_table(self, R):
        digits = 3 if R == 1 else 2
        assert float(f"{p_value(R):.{digits}g}") == TABLE[R]

    def test_negative(self):
        with pytest.raises(DomainError):
            p_value(-0.1)

    @given(st.floats(0, 30), st.floats(0, 30))
    def test_strictly_decreasing(self, a, b):
        lo, hi = sorted((a, b))
        if hi - lo > 1e-6:
            assert p_value(hi) < p_value(lo)


class TestThreshold:
    def test_alpha_one(self):
        assert threshold_for_fp_rate(1.0).r == 0.0

    def test_table_inverted(self):
        assert threshold_for_fp_rate(0.317).r == pytest.approx(1.0, abs=1e-3)
        assert threshold_for_fp_rate(2.7e-3).r == pytest.approx(3.0, abs=2e-3)

    @settings(max_examples=60)
    @given(st.floats(-8, 0))
    def test_exact_inverse(self, log_alpha):
        alpha = 10.0**log_alpha
        thr = threshold_for_fp_rate(alpha)
        assert abs(p_value(thr.r) - alpha) <= 1e-9 * max(alpha, 1e-9) + 1e-15
        assert thr.alpha == pytest.approx(alpha, rel=1e-9)

    @pytest.mark.parametrize("alpha", [0.0, 1.5, -0.2])
    def test_domain(self, alpha):
        with pytest.raises(DomainError):
            threshold_for_fp_rate(alpha)

    def test_pair_consistent(self):
        thr = Threshold.from_r(2.5)
        assert thr.alpha == pytest.approx(math.erfc(2.5 / math.sqrt(2)), rel=1e-12)


class TestClassify:
    def test_all_zero(self):
        assert not classify(np.zeros((20, 3)), Threshold.from_r(1.0)).any()

    def test_single_exceedance(self):
        r = np.zeros((10, 2))
        r[4, 1] = -3.5
        flags = classify(r, Threshold.from_r(3.0))
        assert flags.tolist() == [i == 4 for i in range(10)]

    def test_false_positive_rate_r3(self):
        n = 10**6
        r = SeededRng(99).normal((n, 1))
        p = p_value(3.0)
        assert abs(classify(r, 3.0).mean() - p) <= 3 * binomial_sigma(p, n)

    @given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
    def test_rescaling_invariance(self, seed, k):
        r = SeededRng(seed)
        diff, sigma = r.normal((50, 2)), np.exp(r.normal((50, 2)))
        y = np.zeros((50, 2))
        a = classify(residuals(y, diff, sigma), 1.5)
        b = classify(residuals(y, k * diff, k * sigma), 1.5)
        assert np.array_equal(a, b)


class TestChi2Aggregate:
    def test_window_one_is_pointwise_p_value(self, rng):
        r = rng.normal((200, 1))
        p = aggregate_chi2(r, 1)
        np.testing.assert_allclose(p, [p_value(abs(v)) for v in r[:, 0]], rtol=1e-12)

    def test_zero_residuals(self):
        assert np.all(aggregate_chi2(np.zeros((12, 2)), 4) == 1.0)

    def test_uniform_p_values(self):
        # probability integral transform: p-values of null windows are U(0,1)
        from scipy.stats import kstest

        r = SeededRng(5).normal((4 * 10**5, 1))
        p = aggregate_chi2(r, 4)
        assert len(p) == 10**5
        assert kstest(p, "uniform").pvalue > 0.01

    def test_window_too_long(self):
        with pytest.raises(ContractError):
            aggregate_chi2(np.zeros((3, 1)), 4)


class TestEvaluate:
    @pytest.mark.parametrize("P, R, F", [(0.95, 0.31, 0.93), (0.94, 0.17, 0.90)])
    def test_published_triples(self, P, R, F):
        assert round(f_beta_score(P, R, 0.1), 2) == F

    def test_counts(self):
        pred = np.array([1, 1, 0, 0, 1, 0], bool)
        truth = np.array([1, 0, 1, 0, 1, 0], bool)
        rep = evaluate(pred, truth, 1.0)
        assert (rep.tp, rep.fp, rep.fn, rep.tn) == (2, 1, 1, 2)
        assert rep.precision == pytest.approx(2 / 3) and rep.recall == pytest.approx(2 / 3)
        assert rep.f_beta == pytest.approx(2 / 3)

    def test_perfect(self):
        t = np.array([0, 1, 1, 0], bool)
        rep = evaluate(t, t, 0.1)
        assert rep.precision == rep.recall == rep.f_beta == 1.0

    def test_no_positives_in_truth(self):
        rep = evaluate(np.array([1, 0], bool), np.array([0, 0], bool), 1.0)
        assert rep.recall is None and rep.f_beta is None and rep.precision == 0.0

    def test_nothing_flagged(self):
        rep = evaluate(np.zeros(3, bool), np.array([1, 0, 0], bool), 1.0)
        assert rep.precision is None and rep.f_beta is None and rep.recall == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            evaluate(np.zeros(3, bool), np.zeros(4, bool))

    @given(st.floats(0.01, 1), st.floats(0.01, 1))
    def test_beta_limits(self, P, R):
        assert abs(f_beta_score(P, R, 1e-3) - P) <= 1e-3
        assert abs(f_beta_score(P, R, 1e3) - R) <= 1e-3

    def test_report_json_fields(self, tmp_path):
        res = np.array([[0.0], [5.0], [1.0], [9.0]])
        rep = detect(res, Threshold.from_r(8.0), np.array([0, 1, 0, 1], bool), 0.1, warn=Threshold.from_r(4.0))
        assert rep.predicted.tolist() == [False, False, False, True]
        assert rep.warn.tolist() == [False, True, False, True]
        rep.save(tmp_path / "r.json")
        d = json.loads((tmp_path / "r.json").read_text())
        for key in ("precision", "recall", "f_beta", "beta", "tp", "fp", "tn", "fn", "threshold_r", "threshold_alpha"):
            assert key in d
        back = DetectionReport.load(tmp_path / "r.json")
        assert back.precision == rep.precision and np.array_equal(back.warn, rep.warn)


class TestCalibration:
    def test_standard_normal(self):
        cal = residual_calibration(SeededRng(8).normal((10**6, 1)))
        assert abs(cal.within[1] - (1 - p_value(1))) <= 0.002
        assert abs(cal.within[2] - (1 - 0.046)) <= 0.002
        assert abs(cal.within[3] - (1 - p_value(3))) <= 0.001

    def test_zero(self):
        cal = residual_calibration(np.zeros((10, 2)))
        assert cal.within == {1: 1.0, 2: 1.0, 3: 1.0}

    def test_edges_symmetric(self):
        e = histogram_edges(5.0, 40)
        assert np.array_equal(e, -e[::-1])
        assert 0.0 in e

    def test_density_integrates(self):
        cal = residual_calibration(np.zeros(4))
        mass = np.sum(cal.normal_density * np.diff(cal.bin_edges))
        assert mass == pytest.approx(1 - p_value(5.0), rel=1e-12)
