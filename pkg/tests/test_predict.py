import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgpencr.cavi import HyperParams
from vgpencr.errors import LengthMismatchError
from vgpencr.grouped_model import CenteringStats, build_grouped_design
from vgpencr.pencr import fit_cavi, sparsify
from vgpencr.predict import make_model, predict_point


def stats(y_bar, x_bar):
    return CenteringStats(float(y_bar), np.asarray(x_bar, dtype=float))


class TestMakeModel:
    def test_zero_slope_gives_mean(self):
        assert make_model([0.0, 0.0], stats(4.5, [1.0, 2.0])).kappa_hat == 4.5

    def test_intercept_arithmetic(self):
        assert make_model([1.0], stats(2.0, [3.0])).kappa_hat == -1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            make_model([1.0, 2.0], stats(0.0, [1.0]))


class TestPredictPoint:
    def test_centroid_maps_to_mean(self):
        m = make_model([2.0, -1.0], stats(7.0, [1.0, 3.0]))
        assert predict_point(m, [1.0, 3.0]) == 7.0

    def test_zero_slope(self):
        m = make_model([0.0], stats(2.5, [1.0]))
        assert predict_point(m, [100.0]) == 2.5

    def test_hand_value(self):
        m = make_model([1.0], stats(2.0, [3.0]))
        assert predict_point(m, [5.0]) == 4.0

    def test_wrong_length(self):
        m = make_model([1.0], stats(2.0, [3.0]))
        with pytest.raises(LengthMismatchError):
            predict_point(m, [1.0, 2.0])

    def test_matrix_prediction_matches_rows(self, rng):
        m = make_model(rng.normal(size=3), stats(1.0, rng.normal(size=3)))
        X = rng.normal(size=(5, 3))
        np.testing.assert_allclose(m.predict(X), [predict_point(m, x) for x in X], rtol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_affine_identity(self, seed):
        r = np.random.default_rng(seed)
        p = int(r.integers(1, 6))
        m = make_model(r.normal(size=p) * 3, stats(r.normal() * 10, r.normal(size=p) * 5))
        x = r.normal(size=p) * 5
        a = predict_point(m, x)
        b = m.kappa_hat + x @ m.beta
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b)) * 10


class TestTranslationInvariance:
    def test_shifting_responses_shifts_predictions(self, rng):
        X = rng.normal(size=(40, 4))
        y = X[:, 0] * 2 + rng.normal(size=40)
        d = build_grouped_design(X, [2, 2])
        hyper = HyperParams(tau=0.1)
        c = 17.25
        f0, f1 = fit_cavi(y, d, hyper), fit_cavi(y + c, d, hyper)
        e0, e1 = sparsify(f0, 0.5), sparsify(f1, 0.5)
        X_new = rng.normal(size=(6, 4))
        p0 = make_model(e0.beta_tilde, f0.data.stats).predict(X_new)
        p1 = make_model(e1.beta_tilde, f1.data.stats).predict(X_new)
        np.testing.assert_allclose(p1 - p0, c, atol=1e-9)
