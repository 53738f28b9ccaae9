import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgpencr.errors import EmptyGroupError, LengthMismatchError, SizeMismatchError
from vgpencr.grouped_model import GroupedDesign, GroupSpec, build_grouped_design, center
from vgpencr.predict import make_model, predict_point


class TestGroupSpec:
    def test_offsets_and_totals(self):
        sp = GroupSpec((2, 3, 1))
        assert sp.offsets == (0, 2, 5)
        assert sp.G == 3 and sp.p == 6
        assert sp.slice(1) == slice(2, 5)

    def test_zero_size_rejected(self):
        with pytest.raises(EmptyGroupError):
            GroupSpec((2, 0))

    def test_expand_and_reductions(self):
        sp = GroupSpec((2, 1))
        np.testing.assert_array_equal(sp.expand([5.0, 7.0]), [5.0, 5.0, 7.0])
        np.testing.assert_allclose(sp.group_norms([3.0, 4.0, -2.0]), [5.0, 2.0])
        np.testing.assert_allclose(sp.group_sums([1.0, 2.0, 3.0]), [3.0, 3.0])

    def test_singletons(self):
        sp = GroupSpec.singletons(4)
        assert sp.sizes == (1, 1, 1, 1)


class TestBuildGroupedDesign:
    def test_two_groups_of_two(self):
        d = build_grouped_design(np.zeros((3, 4)), [2, 2])
        assert d.spec.G == 2
        assert d.spec.offsets == (0, 2)

    def test_singleton_groups(self):
        d = build_grouped_design(np.zeros((3, 4)), [1, 1, 1, 1])
        assert d.spec.G == 4
        assert all(s == 1 for s in d.spec.sizes)

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatchError):
            build_grouped_design(np.zeros((3, 4)), [3, 2])

    def test_empty_group(self):
        with pytest.raises(EmptyGroupError):
            build_grouped_design(np.zeros((3, 4)), [4, 0])

    def test_copy_not_view(self):
        raw = np.ones((3, 2))
        d = build_grouped_design(raw, [2])
        raw[0, 0] = 99.0
        assert d.X[0, 0] == 1.0

    def test_needs_two_rows(self):
        with pytest.raises(ValueError):
            GroupedDesign(np.ones((1, 2)), GroupSpec((2,)))


class TestCenter:
    def test_two_point(self):
        d = build_grouped_design(np.array([[2.0], [4.0]]), [1])
        c = center([1.0, 3.0], d)
        np.testing.assert_allclose(c.y, [-1.0, 1.0])
        np.testing.assert_allclose(c.X, [[-1.0], [1.0]])
        assert c.stats.y_bar == 2.0
        np.testing.assert_allclose(c.stats.x_bar, [3.0])

    def test_constant_column_becomes_zero(self):
        d = build_grouped_design(np.full((3, 1), 5.0), [1])
        c = center([1.0, 2.0, 3.0], d)
        np.testing.assert_array_equal(c.X[:, 0], 0.0)

    def test_length_mismatch(self):
        d = build_grouped_design(np.zeros((2, 1)), [1])
        with pytest.raises(LengthMismatchError):
            center([1.0, 2.0, 3.0], d)

    def test_means_vanish(self, rng):
        X = rng.normal(3.0, 2.0, size=(30, 5))
        y = rng.normal(10.0, 4.0, size=30)
        c = center(y, build_grouped_design(X, [2, 3]))
        tol = 1e-10 * np.std(y)
        assert abs(c.y.mean()) <= tol
        assert np.all(np.abs(c.X.mean(axis=0)) <= 1e-10 * np.std(X, axis=0).max())

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_idempotent(self, seed):
        r = np.random.default_rng(seed)
        X = r.normal(1.0, 3.0, size=(12, 4))
        y = r.normal(-2.0, 5.0, size=12)
        once = center(y, build_grouped_design(X, [1, 3]))
        twice = center(once.y, once.design)
        np.testing.assert_allclose(twice.y, once.y, atol=1e-12)
        np.testing.assert_allclose(twice.X, once.X, atol=1e-12)
        assert abs(twice.stats.y_bar) < 1e-12
        assert np.all(np.abs(twice.stats.x_bar) < 1e-12)


class TestPredictionRoundTrip:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_centered_prediction_equals_affine_form(self, seed):
        r = np.random.default_rng(seed)
        X = r.normal(size=(10, 3)) * 4 + 1
        c = center(r.normal(size=10), build_grouped_design(X, [3]))
        beta = r.normal(size=3)
        x = r.normal(size=3) * 5
        m = make_model(beta, c.stats)
        lhs = predict_point(m, x)
        rhs = m.kappa_hat + x @ beta
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
