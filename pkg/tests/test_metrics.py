import math

import numpy as np
import pytest

from vgpencr.errors import EmptyInputError, IndexOutOfRangeError, LengthMismatchError
from vgpencr.sim import gam_signal, gen_gam
from vgpencr.metrics import ConfusionCounts, confusion, mcc, mise, mspe, youden


class TestConfusion:
    def test_perfect(self):
        assert confusion({1, 2}, {1, 2}, 4) == ConfusionCounts(tp=2, fp=0, tn=2, fn=0)

    def test_empty_selection(self):
        c = confusion(set(), {1}, 3)
        assert (c.fn, c.tn, c.tp, c.fp) == (1, 2, 0, 0)

    def test_one_false_positive(self):
        assert confusion({1, 2, 3}, {1, 2}, 50) == ConfusionCounts(tp=2, fp=1, tn=47, fn=0)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRangeError):
            confusion({0}, {1}, 3)
        with pytest.raises(IndexOutOfRangeError):
            confusion({1}, {4}, 3)

    def test_counts_sum_to_G(self):
        c = confusion({1, 5, 9}, {1, 2}, 10)
        assert c.G == 10


class TestYouden:
    def test_perfect(self):
        assert youden(confusion({1, 2}, {1, 2}, 5)) == 1.0

    def test_hand_value(self):
        c = ConfusionCounts(tp=2, fp=1, tn=46, fn=1)
        assert youden(c) == pytest.approx(91 / 141, abs=1e-12)

    def test_total_reversal(self):
        assert youden(confusion({2}, {1}, 2)) == -1.0

    def test_undefined_is_nan(self):
        assert math.isnan(youden(confusion({1, 2}, {1, 2}, 2)))
        assert math.isnan(youden(confusion({1}, set(), 2)))


class TestMcc:
    def test_perfect(self):
        assert mcc(confusion({1}, {1}, 3)) == 1.0

    def test_hand_value(self):
        c = ConfusionCounts(tp=2, fp=1, tn=46, fn=1)
        assert mcc(c) == pytest.approx(91 / 141, abs=1e-12)

    def test_all_selected_all_true_is_nan(self):
        assert math.isnan(mcc(confusion({1, 2, 3}, {1, 2, 3}, 3)))

    def test_range_and_relabel_invariance(self, rng):
        for _ in range(200):
            G = int(rng.integers(2, 15))
            sel = set(int(g) for g in rng.choice(np.arange(1, G + 1), size=rng.integers(0, G + 1), replace=False))
            tru = set(int(g) for g in rng.choice(np.arange(1, G + 1), size=rng.integers(1, G + 1), replace=False))
            perm = rng.permutation(G) + 1
            relabel = lambda s: {int(perm[g - 1]) for g in s}  # noqa: E731
            for f in (mcc, youden):
                a = f(confusion(sel, tru, G))
                b = f(confusion(relabel(sel), relabel(tru), G))
                assert (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b, abs=1e-15)
                if not math.isnan(a):
                    assert -1.0 - 1e-12 <= a <= 1.0 + 1e-12


class TestMspe:
    def test_zero(self):
        assert mspe([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_value(self):
        assert mspe([0.0, 0.0], [1.0, -1.0]) == 1.0

    def test_errors(self):
        with pytest.raises(LengthMismatchError):
            mspe([1.0], [1.0, 2.0])
        with pytest.raises(EmptyInputError):
            mspe([], [])

    def test_mean_predictor_on_additive_data(self):
        r = np.random.default_rng(5)
        z = r.uniform(size=(200_000, 5))
        var_signal = float(np.var(gam_signal(z)))
        _, test = gen_gam(n=200, G=5, seed=3, n_test=20_000)
        train_mean = test.y_raw.mean()
        got = mspe(np.full(test.y_raw.size, train_mean), test.y_raw)
        assert got == pytest.approx(var_signal + 1.0, rel=0.05)


class TestMise:
    def test_identical(self):
        f = lambda t: np.sin(t)  # noqa: E731
        assert mise(f, f) == 0.0

    def test_constant_offset(self):
        for c in (0.5, -2.0, 3.25):
            got = mise(lambda t: np.full_like(t, c), lambda t: np.zeros_like(t))
            assert got == pytest.approx(20.0 * c * c, abs=1e-12)

    def test_linear_difference(self):
        got = mise(lambda t: t, lambda t: np.zeros_like(t))
        assert abs(got - 8000.0 / 3.0) / (8000.0 / 3.0) < 1e-4

    def test_second_order_convergence(self):
        f = lambda t: np.sin(t / 3.0) * np.exp(t / 20.0)  # noqa: E731
        zero = lambda t: np.zeros_like(t)  # noqa: E731
        ref = mise(f, zero, grid_points=20001)
        e101 = abs(mise(f, zero, grid_points=101) - ref)
        e401 = abs(mise(f, zero, grid_points=401) - ref)
        # halving the step 2x twice should cut the error about 16x
        assert 10.0 < e101 / e401 < 20.0

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            mise(np.sin, np.cos, grid_points=1)
