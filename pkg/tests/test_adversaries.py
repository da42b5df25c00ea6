import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from limited_advice.adversaries import (
    AdversaryConfig,
    BernoulliAdversary,
    ConstantAdversary,
    FixedSequenceAdversary,
    LowerBoundAdversary,
    default_eps,
    iid_bernoulli_forecasts,
    load_fixed_sequence,
    lower_bound_forecasts,
)
from limited_advice.exceptions import EndOfSequence, SequenceParseError
from limited_advice.rng import make_generator


class TestLowerBound:
    def test_examples(self):
        F, y = lower_bound_forecasts(4, 0.1, 0, 0.45)
        np.testing.assert_array_equal(F, [0, 1, 1, 1])
        assert y == 0.0
        np.testing.assert_array_equal(lower_bound_forecasts(4, 0.1, 0, 0.3)[0], [1, 1, 1, 1])
        np.testing.assert_array_equal(lower_bound_forecasts(4, 0.1, 0, 0.7)[0], [0, 0, 0, 0])

    def test_weak_inequality(self):
        np.testing.assert_array_equal(lower_bound_forecasts(3, 0.1, 1, 0.5)[0], [1, 0, 1])
        np.testing.assert_array_equal(lower_bound_forecasts(3, 0.125, 1, 0.375)[0], [1, 1, 1])

    @pytest.mark.parametrize("eps", [0.0, -0.1, 0.25, 0.3])
    def test_eps_range(self, eps):
        with pytest.raises(ValueError):
            lower_bound_forecasts(3, eps, 0, 0.2)
        with pytest.raises(ValueError):
            LowerBoundAdversary(3, eps, 0, make_generator(0))

    def test_gap_and_domination(self):
        K, eps, n = 5, 0.1, 100_000
        adv = LowerBoundAdversary(K, eps, 2, make_generator(0, 0, "adversary"))
        F, y = adv.block(0, n)
        assert np.all(y == 0)
        others = np.delete(F, 2, axis=1)
        assert np.all(F[:, [2]] <= others)
        means = F.mean(axis=0)
        se = F.std(axis=0, ddof=1) / np.sqrt(n)
        assert abs(means[2] - (0.5 - eps)) <= 4 * se[2]
        assert np.all(np.abs(np.delete(means, 2) - 0.5) <= 4 * np.delete(se, 2))
        gap = others[:, 0] - F[:, 2]
        assert abs(gap.mean() - eps) <= 4 * gap.std(ddof=1) / np.sqrt(n)

    def test_istar_range(self):
        with pytest.raises(ValueError):
            LowerBoundAdversary(3, 0.1, 3, make_generator(0))

    def test_default_eps(self):
        assert default_eps(10, 5, 20_000) == pytest.approx(10 / (900 * 5 * 20_000))
        assert default_eps(1000, 1, 1) == 0.1
        assert default_eps(10, 2, 0) == 0.1


class TestBernoulli:
    def test_examples(self):
        assert iid_bernoulli_forecasts([0.0], [0.0])[0] == 0.0
        assert iid_bernoulli_forecasts([1.0], [0.999])[0] == 1.0
        assert iid_bernoulli_forecasts([0.3], [0.2])[0] == 1.0
        assert iid_bernoulli_forecasts([0.3], [0.3])[0] == 0.0

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=10), st.integers(0, 2**32))
    def test_extremes(self, means, seed):
        u = np.random.default_rng(seed).random(len(means))
        F = iid_bernoulli_forecasts(means, u)
        m = np.array(means)
        assert np.all(F[m == 0] == 0) and np.all(F[m == 1] == 1)

    def test_means(self):
        means = np.array([0.1, 0.5, 0.9])
        F, _ = BernoulliAdversary(means, make_generator(1, 0, "adversary")).block(0, 50_000)
        se = np.sqrt(means * (1 - means) / 50_000)
        assert np.all(np.abs(F.mean(axis=0) - means) <= 4 * se)

    def test_invalid_means(self):
        with pytest.raises(ValueError):
            BernoulliAdversary([0.5, 1.2], make_generator(0))


class TestObliviousness:
    def test_block_vs_rounds(self):
        a = BernoulliAdversary([0.3, 0.6, 0.5], make_generator(9, 0, "adversary"))
        b = BernoulliAdversary([0.3, 0.6, 0.5], make_generator(9, 0, "adversary"))
        F, _ = a.block(0, 10_000)
        rows = np.array([b.round(t)[0] for t in range(10_000)])
        np.testing.assert_array_equal(F, rows)

    def test_uneven_blocks_and_skips(self):
        ref, _ = LowerBoundAdversary(3, 0.1, 0, make_generator(4, 1, "adversary")).block(0, 20_000)
        adv = LowerBoundAdversary(3, 0.1, 0, make_generator(4, 1, "adversary"))
        np.testing.assert_array_equal(adv.block(0, 7)[0], ref[0:7])
        np.testing.assert_array_equal(adv.block(7, 5000)[0], ref[7:5000])
        np.testing.assert_array_equal(adv.block(9000, 15_000)[0], ref[9000:15_000])
        np.testing.assert_array_equal(adv.round(19_999)[0], ref[19_999])
        with pytest.raises(IndexError):
            adv.block(0, 1)

    def test_constant(self):
        F, y = ConstantAdversary(3, 0.4).block(5, 9)
        assert F.shape == (4, 3) and np.all(F == 0.4) and np.all(y == 0)


class TestFixedSequence:
    def test_replay(self, tmp_path):
        path = tmp_path / "seq.csv"
        path.write_text("# forecasts then outcome\n0.1, 0.9, 0.0\n\n0.2;0.8 1.0\n")
        adv = load_fixed_sequence(path)
        assert adv.K == 2 and len(adv) == 2
        F, y = adv.round(0)
        np.testing.assert_array_equal(F, [0.1, 0.9])
        assert y == 0.0
        F, y = adv.round(1)
        np.testing.assert_array_equal(F, [0.2, 0.8])
        assert y == 1.0
        with pytest.raises(EndOfSequence):
            adv.round(2)

    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        adv = load_fixed_sequence(path, K=3)
        assert len(adv) == 0 and adv.K == 3
        with pytest.raises(EndOfSequence):
            adv.round(0)
        with pytest.raises(SequenceParseError):
            load_fixed_sequence(path)

    def test_width_mismatch_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.1,0.2,0\n#c\n0.1,0.2\n")
        with pytest.raises(SequenceParseError) as err:
            load_fixed_sequence(path)
        assert err.value.line == 3
        path.write_text("0.1,abc,0\n")
        with pytest.raises(SequenceParseError) as err:
            load_fixed_sequence(path)
        assert err.value.line == 1

    def test_offset(self):
        adv = FixedSequenceAdversary([[1.0], [2.0]], [0.0, 0.0], offset=10)
        assert adv.round(11)[0][0] == 2.0
        with pytest.raises(EndOfSequence):
            adv.round(0)


class TestAdversaryConfig:
    def test_build(self, tmp_path):
        cfg = AdversaryConfig("lower_bound", K=4, i_star=1)
        adv = cfg.build(make_generator(0), m=2, T=100)
        assert adv.eps == default_eps(4, 2, 100)
        assert isinstance(AdversaryConfig("bernoulli", 2, means=(0.1, 0.2)).build(make_generator(0)),
                          BernoulliAdversary)
        assert isinstance(AdversaryConfig("constant", 2).build(None), ConstantAdversary)
        path = tmp_path / "s.txt"
        path.write_text("0 1 0\n")
        assert len(AdversaryConfig("fixed", 2, file=str(path)).build(None)) == 1
        with pytest.raises(ValueError):
            AdversaryConfig("fixed", 3, file=str(path)).build(None)

    @pytest.mark.parametrize("kw", [dict(kind="nope", K=2), dict(kind="bernoulli", K=2, means=(0.1,)),
                                    dict(kind="bernoulli", K=1, means=(1.5,)),
                                    dict(kind="lower_bound", K=2, eps=0.3),
                                    dict(kind="lower_bound", K=2, i_star=2), dict(kind="fixed", K=2)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            AdversaryConfig(**kw)
