import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_complexity_1d, brute_log_complexity_2d, brute_window_set
from problem_evolution.complexity import (
    LinguisticComplexity,
    complexity_1d,
    complexity_2d,
    count_distinct_windows,
    log_complexity_2d,
    usage_profile_1d,
    usage_profile_2d,
    vocabulary_usage_1d,
    vocabulary_usage_2d,
)

# direct evaluation of sum(-log(min(2**(h*w), positions))) over all 400 shapes
CONSTANT_20X20_LOG = -1649.0679581889713


def images(max_side=6):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda hw: arrays(np.uint8, hw, elements=st.integers(0, 1))
    )


class TestOneDimensional:
    @pytest.mark.parametrize("k, expected", [(1, 1.0), (2, 0.5), (3, 0.5), (4, 2 / 3)])
    def test_worked_example_usages(self, k, expected):
        assert vocabulary_usage_1d("010101", k) == pytest.approx(expected, abs=1e-15)

    def test_worked_example_complexity(self):
        assert complexity_1d("010101") == pytest.approx(1 / 6, abs=1e-9)
        assert round(complexity_1d("010101"), 3) == 0.167

    def test_profile_is_exact(self):
        ratios = [e.ratio for e in usage_profile_1d("010101")]
        assert ratios == [Fraction(1), Fraction(1, 2), Fraction(1, 2), Fraction(2, 3),
                          Fraction(1), Fraction(1)]

    def test_constant_string_single_letter(self):
        assert vocabulary_usage_1d("000000", 1) == 0.5

    def test_single_symbol(self):
        assert complexity_1d("0") == 1.0

    def test_0011_matches_oracle(self):
        expected = brute_complexity_1d("0011")
        assert expected == pytest.approx(1.0)
        assert complexity_1d("0011") == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("k", [0, 7])
    def test_word_length_out_of_range(self, k):
        with pytest.raises(ValueError):
            vocabulary_usage_1d("010101", k)

    def test_alphabet_too_small(self):
        with pytest.raises(ValueError):
            complexity_1d("012", alphabet_size=2)

    @given(st.text(alphabet="01", min_size=1, max_size=14))
    def test_matches_oracle(self, s):
        assert complexity_1d(s) == pytest.approx(brute_complexity_1d(s), rel=1e-12)


class TestWindows:
    def test_constant_image(self):
        img = np.ones((4, 4), dtype=np.uint8)
        for h in range(1, 5):
            for w in range(1, 5):
                assert count_distinct_windows(img, h, w) == 1

    def test_checkerboard_colors(self):
        img = np.tile([[0, 1], [1, 0]], (2, 2))
        assert count_distinct_windows(img, 1, 1) == 2

    def test_seeded_5x5(self):
        img = np.random.default_rng(5).integers(0, 2, (5, 5))
        expected = len(brute_window_set(img.tolist(), 2, 2))
        assert count_distinct_windows(img, 2, 2) == expected
        assert vocabulary_usage_2d(img, 2, 2) == expected / 16

    def test_usage_constant_3x3(self):
        assert vocabulary_usage_2d(np.zeros((3, 3)), 1, 1) == 0.5

    def test_full_window_usage_is_one(self, rng):
        img = rng.integers(0, 2, (4, 7))
        assert vocabulary_usage_2d(img, 4, 7) == 1.0

    @pytest.mark.parametrize("h, w", [(0, 1), (1, 0), (5, 1), (1, 6)])
    def test_out_of_range(self, h, w):
        with pytest.raises(ValueError):
            count_distinct_windows(np.zeros((4, 5)), h, w)

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            count_distinct_windows(np.full((3, 3), 2), 1, 1)

    def test_profile_counts_agree_with_packed_count(self, rng):
        img = rng.integers(0, 2, (7, 9))
        for entry in usage_profile_2d(img):
            h, w = entry.size
            assert entry.distinct == count_distinct_windows(img, h, w)


class TestTwoDimensional:
    def test_row_image_matches_1d(self):
        s = "0110100110"
        img = np.array([[int(c) for c in s]])
        assert complexity_2d(img) == pytest.approx(complexity_1d(s), rel=1e-12)
        assert complexity_2d(img.T) == pytest.approx(complexity_1d(s), rel=1e-12)

    def test_constant_20x20_regression(self):
        img = np.zeros((20, 20), dtype=np.uint8)
        direct = math.fsum(
            -math.log(min(2 ** (h * w), (21 - h) * (21 - w)))
            for h in range(1, 21)
            for w in range(1, 21)
        )
        assert direct == pytest.approx(CONSTANT_20X20_LOG, abs=1e-9)
        assert log_complexity_2d(img) == pytest.approx(CONSTANT_20X20_LOG, abs=1e-9)

    def test_seeded_6x6_matches_oracle(self):
        img = np.random.default_rng(66).integers(0, 2, (6, 6))
        assert log_complexity_2d(img) == pytest.approx(brute_log_complexity_2d(img.tolist()),
                                                       abs=1e-12)

    def test_square_shape_set(self, rng):
        img = rng.integers(0, 2, (5, 6))
        expected = brute_log_complexity_2d(img.tolist(), square_only=True)
        assert log_complexity_2d(img, "square") == pytest.approx(expected, abs=1e-12)
        assert len(usage_profile_2d(img, "square")) == 5

    def test_unknown_shape_set(self):
        with pytest.raises(ValueError):
            log_complexity_2d(np.zeros((2, 2)), "diagonal")

    @settings(max_examples=60, deadline=None)
    @given(images())
    def test_factors_in_unit_interval(self, img):
        for entry in usage_profile_2d(img):
            assert 1 <= entry.distinct <= entry.possible
        assert log_complexity_2d(img) <= 0.0

    @settings(max_examples=60, deadline=None)
    @given(images())
    def test_constant_image_is_minimal(self, img):
        floor = log_complexity_2d(np.zeros_like(img))
        assert log_complexity_2d(img) >= floor - 1e-12

    @settings(max_examples=40, deadline=None)
    @given(images())
    def test_symmetries(self, img):
        base = log_complexity_2d(img)
        for variant in (1 - img, img[:, ::-1], img[::-1, :], img[::-1, ::-1], img.T):
            assert log_complexity_2d(variant) == pytest.approx(base, abs=1e-12)


def test_transformer_pipeline_shape(rng):
    stack = rng.integers(0, 2, (3, 5, 5))
    feats = LinguisticComplexity().fit_transform(stack)
    assert feats.shape == (3, 2)
    np.testing.assert_allclose(feats[:, 1], [log_complexity_2d(im) for im in stack])
    np.testing.assert_allclose(feats[:, 0], np.exp(feats[:, 1]))
    assert LinguisticComplexity(shape_set="square").get_params() == {"shape_set": "square"}
