"""Linguistic complexity of symbol strings and binary images.

Complexity is the product, over every word size, of the vocabulary usage:
the number of distinct words present divided by the number of words that
could possibly be present. The possible count is bounded both by the
alphabet (``alphabet_size ** k``) and by the number of positions available
(``len(s) - k + 1``).

For images the words are axis-aligned, non-wrapping ``h x w`` windows and the
product runs over every window shape. Products over hundreds of factors
underflow quickly, so the log value is the primary quantity and comparisons
should be made on it.
"""

import math
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image

SHAPE_SETS = ("all", "square")


class UsageEntry(NamedTuple):
    """Vocabulary usage of one word size (1-D) or window shape (2-D)."""

    size: tuple
    distinct: int
    possible: int

    @property
    def ratio(self):
        return Fraction(self.distinct, self.possible)

    @property
    def usage(self):
        return self.distinct / self.possible

    @property
    def log_usage(self):
        return math.log(self.distinct) - math.log(self.possible)


def _possible_words(alphabet_size, word_len, positions):
    # exact integer arithmetic: alphabet_size ** word_len can be astronomically large
    if word_len * math.log2(alphabet_size) >= 63:
        return positions
    return min(alphabet_size**word_len, positions)


# ---------------------------------------------------------------------------
# 1-D


def _check_string(s, alphabet_size):
    if len(s) < 1:
        raise ValueError("symbol string must be non-empty")
    if alphabet_size < 1:
        raise ValueError(f"alphabet_size must be positive, got {alphabet_size}")
    if len(set(s)) > alphabet_size:
        raise ValueError(
            f"string uses {len(set(s))} symbols but alphabet_size is {alphabet_size}"
        )
    return tuple(s)


def _usage_entry_1d(symbols, k, alphabet_size):
    n = len(symbols)
    if not 1 <= k <= n:
        raise ValueError(f"word length k={k} out of range [1, {n}]")
    distinct = len({symbols[i : i + k] for i in range(n - k + 1)})
    return UsageEntry((k,), distinct, _possible_words(alphabet_size, k, n - k + 1))


def vocabulary_usage_1d(s, k, alphabet_size=2):
    """Fraction of possible length-``k`` words that occur in ``s``.

    >>> vocabulary_usage_1d("010101", 2)
    0.5
    """
    symbols = _check_string(s, alphabet_size)
    return _usage_entry_1d(symbols, k, alphabet_size).usage


def usage_profile_1d(s, alphabet_size=2):
    """Usage entries for every word length ``1..len(s)``."""
    symbols = _check_string(s, alphabet_size)
    return [_usage_entry_1d(symbols, k, alphabet_size) for k in range(1, len(symbols) + 1)]


def log_complexity_1d(s, alphabet_size=2):
    return math.fsum(e.log_usage for e in usage_profile_1d(s, alphabet_size))


def complexity_1d(s, alphabet_size=2):
    """Linguistic complexity of a string.

    >>> round(complexity_1d("010101"), 3)
    0.167
    """
    return math.exp(log_complexity_1d(s, alphabet_size))


# ---------------------------------------------------------------------------
# 2-D


def _check_window(img, h, w):
    height, width = img.shape
    if not (1 <= h <= height and 1 <= w <= width):
        raise ValueError(f"window {h}x{w} out of range for {height}x{width} image")


def _dense_rank(keys):
    _, inverse = np.unique(keys, return_inverse=True)
    return inverse.reshape(keys.shape).astype(np.int64)


def _row_labels(img):
    """Yield ``(w, labels)`` where ``labels[r, c]`` ranks the row segment
    ``img[r, c:c+w]``. Equal segments get equal labels across the whole image."""
    labels = _dense_rank(img.astype(np.int64))
    width = img.shape[1]
    yield 1, labels
    for w in range(2, width + 1):
        labels = _dense_rank(labels[:, :-1] * 2 + img[:, w - 1 :])
        yield w, labels


def _window_counts(img, shape_set="all"):
    """Map ``(h, w) -> distinct window count`` for the requested shape set.

    Windows of height ``h`` are labelled by combining the labels of height
    ``h - 1`` with the row-segment label of the next row down, so the labels
    identify exact bit patterns without materialising them.
    """
    if shape_set not in SHAPE_SETS:
        raise ValueError(f"shape_set must be one of {SHAPE_SETS}, got {shape_set!r}")
    height = img.shape[0]
    counts = {}
    for w, rows in _row_labels(img):
        n_row_labels = int(rows.max()) + 1
        labels = rows
        for h in range(1, height + 1):
            if h > 1:
                labels = _dense_rank(labels[:-1] * n_row_labels + rows[h - 1 :])
            if shape_set == "all" or h == w:
                counts[(h, w)] = int(labels.max()) + 1
    return counts


def count_distinct_windows(img, h, w):
    """Number of distinct ``h x w`` sub-blocks of ``img``."""
    img = check_image(img)
    _check_window(img, h, w)
    windows = np.lib.stride_tricks.sliding_window_view(img, (h, w))
    flat = windows.reshape(-1, h * w)
    return int(np.unique(np.packbits(flat, axis=1), axis=0).shape[0])


def vocabulary_usage_2d(img, h, w):
    img = check_image(img)
    _check_window(img, h, w)
    height, width = img.shape
    positions = (height - h + 1) * (width - w + 1)
    return count_distinct_windows(img, h, w) / _possible_words(2, h * w, positions)


def usage_profile_2d(img, shape_set="all"):
    """Usage entries for every window shape, ordered by ``(h, w)``."""
    img = check_image(img)
    height, width = img.shape
    profile = []
    for (h, w), distinct in sorted(_window_counts(img, shape_set).items()):
        positions = (height - h + 1) * (width - w + 1)
        profile.append(UsageEntry((h, w), distinct, _possible_words(2, h * w, positions)))
    return profile


def log_complexity_2d(img, shape_set="all"):
    """Natural log of the 2-D linguistic complexity (always ``<= 0``)."""
    return math.fsum(e.log_usage for e in usage_profile_2d(img, shape_set))


def complexity_2d(img, shape_set="all"):
    """2-D linguistic complexity. May underflow to 0.0 for large, simple
    images; use :func:`log_complexity_2d` when ranking."""
    return math.exp(log_complexity_2d(img, shape_set))


class LinguisticComplexity(TransformerMixin, BaseEstimator):
    """Transformer mapping a stack of binary images to complexity features.

    ``transform`` returns an ``(n_images, 2)`` array of ``[complexity,
    log_complexity]``, so images can be scored inside a pipeline.

    Parameters
    ----------
    shape_set : {"all", "square"}
        Which window shapes contribute factors.
    """

    def __init__(self, shape_set="all"):
        self.shape_set = shape_set

    def fit(self, X, y=None):
        if self.shape_set not in SHAPE_SETS:
            raise ValueError(f"shape_set must be one of {SHAPE_SETS}")
        return self

    def transform(self, X):
        X = np.asarray(X)
        if X.ndim == 2:
            X = X[np.newaxis]
        if X.ndim != 3:
            raise ValueError(f"expected a stack of 2-D images, got shape {X.shape}")
        logs = np.array([log_complexity_2d(img, self.shape_set) for img in X])
        return np.column_stack([np.exp(logs), logs])
