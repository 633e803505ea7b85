import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elcells import gridpattern as G
from elcells.celldetect import refine_lines
from elcells.gridpattern import PatternConstraints

import oracles


@pytest.mark.parametrize("gaps,expected", [
    ([1, 1, 1], [0, 1 / 3, 2 / 3, 1]),
    ([2, 1], [0, 2 / 3, 1]),
    ([5], [0, 1]),
])
def test_cumulative_deltas_examples(gaps, expected):
    assert np.allclose(G.cumulative_deltas(gaps).deltas, expected)


@pytest.mark.parametrize("bad", [[], [1, 0], [1, -2], [math.inf]])
def test_cumulative_deltas_rejects(bad):
    with pytest.raises(ValueError):
        G.cumulative_deltas(bad)


@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=15))
def test_deltas_monotone_and_pinned(gaps):
    d = G.cumulative_deltas(gaps).deltas
    assert d[0] == 0.0 and d[-1] == 1.0
    assert np.all(np.diff(d) > 0)
    assert np.allclose(d, oracles.deltas(gaps))


def test_column_profile_examples():
    assert not G.column_profile(np.zeros((4, 6), bool)).any()
    img = np.zeros((7, 6), bool)
    img[:, 3] = True
    assert G.column_profile(img).tolist() == [0, 0, 0, 7, 0, 0]
    with pytest.raises(ValueError):
        G.column_profile(img, "z")


@given(st.integers(0, 2**31))
def test_column_profile_total(seed):
    img = np.random.default_rng(seed).random((13, 17)) > 0.6
    assert G.column_profile(img).sum() == img.sum() == G.column_profile(img, "y").sum()


def test_feasibility_examples():
    gaps = G.cumulative_deltas([1, 1, 1])
    for a, b in [(0, 90), (12, 40)]:
        assert G.feasible_line_hit((a, b), gaps, a, 5.0)
        assert G.feasible_line_hit((a, b), gaps, b, 5.0)
    # line 1 sits at 30 with half-width 5 * sqrt(5) / 3 = 3.727
    assert not G.feasible_line_hit((0, 90), gaps, 34, 5.0)
    assert G.feasible_line_hit((0, 90), gaps, 33, 5.0)


def test_score_examples():
    gaps = G.cumulative_deltas([1, 1, 1])
    assert G.pattern_score(np.zeros(100), (10, 70), gaps, 5.0) == 0
    prof = np.zeros(100, dtype=int)
    prof[[10, 30, 50, 70]] = 1
    assert G.pattern_score(prof, (10, 70), gaps, 0.0) == 4


profiles = st.lists(st.integers(0, 9), min_size=3, max_size=40)
gap_lists = st.lists(st.integers(1, 6), min_size=1, max_size=4)


@given(profiles, gap_lists, st.floats(0, 6), st.data())
def test_batch_score_matches_oracle(profile, gaps, radius, data):
    w = len(profile)
    a = data.draw(st.integers(0, w - 2))
    b = data.draw(st.integers(a + 1, w - 1))
    spec = G.cumulative_deltas(gaps)
    expected = oracles.score(profile, a, b, oracles.deltas(gaps), radius)
    assert G.batch_scores(profile, np.array([a]), np.array([b]), spec, radius)[0] == expected
    assert G.pattern_score(profile, (a, b), spec, radius) == expected


@given(profiles, gap_lists, st.floats(0, 4), st.floats(0, 4))
def test_score_monotone_in_radius(profile, gaps, r1, r2):
    r1, r2 = sorted((r1, r2))
    spec = G.cumulative_deltas(gaps)
    a, b = G.candidate_grid(len(profile), 1, len(profile))
    assert np.all(G.batch_scores(profile, a, b, spec, r1) <= G.batch_scores(profile, a, b, spec, r2))


def test_candidate_grid_order_and_bounds():
    a, b = G.candidate_grid(6, 2, 3)
    assert list(zip(a.tolist(), b.tolist())) == [(0, 2), (1, 3), (2, 4), (3, 5), (0, 3), (1, 4), (2, 5)]
    assert G.candidate_grid(5, 7, 9)[0].size == 0


def test_detect_four_spikes():
    prof = np.zeros(110, dtype=int)
    prof[[10, 40, 70, 100]] = 10
    gaps = G.cumulative_deltas([1, 1, 1])
    h, s = G.detect_pattern(prof, gaps, PatternConstraints(50, 100, 5.0))
    assert s == 40
    assert (h, s) == oracles.detect(prof.tolist(), oracles.deltas([1, 1, 1]), 50, 100, 5.0)
    # the smallest-extent tie-break pulls the outer lines inward by up to R
    assert abs(h[0] - 10) <= 5 and abs(h[1] - 100) <= 5
    lines = np.rint(G.line_positions(h, gaps)).astype(int)
    assert refine_lines(prof, lines, 5.0).tolist() == [10, 40, 70, 100]
    assert G.detect_pattern(prof, gaps, PatternConstraints(50, 100, 0.0))[0] == (10, 100)


@given(st.lists(st.integers(-2, 2), min_size=4, max_size=4))
def test_detect_perturbed_spikes(shifts):
    prof = np.zeros(110, dtype=int)
    for p, d in zip([10, 40, 70, 100], shifts):
        prof[p + d] += 10
    gaps = G.cumulative_deltas([1, 1, 1])
    h, _ = G.detect_pattern(prof, gaps, PatternConstraints(50, 100, 5.0))
    lines = refine_lines(prof, np.rint(G.line_positions(h, gaps)).astype(int), 5.0)
    assert abs(lines[0] - 10) <= 2 and abs(lines[-1] - 100) <= 2


def test_single_spike_tie_break():
    prof = np.zeros(60, dtype=int)
    prof[30] = 1
    gaps = G.cumulative_deltas([1, 1])
    h, s = G.detect_pattern(prof, gaps, PatternConstraints(10, 40, 2.0))
    assert s >= 1
    assert h == oracles.detect(prof.tolist(), oracles.deltas([1, 1]), 10, 40, 2.0)[0]
    assert h[1] - h[0] == 10  # smallest extent that can cover the spike


@given(st.lists(st.integers(0, 5), min_size=8, max_size=30), gap_lists, st.floats(0, 3), st.data())
def test_detect_matches_oracle(profile, gaps, radius, data):
    w = len(profile)
    lo = data.draw(st.integers(1, w - 1))
    hi = data.draw(st.integers(lo, w + 3))
    got = G.detect_pattern(profile, G.cumulative_deltas(gaps), PatternConstraints(lo, hi, radius))
    assert got == oracles.detect(profile, oracles.deltas(gaps), lo, hi, radius)


def test_detect_infeasible():
    with pytest.raises(G.PatternNotFound):
        G.detect_pattern(np.ones(20), G.cumulative_deltas([1]), PatternConstraints(30, 40))
    with pytest.raises(ValueError):
        PatternConstraints(10, 5)


def _spiky(seed, width, gaps, a, b):
    """Lines of pattern (a, b) carrying a descending weight on a weak random floor."""
    rng = np.random.default_rng(seed)
    prof = rng.integers(0, 2, width)
    pos = np.rint(G.line_positions((a, b), G.cumulative_deltas(gaps))).astype(int)
    prof[pos] += 50 + np.arange(len(pos))[::-1]
    return prof


@given(st.integers(0, 1000), st.integers(-20, 20))
def test_translation_equivariance(seed, s):
    gaps = [3, 2, 4]
    prof = _spiky(seed, 200, gaps, 60, 150)
    shifted = np.zeros_like(prof)
    if s >= 0:
        shifted[s:] = prof[:200 - s]
    else:
        shifted[:s] = prof[-s:]
    cons = PatternConstraints(60, 120, 3.0)
    spec = G.cumulative_deltas(gaps)
    (a, b), _ = G.detect_pattern(prof, spec, cons)
    (a2, b2), _ = G.detect_pattern(shifted, spec, cons)
    assert (a2, b2) == (a + s, b + s)


@given(st.integers(0, 1000))
def test_reversal_symmetry(seed):
    gaps = [3, 2, 4]
    w = 200
    prof = _spiky(seed, w, gaps, 40, 130)
    cons = PatternConstraints(60, 120, 3.0)
    (a, b), s1 = G.detect_pattern(prof, G.cumulative_deltas(gaps), cons)
    (a2, b2), s2 = G.detect_pattern(prof[::-1], G.cumulative_deltas(gaps[::-1]), cons)
    # 0-based reflection x -> W - 1 - x
    assert s1 == s2
    assert G.pattern_score(prof[::-1], (w - 1 - b, w - 1 - a), G.cumulative_deltas(gaps[::-1]), 3.0) == s2
    assert G.pattern_score(prof, (w - 1 - b2, w - 1 - a2), G.cumulative_deltas(gaps), 3.0) == s1
