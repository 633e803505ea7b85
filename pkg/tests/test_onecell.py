import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elcells import onecell as O

import oracles


def test_cusum_two_level():
    cp = O.cusum([5, 5, 5, 5, 9, 9, 9, 9])
    assert cp.index == 4 and cp.pre_mean == 5 and cp.post_mean == 9 and cp.rss == 0


def test_cusum_constant_tie():
    assert O.cusum([3.0] * 10).index == 1


def test_cusum_noisy_step():
    rng = np.random.default_rng(7)
    x = np.r_[np.zeros(50), np.ones(50)] + rng.normal(0, 0.2, 100)
    q = O.cusum(x).index
    assert abs(q - 50) <= 2
    assert q == oracles.cusum_argmin(x.tolist())


def test_cusum_errors():
    with pytest.raises(ValueError):
        O.cusum([1.0])
    with pytest.raises(ValueError):
        O.cusum(np.zeros((3, 3)))


sequences = st.lists(st.integers(-50, 50), min_size=2, max_size=60)


@given(sequences)
def test_cusum_matches_oracle(seq):
    assert O.cusum(seq).index == oracles.cusum_argmin(seq)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=60))
def test_cusum_is_minimum(seq):
    cp = O.cusum(seq)
    rss = [oracles.rss(seq, k) for k in range(1, len(seq))]
    scale = max(1.0, sum((v - sum(seq) / len(seq)) ** 2 for v in seq))
    assert all(cp.rss <= r + 1e-8 * scale for r in rss)


@given(sequences, st.sampled_from([-3.0, -0.5, 0.25, 2.0, 7.0]), st.integers(-100, 100))
def test_cusum_affine_invariant(seq, a, b):
    assert O.cusum([a * v + b for v in seq]).index == O.cusum(seq).index


def cell_image(noise=0.0, seed=0, radius=0):
    img = np.full((300, 300), 10.0)
    img[40:240, 30:230] = 110.0
    if radius:
        yy, xx = np.mgrid[0:300, 0:300]
        for cx, cy in [(30 + radius, 40 + radius), (229 - radius, 40 + radius),
                       (30 + radius, 239 - radius), (229 - radius, 239 - radius)]:
            corner = ((xx - cx) * np.sign(cx - 130) > 0) & ((yy - cy) * np.sign(cy - 140) > 0)
            img[corner & ((xx - cx) ** 2 + (yy - cy) ** 2 > radius**2)] = 10.0
    if noise:
        img = img + np.random.default_rng(seed).normal(0, noise, img.shape)
    return img


def test_corner_exact():
    img = cell_image()
    assert O.detect_corner(img, (100, 100), O.UL) == (30, 40)
    quad = O.detect_quadrilateral(img, ((100, 100), (200, 100), (100, 200), (200, 200)))
    assert quad.array().tolist() == [[30, 40], [230, 40], [30, 240], [230, 240]]


def test_corner_noisy():
    hits = 0
    for seed in range(100):
        x, y = O.detect_corner(cell_image(noise=10.0, seed=seed), (100, 100), O.UL)
        hits += abs(x - 30) <= 2 and abs(y - 40) <= 2
    assert hits >= 95


def test_corner_rounded():
    img = cell_image(radius=15)
    assert img[40, 30] == 10.0 and img[40, 100] == 110.0  # the corner really is cut
    x, y = O.detect_corner(img, (100, 100), O.UL)
    assert abs(x - 30) <= 2 and abs(y - 40) <= 2
    x, y = O.detect_corner(img, (180, 190), O.LR)
    assert abs(x - 230) <= 2 and abs(y - 240) <= 2


def test_corner_seed_outside():
    with pytest.raises(ValueError):
        O.detect_corner(np.zeros((10, 10)), (20, 5), O.UL)


def test_corner_substitutions():
    quad = np.array([[3.0, 4.0], [50.0, 7.0], [6.0, 61.0], [55.0, 66.0]])
    (x1, y1), (x2, y2), (x3, y3), (x4, y4) = quad
    for sym in (True, False):
        assert O.map_unit(0.0, 0.0, quad, sym) == (x1, y1)
        assert O.map_unit(1.0, 0.0, quad, sym) == (x2, y2)
        assert O.map_unit(0.0, 1.0, quad, sym) == (x3, y3)
    xp, yp = O.map_unit(1.0, 1.0, quad, symmetric=False)
    assert (xp, yp) == (x3 + (x4 - x3), y2 + (y4 - y3))
    xp, yp = O.map_unit(1.0, 1.0, quad, symmetric=True)
    assert (xp, yp) == pytest.approx((x4, y4))


def test_extract_identity_pixel_edges():
    img = np.random.default_rng(0).random((37, 53))
    h, w = img.shape
    quad = [(0, 0), (w, 0), (0, h), (w, h)]
    assert np.array_equal(O.extract_cell(img, quad=quad, out_w=w, out_h=h), img)
    # the literal right-edge term y4 - y3 vanishes on a rectangle, so that form is not the identity
    assert not np.array_equal(O.extract_cell(img, quad=quad, out_w=w, out_h=h, symmetric=False), img)


def test_extract_identity_pixel_centres():
    img = np.random.default_rng(1).random((37, 53))
    h, w = img.shape
    out = O.extract_cell(img, quad=[(0, 0), (w - 1, 0), (0, h - 1), (w - 1, h - 1)], out_w=w, out_h=h)
    yy, xx = np.mgrid[0:h, 0:w]
    # x' = x (W - 1) / W: floor keeps column 0 and lands one column short elsewhere
    expected = img[np.floor(yy * (h - 1) / h).astype(int), np.floor(xx * (w - 1) / w).astype(int)]
    assert np.array_equal(out, expected)
    assert np.array_equal(out[0, :], img[0, np.floor(np.arange(w) * (w - 1) / w).astype(int)])
    assert np.array_equal(out[:, 0], img[np.floor(np.arange(h) * (h - 1) / h).astype(int), 0])


def test_extract_shear_against_rasterizer():
    img = np.random.default_rng(2).random((120, 160))
    quad = [(20.0, 10.0), (100.0, 10.0), (45.0, 90.0), (125.0, 90.0)]  # x2 - x1 == x4 - x3
    out_w, out_h = 64, 48
    out = O.extract_cell(img, quad=quad, out_w=out_w, out_h=out_h)
    ref = np.empty((out_h, out_w))
    for j in range(out_h):
        t = j / out_h
        row_start = 20.0 + t * 25.0
        y = 10.0 + t * 80.0
        for i in range(out_w):
            x = row_start + (i / out_w) * 80.0
            ref[j, i] = img[int(math.floor(y + 1e-9)), int(math.floor(x + 1e-9))]
    assert np.mean(out == ref) >= 0.99
    # the quadrilateral's columns map to straight slanted lines, so every output column is sampled from one line
    xp, _ = O.source_coordinates(quad, out_w, out_h)
    assert np.allclose(np.diff(xp, axis=0), 25.0 / out_h)


def test_extract_outside_raises():
    img = np.zeros((20, 20))
    with pytest.raises(ValueError):
        O.extract_cell(img, quad=[(-5, 0), (10, 0), (0, 10), (10, 10)], out_w=8, out_h=8)
    with pytest.raises(ValueError):
        O.extract_cell(img, quad=[(0, 0), (30, 0), (0, 10), (30, 10)], out_w=8, out_h=8, interpolate=True)


def test_extract_end_to_end():
    img = cell_image()
    out = O.extract_cell(img, seeds=((100, 100), (200, 100), (100, 200), (200, 200)), out_w=50, out_h=50)
    assert out.shape == (50, 50) and np.all(out == 110.0)
    smooth = O.extract_cell(img, seeds=((100, 100), (200, 100), (100, 200), (200, 200)),
                            out_w=50, out_h=50, interpolate=True)
    assert np.allclose(smooth, 110.0)
