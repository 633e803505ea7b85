import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from elcells import edges
from elcells.edges import HORIZONTAL, VERTICAL, CannyParams, UsanParams


def vertical_step(h=20, w=20):
    img = -np.ones((h, w))
    img[:, w // 2:] = 1.0
    return img


def band_columns(mask):
    return np.flatnonzero(mask.any(axis=0))


def test_usan_constant_image_empty():
    img = np.full((15, 15), 3.0)
    for o in (VERTICAL, HORIZONTAL):
        assert not edges.usan_edges(img, UsanParams(), o).any()


def test_usan_isolated_pixel():
    img = np.zeros((11, 11))
    img[5, 5] = 1.0
    for o in (VERTICAL, HORIZONTAL):
        assert edges.usan_edges(img, UsanParams(), o)[5, 5]
        assert edges.usan_count(img, *edges.usan_window(UsanParams(), o), 0.5)[5, 5] == 1


def test_usan_step_band_vertical_thicker():
    # at p = 0.4 a straight step leaves at least 6 of 15 window pixels similar,
    # so no pixel qualifies; p = 0.8 separates the two orientations
    params = UsanParams(area_fraction=0.8)
    v = edges.usan_edges(vertical_step(), params, VERTICAL)
    hz = edges.usan_edges(vertical_step(), params, HORIZONTAL)
    assert band_columns(v).tolist() == [8, 9, 10, 11]
    assert band_columns(hz).tolist() == [9, 10]
    assert len(band_columns(hz)) < len(band_columns(v))


def test_usan_step_at_published_p_is_empty():
    img = vertical_step()
    assert not edges.usan_edges(img, UsanParams(), VERTICAL).any()


def test_usan_thin_line_counts():
    img = np.zeros((30, 30))
    img[:, 14] = 5.0  # thin vertical line
    p = UsanParams()
    assert edges.usan_count(img, *edges.usan_window(p, VERTICAL), 0.5)[15, 14] == 3
    assert edges.usan_count(img, *edges.usan_window(p, HORIZONTAL), 0.5)[15, 14] == 5
    assert edges.usan_edges(img, p, VERTICAL)[2:-2, 14].all()


def test_usan_window_too_large():
    with pytest.raises(ValueError):
        edges.usan_edges(np.zeros((2, 2)), UsanParams(), VERTICAL)


@pytest.mark.parametrize("kw", [dict(long=3, short=5), dict(long=4), dict(area_fraction=1.0), dict(threshold=0)])
def test_usan_params_validated(kw):
    with pytest.raises(ValueError):
        UsanParams(**kw)


images = arrays(np.float64, st.tuples(st.integers(5, 14), st.integers(5, 14)),
                elements=st.sampled_from([-1.0, -0.3, 0.0, 0.4, 1.0, 2.0]))


@given(images)
def test_usan_transpose_duality(img):
    p = UsanParams()
    assert np.array_equal(edges.usan_edges(img, p, VERTICAL), edges.usan_edges(img.T, p, HORIZONTAL).T)


@given(images, st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_usan_monotone_in_p(img, p1, p2):
    p1, p2 = sorted((p1, p2))
    for o in (VERTICAL, HORIZONTAL):
        lo = edges.usan_edges(img, UsanParams(area_fraction=p1), o)
        hi = edges.usan_edges(img, UsanParams(area_fraction=p2), o)
        assert not (lo & ~hi).any()


def test_canny_constant_empty():
    assert not edges.canny_edges(np.full((20, 20), 100.0)).any()


def test_canny_step_single_line():
    img = np.zeros((30, 30))
    img[:, 15:] = 200.0
    out = edges.canny_edges(img)
    cols = band_columns(out)
    assert len(cols) == 1
    assert cols[0] in (14, 15)
    assert out[:, cols[0]].all()


def test_canny_weak_step_empty():
    img = np.zeros((30, 30))
    img[:, 15:] = 10.0
    assert not edges.canny_edges(img, rescale=False).any()


def test_sobel_normalisation():
    img = np.zeros((9, 9))
    img[:, 5:] = 1.0
    gx, gy = edges.sobel_gradients(img)
    assert gx.max() == pytest.approx(1.0)  # raw response 4 divided by the step gain
    assert np.allclose(gy, 0)


@given(st.floats(0.1, 10.0), st.floats(-50, 50), st.integers(0, 1000))
def test_canny_affine_invariant_after_rescale(scale, offset, seed):
    rng = np.random.default_rng(seed)
    img = np.zeros((24, 24))
    img[:, 8:] = 120.0
    img[12:, :] += 60.0
    img += rng.normal(0, 3, img.shape)
    a = edges.canny_edges(img, rescale=True)
    b = edges.canny_edges(scale * img + offset, rescale=True)
    assert np.array_equal(a, b)


def test_canny_params_validated():
    with pytest.raises(ValueError):
        CannyParams(low=80, high=75)
    with pytest.raises(ValueError):
        CannyParams(kernel_size=4)
