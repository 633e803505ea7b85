import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from elcells import rotation, synth
from elcells.imgcore import rotate


def test_objective_zero_image():
    for a in (0.0, 0.3, -0.7):
        assert rotation.rotation_objective(np.zeros((20, 30)), a) == 0.0


def test_objective_prefers_aligned_stripes():
    img = np.zeros((81, 81))
    img[40, :] = 1.0
    img[:, 40] = 1.0
    assert rotation.rotation_objective(img, 0.0) > rotation.rotation_objective(img, math.radians(10))


def test_objective_symmetric_checkerboard():
    yy, xx = np.mgrid[0:64, 0:64]
    img = (((yy // 8) + (xx // 8)) % 2).astype(float)
    img = img[:63, :63]  # odd size: centre on a pixel, mirror-symmetric about it
    for deg in (3.0, 11.0, 27.0):
        a = math.radians(deg)
        assert rotation.rotation_objective(img, a) == pytest.approx(rotation.rotation_objective(img, -a), abs=1e-6)


def test_objective_fourfold_symmetry():
    img = np.zeros((61, 61))
    img[30, :] = img[:, 30] = 1.0
    img[10, 10] = img[10, 50] = img[50, 10] = img[50, 50] = 3.0
    for deg in (0.0, 7.0, 20.0):
        a = math.radians(deg)
        assert rotation.rotation_objective(img, a) == pytest.approx(
            rotation.rotation_objective(img, a + math.pi / 2), abs=1e-6)


@pytest.mark.parametrize("fn,a,b,eps,expected", [
    (lambda x: -(x - 0.3) ** 2, 0.0, 1.0, 1e-6, 0.3),
    (math.sin, 0.0, math.pi, 1e-6, math.pi / 2),
    (lambda x: -abs(x - 0.7), 0.0, 1.0, 1e-4, 0.7),
])
def test_golden_section_examples(fn, a, b, eps, expected):
    assert abs(rotation.golden_section_maximize(fn, a, b, eps) - expected) <= eps


def test_golden_section_errors():
    with pytest.raises(ValueError):
        rotation.golden_section_maximize(math.sin, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        rotation.golden_section_maximize(math.sin, 0.0, 1.0, 0.0)


def test_golden_section_evaluation_count():
    calls = []

    def fn(x):
        calls.append(x)
        return -(x - 0.2) ** 2

    a, b, eps = -1.0, 1.0, 1e-3
    rotation.golden_section_maximize(fn, a, b, eps)
    n = math.ceil(math.log((b - a) / eps) / math.log(1 / rotation.INV_PHI))
    assert len(calls) == n + 2  # two initial probes, one per step


@given(st.floats(-5, 5), st.floats(0.01, 10), st.floats(0, 1), st.floats(1e-6, 1e-2))
def test_golden_section_bracketing(a, width, frac, eps):
    b = a + width
    peak = a + frac * width
    trace = []
    x = rotation.golden_section_maximize(lambda t: -abs(t - peak), a, b, eps, trace)
    assert abs(x - peak) <= eps
    for lo, x0, x1, hi in trace:
        assert lo <= x0 <= x1 <= hi
        # 1e-9 plus the rounding floor of the probe positions themselves
        floor = 8 * np.spacing(max(abs(lo), abs(hi))) / (x0 - lo)
        assert (hi - lo) / (hi - x0) == pytest.approx((hi - x0) / (x0 - lo), rel=1e-9 + floor)


@pytest.fixture(scope="module")
def module_image():
    img, _ = synth.render_module(seed=11, noise_sigma=0.02)
    return img


def test_correct_rotation_zero(module_image):
    res = rotation.correct_rotation(module_image)
    assert abs(res.angle) <= math.radians(0.05)


def test_correct_rotation_seven_degrees_and_idempotence(module_image):
    tilted = rotate(module_image, math.radians(7.0), fill=synth.BACKGROUND)
    res = rotation.correct_rotation(tilted)
    assert math.degrees(res.angle) == pytest.approx(-7.0, abs=0.2)
    again = rotation.correct_rotation(res.corrected)
    assert abs(math.degrees(again.angle)) <= 0.2
    assert -math.pi / 4 <= res.angle <= math.pi / 4
    assert res.objective == pytest.approx(rotation.rotation_objective(
        rotation.standardize(rotation.downsample(tilted, 4)), res.angle,
        fill=rotation.background_level(rotation.standardize(rotation.downsample(tilted, 4))), order=3))


def test_pure_golden_section_mode(module_image):
    tilted = rotate(module_image, math.radians(-4.0), fill=synth.BACKGROUND)
    res = rotation.correct_rotation(tilted, coarse_steps=0)
    assert math.degrees(res.angle) == pytest.approx(4.0, abs=0.2)


def test_degenerate_image_flagged():
    res = rotation.correct_rotation(np.full((40, 40), 9.0))
    assert res.degenerate and res.angle == 0.0
