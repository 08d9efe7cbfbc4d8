import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from subseg import color
from subseg.errors import ParameterError


def scalar_lab(r8, g8, b8):
    """Independent scalar reference: straight transcription of the sRGB ->
    XYZ(D65) -> Lab formulas using the math module only."""

    def lin(c8):
        c = c8 / 255.0
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = lin(r8), lin(g8), lin(b8)
    x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl
    y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl
    z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl

    def f(t):
        return t ** (1 / 3) if t > (6 / 29) ** 3 else t / (3 * (6 / 29) ** 2) + 4 / 29

    fx, fy, fz = f(x / 0.95047), f(y / 1.0), f(z / 1.08883)
    return (116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz))


def one_pixel(r, g, b):
    return color.srgb_to_lab(np.array([[[r, g, b]]], dtype=np.uint8))[0, 0]


# Frozen from the scalar reference above, computed before the build.
REFERENCE = {
    (255, 255, 255): (100.000004, -0.000017, 0.000007),
    (0, 0, 0): (0.0, 0.0, 0.0),
    (255, 0, 0): (53.240794, 80.092460, 67.203197),
    (128, 128, 128): (53.585016, -0.000010, 0.000004),
}


def test_white_maps_to_l100():
    lab = one_pixel(255, 255, 255)
    assert lab[0] == pytest.approx(100.0, abs=0.01)
    assert lab[1] == pytest.approx(0.0, abs=0.01)
    assert lab[2] == pytest.approx(0.0, abs=0.01)


def test_black_maps_to_origin():
    assert one_pixel(0, 0, 0) == pytest.approx((0.0, 0.0, 0.0), abs=0.01)


def test_red_reference_value():
    lab = one_pixel(255, 0, 0)
    assert lab == pytest.approx((53.24, 80.09, 67.20), abs=0.1)


@pytest.mark.parametrize("rgb,expected", sorted(REFERENCE.items()))
def test_frozen_reference_values(rgb, expected):
    assert one_pixel(*rgb) == pytest.approx(expected, abs=1e-3)


def test_matches_scalar_reference_on_sample(rng):
    pixels = rng.integers(0, 256, size=(40, 3), dtype=np.uint8)
    lab = color.srgb_to_lab(pixels[None, :, :])[0]
    for (r, g, b), got in zip(pixels, lab):
        assert got == pytest.approx(scalar_lab(int(r), int(g), int(b)), abs=1e-6)


@given(st.integers(0, 255))
def test_gray_has_zero_chroma(g):
    lab = one_pixel(g, g, g)
    assert abs(lab[1]) < 0.01 and abs(lab[2]) < 0.01


@given(st.integers(0, 254), st.integers(1, 255))
def test_gray_lightness_monotone(g1, delta):
    g2 = min(255, g1 + delta)
    assert one_pixel(g1, g1, g1)[0] < one_pixel(g2, g2, g2)[0]


def test_conversion_deterministic(rng):
    img = rng.integers(0, 256, size=(13, 7, 3), dtype=np.uint8)
    first = color.srgb_to_lab(img)
    second = color.srgb_to_lab(img.copy())
    assert (first == second).all()


def test_rejects_bad_inputs():
    with pytest.raises(ParameterError):
        color.srgb_to_lab(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ParameterError):
        color.srgb_to_lab(np.zeros((4, 4, 3), dtype=np.float64))


# --- lab_gradient -----------------------------------------------------------


def const_lab(value, h=8, w=8):
    img = np.zeros((h, w, 3))
    img[..., 0] = value
    return img


def test_gradient_constant_image_is_zero():
    img = const_lab(37.0)
    for x in range(1, 7):
        for y in range(1, 7):
            assert color.lab_gradient(img, x, y) == 0.0


def test_gradient_step_edge():
    # L steps down/up by 10 around a mid value: horizontal difference is
    # (10,0,0) - (-10,0,0), squared norm 400.
    img = const_lab(50.0)
    img[:, 4:, 0] = 60.0
    img[:, :4, 0] = 40.0
    img[:, 4, 0] = 50.0  # the edge column itself sits at the mid value
    assert color.lab_gradient(img, 4, 3) == pytest.approx(400.0, abs=1e-12)


def test_gradient_unit_ramp():
    img = np.zeros((6, 9, 3))
    img[..., 0] = np.arange(9)[None, :]
    for x in range(1, 8):
        for y in range(1, 5):
            assert color.lab_gradient(img, x, y) == pytest.approx(4.0, abs=1e-12)


def test_gradient_rejects_border_coordinates():
    img = const_lab(1.0)
    for x, y in [(0, 3), (7, 3), (3, 0), (3, 7)]:
        with pytest.raises(ParameterError):
            color.lab_gradient(img, x, y)


def test_gradient_map_matches_pointwise(rng):
    img = rng.normal(50, 20, size=(9, 11, 3))
    gm = color.lab_gradient_map(img)
    for y in range(1, 8):
        for x in range(1, 10):
            assert gm[y, x] == color.lab_gradient(img, x, y)


def test_gradient_map_zero_on_constant_everywhere():
    assert (color.lab_gradient_map(const_lab(12.0)) == 0.0).all()
