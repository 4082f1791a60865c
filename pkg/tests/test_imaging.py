from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cherrymetrics.annot_io import AbsBox
from cherrymetrics.errors import EmptyRegionError, LengthError, ParseError, UnsupportedError
from cherrymetrics.imaging import ImageRGB, MeanRGB, crop, mean_rgb, read_ppm, write_ppm


def test_read_single_pixel():
    img = read_ppm(b"P6\n1 1\n255\n\xff\x00\x00")
    assert (img.width, img.height) == (1, 1)
    assert img.pixels[0, 0].tolist() == [255, 0, 0]


def test_read_pixel_order():
    payload = bytes([1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4])
    img = read_ppm(b"P6\n2 2\n255\n" + payload)
    assert img.pixels[0, 0, 0] == 1  # top-left
    assert img.pixels[0, 1, 0] == 2  # top-right
    assert img.pixels[1, 0, 0] == 3  # bottom-left
    assert img.pixels[1, 1, 0] == 4  # bottom-right


def test_read_header_comment_and_spacing():
    img = read_ppm(b"P6 # made by hand\n 2\t1 255\n" + bytes(6))
    assert (img.width, img.height) == (2, 1)


def test_write_black_pixel_exact_bytes():
    data = write_ppm(ImageRGB(np.zeros((1, 1, 3), np.uint8)))
    assert data == b"P6\n1 1\n255\n\x00\x00\x00"
    assert len(data) == 11 + 3


def test_payload_length():
    data = write_ppm(ImageRGB(np.zeros((2, 3, 3), np.uint8)))
    assert len(data) - len(b"P6\n3 2\n255\n") == 18


@pytest.mark.parametrize(
    ("data", "exc"),
    [
        (b"P3\n1 1\n255\n0 0 0", ParseError),
        (b"P6\n1 1\n65535\n" + bytes(6), UnsupportedError),
        (b"P6\n2 2\n255\n" + bytes(11), LengthError),
        (b"P6\n2", ParseError),
    ],
)
def test_read_errors(data, exc):
    with pytest.raises(exc):
        read_ppm(data)


images = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda hw: arrays(np.uint8, (hw[0], hw[1], 3)))


@settings(max_examples=100, deadline=None)
@given(images)
def test_ppm_round_trip(px):
    img = ImageRGB(px)
    data = write_ppm(img)
    assert read_ppm(data) == img
    assert write_ppm(read_ppm(data)) == data


def _img(h, w, seed=0):
    return ImageRGB(np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8))


def test_identity_crop():
    img = _img(5, 7)
    assert crop(img, AbsBox(0, 0, 7, 5)) == img


def test_central_crop():
    img = _img(4, 4)
    assert np.array_equal(crop(img, AbsBox(1, 1, 3, 3)).pixels, img.pixels[1:3, 1:3])


def test_crop_fractional_edges_expand():
    img = _img(10, 10)
    c = crop(img, AbsBox(1.2, 2.7, 3.1, 4.0))
    assert np.array_equal(c.pixels, img.pixels[2:4, 1:4])


def test_crop_outside_raises():
    with pytest.raises(EmptyRegionError):
        crop(_img(4, 4), AbsBox(10, 10, 12, 12))


def test_crop_per_pixel_oracle():
    rng = np.random.default_rng(11)
    img = _img(40, 50, seed=3)
    for _ in range(100):
        x0, x1 = sorted(rng.uniform(0, 60, 2))
        y0, y1 = sorted(rng.uniform(0, 50, 2))
        box = AbsBox(x0, y0, x1, y1)
        c0, r0 = int(np.floor(x0)), int(np.floor(y0))
        if c0 >= 50 or r0 >= 40:
            continue
        out = crop(img, box)
        for r in range(out.height):
            for c in range(out.width):
                assert tuple(out.pixels[r, c]) == tuple(img.pixels[r0 + r, c0 + c])
        assert out.width == min(int(np.ceil(x1)), 50) - c0 or out.width == 1
        assert out.height == min(int(np.ceil(y1)), 40) - r0 or out.height == 1


def test_crop_idempotent():
    img = _img(20, 20)
    first = crop(img, AbsBox(3.5, 2, 11, 17.2))
    assert crop(first, AbsBox(0, 0, first.width, first.height)) == first


def test_mean_rgb_examples():
    uniform = ImageRGB(np.broadcast_to(np.array([60, 20, 25], np.uint8), (3, 4, 3)))
    assert mean_rgb(uniform) == MeanRGB(60.0, 20.0, 25.0)
    two = ImageRGB(np.array([[[0, 0, 0], [255, 255, 255]]], np.uint8))
    assert mean_rgb(two) == MeanRGB(127.5, 127.5, 127.5)


def test_mean_rgb_integer_sum_oracle():
    img = _img(8, 8, seed=5)
    sums = [0, 0, 0]
    for row in img.pixels.tolist():
        for px in row:
            for k in range(3):
                sums[k] += px[k]
    assert mean_rgb(img).as_tuple() == tuple(s / 64 for s in sums)


@settings(max_examples=50, deadline=None)
@given(images)
def test_mean_within_channel_extremes(px):
    m = mean_rgb(ImageRGB(px)).as_tuple()
    for k in range(3):
        assert px[..., k].min() <= m[k] <= px[..., k].max()


def test_image_is_immutable():
    img = _img(2, 2)
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1
