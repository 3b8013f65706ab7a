import io

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from PIL import Image

from imaging.codec import load_image, save_field
from imaging.models import LabelImage, RgbImage, ScalarField
from imaging.transforms import (
    add_border_outline,
    downsample,
    equalize_histogram,
    to_grayscale,
)
from utils.errors import ImageFormatError, ImageIOError, ParameterError


def test_load_pgm_replicates_gray(tmp_path):
    path = tmp_path / "gray.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 85, 170, 255]))

    img = load_image(path)

    assert img.data.shape == (2, 2, 3)
    for c in range(3):
        assert img.data[:, :, c].ravel().tolist() == [0, 85, 170, 255]


def test_load_ppm_identity(tmp_path):
    path = tmp_path / "red.ppm"
    path.write_bytes(b"P6\n1 1\n255\n" + bytes([255, 0, 0]))

    img = load_image(path)

    assert img.data[0, 0].tolist() == [255, 0, 0]


def test_truncated_png_is_format_error(tmp_path):
    buffer = io.BytesIO()
    Image.fromarray(np.random.default_rng(0).integers(0, 255, (32, 32), dtype=np.uint8)).save(buffer, format="PNG")
    path = tmp_path / "broken.png"
    path.write_bytes(buffer.getvalue()[:60])

    with pytest.raises(ImageFormatError):
        load_image(path)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(ImageIOError):
        load_image(tmp_path / "nope.pgm")


def test_unsupported_format(tmp_path):
    path = tmp_path / "img.bmp"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path, format="BMP")

    with pytest.raises(ImageFormatError):
        load_image(path)


@pytest.mark.parametrize(
    "pixel, expected",
    [((255, 255, 255), 255.0), ((0, 0, 0), 0.0), ((255, 0, 0), 76.245)],
)
def test_to_grayscale(pixel, expected):
    img = RgbImage(data=np.array([[pixel]], dtype=np.uint8))

    assert to_grayscale(img).data[0, 0] == pytest.approx(expected, abs=1e-9)


def test_downsample_constant_field():
    field = ScalarField(data=np.full((4, 4), 7.0))

    with pytest.raises(ParameterError):
        downsample(field, 0.5)  # 2×2 < 8×8

    big = ScalarField(data=np.full((16, 16), 7.0))
    small = downsample(big, 0.5)
    assert small.shape == (8, 8)
    assert np.all(small.data == 7.0)


def test_downsample_large_frame_size():
    field = ScalarField(data=np.zeros((1097, 1000)))

    small = downsample(field, 0.14)

    assert (small.width, small.height) == (140, 154)


def test_downsample_identity_and_range():
    field = ScalarField(data=np.arange(100.0).reshape(10, 10))

    assert downsample(field, 1.0) is field
    with pytest.raises(ParameterError):
        downsample(field, 0.0)
    with pytest.raises(ParameterError):
        downsample(field, 1.5)


def test_downsample_box_average():
    data = np.zeros((16, 16))
    data[:, 8:] = 10.0

    small = downsample(ScalarField(data=data), 0.5)

    assert np.allclose(small.data[:, :4], 0.0)
    assert np.allclose(small.data[:, 4:], 10.0)


@pytest.mark.parametrize("size, width", [(5, 1), (8, 2)])
def test_border_outline(size, width):
    g = add_border_outline(ScalarField(data=np.ones((size, size))), width)

    inner = g.data[width:-width, width:-width]
    assert np.all(inner == 1.0)
    assert g.data.sum() == inner.size


def test_border_outline_on_zeros_and_range():
    zeros = ScalarField(data=np.zeros((5, 5)))
    assert np.all(add_border_outline(zeros, 1).data == 0.0)

    with pytest.raises(ParameterError):
        add_border_outline(zeros, 0)
    with pytest.raises(ParameterError):
        add_border_outline(zeros, 3)


@hsettings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=7, max_value=15),
    st.integers(min_value=7, max_value=15),
)
def test_border_outline_keeps_interior(width, height, cols):
    data = np.random.default_rng(height * cols).random((height, cols))
    g = add_border_outline(ScalarField(data=data), width)

    assert np.array_equal(g.data[width:-width, width:-width], data[width:-width, width:-width])


def test_save_load_round_trip(tmp_path):
    data = np.array([[0, 10, 20], [30, 128, 200], [250, 254, 255]], dtype=float)
    path = tmp_path / "f.pgm"

    save_field(ScalarField(data=data), path)

    assert np.array_equal(load_image(path).data[:, :, 0], data.astype(np.uint8))


def test_save_clamps(tmp_path):
    path = tmp_path / "clamp.pgm"

    save_field(ScalarField(data=np.array([[300.0, -4.0, 99.6]])), path)

    assert load_image(path).data[0, :, 0].tolist() == [255, 0, 100]


def test_save_labels_as_colors(tmp_path):
    labels = LabelImage(data=np.array([[-1, 0, 1], [2, 3, 3]]))
    path = tmp_path / "labels.ppm"

    save_field(labels, path)
    rgb = load_image(path).data

    colors = {tuple(rgb[i, j]) for i in range(2) for j in range(3)}
    assert len(colors) == 5
    assert tuple(rgb[0, 0]) == (0, 0, 0)


def test_save_to_missing_dir(tmp_path):
    with pytest.raises(ImageIOError):
        save_field(ScalarField(data=np.zeros((2, 2))), tmp_path / "no" / "f.pgm")


def test_field_rejects_nan():
    with pytest.raises(ValueError):
        ScalarField(data=np.array([[np.nan]]))


def test_equalize_histogram_range():
    data = np.tile(np.arange(16.0), (4, 1))

    eq = equalize_histogram(ScalarField(data=data))

    assert eq.data.min() >= 0.0 and eq.data.max() <= 255.0
    assert np.all(np.diff(eq.data[0]) >= 0)
