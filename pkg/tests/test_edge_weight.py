import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from imaging.models import BinaryMask, RgbImage, ScalarField
from services.edge_weight import (
    EdgeWeight,
    channel_subtract,
    compose_weight,
    edge_function,
    gaussian_kernel,
    gaussian_smooth,
    gradient_magnitude,
    morphology,
    threshold_mask,
)
from services.recipe import evaluate_mask, evaluate_weight, parse_recipe
from utils.errors import DegenerateWeightError, ParameterError


def _rgb(gray: np.ndarray) -> RgbImage:
    return RgbImage(data=np.repeat(gray.astype(np.uint8)[:, :, None], 3, axis=2))


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.5])
def test_smooth_preserves_constant(sigma):
    smoothed = gaussian_smooth(ScalarField(data=np.full((9, 11), 42.0)), sigma)

    assert np.allclose(smoothed.data, 42.0, atol=1e-12)


def test_smooth_impulse_matches_kernel():
    data = np.zeros((15, 15))
    data[7, 7] = 1.0

    smoothed = gaussian_smooth(ScalarField(data=data), 1.0)

    kernel = gaussian_kernel(1.0)
    assert smoothed.data[7, 7] == pytest.approx(kernel[3] ** 2)
    assert smoothed.data.sum() == pytest.approx(1.0)


def test_smooth_tiny_sigma_is_identity():
    data = np.random.default_rng(3).random((6, 6))

    smoothed = gaussian_smooth(ScalarField(data=data), 0.05)

    assert np.allclose(smoothed.data, data, atol=1e-12)


@pytest.mark.parametrize("kind", ["exp", "rational"])
def test_edge_function_constant(kind):
    weight = edge_function(ScalarField(data=np.full((5, 5), 9.0)), kind, tau=10, sigma=1)

    assert np.all(weight.g.data == 1.0)
    assert weight.G0 == 1.0


def test_edge_function_step_rational():
    h, tau = 4.0, 10.0
    data = np.zeros((5, 6))
    data[:, 3:] = h

    weight = edge_function(ScalarField(data=data), "rational", tau=tau, sigma=0)

    expected = 1.0 / (1.0 + tau * h ** 2 / 4.0)
    assert weight.g.data[2, 2] == pytest.approx(expected)
    assert weight.g.data[2, 3] == pytest.approx(expected)
    assert weight.g.data[2, 0] == 1.0


def test_binarized_edge_blocks_boundaries():
    data = np.zeros((20, 20))
    data[4:16, 4:16] = 200.0

    weight = edge_function(ScalarField(data=data), "rational", tau=10, sigma=1)
    blocking = threshold_mask(weight, "gt", 0.7)

    assert blocking.data[0, 0] and blocking.data[10, 10]
    assert not blocking.data[10, 4]


@hsettings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["exp", "rational"]))
def test_edge_function_range_and_monotone(seed, kind):
    data = np.random.default_rng(seed).random((8, 8)) * 255
    field = ScalarField(data=data)

    weight = edge_function(field, kind, tau=0.01, sigma=0)

    g = weight.g.data.ravel()
    assert np.all((g >= 0) & (g <= 1))
    t = gradient_magnitude(field).ravel()
    order = np.argsort(t, kind="stable")
    assert np.all(np.diff(g[order]) <= 1e-15)


def test_threshold_examples():
    field = ScalarField(data=np.array([[100.0, 130.0, 200.0]]))

    assert threshold_mask(field, "lt", 130).data.tolist() == [[True, False, False]]
    assert threshold_mask(ScalarField(data=np.full((2, 2), 255.0)), "gt", 205).data.all()
    assert not threshold_mask(field, "lt", -1e9).data.any()


def test_dilate_single_pixel():
    mask = np.zeros((5, 5), dtype=bool)
    mask[2, 2] = True

    dilated = morphology(BinaryMask(data=mask), "dilate", 1)

    assert dilated.count == 5
    assert dilated.data[1, 2] and dilated.data[2, 1] and not dilated.data[1, 1]


def test_erode_full_mask_drops_border():
    eroded = morphology(BinaryMask(data=np.ones((5, 5), dtype=bool)), "erode", 1)

    assert eroded.data[1:4, 1:4].all()
    assert eroded.count == 9


def test_closing_keeps_square():
    mask = np.zeros((7, 7), dtype=bool)
    mask[1:6, 1:6] = True
    square = BinaryMask(data=mask)

    closed = morphology(morphology(square, "dilate", 1), "erode", 1)

    assert np.array_equal(closed.data, mask)


def test_morphology_radius_check():
    with pytest.raises(ParameterError):
        morphology(BinaryMask(data=np.ones((3, 3), dtype=bool)), "dilate", 0)


def test_channel_subtract():
    img = RgbImage(data=np.array([[[200, 50, 0], [10, 240, 0]]], dtype=np.uint8))

    diff = channel_subtract(img, 0, 1)

    assert diff.data.tolist() == [[150.0, 0.0]]
    with pytest.raises(ParameterError):
        channel_subtract(img, 0, 3)


def test_compose_weight_product_and_order():
    g = EdgeWeight.from_array(np.array([[0.5, 1.0], [0.25, 0.0]]))
    mask = BinaryMask(data=np.array([[True, False], [True, True]]))

    a = compose_weight([g, mask])
    b = compose_weight([mask, g])

    assert np.array_equal(a.g.data, b.g.data)
    assert a.g.data.tolist() == [[0.5, 0.0], [0.25, 0.0]]
    assert a.G0 == 0.5
    assert np.array_equal(compose_weight([mask, mask]).g.data, compose_weight([mask]).g.data)


def test_compose_weight_degenerate():
    with pytest.raises(DegenerateWeightError):
        compose_weight([BinaryMask(data=np.zeros((3, 3), dtype=bool))])


def test_recipe_parsing():
    parts = parse_recipe("edge:rational,10 | thresh:lt,130; morph:dilate,1")

    assert [[s.name for s in part] for part in parts] == [["edge"], ["thresh", "morph"]]
    assert parts[1][0].args == ("lt", "130")


def test_recipe_mask_times_edge():
    gray = np.zeros((10, 10))
    gray[2:8, 2:8] = 255
    img = _rgb(gray)

    weight = evaluate_weight(img, "edge:rational,10,1 | thresh:gt,127")
    mask = evaluate_mask(img, "thresh:gt,127")

    assert weight.g.data[0, 0] == 0.0
    assert mask.count == 36
    assert weight.G0 <= 1.0


def test_recipe_fruit_style():
    data = np.zeros((4, 4, 3), dtype=np.uint8)
    data[:2, :, 0] = 220
    data[:2, :, 1] = 40
    data[2:, :, 1] = 200

    mask = evaluate_mask(RgbImage(data=data), "chansub:r,g; thresh:gt,80")

    assert mask.data[:2].all() and not mask.data[2:].any()


@pytest.mark.parametrize(
    "recipe", ["smooth:1", "bogus:1", "thresh:gt", "edge:cubic,1", "morph:dilate,1"]
)
def test_recipe_errors(recipe):
    img = _rgb(np.full((6, 6), 200.0))

    with pytest.raises(ParameterError):
        evaluate_weight(img, recipe)


def test_maskfile_step(tmp_path):
    from imaging.codec import save_field

    mask = np.zeros((6, 6))
    mask[1:4, 1:4] = 255
    save_field(ScalarField(data=mask), tmp_path / "m.pgm")

    result = evaluate_mask(_rgb(np.zeros((6, 6))), "maskfile:m.pgm", base_dir=tmp_path)

    assert result.count == 9
