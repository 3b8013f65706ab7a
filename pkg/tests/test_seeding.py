import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from imaging.models import BinaryMask
from services.fixtures import ten_squares
from services.seeding import (
    SeedSpec,
    check_seed_rules,
    grid_counts,
    make_seed_image,
)
from utils.errors import ParameterError


def test_scalar_seed_values_on_small_grid():
    seed = make_seed_image(SeedSpec(n1=2, n2=2, d=1, l=1, p=1), width=3, height=3)

    channel = seed.channels.data[0]
    assert channel[0, 0] == pytest.approx(63.75)
    assert channel[0, 2] == pytest.approx(127.5)
    assert channel[2, 0] == pytest.approx(191.25)
    assert channel[2, 2] == pytest.approx(255.0)
    assert channel[1, :].tolist() == [0.0, 0.0, 0.0]
    assert seed.seeded.count == 4


def test_single_seed_is_255():
    seed = make_seed_image(SeedSpec(n1=1, n2=1, d=2, l=0), width=6, height=6)

    assert seed.channels.data[0].max() == 255.0
    assert seed.seeded.data[2:4, 2:4].all()


def test_vertical_channel_follows_formula():
    spec = SeedSpec(n1=2, n2=3, d=1, l=1, p=2)
    seed = make_seed_image(spec, width=5, height=3)

    step = 255.0 / 6
    ch2 = seed.channels.data[1]
    # v = (255/M)(n1·n2 − i·n2 + j), i и j с единицы
    assert ch2[0, 0] == pytest.approx(step * (6 - 3 + 1))
    assert ch2[2, 0] == pytest.approx(step * 1)
    assert ch2[0, 4] == pytest.approx(step * 6)


def test_random_channels_are_deterministic():
    spec = SeedSpec(n1=3, n2=4, d=2, l=2, p=4, rng_seed=11)

    a = make_seed_image(spec, width=20, height=16)
    b = make_seed_image(spec, width=20, height=16)

    assert np.array_equal(a.channels.data, b.channels.data)


def test_random_channels_change_with_rng_seed():
    a = make_seed_image(SeedSpec(n1=4, n2=4, d=1, l=1, p=4, rng_seed=1), 7, 7)
    b = make_seed_image(SeedSpec(n1=4, n2=4, d=1, l=1, p=4, rng_seed=2), 7, 7)

    assert not np.array_equal(a.channels.data[2:], b.channels.data[2:])


def test_seeds_must_fit():
    with pytest.raises(ParameterError):
        make_seed_image(SeedSpec(n1=3, n2=3, d=2, l=2), width=8, height=8)


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        SeedSpec(n1=0, n2=1)


@hsettings(max_examples=40, deadline=None)
@given(
    n1=st.integers(1, 5),
    n2=st.integers(1, 5),
    d=st.integers(1, 3),
    l=st.integers(0, 3),
    p=st.integers(1, 5),
    rng_seed=st.integers(0, 1000),
)
def test_seed_image_properties(n1, n2, d, l, p, rng_seed):
    spec = SeedSpec(n1=n1, n2=n2, d=d, l=l, p=p, rng_seed=rng_seed)
    height = n1 * d + (n1 - 1) * l + 3
    width = n2 * d + (n2 - 1) * l + 2
    seed = make_seed_image(spec, width=width, height=height)

    m = n1 * n2
    inside = seed.seeded.data
    for c in range(p):
        channel = seed.channels.data[c]
        assert np.all(channel[~inside] == 0.0)
        values = np.unique(channel[inside])
        assert values.size == m
        assert values.min() > 0.0 and values.max() <= 255.0
        assert np.allclose(np.sort(values), np.sort(seed.seed_values))

    # канал 1 строго растёт в порядке развёртки квадратов
    raster = [seed.channels.data[0][top, left] for top, left in seed.squares]
    assert all(a < b for a, b in zip(raster, raster[1:]))

    # внутри квадрата значение постоянно
    for top, left in seed.squares:
        block = seed.channels.data[:, top:top + d, left:left + d]
        assert np.all(block == block[:, :1, :1])


def test_grid_counts_fill_field():
    assert grid_counts(2, 6, width=127, height=126) == (16, 16)
    assert grid_counts(2, 38, width=127, height=126) == (4, 4)


def test_dense_seeds_cover_ten_squares():
    mask = BinaryMask(data=ten_squares().data > 127)
    spec = SeedSpec(n1=16, n2=16, d=2, l=6)

    report = check_seed_rules(spec, mask)

    assert report.components == 10
    assert report.ok


def test_sparse_seeds_miss_objects():
    mask = BinaryMask(data=ten_squares().data > 127)
    spec = SeedSpec(n1=4, n2=4, d=2, l=38)

    report = check_seed_rules(spec, mask)

    assert len(report.uncovered()) == 9
    assert not report.ok


def test_seed_spanning_two_components():
    mask = np.zeros((6, 6), dtype=bool)
    mask[:, :3] = True
    mask[:, 4:] = True
    mask[:, 3] = False
    spec = SeedSpec(n1=1, n2=1, d=4, l=0)

    report = check_seed_rules(spec, BinaryMask(data=mask))

    assert any(v.rule == 2 for v in report.violations)


def test_empty_mask_gives_empty_report():
    report = check_seed_rules(SeedSpec(n1=1, n2=1, d=1), BinaryMask(data=np.zeros((4, 4), dtype=bool)))

    assert report.ok and report.components == 0
