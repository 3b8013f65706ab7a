
import numpy as np
import pytest

from imaging.models import BinaryMask, IndexField, ScalarField
from services.parameter_space import (
    DEFAULT_EPS,
    DEFAULT_MIN_PTS,
    DEFAULT_SIGMAS,
    count_map,
    sweep_multi,
    sweep_multi_async,
    sweep_scalar,
)
from utils.errors import ParameterError


def _three_plateaus():
    data = np.zeros((20, 60))
    data[:, :20], data[:, 20:40], data[:, 40:] = 60.0, 130.0, 200.0
    return ScalarField(data=data), BinaryMask(data=np.ones((20, 60), dtype=bool))


def _three_blobs():
    data = np.zeros((4, 12, 12))
    values = [(30, 200, 90, 10), (120, 40, 200, 160), (220, 120, 20, 80)]
    for k, vector in enumerate(values):
        for c, v in enumerate(vector):
            data[c, :, 4 * k:4 * k + 4] = v
    return IndexField(data=data), BinaryMask(data=np.ones((12, 12), dtype=bool))


def test_default_ranges():
    assert DEFAULT_SIGMAS[0] == 0.05 and DEFAULT_SIGMAS[-1] == 1.2
    assert DEFAULT_EPS[0] == 0.5 and DEFAULT_EPS[-1] == 1.8
    assert DEFAULT_MIN_PTS == list(range(2, 26))


def test_scalar_sweep_stable_over_sigma():
    U, mask = _three_plateaus()

    rows = sweep_scalar(U, mask)

    assert len(rows) == len(DEFAULT_SIGMAS)
    assert {r["count"] for r in rows} == {3}


def test_multi_sweep_grid():
    U, mask = _three_blobs()

    rows = sweep_multi(U, mask, eps_values=[0.5, 1.1], min_pts_values=[2, 15, 60])

    assert [(r["minpts"], r["eps"]) for r in rows] == [(2, 0.5), (2, 1.1), (15, 0.5), (15, 1.1), (60, 0.5), (60, 1.1)]
    assert [r["count"] for r in rows] == [3, 3, 3, 3, 0, 0]


async def test_multi_sweep_async():
    U, mask = _three_blobs()

    rows = await sweep_multi_async(U, mask, eps_values=[1.1], min_pts_values=[48, 49])

    assert [r["count"] for r in rows] == [3, 0]


def test_count_map():
    rows = [
        {"minpts": 2, "eps": 0.5, "count": 4},
        {"minpts": 2, "eps": 1.0, "count": 3},
        {"minpts": 5, "eps": 1.0, "count": 2},
    ]

    table = count_map(rows, "minpts", "eps")

    assert table.tolist() == [[4, 3], [-1, 2]]


def test_empty_grids_rejected():
    U, mask = _three_plateaus()
    V, vmask = _three_blobs()

    with pytest.raises(ParameterError):
        sweep_scalar(U, mask, sigmas=[])
    with pytest.raises(ParameterError):
        sweep_multi(V, vmask, eps_values=[], min_pts_values=[2])
