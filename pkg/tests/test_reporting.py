
import asyncio

import numpy as np
import pytest

from imaging.codec import load_image
from imaging.models import LabelImage
from services.codi_s import IndexHistogram, smooth_histogram
from services.diffusion import ChannelTrace
from services.reporting import (
    ArtifactWriter,
    format_groups,
    format_report,
    read_clusters_csv,
    read_groups,
    read_histogram_csv,
    read_lambda_csv,
    read_report,
    read_sizes_csv,
    read_sweep_csv,
    read_trace_csv,
)
from services.size_grouping import lambda_sweep, regularized_kmeans
from utils.errors import ImageIOError, ParameterError


def _histogram() -> IndexHistogram:
    bins = np.zeros(256, dtype=np.int64)
    bins[0], bins[40], bins[200] = 7, 30, 12
    return smooth_histogram(IndexHistogram(bins=bins, total=int(bins.sum())), 0.6, 5)


def test_report_format():
    text = format_report({"count": 3, "counts": [3, 3, 2], "counter": "multi"})

    assert text == "# CODI report\ncount = 3\ncounts = 3,3,2\ncounter = multi\n"


async def test_report_roundtrip(tmp_path):
    writer = ArtifactWriter(tmp_path / "out")

    path = await writer.write_report({"count": 3, "final_rn": [repr(0.1 + 0.2)]})

    values = read_report(path)
    assert values == {"count": "3", "final_rn": "0.30000000000000004"}
    assert writer.written == [path]


async def test_histogram_roundtrip(tmp_path):
    h = _histogram()

    path = await ArtifactWriter(tmp_path).write_histogram(h)
    back = read_histogram_csv(path)

    assert np.array_equal(back.bins, h.bins)
    assert np.array_equal(back.smoothed, h.smoothed)


async def test_clusters_and_labels(tmp_path):
    labels = LabelImage(data=np.array([[-1, 0, 1], [2, 2, -1]]))
    writer = ArtifactWriter(tmp_path)

    await writer.write_clusters(labels)
    await writer.write_labels(labels)

    rows = read_clusters_csv(tmp_path / "clusters.csv")
    assert rows.tolist() == [[1, 0, 0], [2, 0, 1], [0, 1, 2], [1, 1, 2]]
    img = load_image(tmp_path / "labels.ppm")
    assert img.data[0, 0].tolist() == [0, 0, 0]
    assert img.data[0, 1].tolist() == [128, 128, 128]
    assert img.data[1, 0].tolist() == img.data[1, 1].tolist()


async def test_trace_roundtrip(tmp_path):
    trace = ChannelTrace(
        energy_initial=10.0,
        energy=[8.0, 7.5],
        rn=[0.2, 1 / 16],
        du=[1.0, 0.5],
        dv=[0.3, 0.1],
        dlam=[0.01, 0.005],
        lyapunov=[2.0, 1.0],
        du_max=[0.4, 0.125],
    )

    path = await ArtifactWriter(tmp_path).write_trace([trace, trace])
    back = read_trace_csv(path)

    assert len(back) == 2
    for key in ("energy_initial", "energy", "rn", "du", "dv", "dlam", "lyapunov", "du_max"):
        assert getattr(back[1], key) == getattr(trace, key)


async def test_trace_columns(tmp_path):
    trace = ChannelTrace(energy_initial=4.0, energy=[2.0], rn=[0.5], du=[1.0], dv=[0.5], dlam=[0.25], lyapunov=[3.0])

    path = await ArtifactWriter(tmp_path).write_trace([trace])

    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "k,channel,E_n,R_n,dU,dV,dLambda,lyapunov,dU_max"
    assert lines[1] == "0,0,4.0,,,,,,"
    assert lines[2] == "1,0,2.0,0.5,1.0,0.5,0.25,3.0,"
    assert read_trace_csv(path)[0].du_max == []


async def test_groups_and_lambda_roundtrip(tmp_path):
    sizes = [10.0, 11.0, 12.0, 50.0, 52.0]
    sweep = lambda_sweep(sizes, [1.0, 10.0, 1e3, 1e5])
    groupings = [regularized_kmeans(sizes, 1.0), regularized_kmeans(sizes, 1e5)]

    await ArtifactWriter(tmp_path).write_groups(groupings, sweep)

    tables = read_groups(tmp_path / "groups.txt")
    assert [t.k for t in tables] == [g.k for g in groupings]
    assert [r.count for r in tables[-1].rows] == [g.count for g in groupings[-1].groups]
    assert tables[0].energy == groupings[0].energy
    curve = read_lambda_csv(tmp_path / "lambda.csv")
    assert [row["k"] for row in curve] == sweep.ks


def test_groups_table_layout():
    text = format_groups([regularized_kmeans([1.0, 3.0], 1e6)])

    lines = text.splitlines()
    assert lines[0].startswith("lambda = 1000000.0  k = 1  energy = ")
    assert lines[1] == "group  centroid  count  low  high"
    assert lines[2] == "1  2.0  2  1.0  3.0"


async def test_sweep_roundtrip(tmp_path):
    rows = [{"minpts": 2, "eps": 0.5, "count": 4}, {"minpts": 3, "eps": 0.5, "count": 3}]

    path = await ArtifactWriter(tmp_path).write_sweep(rows)

    assert read_sweep_csv(path) == [{"minpts": 2.0, "eps": 0.5, "count": 4.0}, {"minpts": 3.0, "eps": 0.5, "count": 3.0}]


async def test_empty_sweep_rejected(tmp_path):
    with pytest.raises(ParameterError):
        await ArtifactWriter(tmp_path).write_sweep([])


async def test_concurrent_writes_to_one_file(tmp_path):
    writer = ArtifactWriter(tmp_path)

    await asyncio.gather(*(writer.write_text("same.txt", f"{i}\n" * 1000) for i in range(8)))

    text = (tmp_path / "same.txt").read_text(encoding="utf-8")
    assert len(set(text.split())) == 1
    assert len(writer.written) == 8


@pytest.mark.parametrize(
    "content, expected",
    [
        ("size\n10\n20.5\n", [10.0, 20.5]),
        ("id,size\n1,10\n2,30\n", [10.0, 30.0]),
        ("5\n6\n", [5.0, 6.0]),
        ("", []),
    ],
)
def test_read_sizes_csv(tmp_path, content, expected):
    path = tmp_path / "sizes.csv"
    path.write_text(content, encoding="utf-8")

    assert read_sizes_csv(path) == expected


def test_read_sizes_csv_errors(tmp_path):
    path = tmp_path / "sizes.csv"
    path.write_text("size\nabc\n", encoding="utf-8")

    with pytest.raises(ParameterError):
        read_sizes_csv(path)
    with pytest.raises(ImageIOError):
        read_sizes_csv(tmp_path / "missing.csv")
