
import numpy as np
import pytest

from imaging.codec import load_image
from main import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, build_parser, main
from services.fixtures import FIXTURES, make_fixture
from services.reporting import read_groups, read_lambda_csv, read_report


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_gen_fixture_writes_pgm(name, tmp_path):
    out = tmp_path / "fixtures" / f"{name}.pgm"

    assert main(["gen-fixture", name, str(out)]) == EXIT_OK

    img = load_image(out)
    expected = make_fixture(name).data
    assert img.data.shape[:2] == expected.shape
    assert np.array_equal(img.data[:, :, 0], expected.astype(np.uint8))


def test_unknown_fixture_rejected_by_parser(tmp_path):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["gen-fixture", "circles", str(tmp_path / "x.pgm")])


def test_flags_become_overrides():
    args = build_parser().parse_args(["count", "img.pgm", "--eps", "1.2", "--max-iters", "9"])

    assert args.cfg_eps == "1.2" and args.cfg_max_iters == "9"
    assert args.cfg_sigma is None


def test_count_end_to_end(tmp_path):
    image = tmp_path / "cells.pgm"
    out = tmp_path / "out"
    assert main(["gen-fixture", "three-cells", str(image)]) == EXIT_OK
    config = tmp_path / "run.cfg"
    config.write_text("counter=scalar\nprominence=0.25\nmax_iters=5\n", encoding="utf-8")

    code = main(["count", str(image), "--config", str(config), "--max-iters", "200", "--r-stop", "1e-6", "--out", str(out)])

    assert code == EXIT_OK
    values = read_report(out / "report.txt")
    assert values["counter"] == "scalar"
    assert values["iterations"] != "5"


def test_config_error_exit_code(tmp_path):
    image = tmp_path / "cells.pgm"
    main(["gen-fixture", "three-cells", str(image)])

    assert main(["count", str(image), "--counter", "multi", "--p", "1", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_file_exit_code(tmp_path):
    assert main(["count", "img.pgm", "--config", str(tmp_path / "none.cfg")]) == EXIT_CONFIG


def test_stage_error_exit_code(tmp_path):
    assert main(["count", str(tmp_path / "missing.pgm"), "--out", str(tmp_path)]) == EXIT_STAGE


def test_group_command(tmp_path):
    sizes = tmp_path / "sizes.csv"
    sizes.write_text("size\n" + "\n".join(["56"] * 10 + ["157"] * 6 + ["1199"]) + "\n", encoding="utf-8")

    code = main(["group", "--sizes", str(sizes), "--lambda-grid", "logspace:1e1,1e7,25", "--out", str(tmp_path)])

    assert code == EXIT_OK
    curve = read_lambda_csv(tmp_path / "lambda.csv")
    assert len(curve) == 25
    ks = [row["k"] for row in curve]
    assert ks[0] == 3 and ks[-1] == 1
    assert {t.k for t in read_groups(tmp_path / "groups.txt")} == set(ks)


def test_group_bad_grid_exit_code(tmp_path):
    sizes = tmp_path / "sizes.csv"
    sizes.write_text("10\n20\n", encoding="utf-8")

    assert main(["group", "--sizes", str(sizes), "--lambda-grid", "5,1"]) == EXIT_CONFIG
