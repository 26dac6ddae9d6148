import csv
import json

import numpy as np
import pytest

from discflow.cli import EXIT_OK, EXIT_SUITE_FAILED, EXIT_USAGE, main


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


@pytest.fixture(scope="module")
def ode_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("ode")
    codes = [main(["ode", "--out", str(root / name)]) for name in ("a", "b")]
    return codes, root


def test_ode_default_scenario(ode_runs):
    codes, root = ode_runs
    assert codes == [EXIT_OK, EXIT_OK]
    header, data = _read(root / "a" / "trajectories.csv")
    assert len(header) == 10 and header[0] == "t"
    assert header[1] == "blue_x0=-1"
    np.testing.assert_allclose(data[0, 1:], np.tile([-1.0, -0.5, 0.0], 3))
    report = json.loads((root / "a" / "report.json").read_text())
    assert report["passed"] and len(report["cases"]) == 3
    with open(root / "a" / "bounds.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["case", "x0", "t", "fd_ratio", "lower", "upper"]
    # difference quotients attain the bound 3 where the speed triples; allow rounding
    for _, _, _, q, lo, hi in rows[1:]:
        assert float(lo) * (1 - 1e-6) <= float(q) <= float(hi) * (1 + 1e-6)


def test_ode_output_is_byte_identical(ode_runs):
    _, root = ode_runs
    for name in ("trajectories.csv", "bounds.csv", "report.json"):
        assert (root / "a" / name).read_bytes() == (root / "b" / name).read_bytes()


def test_ode_zero_field_keeps_trajectories_constant(tmp_path):
    sc = {
        "name": "still",
        "kind": "ode",
        "v": {"kind": "sgn_sin"},
        "fields": [{"name": "zero"}],
        "x0": [-0.7, 0.2],
        "T": 1.0,
        "n_out": 20,
    }
    path = tmp_path / "still.json"
    path.write_text(json.dumps(sc))
    assert main(["ode", "--scenario", str(path), "--out", str(tmp_path / "out")]) == EXIT_OK
    header, data = _read(tmp_path / "out" / "trajectories.csv")
    assert header == ["t", "zero_x0=-0.7", "zero_x0=0.2"]
    np.testing.assert_array_equal(data[:, 1:], np.tile([-0.7, 0.2], (data.shape[0], 1)))


def test_pde_small_grid(tmp_path):
    out = tmp_path / "pde"
    code = main(["pde", "--ny", "200", "--nt", "20", "--times", "0", "0.5", "--out", str(out)])
    assert code == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["audit.csv", "density_t0.5.csv", "density_t0.csv", "report.json"]
    header, audit = _read(out / "audit.csv")
    assert header == ["t", "max", "mass", "tv"]
    assert audit.shape == (21, 4)
    np.testing.assert_allclose(audit[:, 2], 0.2, rtol=1e-6)
    header, snap = _read(out / "density_t0.csv")
    assert header == ["x", "q"]
    assert snap[:, 1].max() == pytest.approx(0.5)


def test_pde_rejects_time_off_the_grid(tmp_path, capsys):
    code = main(["pde", "--ny", "50", "--nt", "4", "--times", "0.3", "--out", str(tmp_path)])
    assert code == EXIT_USAGE
    assert "stored level" in capsys.readouterr().err


def test_verify_suite_passes(tmp_path):
    assert main(["verify", "--suite", "filippov", "--out", str(tmp_path)]) == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"]


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--suite", "nonsense"],
        ["ode", "--tol", "1"],
        ["ode", "--tol", "abc"],
        ["pde", "--ny", "0"],
        ["pde", "--scenario", "fig1"],
        ["ode", "--scenario", "fig2_left"],
        ["ode", "--scenario", "/nonexistent/file.json"],
        [],
    ],
)
def test_usage_errors_exit_64(argv, tmp_path):
    try:
        code = main(argv + ["--out", str(tmp_path)] if argv else argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_USAGE


def test_exit_codes_are_distinct():
    assert len({EXIT_OK, EXIT_SUITE_FAILED, EXIT_USAGE}) == 3
