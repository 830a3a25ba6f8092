import csv
import json
import math

import pytest

from polyhdg.cli import CSV_COLUMNS, ConfigError, StudyConfig, main


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def default_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("default")
    assert main(["study", "--out", str(out), "--dump-system"]) == 0
    return out


def test_default_study_reproduces_rates(default_study):
    rows = read_rows(default_study / "convergence.csv")
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert len(rows) == 10
    for k, lo, hi in [(1, 0.9, 1.1), (2, 1.85, 2.1)]:
        rates = [float(r["ecr1"]) for r in rows if int(r["k"]) == k and r["level"] != "1"]
        assert len(rates) == 4
        assert lo <= sum(rates[-3:]) / 3 <= hi


def test_csv_fields_parse(default_study):
    for row in read_rows(default_study / "convergence.csv"):
        assert row["family"] == "hex"
        for key in ("h", "e0", "e1"):
            assert math.isfinite(float(row[key])) and float(row[key]) > 0
        if row["level"] == "1":
            assert row["ecr0"] == "-" and row["ecr1"] == "-"
        else:
            assert math.isfinite(float(row["ecr0"]))


def test_dump_system_written(default_study):
    for k in (1, 2):
        path = default_study / f"system_hex_k{k}.coo"
        header = path.read_text().splitlines()[0].split()
        assert header[0] == "%" and int(header[1]) == int(header[2]) > 0


def test_same_config_gives_identical_csv(tmp_path):
    args = ["study", "--mesh", "voronoi", "--levels", "2", "--degree", "1", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--parallel", "2"]) == 0
    a = (tmp_path / "a" / "convergence.csv").read_bytes()
    b = (tmp_path / "b" / "convergence.csv").read_bytes()
    assert a == b


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mesh": "voronoi", "levels": 3, "degrees": [3]}))
    c = StudyConfig.from_sources(cfg, {"levels": 2})
    assert (c.mesh, c.levels, c.degrees, c.alpha, c.t) == ("voronoi", 2, [3], 1.0, 1.0)


@pytest.mark.parametrize("args", [
    ["study", "--levels", "1"],
    ["study", "--degree", "9"],
    ["study", "--alpha", "0"],
    ["study", "--solution", "nope"],
    ["study", "--mesh", "triangles"],
    ["diagnostics", "--config", "/nonexistent/file.json"],
])
def test_configuration_errors_exit_2(tmp_path, args):
    assert main(args + ["--out", str(tmp_path)]) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"levles": 3}))
    with pytest.raises(ConfigError, match="levles"):
        StudyConfig.from_sources(cfg)
    assert main(["study", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_plot_file(tmp_path):
    pytest.importorskip("matplotlib")
    assert main(["study", "--levels", "2", "--degree", "1", "--plot",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "convergence.png").stat().st_size > 0


def test_diagnostics_pass(tmp_path, capsys):
    assert main(["diagnostics", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "diagnostics.json").read_text())
    assert report["passed"]
    names = {c["name"] for c in report["checks"]}
    assert {"inf-sup k=1", "continuity k=3", "coercivity k=2", "consistency k=1"} <= names
    assert any(n.startswith("scaling") for n in names)
    assert "FAIL" not in capsys.readouterr().out


def test_diagnostics_reject_sabotaged_space(tmp_path, capsys):
    assert main(["diagnostics", "--sabotage-moments", "--out", str(tmp_path)]) == 3
    report = json.loads((tmp_path / "diagnostics.json").read_text())
    failed = {c["name"] for c in report["checks"] if not c["passed"]}
    assert {"consistency k=1", "consistency k=2", "consistency k=3"} <= failed
    assert "FAIL  consistency k=1" in capsys.readouterr().out
