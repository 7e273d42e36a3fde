from pathlib import Path

import pytest

from tests.utils.click_invoker import invoke
from tests.utils.run_configs import read_report, write_config


def test_assemble_from_toml(tmp_path: Path) -> None:
    config = tmp_path / "run.toml"
    config.write_text(
        f"""seed = 3

[params]
s = 0.5
p = 2.0

[mesh]
lower = [0.0]
upper = [1.0]
n = 4
truncation_radius = 2.0

[quadrature]
order = 4
depth = 4

[output]
directory = "{(tmp_path / "reports").as_posix()}"
""",
        encoding="utf-8",
    )

    result = invoke(["assemble", str(config)])

    assert result.exit_code == 0
    assert "Relative kernel tail beyond the box" in result.output
    report = read_report(tmp_path / "reports" / "assemble.json")
    assert report["command"] == "assemble"
    assert report["config"]["seed"] == 3
    assert report["case"] == "CaseII"
    assert report["mesh"]["n"] == 4
    assert report["mesh"]["interior_node_count"] == 5
    assert report["quadrature"]["order"] == 4
    assert report["quadrature"]["near_depth"] == 4
    assert report["checks"]["constant_seminorm"] <= 1e-12
    assert report["checks"]["a_l1"] == pytest.approx(1.0)
    assert not (tmp_path / "reports" / "mesh.csv").exists()


def test_assemble_writes_csv_to_output_dir(tmp_path: Path) -> None:
    config = write_config(tmp_path, output={"directory": str(tmp_path / "unused"), "write_csv": True})
    target = tmp_path / "override"

    result = invoke(["assemble", str(config), "--output-dir", str(target)])

    assert result.exit_code == 0
    assert (target / "assemble.json").exists()
    assert (target / "mesh.csv").exists()
    assert (target / "pairs.csv").exists()
    assert not (tmp_path / "unused").exists()
    assert read_report(target / "assemble.json")["config"]["output"]["directory"] == str(target)


def test_assemble_rerun_from_report(tmp_path: Path) -> None:
    first = invoke(["assemble", str(write_config(tmp_path))])
    report_path = tmp_path / "reports" / "assemble.json"
    again = tmp_path / "again"

    second = invoke(["assemble", str(report_path), "-o", str(again)])

    assert first.exit_code == 0
    assert second.exit_code == 0
    rerun = read_report(again / "assemble.json")
    original = read_report(report_path)
    assert rerun["mesh"] == original["mesh"]
    assert rerun["checks"] == original["checks"]


def test_assemble_invalid_config(tmp_path: Path) -> None:
    config = write_config(tmp_path, mesh={"lower": [0.0], "upper": [1.0], "n": 0})

    result = invoke(["assemble", str(config)])

    assert result.exit_code == 1
    assert "invalid config" in result.output
    assert "mesh.n" in result.output


def test_assemble_missing_seed(tmp_path: Path) -> None:
    config = tmp_path / "run.toml"
    config.write_text('[params]\ns = 0.5\np = 2.0\n\n[mesh]\nlower = [0.0]\nupper = [1.0]\nn = 4\n', encoding="utf-8")

    result = invoke(["assemble", str(config)])

    assert result.exit_code == 1
    assert "seed is required" in result.output


def test_assemble_missing_file(tmp_path: Path) -> None:
    result = invoke(["assemble", str(tmp_path / "missing.toml")])

    assert result.exit_code == 2
    assert "does not exist" in result.output


def test_report_reproduces_itself(tmp_path: Path) -> None:
    invoke(["assemble", str(write_config(tmp_path))])
    report = tmp_path / "reports" / "assemble.json"
    saved = tmp_path / "saved.json"
    saved.write_bytes(report.read_bytes())

    result = invoke(["assemble", str(saved)])

    assert result.exit_code == 0
    assert report.read_bytes() == saved.read_bytes()
