from pathlib import Path

import pytest

from tests.utils.click_invoker import invoke
from tests.utils.run_configs import COARSE_CONFIG, read_report, write_config


def test_constants_for_listed_exponents(tmp_path: Path) -> None:
    config = write_config(tmp_path, constants={**COARSE_CONFIG["constants"], "q": [2.0, 3.0]})

    result = invoke(["constants", str(config)])

    assert result.exit_code == 0
    assert "c not defined" in result.output
    constants = read_report(tmp_path / "reports" / "constants.json")["constants"]
    assert constants["c"] is None
    assert sorted(constants["c_q"]) == ["2", "3"]
    # ||1||_2 / ||1|| = 1 with a = 1 on the unit interval
    assert constants["c_q"]["2"]["value"] >= 1.0 - 1e-12


def test_constants_include_certificate_exponents(tmp_path: Path) -> None:
    config = write_config(
        tmp_path,
        nonlinearity={"kind": "example31", "q": 4.0},
        certificate={"kind": "example31"},
    )

    result = invoke(["constants", str(config)])

    assert result.exit_code == 0
    assert sorted(read_report(tmp_path / "reports" / "constants.json")["constants"]["c_q"]) == ["1", "4"]


def test_sup_constant_in_case_one(tmp_path: Path) -> None:
    config = write_config(tmp_path, params={"s": 0.8, "p": 2.0})

    result = invoke(["constants", str(config)])

    assert result.exit_code == 0
    constants = read_report(tmp_path / "reports" / "constants.json")["constants"]
    # c^p ||a||_1 >= 1
    assert constants["c"]["value"] ** 2 >= 1.0 - 1e-12
    assert constants["c"]["converged"]


def test_constants_reject_supercritical_exponent(tmp_path: Path) -> None:
    config = write_config(
        tmp_path, params={"s": 0.25, "p": 2.0}, constants={**COARSE_CONFIG["constants"], "q": [4.0]}
    )

    result = invoke(["constants", str(config)])

    assert result.exit_code == 1
    assert "critical exponent" in result.output


@pytest.mark.parametrize("command", ["certify", "solve"])
def test_commands_need_nonlinearity(tmp_path: Path, command: str) -> None:
    config = write_config(tmp_path, certificate={"kind": "example31"})

    result = invoke([command, str(config)])

    assert result.exit_code == 1
    assert "needs a [nonlinearity] section" in result.output


def test_constants_are_reproducible(tmp_path: Path) -> None:
    config = write_config(tmp_path, constants={**COARSE_CONFIG["constants"], "q": [3.0]})
    report = tmp_path / "reports" / "constants.json"

    first = invoke(["constants", str(config)])
    first_bytes = report.read_bytes()
    second = invoke(["constants", str(config)])

    assert first.exit_code == 0
    assert second.exit_code == 0
    assert report.read_bytes() == first_bytes
