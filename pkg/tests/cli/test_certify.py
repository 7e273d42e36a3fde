from pathlib import Path

import pytest

from tests.utils.click_invoker import invoke
from tests.utils.run_configs import UNIT_SOURCE, read_report, write_config


def test_certify_example31_passes(tmp_path: Path) -> None:
    config = write_config(tmp_path, nonlinearity={"kind": "example31", "q": 4.0}, certificate={"kind": "example31"})

    result = invoke(["certify", str(config)])

    assert result.exit_code == 0
    assert "Certified lambda interval" in result.output
    report = read_report(tmp_path / "reports" / "certificate.json")
    certificate = report["certificate"]
    assert report["command"] == "certify"
    assert certificate["passed"]
    assert certificate["case"] == "CaseII"
    assert 0.0 < certificate["interval"]["lower"] < certificate["interval"]["upper"]
    assert sorted(report["embedding_constants"]["c_q"]) == ["1", "4"]


def test_certify_failing_hypothesis_exits_2(tmp_path: Path) -> None:
    # h = 1 gives H(delta) / delta^2 = 1 / delta, far below a1 L1 / eps
    config = write_config(
        tmp_path,
        nonlinearity=UNIT_SOURCE,
        certificate={"kind": "case2", "epsilon": 1.0, "delta": 10.0, "t": 1.0},
    )

    result = invoke(["certify", str(config)])

    assert result.exit_code == 2
    assert "Hypotheses failed" in result.output
    certificate = read_report(tmp_path / "reports" / "certificate.json")["certificate"]
    assert not certificate["passed"]
    assert certificate["interval"] is None
    assert not certificate["hypotheses"]["Bh2"]["passed"]
    assert certificate["hypotheses"]["Bh2"]["margin"] < 0


def test_certify_failing_growth_bound_exits_2(tmp_path: Path) -> None:
    # H(xi) = xi reaches 0.5 (1 + |xi|) already at xi = 1
    config = write_config(
        tmp_path,
        nonlinearity=UNIT_SOURCE,
        certificate={"kind": "case2", "epsilon": 1.0, "delta": 10.0, "t": 1.0, "b": 0.5},
    )

    result = invoke(["certify", str(config)])

    assert result.exit_code == 2
    assert "Bh1" in result.output
    certificate = read_report(tmp_path / "reports" / "certificate.json")["certificate"]
    assert not certificate["passed"]
    assert not certificate["hypotheses"]["Bh1"]["passed"]
    assert certificate["hypotheses"]["Bh1"]["margin"] < 0


def test_certify_violated_precondition_exits_1(tmp_path: Path) -> None:
    config = write_config(
        tmp_path,
        nonlinearity=UNIT_SOURCE,
        certificate={"kind": "case2", "epsilon": 1.0, "delta": 1.0, "t": 1.0},
    )

    result = invoke(["certify", str(config)])

    assert result.exit_code == 1
    assert "δ > εκ" in result.output
    assert not (tmp_path / "reports" / "certificate.json").exists()


def test_certify_case1_needs_case_one(tmp_path: Path) -> None:
    config = write_config(
        tmp_path,
        nonlinearity={"kind": "example31", "q": 4.0, "rho": 8.0},
        certificate={"kind": "case1", "gamma": 1.26, "eta": 8.0, "t": 1.5},
    )

    result = invoke(["certify", str(config)])

    assert result.exit_code == 1
    assert "needs N < sp" in result.output


@pytest.mark.slow()
def test_certify_case1(tmp_path: Path) -> None:
    config = write_config(
        tmp_path,
        params={"s": 0.8, "p": 2.0},
        nonlinearity={"kind": "example31", "q": 4.0, "rho": 8.0},
        certificate={"kind": "case1", "gamma": 1.26, "eta": 8.0, "t": 1.5, "t_max": 80.0},
    )

    result = invoke(["certify", str(config)])

    certificate = read_report(tmp_path / "reports" / "certificate.json")["certificate"]
    assert certificate["case"] == "CaseI"
    assert "c" in certificate["constants"]
    assert result.exit_code == (0 if certificate["passed"] else 2)
