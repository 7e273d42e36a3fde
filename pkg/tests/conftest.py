import os

import pytest
from approvaltests import Reporter, reporters, set_default_reporter
from approvaltests.reporters.generic_diff_reporter_config import create_config
from approvaltests.reporters.generic_diff_reporter_factory import GenericDiffReporter
from fracneumann.core.kernel import QuadratureTable, assemble_table
from fracneumann.core.mesh import Box, FracParams, Mesh, build_mesh
from fracneumann.core.model import Coefficient


@pytest.fixture()
def unit_interval() -> Box:
    return Box.interval(0.0, 1.0)


@pytest.fixture()
def case2_params() -> FracParams:
    """N = sp = 1, p = 2: the reference setting of the plateau example."""
    return FracParams(s=0.5, p=2.0)


@pytest.fixture()
def case1_params() -> FracParams:
    return FracParams(s=0.8, p=2.0)


@pytest.fixture()
def coarse_mesh(unit_interval: Box) -> Mesh:
    return build_mesh(unit_interval, 4, 2.0)


@pytest.fixture()
def coarse_table(coarse_mesh: Mesh, case2_params: FracParams) -> QuadratureTable:
    return assemble_table(coarse_mesh, case2_params, order=4, depth=4)


@pytest.fixture()
def unit_coefficient(coarse_mesh: Mesh) -> Coefficient:
    return Coefficient.constant(coarse_mesh, 1.0)


if os.getenv("CI"):
    set_default_reporter(reporters.PythonNativeReporter())
else:
    default_reporters: list[Reporter] = (
        [
            GenericDiffReporter(
                create_config(
                    [
                        os.getenv("APPROVAL_REPORTER"),
                        os.getenv("APPROVAL_REPORTER_PATH"),
                        os.getenv("APPROVAL_REPORTER_ARGS", "").split(),
                    ]
                )
            )
        ]
        if os.getenv("APPROVAL_REPORTER")
        else []
    )
    default_reporters += [
        GenericDiffReporter(create_config(["kdiff3", "/usr/bin/kdiff3"])),
        GenericDiffReporter(create_config(["VSCodeInsiders", "code-insiders", ["-d"]])),
        reporters.ReportWithVSCode(),
        reporters.PythonNativeReporter(),
    ]
    set_default_reporter(reporters.FirstWorkingReporter(*default_reporters))
