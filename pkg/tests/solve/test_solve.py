import json

import numpy as np
import pytest
from fracneumann.core.energy import ProblemInstance
from fracneumann.core.kernel import QuadratureTable
from fracneumann.core.model import Coefficient, example31, polynomial
from fracneumann.core.solve import (
    DeflationOperator,
    SolveConfig,
    SolveReport,
    deflate_and_search,
    descend,
    start_functions,
    verify_point,
)
from fracneumann.core.space import DiscreteFunction
from scipy.optimize import brentq

PLATEAU = example31(q=4.0, rho=3.0)


@pytest.fixture()
def plateau_instance(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> ProblemInstance:
    return ProblemInstance(coarse_table, unit_coefficient, PLATEAU)


@pytest.mark.parametrize(
    ("overrides", "message"),
    [
        ({"lam": -1.0}, "lam must be nonnegative"),
        ({"tolerance": 0.0}, "must be positive"),
        ({"k_target": 0}, "must be positive"),
        ({"deflation_shift": -1.0}, "deflation shift"),
        ({"deflation_power": 0.0}, "deflation power"),
    ],
)
def test_solve_config_validation(overrides: dict[str, float], message: str) -> None:
    with pytest.raises(ValueError, match=message):
        SolveConfig(**{"lam": 1.0, "seed": 0, **overrides})  # type: ignore[arg-type]


def test_descend_solves_linear_problem(coarse_table: QuadratureTable) -> None:
    # p = 2 and h = 1: the minimizer solves A u = lam * (integrals of the hat functions)
    mesh = coarse_table.mesh
    coefficient = Coefficient.from_callable(mesh, lambda x: 1.0 + x[:, 0])
    instance = ProblemInstance(coarse_table, coefficient, polynomial([1.0], a1=1.0, a2=0.0, q=2.0))
    lam = 0.5
    config = SolveConfig(lam=lam, seed=0, tolerance=1e-7)

    result = descend(instance, lam, DiscreteFunction.zeros(mesh), config)
    expected = instance.operator.solve(lam * instance.operator.mass_vector)

    assert result.converged
    assert result.residual <= 1e-7
    np.testing.assert_allclose(result.values, expected, atol=1e-5)
    assert all(later <= earlier for earlier, later in zip(result.energies, result.energies[1:], strict=False))


def test_zero_lambda_finds_only_zero(plateau_instance: ProblemInstance) -> None:
    config = SolveConfig(lam=0.0, seed=3, starts=4, max_iterations=300, k_target=2)

    report = deflate_and_search(plateau_instance, 0.0, config)

    assert len(report.points) == 1
    assert report.shortfall
    np.testing.assert_allclose(report.points[0].u.values, 0.0, atol=1e-6)
    assert report.failures
    assert report.to_json()["found"] == 1


def test_first_point_is_small_constant(plateau_instance: ProblemInstance) -> None:
    lam = 0.144
    config = SolveConfig(lam=lam, seed=7, starts=6, max_iterations=2000, k_target=3)
    smallest_constant = brentq(lambda c: c - lam * (1.0 + c**3), 0.0, 1.0)

    report = deflate_and_search(plateau_instance, lam, config)
    first = report.points[0]

    assert first.stage == "descent"
    np.testing.assert_allclose(first.u.interior_values, smallest_constant, atol=1e-4)
    for point in report.points:
        assert point.residual <= config.tolerance
    distances = np.array(report.distances)
    np.testing.assert_allclose(distances, distances.T)
    np.testing.assert_allclose(np.diag(distances), 0.0)
    off_diagonal = distances[~np.eye(len(report.points), dtype=bool)]
    assert np.all(off_diagonal >= config.distinctness)


def test_report_payload(plateau_instance: ProblemInstance) -> None:
    config = SolveConfig(lam=0.0, seed=0, starts=1, max_iterations=50, k_target=1)
    payload = deflate_and_search(plateau_instance, 0.0, config).to_json()

    assert payload["found"] == 1
    assert not payload["shortfall"]
    assert payload["distances"] == [[0.0]]
    point = payload["points"][0]
    assert point["stage"] == "descent"
    assert point["start_index"] == 0
    assert len(point["values"]) == plateau_instance.mesh.node_count


def test_same_seed_gives_identical_report(plateau_instance: ProblemInstance) -> None:
    config = SolveConfig(lam=0.144, seed=7, starts=4, max_iterations=2000, k_target=2)

    first = json.dumps(deflate_and_search(plateau_instance, 0.144, config).to_json(), sort_keys=True)
    second = json.dumps(deflate_and_search(plateau_instance, 0.144, config).to_json(), sort_keys=True)

    assert first == second


def test_empty_report_is_shortfall() -> None:
    report = SolveReport(lam=1.0, k_target=1, points=[], failures=[])

    assert report.shortfall
    assert report.distances == []


def test_deflation_factor(plateau_instance: ProblemInstance) -> None:
    operator = plateau_instance.operator
    deflation = DeflationOperator(operator, shift=1.0, power=2.0)
    solution = np.zeros(plateau_instance.mesh.node_count)
    deflation.add_solution(solution)
    rng = np.random.default_rng(1)
    values = rng.standard_normal(len(solution))
    direction = rng.standard_normal(len(solution))
    step = 1e-6

    factor, gradient = deflation.energy_factor(values)
    forward, _ = deflation.energy_factor(values + step * direction)
    backward, _ = deflation.energy_factor(values - step * direction)

    assert factor == pytest.approx(1.0 + operator.norm(values) ** -2.0)
    assert gradient @ direction == pytest.approx((forward - backward) / (2.0 * step), rel=1e-5)
    assert deflation.residual_factor(values) == pytest.approx(operator.norm(values) ** -2.0 + 1.0)
    assert deflation.energy_factor(solution)[0] == np.inf
    assert deflation.residual_factor(solution) == np.inf


def test_start_functions(plateau_instance: ProblemInstance) -> None:
    config = SolveConfig(lam=1.0, seed=4, starts=6)
    starts = start_functions(plateau_instance, config, delta=2.0, epsilon=0.5)
    again = start_functions(plateau_instance, config, delta=2.0, epsilon=0.5)
    operator = plateau_instance.operator

    assert len(starts) == 6
    np.testing.assert_allclose(starts[0].values, 0.0)
    np.testing.assert_allclose(starts[1].values, 2.0)
    np.testing.assert_allclose(starts[2].values, -2.0)
    # T(u_delta) = delta^p ||a||_1 / p = 2
    norms = [operator.norm(start.values) for start in starts[3:]]
    assert norms == pytest.approx([0.5, 1.25, 4.0])
    for first, second in zip(starts, again, strict=True):
        np.testing.assert_array_equal(first.values, second.values)


def test_verify_point_on_fresh_table(plateau_instance: ProblemInstance) -> None:
    c = 0.5
    lam = c / (1.0 + c**3)
    u = DiscreteFunction.constant(plateau_instance.mesh, c)

    verification = verify_point(plateau_instance, lam, u, 1e-6)
    payload = verification.to_json()

    assert verification.passed
    assert verification.order == 2 * plateau_instance.table.order
    assert verification.neumann_max == pytest.approx(0.0, abs=1e-10)
    assert payload["energy"]["j"] == pytest.approx(0.125 - lam * (c + c**4 / 4.0), rel=1e-8)
    assert not verify_point(plateau_instance, 2.0 * lam, u, 1e-6).passed
