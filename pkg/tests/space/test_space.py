import math

import numpy as np
import pytest
from fracneumann.core.kernel import QuadratureTable, assemble_table
from fracneumann.core.mesh import Box, FracParams, Mesh, build_mesh
from fracneumann.core.model import Coefficient
from fracneumann.core.optimize import AscentSettings
from fracneumann.core.space import (
    DiscreteFunction,
    MeshMismatchError,
    NormOperator,
    estimate_c,
    estimate_cq,
    estimate_embedding_constants,
    lq_norm,
    norm_w,
    seminorm_p,
    sup_norm,
)

QUICK = AscentSettings(multistarts=2, max_iterations=300, tolerance=1e-8)


def _identity(mesh: Mesh) -> DiscreteFunction:
    return DiscreteFunction.from_callable(mesh, lambda x: x[:, 0])


def test_function_rejects_wrong_length(coarse_mesh: Mesh) -> None:
    with pytest.raises(MeshMismatchError, match="nodal values"):
        DiscreteFunction(coarse_mesh, np.zeros(3))


def test_function_evaluates_by_interpolation(coarse_mesh: Mesh) -> None:
    u = _identity(coarse_mesh)

    np.testing.assert_allclose(u(np.array([0.1, 0.3, 1.7])), [0.1, 0.3, 1.7], atol=1e-14)


def test_arithmetic_needs_same_mesh(coarse_mesh: Mesh) -> None:
    u = DiscreteFunction.constant(coarse_mesh, 1.0)
    other = DiscreteFunction.constant(coarse_mesh.refine(), 1.0)

    np.testing.assert_allclose((2.0 * u - u + (-u)).values, 0.0)
    with pytest.raises(MeshMismatchError, match="different meshes"):
        _ = u + other


def test_constant_norm_is_potential_only(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    u = DiscreteFunction.constant(coarse_table.mesh, 3.0)

    assert seminorm_p(u, coarse_table) <= 1e-12
    assert norm_w(u, unit_coefficient, coarse_table) == pytest.approx(3.0, rel=1e-12)


def test_lq_norm_of_identity(coarse_mesh: Mesh) -> None:
    u = _identity(coarse_mesh)

    assert lq_norm(u, 1.0) == pytest.approx(0.5)
    assert lq_norm(u, 2.0) == pytest.approx(math.sqrt(1.0 / 3.0))
    assert lq_norm(u, 3.0) == pytest.approx(0.25 ** (1.0 / 3.0))


def test_l1_norm_with_sign_change(coarse_mesh: Mesh) -> None:
    u = DiscreteFunction.from_callable(coarse_mesh, lambda x: x[:, 0] - 0.4)

    assert lq_norm(u, 1.0) == pytest.approx(0.26)


def test_lq_norm_rejects_small_q(coarse_mesh: Mesh) -> None:
    with pytest.raises(ValueError, match="at least 1"):
        lq_norm(_identity(coarse_mesh), 0.5)


def test_sup_norm_ignores_exterior(coarse_mesh: Mesh) -> None:
    values = coarse_mesh.nodes[:, 0] - 0.4
    values[coarse_mesh.exterior_nodes] = 100.0

    assert sup_norm(DiscreteFunction(coarse_mesh, values)) == pytest.approx(0.6)


def test_quadratic_operator_fast_path(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    operator = NormOperator(coarse_table, unit_coefficient)
    values = np.cos(coarse_table.mesh.nodes[:, 0])

    assert operator.is_quadratic
    assert operator.fast_power(values) == pytest.approx(operator.power(values), rel=1e-10)
    np.testing.assert_allclose(operator.solve(operator.quadratic_matrix @ values), values, rtol=1e-8)


def test_t_gradient_is_derivative(coarse_mesh: Mesh, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=3.0), order=4, depth=4)
    operator = NormOperator(table, unit_coefficient)
    rng = np.random.default_rng(11)
    values = rng.standard_normal(coarse_mesh.node_count)
    direction = rng.standard_normal(coarse_mesh.node_count)
    step = 1e-6

    finite_difference = (operator.power(values + step * direction) - operator.power(values - step * direction)) / (
        2.0 * step
    )

    assert operator.t_gradient(values) @ direction == pytest.approx(finite_difference / 3.0, rel=1e-6)


def test_hat_norms_match_unit_vectors(coarse_mesh: Mesh, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=2.5), order=4, depth=4)
    operator = NormOperator(table, unit_coefficient)
    for node in (0, 4, 7):
        unit = np.zeros(coarse_mesh.node_count)
        unit[node] = 1.0
        assert operator.hat_norms[node] == pytest.approx(operator.norm(unit), rel=1e-10)


def test_operator_needs_same_mesh(coarse_table: QuadratureTable, coarse_mesh: Mesh) -> None:
    with pytest.raises(MeshMismatchError):
        NormOperator(coarse_table, Coefficient.constant(coarse_mesh.refine(), 1.0))


def test_c2_bounds_constant_function(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    estimate = estimate_cq(coarse_table, unit_coefficient, 2.0)

    assert estimate.converged
    # ||1||_2 / ||1|| = 1 when a = 1 on the unit interval
    assert estimate.value >= 1.0 - 1e-12


def test_cq_ascent_beats_start(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    estimate = estimate_cq(coarse_table, unit_coefficient, 3.0, QUICK, seed=5)

    assert estimate.value >= 1.0 - 1e-12
    assert estimate.iterations >= 1


def test_cq_grows_under_refinement(unit_interval: Box, case2_params: FracParams) -> None:
    coarse = build_mesh(unit_interval, 4, 2.0)
    fine = coarse.refine()
    values = []
    for mesh in (coarse, fine):
        table = assemble_table(mesh, case2_params, order=6, depth=4)
        values.append(estimate_cq(table, Coefficient.constant(mesh, 1.0), 2.0).value)

    assert values[1] >= values[0] * (1.0 - 1e-6)


def _random_functions(mesh: Mesh, count: int, seed: int) -> list[DiscreteFunction]:
    rng = np.random.default_rng(seed)
    return [DiscreteFunction(mesh, rng.standard_normal(mesh.node_count)) for _ in range(count)]


@pytest.mark.parametrize("factor", [-3.0, 0.5, 2.0])
def test_norm_is_homogeneous(coarse_mesh: Mesh, unit_coefficient: Coefficient, factor: float) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=2.5), order=4, depth=4)
    for u in _random_functions(coarse_mesh, 5, seed=21):
        assert norm_w(factor * u, unit_coefficient, table) == pytest.approx(
            abs(factor) * norm_w(u, unit_coefficient, table), rel=1e-12
        )


def test_norm_triangle_inequality(coarse_mesh: Mesh, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=2.5), order=4, depth=4)
    functions = _random_functions(coarse_mesh, 40, seed=22)
    for u, v in zip(functions[::2], functions[1::2], strict=True):
        bound = norm_w(u, unit_coefficient, table) + norm_w(v, unit_coefficient, table)
        assert norm_w(u + v, unit_coefficient, table) <= bound * (1.0 + 1e-12)


def test_sup_norm_embedding_holds(coarse_mesh: Mesh, case1_params: FracParams, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, case1_params, order=4, depth=4)
    c = estimate_c(table, unit_coefficient).value
    for u in _random_functions(coarse_mesh, 100, seed=23):
        assert sup_norm(u) <= c * norm_w(u, unit_coefficient, table) * (1.0 + 1e-9)


def test_lq_embedding_holds(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    c2 = estimate_cq(coarse_table, unit_coefficient, 2.0).value
    for u in _random_functions(coarse_table.mesh, 100, seed=24):
        assert lq_norm(u, 2.0) <= c2 * norm_w(u, unit_coefficient, coarse_table) * (1.0 + 1e-9)


def test_c_grows_under_refinement(unit_interval: Box, case1_params: FracParams) -> None:
    coarse = build_mesh(unit_interval, 16, 2.0)
    values = []
    for mesh in (coarse, coarse.refine()):
        table = assemble_table(mesh, case1_params)
        values.append(estimate_c(table, Coefficient.constant(mesh, 1.0)).value)

    assert values[1] >= values[0] * (1.0 - 1e-6)


def test_cq_rejects_supercritical_q(coarse_mesh: Mesh, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.25, p=2.0), order=3, depth=3)

    with pytest.raises(ValueError, match="critical exponent"):
        estimate_cq(table, unit_coefficient, 4.0)
    with pytest.raises(ValueError, match="at least 1"):
        estimate_cq(table, unit_coefficient, 0.5)


def test_c_exact_for_quadratic_case(coarse_mesh: Mesh, case1_params: FracParams, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, case1_params, order=4, depth=4)
    estimate = estimate_c(table, unit_coefficient)
    inverse = NormOperator(table, unit_coefficient).solve(np.eye(coarse_mesh.node_count))

    assert estimate.converged
    assert estimate.iterations == 0
    assert estimate.value == pytest.approx(math.sqrt(np.diag(inverse)[coarse_mesh.interior_nodes].max()))
    # c^p ||a||_1 >= 1, attained in the limit by constants
    assert estimate.value**2 * unit_coefficient.l1_norm >= 1.0 - 1e-12


def test_c_by_ascent(coarse_mesh: Mesh, unit_coefficient: Coefficient) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=2.5), order=4, depth=4)
    estimate = estimate_c(table, unit_coefficient, QUICK, seed=1)

    assert estimate.value**2.5 * unit_coefficient.l1_norm >= 1.0 - 1e-9


def test_c_needs_case_one(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    with pytest.raises(ValueError, match="sup-norm embedding constant"):
        estimate_c(coarse_table, unit_coefficient)


def test_embedding_constants_report(coarse_table: QuadratureTable, unit_coefficient: Coefficient) -> None:
    constants = estimate_embedding_constants(coarse_table, unit_coefficient, [2.0, 3.0], QUICK)
    payload = constants.to_json()

    assert constants.c is None
    assert payload["c"] is None
    assert sorted(payload["c_q"]) == ["2", "3"]
    assert payload["n"] == 4
    assert payload["truncation_radius"] == pytest.approx(2.0)
