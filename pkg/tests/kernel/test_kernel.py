import logging

import numpy as np
import pytest
from fracneumann.core.kernel import (
    QuadratureError,
    QuadratureTable,
    assemble_table,
    contact_dimension,
    default_truncation_radius,
    radial_tail,
    signed_power,
    tail_radius,
)
from fracneumann.core.mesh import Box, FracParams, Mesh, build_mesh
from pytest_mock import MockerFixture


def _linear_cross_set_integral(margin: float, beta: float) -> float:
    """Integral of |x - y|^beta over the cross-shaped set of (0, 1) inside [-margin, 1 + margin]^2."""

    def g(t: float) -> float:
        return t ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))

    whole = 2.0 * g(1.0 + 2.0 * margin)
    exterior_blocks = 2.0 * (2.0 * g(margin))
    between_blocks = g(1.0 + 2.0 * margin) - 2.0 * g(1.0 + margin) + g(1.0)
    return whole - exterior_blocks - 2.0 * between_blocks


def test_linear_function_constant_integrand() -> None:
    # p = N + sp = 2: the integrand is 1 on the cross-shaped set of (0, 1) in (-3, 4)^2, area 49 - 36
    mesh = build_mesh(Box.interval(0.0, 1.0), 4, 4.0)
    table = assemble_table(mesh, FracParams(s=0.5, p=2.0), order=4, depth=4)

    assert 0.5 * table.gagliardo(mesh.nodes[:, 0]) == pytest.approx(6.5, rel=1e-12)


def test_linear_function_matches_closed_form() -> None:
    params = FracParams(s=0.3, p=2.5)
    mesh = build_mesh(Box.interval(0.0, 1.0), 6, 3.0)
    table = assemble_table(mesh, params)
    expected = _linear_cross_set_integral(mesh.margin, params.p - 1.0 - params.sp)

    assert table.gagliardo(mesh.nodes[:, 0]) == pytest.approx(expected, rel=1e-6)


def test_constant_function_has_zero_seminorm(coarse_table: QuadratureTable) -> None:
    constant = np.full(coarse_table.mesh.node_count, 3.7)

    assert coarse_table.gagliardo(constant) <= 1e-12


def test_depth_changes_only_rounding(coarse_mesh: Mesh) -> None:
    params = FracParams(s=0.7, p=3.0)
    values = np.sin(3.0 * coarse_mesh.nodes[:, 0])
    shallow = assemble_table(coarse_mesh, params, order=5, depth=3).gagliardo(values)
    deep_table = assemble_table(coarse_mesh, params, order=5, depth=7)
    deep = deep_table.gagliardo(values)

    assert shallow == pytest.approx(deep, rel=1e-10)
    assert deep_table.near_depth == 7


def test_quadratic_matrix_matches_gagliardo(coarse_table: QuadratureTable) -> None:
    rng = np.random.default_rng(3)
    for _ in range(5):
        values = rng.standard_normal(coarse_table.mesh.node_count)
        assert values @ coarse_table.quadratic_matrix @ values == pytest.approx(
            coarse_table.gagliardo(values), rel=1e-10
        )
    np.testing.assert_allclose(coarse_table.quadratic_matrix, coarse_table.quadratic_matrix.T)


def test_dual_is_derivative(coarse_mesh: Mesh) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=3.0), order=4, depth=4)
    rng = np.random.default_rng(7)
    values = rng.standard_normal(coarse_mesh.node_count)
    direction = rng.standard_normal(coarse_mesh.node_count)
    step = 1e-6

    dual = table.gagliardo_dual(values)
    finite_difference = (table.gagliardo(values + step * direction) - table.gagliardo(values - step * direction)) / (
        2.0 * step
    )

    assert dual @ direction == pytest.approx(table.gagliardo_form(values, direction), rel=1e-10)
    assert 3.0 * (dual @ direction) == pytest.approx(finite_difference, rel=1e-6)


def test_hat_gagliardo_matches_unit_vectors(coarse_mesh: Mesh) -> None:
    table = assemble_table(coarse_mesh, FracParams(s=0.6, p=2.5), order=4, depth=4)
    hats = table.hat_gagliardo()
    for node in (0, 3, 5, 10):
        unit = np.zeros(coarse_mesh.node_count)
        unit[node] = 1.0
        assert hats[node] == pytest.approx(table.gagliardo(unit), rel=1e-10)


def test_ordered_pair_count(coarse_table: QuadratureTable) -> None:
    mesh = coarse_table.mesh
    exterior = mesh.element_count - int(mesh.is_interior_element.sum())

    assert coarse_table.ordered_pair_count == mesh.element_count**2 - exterior**2


def test_two_dimensional_table() -> None:
    domain = Box((0.0, 0.0), (1.0, 1.0))
    mesh = build_mesh(domain, 2, domain.diameter + 0.5)
    table = assemble_table(mesh, FracParams(s=0.6, p=2.0, dim=2), order=3, depth=2)
    values = mesh.nodes[:, 0] + 0.5 * mesh.nodes[:, 1]

    assert table.gagliardo(np.ones(mesh.node_count)) <= 1e-12
    assert table.gagliardo(values) > 0
    assert values @ table.quadratic_matrix @ values == pytest.approx(table.gagliardo(values), rel=1e-10)
    eigenvalues = np.linalg.eigvalsh(table.quadratic_matrix)
    assert eigenvalues.min() > -1e-10 * eigenvalues.max()


def _unit_square_mesh() -> Mesh:
    domain = Box((0.0, 0.0), (1.0, 1.0))
    return build_mesh(domain, 2, domain.diameter + 0.5)


def test_contact_dimension() -> None:
    mesh = _unit_square_mesh()

    # 4 x 4 cells, element e sits at (e // 4, e % 4)
    assert contact_dimension(mesh, 5, 5) == 2
    assert contact_dimension(mesh, 5, 6) == 1
    assert contact_dimension(mesh, 5, 10) == 0


def test_two_dimensional_depth_cap_is_recorded(mocker: MockerFixture, caplog: pytest.LogCaptureFixture) -> None:
    mocker.patch("fracneumann.core.kernel.MAX_DEPTH_2D", 2)
    mesh = _unit_square_mesh()
    params = FracParams(s=0.6, p=2.0, dim=2)
    values = mesh.nodes[:, 0] + 0.5 * mesh.nodes[:, 1]

    with caplog.at_level(logging.WARNING):
        capped = assemble_table(mesh, params, order=2, depth=4)

    assert capped.depth == 4
    assert capped.near_depth == 2
    assert any("exceeds the two-dimensional limit 2" in message for message in caplog.messages)
    assert capped.gagliardo(values) == assemble_table(mesh, params, order=2, depth=2).gagliardo(values)


@pytest.mark.slow()
def test_two_dimensional_depth_convergence() -> None:
    mesh = _unit_square_mesh()
    params = FracParams(s=0.6, p=2.0, dim=2)
    values = mesh.nodes[:, 0] + 0.5 * mesh.nodes[:, 1]
    seminorms = []
    for depth in (3, 4, 5):
        table = assemble_table(mesh, params, order=2, depth=depth)
        assert table.near_depth == depth
        seminorms.append(table.gagliardo(values))
    shallow, middle, deep = seminorms

    assert abs(deep - middle) < abs(middle - shallow)
    assert deep == pytest.approx(shallow, rel=0.1)


def test_assemble_rejects_bad_settings(coarse_mesh: Mesh) -> None:
    with pytest.raises(QuadratureError, match="Gauss order"):
        assemble_table(coarse_mesh, FracParams(s=0.5, p=2.0), order=1)
    with pytest.raises(QuadratureError, match="subdivision depth"):
        assemble_table(coarse_mesh, FracParams(s=0.5, p=2.0), depth=1)
    with pytest.raises(QuadratureError, match="dimensional"):
        assemble_table(coarse_mesh, FracParams(s=0.5, p=2.0, dim=2))


def test_tail_radius_meets_tolerance() -> None:
    params = FracParams(s=0.5, p=2.0)
    radius = tail_radius(params, 1e-4, 0.1)

    assert radial_tail(params, radius) / radial_tail(params, 0.1) <= 1e-4
    assert radial_tail(params, radius / 1.1) / radial_tail(params, 0.1) > 1e-4


def test_tail_radius_rejects_tolerance() -> None:
    with pytest.raises(ValueError, match="tail tolerance"):
        tail_radius(FracParams(s=0.5, p=2.0), 1.5, 0.1)


def test_tail_radius_regression_value() -> None:
    # sp = 1: the tail from R is 1/R, so the scan stops at the first R = 1.1^k / 64 with 64 R >= 1e8
    radius = tail_radius(FracParams(s=0.5, p=2.0), 1e-8, 1.0 / 64.0)

    assert radius == pytest.approx(1.1**194 / 64.0, rel=1e-12)
    assert radius == pytest.approx(1674946.53, rel=1e-6)


def test_seminorm_grows_with_truncation_radius() -> None:
    params = FracParams(s=0.5, p=2.0)
    seminorms, tails, margins = [], [], (1.0, 2.0, 3.0)
    for margin in margins:
        mesh = build_mesh(Box.interval(0.0, 1.0), 4, 1.0 + margin)
        table = assemble_table(mesh, params)
        seminorms.append(table.gagliardo(np.clip(mesh.nodes[:, 0], 0.0, 1.0)))
        tails.append(table.tail_relative)

    assert seminorms[0] < seminorms[1] < seminorms[2]
    assert tails[0] > tails[1] > tails[2]
    for margin, smaller, larger in zip(margins, seminorms, seminorms[1:], strict=False):
        # |u(x) - u(y)| <= 1 and the added pairs lie beyond the previous margin on both sides, in both orders
        assert larger - smaller <= 4.0 * radial_tail(params, margin)


def test_default_truncation_radius_exceeds_diameter() -> None:
    domain = Box.interval(0.0, 2.0)
    radius = default_truncation_radius(domain, 8, FracParams(s=0.5, p=2.0), 1e-3)

    assert radius > domain.diameter
    assert radius - domain.diameter == pytest.approx(tail_radius(FracParams(s=0.5, p=2.0), 1e-3, 0.25))


def test_signed_power() -> None:
    np.testing.assert_allclose(signed_power(np.array([-8.0, 0.0, 4.0]), 0.5), [-np.sqrt(8.0), 0.0, 2.0])
