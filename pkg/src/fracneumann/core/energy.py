import dataclasses
import logging
import math
from functools import cached_property
from typing import Any

import numpy as np

from fracneumann.core.kernel import DEFAULT_ORDER, QuadratureTable, signed_power
from fracneumann.core.mesh import FloatArray, FracParams, InteriorQuadrature, Mesh, tensor_rule
from fracneumann.core.model import Coefficient, Nonlinearity
from fracneumann.core.space import DiscreteFunction, NormOperator, ensure_same_mesh, norm_w, potential, seminorm_p

logger = logging.getLogger(__name__)

MIN_GRADIENT_P = 1.1
SHELL_COUNT = 64
SHELL_INNER_FRACTION = 1e-6


@dataclasses.dataclass(frozen=True)
class EnergyBreakdown:
    t: float
    s: float
    lam: float
    j: float
    seminorm: float
    potential: float

    def to_json(self) -> dict[str, float]:
        return dataclasses.asdict(self)


def t_energy(u: DiscreteFunction, a: Coefficient, table: QuadratureTable) -> float:
    """T(u) = ||u||^p / p."""
    p = table.params.p
    return (potential(u, a, p, table.order) + seminorm_p(u, table)) / p


def s_energy(u: DiscreteFunction, nl: Nonlinearity, order: int = DEFAULT_ORDER) -> float:
    """S(u), the integral of H(x, u(x)) over the domain."""
    quadrature = u.mesh.interior_quadrature(order)
    values = nl.primitive_values(quadrature.points, quadrature.interpolate(u.values))
    return math.fsum(quadrature.weights * values)


def gradient_t(u: DiscreteFunction, a: Coefficient, table: QuadratureTable) -> FloatArray:
    """Entries T'(u)(phi_i) for every node i."""
    if table.params.p < MIN_GRADIENT_P:
        raise ValueError(f"gradients need p >= {MIN_GRADIENT_P}, got {table.params.p}")
    ensure_same_mesh(u.mesh, table.mesh, "function and quadrature table")
    return NormOperator(table, a).t_gradient(u.values)


def gradient_s(u: DiscreteFunction, nl: Nonlinearity, order: int = DEFAULT_ORDER) -> FloatArray:
    """Entries S'(u)(phi_i) = integral of h(x, u) phi_i for every node i."""
    quadrature = u.mesh.interior_quadrature(order)
    return quadrature.scatter(quadrature.weights * nl(quadrature.points, quadrature.interpolate(u.values)))


@dataclasses.dataclass(frozen=True, eq=False)
class ProblemInstance:
    """J = T - lam S on one quadrature table, with the operators cached for repeated evaluation."""

    table: QuadratureTable
    coefficient: Coefficient
    nonlinearity: Nonlinearity

    def __post_init__(self) -> None:
        ensure_same_mesh(self.table.mesh, self.coefficient.mesh, "quadrature table and coefficient")

    @property
    def mesh(self) -> Mesh:
        return self.table.mesh

    @property
    def params(self) -> FracParams:
        return self.table.params

    @cached_property
    def operator(self) -> NormOperator:
        return NormOperator(self.table, self.coefficient)

    @cached_property
    def _quadrature(self) -> InteriorQuadrature:
        return self.mesh.interior_quadrature(self.table.order)

    def with_table(self, table: QuadratureTable) -> "ProblemInstance":
        return dataclasses.replace(self, table=table)

    def s_value(self, values: FloatArray) -> float:
        quadrature = self._quadrature
        primitive = self.nonlinearity.primitive_values(quadrature.points, quadrature.interpolate(values))
        return math.fsum(quadrature.weights * primitive)

    def s_gradient(self, values: FloatArray) -> FloatArray:
        quadrature = self._quadrature
        source = self.nonlinearity(quadrature.points, quadrature.interpolate(values))
        return quadrature.scatter(quadrature.weights * source)

    def t_value(self, values: FloatArray) -> float:
        return self.operator.fast_power(values) / self.params.p

    def energy(self, values: FloatArray, lam: float) -> float:
        return self.t_value(values) - lam * self.s_value(values)

    def gradient(self, values: FloatArray, lam: float) -> FloatArray:
        return self.operator.t_gradient(values) - lam * self.s_gradient(values)

    def residual(self, values: FloatArray, lam: float) -> float:
        """Dual norm of J' over the hat functions, each entry scaled by ||phi_i||."""
        return float(np.max(np.abs(self.gradient(values, lam)) / self.operator.hat_norms))

    def breakdown(self, values: FloatArray, lam: float) -> EnergyBreakdown:
        seminorm = 0.5 * self.table.gagliardo(values)
        potential_part = self.operator.potential(values)
        t = (seminorm + potential_part) / self.params.p
        s = self.s_value(values)
        return EnergyBreakdown(t=t, s=s, lam=lam, j=t - lam * s, seminorm=seminorm, potential=potential_part)


def weak_residual(u: DiscreteFunction, a: Coefficient, nl: Nonlinearity, lam: float, table: QuadratureTable) -> float:
    """max_i |T'(u)(phi_i) - lam S'(u)(phi_i)| / ||phi_i||; zero at a discrete weak solution."""
    ensure_same_mesh(u.mesh, table.mesh, "function and quadrature table")
    return ProblemInstance(table, a, nl).residual(u.values, lam)


def energy_breakdown(
    u: DiscreteFunction, a: Coefficient, nl: Nonlinearity, lam: float, table: QuadratureTable
) -> EnergyBreakdown:
    ensure_same_mesh(u.mesh, table.mesh, "function and quadrature table")
    return ProblemInstance(table, a, nl).breakdown(u.values, lam)


def _inside_box(mesh: Mesh, points: FloatArray) -> np.ndarray:
    lower = np.array([axis[0] for axis in mesh.axes])
    upper = np.array([axis[-1] for axis in mesh.axes])
    return np.all((points >= lower) & (points <= upper), axis=1)


def _in_closed_domain(mesh: Mesh, x: FloatArray) -> bool:
    return all(lo <= xj <= hi for xj, lo, hi in zip(x, mesh.domain.lower, mesh.domain.upper, strict=True))


def _half_annulus(inner: float, outer: float, dim: int) -> list[tuple[FloatArray, FloatArray]]:
    """Boxes covering one of each pair {z, -z} with inner <= |z|_inf <= outer."""
    if dim == 1:
        return [(np.array([inner]), np.array([outer]))]
    return [
        (np.array([-outer, inner]), np.array([outer, outer])),
        (np.array([inner, -inner]), np.array([outer, inner])),
    ]


def frac_p_laplacian_at(
    u: DiscreteFunction, x: FloatArray, params: FracParams, shells: int = SHELL_COUNT, order: int = DEFAULT_ORDER
) -> float:
    """Principal value of the integral of |u(x) - u(y)|^(p-2) (u(x) - u(y)) |x - y|^-(N + sp) over the box.

    Offsets z and -z are summed together on geometric shells; the ball of radius 1e-6 h_min is left out.
    Diagnostic only.
    """
    mesh = u.mesh
    x = np.asarray(x, dtype=np.float64).reshape(mesh.dim)
    if not _in_closed_domain(mesh, x):
        raise ValueError(f"point {x.tolist()} is not in the closed domain")
    reach = float(max(np.max(np.abs(np.array([axis[0] for axis in mesh.axes]) - x)),
                      np.max(np.abs(np.array([axis[-1] for axis in mesh.axes]) - x))))  # fmt: skip
    inner = SHELL_INNER_FRACTION * mesh.h_min
    radii = np.geomspace(inner, reach, shells + 1)
    local, weights = tensor_rule(order, mesh.dim)
    u_x = float(u(x[None, :])[0])
    total = []
    for r0, r1 in zip(radii[:-1], radii[1:], strict=True):
        for lower, upper in _half_annulus(r0, r1, mesh.dim):
            offsets = lower + (upper - lower) * local
            cell_weights = np.prod(upper - lower) * weights
            kernel = np.linalg.norm(offsets, axis=1) ** (-params.kernel_exponent)
            for sign in (1.0, -1.0):
                y = x + sign * offsets
                inside = _inside_box(mesh, y)
                if not inside.any():
                    continue
                flux = signed_power(u_x - u(y[inside]), params.p - 1)
                total.append(math.fsum(cell_weights[inside] * kernel[inside] * flux))
    return params.normalizing_constant * math.fsum(total)


def neumann_derivative_at(
    u: DiscreteFunction, x: FloatArray, params: FracParams, order: int = DEFAULT_ORDER
) -> float:
    """Integral over the domain of |u(x) - u(y)|^(p-2) (u(x) - u(y)) |x - y|^-(N + sp), x outside the closed domain."""
    mesh = u.mesh
    x = np.asarray(x, dtype=np.float64).reshape(mesh.dim)
    if _in_closed_domain(mesh, x):
        raise ValueError(f"the Neumann derivative is only defined outside the closed domain, got {x.tolist()}")
    return float(exterior_neumann_values(u, params, x[None, :], order)[0])


def exterior_neumann_values(
    u: DiscreteFunction, params: FracParams, points: FloatArray | None = None, order: int = DEFAULT_ORDER
) -> FloatArray:
    """Neumann derivative at each of `points`, by default every exterior node."""
    mesh = u.mesh
    points = mesh.nodes[mesh.exterior_nodes] if points is None else np.atleast_2d(points)
    quadrature = mesh.interior_quadrature(order)
    u_y = quadrature.interpolate(u.values)
    u_x = u(points) if len(points) else np.empty(0)
    result = np.empty(len(points))
    for index, (point, value) in enumerate(zip(points, u_x, strict=True)):
        distance = np.linalg.norm(quadrature.points - point, axis=1)
        flux = signed_power(value - u_y, params.p - 1)
        result[index] = math.fsum(quadrature.weights * flux * distance ** (-params.kernel_exponent))
    return params.normalizing_constant * result


@dataclasses.dataclass(frozen=True)
class MonotonicityGap:
    gap: float
    distance: float
    ratio: float | None

    def to_json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def monotonicity_gap(
    u: DiscreteFunction, v: DiscreteFunction, a: Coefficient, table: QuadratureTable
) -> MonotonicityGap:
    """(T'(u) - T'(v))(u - v), with its ratio to ||u - v||^p recorded when p >= 2."""
    ensure_same_mesh(u.mesh, v.mesh, "compared functions")
    operator = NormOperator(table, a)
    difference = u.values - v.values
    gap = float((operator.t_gradient(u.values) - operator.t_gradient(v.values)) @ difference)
    distance = norm_w(u - v, a, table)
    p = table.params.p
    ratio = gap / distance**p if p >= 2 and distance > 0 else None  # noqa: PLR2004
    return MonotonicityGap(gap, distance, ratio)


def scalar_monotonicity(x: FloatArray | float, y: FloatArray | float, p: float) -> FloatArray:
    """(|x|^(p-2) x - |y|^(p-2) y)(x - y), elementwise."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    return (signed_power(x, p - 1) - signed_power(y, p - 1)) * (x - y)
