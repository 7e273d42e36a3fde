"""Discrete functions on a mesh, the W^{s,p} norm and numerical embedding constants."""

import csv
import dataclasses
import logging
import math
from collections.abc import Callable
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from fracneumann.core.constants import CaseTag
from fracneumann.core.kernel import QuadratureTable, signed_power
from fracneumann.core.mesh import FloatArray, InteriorQuadrature, Mesh, case_tag, critical_exponent, interpolate
from fracneumann.core.model import Coefficient
from fracneumann.core.optimize import AscentSettings, armijo_backtrack, barzilai_borwein, best_index

logger = logging.getLogger(__name__)

LQ_ORDER = 8


class MeshMismatchError(ValueError):
    pass


def ensure_same_mesh(left: Mesh, right: Mesh, what: str) -> None:
    if left is not right:
        raise MeshMismatchError(f"{what} live on different meshes")


@dataclasses.dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Nodal values of a continuous piecewise-multilinear function on every node of the computational box."""

    mesh: Mesh
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.mesh.node_count,):
            raise MeshMismatchError(f"expected {self.mesh.node_count} nodal values, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "DiscreteFunction":
        return cls(mesh, np.full(mesh.node_count, float(value)))

    @classmethod
    def zeros(cls, mesh: Mesh) -> "DiscreteFunction":
        return cls(mesh, np.zeros(mesh.node_count))

    @classmethod
    def from_callable(cls, mesh: Mesh, fn: Callable[[FloatArray], FloatArray]) -> "DiscreteFunction":
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=np.float64))

    @property
    def interior_values(self) -> FloatArray:
        return self.values[self.mesh.interior_nodes]

    def __call__(self, points: FloatArray) -> FloatArray:
        corners, local = self.mesh.locate(np.asarray(points, dtype=np.float64).reshape(-1, self.mesh.dim))
        return interpolate(self.values, corners, local)

    def __add__(self, other: "DiscreteFunction") -> "DiscreteFunction":
        ensure_same_mesh(self.mesh, other.mesh, "summands")
        return DiscreteFunction(self.mesh, self.values + other.values)

    def __sub__(self, other: "DiscreteFunction") -> "DiscreteFunction":
        ensure_same_mesh(self.mesh, other.mesh, "operands")
        return DiscreteFunction(self.mesh, self.values - other.values)

    def __neg__(self) -> "DiscreteFunction":
        return DiscreteFunction(self.mesh, -self.values)

    def __mul__(self, factor: float) -> "DiscreteFunction":
        return DiscreteFunction(self.mesh, factor * self.values)

    __rmul__ = __mul__

    def to_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["node", *(f"x{j}" for j in range(self.mesh.dim)), "interior", "u"])
            for index, (coordinates, inside, value) in enumerate(
                zip(self.mesh.nodes, self.mesh.is_interior_node, self.values, strict=True)
            ):
                writer.writerow([index, *(repr(float(c)) for c in coordinates), int(inside), repr(float(value))])


def seminorm_p(u: DiscreteFunction, table: QuadratureTable) -> float:
    """1/2 of the double integral of |u(x) - u(y)|^p |x - y|^-(N + sp) over the cross-shaped set."""
    ensure_same_mesh(u.mesh, table.mesh, "function and quadrature table")
    return 0.5 * table.gagliardo(u.values)


def potential(u: DiscreteFunction, a: Coefficient, p: float, order: int) -> float:
    """Integral of a |u|^p over the domain."""
    ensure_same_mesh(u.mesh, a.mesh, "function and coefficient")
    quadrature = u.mesh.interior_quadrature(order)
    return math.fsum(quadrature.weights * a.at_quadrature(order) * np.abs(quadrature.interpolate(u.values)) ** p)


def norm_w(u: DiscreteFunction, a: Coefficient, table: QuadratureTable) -> float:
    p = table.params.p
    return float((potential(u, a, p, table.order) + seminorm_p(u, table)) ** (1.0 / p))


def lq_norm(u: DiscreteFunction, q: float) -> float:
    """L^q norm over the domain; closed forms per element for q in {1, 2} in one dimension."""
    if q < 1:
        raise ValueError(f"q must be at least 1, got {q}")
    mesh = u.mesh
    if mesh.dim == 1 and q in (1, 2):
        elements = np.flatnonzero(mesh.is_interior_element)
        corners = mesh.element_corners[elements]
        left, right = u.values[corners[:, 0]], u.values[corners[:, 1]]
        h = mesh.element_sizes[elements, 0]
        if q == 2:  # noqa: PLR2004
            return math.sqrt(math.fsum(h * (left**2 + left * right + right**2) / 3.0))
        magnitude = np.abs(left) + np.abs(right)
        same_sign = left * right >= 0
        crossing = (left**2 + right**2) / np.where(same_sign, 1.0, magnitude)
        return math.fsum(np.where(same_sign, 0.5 * h * magnitude, 0.5 * h * crossing))
    quadrature = mesh.interior_quadrature(LQ_ORDER)
    return float(math.fsum(quadrature.weights * np.abs(quadrature.interpolate(u.values)) ** q) ** (1.0 / q))


def sup_norm(u: DiscreteFunction) -> float:
    """Maximum of |u| over the closed domain, attained at a node."""
    return float(np.abs(u.interior_values).max())


@dataclasses.dataclass(frozen=True, eq=False)
class NormOperator:
    """||u||^p and its first variation on one quadrature table and coefficient.

    The p = 2 quadratic form A = K/2 + M_a (kernel exponent N + 2s) doubles as the preconditioner for every p.
    """

    table: QuadratureTable
    coefficient: Coefficient

    def __post_init__(self) -> None:
        ensure_same_mesh(self.table.mesh, self.coefficient.mesh, "quadrature table and coefficient")

    @property
    def mesh(self) -> Mesh:
        return self.table.mesh

    @property
    def p(self) -> float:
        return self.table.params.p

    @property
    def is_quadratic(self) -> bool:
        return self.p == 2  # noqa: PLR2004

    @cached_property
    def _quadrature(self) -> InteriorQuadrature:
        return self.mesh.interior_quadrature(self.table.order)

    @cached_property
    def _weighted(self) -> FloatArray:
        return self._quadrature.weights * self.coefficient.at_quadrature(self.table.order)

    @cached_property
    def mass_vector(self) -> FloatArray:
        """Integrals of the hat functions over the domain."""
        return self._quadrature.scatter(self._quadrature.weights)

    @cached_property
    def mass_matrix(self) -> FloatArray:
        return self._quadrature.matrix(self._quadrature.weights)

    @cached_property
    def quadratic_matrix(self) -> FloatArray:
        return 0.5 * self.table.quadratic_matrix + self._quadrature.matrix(self._weighted)

    @cached_property
    def _factor(self) -> tuple[FloatArray, bool]:
        return cho_factor(self.quadratic_matrix)

    @cached_property
    def preconditioner(self) -> FloatArray:
        return np.diag(self.quadratic_matrix).copy()

    def solve(self, rhs: FloatArray) -> FloatArray:
        """A^-1 rhs for the p = 2 form."""
        return np.asarray(cho_solve(self._factor, rhs))

    def potential(self, values: FloatArray) -> float:
        return math.fsum(self._weighted * np.abs(self._quadrature.interpolate(values)) ** self.p)

    def power(self, values: FloatArray) -> float:
        """||u||^p by compensated summation."""
        return self.potential(values) + 0.5 * self.table.gagliardo(values)

    def fast_power(self, values: FloatArray) -> float:
        if self.is_quadratic:
            return float(values @ self.quadratic_matrix @ values)
        return self.power(values)

    def norm(self, values: FloatArray) -> float:
        return float(self.power(values) ** (1.0 / self.p))

    def t_gradient(self, values: FloatArray) -> FloatArray:
        """Nodal vector of T'(u)(phi_i) with T = ||u||^p / p."""
        if self.is_quadratic:
            return self.quadratic_matrix @ values
        flux = self._weighted * signed_power(self._quadrature.interpolate(values), self.p - 1)
        return self._quadrature.scatter(flux) + 0.5 * self.table.gagliardo_dual(values)

    @cached_property
    def hat_norms(self) -> FloatArray:
        """||phi_i|| for every node."""
        shapes = self._quadrature.shapes
        potentials = np.bincount(
            self._quadrature.corners.ravel(),
            weights=(self._weighted[:, None] * shapes**self.p).ravel(),
            minlength=self.mesh.node_count,
        )
        return np.asarray((potentials + 0.5 * self.table.hat_gagliardo(self.p)) ** (1.0 / self.p))


@dataclasses.dataclass(frozen=True)
class ConstantEstimate:
    value: float
    converged: bool
    iterations: int

    def to_json(self) -> dict[str, Any]:
        return {"value": self.value, "converged": self.converged, "iterations": self.iterations}


@dataclasses.dataclass(frozen=True)
class EmbeddingConstants:
    """Discrete lower estimates of c (sup norm, only when N < sp) and c_q, tagged with the mesh they came from."""

    c: ConstantEstimate | None
    cq: dict[float, ConstantEstimate]
    n: int
    truncation_radius: float

    @property
    def converged(self) -> bool:
        estimates = [*self.cq.values(), *([self.c] if self.c is not None else [])]
        return all(estimate.converged for estimate in estimates)

    def to_json(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "truncation_radius": self.truncation_radius,
            "c": None if self.c is None else self.c.to_json(),
            "c_q": {f"{q:g}": estimate.to_json() for q, estimate in sorted(self.cq.items())},
            "converged": self.converged,
        }


@dataclasses.dataclass(frozen=True)
class _AscentRun:
    point: FloatArray
    converged: bool
    iterations: int


def _ratio_ascent(
    operator: NormOperator,
    numerator: Callable[[FloatArray], float],
    numerator_gradient: Callable[[FloatArray], FloatArray],
    start: FloatArray,
    settings: AscentSettings,
) -> _AscentRun:
    """Maximize numerator(u) / ||u|| for a 1-homogeneous numerator, staying on the unit sphere.

    Steps are preconditioned by the p = 2 form and radially projected; Armijo backtracking from a BB trial step.
    """
    u = start / operator.norm(start)
    value = numerator(u)
    step = 1.0
    previous: tuple[FloatArray, FloatArray] | None = None

    def normalized(point: FloatArray) -> FloatArray:
        return point / operator.norm(point)

    for iteration in range(1, settings.max_iterations + 1):
        # at ||u|| = 1 the gradient of ||u|| is T'(u)
        gradient = numerator_gradient(u) - value * operator.t_gradient(u)
        direction = operator.solve(gradient)
        slope = float(gradient @ direction)
        if math.sqrt(max(slope, 0.0)) <= settings.tolerance:
            return _AscentRun(u, converged=True, iterations=iteration)
        if previous is not None:
            trial = barzilai_borwein(u - previous[0], previous[1] - gradient, operator.quadratic_matrix)
            step = step if trial is None else trial

        def candidate(t: float, u: FloatArray = u, direction: FloatArray = direction) -> FloatArray:
            return normalized(u + t * direction)

        accepted = armijo_backtrack(lambda point: -numerator(point), candidate, -value, slope, step)
        if accepted is None:
            return _AscentRun(u, converged=False, iterations=iteration)
        previous = (u, gradient)
        u, value, step = accepted.point, -accepted.value, accepted.step
    return _AscentRun(u, converged=False, iterations=settings.max_iterations)


def _random_starts(operator: NormOperator, count: int, seed: int) -> list[FloatArray]:
    """Smooth random starts: white noise passed through the inverse p = 2 form."""
    rng = np.random.default_rng(seed)
    return [operator.solve(rng.standard_normal(operator.mesh.node_count)) for _ in range(count)]


def estimate_c(
    table: QuadratureTable, a: Coefficient, settings: AscentSettings | None = None, seed: int = 0
) -> ConstantEstimate:
    """Lower estimate of sup ||u||_inf / ||u|| over the discrete space.

    For p = 2 this is max_i sqrt((A^-1)_ii) exactly; otherwise each start climbs u_i / ||u|| at its peak node i.
    """
    settings = settings or AscentSettings()
    params = table.params
    if case_tag(params) is not CaseTag.CASE_I:
        raise ValueError(f"the sup-norm embedding constant needs N < sp and p >= 2, got N={params.dim}, sp={params.sp}")
    operator = NormOperator(table, a)
    interior = table.mesh.interior_nodes
    inverse = operator.solve(np.eye(table.mesh.node_count))
    if operator.is_quadratic:
        value = math.sqrt(float(np.diag(inverse)[interior].max()))
        logger.debug(f"c = {value:.12g} from the exact p=2 quadratic form")
        return ConstantEstimate(value, converged=True, iterations=0)

    starts = [inverse[:, i].copy() for i in interior]
    starts.append(np.ones(table.mesh.node_count))
    starts.extend(_random_starts(operator, settings.multistarts, seed))
    values, runs = [], []
    for start in starts:
        peak = int(interior[np.argmax(np.abs(start[interior]))])
        oriented = start if start[peak] > 0 else -start
        basis = np.zeros(table.mesh.node_count)
        basis[peak] = 1.0
        run = _ratio_ascent(
            operator, lambda u, peak=peak: float(u[peak]), lambda _u, basis=basis: basis, oriented, settings
        )
        runs.append(run)
        values.append(float(np.abs(run.point[interior]).max()) / operator.norm(run.point))
    best = best_index(values)
    logger.debug(f"c = {values[best]:.12g} from {len(starts)} starts (best start {best})")
    return ConstantEstimate(values[best], converged=runs[best].converged, iterations=runs[best].iterations)


def estimate_cq(
    table: QuadratureTable, a: Coefficient, q: float, settings: AscentSettings | None = None, seed: int = 0
) -> ConstantEstimate:
    """Lower estimate of sup ||u||_q / ||u|| by multistart projected ascent.

    For p = q = 2 the generalized eigenproblem gives the value exactly.
    """
    settings = settings or AscentSettings()
    params = table.params
    if q < 1:
        raise ValueError(f"q must be at least 1, got {q}")
    if q >= critical_exponent(params):
        raise ValueError(f"q = {q} is not below the critical exponent {critical_exponent(params)}")
    operator = NormOperator(table, a)
    mesh = table.mesh
    if operator.is_quadratic and q == 2:  # noqa: PLR2004
        largest = float(eigh(operator.mass_matrix, operator.quadratic_matrix, eigvals_only=True)[-1])
        value = math.sqrt(largest)
        logger.debug(f"c_2 = {value:.12g} from the generalized eigenproblem")
        return ConstantEstimate(value, converged=True, iterations=0)

    quadrature = mesh.interior_quadrature(table.order)

    def lq_power(u: FloatArray) -> float:
        return math.fsum(quadrature.weights * np.abs(quadrature.interpolate(u)) ** q)

    def numerator(u: FloatArray) -> float:
        return float(lq_power(u) ** (1.0 / q))

    def numerator_gradient(u: FloatArray) -> FloatArray:
        flux = quadrature.weights * signed_power(quadrature.interpolate(u), q - 1)
        return np.asarray(numerator(u) ** (1.0 - q) * quadrature.scatter(flux))

    starts = [operator.solve(operator.mass_vector), np.ones(mesh.node_count)]
    starts.extend(_random_starts(operator, settings.multistarts, seed))
    values, runs = [], []
    for start in starts:
        run = _ratio_ascent(operator, numerator, numerator_gradient, start, settings)
        runs.append(run)
        values.append(lq_norm(DiscreteFunction(mesh, run.point), q) / operator.norm(run.point))
    best = best_index(values)
    logger.debug(f"c_{q:g} = {values[best]:.12g} from {len(starts)} starts (best start {best})")
    return ConstantEstimate(values[best], converged=runs[best].converged, iterations=runs[best].iterations)


def estimate_embedding_constants(
    table: QuadratureTable, a: Coefficient, qs: list[float], settings: AscentSettings | None = None, seed: int = 0
) -> EmbeddingConstants:
    c = estimate_c(table, a, settings, seed) if case_tag(table.params) is CaseTag.CASE_I else None
    cq = {float(q): estimate_cq(table, a, float(q), settings, seed) for q in qs}
    constants = EmbeddingConstants(c, cq, table.mesh.n, table.mesh.truncation_radius)
    if not constants.converged:
        logger.warning("Some embedding constant ascents stopped before converging; values are still lower estimates")
    return constants
