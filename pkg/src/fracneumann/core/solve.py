"""Multistart deflated search for distinct discrete critical points of J = T - lam S."""

import dataclasses
import logging
from collections.abc import Callable
from typing import Any

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov
from scipy.sparse.linalg import LinearOperator

from fracneumann.core.energy import EnergyBreakdown, ProblemInstance, exterior_neumann_values, weak_residual
from fracneumann.core.kernel import assemble_table
from fracneumann.core.log_handlers import log_duration
from fracneumann.core.mesh import FloatArray
from fracneumann.core.optimize import armijo_backtrack, barzilai_borwein
from fracneumann.core.space import DiscreteFunction, NormOperator

logger = logging.getLogger(__name__)

INTERNAL_TOLERANCE_FACTOR = 0.5
ENERGY_FLOOR_GAP = 1.0
SADDLE_DEFLATED_TOL = 1e-3
SADDLE_MAX_ITERATIONS = 200
FRESH_TOLERANCE_FACTOR = 10.0


@dataclasses.dataclass(frozen=True)
class SolveConfig:
    lam: float
    seed: int
    tolerance: float = 1e-6
    max_iterations: int = 20000
    starts: int = 12
    deflation_shift: float = 1.0
    deflation_power: float | None = None
    distinctness: float = 1e-3
    k_target: int = 3

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.tolerance <= 0 or self.distinctness <= 0:
            raise ValueError("tolerance and distinctness must be positive")
        if self.max_iterations < 1 or self.starts < 1 or self.k_target < 1:
            raise ValueError("max_iterations, starts and k_target must be positive")
        if self.deflation_shift < 0:
            raise ValueError(f"deflation shift must be nonnegative, got {self.deflation_shift}")
        if self.deflation_power is not None and self.deflation_power <= 0:
            raise ValueError(f"deflation power must be positive, got {self.deflation_power}")


@dataclasses.dataclass(frozen=True)
class DescentResult:
    values: FloatArray
    converged: bool
    iterations: int
    residual: float
    energies: list[float]


def _descend(
    objective: Callable[[FloatArray], float],
    gradient: Callable[[FloatArray], FloatArray],
    stop: Callable[[FloatArray, FloatArray], bool],
    start: FloatArray,
    preconditioner: FloatArray,
    max_iterations: int,
) -> tuple[FloatArray, bool, int, list[float]]:
    """Diagonally preconditioned gradient descent, BB trial steps and Armijo backtracking."""
    values = start.copy()
    value = objective(values)
    energies = [value]
    step = 1.0
    previous: tuple[FloatArray, FloatArray] | None = None
    for iteration in range(1, max_iterations + 1):
        grad = gradient(values)
        if stop(values, grad):
            return values, True, iteration - 1, energies
        direction = -grad / preconditioner
        slope = float(grad @ grad / preconditioner)
        if previous is not None:
            trial = barzilai_borwein(values - previous[0], grad - previous[1], preconditioner)
            step = step if trial is None else trial

        def candidate(t: float, values: FloatArray = values, direction: FloatArray = direction) -> FloatArray:
            return values + t * direction

        accepted = armijo_backtrack(objective, candidate, value, slope, step)
        if accepted is None:
            logger.debug(f"Line search stalled after {iteration} iterations at energy {value:.12g}")
            return values, stop(values, grad), iteration, energies
        previous = (values, grad)
        values, value, step = accepted.point, accepted.value, accepted.step
        energies.append(value)
    return values, stop(values, gradient(values)), max_iterations, energies


def _residual_stop(instance: ProblemInstance, tolerance: float) -> Callable[[FloatArray, FloatArray], bool]:
    hat_norms = instance.operator.hat_norms

    def stop(_values: FloatArray, grad: FloatArray) -> bool:
        return bool(np.max(np.abs(grad) / hat_norms) <= INTERNAL_TOLERANCE_FACTOR * tolerance)

    return stop


def descend(instance: ProblemInstance, lam: float, start: DiscreteFunction, config: SolveConfig) -> DescentResult:
    """Minimize J from `start`; the returned residual is recomputed independently of the descent."""
    values, _, iterations, energies = _descend(
        lambda v: instance.energy(v, lam),
        lambda v: instance.gradient(v, lam),
        _residual_stop(instance, config.tolerance),
        start.values,
        instance.operator.preconditioner,
        config.max_iterations,
    )
    u = DiscreteFunction(instance.mesh, values)
    residual = weak_residual(u, instance.coefficient, instance.nonlinearity, lam, instance.table)
    return DescentResult(values, residual <= config.tolerance, iterations, residual, energies)


@dataclasses.dataclass
class DeflationOperator:
    """Multiplicative deflation around the accepted solutions, distances measured in the W norm."""

    operator: NormOperator
    shift: float
    power: float
    solutions: list[FloatArray] = dataclasses.field(default_factory=list)

    def add_solution(self, values: FloatArray) -> None:
        self.solutions.append(values.copy())

    def _distance_and_gradient(self, values: FloatArray, solution: FloatArray) -> tuple[np.float64, FloatArray]:
        difference = values - solution
        distance = np.float64(self.operator.norm(difference))
        # gradient of ||v|| is ||v||^(1-p) T'(v)
        gradient = distance ** (1.0 - self.operator.p) * self.operator.t_gradient(difference)
        return distance, gradient

    def energy_factor(self, values: FloatArray) -> tuple[float, FloatArray]:
        """prod_w (1 + shift / ||u - w||^power) and its gradient; infinite on an accepted solution."""
        factor = np.float64(1.0)
        log_gradient = np.zeros_like(values)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            for solution in self.solutions:
                distance, gradient = self._distance_and_gradient(values, solution)
                term = 1.0 + self.shift * distance ** (-self.power)
                factor *= term
                log_gradient += -self.power * self.shift * distance ** (-self.power - 1.0) / term * gradient
            return float(factor), factor * log_gradient

    def residual_factor(self, values: FloatArray) -> float:
        """prod_w (||u - w||^-power + shift)."""
        with np.errstate(divide="ignore", over="ignore"):
            terms = [np.float64(self.operator.norm(values - w)) ** (-self.power) + self.shift for w in self.solutions]
            return float(np.prod(terms))


def _deflated_descend(
    instance: ProblemInstance, lam: float, start: FloatArray, deflation: DeflationOperator, config: SolveConfig
) -> tuple[FloatArray, int]:
    """Descent on (J - floor) * deflation factor, the floor sitting one unit below the lowest accepted energy."""
    floor = min(instance.energy(w, lam) for w in deflation.solutions) - ENERGY_FLOOR_GAP
    hat_norms = instance.operator.hat_norms

    def objective(values: FloatArray) -> float:
        factor, _ = deflation.energy_factor(values)
        return (instance.energy(values, lam) - floor) * factor

    def gradient(values: FloatArray) -> FloatArray:
        factor, factor_gradient = deflation.energy_factor(values)
        return instance.gradient(values, lam) * factor + (instance.energy(values, lam) - floor) * factor_gradient

    def stop(values: FloatArray, grad: FloatArray) -> bool:
        factor, _ = deflation.energy_factor(values)
        return bool(np.max(np.abs(grad) / hat_norms) <= INTERNAL_TOLERANCE_FACTOR * config.tolerance * factor)

    values, _, iterations, _ = _descend(
        objective, gradient, stop, start, instance.operator.preconditioner, config.max_iterations
    )
    return values, iterations


def _newton(
    function: Callable[[FloatArray], FloatArray], start: FloatArray, inverse_diagonal: FloatArray, tol: float
) -> FloatArray:
    size = len(start)
    preconditioner = LinearOperator((size, size), matvec=lambda v: inverse_diagonal * np.ravel(v), dtype=np.float64)
    try:
        return np.asarray(
            newton_krylov(function, start, f_tol=tol, maxiter=SADDLE_MAX_ITERATIONS, inner_M=preconditioner)
        )
    except NoConvergence as exc:
        return np.asarray(exc.args[0]) if exc.args else start
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.debug(f"Newton-Krylov iteration broke down: {exc}")
        return start


def _saddle_search(
    instance: ProblemInstance, lam: float, start: FloatArray, deflation: DeflationOperator, config: SolveConfig
) -> FloatArray:
    """Deflated Newton-Krylov on the scaled gradient, then an undeflated polish; reaches saddles as well as minima."""
    hat_norms = instance.operator.hat_norms
    inverse_diagonal = hat_norms / instance.operator.preconditioner

    def deflated(values: FloatArray) -> FloatArray:
        return deflation.residual_factor(values) * instance.gradient(values, lam) / hat_norms

    def plain(values: FloatArray) -> FloatArray:
        return instance.gradient(values, lam) / hat_norms

    rough = _newton(deflated, start, inverse_diagonal, SADDLE_DEFLATED_TOL)
    if not np.all(np.isfinite(rough)):
        return start
    return _newton(plain, rough, inverse_diagonal, INTERNAL_TOLERANCE_FACTOR * config.tolerance)


@dataclasses.dataclass(frozen=True)
class SolutionPoint:
    u: DiscreteFunction
    energy: float
    residual: float
    neumann_max: float
    iterations: int
    start_index: int
    stage: str

    def to_json(self) -> dict[str, Any]:
        return {
            "energy": self.energy,
            "residual": self.residual,
            "neumann_max": self.neumann_max,
            "iterations": self.iterations,
            "start_index": self.start_index,
            "stage": self.stage,
            "sup_norm": float(np.abs(self.u.interior_values).max()),
            "values": self.u.values.tolist(),
        }


@dataclasses.dataclass(frozen=True)
class SearchFailure:
    start_index: int
    stage: str
    reason: str
    residual: float

    def to_json(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class SolveReport:
    """Outcome of one deflated search.

    Serialized to solve.json by to_json. Wall time is excluded from the payload and only logged, so two runs with
    the same seed produce identical files.
    """

    lam: float
    k_target: int
    points: list[SolutionPoint]
    failures: list[SearchFailure]

    @property
    def shortfall(self) -> bool:
        return len(self.points) < self.k_target

    @property
    def distances(self) -> list[list[float]]:
        """Pairwise sup-distances on interior nodes."""
        interiors = [point.u.interior_values for point in self.points]
        return [[float(np.abs(a - b).max()) for b in interiors] for a in interiors]

    def to_json(self) -> dict[str, Any]:
        return {
            "lam": self.lam,
            "k_target": self.k_target,
            "found": len(self.points),
            "shortfall": self.shortfall,
            "points": [point.to_json() for point in self.points],
            "distances": self.distances,
            "failures": [failure.to_json() for failure in self.failures],
        }


def start_functions(
    instance: ProblemInstance, config: SolveConfig, delta: float, epsilon: float
) -> list[DiscreteFunction]:
    """0, +u_delta, -u_delta, then smooth seeded random starts.

    The random starts cycle through the norms eps, (eps + T(u_delta))/2 and 2 T(u_delta).
    """
    mesh = instance.mesh
    p = instance.params.p
    t_delta = delta**p * instance.coefficient.l1_norm / p
    scales = (epsilon, 0.5 * (epsilon + t_delta), 2.0 * t_delta)
    u_delta = np.full(mesh.node_count, float(delta))
    starts = [np.zeros(mesh.node_count), u_delta, -u_delta]
    rng = np.random.default_rng(config.seed)
    index = 0
    while len(starts) < config.starts:
        direction = instance.operator.solve(rng.standard_normal(mesh.node_count))
        starts.append(scales[index % len(scales)] * direction / instance.operator.norm(direction))
        index += 1
    return [DiscreteFunction(mesh, values) for values in starts[: config.starts]]


def deflate_and_search(
    instance: ProblemInstance, lam: float, config: SolveConfig, delta: float = 1.0, epsilon: float | None = None
) -> SolveReport:
    """Up to k_target distinct verified critical points: plain descent for the first point, deflated descent
    plus polish for later ones, then a deflated Newton-Krylov pass over the starts that found nothing new.

    Acceptance only looks at the undeflated residual and the sup-distance to the points already found.
    """
    epsilon = epsilon if epsilon is not None else 0.5 * delta
    power = config.deflation_power if config.deflation_power is not None else instance.params.p
    deflation = DeflationOperator(instance.operator, config.deflation_shift, power)
    starts = start_functions(instance, config, delta, epsilon)
    points: list[SolutionPoint] = []
    failures: list[SearchFailure] = []

    def consider(values: FloatArray, start_index: int, stage: str, iterations: int) -> bool:
        u = DiscreteFunction(instance.mesh, values)
        residual = weak_residual(u, instance.coefficient, instance.nonlinearity, lam, instance.table)
        if not np.isfinite(residual) or residual > config.tolerance:
            failures.append(SearchFailure(start_index, stage, "residual above tolerance", float(residual)))
            return False
        for index, point in enumerate(points):
            if float(np.abs(u.interior_values - point.u.interior_values).max()) < config.distinctness:
                failures.append(SearchFailure(start_index, stage, f"duplicate of point {index}", residual))
                return False
        neumann = exterior_neumann_values(u, instance.params)
        point = SolutionPoint(
            u=u,
            energy=instance.energy(values, lam),
            residual=residual,
            neumann_max=float(np.abs(neumann).max()) if len(neumann) else 0.0,
            iterations=iterations,
            start_index=start_index,
            stage=stage,
        )
        points.append(point)
        deflation.add_solution(values)
        logger.info(
            f"Accepted critical point {len(points)} from start {start_index} ({stage}): "
            f"J = {point.energy:.8g}, residual = {residual:.3e}, sup = {np.abs(u.interior_values).max():.6g}"
        )
        return True

    unproductive = []
    with log_duration(logger, "Deflated search"):
        for index, start in enumerate(starts):
            if len(points) >= config.k_target:
                break
            if not deflation.solutions:
                result = descend(instance, lam, start, config)
                accepted = consider(result.values, index, "descent", result.iterations)
            else:
                deflated, iterations = _deflated_descend(instance, lam, start.values, deflation, config)
                result = descend(instance, lam, DiscreteFunction(instance.mesh, deflated), config)
                accepted = consider(result.values, index, "deflated", iterations + result.iterations)
            if not accepted:
                unproductive.append(index)
        for index in unproductive:
            if len(points) >= config.k_target:
                break
            if not deflation.solutions:
                continue
            candidate = _saddle_search(instance, lam, starts[index].values, deflation, config)
            consider(candidate, index, "saddle", 0)

    report = SolveReport(lam, config.k_target, points, failures)
    if report.shortfall:
        logger.warning(f"Found {len(points)} of {config.k_target} requested critical points")
    return report


@dataclasses.dataclass(frozen=True)
class Verification:
    residual: float
    breakdown: EnergyBreakdown
    neumann_max: float
    order: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= FRESH_TOLERANCE_FACTOR * self.tolerance

    def to_json(self) -> dict[str, Any]:
        return {
            "residual": self.residual,
            "order": self.order,
            "passed": self.passed,
            "neumann_max": self.neumann_max,
            "energy": self.breakdown.to_json(),
        }


def verify_point(instance: ProblemInstance, lam: float, u: DiscreteFunction, tol: float) -> Verification:
    """Residual, energies and exterior Neumann values on a fresh table at twice the Gauss order."""
    order = 2 * instance.table.order
    fresh = instance.with_table(assemble_table(instance.mesh, instance.params, order, instance.table.depth))
    residual = fresh.residual(u.values, lam)
    neumann = exterior_neumann_values(u, instance.params, order=order)
    return Verification(
        residual=residual,
        breakdown=fresh.breakdown(u.values, lam),
        neumann_max=float(np.abs(neumann).max()) if len(neumann) else 0.0,
        order=order,
        tolerance=tol,
    )
