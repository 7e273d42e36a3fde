import dataclasses
import logging
import math
from collections.abc import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.interpolate import make_interp_spline

from fracneumann.core.mesh import FloatArray, FracParams, Mesh, critical_exponent

logger = logging.getLogger(__name__)

PRIMITIVE_TOL = 1e-10
GROWTH_TOL = 1e-12
GROWTH_SAMPLES = 2001
NORM_ORDER = 2

HFunction = Callable[[FloatArray, FloatArray], FloatArray]
"""Vectorized h(x, t): points of shape (M, N) and values of shape (M,) to shape (M,)."""


class CoefficientError(ValueError):
    pass


class PrimitiveError(ValueError):
    pass


@dataclasses.dataclass(frozen=True, eq=False)
class Coefficient:
    """Piecewise-multilinear weight a(x) given by its values on the interior nodes."""

    mesh: Mesh
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        expected = len(self.mesh.interior_nodes)
        if values.shape != (expected,):
            raise CoefficientError(f"coefficient needs {expected} interior nodal values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise CoefficientError("coefficient values must be finite")
        if values.min() <= 0:
            worst = int(self.mesh.interior_nodes[np.argmin(values)])
            raise CoefficientError(
                f"coefficient must satisfy essinf a > 0, found {values.min():.6g} at node {worst} "
                f"(x = {self.mesh.nodes[worst].tolist()})"
            )

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "Coefficient":
        return cls(mesh, np.full(len(mesh.interior_nodes), float(value)))

    @classmethod
    def from_callable(cls, mesh: Mesh, fn: Callable[[FloatArray], FloatArray]) -> "Coefficient":
        return cls(mesh, np.asarray(fn(mesh.nodes[mesh.interior_nodes]), dtype=np.float64))

    @property
    def full_values(self) -> FloatArray:
        """Values on every mesh node; exterior entries are zero and never sampled."""
        result = np.zeros(self.mesh.node_count)
        result[self.mesh.interior_nodes] = self.values
        return result

    def at_quadrature(self, order: int) -> FloatArray:
        return self.mesh.interior_quadrature(order).interpolate(self.full_values)

    @property
    def ess_inf(self) -> float:
        return float(self.values.min())

    @property
    def l1_norm(self) -> float:
        quadrature = self.mesh.interior_quadrature(NORM_ORDER)
        return math.fsum(quadrature.weights * self.at_quadrature(NORM_ORDER))

    @property
    def linf_norm(self) -> float:
        return float(self.values.max())

    def scaled(self, factor: float) -> "Coefficient":
        return Coefficient(self.mesh, factor * self.values)


@dataclasses.dataclass(frozen=True)
class Nonlinearity:
    """h(x, t) with the growth data |h(x, t)| <= a1 + a2 |t|^(q - 1) it claims."""

    name: str
    h: HFunction
    a1: float
    a2: float
    q: float
    primitive: HFunction | None = None
    autonomous: bool = True

    def __post_init__(self) -> None:
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError(f"growth constants must be nonnegative, got a1={self.a1}, a2={self.a2}")
        if self.q <= 1:
            raise ValueError(f"growth exponent q must exceed 1, got {self.q}")

    def __call__(self, points: FloatArray, t: FloatArray) -> FloatArray:
        return np.asarray(self.h(np.atleast_2d(points), np.asarray(t, dtype=np.float64)), dtype=np.float64)

    def primitive_values(self, points: FloatArray, xi: FloatArray) -> FloatArray:
        """H at each (point, xi) pair, numerically when no closed form is attached."""
        points = np.atleast_2d(points)
        xi = np.asarray(xi, dtype=np.float64)
        if self.primitive is not None:
            return np.asarray(self.primitive(points, xi), dtype=np.float64)
        return np.array([_numeric_primitive(self, x, float(value)) for x, value in zip(points, xi, strict=True)])


def _numeric_primitive(nl: Nonlinearity, x: FloatArray, xi: float) -> float:
    if xi == 0:
        return 0.0

    def integrand(t: float) -> float:
        return float(nl(x[None, :], np.array([t]))[0])

    lower, upper, sign = (0.0, xi, 1.0) if xi > 0 else (xi, 0.0, -1.0)
    result = quad(integrand, lower, upper, epsabs=PRIMITIVE_TOL, epsrel=PRIMITIVE_TOL, limit=200, full_output=1)
    if len(result) == 4:  # noqa: PLR2004
        raise PrimitiveError(
            f"primitive of {nl.name} did not converge on [{lower}, {upper}] at x = {x.tolist()}: "
            f"{result[3]} (error estimate {result[1]:.3e})"
        )
    return sign * float(result[0])


def primitive_h(nl: Nonlinearity, x: Sequence[float] | FloatArray, xi: float) -> float:
    """H(x, xi), the integral of h(x, .) from 0 to xi."""
    point = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(nl.primitive_values(point, np.array([xi]))[0])


@dataclasses.dataclass(frozen=True)
class GrowthReport:
    worst_ratio: float
    worst_x: tuple[float, ...]
    worst_t: float
    t_max: float

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1 + GROWTH_TOL


def growth_check(nl: Nonlinearity, points: FloatArray, t_max: float, samples: int = GROWTH_SAMPLES) -> GrowthReport:
    """Sampled check of |h(x, t)| <= a1 + a2 |t|^(q - 1) over points x [-t_max, t_max]."""
    points = np.atleast_2d(points)
    t = np.linspace(-t_max, t_max, samples)
    x_all = np.repeat(points, len(t), axis=0)
    t_all = np.tile(t, len(points))
    magnitude = np.abs(nl(x_all, t_all))
    bound = nl.a1 + nl.a2 * np.abs(t_all) ** (nl.q - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, magnitude / bound, np.where(magnitude > 0, np.inf, 0.0))
    worst = int(np.argmax(ratio))
    report = GrowthReport(float(ratio[worst]), tuple(x_all[worst].tolist()), float(t_all[worst]), float(t_max))
    logger.debug(f"Growth check of {nl.name}: worst ratio {report.worst_ratio:.6g} at t = {report.worst_t:.6g}")
    return report


def polynomial(coefficients: Sequence[float], a1: float, a2: float, q: float) -> Nonlinearity:
    """h(t) = c0 + c1 t + c2 t^2 + ..."""
    poly = Polynomial(np.asarray(coefficients, dtype=np.float64))
    integral = poly.integ(lbnd=0.0)
    return Nonlinearity(
        name="polynomial",
        h=lambda _x, t: poly(t),
        a1=a1,
        a2=a2,
        q=q,
        primitive=lambda _x, xi: integral(xi),
    )


def abs_power(offset: float, scale: float, exponent: float, a1: float, a2: float, q: float) -> Nonlinearity:
    """h(t) = offset + scale |t|^exponent."""
    if exponent < 0:
        raise ValueError(f"exponent must be nonnegative, got {exponent}")
    return Nonlinearity(
        name="abs_power",
        h=lambda _x, t: offset + scale * np.abs(t) ** exponent,
        a1=a1,
        a2=a2,
        q=q,
        primitive=lambda _x, xi: offset * xi + scale * np.abs(xi) ** exponent * xi / (exponent + 1.0),
    )


def tabulated(points: Sequence[float], values: Sequence[float], a1: float, a2: float, q: float) -> Nonlinearity:
    """Piecewise-linear h(t) through the given samples, extended linearly beyond them."""
    t_points = np.asarray(points, dtype=np.float64)
    if len(t_points) < 2 or np.any(np.diff(t_points) <= 0):  # noqa: PLR2004
        raise ValueError("tabulated nonlinearity needs at least two strictly increasing sample points")
    spline = make_interp_spline(t_points, np.asarray(values, dtype=np.float64), k=1)
    antiderivative = spline.antiderivative()
    origin = float(antiderivative(0.0))
    return Nonlinearity(
        name="tabulated",
        h=lambda _x, t: spline(t),
        a1=a1,
        a2=a2,
        q=q,
        primitive=lambda _x, xi: antiderivative(xi) - origin,
    )


def example31_psi(t: FloatArray | float, rho: float, q: float) -> FloatArray:
    """1 + |t|^(q-1) up to rho, then (1 + rho^2)(1 + rho^(q-1)) / (1 + t^2)."""
    t = np.asarray(t, dtype=np.float64)
    tail = (1.0 + rho**2) * (1.0 + rho ** (q - 1.0)) / (1.0 + t**2)
    return np.where(t <= rho, 1.0 + np.abs(t) ** (q - 1.0), tail)


def example31_primitive(xi: FloatArray | float, rho: float, q: float) -> FloatArray:
    xi = np.asarray(xi, dtype=np.float64)
    head = xi + np.abs(xi) ** (q - 1.0) * xi / q
    at_rho = rho + rho**q / q
    tail = at_rho + (1.0 + rho**2) * (1.0 + rho ** (q - 1.0)) * (np.arctan(xi) - math.atan(rho))
    return np.where(xi <= rho, head, tail)


def example31(q: float, rho: float) -> Nonlinearity:
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return Nonlinearity(
        name="example31",
        h=lambda _x, t: example31_psi(t, rho, q),
        a1=1.0,
        a2=1.0,
        q=q,
        primitive=lambda _x, xi: example31_primitive(xi, rho, q),
    )


def weighted(phi: Callable[[FloatArray], FloatArray], phi_sup: float, base: Nonlinearity) -> Nonlinearity:
    """h(x, t) = phi(x) psi(t) for a nonnegative weight phi bounded by `phi_sup`."""
    if base.primitive is None:
        raise ValueError("the weighted form needs a base nonlinearity with a closed-form primitive")
    base_primitive = base.primitive
    return Nonlinearity(
        name=f"weighted {base.name}",
        h=lambda x, t: phi(x) * base.h(x, t),
        a1=phi_sup * base.a1,
        a2=phi_sup * base.a2,
        q=base.q,
        primitive=lambda x, xi: phi(x) * base_primitive(x, xi),
        autonomous=False,
    )


@dataclasses.dataclass(frozen=True)
class Example31Spec:
    """psi instance with phi = 1: growth exponent q in (p, p*) and the plateau point rho.

    `rho` of None means rho_lower_bound + rho_offset once the embedding constants are known.
    """

    params: FracParams
    q: float
    rho: float | None = None
    rho_offset: float = 0.1

    def __post_init__(self) -> None:
        if self.params.dim < self.params.sp:
            raise ValueError(f"the psi instance needs N >= sp, got N={self.params.dim}, sp={self.params.sp}")
        upper = critical_exponent(self.params)
        if not self.params.p < self.q < upper:
            raise ValueError(f"q must lie in (p, p*) = ({self.params.p}, {upper}), got {self.q}")
        if self.rho is not None and self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.rho_offset <= 0:
            raise ValueError(f"rho offset must be positive, got {self.rho_offset}")

    def nonlinearity(self, rho: float) -> Nonlinearity:
        return example31(self.q, rho)


def rho_lower_bound(kappa: float, q: float, p: float, l1: float, l2: float, measure: float) -> float:
    """max{kappa, (q (L1 + L2) / |Omega|)^(1/(q - p))}."""
    if q <= p:
        raise ValueError(f"q must exceed p, got q={q}, p={p}")
    return max(kappa, (q * (l1 + l2) / measure) ** (1.0 / (q - p)))
