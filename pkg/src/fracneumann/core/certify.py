"""Hypothesis checks and lambda intervals for the three-solution results.

Every constant that enters a certificate is a discrete estimate tagged with the mesh resolution it came from,
so the certificates are numerical statements, not proofs.
"""

import dataclasses
import logging
import math
from collections.abc import Callable
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar

from fracneumann.core.constants import CaseTag, CertificateKind
from fracneumann.core.kernel import DEFAULT_ORDER
from fracneumann.core.mesh import FloatArray, FracParams, Mesh, case_tag
from fracneumann.core.model import (
    GROWTH_TOL,
    Coefficient,
    Example31Spec,
    Nonlinearity,
    example31_psi,
    growth_check,
    rho_lower_bound,
)
from fracneumann.core.space import EmbeddingConstants

logger = logging.getLogger(__name__)

GAMMA_GRID = 501
GROWTH_GRID = 2001
ASYMPTOTIC_SAMPLES = (1e2, 1e4, 1e6)
DECAY_THRESHOLD = 1e-6
DISCLAIMER = (
    "numerical, mesh-dependent: embedding constants are discrete lower estimates, "
    "so the hypothesis checks are optimistic"
)

Weight = Callable[[FloatArray], FloatArray]


class HypothesisError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class TaggedConstant:
    value: float
    mesh_n: int

    def to_json(self) -> dict[str, Any]:
        return {"value": self.value, "mesh_n": self.mesh_n}


@dataclasses.dataclass(frozen=True)
class HypothesisResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"passed": self.passed, "margin": self.margin, "detail": self.detail}


@dataclasses.dataclass(frozen=True)
class Certificate:
    """Hypothesis verdicts and the lambda interval they certify.

    `candidate` holds the raw endpoint formulas whenever they are defined; `interval` only when every
    hypothesis passed and the endpoints are ordered.
    """

    kind: CertificateKind
    case: CaseTag
    constants: dict[str, TaggedConstant]
    hypotheses: list[HypothesisResult]
    candidate: tuple[float, float] | None
    diagnostics: dict[str, Any] = dataclasses.field(default_factory=dict)
    disclaimers: tuple[str, ...] = (DISCLAIMER,)

    @property
    def hypotheses_passed(self) -> bool:
        return all(result.passed for result in self.hypotheses)

    @property
    def interval(self) -> tuple[float, float] | None:
        if self.candidate is None or not self.hypotheses_passed:
            return None
        lower, upper = self.candidate
        return self.candidate if lower < upper else None

    @property
    def passed(self) -> bool:
        return self.interval is not None

    def hypothesis(self, name: str) -> HypothesisResult:
        return next(result for result in self.hypotheses if result.name == name)

    def to_json(self) -> dict[str, Any]:
        def interval_json(bounds: tuple[float, float] | None) -> dict[str, float] | None:
            return None if bounds is None else {"lower": bounds[0], "upper": bounds[1]}

        return {
            "kind": str(self.kind),
            "case": str(self.case),
            "passed": self.passed,
            "constants": {name: constant.to_json() for name, constant in self.constants.items()},
            "hypotheses": {result.name: result.to_json() for result in self.hypotheses},
            "candidate": interval_json(self.candidate),
            "interval": interval_json(self.interval),
            "diagnostics": self.diagnostics,
            "disclaimers": list(self.disclaimers),
        }


def _inequality(name: str, lhs: float, rhs: float, detail: str = "") -> HypothesisResult:
    """lhs > rhs, margin lhs - rhs."""
    return HypothesisResult(name, bool(lhs > rhs), float(lhs - rhs), detail)


def _sample_points(mesh: Mesh, nl: Nonlinearity) -> FloatArray:
    nodes = mesh.nodes[mesh.interior_nodes]
    return nodes[:1] if nl.autonomous else nodes


def _integrate_primitive(nl: Nonlinearity, mesh: Mesh, xi: float, order: int = DEFAULT_ORDER) -> float:
    """Integral of H(x, xi) over the domain for a constant xi."""
    quadrature = mesh.interior_quadrature(order)
    values = nl.primitive_values(quadrature.points, np.full(len(quadrature.weights), xi))
    return math.fsum(quadrature.weights * values)


def _sup_primitive(nl: Nonlinearity, point: FloatArray, gamma: float) -> float:
    """sup of H(point, xi) over |xi| <= gamma: a 501-point grid, then golden-section around the best node."""
    grid = np.linspace(-gamma, gamma, GAMMA_GRID)
    values = nl.primitive_values(np.repeat(point[None, :], len(grid), axis=0), grid)
    best = int(np.argmax(values))
    best_value = float(values[best])
    if 0 < best < len(grid) - 1:

        def negative(xi: float) -> float:
            return -float(nl.primitive_values(point[None, :], np.array([np.clip(xi, -gamma, gamma)]))[0])

        try:
            refined = minimize_scalar(negative, bracket=(grid[best - 1], grid[best], grid[best + 1]), method="golden")
            best_value = max(best_value, -float(refined.fun))
        except ValueError:
            logger.debug(f"Golden-section bracket rejected around xi = {grid[best]:.6g}; keeping the grid value")
    return best_value


def big_gamma(nl: Nonlinearity, gamma: float, mesh: Mesh, order: int = DEFAULT_ORDER) -> float:
    """Integral over the domain of sup_{|xi| <= gamma} H(x, xi)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    quadrature = mesh.interior_quadrature(order)
    if nl.autonomous:
        return _sup_primitive(nl, quadrature.points[0], gamma) * mesh.measure
    sups = np.array([_sup_primitive(nl, point, gamma) for point in quadrature.points])
    return math.fsum(quadrature.weights * sups)


@dataclasses.dataclass(frozen=True)
class Case2Constants:
    kappa: float
    l1: float
    l2: float


def case2_constants(a: Coefficient, c1: float, cq: float, params: FracParams, q: float) -> Case2Constants:
    """kappa = (p / ||a||_1)^(1/p), L1 = c1 ||a||_1 / p^((p-1)/p), L2 = c_q^q ||a||_1 / (q p^((p-q)/p))."""
    if c1 <= 0 or cq <= 0:
        raise ValueError(f"embedding constants must be positive, got c1={c1}, c_q={cq}")
    p = params.p
    norm = a.l1_norm
    return Case2Constants(
        kappa=(p / norm) ** (1.0 / p),
        l1=c1 * norm / p ** ((p - 1.0) / p),
        l2=cq**q * norm / (q * p ** ((p - q) / p)),
    )


def _growth_samples(t_max: float) -> FloatArray:
    tails = np.array(ASYMPTOTIC_SAMPLES)
    return np.concatenate([np.linspace(-t_max, t_max, GROWTH_GRID), tails, -tails])


def _bound_ratios(nl: Nonlinearity, weight: Weight, t: float, points: FloatArray, t_max: float) -> FloatArray:
    xi = _growth_samples(t_max)
    x_all = np.repeat(points, len(xi), axis=0)
    xi_all = np.tile(xi, len(points))
    bound = weight(x_all) * (1.0 + np.abs(xi_all) ** t)
    primitive = nl.primitive_values(x_all, xi_all)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(bound > 0, primitive / bound, np.where(primitive > 0, np.inf, 0.0))


def _check_primitive_bound(
    name: str, nl: Nonlinearity, weight: Weight, t: float, p: float, mesh: Mesh, t_max: float
) -> HypothesisResult:
    if t >= p:
        raise HypothesisError(f"({name}) needs t < p, got t={t}, p={p}")
    worst = float(_bound_ratios(nl, weight, t, _sample_points(mesh, nl), t_max).max())
    return HypothesisResult(name, worst <= 1 + GROWTH_TOL, 1.0 - worst, f"worst H / bound ratio {worst:.6g}")


def check_ah1(nl: Nonlinearity, mu: float, t: float, p: float, mesh: Mesh, t_max: float) -> HypothesisResult:
    """Sampled H(x, xi) <= mu (1 + |xi|^t), including far samples at |xi| in {1e2, 1e4, 1e6}."""
    return _check_primitive_bound("Ah1", nl, lambda x: np.full(len(x), mu), t, p, mesh, t_max)


def check_bh1(nl: Nonlinearity, b: float, t: float, p: float, mesh: Mesh, t_max: float) -> HypothesisResult:
    """Sampled H(x, xi) <= b (1 + |xi|^t)."""
    return _check_primitive_bound("Bh1", nl, lambda x: np.full(len(x), b), t, p, mesh, t_max)


def suggest_growth_bound(nl: Nonlinearity, t: float, mesh: Mesh, t_max: float) -> float:
    """Smallest constant b passing the sampled H <= b (1 + |xi|^t) check."""
    ratios = _bound_ratios(nl, lambda x: np.ones(len(x)), t, _sample_points(mesh, nl), t_max)
    return max(float(ratios.max()), 0.0)


@dataclasses.dataclass(frozen=True)
class CaseIInputs:
    gamma: float
    eta: float
    mu: float
    t: float

    def __post_init__(self) -> None:
        if self.gamma <= 0 or self.eta <= 0:
            raise HypothesisError(f"gamma and eta must be positive, got gamma={self.gamma}, eta={self.eta}")
        if self.eta <= self.gamma:
            raise HypothesisError(f"hypothesis eta > gamma violated: eta={self.eta}, gamma={self.gamma}")
        if self.mu < 0:
            raise HypothesisError(f"mu must be nonnegative, got {self.mu}")


@dataclasses.dataclass(frozen=True)
class CaseIIInputs:
    epsilon: float
    delta: float
    b: float
    t: float

    def __post_init__(self) -> None:
        if self.epsilon <= 0 or self.delta <= 0:
            raise HypothesisError(f"epsilon and delta must be positive, got {self.epsilon}, {self.delta}")
        if self.b <= 0:
            raise HypothesisError(f"b must be positive, got {self.b}")


def case1_endpoints(
    gamma: float, eta: float, big_gamma_value: float, c: float, a_norm: float, h_eta: float, p: float
) -> tuple[float, float]:
    """(eta^p ||a|| / (p int H(eta) - p Gamma), gamma^p / (p c^p Gamma))."""
    return eta**p * a_norm / (p * h_eta - p * big_gamma_value), gamma**p / (p * c**p * big_gamma_value)


def interval_case1(
    inputs: CaseIInputs,
    big_gamma_value: float,
    c: float,
    a: Coefficient,
    nl: Nonlinearity,
    params: FracParams,
    t_max: float | None = None,
) -> Certificate:
    if case_tag(params) is not CaseTag.CASE_I:
        raise HypothesisError(f"Case I needs N < sp and p >= 2, got N={params.dim}, s={params.s}, p={params.p}")
    mesh = a.mesh
    p, a_norm = params.p, a.l1_norm
    t_max = t_max if t_max is not None else 10.0 * inputs.eta
    h_eta = _integrate_primitive(nl, mesh, inputs.eta)
    constants = {
        "c": TaggedConstant(c, mesh.n),
        "Gamma": TaggedConstant(big_gamma_value, mesh.n),
        "a_l1": TaggedConstant(a_norm, mesh.n),
        "H_eta": TaggedConstant(h_eta, mesh.n),
    }
    hypotheses = [check_ah1(nl, inputs.mu, inputs.t, p, mesh, t_max)]
    if big_gamma_value <= 0:
        degenerate = HypothesisResult("Gamma > 0", passed=False, margin=big_gamma_value, detail="degenerate Gamma")
        hypotheses.append(degenerate)
        logger.warning(f"Gamma = {big_gamma_value:.6g} is not positive; no interval can be formed")
        return Certificate(CertificateKind.CASE1, CaseTag.CASE_I, constants, hypotheses, candidate=None)

    weight = 1.0 + c**p * a_norm
    hypotheses.append(_inequality("Ah2", h_eta / inputs.eta**p, weight / big_gamma_value, "as stated"))
    hypotheses.append(
        _inequality("Ah2 chain", h_eta / (weight * inputs.eta**p), big_gamma_value / inputs.gamma**p, "ordering form")
    )
    candidate = None
    if h_eta > big_gamma_value:
        candidate = case1_endpoints(inputs.gamma, inputs.eta, big_gamma_value, c, a_norm, h_eta, p)
    certificate = Certificate(CertificateKind.CASE1, CaseTag.CASE_I, constants, hypotheses, candidate)
    logger.info(f"Case I certificate: {'passed' if certificate.passed else 'failed'}, candidate {candidate}")
    return certificate


def case2_endpoints(
    epsilon: float, delta: float, constants: Case2Constants, a_norm: float, h_delta: float, nl: Nonlinearity, p: float
) -> tuple[float, float]:
    """(delta^p ||a|| / (p int H(delta)), ||a|| / (p (a1 L1 / eps^(p-1) + a2 L2 eps^(q-p))))."""
    denominator = nl.a1 * constants.l1 / epsilon ** (p - 1.0) + nl.a2 * constants.l2 * epsilon ** (nl.q - p)
    return delta**p * a_norm / (p * h_delta), a_norm / (p * denominator)


def interval_case2(
    inputs: CaseIIInputs,
    constants: Case2Constants,
    c1: float,
    cq: float,
    a: Coefficient,
    nl: Nonlinearity,
    params: FracParams,
    t_max: float | None = None,
) -> Certificate:
    if case_tag(params) is not CaseTag.CASE_II:
        raise HypothesisError(f"Case II needs N >= sp >= 1, got N={params.dim}, sp={params.sp}")
    eps, delta = inputs.epsilon, inputs.delta
    if delta <= eps * constants.kappa:
        raise HypothesisError(
            f"hypothesis δ > εκ violated: δ = {delta:.6g}, εκ = {eps * constants.kappa:.6g} (κ = {constants.kappa:.6g})"
        )
    mesh = a.mesh
    p, q, a_norm = params.p, nl.q, a.l1_norm
    t_max = t_max if t_max is not None else 10.0 * delta
    h_delta = _integrate_primitive(nl, mesh, delta)
    t_delta = delta**p * a_norm / p
    growth = nl.a1 * constants.l1 / eps ** (p - 1.0) + nl.a2 * constants.l2 * eps ** (q - p)
    tagged = {
        "c1": TaggedConstant(c1, mesh.n),
        "c_q": TaggedConstant(cq, mesh.n),
        "kappa": TaggedConstant(constants.kappa, mesh.n),
        "L1": TaggedConstant(constants.l1, mesh.n),
        "L2": TaggedConstant(constants.l2, mesh.n),
        "a_l1": TaggedConstant(a_norm, mesh.n),
        "H_delta": TaggedConstant(h_delta, mesh.n),
    }
    hypotheses = [
        check_bh1(nl, inputs.b, inputs.t, p, mesh, t_max),
        _inequality("Bh2", h_delta / delta**p, growth),
        _inequality("eps^p < T(u_delta)", t_delta, eps**p),
    ]
    g_bound = p ** (1.0 / p) * c1 * nl.a1 / eps ** (p - 1.0) + p ** (q / p) * cq**q * nl.a2 * eps ** (q - p) / q
    diagnostics: dict[str, Any] = {"T_u_delta": t_delta, "g_eps_bound": g_bound}
    candidate = None
    if h_delta > 0:
        diagnostics["S_over_T"] = h_delta / t_delta
        diagnostics["g_below_S_over_T"] = bool(g_bound < h_delta / t_delta)
        candidate = case2_endpoints(eps, delta, constants, a_norm, h_delta, nl, p)
    certificate = Certificate(CertificateKind.CASE2, CaseTag.CASE_II, tagged, hypotheses, candidate, diagnostics)
    logger.info(f"Case II certificate: {'passed' if certificate.passed else 'failed'}, candidate {candidate}")
    return certificate


@dataclasses.dataclass(frozen=True)
class WeightFunction:
    """Nonnegative weight phi sampled on the interior nodes."""

    mesh: Mesh
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.mesh.interior_nodes),):
            raise ValueError(f"phi needs {len(self.mesh.interior_nodes)} interior nodal values, got {values.shape}")

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "WeightFunction":
        return cls(mesh, np.full(len(mesh.interior_nodes), float(value)))

    @property
    def l1_norm(self) -> float:
        full = np.zeros(self.mesh.node_count)
        full[self.mesh.interior_nodes] = np.abs(self.values)
        quadrature = self.mesh.interior_quadrature(2)
        return math.fsum(quadrature.weights * quadrature.interpolate(full))

    @property
    def linf_norm(self) -> float:
        return float(np.abs(self.values).max())


def corollary_endpoints(
    delta: float, a_norm: float, phi_l1: float, phi_linf: float, psi_primitive: float, growth: float, p: float
) -> tuple[float, float]:
    """(delta^p ||a|| / (p ||phi||_1 Psi(delta)), ||a|| / (p ||phi||_inf (a1 L1 + a2 L2)))."""
    return delta**p * a_norm / (p * phi_l1 * psi_primitive), a_norm / (p * phi_linf * growth)


def decay_check(psi: Nonlinearity, beta: float, p: float) -> HypothesisResult:
    """psi(t) / t^beta sampled at 1e2, 1e4, 1e6: nonincreasing and at most 1e-6 at the last sample."""
    if not 0 <= beta < p - 1:
        raise HypothesisError(f"(phi3) needs 0 <= beta < p - 1, got beta={beta}, p={p}")
    t = np.array(ASYMPTOTIC_SAMPLES)
    ratios = psi(np.zeros((len(t), 1)), t) / t**beta
    passed = bool(ratios[-1] <= DECAY_THRESHOLD and np.all(np.diff(ratios) <= 0))
    return HypothesisResult("phi3", passed, DECAY_THRESHOLD - float(ratios[-1]), f"ratios {ratios.tolist()}")


def corollary31(
    psi: Nonlinearity,
    phi: WeightFunction,
    delta: float,
    beta: float,
    constants: Case2Constants,
    a: Coefficient,
    params: FracParams,
    t_max: float | None = None,
) -> Certificate:
    """phi(x) psi(u) right-hand side: checks (phi1)-(phi3) and delta > kappa, then the corollary interval."""
    p, a_norm = params.p, a.l1_norm
    origin = float(psi(np.zeros((1, 1)), np.zeros(1))[0])
    if origin == 0:
        raise HypothesisError("psi(0) != 0 is required, got psi(0) = 0")
    if np.any(phi.values < 0) or phi.linf_norm == 0:
        raise HypothesisError("phi must be nonnegative and not identically zero")
    t_max = t_max if t_max is not None else 10.0 * delta
    growth = psi.a1 * constants.l1 + psi.a2 * constants.l2
    psi_delta = float(psi.primitive_values(np.zeros((1, 1)), np.array([delta]))[0])
    ratio = phi.linf_norm / phi.l1_norm
    samples = growth_check(psi, np.zeros((1, 1)), t_max)
    grid = np.linspace(-t_max, t_max, GROWTH_GRID)
    nonnegative = float(psi(np.zeros((len(grid), 1)), grid).min())
    hypotheses = [
        HypothesisResult("psi >= 0", nonnegative >= 0, nonnegative),
        HypothesisResult(
            "phi1", samples.passed, 1.0 - samples.worst_ratio, f"worst ratio at t = {samples.worst_t:.6g}"
        ),
        _inequality("delta > kappa", delta, constants.kappa),
        _inequality("phi2", psi_delta / delta**p, ratio * growth),
        decay_check(psi, beta, p),
    ]
    mesh_n = a.mesh.n
    tagged = {
        "kappa": TaggedConstant(constants.kappa, mesh_n),
        "L1": TaggedConstant(constants.l1, mesh_n),
        "L2": TaggedConstant(constants.l2, mesh_n),
        "a_l1": TaggedConstant(a_norm, mesh_n),
        "phi_l1": TaggedConstant(phi.l1_norm, mesh_n),
        "Psi_delta": TaggedConstant(psi_delta, mesh_n),
    }
    candidate = None
    if psi_delta > 0:
        candidate = corollary_endpoints(delta, a_norm, phi.l1_norm, phi.linf_norm, psi_delta, growth, p)
    case = case_tag(params)
    certificate = Certificate(CertificateKind.COROLLARY, case, tagged, hypotheses, candidate)
    logger.info(f"Corollary certificate: {'passed' if certificate.passed else 'failed'}, candidate {candidate}")
    return certificate


def example31_endpoints(
    rho: float, a_norm: float, measure: float, psi_rho: float, l1: float, l2: float, p: float
) -> tuple[float, float]:
    """(rho^p ||a|| / (p |Omega| psi(rho)), ||a|| / (p (L1 + L2)))."""
    return rho**p * a_norm / (p * measure * psi_rho), a_norm / (p * (l1 + l2))


def certify_example31(
    spec: Example31Spec, constants: EmbeddingConstants, a: Coefficient, beta: float | None = None
) -> tuple[Certificate, float]:
    """Certificate for the psi instance with phi = 1, and the rho it was issued for.

    The primary interval is the corollary one (Psi(rho) in the lower endpoint); the interval with psi(rho) is
    reported alongside, with the relative discrepancy of the lower endpoints.
    """
    params, q = spec.params, spec.q
    missing = [value for value in (1.0, q) if value not in constants.cq]
    if missing:
        raise ValueError(f"embedding constants for q in {missing} are needed but were not computed")
    c1, cq = constants.cq[1.0].value, constants.cq[q].value
    mesh = a.mesh
    derived = case2_constants(a, c1, cq, params, q)
    bound = rho_lower_bound(derived.kappa, q, params.p, derived.l1, derived.l2, mesh.measure)
    rho = spec.rho if spec.rho is not None else bound + spec.rho_offset
    if rho <= bound:
        raise HypothesisError(f"ρ > max{{κ, (q(L1+L2)/|Ω|)^(1/(q-p))}} violated: ρ = {rho:.6g}, bound = {bound:.6g}")
    logger.info(f"Using rho = {rho:.12g} (lower bound {bound:.12g})")

    psi = spec.nonlinearity(rho)
    beta = beta if beta is not None else 0.5 * (params.p - 1.0)
    phi = WeightFunction.constant(mesh, 1.0)
    corollary = corollary31(psi, phi, rho, beta, derived, a, params, t_max=10.0 * rho)
    a_norm = a.l1_norm
    psi_rho = float(example31_psi(rho, rho, q))
    verbatim = example31_endpoints(rho, a_norm, mesh.measure, psi_rho, derived.l1, derived.l2, params.p)
    chain = _inequality("chain", rho ** (q - params.p) / q, (derived.l1 + derived.l2) / mesh.measure)
    diagnostics: dict[str, Any] = {
        "rho": rho,
        "rho_lower_bound": bound,
        "verbatim_interval": {"lower": verbatim[0], "upper": verbatim[1]},
        "psi_rho": psi_rho,
    }
    if corollary.candidate is not None:
        diagnostics["lower_endpoint_discrepancy"] = abs(verbatim[0] - corollary.candidate[0]) / corollary.candidate[0]
    tagged = {
        **corollary.constants,
        "c1": TaggedConstant(c1, mesh.n),
        "c_q": TaggedConstant(cq, mesh.n),
    }
    certificate = Certificate(
        CertificateKind.EXAMPLE31,
        case_tag(params),
        tagged,
        [*corollary.hypotheses, chain],
        corollary.candidate,
        diagnostics,
    )
    logger.info(f"Example certificate: {'passed' if certificate.passed else 'failed'}, interval {certificate.interval}")
    return certificate, rho
