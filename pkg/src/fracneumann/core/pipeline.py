"""Glue between a validated run config and the numerical core: one function per CLI command."""

import dataclasses
import logging
import math
from typing import Any

from fracneumann.core.certify import (
    CaseIIInputs,
    CaseIInputs,
    Certificate,
    WeightFunction,
    big_gamma,
    case2_constants,
    certify_example31,
    corollary31,
    interval_case1,
    interval_case2,
    suggest_growth_bound,
)
from fracneumann.core.constants import CaseTag, CertificateKind, NonlinearityKind
from fracneumann.core.energy import ProblemInstance
from fracneumann.core.kernel import QuadratureTable, assemble_table
from fracneumann.core.log_handlers import log_duration
from fracneumann.core.mesh import FracParams, Mesh, case_tag, critical_exponent
from fracneumann.core.model import Coefficient, Nonlinearity, example31
from fracneumann.core.reports import (
    ASSEMBLE_REPORT,
    CERTIFICATE_REPORT,
    CONSTANTS_REPORT,
    MESH_CSV,
    PAIRS_CSV,
    SOLVE_REPORT,
    solution_csv_name,
    write_report,
)
from fracneumann.core.run_config import CertificateSection, ConfigError, NonlinearitySection, RunConfig
from fracneumann.core.solve import SolveReport, deflate_and_search, verify_point
from fracneumann.core.space import DiscreteFunction, EmbeddingConstants, estimate_embedding_constants, seminorm_p

logger = logging.getLogger(__name__)

GROWTH_RANGE_FACTOR = 10.0


@dataclasses.dataclass(frozen=True)
class Setup:
    config: RunConfig
    params: FracParams
    mesh: Mesh
    table: QuadratureTable
    coefficient: Coefficient


@dataclasses.dataclass(frozen=True)
class CertifiedProblem:
    certificate: Certificate
    nonlinearity: Nonlinearity
    start_level: float
    epsilon: float | None


def prepare(config: RunConfig) -> Setup:
    params = config.params.build()
    mesh = config.mesh.build(params)
    logger.info(
        f"Mesh: {mesh.node_count} nodes, {mesh.element_count} elements, truncation radius {mesh.truncation_radius:.6g}"
    )
    with log_duration(logger, "Quadrature assembly"):
        table = assemble_table(mesh, params, config.quadrature.order, config.quadrature.depth)
    return Setup(config, params, mesh, table, config.coefficient.build(mesh))


def _report(setup: Setup, command: str, **payload: Any) -> dict[str, Any]:  # noqa: ANN401
    return {"command": command, "config": setup.config.effective(), **payload}


def assemble_summary(setup: Setup) -> dict[str, Any]:
    mesh, table = setup.mesh, setup.table
    ones = DiscreteFunction.constant(mesh, 1.0)
    return {
        "case": str(case_tag(setup.params)),
        "critical_exponent": critical_exponent(setup.params),
        "mesh": {
            "n": mesh.n,
            "node_count": mesh.node_count,
            "interior_node_count": len(mesh.interior_nodes),
            "element_count": mesh.element_count,
            "h_min": mesh.h_min,
            "measure": mesh.measure,
            "truncation_radius": mesh.truncation_radius,
            "margin": mesh.margin,
        },
        "quadrature": {
            "order": table.order,
            "depth": table.depth,
            "near_depth": table.near_depth,
            "pairs": len(table.pair_elements),
            "ordered_pairs": table.ordered_pair_count,
            "samples": table.sample_count,
            "tail_relative": table.tail_relative,
        },
        "checks": {"constant_seminorm": seminorm_p(ones, table), "a_l1": setup.coefficient.l1_norm},
    }


def run_assemble(setup: Setup) -> dict[str, Any]:
    report = _report(setup, "assemble", **assemble_summary(setup))
    output = setup.config.output
    write_report(output.path, ASSEMBLE_REPORT, report)
    if output.write_csv:
        setup.mesh.to_csv(output.path / MESH_CSV)
        setup.table.to_csv(output.path / PAIRS_CSV)
    return report


def required_exponents(config: RunConfig) -> list[float]:
    """The configured q values plus 1 and the growth exponent whenever the certificate needs c_1 and c_q."""
    qs = {float(q) for q in config.constants.q}
    certificate = config.certificate
    if certificate is not None and certificate.kind is not CertificateKind.CASE1:
        nonlinearity = _require_nonlinearity(config)
        qs.update({1.0, float(nonlinearity.q)})
    return sorted(qs)


def compute_constants(setup: Setup) -> EmbeddingConstants:
    config = setup.config
    qs = required_exponents(config)
    with log_duration(logger, "Embedding constants"):
        constants = estimate_embedding_constants(
            setup.table, setup.coefficient, qs, config.constants.settings(), config.seed
        )
    summary = ", ".join(f"c_{q:g} = {estimate.value:.8g}" for q, estimate in sorted(constants.cq.items()))
    sup = f"c = {constants.c.value:.8g}" if constants.c is not None else "c not defined (N >= sp)"
    logger.info(f"Embedding constants: {sup}{', ' + summary if summary else ''}")
    return constants


def run_constants(setup: Setup) -> dict[str, Any]:
    constants = compute_constants(setup)
    report = _report(setup, "constants", constants=constants.to_json())
    write_report(setup.config.output.path, CONSTANTS_REPORT, report)
    return report


def _require_nonlinearity(config: RunConfig) -> NonlinearitySection:
    if config.nonlinearity is None:
        raise ConfigError("this command needs a [nonlinearity] section")
    return config.nonlinearity


def _require_certificate(config: RunConfig) -> CertificateSection:
    if config.certificate is None:
        raise ConfigError("this command needs a [certificate] section")
    return config.certificate


def _nonlinearity(section: NonlinearitySection) -> Nonlinearity:
    if section.kind is NonlinearityKind.EXAMPLE31:
        if section.rho is None:
            raise ConfigError("nonlinearity.rho is required unless certificate.kind = 'example31'")
        return example31(section.q, section.rho)
    return section.build()


def _cq(constants: EmbeddingConstants, q: float) -> float:
    return constants.cq[float(q)].value


def certify_problem(setup: Setup, constants: EmbeddingConstants) -> CertifiedProblem:
    config = setup.config
    section = _require_certificate(config)
    nl_section = _require_nonlinearity(config)
    mesh, params, a = setup.mesh, setup.params, setup.coefficient
    match section.kind:
        case CertificateKind.CASE1:
            assert section.gamma is not None and section.eta is not None and section.t is not None
            if constants.c is None:
                raise ConfigError(f"certificate.kind = 'case1' needs N < sp and p >= 2, this is {case_tag(params)}")
            nl = _nonlinearity(nl_section)
            t_max = section.t_max or GROWTH_RANGE_FACTOR * section.eta
            mu = section.mu if section.mu is not None else suggest_growth_bound(nl, section.t, mesh, t_max)
            gamma_value = big_gamma(nl, section.gamma, mesh, setup.table.order)
            certificate = interval_case1(
                CaseIInputs(section.gamma, section.eta, mu, section.t), gamma_value, constants.c.value, a, nl, params,
                t_max,
            )  # fmt: skip
            return CertifiedProblem(certificate, nl, section.eta, None)
        case CertificateKind.CASE2:
            assert section.epsilon is not None and section.delta is not None and section.t is not None
            nl = _nonlinearity(nl_section)
            c1, cq = _cq(constants, 1.0), _cq(constants, nl.q)
            derived = case2_constants(a, c1, cq, params, nl.q)
            t_max = section.t_max or GROWTH_RANGE_FACTOR * section.delta
            b = section.b if section.b is not None else suggest_growth_bound(nl, section.t, mesh, t_max)
            inputs = CaseIIInputs(section.epsilon, section.delta, b, section.t)
            certificate = interval_case2(inputs, derived, c1, cq, a, nl, params, t_max)
            return CertifiedProblem(certificate, nl, section.delta, section.epsilon)
        case CertificateKind.COROLLARY:
            assert section.delta is not None and section.beta is not None
            psi = _nonlinearity(nl_section)
            derived = case2_constants(a, _cq(constants, 1.0), _cq(constants, psi.q), params, psi.q)
            phi = WeightFunction.constant(mesh, section.phi)
            certificate = corollary31(psi, phi, section.delta, section.beta, derived, a, params, section.t_max)
            return CertifiedProblem(certificate, psi, section.delta, None)
        case _:
            if nl_section.kind is not NonlinearityKind.EXAMPLE31:
                raise ConfigError("certificate.kind = 'example31' needs nonlinearity.kind = 'example31'")
            spec = nl_section.example31(params)
            certificate, rho = certify_example31(spec, constants, a, section.beta)
            return CertifiedProblem(certificate, spec.nonlinearity(rho), rho, None)


def certificate_payload(certified: CertifiedProblem, constants: EmbeddingConstants) -> dict[str, Any]:
    return {"certificate": certified.certificate.to_json(), "embedding_constants": constants.to_json()}


def run_certify(setup: Setup) -> tuple[dict[str, Any], CertifiedProblem]:
    constants = compute_constants(setup)
    certified = certify_problem(setup, constants)
    report = _report(setup, "certify", **certificate_payload(certified, constants))
    write_report(setup.config.output.path, CERTIFICATE_REPORT, report)
    return report, certified


def default_lambda(certificate: Certificate) -> float:
    """Geometric mean of the certified interval endpoints."""
    interval = certificate.interval
    if interval is None:
        raise ConfigError("solve.lam is not set and the certificate did not produce an interval")
    return math.sqrt(interval[0] * interval[1])


def solve_problem(setup: Setup, nl: Nonlinearity, lam: float, start_level: float, epsilon: float | None) -> SolveReport:
    section = setup.config.solve
    solve_config = section.build(lam, setup.config.seed)
    instance = ProblemInstance(setup.table, setup.coefficient, nl)
    delta = section.delta if section.delta is not None else start_level
    epsilon = section.epsilon if section.epsilon is not None else epsilon
    logger.info(f"Searching for up to {solve_config.k_target} critical points at lambda = {lam:.8g}")
    return deflate_and_search(instance, lam, solve_config, delta, epsilon)


def solve_payload(setup: Setup, nl: Nonlinearity, report: SolveReport) -> dict[str, Any]:
    instance = ProblemInstance(setup.table, setup.coefficient, nl)
    tolerance = setup.config.solve.tolerance
    payload = report.to_json()
    payload["verification"] = [
        verify_point(instance, report.lam, point.u, tolerance).to_json() for point in report.points
    ]
    return payload


def _write_solutions(setup: Setup, report: SolveReport) -> None:
    output = setup.config.output
    if not output.write_csv:
        return
    for index, point in enumerate(report.points, start=1):
        point.u.to_csv(output.path / solution_csv_name(index))


def _solve_target(setup: Setup) -> tuple[Nonlinearity, float, float, float | None, dict[str, Any]]:
    """Nonlinearity, lambda, start level and epsilon for `solve`, certifying first when the config leaves them open."""
    config = setup.config
    nl_section = _require_nonlinearity(config)
    needs_certificate = config.solve.lam is None or (
        nl_section.kind is NonlinearityKind.EXAMPLE31 and nl_section.rho is None
    )
    if not needs_certificate:
        assert config.solve.lam is not None
        return _nonlinearity(nl_section), config.solve.lam, 1.0, None, {}
    constants = compute_constants(setup)
    certified = certify_problem(setup, constants)
    lam = config.solve.lam if config.solve.lam is not None else default_lambda(certified.certificate)
    extra = {"certified_interval": certified.certificate.to_json()["interval"]}
    return certified.nonlinearity, lam, certified.start_level, certified.epsilon, extra


def run_solve(setup: Setup) -> dict[str, Any]:
    nl, lam, start_level, epsilon, extra = _solve_target(setup)
    with log_duration(logger, "Critical point search"):
        result = solve_problem(setup, nl, lam, start_level, epsilon)
    report = _report(setup, "solve", solve=solve_payload(setup, nl, result), **extra)
    write_report(setup.config.output.path, SOLVE_REPORT, report)
    _write_solutions(setup, result)
    return report


@dataclasses.dataclass(frozen=True)
class PipelineOutcome:
    certified: CertifiedProblem
    solve: SolveReport | None


def run_example31(setup: Setup) -> PipelineOutcome:
    """Constants, then the certificate, then the deflated search at the geometric-mean lambda when certified."""
    config = setup.config
    nl_section = _require_nonlinearity(config)
    if nl_section.kind is not NonlinearityKind.EXAMPLE31:
        raise ConfigError("the example31 pipeline needs nonlinearity.kind = 'example31'")
    if config.certificate is not None and config.certificate.kind is not CertificateKind.EXAMPLE31:
        raise ConfigError("the example31 pipeline needs certificate.kind = 'example31' when a certificate is given")
    if config.certificate is None:
        config = config.model_copy(update={"certificate": CertificateSection(kind=CertificateKind.EXAMPLE31)})
        setup = dataclasses.replace(setup, config=config)
    if case_tag(setup.params) is CaseTag.CASE_I:
        raise ConfigError("the example31 pipeline needs N >= sp")

    constants = compute_constants(setup)
    write_report(config.output.path, CONSTANTS_REPORT, _report(setup, "constants", constants=constants.to_json()))
    certified = certify_problem(setup, constants)
    write_report(
        config.output.path, CERTIFICATE_REPORT, _report(setup, "certify", **certificate_payload(certified, constants))
    )
    if not certified.certificate.passed:
        logger.warning("The certificate did not pass; skipping the critical point search")
        return PipelineOutcome(certified, None)

    lam = config.solve.lam if config.solve.lam is not None else default_lambda(certified.certificate)
    with log_duration(logger, "Critical point search"):
        result = solve_problem(setup, certified.nonlinearity, lam, certified.start_level, certified.epsilon)
    interval = {"certified_interval": certified.certificate.to_json()["interval"]}
    report = _report(setup, "solve", solve=solve_payload(setup, certified.nonlinearity, result), **interval)
    write_report(config.output.path, SOLVE_REPORT, report)
    _write_solutions(setup, result)
    return PipelineOutcome(certified, result)
