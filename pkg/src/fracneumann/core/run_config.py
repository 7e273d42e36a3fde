import json
import logging
import sys
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from fracneumann.core.constants import CertificateKind, NonlinearityKind
from fracneumann.core.kernel import DEFAULT_DEPTH, DEFAULT_ORDER, DEFAULT_TAIL_TOL, default_truncation_radius
from fracneumann.core.mesh import Box, FracParams, Mesh, build_mesh
from fracneumann.core.model import Coefficient, Example31Spec, Nonlinearity, abs_power, polynomial, tabulated
from fracneumann.core.optimize import AscentSettings
from fracneumann.core.solve import SolveConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

REPORT_CONFIG_KEY = "config"


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ParamsSection(_Section):
    n_dim: int = Field(default=1, ge=1, le=2)
    s: float
    p: float

    def build(self) -> FracParams:
        return FracParams(s=self.s, p=self.p, dim=self.n_dim)


class MeshSection(_Section):
    lower: list[float]
    upper: list[float]
    n: int = Field(ge=1)
    truncation_radius: float | None = Field(default=None, gt=0)
    tail_tol: float = Field(default=DEFAULT_TAIL_TOL, gt=0, lt=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "MeshSection":
        if len(self.lower) != len(self.upper):
            raise ValueError("mesh.lower and mesh.upper must have the same length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            raise ValueError("mesh.lower must be below mesh.upper on every axis")
        return self

    def box(self) -> Box:
        return Box(tuple(self.lower), tuple(self.upper))

    def build(self, params: FracParams) -> Mesh:
        domain = self.box()
        radius = self.truncation_radius
        if radius is None:
            radius = default_truncation_radius(domain, self.n, params, self.tail_tol)
            logger.debug(f"Truncation radius {radius:.6g} derived from tail tolerance {self.tail_tol:g}")
        return build_mesh(domain, self.n, radius)


class QuadratureSection(_Section):
    order: int = Field(default=DEFAULT_ORDER, ge=2)
    depth: int = Field(default=DEFAULT_DEPTH, ge=2)


class CoefficientSection(_Section):
    kind: Literal["constant", "table"] = "constant"
    value: float | None = None
    points: list[float] | None = None
    values: list[float] | None = None

    @model_validator(mode="after")
    def _check_kind(self) -> "CoefficientSection":
        if self.kind == "table":
            if self.points is None or self.values is None:
                raise ValueError("coefficient.kind = 'table' needs coefficient.points and coefficient.values")
            if len(self.points) != len(self.values) or len(self.points) < 2:  # noqa: PLR2004
                raise ValueError("coefficient.points and coefficient.values need the same length, at least 2")
        elif self.points is not None or self.values is not None:
            raise ValueError("coefficient.points and coefficient.values are only used with kind = 'table'")
        return self

    def build(self, mesh: Mesh) -> Coefficient:
        if self.kind == "constant":
            return Coefficient.constant(mesh, 1.0 if self.value is None else self.value)
        if mesh.dim != 1:
            raise ConfigError("coefficient.kind = 'table' is only available in one dimension")
        points, values = np.asarray(self.points), np.asarray(self.values)
        return Coefficient.from_callable(mesh, lambda x: np.interp(x[:, 0], points, values))


_KIND_KEYS: dict[NonlinearityKind, tuple[str, ...]] = {
    NonlinearityKind.POLYNOMIAL: ("coefficients",),
    NonlinearityKind.ABS_POWER: ("offset", "scale", "exponent"),
    NonlinearityKind.TABULATED: ("points", "values"),
    NonlinearityKind.EXAMPLE31: (),
}
_OPTIONAL_KEYS = ("coefficients", "offset", "scale", "exponent", "points", "values", "rho")


class NonlinearitySection(_Section):
    kind: NonlinearityKind
    coefficients: list[float] | None = None
    offset: float | None = None
    scale: float | None = None
    exponent: float | None = None
    points: list[float] | None = None
    values: list[float] | None = None
    rho: float | None = Field(default=None, gt=0)
    rho_offset: float = Field(default=0.1, gt=0)
    a1: float = Field(default=0.0, ge=0)
    a2: float = Field(default=0.0, ge=0)
    q: float = Field(gt=1)

    @model_validator(mode="after")
    def _check_kind(self) -> "NonlinearitySection":
        required = _KIND_KEYS[self.kind]
        missing = [key for key in required if getattr(self, key) is None]
        if missing:
            keys = ", ".join(f"nonlinearity.{k}" for k in missing)
            raise ValueError(f"nonlinearity.kind = '{self.kind}' needs {keys}")
        allowed = {*required, "rho"} if self.kind is NonlinearityKind.EXAMPLE31 else set(required)
        stray = [key for key in _OPTIONAL_KEYS if key not in allowed and getattr(self, key) is not None]
        if stray:
            keys = ", ".join(f"nonlinearity.{k}" for k in stray)
            raise ValueError(f"nonlinearity.kind = '{self.kind}' does not use {keys}")
        return self

    def example31(self, params: FracParams) -> Example31Spec:
        return Example31Spec(params=params, q=self.q, rho=self.rho, rho_offset=self.rho_offset)

    def build(self) -> Nonlinearity:
        """The nonlinearity for every kind but example31, whose rho depends on the embedding constants."""
        match self.kind:
            case NonlinearityKind.POLYNOMIAL:
                return polynomial(self.coefficients or [], self.a1, self.a2, self.q)
            case NonlinearityKind.ABS_POWER:
                return abs_power(self.offset or 0.0, self.scale or 0.0, self.exponent or 0.0, self.a1, self.a2, self.q)
            case NonlinearityKind.TABULATED:
                return tabulated(self.points or [], self.values or [], self.a1, self.a2, self.q)
            case _:
                raise ConfigError("nonlinearity.kind = 'example31' is built from the embedding constants")


class ConstantsSection(_Section):
    q: list[float] = Field(default_factory=list)
    multistarts: int = Field(default=50, ge=0)
    max_iterations: int = Field(default=5000, ge=1)
    tolerance: float = Field(default=1e-9, gt=0)

    def settings(self) -> AscentSettings:
        return AscentSettings(self.multistarts, self.max_iterations, self.tolerance)


class CertificateSection(_Section):
    kind: CertificateKind
    gamma: float | None = Field(default=None, gt=0)
    eta: float | None = Field(default=None, gt=0)
    mu: float | None = Field(default=None, ge=0)
    epsilon: float | None = Field(default=None, gt=0)
    delta: float | None = Field(default=None, gt=0)
    b: float | None = Field(default=None, gt=0)
    t: float | None = Field(default=None, ge=0)
    beta: float | None = Field(default=None, ge=0)
    phi: float = Field(default=1.0, gt=0)
    t_max: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _check_kind(self) -> "CertificateSection":
        required = {
            CertificateKind.CASE1: ("gamma", "eta", "t"),
            CertificateKind.CASE2: ("epsilon", "delta", "t"),
            CertificateKind.COROLLARY: ("delta", "beta"),
            CertificateKind.EXAMPLE31: (),
        }[self.kind]
        missing = [key for key in required if getattr(self, key) is None]
        if missing:
            raise ValueError(f"certificate.kind = '{self.kind}' needs {', '.join(f'certificate.{k}' for k in missing)}")
        return self


class SolveSection(_Section):
    lam: float | None = Field(default=None, ge=0)
    tolerance: float = Field(default=1e-6, gt=0)
    max_iterations: int = Field(default=20000, ge=1)
    starts: int = Field(default=12, ge=1)
    deflation_shift: float = Field(default=1.0, ge=0)
    deflation_power: float | None = Field(default=None, gt=0)
    distinctness: float = Field(default=1e-3, gt=0)
    k_target: int = Field(default=3, ge=1)
    delta: float | None = Field(default=None, gt=0)
    epsilon: float | None = Field(default=None, gt=0)

    def build(self, lam: float, seed: int) -> SolveConfig:
        return SolveConfig(
            lam=lam,
            seed=seed,
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            starts=self.starts,
            deflation_shift=self.deflation_shift,
            deflation_power=self.deflation_power,
            distinctness=self.distinctness,
            k_target=self.k_target,
        )


class OutputSection(_Section):
    directory: str = "reports"
    write_csv: bool = False

    @property
    def path(self) -> Path:
        return Path(self.directory)


class RunConfig(_Section):
    seed: int
    params: ParamsSection
    mesh: MeshSection
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    coefficient: CoefficientSection = Field(default_factory=CoefficientSection)
    nonlinearity: NonlinearitySection | None = None
    constants: ConstantsSection = Field(default_factory=ConstantsSection)
    certificate: CertificateSection | None = None
    solve: SolveSection = Field(default_factory=SolveSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "RunConfig":
        if len(self.mesh.lower) != self.params.n_dim:
            raise ValueError(f"mesh.lower has {len(self.mesh.lower)} entries but params.n_dim = {self.params.n_dim}")
        return self

    def effective(self) -> dict[str, Any]:
        """The defaults-resolved config as embedded in every report."""
        return self.model_dump(mode="json")


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{key}: {item['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def parse_run_config(data: dict[str, Any]) -> RunConfig:
    if REPORT_CONFIG_KEY in data and isinstance(data[REPORT_CONFIG_KEY], dict):
        data = data[REPORT_CONFIG_KEY]
    if "seed" not in data:
        raise ConfigError("seed is required; every randomized procedure needs an explicit seed")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as ex:
        raise ConfigError(_format_validation_error(ex)) from ex


def load_run_config(path: Path) -> RunConfig:
    """Read a TOML run config, or a JSON report whose embedded config is reused."""
    logger.debug(f"Loading run config from {path}")
    try:
        text = path.read_text("utf-8")
    except OSError as ex:
        raise ConfigError(f"could not read config file {path}: {ex}") from ex
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as ex:
        raise ConfigError(f"{path} is not valid {'JSON' if path.suffix.lower() == '.json' else 'TOML'}: {ex}") from ex
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a table of settings")
    return parse_run_config(data)
