import csv
import dataclasses
import itertools
import logging
import math
from collections.abc import Iterator
from functools import cached_property
from pathlib import Path

import numpy as np
import numpy.typing as npt

from fracneumann.core.constants import CaseTag, PairClass

logger = logging.getLogger(__name__)

EXTERIOR_GRADING_RATIO = 1.5

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]


class MeshError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class FracParams:
    """Fractional order `s`, integrability exponent `p` and spatial dimension `dim`.

    The normalizing constant of the operator is fixed to 1 throughout.
    """

    s: float
    p: float
    dim: int = 1

    normalizing_constant = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.s < 1:
            raise MeshError(f"fractional order s must lie in (0, 1), got {self.s}")
        if self.p <= 1:
            raise MeshError(f"exponent p must exceed 1, got {self.p}")
        if self.dim < 1:
            raise MeshError(f"dimension must be a positive integer, got {self.dim}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def kernel_exponent(self) -> float:
        return self.dim + self.sp


def critical_exponent(params: FracParams) -> float:
    if params.dim > params.sp:
        return params.dim * params.p / (params.dim - params.sp)
    return math.inf


def case_tag(params: FracParams) -> CaseTag:
    if params.dim < params.sp and params.p >= 2:  # noqa: PLR2004
        return CaseTag.CASE_I
    if params.dim >= params.sp >= 1:
        return CaseTag.CASE_II
    return CaseTag.NEITHER


@dataclasses.dataclass(frozen=True)
class Box:
    """Axis-aligned domain; an interval when one-dimensional."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lower) != len(self.upper) or not self.lower:
            raise MeshError("domain bounds must have the same, nonzero, number of coordinates")
        if len(self.lower) > 2:  # noqa: PLR2004
            raise MeshError("only intervals and rectangles are supported")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper, strict=True)):
            raise MeshError(f"degenerate domain {self.lower} x {self.upper}: zero measure")

    @classmethod
    def interval(cls, lower: float, upper: float) -> "Box":
        return cls((float(lower),), (float(upper),))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper, strict=True))

    @property
    def measure(self) -> float:
        return math.prod(self.lengths)

    @property
    def diameter(self) -> float:
        return math.hypot(*self.lengths)


def gauss_legendre_unit(order: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def tensor_rule(order: int, dim: int) -> tuple[FloatArray, FloatArray]:
    """Tensor Gauss rule on the unit cell: local coordinates (G, dim) and weights (G,)."""
    nodes, weights = gauss_legendre_unit(order)
    grids = np.meshgrid(*([nodes] * dim), indexing="ij")
    local = np.stack([g.ravel() for g in grids], axis=1)
    weight_grids = np.meshgrid(*([weights] * dim), indexing="ij")
    return local, np.prod(np.stack([g.ravel() for g in weight_grids], axis=1), axis=1)


def interpolate(values: FloatArray, corners: IntArray, local: FloatArray) -> FloatArray:
    """Multilinear interpolation in lerp form, so constant nodal data interpolates exactly.

    `corners` holds cell corner node indices with bit j of the corner number selecting the upper end of axis j.
    """
    corner_values = values[corners]
    for axis in range(local.shape[1]):
        low, high = corner_values[:, 0::2], corner_values[:, 1::2]
        corner_values = low + local[:, axis, None] * (high - low)
    return corner_values[:, 0]


def shape_values(local: FloatArray) -> FloatArray:
    """Values of the multilinear hat functions of the cell corners at the given local coordinates."""
    count, dim = local.shape
    result = np.ones((count, 2**dim))
    for corner in range(2**dim):
        for axis in range(dim):
            t = local[:, axis]
            result[:, corner] *= t if (corner >> axis) & 1 else 1.0 - t
    return result


@dataclasses.dataclass(frozen=True, eq=False)
class InteriorQuadrature:
    """Per-element tensor Gauss rule over the interior elements."""

    node_count: int
    points: FloatArray
    weights: FloatArray
    corners: IntArray
    local: FloatArray

    @cached_property
    def shapes(self) -> FloatArray:
        return shape_values(self.local)

    def interpolate(self, values: FloatArray) -> FloatArray:
        return interpolate(values, self.corners, self.local)

    def scatter(self, coefficients: FloatArray) -> FloatArray:
        """Nodal vector with entry i = sum_q coefficients_q * phi_i(x_q)."""
        return np.bincount(
            self.corners.ravel(), weights=(coefficients[:, None] * self.shapes).ravel(), minlength=self.node_count
        )

    def matrix(self, coefficients: FloatArray) -> FloatArray:
        """Dense mass-type matrix sum_q coefficients_q phi_i(x_q) phi_j(x_q)."""
        size = self.node_count
        products = coefficients[:, None, None] * self.shapes[:, :, None] * self.shapes[:, None, :]
        index = self.corners[:, :, None] * size + self.corners[:, None, :]
        return np.bincount(index.ravel(), weights=products.ravel(), minlength=size * size).reshape(size, size)


@dataclasses.dataclass(frozen=True, eq=False)
class Mesh:
    """Tensor grid over the truncated computational box.

    Nodes along each axis are sorted; `interior_ranges[j]` holds the first and last node index of axis j
    that lie in the closed domain. Everything else is the graded exterior layer.
    """

    domain: Box
    n: int
    truncation_radius: float
    axes: tuple[FloatArray, ...]
    interior_ranges: tuple[tuple[int, int], ...]

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def measure(self) -> float:
        return self.domain.measure

    @property
    def margin(self) -> float:
        """Exterior extent beyond the domain on every side."""
        return self.truncation_radius - self.domain.diameter

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(axis) for axis in self.axes)

    @property
    def node_count(self) -> int:
        return math.prod(self.shape)

    @cached_property
    def nodes(self) -> FloatArray:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def is_interior_node(self) -> npt.NDArray[np.bool_]:
        index = np.indices(self.shape).reshape(self.dim, -1)
        inside = np.ones(self.node_count, dtype=bool)
        for axis, (lo, hi) in enumerate(self.interior_ranges):
            inside &= (index[axis] >= lo) & (index[axis] <= hi)
        return inside

    @property
    def interior_nodes(self) -> IntArray:
        return np.flatnonzero(self.is_interior_node)

    @property
    def exterior_nodes(self) -> IntArray:
        return np.flatnonzero(~self.is_interior_node)

    @cached_property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(len(axis) - 1 for axis in self.axes)

    @property
    def element_count(self) -> int:
        return math.prod(self.cell_shape)

    @cached_property
    def element_index(self) -> IntArray:
        """Multi-index (E, dim) of every element."""
        return np.indices(self.cell_shape).reshape(self.dim, -1).T.astype(np.int64)

    @cached_property
    def element_corners(self) -> IntArray:
        corners = np.empty((self.element_count, 2**self.dim), dtype=np.int64)
        for corner in range(2**self.dim):
            offset = np.array([(corner >> axis) & 1 for axis in range(self.dim)])
            corners[:, corner] = np.ravel_multi_index(tuple((self.element_index + offset).T), self.shape)
        return corners

    @cached_property
    def element_lower(self) -> FloatArray:
        return np.stack([self.axes[j][self.element_index[:, j]] for j in range(self.dim)], axis=1)

    @cached_property
    def element_upper(self) -> FloatArray:
        return np.stack([self.axes[j][self.element_index[:, j] + 1] for j in range(self.dim)], axis=1)

    @property
    def element_sizes(self) -> FloatArray:
        return self.element_upper - self.element_lower

    @property
    def element_measures(self) -> FloatArray:
        return np.prod(self.element_sizes, axis=1)

    @cached_property
    def is_interior_element(self) -> npt.NDArray[np.bool_]:
        inside = np.ones(self.element_count, dtype=bool)
        for axis, (lo, hi) in enumerate(self.interior_ranges):
            inside &= (self.element_index[:, axis] >= lo) & (self.element_index[:, axis] < hi)
        return inside

    @property
    def h_min(self) -> float:
        return float(self.element_sizes[self.is_interior_element].min())

    def pair_class(self, a: int, b: int) -> PairClass:
        a_inside, b_inside = self.is_interior_element[a], self.is_interior_element[b]
        if a_inside and b_inside:
            return PairClass.INTERIOR_INTERIOR
        if a_inside:
            return PairClass.INTERIOR_EXTERIOR
        if b_inside:
            return PairClass.EXTERIOR_INTERIOR
        raise MeshError(f"elements {a} and {b} both lie outside the domain")

    def element_pairs(self) -> Iterator[tuple[int, int]]:
        """Ordered element pairs making up the cross-shaped set, in lexicographic order."""
        inside = self.is_interior_element
        for a, b in itertools.product(range(self.element_count), repeat=2):
            if inside[a] or inside[b]:
                yield a, b

    def refine(self) -> "Mesh":
        """Bisect every element, exterior ones included, so the discrete spaces are nested."""
        axes = tuple(np.sort(np.concatenate([axis, 0.5 * (axis[1:] + axis[:-1])])) for axis in self.axes)
        ranges = tuple((2 * lo, 2 * hi) for lo, hi in self.interior_ranges)
        return Mesh(self.domain, 2 * self.n, self.truncation_radius, axes, ranges)

    def locate(self, points: FloatArray) -> tuple[IntArray, FloatArray]:
        """Corner nodes and local coordinates of the element containing each point."""
        points = np.atleast_2d(points)
        cells = np.empty((len(points), self.dim), dtype=np.int64)
        local = np.empty((len(points), self.dim))
        for j, axis in enumerate(self.axes):
            coordinate = points[:, j]
            if np.any(coordinate < axis[0]) or np.any(coordinate > axis[-1]):
                raise MeshError("point outside the computational box")
            cell = np.clip(np.searchsorted(axis, coordinate, side="right") - 1, 0, len(axis) - 2)
            cells[:, j] = cell
            local[:, j] = (coordinate - axis[cell]) / (axis[cell + 1] - axis[cell])
        element = np.ravel_multi_index(tuple(cells.T), self.cell_shape)
        return self.element_corners[element], local

    @cached_property
    def _quadrature_cache(self) -> dict[int, InteriorQuadrature]:
        return {}

    def interior_quadrature(self, order: int) -> InteriorQuadrature:
        if order not in self._quadrature_cache:
            local, weights = tensor_rule(order, self.dim)
            elements = np.flatnonzero(self.is_interior_element)
            lower, sizes = self.element_lower[elements], self.element_sizes[elements]
            points = lower[:, None, :] + sizes[:, None, :] * local[None, :, :]
            self._quadrature_cache[order] = InteriorQuadrature(
                node_count=self.node_count,
                points=points.reshape(-1, self.dim),
                weights=(self.element_measures[elements][:, None] * weights[None, :]).ravel(),
                corners=np.repeat(self.element_corners[elements], len(weights), axis=0),
                local=np.tile(local, (len(elements), 1)),
            )
        return self._quadrature_cache[order]

    def to_csv(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            writer.writerow(["node", *(f"x{j}" for j in range(self.dim)), "interior"])
            for index, (coordinates, inside) in enumerate(zip(self.nodes, self.is_interior_node, strict=True)):
                writer.writerow([index, *(repr(float(c)) for c in coordinates), int(inside)])


def _graded_offsets(h: float, margin: float) -> list[float]:
    offsets: list[float] = []
    distance, size = 0.0, h
    while distance + size < margin:
        distance += size
        offsets.append(distance)
        size *= EXTERIOR_GRADING_RATIO
    if offsets and margin - distance < 0.5 * size / EXTERIOR_GRADING_RATIO:
        offsets[-1] = margin
    else:
        offsets.append(margin)
    return offsets


def build_mesh(domain: Box, n: int, truncation_radius: float) -> Mesh:
    """Uniform interior grid with `n` elements per axis and a graded exterior layer.

    The computational box is the set of points within `truncation_radius` of every point of the domain, i.e.
    the domain widened by `truncation_radius - diameter` on every side.
    """
    if n < 2:  # noqa: PLR2004
        raise MeshError(f"interior resolution must be at least 2, got {n}")
    if truncation_radius <= domain.diameter:
        raise MeshError(
            f"truncation radius {truncation_radius} must exceed the domain diameter {domain.diameter}, "
            "otherwise the dominant near-boundary kernel mass is clipped"
        )
    margin = truncation_radius - domain.diameter
    axes, ranges = [], []
    for lo, hi in zip(domain.lower, domain.upper, strict=True):
        offsets = np.array(_graded_offsets((hi - lo) / n, margin))
        interior = np.linspace(lo, hi, n + 1)
        axes.append(np.concatenate([lo - offsets[::-1], interior, hi + offsets]))
        ranges.append((len(offsets), len(offsets) + n))
    mesh = Mesh(domain, n, float(truncation_radius), tuple(axes), tuple(ranges))
    logger.debug(
        f"Built mesh: {mesh.node_count} nodes ({len(mesh.interior_nodes)} interior), "
        f"{mesh.element_count} elements, exterior margin {margin:.6g}"
    )
    return mesh
