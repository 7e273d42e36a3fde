"""Quadrature of the singular kernel |x - y|^-(N + sp) over the element pairs of the cross-shaped set.

Pairs are stored once per unordered element pair with a multiplicity weight, so sums over a table
are sums over ordered pairs. In one dimension identical-element pairs are integrated in closed form and
touching pairs by dyadic layers toward the shared vertex, whose remainder is exact because the integrand
is homogeneous there. In two dimensions near pairs are bisected recursively down to a capped depth and the
innermost touching sub-pairs are replaced by a geometric remainder.
"""

import csv
import dataclasses
import logging
import math
from functools import cached_property
from pathlib import Path

import numpy as np

from fracneumann.core.mesh import (
    Box,
    FloatArray,
    FracParams,
    IntArray,
    Mesh,
    interpolate,
    shape_values,
    tensor_rule,
)

logger = logging.getLogger(__name__)

TAIL_SCAN_RATIO = 1.1
DEFAULT_ORDER = 6
DEFAULT_DEPTH = 8
DEFAULT_TAIL_TOL = 1e-8
_CHUNK = 50_000
MAX_DEPTH_2D = 5


class QuadratureError(ValueError):
    pass


def signed_power(values: FloatArray, exponent: float) -> FloatArray:
    """sign(v) |v|^exponent, taken as 0 at v = 0 for every positive exponent."""
    return np.sign(values) * np.abs(values) ** exponent


def radial_tail(params: FracParams, radius: float) -> float:
    """Closed form of the radial tail integral of r^-(1 + sp) from `radius` to infinity."""
    return float(radius ** (-params.sp) / params.sp)


def tail_radius(params: FracParams, tol: float, h_min: float) -> float:
    """Smallest radius whose kernel tail is within `tol` of the tail from `h_min`.

    Radii are scanned geometrically with ratio 1.1 starting at `h_min`.
    """
    if not 0 < tol < 1:
        raise ValueError(f"tail tolerance must lie in (0, 1), got {tol}")
    reference = radial_tail(params, h_min)
    radius = h_min
    while radial_tail(params, radius) / reference > tol:
        radius *= TAIL_SCAN_RATIO
    return radius


def default_truncation_radius(domain: Box, n: int, params: FracParams, tol: float = DEFAULT_TAIL_TOL) -> float:
    h_min = min(domain.lengths) / n
    return domain.diameter + tail_radius(params, tol, h_min)


@dataclasses.dataclass(frozen=True, eq=False)
class QuadratureTable:
    """Samples (x_g, y_g, w_g) for every element pair of the cross-shaped set.

    `geometric_weights` carry Gauss weights, cell measures and the pair multiplicity; kernel values are
    applied on demand so the same samples serve the p-kernel and the p=2 preconditioning kernel. `near_depth` is
    the subdivision depth actually used for near pairs, which is `depth` except where two-dimensional tables cap it.
    """

    mesh: Mesh
    params: FracParams
    order: int
    depth: int
    near_depth: int
    pair_elements: IntArray
    pair_near: np.ndarray
    pair_offsets: IntArray
    x_corners: IntArray
    x_local: FloatArray
    y_corners: IntArray
    y_local: FloatArray
    geometric_weights: FloatArray
    distances: FloatArray
    tail_layer: np.ndarray
    tail_contact: FloatArray
    self_elements: IntArray

    @property
    def sample_count(self) -> int:
        return len(self.geometric_weights)

    @property
    def ordered_pair_count(self) -> int:
        distinct = self.pair_elements[:, 0] != self.pair_elements[:, 1]
        return int(len(self.pair_elements) + distinct.sum())

    @property
    def tail_relative(self) -> float:
        """Kernel mass beyond the truncation margin relative to the mass beyond h_min."""
        return radial_tail(self.params, self.mesh.margin) / radial_tail(self.params, self.mesh.h_min)

    @property
    def kernel_values(self) -> FloatArray:
        return self.distances ** (-self.params.kernel_exponent)

    @cached_property
    def _nodes(self) -> IntArray:
        return np.concatenate([self.x_corners, self.y_corners], axis=1)

    @cached_property
    def _coefficients(self) -> FloatArray:
        """phi_i(x_g) - phi_i(y_g) contributions, one column per corner of either element."""
        return np.concatenate([shape_values(self.x_local), -shape_values(self.y_local)], axis=1)

    @cached_property
    def _weight_cache(self) -> dict[tuple[float, float], FloatArray]:
        return {}

    def weights(self, degree: float, sigma: float | None = None) -> FloatArray:
        """Sample weights for an integrand whose numerator is homogeneous of `degree` in the difference.

        `sigma` replaces sp in the kernel exponent N + sp. Samples of the deepest subdivision level carry the geometric
        remainder 1 / (1 - r) with r = 2^(m - N - degree + sigma), m the dimension of the contact set.
        """
        sigma = self.params.sp if sigma is None else sigma
        key = (degree, sigma)
        if key not in self._weight_cache:
            weights = self.geometric_weights * self.distances ** (-(self.mesh.dim + sigma))
            ratio = 2.0 ** (self.tail_contact - degree + sigma)
            self._weight_cache[key] = np.where(self.tail_layer, weights / (1.0 - ratio), weights)
        return self._weight_cache[key]

    def _self_coefficients(self, degree: float, sigma: float) -> FloatArray:
        """Closed form of the integral of |x - y|^beta over e x e for the identical-element pairs."""
        h = self.mesh.element_sizes[self.self_elements, 0]
        beta = degree - 1.0 - sigma
        return 2.0 * h ** (beta + 2.0) / ((beta + 1.0) * (beta + 2.0))

    def _self_slopes(self, values: FloatArray) -> tuple[FloatArray, FloatArray]:
        corners = self.mesh.element_corners[self.self_elements]
        h = self.mesh.element_sizes[self.self_elements, 0]
        return (values[corners[:, 1]] - values[corners[:, 0]]) / h, h

    def differences(self, values: FloatArray) -> FloatArray:
        return interpolate(values, self.x_corners, self.x_local) - interpolate(values, self.y_corners, self.y_local)

    def gagliardo(self, values: FloatArray, p: float | None = None) -> float:
        """Double integral of |u(x) - u(y)|^p K over ordered pairs, without the 1/2 factor."""
        p = self.params.p if p is None else p
        terms = self.weights(p) * np.abs(self.differences(values)) ** p
        slopes, _ = self._self_slopes(values)
        self_terms = self._self_coefficients(p, self.params.sp) * np.abs(slopes) ** p
        return math.fsum(np.concatenate([terms, self_terms]))

    def gagliardo_form(self, values: FloatArray, direction: FloatArray) -> float:
        """Double integral of |du|^(p-2) du dv K."""
        p = self.params.p
        terms = self.weights(p) * signed_power(self.differences(values), p - 1) * self.differences(direction)
        slopes, _ = self._self_slopes(values)
        direction_slopes, _ = self._self_slopes(direction)
        self_terms = self._self_coefficients(p, self.params.sp) * signed_power(slopes, p - 1) * direction_slopes
        return math.fsum(np.concatenate([terms, self_terms]))

    def gagliardo_dual(self, values: FloatArray) -> FloatArray:
        """Nodal vector of the double integral of |du|^(p-2) du (phi_i(x) - phi_i(y)) K."""
        p = self.params.p
        flux = self.weights(p) * signed_power(self.differences(values), p - 1)
        result = np.bincount(
            self._nodes.ravel(), weights=(flux[:, None] * self._coefficients).ravel(), minlength=self.mesh.node_count
        )
        if len(self.self_elements):
            slopes, h = self._self_slopes(values)
            self_flux = self._self_coefficients(p, self.params.sp) * signed_power(slopes, p - 1) / h
            corners = self.mesh.element_corners[self.self_elements]
            result += np.bincount(corners[:, 1], weights=self_flux, minlength=self.mesh.node_count)
            result -= np.bincount(corners[:, 0], weights=self_flux, minlength=self.mesh.node_count)
        return result

    @cached_property
    def _hat_cache(self) -> dict[float, FloatArray]:
        return {}

    def hat_gagliardo(self, p: float | None = None) -> FloatArray:
        """Per node, the double integral of |phi_i(x) - phi_i(y)|^p K."""
        p = self.params.p if p is None else p
        if p in self._hat_cache:
            return self._hat_cache[p]
        size = self.mesh.node_count
        width = self._nodes.shape[1]
        earlier = np.tril(np.ones((width, width), dtype=bool), -1)
        weights = self.weights(p)
        result = np.zeros(size)
        for start in range(0, self.sample_count, _CHUNK):
            chunk = slice(start, start + _CHUNK)
            nodes, coefficients = self._nodes[chunk], self._coefficients[chunk]
            same = nodes[:, :, None] == nodes[:, None, :]
            totals = (same * coefficients[:, None, :]).sum(axis=2)
            first = ~np.any(same & earlier, axis=2)
            contributions = weights[chunk, None] * np.abs(totals) ** p
            result += np.bincount(nodes[first], weights=contributions[first], minlength=size)
        if len(self.self_elements):
            h = self.mesh.element_sizes[self.self_elements, 0]
            self_terms = self._self_coefficients(p, self.params.sp) * h ** (-p)
            corners = self.mesh.element_corners[self.self_elements]
            result += np.bincount(corners[:, 0], weights=self_terms, minlength=size)
            result += np.bincount(corners[:, 1], weights=self_terms, minlength=size)
        self._hat_cache[p] = result
        return result

    @cached_property
    def quadratic_matrix(self) -> FloatArray:
        """Matrix of the p=2 double integral with kernel exponent N + 2s: u^T K u over ordered pairs.

        Coincides with `gagliardo(u)` when p = 2.
        """
        size = self.mesh.node_count
        sigma = 2.0 * self.params.s
        weights = self.weights(2.0, sigma)
        flat = np.zeros(size * size)
        for start in range(0, self.sample_count, _CHUNK):
            chunk = slice(start, start + _CHUNK)
            nodes, coefficients = self._nodes[chunk], self._coefficients[chunk]
            products = weights[chunk, None, None] * coefficients[:, :, None] * coefficients[:, None, :]
            index = nodes[:, :, None] * size + nodes[:, None, :]
            flat += np.bincount(index.ravel(), weights=products.ravel(), minlength=size * size)
        matrix = flat.reshape(size, size)
        if len(self.self_elements):
            h = self.mesh.element_sizes[self.self_elements, 0]
            stiffness = self._self_coefficients(2.0, sigma) / h**2
            corners = self.mesh.element_corners[self.self_elements]
            np.add.at(matrix, (corners[:, 0], corners[:, 0]), stiffness)
            np.add.at(matrix, (corners[:, 1], corners[:, 1]), stiffness)
            np.add.at(matrix, (corners[:, 0], corners[:, 1]), -stiffness)
            np.add.at(matrix, (corners[:, 1], corners[:, 0]), -stiffness)
        return 0.5 * (matrix + matrix.T)

    def to_csv(self, path: Path) -> None:
        """Pair records: elements, near flag, sample coordinates, geometric weight and kernel value."""
        path.parent.mkdir(parents=True, exist_ok=True)
        x = self.mesh.nodes[self.x_corners[:, 0]] + self.x_local * self._corner_sizes(self.x_corners)
        y = self.mesh.nodes[self.y_corners[:, 0]] + self.y_local * self._corner_sizes(self.y_corners)
        kernel = self.kernel_values
        with path.open("w", newline="", encoding="utf-8") as fp:
            writer = csv.writer(fp)
            dim = self.mesh.dim
            coordinates = [*(f"x{j}" for j in range(dim)), *(f"y{j}" for j in range(dim))]
            writer.writerow(["pair", "element_a", "element_b", "near", *coordinates, "weight", "kernel"])
            for pair, (a, b) in enumerate(self.pair_elements):
                for sample in range(self.pair_offsets[pair], self.pair_offsets[pair + 1]):
                    writer.writerow(
                        [pair, a, b, int(self.pair_near[pair]), *map(repr, x[sample].tolist()),
                         *map(repr, y[sample].tolist()), repr(float(self.geometric_weights[sample])),
                         repr(float(kernel[sample]))]  # fmt: skip
                    )

    def _corner_sizes(self, corners: IntArray) -> FloatArray:
        nodes = self.mesh.nodes
        return nodes[corners[:, -1]] - nodes[corners[:, 0]]


@dataclasses.dataclass
class _SampleBlock:
    pairs: list[tuple[int, int, bool]] = dataclasses.field(default_factory=list)
    counts: list[int] = dataclasses.field(default_factory=list)
    x_corners: list[IntArray] = dataclasses.field(default_factory=list)
    x_local: list[FloatArray] = dataclasses.field(default_factory=list)
    y_corners: list[IntArray] = dataclasses.field(default_factory=list)
    y_local: list[FloatArray] = dataclasses.field(default_factory=list)
    weights: list[FloatArray] = dataclasses.field(default_factory=list)
    distances: list[FloatArray] = dataclasses.field(default_factory=list)
    tail_layer: list[np.ndarray] = dataclasses.field(default_factory=list)
    tail_contact: list[FloatArray] = dataclasses.field(default_factory=list)


def _distances(mesh: Mesh, a: IntArray, b: IntArray, x_local: FloatArray, y_local: FloatArray) -> FloatArray:
    x = mesh.element_lower[a] + mesh.element_sizes[a] * x_local
    y = mesh.element_lower[b] + mesh.element_sizes[b] * y_local
    return np.linalg.norm(x - y, axis=1)


def _far_samples(mesh: Mesh, pairs: IntArray, order: int, block: _SampleBlock) -> None:
    """One tensor Gauss rule per pair of separated elements; multiplicity 2 covers both orders."""
    if not len(pairs):
        return
    local, weights = tensor_rule(order, mesh.dim)
    per_cell = len(weights)
    count = per_cell * per_cell
    a = np.repeat(pairs[:, 0], count)
    b = np.repeat(pairs[:, 1], count)
    x_local = np.tile(np.repeat(local, per_cell, axis=0), (len(pairs), 1))
    y_local = np.tile(np.tile(local, (per_cell, 1)), (len(pairs), 1))
    rule = np.tile(np.outer(weights, weights).ravel(), len(pairs))
    measures = mesh.element_measures
    block.pairs.extend((int(i), int(j), False) for i, j in pairs)
    block.counts.extend([count] * len(pairs))
    block.x_corners.append(mesh.element_corners[a])
    block.x_local.append(x_local)
    block.y_corners.append(mesh.element_corners[b])
    block.y_local.append(y_local)
    block.weights.append(2.0 * measures[a] * measures[b] * rule)
    block.distances.append(_distances(mesh, a, b, x_local, y_local))
    block.tail_layer.append(np.zeros(len(a), dtype=bool))
    block.tail_contact.append(np.full(len(a), -float(mesh.dim)))


def _vertex_layers(order: int, depth: int) -> tuple[FloatArray, FloatArray, FloatArray, np.ndarray]:
    """Normalized L-shaped dyadic layers on [0, 1]^2 around the corner (0, 0).

    Returns the distance-from-vertex coordinates (xi, eta), normalized weights and the last-layer flag.
    """
    local, weights = tensor_rule(order, 2)
    xi, eta, rule, last = [], [], [], []
    for level in range(depth):
        scale = 0.5**level
        for (xi0, xi1), (eta0, eta1) in (((0.5, 1.0), (0.0, 0.5)), ((0.0, 0.5), (0.5, 1.0)), ((0.5, 1.0), (0.5, 1.0))):
            width, height = scale * (xi1 - xi0), scale * (eta1 - eta0)
            xi.append(scale * xi0 + width * local[:, 0])
            eta.append(scale * eta0 + height * local[:, 1])
            rule.append(width * height * weights)
            last.append(np.full(len(weights), level == depth - 1))
    return np.concatenate(xi), np.concatenate(eta), np.concatenate(rule), np.concatenate(last)


def _touching_samples_1d(mesh: Mesh, pairs: IntArray, order: int, depth: int, block: _SampleBlock) -> None:
    """Neighbouring intervals (a, a + 1): layers toward the shared vertex, x in the left element."""
    if not len(pairs):
        return
    xi, eta, rule, last = _vertex_layers(order, depth)
    count = len(rule)
    a = np.repeat(pairs[:, 0], count)
    b = np.repeat(pairs[:, 1], count)
    h_left = mesh.element_sizes[a, 0]
    h_right = mesh.element_sizes[b, 0]
    xi_all, eta_all = np.tile(xi, len(pairs)), np.tile(eta, len(pairs))
    block.pairs.extend((int(i), int(j), True) for i, j in pairs)
    block.counts.extend([count] * len(pairs))
    block.x_corners.append(mesh.element_corners[a])
    block.x_local.append((1.0 - xi_all)[:, None])
    block.y_corners.append(mesh.element_corners[b])
    block.y_local.append(eta_all[:, None])
    block.weights.append(2.0 * h_left * h_right * np.tile(rule, len(pairs)))
    block.distances.append(h_left * xi_all + h_right * eta_all)
    block.tail_layer.append(np.tile(last, len(pairs)))
    block.tail_contact.append(np.full(len(a), -1.0))


def _children(lower: FloatArray, upper: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Dyadic children of the boxes (M, dim), as arrays (M, 2^dim, dim)."""
    dim = lower.shape[1]
    bits = np.array([[(corner >> axis) & 1 for axis in range(dim)] for corner in range(2**dim)], dtype=bool)
    middle = 0.5 * (lower + upper)
    return np.where(bits, middle[:, None], lower[:, None]), np.where(bits, upper[:, None], middle[:, None])


def _all_pairs(children_a: FloatArray, children_b: FloatArray) -> tuple[FloatArray, FloatArray]:
    count, children, dim = children_a.shape
    shape = (count, children, children, dim)
    return (
        np.broadcast_to(children_a[:, :, None], shape).reshape(-1, dim),
        np.broadcast_to(children_b[:, None, :], shape).reshape(-1, dim),
    )


def _near_subpairs(
    a: tuple[FloatArray, FloatArray], b: tuple[FloatArray, FloatArray], depth: int
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray, np.ndarray]:
    """Separated sub-box pairs of two touching boxes, bisected level by level down to `depth`.

    Returns the lower and upper corners of both sides and a flag marking pairs split off at the deepest level.
    Sub-pairs still touching after `depth` levels are dropped.
    """
    lower_a, upper_a, lower_b, upper_b = (np.atleast_2d(corner) for corner in (*a, *b))
    separated: list[list[FloatArray]] = []
    deepest: list[np.ndarray] = []
    for level in range(1, depth + 1):
        children_a, children_b = _children(lower_a, upper_a), _children(lower_b, upper_b)
        lower_a, lower_b = _all_pairs(children_a[0], children_b[0])
        upper_a, upper_b = _all_pairs(children_a[1], children_b[1])
        touch = np.all(lower_a <= upper_b, axis=1) & np.all(lower_b <= upper_a, axis=1)
        separated.append([corner[~touch] for corner in (lower_a, upper_a, lower_b, upper_b)])
        deepest.append(np.full(int(np.count_nonzero(~touch)), level == depth))
        lower_a, upper_a, lower_b, upper_b = (corner[touch] for corner in (lower_a, upper_a, lower_b, upper_b))
    lower_a, upper_a, lower_b, upper_b = (np.concatenate([s[i] for s in separated]) for i in range(4))
    return lower_a, upper_a, lower_b, upper_b, np.concatenate(deepest)


def contact_dimension(mesh: Mesh, a: int, b: int) -> int:
    """Dimension of the intersection of two touching elements: dim for identical cells, 0 for a shared corner."""
    lower = np.maximum(mesh.element_lower[a], mesh.element_lower[b])
    upper = np.minimum(mesh.element_upper[a], mesh.element_upper[b])
    return int(np.count_nonzero(upper > lower))


def _near_samples_tensor(mesh: Mesh, pairs: IntArray, order: int, depth: int, block: _SampleBlock) -> None:
    """Recursive dyadic subdivision of touching or identical cells.

    The touching sub-pairs left after `depth` levels are accounted for by a geometric remainder on the pairs
    split off at the deepest level. Near the contact set of dimension m the integrand is homogeneous in x - y,
    so each level keeps the fraction 2^(m - N - degree + sigma) of the touching share of the previous one.
    """
    local, weights = tensor_rule(order, mesh.dim)
    per_cell = len(weights)
    rule = np.outer(weights, weights).ravel()
    x_pattern = np.repeat(local, per_cell, axis=0)
    y_pattern = np.tile(local, (per_cell, 1))
    for a, b in pairs:
        lower_a, upper_a = mesh.element_lower[a], mesh.element_upper[a]
        lower_b, upper_b = mesh.element_lower[b], mesh.element_upper[b]
        sub_lower_a, sub_upper_a, sub_lower_b, sub_upper_b, deepest = _near_subpairs(
            (lower_a, upper_a), (lower_b, upper_b), depth
        )
        width_a, width_b = sub_upper_a - sub_lower_a, sub_upper_b - sub_lower_b
        xl = ((sub_lower_a - lower_a)[:, None] + width_a[:, None] * x_pattern) / (upper_a - lower_a)
        yl = ((sub_lower_b - lower_b)[:, None] + width_b[:, None] * y_pattern) / (upper_b - lower_b)
        xl, yl = xl.reshape(-1, mesh.dim), yl.reshape(-1, mesh.dim)
        multiplicity = 1.0 if a == b else 2.0
        sample_weights = multiplicity * (np.prod(width_a, axis=1) * np.prod(width_b, axis=1))[:, None] * rule
        a_all, b_all = np.full(len(xl), a), np.full(len(xl), b)
        block.pairs.append((int(a), int(b), True))
        block.counts.append(len(xl))
        block.x_corners.append(mesh.element_corners[a_all])
        block.x_local.append(xl)
        block.y_corners.append(mesh.element_corners[b_all])
        block.y_local.append(yl)
        block.weights.append(sample_weights.ravel())
        block.distances.append(_distances(mesh, a_all, b_all, xl, yl))
        block.tail_layer.append(np.repeat(deepest, len(rule)))
        block.tail_contact.append(np.full(len(xl), float(contact_dimension(mesh, a, b) - mesh.dim)))


def _enumerate_pairs(mesh: Mesh) -> tuple[IntArray, IntArray, IntArray]:
    """Unordered pairs a <= b of the cross-shaped set, split into identical, touching and separated pairs."""
    inside = mesh.is_interior_element
    a, b = np.triu_indices(mesh.element_count)
    keep = inside[a] | inside[b]
    a, b = a[keep], b[keep]
    index = mesh.element_index
    touching = np.all(np.abs(index[a] - index[b]) <= 1, axis=1)
    identical = a == b
    stack = np.stack([a, b], axis=1).astype(np.int64)
    return stack[identical], stack[touching & ~identical], stack[~touching]


def assemble_table(
    mesh: Mesh, params: FracParams, order: int = DEFAULT_ORDER, depth: int = DEFAULT_DEPTH
) -> QuadratureTable:
    if order < 2:  # noqa: PLR2004
        raise QuadratureError(f"Gauss order must be at least 2, got {order}")
    if depth < 2:  # noqa: PLR2004
        raise QuadratureError(f"subdivision depth must be at least 2, got {depth}")
    if mesh.dim != params.dim:
        raise QuadratureError(f"mesh is {mesh.dim}-dimensional but the parameters say N = {params.dim}")

    identical, touching, separated = _enumerate_pairs(mesh)
    block = _SampleBlock()
    near_depth = depth
    if mesh.dim == 1:
        self_elements = identical[:, 0]
        block.pairs.extend((int(e), int(e), True) for e in self_elements)
        block.counts.extend([0] * len(self_elements))
        _touching_samples_1d(mesh, touching, order, depth, block)
    else:
        self_elements = np.empty(0, dtype=np.int64)
        # touching sub-pairs of identical cells multiply fourfold per level
        near_depth = min(depth, MAX_DEPTH_2D)
        if near_depth < depth:
            logger.warning(
                f"Subdivision depth {depth} exceeds the two-dimensional limit {MAX_DEPTH_2D}; near pairs use depth "
                f"{near_depth} with a geometric remainder for the innermost touching sub-pairs"
            )
        _near_samples_tensor(mesh, np.concatenate([identical, touching]), order, near_depth, block)
    _far_samples(mesh, separated, order, block)

    distances = np.concatenate(block.distances)
    if np.any(distances <= 0) or not np.all(np.isfinite(distances ** (-params.kernel_exponent))):
        raise QuadratureError("a quadrature sample pair collides (x = y); the subdivision is broken")
    table = QuadratureTable(
        mesh=mesh,
        params=params,
        order=order,
        depth=depth,
        near_depth=near_depth,
        pair_elements=np.array([(a, b) for a, b, _ in block.pairs], dtype=np.int64).reshape(-1, 2),
        pair_near=np.array([near for _, _, near in block.pairs], dtype=bool),
        pair_offsets=np.concatenate([[0], np.cumsum(block.counts)]).astype(np.int64),
        x_corners=np.concatenate(block.x_corners),
        x_local=np.concatenate(block.x_local),
        y_corners=np.concatenate(block.y_corners),
        y_local=np.concatenate(block.y_local),
        geometric_weights=np.concatenate(block.weights),
        distances=distances,
        tail_layer=np.concatenate(block.tail_layer),
        tail_contact=np.concatenate(block.tail_contact),
        self_elements=self_elements,
    )
    logger.debug(
        f"Assembled quadrature table: {len(table.pair_elements)} pairs, {table.sample_count} samples, "
        f"relative tail {table.tail_relative:.3e}"
    )
    return table
