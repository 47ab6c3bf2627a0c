"""
The coordinatewise Gaussian CDF map between R^d and the open unit cube.

``to_cube`` pushes the standard Gaussian measure onto Lebesgue measure on
(0,1)^d. A hypersurface with unit normal nu at x is carried to one whose
area element is multiplied by |det A| * |A^{-T} nu| with A = D to_cube(x),
which is where the boundary weight sqrt(2 pi) * sqrt(sum nu_i^2 exp(x_i^2))
comes from. Candidate boundaries are sampled on the cube side and mapped
through that identity, so every integral below is taken on the Gaussian side.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg, stats
from scipy.special import logsumexp

from .candidates import CandidateFamily, CandidateSpec
from .errors import DomainError, SingularityError, UnsupportedError
from .gaussian import (
    INV_SQRT_2PI,
    gaussian_density_d,
    make_rng,
    sample_gaussian,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from .records import BoundReport

logger = logging.getLogger(__name__)

MAX_DIM = 16
NORMAL_TOL = 1e-12
SINGULAR_TOL = 1e-12
DEFAULT_EXTENT = 8.0
MAX_TENSOR_DIM = 6
MAX_SURFACE_NODES = 1 << 24
LOG_2PI = math.log(2.0 * math.pi)

# Default per-axis resolution of hyperplane quadrature, by ambient dimension.
DEFAULT_RESOLUTION = {1: 2, 2: 4096, 3: 512, 4: 96, 5: 32, 6: 16}


def _check_dim(d: int) -> None:
    if not 1 <= d <= MAX_DIM:
        raise UnsupportedError(f"transport operations support 1 <= d <= {MAX_DIM}, got d={d}")


def _unit(nu, what: str = "normal", tol: float = 1e-9) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    norms = np.linalg.norm(nu, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DomainError(f"{what} must have unit length (got norm {norms})")
    return nu


@dataclass(frozen=True)
class SurfaceSample:
    """Weighted nodes on a hypersurface; weights approximate plain (d-1)-area."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        points = np.atleast_2d(np.array(self.points, dtype=float))
        normals = np.atleast_2d(np.array(self.normals, dtype=float))
        weights = np.atleast_1d(np.array(self.weights, dtype=float))
        if points.shape != normals.shape or points.shape[0] != weights.shape[0]:
            raise DomainError(
                f"surface arrays disagree: points {points.shape}, normals {normals.shape}, weights {weights.shape}"
            )
        _unit(normals, "surface normals", NORMAL_TOL)
        if np.any(~(weights > 0.0)):
            raise DomainError("surface weights must be positive")
        for arr in (points, normals, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return int(self.weights.size)

    @property
    def area(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class HalfspaceSpec:
    """The set {x : normal . x < offset}; its Gaussian measure is Phi(offset)."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        normal = _unit(np.array(self.normal, dtype=float).ravel(), "halfspace normal", NORMAL_TOL)
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def axis(cls, d: int, offset: float, axis: int = 0) -> "HalfspaceSpec":
        normal = np.zeros(d)
        normal[axis] = 1.0
        return cls(normal, offset)

    @classmethod
    def from_volume(cls, normal, lam: float) -> "HalfspaceSpec":
        return cls(np.asarray(normal, dtype=float), std_normal_quantile(lam))

    @property
    def dimension(self) -> int:
        return int(self.normal.size)

    @property
    def distance(self) -> float:
        """Distance from the origin to the boundary hyperplane."""
        return abs(self.offset)

    @property
    def gaussian_volume(self) -> float:
        return float(std_normal_cdf(self.offset))

    @property
    def gaussian_perimeter(self) -> float:
        return float(std_normal_pdf(self.offset))

    def describe(self) -> Dict[str, Any]:
        return {"normal": self.normal.tolist(), "offset": self.offset}


@dataclass(frozen=True)
class PenalizedValue:
    gauss_perimeter: float
    penalty: float
    total: float

    def __post_init__(self) -> None:
        if abs(self.total - (self.gauss_perimeter + self.penalty)) > 1e-12:
            raise DomainError("total must equal gauss_perimeter + penalty")
        if self.penalty < -1e-12:
            raise DomainError(f"penalty must be nonnegative, got {self.penalty}")


def to_cube(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("to_cube needs finite coordinates")
    return np.asarray(std_normal_cdf(x))


def to_gauss(y):
    y = np.asarray(y, dtype=float)
    if np.any(~((y > 0.0) & (y < 1.0))):
        raise DomainError("to_gauss needs every coordinate strictly inside (0, 1)")
    return np.asarray(std_normal_quantile(y))


def jacobian_determinant(x) -> float:
    """|det D to_cube(x)| in closed form: the Gaussian density phi_d(x)."""
    return gaussian_density_d(x)


def fd_jacobian_determinant(x, h: float = 1e-5) -> float:
    """Determinant of the central finite-difference Jacobian of ``to_cube``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    jac = np.empty((d, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        jac[:, j] = (to_cube(x + step) - to_cube(x - step)) / (2.0 * h)
    return float(np.linalg.det(jac))


def _check_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    _check_dim(A.shape[0])
    scale = np.abs(A).max()
    if scale == 0.0 or abs(np.linalg.det(A / scale)) <= SINGULAR_TOL:
        raise SingularityError("matrix is singular (|det| <= 1e-12 after scaling)")
    return A


def restriction_jacobian(A, nu) -> float:
    """Area factor of A restricted to nu^perp: |det A| * |A^{-T} nu|."""
    A = _check_matrix(A)
    nu = _unit(nu)
    if nu.shape != (A.shape[0],):
        raise DomainError("normal and matrix dimensions differ")
    return float(abs(np.linalg.det(A)) * np.linalg.norm(np.linalg.solve(A.T, nu)))


def orthonormal_complement(nu) -> np.ndarray:
    """
    Columns form an orthonormal basis of nu^perp. Gram-Schmidt over the
    coordinate axes taken in order of increasing |nu_i| (stable), so the
    basis is a deterministic function of nu.
    """
    nu = _unit(nu)
    nu = nu / np.linalg.norm(nu)
    d = nu.size
    basis: List[np.ndarray] = [nu]
    for i in np.argsort(np.abs(nu), kind="stable"):
        if len(basis) == d:
            break
        v = np.zeros(d)
        v[i] = 1.0
        for b in basis:
            v -= (b @ v) * b
        # second pass for round-off
        for b in basis:
            v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
    return np.column_stack(basis[1:]) if d > 1 else np.zeros((1, 0))


def restriction_area_gram(A, nu) -> float:
    A = _check_matrix(A)
    M = A @ orthonormal_complement(nu)
    if M.shape[1] == 0:
        return 1.0
    return float(math.sqrt(abs(np.linalg.det(M.T @ M))))


def restriction_area_mc(A, nu, n: int = 1_000_000, seed: int = 0, chunk: int = 1 << 18) -> float:
    """
    Hit-or-miss estimate of the area of A applied to the unit (d-1)-cube of
    nu^perp. The image is R [0,1]^{d-1} in the frame of a column-pivoted QR
    of A B; points are drawn in the bounding box of that parallelotope.
    """
    A = _check_matrix(A)
    M = A @ orthonormal_complement(nu)
    k = M.shape[1]
    if k == 0:
        return 1.0
    if n < 1:
        raise DomainError("restriction_area_mc needs n >= 1")

    _, R, _ = linalg.qr(M, mode="economic", pivoting=True)
    corners = np.array(np.meshgrid(*([[0.0, 1.0]] * k), indexing="ij")).reshape(k, -1)
    image = R @ corners
    lo, hi = image.min(axis=1), image.max(axis=1)
    box = float(np.prod(hi - lo))

    rng = make_rng(seed)
    hits = 0
    remaining = n
    while remaining > 0:
        m = min(chunk, remaining)
        z = lo + (hi - lo) * rng.random((m, k))
        c = linalg.solve_triangular(R, z.T)
        hits += int(np.count_nonzero(np.all((c >= 0.0) & (c <= 1.0), axis=0)))
        remaining -= m
    return box * hits / n


def _log_weight_sum(x: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """log sum_i nu_i^2 exp(x_i^2), without overflow."""
    return logsumexp(x * x, b=nu * nu, axis=-1)


def boundary_weight(x, nu):
    x = np.asarray(x, dtype=float)
    nu = _unit(nu)
    out = math.sqrt(2.0 * math.pi) * np.exp(0.5 * _log_weight_sum(x, nu))
    return float(out) if out.ndim == 0 else out


def penalized_functional(surface: SurfaceSample) -> PenalizedValue:
    x, nu, w = surface.points, surface.normals, surface.weights
    d = surface.dimension
    log_density = -0.5 * np.einsum("ij,ij->i", x, x) - 0.5 * d * LOG_2PI
    density = np.exp(log_density)
    half_log_weight = 0.5 * _log_weight_sum(x, nu)

    gauss_perimeter = float(np.sum(w * density))
    penalty = float(np.sum(w * density * np.expm1(half_log_weight)))
    return PenalizedValue(gauss_perimeter, penalty, gauss_perimeter + penalty)


def analytic_halfspace_surface(
    h: HalfspaceSpec,
    d: Optional[int] = None,
    extent: float = DEFAULT_EXTENT,
    resolution: Optional[int] = None,
) -> SurfaceSample:
    """
    Midpoint tensor nodes on the boundary hyperplane, truncated to
    |tangential coordinate| <= extent. With the default extent of 8 the
    neglected Gaussian tail is below exp(-32).
    """
    d = h.dimension if d is None else d
    if d != h.dimension:
        raise DomainError(f"halfspace lives in dimension {h.dimension}, not {d}")
    _check_dim(d)
    if d > MAX_TENSOR_DIM:
        raise UnsupportedError(
            f"tensor quadrature refused for d={d} > {MAX_TENSOR_DIM}; sample the hyperplane by Monte Carlo instead"
        )
    resolution = DEFAULT_RESOLUTION[d] if resolution is None else resolution
    if resolution < 2 or extent <= 0.0:
        raise DomainError("analytic_halfspace_surface needs resolution >= 2 and extent > 0")

    foot = h.offset * h.normal
    if d == 1:
        return SurfaceSample(foot[None, :], h.normal[None, :], np.ones(1))

    if resolution ** (d - 1) > MAX_SURFACE_NODES:
        raise UnsupportedError(f"{resolution}^{d - 1} hyperplane nodes exceed {MAX_SURFACE_NODES}")

    step = 2.0 * extent / resolution
    axis = -extent + (np.arange(resolution) + 0.5) * step
    grids = np.meshgrid(*([axis] * (d - 1)), indexing="ij")
    tangential = np.stack([g.ravel() for g in grids], axis=1)
    points = foot + tangential @ orthonormal_complement(h.normal).T
    normals = np.broadcast_to(h.normal, points.shape)
    weights = np.full(points.shape[0], step ** (d - 1))
    return SurfaceSample(points, normals, weights)


def transport_surface(points_y, normals_y, weights_y) -> SurfaceSample:
    """
    Pull a cube-side boundary quadrature back to the Gaussian side.

    With D = diag(phi(x_i)) the derivative of ``to_cube``, the normal becomes
    D nu_y / |D nu_y| and the area element is divided by the restriction
    Jacobian phi_d(x) / |D nu_y| of D on the new tangent space.
    """
    y = np.atleast_2d(np.asarray(points_y, dtype=float))
    nu_y = _unit(np.atleast_2d(np.asarray(normals_y, dtype=float)), "cube-side normals")
    w_y = np.asarray(weights_y, dtype=float)

    x = to_gauss(y)
    scaled = np.asarray(std_normal_pdf(x)) * nu_y
    length = np.linalg.norm(scaled, axis=1)
    nu_x = scaled / length[:, None]
    log_density = -0.5 * np.sum(x * x, axis=1) - 0.5 * x.shape[1] * LOG_2PI
    w_x = w_y * length * np.exp(-log_density)
    return SurfaceSample(x, nu_x, w_x)


def _midpoints(m: int, lo: float = 0.0, hi: float = 1.0) -> Tuple[np.ndarray, float]:
    step = (hi - lo) / m
    return lo + (np.arange(m) + 0.5) * step, step


def _slab_nodes(spec: CandidateSpec, m: int):
    d = spec.dimension
    axis, sign = spec.direction
    level = spec.volume if sign > 0 else 1.0 - spec.volume
    others, step = _midpoints(m)
    grids = np.meshgrid(*([others] * (d - 1)), indexing="ij")
    count = others.size ** (d - 1)
    y = np.empty((count, d))
    free = [i for i in range(d) if i != axis]
    for i, g in zip(free, grids):
        y[:, i] = g.ravel()
    y[:, axis] = level
    nu = np.zeros((count, d))
    nu[:, axis] = float(sign)
    return y, nu, np.full(count, step ** (d - 1))


def _ball_nodes(d: int, r: float, m: int):
    if d == 1:
        return np.array([[r]]), np.ones((1, 1)), np.ones(1)
    if d == 2:
        theta, dtheta = _midpoints(m, 0.0, 0.5 * math.pi)
        nu = np.column_stack([np.cos(theta), np.sin(theta)])
        return r * nu, nu, np.full(theta.size, r * dtheta)
    if d == 3:
        # Archimedes: area on the sphere is uniform in the height coordinate.
        height, dh = _midpoints(m)
        azimuth, da = _midpoints(m, 0.0, 0.5 * math.pi)
        hh, aa = np.meshgrid(height, azimuth, indexing="ij")
        ring = np.sqrt(1.0 - hh * hh)
        nu = np.column_stack([(ring * np.cos(aa)).ravel(), (ring * np.sin(aa)).ravel(), hh.ravel()])
        return r * nu, nu, np.full(nu.shape[0], r * r * dh * da)
    raise UnsupportedError(f"vertex ball surface quadrature is available for d <= 3, got d={d}")


def _cylinder_nodes(r: float, m: int):
    theta, dtheta = _midpoints(m, 0.0, 0.5 * math.pi)
    z, dz = _midpoints(m)
    tt, zz = np.meshgrid(theta, z, indexing="ij")
    nu = np.column_stack([np.cos(tt).ravel(), np.sin(tt).ravel(), np.zeros(tt.size)])
    y = np.column_stack([r * nu[:, 0], r * nu[:, 1], zz.ravel()])
    return y, nu, np.full(tt.size, r * dtheta * dz)


def _lift_nodes(y, nu, w, extra: int, m: int):
    if extra == 0:
        return y, nu, w
    free, step = _midpoints(m)
    grids = np.meshgrid(*([free] * extra), indexing="ij")
    tail = np.stack([g.ravel() for g in grids], axis=1)
    n_base, n_tail = y.shape[0], tail.shape[0]
    y_out = np.hstack([np.repeat(y, n_tail, axis=0), np.tile(tail, (n_base, 1))])
    nu_out = np.hstack([np.repeat(nu, n_tail, axis=0), np.zeros((n_base * n_tail, extra))])
    w_out = np.repeat(w, n_tail) * step ** extra
    return y_out, nu_out, w_out


def _per_axis(nodes: int, surface_dim: int) -> int:
    if surface_dim == 0:
        return 1
    return max(2, int(round(nodes ** (1.0 / surface_dim))))


def cube_surface_nodes(spec: CandidateSpec, nodes: int = 10_000):
    """Cube-side (points, normals, weights) of the relative boundary of ``spec``."""
    if spec.volume in (0.0, 1.0):
        raise DomainError("degenerate candidate has no boundary")
    if not spec.is_valid:
        raise UnsupportedError(f"{spec.family.value} with radius {spec.radius:.6g} does not fit the cube")

    d = spec.dimension
    m = _per_axis(nodes, d - 1)
    if spec.family is CandidateFamily.AXIS_SLAB:
        return _slab_nodes(spec, m)
    if spec.family is CandidateFamily.VERTEX_BALL:
        return _ball_nodes(d, spec.radius, m)
    if spec.family is CandidateFamily.EDGE_CYLINDER:
        return _cylinder_nodes(spec.radius, m)

    base = spec.base
    if base.family is CandidateFamily.PRODUCT_LIFT:
        raise UnsupportedError("nested product lifts are not supported")
    y, nu, w = cube_surface_nodes(base, nodes)
    return _lift_nodes(y, nu, w, d - base.dimension, _per_axis(nodes, d - 1))


def candidate_surface(spec: CandidateSpec, nodes: int = 10_000) -> SurfaceSample:
    _check_dim(spec.dimension)
    y, nu, w = cube_surface_nodes(spec, nodes)
    if y.shape[0] > MAX_SURFACE_NODES:
        raise UnsupportedError(f"{y.shape[0]} surface nodes exceed {MAX_SURFACE_NODES}")
    return transport_surface(y, nu, w)


def slab_closed_form(lam: float) -> PenalizedValue:
    """Per_gamma and penalty of the image of an axis slab: phi(t) and phi(t)(e^{t^2/2} - 1)."""
    t = std_normal_quantile(lam)
    gp = float(std_normal_pdf(t))
    penalty = gp * math.expm1(0.5 * t * t)
    return PenalizedValue(gp, penalty, gp + penalty)


def decomposition_check(
    c: CandidateSpec,
    lam: Optional[float] = None,
    method: str = "auto",
    nodes: int = 10_000,
) -> BoundReport:
    """
    Compare (1/sqrt(2 pi)) Per(E) with Per_gamma(F) + penalty for F the
    Gaussian-side image of E. ``method`` is closed_form (slabs only),
    quadrature, or auto (closed form when available).
    """
    if lam is not None and lam != c.volume:
        c = c.at_volume(lam)
    _check_dim(c.dimension)
    if method not in ("auto", "closed_form", "quadrature"):
        raise DomainError(f"unknown method {method!r}")
    supported = c.family is not CandidateFamily.PRODUCT_LIFT or c.base.family is not CandidateFamily.PRODUCT_LIFT
    if not supported or (c.family is CandidateFamily.VERTEX_BALL and c.dimension > 3):
        raise UnsupportedError(f"no transported boundary for {c.describe()}")
    if not c.is_valid:
        raise UnsupportedError(f"{c.family.value} does not fit the cube at volume {c.volume}")

    is_slab = c.family is CandidateFamily.AXIS_SLAB
    if method == "closed_form" and not is_slab:
        raise UnsupportedError("closed form exists for axis slabs only")
    used = "closed_form" if (is_slab and method != "quadrature") else "quadrature"

    config: Dict[str, Any] = {"candidate": c.describe(), "method": used}
    lhs = INV_SQRT_2PI * c.perimeter()
    if c.volume in (0.0, 1.0):
        value = PenalizedValue(0.0, 0.0, 0.0)
    elif used == "closed_form":
        value = slab_closed_form(c.volume)
    else:
        value = penalized_functional(candidate_surface(c, nodes))
        config["nodes"] = nodes
    config["gauss_perimeter"] = value.gauss_perimeter
    config["penalty"] = value.penalty
    return BoundReport.of(lhs, value.total, config)


def pushforward_ks_test(d: int, n: int, seed: int, raw: bool = False) -> np.ndarray:
    """
    Kolmogorov-Smirnov statistic of each coordinate of to_cube(X), X standard
    Gaussian, against U(0,1). ``raw`` skips the map (a control that must fail).
    """
    _check_dim(d)
    if n < 1000:
        raise DomainError(f"pushforward_ks_test needs n >= 1000, got {n}")
    samples = sample_gaussian(d, n, seed)
    mapped = samples if raw else to_cube(samples)
    return np.array([stats.kstest(mapped[:, i], "uniform").statistic for i in range(d)])
