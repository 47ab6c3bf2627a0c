"""
Evaluators for the quantitative steps of the dimension-free argument: the
slicing bound around a half-space, the strip mass of a hyperplane, the
soft threshold, and the pointwise Jensen and Cauchy-Schwarz steps.

Every check returns a ``BoundReport`` whose margin is >= 0 when the
inequality holds. Fuzz drivers draw one seed per configuration from a
SeedSequence so that any single configuration can be replayed on its own.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, optimize
from scipy.special import logsumexp

from .candidates import CandidateFamily, CandidateSpec, best_candidate
from .errors import DomainError, PreconditionError, UnsupportedError
from .gaussian import (
    gaussian_profile,
    make_rng,
    spawn_seeds,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)
from .records import BoundReport
from .transport import (
    HalfspaceSpec,
    SurfaceSample,
    candidate_surface,
    decomposition_check,
    penalized_functional,
)

logger = logging.getLogger(__name__)

STRIP_GRID = 2048
STRIP_XTOL = 1e-10
TRUNCATION = 12.0


# slicing around a half-space

@dataclass(frozen=True)
class GraphPerturbation:
    """
    Piecewise-constant normal offset g(u) of the boundary hyperplane as a
    function of the first tangential coordinate u: offsets[j] applies on
    [breakpoints[j-1], breakpoints[j]).
    """

    breakpoints: Tuple[float, ...] = ()
    offsets: Tuple[float, ...] = (0.0,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        if len(self.offsets) != len(self.breakpoints) + 1:
            raise DomainError("a graph perturbation needs one more offset than breakpoints")
        if any(b >= a for a, b in zip(self.breakpoints[1:], self.breakpoints)):
            raise DomainError("graph breakpoints must be strictly increasing")
        if not all(math.isfinite(v) for v in self.breakpoints + self.offsets):
            raise UnsupportedError("graph perturbation must be finite")

    def offset_at(self, u: float) -> float:
        return self.offsets[int(np.searchsorted(self.breakpoints, u, side="right"))]

    def describe(self) -> Dict[str, Any]:
        return {"breakpoints": list(self.breakpoints), "offsets": list(self.offsets)}


@dataclass(frozen=True)
class CarvedSlab:
    """Box {u_lo <= u < u_hi, t_lo <= t < t_hi} added to or removed from F (t is the normal coordinate)."""

    u_lo: float
    u_hi: float
    t_lo: float
    t_hi: float
    add: bool = True

    def __post_init__(self) -> None:
        if not (self.u_lo < self.u_hi and self.t_lo < self.t_hi):
            raise DomainError("carved slab bounds must satisfy lo < hi")
        if not (math.isfinite(self.t_lo) and math.isfinite(self.t_hi)):
            raise UnsupportedError("carved slabs must be bounded in the normal direction")

    def covers(self, u: float) -> bool:
        return self.u_lo <= u < self.u_hi

    def describe(self) -> Dict[str, Any]:
        return {"u": [self.u_lo, self.u_hi], "t": [self.t_lo, self.t_hi], "add": self.add}


@dataclass(frozen=True)
class SlicingConfig:
    """
    H = {x : nu.x < offset}; F = {t < g(u)} with the carved slabs applied in
    order, where t = nu.x - offset and u is the first tangential coordinate.
    """

    halfspace: HalfspaceSpec
    r: float
    graph: GraphPerturbation = field(default_factory=GraphPerturbation)
    slabs: Tuple[CarvedSlab, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "slabs", tuple(self.slabs))
        if not self.r > 0.0:
            raise DomainError(f"strip half-width r must be positive, got {self.r}")
        if self.halfspace.dimension == 1:
            bounded = any(math.isfinite(s.u_lo) or math.isfinite(s.u_hi) for s in self.slabs)
            if self.graph.breakpoints or bounded:
                raise UnsupportedError("in dimension 1 the hyperplane is a point; perturbations cannot vary along it")

    @property
    def ell(self) -> float:
        return self.halfspace.distance

    def describe(self) -> Dict[str, Any]:
        return {
            "halfspace": self.halfspace.describe(),
            "r": self.r,
            "graph": self.graph.describe(),
            "slabs": [s.describe() for s in self.slabs],
        }


def _cells(cfg: SlicingConfig) -> List[Tuple[float, float, float]]:
    """(u_lo, u_hi, representative u) for the cells on which every slice is constant."""
    cuts = set(cfg.graph.breakpoints)
    for s in cfg.slabs:
        cuts.update(v for v in (s.u_lo, s.u_hi) if math.isfinite(v))
    edges = [-math.inf] + sorted(cuts) + [math.inf]
    cells = []
    for lo, hi in zip(edges, edges[1:]):
        if math.isinf(lo) and math.isinf(hi):
            rep = 0.0
        elif math.isinf(lo):
            rep = hi - 1.0
        elif math.isinf(hi):
            rep = lo + 1.0
        else:
            rep = 0.5 * (lo + hi)
        cells.append((lo, hi, rep))
    return cells


def _slice(cfg: SlicingConfig, u: float) -> Tuple[List[float], Callable[[float], bool]]:
    """Candidate endpoints of the slice F_u and its membership test in t."""
    g = cfg.graph.offset_at(u)
    active = [s for s in cfg.slabs if s.covers(u)]

    def member(t: float) -> bool:
        inside = t < g
        for s in active:
            if s.t_lo <= t < s.t_hi:
                inside = s.add
        return inside

    points = {g}
    for s in active:
        points.update((s.t_lo, s.t_hi))
    return sorted(points), member


def _segments(points: Sequence[float]) -> List[Tuple[float, float, float]]:
    edges = [-math.inf] + list(points) + [math.inf]
    out = []
    for lo, hi in zip(edges, edges[1:]):
        if math.isinf(lo) and math.isinf(hi):
            mid = 0.0
        elif math.isinf(lo):
            mid = hi - 1.0
        elif math.isinf(hi):
            mid = lo + 1.0
        else:
            mid = 0.5 * (lo + hi)
        out.append((lo, hi, mid))
    return out


def slice_boundary(cfg: SlicingConfig, u: float) -> List[float]:
    """Normal coordinates of the boundary points of the slice F_u."""
    points, member = _slice(cfg, u)
    segs = _segments(points)
    return [left[1] for left, right in zip(segs, segs[1:]) if member(left[2]) != member(right[2])]


def symmetric_difference_mass(cfg: SlicingConfig) -> float:
    """gamma_d(F symmetric-difference H), exact for the slice description."""
    offset = cfg.halfspace.offset
    total = 0.0
    for lo, hi, rep in _cells(cfg):
        weight = float(std_normal_cdf(hi) - std_normal_cdf(lo))
        points, member = _slice(cfg, rep)
        points = sorted(set(points) | {0.0})
        mass = 0.0
        for a, b, mid in _segments(points):
            if member(mid) != (mid < 0.0):
                mass += float(std_normal_cdf(b + offset) - std_normal_cdf(a + offset))
        total += weight * mass
    return total


def slicing_bound(cfg: SlicingConfig, seed: Optional[int] = None) -> BoundReport:
    """
    lhs: Gaussian area of the projection onto the boundary of H of the part
    of the boundary of F within distance r of it. rhs: phi(l) - phi(l)/phi(l+r)
    * gamma(F sym-diff H) / r.
    """
    ell, r = cfg.ell, cfg.r
    phi_ell = float(std_normal_pdf(ell))

    covered = 0.0
    for lo, hi, rep in _cells(cfg):
        if any(abs(t) < r for t in slice_boundary(cfg, rep)):
            covered += float(std_normal_cdf(hi) - std_normal_cdf(lo))
    lhs = phi_ell * covered

    sym = symmetric_difference_mass(cfg)
    rhs = phi_ell - phi_ell / float(std_normal_pdf(ell + r)) * sym / r
    config = cfg.describe()
    config["symmetric_difference"] = sym
    return BoundReport.of(lhs, rhs, config, seed)


def random_slicing_config(rng: np.random.Generator, max_dim: int = 6) -> SlicingConfig:
    """ell in [0.1, 2], r in [0.05, 1], graph offsets and carved slabs within 3r of the hyperplane."""
    d = int(rng.integers(2, max_dim + 1))
    normal = rng.standard_normal(d)
    normal /= np.linalg.norm(normal)
    ell = float(rng.uniform(0.1, 2.0))
    offset = ell if rng.random() < 0.5 else -ell
    r = float(rng.uniform(0.05, 1.0))

    pieces = int(rng.integers(0, 6))
    breakpoints = tuple(sorted(set(np.round(rng.uniform(-3.0, 3.0, pieces), 12).tolist())))
    offsets = tuple(rng.uniform(-3.0 * r, 3.0 * r, len(breakpoints) + 1).tolist())

    slabs = []
    for _ in range(int(rng.integers(0, 3))):
        u_lo, u_hi = sorted(rng.uniform(-3.0, 3.0, 2).tolist())
        t_lo, t_hi = sorted(rng.uniform(-3.0 * r, 3.0 * r, 2).tolist())
        if u_lo < u_hi and t_lo < t_hi:
            slabs.append(CarvedSlab(u_lo, u_hi, t_lo, t_hi, add=bool(rng.random() < 0.5)))

    return SlicingConfig(
        HalfspaceSpec(normal, offset),
        r,
        GraphPerturbation(breakpoints, offsets),
        tuple(slabs),
    )


def slicing_fuzz(count: int = 1000, seed: int = 0) -> List[BoundReport]:
    reports = []
    for config_seed in spawn_seeds(seed, count):
        cfg = random_slicing_config(make_rng(config_seed))
        reports.append(slicing_bound(cfg, seed=config_seed))
    return reports


# strip mass of a tilted hyperplane

def _check_ell(ell: float) -> None:
    if not ell > 0.0:
        raise DomainError(f"ell must be positive, got {ell}")


def _strip_interval(ell: float, q: float) -> Optional[Tuple[float, float]]:
    """{t : |q ell + sqrt(1-q^2) t| < ell/2}, or None when empty."""
    s = math.sqrt(max(0.0, 1.0 - q * q))
    if s == 0.0:
        return None
    return (-0.5 * ell - q * ell) / s, (0.5 * ell - q * ell) / s


def strip_mass(ell: float, q: float) -> float:
    _check_ell(ell)
    if not -1.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [-1, 1], got {q}")
    interval = _strip_interval(ell, q)
    if interval is None:
        return 0.0
    a, b = interval
    return float(std_normal_pdf(ell)) * float(std_normal_cdf(b) - std_normal_cdf(a))


def locate_strip_maximum(ell: float) -> Tuple[float, float, float]:
    """(maximizer q*, refined maximum, best grid value) of strip_mass(ell, .) over [-1, 1]."""
    _check_ell(ell)
    grid = np.linspace(-1.0, 1.0, STRIP_GRID)
    values = np.array([strip_mass(ell, q) for q in grid])
    i = int(np.argmax(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(
        lambda q: -strip_mass(ell, q),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": STRIP_XTOL},
    )
    refined = -float(res.fun)
    if refined >= values[i]:
        return float(res.x), refined, float(values[i])
    return float(grid[i]), float(values[i]), float(values[i])


def strip_constant(ell: float) -> float:
    """c(ell) = phi(ell) - max_q strip_mass(ell, q)."""
    _, maximum, _ = locate_strip_maximum(ell)
    return float(std_normal_pdf(ell)) - maximum


@dataclass(frozen=True)
class PiecewiseExponential:
    """f(s) = floor + sum_j scale_j (exp(rate_j (s - knot_j)_+) - 1); nondecreasing and nonnegative."""

    knots: Tuple[float, ...]
    rates: Tuple[float, ...]
    scales: Tuple[float, ...]
    floor: float = 0.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, self.floor)
        for k, a, c in zip(self.knots, self.rates, self.scales):
            out = out + c * np.expm1(a * np.maximum(s - k, 0.0))
        return out if out.ndim else float(out)

    def describe(self) -> Dict[str, Any]:
        return {"knots": list(self.knots), "rates": list(self.rates), "scales": list(self.scales), "floor": self.floor}


def _check_nondecreasing(f: Callable, ell: float) -> None:
    samples = np.linspace(0.0, max(4.0 * ell, 10.0), 513)
    values = np.array([float(f(s)) for s in samples])
    if np.any(values < 0.0):
        raise PreconditionError("f must be nonnegative on [0, inf)")
    if np.any(np.diff(values) < -1e-12 * np.maximum(1.0, np.abs(values[1:]))):
        raise PreconditionError("f must be nondecreasing on [0, inf)")


def strip_bound_check(
    ell: float,
    q: float,
    v_deficit: float,
    f: Callable[[float], float],
    seed: Optional[int] = None,
) -> BoundReport:
    """
    Sigma is a hyperplane at distance ell whose normal has i-th component q;
    on it x_i = q ell + sqrt(1-q^2) t with t standard Gaussian. V removes
    weighted mass ``v_deficit`` where |x_i| (and so f) is largest. The lhs
    integral is taken over |t| <= 12, which can only lower it.
    """
    _check_ell(ell)
    if not -1.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [-1, 1], got {q}")
    if v_deficit < 0.0:
        raise DomainError("v_deficit must be nonnegative")
    _check_nondecreasing(f, ell)

    phi_ell = float(std_normal_pdf(ell))
    s = math.sqrt(max(0.0, 1.0 - q * q))
    config: Dict[str, Any] = {"ell": ell, "q": q, "v_deficit": v_deficit}
    f_info = getattr(f, "describe", None)
    if callable(f_info):
        config["f"] = f_info()

    if v_deficit >= phi_ell:
        lhs, tau = 0.0, 0.0
    elif s == 0.0:
        lhs, tau = float(f(ell)) * (phi_ell - v_deficit), ell
    else:
        def kept(tau_: float) -> float:
            lo, hi = (-tau_ - q * ell) / s, (tau_ - q * ell) / s
            return phi_ell * float(std_normal_cdf(hi) - std_normal_cdf(lo))

        if v_deficit == 0.0:
            tau = math.inf
        else:
            upper = abs(q * ell) + s * 40.0
            tau = optimize.brentq(lambda t_: kept(t_) - (phi_ell - v_deficit), 0.0, upper, xtol=1e-14)
        lo = max((-tau - q * ell) / s, -TRUNCATION)
        hi = min((tau - q * ell) / s, TRUNCATION)
        if lo >= hi:
            lhs = 0.0
        else:
            integrand = lambda t_: float(f(abs(q * ell + s * t_))) * float(std_normal_pdf(t_))
            value, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
            lhs = phi_ell * value

    c = strip_constant(ell)
    rhs = (c - v_deficit) * float(f(0.5 * ell))
    config.update({"tau": tau, "strip_constant": c, "truncation": TRUNCATION})
    return BoundReport.of(lhs, rhs, config, seed)


def random_piecewise_exponential(rng: np.random.Generator) -> PiecewiseExponential:
    pieces = int(rng.integers(1, 4))
    return PiecewiseExponential(
        knots=tuple(rng.uniform(0.0, 3.0, pieces).tolist()),
        rates=tuple(rng.uniform(0.0, 2.0, pieces).tolist()),
        scales=tuple(rng.uniform(0.0, 2.0, pieces).tolist()),
        floor=float(rng.uniform(0.0, 1.0)),
    )


def strip_fuzz(count: int = 1000, seed: int = 0) -> List[BoundReport]:
    reports = []
    for config_seed in spawn_seeds(seed, count):
        rng = make_rng(config_seed)
        ell = float(rng.uniform(0.05, 4.0))
        q = float(rng.uniform(-1.0, 1.0))
        v_deficit = float(rng.uniform(0.0, 1.2)) * float(std_normal_pdf(ell))
        f = random_piecewise_exponential(rng)
        reports.append(strip_bound_check(ell, q, v_deficit, f, seed=config_seed))
    return reports


# pointwise steps

def soft_threshold(s, kappa: float):
    if kappa < 0.0:
        raise DomainError(f"kappa must be nonnegative, got {kappa}")
    s_arr = np.asarray(s, dtype=float)
    out = np.sign(s_arr) * np.maximum(np.abs(s_arr) - kappa, 0.0)
    return float(out) if out.ndim == 0 else out


def jensen_gap(nu, x):
    """
    sqrt(sum nu_i^2 e^{x_i^2}) - 1 - sum nu_i^2 (e^{x_i^2/2} - 1) for unit nu.

    With w = nu^2 and z = e^{x^2/2} the leading part is
    sqrt(A) - B = (A - B^2) / (sqrt(A) + B), and A - B^2 is a sum of squares,
    so no cancellation can push it below zero.
    """
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(np.linalg.norm(nu, axis=-1) - 1.0) > 1e-9):
        raise DomainError("nu must be a unit vector")
    w = nu * nu
    z = np.exp(0.5 * x * x)
    diff = z[..., :, None] - z[..., None, :]
    spread = 0.5 * np.einsum("...i,...j,...ij->...", w, w, diff * diff)
    sqrt_a = np.exp(0.5 * logsumexp(x * x, b=w, axis=-1))
    b = np.sum(w * z, axis=-1)
    gap = spread / (sqrt_a + b) + (np.sum(w, axis=-1) - 1.0)
    return float(gap) if np.ndim(gap) == 0 else gap


def cs_pointwise(u, v, seed: Optional[int] = None) -> BoundReport:
    """sum |u_i^2 - v_i^2| <= |u - v| |u + v|; margin is rhs - lhs."""
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DomainError(f"length mismatch: {u.size} vs {v.size}")
    lhs = float(np.sum(np.abs(u * u - v * v)))
    rhs = float(np.linalg.norm(u - v) * np.linalg.norm(u + v))
    return BoundReport(lhs=lhs, rhs=rhs, margin=rhs - lhs, config={"dimension": int(u.size)}, seed=seed)


def jensen_fuzz(count: int = 100_000, seed: int = 0, max_dim: int = 10) -> np.ndarray:
    rng = make_rng(seed)
    gaps = np.empty(count)
    dims = rng.integers(1, max_dim + 1, count)
    for d in np.unique(dims):
        idx = np.flatnonzero(dims == d)
        nu = rng.standard_normal((idx.size, d))
        nu /= np.linalg.norm(nu, axis=1, keepdims=True)
        x = rng.standard_normal((idx.size, d)) * rng.uniform(0.0, 2.0, (idx.size, 1))
        gaps[idx] = jensen_gap(nu, x)
    return gaps


def cs_fuzz(count: int = 10_000, seed: int = 0, max_dim: int = 8) -> List[BoundReport]:
    reports = []
    for config_seed in spawn_seeds(seed, count):
        rng = make_rng(config_seed)
        d = int(rng.integers(1, max_dim + 1))
        reports.append(cs_pointwise(rng.standard_normal(d), rng.standard_normal(d), seed=config_seed))
    return reports


def delta_threshold(lam: float) -> float:
    """min{1, (|Phi^{-1}(lam)|/4)^4}; the cap applies at lam in {0, 1}."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    folded = min(lam, 1.0 - lam)
    if folded == 0.0:
        return 1.0
    t = abs(float(std_normal_quantile(folded)))
    return min(1.0, (t / 4.0) ** 4)


def gaussian_isoperimetry_margin(
    h: Union[HalfspaceSpec, SurfaceSample, CandidateSpec],
    lam: float,
    nodes: int = 10_000,
) -> BoundReport:
    """
    Per_gamma(E) - I_gamma(lam). For a half-space lam must equal Phi(offset);
    for a surface sample lam is the Gaussian measure of the enclosed set, and a
    cube candidate is transported first (the map keeps its volume).
    """
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    config: Dict[str, Any] = {"lambda": lam}
    if isinstance(h, HalfspaceSpec):
        if abs(h.gaussian_volume - lam) > 1e-9:
            raise PreconditionError(f"halfspace has Gaussian volume {h.gaussian_volume:.12g}, not {lam}")
        per = h.gaussian_perimeter
        config["halfspace"] = h.describe()
    else:
        if isinstance(h, CandidateSpec):
            config["candidate"] = h.describe()
            h = candidate_surface(h.at_volume(lam), nodes)
        per = penalized_functional(h).gauss_perimeter
        config["nodes"] = len(h)
    return BoundReport.of(per, float(gaussian_profile(lam)), config)


def theorem_gap_probe(lam: float = 0.25, dims: Sequence[int] = (1, 2, 3), nodes: int = 10_000) -> List[Dict[str, Any]]:
    """
    Penalty part of the transported best candidate per dimension: the Gaussian
    perimeter and the penalty cannot both be small away from lam = 1/2.
    """
    rows = []
    for d in dims:
        spec = best_candidate(d, lam)
        method = "closed_form" if spec.family is CandidateFamily.AXIS_SLAB else "quadrature"
        report = decomposition_check(spec, method=method, nodes=nodes)
        rows.append({
            "dimension": d,
            "candidate": spec.describe(),
            "gauss_perimeter": report.config["gauss_perimeter"],
            "penalty": report.config["penalty"],
            "cube_perimeter_scaled": report.lhs,
            "margin": report.margin,
            "delta1": delta_threshold(lam),
        })
    return rows
