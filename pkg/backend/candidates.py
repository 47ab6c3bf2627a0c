"""
Closed-form profiles of the unit cube: the Hadwiger slab, corner balls,
the quarter cylinder along an edge, product lifts, and the pointwise envelope
of all of them. Volumes above 1/2 are handled through the complement, which
has the same relative perimeter.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .compat import trapezoid
from .errors import DomainError
from .gaussian import SQRT_2PI, gaussian_profile
from .records import ProfileCurve, Provenance

logger = logging.getLogger(__name__)

MAX_ENVELOPE_DIM = 16
RADIUS_SLACK = 1e-12


class CandidateFamily(str, Enum):
    AXIS_SLAB = "axis_slab"
    VERTEX_BALL = "vertex_ball"
    EDGE_CYLINDER = "edge_cylinder"
    PRODUCT_LIFT = "product_lift"


@dataclass(frozen=True)
class CandidateSpec:
    """
    A candidate subset of (0,1)^dimension with Lebesgue measure ``volume``.

    ``direction`` is (axis, sign) for slabs: sign +1 is {y_axis < volume},
    sign -1 is {y_axis > 1 - volume}. Balls and cylinders sit at the origin
    corner; with ``complement`` set the set is the complement of the body,
    whose own volume is then 1 - volume.
    """

    family: CandidateFamily
    dimension: int
    volume: float
    direction: Optional[Tuple[int, int]] = None
    base: Optional["CandidateSpec"] = None
    complement: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", CandidateFamily(self.family))
        if self.dimension < 1:
            raise DomainError(f"dimension must be >= 1, got {self.dimension}")
        if not 0.0 <= self.volume <= 1.0:
            raise DomainError(f"volume must lie in [0, 1], got {self.volume}")

        if self.family is CandidateFamily.AXIS_SLAB:
            axis, sign = self.direction or (0, 1)
            if not 0 <= axis < self.dimension or sign not in (-1, 1):
                raise DomainError(f"slab direction {self.direction} invalid in dimension {self.dimension}")
            object.__setattr__(self, "direction", (axis, sign))
        elif self.family is CandidateFamily.EDGE_CYLINDER and self.dimension != 3:
            raise DomainError("edge_cylinder is defined in dimension 3 only")
        elif self.family is CandidateFamily.PRODUCT_LIFT:
            if self.base is None or self.base.dimension >= self.dimension:
                raise DomainError("product_lift needs a base candidate of lower dimension")
            if self.base.volume != self.volume:
                raise DomainError("product_lift keeps the volume of its base")

    @property
    def body_volume(self) -> float:
        return 1.0 - self.volume if self.complement else self.volume

    @property
    def radius(self) -> Optional[float]:
        if self.family is CandidateFamily.VERTEX_BALL:
            d = self.dimension
            return (2.0 ** d * self.body_volume / unit_ball_volume(d)) ** (1.0 / d)
        if self.family is CandidateFamily.EDGE_CYLINDER:
            return math.sqrt(4.0 * self.body_volume / math.pi)
        if self.family is CandidateFamily.PRODUCT_LIFT:
            return self.base.radius
        return None

    @property
    def is_valid(self) -> bool:
        r = self.radius
        return r is None or r <= 1.0 + RADIUS_SLACK

    def perimeter(self) -> Optional[float]:
        """Relative perimeter in the cube, or None when the body does not fit."""
        if not self.is_valid:
            return None
        if self.volume in (0.0, 1.0):
            return 0.0
        if self.family is CandidateFamily.AXIS_SLAB:
            return 1.0
        if self.family is CandidateFamily.VERTEX_BALL:
            return float(_ball_value(self.dimension, self.body_volume))
        if self.family is CandidateFamily.EDGE_CYLINDER:
            return math.sqrt(math.pi * self.body_volume)
        return self.base.perimeter()

    def lifted(self, extra: int = 1) -> "CandidateSpec":
        if extra < 1:
            raise DomainError("lift needs at least one extra dimension")
        base = self.base if self.family is CandidateFamily.PRODUCT_LIFT else self
        return CandidateSpec(
            CandidateFamily.PRODUCT_LIFT,
            dimension=self.dimension + extra,
            volume=self.volume,
            base=base,
        )

    def at_volume(self, lam: float) -> "CandidateSpec":
        base = self.base.at_volume(lam) if self.base is not None else None
        return replace(self, volume=lam, base=base)

    def describe(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "family": self.family.value,
            "dimension": self.dimension,
            "volume": self.volume,
        }
        if self.direction is not None:
            out["direction"] = list(self.direction)
        if self.complement:
            out["complement"] = True
        if self.base is not None:
            out["base"] = self.base.describe()
        return out


def unit_ball_volume(d: int) -> float:
    if d < 1:
        raise DomainError(f"unit_ball_volume needs d >= 1, got {d}")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def _ball_value(d: int, lam):
    return 0.5 * d * unit_ball_volume(d) ** (1.0 / d) * np.power(lam, (d - 1.0) / d)


def _check_volume(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"volume must lie in [0, 1], got {lam}")


def slab_perimeter(d: int, lam: float) -> Tuple[float, CandidateSpec]:
    _check_volume(lam)
    spec = CandidateSpec(CandidateFamily.AXIS_SLAB, d, lam, direction=(0, 1))
    return spec.perimeter(), spec


def vertex_ball_perimeter(d: int, lam: float) -> Optional[float]:
    _check_volume(lam)
    return CandidateSpec(CandidateFamily.VERTEX_BALL, d, lam).perimeter()


def edge_cylinder_perimeter(lam: float) -> Optional[float]:
    _check_volume(lam)
    return CandidateSpec(CandidateFamily.EDGE_CYLINDER, 3, lam).perimeter()


def _fold(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if np.any(~((lam >= 0.0) & (lam <= 1.0))):
        raise DomainError("volumes must lie in [0, 1]")
    return np.minimum(lam, 1.0 - lam)


def _scalar_or_array(out: np.ndarray, like):
    return float(out) if np.ndim(like) == 0 else out


def exact_profile_2d(lam):
    folded = _fold(lam)
    return _scalar_or_array(np.minimum(np.sqrt(math.pi * folded), 1.0), lam)


def conjectural_profile_3d(lam):
    folded = _fold(lam)
    ball = _ball_value(3, folded)
    cylinder = np.sqrt(math.pi * folded)
    out = np.minimum(np.minimum(ball, cylinder), 1.0)
    return _scalar_or_array(np.where(folded > 0.0, out, 0.0), lam)


def lower_bound_profile(lam):
    return _scalar_or_array(SQRT_2PI * np.asarray(gaussian_profile(lam)), lam)


def lift_product(curve: ProfileCurve) -> ProfileCurve:
    if curve.dimension == math.inf:
        raise DomainError("cannot lift a curve of infinite dimension")
    provenance = Provenance.CANDIDATE if curve.provenance is Provenance.EXACT else curve.provenance
    return ProfileCurve(curve.lambdas, curve.values.copy(), int(curve.dimension) + 1, provenance)


def _family_values(d: int, folded: np.ndarray) -> np.ndarray:
    """Row k-1 holds the corner ball of dimension k lifted to d (inf where it does not fit)."""
    rows = np.full((d, folded.size), np.inf)
    # k = 1 is the interval cut, i.e. the slab
    rows[0] = 1.0
    for k in range(2, d + 1):
        radius = np.power(2.0 ** k * folded / unit_ball_volume(k), 1.0 / k)
        fits = radius <= 1.0 + RADIUS_SLACK
        rows[k - 1, fits] = _ball_value(k, folded[fits])
    return rows


def candidate_envelope(d: int, lambdas: Sequence[float] | None = None) -> ProfileCurve:
    """
    Pointwise minimum over every candidate family and lift that lives in
    dimension <= d. The one-dimensional "ball" is the interval cut (slab,
    value 1) and the lifted disc is the edge cylinder, so the corner balls of
    dimensions 1..d cover all families.
    """
    if not 1 <= d <= MAX_ENVELOPE_DIM:
        raise DomainError(f"candidate_envelope needs 1 <= d <= {MAX_ENVELOPE_DIM}, got {d}")
    lambdas = default_grid() if lambdas is None else np.asarray(lambdas, dtype=float)
    folded = _fold(lambdas)

    values = _family_values(d, folded).min(axis=0)
    values = np.where(folded > 0.0, values, 0.0)
    provenance = Provenance.EXACT if d <= 2 else Provenance.CANDIDATE
    return ProfileCurve(lambdas, values, d, provenance)


def default_grid(points: int = 1001) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def best_candidate(d: int, lam: float) -> CandidateSpec:
    """The candidate attaining the envelope at ``lam``; slabs win ties."""
    _check_volume(lam)
    folded = float(min(lam, 1.0 - lam))
    if folded == 0.0:
        return CandidateSpec(CandidateFamily.AXIS_SLAB, d, lam, direction=(0, 1))

    rows = _family_values(d, np.array([folded]))[:, 0]
    k = int(np.argmin(rows)) + 1
    if k == 1 or rows[k - 1] >= 1.0:
        return CandidateSpec(CandidateFamily.AXIS_SLAB, d, lam, direction=(0, 1))

    complement = lam > 0.5
    if k == 2 and d == 3:
        return CandidateSpec(CandidateFamily.EDGE_CYLINDER, 3, lam, complement=complement)
    ball = CandidateSpec(CandidateFamily.VERTEX_BALL, k, lam, complement=complement)
    return ball if k == d else ball.lifted(d - k)


def envelope_features(
    curves: Mapping[str, ProfileCurve],
    lower: ProfileCurve,
    exact_keys: Iterable[str] = (),
    tol: float = 1e-9,
) -> Dict[str, Any]:
    """
    The qualitative features of a family of cube profiles: concavity of the
    exact ones, distance to the Gaussian lower bound, flatness around 1/2 and
    monotonicity in the dimension (keys sorted by dimension).
    """
    features: Dict[str, Any] = {}

    concavity = {}
    for key in exact_keys:
        second = curves[key].second_differences()
        concavity[key] = {
            "concave": bool(np.all(second <= tol)),
            "max_second_difference": float(second.max()) if second.size else 0.0,
        }
    features["concavity"] = concavity

    closeness = {}
    for key, curve in curves.items():
        gap = curve.values - lower.values
        closeness[key] = {
            "min_gap": float(gap.min()),
            "max_gap": float(gap.max()),
            "l1_gap": float(trapezoid(gap, curve.lambdas)),
            "dominates": bool(gap.min() >= -tol),
        }
    features["gaussian_bound"] = closeness

    flat = {}
    for key, curve in curves.items():
        ones = np.isclose(curve.values, 1.0, rtol=0.0, atol=1e-12)
        if not np.any(ones):
            flat[key] = None
            continue
        idx = np.flatnonzero(ones)
        flat[key] = [float(curve.lambdas[idx[0]]), float(curve.lambdas[idx[-1]])]
    features["flat_region"] = flat

    ordered = sorted(curves.items(), key=lambda kv: kv[1].dimension)
    monotone = True
    worst = 0.0
    for (_, lo_dim), (_, hi_dim) in zip(ordered, ordered[1:]):
        slack = float((lo_dim.values - hi_dim.values).min())
        worst = min(worst, slack)
        monotone = monotone and slack >= -1e-12
    features["dimension_monotone"] = {"holds": monotone, "min_slack": worst}

    logger.debug("envelope features: %s", features)
    return features
