from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .errors import DomainError


class Provenance(str, Enum):
    EXACT = "exact"
    CANDIDATE = "candidate"
    LOWER_BOUND = "lower_bound"
    NUMERICAL = "numerical"


Dimension = Union[int, float]  # positive int, or math.inf for the Gaussian limit


@dataclass(frozen=True)
class ProfileCurve:
    """Sampled profile lambda -> value with its dimension and provenance."""

    lambdas: np.ndarray
    values: np.ndarray
    dimension: Dimension
    provenance: Provenance
    diagnostics: Optional[List[Dict[str, Any]]] = None

    def __post_init__(self) -> None:
        lambdas = np.asarray(self.lambdas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

        if lambdas.ndim != 1 or lambdas.shape != values.shape:
            raise DomainError(
                f"lambdas and values must be 1-D and equally long, got {lambdas.shape} and {values.shape}"
            )
        if lambdas.size and (lambdas.min() < 0.0 or lambdas.max() > 1.0):
            raise DomainError("lambdas must lie in [0, 1]")
        if np.any(np.diff(lambdas) <= 0.0):
            raise DomainError("lambdas must be strictly increasing")
        # NaN marks a point the producer could not evaluate.
        finite = values[~np.isnan(values)]
        if np.any(finite < 0.0):
            raise DomainError("profile values must be nonnegative")
        endpoints = (lambdas == 0.0) | (lambdas == 1.0)
        if np.any(values[endpoints] != 0.0):
            raise DomainError("profile value at lambda=0 and lambda=1 must be 0")
        if self.dimension != math.inf and (int(self.dimension) != self.dimension or self.dimension < 1):
            raise DomainError(f"dimension must be a positive integer or inf, got {self.dimension}")

    def __len__(self) -> int:
        return int(self.lambdas.size)

    @property
    def dimension_label(self) -> str:
        return "inf" if self.dimension == math.inf else str(int(self.dimension))

    def value_at(self, lam: float) -> float:
        return float(np.interp(lam, self.lambdas, self.values))

    def mirrored_values(self) -> np.ndarray:
        """Values at 1 - lambda, interpolated on this curve's own grid."""
        return np.interp(1.0 - self.lambdas, self.lambdas, self.values)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.values - self.mirrored_values()) <= tol))

    def second_differences(self) -> np.ndarray:
        return second_differences(self.lambdas, self.values)

    def is_concave(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.second_differences() <= tol))

    def with_dimension(self, dimension: Dimension) -> "ProfileCurve":
        return ProfileCurve(self.lambdas, self.values.copy(), dimension, self.provenance, self.diagnostics)


def second_differences(lambdas: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Divided second differences on a possibly non-uniform grid."""
    x = np.asarray(lambdas, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        return np.zeros(0)
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    return 2.0 * ((y[2:] - y[1:-1]) / h1 - (y[1:-1] - y[:-2]) / h0) / (h0 + h1)


def jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class BoundReport:
    """One inequality evaluation. ``margin`` is signed so that >= 0 means the inequality holds."""

    lhs: float
    rhs: float
    margin: float
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.margin):
            raise DomainError(f"bound report margin must be finite, got {self.margin}")

    @classmethod
    def of(cls, lhs: float, rhs: float, config: Optional[Dict[str, Any]] = None, seed: Optional[int] = None) -> "BoundReport":
        return cls(lhs=float(lhs), rhs=float(rhs), margin=float(lhs) - float(rhs), config=dict(config or {}), seed=seed)

    def holds(self, tol: float = 1e-9) -> bool:
        return self.margin >= -tol

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "config": jsonable(self.config),
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BoundReport":
        return cls(
            lhs=float(data["lhs"]),
            rhs=float(data["rhs"]),
            margin=float(data["margin"]),
            config=dict(data.get("config") or {}),
            seed=data.get("seed"),
        )

