"""
Scalar and d-dimensional Gaussian primitives.

Phi and its inverse come from ``scipy.special`` (Cephes ``ndtr`` / ``ndtri``);
the quantile gets one Newton step against ``ndtr`` so that
``Phi(quantile(p))`` reproduces ``p`` to round-off. Random numbers use numpy's
counter-based Philox generator, split with ``SeedSequence.spawn``, so a seed
reproduces the same stream on every platform.
"""
from __future__ import annotations

import math
from typing import List, Sequence, Union

import numpy as np
from scipy import special

from .errors import DomainError
from .records import ProfileCurve, Provenance

ArrayLike = Union[float, Sequence[float], np.ndarray]

SQRT_2PI = math.sqrt(2.0 * math.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI


def _scalar_or_array(value: np.ndarray, like: ArrayLike):
    if np.ndim(like) == 0:
        return float(value)
    return value


def std_normal_pdf(t: ArrayLike):
    t = np.asarray(t, dtype=float)
    out = INV_SQRT_2PI * np.exp(-0.5 * t * t)
    return _scalar_or_array(out, t)


def std_normal_cdf(t: ArrayLike):
    t = np.asarray(t, dtype=float)
    return _scalar_or_array(special.ndtr(t), t)


def std_normal_quantile(p: ArrayLike):
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise DomainError(f"quantile needs 0 < p < 1, got {p!r}")

    x = np.atleast_1d(special.ndtri(p_arr))
    p_flat = np.atleast_1d(p_arr)
    dens = INV_SQRT_2PI * np.exp(-0.5 * x * x)
    # Newton polish; skipped where the density underflows.
    ok = dens > 1e-300
    step = np.zeros_like(x)
    step[ok] = (special.ndtr(x[ok]) - p_flat[ok]) / dens[ok]
    x = (x - step).reshape(p_arr.shape)
    return _scalar_or_array(x, p)


def gaussian_profile(lam: ArrayLike):
    """I_gamma = phi o Phi^{-1}, with I_gamma(0) = I_gamma(1) = 0."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(~((lam_arr >= 0.0) & (lam_arr <= 1.0))):
        raise DomainError(f"gaussian_profile needs 0 <= lambda <= 1, got {lam!r}")

    # Fold onto [0, 1/2]: 1 - lam is exact there, which keeps the curve symmetric.
    folded = np.atleast_1d(np.minimum(lam_arr, 1.0 - lam_arr))
    out = np.zeros_like(folded)
    inside = folded > 0.0
    if np.any(inside):
        out[inside] = std_normal_pdf(np.asarray(std_normal_quantile(folded[inside])))
    return _scalar_or_array(out.reshape(lam_arr.shape), lam)


def gaussian_profile_curve(lambdas: Sequence[float]) -> ProfileCurve:
    lambdas = np.asarray(lambdas, dtype=float)
    return ProfileCurve(
        lambdas=lambdas,
        values=np.asarray(gaussian_profile(lambdas)),
        dimension=math.inf,
        provenance=Provenance.EXACT,
    )


def gaussian_density_d(x: ArrayLike):
    """phi_d(x) = prod_i phi(x_i). Accepts one point or a batch with points along the last axis."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DomainError("gaussian_density_d needs a point with at least one coordinate")
    out = np.prod(np.asarray(std_normal_pdf(x)), axis=-1)
    if x.ndim == 1:
        return float(out)
    return out


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def spawn_seeds(seed: int, count: int) -> List[int]:
    """Integer seeds for per-config reproducibility (recorded in reports)."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def sample_gaussian(d: int, n: int, seed: int) -> np.ndarray:
    if d < 1 or n < 1:
        raise DomainError(f"sample_gaussian needs d >= 1 and n >= 1, got d={d}, n={n}")
    return make_rng(seed).standard_normal((n, d))
