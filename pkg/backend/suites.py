"""
Verification suites behind ``verify``. Each check records a signed margin
(>= 0 passes) under an inequality family; a suite never raises on a failed
check, it reports it and dumps the offending configuration as JSON under
OUTPUT_DIR/failures/ so it can be replayed.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from . import bounds, candidates, oracle, optimizer, transport
from .candidates import CandidateFamily, CandidateSpec
from .config import SETTINGS, SUITES
from .errors import DomainError, ToolkitError
from .gaussian import SQRT_2PI, gaussian_profile, make_rng
from .records import BoundReport, jsonable

logger = logging.getLogger(__name__)


@dataclass
class SuiteResult:
    suite: str
    success: bool
    message: Optional[str]
    checks: int = 0
    failures: List[Dict[str, Any]] = field(default_factory=list)
    max_abs_margin: Dict[str, float] = field(default_factory=dict)
    min_margin: Dict[str, float] = field(default_factory=dict)
    counts: Dict[str, int] = field(default_factory=dict)
    elapsed: float = 0.0
    dumps: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "success": self.success,
            "message": self.message,
            "checks": self.checks,
            "failure_count": len(self.failures),
            "failures": jsonable(self.failures),
            "max_abs_margin": self.max_abs_margin,
            "min_margin": self.min_margin,
            "counts": self.counts,
            "dumps": self.dumps,
        }


class Recorder:
    """Collects check outcomes for one suite run."""

    def __init__(self, suite: str, failures_dir: Optional[Path] = None):
        self.suite = suite
        self.failures_dir = failures_dir or SETTINGS.failures_dir
        self.result = SuiteResult(suite=suite, success=True, message=None)
        self._started = time.perf_counter()

    def check(self, family: str, margin: float, detail: Optional[Dict[str, Any]] = None, tol: float = 0.0) -> bool:
        r = self.result
        r.checks += 1
        r.counts[family] = r.counts.get(family, 0) + 1
        margin = float(margin)
        if math.isfinite(margin):
            r.max_abs_margin[family] = max(r.max_abs_margin.get(family, 0.0), abs(margin))
            r.min_margin[family] = min(r.min_margin.get(family, math.inf), margin)
        ok = math.isfinite(margin) and margin >= -tol
        if not ok:
            r.failures.append({"family": family, "margin": margin, "tolerance": tol, "detail": detail or {}})
        return ok

    def report(self, family: str, rep: BoundReport, tol: float = 1e-9) -> bool:
        return self.check(family, rep.margin, rep.to_dict(), tol)

    def close_to(self, family: str, value: float, expected: float, tol: float, detail: Optional[Dict[str, Any]] = None) -> bool:
        """Passes when |value - expected| <= tol; the recorded margin is tol - |error|."""
        detail = dict(detail or {})
        detail.update({"value": value, "expected": expected})
        return self.check(family, tol - abs(value - expected), detail)

    def guard(self, family: str, fn: Callable[[], Any]) -> Any:
        """Run ``fn``; an exception counts as one failed check of ``family``."""
        try:
            return fn()
        except (ToolkitError, ArithmeticError, ValueError, FileNotFoundError) as e:
            logger.warning("%s: %s raised %r", self.suite, family, e)
            self.result.checks += 1
            self.result.failures.append({"family": family, "margin": None, "error": repr(e)})
            return None

    def finish(self) -> SuiteResult:
        r = self.result
        r.elapsed = time.perf_counter() - self._started
        r.success = not r.failures
        if r.failures:
            r.message = f"{len(r.failures)} of {r.checks} checks failed"
            r.dumps = self._dump()
        else:
            r.message = f"all {r.checks} checks passed"
        logger.info("suite %s: %s (%.1fs)", self.suite, r.message, r.elapsed)
        return r

    def _dump(self) -> List[str]:
        self.failures_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, failure in enumerate(self.result.failures):
            path = self.failures_dir / f"{self.suite}-{failure['family']}-{i:04d}.json"
            with path.open("w", encoding="utf-8") as f:
                json.dump(jsonable(failure), f, indent=2, sort_keys=True)
            paths.append(str(path))
        return paths


def _progress(iterable, desc: str):
    return tqdm(iterable, desc=desc, disable=not SETTINGS.show_progress)


# transport

def run_transport(seed: int = 0, fuzz_count: int = 1000, failures_dir: Optional[Path] = None) -> SuiteResult:
    rec = Recorder("transport", failures_dir)

    rec.close_to("tightness", SQRT_2PI * float(gaussian_profile(0.5)), 1.0, 1e-12)

    lambdas = np.linspace(0.05, 0.95, 21)
    for d in (1, 2, 3):
        for lam in _progress(lambdas, f"decomposition d={d}"):
            spec = CandidateSpec(CandidateFamily.AXIS_SLAB, d, float(lam))
            closed = rec.guard("decomposition_closed_form", lambda: transport.decomposition_check(spec, method="closed_form"))
            if closed is not None:
                rec.close_to("decomposition_closed_form", closed.margin, 0.0, 1e-8, closed.config)
            quad = rec.guard("decomposition_quadrature", lambda: transport.decomposition_check(spec, method="quadrature"))
            if quad is not None:
                rec.close_to("decomposition_quadrature", quad.margin, 0.0, 1e-3, quad.config)

    n = 100_000
    stats = rec.guard("pushforward", lambda: transport.pushforward_ks_test(3, n, seed))
    if stats is not None:
        critical = 1.95 / math.sqrt(n)
        for i, s in enumerate(stats):
            rec.check("pushforward", critical - float(s), {"coordinate": i, "statistic": float(s), "seed": seed})

    rng = make_rng(seed)
    for trial in _progress(range(20), "restriction area"):
        d = 2 + trial % 2
        A = rng.standard_normal((d, d)) + 2.0 * np.eye(d)
        nu = rng.standard_normal(d)
        nu /= np.linalg.norm(nu)
        formula = rec.guard("restriction_area", lambda: transport.restriction_jacobian(A, nu))
        if formula is None:
            continue
        estimate = transport.restriction_area_mc(A, nu, n=1_000_000, seed=seed + trial)
        detail = {"matrix": A, "normal": nu, "seed": seed + trial}
        rec.check("restriction_area", 0.01 - abs(estimate / formula - 1.0), detail)
        rec.close_to("restriction_gram", transport.restriction_area_gram(A, nu), formula, 1e-9 * max(1.0, formula), detail)

    for _ in range(50):
        d = int(rng.integers(1, 5))
        x = rng.standard_normal(d)
        exact = transport.jacobian_determinant(x)
        rec.close_to("jacobian", transport.fd_jacobian_determinant(x), exact, 1e-6 * max(exact, 1e-12) + 1e-12, {"x": x})

    return rec.finish()


# lemmas and pointwise steps

def run_lemmas(seed: int = 0, fuzz_count: int = 1000, failures_dir: Optional[Path] = None) -> SuiteResult:
    rec = Recorder("lemmas", failures_dir)

    for rep in _progress(bounds.slicing_fuzz(fuzz_count, seed), "slicing"):
        rec.report("slicing", rep, 1e-9)
    for rep in _progress(bounds.strip_fuzz(fuzz_count, seed + 1), "strip"):
        rec.report("strip", rep, 1e-9)

    gaps = bounds.jensen_fuzz(100_000, seed + 2)
    worst = int(np.argmin(gaps))
    rec.check("jensen", float(gaps.min()), {"seed": seed + 2, "index": worst}, 1e-12)

    cs = bounds.cs_fuzz(10_000, seed + 3)
    for rep in cs:
        rec.report("cauchy_schwarz", rep, 1e-12)

    for k in range(1, 512):
        lam = k / 1024.0
        rec.close_to("delta_symmetry", bounds.delta_threshold(lam), bounds.delta_threshold(1.0 - lam), 0.0, {"lambda": lam})

    tilted = np.array([1.0, 1.0]) / math.sqrt(2.0)
    for lam in np.linspace(0.05, 0.95, 19):
        h = transport.HalfspaceSpec.from_volume(tilted, float(lam))
        rec.report("gaussian_isoperimetry", bounds.gaussian_isoperimetry_margin(h, h.gaussian_volume), 1e-12)

    for d in range(1, 9):
        curve = candidates.candidate_envelope(d)
        gap = curve.values - SQRT_2PI * np.asarray(gaussian_profile(curve.lambdas))
        rec.check("gaussian_lower_bound", float(gap.min()), {"dimension": d}, 1e-6)
    for d in range(1, 8):
        slack = candidates.candidate_envelope(d).values - candidates.candidate_envelope(d + 1).values
        rec.check("dimension_monotone", float(slack.min()), {"dimension": d}, 1e-12)

    rows = rec.guard("gap_probe", lambda: bounds.theorem_gap_probe(0.25, (1, 2, 3)))
    for row in rows or []:
        rec.check("gap_probe", row["penalty"] - 1e-3, row)

    return rec.finish()


# discrete oracle

def run_oracle(seed: int = 0, fuzz_count: int = 1000, failures_dir: Optional[Path] = None) -> SuiteResult:
    rec = Recorder("oracle", failures_dir)

    rows = rec.guard("golden", lambda: oracle.oracle_table(2, 4, range(1, 9)))
    if rows is not None:
        problems = rec.guard("golden", lambda: oracle.compare_golden(rows, oracle.load_golden(2, 4)))
        if problems is not None:
            rec.check("golden", 0.0 if not problems else -1.0, {"problems": problems})
        for row in rows:
            rec.check("oracle_lower_bound", row["bound_slack"], row)

    corners = oracle.exhaustive_min(2, 4, 1)
    expected = sorted(1 << i for i in (0, 3, 12, 15))
    rec.check("corner_cells", 0.0 if corners.optima == expected else -1.0, corners.to_dict())
    half = oracle.exhaustive_min(2, 4, 8)
    rec.close_to("half_slab", half.perimeter, 1.0, 0.0, half.to_dict())

    rng = make_rng(seed)
    for _ in _progress(range(min(fuzz_count, 200)), "incremental flips"):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(2, 5))
        v = oracle.VoxelSet(d, n, rng.random(n ** d) < 0.5)
        for index in rng.integers(0, n ** d, 10):
            oracle.incremental_flip(v, int(index))
        rec.check("incremental", 0.0 if v.faces == v.count_faces() else -1.0, {"set": repr(v)})

    return rec.finish()


# optimizer

def run_optimizer(seed: int = 0, fuzz_count: int = 1000, failures_dir: Optional[Path] = None) -> SuiteResult:
    rec = Recorder("optimizer", failures_dir)

    def upper_sandwich(d: int, lam: float, estimate: float, detail: Dict[str, Any]) -> None:
        envelope = float(candidates.candidate_envelope(d, [lam]).values[0])
        rec.check("optimizer_upper_bound", 1.05 * envelope - estimate, detail)

    square = optimizer.OptimizerConfig(grid_n=256, seed=seed)
    for lam in (0.1, 0.3, 0.5):
        result = rec.guard("square_profile", lambda: optimizer.minimize(2, lam, square))
        if result is None:
            continue
        exact = candidates.exact_profile_2d(lam)
        rec.check("square_profile", 0.03 - abs(result.estimate / exact - 1.0), result.diagnostics)
        bound = SQRT_2PI * float(gaussian_profile(lam))
        rec.check("optimizer_lower_bound", result.estimate - bound, result.diagnostics, 1e-6)
        upper_sandwich(2, lam, result.estimate, result.diagnostics)

    for d, grid_n in ((2, 128), (3, 40)):
        cfg = optimizer.OptimizerConfig(grid_n=grid_n, seed=seed)
        curve = rec.guard("near_half", lambda: optimizer.profile_sweep(d, [0.44, 0.5, 0.56], cfg))
        if curve is None:
            continue
        for lam, value in zip(curve.lambdas, curve.values):
            detail = {"dimension": d, "lambda": float(lam), "estimate": float(value)}
            rec.check("near_half", 0.03 - abs(value - 1.0), detail)
            upper_sandwich(d, float(lam), float(value), detail)

    mirror_cfg = optimizer.OptimizerConfig(grid_n=128, seed=seed)
    pair = rec.guard("mirror", lambda: optimizer.minimize_mirror(2, 0.3, mirror_cfg))
    if pair is not None:
        first, mirror = pair
        gap = abs(first.estimate - mirror.estimate) / max(first.estimate, mirror.estimate)
        rec.check("mirror", 0.02 - gap, {"lambda": 0.3, "estimates": [first.estimate, mirror.estimate]})

    runs = {}
    for grid_n in (64, 128):
        cfg = optimizer.OptimizerConfig(grid_n=grid_n, seed=seed)
        runs[grid_n] = rec.guard("grid_refinement", lambda: optimizer.minimize(2, 0.3, cfg))
    if runs[64] is not None and runs[128] is not None:
        coarse, fine = runs[64], runs[128]
        rec.check(
            "grid_refinement",
            coarse.diagnostics["error_bar"] - abs(coarse.estimate - fine.estimate),
            {"lambda": 0.3, "grid_n": [64, 128], "estimates": [coarse.estimate, fine.estimate]},
        )

    flat = np.linspace(1.0 / math.pi, 1.0 - 1.0 / math.pi, 101)
    rec.check("flat_square", -float(np.max(np.abs(candidates.exact_profile_2d(flat) - 1.0))), {"lambdas": [flat[0], flat[-1]]}, 1e-15)

    return rec.finish()


SUITE_RUNNERS: Dict[str, Callable[..., SuiteResult]] = {
    "transport": run_transport,
    "lemmas": run_lemmas,
    "oracle": run_oracle,
    "optimizer": run_optimizer,
}


def run_suite(name: str, seed: int = 0, fuzz_count: int = 1000, failures_dir: Optional[Path] = None) -> List[SuiteResult]:
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}; expected one of {SUITES}")
    names = list(SUITE_RUNNERS) if name == "all" else [name]
    return [SUITE_RUNNERS[n](seed=seed, fuzz_count=fuzz_count, failures_dir=failures_dir) for n in names]


def summarize(results: List[SuiteResult]) -> Dict[str, Any]:
    return {
        "success": all(r.success for r in results),
        "checks": sum(r.checks for r in results),
        "failures": sum(len(r.failures) for r in results),
        "suites": [r.to_dict() for r in results],
    }
