from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .candidates import candidate_envelope, default_grid, envelope_features, exact_profile_2d
from .config import SETTINGS, RunConfig
from .errors import UnsupportedError
from .gaussian import SQRT_2PI, gaussian_profile
from .optimizer import MAX_DIM as OPTIMIZER_MAX_DIM
from .optimizer import OptimizerConfig, minimize, profile_sweep, save_field
from .oracle import VoxelSet, oracle_table
from .records import ProfileCurve, Provenance, jsonable
from .suites import run_suite, summarize

logger = logging.getLogger(__name__)

ARTIFACT = "hypercube-isoperimetry"
FIGURE1_POINTS = 1001

OPTIMIZER_GRID = {1: 256, 2: 128, 3: 48, 4: 20}
ORACLE_GRID = {1: 16, 2: 4, 3: 3, 4: 2}


@dataclass
class CommandResult:
    success: bool
    message: Optional[str]
    outfile: Optional[Path] = None
    extra_files: List[Path] = field(default_factory=list)
    payload: Dict[str, Any] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 0 if self.success else 1


# table plumbing

@dataclass
class Table:
    columns: List[str]
    rows: List[List[Optional[float]]]
    provenance: Dict[str, str]
    config: Dict[str, Any]

    def header(self) -> Dict[str, Any]:
        return {
            "artifact": ARTIFACT,
            "version": __version__,
            "config": jsonable(self.config),
            "provenance": self.provenance,
        }

    def header_lines(self) -> List[str]:
        h = self.header()
        return [
            f"# {h['artifact']} {h['version']}",
            "# config: " + json.dumps(h["config"], sort_keys=True),
            "# provenance: " + json.dumps(h["provenance"], sort_keys=True),
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.header_lines():
            buf.write(line + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_format_cell(self.columns[i], v) for i, v in enumerate(row)])
        return buf.getvalue()

    def to_json(self) -> str:
        records = [
            {col: _json_cell(v) for col, v in zip(self.columns, row)}
            for row in self.rows
        ]
        return json.dumps({"header": self.header(), "rows": records}, indent=2, sort_keys=True) + "\n"

    def write(self, path: Path, fmt: str) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        text = self.to_json() if fmt == "json" else self.to_csv()
        path.write_text(text, encoding="utf-8")
        logger.info("wrote %d rows to %s", len(self.rows), path)
        return path


def _format_cell(column: str, value: Any) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if column == "lambda":
        return f"{float(value):.12g}"
    return f"{float(value):.17g}"


def _json_cell(value: Any) -> Any:
    if value is None:
        return None
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return int(value)
    value = float(value)
    return None if math.isnan(value) else value


def _output_path(cfg: RunConfig, default_name: str) -> Path:
    if cfg.out:
        return Path(cfg.out)
    return SETTINGS.base_output_dir / f"{default_name}.{cfg.format}"


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _lambda_grid(cfg: RunConfig) -> np.ndarray:
    if cfg.lambdas:
        return np.asarray(cfg.lambdas, dtype=float)
    return default_grid(cfg.points)


def _optimizer_config(cfg: RunConfig, d: int) -> OptimizerConfig:
    opt = OptimizerConfig(
        grid_n=cfg.grid_n or OPTIMIZER_GRID.get(d, 16),
        seed=cfg.seed,
        init=cfg.init,
    )
    if cfg.max_iterations is not None:
        opt.max_iterations = cfg.max_iterations
    opt.validate()
    return opt


def lower_bound_curve(lambdas: Sequence[float], dimension: float = math.inf) -> ProfileCurve:
    lambdas = np.asarray(lambdas, dtype=float)
    return ProfileCurve(lambdas, SQRT_2PI * np.asarray(gaussian_profile(lambdas)), dimension, Provenance.LOWER_BOUND)


def exact_curve(d: int, lambdas: Sequence[float]) -> ProfileCurve:
    """The profile where it is known: d = 1 (constant) and d = 2 (quarter disc, then slab)."""
    lambdas = np.asarray(lambdas, dtype=float)
    if d == 1:
        return candidate_envelope(1, lambdas)
    if d == 2:
        values = np.asarray(exact_profile_2d(lambdas))
        return ProfileCurve(lambdas, values, 2, Provenance.EXACT)
    raise UnsupportedError(f"no exact profile is known for d={d}; use the candidate source")


def profile_curves(cfg: RunConfig) -> Dict[str, ProfileCurve]:
    d = cfg.dimension
    lambdas = _lambda_grid(cfg)
    if "numerical" in cfg.sources and d > OPTIMIZER_MAX_DIM:
        raise UnsupportedError(f"numerical source supports d <= {OPTIMIZER_MAX_DIM}, got d={d}")

    curves: Dict[str, ProfileCurve] = {}
    for source in cfg.sources:
        key = f"{source}_d{d}"
        if source == "exact":
            curves[key] = exact_curve(d, lambdas)
        elif source == "candidate":
            curves[key] = candidate_envelope(d, lambdas)
        elif source == "lower_bound":
            curves[key] = lower_bound_curve(lambdas, d)
        else:
            curves[key] = profile_sweep(d, lambdas, _optimizer_config(cfg, d))
    return curves


def curves_table(lambdas: np.ndarray, curves: Dict[str, ProfileCurve], config: Dict[str, Any]) -> Table:
    """Align every curve on ``lambdas``; points a curve lacks are left empty."""
    columns = ["lambda"] + list(curves)
    lookup = {
        key: {float(l): float(v) for l, v in zip(curve.lambdas, curve.values)}
        for key, curve in curves.items()
    }
    rows = []
    for lam in lambdas:
        lam = float(lam)
        rows.append([lam] + [lookup[key].get(lam) for key in curves])
    provenance = {key: curve.provenance.value for key, curve in curves.items()}
    return Table(columns, rows, provenance, config)


# commands

def cmd_profile(cfg: RunConfig) -> CommandResult:
    curves = profile_curves(cfg)
    lambdas = _lambda_grid(cfg)
    table = curves_table(lambdas, curves, cfg.resolved())
    out = table.write(_output_path(cfg, f"profile_d{cfg.dimension}"), cfg.format)

    dropped = {}
    for key, curve in curves.items():
        if len(curve) != lambdas.size:
            dropped[key] = lambdas.size - len(curve)
    message = f"{len(table.rows)} rows, columns {table.columns[1:]}"
    if dropped:
        message += f"; points without a value: {dropped}"
    return CommandResult(True, message, out, payload={"columns": table.columns, "dropped": dropped})


def cmd_verify(cfg: RunConfig) -> CommandResult:
    results = run_suite(cfg.suite, seed=cfg.seed, fuzz_count=cfg.fuzz_count)
    summary = summarize(results)
    summary["header"] = {"artifact": ARTIFACT, "version": __version__, "config": jsonable(cfg.resolved())}

    out = Path(cfg.out) if cfg.out else SETTINGS.base_output_dir / f"verify_{cfg.suite}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    message = "; ".join(f"{r.suite}: {r.message}" for r in results)
    return CommandResult(summary["success"], message, out, payload=summary)


def figure1_curves(lambdas: Optional[np.ndarray] = None) -> Tuple[Dict[str, ProfileCurve], ProfileCurve]:
    lambdas = default_grid(FIGURE1_POINTS) if lambdas is None else lambdas
    curves = {
        "exact_d1": exact_curve(1, lambdas),
        "exact_d2": exact_curve(2, lambdas),
        "candidate_d3": candidate_envelope(3, lambdas),
    }
    return curves, lower_bound_curve(lambdas)


def cmd_figure1(cfg: RunConfig) -> CommandResult:
    """
    The d = 1, 2 profiles, the d = 3 conjectural profile and sqrt(2 pi) I_gamma
    on a 1001-point grid, plus a JSON file recording the features of the plot.
    """
    lambdas = default_grid(FIGURE1_POINTS)
    curves, lower = figure1_curves(lambdas)
    everything = dict(curves)
    everything["lower_bound_dinf"] = lower
    table = curves_table(lambdas, everything, cfg.resolved())
    out = table.write(_output_path(cfg, "figure1"), cfg.format)

    features = envelope_features(curves, lower, exact_keys=("exact_d1", "exact_d2"))
    middle = int(np.argmin(np.abs(lambdas - 0.5)))
    features["value_at_half"] = {key: float(c.values[middle]) for key, c in everything.items()}

    holds = (
        all(c["concave"] for c in features["concavity"].values())
        and all(g["dominates"] for g in features["gaussian_bound"].values())
        and features["dimension_monotone"]["holds"]
        and all(abs(v - 1.0) <= 1e-12 for v in features["value_at_half"].values())
    )
    features["holds"] = holds

    features_path = _sibling(out, "_features.json")
    features_path.write_text(json.dumps(jsonable(features), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    message = "figure features hold" if holds else "a figure feature failed; see " + str(features_path)
    return CommandResult(holds, message, out, [features_path], payload=features)


def cmd_oracle(cfg: RunConfig) -> CommandResult:
    d = cfg.dimension
    n = cfg.grid_n or ORACLE_GRID.get(d, 2)
    ks = cfg.ks
    rows = oracle_table(d, n, ks, symmetry=cfg.symmetry, workers=cfg.workers)

    columns = ["k", "volume", "faces", "perimeter", "optima", "gaussian_bound", "bound_slack", "continuum_ratio"]
    table = Table(
        columns,
        [[row[c] for c in columns] for row in rows],
        {"perimeter": Provenance.EXACT.value, "gaussian_bound": Provenance.LOWER_BOUND.value},
        cfg.resolved(),
    )
    out = table.write(_output_path(cfg, f"oracle_d{d}_n{n}"), cfg.format)

    blocks = []
    for row in rows:
        for mask in row["masks"]:
            matrix = VoxelSet.from_mask(d, n, mask).to_bit_matrix()
            blocks.append(f"# k={row['k']} faces={row['faces']}\n{matrix}\n")
    sets_path = _sibling(out, "_sets.txt")
    sets_path.write_text("\n".join(blocks), encoding="utf-8")

    violations = [row["k"] for row in rows if row["bound_slack"] < -1e-12]
    if violations:
        return CommandResult(False, f"discrete minima below the Gaussian bound at k={violations}", out, [sets_path])
    return CommandResult(True, f"{len(rows)} rows", out, [sets_path], payload={"rows": rows})


def cmd_optimize(cfg: RunConfig) -> CommandResult:
    d, lam = cfg.dimension, cfg.volume
    if d > OPTIMIZER_MAX_DIM:
        raise UnsupportedError(f"shape optimizer supports d <= {OPTIMIZER_MAX_DIM}, got d={d}")
    opt = _optimizer_config(cfg, d)
    result = minimize(d, lam, opt)

    lower = SQRT_2PI * float(gaussian_profile(lam))
    reference = float(candidate_envelope(d, [lam]).values[0]) if 0.0 < lam < 1.0 else 0.0
    payload = {
        "header": {"artifact": ARTIFACT, "version": __version__, "config": jsonable(cfg.resolved())},
        "estimate": result.estimate,
        "lower_bound": lower,
        "candidate": reference,
        "converged": result.converged,
        "provenance": Provenance.NUMERICAL.value,
        "diagnostics": jsonable(result.diagnostics),
    }

    out = Path(cfg.out) if cfg.out else SETTINGS.base_output_dir / f"optimize_d{d}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    field_path = save_field(result.field, _sibling(out, ".field"))
    payload["field_file"] = field_path.name
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    if result.estimate < lower - 1e-6:
        return CommandResult(False, f"estimate {result.estimate:.6f} is below the Gaussian bound {lower:.6f}", out, [field_path], payload)
    return CommandResult(True, f"estimate {result.estimate:.6f} (candidate {reference:.6f})", out, [field_path], payload)


COMMAND_HANDLERS = {
    "profile": cmd_profile,
    "verify": cmd_verify,
    "figure1": cmd_figure1,
    "oracle": cmd_oracle,
    "optimize": cmd_optimize,
}


def run_command(cfg: RunConfig) -> CommandResult:
    return COMMAND_HANDLERS[cfg.command](cfg)
