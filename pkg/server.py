from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ValidationError

from backend import __version__
from backend.config import SETTINGS, RunConfig, configure_logging
from backend.errors import ToolkitError
from backend.reports import CommandResult, run_command

configure_logging()
logger = logging.getLogger("server")

app = FastAPI(title="Hypercube Isoperimetry API", version=__version__)

OUT_DIR = SETTINGS.base_output_dir / "api"
OUT_DIR.mkdir(parents=True, exist_ok=True)


@app.get("/")
def root():
    return JSONResponse({
        "status": "ok",
        "message": "Hypercube isoperimetry API is running",
        "docs": "/docs",
    })


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


class ProfileRequest(BaseModel):
    dimension: int = 3
    points: int = 101
    lambdas: Optional[List[float]] = None
    sources: List[str] = ["candidate", "lower_bound"]
    grid_n: Optional[int] = None
    seed: Optional[int] = None


class VerifyRequest(BaseModel):
    suite: str = "lemmas"
    fuzz_count: int = 200
    seed: Optional[int] = None


class OracleRequest(BaseModel):
    dimension: int = 2
    grid_n: int = 4
    ks: Optional[List[int]] = None
    symmetry: bool = False


def _run(command: str, params: Dict[str, Any], name: str) -> CommandResult:
    """Build the same RunConfig the CLI would and execute it, writing under OUTPUT_DIR/api."""
    fields = {k: v for k, v in params.items() if v is not None}
    fields.setdefault("format", "json")
    fields["out"] = str(OUT_DIR / f"{name}.json")
    try:
        cfg = RunConfig(command=command, **fields)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=json.loads(e.json()))
    try:
        return run_command(cfg)
    except ToolkitError as e:
        raise HTTPException(status_code=400, detail=str(e))


def _document(result: CommandResult) -> Dict[str, Any]:
    """The JSON the command wrote, plus its status."""
    body = json.loads(Path(result.outfile).read_text(encoding="utf-8"))
    return {"success": result.success, "message": result.message, "result": body}


@app.post("/profile")
def profile(req: ProfileRequest):
    result = _run("profile", req.dict(), f"profile_d{req.dimension}")
    return _document(result)


@app.post("/verify")
def verify(req: VerifyRequest):
    result = _run("verify", req.dict(), f"verify_{req.suite}")
    return _document(result)


@app.get("/figure1")
def figure1():
    result = _run("figure1", {}, "figure1")
    doc = _document(result)
    doc["features"] = result.payload
    return doc


@app.post("/oracle")
def oracle(req: OracleRequest):
    result = _run("oracle", req.dict(), f"oracle_d{req.dimension}_n{req.grid_n}")
    return _document(result)
