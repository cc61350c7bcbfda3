"""
Experiment protocol: generate (or load) data, tune every method four ways, refit the
winners, evaluate them in every reference space and persist the artifacts.
"""

import itertools
import logging
import tomllib
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import fsspec
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from threadpoolctl import threadpool_limits

from . import __version__
from .distance import DistanceMatrix, epsilon_compute, pairwise_direct
from .embed import METHODS, Embedding, fit_embedding, hyper_dict
from .plotting import render_scatter_svg
from .quality import NEIGHBORHOOD_METRICS, OBJECTIVES, QualityReport, evaluate_embedding, reference_table
from .synthdata import SETTINGS, generate_setting
from .tooling import (
    join,
    load_color_csv,
    load_dataset_csv,
    makedirs,
    read_json,
    save_dataset_csv,
    save_embedding,
    save_params_csv,
    write_frame,
    write_json,
)
from .tune import PRESETS, TuningResult, default_grid, grid_search

logger = logging.getLogger(__name__)

REFERENCE_SPACES = ("function", "parameter")
DELTA_SETTINGS = ("a2-sr", "a3-hx", "a3-sc", "a3-tp")
NOT_APPLICABLE = "not applicable"


def _check_members(values: List[str], allowed, what: str) -> List[str]:
    unknown = [v for v in values if v not in allowed]
    if unknown:
        raise ValueError(f"Unknown {what} {unknown}: one of {list(allowed)} is supported")
    if not values:
        raise ValueError(f"at least one {what} is required")
    return values


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    settings: List[str] = ["a1-l"]
    dataset: Optional[str] = None
    grid_row: bool = True
    color_csv: Optional[str] = None
    color_column: Optional[str] = None
    n: int = Field(300, ge=10, le=5000)
    m: int = Field(100, ge=2)
    seed: int = 1
    methods: List[str] = ["mds", "isomap"]
    objectives: List[str] = ["auc"]
    metrics: List[str] = ["dir", "geo"]
    spaces: List[str] = ["function", "parameter"]
    grid: str = "desk"
    grid_overrides: Dict[str, Dict[str, list]] = {}
    geodesic_k: int = Field(10, ge=1)
    eps_p: float = Field(0.01, gt=0.0, lt=1.0)
    weighted_auc: bool = True
    q_on: str = "qrx"
    output: str = "results"
    workers: int = Field(1, ge=1)

    @field_validator("settings")
    @classmethod
    def _settings(cls, v):
        return _check_members(v, SETTINGS, "setting")

    @field_validator("methods")
    @classmethod
    def _methods(cls, v):
        return _check_members(v, METHODS, "method")

    @field_validator("objectives")
    @classmethod
    def _objectives(cls, v):
        return _check_members(v, OBJECTIVES, "objective")

    @field_validator("metrics")
    @classmethod
    def _metrics(cls, v):
        return _check_members(v, NEIGHBORHOOD_METRICS, "metric")

    @field_validator("spaces")
    @classmethod
    def _spaces(cls, v):
        return _check_members(v, REFERENCE_SPACES, "reference space")

    @field_validator("grid")
    @classmethod
    def _grid(cls, v):
        if v not in PRESETS:
            raise ValueError(f"Unknown grid preset {v!r}: one of {PRESETS} is supported")
        return v

    @field_validator("q_on")
    @classmethod
    def _q_on(cls, v):
        if v not in ("qrx", "rnx"):
            raise ValueError(f"q_on must be 'qrx' or 'rnx', got {v!r}")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.geodesic_k >= self.n:
            raise ValueError(f"geodesic_k={self.geodesic_k} must be below n={self.n}")
        if self.grid_overrides:
            _check_members(list(self.grid_overrides), METHODS, "method in grid_overrides")
        return self

    @classmethod
    def from_toml(cls, path: str, **overrides) -> "ExperimentConfig":
        """
        Read a TOML config; tables other than [grid_overrides] are flattened into the top
        level. Keyword overrides that are not None win over file values.
        """
        with fsspec.open(path, "rb") as f:
            raw = tomllib.load(f)
        data = {}
        for key, value in raw.items():
            if isinstance(value, dict) and key != "grid_overrides":
                data.update(value)
            else:
                data[key] = value
        data.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**data)


@dataclass(eq=False)
class ExperimentRecord:
    """One protocol cell: a (setting, method, objective, metric, space) tuning run and its winner."""

    setting: str
    method: str
    objective: str
    metric: str
    space: str
    status: str = "ok"
    best_score: float = float("nan")
    best_hyper: dict = field(default_factory=dict)
    tuning: Optional[TuningResult] = None
    embedding: Optional[Embedding] = None
    reports: Dict[str, QualityReport] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)

    @property
    def cell(self) -> str:
        return f"{self.setting}/{self.method}/{self.objective}-{self.metric}-{self.space}"

    @property
    def failed(self) -> bool:
        return self.status.startswith("error")

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "method": self.method,
            "objective": self.objective,
            "m": self.metric,
            "space": self.space,
            "status": self.status,
            "best_score": self.best_score,
            "best_hyper": self.best_hyper,
            "reports": {key: report.to_dict() for key, report in self.reports.items()},
            "artifacts": self.artifacts,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentRecord":
        score = data.get("best_score")
        return cls(
            setting=data["setting"],
            method=data["method"],
            objective=data["objective"],
            metric=data["m"],
            space=data["space"],
            status=data["status"],
            best_score=float("nan") if score is None else float(score),
            best_hyper=data.get("best_hyper") or {},
            artifacts=data.get("artifacts") or {},
        )


class _Source:
    """Distances and cached reference rank tables of one data set."""

    def __init__(self, name: str, refs: Dict[str, Optional[DistanceMatrix]], color: np.ndarray, geodesic_k: int):
        self.name = name
        self.refs = refs
        self.color = color
        self.geodesic_k = geodesic_k
        self._tables = {}

    def table(self, space: str, metric: str):
        key = (space, metric)
        if key not in self._tables:
            self._tables[key] = reference_table(self.refs[space], metric, self.geodesic_k)
        return self._tables[key]

    @property
    def available(self) -> List[str]:
        return [space for space in REFERENCE_SPACES if self.refs.get(space) is not None]


def _prepare_sources(cfg: ExperimentConfig):
    if cfg.dataset is not None:
        data = load_dataset_csv(cfg.dataset, grid_row=cfg.grid_row)
        color = load_color_csv(cfg.color_csv, cfg.color_column) if cfg.color_csv else np.arange(data.n, dtype=float)
        directory = join(cfg.output, "external")
        makedirs(directory)
        save_dataset_csv(data, join(directory, "data.csv"))
        refs = {"function": pairwise_direct(data.values, space="function"), "parameter": None}
        yield _Source("external", refs, color, cfg.geodesic_k)
        return
    for setting in cfg.settings:
        data, params = generate_setting(setting, n=cfg.n, m=cfg.m, seed=cfg.seed)
        directory = join(cfg.output, setting)
        makedirs(directory)
        save_dataset_csv(data, join(directory, "data.csv"))
        save_params_csv(params, join(directory, "params.csv"))
        refs = {
            "function": pairwise_direct(data.values, space="function"),
            "parameter": pairwise_direct(params.values, space="parameter"),
        }
        yield _Source(setting, refs, params.values[:, 0], cfg.geodesic_k)


def _write_cell(record: ExperimentRecord, source: _Source, directory: str):
    makedirs(directory)
    artifacts = {
        "tuning": join(directory, "tuning.json"),
        "trace": join(directory, "trace.csv"),
        "embedding": join(directory, "embedding.csv"),
        "reports": join(directory, "reports.json"),
        "scatter": join(directory, "scatter.svg"),
    }
    write_json(record.tuning.to_dict(), artifacts["tuning"])
    write_frame(record.tuning.trace_frame(), artifacts["trace"])
    save_embedding(record.embedding, artifacts["embedding"])
    write_json({key: report.to_dict() for key, report in record.reports.items()}, artifacts["reports"])
    for key, report in record.reports.items():
        artifacts[f"curve-{key}"] = join(directory, f"curve-{key}.csv")
        write_frame(report.curve.frame(), artifacts[f"curve-{key}"])
    if record.embedding.dim >= 2:
        render_scatter_svg(record.embedding, source.color, artifacts["scatter"], title=record.cell)
    else:
        del artifacts["scatter"]
    record.artifacts = artifacts


def _run_cell(cfg: ExperimentConfig, source: _Source, method: str, objective: str, metric: str, space: str, eps_s):
    record = ExperimentRecord(source.name, method, objective, metric, space)
    if source.refs.get(space) is None:
        record.status = NOT_APPLICABLE
        logger.info(f"Skipping {record.cell}: no {space} space for this data set")
        return record
    try:
        fs_d = source.refs["function"]
        grid = default_grid(method, fs_d.n, eps_s=eps_s, preset=cfg.grid, overrides=cfg.grid_overrides.get(method))
        tuning = grid_search(
            method,
            fs_d,
            source.refs[space],
            objective=objective,
            m=metric,
            grid=grid,
            geodesic_k=cfg.geodesic_k,
            seed=cfg.seed,
            workers=cfg.workers,
            ref_table=source.table(space, metric),
            weighted=cfg.weighted_auc,
            on=cfg.q_on,
        )
        if not np.isfinite(tuning.best_score):
            raise ValueError(f"all {grid.size} configurations failed")
        with threadpool_limits(limits=1):
            emb = fit_embedding(fs_d, tuning.best_hyper, seed=tuning.best_seed)
        reports = {}
        for ref_space, ref_metric in itertools.product(source.available, NEIGHBORHOOD_METRICS):
            reports[f"{ref_space}-{ref_metric}"] = evaluate_embedding(
                source.refs[ref_space],
                emb,
                m=ref_metric,
                geodesic_k=cfg.geodesic_k,
                ref_table=source.table(ref_space, ref_metric),
                weighted=cfg.weighted_auc,
                on=cfg.q_on,
                embedding_id=record.cell,
            )
        record.tuning = tuning
        record.embedding = emb
        record.reports = reports
        record.best_score = tuning.best_score
        record.best_hyper = hyper_dict(tuning.best_hyper)
        _write_cell(record, source, join(cfg.output, record.cell))
    except Exception as e:
        logger.error(f"Cell {record.cell} failed: {e}")
        record.status = f"error: {e}"
    return record


def run_experiment(cfg: ExperimentConfig) -> List[ExperimentRecord]:
    """
    Run the tuning protocol over every requested (setting, method, objective, metric,
    space) cell. Failed cells are recorded and the run continues; a manifest of all
    cells is written to `<output>/manifest.json`.
    """
    makedirs(cfg.output)
    records = []
    for source in _prepare_sources(cfg):
        eps_s = epsilon_compute(source.refs["function"], cfg.eps_p) if "diffmap" in cfg.methods else None
        for method in cfg.methods:
            for objective, metric, space in itertools.product(cfg.objectives, cfg.metrics, cfg.spaces):
                records.append(_run_cell(cfg, source, method, objective, metric, space, eps_s))
    manifest = {
        "version": __version__,
        "config": cfg.model_dump(),
        "records": [record.to_dict() for record in records],
    }
    write_json(manifest, join(cfg.output, "manifest.json"))
    failed = sum(record.failed for record in records)
    logger.info(f"Experiment finished: {len(records)} cells, {failed} failed, artifacts in {cfg.output}")
    return records


def load_records(output: str) -> List[ExperimentRecord]:
    """Records of a finished experiment directory, read back from its manifest."""
    manifest = read_json(join(output, "manifest.json"))
    return [ExperimentRecord.from_dict(entry) for entry in manifest["records"]]


def delta_report(records: List[ExperimentRecord], metric: str, objective: str = "auc") -> pd.DataFrame:
    """
    Per method, the absolute difference between the mean best score over the
    nonlinear settings a2-sr, a3-hx, a3-sc and a3-tp tuned against the parameter space
    and the same mean tuned against the function space. Methods with missing cells get
    NaN and list what is missing.
    """
    if metric not in NEIGHBORHOOD_METRICS:
        raise ValueError(f"Unknown neighborhood metric {metric!r}: one of {NEIGHBORHOOD_METRICS} is supported")
    methods = list(dict.fromkeys(record.method for record in records))
    rows = []
    for method in methods:
        scores = {
            (record.setting, record.space): record.best_score
            for record in records
            if record.method == method
            and record.metric == metric
            and record.objective == objective
            and record.status == "ok"
            and record.setting in DELTA_SETTINGS
        }
        missing = [
            f"{setting}/{space}"
            for setting in DELTA_SETTINGS
            for space in ("parameter", "function")
            if (setting, space) not in scores
        ]
        if missing:
            logger.warning(f"Delta for {method} ({metric}) omitted, missing cells: {', '.join(missing)}")
            a_ps = a_fs = delta = float("nan")
        else:
            a_ps = float(np.mean([scores[(s, "parameter")] for s in DELTA_SETTINGS]))
            a_fs = float(np.mean([scores[(s, "function")] for s in DELTA_SETTINGS]))
            delta = abs(a_ps - a_fs)
        rows.append(
            {"method": method, "m": metric, "a_ps": a_ps, "a_fs": a_fs, "delta": delta, "missing": ";".join(missing)}
        )
    return pd.DataFrame(rows, columns=["method", "m", "a_ps", "a_fs", "delta", "missing"])
