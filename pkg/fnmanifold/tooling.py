import csv
import gc
import logging
from typing import Optional, Union

import fsspec
import numpy as np
import orjson
import pandas as pd
import psutil

from .distance import DistanceMatrix
from .embed import Embedding, hyper_dict, make_hyper
from .synthdata import LINEAR_BOX, FunctionalDataset, ParamSample

logger = logging.getLogger(__name__)

JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
FLOAT_FORMAT = "%.17g"


class DatasetFormatError(ValueError):
    """A CSV cell or row that cannot be read; line and column are 1-based."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.line = line
        self.column = column


def trim_memory() -> int:
    """
    Collect garbage after a sweep and report the resident set size.

    Returns:
        int: Approximate number of objects collected
    """
    collected = gc.collect()
    try:
        rss = psutil.Process().memory_info().rss
        logger.debug(f"Collected {collected} objects, resident memory {rss / 2**20:.1f} MiB")
    except Exception:
        pass
    return collected


def filesystem(url: str):
    """fsspec filesystem for a local path or protocol URL."""
    return fsspec.filesystem(url.split("://")[0] if "://" in url else "file")


def join(base: str, *parts: str) -> str:
    return "/".join([base.rstrip("/"), *parts])


def makedirs(url: str):
    filesystem(url).makedirs(url, exist_ok=True)


def write_json(obj, url: str):
    with fsspec.open(url, "wb") as f:
        f.write(orjson.dumps(obj, option=JSON_OPTIONS))


def read_json(url: str):
    with fsspec.open(url, "rb") as f:
        return orjson.loads(f.read())


def write_frame(frame: pd.DataFrame, url: str):
    with fsspec.open(url, "w") as f:
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _parse_cell(cell: str, line: int, column: int) -> float:
    try:
        value = float(cell.strip())
    except ValueError:
        raise DatasetFormatError(f"line {line}, column {column}: non-numeric cell {cell!r}", line, column) from None
    if not np.isfinite(value):
        raise DatasetFormatError(f"line {line}, column {column}: non-finite cell {cell!r}", line, column)
    return value


def _read_numeric_rows(path: str):
    rows, width = [], None
    with fsspec.open(path, "r") as f:
        reader = csv.reader(f)
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetFormatError(
                    f"line {line}: ragged row with {len(row)} fields, expected {width}",
                    line,
                    min(len(row), width) + 1,
                )
            rows.append((line, [_parse_cell(cell, line, j + 1) for j, cell in enumerate(row)]))
    if not rows:
        raise DatasetFormatError(f"{path} holds no data rows", 1, 1)
    return rows


def load_dataset_csv(path: str, grid_row: bool = True) -> FunctionalDataset:
    """
    Read a functional data set: optionally a first row of grid values, then one
    observation per row. A grid outside [0, 1] is mapped affinely onto it; without a
    grid row the grid is equispaced on [0, 1].
    """
    rows = _read_numeric_rows(path)
    if grid_row:
        grid_line, grid = rows[0][0], np.asarray(rows[0][1])
        rows = rows[1:]
        _, first, counts = np.unique(grid, return_index=True, return_counts=True)
        if np.any(counts > 1):
            column = int(np.sort(np.setdiff1d(np.arange(grid.size), first))[0]) + 1
            raise DatasetFormatError(
                f"line {grid_line}, column {column}: duplicate grid value {grid[column - 1]}", grid_line, column
            )
        if np.any(np.diff(grid) <= 0):
            column = int(np.argmax(np.diff(grid) <= 0)) + 2
            raise DatasetFormatError(f"line {grid_line}, column {column}: grid is not increasing", grid_line, column)
        if grid[0] < 0.0 or grid[-1] > 1.0:
            logger.info(f"Rescaling grid [{grid[0]}, {grid[-1]}] of {path} onto [0, 1]")
            grid = (grid - grid[0]) / (grid[-1] - grid[0])
    else:
        grid = np.linspace(0.0, 1.0, len(rows[0][1]))
    values = np.array([values for _, values in rows])
    dataset = FunctionalDataset(grid, values, provenance="external")
    logger.info(f"Loaded {path}: n={dataset.n}, m={dataset.m}")
    return dataset


def save_dataset_csv(dataset: FunctionalDataset, path: str):
    with fsspec.open(path, "w") as f:
        np.savetxt(f, np.vstack([dataset.grid, dataset.values]), fmt=FLOAT_FORMAT, delimiter=",")


def save_params_csv(params: ParamSample, path: str):
    write_frame(pd.DataFrame(params.values, columns=list(params.active_params)), path)


def load_params_csv(path: str, manifold_id: str = LINEAR_BOX) -> ParamSample:
    with fsspec.open(path, "r") as f:
        frame = pd.read_csv(f, float_precision="round_trip")
    return ParamSample(frame.to_numpy(dtype=float), manifold_id, tuple(frame.columns))


def load_color_csv(path: str, column: Optional[str] = None) -> np.ndarray:
    """One scalar per observation for coloring scatter plots, from a CSV with a header."""
    with fsspec.open(path, "r") as f:
        frame = pd.read_csv(f, float_precision="round_trip")
    if column is None:
        column = frame.columns[0]
    if column not in frame.columns:
        raise ValueError(f"{path} has no column {column!r}; columns are {list(frame.columns)}")
    return frame[column].to_numpy(dtype=float)


def save_matrix_csv(d: Union[DistanceMatrix, np.ndarray], path: str):
    matrix = d.d if isinstance(d, DistanceMatrix) else np.asarray(d)
    with fsspec.open(path, "w") as f:
        np.savetxt(f, matrix, fmt=FLOAT_FORMAT, delimiter=",")


def load_matrix_csv(path: str, metric: str = "direct", space: str = "function") -> DistanceMatrix:
    with fsspec.open(path, "r") as f:
        matrix = np.loadtxt(f, delimiter=",", ndmin=2)
    return DistanceMatrix(matrix, metric=metric, space=space)


def _sidecar(path: str) -> str:
    return path[: -len(".csv")] + ".json" if path.endswith(".csv") else path + ".json"


def save_embedding(emb: Embedding, path: str):
    """Coordinates as CSV plus a JSON sidecar with method, hyperparameters, seed and diagnostics."""
    save_matrix_csv(emb.coords, path)
    write_json(
        {"method": emb.method, "hyper": hyper_dict(emb.hyper), "seed": emb.seed, "diagnostics": emb.diagnostics},
        _sidecar(path),
    )


def load_embedding(path: str) -> Embedding:
    with fsspec.open(path, "r") as f:
        coords = np.loadtxt(f, delimiter=",", ndmin=2)
    sidecar = _sidecar(path)
    if filesystem(sidecar).exists(sidecar):
        meta = read_json(sidecar)
        hyper = make_hyper(meta["method"], **meta["hyper"])
        diagnostics = meta.get("diagnostics") or {}
        return Embedding(coords, meta["method"], hyper, seed=meta.get("seed"), diagnostics=diagnostics)
    # bare coordinates: tag them as an MDS configuration of matching dimension
    return Embedding(coords, "mds", make_hyper("mds", k=coords.shape[1]))
