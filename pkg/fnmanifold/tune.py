"""
Grid-search tuning of the embedding hyperparameters against a rank-based objective.
"""

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dask.distributed import Client, LocalCluster, as_completed
from threadpoolctl import threadpool_limits
from tqdm import tqdm

from .distance import DistanceMatrix, epsilon_compute
from .embed import METHODS, HyperParams, TSNEParams, fit_embedding, hyper_dict, make_hyper
from .quality import OBJECTIVES, RankTable, evaluate_embedding, reference_table
from .tooling import trim_memory

logger = logging.getLogger(__name__)

PRESETS = ("desk", "full")


@dataclass(frozen=True)
class GridSpec:
    """Cartesian product of hyperparameter axes, iterated in axis order with the last axis fastest."""

    method: str
    axes: Tuple[Tuple[str, Tuple], ...]
    preset: str = "custom"
    notes: Tuple[str, ...] = ()

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.axes)

    @property
    def size(self) -> int:
        return math.prod(len(values) for _, values in self.axes)

    def configurations(self):
        for combo in itertools.product(*(values for _, values in self.axes)):
            yield dict(zip(self.names, combo))

    def hypers(self) -> List[HyperParams]:
        return [make_hyper(self.method, **config) for config in self.configurations()]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "preset": self.preset,
            "size": self.size,
            "axes": {name: list(values) for name, values in self.axes},
            "notes": list(self.notes),
        }


def _full_axes(method: str, eps_s: Optional[float]):
    if method == "mds":
        return [("k", [2, 3, 4, 5])]
    if method == "isomap":
        return [("k", list(range(3, 976, 3))), ("ndim", [2, 3, 4, 5])]
    if method == "diffmap":
        return [
            ("eps_val", [float(v) for v in np.linspace(0.15, 1.85, 250) * eps_s]),
            ("neigen", [2, 3, 4, 5]),
            ("t", [1, 2, 4, 8, 16, 32]),
        ]
    if method == "umap":
        return [
            ("n_neighbors", list(range(5, 976, 5))),
            ("n_components", [2, 3, 4, 5]),
            ("min_dist", [0.001, 0.01, 0.1, 0.5]),
            ("n_epochs", [200, 500, 1000]),
            ("init", ["spectral", "random"]),
        ]
    return [
        ("perplexity", [float(p) for p in range(3, 334)]),
        ("dims", [2, 3]),
        ("theta", [0.0, 0.5]),
        ("max_iter", [1000, 3000]),
        ("eta", [10.0, 100.0, 200.0, 500.0]),
        ("exaggeration", [4.0, 12.0]),
    ]


def _desk_axes(method: str, eps_s: Optional[float]):
    if method == "mds":
        return [("k", [2, 3, 4, 5])]
    if method == "isomap":
        return [("k", [4, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50, 60, 80, 100, 150]), ("ndim", [2, 3])]
    if method == "diffmap":
        return [
            ("eps_val", [float(v) for v in np.linspace(0.15, 1.85, 10) * eps_s]),
            ("neigen", [2, 3]),
            ("t", [1, 4]),
        ]
    if method == "umap":
        return [
            ("n_neighbors", [5, 10, 15, 30, 50, 100]),
            ("n_components", [2, 3]),
            ("min_dist", [0.01, 0.5]),
            ("n_epochs", [200]),
            ("init", ["spectral"]),
        ]
    return [
        ("perplexity", [5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 99.0]),
        ("dims", [2, 3]),
        ("theta", [0.0]),
        ("max_iter", [1000]),
        ("eta", [200.0]),
        ("exaggeration", [12.0]),
    ]


def _feasible_range(method: str, axis: str, n: int):
    if axis in ("k", "ndim", "neigen", "n_neighbors", "n_components"):
        return (2 if axis == "n_neighbors" else 1), n - 1
    if axis == "perplexity":
        return 3.0, (n - 1) / 3.0
    return None


def default_grid(
    method: str,
    n: int,
    eps_s: Optional[float] = None,
    preset: str = "full",
    overrides: Optional[Dict[str, Sequence]] = None,
) -> GridSpec:
    """
    Tuning grid of `method` for a data set of n points.

    The full preset sweeps the reference locality ranges (ISOMAP 1300, DIFFMAP 6000,
    UMAP 18720, t-SNE 21184 configurations at n = 1000); the desk preset keeps at most
    200 configurations per method. Axis values outside what n admits are dropped and
    the drop recorded in `notes`.
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}: one of {METHODS} is supported")
    if preset not in PRESETS:
        raise ValueError(f"Unknown grid preset {preset!r}: one of {PRESETS} is supported")
    if n < 10:
        raise ValueError(f"default_grid() needs n >= 10, got {n}")
    if method == "diffmap" and not (eps_s is not None and eps_s > 0):
        raise ValueError(f"diffmap grids need a positive eps_s, got {eps_s}")
    axes = dict((_full_axes if preset == "full" else _desk_axes)(method, eps_s))
    for name, values in (overrides or {}).items():
        if name not in axes:
            raise ValueError(f"{method} grid has no axis {name!r}; axes are {list(axes)}")
        axes[name] = list(values)

    notes = []
    for name, values in axes.items():
        bounds = _feasible_range(method, name, n)
        if bounds is None:
            continue
        lo, hi = bounds
        kept = [v for v in values if lo <= v <= hi]
        if len(kept) < len(values):
            dropped = len(values) - len(kept)
            note = f"{name}: {dropped} of {len(values)} values outside [{lo:g}, {hi:g}] dropped for n={n}"
            logger.warning(f"{method} grid clipped, {note}")
            notes.append(note)
        if not kept:
            raise ValueError(f"{method} grid axis {name} is empty after clipping to [{lo:g}, {hi:g}]")
        axes[name] = kept
    return GridSpec(
        method=method,
        axes=tuple((name, tuple(values)) for name, values in axes.items()),
        preset=preset,
        notes=tuple(notes),
    )


@dataclass(frozen=True, eq=False)
class TuningResult:
    method: str
    objective: str
    metric: str
    space: str
    seed: int
    geodesic_k: int
    grid: GridSpec
    trace: List[dict] = field(default_factory=list)
    best_ordinal: int = 0

    @property
    def best_score(self) -> float:
        return self.trace[self.best_ordinal]["score"]

    @property
    def best_hyper(self) -> HyperParams:
        row = self.trace[self.best_ordinal]
        return make_hyper(self.method, **{name: row[name] for name in self.grid.names})

    @property
    def best_seed(self) -> int:
        return self.seed + self.trace[self.best_ordinal]["evaluated_as"]

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.trace)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective,
            "m": self.metric,
            "space": self.space,
            "seed": self.seed,
            "geodesic_k": self.geodesic_k,
            "grid": self.grid.to_dict(),
            "best_ordinal": self.best_ordinal,
            "best_seed": self.best_seed,
            "best_hyper": hyper_dict(self.best_hyper),
            "best_score": self.best_score,
            "n_failed": sum(1 for row in self.trace if row["status"] != "ok"),
        }


def score_configuration(
    input_d: DistanceMatrix,
    ref_d: DistanceMatrix,
    table: RankTable,
    hyper: HyperParams,
    seed: int,
    objective: str,
    m: str,
    geodesic_k: int,
    weighted: bool = True,
    on: str = "qrx",
):
    """
    Fit and evaluate one configuration; failures come back as (-inf, "error: ...").

    BLAS runs single-threaded here, the same as inside a dask worker, so a score does not
    depend on where it was computed.
    """
    try:
        with threadpool_limits(limits=1):
            emb = fit_embedding(input_d, hyper, seed=seed)
            report = evaluate_embedding(
                ref_d, emb, m=m, geodesic_k=geodesic_k, ref_table=table, weighted=weighted, on=on
            )
        return report.score(objective), "ok"
    except Exception as e:
        logger.error(f"{hyper} failed: {e}")
        return -np.inf, f"error: {e}"


def _exact_key(hyper: HyperParams) -> HyperParams:
    # gradients are exact, so theta never changes a t-SNE fit
    if isinstance(hyper, TSNEParams):
        return dataclasses.replace(hyper, theta=0.0)
    return hyper


def grid_search(
    method: str,
    input_d: DistanceMatrix,
    ref_d: DistanceMatrix,
    objective: str = "auc",
    m: str = "dir",
    grid: Optional[GridSpec] = None,
    geodesic_k: int = 10,
    seed: int = 1,
    workers: int = 1,
    ref_table: Optional[RankTable] = None,
    weighted: bool = True,
    on: str = "qrx",
) -> TuningResult:
    """
    Fit every configuration of `grid` on the function-space direct distances and score it
    against `ref_d`.

    Configuration i runs with seed + i. The best configuration is the first maximizer in
    grid order, whatever the number of workers. With workers > 1 the configurations fan
    out over a local dask cluster and are gathered back in grid order.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"Unknown objective {objective!r}: one of {OBJECTIVES} is supported")
    if input_d.metric != "direct" or input_d.space != "function":
        raise ValueError("grid_search() embeds direct function-space distances only")
    if ref_d.n != input_d.n:
        raise ValueError(f"reference has {ref_d.n} points, input has {input_d.n}")
    if grid is None:
        eps_s = epsilon_compute(input_d) if method == "diffmap" else None
        grid = default_grid(method, input_d.n, eps_s=eps_s, preset="desk")
    if grid.method != method:
        raise ValueError(f"grid is for {grid.method}, not {method}")
    table = ref_table if ref_table is not None else reference_table(ref_d, m, geodesic_k)

    hypers = grid.hypers()
    first_of = {}
    representative = []
    for ordinal, hyper in enumerate(hypers):
        key = _exact_key(hyper)
        if key not in first_of:
            first_of[key] = ordinal
            representative.append(ordinal)
    logger.info(
        f"Tuning {method} on {grid.size} configurations ({len(representative)} distinct fits), "
        f"objective={objective}, m={m}, space={ref_d.space}, workers={workers}"
    )

    scored = {}
    args = (objective, m, geodesic_k, weighted, on)
    if workers <= 1:
        for ordinal in tqdm(representative, desc=f"{method} grid"):
            scored[ordinal] = score_configuration(input_d, ref_d, table, hypers[ordinal], seed + ordinal, *args)
    else:
        cluster = LocalCluster(n_workers=workers, processes=True, threads_per_worker=1)
        client = Client(cluster)
        try:
            input_f, ref_f, table_f = client.scatter([input_d, ref_d, table], broadcast=True)
            futures = [
                client.submit(
                    score_configuration, input_f, ref_f, table_f, hypers[ordinal], seed + ordinal, *args, pure=False
                )
                for ordinal in representative
            ]
            for _ in tqdm(as_completed(futures), total=len(futures), desc=f"{method} grid"):
                pass
            for ordinal, result in zip(representative, client.gather(futures)):
                scored[ordinal] = result
        finally:
            client.close()
            cluster.close()
        trim_memory()

    trace = []
    for ordinal, (hyper, config) in enumerate(zip(hypers, grid.configurations())):
        source = first_of[_exact_key(hyper)]
        score, status = scored[source]
        trace.append({"ordinal": ordinal, **config, "score": float(score), "status": status, "evaluated_as": source})
    best_ordinal = int(np.argmax([row["score"] for row in trace]))
    result = TuningResult(
        method=method,
        objective=objective,
        metric=m,
        space=ref_d.space,
        seed=seed,
        geodesic_k=geodesic_k,
        grid=grid,
        trace=trace,
        best_ordinal=best_ordinal,
    )
    logger.info(
        f"Best {method} configuration #{best_ordinal}: {result.best_hyper} with {objective}={result.best_score:.4f}"
    )
    return result
