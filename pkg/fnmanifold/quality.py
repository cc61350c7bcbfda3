"""
Rank-based embedding quality: Q_RX / R_NX curves, AUC and the local/global split at g_max.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import pandas as pd

from .distance import DistanceMatrix, geodesic_from_direct, pairwise_direct
from .embed import Embedding

logger = logging.getLogger(__name__)

NEIGHBORHOOD_METRICS = ("dir", "geo")
OBJECTIVES = ("auc", "qlocal")


@dataclass(frozen=True, eq=False)
class RankTable:
    """
    order[i] lists the other n - 1 points by ascending distance from i (ties by index);
    ranks[i, j] is the 1-based position of j in that list, 0 for j == i.
    """

    order: np.ndarray
    ranks: np.ndarray
    space: str = "function"
    metric: str = "dir"

    @property
    def n(self) -> int:
        return self.order.shape[0]


def rank_table(d: DistanceMatrix, metric: Optional[str] = None) -> RankTable:
    n = d.n
    masked = np.array(d.d, dtype=float)
    # self sorts first even against zero-distance duplicates
    np.fill_diagonal(masked, -1.0)
    perm = np.argsort(masked, axis=1, kind="stable")
    order = perm[:, 1:].astype(np.int32)
    ranks = np.empty((n, n), dtype=np.int32)
    np.put_along_axis(ranks, perm, np.broadcast_to(np.arange(n, dtype=np.int32), (n, n)), axis=1)
    if metric is None:
        metric = "geo" if d.metric == "geodesic" else "dir"
    return RankTable(order=order, ranks=ranks, space=d.space, metric=metric)


@dataclass(frozen=True, eq=False)
class QualityCurve:
    qrx: np.ndarray
    rnx: np.ndarray
    overlap: np.ndarray
    g_max: int
    metric: str = "dir"
    space: str = "function"

    @property
    def n(self) -> int:
        return self.qrx.size + 1

    def frame(self) -> pd.DataFrame:
        """One row per neighborhood size; R_NX is undefined at g = n - 1."""
        g = np.arange(1, self.n)
        return pd.DataFrame({"g": g, "Q_RX": self.qrx, "R_NX": np.append(self.rnx, np.nan)})


def rnx_curve(ref: RankTable, emb: RankTable) -> QualityCurve:
    """
    Q_RX(g) for g = 1..n-1 and R_NX(g) for g = 1..n-2.

    The neighborhoods of every point grow one rank at a time in both spaces; the overlap
    gains [new emb neighbor already in ref set] + [new ref neighbor already in emb set],
    minus one when both new neighbors coincide.
    """
    if ref.n != emb.n:
        raise ValueError(f"rank tables differ in size: {ref.n} vs {emb.n}")
    n = ref.n
    if n < 4:
        raise ValueError(f"rnx_curve() needs n >= 4, got {n}")
    g = np.arange(1, n, dtype=np.int64)
    new_emb, new_ref = emb.order, ref.order
    in_ref = np.take_along_axis(ref.ranks, new_emb, axis=1) <= g
    in_emb = np.take_along_axis(emb.ranks, new_ref, axis=1) <= g
    gained = in_ref.astype(np.int64) + in_emb - (new_emb == new_ref)
    overlap = np.cumsum(gained, axis=1).sum(axis=0)
    qrx = overlap / (g * float(n))
    gg = g[:-1].astype(float)
    rnx = ((n - 1) * qrx[:-1] - gg) / (n - 1 - gg)
    g_max = int(np.argmax(rnx)) + 1
    return QualityCurve(qrx=qrx, rnx=rnx, overlap=overlap, g_max=g_max, metric=ref.metric, space=ref.space)


def auc_rnx(curve: QualityCurve, weighted: bool = True) -> float:
    """
    Area under R_NX on a log scale: sum_g R_NX(g) / g over sum_g 1 / g.

    weighted=False evaluates the unweighted numerator sum_g R_NX(g) over the same
    denominator, which does not reach 1 for a perfect embedding.
    """
    inv_g = 1.0 / np.arange(1, curve.rnx.size + 1)
    numerator = curve.rnx @ inv_g if weighted else curve.rnx.sum()
    return float(numerator / inv_g.sum())


def q_local_global(curve: QualityCurve, on: str = "qrx") -> Tuple[float, float]:
    """Mean of Q_RX (or R_NX with on="rnx") up to and from g_max."""
    if on == "qrx":
        values = curve.qrx
    elif on == "rnx":
        values = curve.rnx
    else:
        raise ValueError(f"q_local_global() averages 'qrx' or 'rnx', got {on!r}")
    g_max = curve.g_max
    return float(values[:g_max].mean()), float(values[g_max - 1 :].mean())


@dataclass(frozen=True, eq=False)
class QualityReport:
    auc: float
    q_local: float
    q_global: float
    curve: QualityCurve
    provenance: dict = field(default_factory=dict)

    def score(self, objective: str) -> float:
        if objective == "auc":
            return self.auc
        if objective == "qlocal":
            return self.q_local
        raise ValueError(f"Unknown objective {objective!r}: one of {OBJECTIVES} is supported")

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "q_local": self.q_local,
            "q_global": self.q_global,
            "g_max": self.curve.g_max,
            "m": self.curve.metric,
            "space": self.curve.space,
            **self.provenance,
        }


def _check_metric(m: str):
    if m not in NEIGHBORHOOD_METRICS:
        raise ValueError(f"Unknown neighborhood metric {m!r}: one of {NEIGHBORHOOD_METRICS} is supported")


def reference_table(ref_d: DistanceMatrix, m: str = "dir", geodesic_k: int = 10) -> RankTable:
    """Rank table of a direct reference matrix under the dir or geo neighborhood metric."""
    _check_metric(m)
    if ref_d.metric != "direct":
        raise ValueError("reference distances must be direct; geodesics are derived from them")
    if m == "geo":
        return rank_table(geodesic_from_direct(ref_d, geodesic_k), metric="geo")
    return rank_table(ref_d, metric="dir")


def evaluate_embedding(
    ref_d: DistanceMatrix,
    emb,
    m: str = "dir",
    geodesic_k: int = 10,
    ref_table: Optional[RankTable] = None,
    weighted: bool = True,
    on: str = "qrx",
    embedding_id: Optional[str] = None,
) -> QualityReport:
    """
    Compare the neighborhoods of an embedding against a reference space.

    Args:
        ref_d: direct distances in the reference (function or parameter) space.
        emb: an Embedding or an n x d coordinate matrix; its neighborhoods always use
            direct distances between the coordinates.
        m: "dir" or "geo" reference neighborhoods.
        geodesic_k: k-NN size for geo reference neighborhoods, reported either way.
        ref_table: precomputed reference_table(ref_d, m, geodesic_k), reused across calls.
    """
    _check_metric(m)
    coords = emb.coords if isinstance(emb, Embedding) else np.asarray(emb, dtype=float)
    if coords.shape[0] != ref_d.n:
        raise ValueError(f"embedding has {coords.shape[0]} points, reference has {ref_d.n}")
    table = ref_table if ref_table is not None else reference_table(ref_d, m, geodesic_k)
    if table.metric != m:
        raise ValueError(f"reference table was built for m={table.metric}, not {m}")
    emb_table = rank_table(pairwise_direct(coords, space="embedding"))
    curve = rnx_curve(table, emb_table)
    q_local, q_global = q_local_global(curve, on=on)
    provenance = {"geodesic_k": geodesic_k, "weighted_auc": weighted, "q_on": on}
    if embedding_id is not None:
        provenance["embedding"] = embedding_id
    elif isinstance(emb, Embedding):
        provenance["embedding"] = emb.method
    report = QualityReport(
        auc=auc_rnx(curve, weighted=weighted), q_local=q_local, q_global=q_global, curve=curve, provenance=provenance
    )
    logger.debug(f"AUC^{m}({ref_d.space}) = {report.auc:.4f}, g_max = {curve.g_max}")
    return report
