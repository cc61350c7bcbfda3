"""
Embedding methods working on precomputed distance matrices: MDS, ISOMAP,
diffusion maps, exact t-SNE and UMAP.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import ClassVar, Dict, Optional, Union

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components

from . import umaplayout
from .distance import DistanceMatrix, geodesic_from_direct, knn_indices

logger = logging.getLogger(__name__)

METHODS = ("mds", "isomap", "diffmap", "tsne", "umap")

EIGEN_TOL = 1e-10
TSNE_INIT_STD = 1e-4
TSNE_SWITCH_ITER = 250


class PerplexityError(ValueError):
    """Infeasible perplexity or a sigma bisection that did not converge."""


@dataclass(frozen=True)
class MDSParams:
    k: int = 2
    method: ClassVar[str] = "mds"

    @property
    def dim(self) -> int:
        return self.k


@dataclass(frozen=True)
class IsomapParams:
    k: int = 10
    ndim: int = 2
    method: ClassVar[str] = "isomap"

    @property
    def dim(self) -> int:
        return self.ndim


@dataclass(frozen=True)
class DiffmapParams:
    eps_val: float = 1.0
    neigen: int = 2
    t: int = 1
    alpha: float = 0.0
    method: ClassVar[str] = "diffmap"

    @property
    def dim(self) -> int:
        return self.neigen


@dataclass(frozen=True)
class TSNEParams:
    perplexity: float = 30.0
    dims: int = 2
    theta: float = 0.0
    max_iter: int = 1000
    eta: float = 200.0
    exaggeration: float = 12.0
    method: ClassVar[str] = "tsne"

    @property
    def dim(self) -> int:
        return self.dims


@dataclass(frozen=True)
class UMAPParams:
    n_neighbors: int = 15
    n_components: int = 2
    min_dist: float = 0.1
    n_epochs: int = 200
    init: str = "spectral"
    method: ClassVar[str] = "umap"

    @property
    def dim(self) -> int:
        return self.n_components


HyperParams = Union[MDSParams, IsomapParams, DiffmapParams, TSNEParams, UMAPParams]

HYPERPARAMS: Dict[str, type] = {
    cls.method: cls for cls in (MDSParams, IsomapParams, DiffmapParams, TSNEParams, UMAPParams)
}


def make_hyper(method: str, **values) -> HyperParams:
    """Build the parameter record of `method`, ignoring keys that belong to other methods."""
    if method not in HYPERPARAMS:
        raise ValueError(f"Unknown method {method!r}: one of {METHODS} is supported")
    cls = HYPERPARAMS[method]
    names = {f.name for f in dataclasses.fields(cls)}
    return cls(**{key: value for key, value in values.items() if key in names and value is not None})


def hyper_dict(hyper: HyperParams) -> dict:
    return dataclasses.asdict(hyper)


@dataclass(frozen=True, eq=False)
class Embedding:
    """Coordinates in the embedding space plus everything needed to reproduce them."""

    coords: np.ndarray
    method: str
    hyper: HyperParams
    seed: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float, ndmin=2)
        if not np.all(np.isfinite(coords)):
            raise ValueError(f"{self.method} produced non-finite coordinates")
        if coords.shape[1] != self.hyper.dim:
            raise ValueError(f"{self.method} produced {coords.shape[1]} columns, expected {self.hyper.dim}")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]


def orient_columns(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _classical_scaling(dmat: np.ndarray, dim: int):
    n = dmat.shape[0]
    if not 1 <= dim <= n - 1:
        raise ValueError(f"target dimension {dim} outside [1, {n - 1}]")
    d2 = dmat**2
    # -1/2 J D^2 J without forming J
    b = -0.5 * (d2 - d2.mean(axis=0)[None, :] - d2.mean(axis=1)[:, None] + d2.mean())
    b = (b + b.T) / 2.0
    evals, evecs = eigh(b)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    top, vecs = evals[:dim], orient_columns(evecs[:, :dim])
    positive = top > EIGEN_TOL
    coords = vecs * np.sqrt(np.clip(top, 0.0, None))
    coords[:, ~positive] = 0.0
    warnings = []
    if not positive.all():
        message = f"only {int(positive.sum())} positive eigenvalues for {dim} dimensions, zero-padded"
        logger.warning(message)
        warnings.append(message)
    return coords, top, warnings


def mds(d: DistanceMatrix, dim: int = 2) -> Embedding:
    """Classical (Torgerson) MDS of a distance matrix."""
    coords, evals, warnings = _classical_scaling(d.d, dim)
    diagnostics = {"eigenvalues": evals.tolist(), "warnings": warnings}
    return Embedding(coords, "mds", MDSParams(k=dim), diagnostics=diagnostics)


def isomap(d: DistanceMatrix, k: int = 10, ndim: int = 2) -> Embedding:
    """Classical MDS of the geodesic distances over the k-NN graph of `d`."""
    geo = geodesic_from_direct(d, k)
    coords, evals, warnings = _classical_scaling(geo.d, ndim)
    diagnostics = {"eigenvalues": evals.tolist(), "bridges": geo.bridges, "warnings": warnings}
    return Embedding(coords, "isomap", IsomapParams(k=k, ndim=ndim), diagnostics=diagnostics)


def _diffusion_kernel(d: np.ndarray, eps_val: float, alpha: float) -> np.ndarray:
    kernel = np.exp(-(d**2) / eps_val)
    if alpha:
        q = kernel.sum(axis=1) ** alpha
        kernel = kernel / np.outer(q, q)
    return kernel


def transition_matrix(d: DistanceMatrix, eps_val: float, alpha: float = 0.0) -> np.ndarray:
    """Row-stochastic Markov matrix P = Dg^-1 K of the Gaussian kernel."""
    kernel = _diffusion_kernel(d.d, eps_val, alpha)
    return kernel / kernel.sum(axis=1)[:, None]


def diffusion_map(d: DistanceMatrix, eps_val: float, t: int = 1, neigen: int = 2, alpha: float = 0.0) -> Embedding:
    """
    Diffusion map: right eigenvectors psi_j of the Markov matrix of a Gaussian kernel,
    scaled by lambda_j ** t, skipping the trivial constant eigenvector.

    Args:
        d: distance matrix.
        eps_val: kernel width, K = exp(-d^2 / eps_val).
        t: diffusion time.
        neigen: number of nontrivial eigenvectors kept.
        alpha: density normalization exponent (0 keeps the plain Markov normalization).
    """
    n = d.n
    if not eps_val > 0:
        raise ValueError(f"eps_val must be positive, got {eps_val}")
    if int(t) != t or t < 0:
        raise ValueError(f"diffusion time must be a nonnegative integer, got {t}")
    if not 1 <= neigen <= n - 1:
        raise ValueError(f"neigen={neigen} outside [1, {n - 1}]")
    kernel = _diffusion_kernel(d.d, eps_val, alpha)
    warnings = []
    off_diagonal = kernel[~np.eye(n, dtype=bool)]
    if off_diagonal.max() <= np.finfo(float).tiny:
        message = f"degenerate kernel: eps_val={eps_val:.6g} leaves no off-diagonal mass"
        logger.warning(message)
        warnings.append(message)
    row_sums = kernel.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(row_sums)
    # symmetric conjugate Dg^1/2 P Dg^-1/2 shares the spectrum of P
    sym = kernel * inv_sqrt[:, None] * inv_sqrt[None, :]
    sym = (sym + sym.T) / 2.0
    evals, evecs = eigh(sym)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    stationary = np.sqrt(row_sums / row_sums.sum())
    psi = orient_columns(evecs[:, 1 : neigen + 1] / stationary[:, None])
    lam = np.clip(evals[1 : neigen + 1], -1.0, 1.0)
    coords = psi * lam[None, :] ** int(t)
    diagnostics = {
        "eigenvalues": np.clip(evals[: neigen + 1], -1.0, 1.0).tolist(),
        "row_sum_error": float(np.abs((kernel / row_sums[:, None]).sum(axis=1) - 1.0).max()),
        "warnings": warnings,
    }
    hyper = DiffmapParams(eps_val=float(eps_val), neigen=neigen, t=int(t), alpha=float(alpha))
    return Embedding(coords, "diffmap", hyper, diagnostics=diagnostics)


def _row_entropy_bits(p: np.ndarray) -> np.ndarray:
    logs = np.zeros_like(p)
    np.log2(p, out=logs, where=p > 0)
    return -(p * logs).sum(axis=1)


def conditional_probabilities(d: DistanceMatrix, beta) -> np.ndarray:
    """P_{j|i} proportional to exp(-beta_i * d_ij^2), zero on the diagonal."""
    d2 = d.d**2
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (d.n,))
    np.fill_diagonal(d2, np.inf)
    shifted = d2 - d2.min(axis=1)[:, None]
    weights = np.exp(-beta[:, None] * shifted)
    return weights / weights.sum(axis=1)[:, None]


def calibrate_perplexity(d: DistanceMatrix, perplexity: float, tol: float = 1e-5, max_iter: int = 200):
    """
    Bisection on the per-point precision beta_i = 1 / (2 sigma_i^2) until the entropy of
    P_{.|i} is log2(perplexity) within `tol` bits.

    Returns:
        (conditional probabilities, beta, entropy in bits)
    """
    n = d.n
    d2 = d.d**2
    np.fill_diagonal(d2, np.inf)
    shifted = d2 - d2.min(axis=1)[:, None]
    target = np.log2(perplexity)
    finite = np.where(np.isfinite(shifted), shifted, 0.0)
    scale = finite.sum(axis=1) / (n - 1)
    beta = np.where(scale > 0, 1.0 / np.where(scale > 0, scale, 1.0), 1.0)
    lo, hi = np.zeros(n), np.full(n, np.inf)
    for _ in range(max_iter):
        weights = np.exp(-beta[:, None] * shifted)
        cond = weights / weights.sum(axis=1)[:, None]
        entropy = _row_entropy_bits(cond)
        diff = entropy - target
        active = np.abs(diff) > tol
        if not active.any():
            return cond, beta, entropy
        sharpen = active & (diff > 0)
        widen = active & (diff <= 0)
        lo = np.where(sharpen, beta, lo)
        hi = np.where(widen, beta, hi)
        beta = np.where(sharpen, np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0), beta)
        beta = np.where(widen, (lo + beta) / 2.0, beta)
    raise PerplexityError(
        f"sigma bisection did not converge for {int(active.sum())} points after {max_iter} iterations"
    )


def joint_probabilities(d: DistanceMatrix, perplexity: float) -> np.ndarray:
    """Symmetrized affinities P = (P_{j|i} + P_{i|j}) / (2n)."""
    cond, _, _ = calibrate_perplexity(d, perplexity)
    return (cond + cond.T) / (2.0 * d.n)


def _student_t(y: np.ndarray) -> np.ndarray:
    sq = (y**2).sum(axis=1)
    num = 1.0 / (1.0 + np.maximum(sq[:, None] + sq[None, :] - 2.0 * y @ y.T, 0.0))
    np.fill_diagonal(num, 0.0)
    return num


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    """KL(P || Q) for the Student-t similarities Q of configuration y."""
    num = _student_t(y)
    q = num / num.sum()
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def kl_gradient(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Exact gradient 4 sum_j (p_ij - q_ij)(1 + |y_i - y_j|^2)^-1 (y_i - y_j)."""
    num = _student_t(y)
    w = (p - num / num.sum()) * num
    return 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)


def tsne(
    d: DistanceMatrix,
    perplexity: float = 30.0,
    dims: int = 2,
    max_iter: int = 1000,
    eta: float = 200.0,
    exaggeration: float = 12.0,
    theta: float = 0.0,
    seed: int = 1,
) -> Embedding:
    """
    Exact t-SNE on a distance matrix.

    Starts from isotropic Gaussian coordinates (sd 1e-4), no PCA initialization. Uses
    momentum 0.5 -> 0.8 and early exaggeration during the first 250 iterations, with
    delta-bar-delta gains. `theta` is recorded but gradients are always exact.
    """
    n = d.n
    if not 3 <= perplexity <= (n - 1) / 3:
        raise PerplexityError(
            f"perplexity {perplexity} infeasible for n={n}: needs 3 <= perplexity <= {(n - 1) / 3:.3f}"
        )
    if dims not in (2, 3):
        raise ValueError(f"t-SNE dims must be 2 or 3, got {dims}")
    cond, _, entropy = calibrate_perplexity(d, perplexity)
    p = np.maximum((cond + cond.T) / (2.0 * n), 1e-12)
    np.fill_diagonal(p, 0.0)

    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, TSNE_INIT_STD, size=(n, dims))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    p_eff = p * exaggeration
    for it in range(max_iter):
        if it == TSNE_SWITCH_ITER:
            p_eff = p
        momentum = 0.5 if it < TSNE_SWITCH_ITER else 0.8
        grad = kl_gradient(p_eff, y)
        gains = np.where(np.sign(grad) != np.sign(update), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        update = momentum * update - eta * gains * grad
        y = y + update
        y = y - y.mean(axis=0)

    diagnostics = {
        "kl": kl_divergence(p, y),
        "entropy_residual": float(np.abs(entropy - np.log2(perplexity)).max()),
        "theta_advisory": theta,
        "warnings": [],
    }
    hyper = TSNEParams(
        perplexity=perplexity, dims=dims, theta=theta, max_iter=max_iter, eta=eta, exaggeration=exaggeration
    )
    return Embedding(y, "tsne", hyper, seed=seed, diagnostics=diagnostics)


def umap_fit(
    d: DistanceMatrix,
    n_neighbors: int = 15,
    n_components: int = 2,
    min_dist: float = 0.1,
    n_epochs: int = 200,
    init: str = "spectral",
    seed: int = 1,
) -> Embedding:
    """
    UMAP on a distance matrix: fuzzy union of smoothed k-NN memberships, spectral or
    random initialization, SGD layout with negative sampling.
    """
    n = d.n
    if not 2 <= n_neighbors <= n - 1:
        raise ValueError(f"n_neighbors={n_neighbors} outside [2, {n - 1}]")
    if init not in ("spectral", "random"):
        raise ValueError(f"init must be 'spectral' or 'random', got {init!r}")
    knn = knn_indices(d.d, n_neighbors)
    knn_dists = np.take_along_axis(d.d, knn, axis=1)
    sigma, rho, residual = umaplayout.smooth_knn_calibration(knn_dists, n_neighbors)
    graph = umaplayout.fuzzy_union(umaplayout.membership_strengths(knn, knn_dists, sigma, rho))
    a, b = umaplayout.find_ab_params(min_dist)

    warnings = []
    init_used = init
    coords = None
    if init == "spectral":
        n_graph_components, _ = connected_components(graph, directed=False)
        if n_graph_components > 1:
            message = f"fuzzy graph has {n_graph_components} components, falling back to random init"
            logger.warning(message)
            warnings.append(message)
            init_used = "random"
        else:
            coords = umaplayout.spectral_layout(graph, n_components)
    if coords is None:
        coords = np.random.default_rng(seed).uniform(-10.0, 10.0, size=(n, n_components))

    coords = umaplayout.optimize_embedding(coords, graph, a, b, n_epochs, seed)
    diagnostics = {
        "a": a,
        "b": b,
        "sigma_residual": float(residual.max()),
        "init_used": init_used,
        "warnings": warnings,
    }
    hyper = UMAPParams(
        n_neighbors=n_neighbors, n_components=n_components, min_dist=min_dist, n_epochs=n_epochs, init=init
    )
    return Embedding(coords, "umap", hyper, seed=seed, diagnostics=diagnostics)


def fit_embedding(d: DistanceMatrix, hyper: HyperParams, seed: int = 1) -> Embedding:
    """Run the method named by `hyper` on `d`."""
    if isinstance(hyper, MDSParams):
        return mds(d, hyper.k)
    if isinstance(hyper, IsomapParams):
        return isomap(d, hyper.k, hyper.ndim)
    if isinstance(hyper, DiffmapParams):
        return diffusion_map(d, hyper.eps_val, hyper.t, hyper.neigen, hyper.alpha)
    if isinstance(hyper, TSNEParams):
        return tsne(d, hyper.perplexity, hyper.dims, hyper.max_iter, hyper.eta, hyper.exaggeration, hyper.theta, seed)
    if isinstance(hyper, UMAPParams):
        return umap_fit(d, hyper.n_neighbors, hyper.n_components, hyper.min_dist, hyper.n_epochs, hyper.init, seed)
    raise ValueError(f"Unsupported hyperparameters {hyper!r}")
