"""
UMAP building blocks: smoothed k-NN memberships, fuzzy union, (a, b) curve fit,
spectral initialization and the numba SGD layout.
"""

import logging

import numba
import numpy as np
from scipy.linalg import eigh
from scipy.optimize import curve_fit
from scipy.sparse import csr_matrix, identity

logger = logging.getLogger(__name__)

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3
NEGATIVE_SAMPLE_RATE = 5
INIT_SCALE = 10.0


def smooth_knn_calibration(knn_dists: np.ndarray, n_neighbors: int, tol: float = SMOOTH_K_TOLERANCE, n_iter: int = 200):
    """
    Per-point rho_i (distance to the nearest neighbor) and sigma_i such that
    sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(n_neighbors).

    Args:
        knn_dists: n x n_neighbors sorted distances to the nearest neighbors (self excluded).

    Returns:
        (sigma, rho, absolute residual of the calibration sum)
    """
    n = knn_dists.shape[0]
    target = np.log2(n_neighbors)
    rho = knn_dists[:, 0].copy()
    excess = np.maximum(knn_dists - rho[:, None], 0.0)
    lo, hi = np.zeros(n), np.full(n, np.inf)
    mid = np.ones(n)
    psum = np.zeros(n)
    for _ in range(n_iter):
        psum = np.exp(-excess / mid[:, None]).sum(axis=1)
        active = np.abs(psum - target) >= tol
        if not active.any():
            break
        shrink = active & (psum > target)
        grow = active & (psum <= target)
        hi = np.where(shrink, mid, hi)
        lo = np.where(grow, mid, lo)
        mid = np.where(shrink, (lo + mid) / 2.0, mid)
        mid = np.where(grow, np.where(np.isinf(hi), mid * 2.0, (mid + hi) / 2.0), mid)

    mean_all = knn_dists.mean()
    floor = np.where(rho > 0, MIN_K_DIST_SCALE * knn_dists.mean(axis=1), MIN_K_DIST_SCALE * mean_all)
    sigma = np.maximum(mid, floor)
    # residual of the floored sigma, the one the memberships use
    residual = np.abs(np.exp(-excess / sigma[:, None]).sum(axis=1) - target)
    return sigma, rho, residual


def membership_strengths(knn: np.ndarray, knn_dists: np.ndarray, sigma: np.ndarray, rho: np.ndarray) -> csr_matrix:
    """Directed fuzzy memberships w_ij = exp(-max(0, d_ij - rho_i) / sigma_i)."""
    n, k = knn.shape
    weights = np.exp(-np.maximum(knn_dists - rho[:, None], 0.0) / sigma[:, None])
    rows = np.repeat(np.arange(n), k)
    return csr_matrix((weights.ravel(), (rows, knn.ravel())), shape=(n, n))


def fuzzy_union(w: csr_matrix) -> csr_matrix:
    """Probabilistic t-conorm w + w^T - w * w^T."""
    transposed = w.T.tocsr()
    union = (w + transposed - w.multiply(transposed)).tocsr()
    union.eliminate_zeros()
    union.sort_indices()
    return union


def find_ab_params(min_dist: float, spread: float = 1.0):
    """
    Fit (a, b) so that 1 / (1 + a x^(2b)) approximates min(1, exp(-(x - min_dist) / spread))
    on 300 points of [0, 3 * spread].
    """

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.zeros(xv.shape)
    yv[xv < min_dist] = 1.0
    yv[xv >= min_dist] = np.exp(-(xv[xv >= min_dist] - min_dist) / spread)
    params, _ = curve_fit(curve, xv, yv, ftol=1e-6, xtol=1e-6)
    return float(params[0]), float(params[1])


def spectral_layout(graph: csr_matrix, dim: int) -> np.ndarray:
    """First nontrivial eigenvectors of the symmetric normalized Laplacian, scaled into [-10, 10]."""
    n = graph.shape[0]
    degrees = np.asarray(graph.sum(axis=1)).ravel()
    inv_sqrt = csr_matrix((1.0 / np.sqrt(degrees), (np.arange(n), np.arange(n))), shape=(n, n))
    laplacian = (identity(n, format="csr") - inv_sqrt @ graph @ inv_sqrt).toarray()
    laplacian = (laplacian + laplacian.T) / 2.0
    _, evecs = eigh(laplacian)
    vectors = evecs[:, 1 : dim + 1]
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(dim)])
    signs[signs == 0] = 1.0
    vectors = vectors * signs
    return INIT_SCALE * vectors / np.abs(vectors).max()


def make_epochs_per_sample(weights: np.ndarray, n_epochs: int) -> np.ndarray:
    result = -1.0 * np.ones(weights.shape[0], dtype=np.float64)
    n_samples = n_epochs * (weights / weights.max())
    result[n_samples > 0] = float(n_epochs) / n_samples[n_samples > 0]
    return result


@numba.njit()
def clip(val):
    if val > 4.0:
        return 4.0
    elif val < -4.0:
        return -4.0
    else:
        return val


@numba.njit()
def _optimize_layout(embedding, head, tail, epochs_per_sample, a, b, n_epochs, negative_sample_rate, seed):
    np.random.seed(seed)
    n_vertices = embedding.shape[0]
    dim = embedding.shape[1]
    epochs_per_negative_sample = epochs_per_sample / negative_sample_rate
    epoch_of_next_negative_sample = epochs_per_negative_sample.copy()
    epoch_of_next_sample = epochs_per_sample.copy()

    for n in range(n_epochs):
        alpha = 1.0 - n / n_epochs
        for i in range(epochs_per_sample.shape[0]):
            if epoch_of_next_sample[i] > n:
                continue
            j = head[i]
            k = tail[i]
            current = embedding[j]
            other = embedding[k]

            dist_squared = 0.0
            for d in range(dim):
                dist_squared += (current[d] - other[d]) ** 2
            if dist_squared > 0.0:
                grad_coeff = -2.0 * a * b * dist_squared ** (b - 1.0) / (a * dist_squared**b + 1.0)
            else:
                grad_coeff = 0.0
            for d in range(dim):
                grad_d = clip(grad_coeff * (current[d] - other[d]))
                current[d] += grad_d * alpha
                other[d] -= grad_d * alpha
            epoch_of_next_sample[i] += epochs_per_sample[i]

            n_neg_samples = int((n - epoch_of_next_negative_sample[i]) / epochs_per_negative_sample[i])
            for _ in range(n_neg_samples):
                k = np.random.randint(n_vertices)
                if j == k:
                    continue
                other = embedding[k]
                dist_squared = 0.0
                for d in range(dim):
                    dist_squared += (current[d] - other[d]) ** 2
                if dist_squared > 0.0:
                    grad_coeff = 2.0 * b / ((0.001 + dist_squared) * (a * dist_squared**b + 1.0))
                else:
                    grad_coeff = 0.0
                for d in range(dim):
                    if grad_coeff > 0.0:
                        grad_d = clip(grad_coeff * (current[d] - other[d]))
                    else:
                        grad_d = 0.0
                    current[d] += grad_d * alpha
            epoch_of_next_negative_sample[i] += n_neg_samples * epochs_per_negative_sample[i]
    return embedding


def optimize_embedding(
    coords: np.ndarray,
    graph: csr_matrix,
    a: float,
    b: float,
    n_epochs: int,
    seed: int,
    negative_sample_rate: int = NEGATIVE_SAMPLE_RATE,
) -> np.ndarray:
    """SGD over graph edges, each edge sampled in proportion to its weight, learning rate 1 -> 0."""
    graph = graph.copy()
    graph.data[graph.data < graph.data.max() / float(n_epochs)] = 0.0
    graph.eliminate_zeros()
    graph.sort_indices()
    coo = graph.tocoo()
    epochs_per_sample = make_epochs_per_sample(coo.data, n_epochs)
    embedding = np.ascontiguousarray(coords, dtype=np.float64).copy()
    return _optimize_layout(
        embedding,
        coo.row.astype(np.int64),
        coo.col.astype(np.int64),
        epochs_per_sample,
        float(a),
        float(b),
        int(n_epochs),
        float(negative_sample_rate),
        int(seed),
    )
