__version__ = "0.1.0"

from .synthdata import (  # noqa: E402
    SETTINGS,
    FunctionalDataset,
    ParamSample,
    SettingSpec,
    WarpSpec,
    amplitude_curve,
    generate_setting,
    sample_linear_params,
    sample_manifold_params,
    warp,
)
from .distance import (  # noqa: E402
    DistanceMatrix,
    NeighborGraph,
    epsilon_compute,
    geodesic_from_direct,
    knn_graph,
    pairwise_direct,
)
from .embed import Embedding, diffusion_map, fit_embedding, isomap, make_hyper, mds, tsne, umap_fit  # noqa: E402
from .quality import QualityReport, auc_rnx, evaluate_embedding, q_local_global, rank_table, rnx_curve  # noqa: E402
from .tune import GridSpec, TuningResult, default_grid, grid_search  # noqa: E402
from .tooling import DatasetFormatError, load_dataset_csv, save_dataset_csv  # noqa: E402
from .plotting import render_scatter_svg  # noqa: E402
from .experiment import ExperimentConfig, ExperimentRecord, delta_report, run_experiment  # noqa: E402

__all__ = [
    "SETTINGS",
    "FunctionalDataset",
    "ParamSample",
    "SettingSpec",
    "WarpSpec",
    "amplitude_curve",
    "generate_setting",
    "sample_linear_params",
    "sample_manifold_params",
    "warp",
    "DistanceMatrix",
    "NeighborGraph",
    "epsilon_compute",
    "geodesic_from_direct",
    "knn_graph",
    "pairwise_direct",
    "Embedding",
    "diffusion_map",
    "fit_embedding",
    "isomap",
    "make_hyper",
    "mds",
    "tsne",
    "umap_fit",
    "QualityReport",
    "auc_rnx",
    "evaluate_embedding",
    "q_local_global",
    "rank_table",
    "rnx_curve",
    "GridSpec",
    "TuningResult",
    "default_grid",
    "grid_search",
    "DatasetFormatError",
    "load_dataset_csv",
    "save_dataset_csv",
    "render_scatter_svg",
    "ExperimentConfig",
    "ExperimentRecord",
    "delta_report",
    "run_experiment",
]
