"""dgmeval: generative-model evaluation metrics on precomputed embeddings."""

from . import errors
from .distributional import FdInfinityFit, asw, fd_infinity, fit_fd_series, frechet_distance
from .kernels import (
    KernelSpec,
    VendiResult,
    inception_style_score,
    kernel_distance,
    per_class_vendi,
    vendi_score,
)
from .linalg import (
    DistanceMatrixView,
    GaussianSummary,
    pairwise_distances,
    pca_fit_project,
    summarize_gaussian,
    trace_sqrt_product,
)
from .memorization import (
    CtConfig,
    MemorizationConfig,
    MemorizationMatch,
    MogKde,
    auth_pct,
    calibrated_l2,
    ct_score,
    ct_score_full,
    fit_mog_kde,
    fls_metrics,
    memorization_ratio,
)
from .neighbors import (
    NeighborhoodIndex,
    PrdcResult,
    RarityResult,
    build_index,
    prdc,
    rarity,
)
from .reporting import (
    CorrelationSummary,
    HumanEvalRecord,
    MetricReport,
    correlate_reports,
    pearson,
)
from .store import (
    EmbeddingSet,
    SetRole,
    read_embeddings,
    read_header,
    split_by_label,
    subsample,
    write_embeddings,
)
from .synth import SyntheticScenario, gaussian_cloud, generate_scenario

__version__ = "0.1.0"
