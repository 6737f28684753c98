"""Perceptual voice-quality toolkit.

Ingests multi-rater voice-quality labels, extracts acoustic features from
speech clips, trains deterministic random-forest regressors per quality,
computes inter-rater agreement statistics, and runs a small annotation
service for collecting non-expert ratings.
"""

__version__ = "0.1.0"

from .errors import (
    AudioError,
    ConfigError,
    FeatureError,
    LabelError,
    ModelError,
    ServiceError,
    StatsError,
    VoqualError,
)
from .pq import (
    ALL_PQS,
    CAPEV_PQS,
    GENDERED_PQS,
    ClipRecord,
    DatasetSplit,
    LabelSet,
    PerceptualQuality,
    PQVector,
    RaterClass,
    RatingRecord,
)
from .audio import AudioBuffer, load_wav, normalize_rms, resample, save_wav
from .labels import (
    aggregate_ratings,
    export_labels,
    ingest_labels,
    ingest_ratings_only,
    make_split,
    read_split,
    write_split,
)
from .agreement import (
    AgreementReport,
    AnovaComponents,
    RatingMatrix,
    agreement_report,
    anova_two_way,
    build_rating_matrix,
    icc21,
    icc2k,
    pearson,
    rmse,
)
from .llds import LLDMatrix, extract_llds
from .features import (
    COMPARE_LITE_DIM,
    COMPARE_LITE_NAMES,
    CompareLiteExtractor,
    FeatureVector,
    apply_functionals,
    extract_compare_lite,
    load_embedding_table,
    read_feature_table,
    write_feature_table,
)
from .forest import (
    ForestRegressor,
    Hyperparams,
    RandomForestModel,
    RegressionTree,
    fit_forest,
    fit_tree,
    load_forest,
    predict,
    save_forest,
)
from .linear import MeanBaseline, RidgeRegressor, baseline_mean, fit_linear_ridge
from .tuning import DEFAULT_GRID, GridSpec, tune
from .experiment import (
    ExperimentConfig,
    ResultRow,
    ResultTable,
    load_config,
    report_scatter,
    run_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
