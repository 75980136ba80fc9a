"""Spatial-temporal re-ranking for cross-camera person retrieval.

Visual cosine similarity is fused with a Histogram-Parzen estimate of
camera-to-camera transit times through a logistic-smoothed joint score.
"""

from .evaluation import EvalReport, RankedResult, cmc, evaluate, mean_ap, rank
from .joint_metric import FusionConfig, fused_score_matrix, joint_score, logistic
from .st_estimator import (
    STConfig,
    STModel,
    bin_index,
    fit,
    fit_histogram,
    load_model,
    query_probability,
    save_model,
    smooth,
)
from .types import (
    CameraPairKey,
    Dataset,
    DegenerateInputError,
    Detection,
    FusionMode,
    ParseError,
    Role,
    ValidationError,
    validate_dataset,
)
from .visual import ScoreMatrix, cosine_similarity, visual_score_matrix

__version__ = "0.1.0"
