"""Fusion of visual similarity and spatial-temporal probability."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .st_estimator import STModel, pairwise_probabilities
from .types import Dataset, FusionMode, ValidationError, check_dataset
from .visual import BLOCK_ROWS, ScoreMatrix, cosine_matrix


@dataclass(frozen=True)
class FusionConfig:
    lambda0: float = 1.0
    gamma0: float = 5.0
    lambda1: float = 2.0
    gamma1: float = 5.0
    mode: FusionMode = FusionMode.JOINT_LS

    def __post_init__(self):
        for name in ("lambda0", "gamma0", "lambda1", "gamma1"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}")
        object.__setattr__(self, "mode", FusionMode(self.mode))


def logistic(x, lam: float, gamma: float):
    """``1 / (1 + lam * exp(-gamma * x))``; scalar in, scalar out."""
    out = 1.0 / (1.0 + lam * np.exp(-gamma * np.asarray(x, dtype=np.float64)))
    return float(out) if np.ndim(out) == 0 else out


def _fuse(s: np.ndarray, p: np.ndarray, cfg: FusionConfig) -> np.ndarray:
    mode = cfg.mode
    if mode is FusionMode.JOINT_LS:
        return logistic(s, cfg.lambda0, cfg.gamma0) * logistic(p, cfg.lambda1, cfg.gamma1)
    if mode is FusionMode.NAIVE_PRODUCT:
        return (s + 1.0) / 2.0 * p
    if mode is FusionMode.VISUAL_ONLY:
        return (s + 1.0) / 2.0
    return np.array(p, dtype=np.float64, copy=True)


def joint_score(s: float, p_st: float, cfg: FusionConfig = FusionConfig()) -> float:
    """Fused score of one pair under ``cfg.mode``.

    Visual similarity is rescaled to ``(s + 1) / 2`` for the product and
    visual-only modes.
    """
    if not -1.0 <= s <= 1.0:
        raise ValidationError(f"similarity {s} outside [-1, 1]")
    if not 0.0 <= p_st <= 1.0:
        raise ValidationError(f"p_st {p_st} outside [0, 1]")
    return float(_fuse(np.float64(s), np.float64(p_st), cfg))


def fused_score_matrix(
    queries: Dataset,
    gallery: Dataset,
    st: Optional[STModel],
    cfg: FusionConfig = FusionConfig(),
    workers: int = 1,
) -> ScoreMatrix:
    """Score every query against every gallery record.

    Rows are processed in fixed blocks; ``workers`` only changes how many
    blocks run at once, never the values produced.
    """
    check_dataset(queries)
    check_dataset(gallery)
    if cfg.mode.needs_st_model:
        if st is None:
            raise ValidationError(f"mode {cfg.mode.value!r} needs a spatial-temporal model")
        top = max(int(queries.cameras.max(initial=0)), int(gallery.cameras.max(initial=0)))
        if top >= st.camera_count:
            raise ValidationError(
                f"camera {top} not covered by model with camera_count {st.camera_count}"
            )

    n_q = len(queries)
    out = np.empty((n_q, len(gallery)))

    def block(start: int) -> None:
        stop = min(start + BLOCK_ROWS, n_q)
        s = cosine_matrix(queries.features[start:stop], gallery.features)
        if cfg.mode.needs_st_model:
            p = pairwise_probabilities(
                st,
                queries.cameras[start:stop],
                queries.timestamps[start:stop],
                gallery.cameras,
                gallery.timestamps,
            )
        else:
            p = np.ones_like(s)
        out[start:stop] = _fuse(s, p, cfg)

    starts = range(0, n_q, BLOCK_ROWS)
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(block, starts))
    else:
        for start in starts:
            block(start)
    return ScoreMatrix(out, cfg.mode)

