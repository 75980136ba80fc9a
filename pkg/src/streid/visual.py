"""Cosine similarity and the visual score matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Dataset, DegenerateInputError, FusionMode, ValidationError


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Query x gallery scores; larger means more likely the same person."""

    values: np.ndarray
    mode: FusionMode

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError(f"score matrix must be 2-D, got shape {v.shape}")
        if v.size and np.isnan(v).any():
            raise ValidationError("score matrix contains NaN")
        lo, hi = (-1.0, 1.0) if self.mode is FusionMode.VISUAL_ONLY else (0.0, 1.0)
        if v.size and (v.min() < lo or v.max() > hi):
            raise ValidationError(
                f"{self.mode.value} scores must lie in [{lo}, {hi}], "
                f"got [{v.min()}, {v.max()}]"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise DegenerateInputError(f"{what} row {int(bad[0])} has a zero feature vector")
    return x / norms[:, None]


# Fixed row block so the float results never depend on how work is split.
BLOCK_ROWS = 256


def cosine_matrix(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarity between the rows of ``q`` and ``g``."""
    q = np.asarray(q, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if q.shape[1] != g.shape[1]:
        raise ValidationError(f"feature_dim mismatch: {q.shape[1]} vs {g.shape[1]}")
    qn = _unit_rows(q, "query")
    gn = _unit_rows(g, "gallery")
    out = np.empty((q.shape[0], g.shape[0]))
    for start in range(0, q.shape[0], BLOCK_ROWS):
        out[start : start + BLOCK_ROWS] = qn[start : start + BLOCK_ROWS] @ gn.T
    return np.clip(out, -1.0, 1.0, out=out)


def visual_score_matrix(queries: Dataset, gallery: Dataset) -> ScoreMatrix:
    if queries.feature_dim != gallery.feature_dim:
        raise ValidationError(
            f"feature_dim mismatch: queries {queries.feature_dim}, gallery {gallery.feature_dim}"
        )
    return ScoreMatrix(cosine_matrix(queries.features, gallery.features), FusionMode.VISUAL_ONLY)
