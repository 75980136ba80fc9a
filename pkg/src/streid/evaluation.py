"""Ranking, CMC and mAP under the cross-view retrieval protocol.

For each query, gallery records of the same person seen by the same camera
are junk, as are distractors; junk is removed before ranking.  Queries
left with no valid positive are dropped from every average.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .types import Dataset, ValidationError
from .visual import ScoreMatrix

REPORT_RANKS = (1, 5, 10)


@dataclass(frozen=True, eq=False)
class RankedResult:
    """One query's ranking.

    ``hits[r]`` tells whether ``ordered_gallery[r]`` is a true match;
    ``positives`` counts the non-junk true matches in the gallery.
    """

    query_index: int
    query_person_id: int
    ordered_gallery: np.ndarray
    junk_mask: np.ndarray
    hits: np.ndarray
    positives: int


@dataclass(frozen=True)
class EvalReport:
    cmc: tuple[float, ...]
    map: float
    per_query_ap: tuple[float, ...]
    num_queries: int = 0
    dropped_queries: int = 0

    def rank(self, k: int) -> float:
        return self.cmc[min(k, len(self.cmc)) - 1] if self.cmc else 0.0

    def to_dict(self) -> dict:
        return {
            "rank": {f"R-{k}": self.rank(k) for k in REPORT_RANKS},
            "mAP": self.map,
            "num_queries": self.num_queries,
            "dropped_queries": self.dropped_queries,
            "cmc": list(self.cmc),
            "per_query_ap": list(self.per_query_ap),
        }


def rank(scores: ScoreMatrix, queries: Dataset, gallery: Dataset) -> list[RankedResult]:
    """Order the non-junk gallery for each query by descending score.

    Ties are broken by ascending gallery index.
    """
    values = scores.values
    if values.shape != (len(queries), len(gallery)):
        raise ValidationError(
            f"score matrix shape {values.shape} does not match "
            f"{len(queries)} queries x {len(gallery)} gallery"
        )
    if any(d.person_id is None for d in queries):
        raise ValidationError("evaluation requires person_id on every query")
    g_pid = gallery.person_ids
    g_cam = gallery.cameras
    g_distractor = gallery.distractors | (g_pid == -1)
    idx = np.arange(len(gallery))

    out = []
    for qi, q in enumerate(queries):
        same_id = g_pid == q.person_id
        junk = (same_id & (g_cam == q.camera_id)) | g_distractor
        keep = idx[~junk]
        # lexsort: last key is primary
        order = keep[np.lexsort((keep, -values[qi, keep]))]
        out.append(
            RankedResult(
                query_index=qi,
                query_person_id=q.person_id,
                ordered_gallery=order,
                junk_mask=junk,
                hits=g_pid[order] == q.person_id,
                positives=int((same_id & ~junk).sum()),
            )
        )
    return out


def _retained(ranked: Sequence[RankedResult]) -> list[RankedResult]:
    kept = [r for r in ranked if r.positives > 0]
    if not kept:
        raise ValidationError("no query has a valid cross-camera positive")
    return kept


def cmc(ranked: Sequence[RankedResult], gallery: Dataset, k_max: int) -> np.ndarray:
    """Fraction of retained queries with a true match in the top ``k``, for k = 1..k_max."""
    del gallery  # hits are resolved at ranking time
    kept = _retained(ranked)
    curve = np.zeros(k_max)
    for r in kept:
        first = np.flatnonzero(r.hits)
        if first.size and first[0] < k_max:
            curve[first[0] :] += 1
    return curve / len(kept)


def average_precision(hits: np.ndarray, positives: int) -> float:
    """Mean of precision@r over the hit positions r, divided by ``positives``."""
    pos = np.flatnonzero(hits)
    if positives == 0:
        return 0.0
    precision = np.arange(1, pos.size + 1) / (pos + 1)
    return float(precision.sum() / positives)


def mean_ap(ranked: Sequence[RankedResult], gallery: Dataset) -> tuple[float, np.ndarray]:
    del gallery
    kept = _retained(ranked)
    aps = np.array([average_precision(r.hits, r.positives) for r in kept])
    return float(aps.mean()), aps


def evaluate(scores: ScoreMatrix, queries: Dataset, gallery: Dataset, k_max: int = 50) -> EvalReport:
    ranked = rank(scores, queries, gallery)
    curve = cmc(ranked, gallery, k_max)
    m, aps = mean_ap(ranked, gallery)
    return EvalReport(
        cmc=tuple(float(x) for x in curve),
        map=m,
        per_query_ap=tuple(float(x) for x in aps),
        num_queries=len(aps),
        dropped_queries=len(ranked) - len(aps),
    )


def format_table(reports: Mapping[str, EvalReport]) -> str:
    """Human-readable R-1/R-5/R-10/mAP table, values in percent."""
    name_w = max(8, *(len(n) for n in reports))
    header = f"{'method':<{name_w}}  " + "  ".join(f"{c:>6}" for c in ("R-1", "R-5", "R-10", "mAP"))
    lines = [header, "-" * len(header)]
    for name, rep in reports.items():
        cells = [rep.rank(k) for k in REPORT_RANKS] + [rep.map]
        lines.append(f"{name:<{name_w}}  " + "  ".join(f"{100 * v:6.2f}" for v in cells))
    return "\n".join(lines) + "\n"


def dumps_report(report: EvalReport | Mapping[str, EvalReport]) -> str:
    if isinstance(report, EvalReport):
        doc = report.to_dict()
    else:
        doc = {name: rep.to_dict() for name, rep in report.items()}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def dumps_ranks(ranked: Sequence[RankedResult]) -> str:
    """CSV with one row per query; the ranking is space-separated gallery indices."""
    lines = ["query_index,query_person_id,positives,ranked_gallery"]
    for r in ranked:
        order = " ".join(str(int(g)) for g in r.ordered_gallery)
        lines.append(f"{r.query_index},{r.query_person_id},{r.positives},{order}")
    return "\n".join(lines) + "\n"
