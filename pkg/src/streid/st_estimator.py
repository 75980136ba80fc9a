"""Histogram-Parzen estimate of cross-camera transition times.

Positive (same-person, cross-camera) training pairs are binned by their
time difference per ordered camera pair, the histogram is normalised, and
then smoothed with a truncated Gaussian Parzen window evaluated at integer
bin offsets.  The result is a probability mass function over bins that is
looked up at scoring time.
"""

from __future__ import annotations

import io
import json
import math
import os
from dataclasses import asdict, dataclass, replace
from functools import cached_property
from typing import Mapping, Optional, TextIO, Union

import numpy as np

from .types import CameraPairKey, Dataset, ParseError, ValidationError, check_dataset

MAX_BINS_CAP = 3000
FORMAT_TAG = "streid-st-model"
FORMAT_VERSION = 1
PMF_SUM_TOL = 1e-9


@dataclass(frozen=True)
class STConfig:
    """Estimator settings.

    ``kernel_sigma`` is measured in bins, not frames.  ``max_bins=None``
    means "derive from the training data" (capped at ``MAX_BINS_CAP``).
    """

    bin_width_frames: int = 100
    kernel_sigma: float = 50.0
    truncation_sigmas: float = 3.0
    max_bins: Optional[int] = None

    def __post_init__(self):
        if int(self.bin_width_frames) != self.bin_width_frames or self.bin_width_frames < 1:
            raise ValidationError(f"bin_width_frames must be a positive integer, got {self.bin_width_frames}")
        if not self.kernel_sigma > 0:
            raise ValidationError(f"kernel_sigma must be > 0, got {self.kernel_sigma}")
        if not self.truncation_sigmas > 0:
            raise ValidationError(f"truncation_sigmas must be > 0, got {self.truncation_sigmas}")
        if self.max_bins is not None and (int(self.max_bins) != self.max_bins or self.max_bins < 1):
            raise ValidationError(f"max_bins must be a positive integer, got {self.max_bins}")

    def resolved(self, max_delta: int) -> "STConfig":
        """Fill in ``max_bins`` from the largest observed delta."""
        if self.max_bins is not None:
            return self
        k = max(1, -(-int(max_delta) // self.bin_width_frames))
        return replace(self, max_bins=min(k, MAX_BINS_CAP))


def _raw_bin(delta, width: int):
    # ceil(delta / width), with delta == 0 landing in bin 1
    return np.maximum(1, -(-np.asarray(delta, dtype=np.int64) // width))


def bin_index(delta_frames: int, cfg: STConfig) -> int:
    """1-based histogram bin holding ``delta_frames``: ``(k-1)*dt < delta <= k*dt``."""
    if delta_frames < 0:
        raise ValidationError(f"delta_frames must be >= 0, got {delta_frames}")
    k = int(_raw_bin(delta_frames, cfg.bin_width_frames))
    if cfg.max_bins is not None:
        k = min(k, cfg.max_bins)
    return k


def order_by_time(cam_a, t_a, cam_b, t_b):
    """Order two sightings in time, returning ``(from_cam, to_cam, delta)``.

    Works element-wise on arrays.  Simultaneous sightings are ordered by
    camera index so the result does not depend on argument order.
    """
    cam_a, t_a, cam_b, t_b = (np.asarray(x, dtype=np.int64) for x in (cam_a, t_a, cam_b, t_b))
    a_first = (t_a < t_b) | ((t_a == t_b) & (cam_a <= cam_b))
    from_cam = np.where(a_first, cam_a, cam_b)
    to_cam = np.where(a_first, cam_b, cam_a)
    return from_cam, to_cam, np.abs(t_b - t_a)


def positive_pairs(train: Dataset):
    """All same-person cross-camera pairs as ``(from_cam, to_cam, delta)`` arrays.

    Distractors are ignored.  Raises if a non-distractor record is unlabeled.
    """
    if not train.is_labeled:
        raise ValidationError(
            "spatial-temporal fitting requires person_id labels on every non-distractor record"
        )
    keep = ~train.distractors
    pids = train.person_ids[keep]
    cams = train.cameras[keep]
    ts = train.timestamps[keep]
    order = np.argsort(pids, kind="stable")
    pids, cams, ts = pids[order], cams[order], ts[order]
    bounds = np.flatnonzero(np.diff(pids)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [len(pids)]))

    parts = []
    for s, e in zip(starts, ends):
        if e - s < 2:
            continue
        i, j = np.triu_indices(e - s, k=1)
        c, t = cams[s:e], ts[s:e]
        cross = c[i] != c[j]
        if cross.any():
            parts.append(order_by_time(c[i][cross], t[i][cross], c[j][cross], t[j][cross]))
    if not parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    return tuple(np.concatenate(col) for col in zip(*parts))


def _histograms(from_cam, to_cam, delta, cfg: STConfig, camera_count: int):
    bins = np.minimum(_raw_bin(delta, cfg.bin_width_frames), cfg.max_bins)
    keys = from_cam * camera_count + to_cam
    out: dict[CameraPairKey, np.ndarray] = {}
    for key in np.unique(keys):
        sel = keys == key
        counts = np.bincount(bins[sel] - 1, minlength=cfg.max_bins)
        out[CameraPairKey(int(key // camera_count), int(key % camera_count))] = counts
    return out


def fit_histogram(train: Dataset, cfg: STConfig) -> dict[CameraPairKey, np.ndarray]:
    """Raw positive-pair counts per ordered camera pair.

    Only pairs with at least one count appear.  Every vector has length
    ``cfg.max_bins`` (resolved from the data when unset); deltas past the
    last bin are clamped into it.
    """
    check_dataset(train)
    f, t, d = positive_pairs(train)
    cfg = cfg.resolved(int(d.max()) if d.size else 0)
    return _histograms(f, t, d, cfg, train.camera_count)


def gaussian_kernel(x, sigma: float):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-(x**2) / (2.0 * sigma**2)) / (math.sqrt(2.0 * math.pi) * sigma)


def kernel_half_width(cfg: STConfig, n_bins: int) -> int:
    reach = cfg.truncation_sigmas * cfg.kernel_sigma
    if not math.isfinite(reach) or reach >= n_bins - 1:
        return max(n_bins - 1, 0)
    return int(math.floor(reach))


def smooth(raw, cfg: STConfig) -> np.ndarray:
    """Normalise ``raw`` counts and apply the truncated Gaussian Parzen window.

    The window is clipped at the histogram ends and the result renormalised
    to sum to one.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise ValidationError("histogram must be a non-empty vector")
    if not np.isfinite(raw).all() or (raw < 0).any():
        raise ValidationError("histogram counts must be finite and non-negative")
    total = raw.sum()
    if total <= 0:
        raise ValidationError("cannot smooth an all-zero histogram")
    p_hat = raw / total

    w = kernel_half_width(cfg, raw.size)
    kern = gaussian_kernel(np.arange(-w, w + 1), cfg.kernel_sigma)
    out = np.convolve(p_hat, kern, mode="full")[w : w + raw.size]
    return out / out.sum()


@dataclass(frozen=True)
class STModel:
    """Fitted transition-time distributions.

    ``pmf`` and ``pair_counts`` hold only observed ordered pairs; any other
    pair has an empty pmf and a count of zero.
    """

    config: STConfig
    camera_count: int
    pmf: Mapping[CameraPairKey, tuple[float, ...]]
    pair_counts: Mapping[CameraPairKey, int]

    def __post_init__(self):
        if self.config.max_bins is None:
            raise ValidationError("model config must have max_bins resolved")
        pmf = {CameraPairKey(*k): tuple(float(x) for x in v) for k, v in sorted(self.pmf.items())}
        counts = {CameraPairKey(*k): int(v) for k, v in sorted(self.pair_counts.items())}
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "pair_counts", counts)
        for key in set(pmf) | set(counts):
            a, b = key
            if not (0 <= a < self.camera_count and 0 <= b < self.camera_count):
                raise ValidationError(f"camera pair {a}->{b} outside [0, {self.camera_count})")
            values = pmf.get(key, ())
            n = counts.get(key, 0)
            if n < 0:
                raise ValidationError(f"pair {a}->{b}: negative count {n}")
            if (n > 0) != (len(values) > 0):
                raise ValidationError(f"pair {a}->{b}: count {n} inconsistent with pmf length {len(values)}")
            if len(values) > self.config.max_bins:
                raise ValidationError(f"pair {a}->{b}: {len(values)} bins exceeds max_bins")
            if values:
                arr = np.asarray(values)
                if (arr < 0).any() or not np.isfinite(arr).all():
                    raise ValidationError(f"pair {a}->{b}: pmf has negative or non-finite entries")
                if abs(arr.sum() - 1.0) > PMF_SUM_TOL:
                    raise ValidationError(f"pair {a}->{b}: pmf sums to {arr.sum()!r}, not 1")

    def pmf_for(self, from_cam: int, to_cam: int) -> np.ndarray:
        return np.asarray(self.pmf.get(CameraPairKey(from_cam, to_cam), ()), dtype=np.float64)

    def count_for(self, from_cam: int, to_cam: int) -> int:
        return self.pair_counts.get(CameraPairKey(from_cam, to_cam), 0)

    @cached_property
    def table(self) -> np.ndarray:
        """Dense ``(C, C, K + 2)`` lookup; column 0 and column ``K + 1`` are zero."""
        k = self.config.max_bins
        tab = np.zeros((self.camera_count, self.camera_count, k + 2))
        for (a, b), values in self.pmf.items():
            tab[a, b, 1 : len(values) + 1] = values
        tab.setflags(write=False)
        return tab


def fit(train: Dataset, cfg: STConfig = STConfig()) -> STModel:
    check_dataset(train)
    f, t, d = positive_pairs(train)
    cfg = cfg.resolved(int(d.max()) if d.size else 0)
    raw = _histograms(f, t, d, cfg, train.camera_count)
    return STModel(
        config=cfg,
        camera_count=train.camera_count,
        pmf={key: tuple(smooth(counts, cfg)) for key, counts in raw.items()},
        pair_counts={key: int(counts.sum()) for key, counts in raw.items()},
    )


def _check_cameras(model: STModel, cams) -> None:
    cams = np.asarray(cams)
    if cams.size and (cams.min() < 0 or cams.max() >= model.camera_count):
        raise ValidationError(f"camera index outside [0, {model.camera_count})")


def query_probabilities(model: STModel, from_cams, to_cams, deltas) -> np.ndarray:
    """Vectorised lookup; zero for unobserved pairs and deltas past the support."""
    _check_cameras(model, from_cams)
    _check_cameras(model, to_cams)
    deltas = np.asarray(deltas, dtype=np.int64)
    if deltas.size and deltas.min() < 0:
        raise ValidationError("deltas must be non-negative")
    k = model.config.max_bins
    bins = np.minimum(_raw_bin(deltas, model.config.bin_width_frames), k + 1)
    return model.table[np.asarray(from_cams), np.asarray(to_cams), bins]


def query_probability(model: STModel, from_cam: int, to_cam: int, delta_frames: int) -> float:
    return float(query_probabilities(model, [from_cam], [to_cam], [delta_frames])[0])


def pairwise_probabilities(model: STModel, q_cams, q_times, g_cams, g_times) -> np.ndarray:
    """p_st for every (query, gallery) combination, each pair ordered by time before lookup."""
    f, t, d = order_by_time(
        np.asarray(q_cams)[:, None], np.asarray(q_times)[:, None],
        np.asarray(g_cams)[None, :], np.asarray(g_times)[None, :],
    )
    return query_probabilities(model, f, t, d)


def st_probability_matrix(model: STModel, queries: Dataset, gallery: Dataset) -> np.ndarray:
    return pairwise_probabilities(
        model, queries.cameras, queries.timestamps, gallery.cameras, gallery.timestamps
    )


# -- serialisation ---------------------------------------------------------


def model_to_dict(model: STModel) -> dict:
    return {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "camera_count": model.camera_count,
        "config": asdict(model.config),
        "pairs": [
            {
                "from": key.from_camera,
                "to": key.to_camera,
                "count": model.pair_counts.get(key, 0),
                "pmf": list(values),
            }
            for key, values in model.pmf.items()
        ],
    }


def save_model(model: STModel, sink: Union[str, os.PathLike, TextIO]) -> None:
    text = json.dumps(model_to_dict(model), indent=1) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)


def _field(obj: dict, name: str, kind, where: str):
    if not isinstance(obj, dict) or name not in obj:
        raise ParseError(f"missing field {name!r}", where)
    value = obj[name]
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ParseError(f"field {name!r} has wrong type {type(value).__name__}", where)
    return value


def model_from_dict(doc: dict) -> STModel:
    if _field(doc, "format", str, "$") != FORMAT_TAG:
        raise ParseError(f"unknown format tag {doc['format']!r}", "$.format")
    version = _field(doc, "version", int, "$")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported version {version}", "$.version")
    camera_count = _field(doc, "camera_count", int, "$")
    c = _field(doc, "config", dict, "$")
    try:
        cfg = STConfig(
            bin_width_frames=_field(c, "bin_width_frames", int, "$.config"),
            kernel_sigma=float(_field(c, "kernel_sigma", (int, float), "$.config")),
            truncation_sigmas=float(_field(c, "truncation_sigmas", (int, float), "$.config")),
            max_bins=_field(c, "max_bins", int, "$.config"),
        )
    except ValidationError as exc:
        raise ParseError(str(exc), "$.config") from exc
    pmf, counts = {}, {}
    for i, pair in enumerate(_field(doc, "pairs", list, "$")):
        where = f"$.pairs[{i}]"
        key = CameraPairKey(_field(pair, "from", int, where), _field(pair, "to", int, where))
        if key in pmf:
            raise ParseError(f"duplicate pair {key.from_camera}->{key.to_camera}", where)
        values = _field(pair, "pmf", list, where)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
            raise ParseError("pmf entries must be numbers", where + ".pmf")
        pmf[key] = tuple(float(v) for v in values)
        counts[key] = _field(pair, "count", int, where)
    return STModel(cfg, camera_count, pmf, counts)


def load_model(source: Union[str, os.PathLike, TextIO]) -> STModel:
    """Read a model file; raises ParseError on malformed text, ValidationError on bad values."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from exc
    return model_from_dict(doc)


def dumps_model(model: STModel) -> str:
    buf = io.StringIO()
    save_model(model, buf)
    return buf.getvalue()
