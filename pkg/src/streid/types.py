"""Domain types shared across the package."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when a value violates a documented invariant."""


class ParseError(ValueError):
    """Raised on malformed input; ``location`` names the line or byte offset."""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class DegenerateInputError(ValueError):
    """Raised for inputs on which a formula is undefined (e.g. zero-norm vectors)."""


class Role(str, enum.Enum):
    TRAIN = "train"
    QUERY = "query"
    GALLERY = "gallery"


class FusionMode(str, enum.Enum):
    VISUAL_ONLY = "visual"
    ST_ONLY = "st"
    NAIVE_PRODUCT = "naive"
    JOINT_LS = "joint"

    @property
    def needs_st_model(self) -> bool:
        return self is not FusionMode.VISUAL_ONLY


class CameraPairKey(NamedTuple):
    """Ordered camera pair; ``from_camera`` saw the person first."""

    from_camera: int
    to_camera: int


@dataclass(frozen=True, eq=False)
class Detection:
    feature: np.ndarray
    camera_id: int
    timestamp: int
    person_id: Optional[int] = None
    is_distractor: bool = False
    record_id: Optional[str] = None

    def __post_init__(self):
        feat = np.asarray(self.feature, dtype=np.float64).reshape(-1)
        feat.setflags(write=False)
        object.__setattr__(self, "feature", feat)

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.timestamp == other.timestamp
            and self.person_id == other.person_id
            and self.is_distractor == other.is_distractor
            and self.record_id == other.record_id
            and np.array_equal(self.feature, other.feature)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of detections from one split.

    Column views (``features``, ``cameras``, ...) are built on first access
    and cached; they are read-only arrays aligned with ``detections``.
    A dataset whose ``feature_dim`` is 0 carries metadata only.
    """

    detections: tuple[Detection, ...]
    camera_count: int
    feature_dim: int
    role: Role = Role.GALLERY

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        object.__setattr__(self, "role", Role(self.role))

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i: int) -> Detection:
        return self.detections[i]

    @classmethod
    def from_arrays(
        cls,
        features: np.ndarray,
        cameras: Sequence[int],
        timestamps: Sequence[int],
        person_ids: Optional[Sequence[Optional[int]]] = None,
        distractors: Optional[Sequence[bool]] = None,
        record_ids: Optional[Sequence[str]] = None,
        camera_count: Optional[int] = None,
        role: Role = Role.GALLERY,
    ) -> "Dataset":
        features = np.asarray(features, dtype=np.float64)
        n = len(cameras)
        if features.ndim != 2 or features.shape[0] != n:
            if features.size == 0:
                features = np.zeros((n, 0))
            else:
                raise ValidationError(
                    f"feature matrix shape {features.shape} does not match {n} records"
                )
        if person_ids is None:
            person_ids = [None] * n
        if distractors is None:
            distractors = [pid == -1 for pid in person_ids]
        if record_ids is None:
            record_ids = [None] * n
        dets = tuple(
            Detection(
                feature=features[i],
                camera_id=int(cameras[i]),
                timestamp=int(timestamps[i]),
                person_id=None if person_ids[i] is None else int(person_ids[i]),
                is_distractor=bool(distractors[i]),
                record_id=record_ids[i],
            )
            for i in range(n)
        )
        if camera_count is None:
            camera_count = max(2, int(max(cameras)) + 1) if n else 2
        return cls(dets, camera_count, features.shape[1], role)

    @cached_property
    def features(self) -> np.ndarray:
        if not self.detections:
            out = np.zeros((0, self.feature_dim))
        else:
            out = np.stack([d.feature for d in self.detections])
        out.setflags(write=False)
        return out

    @cached_property
    def cameras(self) -> np.ndarray:
        return _frozen(np.array([d.camera_id for d in self.detections], dtype=np.int64))

    @cached_property
    def timestamps(self) -> np.ndarray:
        return _frozen(np.array([d.timestamp for d in self.detections], dtype=np.int64))

    @cached_property
    def person_ids(self) -> np.ndarray:
        """Person labels with -1 for distractors; raises if any record is unlabeled."""
        if any(d.person_id is None and not d.is_distractor for d in self.detections):
            raise ValidationError(f"{self.role.value} dataset has unlabeled detections")
        return _frozen(
            np.array(
                [-1 if d.person_id is None else d.person_id for d in self.detections],
                dtype=np.int64,
            )
        )

    @cached_property
    def distractors(self) -> np.ndarray:
        return _frozen(np.array([d.is_distractor for d in self.detections], dtype=bool))

    @property
    def is_labeled(self) -> bool:
        return all(d.person_id is not None or d.is_distractor for d in self.detections)

    def with_features(self, features: np.ndarray) -> "Dataset":
        """Join a feature matrix to this dataset by row position."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != len(self):
            raise ValidationError(
                f"feature matrix has {features.shape[0] if features.ndim else 0} rows, "
                f"metadata has {len(self)}"
            )
        dets = tuple(
            Detection(
                feature=features[i],
                camera_id=d.camera_id,
                timestamp=d.timestamp,
                person_id=d.person_id,
                is_distractor=d.is_distractor,
                record_id=d.record_id,
            )
            for i, d in enumerate(self.detections)
        )
        return Dataset(dets, self.camera_count, features.shape[1], self.role)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str
    message: str


def validate_dataset(d: Dataset) -> list[Violation]:
    """Return every invariant violation in ``d``; an empty list means valid."""
    out: list[Violation] = []
    if d.camera_count < 2:
        out.append(Violation(-1, "camera_count", f"camera_count {d.camera_count} < 2"))
    for i, det in enumerate(d.detections):
        if det.feature.shape[0] != d.feature_dim:
            out.append(
                Violation(
                    i,
                    "dimension",
                    f"feature length {det.feature.shape[0]} != {d.feature_dim}",
                )
            )
        if not 0 <= det.camera_id < d.camera_count:
            out.append(
                Violation(
                    i, "camera_range", f"camera_id {det.camera_id} not in [0, {d.camera_count})"
                )
            )
        if det.timestamp < 0:
            out.append(Violation(i, "timestamp", f"negative timestamp {det.timestamp}"))
    return out


def check_dataset(d: Dataset) -> None:
    """Raise ValidationError carrying the first few violations, if any."""
    violations = validate_dataset(d)
    if violations:
        head = "; ".join(f"record {v.index}: {v.message}" for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        raise ValidationError(f"invalid {d.role.value} dataset: {head}{more}")

