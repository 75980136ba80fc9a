"""Canonical on-disk formats: metadata CSV and a small binary feature matrix.

Metadata CSV (UTF-8, header required)::

    record_id,person_id,camera_id,frame,is_distractor

``person_id`` may be empty for unlabeled records; ``-1`` marks a
distractor.  Feature files are little-endian with a 16-byte header::

    magic  4s   b"STFM"
    version  u2  1
    dtype    u2  1 = float32, 2 = float64
    rows     u4
    dim      u4

followed by ``rows * dim`` values in row-major order.  Row ``i`` belongs to
metadata record ``i``.
"""

from __future__ import annotations

import csv
import io
import os
import re
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, NamedTuple, Optional, TextIO, Union

import numpy as np

from .types import Dataset, Detection, ParseError, Role, ValidationError

PathOrFile = Union[str, os.PathLike]

METADATA_COLUMNS = ("record_id", "person_id", "camera_id", "frame", "is_distractor")

MAGIC = b"STFM"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}


@dataclass(frozen=True)
class FeatureFileHeader:
    magic: bytes
    version: int
    rows: int
    dim: int
    dtype: np.dtype

    @property
    def payload_bytes(self) -> int:
        return self.rows * self.dim * self.dtype.itemsize


# -- metadata ---------------------------------------------------------------


def _int(value: str, column: str, line: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise ParseError(f"column {column!r}: {value!r} is not an integer", f"line {line}") from None


def parse_metadata_csv(
    source: Union[PathOrFile, TextIO],
    role: Role = Role.GALLERY,
    camera_count: Optional[int] = None,
) -> Dataset:
    """Read a metadata CSV into a feature-less Dataset.

    Join features afterwards with ``Dataset.with_features``.  When
    ``camera_count`` is omitted it is taken as ``max(camera_id) + 1``
    (at least 2).
    """
    if hasattr(source, "read"):
        return _parse_metadata(source, role, camera_count)
    with open(source, newline="", encoding="utf-8") as fh:
        return _parse_metadata(fh, role, camera_count)


def _parse_metadata(fh: TextIO, role: Role, camera_count: Optional[int]) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file, header row expected", "line 1") from None
    header = [h.strip() for h in header]
    missing = [c for c in METADATA_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"missing column(s): {', '.join(missing)}", "line 1")
    col = {name: header.index(name) for name in METADATA_COLUMNS}

    dets = []
    seen: dict[str, int] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", f"line {line}")
        record_id = row[col["record_id"]].strip()
        if record_id in seen:
            raise ParseError(
                f"duplicate record_id {record_id!r} (first on line {seen[record_id]})", f"line {line}"
            )
        seen[record_id] = line
        pid_text = row[col["person_id"]].strip()
        pid = None if pid_text == "" else _int(pid_text, "person_id", line)
        distractor = _int(row[col["is_distractor"]], "is_distractor", line)
        if distractor not in (0, 1):
            raise ParseError(f"is_distractor must be 0 or 1, got {distractor}", f"line {line}")
        dets.append(
            Detection(
                feature=np.zeros(0),
                camera_id=_int(row[col["camera_id"]], "camera_id", line),
                timestamp=_int(row[col["frame"]], "frame", line),
                person_id=pid,
                is_distractor=bool(distractor) or pid == -1,
                record_id=record_id,
            )
        )
    if camera_count is None:
        camera_count = max([2] + [d.camera_id + 1 for d in dets])
    return Dataset(tuple(dets), camera_count, 0, role)


def write_metadata_csv(dataset: Dataset, sink: Union[PathOrFile, TextIO]) -> None:
    if hasattr(sink, "write"):
        _write_metadata(dataset, sink)
    else:
        with open(sink, "w", newline="", encoding="utf-8") as fh:
            _write_metadata(dataset, fh)


def _write_metadata(dataset: Dataset, fh: TextIO) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(METADATA_COLUMNS)
    for i, d in enumerate(dataset):
        pid = "" if d.person_id is None else d.person_id
        rid = d.record_id if d.record_id is not None else f"{dataset.role.value}{i}"
        writer.writerow((rid, pid, d.camera_id, d.timestamp, int(d.is_distractor)))


# -- Market-1501 style file names -----------------------------------------

_MARKET_RE = re.compile(r"^(-?\d+)_c(\d+)s(\d+)_(\d+)_(\d+)(?:\.[A-Za-z0-9]+)?$")


class MarketName(NamedTuple):
    person_id: int
    camera_id: int
    frame: int
    session: int
    sequence: int

    @property
    def is_distractor(self) -> bool:
        return self.person_id == -1


def parse_market_filename(name: str) -> MarketName:
    """Parse ``0002_c1s1_000451_03[.jpg]``; cameras come back zero-based.

    Frame numbers are returned as-is; sessions are not re-based.
    """
    m = _MARKET_RE.match(os.path.basename(name))
    if not m:
        raise ParseError(f"{name!r} does not match personID_cCsS_frame_seq")
    pid, cam, session, frame, seq = (int(g) for g in m.groups())
    if cam < 1:
        raise ParseError(f"{name!r}: camera numbers start at 1")
    return MarketName(pid, cam - 1, frame, session, seq)


def dataset_from_market_names(
    names: Iterable[str],
    features: Optional[np.ndarray] = None,
    role: Role = Role.GALLERY,
    camera_count: Optional[int] = None,
) -> Dataset:
    parsed = [(os.path.basename(n), parse_market_filename(n)) for n in names]
    pids = [m.person_id for _, m in parsed]
    return Dataset.from_arrays(
        features if features is not None else np.zeros((len(parsed), 0)),
        cameras=[m.camera_id for _, m in parsed],
        timestamps=[m.frame for _, m in parsed],
        person_ids=pids,
        distractors=[p == -1 for p in pids],
        record_ids=[n for n, _ in parsed],
        camera_count=camera_count,
        role=role,
    )


# -- feature matrices ---------------------------------------------------------


def write_feature_matrix(matrix: np.ndarray, sink: Union[PathOrFile, BinaryIO], dtype="float32") -> None:
    dtype = np.dtype(dtype)
    if dtype not in _DTYPE_CODES:
        raise ValidationError(f"unsupported dtype {dtype}")
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {matrix.shape}")
    header = _HEADER.pack(MAGIC, VERSION, _DTYPE_CODES[dtype], matrix.shape[0], matrix.shape[1])
    payload = np.ascontiguousarray(matrix, dtype=dtype.newbyteorder("<")).tobytes()
    if hasattr(sink, "write"):
        sink.write(header + payload)
    else:
        with open(sink, "wb") as fh:
            fh.write(header + payload)


def read_feature_header(data: bytes) -> FeatureFileHeader:
    if len(data) < _HEADER.size:
        raise ParseError(f"file is {len(data)} bytes, header needs {_HEADER.size}", "byte 0")
    magic, version, code, rows, dim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", "byte 0")
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", "byte 4")
    if code not in _DTYPES:
        raise ParseError(f"unknown dtype code {code}", "byte 6")
    return FeatureFileHeader(magic, version, rows, dim, _DTYPES[code])


def read_feature_matrix(source: Union[PathOrFile, BinaryIO], dtype=None) -> np.ndarray:
    """Load a feature matrix; ``dtype``, if given, must match the stored type."""
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    header = read_feature_header(data)
    if dtype is not None and np.dtype(dtype) != header.dtype:
        raise ValidationError(f"file stores {header.dtype.name}, {np.dtype(dtype).name} requested")
    actual = len(data) - _HEADER.size
    if actual != header.payload_bytes:
        raise ParseError(
            f"payload is {actual} bytes, header declares {header.rows}x{header.dim} "
            f"{header.dtype.name} = {header.payload_bytes} bytes",
            f"byte {_HEADER.size}",
        )
    out = np.frombuffer(data, dtype=header.dtype, offset=_HEADER.size)
    return out.reshape(header.rows, header.dim).astype(header.dtype.newbyteorder("="))


# -- datasets ---------------------------------------------------------------


def load_dataset(
    metadata: PathOrFile,
    features: Optional[PathOrFile] = None,
    role: Role = Role.GALLERY,
    camera_count: Optional[int] = None,
) -> Dataset:
    ds = parse_metadata_csv(metadata, role=role, camera_count=camera_count)
    if features is None:
        return ds
    return ds.with_features(read_feature_matrix(features))


def save_dataset(
    dataset: Dataset, metadata: PathOrFile, features: Optional[PathOrFile] = None, dtype="float64"
) -> None:
    write_metadata_csv(dataset, metadata)
    if features is not None:
        write_feature_matrix(dataset.features, features, dtype=dtype)


def metadata_text(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_metadata_csv(dataset, buf)
    return buf.getvalue()
