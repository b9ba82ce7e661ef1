"""On-disk formats: LMSK masks, LPRB probability volumes and JSON records.

Both binary formats start with one ASCII header line::

    LMSK 1 <width> <height> <depth> <sx> <sy> <sz>\\n

followed by ``width*height*depth`` voxels ordered x-fastest, then y, then
z.  LMSK stores one byte per voxel (0x00 or 0x01); LPRB stores
little-endian float32 values in [0, 1].
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .masks import MaskVolume, VoxelSpacing
from .metrics import EvaluationMode, MetricTriple, SubjectEvaluation
from .postproc import ProbabilityVolume

__all__ = [
    "FORMAT_VERSION",
    "FormatError",
    "atomic_write_bytes",
    "atomic_write_text",
    "encode_mask",
    "decode_mask",
    "write_mask",
    "read_mask",
    "encode_prob",
    "decode_prob",
    "write_prob",
    "read_prob",
    "read_volume",
    "ManifestEntry",
    "CohortManifest",
    "load_manifest",
    "ResultsRecord",
    "subject_record",
]

FORMAT_VERSION = 1
_MAX_HEADER = 512


class FormatError(ValueError):
    """Malformed file content; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _header(magic: str, dims, spacing: VoxelSpacing) -> bytes:
    w, h, d = dims
    sx, sy, sz = spacing.as_tuple()
    return f"{magic} {FORMAT_VERSION} {w} {h} {d} {sx!r} {sy!r} {sz!r}\n".encode("ascii")


def _parse_header(data: bytes, magic: str):
    end = data.find(b"\n", 0, _MAX_HEADER)
    if end < 0:
        raise FormatError("missing header terminator", offset=min(len(data), _MAX_HEADER))
    try:
        fields = data[:end].decode("ascii").split(" ")
    except UnicodeDecodeError as exc:
        raise FormatError("header is not ASCII", offset=exc.start) from None
    if not fields or fields[0] != magic:
        raise FormatError(f"bad magic, expected {magic!r}", offset=0)
    if len(fields) != 8:
        raise FormatError(f"header needs 8 fields, found {len(fields)}", offset=0)
    if fields[1] != str(FORMAT_VERSION):
        raise FormatError(f"unsupported version {fields[1]!r}", offset=len(magic) + 1)
    try:
        dims = tuple(int(f) for f in fields[2:5])
        spacing = tuple(float(f) for f in fields[5:8])
    except ValueError:
        raise FormatError("non-numeric header field", offset=0) from None
    if min(dims) <= 0:
        raise FormatError(f"dimensions must be positive, got {dims}", offset=0)
    if not all(math.isfinite(s) and s > 0 for s in spacing):
        raise FormatError(f"spacing must be positive and finite, got {spacing}", offset=0)
    return dims, VoxelSpacing(*spacing), end + 1


def _payload(data: bytes, start: int, n: int, itemsize: int) -> bytes:
    expected = n * itemsize
    got = len(data) - start
    if got < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, found {got}", offset=len(data))
    if got > expected:
        raise FormatError(f"trailing data after {expected}-byte payload", offset=start + expected)
    return data[start:]


def encode_mask(volume: MaskVolume) -> bytes:
    return _header("LMSK", volume.dims, volume.spacing) + volume.voxels.astype(np.uint8).tobytes()


def decode_mask(data: bytes, subject_id: str | None = None) -> MaskVolume:
    (w, h, d), spacing, start = _parse_header(data, "LMSK")
    raw = np.frombuffer(_payload(data, start, w * h * d, 1), dtype=np.uint8)
    bad = np.flatnonzero(raw > 1)
    if bad.size:
        raise FormatError(f"voxel byte 0x{raw[bad[0]]:02x} is not 0x00 or 0x01", offset=start + int(bad[0]))
    return MaskVolume(raw.reshape(d, h, w).astype(bool), spacing, subject_id)


def encode_prob(prob: ProbabilityVolume) -> bytes:
    return _header("LPRB", prob.dims, prob.spacing) + prob.values.astype("<f4").tobytes()


def decode_prob(data: bytes) -> ProbabilityVolume:
    (w, h, d), spacing, start = _parse_header(data, "LPRB")
    vals = np.frombuffer(_payload(data, start, w * h * d, 4), dtype="<f4")
    bad = np.flatnonzero(~np.isfinite(vals) | (vals < 0) | (vals > 1))
    if bad.size:
        raise FormatError(f"value {vals[bad[0]]!r} is not a finite probability", offset=start + 4 * int(bad[0]))
    return ProbabilityVolume(vals.reshape(d, h, w).astype(np.float32), spacing)


def write_mask(path, volume: MaskVolume) -> None:
    atomic_write_bytes(path, encode_mask(volume))


def read_mask(path, subject_id: str | None = None) -> MaskVolume:
    return decode_mask(Path(path).read_bytes(), subject_id)


def write_prob(path, prob: ProbabilityVolume) -> None:
    atomic_write_bytes(path, encode_prob(prob))


def read_prob(path) -> ProbabilityVolume:
    return decode_prob(Path(path).read_bytes())


def read_volume(path):
    """Read either format, dispatching on the magic bytes."""
    data = Path(path).read_bytes()
    if data.startswith(b"LMSK "):
        return decode_mask(data)
    if data.startswith(b"LPRB "):
        return decode_prob(data)
    raise FormatError("unrecognised magic, expected LMSK or LPRB", offset=0)


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    ground_truth: Path
    prediction: Path


@dataclass(frozen=True)
class CohortManifest:
    subjects: tuple[ManifestEntry, ...]
    team_id: str = "team"
    report_score: float = 0.0
    metadata: dict = field(default_factory=dict)


def load_manifest(path, check_files: bool = True) -> CohortManifest:
    """Parse a cohort manifest; relative paths resolve against its directory.

    Schema problems raise ``ValueError``; missing referenced files raise
    ``FileNotFoundError`` naming the subject.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict) or not isinstance(doc.get("subjects"), list):
        raise ValueError(f"{path}: manifest needs a 'subjects' list")
    base = path.parent
    entries, seen = [], set()
    for i, item in enumerate(doc["subjects"]):
        try:
            sid = str(item["subject_id"])
            gt, pred = base / item["ground_truth"], base / item["prediction"]
        except (KeyError, TypeError):
            raise ValueError(f"{path}: subjects[{i}] needs subject_id, ground_truth and prediction") from None
        if sid in seen:
            raise ValueError(f"{path}: duplicate subject id {sid!r}")
        seen.add(sid)
        if check_files:
            for p in (gt, pred):
                if not p.is_file():
                    raise FileNotFoundError(f"subject {sid!r}: missing file {p}")
        entries.append(ManifestEntry(sid, gt, pred))
    report = float(doc.get("report_score", 0.0))
    if not 0.0 <= report <= 10.0:
        raise ValueError(f"{path}: report_score must lie in [0, 10]")
    extra = {k: v for k, v in doc.items() if k not in ("subjects", "team_id", "report_score")}
    return CohortManifest(tuple(entries), str(doc.get("team_id", "team")), report, extra)


def subject_record(ev: SubjectEvaluation) -> dict:
    return {
        "subject_id": ev.subject_id,
        "mode": ev.mode.value,
        "metrics": ev.metrics.as_dict(),
        "slices": [
            {"z": s.z_index, "gt_empty": s.gt_empty, "pred_empty": s.pred_empty,
             "fp": s.fp_flag, **s.metrics.as_dict()}
            for s in ev.slices
        ],
    }


@dataclass
class ResultsRecord:
    """Evaluation output for one team, serialised as versioned JSON."""

    team_id: str
    metrics: dict[str, MetricTriple]
    subjects: list[dict] = field(default_factory=list)
    report_score: float = 0.0
    validation: MetricTriple | None = None
    settings: dict = field(default_factory=dict)
    scorecard: dict | None = None
    format_version: int = FORMAT_VERSION

    def dice_samples(self) -> list[float]:
        """Per-slice dice, preferring tumour-only slices."""
        for mode in (EvaluationMode.TUMOR_ONLY.value, EvaluationMode.ALL_SLICES.value):
            picked = [s["dice"] for sub in self.subjects if sub["mode"] == mode for s in sub["slices"]]
            if picked:
                return picked
        return []

    def to_json(self) -> str:
        doc = {
            "format_version": self.format_version,
            "team_id": self.team_id,
            "report_score": self.report_score,
            "settings": self.settings,
            "metrics": {k: v.as_dict() for k, v in self.metrics.items()},
            "validation": None if self.validation is None else self.validation.as_dict(),
            "subjects": self.subjects,
            "scorecard": self.scorecard,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ResultsRecord":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported results format_version {version!r}")
        try:
            return cls(
                team_id=str(doc["team_id"]),
                metrics={k: MetricTriple.from_dict(v) for k, v in doc["metrics"].items()},
                subjects=list(doc.get("subjects", [])),
                report_score=float(doc.get("report_score", 0.0)),
                validation=None if doc.get("validation") is None else MetricTriple.from_dict(doc["validation"]),
                settings=dict(doc.get("settings", {})),
                scorecard=doc.get("scorecard"),
                format_version=version,
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed results record: {exc}") from None

    def write(self, path) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def read(cls, path) -> "ResultsRecord":
        return cls.from_json(Path(path).read_text())
