"""File formats: SASF binary score sequences, annotation and prediction JSON.

SASF layout (little-endian throughout):
    magic "SASF" | u32 version=1 | u32 T | u32 D | u32 block_count
    per block: u16 name_length | UTF-8 name | u32 width
    T*D float32 values, row-major
Trailing bytes are an error. Readers report the byte offset of whatever
they reject. JSON writers emit sorted keys with a fixed layout so equal
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .data import ActionInstance, AnnotationSet, Detection, ScoreBlock, ScoreSequence, VideoAnnotation
from .errors import DataError

SASF_MAGIC = b"SASF"
SASF_VERSION = 1


def atomic_write_bytes(path, payload: bytes):
    """Write via a temporary file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


class _Reader:
    """Cursor over a byte string that raises DataError with the failing offset."""

    def __init__(self, payload: bytes, path):
        self.payload = payload
        self.pos = 0
        self.path = path

    def fail(self, message, offset=None):
        offset = self.pos if offset is None else offset
        raise DataError(f"{self.path}: {message} at byte {offset}")

    def take(self, count, what):
        if self.pos + count > len(self.payload):
            self.fail(f"truncated {what} (need {count} bytes)")
        out = self.payload[self.pos:self.pos + count]
        self.pos += count
        return out

    def u16(self, what):
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def save_sas_features(seq: ScoreSequence, path):
    """Serialize a score sequence in SASF form (values stored as float32)."""
    matrix = np.ascontiguousarray(seq.matrix, dtype=np.float32)
    if not np.isfinite(matrix).all():
        raise DataError(f"{path}: refusing to write non-finite scores")
    t, d = matrix.shape
    parts = [SASF_MAGIC, struct.pack("<IIII", SASF_VERSION, t, d, len(seq.blocks))]
    for block in seq.blocks:
        name = block.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise DataError(f"{path}: block name too long ({len(name)} bytes)")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<I", block.width))
    parts.append(matrix.tobytes(order="C"))
    atomic_write_bytes(path, b"".join(parts))


def load_sas_features(path, class_names=None) -> ScoreSequence:
    """Parse an SASF file. ``class_names`` optionally maps each block name to
    a column-name tuple (the binary format does not carry column names)."""
    with open(path, "rb") as fh:
        payload = fh.read()
    r = _Reader(payload, path)
    magic = r.take(4, "magic")
    if magic != SASF_MAGIC:
        r.fail(f"bad magic {magic!r}, expected {SASF_MAGIC!r}", offset=0)
    version = r.u32("version")
    if version != SASF_VERSION:
        r.fail(f"unsupported version {version}", offset=4)
    t = r.u32("snippet count")
    d = r.u32("feature dimension")
    block_count = r.u32("block count")
    if t < 1 or d < 1:
        r.fail(f"empty matrix (T={t}, D={d})", offset=8)
    blocks = []
    for i in range(block_count):
        name_len = r.u16(f"block {i} name length")
        name = r.take(name_len, f"block {i} name").decode("utf-8", errors="strict")
        width = r.u32(f"block {i} width")
        names = class_names.get(name) if class_names else None
        blocks.append(ScoreBlock(name, width, tuple(names) if names else None))
    widths = sum(b.width for b in blocks)
    if widths != d:
        r.fail(f"block widths sum to {widths}, header says D={d}")
    data_offset = r.pos
    raw = r.take(t * d * 4, "score payload")
    if r.pos != len(payload):
        r.fail(f"{len(payload) - r.pos} trailing bytes")
    matrix = np.frombuffer(raw, dtype="<f4").reshape(t, d)
    bad = ~np.isfinite(matrix)
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise DataError(
            f"{path}: non-finite score value at byte {data_offset + idx * 4}"
        )
    video_id = os.path.splitext(os.path.basename(path))[0]
    return ScoreSequence(video_id, matrix.astype(np.float64), blocks)


def _require(cond, message):
    if not cond:
        raise DataError(message)


def save_annotations(annotation_set: AnnotationSet, path):
    doc = {
        "categories": list(annotation_set.categories),
        "videos": [
            {
                "video_id": v.video_id,
                "num_snippets": v.num_snippets,
                "fps": v.fps,
                "instances": [
                    {"start": inst.start, "end": inst.end, "category": inst.category}
                    for inst in v.instances
                ],
            }
            for v in annotation_set.videos
        ],
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_annotations(path) -> AnnotationSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    _require(isinstance(doc, dict), f"{path}: top level must be an object")
    categories = doc.get("categories")
    _require(isinstance(categories, list) and all(isinstance(c, str) for c in categories),
             f"{path}: 'categories' must be a list of strings")
    videos_doc = doc.get("videos")
    _require(isinstance(videos_doc, list), f"{path}: 'videos' must be a list")
    videos = []
    seen = set()
    for rec in videos_doc:
        _require(isinstance(rec, dict), f"{path}: video records must be objects")
        vid = rec.get("video_id")
        _require(isinstance(vid, str) and vid, f"{path}: video record missing 'video_id'")
        _require(vid not in seen, f"{path}: duplicate video_id {vid!r}")
        seen.add(vid)
        instances = []
        for i, inst in enumerate(rec.get("instances", [])):
            label = f"{path}: video {vid!r} instance {i}"
            _require(isinstance(inst, dict), f"{label}: must be an object")
            try:
                start = float(inst["start"])
                end = float(inst["end"])
                category = int(inst["category"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{label}: needs numeric start/end and integer category") from exc
            _require(1 <= category <= len(categories),
                     f"{label}: category {category} outside 1..{len(categories)}")
            try:
                instances.append(ActionInstance(start, end, category))
            except DataError as exc:
                raise DataError(f"{label}: {exc}") from exc
        try:
            videos.append(
                VideoAnnotation(vid, int(rec.get("num_snippets", 0)),
                                float(rec.get("fps", 25.0)), instances)
            )
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from exc
    return AnnotationSet(videos, list(categories))


def save_predictions(detections, path):
    doc = {
        "predictions": [
            {
                "video_id": det.video_id,
                "start": det.start,
                "end": det.end,
                "category": det.category,
                "confidence": det.confidence,
            }
            for det in detections
        ]
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_predictions(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    _require(isinstance(doc, dict) and isinstance(doc.get("predictions"), list),
             f"{path}: expected an object with a 'predictions' list")
    out = []
    for i, rec in enumerate(doc["predictions"]):
        label = f"{path}: prediction {i}"
        _require(isinstance(rec, dict), f"{label}: must be an object")
        try:
            det = Detection(
                str(rec["video_id"]),
                float(rec["start"]),
                float(rec["end"]),
                int(rec["category"]),
                float(rec["confidence"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{label}: malformed record") from exc
        _require(det.start < det.end, f"{label}: start must precede end")
        out.append(det)
    return out
