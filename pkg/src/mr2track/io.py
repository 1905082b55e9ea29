"""Line-delimited JSON streams for detections, ground truth and tracks.

Every file is UTF-8, one JSON object per line. Line 1 is a header object;
each following line is one record with a fixed key order and every float
written with six decimals. See ``docs/FORMAT.md``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import BBox, Detection, ResolutionTier, Tier, rescale_detection
from .tracker import Emission, FrameResult

DETECTIONS_FORMAT = "mr2-detections"
GROUNDTRUTH_FORMAT = "mr2-groundtruth"
TRACKS_FORMAT = "mr2-tracks"
MANIFEST_FORMAT = "mr2-manifest"
VERSION = 1

_BOX_KEYS = ("x_min", "y_min", "x_max", "y_max")
_DET_KEYS = ("frame_index", "tier", "class_id", "conf", *_BOX_KEYS)
_GT_KEYS = ("frame_index", "instance_id", "class_id", *_BOX_KEYS)
_TRACK_KEYS = ("frame_index", "track_id", "class_id", "conf", *_BOX_KEYS)


class FormatError(ValueError):
    """A stream file violates the format; ``code`` is stable for callers."""

    MALFORMED = "malformed-record"
    HEADER = "bad-header"
    FRAME_ORDER = "non-contiguous-frames"
    CONF_RANGE = "conf-out-of-range"
    UNKNOWN_TIER = "unknown-tier"
    UNKNOWN_CLASS = "unknown-class"
    BAD_BOX = "bad-box"

    def __init__(self, code: str, message: str, path: str | os.PathLike | None = None, line: int | None = None):
        self.code = code
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = self.path + (f":{line}" if line is not None else "") + ": "
        super().__init__(f"{where}[{code}] {message}")


@dataclass(frozen=True)
class GroundTruth:
    bbox: BBox
    cls: int
    instance_id: int


@dataclass
class DetectionStream:
    sequence_id: str
    classes: tuple[str, ...]
    tiers: dict[Tier, ResolutionTier]
    frames: list[list[Detection]] = field(default_factory=list)
    # p of the schedule the stream was generated for; None = every declared
    # tier is present on every frame.
    schedule_p: int | None = None

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def covers(self, frame_index: int, tier: Tier) -> bool:
        if tier not in self.tiers or not 0 <= frame_index < self.frame_count:
            return False
        if self.schedule_p is None:
            return True
        scheduled = Tier.FULL if frame_index % (1 + self.schedule_p) == 0 else Tier.LOW
        return tier is scheduled

    def detections(self, frame_index: int, tier: Tier) -> list[Detection]:
        return [d for d in self.frames[frame_index] if d.tier is tier]


@dataclass
class GroundTruthStream:
    sequence_id: str
    classes: tuple[str, ...]
    frames: list[list[GroundTruth]] = field(default_factory=list)

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass
class TrackOutput:
    sequence_id: str
    classes: tuple[str, ...]
    results: list[FrameResult]


# -- writing -----------------------------------------------------------------

# largest 6-decimal value below 1; keeps written confidences readable
_CONF_CEIL = 0.999999


def _fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _box_fields(b: BBox) -> str:
    return ", ".join(f'"{k}": {_fmt(v)}' for k, v in zip(_BOX_KEYS, b.as_tuple()))


def _tiers_json(tiers: dict[Tier, ResolutionTier]) -> dict[str, list[int]]:
    return {t.value: [tiers[t].width_px, tiers[t].height_px] for t in Tier if t in tiers}


def _write_lines(path: str | os.PathLike, header: dict, lines: Iterable[str]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(header) + "\n")
            for line in lines:
                fh.write(line + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_detection_stream(stream: DetectionStream, path: str | os.PathLike) -> None:
    header = {
        "format": DETECTIONS_FORMAT,
        "version": VERSION,
        "sequence_id": stream.sequence_id,
        "classes": list(stream.classes),
        "tiers": _tiers_json(stream.tiers),
        "frame_count": stream.frame_count,
        "units": "normalized",
    }
    if stream.schedule_p is not None:
        header["schedule_p"] = stream.schedule_p

    def lines() -> Iterable[str]:
        for f, dets in enumerate(stream.frames):
            for d in dets:
                yield (
                    f'{{"frame_index": {f}, "tier": "{d.tier.value}", "class_id": {d.cls}, '
                    f'"conf": {_fmt(min(d.conf, _CONF_CEIL))}, {_box_fields(d.bbox)}}}'
                )

    _write_lines(path, header, lines())


def write_ground_truth(stream: GroundTruthStream, path: str | os.PathLike) -> None:
    header = {
        "format": GROUNDTRUTH_FORMAT,
        "version": VERSION,
        "sequence_id": stream.sequence_id,
        "classes": list(stream.classes),
        "frame_count": stream.frame_count,
    }

    def lines() -> Iterable[str]:
        for f, objs in enumerate(stream.frames):
            for g in objs:
                yield (
                    f'{{"frame_index": {f}, "instance_id": {g.instance_id}, '
                    f'"class_id": {g.cls}, {_box_fields(g.bbox)}}}'
                )

    _write_lines(path, header, lines())


def write_track_output(
    results: Sequence[FrameResult],
    path: str | os.PathLike,
    sequence_id: str = "",
    classes: Sequence[str] = (),
) -> None:
    """Write per-frame emissions; frames must be numbered 0..n-1 in order."""
    for k, r in enumerate(results):
        if r.frame_index != k:
            raise ValueError(f"results must cover frames 0..n-1 in order; got {r.frame_index} at {k}")
    header = {
        "format": TRACKS_FORMAT,
        "version": VERSION,
        "sequence_id": sequence_id,
        "classes": list(classes),
        "frame_count": len(results),
    }

    def lines() -> Iterable[str]:
        for r in results:
            for e in r.emitted:
                yield (
                    f'{{"frame_index": {r.frame_index}, "track_id": {e.track_id}, '
                    f'"class_id": {e.cls}, "conf": {_fmt(e.conf)}, {_box_fields(e.bbox)}}}'
                )

    _write_lines(path, header, lines())


# -- reading -----------------------------------------------------------------

class _Reader:
    def __init__(self, path: str | os.PathLike, fmt: str):
        self.path = Path(path)
        self.fmt = fmt

    def error(self, code: str, msg: str, line: int | None = None) -> FormatError:
        return FormatError(code, msg, self.path, line)

    def lines(self) -> list[str]:
        try:
            raw = self.path.read_bytes()
        except FileNotFoundError:
            raise
        except OSError as exc:
            raise OSError(f"cannot read {self.path}: {exc.strerror or exc}") from exc
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise self.error(FormatError.MALFORMED, f"not UTF-8 ({exc.reason})") from None
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise self.error(FormatError.HEADER, "empty file", 1)
        return lines

    def parse(self, line: str, lineno: int) -> dict:
        try:
            obj = json.loads(line, parse_constant=_reject_constant)
        except (json.JSONDecodeError, ValueError) as exc:
            raise self.error(FormatError.MALFORMED, f"invalid JSON: {exc}", lineno) from None
        if not isinstance(obj, dict):
            raise self.error(FormatError.MALFORMED, "record is not an object", lineno)
        return obj

    def header(self, line: str) -> dict:
        h = self.parse(line, 1)
        if h.get("format") != self.fmt:
            raise self.error(FormatError.HEADER, f"expected format {self.fmt!r}, got {h.get('format')!r}", 1)
        if h.get("version") != VERSION:
            raise self.error(FormatError.HEADER, f"unsupported version {h.get('version')!r}", 1)
        fc = h.get("frame_count")
        if not _is_int(fc) or fc < 0:
            raise self.error(FormatError.HEADER, "frame_count must be a non-negative integer", 1)
        classes = h.get("classes")
        if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
            raise self.error(FormatError.HEADER, "classes must be a list of strings", 1)
        if not isinstance(h.get("sequence_id"), str):
            raise self.error(FormatError.HEADER, "sequence_id must be a string", 1)
        return h

    def record(self, line: str, lineno: int, keys: tuple[str, ...]) -> dict:
        rec = self.parse(line, lineno)
        if set(rec) != set(keys):
            missing = sorted(set(keys) - set(rec))
            extra = sorted(set(rec) - set(keys))
            raise self.error(FormatError.MALFORMED, f"fields mismatch (missing {missing}, unexpected {extra})", lineno)
        return rec

    def integer(self, rec: dict, key: str, lineno: int) -> int:
        v = rec[key]
        if not _is_int(v) or v < 0:
            raise self.error(FormatError.MALFORMED, f"{key} must be a non-negative integer", lineno)
        return v

    def real(self, rec: dict, key: str, lineno: int) -> float:
        v = rec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise self.error(FormatError.MALFORMED, f"{key} must be a finite number", lineno)
        return float(v)

    def box(self, rec: dict, lineno: int) -> BBox:
        vals = [self.real(rec, k, lineno) for k in _BOX_KEYS]
        try:
            return BBox(*vals)
        except ValueError as exc:
            raise self.error(FormatError.BAD_BOX, str(exc), lineno) from None

    def frame(self, rec: dict, lineno: int, last: int, frame_count: int) -> int:
        f = self.integer(rec, "frame_index", lineno)
        if f < last or f >= frame_count:
            raise self.error(
                FormatError.FRAME_ORDER,
                f"frame_index {f} out of order or outside 0..{frame_count - 1}",
                lineno,
            )
        return f

    def class_id(self, rec: dict, lineno: int, n_classes: int) -> int:
        c = self.integer(rec, "class_id", lineno)
        if c >= n_classes:
            raise self.error(FormatError.UNKNOWN_CLASS, f"class_id {c} not in the {n_classes}-entry class table", lineno)
        return c

    def conf(self, rec: dict, lineno: int) -> float:
        c = self.real(rec, "conf", lineno)
        if not 0.0 <= c < 1.0:
            raise self.error(FormatError.CONF_RANGE, f"conf {c} outside [0, 1)", lineno)
        return c


def _reject_constant(name: str):
    raise ValueError(f"{name} is not allowed")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _parse_tiers(r: _Reader, h: dict) -> dict[Tier, ResolutionTier]:
    raw = h.get("tiers")
    if not isinstance(raw, dict) or not raw:
        raise r.error(FormatError.HEADER, "tiers must be a non-empty object", 1)
    tiers = {}
    for name, dims in raw.items():
        try:
            t = Tier(name)
        except ValueError:
            raise r.error(FormatError.HEADER, f"unknown tier {name!r} in header", 1) from None
        if not (isinstance(dims, list) and len(dims) == 2 and all(_is_int(x) and x > 0 for x in dims)):
            raise r.error(FormatError.HEADER, f"tier {name!r} needs [width, height] positive integers", 1)
        tiers[t] = ResolutionTier(t, dims[0], dims[1])
    return tiers


def read_detection_stream(path: str | os.PathLike) -> DetectionStream:
    r = _Reader(path, DETECTIONS_FORMAT)
    lines = r.lines()
    h = r.header(lines[0])
    tiers = _parse_tiers(r, h)
    units = h.get("units", "normalized")
    if units not in ("normalized", "pixel"):
        raise r.error(FormatError.HEADER, f"units must be 'normalized' or 'pixel', got {units!r}", 1)
    schedule_p = h.get("schedule_p")
    if schedule_p is not None and (not _is_int(schedule_p) or schedule_p < 0):
        raise r.error(FormatError.HEADER, "schedule_p must be a non-negative integer", 1)
    extra = set(h) - {"format", "version", "sequence_id", "classes", "tiers", "frame_count", "units", "schedule_p"}
    if extra:
        raise r.error(FormatError.HEADER, f"unexpected header fields {sorted(extra)}", 1)
    n = h["frame_count"]
    classes = tuple(h["classes"])
    stream = DetectionStream(h["sequence_id"], classes, tiers, [[] for _ in range(n)], schedule_p)
    last = 0
    for lineno, line in enumerate(lines[1:], start=2):
        rec = r.record(line, lineno, _DET_KEYS)
        f = r.frame(rec, lineno, last, n)
        last = f
        try:
            tier = Tier(rec["tier"])
        except ValueError:
            raise r.error(FormatError.UNKNOWN_TIER, f"tier {rec['tier']!r} is not a known tier", lineno) from None
        if tier not in tiers:
            raise r.error(FormatError.UNKNOWN_TIER, f"tier {tier.value!r} not declared in header", lineno)
        if not stream.covers(f, tier):
            raise r.error(FormatError.UNKNOWN_TIER, f"tier {tier.value!r} not scheduled on frame {f}", lineno)
        cls = r.class_id(rec, lineno, len(classes))
        conf = r.conf(rec, lineno)
        box = r.box(rec, lineno)
        if units == "pixel":
            d = rescale_detection(Detection(box, cls, conf, f, tier, normalized=False), tiers[tier])
        else:
            d = Detection(box.clamp(), cls, conf, f, tier)
        stream.frames[f].append(d)
    return stream


def read_ground_truth(path: str | os.PathLike) -> GroundTruthStream:
    r = _Reader(path, GROUNDTRUTH_FORMAT)
    lines = r.lines()
    h = r.header(lines[0])
    n = h["frame_count"]
    classes = tuple(h["classes"])
    stream = GroundTruthStream(h["sequence_id"], classes, [[] for _ in range(n)])
    last = 0
    for lineno, line in enumerate(lines[1:], start=2):
        rec = r.record(line, lineno, _GT_KEYS)
        f = r.frame(rec, lineno, last, n)
        last = f
        inst = r.integer(rec, "instance_id", lineno)
        cls = r.class_id(rec, lineno, len(classes))
        stream.frames[f].append(GroundTruth(r.box(rec, lineno).clamp(), cls, inst))
    return stream


def read_track_output(path: str | os.PathLike) -> TrackOutput:
    r = _Reader(path, TRACKS_FORMAT)
    lines = r.lines()
    h = r.header(lines[0])
    n = h["frame_count"]
    classes = tuple(h["classes"])
    frames: list[list[Emission]] = [[] for _ in range(n)]
    last = 0
    for lineno, line in enumerate(lines[1:], start=2):
        rec = r.record(line, lineno, _TRACK_KEYS)
        f = r.frame(rec, lineno, last, n)
        last = f
        tid = r.integer(rec, "track_id", lineno)
        cls = r.class_id(rec, lineno, len(classes)) if classes else r.integer(rec, "class_id", lineno)
        conf = r.real(rec, "conf", lineno)
        if not 0.0 <= conf <= 1.0:
            raise r.error(FormatError.CONF_RANGE, f"conf {conf} outside [0, 1]", lineno)
        frames[f].append(Emission(tid, r.box(rec, lineno).clamp(), cls, conf))
    results = [FrameResult(k, tuple(e)) for k, e in enumerate(frames)]
    return TrackOutput(h["sequence_id"], classes, results)


# -- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class SequenceEntry:
    sequence_id: str
    detections: Path
    groundtruth: Path | None


@dataclass(frozen=True)
class Manifest:
    path: Path
    classes: tuple[str, ...]
    tiers: dict[Tier, ResolutionTier]
    sequences: tuple[SequenceEntry, ...]


def read_manifest(path: str | os.PathLike) -> Manifest:
    path = Path(path)
    r = _Reader(path, MANIFEST_FORMAT)
    try:
        h = json.loads(path.read_text(encoding="utf-8"), parse_constant=_reject_constant)
    except (json.JSONDecodeError, ValueError) as exc:
        raise r.error(FormatError.MALFORMED, f"invalid JSON: {exc}") from None
    if not isinstance(h, dict) or h.get("format") != MANIFEST_FORMAT:
        raise r.error(FormatError.HEADER, f"expected format {MANIFEST_FORMAT!r}")
    classes = h.get("classes")
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise r.error(FormatError.HEADER, "classes must be a list of strings")
    tiers = _parse_tiers(r, h)
    seqs = []
    seen = set()
    for s in h.get("sequences", []):
        if not isinstance(s, dict) or not isinstance(s.get("id"), str) or not isinstance(s.get("detections"), str):
            raise r.error(FormatError.HEADER, "each sequence needs string 'id' and 'detections'")
        if s["id"] in seen:
            raise r.error(FormatError.HEADER, f"duplicate sequence id {s['id']!r}")
        seen.add(s["id"])
        gt = s.get("groundtruth")
        seqs.append(
            SequenceEntry(
                s["id"],
                path.parent / s["detections"],
                None if gt is None else path.parent / gt,
            )
        )
    seqs.sort(key=lambda e: e.sequence_id)
    return Manifest(path, tuple(classes), tiers, tuple(seqs))


def write_manifest(
    path: str | os.PathLike,
    classes: Sequence[str],
    tiers: dict[Tier, ResolutionTier],
    sequences: Sequence[tuple[str, str, str | None]],
) -> None:
    """``sequences`` holds (id, detections path, groundtruth path) relative to the manifest."""
    doc = {
        "format": MANIFEST_FORMAT,
        "version": VERSION,
        "classes": list(classes),
        "tiers": _tiers_json(tiers),
        "sequences": [
            {"id": sid, "detections": det, **({"groundtruth": gt} if gt is not None else {})}
            for sid, det, gt in sequences
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
