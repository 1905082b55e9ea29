"""BYTE-style two-stage tracker with probabilistic class rescoring."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .assoc import build_cost_matrix, solve_assignment
from .core import BBox, Detection, TrackerConfig
from .kalman import FilterDivergence, KalmanFilter, MotionState, state_to_bbox

# (high_threshold, low_threshold) per detector, tuned for best F1 on the
# evaluation data of the original experiments.
THRESHOLD_PRESETS: dict[str, tuple[float, float]] = {
    "nanodet-plus": (0.35, 0.30),
    "yolox-nano": (0.30, 0.25),
    "efficientdet-d0": (0.40, 0.35),
}


def preset_config(model: str, **overrides) -> TrackerConfig:
    high, low = THRESHOLD_PRESETS[model]
    return TrackerConfig(low_threshold=low, high_threshold=high, **overrides)


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    REMOVED = "removed"


@dataclass
class Track:
    track_id: int
    motion: MotionState
    cls: int
    conf: float
    conf_agg: float
    hit_streak: int = 1
    frames_since_update: int = 0
    status: TrackStatus = TrackStatus.TENTATIVE
    conf_sum: float = 0.0
    conf_count: int = 1

    @property
    def bbox(self) -> BBox:
        return state_to_bbox(self.motion)

    @property
    def mean_conf(self) -> float:
        return self.conf_sum / self.conf_count


@dataclass(frozen=True)
class Emission:
    track_id: int
    bbox: BBox
    cls: int
    conf: float


@dataclass(frozen=True)
class FrameResult:
    frame_index: int
    emitted: tuple[Emission, ...] = ()


def rescore(track: Track, det: Detection, epsilon: float) -> Track:
    """Fold one matched detection into the track's class belief (in place).

    ``conf_agg`` is the probability that ``track.cls`` is right. Agreeing
    detections raise it like independent witnesses; a disagreeing detection
    divides the residual doubt back out, and the class flips once the
    detection is more credible than what is left.
    """
    ci = det.conf
    if det.cls == track.cls:
        track.conf_agg = 1.0 - (1.0 - ci) * (1.0 - track.conf_agg)
    elif track.conf_agg < ci:
        track.cls, track.conf, track.conf_agg = det.cls, ci, ci
    else:
        track.conf_agg = max(1.0 - (1.0 - track.conf_agg) / (1.0 - ci), 0.0)
        if track.conf_agg < ci:
            track.cls, track.conf, track.conf_agg = det.cls, ci, ci
    track.conf_agg = min(track.conf_agg, 1.0 - epsilon)
    track.conf_sum += ci
    track.conf_count += 1
    return track


@dataclass
class ByteTracker:
    """Per-sequence tracker state; feed frames in increasing order via :meth:`step`."""

    config: TrackerConfig
    kf: KalmanFilter = field(default_factory=KalmanFilter)
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1
    last_frame: int | None = None

    def step(self, frame_index: int, detections: list[Detection]) -> FrameResult:
        cfg = self.config
        if self.last_frame is not None and frame_index <= self.last_frame:
            raise ValueError(
                f"frame index {frame_index} not after previous frame {self.last_frame}"
            )
        self.last_frame = frame_index

        kept = [d for d in detections if d.conf >= cfg.low_threshold]
        high = [d for d in kept if d.conf >= cfg.high_threshold]
        low = [d for d in kept if d.conf < cfg.high_threshold]

        for t in self.tracks:
            t.motion = self.kf.predict(t.motion)

        matched: list[tuple[Track, Detection]] = []
        pending = list(self.tracks)
        leftover_high = high
        if cfg.associate:
            pending, leftover_high, pairs = self._associate(pending, high)
            matched.extend(pairs)
            pending, _, pairs = self._associate(pending, low)
            matched.extend(pairs)

        emitted: list[Emission] = []
        for t, d in matched:
            self._apply_match(t, d)
            if t.status is TrackStatus.ACTIVE:
                emitted.append(Emission(t.track_id, t.bbox, t.cls, t.mean_conf))

        for t in pending:
            t.frames_since_update += 1
            t.hit_streak = 0
            if t.status is TrackStatus.TENTATIVE or t.frames_since_update > cfg.max_coast_frames:
                t.status = TrackStatus.REMOVED
            elif cfg.emit_coasting:
                emitted.append(Emission(t.track_id, t.bbox, t.cls, t.mean_conf))

        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]

        for d in leftover_high:
            if d.conf <= cfg.high_threshold or d.bbox.area <= 0.0:
                continue
            t = self._spawn(d)
            if t.status is TrackStatus.ACTIVE:
                emitted.append(Emission(t.track_id, t.bbox, t.cls, t.mean_conf))

        emitted.sort(key=lambda e: e.track_id)
        return FrameResult(frame_index, tuple(emitted))

    def _associate(
        self, tracks: list[Track], dets: list[Detection]
    ) -> tuple[list[Track], list[Detection], list[tuple[Track, Detection]]]:
        if not tracks or not dets:
            return tracks, dets, []
        c = build_cost_matrix(
            [t.bbox for t in tracks], [d.bbox for d in dets], self.config.iou_match_threshold
        )
        a = solve_assignment(c)
        pairs = [(tracks[i], dets[j]) for i, j in a.matches]
        return (
            [tracks[i] for i in a.unmatched_tracks],
            [dets[j] for j in a.unmatched_detections],
            pairs,
        )

    def _apply_match(self, t: Track, d: Detection) -> None:
        cfg = self.config
        if d.bbox.area > 0.0:
            try:
                t.motion = self.kf.update(t.motion, d.bbox)
            except FilterDivergence:
                t.motion = self.kf.initiate(d.bbox)
        if cfg.rescore:
            rescore(t, d, cfg.epsilon)
            if d.conf > cfg.high_threshold:
                t.conf = d.conf
        else:
            t.conf_sum += d.conf
            t.conf_count += 1
        t.hit_streak += 1
        t.frames_since_update = 0
        if t.status is TrackStatus.TENTATIVE and t.hit_streak >= cfg.activation_hits:
            t.status = TrackStatus.ACTIVE

    def _spawn(self, d: Detection) -> Track:
        cfg = self.config
        t = Track(
            track_id=self.next_id,
            motion=self.kf.initiate(d.bbox),
            cls=d.cls,
            conf=d.conf,
            conf_agg=min(d.conf, 1.0 - cfg.epsilon),
            conf_sum=d.conf,
            conf_count=1,
        )
        self.next_id += 1
        if t.hit_streak >= cfg.activation_hits:
            t.status = TrackStatus.ACTIVE
        self.tracks.append(t)
        return t
