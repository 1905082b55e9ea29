"""Seeded synthetic sequences with tier-dependent detector noise.

Ground truth is the noiseless object trajectories. Detections are sampled
independently per ``(frame, tier)`` from a child xoshiro256** stream keyed
on the scenario seed, so a stream restricted to one schedule equals the
both-tier stream filtered by that schedule.

Per visible object, the draw order within a ``(frame, tier)`` stream is:
miss uniform, then (if detected) dip uniform, confidence normal(s), flip
uniform (+ class integer), four jitter normals. Clutter follows, objects
first: Poisson count by Knuth's method, then per clutter box four uniforms,
a class integer and a confidence normal.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

from .core import BBox, Detection, ResolutionTier, Tier
from .io import DetectionStream, GroundTruth, GroundTruthStream
from .prng import Xoshiro256, splitmix64
from .sched import ScheduleConfig, tier_for_frame

CONF_MAX = 0.999
_DECIMALS = 6


@dataclass(frozen=True)
class TierNoise:
    conf_mean: float = 0.8
    conf_std: float = 0.0
    # Chance that a detection's confidence comes from the dip distribution.
    dip_prob: float = 0.0
    dip_mean: float = 0.4
    dip_std: float = 0.0
    flip_prob: float = 0.0
    miss_prob: float = 0.0
    # Corner jitter as a fraction of the box width/height.
    jitter_std: float = 0.0
    # Expected false-positive boxes per frame.
    clutter_rate: float = 0.0
    clutter_conf_mean: float = 0.3
    clutter_conf_std: float = 0.05

    def __post_init__(self) -> None:
        for name in ("dip_prob", "flip_prob", "miss_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("conf_std", "dip_std", "jitter_std", "clutter_rate", "clutter_conf_std"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SyntheticObject:
    instance_id: int
    cls: int
    # (frame, box) waypoints; the box is linearly interpolated in between and
    # the object exists from the first to the last waypoint frame.
    waypoints: tuple[tuple[int, BBox], ...]

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise ValueError(f"object {self.instance_id} has no waypoints")
        frames = [f for f, _ in self.waypoints]
        if frames != sorted(set(frames)):
            raise ValueError(f"object {self.instance_id} waypoints must have increasing frames")

    @property
    def first_frame(self) -> int:
        return self.waypoints[0][0]

    @property
    def last_frame(self) -> int:
        return self.waypoints[-1][0]

    def box_at(self, frame: int) -> BBox | None:
        if not self.first_frame <= frame <= self.last_frame:
            return None
        for (f0, b0), (f1, b1) in zip(self.waypoints, self.waypoints[1:]):
            if f0 <= frame <= f1:
                t = (frame - f0) / (f1 - f0)
                return BBox(*(u + t * (v - u) for u, v in zip(b0.as_tuple(), b1.as_tuple())))
        return self.waypoints[0][1]


@dataclass(frozen=True)
class SyntheticScenario:
    sequence_id: str
    frame_count: int
    classes: tuple[str, ...]
    objects: tuple[SyntheticObject, ...]
    full_noise: TierNoise = field(default_factory=TierNoise)
    low_noise: TierNoise = field(default_factory=TierNoise)
    seed: int = 0
    full_px: tuple[int, int] = (320, 320)
    low_px: tuple[int, int] = (192, 192)

    def noise(self, tier: Tier) -> TierNoise:
        return self.full_noise if tier is Tier.FULL else self.low_noise

    @property
    def tiers(self) -> dict[Tier, ResolutionTier]:
        return {
            Tier.FULL: ResolutionTier(Tier.FULL, *self.full_px),
            Tier.LOW: ResolutionTier(Tier.LOW, *self.low_px),
        }


def _q(v: float) -> float:
    return round(v, _DECIMALS)


def _qbox(b: BBox) -> BBox:
    return BBox(*(_q(v) for v in b.clamp().as_tuple()))


def _poisson(rng: Xoshiro256, lam: float) -> int:
    if lam <= 0.0:
        return 0
    limit = math.exp(-lam)
    k, p = 0, rng.random()
    while p > limit:
        k += 1
        p *= rng.random()
    return k


def _frame_rng(seed: int, frame: int, tier: Tier) -> Xoshiro256:
    key = 2 * frame + (0 if tier is Tier.FULL else 1)
    _, mixed = splitmix64((seed & ((1 << 64) - 1)) ^ splitmix64(key)[1])
    return Xoshiro256(mixed)


def _sample_frame(scn: SyntheticScenario, frame: int, tier: Tier) -> list[Detection]:
    rng = _frame_rng(scn.seed, frame, tier)
    noise = scn.noise(tier)
    n_cls = len(scn.classes)
    dets = []
    for obj in scn.objects:
        box = obj.box_at(frame)
        if box is None or box.clamp().area <= 0.0:
            continue
        if rng.random() < noise.miss_prob:
            continue
        if rng.random() < noise.dip_prob:
            conf = rng.truncated_normal(noise.dip_mean, noise.dip_std, 0.0, CONF_MAX)
        else:
            conf = rng.truncated_normal(noise.conf_mean, noise.conf_std, 0.0, CONF_MAX)
        cls = obj.cls
        if rng.random() < noise.flip_prob and n_cls > 1:
            cls = (obj.cls + rng.integers(1, n_cls)) % n_cls
        w, h = box.width, box.height
        j = [rng.normal(0.0, noise.jitter_std) for _ in range(4)]
        noisy = BBox(
            box.x_min + j[0] * w,
            box.y_min + j[1] * h,
            max(box.x_max + j[2] * w, box.x_min + j[0] * w),
            max(box.y_max + j[3] * h, box.y_min + j[1] * h),
        )
        qb = _qbox(noisy)
        if qb.area <= 0.0:
            continue
        dets.append(Detection(qb, cls, min(_q(conf), CONF_MAX), frame, tier))
    for _ in range(_poisson(rng, noise.clutter_rate)):
        x0, y0 = rng.uniform(0.0, 0.85), rng.uniform(0.0, 0.85)
        w, h = rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.15)
        cls = rng.integers(0, n_cls)
        conf = rng.truncated_normal(noise.clutter_conf_mean, noise.clutter_conf_std, 0.0, CONF_MAX)
        qb = _qbox(BBox(x0, y0, x0 + w, y0 + h))
        dets.append(Detection(qb, cls, min(_q(conf), CONF_MAX), frame, tier))
    return dets


def _validate(scn: SyntheticScenario) -> None:
    if scn.frame_count <= 0:
        raise ValueError("frame_count must be positive")
    if not scn.classes:
        raise ValueError("scenario needs at least one class")
    ids = [o.instance_id for o in scn.objects]
    if len(ids) != len(set(ids)):
        raise ValueError("instance ids must be unique")
    for o in scn.objects:
        if not 0 <= o.cls < len(scn.classes):
            raise ValueError(f"object {o.instance_id} class {o.cls} not in class table")
        if o.first_frame < 0:
            raise ValueError(f"object {o.instance_id} starts before frame 0")
        for f in range(o.first_frame, min(o.last_frame, scn.frame_count - 1) + 1):
            if o.box_at(f).clamp().area <= 0.0:  # type: ignore[union-attr]
                raise ValueError(f"object {o.instance_id} leaves the frame at frame {f}")


def generate_synthetic(
    scn: SyntheticScenario, sched: ScheduleConfig | None = None
) -> tuple[DetectionStream, GroundTruthStream]:
    """Sample paired detection and ground-truth streams.

    With ``sched=None`` every frame carries both tiers; otherwise only the
    tier the schedule assigns to each frame.
    """
    _validate(scn)
    det_frames: list[list[Detection]] = []
    gt_frames: list[list[GroundTruth]] = []
    for f in range(scn.frame_count):
        gts = []
        for o in scn.objects:
            box = o.box_at(f)
            if box is not None and box.clamp().area > 0.0:
                gts.append(GroundTruth(_qbox(box), o.cls, o.instance_id))
        gt_frames.append(gts)
        tiers = (Tier.FULL, Tier.LOW) if sched is None else (tier_for_frame(sched, f).name,)
        dets = []
        for t in tiers:
            dets.extend(_sample_frame(scn, f, t))
        det_frames.append(dets)
    det = DetectionStream(
        scn.sequence_id,
        scn.classes,
        scn.tiers,
        det_frames,
        None if sched is None else sched.p,
    )
    return det, GroundTruthStream(scn.sequence_id, scn.classes, gt_frames)


# -- scenario files ------------------------------------------------------------

LOW_RES_CONF_SHIFT = -0.15


def _noise_from(d: dict, base: TierNoise | None = None) -> TierNoise:
    known = {f.name for f in fields(TierNoise)}
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown noise fields {sorted(unknown)}")
    return replace(base, **d) if base is not None else TierNoise(**d)


def scenario_from_dict(doc: dict) -> SyntheticScenario:
    """Build a scenario from its JSON form (see ``docs/FORMAT.md``).

    The low-res tier inherits every full-res noise field it does not set,
    with ``conf_mean`` shifted by ``low_conf_shift`` (default -0.15).
    """
    allowed = {"sequence_id", "frame_count", "classes", "objects", "noise", "seed", "full_px", "low_px"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown scenario fields {sorted(unknown)}")
    noise = dict(doc.get("noise", {}))
    shift = noise.pop("low_conf_shift", LOW_RES_CONF_SHIFT)
    extra = set(noise) - {"full", "low"}
    if extra:
        raise ValueError(f"unknown noise sections {sorted(extra)}")
    full = _noise_from(noise.get("full", {}))
    low_doc = dict(noise.get("low", {}))
    low_doc.setdefault("conf_mean", full.conf_mean + shift)
    low = _noise_from(low_doc, full)
    objects = []
    for o in doc.get("objects", []):
        wps = tuple((int(f), BBox(*b)) for f, b in o["waypoints"])
        objects.append(SyntheticObject(int(o["instance_id"]), int(o["cls"]), wps))
    return SyntheticScenario(
        sequence_id=str(doc["sequence_id"]),
        frame_count=int(doc["frame_count"]),
        classes=tuple(doc["classes"]),
        objects=tuple(objects),
        full_noise=full,
        low_noise=low,
        seed=int(doc.get("seed", 0)),
        full_px=tuple(doc.get("full_px", (320, 320))),  # type: ignore[arg-type]
        low_px=tuple(doc.get("low_px", (192, 192))),  # type: ignore[arg-type]
    )


def load_scenario(path: str | os.PathLike) -> SyntheticScenario:
    return scenario_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def bundled_scenario_path(name: str) -> Path:
    return Path(str(resources.files("mr2track") / "data" / f"{name}.scenario.json"))


def bundled_scenario(name: str) -> SyntheticScenario:
    return load_scenario(bundled_scenario_path(name))


# -- standard corpus -----------------------------------------------------------

CORPUS_CLASSES = ("person", "car", "dog", "cat", "bird")
CORPUS_SEED = 20240601

CORPUS_FULL_NOISE = TierNoise(
    conf_mean=0.62,
    conf_std=0.15,
    flip_prob=0.05,
    miss_prob=0.05,
    jitter_std=0.03,
    clutter_rate=0.3,
    clutter_conf_mean=0.3,
    clutter_conf_std=0.06,
)
# Low-res frames mostly lose confidence and class certainty rather than
# whole objects.
CORPUS_LOW_NOISE = replace(
    CORPUS_FULL_NOISE,
    conf_mean=CORPUS_FULL_NOISE.conf_mean + LOW_RES_CONF_SHIFT,
    conf_std=0.10,
    flip_prob=0.20,
    miss_prob=0.05,
    jitter_std=0.04,
    clutter_rate=0.4,
)


def _random_object(rng: Xoshiro256, instance_id: int, frame_count: int, n_cls: int) -> SyntheticObject:
    w, h = rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)
    x0, y0 = rng.uniform(0.0, 1.0 - w), rng.uniform(0.0, 1.0 - h)
    if rng.random() < 0.7:
        start, end = 0, frame_count - 1
    else:
        start = rng.integers(0, frame_count // 2)
        end = rng.integers(start + frame_count // 4, frame_count)
    span = max(end - start, 1)
    # End point kept inside the frame so the object never leaves it.
    x1 = min(max(x0 + rng.uniform(-0.3, 0.3), 0.0), 1.0 - w)
    y1 = min(max(y0 + rng.uniform(-0.3, 0.3), 0.0), 1.0 - h)
    wps = ((start, BBox(x0, y0, x0 + w, y0 + h)), (start + span, BBox(x1, y1, x1 + w, y1 + h)))
    return SyntheticObject(instance_id, rng.integers(0, n_cls), wps)


def standard_corpus(
    n_sequences: int = 20,
    frame_count: int = 60,
    seed: int = CORPUS_SEED,
    full_noise: TierNoise = CORPUS_FULL_NOISE,
    low_noise: TierNoise = CORPUS_LOW_NOISE,
) -> list[SyntheticScenario]:
    """Seeded set of multi-object scenarios with degraded low-res detections."""
    root = Xoshiro256(seed)
    out = []
    for k in range(n_sequences):
        rng = root.spawn(k)
        n_obj = rng.integers(2, 6)
        objs = tuple(_random_object(rng, i + 1, frame_count, len(CORPUS_CLASSES)) for i in range(n_obj))
        out.append(
            SyntheticScenario(
                sequence_id=f"seq{k:03d}",
                frame_count=frame_count,
                classes=CORPUS_CLASSES,
                objects=objs,
                full_noise=full_noise,
                low_noise=low_noise,
                seed=rng.next_u64(),
            )
        )
    return out


# -- hand-built fixtures ---------------------------------------------------------

FIXTURE_BOX = BBox(0.3, 0.3, 0.5, 0.5)
_FIXTURE_TIERS = {Tier.FULL: ResolutionTier(Tier.FULL, 320, 320), Tier.LOW: ResolutionTier(Tier.LOW, 192, 192)}


def _fixture(name: str, classes: tuple[str, ...], gt_cls: int, track: list[tuple[int, float]]):
    dets = [[Detection(FIXTURE_BOX, c, conf, f, Tier.FULL), Detection(FIXTURE_BOX, c, conf, f, Tier.LOW)]
            for f, (c, conf) in enumerate(track)]
    gts = [[GroundTruth(FIXTURE_BOX, gt_cls, 1)] for _ in track]
    return DetectionStream(name, classes, dict(_FIXTURE_TIERS), dets), GroundTruthStream(name, classes, gts)


def misclassification_streams() -> tuple[DetectionStream, GroundTruthStream]:
    """One static object, first seen as class 3 (0.4), then as class 7 (0.6) for four frames."""
    classes = tuple(f"class{k}" for k in range(8))
    return _fixture("misclassification", classes, 7, [(3, 0.4)] + [(7, 0.6)] * 4)


def flicker_streams() -> tuple[DetectionStream, GroundTruthStream]:
    """One static object at 0.9 for two frames, then 0.32 for three."""
    return _fixture("flicker-static", ("object",), 0, [(0, 0.9)] * 2 + [(0, 0.32)] * 3)
