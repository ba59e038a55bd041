"""Synthetic execution-time model for individual and merged transcoding tasks.

Every task is decomposed into five phases. Fetch and decode depend only on
the segment, function loading depends on the operation kind, and transform
plus encode depend on the exact operation. Merging runs each phase once per
distinct key it depends on, which is where the saving comes from.

Phase noise is keyed by the same scope (segment, kind, or operation), drawn
from a hash-derived standard normal so results do not depend on call order.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from statistics import NormalDist
from typing import Mapping, Sequence, Union

import numpy as np

from .workload import (
    MAX_DEGREE,
    PARAMETERS,
    InvalidGroupError,
    Kind,
    Operation,
    TranscodeTask,
    VideoMeta,
)

PathLike = Union[str, Path]

DEFAULT_SEED = 2021
_STD_NORMAL = NormalDist()


def _default_multipliers() -> dict[str, float]:
    return {"mpeg4": 2.0, "hevc": 4.0, "vp9": 8.0}


@dataclass(frozen=True)
class OracleConfig:
    vic_shared_fraction: float = 0.52
    codec_time_multiplier: Mapping[str, float] = field(default_factory=_default_multipliers)
    vic_noise_sigma: float = 0.05
    codec_noise_sigma: float = 0.25
    rng_seed: int = DEFAULT_SEED
    # Noise-free VIC task time for a 1 s, 1000 KB segment.
    seconds_per_mb_second: float = 0.5
    # Share of the shared phases spent loading the function is
    # 1 / (1 + (T / load_knee_s) ** load_exponent), T the VIC task time.
    load_knee_s: float = 0.3
    load_exponent: float = 2.0
    fetch_share: float = 0.4      # of fetch + decode
    transform_share: float = 0.4  # of transform + encode

    def __post_init__(self):
        if not 0.0 < self.vic_shared_fraction < 1.0:
            raise ValueError("vic_shared_fraction must lie in (0, 1)")
        mult = {str(k).lower(): float(v) for k, v in dict(self.codec_time_multiplier).items()}
        if set(mult) != set(PARAMETERS[Kind.CODEC]):
            raise ValueError(f"codec_time_multiplier needs keys {PARAMETERS[Kind.CODEC]}")
        if any(v < 1.0 for v in mult.values()):
            raise ValueError("codec multipliers must be >= 1")
        object.__setattr__(self, "codec_time_multiplier", mult)
        if self.vic_noise_sigma < 0 or self.codec_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.seconds_per_mb_second <= 0 or self.load_knee_s <= 0 or self.load_exponent <= 0:
            raise ValueError("time-scale parameters must be positive")
        for name in ("fetch_share", "transform_share"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    def replace(self, **changes) -> "OracleConfig":
        data = asdict(self)
        data.update(changes)
        return OracleConfig(**data)

    def to_flat(self) -> dict[str, float]:
        flat: dict[str, float] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "codec_time_multiplier":
                for codec in PARAMETERS[Kind.CODEC]:
                    flat[f"codec_time_multiplier.{codec}"] = value[codec]
            else:
                flat[f.name] = value
        return flat

    @classmethod
    def from_flat(cls, flat: Mapping[str, object]) -> "OracleConfig":
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, object] = {}
        mult = _default_multipliers()
        for key, value in flat.items():
            if key.startswith("codec_time_multiplier."):
                codec = key.split(".", 1)[1]
                if codec not in mult:
                    raise ValueError(f"unknown codec in config key {key!r}")
                mult[codec] = float(value)
            elif key in known and key != "codec_time_multiplier":
                kwargs[key] = int(value) if key == "rng_seed" else float(value)
            else:
                raise ValueError(f"unknown oracle config key {key!r}")
        return cls(codec_time_multiplier=mult, **kwargs)


def save_config(cfg: OracleConfig, path: PathLike) -> None:
    Path(path).write_text(json.dumps(cfg.to_flat(), indent=2, sort_keys=True) + "\n")


def load_config(path: PathLike) -> OracleConfig:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: oracle config must be a flat JSON object")
    return OracleConfig.from_flat(data)


@dataclass(frozen=True)
class PhaseProfile:
    fetch: float
    decode: float
    load: float
    transform: float
    encode: float

    @property
    def total(self) -> float:
        return self.fetch + self.decode + self.load + self.transform + self.encode

    @property
    def shared(self) -> float:
        return self.fetch + self.decode + self.load


def _std_normal(seed: int, *key) -> float:
    payload = "\x1f".join(str(k) for k in (seed, *key)).encode()
    word = int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")
    return _STD_NORMAL.inv_cdf((word + 0.5) / 2.0**64)


def _noise(sigma: float, seed: int, *key) -> float:
    # Mean-one log-normal factor.
    if sigma == 0.0:
        return 1.0
    return math.exp(sigma * _std_normal(seed, *key) - 0.5 * sigma * sigma)


def base_time(video: VideoMeta, cfg: OracleConfig) -> float:
    """Noise-free VIC task time in seconds."""
    return cfg.seconds_per_mb_second * video.duration * video.size / 1000.0


def load_share(video: VideoMeta, cfg: OracleConfig) -> float:
    t = base_time(video, cfg)
    return 1.0 / (1.0 + (t / cfg.load_knee_s) ** cfg.load_exponent)


def phase_profile(video: VideoMeta, op: Operation, cfg: OracleConfig) -> PhaseProfile:
    t = base_time(video, cfg)
    shared = cfg.vic_shared_fraction * t
    load = load_share(video, cfg) * shared
    fetch_decode = shared - load
    work = (1.0 - cfg.vic_shared_fraction) * t
    is_codec = op.kind is Kind.CODEC
    if is_codec:
        work *= cfg.codec_time_multiplier[op.parameter]
    op_sigma = cfg.codec_noise_sigma if is_codec else cfg.vic_noise_sigma
    seed, seg = cfg.rng_seed, video.segment_id
    vic = cfg.vic_noise_sigma
    return PhaseProfile(
        fetch=cfg.fetch_share * fetch_decode * _noise(vic, seed, seg, "fetch"),
        decode=(1.0 - cfg.fetch_share) * fetch_decode * _noise(vic, seed, seg, "decode"),
        load=load * _noise(vic, seed, seg, "load", op.kind.value),
        transform=cfg.transform_share * work
        * _noise(op_sigma, seed, seg, "transform", op.kind.value, op.parameter),
        encode=(1.0 - cfg.transform_share) * work
        * _noise(op_sigma, seed, seg, "encode", op.kind.value, op.parameter),
    )


def exec_time_individual(video: VideoMeta, op: Operation, cfg: OracleConfig) -> float:
    return phase_profile(video, op, cfg).total


def _check_ops(ops: Sequence[Operation]) -> None:
    if not 1 <= len(ops) <= MAX_DEGREE:
        raise InvalidGroupError(f"a merged task holds 1..{MAX_DEGREE} operations, got {len(ops)}")


def _merged_and_individual(video, ops, cfg) -> tuple[float, float]:
    _check_ops(ops)
    profiles = {op: phase_profile(video, op, cfg) for op in dict.fromkeys(ops)}
    individual = sum(profiles[op].total for op in ops)
    first = next(iter(profiles.values()))
    merged = first.fetch + first.decode
    loaded: set[Kind] = set()
    for op, p in profiles.items():
        if op.kind not in loaded:
            loaded.add(op.kind)
            merged += p.load
        merged += p.transform
        merged += p.encode
    return merged, individual


def exec_time_merged(video: VideoMeta, ops: Sequence[Operation], cfg: OracleConfig) -> float:
    """Time of one merged run of ``ops`` on ``video``.

    Fetch and decode run once for the whole group, function loading once per
    distinct operation kind, transform and encode once per distinct operation.
    A repeated identical operation costs nothing extra.
    """
    return _merged_and_individual(video, ops, cfg)[0]


def merge_saving(video: VideoMeta, ops: Sequence[Operation], cfg: OracleConfig) -> float:
    merged, individual = _merged_and_individual(video, ops, cfg)
    return (individual - merged) / individual


def _group_video(tasks: Sequence[TranscodeTask]) -> VideoMeta:
    if not tasks:
        raise InvalidGroupError("empty group")
    segments = {t.video.segment_id for t in tasks}
    if len(segments) != 1:
        raise InvalidGroupError(f"group spans several segments: {sorted(segments)}")
    return tasks[0].video


def exec_time_group(tasks: Sequence[TranscodeTask], cfg: OracleConfig) -> float:
    return exec_time_merged(_group_video(tasks), [t.operation for t in tasks], cfg)


def group_saving(tasks: Sequence[TranscodeTask], cfg: OracleConfig) -> float:
    return merge_saving(_group_video(tasks), [t.operation for t in tasks], cfg)


# -- dataset synthesis ------------------------------------------------------

# Segment statics follow the standardized format (30 fps, 1280x720); most
# segments are full two-second chunks, the rest are shorter tail chunks.
FULL_SEGMENT_PROB = 0.8
SHORT_DURATION_RANGE = (0.5, 2.0)
SIZE_MEDIAN_KB = 900.0       # per two seconds
SIZE_LOG_SIGMA = 0.35
SIZE_RANGE_KB = (300.0, 2400.0)
LOW_MOTION_PROB = 0.2        # near-static content compresses far smaller
LOW_MOTION_RANGE_KB = (60.0, 300.0)

CASE_CATEGORIES = ("same_kind_vic", "vic_combination", "vic_codec")
_VIC_OPS = [Operation(k, p) for k in (Kind.BITRATE, Kind.FRAMERATE, Kind.RESOLUTION) for p in PARAMETERS[k]]
_CODEC_OPS = [Operation(Kind.CODEC, p) for p in PARAMETERS[Kind.CODEC]]


def synth_video(rng: np.random.Generator, segment_id: str) -> VideoMeta:
    if rng.random() < FULL_SEGMENT_PROB:
        duration = 2.0
    else:
        duration = round(float(rng.uniform(*SHORT_DURATION_RANGE)), 1)
    if rng.random() < LOW_MOTION_PROB:
        lo, hi = LOW_MOTION_RANGE_KB
        size = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    else:
        size = SIZE_MEDIAN_KB * math.exp(SIZE_LOG_SIGMA * rng.standard_normal())
        size = min(max(size, SIZE_RANGE_KB[0]), SIZE_RANGE_KB[1])
    size = round(size * duration / 2.0, 1)
    return VideoMeta(segment_id, duration, max(size, 1.0), 30.0, 1280, 720)


def sample_case(rng: np.random.Generator, category: str, degree: int) -> list[Operation]:
    """Draw ``degree`` distinct operations for one merge case."""
    if category == "same_kind_vic":
        kind = (Kind.BITRATE, Kind.FRAMERATE, Kind.RESOLUTION)[rng.integers(3)]
        params = rng.choice(len(PARAMETERS[kind]), size=degree, replace=False)
        return [Operation(kind, PARAMETERS[kind][i]) for i in sorted(params)]
    if category == "vic_combination":
        while True:
            idx = rng.choice(len(_VIC_OPS), size=degree, replace=False)
            ops = [_VIC_OPS[i] for i in sorted(idx)]
            if len({op.kind for op in ops}) > 1:
                return ops
    if category == "vic_codec":
        codec = _CODEC_OPS[rng.integers(len(_CODEC_OPS))]
        idx = rng.choice(len(_VIC_OPS), size=degree - 1, replace=False)
        return [_VIC_OPS[i] for i in sorted(idx)] + [codec]
    raise ValueError(f"unknown case category {category!r}")


def generate_cases(corpus_size: int, cases_per_video: int, cfg: OracleConfig):
    """Yield (video, ops, category) for every synthesized merge case.

    Categories and degrees 2..5 rotate over a global case counter so any
    prefix of the stream is stratified.
    """
    if corpus_size < 1 or cases_per_video < 1:
        raise ValueError("corpus_size and cases_per_video must be >= 1")
    rng = np.random.default_rng(cfg.rng_seed)
    g = 0
    for v in range(corpus_size):
        video = synth_video(rng, f"seg{v:05d}")
        for _ in range(cases_per_video):
            category = CASE_CATEGORIES[g % len(CASE_CATEGORIES)]
            degree = 2 + (g // len(CASE_CATEGORIES)) % (MAX_DEGREE - 1)
            yield video, sample_case(rng, category, degree), category
            g += 1


def generate_dataset(corpus_size: int, cases_per_video: int, cfg: OracleConfig | None = None):
    from .features import Dataset, encode

    cfg = cfg or OracleConfig()
    rows, targets = [], []
    for video, ops, _ in generate_cases(corpus_size, cases_per_video, cfg):
        rows.append(encode(video, ops).as_tuple())
        targets.append(merge_saving(video, ops, cfg))
    return Dataset(np.array(rows, dtype=float), np.array(targets, dtype=float))
