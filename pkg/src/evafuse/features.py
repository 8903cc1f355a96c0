"""Feature containers, stride geometry and seeded synthetic encoder stand-ins.

Timestamps are in mel frames (10 ms each). Generated values are rounded
through float32 so that in-memory arrays equal what a feature file stores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NUM_BANDS = 4
LAYER_SHALLOW, LAYER_MIDDLE, LAYER_FINAL = 4, 8, 12
CED_LAYERS = (LAYER_SHALLOW, LAYER_MIDDLE, LAYER_FINAL)


@dataclass(frozen=True)
class StrideConfig:
    whisper_stride_ms: int = 80
    ced_stride_ms: int = 160
    step_mel: int = 8
    center_mel: int = 4
    mel_frame_ms: int = 10
    # CED window geometry in mel frames
    ced_window: int = 16
    ced_hop: int = 16

    def __post_init__(self):
        if self.ced_stride_ms != 2 * self.whisper_stride_ms:
            raise ValueError("CED stride must be twice the Whisper stride")
        if self.step_mel * self.mel_frame_ms != self.whisper_stride_ms:
            raise ValueError("step_mel * mel_frame_ms must equal the Whisper stride")
        if self.ced_window < 1 or self.ced_hop < 1:
            raise ValueError("CED window and hop must be positive")


@dataclass(frozen=True)
class TimelineSpec:
    centers: np.ndarray
    coverage: np.ndarray
    unit: str = "mel-frame"

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        coverage = np.asarray(self.coverage, dtype=np.float64)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "coverage", coverage)
        if centers.ndim != 1 or centers.shape != coverage.shape:
            raise ValueError("centers and coverage must be 1-D with equal length")
        if not np.all(np.isfinite(centers)):
            raise ValueError("timeline centers must be finite")
        if np.any(np.diff(centers) < 0):
            raise ValueError("timeline centers must be monotone non-decreasing")
        if np.any((coverage < 0) | (coverage > 1)) or not np.all(np.isfinite(coverage)):
            raise ValueError("coverage entries must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.centers)

    @classmethod
    def uniform(cls, centers) -> "TimelineSpec":
        centers = np.asarray(centers, dtype=np.float64)
        return cls(centers, np.ones_like(centers))


def _check_timeline(timeline: Optional[TimelineSpec], t: int):
    if timeline is not None and len(timeline) != t:
        raise ValueError(f"timeline length {len(timeline)} != T={t}")


@dataclass(frozen=True)
class TemporalSequence:
    data: np.ndarray  # (T, D)
    timeline: Optional[TimelineSpec] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise ValueError(f"TemporalSequence data must be (T, D), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("TemporalSequence contains non-finite values")
        _check_timeline(self.timeline, data.shape[0])

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.T


@dataclass(frozen=True)
class BandedFeatureMap:
    data: np.ndarray  # (T, F, D)
    layer_id: int = 0
    timeline: Optional[TimelineSpec] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise ValueError(f"BandedFeatureMap data must be (T, F, D), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("BandedFeatureMap contains non-finite values")
        if not 0 <= self.layer_id <= 255:
            raise ValueError("layer_id must fit in a byte")
        _check_timeline(self.timeline, data.shape[0])

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def F(self) -> int:
        return self.data.shape[1]

    @property
    def D(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PlantedEvent:
    band_index: int
    center_time: float  # mel frames
    width: float  # gaussian sigma, mel frames
    amplitude: float
    signature: np.ndarray = field(repr=False)

    def __post_init__(self):
        sig = np.asarray(self.signature, dtype=np.float64)
        object.__setattr__(self, "signature", sig)
        if not 0 <= self.band_index < NUM_BANDS:
            raise ValueError(f"band_index must be in [0, {NUM_BANDS})")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not self.width > 0:
            raise ValueError("width must be positive")
        if sig.ndim != 1 or abs(np.linalg.norm(sig) - 1.0) > 1e-9:
            raise ValueError("signature must be a unit-norm vector")


def random_signature(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _f32(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(np.float64)


def _smooth_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Gaussian noise low-passed by a 3-step moving average along axis 0."""
    noise = rng.normal(size=shape)
    padded = np.concatenate([noise[:1], noise, noise[-1:]], axis=0)
    return (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0


def ced_windows(n_windows: int, stride: StrideConfig):
    starts = np.arange(n_windows) * stride.ced_hop
    ends = starts + stride.ced_window - 1
    return starts, ends


def ced_timeline(duration_s: float, stride: StrideConfig = StrideConfig()) -> TimelineSpec:
    from .alignment import coverage_weights

    n = int(np.floor(duration_s * 1000 / stride.ced_stride_ms + 1e-9))
    t_mel = int(np.floor(duration_s * 1000 / stride.mel_frame_ms + 1e-9))
    starts, ends = ced_windows(n, stride)
    centers = (starts + ends) / 2.0
    cov = coverage_weights(starts, ends, stride.ced_window, t_mel)
    return TimelineSpec(centers, np.clip(cov, 0.0, 1.0))


def synth_ced_features(
    seed: int,
    duration_s: float,
    D: int,
    events: Sequence[PlantedEvent] = (),
    stride: StrideConfig = StrideConfig(),
    layer_noise: float = 0.25,
) -> tuple[dict[int, BandedFeatureMap], TimelineSpec]:
    """Generate banded feature maps for layers 4, 8 and 12.

    Each layer is a shared smooth base field plus a layer-specific
    perturbation, plus every planted event as a time-gaussian rank-1 bump
    confined to its band. Returns ``({layer_id: map}, timeline)``.
    """
    if not duration_s > 0 or D < 1:
        raise ValueError("duration_s must be positive and D >= 1")
    timeline = ced_timeline(duration_s, stride)
    T = len(timeline)
    if T < 1:
        raise ValueError(
            f"duration {duration_s}s is shorter than one {stride.ced_stride_ms} ms window"
        )
    for ev in events:
        if len(ev.signature) != D:
            raise ValueError("event signature length must equal D")

    ss = np.random.SeedSequence([seed, 0xCED])
    base_seq, *layer_seqs = ss.spawn(1 + len(CED_LAYERS))
    base = _smooth_noise(np.random.default_rng(base_seq), (T, NUM_BANDS, D))

    bumps = np.zeros((T, NUM_BANDS, D))
    for ev in events:
        profile = np.exp(-0.5 * ((timeline.centers - ev.center_time) / ev.width) ** 2)
        bumps[:, ev.band_index, :] += ev.amplitude * profile[:, None] * ev.signature

    maps = {}
    for layer_id, lseq in zip(CED_LAYERS, layer_seqs):
        pert = layer_noise * _smooth_noise(np.random.default_rng(lseq), (T, NUM_BANDS, D))
        maps[layer_id] = BandedFeatureMap(_f32(base + pert + bumps), layer_id, timeline)
    return maps, timeline


def synth_whisper_features(
    seed: int,
    duration_s: float,
    D_w: int,
    D_tok: Optional[int] = None,
    stride: StrideConfig = StrideConfig(),
) -> tuple[TemporalSequence, TemporalSequence]:
    """Whisper-like features ``E_W`` and token embeddings ``E_tok`` on the 80 ms grid."""
    from .alignment import whisper_centers

    if not duration_s > 0:
        raise ValueError("duration_s must be positive")
    D_tok = D_w if D_tok is None else D_tok
    T_w = int(np.floor(duration_s * 1000 / stride.whisper_stride_ms + 1e-9))
    timeline = TimelineSpec.uniform(whisper_centers(T_w, stride.step_mel, stride.center_mel))
    ss = np.random.SeedSequence([seed, 0x3A1])
    w_seq, tok_seq = ss.spawn(2)
    e_w = _smooth_noise(np.random.default_rng(w_seq), (T_w, D_w)) if T_w else np.zeros((0, D_w))
    e_tok = np.random.default_rng(tok_seq).normal(0.0, 0.5, size=(T_w, D_tok))
    return (
        TemporalSequence(_f32(e_w), timeline),
        TemporalSequence(_f32(e_tok), timeline),
    )
