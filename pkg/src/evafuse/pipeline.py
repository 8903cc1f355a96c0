"""End-to-end forward pass (aggregate -> align -> fuse), run configuration,
and analytic gradients of ``0.5 * ||E_fused||^2`` wrt the trainable parameters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregator import AggregatorParams, GateParams, aggregate_backward, aggregate_forward
from .alignment import InterpConfig, interp_plan, whisper_centers
from .features import (
    CED_LAYERS,
    LAYER_FINAL,
    PlantedEvent,
    StrideConfig,
    TemporalSequence,
    TimelineSpec,
    random_signature,
    synth_ced_features,
    synth_whisper_features,
)
from .fusion import ALPHA_INIT, FusionParams, inject_and_add, inject_and_add_backward
from .numerics import Affine

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    duration_s: float = 1.6
    d_ced: int = 64
    d_whisper: int = 64
    d_llm: int = 128
    num_heads: int = 4
    alpha: float = ALPHA_INIT
    interp_eps: float = 1e-8
    events: list = field(default_factory=list)
    band_mask: list = field(default_factory=lambda: [1, 1, 1, 1])
    mask_ced: bool = False
    params_path: Optional[str] = None
    stride: dict = field(default_factory=dict)
    version: int = CONFIG_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be positive")
        for name in ("d_ced", "d_whisper", "d_llm", "num_heads"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_ced % self.num_heads:
            raise ConfigError("d_ced must be divisible by num_heads")
        if not self.interp_eps > 0:
            raise ConfigError("interp_eps must be positive")
        if len(self.band_mask) != 4 or any(b not in (0, 1, True, False) for b in self.band_mask):
            raise ConfigError("band_mask must be four 0/1 values")
        try:
            self.stride_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad stride config: {exc}") from None

    def stride_config(self) -> StrideConfig:
        return StrideConfig(**self.stride)

    def interp_config(self) -> InterpConfig:
        return InterpConfig(eps=self.interp_eps)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def planted_events(self) -> list[PlantedEvent]:
        out = []
        for i, ev in enumerate(self.events):
            ev = dict(ev)
            if "signature" not in ev:
                rng = np.random.default_rng([self.seed, 0xE7, i])
                ev["signature"] = random_signature(rng, self.d_ced)
            try:
                out.append(PlantedEvent(**ev))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"event {i}: {exc}") from None
        return out


def init_params(cfg: PipelineConfig) -> tuple[AggregatorParams, FusionParams]:
    rng = np.random.default_rng([cfg.seed, 0x9A2])
    agg = AggregatorParams.init(rng, cfg.d_ced, cfg.num_heads)
    fus = FusionParams.init(rng, cfg.d_whisper, cfg.d_ced, cfg.d_llm, cfg.alpha)
    return agg, fus


def generate_inputs(cfg: PipelineConfig):
    """Seeded CED layer maps plus Whisper features and token embeddings."""
    stride = cfg.stride_config()
    layers, _ = synth_ced_features(
        cfg.seed, cfg.duration_s, cfg.d_ced, cfg.planted_events(), stride
    )
    e_w, e_tok = synth_whisper_features(cfg.seed, cfg.duration_s, cfg.d_whisper, cfg.d_llm, stride)
    return layers, e_w, e_tok


@dataclass
class PipelineResult:
    h_agg: TemporalSequence
    h_aligned: TemporalSequence
    fused: TemporalSequence


def _target_centers(e_w: TemporalSequence) -> np.ndarray:
    if e_w.timeline is not None:
        return e_w.timeline.centers
    return whisper_centers(e_w.T)


def _prepare(layers, e_w, agg, interp):
    final = layers[LAYER_FINAL]
    if final.timeline is None:
        raise ValueError("final-layer map carries no timeline")
    h_agg, cache = aggregate_forward(layers, agg)
    targets = _target_centers(e_w)
    plan = interp_plan(final.timeline.centers, final.timeline.coverage, targets, interp)
    h_aligned = TemporalSequence(plan.apply(h_agg), TimelineSpec.uniform(targets))
    return TemporalSequence(h_agg, final.timeline), h_aligned, plan, cache


def run_pipeline(
    layers,
    e_w: TemporalSequence,
    e_tok: TemporalSequence,
    agg: AggregatorParams,
    fus: FusionParams,
    mask=None,
    mask_ced: bool = False,
    interp: InterpConfig = InterpConfig(),
) -> PipelineResult:
    """Aggregate CED layers, align onto the Whisper timeline, inject-and-add."""
    h_agg, h_aligned, _, _ = _prepare(layers, e_w, agg, interp)
    mask = np.ones(e_tok.T, dtype=bool) if mask is None else mask
    fused = inject_and_add(e_tok, e_w, None if mask_ced else h_aligned, mask, fus)
    return PipelineResult(h_agg, h_aligned, fused)


def fused_loss(fused: TemporalSequence) -> float:
    return 0.5 * float(np.sum(fused.data ** 2))


def loss_and_grads(layers, e_w, e_tok, agg, fus, mask=None, interp=InterpConfig()):
    """Return ``(loss, grads)`` with grads keyed like :data:`PARAM_NAMES`."""
    h_agg, h_aligned, plan, cache = _prepare(layers, e_w, agg, interp)
    mask = np.ones(e_tok.T, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    fused = inject_and_add(e_tok, e_w, h_aligned, mask, fus)
    d_fused = fused.data
    fg = inject_and_add_backward(e_w, h_aligned, mask, fus, d_fused)
    d_h_agg = plan.apply_transpose(fg.pop("h_aligned"), h_agg.T)
    grads = dict(fg)
    for lid, (d_w, d_b) in aggregate_backward(cache, agg, d_h_agg).items():
        grads[f"gate_{lid}.weight"] = d_w
        grads[f"gate_{lid}.bias"] = d_b
    return fused_loss(fused), grads


PARAM_NAMES = (
    "alpha",
    *(f"gate_{lid}.{part}" for lid in CED_LAYERS for part in ("weight", "bias")),
    "proj_w.weight",
    "proj_w.bias",
    "proj_c.weight",
    "proj_c.bias",
)


def get_param(agg: AggregatorParams, fus: FusionParams, name: str) -> np.ndarray:
    if name == "alpha":
        return np.array(fus.alpha)
    head, part = name.split(".")
    if head.startswith("gate_"):
        return np.array(getattr(agg.gates[int(head[5:])], part))
    return np.array(getattr(getattr(fus, head), part))


def set_param(agg: AggregatorParams, fus: FusionParams, name: str, value):
    """Return ``(agg, fus)`` copies with parameter ``name`` replaced."""
    value = np.asarray(value, dtype=np.float64)
    if name == "alpha":
        return agg, dataclasses.replace(fus, alpha=float(value))
    head, part = name.split(".")
    if head.startswith("gate_"):
        lid = int(head[5:])
        gate = agg.gates[lid]
        gate = GateParams(value, gate.bias) if part == "weight" else GateParams(gate.weight, float(value))
        return dataclasses.replace(agg, gates={**agg.gates, lid: gate}), fus
    proj = getattr(fus, head)
    proj = Affine(value, proj.bias) if part == "weight" else Affine(proj.weight, value)
    return agg, dataclasses.replace(fus, **{head: proj})
