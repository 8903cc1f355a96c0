"""Hierarchical aggregation of CED layers.

Each banded layer map is collapsed over its frequency bands with a
softmax gate, then the final layer queries the middle layer and the result
queries the shallow layer, each stage followed by residual + layer norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .features import CED_LAYERS, LAYER_FINAL, LAYER_MIDDLE, LAYER_SHALLOW, TemporalSequence
from .numerics import (
    AttentionParams,
    NormParams,
    cross_attention,
    cross_attention_backward,
    layer_norm,
    layer_norm_backward,
    softmax_rows,
)


@dataclass(frozen=True)
class GateParams:
    weight: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", float(self.bias))
        if w.ndim != 1 or not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("gate weight must be a finite vector and bias finite")

    @classmethod
    def zeros(cls, dim: int) -> "GateParams":
        return cls(np.zeros(dim), 0.0)

    @classmethod
    def init(cls, rng: np.random.Generator, dim: int, scale: float = 0.02) -> "GateParams":
        return cls(rng.normal(0.0, scale, size=dim), 0.0)


@dataclass(frozen=True)
class AggregatorParams:
    gates: Mapping[int, GateParams]  # keyed by layer id (4, 8, 12)
    attn_stage1: AttentionParams
    attn_stage2: AttentionParams
    norm_stage1: NormParams
    norm_stage2: NormParams

    def __post_init__(self):
        if set(self.gates) != set(CED_LAYERS):
            raise ValueError(f"gates must be keyed by layers {CED_LAYERS}")
        d = self.attn_stage1.model_dim
        dims = {len(g.weight) for g in self.gates.values()}
        dims |= {self.attn_stage2.model_dim, self.norm_stage1.dim, self.norm_stage2.dim}
        if dims != {d}:
            raise ValueError(f"inconsistent aggregator dims {sorted(dims | {d})}")

    @property
    def dim(self) -> int:
        return self.attn_stage1.model_dim

    @classmethod
    def init(
        cls, rng: np.random.Generator, dim: int, num_heads: int = 4
    ) -> "AggregatorParams":
        gates = {layer: GateParams.init(rng, dim) for layer in CED_LAYERS}
        return cls(
            gates,
            AttentionParams.init(rng, dim, num_heads),
            AttentionParams.init(rng, dim, num_heads),
            NormParams.identity(dim),
            NormParams.identity(dim),
        )


def gate_weights(data: np.ndarray, g: GateParams) -> np.ndarray:
    """Per-(t) softmax over bands of ``g.weight . x[t, f] + g.bias``; shape (T, F).

    The scalar bias shifts every band's logit equally, so it is cancelled
    exactly here (as the max-subtraction would) instead of up to rounding;
    its gradient is identically zero.
    """
    if data.shape[-1] != len(g.weight):
        raise ValueError(f"gate dim {len(g.weight)} != feature dim {data.shape[-1]}")
    return softmax_rows(data @ g.weight)


def frequency_gated_pool(m, g: GateParams) -> TemporalSequence:
    w = gate_weights(m.data, g)
    out = np.einsum("tf,tfd->td", w, m.data)
    return TemporalSequence(out, m.timeline)


def frequency_gated_pool_backward(data: np.ndarray, g: GateParams, d_out: np.ndarray):
    """Return ``(d_weight, d_bias)`` for a loss with gradient ``d_out`` wrt the pooled output.

    ``d_bias`` is exactly zero: the bias cancels in the band softmax.
    """
    w = gate_weights(data, g)
    d_w = np.einsum("td,tfd->tf", d_out, data)
    d_logits = w * (d_w - (d_w * w).sum(axis=1, keepdims=True))
    return np.einsum("tf,tfd->d", d_logits, data), 0.0


@dataclass
class FuseCache:
    h_l: np.ndarray
    h_8: np.ndarray
    h_4: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    pre2: np.ndarray
    attn1: object
    attn2: object


def _cascade(h_l, h_8, h_4, p: AggregatorParams):
    for name, arr in (("H_L", h_l), ("H_8", h_8), ("H_4", h_4)):
        if arr.shape[1] != p.dim:
            raise ValueError(f"{name} feature dim {arr.shape[1]} != {p.dim}")
    a1, c1 = cross_attention(h_l, h_8, h_8, p.attn_stage1, return_cache=True)
    pre1 = a1 + h_l
    h1 = layer_norm(pre1, p.norm_stage1)
    a2, c2 = cross_attention(h1, h_4, h_4, p.attn_stage2, return_cache=True)
    pre2 = a2 + h1
    out = layer_norm(pre2, p.norm_stage2)
    return out, FuseCache(h_l, h_8, h_4, pre1, h1, pre2, c1, c2)


def cascaded_fuse(h_l, h_8, h_4, p: AggregatorParams) -> TemporalSequence:
    """``H' = LN(attn(H_L, H_8, H_8) + H_L)``; ``H_agg = LN(attn(H', H_4, H_4) + H')``."""
    out, _ = _cascade(h_l.data, h_8.data, h_4.data, p)
    return TemporalSequence(out, h_l.timeline)


def cascaded_fuse_backward(cache: FuseCache, p: AggregatorParams, d_out: np.ndarray):
    """Gradients wrt the three fused inputs, returned as ``(d_H_L, d_H_8, d_H_4)``."""
    d_pre2 = layer_norm_backward(cache.pre2, p.norm_stage2, d_out)
    d_h1_q, d_h4_k, d_h4_v = cross_attention_backward(cache.attn2, p.attn_stage2, d_pre2)
    d_h1 = d_h1_q + d_pre2
    d_pre1 = layer_norm_backward(cache.pre1, p.norm_stage1, d_h1)
    d_hl_q, d_h8_k, d_h8_v = cross_attention_backward(cache.attn1, p.attn_stage1, d_pre1)
    return d_hl_q + d_pre1, d_h8_k + d_h8_v, d_h4_k + d_h4_v


def _layer_maps(layers):
    try:
        return layers[LAYER_SHALLOW], layers[LAYER_MIDDLE], layers[LAYER_FINAL]
    except KeyError as exc:
        raise ValueError(f"missing CED layer {exc.args[0]}") from None


def aggregate(layers, p: AggregatorParams) -> TemporalSequence:
    """Pool each of layers 4, 8, 12 with its own gate, then cascade-fuse."""
    m4, m8, ml = _layer_maps(layers)
    return cascaded_fuse(
        frequency_gated_pool(ml, p.gates[LAYER_FINAL]),
        frequency_gated_pool(m8, p.gates[LAYER_MIDDLE]),
        frequency_gated_pool(m4, p.gates[LAYER_SHALLOW]),
        p,
    )


@dataclass
class AggregateCache:
    layers: dict
    fuse: FuseCache


def aggregate_forward(layers, p: AggregatorParams):
    """Like :func:`aggregate` but returns ``(H_agg array, cache)`` for backprop."""
    m4, m8, ml = _layer_maps(layers)
    data = {LAYER_SHALLOW: m4.data, LAYER_MIDDLE: m8.data, LAYER_FINAL: ml.data}
    pooled = {
        lid: np.einsum("tf,tfd->td", gate_weights(x, p.gates[lid]), x)
        for lid, x in data.items()
    }
    out, cache = _cascade(pooled[LAYER_FINAL], pooled[LAYER_MIDDLE], pooled[LAYER_SHALLOW], p)
    return out, AggregateCache(data, cache)


def aggregate_backward(cache: AggregateCache, p: AggregatorParams, d_out: np.ndarray):
    """Gate gradients ``{layer_id: (d_weight, d_bias)}`` given d loss / d H_agg."""
    d_l, d_8, d_4 = cascaded_fuse_backward(cache.fuse, p, d_out)
    grads = {}
    for lid, d in ((LAYER_FINAL, d_l), (LAYER_MIDDLE, d_8), (LAYER_SHALLOW, d_4)):
        grads[lid] = frequency_gated_pool_backward(cache.layers[lid], p.gates[lid], d)
    return grads
