"""Length-preserving inject-and-add fusion and a window-level Q-Former baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import TemporalSequence, TimelineSpec
from .numerics import Affine, AttentionParams, affine, cross_attention

SQRT2 = math.sqrt(2.0)
ALPHA_INIT = 0.01


@dataclass(frozen=True)
class FusionParams:
    proj_w: Affine
    proj_c: Affine
    alpha: float = ALPHA_INIT

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if self.proj_w.out_dim != self.proj_c.out_dim:
            raise ValueError("projection heads must map to the same output dim")

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        d_whisper: int,
        d_ced: int,
        d_llm: int,
        alpha: float = ALPHA_INIT,
    ) -> "FusionParams":
        return cls(Affine.init(rng, d_whisper, d_llm), Affine.init(rng, d_ced, d_llm), alpha)


def audio_mask(bits) -> np.ndarray:
    return np.asarray(bits, dtype=bool).reshape(-1)


def inject_and_add(
    e_tok: TemporalSequence,
    e_w: TemporalSequence,
    h_aligned: Optional[TemporalSequence],
    mask,
    p: FusionParams,
) -> TemporalSequence:
    """Fuse audio evidence into the token stream without changing its length.

    Masked positions get ``(E_tok + Proj_W(E_W)) * sqrt(2) + alpha * Proj_C(H_aligned)``;
    the rest keep ``E_tok`` unchanged. Passing ``h_aligned=None`` drops the
    CED term entirely (the masked-CED ablation).
    """
    mask = audio_mask(mask)
    lengths = {e_tok.T, e_w.T, len(mask)}
    if h_aligned is not None:
        lengths.add(h_aligned.T)
    if len(lengths) != 1:
        raise ValueError(f"length mismatch among fusion inputs: {sorted(lengths)}")

    out = e_tok.data.copy()
    audio = (e_tok.data[mask] + affine(e_w.data[mask], p.proj_w)) * SQRT2
    if h_aligned is not None:
        audio = audio + p.alpha * affine(h_aligned.data[mask], p.proj_c)
    out[mask] = audio
    return TemporalSequence(out, e_tok.timeline)


def inject_and_add_backward(e_w, h_aligned, mask, p: FusionParams, d_out: np.ndarray):
    """Gradients of a scalar loss given ``d_out`` = d loss / d E_fused.

    Returns a dict with ``alpha``, ``proj_w.weight``, ``proj_w.bias``,
    ``proj_c.weight``, ``proj_c.bias`` and ``h_aligned`` entries.
    """
    mask = audio_mask(mask)
    d = d_out[mask]
    xw = e_w.data[mask]
    xc = h_aligned.data[mask]
    d_h = np.zeros_like(h_aligned.data)
    d_h[mask] = p.alpha * d @ p.proj_c.weight.T
    return {
        "alpha": float(np.sum(d * affine(xc, p.proj_c))),
        "proj_w.weight": SQRT2 * xw.T @ d,
        "proj_w.bias": SQRT2 * d.sum(axis=0),
        "proj_c.weight": p.alpha * xc.T @ d,
        "proj_c.bias": p.alpha * d.sum(axis=0),
        "h_aligned": d_h,
    }


@dataclass(frozen=True)
class QFormerParams:
    window: int
    queries: np.ndarray  # (num_queries, D)
    attn: AttentionParams

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.queries.ndim != 2 or self.queries.shape[0] < 1:
            raise ValueError("query bank must be a non-empty (num_queries, D) matrix")
        if self.num_queries >= self.window:
            raise ValueError("num_queries must be smaller than the window")
        if self.queries.shape[1] != self.attn.model_dim:
            raise ValueError("query dim must equal attention model_dim")

    @property
    def num_queries(self) -> int:
        return self.queries.shape[0]

    @classmethod
    def init(
        cls,
        rng: np.random.Generator,
        dim: int,
        window: int = 8,
        num_queries: int = 1,
        num_heads: int = 1,
    ) -> "QFormerParams":
        return cls(
            window,
            rng.normal(size=(num_queries, dim)),
            AttentionParams.init(rng, dim, num_heads),
        )


def qformer_length(T: int, window: int, num_queries: int) -> int:
    return -(-T // window) * num_queries


def qformer_compress(features: TemporalSequence, p: QFormerParams) -> TemporalSequence:
    """Per window, the static query bank cross-attends to that window's features."""
    if features.T < 1:
        raise ValueError("Q-Former needs at least one input step")
    n_win = -(-features.T // p.window)
    rows, centers = [], []
    for w in range(n_win):
        chunk = features.data[w * p.window : (w + 1) * p.window]
        rows.append(cross_attention(p.queries, chunk, chunk, p.attn))
        if features.timeline is not None:
            c = features.timeline.centers[w * p.window : (w + 1) * p.window].mean()
            centers.extend([c] * p.num_queries)
    timeline = TimelineSpec.uniform(centers) if centers else None
    return TemporalSequence(np.concatenate(rows, axis=0), timeline)
