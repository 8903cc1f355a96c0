"""Dense numerical kernels: row softmax, layer norm, affine maps, multi-head
cross-attention (with hand-derived backward passes) and a central
finite-difference gradient estimator.

All kernels compute in float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

LAYER_NORM_EPS = 1e-5


def _as_finite(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def softmax_rows(m) -> np.ndarray:
    """Softmax along the last axis, with max-subtraction for stability."""
    m = _as_finite(m, "softmax input")
    z = m - m.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class NormParams:
    scale: np.ndarray
    shift: np.ndarray
    eps: float = LAYER_NORM_EPS

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if np.shape(self.scale) != np.shape(self.shift):
            raise ValueError("scale and shift must have the same shape")

    @classmethod
    def identity(cls, dim: int, eps: float = LAYER_NORM_EPS) -> "NormParams":
        return cls(np.ones(dim), np.zeros(dim), eps)

    @property
    def dim(self) -> int:
        return len(self.scale)


def layer_norm(x, p: NormParams) -> np.ndarray:
    """Normalize over the last axis; works for a single vector or a (T, D) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.dim:
        raise ValueError(f"layer_norm: feature dim {x.shape[-1]} != {p.dim}")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return p.scale * (x - mu) / np.sqrt(var + p.eps) + p.shift


def layer_norm_backward(x, p: NormParams, d_out) -> np.ndarray:
    """Gradient of a scalar loss wrt the layer_norm input, given d loss / d output."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + p.eps)
    xhat = (x - mu) * inv
    dxhat = d_out * p.scale
    return inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )


@dataclass(frozen=True)
class Affine:
    """y = x @ weight + bias, weight shaped (in_dim, out_dim)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"inconsistent affine shapes {self.weight.shape} / {self.bias.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def identity(cls, dim: int) -> "Affine":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int) -> "Affine":
        w = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, out_dim))
        return cls(w, np.zeros(out_dim))


def affine(x, p: Affine) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != p.in_dim:
        raise ValueError(f"affine: input dim {x.shape[-1]} != {p.in_dim}")
    return x @ p.weight + p.bias


@dataclass(frozen=True)
class AttentionParams:
    """Multi-head attention weights.

    The per-head query/key/value projections are the column blocks of the
    aggregate ``model_dim x model_dim`` matrices; head ``h`` owns columns
    ``h*d_head:(h+1)*d_head``.
    """

    num_heads: int
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        d = self.w_q.shape[0]
        if self.num_heads < 1 or d % self.num_heads:
            raise ValueError(
                f"model_dim {d} is not divisible by num_heads {self.num_heads}"
            )
        for name in ("w_q", "w_k", "w_v", "w_o"):
            if getattr(self, name).shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}")

    @property
    def model_dim(self) -> int:
        return self.w_q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    @classmethod
    def init(
        cls, rng: np.random.Generator, model_dim: int, num_heads: int = 4
    ) -> "AttentionParams":
        s = 1.0 / np.sqrt(model_dim)
        mats = [rng.normal(0.0, s, size=(model_dim, model_dim)) for _ in range(4)]
        return cls(num_heads, *mats)

    def with_zero_values(self) -> "AttentionParams":
        return AttentionParams(
            self.num_heads, self.w_q, self.w_k, np.zeros_like(self.w_v), self.w_o
        )


@dataclass
class AttentionCache:
    q_in: np.ndarray
    k_in: np.ndarray
    v_in: np.ndarray
    q: np.ndarray  # (H, Tq, dh)
    k: np.ndarray  # (H, Tk, dh)
    v: np.ndarray  # (H, Tk, dh)
    weights: np.ndarray  # (H, Tq, Tk)
    heads: np.ndarray  # (Tq, D) concatenated head outputs


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    t, d = x.shape
    return x.reshape(t, num_heads, d // num_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, t, dh = x.shape
    return x.transpose(1, 0, 2).reshape(t, h * dh)


def cross_attention(q_in, k_in, v_in, p: AttentionParams, return_cache: bool = False):
    """Scaled dot-product multi-head cross-attention, no masking.

    ``q_in`` is (Tq, D); ``k_in`` and ``v_in`` are (Tk, D). Returns a (Tq, D)
    array, plus an :class:`AttentionCache` when ``return_cache`` is set.
    """
    q_in = np.asarray(q_in, dtype=np.float64)
    k_in = np.asarray(k_in, dtype=np.float64)
    v_in = np.asarray(v_in, dtype=np.float64)
    d = p.model_dim
    if k_in.shape[0] != v_in.shape[0]:
        raise ValueError(
            f"key/value length mismatch: {k_in.shape[0]} vs {v_in.shape[0]}"
        )
    for name, arr in (("query", q_in), ("key", k_in), ("value", v_in)):
        if arr.ndim != 2 or arr.shape[1] != d:
            raise ValueError(f"{name} must be (T, {d}), got {arr.shape}")

    h = p.num_heads
    q = _split_heads(q_in @ p.w_q, h)
    k = _split_heads(k_in @ p.w_k, h)
    v = _split_heads(v_in @ p.w_v, h)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(p.head_dim)
    weights = softmax_rows(scores)
    heads = _merge_heads(weights @ v)
    out = heads @ p.w_o
    if return_cache:
        return out, AttentionCache(q_in, k_in, v_in, q, k, v, weights, heads)
    return out


def cross_attention_backward(cache: AttentionCache, p: AttentionParams, d_out):
    """Gradients wrt the query, key and value inputs (weights are held fixed)."""
    d_heads = _split_heads(np.asarray(d_out) @ p.w_o.T, p.num_heads)
    a = cache.weights
    d_a = d_heads @ cache.v.transpose(0, 2, 1)
    d_v = a.transpose(0, 2, 1) @ d_heads
    d_s = a * (d_a - (d_a * a).sum(axis=-1, keepdims=True))
    d_s /= np.sqrt(p.head_dim)
    d_q = d_s @ cache.k
    d_k = d_s.transpose(0, 2, 1) @ cache.q
    return (
        _merge_heads(d_q) @ p.w_q.T,
        _merge_heads(d_k) @ p.w_k.T,
        _merge_heads(d_v) @ p.w_v.T,
    )


def finite_diff_gradient(f: Callable[[np.ndarray], float], theta, h: float = 1e-4):
    """Central-difference gradient of scalar ``f`` at ``theta``."""
    if not h > 0:
        raise ValueError("step h must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty(theta.size)
    flat = theta.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(theta))
        flat[i] = orig - h
        fm = float(f(theta))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2 * h)
    return grad.reshape(theta.shape)


def relative_error(a, b, floor: float = 1e-8) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    den = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / den))
