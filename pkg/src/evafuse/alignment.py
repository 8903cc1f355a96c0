"""Resampling of the aggregated CED sequence onto the Whisper timeline.

Linear interpolation between the two CED neighbours of each target
timestamp, where each neighbour is weighted by the fraction of its window
that covers real (non-padded) audio and the result is renormalised by the
total weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

INTERP_EPS = 1e-8


@dataclass(frozen=True)
class InterpConfig:
    eps: float = INTERP_EPS
    search_side: str = "left"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.search_side != "left":
            raise ValueError("only left-insertion search is supported")


def whisper_centers(T_w: int, step_mel: int = 8, center_mel: int = 4) -> np.ndarray:
    """Mel-frame center of each Whisper token: ``k * step_mel + center_mel``."""
    if T_w < 0:
        raise ValueError("T_w must be non-negative")
    return np.arange(T_w, dtype=np.float64) * step_mel + center_mel


def coverage_weights(starts, ends, t_sz: int, T_mel: int) -> np.ndarray:
    """Fraction of each window ``[start, end]`` inside valid audio ``[0, T_mel-1]``."""
    if t_sz <= 0:
        raise ValueError("window size t_sz must be positive")
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    if starts.shape != ends.shape:
        raise ValueError("starts and ends must have the same shape")
    if np.any(ends < starts):
        raise ValueError("window ends must not precede starts")
    valid = np.minimum(ends, T_mel - 1) - starts + 1
    return np.maximum(0.0, valid) / t_sz


@dataclass(frozen=True)
class InterpPlan:
    """Neighbour indices and mixing coefficients: ``out[k] = a[k] x[left[k]] + b[k] x[right[k]]``."""

    left: np.ndarray
    right: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.a[:, None] * x[self.left] + self.b[:, None] * x[self.right]

    def apply_transpose(self, d_out: np.ndarray, n_source: int) -> np.ndarray:
        d_x = np.zeros((n_source, d_out.shape[1]))
        np.add.at(d_x, self.left, self.a[:, None] * d_out)
        np.add.at(d_x, self.right, self.b[:, None] * d_out)
        return d_x


def _check_monotone(t: np.ndarray, name: str):
    if t.ndim != 1 or not np.all(np.isfinite(t)):
        raise ValueError(f"{name} must be a finite 1-D array")
    if np.any(np.diff(t) < 0):
        raise ValueError(f"{name} must be monotone non-decreasing")


def interp_plan(
    source_centers, coverage, target_centers, cfg: InterpConfig = InterpConfig()
) -> InterpPlan:
    t_c = np.asarray(source_centers, dtype=np.float64)
    c = np.asarray(coverage, dtype=np.float64)
    t_w = np.asarray(target_centers, dtype=np.float64)
    _check_monotone(t_c, "source timeline")
    _check_monotone(t_w, "target timeline")
    if c.shape != t_c.shape:
        raise ValueError("coverage length must match source timeline")
    if np.any((c < 0) | (c > 1)):
        raise ValueError("coverage must lie in [0, 1]")
    T_c, T_w = len(t_c), len(t_w)
    if T_c == 0:
        raise ValueError("cannot interpolate an empty sequence")

    if T_c == 1:
        zeros = np.zeros(T_w, dtype=np.intp)
        return InterpPlan(zeros, zeros, np.ones(T_w), np.zeros(T_w))

    r = np.clip(np.searchsorted(t_c, t_w, side="left"), 1, T_c - 1)
    l = r - 1
    alpha = (t_w - t_c[l]) / (t_c[r] - t_c[l] + cfg.eps)
    alpha = np.clip(alpha, 0.0, 1.0)
    w_l = (1.0 - alpha) * c[l]
    w_r = alpha * c[r]
    den = w_l + w_r + cfg.eps
    return InterpPlan(l, r, w_l / den, w_r / den)


def time_aware_interpolate(h_agg, target_centers, cfg: InterpConfig = InterpConfig()):
    """Resample ``h_agg`` (a TemporalSequence with a timeline) onto ``target_centers``.

    Returns a TemporalSequence on the target timeline with unit coverage.
    A single-step source is repeated to the target length.
    """
    from .features import TemporalSequence, TimelineSpec

    if h_agg.timeline is None:
        raise ValueError("source sequence has no timeline")
    plan = interp_plan(h_agg.timeline.centers, h_agg.timeline.coverage, target_centers, cfg)
    if h_agg.T == 1:
        out = np.repeat(h_agg.data, len(plan.left), axis=0)
    else:
        out = plan.apply(h_agg.data)
    return TemporalSequence(out, TimelineSpec.uniform(target_centers))
