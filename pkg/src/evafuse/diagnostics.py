"""Diagnostic protocols: frequency-band masking ablation, fused-vs-Q-Former
sequence lengths, and analytic-vs-numeric gradient checks."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .features import (
    NUM_BANDS,
    BandedFeatureMap,
    PlantedEvent,
    TemporalSequence,
    random_signature,
    synth_ced_features,
    synth_whisper_features,
)
from .fusion import FusionParams, QFormerParams, inject_and_add, qformer_compress
from .numerics import finite_diff_gradient, relative_error
from .pipeline import (
    PARAM_NAMES,
    PipelineConfig,
    fused_loss,
    get_param,
    init_params,
    loss_and_grads,
    run_pipeline,
    set_param,
)

BAND_LABELS = ("0-2kHz", "2-4kHz", "4-6kHz", "6-8kHz")
GRAD_TOL = 1e-4
# strong enough that masking other bands never outscores the full-band input
SCENE_AMPLITUDE = 16.0


@dataclass(frozen=True)
class BandMask:
    keep: tuple

    def __post_init__(self):
        keep = tuple(bool(k) for k in self.keep)
        if len(keep) != NUM_BANDS:
            raise ValueError(f"band mask must have exactly {NUM_BANDS} entries")
        object.__setattr__(self, "keep", keep)

    def __and__(self, other: "BandMask") -> "BandMask":
        return BandMask(tuple(a and b for a, b in zip(self.keep, other.keep)))

    def bits(self) -> list[int]:
        return [int(k) for k in self.keep]


FULL_MASK = BandMask((1, 1, 1, 1))


def band_mask_apply(m: BandedFeatureMap, mask: BandMask) -> BandedFeatureMap:
    """Zero the bands whose keep flag is false; kept bands are copied bit-exactly."""
    if m.F != NUM_BANDS:
        raise ValueError(f"band masking needs F={NUM_BANDS}, map has F={m.F}")
    keep = np.asarray(mask.keep)[None, :, None]
    return BandedFeatureMap(np.where(keep, m.data, 0.0), m.layer_id, m.timeline)


def _ablation_configs():
    cfgs = []
    for b, label in enumerate(BAND_LABELS):
        cfgs.append((f"mask {label}", BandMask(tuple(i != b for i in range(4)))))
    cfgs.append(("mask 0-4kHz", BandMask((0, 0, 1, 1))))
    cfgs.append(("mask 4-8kHz", BandMask((1, 1, 0, 0))))
    for b, label in enumerate(BAND_LABELS):
        cfgs.append((f"only {label}", BandMask(tuple(i == b for i in range(4)))))
    cfgs.append(("full 0-8kHz", FULL_MASK))
    return tuple(cfgs)


ABLATION_CONFIGS = _ablation_configs()


def detection_score(h_agg: np.ndarray, signature: np.ndarray) -> float:
    """Max over time of the cosine between a feature row and the signature."""
    norms = np.linalg.norm(h_agg, axis=1) * np.linalg.norm(signature)
    cos = (h_agg @ signature) / np.maximum(norms, 1e-12)
    return float(cos.max())


def scene_events(seed: int, dim: int, duration_s: float = 8.0, amplitude: float = SCENE_AMPLITUDE,
                 width: float = 16.0) -> list[PlantedEvent]:
    """One event per band at well-separated times, random band order and signatures."""
    rng = np.random.default_rng([seed, 0x5CE])
    t_mel = duration_s * 100.0
    slots = (np.arange(NUM_BANDS) + 0.5) * t_mel / NUM_BANDS
    order = rng.permutation(NUM_BANDS)
    return [
        PlantedEvent(int(band), float(slots[i]), width, amplitude, random_signature(rng, dim))
        for i, band in enumerate(order)
    ]


def run_band_ablation(cfg: PipelineConfig, events: Optional[Sequence[PlantedEvent]] = None,
                      params=None, configs=ABLATION_CONFIGS) -> dict:
    """Evaluate every band-mask configuration on one scene with fixed parameters.

    Returns the report dict ``{"configs": [...], "seed": n}``; each entry has
    the per-event detection scores, a noise floor measured with random probe
    directions, and the fused sequence length.
    """
    events = cfg.planted_events() if events is None else list(events)
    agg, fus = init_params(cfg) if params is None else params
    stride = cfg.stride_config()
    layers, _ = synth_ced_features(cfg.seed, cfg.duration_s, cfg.d_ced, events, stride)
    e_w, e_tok = synth_whisper_features(cfg.seed, cfg.duration_s, cfg.d_whisper, cfg.d_llm, stride)
    probe_rng = np.random.default_rng([cfg.seed, 0x9B0])
    probes = [random_signature(probe_rng, cfg.d_ced) for _ in range(NUM_BANDS)]

    rows = []
    for name, mask in configs:
        masked = {lid: band_mask_apply(m, mask) for lid, m in layers.items()}
        res = run_pipeline(masked, e_w, e_tok, agg, fus, interp=cfg.interp_config())
        h = res.h_agg.data
        rows.append({
            "name": name,
            "keep_mask": mask.bits(),
            "detection": [detection_score(h, ev.signature) for ev in events],
            "noise_floor": float(np.mean([detection_score(h, p) for p in probes])),
            "output_energy": float(np.mean(h ** 2)),
            "fused_length": res.fused.T,
        })
    return {"configs": rows, "seed": cfg.seed}


def band_ablation_study(cfg: PipelineConfig, n_scenes: int = 10, duration_s: float = 8.0,
                        amplitude: float = SCENE_AMPLITUDE) -> dict:
    """Repeat the ablation over seeded scenes (one event per band each) and check
    that full-band input is best on average and that masking an event's own
    band always lowers its score."""
    params = init_params(cfg)
    names = [name for name, _ in ABLATION_CONFIGS]
    index = {name: i for i, name in enumerate(names)}
    full = index["full 0-8kHz"]
    per_scene, scores = [], [[] for _ in names]
    own_band_ok = True
    fused_length = None
    for s in range(n_scenes):
        scene_cfg = dataclasses.replace(cfg, seed=cfg.seed + s, duration_s=duration_s, events=[])
        events = scene_events(scene_cfg.seed, cfg.d_ced, duration_s, amplitude)
        rep = run_band_ablation(scene_cfg, events, params)
        det = np.array([r["detection"] for r in rep["configs"]])  # (configs, events)
        for j, ev in enumerate(events):
            own = det[index[f"mask {BAND_LABELS[ev.band_index]}"], j]
            own_band_ok &= bool(own < det[full, j])
        for i, row in enumerate(det):
            scores[i].extend(row.tolist())
        per_scene.append(det.mean(axis=1))
        fused_length = rep["configs"][full]["fused_length"]
    means = np.mean(per_scene, axis=0)
    full_best = bool(means[full] >= means.max())
    return {
        "configs": [
            {
                "name": name,
                "keep_mask": mask.bits(),
                "detection": scores[i],
                "mean_detection": float(means[i]),
                "fused_length": fused_length,
            }
            for i, (name, mask) in enumerate(ABLATION_CONFIGS)
        ],
        "scenes": n_scenes,
        "seed": cfg.seed,
        "full_is_best": full_best,
        "own_band_masking_lowers_score": own_band_ok,
        "pass": full_best and own_band_ok,
    }


def sequence_length_report(T_list: Sequence[int], qf: QFormerParams, seed: int = 0) -> list[dict]:
    """Fused length vs Q-Former length for each input length, by actually running both."""
    rng = np.random.default_rng(seed)
    d = qf.attn.model_dim
    fus = FusionParams.init(rng, d, d, d)
    rows = []
    for T in T_list:
        if T < 1:
            raise ValueError("sequence lengths must be >= 1")
        x = TemporalSequence(rng.normal(size=(T, d)))
        fused = inject_and_add(x, x, x, np.ones(T, dtype=bool), fus)
        q = qformer_compress(x, qf)
        rows.append({
            "T": T,
            "fused_length": fused.T,
            "qformer_length": q.T,
            "ratio": q.T / fused.T,
        })
    return rows


def _groups():
    groups = {"alpha": ["alpha"]}
    for name in PARAM_NAMES[1:]:
        groups.setdefault(name.split(".")[0], []).append(name)
    return groups


def gradient_report(cfg: PipelineConfig, seed: Optional[int] = None, h: float = 1e-4,
                    tol: float = GRAD_TOL, max_coords: Optional[int] = None,
                    analytic: Callable = loss_and_grads) -> list[dict]:
    """Compare analytic gradients of ``0.5*||E_fused||^2`` with central differences.

    One row per parameter group (alpha, each gate, each projection head).
    ``max_coords`` caps the number of finite-difference coordinates per
    group (sampled with the seed); ``analytic`` may be swapped for a
    deliberately wrong gradient to exercise the FAIL path.
    """
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    from .pipeline import generate_inputs

    layers, e_w, e_tok = generate_inputs(cfg)
    agg, fus = init_params(cfg)
    loss, grads = analytic(layers, e_w, e_tok, agg, fus, None, cfg.interp_config())
    if not np.isfinite(loss):
        raise ValueError("non-finite loss")
    pick = np.random.default_rng([cfg.seed, 0x6AD])

    rows = []
    for group, names in _groups().items():
        worst, count = 0.0, 0
        for name in names:
            theta = get_param(agg, fus, name)
            flat = theta.reshape(-1)
            idx = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                idx = np.sort(pick.choice(flat.size, max_coords, replace=False))

            def f(sub, name=name, flat=flat, idx=idx):
                v = flat.copy()
                v[idx] = sub
                a, fu = set_param(agg, fus, name, v.reshape(theta.shape))
                return fused_loss(run_pipeline(layers, e_w, e_tok, a, fu, interp=cfg.interp_config()).fused)

            numeric = finite_diff_gradient(f, flat[idx], h)
            exact = np.asarray(grads[name]).reshape(-1)[idx]
            worst = max(worst, relative_error(exact, numeric))
            count += idx.size
        rows.append({"group": group, "coords": count, "max_rel_err": worst, "pass": worst <= tol})
    return rows


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    """Render dict rows as an aligned plain-text table."""
    def cell(v):
        if isinstance(v, bool):
            return "PASS" if v else "FAIL"
        if isinstance(v, float):
            return f"{v:.3e}" if v and (abs(v) < 1e-3 or abs(v) >= 1e4) else f"{v:.4f}"
        if isinstance(v, list):
            return ",".join(cell(x) for x in v)
        return str(v)

    body = [[cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
