"""JSON parameter checkpoints: named flat arrays plus shape metadata.

::

    {"version": 1,
     "config": {"d_ced": .., "d_whisper": .., "d_llm": .., "num_heads": ..},
     "arrays": {"name": {"shape": [...], "data": [...]}, ...}}
"""

from __future__ import annotations

import json

import numpy as np

from .aggregator import AggregatorParams, GateParams
from .features import CED_LAYERS
from .fusion import FusionParams
from .numerics import Affine, AttentionParams, NormParams

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _flatten(agg: AggregatorParams, fus: FusionParams) -> dict[str, np.ndarray]:
    arrays = {}
    for lid in CED_LAYERS:
        arrays[f"gate_{lid}.weight"] = agg.gates[lid].weight
        arrays[f"gate_{lid}.bias"] = np.array(agg.gates[lid].bias)
    for stage, attn, norm in (
        (1, agg.attn_stage1, agg.norm_stage1),
        (2, agg.attn_stage2, agg.norm_stage2),
    ):
        for m in ("w_q", "w_k", "w_v", "w_o"):
            arrays[f"attn{stage}.{m}"] = getattr(attn, m)
        arrays[f"norm{stage}.scale"] = norm.scale
        arrays[f"norm{stage}.shift"] = norm.shift
    for name, proj in (("proj_w", fus.proj_w), ("proj_c", fus.proj_c)):
        arrays[f"{name}.weight"] = proj.weight
        arrays[f"{name}.bias"] = proj.bias
    arrays["alpha"] = np.array(fus.alpha)
    return arrays


def _expected_shapes(cfg: dict) -> dict[str, tuple]:
    dc, dw, dl = cfg["d_ced"], cfg["d_whisper"], cfg["d_llm"]
    shapes = {}
    for lid in CED_LAYERS:
        shapes[f"gate_{lid}.weight"] = (dc,)
        shapes[f"gate_{lid}.bias"] = ()
    for stage in (1, 2):
        for m in ("w_q", "w_k", "w_v", "w_o"):
            shapes[f"attn{stage}.{m}"] = (dc, dc)
        shapes[f"norm{stage}.scale"] = (dc,)
        shapes[f"norm{stage}.shift"] = (dc,)
    shapes.update({
        "proj_w.weight": (dw, dl), "proj_w.bias": (dl,),
        "proj_c.weight": (dc, dl), "proj_c.bias": (dl,),
        "alpha": (),
    })
    return shapes


def params_to_dict(agg: AggregatorParams, fus: FusionParams) -> dict:
    cfg = {
        "d_ced": agg.dim,
        "d_whisper": fus.proj_w.in_dim,
        "d_llm": fus.proj_w.out_dim,
        "num_heads": agg.attn_stage1.num_heads,
        "norm_eps": agg.norm_stage1.eps,
    }
    arrays = {
        k: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=float).ravel().tolist()}
        for k, v in _flatten(agg, fus).items()
    }
    return {"version": CHECKPOINT_VERSION, "config": cfg, "arrays": arrays}


def params_from_dict(obj: dict, expect: dict | None = None):
    """Rebuild ``(AggregatorParams, FusionParams)``; ``expect`` pins config keys."""
    if obj.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {obj.get('version')!r}")
    cfg = obj["config"]
    for key, val in (expect or {}).items():
        if cfg.get(key) != val:
            raise CheckpointError(f"checkpoint {key}={cfg.get(key)} but config wants {val}")
    shapes = _expected_shapes(cfg)
    raw = obj["arrays"]
    missing = set(shapes) - set(raw)
    if missing:
        raise CheckpointError(f"checkpoint missing arrays: {sorted(missing)}")
    a = {}
    for name, shape in shapes.items():
        entry = raw[name]
        if tuple(entry["shape"]) != shape:
            raise CheckpointError(f"{name}: shape {entry['shape']} != expected {list(shape)}")
        arr = np.asarray(entry["data"], dtype=np.float64)
        if arr.size != int(np.prod(shape)):
            raise CheckpointError(f"{name}: {arr.size} values for shape {list(shape)}")
        a[name] = arr.reshape(shape)

    heads = cfg["num_heads"]
    eps = cfg.get("norm_eps", 1e-5)
    agg = AggregatorParams(
        {lid: GateParams(a[f"gate_{lid}.weight"], float(a[f"gate_{lid}.bias"])) for lid in CED_LAYERS},
        AttentionParams(heads, *(a[f"attn1.{m}"] for m in ("w_q", "w_k", "w_v", "w_o"))),
        AttentionParams(heads, *(a[f"attn2.{m}"] for m in ("w_q", "w_k", "w_v", "w_o"))),
        NormParams(a["norm1.scale"], a["norm1.shift"], eps),
        NormParams(a["norm2.scale"], a["norm2.shift"], eps),
    )
    fus = FusionParams(
        Affine(a["proj_w.weight"], a["proj_w.bias"]),
        Affine(a["proj_c.weight"], a["proj_c.bias"]),
        float(a["alpha"]),
    )
    return agg, fus


def save_params(path, agg: AggregatorParams, fus: FusionParams) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(agg, fus), fh)


def load_params(path, expect: dict | None = None):
    with open(path) as fh:
        return params_from_dict(json.load(fh), expect)
