"""Command-line driver: ``gen``, ``pipeline`` and ``diag`` subcommands.

Exit codes: 0 success / all checks pass, 1 validation failure, 2 I/O
failure, 3 a diagnostic reported FAIL.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import infoflow
from .checkpoint import load_params
from .featureio import FeatureFileError, read_features, write_features
from .features import CED_LAYERS
from .fusion import QFormerParams, qformer_length
from .pipeline import ConfigError, PipelineConfig, generate_inputs, init_params, run_pipeline

log = logging.getLogger("evafuse")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_FAIL = 0, 1, 2, 3
LAYER_FILES = {lid: f"ced_layer{lid:02d}.evaf" for lid in CED_LAYERS}
WHISPER_FILE, TOKEN_FILE, MANIFEST = "whisper.evaf", "tokens.evaf", "manifest.json"
DEFAULT_LENGTHS = (1, 8, 100, 750)


class IOFailure(Exception):
    pass


def _setup_logging():
    level = os.environ.get("EVA_LOG_LEVEL", "info").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "INFO"
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _parse_mask(text: str) -> list[int]:
    try:
        bits = [int(b) for b in text.split(",")]
    except ValueError:
        raise ConfigError(f"bad --band-mask {text!r}") from None
    if len(bits) != 4 or any(b not in (0, 1) for b in bits):
        raise ConfigError("--band-mask needs four comma-separated 0/1 values")
    return bits


def build_config(args, base: dict | None = None) -> PipelineConfig:
    """Defaults < ``base`` < --config file < command-line flags."""
    obj = dict(base or {})
    if getattr(args, "config", None):
        obj.update(_read_json(args.config))
    overrides = {
        "seed": getattr(args, "seed", None),
        "duration_s": getattr(args, "duration", None),
        "alpha": getattr(args, "alpha", None),
        "params_path": getattr(args, "params", None),
    }
    obj.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "band_mask", None):
        obj["band_mask"] = _parse_mask(args.band_mask)
    if getattr(args, "mask_ced", False):
        obj["mask_ced"] = True
    return PipelineConfig.from_dict(obj)


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {out}: {exc}") from None
    return out


def cmd_gen(args) -> int:
    cfg = build_config(args)
    out = _out_dir(args)
    layers, e_w, e_tok = generate_inputs(cfg)
    files = {}
    for lid, name in LAYER_FILES.items():
        write_features(out / name, layers[lid])
        files[name] = _sha256(out / name)
    for name, seq in ((WHISPER_FILE, e_w), (TOKEN_FILE, e_tok)):
        write_features(out / name, seq)
        files[name] = _sha256(out / name)
    _write_json(out / MANIFEST, {
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "files": files,
    })
    log.info("wrote %d feature files to %s (T_c=%d, T_w=%d)", len(files), out, layers[12].T, e_w.T)
    return EXIT_OK


def _load_inputs(in_dir: Path):
    try:
        layers = {lid: read_features(in_dir / name) for lid, name in LAYER_FILES.items()}
        e_w = read_features(in_dir / WHISPER_FILE)
        e_tok = read_features(in_dir / TOKEN_FILE)
    except OSError as exc:
        raise IOFailure(f"missing or unreadable input: {exc}") from None
    return layers, e_w, e_tok


def cmd_pipeline(args) -> int:
    in_dir = Path(args.in_dir)
    manifest = in_dir / MANIFEST
    base = _read_json(manifest)["config"] if manifest.exists() else None
    cfg = build_config(args, base)
    layers, e_w, e_tok = _load_inputs(in_dir)

    dims = {"d_ced": layers[12].D, "d_whisper": e_w.D, "d_llm": e_tok.D}
    for key, val in dims.items():
        if getattr(cfg, key) != val:
            raise ConfigError(f"input files have {key}={val}, config says {getattr(cfg, key)}")
    if cfg.params_path:
        agg, fus = load_params(cfg.params_path, expect={"d_ced": cfg.d_ced, "d_whisper": cfg.d_whisper, "d_llm": cfg.d_llm})
        if args.alpha is not None:
            fus = type(fus)(fus.proj_w, fus.proj_c, cfg.alpha)
    else:
        agg, fus = init_params(cfg)

    mask = diag.BandMask(tuple(cfg.band_mask))
    layers = {lid: diag.band_mask_apply(m, mask) for lid, m in layers.items()}
    res = run_pipeline(layers, e_w, e_tok, agg, fus, mask_ced=cfg.mask_ced, interp=cfg.interp_config())

    out = _out_dir(args)
    write_features(out / "fused.evaf", res.fused)
    summary = {
        "lengths": {"T_c": res.h_agg.T, "T_w": e_w.T, "T_tok": e_tok.T, "fused_T": res.fused.T},
        "alpha": fus.alpha,
        "mask_ced": cfg.mask_ced,
        "band_mask": mask.bits(),
        "checksums": {
            "fused.evaf": _sha256(out / "fused.evaf"),
            "h_agg": hashlib.sha256(res.h_agg.data.tobytes()).hexdigest(),
        },
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
    }
    _write_json(out / "pipeline_summary.json", summary)
    log.info("fused T=%d (T_c=%d, T_w=%d)", res.fused.T, res.h_agg.T, e_w.T)
    return EXIT_OK


def _diag_bands(args, cfg):
    study = diag.band_ablation_study(cfg, n_scenes=args.trials or 10)
    text = diag.format_table(study["configs"], ["name", "keep_mask", "mean_detection"])
    text += (
        f"\nfull band best: {study['full_is_best']}"
        f"\nmasking own band lowers score: {study['own_band_masking_lowers_score']}"
    )
    return study, text, study["pass"]


def _diag_length(args, cfg):
    window, queries = args.window or 8, args.queries or 1
    lengths = [int(t) for t in args.lengths.split(",")] if args.lengths else list(DEFAULT_LENGTHS)
    qf = QFormerParams.init(np.random.default_rng(cfg.seed), 8, window, queries)
    rows = diag.sequence_length_report(lengths, qf, cfg.seed)
    for r in rows:
        r["pass"] = r["fused_length"] == r["T"] and r["qformer_length"] == qformer_length(r["T"], window, queries)
        r["summary"] = f"{r['T']} → {r['qformer_length']}"
    text = diag.format_table(rows, ["T", "fused_length", "qformer_length", "ratio", "summary", "pass"])
    report = {"window": window, "queries": queries, "rows": rows, "seed": cfg.seed}
    return report, text, all(r["pass"] for r in rows)


def _diag_grad(args, cfg):
    rows = diag.gradient_report(cfg, max_coords=args.max_coords)
    text = diag.format_table(rows, ["group", "coords", "max_rel_err", "pass"])
    return {"rows": rows, "tolerance": diag.GRAD_TOL, "seed": cfg.seed}, text, all(r["pass"] for r in rows)


def _diag_dpi(args, cfg):
    n = args.trials or 200
    dpi = infoflow.random_dpi_trials(n, cfg.seed)
    chain = infoflow.random_chain_rule_trials(n, cfg.seed)
    stoch = infoflow.random_stochastic_trials(max(1, n // 2), cfg.seed)
    rows = [
        {"check": "dpi_chain", "held": sum(r.holds for r in dpi), "trials": len(dpi)},
        {"check": "chain_rule", "held": sum(r.residual <= 1e-10 and r.monotone for r in chain),
         "trials": len(chain), "max_residual": max(r.residual for r in chain)},
        {"check": "stochastic_decoding", "held": sum(r.holds for r in stoch), "trials": len(stoch)},
    ]
    for r in rows:
        r["pass"] = r["held"] == r["trials"]
        r["result"] = f"{r['held']}/{r['trials']} hold"
    text = diag.format_table(rows, ["check", "result", "pass"])
    return {"rows": rows, "seed": cfg.seed}, text, all(r["pass"] for r in rows)


DIAG_KINDS = {"bands": _diag_bands, "length": _diag_length, "grad": _diag_grad, "dpi": _diag_dpi}


def cmd_diag(args) -> int:
    cfg = build_config(args)
    report, text, ok = DIAG_KINDS[args.kind](args, cfg)
    report["pass"] = ok
    out = _out_dir(args)
    _write_json(out / f"diag_{args.kind}.json", report)
    (out / f"diag_{args.kind}.txt").write_text(text + "\n")
    print(text)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evafuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--duration", type=float, help="clip duration in seconds")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")

    p = sub.add_parser("gen", help="generate synthetic feature files")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("pipeline", help="aggregate, align and fuse a generated input set")
    common(p)
    p.add_argument("--in", dest="in_dir", metavar="DIR", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--band-mask", metavar="a,b,c,d")
    p.add_argument("--mask-ced", action="store_true", help="drop the CED branch entirely")
    p.add_argument("--params", metavar="PATH", help="JSON parameter checkpoint")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("diag", help="run a diagnostic report")
    p.add_argument("kind", choices=sorted(DIAG_KINDS))
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--queries", type=int)
    p.add_argument("--lengths", metavar="T1,T2,...")
    p.add_argument("--max-coords", type=int, default=16,
                   help="finite-difference coordinates sampled per parameter (grad)")
    p.set_defaults(func=cmd_diag)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors; 2 is reserved for I/O here
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except IOFailure as exc:
        log.error("%s", exc)
        return EXIT_IO
    except FeatureFileError as exc:
        log.error("bad feature file: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
