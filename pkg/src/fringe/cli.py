"""Command-line front end: attribute, evaluate, diagnose.

Inputs and attributions are JSON tensors ({"shape": [...], "data": [...]});
models are JSON documents; heatmaps are written as binary 8-bit PGM.
Reports are deterministic for a fixed manifest and seed: timing fields are
informational and excluded from the determinism hash.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics
from .baselines import SmoothGradConfig, gradient_attribution, smoothgrad
from .driver import FringeConfig, run_fringe, run_ig_reference
from .model import ModelGraph
from .solver import SolveConfig
from .tensor import Tensor

log = logging.getLogger("fringe")

METHODS = ("fringe", "ig", "smoothgrad", "gradient")


def _setup_logging() -> None:
    level = os.environ.get("FRINGE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def build_fringe_config(doc: dict, variant: str = None) -> FringeConfig:
    solve = SolveConfig(
        lam=doc.get("lambda", 1e-6),
        gamma_step=doc.get("gamma_step", 0.0),
        gamma_prior=doc.get("gamma_prior", 0.0),
        max_cg_iters=doc.get("max_cg_iters", 20),
        cg_tol=doc.get("cg_tol", 1e-4),
        preconditioner=doc.get("preconditioner", "diagonal"),
        blur_sigma=doc.get("blur_sigma", 1.0),
    )
    return FringeConfig(
        tau=doc.get("tau", 1e-3),
        eta_max=doc.get("eta_max", 1.0),
        delta_euc=doc.get("delta_euc"),
        solve=solve,
        variant=variant or doc.get("variant", "full"),
        epsilon=doc.get("epsilon", 1e-8),
        score_target=doc.get("score_target", "logit"),
        t_cap=doc.get("t_cap", 512),
    )


def write_pgm(path, values: np.ndarray) -> None:
    """Min-max scaled 8-bit grayscale PGM (binary P5)."""
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-300:
        scaled = np.zeros_like(values)
    else:
        scaled = (values - lo) / (hi - lo)
    img = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _determinism_hash(doc: dict) -> str:
    clean = {k: v for k, v in doc.items() if k != "timing_s"}
    blob = json.dumps(clean, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _target_class(model: ModelGraph, x: Tensor, target) -> int:
    if target is not None:
        return int(target)
    return int(np.argmax(model.forward(x).probs.data))


def _run_method(method: str, model: ModelGraph, x: Tensor, t: int,
                cfg_doc: dict, variant, seed: int):
    """Returns (attribution Tensor, extras dict)."""
    if method == "fringe":
        result = run_fringe(model, x, t, build_fringe_config(cfg_doc, variant))
        extras = {
            "completeness_residual": result.completeness_residual,
            "endpoint_kl": result.endpoint_kl,
            "steps": result.steps,
            "degenerate": result.degenerate,
            "trajectory": result.trajectory.to_dict() if result.trajectory else None,
        }
        return result.attribution, extras
    if method == "ig":
        baseline = _ig_baseline(cfg_doc, x)
        result = run_ig_reference(model, x, t, baseline,
                                  steps=cfg_doc.get("ig_steps", 64),
                                  score_target=cfg_doc.get("score_target", "logit"))
        return result.attribution, {
            "completeness_residual": result.completeness_residual,
            "steps": result.steps,
        }
    if method == "smoothgrad":
        sg = SmoothGradConfig(samples=cfg_doc.get("sg_samples", 25),
                              noise_sigma=cfg_doc.get("sg_sigma", 0.1),
                              seed=seed)
        return smoothgrad(model, x, t, sg,
                          cfg_doc.get("score_target", "logit")), {}
    if method == "gradient":
        return gradient_attribution(model, x, t,
                                    cfg_doc.get("score_target", "logit")), {}
    raise ValueError(f"unknown method {method!r}")


def _ig_baseline(cfg_doc: dict, x: Tensor) -> Tensor:
    kind = cfg_doc.get("ig_baseline", "zeros")
    if kind == "zeros":
        return Tensor.zeros(x.shape)
    if kind == "blur":
        return metrics.blur_reference(x)
    raise ValueError(f"unknown ig baseline {kind!r}")


def cmd_attribute(args) -> int:
    model = ModelGraph.load(args.model)
    cfg_doc = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    method = args.method
    variant = args.variant
    if method.startswith("fringe_variant:"):
        method, variant = "fringe", method.split(":", 1)[1]

    entries = []
    for input_path in sorted(args.input):
        start = time.monotonic()
        x = Tensor.load(input_path)
        t = _target_class(model, x, args.target)
        attribution, extras = _run_method(method, model, x, t, cfg_doc,
                                          variant, args.seed)
        stem = Path(input_path).stem
        attr_path = out_dir / f"{stem}.attribution.json"
        attribution.save(attr_path)
        heat_path = None
        if len(x.shape) in (2, 3):
            heat_path = out_dir / f"{stem}.heatmap.pgm"
            write_pgm(heat_path, metrics.reduce_saliency(attribution).values)
        entry = {
            "input": str(input_path),
            "method": args.method,
            "target_class": t,
            "attribution_file": str(attr_path),
            "heatmap_file": str(heat_path) if heat_path else None,
            "attribution_sum": float(np.sum(attribution.data)),
            **extras,
            "timing_s": time.monotonic() - start,
        }
        entries.append(entry)

    report = {
        "model": str(args.model),
        "method": args.method,
        "seed": args.seed,
        "inputs": entries,
    }
    report["determinism_hash"] = _determinism_hash(
        {"model": report["model"], "method": report["method"],
         "seed": report["seed"],
         "inputs": [{k: v for k, v in e.items() if k != "timing_s"}
                    for e in entries]})
    report_path = out_dir / "run_report.json"
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(report_path)
    return 0


def cmd_evaluate(args) -> int:
    model = ModelGraph.load(args.model)
    cfg_doc = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(args.input) != len(args.attribution):
        raise ValueError("--input and --attribution counts must match")

    pairs = sorted(zip(args.input, args.attribution))
    rows = []
    for input_path, attr_path in pairs:
        x = Tensor.load(input_path)
        a = Tensor.load(attr_path)
        if a.shape != x.shape:
            raise ValueError(
                f"attribution shape {a.shape} does not match input {x.shape} "
                f"({attr_path})")
        t = _target_class(model, x, args.target)
        report = metrics.evaluate(model, x, t, a,
                                  n_steps=cfg_doc.get("metric_steps", 50),
                                  infid_seed=args.seed,
                                  score_target=cfg_doc.get("score_target", "logit"))
        stem = Path(input_path).stem
        with open(out_dir / f"{stem}.metrics.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        rows.append({"input": str(input_path), "method": args.method,
                     **{k: v for k, v in report.to_dict().items()
                        if not k.endswith("_curve")}})

    csv_path = out_dir / "metrics_summary.csv"
    fieldnames = list(rows[0].keys()) if rows else ["input", "method"]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    print(csv_path)
    return 0


def cmd_diagnose(args) -> int:
    model = ModelGraph.load(args.model)
    cfg_doc = load_config(args.config)
    sweep = json.loads(args.sweep) if args.sweep else {}
    taus = sweep.get("tau", [cfg_doc.get("tau", 1e-3)])
    cap_modes = sweep.get("delta_euc", ["on" if cfg_doc.get("delta_euc") else "off"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for tau in taus:
        for cap in cap_modes:
            doc = dict(cfg_doc)
            doc["tau"] = tau
            if cap == "off":
                doc.pop("delta_euc", None)
            cfg = build_fringe_config(doc, args.variant)
            eps_comp, end_kl, track_mean, track_max = [], [], [], []
            for input_path in sorted(args.input):
                x = Tensor.load(input_path)
                t = _target_class(model, x, args.target)
                result = run_fringe(model, x, t, cfg)
                eps_comp.append(result.completeness_residual)
                end_kl.append(result.endpoint_kl)
                errs = result.trajectory.tracking_error if result.trajectory else []
                track_mean.append(float(np.mean(errs)) if errs else 0.0)
                track_max.append(float(np.max(errs)) if errs else 0.0)
            rows.append({
                "tau": tau,
                "delta_euc": cap,
                "mean_completeness_residual": float(np.mean(eps_comp)),
                "mean_endpoint_kl": float(np.mean(end_kl)),
                "mean_tracking_error": float(np.mean(track_mean)),
                "max_tracking_error": float(np.max(track_max)),
            })

    report_path = out_dir / "diagnose_report.json"
    with open(report_path, "w") as fh:
        json.dump({"rows": rows}, fh, indent=2, sort_keys=True)
    print(report_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fringe",
                                     description="Geodesic-path attribution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True)
        p.add_argument("--input", action="append", required=True)
        p.add_argument("--config", default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--target", type=int, default=None)

    p_attr = sub.add_parser("attribute", help="compute attributions")
    common(p_attr)
    p_attr.add_argument("--method", default="fringe")
    p_attr.add_argument("--variant", default=None)
    p_attr.set_defaults(func=cmd_attribute)

    p_eval = sub.add_parser("evaluate", help="evaluate stored attributions")
    common(p_eval)
    p_eval.add_argument("--attribution", action="append", required=True)
    p_eval.add_argument("--method", default="unknown")
    p_eval.set_defaults(func=cmd_evaluate)

    p_diag = sub.add_parser("diagnose", help="trajectory diagnostics sweeps")
    common(p_diag)
    p_diag.add_argument("--sweep", default=None,
                        help='JSON, e.g. {"tau": [0.01, 0.001], "delta_euc": ["on","off"]}')
    p_diag.add_argument("--variant", default=None)
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # structured one-line error, nonzero exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
