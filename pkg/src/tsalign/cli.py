"""Command-line entry point.

Exit codes: 0 success, 1 configuration/validation problem, 2 runtime failure.
Every run writes its artifacts (config snapshot included) under one run
directory so the invocation can be reproduced from the snapshot alone.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, apply_flag_overrides, load_run_config, output_root, resolve_dataset
from .data import load_csv, make_windows
from .decompose import DecompConfig, additive_decompose
from .evaluation import (
    ablation_variants,
    apply_variant,
    dataset_windows,
    evaluate,
    export_attention_map,
    reports_to_tsv,
    run_ablation,
    zero_shot_eval,
)
from .model import ForecastModel
from .training import finite_difference_check, report_text, train

GRADCHECK_TOLERANCE = 1e-3


def _add_common(sub: argparse.ArgumentParser, seed_required: bool = False) -> None:
    sub.add_argument("--config", required=True, help="run config TOML file")
    sub.add_argument("--seed", type=int, required=seed_required, help="run seed (propagates to model and training)")
    sub.add_argument("--variant", help="ablation variant id override")
    sub.add_argument("--output-dir", dest="output_dir", help="output root override")
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--max-epochs", dest="max_epochs", type=int)
    sub.add_argument("--max-steps", dest="max_steps", type=int)
    sub.add_argument("--batch-size", dest="batch_size", type=int)
    sub.add_argument("--horizons", help="comma-separated evaluation horizons")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsalign", description="decomposition-aligned forecasting pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    _add_common(subs.add_parser("train", help="train a model and score its test split"), seed_required=True)
    p_eval = subs.add_parser("eval", help="score a model on the test split")
    _add_common(p_eval)
    p_eval.add_argument("--checkpoint", help="trained checkpoint to load")
    p_zero = subs.add_parser("zeroshot", help="score a model on another dataset, no updates")
    _add_common(p_zero)
    p_zero.add_argument("--checkpoint", help="trained checkpoint to load")
    p_zero.add_argument("--target", required=True, help="target dataset: CSV path or run-config TOML")
    p_abl = subs.add_parser("ablate", help="train/score the ablation grid")
    _add_common(p_abl, seed_required=True)
    p_abl.add_argument("--variants", default="all", help="'all' or comma-separated variant ids")
    p_abl.add_argument("--seeds", help="comma-separated seeds (default: seed, seed+1, seed+2)")
    p_dec = subs.add_parser("decompose", help="write trend/seasonal/residual for inspection")
    _add_common(p_dec)
    p_dec.add_argument("--channel", type=int, default=0)
    p_exp = subs.add_parser("explain", help="export the patch/anchor attention map")
    _add_common(p_exp)
    p_exp.add_argument("--checkpoint", help="trained checkpoint to load")
    p_exp.add_argument("--component", default="trend", choices=["trend", "seasonal", "residual"])
    p_exp.add_argument("--per-head", dest="per_head", action="store_true")
    p_grad = subs.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    _add_common(p_grad)
    p_grad.add_argument("--sample", type=int, default=32)
    p_grad.add_argument("--epsilon", type=float, default=1e-4)
    return parser


def _prepare(args) -> tuple[RunConfig, Path]:
    rc = load_run_config(args.config)
    rc = apply_flag_overrides(rc, args)
    if rc.seed is not None:
        rc.model = replace(rc.model, seed=rc.seed)
        rc.train = replace(rc.train, seed=rc.seed)
    rc.validate()
    seed_tag = rc.seed if rc.seed is not None else rc.model.seed
    run_dir = output_root(rc) / f"{args.command}_{rc.variant}_seed{seed_tag}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config_snapshot.json").write_text(rc.snapshot(), encoding="utf-8")
    return rc, run_dir


def _build_model(rc: RunConfig) -> ForecastModel:
    variant = ablation_variants([rc.variant])[0]
    return ForecastModel(apply_variant(rc.model, variant))


def _write_prompts(model: ForecastModel, window_history: np.ndarray, run_dir: Path) -> None:
    out = model.forward_batch(window_history[None])
    lines = [f"[{c}] {text}" for c, text in out["prompts"].items()]
    (run_dir / "prompts.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_train(args) -> int:
    rc, run_dir = _prepare(args)
    ds = resolve_dataset(rc.dataset)
    train_w, val_w, test_w = dataset_windows(ds, rc.model.L, rc.model.H, rc.few_shot_ratio)
    model = _build_model(rc)
    report = train(model, train_w, val_w, rc.train)
    (run_dir / "training_report.txt").write_text(report_text(report), encoding="utf-8")
    if report.aborted:
        print(f"training aborted: {report.abort_reason} (report in {run_dir})", file=sys.stderr)
        return 2
    model.save(run_dir / "model.ckpt")
    metrics = evaluate(model, test_w, rc.horizons, dataset=ds.name, variant=rc.variant, seed=rc.train.seed)
    (run_dir / "metrics.tsv").write_text(reports_to_tsv([metrics]), encoding="utf-8")
    _write_prompts(model, train_w[0].history, run_dir)
    print(f"trained {report.steps_run} steps; test MSE {metrics.mse[metrics.horizons[-1]]:.6g}; artifacts in {run_dir}")
    return 0


def _cmd_eval(args) -> int:
    rc, run_dir = _prepare(args)
    ds = resolve_dataset(rc.dataset)
    _, _, test_w = dataset_windows(ds, rc.model.L, rc.model.H)
    model = _build_model(rc)
    if args.checkpoint:
        model.load(args.checkpoint)
    metrics = evaluate(model, test_w, rc.horizons, dataset=ds.name, variant=rc.variant, seed=rc.model.seed)
    (run_dir / "metrics.tsv").write_text(reports_to_tsv([metrics]), encoding="utf-8")
    print(f"test MSE {metrics.mse[metrics.horizons[-1]]:.6g}; artifacts in {run_dir}")
    return 0


def _cmd_zeroshot(args) -> int:
    rc, run_dir = _prepare(args)
    source = resolve_dataset(rc.dataset)
    if str(args.target).endswith(".toml"):
        target = resolve_dataset(load_run_config(args.target).dataset)
    else:
        target = load_csv(args.target)
    model = _build_model(rc)
    if args.checkpoint:
        model.load(args.checkpoint)
    metrics = zero_shot_eval(model, target, source_name=source.name, horizons=rc.horizons)
    text = reports_to_tsv([metrics]) + f"# transfer {metrics.extra['transfer']}\n"
    (run_dir / "metrics.tsv").write_text(text, encoding="utf-8")
    print(f"zero-shot {metrics.extra['transfer']} MSE {metrics.mse[metrics.horizons[-1]]:.6g}; artifacts in {run_dir}")
    return 0


def _cmd_ablate(args) -> int:
    rc, run_dir = _prepare(args)
    ds = resolve_dataset(rc.dataset)
    ids = None if args.variants == "all" else [v for v in args.variants.split(",") if v]
    variants = ablation_variants(ids)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s]
    else:
        seeds = [rc.seed + i for i in range(3)]
    table = run_ablation(rc.model, ds, variants=variants, seeds=seeds, train_config=rc.train,
                         horizons=rc.horizons, few_shot_ratio=rc.few_shot_ratio)
    (run_dir / "ablation_cells.tsv").write_text(reports_to_tsv(table.cells), encoding="utf-8")
    (run_dir / "ablation_summary.tsv").write_text(table.summary_text(), encoding="utf-8")
    print(f"{len(table.cells)} grid cells, {len(table.failures)} failures; artifacts in {run_dir}")
    return 0 if not table.failures else 2


def _cmd_decompose(args) -> int:
    rc, run_dir = _prepare(args)
    ds = resolve_dataset(rc.dataset)
    if not 0 <= args.channel < ds.N:
        raise ConfigError(f"channel {args.channel} outside [0, {ds.N})")
    series = ds.values[:, args.channel]
    cfg = DecompConfig(k=rc.model.k, period=rc.model.period, method=rc.model.method,
                       loess_bandwidth=rc.model.loess_bandwidth)
    parts = additive_decompose(series, cfg)
    lines = ["t\tvalue\ttrend\tseasonal\tresidual"]
    for i in range(series.size):
        lines.append(f"{i}\t{series[i]:.10g}\t{parts.trend[i]:.10g}\t{parts.seasonal[i]:.10g}\t{parts.residual[i]:.10g}")
    (run_dir / "decomposition.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"decomposed {series.size} points of {ds.name}[{args.channel}]; artifacts in {run_dir}")
    return 0


def _cmd_explain(args) -> int:
    rc, run_dir = _prepare(args)
    ds = resolve_dataset(rc.dataset)
    _, _, test_w = dataset_windows(ds, rc.model.L, rc.model.H)
    model = _build_model(rc)
    if args.checkpoint:
        model.load(args.checkpoint)
    path = run_dir / "attention.tsv"
    amap = export_attention_map(model, test_w[0], component=args.component, path=path, per_head=args.per_head)
    print(f"attention map {amap.weights.shape} over {len(amap.labels)} labels; artifacts in {run_dir}")
    return 0


def _cmd_gradcheck(args) -> int:
    rc, run_dir = _prepare(args)
    ds = resolve_dataset(rc.dataset)
    train_w, _, _ = dataset_windows(ds, rc.model.L, rc.model.H)
    model = _build_model(rc)
    worst, records = finite_difference_check(model, train_w[0], epsilon=args.epsilon, sample=args.sample)
    lines = [f"max_relative_deviation {worst:.6g}", "name\tindex\tanalytic\tnumeric\tdeviation"]
    for r in records:
        lines.append(f"{r['name']}\t{r['index']}\t{r['analytic']:.10g}\t{r['numeric']:.10g}\t{r['deviation']:.6g}")
    (run_dir / "gradcheck.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"gradcheck max relative deviation {worst:.3g} over {len(records)} samples; artifacts in {run_dir}")
    return 0 if worst < GRADCHECK_TOLERANCE else 2


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "zeroshot": _cmd_zeroshot,
    "ablate": _cmd_ablate,
    "decompose": _cmd_decompose,
    "explain": _cmd_explain,
    "gradcheck": _cmd_gradcheck,
}


def dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help, 2 for bad usage; the contract maps
        # usage problems to 1
        return 0 if e.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"failure: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
