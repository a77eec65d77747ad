"""Benchmark metrics, the ablation grid, transfer protocols, and attention export.

Everything here treats the model as a predictor: any object with a
predict([B, N, L]) -> [B, N, H] method (or a bare callable) can be scored,
which keeps the metric path testable with stubs.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import packaged_anchor_path
from .checkpoint import fingerprint_tensors
from .data import RawDataset, SplitSpec, WindowPair, safe_windows, split_dataset, subsample_fewshot, windows_to_arrays
from .model import ForecastModel, ModelConfig
from .training import TrainConfig, train

VARIANT_IDS = (
    "default",
    "A1_no_alignment",
    "B1_trend_only",
    "B2_seasonal_only",
    "B3_residual_only",
    "C1_noise_anchors",
    "C2_synonymous_anchors",
    "D1_no_instruction",
    "D2_no_domain_features",
)

_VARIANT_OVERRIDES = {
    "default": {},
    "A1_no_alignment": {"align_trend": False, "align_seasonal": False, "align_residual": False},
    "B1_trend_only": {"align_seasonal": False, "align_residual": False},
    "B2_seasonal_only": {"align_trend": False, "align_residual": False},
    "B3_residual_only": {"align_trend": False, "align_seasonal": False},
    "C1_noise_anchors": {"anchor_file": "noise"},
    "C2_synonymous_anchors": {"anchor_file": "synonyms"},
    "D1_no_instruction": {"include_instruction": False},
    "D2_no_domain_features": {"include_stats": False},
}


@dataclass
class AblationVariant:
    id: str
    overrides: dict


def ablation_variants(ids=None) -> list[AblationVariant]:
    if ids is None:
        ids = VARIANT_IDS
    unknown = [i for i in ids if i not in _VARIANT_OVERRIDES]
    if unknown:
        raise ValueError(f"unknown ablation variants: {unknown}; known: {list(VARIANT_IDS)}")
    return [AblationVariant(id=i, overrides=dict(_VARIANT_OVERRIDES[i])) for i in ids]


def apply_variant(base: ModelConfig, variant: AblationVariant) -> ModelConfig:
    overrides = dict(variant.overrides)
    if "anchor_file" in overrides:
        overrides["anchor_file"] = str(packaged_anchor_path(overrides["anchor_file"]))
    return replace(base, **overrides)


def anchor_file_hash(cfg: ModelConfig) -> str:
    """sha256 of the anchor word file in effect, '-' when trend alignment is off."""
    if not cfg.align_trend:
        return "-"
    path = cfg.anchor_file if cfg.anchor_file else packaged_anchor_path("default")
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


@dataclass
class MetricsReport:
    dataset: str
    variant: str
    seed: int
    horizons: list
    mse: dict
    mae: dict
    runtime_s: float
    n_windows: int
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[str]:
        out = []
        for h in self.horizons:
            out.append(
                f"{self.dataset}\t{self.variant}\t{h}\t{self.seed}\t"
                f"{self.mse[h]:.10g}\t{self.mae[h]:.10g}\t{self.runtime_s:.3f}\t{self.n_windows}"
            )
        return out


REPORT_HEADER = "dataset\tvariant\thorizon\tseed\tmse\tmae\truntime_s\tn_windows"


def reports_to_tsv(reports: list[MetricsReport]) -> str:
    lines = [REPORT_HEADER]
    for r in reports:
        lines.extend(r.rows())
    return "\n".join(lines) + "\n"


def _predict_fn(model):
    if hasattr(model, "predict"):
        return model.predict
    if callable(model):
        return model
    raise TypeError(f"{type(model).__name__} is neither a predictor nor callable")


class MeanPredictor:
    """Baseline: repeat the per-channel history mean across the horizon."""

    def __init__(self, H: int):
        self.H = H

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        means = X.mean(axis=-1, keepdims=True)
        return np.repeat(means, self.H, axis=-1)


def evaluate(
    model,
    test_windows: list[WindowPair],
    horizons=None,
    *,
    dataset: str = "dataset",
    variant: str = "default",
    seed: int = 0,
    batch_size: int = 32,
) -> MetricsReport:
    """Mean MSE/MAE over all test windows and channels, per horizon.

    A horizon h scores the first h forecast steps, so one model serves every
    h up to its target width.
    """
    if not test_windows:
        raise ValueError("empty test set")
    X, Y = windows_to_arrays(test_windows)
    width = Y.shape[-1]
    if horizons is None:
        horizons = [width]
    horizons = list(horizons)
    bad = [h for h in horizons if not 1 <= h <= width]
    if bad:
        raise ValueError(f"horizons {bad} outside [1, {width}]")

    predict = _predict_fn(model)
    t0 = time.time()
    preds = np.concatenate(
        [np.asarray(predict(X[lo : lo + batch_size])) for lo in range(0, X.shape[0], batch_size)]
    )
    runtime = time.time() - t0
    if preds.shape != Y.shape:
        raise ValueError(f"predictor returned shape {preds.shape}, expected {Y.shape}")

    err = preds - Y
    mse = {h: float(np.mean(err[..., :h] ** 2)) for h in horizons}
    mae = {h: float(np.mean(np.abs(err[..., :h]))) for h in horizons}
    return MetricsReport(
        dataset=dataset,
        variant=variant,
        seed=seed,
        horizons=horizons,
        mse=mse,
        mae=mae,
        runtime_s=runtime,
        n_windows=len(test_windows),
    )


# ---------------------------------------------------------------- ablation grid


@dataclass
class AblationTable:
    cells: list = field(default_factory=list)  # MetricsReport per (variant, seed)
    failures: list = field(default_factory=list)  # dicts {variant, seed, error}

    def summary_rows(self):
        """(variant, horizon) -> mean/std over seeds, in variant order."""
        rows = []
        for vid in VARIANT_IDS:
            cells = [c for c in self.cells if c.variant == vid]
            if not cells:
                continue
            for h in cells[0].horizons:
                mses = [c.mse[h] for c in cells]
                maes = [c.mae[h] for c in cells]
                rows.append(
                    {
                        "variant": vid,
                        "horizon": h,
                        "mean_mse": float(np.mean(mses)),
                        "std_mse": float(np.std(mses)),
                        "mean_mae": float(np.mean(maes)),
                        "std_mae": float(np.std(maes)),
                        "n_seeds": len(cells),
                    }
                )
        return rows

    def summary_text(self) -> str:
        lines = ["variant\thorizon\tmean_mse\tstd_mse\tmean_mae\tstd_mae\tn_seeds"]
        for r in self.summary_rows():
            lines.append(
                f"{r['variant']}\t{r['horizon']}\t{r['mean_mse']:.10g}\t{r['std_mse']:.10g}\t"
                f"{r['mean_mae']:.10g}\t{r['std_mae']:.10g}\t{r['n_seeds']}"
            )
        for f in self.failures:
            lines.append(f"# failed {f['variant']} seed {f['seed']}: {f['error']}")
        return "\n".join(lines) + "\n"


def dataset_windows(dataset: RawDataset, L: int, H: int, few_shot_ratio=None):
    tr, va, te = split_dataset(dataset, SplitSpec())
    train_w, warn_tr = safe_windows(tr, L, H)
    val_w, _ = safe_windows(va, L, H)
    test_w, warn_te = safe_windows(te, L, H)
    if warn_tr or not train_w:
        raise ValueError(f"train split of {dataset.name} yields no windows (need {L + H} rows)")
    if warn_te or not test_w:
        raise ValueError(f"test split of {dataset.name} yields no windows (need {L + H} rows)")
    if few_shot_ratio is not None:
        train_w = subsample_fewshot(train_w, few_shot_ratio)
    return train_w, val_w, test_w


def run_ablation(
    base_config: ModelConfig,
    dataset: RawDataset,
    variants=None,
    seeds=(0, 1, 2),
    train_config: TrainConfig | None = None,
    horizons=None,
    few_shot_ratio=None,
) -> AblationTable:
    """Train and score every (variant, seed) cell; failures are recorded,
    never fatal to the rest of the grid."""
    if variants is None:
        variants = ablation_variants()
    if train_config is None:
        train_config = TrainConfig()
    table = AblationTable()
    train_w, val_w, test_w = dataset_windows(dataset, base_config.L, base_config.H, few_shot_ratio)

    for variant in variants:
        for seed in seeds:
            try:
                cfg = replace(apply_variant(base_config, variant), seed=seed)
                model = ForecastModel(cfg)
                tc = replace(train_config, seed=seed)
                train(model, train_w, val_w, tc)
                report = evaluate(
                    model, test_w, horizons, dataset=dataset.name, variant=variant.id, seed=seed
                )
                report.extra["anchor_file_hash"] = anchor_file_hash(cfg)
                table.cells.append(report)
            except Exception as e:  # deliberate: one bad cell must not kill the grid
                table.failures.append({"variant": variant.id, "seed": seed, "error": str(e)})
    return table


# ---------------------------------------------------------------- zero-shot


def zero_shot_eval(
    model: ForecastModel,
    target: RawDataset,
    *,
    source_name: str = "source",
    L=None,
    H=None,
    horizons=None,
) -> MetricsReport:
    """Score a trained model on another dataset's test split, updating nothing."""
    if L is not None and L != model.cfg.L:
        raise ValueError(f"window length mismatch: model trained with L={model.cfg.L}, target asks L={L}")
    if H is not None and H != model.cfg.H:
        raise ValueError(f"horizon mismatch: model trained with H={model.cfg.H}, target asks H={H}")
    _, _, test_seg = split_dataset(target, SplitSpec())
    test_w, warning = safe_windows(test_seg, model.cfg.L, model.cfg.H)
    if warning or not test_w:
        raise ValueError(f"test split of {target.name} yields no windows (need {model.cfg.L + model.cfg.H} rows)")

    before = fingerprint_tensors({k: t.data for k, t in model.parameters().items()})
    report = evaluate(model, test_w, horizons, dataset=target.name, variant="zero_shot", seed=model.cfg.seed)
    after = fingerprint_tensors({k: t.data for k, t in model.parameters().items()})
    if before != after:
        raise RuntimeError("zero-shot evaluation modified trainable tensors")
    report.extra["transfer"] = f"{source_name}->{target.name}"
    report.extra["trainable_fingerprint"] = before
    return report


# ---------------------------------------------------------------- attention export


@dataclass
class AttentionMap:
    weights: np.ndarray  # [K, A] head-averaged, or [heads, K, A] with per_head
    labels: list
    component: str
    patch_range: tuple
    per_head: bool = False


def export_attention_map(
    model: ForecastModel,
    window,
    component: str = "trend",
    path=None,
    per_head: bool = False,
) -> AttentionMap:
    """Attention between one window's patches and the component's text side.

    Uses the Figure-3 case-study setup: non-overlapping patches, weights
    averaged over heads (and channels when the window has several).
    """
    if not model._aligned(component):
        raise ValueError("no alignment to export")
    if model.cfg.stride != model.cfg.patch_len:
        raise ValueError(
            f"attention export requires non-overlapping patches (stride == patch_len), "
            f"got stride={model.cfg.stride}, patch_len={model.cfg.patch_len}"
        )
    history = window.history if isinstance(window, WindowPair) else np.asarray(window, dtype=np.float64)
    if history.ndim == 1:
        history = history[None]
    out = model.forward_batch(history[None], want_attention=True)
    attn = out["attention"][component]
    if isinstance(attn, list):  # per-channel alignment: one weight tensor per channel
        stacked = np.concatenate([w.data for w in attn], axis=0)
    else:
        stacked = attn.data  # [B*N, heads, K, A]
    per_head_weights = stacked.mean(axis=0)  # [heads, K, A]
    averaged = per_head_weights.mean(axis=0)  # [K, A]

    if component == "trend":
        labels = list(model.anchors.words)
    else:
        labels = [f"proto{i:03d}" for i in range(per_head_weights.shape[-1])]
    K = averaged.shape[0]
    amap = AttentionMap(
        weights=per_head_weights if per_head else averaged,
        labels=labels,
        component=component,
        patch_range=(0, K - 1),
        per_head=per_head,
    )
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(attention_map_text(amap))
    return amap


def attention_map_text(amap: AttentionMap) -> str:
    header = "patch\t" + "\t".join(amap.labels)
    blocks = amap.weights[None] if not amap.per_head else amap.weights
    lines = []
    for h, block in enumerate(blocks):
        if amap.per_head:
            lines.append(f"# head {h}")
        lines.append(header)
        for i, row in enumerate(block):
            lines.append(f"p{i}\t" + "\t".join(f"{w:.8f}" for w in row))
    return "\n".join(lines) + "\n"
