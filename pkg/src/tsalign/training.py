"""Optimization of the trainable parameters with the backbone frozen.

Gradients flow through the frozen backbone's operations (they must, to
reach the embedders, alignment blocks, probes, and heads below it), but
frozen tensors never enter the optimizer. A finite-difference checker
validates the hand-rolled reverse-mode gradients.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, backward, tensor_mean
from .data import WindowPair, windows_to_arrays
from .model import ForecastModel


@dataclass
class ParameterPartition:
    trainable: dict[str, Tensor]
    frozen: dict[str, np.ndarray]


def build_partition(model: ForecastModel) -> ParameterPartition:
    trainable = model.parameters()
    frozen = model.frozen_arrays()
    overlap = set(trainable) & set(frozen)
    if overlap:
        raise ValueError(f"tensors appear in both partitions: {sorted(overlap)}")
    return ParameterPartition(trainable=trainable, frozen=frozen)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 5
    seed: int = 0
    optimizer: str = "adam"
    max_steps: int | None = None  # optional hard cap for step-bounded fixtures

    def problems(self) -> list[str]:
        problems = []
        if self.learning_rate < 0:
            problems.append(f"learning_rate={self.learning_rate} must be >= 0")
        if self.batch_size < 1:
            problems.append(f"batch_size={self.batch_size} must be >= 1")
        if self.max_epochs < 1:
            problems.append(f"max_epochs={self.max_epochs} must be >= 1")
        if self.patience < 1:
            problems.append(f"patience={self.patience} must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            problems.append(f"optimizer={self.optimizer!r} not one of ('adam', 'sgd')")
        if self.max_steps is not None and self.max_steps < 1:
            problems.append(f"max_steps={self.max_steps} must be >= 1")
        return problems

    def validate(self) -> None:
        problems = self.problems()
        if problems:
            raise ValueError("invalid train config: " + "; ".join(problems))


def mse_loss(pred, target):
    """Mean squared error over every entry; Eq-style per-channel value
    averaged over channels and batch. Returns a graph Tensor when pred is
    one, else a float."""
    target = np.asarray(target, dtype=np.float64)
    if isinstance(pred, Tensor):
        if pred.data.shape != target.shape:
            raise ValueError(f"prediction shape {pred.data.shape} != target shape {target.shape}")
        err = pred - Tensor(target)
        return tensor_mean(err * err)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mae_metric(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean(np.abs(pred - target)))


class SGD:
    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = params
        self.lr = lr

    def step(self) -> None:
        for t in self.params.values():
            if t.grad is not None:
                t.data = t.data - self.lr * t.grad

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self) -> None:
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = self.m[name] / (1 - self.b1**self.t)
            v_hat = self.v[name] / (1 - self.b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None


def make_optimizer(cfg: TrainConfig, params: dict[str, Tensor]):
    if cfg.optimizer == "adam":
        return Adam(params, cfg.learning_rate)
    return SGD(params, cfg.learning_rate)


@dataclass
class TrainReport:
    step_losses: list = field(default_factory=list)
    epoch_train_mse: list = field(default_factory=list)
    epoch_val_mse: list = field(default_factory=list)
    best_val_mse: float | None = None
    best_epoch: int | None = None
    steps_run: int = 0
    stopped_early: bool = False
    aborted: bool = False
    abort_reason: str | None = None
    fingerprint_before: str = ""
    fingerprint_after: str = ""
    anchors_unchanged: bool = True
    wall_time_s: float = 0.0


def _eval_mse(model: ForecastModel, X: np.ndarray, Y: np.ndarray, batch_size: int) -> float:
    total, count = 0.0, 0
    for lo in range(0, X.shape[0], batch_size):
        xb, yb = X[lo : lo + batch_size], Y[lo : lo + batch_size]
        pred = model.predict(xb)
        total += float(np.sum((pred - yb) ** 2))
        count += yb.size
    return total / count


def train(
    model: ForecastModel,
    train_windows: list[WindowPair],
    val_windows: list[WindowPair],
    cfg: TrainConfig,
) -> TrainReport:
    """Mini-batch gradient descent with early stopping on validation MSE.

    The model ends up holding the best-validation parameters (or the final
    ones when no validation windows were given).
    """
    cfg.validate()
    if not train_windows:
        raise ValueError("no training windows")
    partition = build_partition(model)
    optimizer = make_optimizer(cfg, partition.trainable)
    X, Y = windows_to_arrays(train_windows)
    has_val = bool(val_windows)
    if has_val:
        Xv, Yv = windows_to_arrays(val_windows)

    report = TrainReport(fingerprint_before=model.backbone.fingerprint)
    anchors_before = model.anchors.embeddings.copy() if model.anchors is not None else None
    rng = np.random.default_rng(cfg.seed)
    best_state: dict[str, np.ndarray] | None = None
    bad_epochs = 0
    t_start = time.time()

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(X.shape[0])
        epoch_losses = []
        for lo in range(0, len(order), cfg.batch_size):
            if cfg.max_steps is not None and report.steps_run >= cfg.max_steps:
                break
            idx = order[lo : lo + cfg.batch_size]
            out = model.forward_batch(X[idx])
            loss = mse_loss(out["combined"], Y[idx])
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                report.aborted = True
                report.abort_reason = f"non-finite loss {loss_value} at step {report.steps_run}"
                break
            optimizer.zero_grad()
            backward(loss)
            optimizer.step()
            optimizer.zero_grad()
            report.step_losses.append(loss_value)
            epoch_losses.append(loss_value)
            report.steps_run += 1
        if epoch_losses:
            report.epoch_train_mse.append(float(np.mean(epoch_losses)))
        if report.aborted:
            break

        if has_val:
            val_mse = _eval_mse(model, Xv, Yv, cfg.batch_size)
            report.epoch_val_mse.append(val_mse)
            if report.best_val_mse is None or val_mse < report.best_val_mse - 1e-12:
                report.best_val_mse = val_mse
                report.best_epoch = epoch
                best_state = {k: t.data.copy() for k, t in partition.trainable.items()}
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    report.stopped_early = True
                    break
        if cfg.max_steps is not None and report.steps_run >= cfg.max_steps:
            break

    if best_state is not None:
        for name, t in partition.trainable.items():
            t.data = best_state[name]
    report.fingerprint_after = model.backbone.refingerprint()
    if anchors_before is not None:
        report.anchors_unchanged = bool(np.array_equal(anchors_before, model.anchors.embeddings))
    report.wall_time_s = time.time() - t_start
    return report


def report_text(report: TrainReport) -> str:
    lines = [
        "training report",
        f"steps_run {report.steps_run}",
        f"stopped_early {report.stopped_early}",
        f"aborted {report.aborted}",
        f"abort_reason {report.abort_reason or '-'}",
        f"best_val_mse {report.best_val_mse if report.best_val_mse is not None else '-'}",
        f"best_epoch {report.best_epoch if report.best_epoch is not None else '-'}",
        f"fingerprint_before {report.fingerprint_before}",
        f"fingerprint_after {report.fingerprint_after}",
        f"anchors_unchanged {report.anchors_unchanged}",
        f"wall_time_s {report.wall_time_s:.3f}",
        "epoch train_mse val_mse",
    ]
    for i, tr in enumerate(report.epoch_train_mse):
        val = report.epoch_val_mse[i] if i < len(report.epoch_val_mse) else None
        lines.append(f"{i} {tr:.10g} {val if val is None else format(val, '.10g')}")
    return "\n".join(lines) + "\n"


def finite_difference_deviation(loss_fn, params: dict[str, Tensor], epsilon: float, sample: int, seed: int = 0):
    """Compare analytic vs central-difference gradients on sampled scalars.

    Relative deviation uses max(|analytic|, |numeric|) as denominator; when
    both magnitudes sit below 1e-8 the absolute difference is used instead
    (both gradients are then numerically zero and a ratio would be noise).
    Returns (max_deviation, per-sample records).
    """
    if not 1e-6 <= epsilon <= 1e-2:
        raise ValueError(f"epsilon {epsilon} outside [1e-6, 1e-2]")
    if sample < 1:
        raise ValueError("need at least one sampled parameter")
    names = sorted(params)
    sizes = [params[n].data.size for n in names]
    total = int(np.sum(sizes))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=min(sample, total), replace=False)

    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise ValueError("loss_fn must return a graph Tensor")
    for t in params.values():
        t.grad = None
    backward(loss)
    grads = {n: (params[n].grad if params[n].grad is not None else np.zeros_like(params[n].data)) for n in names}

    bounds = np.cumsum(sizes)
    records = []
    worst = 0.0
    for flat in sorted(int(c) for c in chosen):
        owner = int(np.searchsorted(bounds, flat, side="right"))
        name = names[owner]
        inner = flat - (bounds[owner - 1] if owner else 0)
        tensor = params[name]
        original = tensor.data.flat[inner]

        tensor.data.flat[inner] = original + epsilon
        plus = float(loss_fn().data)
        tensor.data.flat[inner] = original - epsilon
        minus = float(loss_fn().data)
        tensor.data.flat[inner] = original

        numeric = (plus - minus) / (2 * epsilon)
        analytic = float(grads[name].flat[inner])
        magnitude = max(abs(analytic), abs(numeric))
        deviation = abs(analytic - numeric) / magnitude if magnitude > 1e-8 else abs(analytic - numeric)
        worst = max(worst, deviation)
        records.append({"name": name, "index": int(inner), "analytic": analytic, "numeric": numeric, "deviation": deviation})
    for t in params.values():
        t.grad = None
    return worst, records


def finite_difference_check(model: ForecastModel, window: WindowPair, epsilon: float = 1e-4, sample: int = 32, seed: int = 0):
    """Gradient check of the full pipeline loss on one window; frozen tensors
    are never candidates because sampling draws from the trainable partition."""
    partition = build_partition(model)
    X = window.history[None]
    Y = window.target[None]

    def loss_fn():
        return mse_loss(model.forward_batch(X)["combined"], Y)

    return finite_difference_deviation(loss_fn, partition.trainable, epsilon, sample, seed=seed)
