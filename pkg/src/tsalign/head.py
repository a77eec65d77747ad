"""Output side of the pipeline: slice patch positions out of the backbone
hidden states, project each component to an H-step forecast, denormalize
with that component's stats, and sum the three components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, matmul, reshape
from .preprocess import NormStats, denormalize


class ProjectionHead:
    """Trainable linear map from flattened patch states [K*D] to horizon [H].

    Flattening is patch-major: row i of the states matrix occupies entries
    i*D..(i+1)*D-1 of the flattened vector. Checkpoints depend on this order.
    """

    def __init__(self, K: int, D: int, H: int, component: str, seed: int = 0, scale: float = 0.02):
        rng = np.random.default_rng(seed)
        self.K = K
        self.D = D
        self.H = H
        self.component = component
        self.weight = Tensor(rng.normal(0.0, scale, size=(K * D, H)), requires_grad=True)
        self.bias = Tensor(np.zeros(H), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]


@dataclass
class Forecast:
    per_component: dict  # component -> [N, H] denormalized array
    combined: np.ndarray  # [N, H]


def slice_patch_states(hidden, P: int, K: int | None = None):
    """Rows P..P+K-1 of the hidden states (the reprogrammed patch positions)."""
    t = hidden if isinstance(hidden, Tensor) else Tensor(np.asarray(hidden, dtype=np.float64))
    rows = t.data.shape[-2]
    if not 0 <= P <= rows:
        raise ValueError(f"prompt length {P} inconsistent with {rows} hidden rows")
    if K is not None and rows - P != K:
        raise ValueError(f"expected {K} patch rows after prompt length {P}, found {rows - P}")
    if P == 0:
        return t
    return t[..., P:, :]


def project_component(states, head: ProjectionHead) -> Tensor:
    """flatten(states) @ weight + bias, supporting leading batch dims."""
    t = states if isinstance(states, Tensor) else Tensor(np.asarray(states, dtype=np.float64))
    K, D = t.data.shape[-2], t.data.shape[-1]
    if K * D != head.weight.data.shape[0]:
        raise ValueError(
            f"states flatten to {K * D}, head expects {head.weight.data.shape[0]} (K={head.K}, D={head.D})"
        )
    lead = t.data.shape[:-2]
    flat = reshape(t, lead + (K * D,))
    return matmul(flat, head.weight) + head.bias


def combine_forecast(trend, seasonal, residual, stats: dict) -> np.ndarray:
    """Denormalize each component with its own stats, then sum element-wise."""
    trend, seasonal, residual = (np.asarray(a, dtype=np.float64) for a in (trend, seasonal, residual))
    if not trend.shape == seasonal.shape == residual.shape:
        raise ValueError(
            f"component shapes differ: {trend.shape}, {seasonal.shape}, {residual.shape}"
        )
    for name in ("trend", "seasonal", "residual"):
        if name not in stats or not isinstance(stats[name], NormStats):
            raise ValueError(f"missing normalization stats for {name}")
    return (
        denormalize(trend, stats["trend"])
        + denormalize(seasonal, stats["seasonal"])
        + denormalize(residual, stats["residual"])
    )


def forward_pipeline(window: np.ndarray, model) -> Forecast:
    """Forecast one [N, L] window with a configured model."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError(f"expected [N, L] window, got shape {window.shape}")
    out = model.forward_batch(window[None, :, :])
    per_component = {c: out["denormalized"][c].data[0] for c in out["denormalized"]}
    return Forecast(per_component=per_component, combined=out["combined"].data[0])
