"""Instance normalization, patching, and linear patch embedding.

Each decomposed component is normalized per window, cut into overlapping
patches of length L_P at stride s, and projected into the backbone hidden
dimension D. The patch count follows K = floor((L - L_P)/s) + 2, where the
"+2" comes from replicate-padding s values at the end of the series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, matmul


@dataclass
class NormStats:
    """Per-window normalization statistics, kept around for exact inversion."""

    mean: float | np.ndarray
    std: float | np.ndarray
    epsilon: float = 1e-5


IDENTITY_STATS = NormStats(mean=0.0, std=1.0, epsilon=0.0)


@dataclass
class PatchSet:
    patches: np.ndarray  # [K, L_P]
    K: int
    L_P: int
    stride: int
    stats: NormStats = field(default_factory=lambda: IDENTITY_STATS)


def patch_count(L: int, patch_len: int, stride: int) -> int:
    return (L - patch_len) // stride + 2


def instance_normalize(x, epsilon: float = 1e-5):
    """Normalize a window to zero mean, unit scale; returns (normed, stats).

    Population standard deviation; epsilon is added to the std (not the
    variance) so a constant window maps to zeros and inversion is exact.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError(f"expected non-empty 1-d window, got shape {x.shape}")
    mean = float(x.mean())
    std = float(x.std())
    return (x - mean) / (std + epsilon), NormStats(mean=mean, std=std, epsilon=epsilon)


def instance_normalize_batch(X: np.ndarray, epsilon: float = 1e-5):
    """Row-wise normalization for [B, L] input; stats broadcast as [B, 1]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected [B, L], got shape {X.shape}")
    mean = X.mean(axis=1, keepdims=True)
    std = X.std(axis=1, keepdims=True)
    return (X - mean) / (std + epsilon), NormStats(mean=mean, std=std, epsilon=epsilon)


def denormalize(y, stats: NormStats):
    y = np.asarray(y, dtype=np.float64)
    return y * (stats.std + stats.epsilon) + stats.mean


def _pad_replicate_end(X: np.ndarray, s: int) -> np.ndarray:
    tail = np.repeat(X[..., -1:], s, axis=-1)
    return np.concatenate([X, tail], axis=-1)


def patchify_batch(X: np.ndarray, patch_len: int, stride: int) -> np.ndarray:
    """Cut [B, L] rows into [B, K, L_P] overlapping patches."""
    X = np.asarray(X, dtype=np.float64)
    L = X.shape[-1]
    if not 1 <= patch_len <= L:
        raise ValueError(f"patch length {patch_len} outside [1, {L}]")
    if not 1 <= stride <= patch_len:
        raise ValueError(f"stride {stride} outside [1, {patch_len}]")
    K = patch_count(L, patch_len, stride)
    padded = _pad_replicate_end(X, stride)
    windows = np.lib.stride_tricks.sliding_window_view(padded, patch_len, axis=-1)
    starts = np.arange(K) * stride
    return np.ascontiguousarray(windows[..., starts, :])


def patchify(x, patch_len: int, stride: int, stats: NormStats | None = None) -> PatchSet:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected 1-d series, got shape {x.shape}")
    patches = patchify_batch(x[None, :], patch_len, stride)[0]
    return PatchSet(
        patches=patches,
        K=patches.shape[0],
        L_P=patch_len,
        stride=stride,
        stats=stats if stats is not None else IDENTITY_STATS,
    )


class PatchEmbedder:
    """Trainable linear map from patch space [L_P] to hidden space [D]."""

    def __init__(self, patch_len: int, d_model: int, seed: int = 0, scale: float = 0.02):
        rng = np.random.default_rng(seed)
        self.patch_len = patch_len
        self.d_model = d_model
        self.weight = Tensor(rng.normal(0.0, scale, size=(patch_len, d_model)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_model), requires_grad=True)

    def parameters(self):
        return [self.weight, self.bias]

    def embed(self, patches) -> Tensor:
        """Project [..., K, L_P] patches to [..., K, D]."""
        if isinstance(patches, Tensor):
            t = patches
        else:
            t = Tensor(np.asarray(patches, dtype=np.float64))
        if t.data.shape[-1] != self.patch_len:
            raise ValueError(
                f"patch length {t.data.shape[-1]} does not match embedder {self.patch_len}"
            )
        return matmul(t, self.weight) + self.bias


def embed_patches(p: PatchSet, emb: PatchEmbedder) -> Tensor:
    return emb.embed(p.patches)
