"""Reprogramming of component patch embeddings into word-embedding space.

Trend patches cross-attend against a sparse set of anchor word embeddings.
Seasonal and residual patches cross-attend against larger prototype banks
obtained by linearly probing the frozen vocabulary table (E' = probe @ E,
with the probe trainable and E frozen). The attention weights are kept so
they can be exported as interpretability maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .autodiff import Tensor, matmul, reshape, softmax, swapaxes
from .backbone import FrozenBackbone

COMPONENTS = ("trend", "seasonal", "residual")


def _check_component(component: str) -> None:
    if component not in COMPONENTS:
        raise ValueError(f"unknown component {component!r}, expected one of {COMPONENTS}")


@dataclass
class AnchorSet:
    words: list[str]
    embeddings: np.ndarray  # [A, D], frozen
    A: int


class PrototypeBank:
    """Trainable linear probe over the frozen vocabulary table."""

    def __init__(self, n_prototypes: int, vocab_size: int, component: str, seed: int = 0):
        if component not in ("seasonal", "residual"):
            raise ValueError(f"prototype bank component must be seasonal or residual, got {component!r}")
        if n_prototypes < 1 or n_prototypes >= vocab_size:
            raise ValueError(f"prototype count {n_prototypes} must be in [1, {vocab_size})")
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(vocab_size)
        self.probe = Tensor(rng.normal(0.0, scale, size=(n_prototypes, vocab_size)), requires_grad=True)
        self.component = component
        self.n_prototypes = n_prototypes

    def parameters(self):
        return [self.probe]


class CrossAttentionBlock:
    """Multi-head cross-attention with trainable Q/K/V projections."""

    def __init__(self, d_model: int, heads: int, component: str, seed: int = 0, scale: float = 0.02):
        _check_component(component)
        if d_model % heads != 0:
            raise ValueError(f"hidden dim {d_model} not divisible by {heads} heads")
        rng = np.random.default_rng(seed)
        self.d_model = d_model
        self.heads = heads
        self.d_k = d_model // heads
        self.component = component
        self.W_Q = Tensor(rng.normal(0.0, scale, size=(d_model, d_model)), requires_grad=True)
        self.W_K = Tensor(rng.normal(0.0, scale, size=(d_model, d_model)), requires_grad=True)
        self.W_V = Tensor(rng.normal(0.0, scale, size=(d_model, d_model)), requires_grad=True)

    def parameters(self):
        return [self.W_Q, self.W_K, self.W_V]


@dataclass
class AlignmentContext:
    """What a component aligns against: anchors for trend, a probed bank otherwise."""

    block: CrossAttentionBlock
    anchors: AnchorSet | None = None
    bank: PrototypeBank | None = None
    vocab_table: np.ndarray | None = None  # frozen E, [V, D]


def load_anchor_words(path) -> list[str]:
    """Read one word per line; blank lines and # comments are skipped."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word and not word.startswith("#"):
            words.append(word)
    if not words:
        raise ValueError(f"anchor file {path} contains no words")
    return words


def packaged_anchor_path(name: str) -> Path:
    """Path to a bundled anchor list: default, noise, or synonyms."""
    p = resources.files("tsalign") / "anchors" / f"{name}.txt"
    if not p.is_file():
        raise ValueError(f"no packaged anchor list named {name!r}")
    return Path(str(p))


def resolve_anchor_embeddings(words: list[str], backbone: FrozenBackbone) -> AnchorSet:
    """Map anchor words to frozen embedding rows; multi-token words average."""
    rows = []
    for word in words:
        ids = backbone.tokenizer.encode(word)
        if not ids:
            raise ValueError(f"anchor word {word!r} does not resolve to any token")
        rows.append(backbone.embed_tokens(ids).mean(axis=0))
    return AnchorSet(words=list(words), embeddings=np.stack(rows), A=len(words))


def probe_prototypes(bank: PrototypeBank, E) -> Tensor:
    """E' = probe @ E, recomputed each forward pass; shape [V', D]."""
    E_arr = E.data if isinstance(E, Tensor) else np.asarray(E, dtype=np.float64)
    if bank.probe.data.shape[1] != E_arr.shape[0]:
        raise ValueError(
            f"probe expects vocabulary of {bank.probe.data.shape[1]} rows, table has {E_arr.shape[0]}"
        )
    return matmul(bank.probe, Tensor(E_arr))


def cross_attend(block: CrossAttentionBlock, queries_src, kv_src):
    """Multi-head scaled dot-product attention of queries over M key rows.

    queries_src: [..., K, D]; kv_src: [M, D] shared across any batch dims.
    Returns (output [..., K, D], attention weights [..., h, K, M]).
    """
    q_in = queries_src if isinstance(queries_src, Tensor) else Tensor(np.asarray(queries_src, dtype=np.float64))
    kv_in = kv_src if isinstance(kv_src, Tensor) else Tensor(np.asarray(kv_src, dtype=np.float64))
    D, h, dk = block.d_model, block.heads, block.d_k
    M = kv_in.data.shape[-2]
    if M == 0:
        raise ValueError("empty key set")
    if q_in.data.shape[-1] != D or kv_in.data.shape[-1] != D:
        raise ValueError(f"inputs must have width {D}")

    lead = q_in.data.shape[:-2]
    K = q_in.data.shape[-2]
    q = swapaxes(reshape(matmul(q_in, block.W_Q), lead + (K, h, dk)), -3, -2)
    k = swapaxes(reshape(matmul(kv_in, block.W_K), (M, h, dk)), -3, -2)
    v = swapaxes(reshape(matmul(kv_in, block.W_V), (M, h, dk)), -3, -2)
    scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dk))
    weights = softmax(scores, axis=-1)  # [..., h, K, M]
    mixed = matmul(weights, v)
    out = reshape(swapaxes(mixed, -3, -2), lead + (K, D))
    return out, weights


def align_component(component: str, patches_embedded, ctx: AlignmentContext):
    """Reprogram one component's patch embeddings; returns (Z, attention)."""
    _check_component(component)
    if ctx.block.component != component:
        raise ValueError(
            f"context carries a {ctx.block.component} attention block, not {component}"
        )
    if component == "trend":
        if ctx.anchors is None:
            raise ValueError("trend alignment requires an anchor set")
        kv = Tensor(ctx.anchors.embeddings)
    else:
        if ctx.bank is None or ctx.vocab_table is None:
            raise ValueError(f"{component} alignment requires a prototype bank and vocabulary table")
        if ctx.bank.component != component:
            raise ValueError(f"context carries a {ctx.bank.component} bank, not {component}")
        kv = probe_prototypes(ctx.bank, ctx.vocab_table)
    return cross_attend(ctx.block, patches_embedded, kv)
