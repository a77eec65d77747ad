"""Frozen decoder-style transformer stack used forward-only.

Two providers: a deterministic randomly initialized mini backbone for tests
and desk-scale runs, and a loader for external weights saved in the tensor
checkpoint format (a converter can map public GPT-2 dumps into it). The
backbone never appears in any optimizer's parameter set; gradients flow
through it to reach the trainable layers below, but its weights never move.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .autodiff import Tensor, gelu, layer_norm, matmul, reshape, softmax, swapaxes
from .checkpoint import fingerprint_tensors, load_checkpoint_file, save_checkpoint

N_BLOCKS = 6

_BLOCK_SUFFIXES = (
    ("ln1.gain", "D"),
    ("ln1.bias", "D"),
    ("attn.w_qkv", "D,3D"),
    ("attn.b_qkv", "3D"),
    ("attn.w_out", "D,D"),
    ("attn.b_out", "D"),
    ("ln2.gain", "D"),
    ("ln2.bias", "D"),
    ("ff.w1", "D,4D"),
    ("ff.b1", "4D"),
    ("ff.w2", "4D,D"),
    ("ff.b2", "D"),
)


def _block_shapes(D: int) -> dict[str, tuple[int, ...]]:
    lookup = {"D": (D,), "3D": (3 * D,), "4D": (4 * D,), "D,3D": (D, 3 * D), "D,D": (D, D), "D,4D": (D, 4 * D), "4D,D": (4 * D, D)}
    return {suffix: lookup[spec] for suffix, spec in _BLOCK_SUFFIXES}


class WhitespaceHashTokenizer:
    """Deterministic text-to-id map: lowercase, split on whitespace, hash.

    A stand-in for a learned subword vocabulary; ids are stable across runs
    and platforms because they come from sha256 of the token bytes.
    """

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise ValueError(f"vocab size {vocab_size} must be positive")
        self.vocab_size = vocab_size

    def encode(self, text: str) -> list[int]:
        ids = []
        for token in text.lower().split():
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            ids.append(int.from_bytes(digest[:8], "little") % self.vocab_size)
        return ids


class FrozenBackbone:
    """Immutable embedding tables plus 6 pre-norm causal transformer blocks."""

    def __init__(self, tensors: dict[str, np.ndarray], n_heads: int):
        V, D = tensors["vocab_table"].shape
        T_max = tensors["positional_table"].shape[0]
        if D % n_heads != 0:
            raise ValueError(f"hidden dim {D} not divisible by {n_heads} heads")
        self.tensors = tensors
        self.V = V
        self.D = D
        self.T_max = T_max
        self.n_heads = n_heads
        self.n_blocks = N_BLOCKS
        self.fingerprint = fingerprint_tensors(tensors)
        self.tokenizer = WhitespaceHashTokenizer(V)

    # -- parameter access -------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return dict(self.tensors)

    def refingerprint(self) -> str:
        """Recompute the content hash of the current parameter values."""
        return fingerprint_tensors(self.tensors)

    def save(self, path) -> None:
        save_checkpoint(path, self.tensors)

    def embed_tokens(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.V):
            raise ValueError(f"token id outside vocab of size {self.V}")
        return self.tensors["vocab_table"][ids]

    # -- forward ----------------------------------------------------------

    def _p(self, name: str) -> Tensor:
        return Tensor(self.tensors[name])

    def _attention(self, i: int, x: Tensor, mask: Tensor) -> Tensor:
        prefix = f"block{i}.attn"
        h, D = self.n_heads, self.D
        dh = D // h
        qkv = matmul(x, self._p(f"{prefix}.w_qkv")) + self._p(f"{prefix}.b_qkv")
        lead = qkv.data.shape[:-2]
        S = qkv.data.shape[-2]

        def split_heads(t: Tensor) -> Tensor:
            return swapaxes(reshape(t, lead + (S, h, dh)), -3, -2)

        q = split_heads(qkv[..., 0:D])
        k = split_heads(qkv[..., D : 2 * D])
        v = split_heads(qkv[..., 2 * D : 3 * D])
        scores = matmul(q, swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
        weights = softmax(scores + mask, axis=-1)
        mixed = matmul(weights, v)
        merged = reshape(swapaxes(mixed, -3, -2), lead + (S, D))
        return matmul(merged, self._p(f"{prefix}.w_out")) + self._p(f"{prefix}.b_out")

    def _feed_forward(self, i: int, x: Tensor) -> Tensor:
        prefix = f"block{i}.ff"
        hidden = gelu(matmul(x, self._p(f"{prefix}.w1")) + self._p(f"{prefix}.b1"))
        return matmul(hidden, self._p(f"{prefix}.w2")) + self._p(f"{prefix}.b2")

    def forward(self, embedded) -> Tensor:
        """Map [S, D] (or [B, S, D]) embeddings through the frozen stack."""
        x = embedded if isinstance(embedded, Tensor) else Tensor(np.asarray(embedded, dtype=np.float64))
        S = x.data.shape[-2]
        if x.data.shape[-1] != self.D:
            raise ValueError(f"embedding dim {x.data.shape[-1]} does not match backbone D={self.D}")
        if S > self.T_max:
            raise ValueError(f"sequence length {S} exceeds maximum {self.T_max}")
        x = x + Tensor(self.tensors["positional_table"][:S])
        # 0 on/below the diagonal, large negative above: token t sees <= t
        mask = Tensor(np.triu(np.full((S, S), -1e30), k=1))
        for i in range(self.n_blocks):
            ln1 = layer_norm(x, self._p(f"block{i}.ln1.gain"), self._p(f"block{i}.ln1.bias"))
            x = x + self._attention(i, ln1, mask)
            ln2 = layer_norm(x, self._p(f"block{i}.ln2.gain"), self._p(f"block{i}.ln2.bias"))
            x = x + self._feed_forward(i, ln2)
        return layer_norm(x, self._p("ln_f.gain"), self._p("ln_f.bias"))


def init_mini_backbone(seed: int, V: int = 256, D: int = 64, T_max: int = 512, n_heads: int = 4) -> FrozenBackbone:
    """Deterministic random backbone mirroring the full block structure."""
    if V < 64:
        raise ValueError(f"vocab size {V} below minimum 64")
    if D < 1 or D % n_heads != 0:
        raise ValueError(f"hidden dim {D} not divisible by {n_heads} heads")
    if T_max < 1:
        raise ValueError(f"position budget {T_max} must be positive")
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    tensors["vocab_table"] = rng.normal(0.0, 0.02, size=(V, D))
    tensors["positional_table"] = rng.normal(0.0, 0.01, size=(T_max, D))
    for i in range(N_BLOCKS):
        for suffix, shape in _block_shapes(D).items():
            name = f"block{i}.{suffix}"
            if suffix.startswith("ln") and suffix.endswith("gain"):
                tensors[name] = np.ones(shape)
            elif suffix.endswith("bias") or suffix.startswith(("attn.b", "ff.b")):
                tensors[name] = np.zeros(shape)
            else:
                tensors[name] = rng.normal(0.0, 0.02, size=shape)
    tensors["ln_f.gain"] = np.ones(D)
    tensors["ln_f.bias"] = np.zeros(D)
    tensors["meta.n_heads"] = np.array(float(n_heads))
    return FrozenBackbone(tensors, n_heads=n_heads)


def load_checkpoint(path, expected: dict[str, tuple[int, ...]] | None = None) -> FrozenBackbone:
    """Assemble a backbone from the first 6 blocks of a saved checkpoint."""
    stored = load_checkpoint_file(path)
    if expected:
        for name, shape in expected.items():
            if name not in stored:
                raise ValueError(f"checkpoint missing tensor {name}")
            if tuple(stored[name].shape) != tuple(shape):
                raise ValueError(
                    f"tensor {name} has shape {tuple(stored[name].shape)}, expected {tuple(shape)}"
                )
    for required in ("vocab_table", "positional_table", "ln_f.gain", "ln_f.bias"):
        if required not in stored:
            raise ValueError(f"checkpoint missing tensor {required}")
    D = stored["vocab_table"].shape[1]
    shapes = _block_shapes(D)
    tensors = {
        "vocab_table": stored["vocab_table"],
        "positional_table": stored["positional_table"],
    }
    for i in range(N_BLOCKS):
        for suffix, shape in shapes.items():
            name = f"block{i}.{suffix}"
            if name not in stored:
                raise ValueError(f"checkpoint missing tensor {name}")
            if tuple(stored[name].shape) != shape:
                raise ValueError(
                    f"tensor {name} has shape {tuple(stored[name].shape)}, expected {shape}"
                )
            tensors[name] = stored[name]
    tensors["ln_f.gain"] = stored["ln_f.gain"]
    tensors["ln_f.bias"] = stored["ln_f.bias"]
    n_heads = int(stored["meta.n_heads"]) if "meta.n_heads" in stored else 4
    tensors["meta.n_heads"] = np.array(float(n_heads))
    return FrozenBackbone(tensors, n_heads=n_heads)
