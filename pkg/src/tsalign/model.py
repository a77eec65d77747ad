"""Full model assembly: config, trainable modules, and the batched forward.

The forward pass follows the component pipeline per channel: decompose,
normalize, patchify, embed, align (cross-attention against anchors or
probed prototypes), prefix the component prompt, run the frozen backbone,
slice patch positions, project to the horizon, denormalize, and sum.
Channels share weights, so a [B, N, L] batch is flattened to [B*N, L] and
processed in one pass per component.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .alignment import (
    AlignmentContext,
    AnchorSet,
    CrossAttentionBlock,
    PrototypeBank,
    align_component,
    load_anchor_words,
    packaged_anchor_path,
    resolve_anchor_embeddings,
)
from .autodiff import Tensor, concat, reshape
from .backbone import FrozenBackbone, init_mini_backbone
from .checkpoint import load_checkpoint_file, save_checkpoint
from .decompose import METHODS, DecompConfig, decompose_batch
from .head import ProjectionHead, project_component, slice_patch_states
from .preprocess import PatchEmbedder, instance_normalize_batch, patch_count, patchify_batch
from .prompt import PromptTemplate, embed_prompt, prefix_concat, render_prompt, window_stats

COMPONENTS = ("trend", "seasonal", "residual")


def derive_seed(base: int, name: str) -> int:
    """Stable per-module seed so adding modules never reshuffles the others."""
    digest = hashlib.sha256(f"{base}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class ModelConfig:
    L: int = 512
    H: int = 96
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    heads: int = 4
    vocab_size: int = 2048  # mini-backbone vocabulary; prototype counts must fit below it
    T_max: int = 512
    n_prototypes_seasonal: int = 100
    n_prototypes_residual: int = 500
    k: int = 12
    period: int = 24
    method: str = "moving_average"
    loess_bandwidth: float = 0.3
    anchor_file: str | None = None  # None -> bundled default list
    align_trend: bool = True
    align_seasonal: bool = True
    align_residual: bool = True
    per_channel_alignment: bool = False
    n_channels: int = 1
    dataset_context: str = ""
    include_stats: bool = True
    include_instruction: bool = True
    max_prompt_tokens: int = 64
    soft_prompt_len: int = 0  # 0 disables the trainable soft prompt
    seed: int = 0

    @property
    def K(self) -> int:
        return patch_count(self.L, self.patch_len, self.stride)

    def alignment_active(self) -> bool:
        return self.align_trend or self.align_seasonal or self.align_residual

    def validate(self, anchor_count: int | None = None) -> list[str]:
        """Return every violated constraint (empty list when valid)."""
        errors = []
        if self.L < 1:
            errors.append(f"L={self.L} must be >= 1")
        if self.H < 1:
            errors.append(f"H={self.H} must be >= 1")
        if not 1 <= self.patch_len <= max(self.L, 1):
            errors.append(f"patch_len={self.patch_len} outside [1, L={self.L}]")
        if not 1 <= self.stride <= self.patch_len:
            errors.append(f"stride={self.stride} outside [1, patch_len={self.patch_len}]")
        if self.d_model < 1 or self.d_model % self.heads != 0:
            errors.append(f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.vocab_size < 64:
            errors.append(f"vocab_size={self.vocab_size} below minimum 64")
        if self.T_max < 1:
            errors.append(f"T_max={self.T_max} must be positive")
        if self.k < 0:
            errors.append(f"k={self.k} must be >= 0")
        if self.period < 1:
            errors.append(f"period={self.period} must be >= 1")
        if self.period > self.L:
            errors.append(f"period={self.period} exceeds window L={self.L}")
        if self.method not in METHODS:
            errors.append(f"method={self.method!r} not one of {METHODS}")
        if self.method == "stl" and self.L < 2 * self.period:
            errors.append(f"stl needs L >= 2*period, got L={self.L}, period={self.period}")
        if not 0 < self.loess_bandwidth <= 1:
            errors.append(f"loess_bandwidth={self.loess_bandwidth} outside (0, 1]")
        if self.n_channels < 1:
            errors.append(f"n_channels={self.n_channels} must be >= 1")
        if self.soft_prompt_len < 0:
            errors.append(f"soft_prompt_len={self.soft_prompt_len} must be >= 0")
        if self.max_prompt_tokens < 0:
            errors.append(f"max_prompt_tokens={self.max_prompt_tokens} must be >= 0")

        # prototype sparsity ordering: A < V'_seasonal < V'_residual < V
        s, r, V = self.n_prototypes_seasonal, self.n_prototypes_residual, self.vocab_size
        if not s < r:
            errors.append(f"n_prototypes_seasonal={s} must be < n_prototypes_residual={r}")
        if not r < V:
            errors.append(f"n_prototypes_residual={r} must be < vocab_size={V}")
        if s < 1:
            errors.append(f"n_prototypes_seasonal={s} must be >= 1")
        if anchor_count is not None and not anchor_count < s:
            errors.append(f"anchor count {anchor_count} must be < n_prototypes_seasonal={s}")
        return errors


class ForecastModel:
    def __init__(self, cfg: ModelConfig, backbone: FrozenBackbone | None = None):
        anchor_path = cfg.anchor_file if cfg.anchor_file else packaged_anchor_path("default")
        anchor_words = load_anchor_words(anchor_path) if cfg.align_trend else None
        errors = cfg.validate(anchor_count=len(anchor_words) if anchor_words else None)
        if errors:
            raise ValueError("invalid model config: " + "; ".join(errors))
        if backbone is None:
            backbone = init_mini_backbone(
                derive_seed(cfg.seed, "backbone"),
                V=cfg.vocab_size,
                D=cfg.d_model,
                T_max=cfg.T_max,
                n_heads=cfg.heads,
            )
        if backbone.D != cfg.d_model:
            raise ValueError(f"backbone D={backbone.D} does not match config d_model={cfg.d_model}")
        if backbone.V != cfg.vocab_size:
            raise ValueError(f"backbone V={backbone.V} does not match config vocab_size={cfg.vocab_size}")
        self.cfg = cfg
        self.backbone = backbone
        self.template = PromptTemplate(
            dataset_context=cfg.dataset_context,
            include_stats=cfg.include_stats,
            include_instruction=cfg.include_instruction,
        )

        self.anchors: AnchorSet | None = None
        if cfg.align_trend:
            self.anchors = resolve_anchor_embeddings(anchor_words, backbone)
        self.anchor_path = str(anchor_path)

        self.embedders = {
            c: PatchEmbedder(cfg.patch_len, cfg.d_model, seed=derive_seed(cfg.seed, f"embedder.{c}"))
            for c in COMPONENTS
        }
        self.blocks: dict = {}
        for c in COMPONENTS:
            if not self._aligned(c):
                continue
            if cfg.per_channel_alignment:
                for j in range(cfg.n_channels):
                    self.blocks[(c, j)] = CrossAttentionBlock(
                        cfg.d_model, cfg.heads, c, seed=derive_seed(cfg.seed, f"align.{c}.ch{j}")
                    )
            else:
                self.blocks[c] = CrossAttentionBlock(
                    cfg.d_model, cfg.heads, c, seed=derive_seed(cfg.seed, f"align.{c}")
                )
        self.banks: dict[str, PrototypeBank] = {}
        if cfg.align_seasonal:
            self.banks["seasonal"] = PrototypeBank(
                cfg.n_prototypes_seasonal, cfg.vocab_size, "seasonal",
                seed=derive_seed(cfg.seed, "bank.seasonal"),
            )
        if cfg.align_residual:
            self.banks["residual"] = PrototypeBank(
                cfg.n_prototypes_residual, cfg.vocab_size, "residual",
                seed=derive_seed(cfg.seed, "bank.residual"),
            )
        self.heads = {
            c: ProjectionHead(cfg.K, cfg.d_model, cfg.H, c, seed=derive_seed(cfg.seed, f"head.{c}"))
            for c in COMPONENTS
        }
        self.soft_prompts: dict[str, Tensor] = {}
        if cfg.soft_prompt_len > 0:
            for c in COMPONENTS:
                rng = np.random.default_rng(derive_seed(cfg.seed, f"softprompt.{c}"))
                self.soft_prompts[c] = Tensor(
                    rng.normal(0.0, 0.02, size=(cfg.soft_prompt_len, cfg.d_model)),
                    requires_grad=True,
                )

    def _aligned(self, component: str) -> bool:
        return {
            "trend": self.cfg.align_trend,
            "seasonal": self.cfg.align_seasonal,
            "residual": self.cfg.align_residual,
        }[component]

    # -- parameter bookkeeping ---------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        """Trainable tensors by stable name; the optimizer updates exactly these."""
        params: dict[str, Tensor] = {}
        for c in COMPONENTS:
            params[f"embedder.{c}.weight"] = self.embedders[c].weight
            params[f"embedder.{c}.bias"] = self.embedders[c].bias
        for key, block in self.blocks.items():
            name = key if isinstance(key, str) else f"{key[0]}.ch{key[1]}"
            params[f"align.{name}.W_Q"] = block.W_Q
            params[f"align.{name}.W_K"] = block.W_K
            params[f"align.{name}.W_V"] = block.W_V
        for c, bank in self.banks.items():
            params[f"bank.{c}.probe"] = bank.probe
        for c in COMPONENTS:
            params[f"head.{c}.weight"] = self.heads[c].weight
            params[f"head.{c}.bias"] = self.heads[c].bias
        for c, sp in self.soft_prompts.items():
            params[f"softprompt.{c}"] = sp
        return params

    def frozen_arrays(self) -> dict[str, np.ndarray]:
        frozen = {f"backbone.{k}": v for k, v in self.backbone.tensors.items()}
        if self.anchors is not None:
            frozen["anchors.embeddings"] = self.anchors.embeddings
        return frozen

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        tensors = {name: t.data for name, t in self.parameters().items()}
        digest = bytes.fromhex(self.backbone.fingerprint)
        tensors["meta.backbone_fingerprint"] = np.frombuffer(digest, dtype=np.uint8).astype(np.float64)
        save_checkpoint(path, tensors)

    def load(self, path) -> None:
        stored = load_checkpoint_file(path)
        fp_name = "meta.backbone_fingerprint"
        if fp_name not in stored:
            raise ValueError(f"checkpoint missing tensor {fp_name}")
        digest = bytes.fromhex(self.backbone.fingerprint)
        ours = np.frombuffer(digest, dtype=np.uint8).astype(np.float64)
        if not np.array_equal(stored[fp_name], ours):
            raise ValueError("checkpoint was trained against a different backbone")
        params = self.parameters()
        for name, tensor in params.items():
            if name not in stored:
                raise ValueError(f"checkpoint missing tensor {name}")
            if stored[name].shape != tensor.data.shape:
                raise ValueError(
                    f"tensor {name} has shape {stored[name].shape}, expected {tensor.data.shape}"
                )
        for name, tensor in params.items():
            tensor.data = stored[name]

    # -- forward -------------------------------------------------------------

    def _align(self, component: str, embedded: Tensor, B: int, N: int):
        """Route patch embeddings through the component's alignment, if any."""
        if not self._aligned(component):
            return embedded, None
        if component == "trend":
            ctx_kw = {"anchors": self.anchors}
        else:
            ctx_kw = {"bank": self.banks[component], "vocab_table": self.backbone.tensors["vocab_table"]}
        if not self.cfg.per_channel_alignment:
            ctx = AlignmentContext(block=self.blocks[component], **ctx_kw)
            return align_component(component, embedded, ctx)

        K, D = embedded.data.shape[-2], embedded.data.shape[-1]
        per_ch = reshape(embedded, (B, N, K, D))
        outs, weights = [], []
        for j in range(N):
            ctx = AlignmentContext(block=self.blocks[(component, j)], **ctx_kw)
            Z_j, w_j = align_component(component, per_ch[:, j], ctx)
            outs.append(reshape(Z_j, (B, 1, K, D)))
            weights.append(w_j)
        stacked = reshape(concat(outs, axis=1), (B * N, K, D))
        return stacked, weights

    def _prompts_for(self, component: str, normed: np.ndarray):
        """Render and embed one prompt per row; all rows must tokenize equally."""
        embeddings = []
        text_sample = None
        for row in normed:
            text = render_prompt(
                self.template,
                component,
                window_stats(row) if self.cfg.include_stats else None,
                L=self.cfg.L,
                H=self.cfg.H,
            )
            if text_sample is None:
                text_sample = text
            embeddings.append(embed_prompt(text, self.backbone, self.cfg.max_prompt_tokens))
        lengths = {p.P for p in embeddings}
        if len(lengths) > 1:
            raise ValueError(f"prompt lengths differ across batch: {sorted(lengths)}")
        P = lengths.pop()
        if P == 0:
            return None, 0, text_sample
        stacked = np.stack([p.embedded for p in embeddings])  # [BN, P, D]
        return stacked, P, text_sample

    def forward_batch(self, X: np.ndarray, want_attention: bool = False) -> dict:
        """Forecast a [B, N, L] batch; returns graph tensors for training.

        Output dict: combined [B, N, H] Tensor, per-component denormalized
        Tensors, attention weights (None for unaligned components), stats,
        prompt text samples, and prompt lengths.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"expected [B, N, L] batch, got shape {X.shape}")
        B, N, L = X.shape
        if L != self.cfg.L:
            raise ValueError(f"window length {L} does not match config L={self.cfg.L}")
        if self.cfg.per_channel_alignment and N != self.cfg.n_channels:
            raise ValueError(f"model built for {self.cfg.n_channels} channels, got {N}")
        flat = X.reshape(B * N, L)
        dcfg = DecompConfig(
            k=self.cfg.k, period=self.cfg.period, method=self.cfg.method,
            loess_bandwidth=self.cfg.loess_bandwidth,
        )
        parts = dict(zip(COMPONENTS, decompose_batch(flat, dcfg)))

        denorm: dict[str, Tensor] = {}
        normalized: dict[str, Tensor] = {}
        attention: dict[str, object] = {}
        stats_out: dict[str, object] = {}
        prompts: dict[str, str] = {}
        prompt_lens: dict[str, int] = {}
        for c in COMPONENTS:
            normed, stats = instance_normalize_batch(parts[c])
            patches = patchify_batch(normed, self.cfg.patch_len, self.cfg.stride)
            embedded = self.embedders[c].embed(patches)  # [BN, K, D]
            Z, attn = self._align(c, embedded, B, N)
            prompt_rows, P, text = self._prompts_for(c, normed)
            seq = Z
            if prompt_rows is not None:
                seq = concat([Tensor(prompt_rows), seq], axis=-2)
            if c in self.soft_prompts:
                soft = self.soft_prompts[c]
                rows = reshape(soft, (1,) + soft.data.shape)
                tiled = concat([rows] * (B * N), axis=0)
                seq = concat([tiled, seq], axis=-2)
                P += self.cfg.soft_prompt_len
            hidden = self.backbone.forward(seq)
            states = slice_patch_states(hidden, P, self.cfg.K)
            y_norm = project_component(states, self.heads[c])  # [BN, H]
            scale = Tensor((stats.std + stats.epsilon))
            offset = Tensor(stats.mean)
            y = y_norm * scale + offset
            normalized[c] = reshape(y_norm, (B, N, self.cfg.H))
            denorm[c] = reshape(y, (B, N, self.cfg.H))
            attention[c] = attn
            stats_out[c] = stats
            prompts[c] = text
            prompt_lens[c] = P

        combined = denorm["trend"] + denorm["seasonal"] + denorm["residual"]
        return {
            "combined": combined,
            "denormalized": denorm,
            "normalized": normalized,
            "attention": attention,
            "stats": stats_out,
            "prompts": prompts,
            "prompt_lengths": prompt_lens,
        }

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Forecast [B, N, L] -> [B, N, H] as plain arrays (no gradient tape)."""
        return self.forward_batch(X)["combined"].data
