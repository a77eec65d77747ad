"""Component-specific prefix prompts.

Each component gets a short text prompt (dataset context, a statistics line
for the window, and a task instruction), embedded with the frozen vocabulary
table and prepended to the reprogrammed patch embeddings. Prompt embeddings
never receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .backbone import FrozenBackbone

DEFAULT_INSTRUCTION = "forecast the next {H} steps given the previous {L} steps [{component}]"
MAX_PROMPT_TOKENS = 64


@dataclass
class PromptTemplate:
    dataset_context: str = ""
    instruction_pattern: str = DEFAULT_INSTRUCTION
    include_stats: bool = True
    include_instruction: bool = True


@dataclass
class PromptEmbedding:
    tokens: list[int]
    embedded: np.ndarray  # [P, D], frozen rows
    P: int


def window_stats(x) -> dict:
    """min/max/mean plus a direction word from the net lag-1 movement."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty window has no statistics")
    delta = float(x[-1] - x[0])
    if abs(delta) < 1e-12:
        direction = "flat"
    else:
        direction = "up" if delta > 0 else "down"
    return {
        "min": float(x.min()),
        "max": float(x.max()),
        "mean": float(x.mean()),
        "direction": direction,
    }


def render_prompt(t: PromptTemplate, component: str, stats: dict | None, L: int, H: int) -> str:
    """Build the prompt text; ablations drop the instruction or the stats line.

    The statistics line always has the same number of whitespace tokens, so
    prompts for different windows of one dataset tokenize to equal lengths.
    """
    parts = []
    if t.dataset_context:
        parts.append(t.dataset_context.strip())
    if t.include_stats:
        if stats is None:
            raise ValueError("template includes statistics but none were given")
        parts.append(
            "min={min:.4g} max={max:.4g} mean={mean:.4g} direction={direction}".format(**stats)
        )
    if t.include_instruction:
        parts.append(t.instruction_pattern.format(H=H, L=L, component=component))
    return " ".join(parts)


def embed_prompt(text: str, backbone: FrozenBackbone, max_tokens: int = MAX_PROMPT_TOKENS) -> PromptEmbedding:
    """Tokenize and embed; over-long prompts are truncated from the left so
    the instruction tail survives."""
    ids = backbone.tokenizer.encode(text)
    if len(ids) > max_tokens:
        ids = ids[len(ids) - max_tokens :]
    if ids:
        embedded = backbone.embed_tokens(ids)
    else:
        embedded = np.zeros((0, backbone.D))
    return PromptEmbedding(tokens=ids, embedded=embedded, P=len(ids))


def prefix_concat(prompt: PromptEmbedding, patches) -> Tensor:
    """Prompt rows first, patch rows after: [..., P+K, D].

    Patches may carry leading batch dimensions; the prompt is broadcast.
    """
    t = patches if isinstance(patches, Tensor) else Tensor(np.asarray(patches, dtype=np.float64))
    D = t.data.shape[-1]
    if prompt.P == 0:
        return t
    if prompt.embedded.shape[1] != D:
        raise ValueError(f"prompt width {prompt.embedded.shape[1]} does not match patches width {D}")
    lead = t.data.shape[:-2]
    rows = np.broadcast_to(prompt.embedded, lead + prompt.embedded.shape)
    return concat([Tensor(np.ascontiguousarray(rows)), t], axis=-2)
