"""Walk one window through normalize -> patchify -> prompt rendering.

Prints the shapes at each stage and the exact prompt text each component
gets, so you can see what the backbone actually consumes.
"""

import numpy as np

from tsalign.data import synthetic_dataset
from tsalign.decompose import DecompConfig, decompose_batch
from tsalign.preprocess import instance_normalize, patch_count, patchify
from tsalign.prompt import PromptTemplate, render_prompt, window_stats

L, L_P, s = 96, 16, 8
ds = synthetic_dataset(T=L, N=1, seed=5)
x = ds.values[:, 0]

trend, seasonal, residual = decompose_batch(x[None], DecompConfig(k=12, period=24))
components = {"trend": trend[0], "seasonal": seasonal[0], "residual": residual[0]}

print(f"window L={L}, patch_len={L_P}, stride={s} -> K = {patch_count(L, L_P, s)} patches")
template = PromptTemplate(dataset_context="hourly synthetic load")
for name, series in components.items():
    normed, stats = instance_normalize(series)
    patches = patchify(normed, L_P, s)
    text = render_prompt(template, name, window_stats(normed), L=L, H=24)
    print(f"\n[{name}] mean {stats.mean:+.3f}, std {stats.std:.3f}")
    print(f"  patches {patches.patches.shape}, last patch pads the series end")
    print(f"  prompt: {text}")

# the patch-count law, spelled out
print("\npatch count K = floor((L - L_P)/s) + 2:")
for L_, P_, s_ in ((512, 16, 8), (96, 16, 8), (48, 8, 8)):
    print(f"  L={L_:3d} L_P={P_:2d} s={s_} -> K={patch_count(L_, P_, s_)}")
