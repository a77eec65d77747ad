"""Export the trend-patch vs anchor-word attention map (the case-study view).

Needs non-overlapping patches (stride == patch_len). Prints the strongest
anchor per patch; which anchor wins on an untrained model is seed lottery,
the row normalization is the part that always holds.
"""

import os
import tempfile

import numpy as np

from tsalign.data import make_windows, synthetic_dataset
from tsalign.evaluation import export_attention_map
from tsalign.model import ForecastModel, ModelConfig

cfg = ModelConfig(
    L=96, H=24, patch_len=16, stride=16,  # non-overlapping
    d_model=32, heads=4, vocab_size=128, T_max=128,
    n_prototypes_seasonal=32, n_prototypes_residual=64,
    k=12, period=24, dataset_context="attention demo", seed=0,
)
ds = synthetic_dataset(T=160, N=1, seed=7, slope=0.05, noise_std=0.02)
window = make_windows(ds, cfg.L, cfg.H, stride=8)[0]

model = ForecastModel(cfg)
out_path = os.path.join(tempfile.gettempdir(), "attention_demo.tsv")
amap = export_attention_map(model, window, path=out_path)
print(f"attention matrix {amap.weights.shape}: K={amap.weights.shape[0]} patches x {len(amap.labels)} anchors")
print(f"row sums: {amap.weights.sum(axis=1)}")

print("\nstrongest anchor per patch:")
for i, row in enumerate(amap.weights):
    j = int(np.argmax(row))
    print(f"  patch {i}: {amap.labels[j]:<12} weight {row[j]:.3f}")

per_head = export_attention_map(model, window, per_head=True)
print(f"\nper-head export shape: {per_head.weights.shape}  (head-averaged map written to {out_path})")
