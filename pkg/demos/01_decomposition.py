"""Decompose a synthetic series into trend + seasonal + residual.

Shows both methods side by side and verifies the additive contract on the
spot. Run from the repo root: python3 demos/01_decomposition.py
"""

import numpy as np

from tsalign.data import synthetic_dataset
from tsalign.decompose import DecompConfig, additive_decompose

ds = synthetic_dataset(T=240, N=1, seed=3, slope=0.02, amplitude=1.5, period=24, noise_std=0.1)
x = ds.values[:, 0]

for method in ("moving_average", "stl"):
    cfg = DecompConfig(k=12, period=24, method=method)
    parts = additive_decompose(x, cfg)
    recon_err = np.max(np.abs(parts.trend + parts.seasonal + parts.residual - x))
    print(f"== {method} ==")
    print(f"  trend range      [{parts.trend.min():+.3f}, {parts.trend.max():+.3f}]")
    print(f"  seasonal range   [{parts.seasonal.min():+.3f}, {parts.seasonal.max():+.3f}]  (mean {parts.seasonal.mean():+.1e})")
    print(f"  residual std     {parts.residual.std():.3f}  (injected noise 0.1)")
    print(f"  reconstruction   max |x - (T+S+R)| = {recon_err:.2e}")

# one period of the extracted seasonal pattern, as numbers
cfg = DecompConfig(k=12, period=24, method="moving_average")
parts = additive_decompose(x, cfg)
print("\nfirst seasonal period (moving_average):")
print("  " + " ".join(f"{v:+.2f}" for v in parts.seasonal[:24]))
