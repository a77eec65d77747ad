"""Run a slice of the ablation grid and print the summary table.

Uses a deliberately tiny budget (a few steps per cell) so the grid finishes
in under a minute; the numbers are therefore about plumbing, not science.
The full 9-variant grid is: tsalign ablate --config <run.toml> --seed 0
"""

from tsalign.data import synthetic_dataset
from tsalign.evaluation import ablation_variants, run_ablation
from tsalign.model import ModelConfig
from tsalign.training import TrainConfig

base = ModelConfig(
    L=48, H=8, patch_len=8, stride=8, d_model=16, heads=2,
    vocab_size=64, T_max=64, n_prototypes_seasonal=16, n_prototypes_residual=24,
    k=2, period=6, dataset_context="ablation demo", seed=0,
)
ds = synthetic_dataset(T=400, N=1, seed=2, period=6, noise_std=0.05)

variants = ablation_variants(
    ["default", "A1_no_alignment", "B1_trend_only", "D1_no_instruction", "C1_noise_anchors"]
)
table = run_ablation(
    base, ds,
    variants=variants,
    seeds=(0, 1),
    train_config=TrainConfig(learning_rate=2e-3, batch_size=4, max_epochs=2, max_steps=40, seed=0),
)

print(table.summary_text())
for cell in table.cells[:2]:
    print(f"{cell.variant} seed {cell.seed}: anchor file hash {cell.extra['anchor_file_hash'][:16]}...")
