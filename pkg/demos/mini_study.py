"""Run a scaled-down version of all three studies and print the CSVs.

Uses small sample counts so the whole script finishes in about a minute;
the full-size configurations live in the README.

Usage: python3 demos/mini_study.py [out_dir]
"""

import sys
from pathlib import Path

from radarcount.studies import (
    ExperimentConfig,
    run_augment_study,
    run_preprocess_study,
    run_transfer_study,
)

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("mini_study_out")
cfg = ExperimentConfig(n_per_class=20, seeds=(0, 1), n_per_class_c=20,
                       max_epochs=40, patience=10, transfer_sizes=(8, 16, 32),
                       kmeans_restarts=2)

print("preprocessing study ...")
run_preprocess_study(cfg, out / "preprocess")
print("augmentation study ...")
run_augment_study(cfg, out / "augment")
print("transfer study ...")
run_transfer_study(cfg, out / "transfer")

for name in ("preprocess/performance.csv", "preprocess/separability.csv",
             "augment/augmentation.csv", "transfer/transfer.csv"):
    print(f"\n=== {name} ===")
    print((out / name).read_text().rstrip())
