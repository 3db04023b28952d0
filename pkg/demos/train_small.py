"""
Training a small model end to end
=================================

Builds a toy corpus, trains the regression CNN for a handful of epochs and
scores it on held-out clips. The numbers are far from a full run; the point
is the shape of the workflow.
"""

import sys
import tempfile
from pathlib import Path

from spectropitch.metrics import aggregate
from spectropitch.synth import DatasetConfig, build_dataset, load_manifest
from spectropitch.trainer import TrainConfig, evaluate_split, featurize_manifest, train

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="spectropitch_"))

cfg = DatasetConfig(counts={"train": 40, "val": 10, "test": 10}, duration_s=6.144, seed=11)
build_dataset(cfg, work / "data")
manifest = load_manifest(work / "data" / "manifest.json")
groups = {s: featurize_manifest(manifest, split=s) for s in ("train", "val", "test")}
print({s: sum(len(g.images) for g in gs) for s, gs in groups.items()}, "images per split")

model, history = train(groups["train"], groups["val"], TrainConfig(epochs=8, seed=11), out_dir=work / "run")
for epoch, (tr, va) in enumerate(zip(history.train_mse, history.val_mse), start=1):
    print(f"epoch {epoch:2d}  train {tr:.5f}  val {va:.5f}")
print("best epoch", history.best_epoch)

###############################################################################
# Held-out scoring
summary = aggregate(evaluate_split(model, groups["test"]))
print("band %", {k: round(v, 1) for k, v in summary["band_pct"].items()})
print("mean AR", round(summary["mean_ar"], 3))
print("outputs in", work)
