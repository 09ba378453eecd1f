"""The whole pipeline at desk scale: VQ-VAE labels, leave-one-bearing-out
ASTCN training, three seeds.  Takes roughly eight minutes on one core; pass a
seed list (e.g. ``15``) to make it shorter."""
import sys
from pathlib import Path

import numpy as np

from bearingrul.harness import ExperimentConfig, run_experiment
from bearingrul.metrics import mad

cfg = ExperimentConfig.load(Path(__file__).resolve().parents[1] / "configs" / "desk.json")
if len(sys.argv) > 1:
    cfg.seeds = tuple(int(s) for s in sys.argv[1].split(","))
cfg.output_dir = "results/demo"

res = run_experiment(cfg)

#%% per-fold summary
print("%-11s %7s %7s %7s %7s" % ("bearing", "rmse", "mad", "raw mad", "trend"))
for fold in res.folds:
    m = fold.mean_report
    raw = np.mean([mad(fold.raw_hi[s]) for s in fold.seeds])
    print("%-11s %7.4f %7.4f %7.4f %+7.3f" % (fold.bearing, m.rmse, m.mad, raw, m.trendiness))
print("reports written to", cfg.output_dir)
