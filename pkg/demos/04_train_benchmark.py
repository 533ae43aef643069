"""
Training on the synthetic benchmark
===================================

Eight classes, 50 clips each, 17 joints, a 16x16 grid of 64-d tokens.
The full model at desk width trains in a few minutes on one core.

    python3 demos/04_train_benchmark.py            # 15 epochs, full benchmark
    python3 demos/04_train_benchmark.py --quick    # 3 epochs, 20 clips per class; a smoke run, still near chance
"""

import argparse
import logging

from pangraph.experiments import benchmark_model, run
from pangraph.synth import SynthSpec, generate_arrays, temporal_class_ids
from pangraph.trainer import TrainConfig

parser = argparse.ArgumentParser()
parser.add_argument("--quick", action="store_true")
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(message)s")

spec = SynthSpec(per_class=20) if args.quick else SynthSpec()
data = generate_arrays(spec)
print("train", len(data.indices("train")), "val", len(data.indices("val")),
      "temporal classes", temporal_class_ids(spec))

cfg = benchmark_model(data, seed=42)
result = run("full", cfg, data, TrainConfig(epochs=3 if args.quick else 15, seed=42))
print(result.result.csv())
print("best val top-1 %.3f at epoch %d; temporal classes %.3f, spatial classes %.3f (%.0fs)"
      % (result.top1, result.best_epoch, result.temporal_top1, result.spatial_top1, result.seconds))
print("confusion (true rows):")
print(result.evaluation.confusion)
