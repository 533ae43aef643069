"""
Which parts matter
==================

Trains the ablations against the full model on one seed and prints accuracy
on the two halves of the label set. Temporal classes differ only in how fast
the joints oscillate, so a model without temporal convolution cannot tell
them apart; pooling the raw grid (no token graph) sees no class signal at all.

    python3 demos/05_ablations.py --epochs 15     # about 30 minutes
"""

import argparse

from pangraph.experiments import SUMMARY_HEADER, benchmark_model, run, run_ensemble
from pangraph.synth import SynthSpec, generate_arrays
from pangraph.trainer import TrainConfig

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=6)
parser.add_argument("--seed", type=int, default=42)
args = parser.parse_args()

data = generate_arrays(SynthSpec())
train_cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
variants = [
    ("full", {}),
    ("full-even", {"sampling": "even"}),
    ("no-calibration", {"no_calibration": True}),
    ("no-calibration-even", {"no_calibration": True, "sampling": "even"}),
    ("no-gc", {"no_gc": True}),
    ("no-tc", {"no_tc": True}),
    ("no-pan", {"no_pan": True}),
    ("skeleton", {"variant": "skeleton"}),
]
runs = {}
print(SUMMARY_HEADER)
for name, changes in variants:
    runs[name] = run(name, benchmark_model(data, seed=args.seed, **changes), data, train_cfg)
    print(runs[name].csv(), flush=True)

# Late fusion needs no extra training: sum the two pathways' logits.
print(run_ensemble(runs["full"], runs["skeleton"], data, train_cfg).csv())
