"""
Graph blocks and model sizes
============================

CTR-GC refines a shared joint topology per channel. With the gate at zero
it is plain graph convolution. The second half prints parameter counts at
the reference width for every ablation and fusion choice.
"""

import numpy as np

from pangraph.graph import CtrGc, load_topology
from pangraph.models import ModelConfig, count_parameters
from pangraph.rng import Rng
from pangraph.tensor import Tensor

topo = load_topology("coco17")
print("coco17:", topo.num_joints, "joints,", len(topo.edges), "bones")

gc = CtrGc(16, 32, topo.adjacency + np.eye(17), Rng(0), dtype=np.float64)
h = Tensor(Rng(1).normal((2, 8, 17, 16)))
same = np.array_equal(gc(h, Tensor(np.zeros(1))).data, gc(h, None).data)
print("gate 0 equals the shared-topology path bitwise:", same)
lam = Tensor(np.full(1, 0.5))
print("per-sample, per-channel topologies:", gc.refined_topology(h, lam).shape, "(N, J, J, C_out)")

rows = [
    ("full (guided)", {}),
    ("w/o calibration", {"no_calibration": True}),
    ("w/o GC", {"no_gc": True}),
    ("w/o TC", {"no_tc": True}),
    ("w/o PAN", {"no_pan": True}),
    ("C = 768", {"in_channels": 768}),
    ("unified, sum fusion", {"variant": "unified", "fusion": "sum"}),
    ("unified, concat fusion", {"variant": "unified", "fusion": "concat"}),
    ("unified, attention fusion", {"variant": "unified", "fusion": "attention"}),
    ("ensemble", {"variant": "ensemble"}),
]
for name, changes in rows:
    total, _ = count_parameters(ModelConfig(**changes))
    print("%-26s %10d  (%.2fM)" % (name, total, total / 1e6))
