"""
Post calibration as cross attention
===================================

Sampled tokens query the whole grid of their own frame. The output is a
weighted mix of grid values plus a residual projection of the token itself.
"""

import numpy as np

from pangraph.calibration import PostCalibration, attention_maps, calibrate
from pangraph.rng import Rng
from pangraph.sampling import even_sample, guided_sample
from pangraph.synth import Generator, SynthSpec

spec = SynthSpec(per_class=5)
clip = Generator(spec).sample(5)
module = PostCalibration(spec.channels, 32, heads=4, rng=Rng(0), dtype=np.float64)
print("parameters", module.num_parameters(), "= 4 * C * C_R =", 4 * spec.channels * 32)

for name, tokens in (("guided", guided_sample(clip.grid, clip.skel2d)),
                     ("even", even_sample(clip.grid, 1, spec.joints))):
    maps = attention_maps(clip.grid, tokens, module)
    out = calibrate(clip.grid, tokens, module)
    print(name, "maps", maps.shape, "rows sum to 1:", np.allclose(maps.sum(-1), 1), "output", out.shape)

# With the value projection zeroed only the residual path is left.
module.w_v.data[...] = 0
tokens = guided_sample(clip.grid, clip.skel2d)
residual = tokens.data.astype(np.float64) @ module.w_res.data
print("W_V = 0 gives the residual exactly:", np.array_equal(calibrate(clip.grid, tokens, module), residual))

# Attention is per frame: wiping another frame leaves frame 0 alone.
module = PostCalibration(spec.channels, 32, heads=4, rng=Rng(0), dtype=np.float64)
before = calibrate(clip.grid, tokens, module)[0]
clip.grid.data[1:] = 0
print("frame 0 unchanged after zeroing frames 1..T-1:",
      np.array_equal(before, calibrate(clip.grid, tokens, module)[0]))
