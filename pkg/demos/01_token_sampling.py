"""
Sampling joint tokens from a patch grid
=======================================

One synthetic clip, two ways of picking J tokens per frame: under the
2-D joints (guided), or at evenly spaced positions of the flattened grid.
"""

import numpy as np

from pangraph.sampling import even_sample, guided_sample, joint_to_patch_index
from pangraph.synth import Generator, SynthSpec

spec = SynthSpec(per_class=5)
gen = Generator(spec)
clip = gen.sample(0)
print("grid", clip.grid.data.shape, "patch", clip.grid.patch_size, "px; image", clip.grid.height, "x", clip.grid.width)

# A joint at pixel (x, y) lands in patch row y // P, column x // P.
x, y = clip.skel2d.coords[0, 0, 0]
print("nose at (%.1f, %.1f) -> patch index %d" % (x, y, joint_to_patch_index(x, y, spec.patch_size, spec.grid_w)))

guided = guided_sample(clip.grid, clip.skel2d)
print("guided tokens", guided.data.shape, "(T, M, J, C)")
print("frame 0 indices", guided.indices[0, 0])

# Joints that walk off the image are clamped to the border patches.
for i in range(gen.size):
    c = gen.sample(i).skel2d.coords
    off = ((c < 0) | (c >= spec.width)).any(-1)
    if off.any():
        t, m, j = np.argwhere(off)[0]
        idx = guided_sample(gen.sample(i).grid, gen.sample(i).skel2d).indices[t, m, j]
        print("clip %d frame %d joint %d at (%.1f, %.1f) -> border patch %d (row %d, col %d)"
              % (i, t, j, *c[t, m, j], idx, idx // spec.grid_w, idx % spec.grid_w))
        break

even = even_sample(clip.grid, persons=1, joints=spec.joints)
print("even tokens", even.data.shape)

# The class signal lives only in patches under joints, so guided tokens
# carry it and even tokens mostly see background.
signal = gen.signal
for name, tokens in (("guided", guided), ("even", even)):
    proj = np.einsum("tjc,jc->tj", tokens.data[:, 0].astype(np.float64), signal)
    print("%-6s mean |projection on class signal| %.3f" % (name, np.abs(proj).mean()))
