"""Ghost convolution in slow motion.

A ghost convolution only spends a real convolution on half of its output
channels (the intrinsic maps). The other half (the ghost maps) are made by
a cheap 5x5 depthwise transform of the intrinsic maps. This script builds
one by hand, shows the two halves, and compares its parameter and flop
bill against a standard convolution of the same shape.
"""

import numpy as np

from gaanet import ConvParams, GhostConvSpec, count_flops, count_params, ghost_conv
from gaanet.blocks import ConvWeights, GhostConvWeights, identity_cheap_weights

rng = np.random.default_rng(0)

spec = GhostConvSpec(c1=16, c2=32, k=3, s=1)
print(f"ghost conv {spec.c1}->{spec.c2}: {spec.hidden} intrinsic + {spec.hidden} ghost maps")

weights = GhostConvWeights(
    primary=ConvWeights(
        weight=rng.normal(0, 0.1, spec.primary_params.weight_shape).astype(np.float32),
        bias=np.zeros(spec.hidden, dtype=np.float32),
    ),
    cheap=ConvWeights(
        weight=rng.normal(0, 0.1, spec.cheap_params.weight_shape).astype(np.float32),
        bias=np.zeros(spec.hidden, dtype=np.float32),
    ),
)

x = rng.normal(size=(1, 16, 32, 32)).astype(np.float32)
y = ghost_conv(x, spec, weights)
print(f"input {x.shape} -> output {y.shape}")

# the first half never depends on the cheap branch
intrinsic = y[:, : spec.hidden]
ghost = y[:, spec.hidden :]
print(f"intrinsic half std {intrinsic.std():.4f}, ghost half std {ghost.std():.4f}")

# with an identity cheap kernel the ghost half is literally a copy
plain = GhostConvSpec(c1=16, c2=32, k=3, s=1, act="none")
copycat = GhostConvWeights(primary=weights.primary, cheap=identity_cheap_weights(plain))
y2 = ghost_conv(x, plain, copycat)
print("identity cheap kernel copies the intrinsic maps:",
      bool(np.array_equal(y2[:, :16], y2[:, 16:])))

std = ConvParams(16, 32, 3, padding=1)
print(f"\naccounting on a 32x32 input")
print(f"  standard conv: {count_params(std):6d} params, {count_flops(std, (32, 32)):12,} flops")
print(f"  ghost conv:    {count_params(spec):6d} params, {count_flops(spec, (32, 32)):12,} flops")
saving = 1 - count_flops(spec, (32, 32)) / count_flops(std, (32, 32))
print(f"  flop saving:   {saving:.1%}")
