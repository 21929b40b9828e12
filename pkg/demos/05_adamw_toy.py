"""Decoupled weight decay, demonstrated on analytic objectives.

The decay term never touches the moment estimates: with zero gradients a
step shrinks every parameter by exactly (1 - lr * weight_decay). With a
convex quadratic the iterate walks to the minimum.
"""

import numpy as np

from gaanet.optim import OptimState, adam_step, adamw_step, minimize

lr, wd = 0.01, 0.5
params = np.array([4.0, -2.0, 1.0])
state = OptimState.zeros(3, lr=lr, weight_decay=wd)

stepped, _ = adamw_step(params, np.zeros(3), state)
print("gradient-free step with decay:")
print(f"  before: {params}")
print(f"  after:  {stepped}")
print(f"  ratio:  {stepped / params} (expected {1 - lr * wd})")

# one noisy step: the decoupled step equals plain Adam plus a shrink
rng = np.random.default_rng(0)
grads = rng.normal(size=3)
with_decay, _ = adamw_step(params, grads, state)
adam_only, _ = adam_step(params, grads, state)
print("\ndecoupling identity: adamw == adam - lr*wd*params")
print(f"  max difference: {np.abs(with_decay - (adam_only - lr * wd * params)).max():.2e}")

grad = lambda x: 2 * (x - 3.0)
x, history = minimize(grad, np.array([0.0]), steps=2000, lr=0.01)
print(f"\nminimizing (x - 3)^2 from 0: reached {x[0]:.6f} in 2000 steps")
for step in (0, 100, 500, 1000, 2000):
    print(f"  step {step:>4}: x = {history[step][0]:.4f}")
