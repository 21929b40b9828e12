"""Decoupled weight-decay Adam step on flat parameter vectors.

The decay term is applied to the pre-step parameter value and never enters
the moment estimates, so a gradient-free step with decay shrinks the
parameters by exactly ``1 - lr * weight_decay``. This module is
self-contained on purpose: there is no autodiff here, it exists to make
the optimizer behaviour testable on analytic objectives.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class OptimState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    @classmethod
    def zeros(cls, n: int, **hyper) -> "OptimState":
        return cls(m=np.zeros(n), v=np.zeros(n), **hyper)

    def __post_init__(self):
        if self.t < 0:
            raise ShapeError("step counter must be non-negative")
        if np.any(self.v < 0):
            raise ShapeError("second moment must be elementwise non-negative")


def _gradient_direction(grads, state: OptimState):
    """Updated moments plus the bias-corrected Adam direction."""
    t = state.t + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    return m, v, t, m_hat / (np.sqrt(v_hat) + state.eps)


def adam_step(params, grads, state: OptimState):
    """Plain Adam step (no decay), same moment bookkeeping as adamw_step."""
    params, grads = _check(params, grads)
    m, v, t, direction = _gradient_direction(grads, state)
    new_params = params - state.lr * direction
    return new_params, replace(state, m=m, v=v, t=t)


def adamw_step(params, grads, state: OptimState):
    """One decoupled-decay step: Adam direction plus a separate shrink.

    ``params <- params - lr * m_hat / (sqrt(v_hat) + eps)
               - lr * weight_decay * params_pre_step``
    """
    params, grads = _check(params, grads)
    m, v, t, direction = _gradient_direction(grads, state)
    new_params = params - state.lr * direction - state.lr * state.weight_decay * params
    return new_params, replace(state, m=m, v=v, t=t)


def _check(params, grads):
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeError(
            f"parameter shape {params.shape} does not match gradient shape {grads.shape}"
        )
    bad = np.flatnonzero(~np.isfinite(grads))
    if len(bad):
        raise ShapeError(f"non-finite gradient at index {int(bad[0])}")
    return params, grads


def minimize(objective_grad, x0, steps: int, **hyper):
    """Run adamw_step repeatedly; returns the final point and its history."""
    x = np.asarray(x0, dtype=np.float64)
    state = OptimState.zeros(x.size, **hyper)
    history = [x.copy()]
    for _ in range(steps):
        x, state = adamw_step(x, objective_grad(x), state)
        history.append(x.copy())
    return x, history
