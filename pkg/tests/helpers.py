"""Small shared utilities for the test suite."""

import numpy as np


def random_mapping(shapes: dict, rng, scale=0.5):
    """Random float32 arrays for every (name, shape) in a weight manifest."""
    return {
        name: rng.normal(0.0, scale, size=shape).astype(np.float32)
        for name, shape in shapes.items()
    }


def zero_mapping(shapes: dict):
    return {name: np.zeros(shape, dtype=np.float32) for name, shape in shapes.items()}
