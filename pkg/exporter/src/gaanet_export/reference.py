"""Cross-implementation verification fixtures.

A reference pair is a deterministic random input plus the raw head maps
the torch model computes for it, both serialized in the GAAW tensor
layout. Any other engine claiming to implement the same graph must
reproduce the heads from the input within float-order tolerance.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from gaanet.weights import WeightArchive, write_weights

from .torchmodel import GaanetTorchModel


def reference_input(config, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    shape = (1, config.input_channels, config.input_size, config.input_size)
    return rng.random(shape).astype(np.float32)


def emit_reference_pair(
    model: GaanetTorchModel, out_dir, seed: int = 0
) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    x = reference_input(model.config, seed)
    model.eval()
    with torch.no_grad():
        heads = model(torch.from_numpy(x))

    input_archive = WeightArchive()
    input_archive.add("input", x)
    heads_archive = WeightArchive()
    for i, head in enumerate(heads):
        heads_archive.add(f"head.{i}", head.numpy())

    paths = {
        "reference_input": out / "reference_input.gaaw",
        "reference_heads": out / "reference_heads.gaaw",
    }
    write_weights(input_archive, paths["reference_input"])
    write_weights(heads_archive, paths["reference_heads"])
    return paths
