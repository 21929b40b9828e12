"""Cross-implementation agreement: numpy engine vs the torch reference."""

import numpy as np
import pytest
import torch

from gaanet.graph import build_graph, forward, parse_config
from gaanet.weights import read_weights

from gaanet_export import (
    GaanetTorchModel,
    export_checkpoint,
    load_checkpoint,
    make_random_checkpoint,
)

from test_export import SMALL_CFG

TOLERANCE = 1e-3


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    ckpt = tmp_path_factory.mktemp("ckpt") / "model.pt"
    make_random_checkpoint(SMALL_CFG, ckpt, seed=1)
    out = tmp_path_factory.mktemp("export")
    paths = export_checkpoint(ckpt, out, seed=2)
    return ckpt, paths


def load_pair(paths):
    x = read_weights(paths["reference_input"])["input"]
    heads_archive = read_weights(paths["reference_heads"])
    heads = [heads_archive[f"head.{i}"] for i in range(4)]
    return x, heads


class TestForwardAgreement:
    def test_reference_pair_reproduced_within_tolerance(self, exported):
        _, paths = exported
        config = parse_config(paths["config"].read_text())
        graph = build_graph(config)
        archive = read_weights(paths["archive"])
        x, expected_heads = load_pair(paths)
        got_heads = forward(graph, archive, x)
        for i, (got, want) in enumerate(zip(got_heads, expected_heads)):
            assert got.shape == want.shape
            worst = np.abs(got - want).max()
            assert worst <= TOLERANCE, f"head {i} max deviation {worst:.2e}"

    def test_unfolded_archive_agrees_after_load_fold(self, exported):
        ckpt, _ = exported
        import tempfile

        with tempfile.TemporaryDirectory() as out:
            paths = export_checkpoint(ckpt, out, fold=False, seed=2)
            config = parse_config(paths["config"].read_text())
            graph = build_graph(config)
            archive = read_weights(paths["archive"])  # folds bn entries on load
            x, expected_heads = load_pair(paths)
            got_heads = forward(graph, archive, x)
            for got, want in zip(got_heads, expected_heads):
                assert np.abs(got - want).max() <= TOLERANCE

    def test_zero_input_bias_only_propagation(self, tmp_path):
        # zero conv weights leave only BN shifts flowing through the net, so
        # every head must be spatially constant and equal across engines
        ckpt = tmp_path / "zeroconv.pt"
        make_random_checkpoint(SMALL_CFG, ckpt, seed=3)
        payload = torch.load(ckpt, map_location="cpu", weights_only=True)
        sd = payload["state_dict"]
        for name in sd:
            if name.endswith("conv.weight") or (
                ".m." in name and name.endswith(".weight") and sd[name].ndim == 4
            ):
                sd[name] = torch.zeros_like(sd[name])
        torch.save(payload, ckpt)

        paths = export_checkpoint(ckpt, tmp_path / "out", seed=4)
        config = parse_config(paths["config"].read_text())
        graph = build_graph(config)
        archive = read_weights(paths["archive"])

        zero = np.zeros(
            (1, config.input_channels, config.input_size, config.input_size),
            dtype=np.float32,
        )
        numpy_heads = forward(graph, archive, zero)
        _, model = load_checkpoint(ckpt)
        with torch.no_grad():
            torch_heads = [h.numpy() for h in model(torch.from_numpy(zero))]
        for np_head, t_head in zip(numpy_heads, torch_heads):
            assert np.all(np_head == np_head[:, :, :1, :1]), "numpy head not constant"
            assert np.all(t_head == t_head[:, :, :1, :1]), "torch head not constant"
            assert np.abs(np_head - t_head).max() <= TOLERANCE

    def test_head_shapes_match_graph_contract(self, exported):
        _, paths = exported
        config = parse_config(paths["config"].read_text())
        _, heads = load_pair(paths)
        nc = config.class_count
        size = config.input_size
        for head, stride in zip(heads, (4, 8, 16, 32)):
            assert head.shape == (1, 3 * (5 + nc), size // stride, size // stride)
