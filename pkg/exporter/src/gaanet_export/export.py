"""Checkpoint to GAAW conversion.

A checkpoint is a torch file holding ``{"config_text": str, "state_dict":
...}``; the config text pins the architecture, so conversion never guesses
shapes. Every state-dict tensor must be consumed by the mapping table or
appear on the explicit ignore list (BN step counters); anything left over
fails the export with the full list of unmapped names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from gaanet.graph import parse_config, serialize_config
from gaanet.weights import WeightArchive, write_weights

from .torchmodel import BN_EPS, GaanetTorchModel, archive_unit_for, conv_unit_names

IGNORED_SUFFIXES = (".bn.num_batches_tracked",)


class ExportError(RuntimeError):
    pass


@dataclass
class ExportManifest:
    source: str
    dtype: str  # "f32" | "f16"
    fold: bool
    seed: int
    mapping: dict[str, str] = field(default_factory=dict)  # torch name -> archive name
    ignored: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "source": self.source,
                "dtype": self.dtype,
                "fold_batchnorm": self.fold,
                "reference_seed": self.seed,
                "mapping": self.mapping,
                "ignored": self.ignored,
            },
            indent=2,
        )


def make_random_checkpoint(config_text: str, path, seed: int = 0) -> None:
    """A freshly initialized checkpoint with non-trivial BN statistics."""
    torch.manual_seed(seed)
    model = GaanetTorchModel(parse_config(config_text))
    gen = torch.Generator().manual_seed(seed + 1)
    for module in model.modules():
        if isinstance(module, torch.nn.BatchNorm2d):
            c = module.num_features
            module.weight.data = torch.empty(c).uniform_(0.8, 1.2, generator=gen)
            module.bias.data = torch.empty(c).normal_(0.0, 0.1, generator=gen)
            module.running_mean = torch.empty(c).normal_(0.0, 0.2, generator=gen)
            module.running_var = torch.empty(c).uniform_(0.5, 1.5, generator=gen)
    torch.save(
        {"config_text": config_text, "state_dict": model.state_dict()}, str(path)
    )


def load_checkpoint(path):
    """Returns (config, model) with the checkpoint weights loaded."""
    ckpt = torch.load(str(path), map_location="cpu", weights_only=True)
    if "config_text" not in ckpt or "state_dict" not in ckpt:
        raise ExportError(f"{path}: checkpoint must hold config_text and state_dict")
    config = parse_config(ckpt["config_text"])
    model = GaanetTorchModel(config)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return config, model


def export_archive(
    model: GaanetTorchModel, fold: bool = True, fp16: bool = False
) -> tuple[WeightArchive, ExportManifest]:
    """Convert the model's state dict into an archive plus mapping table."""
    sd = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    dtype = np.float16 if fp16 else np.float32
    archive = WeightArchive()
    manifest = ExportManifest(
        source="", dtype="f16" if fp16 else "f32", fold=fold, seed=0
    )
    consumed: set[str] = set()

    def take(torch_name: str, archive_name: str) -> np.ndarray:
        if torch_name not in sd:
            raise ExportError(f"checkpoint is missing {torch_name}")
        consumed.add(torch_name)
        manifest.mapping[torch_name] = archive_name
        return sd[torch_name].astype(np.float64)

    for unit_path, kind in conv_unit_names(model.graph):
        unit = archive_unit_for(unit_path)
        if kind == "plain":
            archive.add(unit + ".weight", take(unit_path + ".weight", unit + ".weight"), dtype=dtype)
            archive.add(unit + ".bias", take(unit_path + ".bias", unit + ".bias"), dtype=dtype)
            continue
        w = take(unit_path + ".conv.weight", unit + ".weight")
        gamma = take(unit_path + ".bn.weight", unit + ".bn.gamma")
        beta = take(unit_path + ".bn.bias", unit + ".bn.beta")
        mean = take(unit_path + ".bn.running_mean", unit + ".bn.mean")
        var = take(unit_path + ".bn.running_var", unit + ".bn.var")
        if fold:
            scale = gamma / np.sqrt(var + BN_EPS)
            folded_w = w * scale.reshape(-1, 1, 1, 1)
            folded_b = beta - mean * scale
            manifest.mapping[unit_path + ".bn.weight"] = f"folded:{unit}"
            manifest.mapping[unit_path + ".bn.bias"] = f"folded:{unit}"
            manifest.mapping[unit_path + ".bn.running_mean"] = f"folded:{unit}"
            manifest.mapping[unit_path + ".bn.running_var"] = f"folded:{unit}"
            archive.add(unit + ".weight", folded_w, dtype=dtype)
            archive.add(unit + ".bias", folded_b, dtype=dtype)
        else:
            archive.add(unit + ".weight", w, dtype=dtype)
            archive.add(unit + ".bn.gamma", gamma, dtype=dtype)
            archive.add(unit + ".bn.beta", beta, dtype=dtype)
            archive.add(unit + ".bn.mean", mean, dtype=dtype)
            archive.add(unit + ".bn.var", var, dtype=dtype)
            archive.add(unit + ".bn.eps", np.array([BN_EPS]), dtype=np.float32)

    unmapped = sorted(
        k
        for k in sd
        if k not in consumed and not k.endswith(IGNORED_SUFFIXES)
    )
    manifest.ignored = sorted(k for k in sd if k.endswith(IGNORED_SUFFIXES))
    if unmapped:
        raise ExportError(
            f"{len(unmapped)} checkpoint parameters have no archive mapping: {unmapped}"
        )
    return archive, manifest


def export_checkpoint(
    ckpt_path,
    out_dir,
    fold: bool = True,
    fp16: bool = False,
    seed: int = 0,
) -> dict[str, Path]:
    """Full conversion: archive, config, manifest, and the reference pair."""
    from .reference import emit_reference_pair

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config, model = load_checkpoint(ckpt_path)
    archive, manifest = export_archive(model, fold=fold, fp16=fp16)
    manifest.source = str(ckpt_path)
    manifest.seed = seed

    paths = {
        "archive": out / "model.gaaw",
        "config": out / "model.cfg",
        "manifest": out / "manifest.json",
    }
    write_weights(archive, paths["archive"])
    paths["config"].write_text(serialize_config(config))
    paths["manifest"].write_text(manifest.to_json() + "\n")
    paths.update(emit_reference_pair(model, out, seed=seed))
    return paths
