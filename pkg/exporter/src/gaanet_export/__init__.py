"""Bridge from torch checkpoints to GAAW weight archives."""

from .export import (
    ExportError,
    ExportManifest,
    export_archive,
    export_checkpoint,
    load_checkpoint,
    make_random_checkpoint,
)
from .reference import emit_reference_pair, reference_input
from .torchmodel import GaanetTorchModel

__all__ = [
    "ExportError",
    "ExportManifest",
    "export_archive",
    "export_checkpoint",
    "load_checkpoint",
    "make_random_checkpoint",
    "emit_reference_pair",
    "reference_input",
    "GaanetTorchModel",
]
