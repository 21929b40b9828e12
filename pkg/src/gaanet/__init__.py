"""Ghost-convolution detection toolkit.

Numpy-backed inference blocks (GhostConv, Ghost bottleneck, C3Ghost,
SPPF), a declarative 4-scale detection graph with an extra-small stride-4
head, k-means plus genetic-evolution anchor computation, a decoupled
weight-decay optimizer step, detection metrics (IoU/CIoU, NMS, AP@0.5),
and a bit-exact binary weight archive.
"""

from .anchors import (
    AnchorSet,
    GAConfig,
    LabelSet,
    best_possible_recall,
    evolve_anchors,
    fitness,
    kmeans_anchors,
    load_labels,
)
from .blocks import (
    C3GhostSpec,
    GhostBottleneckSpec,
    GhostConvSpec,
    SPPFSpec,
    c3ghost,
    count_flops,
    count_params,
    ghost_bottleneck,
    ghost_conv,
    sppf,
)
from .graph import (
    Graph,
    NetConfig,
    build_graph,
    decode_detections,
    forward,
    parse_config,
    serialize_config,
)
from .metrics import (
    Detection,
    GroundTruth,
    MetricsReport,
    average_precision,
    ciou,
    evaluate,
    iou,
    match_predictions,
    nms,
)
from .ops import ConvParams, concat_channels, conv2d, letterbox, maxpool2d, silu
from .optim import OptimState, adamw_step
from .pnm import read_pnm, write_pnm
from .weights import WeightArchive, fold_batchnorm, init_random, read_weights, write_weights

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "GAConfig",
    "LabelSet",
    "best_possible_recall",
    "evolve_anchors",
    "fitness",
    "kmeans_anchors",
    "load_labels",
    "C3GhostSpec",
    "GhostBottleneckSpec",
    "GhostConvSpec",
    "SPPFSpec",
    "c3ghost",
    "count_flops",
    "count_params",
    "ghost_bottleneck",
    "ghost_conv",
    "sppf",
    "Graph",
    "NetConfig",
    "build_graph",
    "decode_detections",
    "forward",
    "parse_config",
    "serialize_config",
    "Detection",
    "GroundTruth",
    "MetricsReport",
    "average_precision",
    "ciou",
    "evaluate",
    "iou",
    "match_predictions",
    "nms",
    "ConvParams",
    "concat_channels",
    "conv2d",
    "letterbox",
    "maxpool2d",
    "silu",
    "OptimState",
    "adamw_step",
    "read_pnm",
    "write_pnm",
    "WeightArchive",
    "fold_batchnorm",
    "init_random",
    "read_weights",
    "write_weights",
    "__version__",
]
