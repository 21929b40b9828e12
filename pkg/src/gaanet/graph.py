"""Declarative detection graph: parse, resolve, execute, decode.

A config is line-oriented text with three sections::

    [net]
    class_count=4
    ...
    anchors=<24 comma-separated pixel values, finest scale first>

    [backbone]
    from=-1 repeats=1 type=Conv args=128,6,2
    ...

    [head]
    ...
    from=21,24,27,30 repeats=1 type=Detect args=

Layer indices run continuously across backbone and head; ``from`` entries
are absolute indices or negative offsets (-1 = previous layer). ``repeats``
above 1 is only meaningful for C3Ghost, where it is the nominal bottleneck
count before the depth multiplier. Channel arguments are nominal values;
building the graph multiplies them by ``width_multiple`` and rounds to the
nearest multiple of 8. Unknown keys, block types, and dangling indices are
rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .anchors import AnchorSet
from .blocks import (
    C3GhostSpec,
    C3GhostWeights,
    ConvWeights,
    GhostConvSpec,
    GhostConvWeights,
    SPPFSpec,
    SPPFWeights,
    autopad,
    c3ghost,
    ghost_conv,
    sppf,
)
from .errors import ConfigError, ShapeError
from .metrics import Detection
from .ops import ConvParams, concat_channels, conv2d, sigmoid, upsample_nearest2x

BLOCK_TYPES = ("Conv", "GhostConv", "C3Ghost", "SPPF", "Upsample", "Concat", "Detect")
NET_KEYS = (
    "class_count",
    "input_channels",
    "input_size",
    "depth_multiple",
    "width_multiple",
    "anchors",
)
LAYER_KEYS = ("from", "repeats", "type", "args")

#: outputs per anchor: box offsets (4) + objectness
BOX_FIELDS = 5


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class LayerDef:
    sources: tuple[int, ...]  # absolute indices of inputs
    repeats: int
    kind: str
    args: tuple[float, ...]


@dataclass(frozen=True)
class NetConfig:
    class_count: int
    input_channels: int
    input_size: int
    depth_multiple: float
    width_multiple: float
    anchors: AnchorSet
    layers: tuple[LayerDef, ...]
    backbone_len: int

    def __post_init__(self):
        if self.class_count < 1:
            raise ConfigError("class_count must be positive")
        if self.input_channels not in (1, 3):
            raise ConfigError("input_channels must be 1 or 3")
        if self.depth_multiple <= 0 or self.width_multiple <= 0:
            raise ConfigError("multipliers must be positive")
        detects = [l for l in self.layers if l.kind == "Detect"]
        if len(detects) != 1:
            raise ConfigError(f"expected exactly one Detect layer, got {len(detects)}")
        if self.layers[-1].kind != "Detect":
            raise ConfigError("Detect must be the final layer")
        if len(detects[0].sources) != 4:
            raise ConfigError("Detect must consume exactly 4 feature scales")
        if len(self.anchors.pairs) != 12 or self.anchors.scales != 4:
            raise ConfigError("detection graph needs 12 anchors in 4 scale groups")


def _parse_layer_line(line: str, index: int, path_hint: str) -> LayerDef:
    fields = {}
    for token in line.split():
        if "=" not in token:
            raise ConfigError(f"{path_hint}: malformed token {token!r}")
        key, value = token.split("=", 1)
        if key not in LAYER_KEYS:
            raise ConfigError(f"{path_hint}: unknown layer key {key!r}")
        if key in fields:
            raise ConfigError(f"{path_hint}: duplicate key {key!r}")
        fields[key] = value
    missing = [k for k in LAYER_KEYS if k not in fields]
    if missing:
        raise ConfigError(f"{path_hint}: missing layer keys {missing}")
    kind = fields["type"]
    if kind not in BLOCK_TYPES:
        raise ConfigError(f"{path_hint}: unknown block type {kind!r}")
    if index == 0:
        # the first layer reads the network input, written as from=-1
        if fields["from"] != "-1":
            raise ConfigError(f"{path_hint}: the first layer must use from=-1")
        sources = []
    else:
        sources = []
        for part in fields["from"].split(","):
            src = int(part)
            if src < 0:
                src = index + src
            if not 0 <= src < index:
                raise ConfigError(
                    f"{path_hint}: from-index {part} does not refer to an earlier layer"
                )
            sources.append(src)
    repeats = int(fields["repeats"])
    if repeats < 1:
        raise ConfigError(f"{path_hint}: repeats must be >= 1")
    if repeats > 1 and kind != "C3Ghost":
        raise ConfigError(f"{path_hint}: repeats > 1 only applies to C3Ghost")
    args = tuple(float(a) for a in fields["args"].split(",") if a != "")
    _validate_args(kind, args, path_hint)
    if kind not in ("Concat", "Detect") and index > 0 and len(sources) != 1:
        raise ConfigError(f"{path_hint}: {kind} takes exactly one input")
    return LayerDef(sources=tuple(sources), repeats=repeats, kind=kind, args=args)


def _validate_args(kind: str, args: tuple, hint: str) -> None:
    counts = {
        "Conv": (3,),
        "GhostConv": (3,),
        "C3Ghost": (1, 2),
        "SPPF": (2,),
        "Upsample": (0,),
        "Concat": (0,),
        "Detect": (0,),
    }
    if len(args) not in counts[kind]:
        raise ConfigError(f"{hint}: {kind} takes {counts[kind]} args, got {len(args)}")


def parse_config(text: str) -> NetConfig:
    """Parse configuration text into a validated NetConfig."""
    section = None
    net: dict = {}
    backbone: list[str] = []
    head: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line not in ("[net]", "[backbone]", "[head]"):
                raise ConfigError(f"line {lineno}: unknown section {line}")
            section = line[1:-1]
            continue
        if section is None:
            raise ConfigError(f"line {lineno}: content before any section")
        if section == "net":
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in NET_KEYS:
                raise ConfigError(f"line {lineno}: unknown [net] key {key!r}")
            if key in net:
                raise ConfigError(f"line {lineno}: duplicate [net] key {key!r}")
            net[key] = value.strip()
        elif section == "backbone":
            backbone.append((lineno, line))
        else:
            head.append((lineno, line))

    missing = [k for k in NET_KEYS if k not in net]
    if missing:
        raise ConfigError(f"missing [net] keys {missing}")
    anchor_values = [v for v in net["anchors"].split(",") if v.strip() != ""]
    if len(anchor_values) != 24:
        raise ConfigError(f"anchors must list 24 values, got {len(anchor_values)}")

    layers = []
    for index, (lineno, line) in enumerate(backbone + head):
        layers.append(_parse_layer_line(line, index, f"line {lineno}"))

    return NetConfig(
        class_count=int(net["class_count"]),
        input_channels=int(net["input_channels"]),
        input_size=int(net["input_size"]),
        depth_multiple=float(net["depth_multiple"]),
        width_multiple=float(net["width_multiple"]),
        anchors=AnchorSet.from_flat(anchor_values),
        layers=tuple(layers),
        backbone_len=len(backbone),
    )


def serialize_config(config: NetConfig) -> str:
    """Canonical text form; parse(serialize(c)) == c."""
    lines = [
        "[net]",
        f"class_count={config.class_count}",
        f"input_channels={config.input_channels}",
        f"input_size={config.input_size}",
        f"depth_multiple={config.depth_multiple!r}",
        f"width_multiple={config.width_multiple!r}",
        "anchors=" + ",".join(repr(v) for v in config.anchors.to_flat()),
    ]

    def fmt(value: float) -> str:
        return str(int(value)) if float(value).is_integer() else repr(value)

    for section, members in (
        ("backbone", config.layers[: config.backbone_len]),
        ("head", config.layers[config.backbone_len :]),
    ):
        lines.append("")
        lines.append(f"[{section}]")
        for layer in members:
            src = ",".join(str(s) for s in layer.sources) if layer.sources else "-1"
            args = ",".join(fmt(a) for a in layer.args)
            lines.append(
                f"from={src} repeats={layer.repeats} type={layer.kind} args={args}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# graph resolution


def round_to_multiple_of_8(x: float) -> int:
    """Nearest multiple of 8, never below 8."""
    return max(8, int(round(x / 8.0)) * 8)


@dataclass(frozen=True)
class DetectSpec:
    in_channels: tuple[int, ...]
    class_count: int

    @property
    def out_channels(self) -> int:
        return 3 * (BOX_FIELDS + self.class_count)

    def conv_params(self, scale: int) -> ConvParams:
        return ConvParams(self.in_channels[scale], self.out_channels, 1)

    def weight_shapes(self, prefix: str = "") -> dict[str, tuple[int, ...]]:
        shapes = {}
        for i in range(len(self.in_channels)):
            p = self.conv_params(i)
            shapes[f"{prefix}m.{i}.weight"] = p.weight_shape
            shapes[f"{prefix}m.{i}.bias"] = (self.out_channels,)
        return shapes

    def param_count(self) -> int:
        return sum(
            self.conv_params(i).param_count() for i in range(len(self.in_channels))
        )


@dataclass(frozen=True)
class Node:
    index: int
    kind: str
    sources: tuple[int, ...]
    spec: object  # ConvParams | block spec | DetectSpec | None
    out_channels: int
    stride: int
    prefix: str


@dataclass
class Graph:
    """Resolved, executable layer graph."""

    config: NetConfig
    nodes: tuple[Node, ...]
    detect_sources: tuple[int, ...]
    strides: tuple[int, ...]

    def weight_manifest(self) -> dict[str, tuple[int, ...]]:
        manifest: dict[str, tuple[int, ...]] = {}
        for node in self.nodes:
            if node.spec is None:
                continue
            if isinstance(node.spec, ConvParams):
                manifest[node.prefix + "weight"] = node.spec.weight_shape
                manifest[node.prefix + "bias"] = (node.spec.out_channels,)
            else:
                manifest.update(node.spec.weight_shapes(node.prefix))
        return manifest

    def param_count(self) -> int:
        return int(sum(int(np.prod(s)) for s in self.weight_manifest().values()))

    def per_node_params(self) -> list[tuple[int, str, int, int]]:
        """(index, kind, out_channels, params) per node."""
        rows = []
        for node in self.nodes:
            if node.spec is None:
                count = 0
            elif isinstance(node.spec, ConvParams):
                count = node.spec.param_count()
            else:
                count = node.spec.param_count()
            rows.append((node.index, node.kind, node.out_channels, count))
        return rows

    def flop_count(self, input_size: int | None = None) -> int:
        return sum(f for *_rest, f in self.per_node_flops(input_size))

    def per_node_flops(self, input_size: int | None = None):
        """(index, kind, h, w, flops) rows on the given square input."""
        size = input_size or self.config.input_size
        hw: dict[int, tuple[int, int]] = {}
        rows = []
        for node in self.nodes:
            src_hw = hw[node.sources[0]] if node.sources else (size, size)
            h, w = src_hw
            if isinstance(node.spec, ConvParams):
                flops = node.spec.flop_count(h, w)
                out_hw = node.spec.out_hw(h, w)
            elif isinstance(node.spec, GhostConvSpec):
                flops = node.spec.flop_count(h, w)
                out_hw = node.spec.out_hw(h, w)
            elif isinstance(node.spec, (C3GhostSpec, SPPFSpec)):
                flops = node.spec.flop_count(h, w)
                out_hw = (h, w)
            elif isinstance(node.spec, DetectSpec):
                flops = 0
                for i, src in enumerate(node.sources):
                    sh, sw = hw[src]
                    flops += node.spec.conv_params(i).flop_count(sh, sw)
                out_hw = (h, w)
            elif node.kind == "Upsample":
                flops, out_hw = 0, (2 * h, 2 * w)
            else:  # Concat
                flops, out_hw = 0, (h, w)
            hw[node.index] = out_hw
            rows.append((node.index, node.kind, out_hw[0], out_hw[1], flops))
        return rows


def build_graph(config: NetConfig) -> Graph:
    """Resolve channels, repeats, and strides into an executable graph."""
    width = lambda c: round_to_multiple_of_8(c * config.width_multiple)
    depth = lambda n: max(1, round(n * config.depth_multiple))
    channels: dict[int, int] = {}
    strides: dict[int, int] = {}
    nodes: list[Node] = []

    for index, layer in enumerate(config.layers):
        prefix = f"layers.{index}."
        if index == 0:
            c_in, stride_in = config.input_channels, 1
        else:
            c_in = channels[layer.sources[0]]
            stride_in = strides[layer.sources[0]]

        if layer.kind == "Conv":
            c2, k, s = width(layer.args[0]), int(layer.args[1]), int(layer.args[2])
            spec = ConvParams(c_in, c2, k, s, autopad(k), activation="silu")
            out_c, out_stride = c2, stride_in * s
        elif layer.kind == "GhostConv":
            c2, k, s = width(layer.args[0]), int(layer.args[1]), int(layer.args[2])
            spec = GhostConvSpec(c_in, c2, k, s)
            out_c, out_stride = c2, stride_in * s
        elif layer.kind == "C3Ghost":
            c2 = width(layer.args[0])
            shortcut = bool(layer.args[1]) if len(layer.args) > 1 else True
            spec = C3GhostSpec(c_in, c2, depth(layer.repeats), shortcut)
            out_c, out_stride = c2, stride_in
        elif layer.kind == "SPPF":
            c2, k = width(layer.args[0]), int(layer.args[1])
            spec = SPPFSpec(c_in, c2, k)
            out_c, out_stride = c2, stride_in
        elif layer.kind == "Upsample":
            spec, out_c, out_stride = None, c_in, stride_in
            if stride_in % 2:
                raise ConfigError(f"layer {index}: cannot upsample stride {stride_in}")
            out_stride = stride_in // 2
        elif layer.kind == "Concat":
            src_strides = {strides[s] for s in layer.sources}
            if len(src_strides) != 1:
                raise ConfigError(
                    f"layer {index}: concat sources have mismatched strides "
                    f"{sorted(src_strides)}"
                )
            spec = None
            out_c = sum(channels[s] for s in layer.sources)
            out_stride = src_strides.pop()
        else:  # Detect
            in_ch = tuple(channels[s] for s in layer.sources)
            spec = DetectSpec(in_channels=in_ch, class_count=config.class_count)
            out_c, out_stride = spec.out_channels, stride_in

        channels[index] = out_c
        strides[index] = out_stride
        nodes.append(
            Node(
                index=index,
                kind=layer.kind,
                sources=layer.sources,
                spec=spec,
                out_channels=out_c,
                stride=out_stride,
                prefix=prefix,
            )
        )

    detect = nodes[-1]
    head_strides = tuple(strides[s] for s in detect.sources)
    if sorted(head_strides) != [4, 8, 16, 32]:
        raise ConfigError(
            f"detect scales must sit at strides 4/8/16/32, got {head_strides}"
        )
    return Graph(
        config=config,
        nodes=tuple(nodes),
        detect_sources=detect.sources,
        strides=head_strides,
    )


# ---------------------------------------------------------------------------
# execution


def forward(graph: Graph, weights, x: np.ndarray) -> list[np.ndarray]:
    """Run the graph; returns the 4 raw head tensors (finest scale first).

    ``weights`` is any mapping from manifest names to float32 arrays,
    typically a WeightArchive. The pass is pure and deterministic.
    """
    config = graph.config
    if x.ndim != 4 or x.shape[1] != config.input_channels:
        raise ShapeError(
            f"input shaped {x.shape}, expected (n, {config.input_channels}, s, s)"
        )
    if x.shape[2] != x.shape[3] or x.shape[2] % 32:
        raise ShapeError(f"input must be square with side divisible by 32, got {x.shape}")

    needed: dict[int, int] = {}
    for node in graph.nodes:
        for s in node.sources:
            needed[s] = node.index

    outputs: dict[int, np.ndarray] = {}
    for node in graph.nodes:
        # empty sources means the network input (only the first layer)
        inputs = [outputs[s] for s in node.sources] if node.sources else [x]
        if node.kind == "Conv":
            w = ConvWeights.gather(weights, node.prefix)
            out = conv2d(inputs[0], w.weight, w.bias, node.spec)
        elif node.kind == "GhostConv":
            out = ghost_conv(
                inputs[0], node.spec, GhostConvWeights.gather(weights, node.prefix)
            )
        elif node.kind == "C3Ghost":
            out = c3ghost(
                inputs[0],
                node.spec,
                C3GhostWeights.gather(
                    weights, node.prefix, node.spec.n_bottlenecks
                ),
            )
        elif node.kind == "SPPF":
            out = sppf(inputs[0], node.spec, SPPFWeights.gather(weights, node.prefix))
        elif node.kind == "Upsample":
            out = upsample_nearest2x(inputs[0])
        elif node.kind == "Concat":
            out = concat_channels(inputs)
        else:  # Detect
            heads = []
            for i, src in enumerate(node.sources):
                w = ConvWeights.gather(weights, f"{node.prefix}m.{i}.")
                heads.append(
                    conv2d(outputs[src], w.weight, w.bias, node.spec.conv_params(i))
                )
            return heads
        outputs[node.index] = out
        # free tensors no longer needed downstream
        for idx in list(outputs):
            if needed.get(idx, -1) <= node.index and idx != node.index:
                del outputs[idx]
    raise ConfigError("graph has no Detect layer")  # unreachable after validation


def decode_detections(
    heads: list[np.ndarray],
    anchors: AnchorSet,
    strides,
    conf_threshold: float = 0.25,
    input_size: int | None = None,
) -> list[Detection]:
    """Turn raw head tensors into thresholded pixel-space detections.

    Per cell and anchor: ``cx = (2*sig(tx) - 0.5 + gx) * stride``,
    ``w = (2*sig(tw))^2 * anchor_w`` (so sizes cap at 4x the anchor), and
    confidence is ``sig(obj) * max_class sig(cls)``. Boxes are converted to
    corners and clipped to the input square; batch size must be 1.
    """
    per_scale = anchors.per_scale
    detections: list[Detection] = []
    size = input_size if input_size is not None else max(strides) * heads[-1].shape[-1]
    for head, stride, group in zip(heads, strides, range(anchors.scales)):
        n, ch, gh, gw = head.shape
        if n != 1:
            raise ShapeError("decode expects batch size 1")
        nc = ch // per_scale - BOX_FIELDS
        raw = head.reshape(per_scale, BOX_FIELDS + nc, gh, gw)
        s = sigmoid(raw)
        gy, gx = np.mgrid[0:gh, 0:gw]
        anchor_wh = np.array(anchors.scale_group(group), dtype=np.float64)
        cx = (2.0 * s[:, 0] - 0.5 + gx[None]) * stride
        cy = (2.0 * s[:, 1] - 0.5 + gy[None]) * stride
        w = (2.0 * s[:, 2]) ** 2 * anchor_wh[:, 0, None, None]
        h = (2.0 * s[:, 3]) ** 2 * anchor_wh[:, 1, None, None]
        cls_conf = s[:, BOX_FIELDS:]
        best_cls = (
            cls_conf.argmax(axis=1) if nc > 0 else np.zeros((per_scale, gh, gw), int)
        )
        best_conf = cls_conf.max(axis=1) if nc > 0 else np.ones((per_scale, gh, gw))
        conf = s[:, 4] * best_conf
        keep = conf >= conf_threshold
        for a, y, xg in zip(*np.nonzero(keep)):
            x1 = min(max(cx[a, y, xg] - w[a, y, xg] / 2.0, 0.0), size)
            y1 = min(max(cy[a, y, xg] - h[a, y, xg] / 2.0, 0.0), size)
            x2 = min(max(cx[a, y, xg] + w[a, y, xg] / 2.0, 0.0), size)
            y2 = min(max(cy[a, y, xg] + h[a, y, xg] / 2.0, 0.0), size)
            if x2 <= x1 or y2 <= y1:
                continue
            detections.append(
                Detection(
                    box=(float(x1), float(y1), float(x2), float(y2)),
                    class_id=int(best_cls[a, y, xg]),
                    confidence=float(conf[a, y, xg]),
                )
            )
    return detections
