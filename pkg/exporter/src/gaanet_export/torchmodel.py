"""Torch mirror of the detection graph, built from the same config.

Channel arithmetic comes straight from the resolved graph nodes, so the
torch model and the numpy engine can never disagree about shapes. Module
attribute names are chosen so that state-dict keys line up with archive
unit names: every conv+BN pair lives in a ConvBN whose path is the archive
unit, and the archive entry ``<unit>.weight`` corresponds to the torch key
``<unit>.conv.weight`` (plus the BN quadruplet to fold).
"""

from __future__ import annotations

import torch
import torch.nn as nn

from gaanet.blocks import C3GhostSpec, GhostBottleneckSpec, GhostConvSpec, SPPFSpec, autopad
from gaanet.graph import DetectSpec, Graph, NetConfig, build_graph
from gaanet.ops import ConvParams

BN_EPS = 1e-3
BN_MOMENTUM = 0.03


class ConvBN(nn.Module):
    """conv(bias=False) + batch norm + optional SiLU; one archive unit."""

    def __init__(self, c1, c2, k=1, s=1, p=None, groups=1, act=True):
        super().__init__()
        if p is None:
            p = autopad(k)
        self.conv = nn.Conv2d(c1, c2, k, s, p, groups=groups, bias=False)
        self.bn = nn.BatchNorm2d(c2, eps=BN_EPS, momentum=BN_MOMENTUM)
        self.act = nn.SiLU() if act else nn.Identity()

    def forward(self, x):
        return self.act(self.bn(self.conv(x)))


class GhostConvT(nn.Module):
    def __init__(self, spec: GhostConvSpec):
        super().__init__()
        act = spec.act == "silu"
        self.primary = ConvBN(spec.c1, spec.hidden, spec.k, spec.s, act=act)
        self.cheap = ConvBN(
            spec.hidden, spec.hidden, 5, 1, groups=spec.hidden, act=act
        )

    def forward(self, x):
        y = self.primary(x)
        return torch.cat([y, self.cheap(y)], dim=1)


class GhostBottleneckT(nn.Module):
    def __init__(self, spec: GhostBottleneckSpec):
        super().__init__()
        self.g1 = GhostConvT(spec.g1)
        self.g2 = GhostConvT(spec.g2)
        self.add = spec.add

    def forward(self, x):
        y = self.g2(self.g1(x))
        return x + y if self.add else y


class C3GhostT(nn.Module):
    def __init__(self, spec: C3GhostSpec):
        super().__init__()
        self.cv1 = ConvBN(spec.c1, spec.hidden, 1)
        self.cv2 = ConvBN(spec.c1, spec.hidden, 1)
        self.cv3 = ConvBN(2 * spec.hidden, spec.c2, 1)
        self.m = nn.Sequential(
            *(GhostBottleneckT(spec.bottleneck) for _ in range(spec.n_bottlenecks))
        )

    def forward(self, x):
        return self.cv3(torch.cat([self.m(self.cv1(x)), self.cv2(x)], dim=1))


class SPPFT(nn.Module):
    def __init__(self, spec: SPPFSpec):
        super().__init__()
        self.cv1 = ConvBN(spec.c1, spec.hidden, 1)
        self.cv2 = ConvBN(4 * spec.hidden, spec.c2, 1)
        self.pool = nn.MaxPool2d(kernel_size=spec.k, stride=1, padding=autopad(spec.k))

    def forward(self, x):
        y = self.cv1(x)
        p1 = self.pool(y)
        p2 = self.pool(p1)
        p3 = self.pool(p2)
        return self.cv2(torch.cat([y, p1, p2, p3], dim=1))


class ConvT(nn.Module):
    """Plain Conv node: the node itself is the archive unit."""

    def __init__(self, params: ConvParams):
        super().__init__()
        self.unit = ConvBN(
            params.in_channels,
            params.out_channels,
            params.kernel,
            params.stride,
            params.padding,
            groups=params.groups,
            act=params.activation == "silu",
        )

    def forward(self, x):
        return self.unit(x)


class DetectT(nn.Module):
    def __init__(self, spec: DetectSpec):
        super().__init__()
        self.m = nn.ModuleList(
            nn.Conv2d(c, spec.out_channels, 1) for c in spec.in_channels
        )

    def forward(self, features):
        return [conv(f) for conv, f in zip(self.m, features)]


class UpsampleT(nn.Module):
    def forward(self, x):
        return nn.functional.interpolate(x, scale_factor=2.0, mode="nearest")


class ConcatT(nn.Module):
    def forward(self, parts):
        return torch.cat(parts, dim=1)


class GaanetTorchModel(nn.Module):
    """Full detector; forward returns the 4 raw head maps, finest first."""

    def __init__(self, config: NetConfig):
        super().__init__()
        self.config = config
        self.graph: Graph = build_graph(config)
        modules = []
        for node in self.graph.nodes:
            if node.kind == "Conv":
                modules.append(ConvT(node.spec))
            elif node.kind == "GhostConv":
                modules.append(GhostConvT(node.spec))
            elif node.kind == "C3Ghost":
                modules.append(C3GhostT(node.spec))
            elif node.kind == "SPPF":
                modules.append(SPPFT(node.spec))
            elif node.kind == "Upsample":
                modules.append(UpsampleT())
            elif node.kind == "Concat":
                modules.append(ConcatT())
            else:
                modules.append(DetectT(node.spec))
        self.layers = nn.ModuleList(modules)

    def forward(self, x):
        outputs = {}
        for node, module in zip(self.graph.nodes, self.layers):
            inputs = [outputs[s] for s in node.sources] if node.sources else [x]
            if node.kind == "Concat":
                out = module(inputs)
            elif node.kind == "Detect":
                return module(inputs)
            else:
                out = module(inputs[0])
            outputs[node.index] = out
        raise RuntimeError("graph has no Detect layer")


def conv_unit_names(graph: Graph) -> list[tuple[str, str]]:
    """(unit path, kind) pairs in archive manifest order.

    kind is "convbn" for conv+BN units (state dict holds ``<unit>.conv.*``
    and ``<unit>.bn.*``) or "plain" for bias-carrying convolutions whose
    torch keys already match the archive names.
    """
    units: list[tuple[str, str]] = []
    for node in graph.nodes:
        p = node.prefix
        if node.kind == "Conv":
            units.append((p + "unit", "convbn"))
        elif node.kind == "GhostConv":
            units.append((p + "primary", "convbn"))
            units.append((p + "cheap", "convbn"))
        elif node.kind == "C3Ghost":
            units.append((p + "cv1", "convbn"))
            units.append((p + "cv2", "convbn"))
            for j in range(node.spec.n_bottlenecks):
                for g in ("g1", "g2"):
                    units.append((f"{p}m.{j}.{g}.primary", "convbn"))
                    units.append((f"{p}m.{j}.{g}.cheap", "convbn"))
            units.append((p + "cv3", "convbn"))
        elif node.kind == "SPPF":
            units.append((p + "cv1", "convbn"))
            units.append((p + "cv2", "convbn"))
        elif node.kind == "Detect":
            for i in range(len(node.spec.in_channels)):
                units.append((f"{p}m.{i}", "plain"))
    return units


def archive_unit_for(unit_path: str) -> str:
    """Map a torch unit path to its archive unit name.

    Plain ``Conv`` nodes wrap their ConvBN in an attribute called ``unit``;
    the archive drops that segment (the node itself is the unit).
    """
    return unit_path[: -len(".unit")] if unit_path.endswith(".unit") else unit_path
