"""Ghost building blocks: GhostConv, Ghost bottleneck, C3Ghost, SPPF.

Each block is a pure function of (input, spec, weights). A spec fixes the
channel arithmetic and knows its weight shapes, parameter count, and flop
count; a weights bundle carries the actual arrays. Half of every
GhostConv's output channels come from a real convolution (the intrinsic
maps) and the other half from a cheap 5x5 depthwise transform of those
maps (the ghost maps), so the expensive convolution only ever produces
``c2 / 2`` channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SpecError
from .ops import ConvParams, concat_channels, conv2d, maxpool2d

#: Kernel size of the cheap depthwise transform that creates ghost maps.
CHEAP_KERNEL = 5


def autopad(k: int) -> int:
    """Padding that preserves (stride 1) or exactly halves (stride 2) dims."""
    return (k - 1) // 2


# ---------------------------------------------------------------------------
# weight bundles


@dataclass
class ConvWeights:
    weight: np.ndarray
    bias: np.ndarray | None = None

    @classmethod
    def gather(cls, mapping, prefix: str) -> "ConvWeights":
        return cls(weight=mapping[prefix + "weight"], bias=mapping[prefix + "bias"])


@dataclass
class GhostConvWeights:
    primary: ConvWeights
    cheap: ConvWeights

    @classmethod
    def gather(cls, mapping, prefix: str) -> "GhostConvWeights":
        return cls(
            primary=ConvWeights.gather(mapping, prefix + "primary."),
            cheap=ConvWeights.gather(mapping, prefix + "cheap."),
        )


@dataclass
class GhostBottleneckWeights:
    g1: GhostConvWeights
    g2: GhostConvWeights

    @classmethod
    def gather(cls, mapping, prefix: str) -> "GhostBottleneckWeights":
        return cls(
            g1=GhostConvWeights.gather(mapping, prefix + "g1."),
            g2=GhostConvWeights.gather(mapping, prefix + "g2."),
        )


@dataclass
class C3GhostWeights:
    cv1: ConvWeights
    cv2: ConvWeights
    cv3: ConvWeights
    m: tuple[GhostBottleneckWeights, ...]

    @classmethod
    def gather(cls, mapping, prefix: str, n: int) -> "C3GhostWeights":
        return cls(
            cv1=ConvWeights.gather(mapping, prefix + "cv1."),
            cv2=ConvWeights.gather(mapping, prefix + "cv2."),
            cv3=ConvWeights.gather(mapping, prefix + "cv3."),
            m=tuple(
                GhostBottleneckWeights.gather(mapping, f"{prefix}m.{j}.")
                for j in range(n)
            ),
        )


@dataclass
class SPPFWeights:
    cv1: ConvWeights
    cv2: ConvWeights

    @classmethod
    def gather(cls, mapping, prefix: str) -> "SPPFWeights":
        return cls(
            cv1=ConvWeights.gather(mapping, prefix + "cv1."),
            cv2=ConvWeights.gather(mapping, prefix + "cv2."),
        )


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class GhostConvSpec:
    """c1 -> c2 ghost convolution; c2/2 intrinsic maps + c2/2 ghost maps."""

    c1: int
    c2: int
    k: int = 1
    s: int = 1
    act: str = "silu"

    def __post_init__(self):
        if self.c2 % 2 or self.c2 < 2:
            raise SpecError(f"ghost conv output channels must be even, got {self.c2}")

    @property
    def hidden(self) -> int:
        return self.c2 // 2

    @property
    def primary_params(self) -> ConvParams:
        return ConvParams(
            self.c1, self.hidden, self.k, self.s, autopad(self.k), activation=self.act
        )

    @property
    def cheap_params(self) -> ConvParams:
        return ConvParams(
            self.hidden,
            self.hidden,
            CHEAP_KERNEL,
            1,
            autopad(CHEAP_KERNEL),
            groups=self.hidden,
            activation=self.act,
        )

    def weight_shapes(self, prefix: str = "") -> dict[str, tuple[int, ...]]:
        return {
            prefix + "primary.weight": self.primary_params.weight_shape,
            prefix + "primary.bias": (self.hidden,),
            prefix + "cheap.weight": self.cheap_params.weight_shape,
            prefix + "cheap.bias": (self.hidden,),
        }

    def param_count(self) -> int:
        return self.primary_params.param_count() + self.cheap_params.param_count()

    def flop_count(self, h: int, w: int) -> int:
        oh, ow = self.primary_params.out_hw(h, w)
        return self.primary_params.flop_count(h, w) + self.cheap_params.flop_count(
            oh, ow
        )

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.primary_params.out_hw(h, w)


@dataclass(frozen=True)
class GhostBottleneckSpec:
    """Two stacked 1x1 ghost convs with an identity shortcut when c1 == c2."""

    c1: int
    c2: int
    shortcut: bool = True

    @property
    def hidden(self) -> int:
        return self.c2 // 2

    @property
    def g1(self) -> GhostConvSpec:
        return GhostConvSpec(self.c1, self.hidden, 1, 1, act="silu")

    @property
    def g2(self) -> GhostConvSpec:
        return GhostConvSpec(self.hidden, self.c2, 1, 1, act="none")

    @property
    def add(self) -> bool:
        return self.shortcut and self.c1 == self.c2

    def weight_shapes(self, prefix: str = "") -> dict[str, tuple[int, ...]]:
        shapes = self.g1.weight_shapes(prefix + "g1.")
        shapes.update(self.g2.weight_shapes(prefix + "g2."))
        return shapes

    def param_count(self) -> int:
        return self.g1.param_count() + self.g2.param_count()

    def flop_count(self, h: int, w: int) -> int:
        return self.g1.flop_count(h, w) + self.g2.flop_count(h, w)


@dataclass(frozen=True)
class C3GhostSpec:
    """Two 1x1 branches at expansion 0.5; one runs n ghost bottlenecks."""

    c1: int
    c2: int
    n_bottlenecks: int = 1
    shortcut: bool = True
    expansion: float = 0.5

    def __post_init__(self):
        if self.n_bottlenecks < 1:
            raise SpecError("c3ghost needs at least one bottleneck")

    @property
    def hidden(self) -> int:
        return int(self.c2 * self.expansion)

    @property
    def cv1(self) -> ConvParams:
        return ConvParams(self.c1, self.hidden, 1, activation="silu")

    @property
    def cv2(self) -> ConvParams:
        return ConvParams(self.c1, self.hidden, 1, activation="silu")

    @property
    def cv3(self) -> ConvParams:
        return ConvParams(2 * self.hidden, self.c2, 1, activation="silu")

    @property
    def bottleneck(self) -> GhostBottleneckSpec:
        return GhostBottleneckSpec(self.hidden, self.hidden, self.shortcut)

    def weight_shapes(self, prefix: str = "") -> dict[str, tuple[int, ...]]:
        shapes = {
            prefix + "cv1.weight": self.cv1.weight_shape,
            prefix + "cv1.bias": (self.hidden,),
            prefix + "cv2.weight": self.cv2.weight_shape,
            prefix + "cv2.bias": (self.hidden,),
        }
        for j in range(self.n_bottlenecks):
            shapes.update(self.bottleneck.weight_shapes(f"{prefix}m.{j}."))
        shapes[prefix + "cv3.weight"] = self.cv3.weight_shape
        shapes[prefix + "cv3.bias"] = (self.c2,)
        return shapes

    def param_count(self) -> int:
        return (
            self.cv1.param_count()
            + self.cv2.param_count()
            + self.cv3.param_count()
            + self.n_bottlenecks * self.bottleneck.param_count()
        )

    def flop_count(self, h: int, w: int) -> int:
        return (
            self.cv1.flop_count(h, w)
            + self.cv2.flop_count(h, w)
            + self.cv3.flop_count(h, w)
            + self.n_bottlenecks * self.bottleneck.flop_count(h, w)
        )


@dataclass(frozen=True)
class SPPFSpec:
    """Serialized pooling pyramid: three chained 5-pools, four-way concat."""

    c1: int
    c2: int
    k: int = 5

    @property
    def hidden(self) -> int:
        return self.c1 // 2

    @property
    def cv1(self) -> ConvParams:
        return ConvParams(self.c1, self.hidden, 1, activation="silu")

    @property
    def cv2(self) -> ConvParams:
        return ConvParams(4 * self.hidden, self.c2, 1, activation="silu")

    def weight_shapes(self, prefix: str = "") -> dict[str, tuple[int, ...]]:
        return {
            prefix + "cv1.weight": self.cv1.weight_shape,
            prefix + "cv1.bias": (self.hidden,),
            prefix + "cv2.weight": self.cv2.weight_shape,
            prefix + "cv2.bias": (self.c2,),
        }

    def param_count(self) -> int:
        return self.cv1.param_count() + self.cv2.param_count()

    def flop_count(self, h: int, w: int) -> int:
        return self.cv1.flop_count(h, w) + self.cv2.flop_count(h, w)


# ---------------------------------------------------------------------------
# forward functions


def _conv(x, params: ConvParams, w: ConvWeights):
    return conv2d(x, w.weight, w.bias, params)


def ghost_conv(x: np.ndarray, spec: GhostConvSpec, weights: GhostConvWeights):
    """Primary conv makes the intrinsic half, cheap depthwise the ghost half."""
    intrinsic = _conv(x, spec.primary_params, weights.primary)
    ghost = _conv(intrinsic, spec.cheap_params, weights.cheap)
    return concat_channels([intrinsic, ghost])


def ghost_bottleneck(
    x: np.ndarray, spec: GhostBottleneckSpec, weights: GhostBottleneckWeights
):
    y = ghost_conv(x, spec.g1, weights.g1)
    y = ghost_conv(y, spec.g2, weights.g2)
    if spec.add:
        y = y + x
    return y


def c3ghost(x: np.ndarray, spec: C3GhostSpec, weights: C3GhostWeights):
    y1 = _conv(x, spec.cv1, weights.cv1)
    for j in range(spec.n_bottlenecks):
        y1 = ghost_bottleneck(y1, spec.bottleneck, weights.m[j])
    y2 = _conv(x, spec.cv2, weights.cv2)
    return _conv(concat_channels([y1, y2]), spec.cv3, weights.cv3)


def sppf(x: np.ndarray, spec: SPPFSpec, weights: SPPFWeights):
    y = _conv(x, spec.cv1, weights.cv1)
    pad = autopad(spec.k)
    p1 = maxpool2d(y, spec.k, 1, pad)
    p2 = maxpool2d(p1, spec.k, 1, pad)
    p3 = maxpool2d(p2, spec.k, 1, pad)
    return _conv(concat_channels([y, p1, p2, p3]), spec.cv2, weights.cv2)


# ---------------------------------------------------------------------------
# accounting helpers


def count_params(obj) -> int:
    """Total scalar weights (biases included) of a spec, params, or graph."""
    if hasattr(obj, "param_count"):
        return obj.param_count()
    raise TypeError(f"cannot count parameters of {type(obj).__name__}")


def count_flops(obj, input_hw: tuple[int, int]) -> int:
    """Convolution flops (2 per multiply-accumulate) on the given input size.

    Activations, concatenations, and pooling comparisons are not counted;
    convolutions dominate.
    """
    h, w = input_hw
    if hasattr(obj, "flop_count"):
        return obj.flop_count(h, w)
    raise TypeError(f"cannot count flops of {type(obj).__name__}")


def identity_cheap_weights(spec: GhostConvSpec) -> ConvWeights:
    """Cheap-branch weights whose depthwise transform is the identity."""
    w = np.zeros(spec.cheap_params.weight_shape, dtype=np.float32)
    center = CHEAP_KERNEL // 2
    w[:, 0, center, center] = 1.0
    return ConvWeights(weight=w, bias=np.zeros(spec.hidden, dtype=np.float32))
