"""Dense rank-4 tensor primitives in NCHW layout.

Every tensor in this package is a plain C-contiguous ``numpy.ndarray`` of
shape ``(n, c, h, w)`` and dtype float32.  All operations here are pure:
inputs are never mutated, outputs are freshly allocated, and a call with
the same arguments always returns the same bits.

Convolution is cross-correlation (no kernel flip), following detector
convention.  There is no batch-norm op at runtime: archives fold BN scale
and shift into convolution weights and bias before the graph ever runs
(see :mod:`gaanet.weights`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GeometryError, ShapeError

DTYPE = np.float32

#: Gray value used to pad letterboxed images, as a fraction of full scale.
LETTERBOX_FILL = 114.0 / 255.0

ACTIVATIONS = ("none", "silu")


def tensor(data) -> np.ndarray:
    """Coerce ``data`` to a rank-4 float32 NCHW array.

    Raises ShapeError if the input is not 4-dimensional.
    """
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    if arr.ndim != 4:
        raise ShapeError(f"expected a rank-4 (n,c,h,w) tensor, got rank {arr.ndim}")
    return arr


@dataclass(frozen=True)
class ConvParams:
    """Geometry of a single 2-D convolution.

    ``padding=None`` defaults to ``kernel // 2`` ("same" geometry for odd
    kernels).  ``in_channels`` and ``out_channels`` must both be divisible
    by ``groups``; ``groups == in_channels`` gives depthwise behaviour.
    """

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int | None = None
    groups: int = 1
    has_bias: bool = True
    activation: str = "none"

    def __post_init__(self):
        if self.padding is None:
            object.__setattr__(self, "padding", self.kernel // 2)
        if min(self.in_channels, self.out_channels, self.kernel, self.stride) < 1:
            raise ShapeError(f"conv params must be positive: {self}")
        if self.padding < 0:
            raise ShapeError(f"padding must be non-negative: {self}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"channels ({self.in_channels}->{self.out_channels}) not divisible "
                f"by groups={self.groups}"
            )
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (
            self.out_channels,
            self.in_channels // self.groups,
            self.kernel,
            self.kernel,
        )

    def param_count(self) -> int:
        w = self.weight_shape
        n = w[0] * w[1] * w[2] * w[3]
        return n + (self.out_channels if self.has_bias else 0)

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        return oh, ow

    def flop_count(self, h: int, w: int) -> int:
        """Multiply-accumulates on an h*w input, counted as 2 flops each."""
        oh, ow = self.out_hw(h, w)
        macs = self.weight_shape[1] * self.kernel * self.kernel
        return 2 * macs * self.out_channels * oh * ow


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=DTYPE)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(DTYPE)


def silu(x: np.ndarray) -> np.ndarray:
    """Elementwise x * sigmoid(x)."""
    x = np.asarray(x, dtype=DTYPE)
    return (x * sigmoid(x)).astype(DTYPE)


def _apply_activation(x: np.ndarray, activation: str) -> np.ndarray:
    if activation == "silu":
        return silu(x)
    return x


def conv2d(
    x: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray | None,
    params: ConvParams,
) -> np.ndarray:
    """2-D grouped cross-correlation with optional bias and activation.

    Parameters
    ----------
    x : (n, c_in, h, w) float32
    weights : (c_out, c_in // groups, k, k) float32
    bias : (c_out,) float32 or None
    params : ConvParams describing the geometry; activation applied last.
    """
    x = tensor(x)
    weights = np.asarray(weights, dtype=DTYPE)
    n, c_in, h, w = x.shape
    if c_in != params.in_channels:
        raise ShapeError(
            f"input has {c_in} channels, conv expects {params.in_channels}"
        )
    if tuple(weights.shape) != params.weight_shape:
        raise ShapeError(
            f"weights shaped {weights.shape}, expected {params.weight_shape}"
        )
    if bias is not None:
        bias = np.asarray(bias, dtype=DTYPE)
        if bias.shape != (params.out_channels,):
            raise ShapeError(
                f"bias shaped {bias.shape}, expected ({params.out_channels},)"
            )
    k, s, p, g = params.kernel, params.stride, params.padding, params.groups
    oh, ow = params.out_hw(h, w)
    if oh < 1 or ow < 1:
        raise GeometryError(
            f"conv of {h}x{w} input with k={k} s={s} p={p} yields empty output"
        )

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    cg_in = c_in // g
    cg_out = params.out_channels // g
    win = win.reshape(n, g, cg_in, oh, ow, k, k)
    wg = weights.reshape(g, cg_out, cg_in, k, k)
    out = np.einsum("ngihwuv,goiuv->ngohw", win, wg, optimize=True)
    out = np.ascontiguousarray(out.reshape(n, params.out_channels, oh, ow), dtype=DTYPE)
    if bias is not None:
        out += bias[None, :, None, None]
    return _apply_activation(out, params.activation)


def maxpool2d(x: np.ndarray, k: int, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Sliding-window maximum; padded cells never win (treated as -inf)."""
    x = tensor(x)
    if k < 1 or stride < 1 or padding < 0:
        raise GeometryError(f"invalid pooling geometry k={k} s={stride} p={padding}")
    if 2 * padding > k:
        raise GeometryError(f"pooling padding {padding} exceeds half of kernel {k}")
    n, c, h, w = x.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    if oh < 1 or ow < 1:
        raise GeometryError(
            f"pool of {h}x{w} input with k={k} s={stride} p={padding} yields empty output"
        )
    if padding:
        xp = np.pad(
            x,
            ((0, 0), (0, 0), (padding, padding), (padding, padding)),
            constant_values=-np.inf,
        )
    else:
        xp = x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(win.max(axis=(-2, -1)), dtype=DTYPE)


def upsample_nearest2x(x: np.ndarray) -> np.ndarray:
    """Double height and width, replicating each value into a 2x2 block."""
    x = tensor(x)
    return np.ascontiguousarray(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3))


def concat_channels(parts: list[np.ndarray]) -> np.ndarray:
    """Concatenate tensors along the channel axis, preserving order."""
    if not parts:
        raise ShapeError("concat_channels needs at least one tensor")
    parts = [tensor(p) for p in parts]
    ref = parts[0].shape
    for p in parts[1:]:
        if p.shape[0] != ref[0] or p.shape[2:] != ref[2:]:
            raise ShapeError(
                f"concat parts disagree on batch/spatial dims: {ref} vs {p.shape}"
            )
    return np.ascontiguousarray(np.concatenate(parts, axis=1))


def match_channels(image: np.ndarray, channels: int) -> np.ndarray:
    """Adapt a 1- or 3-channel image to the requested channel count.

    Gray replicates to RGB; RGB averages down to gray; other combinations
    are rejected.
    """
    image = tensor(image)
    have = image.shape[1]
    if have == channels:
        return image
    if have == 1 and channels == 3:
        return np.ascontiguousarray(np.repeat(image, 3, axis=1))
    if have == 3 and channels == 1:
        return np.ascontiguousarray(image.mean(axis=1, keepdims=True, dtype=DTYPE))
    raise ShapeError(f"cannot adapt {have}-channel image to {channels} channels")


@dataclass(frozen=True)
class LetterboxTransform:
    """Invertible record of a letterbox resize: scale then pad offsets."""

    scale: float
    pad_x: int
    pad_y: int
    src_w: int
    src_h: int

    def boxes_to_network(self, boxes: np.ndarray) -> np.ndarray:
        """Map (N,4) x1,y1,x2,y2 boxes from source-image to network coords."""
        b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4).copy()
        b[:, [0, 2]] = b[:, [0, 2]] * self.scale + self.pad_x
        b[:, [1, 3]] = b[:, [1, 3]] * self.scale + self.pad_y
        return b

    def boxes_to_image(self, boxes: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`boxes_to_network`, clipped to the source image."""
        b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4).copy()
        b[:, [0, 2]] = (b[:, [0, 2]] - self.pad_x) / self.scale
        b[:, [1, 3]] = (b[:, [1, 3]] - self.pad_y) / self.scale
        b[:, [0, 2]] = b[:, [0, 2]].clip(0, self.src_w)
        b[:, [1, 3]] = b[:, [1, 3]].clip(0, self.src_h)
        return b


def _nearest_indices(dst: int, src: int) -> np.ndarray:
    # Sample at pixel centers; exact identity when dst == src.
    return np.clip(
        np.floor((np.arange(dst) + 0.5) * (src / dst)).astype(np.int64), 0, src - 1
    )


def letterbox(image: np.ndarray, target: int) -> tuple[np.ndarray, LetterboxTransform]:
    """Aspect-preserving nearest-neighbour resize onto a gray target square.

    Returns the padded square tensor and the transform record needed to map
    boxes between source-image and network coordinates.
    """
    image = tensor(image)
    n, c, h, w = image.shape
    if n != 1:
        raise ShapeError(f"letterbox expects a single image, got batch {n}")
    if h < 1 or w < 1 or target < 1:
        raise GeometryError(f"cannot letterbox a {h}x{w} image to {target}")
    scale = target / max(h, w)
    nh = max(1, round(h * scale))
    nw = max(1, round(w * scale))
    rows = _nearest_indices(nh, h)
    cols = _nearest_indices(nw, w)
    resized = image[:, :, rows][:, :, :, cols]
    pad_y = (target - nh) // 2
    pad_x = (target - nw) // 2
    canvas = np.full((1, c, target, target), LETTERBOX_FILL, dtype=DTYPE)
    canvas[:, :, pad_y : pad_y + nh, pad_x : pad_x + nw] = resized
    record = LetterboxTransform(scale=scale, pad_x=pad_x, pad_y=pad_y, src_w=w, src_h=h)
    return canvas, record
