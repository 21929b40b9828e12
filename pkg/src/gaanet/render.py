"""Deterministic detection overlays on PNM-backed tensors.

Boxes get a 2-pixel border in a per-class color; the label (class name and
confidence) is printed with a built-in 5x7 pixel font on a filled bar just
above the box, or below it when there is no room above. When neither fits
the label is omitted, so a full-frame box only ever touches its border
pixels. Rendering the same inputs twice produces identical bytes.
"""

from __future__ import annotations

import numpy as np

from .ops import DTYPE, tensor

BORDER = 2

# per-class colors, cycled; chosen for contrast on gray IR imagery
PALETTE = (
    (255, 56, 56),
    (56, 168, 255),
    (72, 219, 112),
    (255, 178, 29),
    (207, 96, 255),
    (255, 255, 64),
    (64, 255, 220),
    (255, 112, 166),
)

# 5x7 glyphs, one int per row, bit 4 = leftmost pixel
_FONT = {
    "0": (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    "1": (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "2": (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    "3": (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    "4": (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    "5": (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    "6": (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    "7": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    "8": (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    "9": (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
    "A": (0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "B": (0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E),
    "C": (0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E),
    "D": (0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C),
    "E": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F),
    "F": (0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10),
    "G": (0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F),
    "H": (0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11),
    "I": (0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E),
    "J": (0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C),
    "K": (0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11),
    "L": (0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F),
    "M": (0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11),
    "N": (0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11),
    "O": (0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "P": (0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10),
    "Q": (0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D),
    "R": (0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11),
    "S": (0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E),
    "T": (0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04),
    "U": (0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E),
    "V": (0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04),
    "W": (0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A),
    "X": (0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11),
    "Y": (0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04),
    "Z": (0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F),
    ".": (0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C),
    ":": (0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00),
    "-": (0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00),
    "_": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F),
    "%": (0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03),
    " ": (0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00),
}
GLYPH_W, GLYPH_H = 6, 8  # 5x7 plus 1px spacing
LABEL_PAD = 1


def class_color(class_id: int) -> tuple[float, float, float]:
    r, g, b = PALETTE[class_id % len(PALETTE)]
    return (r / 255.0, g / 255.0, b / 255.0)


def _draw_text(img: np.ndarray, text: str, top: int, left: int, color) -> None:
    h, w = img.shape[2], img.shape[3]
    for ci, ch in enumerate(text.upper()):
        glyph = _FONT.get(ch, _FONT[" "])
        x0 = left + ci * GLYPH_W
        for row, bits in enumerate(glyph):
            y = top + row
            if not 0 <= y < h:
                continue
            for col in range(5):
                if bits & (0x10 >> col):
                    x = x0 + col
                    if 0 <= x < w:
                        for c in range(3):
                            img[0, c, y, x] = color[c]


def _fill(img: np.ndarray, y1: int, y2: int, x1: int, x2: int, color) -> None:
    h, w = img.shape[2], img.shape[3]
    y1, y2 = max(0, y1), min(h, y2)
    x1, x2 = max(0, x1), min(w, x2)
    if y1 >= y2 or x1 >= x2:
        return
    for c in range(3):
        img[0, c, y1:y2, x1:x2] = color[c]


def render_detections(
    image: np.ndarray, detections, class_names: list[str], warn=None
) -> np.ndarray:
    """Return a copy of ``image`` (promoted to RGB) with boxes drawn on it.

    Detections with boxes outside the frame are clipped; ``warn`` (callable)
    is told about each clip when given.
    """
    image = tensor(image)
    if image.shape[1] == 1:
        image = np.repeat(image, 3, axis=1)
    out = image.copy()
    h, w = out.shape[2], out.shape[3]
    for det in detections:
        x1, y1, x2, y2 = det.box
        if x1 < 0 or y1 < 0 or x2 > w or y2 > h:
            if warn is not None:
                warn(f"box {det.box} exceeds {w}x{h} image, clipped")
        ix1, iy1 = max(0, int(round(x1))), max(0, int(round(y1)))
        ix2, iy2 = min(w, int(round(x2))), min(h, int(round(y2)))
        if ix1 >= ix2 or iy1 >= iy2:
            continue
        color = class_color(det.class_id)
        b = BORDER
        _fill(out, iy1, min(iy1 + b, iy2), ix1, ix2, color)  # top
        _fill(out, max(iy2 - b, iy1), iy2, ix1, ix2, color)  # bottom
        _fill(out, iy1, iy2, ix1, min(ix1 + b, ix2), color)  # left
        _fill(out, iy1, iy2, max(ix2 - b, ix1), ix2, color)  # right

        name = (
            class_names[det.class_id]
            if 0 <= det.class_id < len(class_names)
            else str(det.class_id)
        )
        label = f"{name} {det.confidence:.2f}"
        bar_h = GLYPH_H + 2 * LABEL_PAD
        bar_w = len(label) * GLYPH_W + 2 * LABEL_PAD
        if iy1 - bar_h >= 0:
            bar_top = iy1 - bar_h
        elif iy2 + bar_h <= h:
            bar_top = iy2
        else:
            continue  # nowhere to put it without touching the box interior
        _fill(out, bar_top, bar_top + bar_h, ix1, min(ix1 + bar_w, w), color)
        _draw_text(out, label, bar_top + LABEL_PAD, ix1 + LABEL_PAD, (0.0, 0.0, 0.0))
    return np.ascontiguousarray(out, dtype=DTYPE)
