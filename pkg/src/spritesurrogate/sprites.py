"""Greedy pixel-wise sprite identification and its inverse.

A frame is split into a background color (the plurality color) and a list of
sprites: maximal 4-connected groups of same-colored non-background pixels.
Carrying the background color and frame size alongside the sprites makes the
decomposition exactly invertible.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from .pixelgrid import Frame

__all__ = [
    "InvariantError",
    "Signature",
    "Sprite",
    "SpriteDecomposition",
    "infer_background",
    "identify_sprites",
    "reconstruct",
]


class InvariantError(ValueError):
    """A decomposition violates the partition invariants."""


@dataclass(frozen=True)
class Signature:
    """Translation-invariant identity of a sprite: its color and pixel offsets."""

    color: int
    offsets: tuple[tuple[int, int], ...]

    @cached_property
    def hash(self) -> str:
        text = f"{self.color:06x}:" + ";".join(f"{dx},{dy}" for dx, dy in self.offsets)
        return hashlib.sha1(text.encode()).hexdigest()[:10]

    @property
    def width(self) -> int:
        dxs = [dx for dx, _ in self.offsets]
        return max(dxs) - min(dxs) + 1

    @property
    def height(self) -> int:
        dys = [dy for _, dy in self.offsets]
        return max(dys) - min(dys) + 1

    @property
    def size(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class Sprite:
    color: int
    pixels: tuple[tuple[int, int], ...]  # (x, y), sorted by (y, x)

    def __post_init__(self):
        if not self.pixels:
            raise InvariantError("sprite must contain at least one pixel")
        object.__setattr__(self, "pixels", tuple(sorted(self.pixels, key=lambda p: (p[1], p[0]))))

    @property
    def anchor(self) -> tuple[int, int]:
        """Top-most, then left-most pixel ``(x, y)``."""
        return self.pixels[0]

    @cached_property
    def signature(self) -> Signature:
        ax, ay = self.anchor
        return Signature(self.color, tuple((x - ax, y - ay) for x, y in self.pixels))

    def __len__(self):
        return len(self.pixels)


@dataclass(frozen=True)
class SpriteDecomposition:
    sprites: tuple[Sprite, ...]
    background: int
    width: int
    height: int

    def to_text(self) -> str:
        lines = [f"# background={self.background:06x} width={self.width} height={self.height}"]
        for s in self.sprites:
            x, y = s.anchor
            lines.append(f"{s.signature.hash} {s.color:06x} {x} {y} {len(s)}")
        return "\n".join(lines) + "\n"


def infer_background(f: Frame) -> int:
    """Most common color; ties go to the smallest packed color value."""
    values, counts = np.unique(f.colors, return_counts=True)
    # np.unique sorts ascending, and argmax returns the first maximum
    return int(values[int(np.argmax(counts))])


@njit(cache=True)
def _dfs_label(colors, background):
    """Label 4-connected same-color components, visiting pixels in raster order.

    Returns the label image (-1 on background) and the number of components;
    labels are assigned in the order the outer raster loop discovers them.
    """
    height, width = colors.shape
    labels = np.full((height, width), -1, np.int64)
    stack = np.empty(height * width, np.int64)
    n = 0
    for y0 in range(height):
        for x0 in range(width):
            color = colors[y0, x0]
            if color == background or labels[y0, x0] >= 0:
                continue
            labels[y0, x0] = n
            stack[0] = y0 * width + x0
            top = 1
            while top > 0:
                top -= 1
                y, x = divmod(stack[top], width)
                if x + 1 < width and labels[y, x + 1] < 0 and colors[y, x + 1] == color:
                    labels[y, x + 1] = n
                    stack[top] = y * width + x + 1
                    top += 1
                if x > 0 and labels[y, x - 1] < 0 and colors[y, x - 1] == color:
                    labels[y, x - 1] = n
                    stack[top] = y * width + x - 1
                    top += 1
                if y + 1 < height and labels[y + 1, x] < 0 and colors[y + 1, x] == color:
                    labels[y + 1, x] = n
                    stack[top] = (y + 1) * width + x
                    top += 1
                if y > 0 and labels[y - 1, x] < 0 and colors[y - 1, x] == color:
                    labels[y - 1, x] = n
                    stack[top] = (y - 1) * width + x
                    top += 1
            n += 1
    return labels, n


def identify_sprites(f: Frame) -> SpriteDecomposition:
    """Decompose a frame into its background color and same-colored sprites.

    Sprites come back ordered by ``(x, y)`` anchor.
    """
    colors = f.colors
    height, width = colors.shape
    background = infer_background(f)
    labels, n = _dfs_label(colors, background)

    flat = np.flatnonzero(labels.ravel() >= 0)  # raster order
    owner = labels.ravel()[flat]
    order = np.argsort(owner, kind="stable")
    flat, owner = flat[order], owner[order]
    bounds = np.searchsorted(owner, np.arange(n + 1))
    ys, xs = np.divmod(flat, width)
    xs, ys = xs.tolist(), ys.tolist()
    flat_colors = colors.ravel()

    found = []
    for i in range(n):
        lo, hi = bounds[i], bounds[i + 1]
        found.append(Sprite(int(flat_colors[flat[lo]]), tuple(zip(xs[lo:hi], ys[lo:hi]))))
    found.sort(key=lambda s: s.anchor)
    return SpriteDecomposition(tuple(found), background, width, height)


def reconstruct(d: SpriteDecomposition) -> Frame:
    colors = np.full((d.height, d.width), d.background, dtype=np.int64)
    owned = np.zeros((d.height, d.width), dtype=bool)
    for sprite in d.sprites:
        xs = np.fromiter((p[0] for p in sprite.pixels), dtype=np.int64, count=len(sprite))
        ys = np.fromiter((p[1] for p in sprite.pixels), dtype=np.int64, count=len(sprite))
        if xs.min() < 0 or ys.min() < 0 or xs.max() >= d.width or ys.max() >= d.height:
            raise InvariantError(f"sprite at {sprite.anchor} has pixels outside the frame")
        if owned[ys, xs].any():
            raise InvariantError(f"sprite at {sprite.anchor} overlaps another sprite")
        owned[ys, xs] = True
        colors[ys, xs] = sprite.color
    return Frame.from_colors(colors)
