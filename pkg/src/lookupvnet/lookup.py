"""Learnable per-channel color lookup tables.

The input stage that replaces fixed integer pixel coding: each 8-bit
color value in each RGB channel indexes either a learnable vector (full
tables, 256 rows of dimension u per channel) or a learnable scalar
shared by every c consecutive colors (compressed tables, ceil(256/c)
entries per channel). The forward pass is a gather over pixel colors;
its adjoint scatter-adds upstream gradients back into the indexed rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradcore import Tensor

CHANNELS = ("r", "g", "b")


def table_size(c):
    """Entries per channel at compression rate c."""
    return -(-256 // c)  # ceil(256 / c)


def compressed_index(color, c):
    """Bucket index of a byte color when every c colors share one entry."""
    color = int(color)
    if not 0 <= color <= 255:
        raise ValueError(f"color {color} outside byte range 0..255")
    return color // c


class FullLookupTables:
    """Three channel tables of 256 learnable vectors of dimension u."""

    kind = "full"

    def __init__(self, u, channel_tables):
        if u < 1:
            raise ValueError(f"vector dimension must be >= 1, got {u}")
        self.u = int(u)
        self.tables = []
        for ch, arr in zip(CHANNELS, channel_tables):
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (256, self.u):
                raise ValueError(f"{ch} table must have shape (256, {self.u}), got {arr.shape}")
            self.tables.append(Tensor(arr, requires_grad=True, op=f"tables/{ch}"))

    @property
    def output_channels(self):
        return 3 * self.u

    def parameters(self):
        return {f"tables/{ch}": t for ch, t in zip(CHANNELS, self.tables)}

    @classmethod
    def from_channel_maps(cls, maps):
        """Build from three (256, u) arrays; handy for frozen codings."""
        maps = [np.asarray(m, dtype=np.float64) for m in maps]
        return cls(maps[0].shape[1], maps)

    def apply(self, images):
        return lookup(images, self).values


class CompressedLookupTables:
    """Three channel tables of ceil(256/c) learnable scalars each."""

    kind = "compressed"

    def __init__(self, c, channel_tables):
        if not 1 <= c <= 256:
            raise ValueError(f"compression rate must be in [1, 256], got {c}")
        self.c = int(c)
        rows = table_size(self.c)
        self.tables = []
        for ch, arr in zip(CHANNELS, channel_tables):
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (rows,):
                raise ValueError(f"{ch} table must have shape ({rows},), got {arr.shape}")
            self.tables.append(Tensor(arr, requires_grad=True, op=f"tables/{ch}"))

    @property
    def output_channels(self):
        return 3

    def parameters(self):
        return {f"tables/{ch}": t for ch, t in zip(CHANNELS, self.tables)}

    def apply(self, images):
        return lookup(images, self).values


def init_tables(kind, value, seed):
    """Fresh tables with every entry i.i.d. uniform on [-1, 1].

    value is the vector dimension u for kind="full" and the compression
    rate c for kind="compressed".
    """
    rng = np.random.default_rng(seed)
    if kind == "full":
        if value < 1:
            raise ValueError(f"vector dimension must be >= 1, got {value}")
        return FullLookupTables(value, [rng.uniform(-1.0, 1.0, (256, value)) for _ in CHANNELS])
    if kind == "compressed":
        if not 1 <= value <= 256:
            raise ValueError(f"compression rate must be in [1, 256], got {value}")
        rows = table_size(value)
        return CompressedLookupTables(value, [rng.uniform(-1.0, 1.0, rows) for _ in CHANNELS])
    raise ValueError(f"unknown table kind {kind!r}")


@dataclass
class LookupResult:
    """Coded pixels plus the integer indices cached for the backward pass."""

    values: Tensor  # [N, 3u, H, W] full / [N, 3, H, W] compressed
    indices: np.ndarray  # [N, 3, H, W] row indices actually gathered


def _as_batch(images):
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"expected byte images [N,3,H,W] or [3,H,W], got {images.shape}")
    if images.dtype != np.uint8:
        if images.min() < 0 or images.max() > 255:
            raise ValueError("pixel values outside byte range 0..255")
        images = images.astype(np.uint8)
    return images


def lookup(images, tables):
    """Replace every pixel color with its table entry.

    Full tables emit 3u output planes ordered R0..R(u-1), G0.., B0..;
    compressed tables emit one plane per channel. No standardization is
    applied: the coding itself is the learned input.
    """
    images = _as_batch(images)
    n, _, h, w = images.shape

    if tables.kind == "full":
        u = tables.u
        indices = images.astype(np.int32)
        out = np.empty((n, 3 * u, h, w))
        for ch in range(3):
            gathered = tables.tables[ch].data[indices[:, ch]]  # [N,H,W,u]
            out[:, ch * u : (ch + 1) * u] = np.moveaxis(gathered, -1, 1)
    elif tables.kind == "compressed":
        indices = images.astype(np.int32) // tables.c
        out = np.empty((n, 3, h, w))
        for ch in range(3):
            out[:, ch] = tables.tables[ch].data[indices[:, ch]]
    else:
        raise ValueError(f"unknown table kind {tables.kind!r}")

    def vjp(g):
        return lookup_backward(g, indices, tables)

    values = Tensor(out, parents=tuple(tables.tables), vjp=vjp, op="lookup")
    return LookupResult(values=values, indices=indices)


def lookup_backward(upstream, indices, tables):
    """Scatter-add adjoint of lookup: one gradient array per channel table.

    Row (ch, v) receives the sum of upstream values over all pixels whose
    channel-ch index is v; rows for colors absent from the batch stay zero.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    grads = []
    if tables.kind == "full":
        u = tables.u
        for ch in range(3):
            grad = np.zeros((256, u))
            block = np.moveaxis(upstream[:, ch * u : (ch + 1) * u], 1, -1)  # [N,H,W,u]
            np.add.at(grad, indices[:, ch], block)
            grads.append(grad)
    else:
        rows = table_size(tables.c)
        for ch in range(3):
            grad = np.zeros(rows)
            np.add.at(grad, indices[:, ch], upstream[:, ch])
            grads.append(grad)
    return tuple(grads)
