"""Minimal GIF89a encoder: one global median-cut palette, LZW, looping.

Written against the GIF89a layout so the output is fully deterministic;
Pillow serves as the independent decoder in the tests.
"""

from __future__ import annotations

import struct

import numpy as np


def median_cut_palette(pixels: np.ndarray, max_colors: int = 256) -> np.ndarray:
    """Build a palette of at most max_colors from (N, 3) uint8 pixels.

    Classic median cut over the unique colors, weighted by pixel counts:
    repeatedly split the box with the widest channel range at the weighted
    median of that channel. The returned palette is sorted lexicographically
    so the result does not depend on split bookkeeping.
    """
    flat = pixels.reshape(-1, 3)
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    colors = colors.astype(np.int64)
    if len(colors) <= max_colors:
        return colors.astype(np.uint8)

    boxes = [np.arange(len(colors))]
    while len(boxes) < max_colors:
        best_box, best_chan, best_range = -1, -1, 0
        for bi, idx in enumerate(boxes):
            sub = colors[idx]
            ranges = sub.max(axis=0) - sub.min(axis=0)
            chan = int(np.argmax(ranges))
            if ranges[chan] > best_range:
                best_box, best_chan, best_range = bi, chan, int(ranges[chan])
        if best_range == 0:
            break
        idx = boxes.pop(best_box)
        order = idx[np.argsort(colors[idx, best_chan], kind="stable")]
        cum = np.cumsum(counts[order])
        half = cum[-1] / 2.0
        split = int(np.searchsorted(cum, half)) + 1
        split = min(max(split, 1), len(order) - 1)
        boxes.append(order[:split])
        boxes.append(order[split:])

    palette = []
    for idx in boxes:
        w = counts[idx].astype(np.float64)
        mean = (colors[idx] * w[:, None]).sum(axis=0) / w.sum()
        palette.append(np.floor(mean + 0.5).astype(np.int64))
    palette = np.unique(np.stack(palette), axis=0)
    return palette.astype(np.uint8)


def map_to_palette(pixels: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Index image mapping each pixel to its nearest palette color."""
    flat = pixels.reshape(-1, 3).astype(np.int64)
    colors, inverse = np.unique(flat, axis=0, return_inverse=True)
    pal = palette.astype(np.int64)
    nearest = np.empty(len(colors), dtype=np.uint16)
    chunk = 4096
    for start in range(0, len(colors), chunk):
        block = colors[start : start + chunk]
        d = ((block[:, None, :] - pal[None, :, :]) ** 2).sum(axis=2)
        nearest[start : start + len(block)] = np.argmin(d, axis=1)
    return nearest[inverse].reshape(pixels.shape[:-1])


def _lzw_encode(indices: np.ndarray, min_code_size: int) -> bytes:
    """GIF-flavor LZW with variable code width and table reset at 4096."""
    clear = 1 << min_code_size
    eoi = clear + 1

    out = bytearray()
    acc = 0
    nbits = 0

    def emit(code: int, width: int):
        nonlocal acc, nbits
        acc |= code << nbits
        nbits += width
        while nbits >= 8:
            out.append(acc & 0xFF)
            acc >>= 8
            nbits -= 8

    def fresh_table():
        return {}, eoi + 1, min_code_size + 1

    table, next_code, width = fresh_table()
    emit(clear, width)
    data = indices.reshape(-1).tolist()
    current = data[0]
    for k in data[1:]:
        key = (current, k)
        if key in table:
            current = table[key]
            continue
        emit(current, width)
        table[key] = next_code
        next_code += 1
        if next_code == (1 << width) + 1 and width < 12:
            width += 1
        current = k
        if next_code >= 4096:
            emit(clear, width)
            table, next_code, width = fresh_table()
    emit(current, width)
    emit(eoi, width)
    if nbits:
        out.append(acc & 0xFF)
    return bytes(out)


def _sub_blocks(data: bytes) -> bytes:
    out = bytearray()
    for start in range(0, len(data), 255):
        block = data[start : start + 255]
        out.append(len(block))
        out.extend(block)
    out.append(0)
    return bytes(out)


def write_gif(path, frames: list[np.ndarray], delay_ms: int = 100) -> None:
    """Encode (H, W, 3) uint8 frames as a looping GIF89a file.

    One palette is computed over all frames so colors stay stable in time.
    """
    if not frames:
        raise ValueError("no frames to encode")
    h, w = frames[0].shape[:2]
    all_pixels = np.concatenate([f.reshape(-1, 3) for f in frames], axis=0)
    palette = median_cut_palette(all_pixels, 256)

    ncolors = len(palette)
    exp = 0
    while (2 << exp) < max(ncolors, 2):
        exp += 1
    table_size = 2 << exp
    min_code_size = max(2, exp + 1)
    gct = np.zeros((table_size, 3), dtype=np.uint8)
    gct[:ncolors] = palette

    delay_cs = int(round(delay_ms / 10.0))
    blob = bytearray()
    blob += b"GIF89a"
    blob += struct.pack("<HHBBB", w, h, 0x80 | (7 << 4) | exp, 0, 0)
    blob += gct.tobytes()
    # infinite loop
    blob += b"\x21\xff\x0bNETSCAPE2.0\x03\x01\x00\x00\x00"
    for frame in frames:
        if frame.shape[:2] != (h, w):
            raise ValueError("frames must share one size")
        indices = map_to_palette(frame, palette)
        blob += b"\x21\xf9\x04\x04" + struct.pack("<H", delay_cs) + b"\x00\x00"
        blob += b"\x2c" + struct.pack("<HHHHB", 0, 0, w, h, 0)
        blob += bytes([min_code_size])
        blob += _sub_blocks(_lzw_encode(indices, min_code_size))
    blob += b"\x3b"
    with open(path, "wb") as fh:
        fh.write(blob)
