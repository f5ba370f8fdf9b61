"""Separable volume resampling between activation and video resolution.

Both kernels are applied axis by axis as explicit weight matrices, which
makes the operator exactly linear and keeps the align-corners endpoint
mapping trivially checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import RESOLUTION_VIDEO, SaliencyTube, normalize_tube

METHOD_TRILINEAR = "trilinear"
METHOD_CUBIC = "cubic"

# Catmull-Rom kernel parameter for the cubic method.
CUBIC_A = -0.5


@dataclass(frozen=True)
class ResampleSpec:
    """Target (F, H, W) extents and interpolation method."""

    target: tuple[int, int, int]
    method: str = METHOD_CUBIC

    def __post_init__(self):
        if len(self.target) != 3 or any(
            int(d) != d or d < 1 for d in self.target
        ):
            raise ValueError(f"target dims must be positive integers, got {self.target}")
        if self.method not in (METHOD_TRILINEAR, METHOD_CUBIC):
            raise ValueError(f"unknown method {self.method!r}")


def _cubic_kernel(t: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (a + 2.0) * t[near] ** 3 - (a + 3.0) * t[near] ** 2 + 1.0
    out[far] = a * t[far] ** 3 - 5.0 * a * t[far] ** 2 + 8.0 * a * t[far] - 4.0 * a
    return out


def line_weights(size_in: int, size_out: int, method: str) -> np.ndarray:
    """(size_out, size_in) interpolation matrix for one axis.

    Align-corners coordinate mapping: output index d samples source
    coordinate d*(size_in-1)/(size_out-1). A single source sample is
    replicated; a single output sample reads source coordinate 0.
    Cubic taps outside the line are clamped to the border sample.
    """
    w = np.zeros((size_out, size_in))
    if size_in == 1:
        w[:, 0] = 1.0
        return w
    for d in range(size_out):
        s = d * (size_in - 1) / (size_out - 1) if size_out > 1 else 0.0
        i0 = int(np.floor(s))
        if i0 >= size_in - 1:
            i0 = size_in - 2
        t = s - i0
        if method == METHOD_TRILINEAR:
            w[d, i0] += 1.0 - t
            w[d, i0 + 1] += t
        else:
            taps = _cubic_kernel(np.array([t + 1.0, t, t - 1.0, t - 2.0]))
            for k, tap in enumerate(taps):
                src = min(max(i0 - 1 + k, 0), size_in - 1)
                w[d, src] += tap
    return w


def _apply_axis(vol: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, vol, axes=([1], [axis])), 0, axis)


def resample_volume(vol: np.ndarray, target, method: str) -> np.ndarray:
    """Resample an (F, H, W) volume to target extents, axis by axis."""
    out = vol
    for axis in range(3):
        if out.shape[axis] == target[axis]:
            continue
        out = _apply_axis(out, line_weights(out.shape[axis], target[axis], method), axis)
    return np.ascontiguousarray(out)


def upsample(tube: SaliencyTube, spec: ResampleSpec) -> SaliencyTube:
    """Resample a tube's raw volume to video resolution.

    The output is not clamped (the cubic kernel may overshoot). If the
    input carried a normalized volume it is recomputed from the resampled
    raw values, never resampled itself.
    """
    raw = resample_volume(tube.raw, spec.target, spec.method)
    out = SaliencyTube(
        class_index=tube.class_index, raw=raw, resolution_tag=RESOLUTION_VIDEO
    )
    if tube.normalized is not None:
        out = normalize_tube(out)
    return out


def temporal_marginal(tube: SaliencyTube) -> np.ndarray:
    """Per-frame spatial mean of the raw volume; length-F vector."""
    return tube.raw.mean(axis=(1, 2))
