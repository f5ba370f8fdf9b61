"""Heat and focus overlays plus PNG/GIF output.

Heat mode alpha-blends a false-color map over the frame; focus mode
attenuates the frame toward black wherever the tube is quiet, leaving a
configurable luminance floor so context stays faintly visible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .engine import SaliencyTube
from .errors import EmptyInputError, FormatError, ShapeError
from .gifenc import write_gif

MODE_HEAT = "heat"
MODE_FOCUS = "focus"

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


@dataclass(frozen=True)
class FrameSequence:
    """Decoded 8-bit RGB frames of one clip, all the same size."""

    frames: np.ndarray  # (F, H, W, 3) uint8
    source_paths: tuple[Path, ...] = ()

    def __post_init__(self):
        arr = self.frames
        if arr.ndim != 4 or arr.shape[3] != 3 or arr.dtype != np.uint8:
            raise ShapeError(
                f"frames must be (F, H, W, 3) uint8, got {arr.shape} {arr.dtype}"
            )

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass(frozen=True)
class RenderConfig:
    mode: str = MODE_HEAT
    alpha: float = 0.5
    floor: float = 0.15
    gif_delay_ms: int = 100

    def __post_init__(self):
        if self.mode not in (MODE_HEAT, MODE_FOCUS):
            raise ValueError(f"unknown render mode {self.mode!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.floor < 1.0:
            raise ValueError(f"floor must be in [0, 1), got {self.floor}")
        if self.gif_delay_ms <= 0:
            raise ValueError(f"gif_delay_ms must be positive, got {self.gif_delay_ms}")


def _round_half_up(x: np.ndarray) -> np.ndarray:
    # values are nonnegative, so half away from zero == floor(x + 0.5)
    return np.floor(x + 0.5)


def _jet_channels(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def jet_color(v: float) -> tuple[int, int, int]:
    """Map a value in [0, 1] to an 8-bit blue-to-red false color."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"jet_color input must be in [0, 1], got {v}")
    rgb = _round_half_up(_jet_channels(np.float64(v)) * 255.0)
    return tuple(int(c) for c in rgb)


def _check_slice(frame: np.ndarray, tube_slice: np.ndarray):
    if frame.shape[:2] != tube_slice.shape:
        raise ShapeError(
            f"frame is {frame.shape[:2]} but tube slice is {tube_slice.shape}"
        )


def overlay_heat(frame: np.ndarray, tube_slice: np.ndarray, alpha: float) -> np.ndarray:
    """Blend the false-colored tube slice over one frame."""
    _check_slice(frame, tube_slice)
    color = _round_half_up(_jet_channels(tube_slice) * 255.0)
    out = (1.0 - alpha) * frame.astype(np.float64) + alpha * color
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def overlay_focus(frame: np.ndarray, tube_slice: np.ndarray, floor: float) -> np.ndarray:
    """Darken the frame where the tube is quiet; floor keeps faint context."""
    _check_slice(frame, tube_slice)
    gain = floor + (1.0 - floor) * tube_slice
    out = frame.astype(np.float64) * gain[..., None]
    return np.clip(_round_half_up(out), 0, 255).astype(np.uint8)


def composite_frames(
    frames: FrameSequence, tube: SaliencyTube, config: RenderConfig
) -> list[np.ndarray]:
    """Overlay every frame with its tube slice; returns uint8 images."""
    if tube.normalized is None:
        raise ValueError("tube has no normalized volume; normalize before rendering")
    if tube.normalized.shape[0] != len(frames):
        raise ShapeError(
            f"tube has {tube.normalized.shape[0]} frames but clip has {len(frames)}"
        )
    out = []
    for f in range(len(frames)):
        if config.mode == MODE_HEAT:
            out.append(overlay_heat(frames.frames[f], tube.normalized[f], config.alpha))
        else:
            out.append(overlay_focus(frames.frames[f], tube.normalized[f], config.floor))
    return out


def render_sequence(
    frames: FrameSequence,
    tube: SaliencyTube,
    config: RenderConfig,
    out_dir,
    gif_path=None,
) -> list[Path]:
    """Write composited frames as frame_%04d.png plus an optional GIF."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    composited = composite_frames(frames, tube, config)
    written = []
    try:
        for f, img in enumerate(composited):
            path = out_dir / f"frame_{f:04d}.png"
            Image.fromarray(img, mode="RGB").save(path, format="PNG")
            written.append(path)
        if gif_path is not None:
            gif_path = Path(gif_path)
            write_gif(gif_path, composited, delay_ms=config.gif_delay_ms)
            written.append(gif_path)
    except BaseException:
        # never leave partial output behind
        for p in written:
            Path(p).unlink(missing_ok=True)
        raise
    return written


def load_frames(directory) -> FrameSequence:
    """Decode a directory of PNG/JPEG frames, sorted by file name.

    Grayscale images expand to RGB; alpha channels are dropped.
    """
    directory = Path(directory)
    paths = sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not paths:
        raise EmptyInputError(f"no PNG/JPEG files in {directory}")
    frames = []
    for p in paths:
        try:
            with Image.open(p) as img:
                frames.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
        except (UnidentifiedImageError, OSError) as exc:
            raise FormatError(f"cannot decode {p}: {exc}") from exc
    first = frames[0].shape
    for p, arr in zip(paths, frames):
        if arr.shape != first:
            raise ShapeError(
                f"{p} is {arr.shape[1]}x{arr.shape[0]} but first frame is "
                f"{first[1]}x{first[0]}"
            )
    return FrameSequence(frames=np.stack(frames, axis=0), source_paths=tuple(paths))
