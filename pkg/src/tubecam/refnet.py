"""A tiny deterministic 3D CNN used as a self-contained test oracle.

Architecture: stacked same-padded conv3d + ReLU blocks feeding a global
average pool and a linear head. That is exactly the architecture class for
which summing weight-scaled final activations decomposes the logit, so the
whole pipeline can be checked against closed-form identities without any
external model or checkpoint.

Weight generation is pinned bit-exactly so fixtures are reproducible from
the seed alone, in any language:

* Generator: 64-bit LCG, ``state = (6364136223846793005 * state
  + 1442695040888963407) mod 2**64`` (Knuth's MMIX constants), seeded with
  ``seed mod 2**64``. Each draw advances the state once and yields
  ``(state >> 11) / 2**53``, a float in [0, 1).
* Draw order: for each conv layer, kernel elements in C order over
  (d_out, d_in, kf, kh, kw) as uniform[-s, s) with s = (d_in*kf*kh*kw)**-0.5,
  then the bias as uniform[-0.1, 0.1); then the head matrix in C order over
  (class, channel) as uniform[-s, s) with s = channels**-0.5, then the head
  bias as uniform[-0.1, 0.1).
* Fixture clips: every channel value is ``floor(draw() * 256) / 255`` clamped
  to [0, 1], drawn in C order over (frame, row, col, channel). Values sit
  on the 8-bit grid, so clips survive a round-trip through PNG frames
  unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import tensor_io
from .errors import ShapeError
from .tensor_io import ActivationVolume, ClassifierWeights, DenseTensor

_LCG_MULT = 6364136223846793005
_LCG_ADD = 1442695040888963407
_MASK64 = (1 << 64) - 1

FIXTURE_SEED = 7
FIXTURE_CLIP_DIMS = (16, 16, 20)  # frames, height, width
FIXTURE_IN_CHANNELS = 3
FIXTURE_CONV_CHANNELS = (6,)
FIXTURE_NUM_CLASSES = 4


class Lcg:
    """The pinned 64-bit linear congruential stream described above."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def draw(self) -> float:
        self.state = (_LCG_MULT * self.state + _LCG_ADD) & _MASK64
        return (self.state >> 11) / float(1 << 53)

    def uniform(self, lo: float, hi: float, count: int) -> np.ndarray:
        return np.array([lo + (hi - lo) * self.draw() for _ in range(count)])


@dataclass(frozen=True)
class Conv3dLayer:
    """Same-padded stride-1 cross-correlation with bias and trailing ReLU."""

    kernels: np.ndarray  # (D_out, D_in, kF, kH, kW)
    bias: np.ndarray  # (D_out,)

    def __post_init__(self):
        k = np.ascontiguousarray(self.kernels, dtype=np.float64)
        if k.ndim != 5:
            raise ShapeError(f"kernels must be rank 5, got {k.ndim}")
        if any(s % 2 == 0 for s in k.shape[2:]):
            raise ShapeError(f"kernel extents must be odd, got {k.shape[2:]}")
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if b.shape != (k.shape[0],):
            raise ShapeError(f"bias must have shape ({k.shape[0]},), got {b.shape}")
        object.__setattr__(self, "kernels", k)
        object.__setattr__(self, "bias", b)

    @property
    def in_channels(self) -> int:
        return self.kernels.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernels.shape[0]


@dataclass(frozen=True)
class RefNet:
    conv_layers: tuple[Conv3dLayer, ...]
    head: ClassifierWeights

    def __post_init__(self):
        if not self.conv_layers:
            raise ShapeError("need at least one conv layer")
        if self.head.num_features != self.conv_layers[-1].out_channels:
            raise ShapeError(
                f"head expects {self.head.num_features} channels but last layer "
                f"emits {self.conv_layers[-1].out_channels}"
            )


def conv3d_forward(inp: ActivationVolume, layer: Conv3dLayer) -> ActivationVolume:
    """Zero-padded stride-1 cross-correlation, bias, then ReLU."""
    if inp.channels != layer.in_channels:
        raise ShapeError(
            f"input has {inp.channels} channels, layer expects {layer.in_channels}"
        )
    kf, kh, kw = layer.kernels.shape[2:]
    pf, ph, pw = kf // 2, kh // 2, kw // 2
    f, h, w = inp.frames, inp.height, inp.width
    padded = np.zeros((f + 2 * pf, h + 2 * ph, w + 2 * pw, inp.channels))
    padded[pf : pf + f, ph : ph + h, pw : pw + w] = inp.values
    out = np.zeros((f, h, w, layer.out_channels))
    for a in range(kf):
        for b in range(kh):
            for c in range(kw):
                out += padded[a : a + f, b : b + h, c : c + w] @ layer.kernels[:, :, a, b, c].T
    out += layer.bias
    np.maximum(out, 0.0, out=out)
    return ActivationVolume(DenseTensor(out))


def forward(net: RefNet, clip: ActivationVolume) -> tuple[ActivationVolume, np.ndarray]:
    """Run the net; returns final-layer activations and class logits."""
    acts = clip
    for layer in net.conv_layers:
        acts = conv3d_forward(acts, layer)
    gap = acts.values.mean(axis=(0, 1, 2))
    logits = net.head.matrix @ gap
    if net.head.bias is not None:
        logits = logits + net.head.bias
    return acts, logits


def make_seeded(
    seed: int,
    in_channels: int,
    conv_channels: tuple[int, ...],
    num_classes: int,
    kernel: int = 3,
    class_labels: tuple[str, ...] | None = None,
) -> RefNet:
    """Deterministic net from the pinned generator; same seed, same bytes."""
    rng = Lcg(seed)
    layers = []
    d_in = in_channels
    for d_out in conv_channels:
        fan_in = d_in * kernel * kernel * kernel
        scale = fan_in**-0.5
        k = rng.uniform(-scale, scale, d_out * fan_in).reshape(
            d_out, d_in, kernel, kernel, kernel
        )
        b = rng.uniform(-0.1, 0.1, d_out)
        layers.append(Conv3dLayer(kernels=k, bias=b))
        d_in = d_out
    scale = d_in**-0.5
    matrix = rng.uniform(-scale, scale, num_classes * d_in).reshape(num_classes, d_in)
    bias = rng.uniform(-0.1, 0.1, num_classes)
    if class_labels is None:
        class_labels = tuple(f"class_{i}" for i in range(num_classes))
    head = ClassifierWeights(matrix=matrix, bias=bias, class_labels=class_labels)
    return RefNet(conv_layers=tuple(layers), head=head)


def weight_digest(net: RefNet) -> str:
    """SHA-256 over all weight bytes, for fixture pinning."""
    import hashlib

    h = hashlib.sha256()
    for layer in net.conv_layers:
        h.update(layer.kernels.tobytes())
        h.update(layer.bias.tobytes())
    h.update(net.head.matrix.tobytes())
    if net.head.bias is not None:
        h.update(net.head.bias.tobytes())
    return h.hexdigest()


def fixture_clip(seed: int, frames: int, height: int, width: int, channels: int) -> ActivationVolume:
    """Pseudo-random clip on the 8-bit grid (see module docstring)."""
    rng = Lcg(seed)
    n = frames * height * width * channels
    vals = np.array([min(int(rng.draw() * 256), 255) for _ in range(n)], dtype=np.float64)
    return ActivationVolume(
        DenseTensor((vals / 255.0).reshape(frames, height, width, channels))
    )


def make_fixture_net(seed: int = FIXTURE_SEED) -> RefNet:
    return make_seeded(
        seed,
        in_channels=FIXTURE_IN_CHANNELS,
        conv_channels=FIXTURE_CONV_CHANNELS,
        num_classes=FIXTURE_NUM_CLASSES,
    )


def make_fixture_clip(seed: int = FIXTURE_SEED) -> ActivationVolume:
    f, h, w = FIXTURE_CLIP_DIMS
    return fixture_clip(seed + 1, f, h, w, FIXTURE_IN_CHANNELS)


def emit_fixture(out_dir, seed: int = FIXTURE_SEED) -> Path:
    """Write the selftest fixture: NPY tensors, clip frames, manifest.

    Activations are stored channels-first ("DFHW") on purpose, so loading
    the fixture exercises the same permutation path a real exporter does.
    Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    net = make_fixture_net(seed)
    clip = make_fixture_clip(seed)
    acts, _ = forward(net, clip)

    written = []
    try:
        stored = np.ascontiguousarray(np.transpose(acts.values, (3, 0, 1, 2)))
        for name, tensor in (
            ("activations.npy", DenseTensor(stored)),
            ("weights.npy", DenseTensor(net.head.matrix)),
            ("bias.npy", DenseTensor(net.head.bias)),
        ):
            tensor_io.write_npy(tensor, out_dir / name)
            written.append(out_dir / name)

        frames_dir = out_dir / "frames"
        frames_dir.mkdir(exist_ok=True)
        frames8 = np.floor(clip.values * 255.0 + 0.5).astype(np.uint8)
        for f in range(clip.frames):
            path = frames_dir / f"frame_{f:04d}.png"
            Image.fromarray(frames8[f], mode="RGB").save(path, format="PNG")
            written.append(path)

        manifest_path = out_dir / "manifest.json"
        tensor_io.save_manifest(
            {
                "version": "1",
                "activations_path": "activations.npy",
                "weights_path": "weights.npy",
                "bias_path": "bias.npy",
                "axis_order": "DFHW",
                "class_labels": list(net.head.class_labels),
                "frames_dir": "frames",
                "video_dims": [clip.frames, clip.height, clip.width],
            },
            manifest_path,
        )
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return manifest_path


def make_blob_case(
    frames: int = 16, height: int = 8, width: int = 8
) -> tuple[RefNet, ActivationVolume, dict]:
    """Net + clip where one channel responds to a known bright cube.

    The clip is dark except for a unit-brightness cube on frames 5..8,
    rows 2..4, cols 5..7 (inclusive, zero-based). Channel 0 is a local
    mean detector, channel 1 a flat background; class 0 weighs the
    detector heavily, so its tube must peak inside the cube.
    """
    clip_vals = np.zeros((frames, height, width, 1))
    support = {"frames": (5, 8), "rows": (2, 4), "cols": (5, 7)}
    f0, f1 = support["frames"]
    r0, r1 = support["rows"]
    c0, c1 = support["cols"]
    clip_vals[f0 : f1 + 1, r0 : r1 + 1, c0 : c1 + 1, 0] = 1.0
    clip = ActivationVolume(DenseTensor(clip_vals))

    kernels = np.zeros((2, 1, 3, 3, 3))
    kernels[0] = 1.0 / 27.0
    bias = np.array([0.0, 0.05])
    layer = Conv3dLayer(kernels=kernels, bias=bias)
    head = ClassifierWeights(
        matrix=np.array([[1.0, 0.1], [-1.0, 0.2]]),
        bias=np.array([0.0, 0.0]),
        class_labels=("target", "other"),
    )
    return RefNet(conv_layers=(layer,), head=head), clip, support
