"""Dense tensor files, run manifests, and axis canonicalization.

Everything downstream works on 64-bit floats in one fixed axis order
(frame, height, width, channel), so all layout variance is absorbed here.
"""

from __future__ import annotations

import ast
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFileError,
    DataError,
    FormatError,
    ManifestError,
    ShapeError,
    UnsupportedDtypeError,
    UnsupportedLayoutError,
)

NPY_MAGIC = b"\x93NUMPY"
CANONICAL_ORDER = "FHWD"

# Supported element types; anything else is rejected at load time.
_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if out is arr:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DenseTensor:
    """A rank-1..4 float64 tensor with validated, finite contents."""

    values: np.ndarray

    def __post_init__(self):
        arr = self.values
        if not isinstance(arr, np.ndarray):
            arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim < 1 or arr.ndim > 4:
            raise ShapeError(f"tensor rank must be 1..4, got {arr.ndim}")
        if any(s <= 0 for s in arr.shape):
            raise ShapeError(f"tensor dims must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("tensor contains non-finite elements")
        object.__setattr__(self, "values", _freeze(arr))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the elements."""
        return self.values.reshape(-1)


@dataclass(frozen=True)
class ActivationVolume:
    """Final-layer activations in canonical (F', H', W', D') order."""

    tensor: DenseTensor

    def __post_init__(self):
        if self.tensor.values.ndim != 4:
            raise ShapeError(
                f"activation volume must be rank 4, got {self.tensor.values.ndim}"
            )

    @property
    def values(self) -> np.ndarray:
        return self.tensor.values

    @property
    def frames(self) -> int:
        return self.tensor.shape[0]

    @property
    def height(self) -> int:
        return self.tensor.shape[1]

    @property
    def width(self) -> int:
        return self.tensor.shape[2]

    @property
    def channels(self) -> int:
        return self.tensor.shape[3]


@dataclass(frozen=True)
class ClassifierWeights:
    """Prediction-layer weight matrix; row i scores class i."""

    matrix: np.ndarray
    bias: np.ndarray | None = None
    class_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ShapeError(f"weight matrix must be rank 2, got {m.ndim}")
        if not np.all(np.isfinite(m)):
            raise DataError("weight matrix contains non-finite elements")
        object.__setattr__(self, "matrix", _freeze(m))
        if self.bias is not None:
            b = np.ascontiguousarray(self.bias, dtype=np.float64)
            if b.ndim != 1 or b.shape[0] != m.shape[0]:
                raise ShapeError(
                    f"bias must be a length-{m.shape[0]} vector, got shape {b.shape}"
                )
            if not np.all(np.isfinite(b)):
                raise DataError("bias contains non-finite elements")
            object.__setattr__(self, "bias", _freeze(b))
        if self.class_labels is not None:
            labels = tuple(str(s) for s in self.class_labels)
            if len(labels) != m.shape[0]:
                raise ShapeError(
                    f"expected {m.shape[0]} class labels, got {len(labels)}"
                )
            object.__setattr__(self, "class_labels", labels)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_features(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class Manifest:
    """Run manifest tying tensor files, layout, and labels together."""

    version: str
    activations_path: Path
    weights_path: Path
    axis_order: str
    class_labels: tuple[str, ...]
    bias_path: Path | None = None
    frames_dir: Path | None = None
    video_dims: tuple[int, int, int] | None = None
    base_dir: Path = field(default_factory=Path)


def read_npy(path) -> DenseTensor:
    """Parse an NPY v1.0 file into a float64 tensor.

    Only little-endian C-order f4/f8 payloads are accepted; f4 is widened
    to f8 so downstream arithmetic sees a single numeric type.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 10 or raw[:6] != NPY_MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{path}: unsupported NPY version {major}.{minor}")
    (header_len,) = struct.unpack("<H", raw[8:10])
    header_end = 10 + header_len
    if len(raw) < header_end:
        raise CorruptFileError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin1"))
        descr = header["descr"]
        fortran = header["fortran_order"]
        shape = tuple(header["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed NPY header: {exc}") from exc
    if fortran:
        raise UnsupportedLayoutError(f"{path}: fortran_order files are not supported")
    if descr not in _DTYPES:
        raise UnsupportedDtypeError(f"{path}: dtype {descr!r} not supported")
    dtype = _DTYPES[descr]
    count = math.prod(shape) if shape else 1
    payload = raw[header_end:]
    if len(payload) != count * dtype.itemsize:
        raise CorruptFileError(
            f"{path}: payload holds {len(payload)} bytes, "
            f"header declares {count * dtype.itemsize}"
        )
    arr = np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite elements in payload")
    return DenseTensor(arr)


def _npy_header_bytes(shape: tuple[int, ...]) -> bytes:
    header = (
        "{'descr': '<f8', 'fortran_order': False, "
        f"'shape': {repr(tuple(shape))}, }}"
    ).encode("latin1")
    # magic(6) + version(2) + u16 len(2) + header + '\n' padded to 64 bytes
    unpadded = 10 + len(header) + 1
    pad = (-unpadded) % 64
    return header + b" " * pad + b"\n"


def write_npy(tensor: DenseTensor, path) -> None:
    """Write NPY v1.0, dtype <f8, C-order; round-trips bit-exactly."""
    if not isinstance(tensor, DenseTensor):
        raise TypeError("write_npy expects a DenseTensor")
    header = _npy_header_bytes(tensor.shape)
    payload = np.ascontiguousarray(tensor.values, dtype="<f8").tobytes(order="C")
    blob = NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header + payload
    Path(path).write_bytes(blob)


def load_manifest(path) -> Manifest:
    """Load and validate a JSON run manifest.

    Relative paths are resolved against the manifest's own directory.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from exc
    except (ValueError, UnicodeDecodeError) as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")

    base = path.parent

    def require(name):
        if name not in doc:
            raise ManifestError(f"manifest missing required field {name!r}")
        return doc[name]

    version = str(require("version"))
    axis_order = require("axis_order")
    if (
        not isinstance(axis_order, str)
        or len(axis_order) != 4
        or sorted(axis_order) != sorted(CANONICAL_ORDER)
    ):
        raise ManifestError(
            f"axis_order must be a permutation of 'FHWD', got {axis_order!r}"
        )
    labels = require("class_labels")
    if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
        raise ManifestError("class_labels must be a list of strings")

    def resolve(name, value, must_be_dir=False):
        p = base / value
        if not p.exists():
            raise ManifestError(f"{name} points to missing path: {p}")
        if must_be_dir and not p.is_dir():
            raise ManifestError(f"{name} must be a directory: {p}")
        return p

    activations = resolve("activations_path", require("activations_path"))
    weights = resolve("weights_path", require("weights_path"))
    bias = None
    if doc.get("bias_path") is not None:
        bias = resolve("bias_path", doc["bias_path"])
    frames = None
    if doc.get("frames_dir") is not None:
        frames = resolve("frames_dir", doc["frames_dir"], must_be_dir=True)
    video_dims = None
    if doc.get("video_dims") is not None:
        dims = doc["video_dims"]
        if (
            not isinstance(dims, (list, tuple))
            or len(dims) != 3
            or not all(isinstance(d, int) and d > 0 for d in dims)
        ):
            raise ManifestError(
                f"video_dims must be three positive integers, got {dims!r}"
            )
        video_dims = tuple(dims)

    return Manifest(
        version=version,
        activations_path=activations,
        weights_path=weights,
        axis_order=axis_order,
        class_labels=tuple(labels),
        bias_path=bias,
        frames_dir=frames,
        video_dims=video_dims,
        base_dir=base,
    )


def save_manifest(doc: dict, path) -> None:
    """Write a manifest JSON document; inverse of load_manifest."""
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def canonicalize(tensor: DenseTensor, axis_order: str) -> ActivationVolume:
    """Permute a rank-4 tensor from its stored layout into (F, H, W, D)."""
    if tensor.values.ndim != 4:
        raise ShapeError(f"expected rank-4 tensor, got rank {tensor.values.ndim}")
    if sorted(axis_order) != sorted(CANONICAL_ORDER):
        raise ManifestError(
            f"axis_order must be a permutation of 'FHWD', got {axis_order!r}"
        )
    perm = tuple(axis_order.index(axis) for axis in CANONICAL_ORDER)
    return ActivationVolume(DenseTensor(np.transpose(tensor.values, perm)))


def load_weights(manifest: Manifest) -> ClassifierWeights:
    """Load the weight matrix (and optional bias) named by a manifest."""
    matrix = read_npy(manifest.weights_path)
    if matrix.values.ndim != 2:
        raise ShapeError(
            f"weights must be rank 2, got rank {matrix.values.ndim}"
        )
    bias = None
    if manifest.bias_path is not None:
        b = read_npy(manifest.bias_path)
        if b.values.ndim != 1:
            raise ShapeError(f"bias must be rank 1, got rank {b.values.ndim}")
        bias = b.values
    return ClassifierWeights(
        matrix=matrix.values, bias=bias, class_labels=manifest.class_labels
    )


def load_bundle(manifest: Manifest) -> tuple[ActivationVolume, ClassifierWeights]:
    """Load activations + weights from a manifest and cross-check shapes."""
    acts = canonicalize(read_npy(manifest.activations_path), manifest.axis_order)
    weights = load_weights(manifest)
    if weights.num_features != acts.channels:
        raise ShapeError(
            f"weight matrix has {weights.num_features} columns but activations "
            f"have {acts.channels} channels"
        )
    if len(manifest.class_labels) != weights.num_classes:
        raise ManifestError(
            f"manifest lists {len(manifest.class_labels)} class_labels but "
            f"weights have {weights.num_classes} rows"
        )
    return acts, weights
