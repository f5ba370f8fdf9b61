"""Class-weighted activation tubes.

The core operation: pick the feature channels whose class weight clears a
threshold policy, scale each channel's activation map by its weight, and
sum the survivors into a single class-discriminative volume. A per-frame
mode covers activations coming out of a plain 2D backbone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptySelectionError, ShapeError
from .tensor_io import ActivationVolume, ClassifierWeights, DenseTensor, write_npy

RESOLUTION_ACTIVATION = "activation"
RESOLUTION_VIDEO = "video"

_POLICY_KINDS = ("nonneg", "absolute", "percentile", "topk")


@dataclass(frozen=True)
class TauPolicy:
    """How the feature-retention threshold is chosen.

    kind "nonneg" keeps channels with weight >= 0 and ignores value;
    "absolute" keeps weight >= value; "percentile" keeps weights at or
    above the value-th percentile of the class row; "topk" keeps the
    value largest weights.
    """

    kind: str = "nonneg"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in _POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "percentile" and not 0.0 <= self.value <= 100.0:
            raise ValueError(f"percentile must be in [0, 100], got {self.value}")
        if self.kind == "topk":
            if self.value != int(self.value) or self.value < 1:
                raise ValueError(f"topk count must be a positive integer, got {self.value}")

    @classmethod
    def parse(cls, text: str) -> "TauPolicy":
        """Parse 'nonneg', 'absolute:T', 'percentile:P' or 'topk:K'."""
        kind, sep, rest = text.partition(":")
        if kind == "nonneg":
            if sep:
                raise ValueError("nonneg takes no parameter")
            return cls("nonneg")
        if kind not in _POLICY_KINDS:
            raise ValueError(f"unknown policy kind {kind!r}")
        if not sep or not rest:
            raise ValueError(f"policy {kind!r} needs a parameter, e.g. {kind}:2")
        value = float(rest) if kind != "topk" else int(rest)
        return cls(kind, float(value))


@dataclass(frozen=True)
class FeatureSelection:
    """Retained channel indices for one class; the complement is dropped."""

    class_index: int
    selected: tuple[int, ...]
    excluded_count: int


@dataclass(frozen=True)
class WeightedFeatureMaps:
    """One weight-scaled activation map per retained channel.

    maps has shape (n_selected, F', H', W'); row k corresponds to
    feature_indices[k] and holds weight * activation element-wise.
    """

    class_index: int
    feature_indices: tuple[int, ...]
    weights: tuple[float, ...]
    maps: np.ndarray


@dataclass(frozen=True)
class SaliencyTube:
    """A class-specific saliency volume, optionally min-max normalized."""

    class_index: int
    raw: np.ndarray
    normalized: np.ndarray | None = None
    resolution_tag: str = RESOLUTION_ACTIVATION


def select_features(
    weights: ClassifierWeights, class_index: int, policy: TauPolicy
) -> FeatureSelection:
    """Apply a threshold policy to one class row of the weight matrix."""
    n, d = weights.matrix.shape
    if not 0 <= class_index < n:
        raise IndexError(f"class_index {class_index} out of range [0, {n})")
    row = weights.matrix[class_index]

    if policy.kind == "nonneg":
        mask = row >= 0.0
    elif policy.kind == "absolute":
        mask = row >= policy.value
    elif policy.kind == "percentile":
        tau = float(np.percentile(row, policy.value, method="linear"))
        mask = row >= tau
    else:  # topk
        k = int(policy.value)
        if k > d:
            raise ValueError(f"topk count {k} exceeds channel count {d}")
        # stable sort on the negated row breaks ties toward lower index
        order = np.argsort(-row, kind="stable")
        mask = np.zeros(d, dtype=bool)
        mask[order[:k]] = True

    selected = tuple(int(j) for j in np.nonzero(mask)[0])
    if not selected:
        raise EmptySelectionError(
            f"policy {policy.kind} retained no channels for class {class_index}; "
            "retry with a looser policy"
        )
    return FeatureSelection(
        class_index=class_index, selected=selected, excluded_count=d - len(selected)
    )


def weight_activations(
    acts: ActivationVolume,
    weights: ClassifierWeights,
    selection: FeatureSelection,
) -> WeightedFeatureMaps:
    """Scale each retained channel's activation map by its class weight."""
    if weights.num_features != acts.channels:
        raise ShapeError(
            f"weight matrix has {weights.num_features} columns but activations "
            f"have {acts.channels} channels"
        )
    if not selection.selected:
        raise EmptySelectionError("selection retained no channels")
    row = weights.matrix[selection.class_index]
    idx = np.asarray(selection.selected, dtype=np.intp)
    # (F,H,W,n_sel) * (n_sel,) -> move channel axis to the front
    maps = np.moveaxis(acts.values[..., idx] * row[idx], -1, 0)
    return WeightedFeatureMaps(
        class_index=selection.class_index,
        feature_indices=selection.selected,
        weights=tuple(float(row[j]) for j in selection.selected),
        maps=np.ascontiguousarray(maps),
    )


def sum_tube(maps: WeightedFeatureMaps) -> SaliencyTube:
    """Sum the weighted maps over channels into one saliency volume."""
    if maps.maps.shape[0] == 0:
        raise EmptySelectionError("no maps to sum")
    return SaliencyTube(
        class_index=maps.class_index,
        raw=maps.maps.sum(axis=0),
        resolution_tag=RESOLUTION_ACTIVATION,
    )


def per_feature_tubes(
    maps: WeightedFeatureMaps, top_m: int
) -> list[tuple[int, SaliencyTube]]:
    """Single-feature tubes for the top_m channels by class weight.

    Ranking is weight-descending with ties broken toward the lower
    channel index, so repeated calls are deterministic.
    """
    n = len(maps.feature_indices)
    if not 1 <= top_m <= n:
        raise IndexError(f"top_m {top_m} out of range [1, {n}]")
    order = np.argsort(-np.asarray(maps.weights), kind="stable")[:top_m]
    out = []
    for k in order:
        out.append(
            (
                maps.feature_indices[k],
                SaliencyTube(
                    class_index=maps.class_index,
                    raw=maps.maps[k].copy(),
                    resolution_tag=RESOLUTION_ACTIVATION,
                ),
            )
        )
    return out


def normalize_tube(tube: SaliencyTube) -> SaliencyTube:
    """Min-max normalize over the whole volume; constant volumes go to 0."""
    lo = float(tube.raw.min())
    hi = float(tube.raw.max())
    if hi == lo:
        normalized = np.zeros_like(tube.raw)
    else:
        normalized = (tube.raw - lo) / (hi - lo)
    return SaliencyTube(
        class_index=tube.class_index,
        raw=tube.raw,
        normalized=normalized,
        resolution_tag=tube.resolution_tag,
    )


def cam2d_per_frame(
    frame_acts: list[ActivationVolume],
    weights: ClassifierWeights,
    class_index: int,
    policy: TauPolicy,
) -> SaliencyTube:
    """Per-frame mode for 2D-backbone activations.

    Each element carries a single frame; selection happens once from the
    shared weight row, then every frame is weighted and summed on its own
    and the results are stacked along the time axis.
    """
    if not frame_acts:
        raise ShapeError("frame_acts is empty")
    first = frame_acts[0]
    for av in frame_acts:
        if av.frames != 1:
            raise ShapeError(f"per-frame volume must have F'=1, got {av.frames}")
        if (av.height, av.width, av.channels) != (
            first.height,
            first.width,
            first.channels,
        ):
            raise ShapeError(
                "per-frame volumes disagree: "
                f"{(av.height, av.width, av.channels)} vs "
                f"{(first.height, first.width, first.channels)}"
            )
    selection = select_features(weights, class_index, policy)
    slices = [
        sum_tube(weight_activations(av, weights, selection)).raw[0]
        for av in frame_acts
    ]
    return SaliencyTube(
        class_index=class_index,
        raw=np.stack(slices, axis=0),
        resolution_tag=RESOLUTION_ACTIVATION,
    )


def slice_frames(acts: ActivationVolume) -> list[ActivationVolume]:
    """Split a volume into F' single-frame volumes (for the 2D path)."""
    return [
        ActivationVolume(DenseTensor(acts.values[f : f + 1]))
        for f in range(acts.frames)
    ]


def save_tube(
    tube: SaliencyTube,
    path,
    policy: TauPolicy | None = None,
    selection: FeatureSelection | None = None,
    class_label: str | None = None,
) -> list[Path]:
    """Serialize a tube: normalized NPY at `path`, raw NPY and JSON sidecar
    alongside it. Returns the written paths."""
    path = Path(path)
    if path.suffix != ".npy":
        path = path.with_suffix(".npy")
    raw_path = path.parent / (path.stem + ".raw.npy")
    sidecar_path = path.parent / (path.stem + ".json")

    written = []
    try:
        main = tube.normalized if tube.normalized is not None else tube.raw
        write_npy(DenseTensor(np.ascontiguousarray(main)), path)
        written.append(path)
        write_npy(DenseTensor(np.ascontiguousarray(tube.raw)), raw_path)
        written.append(raw_path)
        sidecar = {
            "class_index": tube.class_index,
            "class_label": class_label,
            "policy": None
            if policy is None
            else {"kind": policy.kind, "value": policy.value},
            "selected_features": None if selection is None else list(selection.selected),
            "excluded_count": None if selection is None else selection.excluded_count,
            "resolution_tag": tube.resolution_tag,
            "shape": list(tube.raw.shape),
            "normalized": tube.normalized is not None,
            "raw_path": raw_path.name,
        }
        sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
        written.append(sidecar_path)
    except BaseException:
        # never leave a partial tube on disk
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written
