"""Class-discriminative spatio-temporal saliency volumes for 3D video
classifiers, plus heat/focus overlay rendering."""

from .engine import (
    FeatureSelection,
    SaliencyTube,
    TauPolicy,
    WeightedFeatureMaps,
    cam2d_per_frame,
    normalize_tube,
    per_feature_tubes,
    select_features,
    sum_tube,
    weight_activations,
)
from .render import FrameSequence, RenderConfig, load_frames, render_sequence
from .resample import ResampleSpec, temporal_marginal, upsample
from .tensor_io import (
    ActivationVolume,
    ClassifierWeights,
    DenseTensor,
    Manifest,
    canonicalize,
    load_bundle,
    load_manifest,
    read_npy,
    write_npy,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationVolume",
    "ClassifierWeights",
    "DenseTensor",
    "FeatureSelection",
    "FrameSequence",
    "Manifest",
    "RenderConfig",
    "ResampleSpec",
    "SaliencyTube",
    "TauPolicy",
    "WeightedFeatureMaps",
    "cam2d_per_frame",
    "canonicalize",
    "load_bundle",
    "load_frames",
    "load_manifest",
    "normalize_tube",
    "per_feature_tubes",
    "read_npy",
    "render_sequence",
    "select_features",
    "sum_tube",
    "temporal_marginal",
    "upsample",
    "weight_activations",
    "write_npy",
]
