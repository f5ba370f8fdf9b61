#!/usr/bin/env python3
"""Contrast the per-frame (2D backbone) path with the full 3D path.

Replicating one frame's activations across time stands in for a 2D
backbone, whose saliency cannot localize in time: the temporal marginal
comes out flat. The 3D path on a clip with a transient event peaks
exactly where the event happens."""

import sys

import numpy as np

from tubecam import engine, refnet, resample
from tubecam.engine import TauPolicy
from tubecam.resample import ResampleSpec
from tubecam.tensor_io import ActivationVolume, ClassifierWeights, DenseTensor


def print_marginal(label, marginal):
    peak = marginal.max() if marginal.max() > 0 else 1.0
    print(label)
    for f, m in enumerate(marginal):
        print(f"  frame {f:2d} {'#' * int(50 * m / peak)}")
    print(f"  peak/mean ratio: {marginal.max() / marginal.mean():.2f}\n")


def main() -> int:
    rng = np.random.default_rng(7)

    # 2D stand-in: one frame's activations replicated over 16 frames
    frame = rng.random((1, 6, 6, 8))
    frames = [ActivationVolume(DenseTensor(frame)) for _ in range(16)]
    weights = ClassifierWeights(matrix=np.abs(rng.standard_normal((1, 8))))
    flat_tube = engine.cam2d_per_frame(frames, weights, 0, TauPolicy("nonneg"))
    print_marginal(
        "2D path (replicated activations):",
        resample.temporal_marginal(flat_tube),
    )

    # 3D path: transient bright cube on frames 5..8
    net, clip, support = refnet.make_blob_case()
    acts, _ = refnet.forward(net, clip)
    selection = engine.select_features(net.head, 0, TauPolicy("nonneg"))
    tube = engine.sum_tube(engine.weight_activations(acts, net.head, selection))
    up = resample.upsample(tube, ResampleSpec(target=(16, 32, 32)))
    print_marginal(
        f"3D path (event on frames {support['frames'][0]}..{support['frames'][1]}):",
        resample.temporal_marginal(up),
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
