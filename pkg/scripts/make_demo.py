#!/usr/bin/env python3
"""End-to-end demo on synthetic data: build a clip with a bright moving
cube, run the bundled reference net, compute the class tube, and render
heat/focus overlays plus GIFs into demo_out/."""

import sys
from pathlib import Path

import numpy as np

from tubecam import engine, refnet, resample
from tubecam.engine import TauPolicy
from tubecam.render import FrameSequence, RenderConfig, render_sequence
from tubecam.resample import ResampleSpec


def main() -> int:
    out_root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_out")
    out_root.mkdir(parents=True, exist_ok=True)

    net, clip, support = refnet.make_blob_case(frames=16, height=8, width=8)
    acts, logits = refnet.forward(net, clip)
    print(f"logits: {np.round(logits, 4)} (class 0 is the cube detector)")

    selection = engine.select_features(net.head, 0, TauPolicy("nonneg"))
    tube = engine.sum_tube(engine.weight_activations(acts, net.head, selection))
    video_dims = (16, 128, 128)
    tube = engine.normalize_tube(
        resample.upsample(tube, ResampleSpec(target=video_dims))
    )

    marginal = resample.temporal_marginal(tube)
    print("temporal marginal (per-frame mean):")
    for f, m in enumerate(marginal):
        bar = "#" * int(60 * m / marginal.max())
        mark = " <- cube" if support["frames"][0] <= f <= support["frames"][1] else ""
        print(f"  frame {f:2d} {bar}{mark}")

    # frames: the clip upscaled to video size, gray -> RGB
    gray = resample.resample_volume(clip.values[..., 0], video_dims, "trilinear")
    frames8 = np.clip(np.floor(gray * 200 + 30 + 0.5), 0, 255).astype(np.uint8)
    frames = FrameSequence(frames=np.repeat(frames8[..., None], 3, axis=-1))

    for mode in ("heat", "focus"):
        out_dir = out_root / mode
        written = render_sequence(
            frames,
            tube,
            RenderConfig(mode=mode),
            out_dir,
            gif_path=out_dir / f"{mode}.gif",
        )
        print(f"{mode}: wrote {len(written)} files under {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
