"""Command-line surface: info, compute, render, cam2d, selftest.

Exit codes are a stable contract: 0 success, 1 usage error, 2 data or
format error, 3 empty feature selection, 4 selftest failure. Diagnostics
go to stderr; data only ever goes to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import engine, selftest, tensor_io
from .engine import TauPolicy
from .errors import (
    DataError,
    EmptyInputError,
    EmptySelectionError,
    ShapeError,
    TubecamError,
)
from .render import RenderConfig, load_frames, render_sequence
from .resample import ResampleSpec, upsample

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EMPTY_SELECTION = 3
EXIT_SELFTEST = 4


class _Parser(argparse.ArgumentParser):
    # the exit-code contract reserves 1 for usage errors; argparse
    # defaults to 2, which is taken by data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("expected F,H,W")
    dims = tuple(int(p) for p in parts)
    if any(d < 1 for d in dims):
        raise ValueError("dims must be positive")
    return dims


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tubecam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_info = sub.add_parser("info", help="summarize a manifest")
    p_info.add_argument("--manifest", required=True)
    p_info.set_defaults(func=cmd_info)

    def add_compute_flags(p):
        p.add_argument("--manifest", required=True)
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--class-index", type=int)
        group.add_argument("--class-label")
        p.add_argument(
            "--tau-policy",
            type=TauPolicy.parse,
            default=TauPolicy("nonneg"),
            help="nonneg | absolute:T | percentile:P | topk:K (default nonneg)",
        )
        p.add_argument(
            "--upsample",
            type=_parse_dims,
            default=None,
            metavar="F,H,W",
            help="target video dims; defaults to the manifest's video_dims",
        )
        p.add_argument("--method", choices=["trilinear", "cubic"], default="cubic")
        p.add_argument("--out", required=True, help="output tube path (.npy)")

    p_compute = sub.add_parser("compute", help="compute a class saliency tube")
    add_compute_flags(p_compute)
    p_compute.set_defaults(func=cmd_compute, per_frame=False)

    p_cam2d = sub.add_parser(
        "cam2d", help="per-frame (2D backbone) variant of compute"
    )
    add_compute_flags(p_cam2d)
    p_cam2d.set_defaults(func=cmd_compute, per_frame=True)

    p_render = sub.add_parser("render", help="overlay a tube on clip frames")
    p_render.add_argument("--tube", required=True)
    p_render.add_argument("--frames", required=True)
    p_render.add_argument("--mode", choices=["heat", "focus"], default="heat")
    p_render.add_argument("--alpha", type=float, default=0.5)
    p_render.add_argument("--floor", type=float, default=0.15)
    p_render.add_argument("--gif", default=None)
    p_render.add_argument("--gif-delay-ms", type=int, default=100)
    p_render.add_argument("--out", required=True)
    p_render.set_defaults(func=cmd_render)

    p_selftest = sub.add_parser("selftest", help="run the built-in oracle battery")
    p_selftest.add_argument(
        "--emit",
        default=None,
        metavar="DIR",
        help="write (or reuse) the fixture and reference tube in DIR",
    )
    p_selftest.set_defaults(func=cmd_selftest)

    return parser


def cmd_info(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    acts, weights = tensor_io.load_bundle(manifest)
    print(f"activations: F'={acts.frames} H'={acts.height} W'={acts.width} D'={acts.channels}")
    print(f"stored axis order: {manifest.axis_order}")
    print(f"classes: N={weights.num_classes}")
    for i, label in enumerate(manifest.class_labels):
        print(f"  [{i}] {label}")
    if manifest.video_dims:
        print(f"video dims: F={manifest.video_dims[0]} H={manifest.video_dims[1]} W={manifest.video_dims[2]}")
    if manifest.frames_dir:
        print(f"frames dir: {manifest.frames_dir}")
    return EXIT_OK


def _resolve_class(manifest, weights, args) -> int:
    if args.class_label is not None:
        try:
            return manifest.class_labels.index(args.class_label)
        except ValueError:
            raise DataError(
                f"class label {args.class_label!r} not in manifest class_labels"
            ) from None
    idx = args.class_index
    if not 0 <= idx < weights.num_classes:
        raise IndexError(f"class index {idx} out of range [0, {weights.num_classes})")
    return idx


def _load_per_frame(manifest) -> list:
    """Per-frame volumes: a directory of NPY files, or one sliced volume."""
    path = Path(manifest.activations_path)
    if path.is_dir():
        files = sorted(path.glob("*.npy"))
        if not files:
            raise EmptyInputError(f"no NPY files in {path}")
        return [
            tensor_io.canonicalize(tensor_io.read_npy(p), manifest.axis_order)
            for p in files
        ]
    acts = tensor_io.canonicalize(
        tensor_io.read_npy(path), manifest.axis_order
    )
    return engine.slice_frames(acts)


def cmd_compute(args) -> int:
    manifest = tensor_io.load_manifest(args.manifest)
    weights = tensor_io.load_weights(manifest)
    class_index = _resolve_class(manifest, weights, args)
    selection = engine.select_features(weights, class_index, args.tau_policy)

    if args.per_frame:
        frame_acts = _load_per_frame(manifest)
        if weights.num_features != frame_acts[0].channels:
            raise ShapeError(
                f"weight matrix has {weights.num_features} columns but activations "
                f"have {frame_acts[0].channels} channels"
            )
        tube = engine.cam2d_per_frame(
            frame_acts, weights, class_index, args.tau_policy
        )
    else:
        acts = tensor_io.canonicalize(
            tensor_io.read_npy(manifest.activations_path), manifest.axis_order
        )
        tube = engine.sum_tube(engine.weight_activations(acts, weights, selection))

    target = args.upsample if args.upsample is not None else manifest.video_dims
    if target is not None:
        tube = upsample(tube, ResampleSpec(target=tuple(target), method=args.method))
    tube = engine.normalize_tube(tube)

    label = manifest.class_labels[class_index]
    written = engine.save_tube(
        tube, args.out, policy=args.tau_policy, selection=selection, class_label=label
    )
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    # flag validation happens before any file is touched
    config = RenderConfig(
        mode=args.mode,
        alpha=args.alpha,
        floor=args.floor,
        gif_delay_ms=args.gif_delay_ms,
    )
    tube_path = Path(args.tube)
    values = tensor_io.read_npy(tube_path).values
    if values.ndim != 3:
        raise ShapeError(f"tube must be rank 3 (F, H, W), got rank {values.ndim}")
    if values.min() < 0.0 or values.max() > 1.0:
        raise DataError(
            "tube values fall outside [0, 1]; render wants the normalized tube"
        )
    class_index = 0
    sidecar = tube_path.parent / (tube_path.stem + ".json")
    if sidecar.exists():
        try:
            class_index = int(json.loads(sidecar.read_text())["class_index"])
        except (ValueError, KeyError, TypeError):
            pass
    tube = engine.SaliencyTube(
        class_index=class_index,
        raw=values,
        normalized=values,
        resolution_tag=engine.RESOLUTION_VIDEO,
    )
    frames = load_frames(args.frames)
    written = render_sequence(frames, tube, config, args.out, gif_path=args.gif)
    print(f"wrote {len(written)} files to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_selftest(args) -> int:
    fixture_dir = Path(args.emit) if args.emit else None
    results = selftest.run_all(fixture_dir)
    failed = []
    for name, problem in results:
        if problem is None:
            print(f"ok   {name}")
        else:
            print(f"FAIL {name}: {problem}")
            failed.append(name)
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_SELFTEST
    if fixture_dir is not None:
        _emit_reference_tube(fixture_dir)
        print(f"fixture written to {fixture_dir}", file=sys.stderr)
    return EXIT_OK


def _emit_reference_tube(fixture_dir: Path) -> None:
    """Reference tube for cross-implementation comparisons."""
    manifest = tensor_io.load_manifest(fixture_dir / "manifest.json")
    acts, weights = tensor_io.load_bundle(manifest)
    policy = TauPolicy("nonneg")
    selection = engine.select_features(weights, 0, policy)
    tube = engine.sum_tube(engine.weight_activations(acts, weights, selection))
    if manifest.video_dims:
        tube = upsample(tube, ResampleSpec(target=manifest.video_dims))
    tube = engine.normalize_tube(tube)
    engine.save_tube(
        tube,
        fixture_dir / "tube.npy",
        policy=policy,
        selection=selection,
        class_label=manifest.class_labels[0],
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except EmptySelectionError as exc:
        print(f"tubecam: {exc}", file=sys.stderr)
        return EXIT_EMPTY_SELECTION
    except (TubecamError, IndexError) as exc:
        print(f"tubecam: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"tubecam: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"tubecam: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
