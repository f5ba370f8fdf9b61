"""Capture a video model's final-conv activations and head weights.

Runs one clip through a PyTorch model, grabs the named layer's output via
a forward hook, pulls the prediction layer's weight matrix, and writes
NPY files plus a manifest the tube tool loads directly. No tube math
happens here; this script only moves tensors out of the framework.
"""

from __future__ import annotations

import argparse
import importlib.util
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

MANIFEST_VERSION = "1"


class ExportError(Exception):
    pass


@dataclass
class ExportJob:
    model_py: Path
    layer: str
    frames_dir: Path
    out_dir: Path
    model_factory: str = "build_model"
    checkpoint: Path | None = None
    clip_length: int = 16
    labels_file: Path | None = None
    head: str | None = None
    resize: tuple[int, int] | None = None
    dtype: str = "float32"


def load_model(job: ExportJob) -> torch.nn.Module:
    spec = importlib.util.spec_from_file_location("export_model_def", job.model_py)
    if spec is None or spec.loader is None:
        raise ExportError(f"cannot import model file {job.model_py}")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    factory = getattr(module, job.model_factory, None)
    if factory is None:
        raise ExportError(
            f"{job.model_py} has no factory named {job.model_factory!r}"
        )
    model = factory()
    if not isinstance(model, torch.nn.Module):
        raise ExportError(f"{job.model_factory}() did not return an nn.Module")
    if job.checkpoint is not None:
        state = torch.load(job.checkpoint, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    return model


def load_clip(job: ExportJob) -> torch.Tensor:
    """Decode the first clip_length frames to a (1, C, F, H, W) tensor."""
    paths = sorted(
        p
        for p in Path(job.frames_dir).iterdir()
        if p.suffix.lower() in {".png", ".jpg", ".jpeg"}
    )
    if len(paths) < job.clip_length:
        raise ExportError(
            f"need {job.clip_length} frames, found {len(paths)} in {job.frames_dir}"
        )
    frames = []
    for p in paths[: job.clip_length]:
        with Image.open(p) as img:
            img = img.convert("RGB")
            if job.resize is not None:
                img = img.resize((job.resize[1], job.resize[0]), Image.BILINEAR)
            frames.append(np.asarray(img, dtype=np.float64) / 255.0)
    clip = np.stack(frames, axis=0)  # (F, H, W, C)
    tensor = torch.from_numpy(clip).permute(3, 0, 1, 2).unsqueeze(0)
    return tensor.to(getattr(torch, job.dtype))


def find_head(model: torch.nn.Module, name: str | None) -> torch.nn.Linear:
    if name is not None:
        module = dict(model.named_modules()).get(name)
        if module is None:
            raise ExportError(f"no module named {name!r} for the head")
        if not isinstance(module, torch.nn.Linear):
            raise ExportError(f"head module {name!r} is not a Linear layer")
        return module
    last = None
    for _, module in model.named_modules():
        if isinstance(module, torch.nn.Linear):
            last = module
    if last is None:
        raise ExportError("model has no Linear layer to use as the prediction head")
    return last


def capture_activations(
    model: torch.nn.Module, layer: str, clip: torch.Tensor
) -> torch.Tensor:
    modules = dict(model.named_modules())
    if layer not in modules:
        available = ", ".join(sorted(n for n in modules if n))
        raise ExportError(f"layer {layer!r} not found; available: {available}")
    grabbed = []
    handle = modules[layer].register_forward_hook(
        lambda _m, _inp, out: grabbed.append(out)
    )
    try:
        with torch.no_grad():
            model(clip)
    except Exception as exc:
        raise ExportError(f"model forward pass failed: {exc}") from exc
    finally:
        handle.remove()
    if not grabbed:
        raise ExportError(f"layer {layer!r} never ran during the forward pass")
    acts = grabbed[-1]
    if acts.dim() != 5:
        raise ExportError(
            f"captured tensor has rank {acts.dim()}, expected 5 (batch, C, F, H, W)"
        )
    if acts.shape[0] != 1:
        raise ExportError(f"batch dimension must be 1, got {acts.shape[0]}")
    return acts[0]  # (C, F, H, W) -> stored axis order DFHW


def run_export(job: ExportJob) -> Path:
    model = load_model(job)
    clip = load_clip(job)
    acts = capture_activations(model, job.layer, clip)
    head = find_head(model, job.head)

    weight = head.weight.detach().cpu().numpy().astype(np.float64)
    if weight.shape[1] != acts.shape[0]:
        raise ExportError(
            f"head expects {weight.shape[1]} channels but layer {job.layer!r} "
            f"emits {acts.shape[0]}"
        )

    if job.labels_file is not None:
        labels = [
            line.strip()
            for line in Path(job.labels_file).read_text().splitlines()
            if line.strip()
        ]
        if len(labels) != weight.shape[0]:
            raise ExportError(
                f"labels file lists {len(labels)} classes, head has {weight.shape[0]}"
            )
    else:
        labels = [f"class_{i}" for i in range(weight.shape[0])]

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    acts64 = np.ascontiguousarray(acts.detach().cpu().numpy().astype(np.float64))
    np.save(out_dir / "activations.npy", acts64)
    np.save(out_dir / "weights.npy", np.ascontiguousarray(weight))

    manifest = {
        "version": MANIFEST_VERSION,
        "activations_path": "activations.npy",
        "weights_path": "weights.npy",
        "axis_order": "DFHW",
        "class_labels": labels,
        "video_dims": [clip.shape[2], clip.shape[3], clip.shape[4]],
    }
    if head.bias is not None:
        np.save(
            out_dir / "bias.npy",
            np.ascontiguousarray(head.bias.detach().cpu().numpy().astype(np.float64)),
        )
        manifest["bias_path"] = "bias.npy"
    frames_dir = Path(job.frames_dir).resolve()
    try:
        manifest["frames_dir"] = str(frames_dir.relative_to(out_dir.resolve()))
    except ValueError:
        manifest["frames_dir"] = str(frames_dir)

    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubecam-export", description=__doc__)
    parser.add_argument("--model-py", required=True, help="python file defining the model factory")
    parser.add_argument("--model-factory", default="build_model")
    parser.add_argument("--checkpoint", default=None, help="optional state-dict path")
    parser.add_argument("--layer", required=True, help="named module whose output is captured")
    parser.add_argument("--frames", required=True, help="directory of clip frames")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--clip-length", type=int, default=16)
    parser.add_argument("--labels", default=None, help="text file, one class label per line")
    parser.add_argument("--head", default=None, help="named Linear module (default: last Linear)")
    parser.add_argument("--resize", type=int, nargs=2, metavar=("H", "W"), default=None)
    parser.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = ExportJob(
        model_py=Path(args.model_py),
        model_factory=args.model_factory,
        checkpoint=Path(args.checkpoint) if args.checkpoint else None,
        layer=args.layer,
        frames_dir=Path(args.frames),
        out_dir=Path(args.out),
        clip_length=args.clip_length,
        labels_file=Path(args.labels) if args.labels else None,
        head=args.head,
        resize=tuple(args.resize) if args.resize else None,
        dtype=args.dtype,
    )
    try:
        manifest_path = run_export(job)
    except ExportError as exc:
        print(f"tubecam-export: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"tubecam-export: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest_path}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
