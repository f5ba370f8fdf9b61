"""Built-in oracle battery behind the `selftest` subcommand.

Each check pairs the production path with an independent re-computation
(triple loops, closed forms, algebraic identities) so a clean build can
vouch for itself without external data.
"""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from . import engine, refnet, resample, tensor_io
from .refnet import Lcg
from .tensor_io import ActivationVolume, ClassifierWeights, DenseTensor


def _rand_array(rng: Lcg, shape, lo=-1.0, hi=1.0) -> np.ndarray:
    n = int(np.prod(shape))
    return rng.uniform(lo, hi, n).reshape(shape)


def _tube_by_loops(acts: np.ndarray, row: np.ndarray, selected) -> np.ndarray:
    """Index-by-index re-computation of the weighted channel sum."""
    f_n, h_n, w_n, _ = acts.shape
    out = np.zeros((f_n, h_n, w_n))
    for f in range(f_n):
        for h in range(h_n):
            for w in range(w_n):
                total = 0.0
                for j in selected:
                    total += row[j] * acts[f, h, w, j]
                out[f, h, w] = total
    return out


def check_npy_round_trip() -> str | None:
    rng = Lcg(101)
    for case in range(50):
        rank = 1 + case % 4
        shape = tuple(1 + int(rng.draw() * 4) for _ in range(rank))
        tensor = DenseTensor(_rand_array(rng, shape, -10.0, 10.0))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "t.npy"
            tensor_io.write_npy(tensor, path)
            back = tensor_io.read_npy(path)
        if back.shape != tensor.shape or not np.array_equal(back.values, tensor.values):
            return f"round-trip mismatch on shape {shape}"
    return None


def check_brute_force() -> str | None:
    rng = Lcg(202)
    for case in range(25):
        dims = (
            1 + int(rng.draw() * 4),
            1 + int(rng.draw() * 6),
            1 + int(rng.draw() * 6),
            1 + int(rng.draw() * 8),
        )
        acts = ActivationVolume(DenseTensor(_rand_array(rng, dims)))
        n_classes = 1 + int(rng.draw() * 5)
        weights = ClassifierWeights(matrix=_rand_array(rng, (n_classes, dims[3])))
        cls = int(rng.draw() * n_classes)
        try:
            selection = engine.select_features(weights, cls, engine.TauPolicy("nonneg"))
        except engine.EmptySelectionError:
            continue
        tube = engine.sum_tube(engine.weight_activations(acts, weights, selection))
        expect = _tube_by_loops(acts.values, weights.matrix[cls], selection.selected)
        scale = max(np.abs(expect).max(), 1e-30)
        err = np.abs(tube.raw - expect).max() / scale
        if err > 1e-9:
            return f"case {case}: relative error {err:.3e} exceeds 1e-9"
    return None


def check_cam_gap() -> str | None:
    for seed in range(5):
        net = refnet.make_seeded(
            1000 + seed, in_channels=2, conv_channels=(5,), num_classes=3
        )
        clip = refnet.fixture_clip(2000 + seed, 4, 6, 6, 2)
        acts, logits = refnet.forward(net, clip)
        err = _cam_gap_error(net, acts, logits)
        if err > 1e-6:
            return f"seed {seed}: relative error {err:.3e} exceeds 1e-6"
    return None


def _cam_gap_error(net: refnet.RefNet, acts: ActivationVolume, logits: np.ndarray) -> float:
    """Worst relative gap between voxel-summed tube and pooled logit."""
    voxels = acts.frames * acts.height * acts.width
    worst = 0.0
    select_all = engine.TauPolicy("absolute", -math.inf)
    for i in range(net.head.num_classes):
        selection = engine.select_features(net.head, i, select_all)
        tube = engine.sum_tube(engine.weight_activations(acts, net.head, selection))
        got = tube.raw.sum()
        bias_i = 0.0 if net.head.bias is None else net.head.bias[i]
        want = voxels * (logits[i] - bias_i)
        scale = max(abs(got), abs(want), 1e-9)
        worst = max(worst, abs(got - want) / scale)
    return worst


def check_constant_preservation() -> str | None:
    vol = np.full((3, 4, 5), 2.75)
    tube = engine.SaliencyTube(class_index=0, raw=vol)
    for method in (resample.METHOD_TRILINEAR, resample.METHOD_CUBIC):
        spec = resample.ResampleSpec(target=(7, 9, 11), method=method)
        out = resample.upsample(tube, spec)
        if np.abs(out.raw - 2.75).max() > 1e-12:
            return f"{method}: constant not preserved"
    return None


def check_exclusion() -> str | None:
    rng = Lcg(303)
    acts_vals = _rand_array(rng, (2, 3, 3, 6))
    weights = ClassifierWeights(
        matrix=np.array([[1.0, -2.0, 0.5, -0.1, 3.0, -4.0]])
    )
    selection = engine.select_features(weights, 0, engine.TauPolicy("nonneg"))
    before = engine.sum_tube(
        engine.weight_activations(
            ActivationVolume(DenseTensor(acts_vals)), weights, selection
        )
    )
    excluded = [j for j in range(6) if j not in selection.selected]
    poked = acts_vals.copy()
    for j in excluded:
        poked[..., j] += 1e6 * (1 + j)
    after = engine.sum_tube(
        engine.weight_activations(
            ActivationVolume(DenseTensor(poked)), weights, selection
        )
    )
    if not np.array_equal(before.raw, after.raw):
        return "perturbing excluded channels changed the tube"
    return None


def check_blob_localization() -> str | None:
    net, clip, support = refnet.make_blob_case()
    acts, _ = refnet.forward(net, clip)
    selection = engine.select_features(net.head, 0, engine.TauPolicy("nonneg"))
    tube = engine.sum_tube(engine.weight_activations(acts, net.head, selection))
    target = (clip.frames, clip.height * 4, clip.width * 4)
    up = resample.upsample(tube, resample.ResampleSpec(target=target))
    argmax = np.unravel_index(np.argmax(up.raw), up.raw.shape)
    bounds = []
    for (axis, key) in ((0, "frames"), (1, "rows"), (2, "cols")):
        lo, hi = support[key]
        scale = (
            (target[axis] - 1) / (tube.raw.shape[axis] - 1)
            if tube.raw.shape[axis] > 1
            else 0.0
        )
        bounds.append((math.floor(lo * scale) - 1, math.ceil(hi * scale) + 1))
    for coord, (lo, hi) in zip(argmax, bounds):
        if not lo <= coord <= hi:
            return f"argmax {argmax} outside dilated support {bounds}"
    marginal = resample.temporal_marginal(up)
    f_lo, f_hi = support["frames"]
    if not f_lo <= int(np.argmax(marginal)) <= f_hi:
        return f"temporal peak at {int(np.argmax(marginal))}, expected {f_lo}..{f_hi}"
    return None


def check_fixture_pipeline(fixture_dir: Path | None = None) -> str | None:
    """Emit (or reuse) the fixture, reload it through the manifest, and
    hold the pooled-logit identity on the reloaded data."""

    def run(dir_path: Path) -> str | None:
        manifest_path = dir_path / "manifest.json"
        if not manifest_path.exists():
            refnet.emit_fixture(dir_path)
        try:
            manifest = tensor_io.load_manifest(manifest_path)
            acts, weights = tensor_io.load_bundle(manifest)
        except Exception as exc:
            return f"fixture failed to load: {exc}"
        net = refnet.make_fixture_net()
        clip = refnet.make_fixture_clip()
        direct, logits = refnet.forward(net, clip)
        if not np.allclose(direct.values, acts.values, rtol=0, atol=1e-12):
            return "reloaded activations disagree with direct forward pass"
        if not np.array_equal(weights.matrix, net.head.matrix):
            return "reloaded weights disagree with generator"
        err = _cam_gap_error(net, acts, logits)
        if err > 1e-6:
            return f"pooled-logit identity off by {err:.3e} on reloaded fixture"
        return None

    if fixture_dir is not None:
        return run(Path(fixture_dir))
    with tempfile.TemporaryDirectory() as tmp:
        return run(Path(tmp))


CHECKS = (
    ("npy-round-trip", check_npy_round_trip),
    ("brute-force", check_brute_force),
    ("cam-gap", check_cam_gap),
    ("constant-preservation", check_constant_preservation),
    ("exclusion", check_exclusion),
    ("blob-localization", check_blob_localization),
)


def run_all(fixture_dir: Path | None = None) -> list[tuple[str, str | None]]:
    """Run every check; returns (name, failure detail or None) pairs."""
    results = [(name, fn()) for name, fn in CHECKS]
    results.append(("fixture-pipeline", check_fixture_pipeline(fixture_dir)))
    return results
