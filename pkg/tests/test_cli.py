import json
import subprocess
import sys

import numpy as np
import pytest

from tubecam import refnet, tensor_io
from tubecam.cli import main
from tubecam.tensor_io import DenseTensor


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fixture")
    refnet.emit_fixture(d)
    return d


def small_manifest(tmp_path, weights_rows, acts_shape=(2, 3, 4, None)):
    """Tiny FHWD fixture with explicit weight rows; D' from the rows."""
    rows = np.asarray(weights_rows, dtype=float)
    shape = tuple(s if s is not None else rows.shape[1] for s in acts_shape)
    rng = np.random.default_rng(50)
    tensor_io.write_npy(DenseTensor(rng.random(shape)), tmp_path / "acts.npy")
    tensor_io.write_npy(DenseTensor(rows), tmp_path / "w.npy")
    doc = {
        "version": "1",
        "activations_path": "acts.npy",
        "weights_path": "w.npy",
        "axis_order": "FHWD",
        "class_labels": [f"c{i}" for i in range(rows.shape[0])],
    }
    tensor_io.save_manifest(doc, tmp_path / "manifest.json")
    return tmp_path / "manifest.json"


class TestInfo:
    def test_summary_lists_dims_and_classes(self, fixture_dir, capsys):
        assert main(["info", "--manifest", str(fixture_dir / "manifest.json")]) == 0
        out = capsys.readouterr().out
        f, h, w = refnet.FIXTURE_CLIP_DIMS
        assert f"F'={f}" in out and f"H'={h}" in out and f"W'={w}" in out
        assert f"D'={refnet.FIXTURE_CONV_CHANNELS[-1]}" in out
        assert f"N={refnet.FIXTURE_NUM_CLASSES}" in out
        assert "DFHW" in out

    def test_missing_manifest_exits_2(self, tmp_path):
        assert main(["info", "--manifest", str(tmp_path / "nope.json")]) == 2


class TestCompute:
    def test_compute_writes_tube_files(self, fixture_dir, tmp_path):
        out = tmp_path / "tube.npy"
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "0",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert out.exists()
        assert (tmp_path / "tube.raw.npy").exists()
        sidecar = json.loads((tmp_path / "tube.json").read_text())
        assert sidecar["class_index"] == 0
        assert sidecar["resolution_tag"] == "video"
        norm = tensor_io.read_npy(out).values
        f, h, w = refnet.FIXTURE_CLIP_DIMS
        assert norm.shape == (f, h, w)
        assert norm.min() == 0.0 and norm.max() == 1.0

    def test_compute_tube_satisfies_pooled_identity(self, fixture_dir, tmp_path):
        # fixture video_dims equal activation dims, so the raw tube is at
        # activation resolution: its voxel sum must match the pooled sum
        # of the selected channels exactly
        out = tmp_path / "tube.npy"
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "0",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        manifest = tensor_io.load_manifest(fixture_dir / "manifest.json")
        acts, weights = tensor_io.load_bundle(manifest)
        sidecar = json.loads((tmp_path / "tube.json").read_text())
        gap = acts.values.mean(axis=(0, 1, 2))
        pooled = sum(weights.matrix[0, j] * gap[j] for j in sidecar["selected_features"])
        voxels = acts.frames * acts.height * acts.width
        raw = tensor_io.read_npy(tmp_path / "tube.raw.npy").values
        assert raw.sum() == pytest.approx(voxels * pooled, rel=1e-6)

    def test_class_label_lookup(self, fixture_dir, tmp_path):
        out = tmp_path / "tube.npy"
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-label",
                "class_1",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert json.loads((tmp_path / "tube.json").read_text())["class_index"] == 1

    def test_class_index_out_of_range_exits_2(self, fixture_dir, tmp_path):
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "99",
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 2

    def test_bad_tau_policy_exits_1(self, fixture_dir, tmp_path, capsys):
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "0",
                "--tau-policy",
                "topk:0",
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 1

    def test_empty_selection_exits_3(self, tmp_path):
        manifest = small_manifest(tmp_path, [[-1.0, -2.0, -3.0]])
        code = main(
            [
                "compute",
                "--manifest",
                str(manifest),
                "--class-index",
                "0",
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 3
        assert not (tmp_path / "t.npy").exists()

    def test_explicit_upsample_flag(self, tmp_path):
        manifest = small_manifest(tmp_path, [[1.0, 0.5, 0.25]])
        out = tmp_path / "t.npy"
        code = main(
            [
                "compute",
                "--manifest",
                str(manifest),
                "--class-index",
                "0",
                "--upsample",
                "4,6,8",
                "--method",
                "trilinear",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        assert tensor_io.read_npy(out).values.shape == (4, 6, 8)


class TestCam2d:
    def test_sliced_file_matches_compute(self, tmp_path):
        manifest = small_manifest(tmp_path, [[1.0, 0.5, 0.25]])
        a = tmp_path / "a.npy"
        b = tmp_path / "b.npy"
        base = ["--manifest", str(manifest), "--class-index", "0"]
        assert main(["compute", *base, "--out", str(a)]) == 0
        assert main(["cam2d", *base, "--out", str(b)]) == 0
        assert np.array_equal(
            tensor_io.read_npy(a).values, tensor_io.read_npy(b).values
        )

    def test_replicated_frames_constant_marginal(self, tmp_path):
        rng = np.random.default_rng(51)
        frame = rng.random((1, 3, 4, 2))
        acts = np.concatenate([frame] * 5, axis=0)
        tensor_io.write_npy(DenseTensor(acts), tmp_path / "acts.npy")
        tensor_io.write_npy(DenseTensor(np.array([[1.0, 2.0]])), tmp_path / "w.npy")
        tensor_io.save_manifest(
            {
                "version": "1",
                "activations_path": "acts.npy",
                "weights_path": "w.npy",
                "axis_order": "FHWD",
                "class_labels": ["only"],
            },
            tmp_path / "manifest.json",
        )
        out = tmp_path / "t.npy"
        code = main(
            [
                "cam2d",
                "--manifest",
                str(tmp_path / "manifest.json"),
                "--class-index",
                "0",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        raw = tensor_io.read_npy(tmp_path / "t.raw.npy").values
        marginal = raw.mean(axis=(1, 2))
        assert np.abs(marginal - marginal[0]).max() < 1e-12

    def test_per_frame_directory_mixed_shapes_exits_2(self, tmp_path):
        frames_dir = tmp_path / "acts"
        frames_dir.mkdir()
        tensor_io.write_npy(
            DenseTensor(np.zeros((1, 2, 2, 3))), frames_dir / "f0.npy"
        )
        tensor_io.write_npy(
            DenseTensor(np.zeros((1, 3, 2, 3))), frames_dir / "f1.npy"
        )
        tensor_io.write_npy(DenseTensor(np.ones((1, 3))), tmp_path / "w.npy")
        tensor_io.save_manifest(
            {
                "version": "1",
                "activations_path": "acts",
                "weights_path": "w.npy",
                "axis_order": "FHWD",
                "class_labels": ["only"],
            },
            tmp_path / "manifest.json",
        )
        code = main(
            [
                "cam2d",
                "--manifest",
                str(tmp_path / "manifest.json"),
                "--class-index",
                "0",
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 2


class TestRender:
    @pytest.fixture()
    def tube_and_frames(self, fixture_dir, tmp_path):
        tube = tmp_path / "tube.npy"
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "0",
                "--out",
                str(tube),
            ]
        )
        assert code == 0
        return tube, fixture_dir / "frames"

    def test_sixteen_pngs_and_gif(self, tube_and_frames, tmp_path):
        tube, frames = tube_and_frames
        out_dir = tmp_path / "render"
        code = main(
            [
                "render",
                "--tube",
                str(tube),
                "--frames",
                str(frames),
                "--mode",
                "heat",
                "--gif",
                str(out_dir / "anim.gif"),
                "--out",
                str(out_dir),
            ]
        )
        assert code == 0
        assert len(list(out_dir.glob("frame_*.png"))) == 16
        assert (out_dir / "anim.gif").exists()

    def test_rerun_identical_hashes(self, tube_and_frames, tmp_path):
        import hashlib

        tube, frames = tube_and_frames
        digests = []
        for name in ("r1", "r2"):
            out_dir = tmp_path / name
            code = main(
                [
                    "render",
                    "--tube",
                    str(tube),
                    "--frames",
                    str(frames),
                    "--mode",
                    "focus",
                    "--out",
                    str(out_dir),
                ]
            )
            assert code == 0
            digests.append(
                [
                    hashlib.sha256(p.read_bytes()).hexdigest()
                    for p in sorted(out_dir.glob("*.png"))
                ]
            )
        assert digests[0] == digests[1]

    def test_alpha_out_of_range_exits_1(self, tube_and_frames, tmp_path):
        tube, frames = tube_and_frames
        code = main(
            [
                "render",
                "--tube",
                str(tube),
                "--frames",
                str(frames),
                "--alpha",
                "1.5",
                "--out",
                str(tmp_path / "x"),
            ]
        )
        assert code == 1

    def test_frame_count_mismatch_exits_2(self, tube_and_frames, tmp_path):
        tube, frames = tube_and_frames
        short_dir = tmp_path / "short"
        short_dir.mkdir()
        for p in sorted(frames.glob("*.png"))[:4]:
            (short_dir / p.name).write_bytes(p.read_bytes())
        out_dir = tmp_path / "x"
        code = main(
            [
                "render",
                "--tube",
                str(tube),
                "--frames",
                str(short_dir),
                "--out",
                str(out_dir),
            ]
        )
        assert code == 2
        assert not list(out_dir.glob("*.png")) if out_dir.exists() else True


class TestUsageErrors:
    def test_unknown_flag_exits_1(self):
        assert main(["info", "--manifest", "x", "--bogus"]) == 1

    def test_missing_class_flag_exits_1(self, fixture_dir, tmp_path):
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 1

    def test_both_class_flags_exit_1(self, fixture_dir, tmp_path):
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "0",
                "--class-label",
                "class_0",
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 1

    def test_bad_upsample_dims_exit_1(self, fixture_dir, tmp_path):
        code = main(
            [
                "compute",
                "--manifest",
                str(fixture_dir / "manifest.json"),
                "--class-index",
                "0",
                "--upsample",
                "4,6",
                "--out",
                str(tmp_path / "t.npy"),
            ]
        )
        assert code == 1


class TestSelftest:
    def test_clean_build_passes(self, tmp_path, capsys):
        code = main(["selftest", "--emit", str(tmp_path / "fx")])
        out = capsys.readouterr().out
        assert code == 0
        for name in ("brute-force", "cam-gap", "constant-preservation"):
            assert f"ok   {name}" in out
        assert (tmp_path / "fx" / "tube.npy").exists()

    def test_corrupted_fixture_exits_4(self, tmp_path, capsys):
        fx = tmp_path / "fx"
        assert main(["selftest", "--emit", str(fx)]) == 0
        capsys.readouterr()
        acts = tensor_io.read_npy(fx / "activations.npy")
        tensor_io.write_npy(
            DenseTensor(acts.values + 1.0), fx / "activations.npy"
        )
        code = main(["selftest", "--emit", str(fx)])
        out = capsys.readouterr().out
        assert code == 4
        assert "FAIL fixture-pipeline" in out


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "tubecam", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "compute" in proc.stdout
