import json

import numpy as np
import pytest

from nlos_forge import io as nio
from nlos_forge.cli import main

SCENE_TOML = """
[geometry]
nx = 8
ny = 8
n_bins = 64
bin_width_ps = 64.0
wall_width = 1.0
wall_height = 1.0

[scene]
primitive = "sphere"
sample_count = 400
seed = 5
z_range = [0.4, 0.4]
scale_range = [0.01, 0.01]
"""

# denser scan grid so backprojection localizes a near-point scene cleanly
POINT_TOML = SCENE_TOML.replace("nx = 8", "nx = 16").replace("ny = 8", "ny = 16")

DATASET_TOML = """
[geometry]
nx = 8
ny = 8
n_bins = 64
bin_width_ps = 64.0
wall_width = 1.0
wall_height = 1.0

[[scenes]]
primitive = "sphere"
count = 3
seed = 10
sample_count = 400
z_range = [0.35, 0.45]
scale_range = [0.08, 0.12]

[[scenes]]
primitive = "box"
count = 3
seed = 20
sample_count = 400
z_range = [0.35, 0.45]
scale_range = [0.08, 0.12]
"""


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.toml"
    path.write_text(SCENE_TOML)
    return path


def render(tmp_path, scene_file, name="a.trnv", extra=()):
    out = tmp_path / name
    code = main(["render", "--scene", str(scene_file), "-o", str(out), *extra])
    assert code == 0
    return out


class TestExitCodes:
    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 2

    def test_missing_flag_is_usage_error(self):
        assert main(["render"]) == 2

    def test_missing_file_is_io_error(self, tmp_path):
        code = main(["noise", "--in", str(tmp_path / "nope.trnv"),
                     "-o", str(tmp_path / "out.trnv")])
        assert code == 3

    def test_corrupt_container_is_io_error(self, tmp_path):
        bad = tmp_path / "bad.trnv"
        bad.write_bytes(b"NOPE" + bytes(64))
        assert main(["noise", "--in", str(bad), "-o", str(tmp_path / "o.trnv")]) == 3

    def test_dim_mismatch_is_validation_error(self, tmp_path, scene_file):
        vol = render(tmp_path, scene_file)
        mask = tmp_path / "m.spmk"
        assert main(["mask", "make", "--ny", "4", "--nx", "4",
                     "--ratio", "0.5", "--seed", "1", "-o", str(mask)]) == 0
        code = main(["mask", "apply", "--in", str(vol), "--mask", str(mask),
                     "-o", str(tmp_path / "x.trnv")])
        assert code == 4

    def test_mask_make_needs_exactly_one_mode(self, tmp_path):
        out = str(tmp_path / "m.spmk")
        assert main(["mask", "make", "--ny", "4", "--nx", "4", "-o", out]) == 2
        assert main(["mask", "make", "--ny", "4", "--nx", "4", "--ratio", "0.5",
                     "--stride", "2", "-o", out]) == 2


class TestRenderAndNoise:
    def test_render_deterministic(self, tmp_path, scene_file):
        a = render(tmp_path, scene_file, "a.trnv")
        b = render(tmp_path, scene_file, "b.trnv")
        assert a.read_bytes() == b.read_bytes()

    def test_noise_deterministic_and_seeded(self, tmp_path, scene_file):
        vol = render(tmp_path, scene_file)
        outs = []
        for name, seed in (("n1.trnv", "7"), ("n2.trnv", "7"), ("n3.trnv", "8")):
            out = tmp_path / name
            assert main(["noise", "--in", str(vol), "--bias", "2.0",
                         "--seed", seed, "-o", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert outs[0] != outs[2]

    def test_env_var_default_seed(self, tmp_path, scene_file, monkeypatch):
        vol = render(tmp_path, scene_file)
        monkeypatch.setenv("NLOS_FORGE_SEED", "7")
        out_env = tmp_path / "env.trnv"
        assert main(["noise", "--in", str(vol), "--bias", "2.0", "-o", str(out_env)]) == 0
        out_explicit = tmp_path / "exp.trnv"
        assert main(["noise", "--in", str(vol), "--bias", "2.0", "--seed", "7",
                     "-o", str(out_explicit)]) == 0
        assert out_env.read_bytes() == out_explicit.read_bytes()


class TestMaskPipeline:
    def test_zero_fill_loses_information(self, tmp_path, scene_file):
        vol = render(tmp_path, scene_file, extra=["--normalize"])
        mask = tmp_path / "m.spmk"
        assert main(["mask", "make", "--ny", "8", "--nx", "8",
                     "--ratio", "0.5", "--seed", "3", "-o", str(mask)]) == 0
        masked = tmp_path / "masked.trnv"
        assert main(["mask", "apply", "--in", str(vol), "--mask", str(mask),
                     "--fill", "zero", "-o", str(masked)]) == 0
        csv_path = tmp_path / "m.csv"
        assert main(["eval", "--ref", str(vol), "--cand", str(masked),
                     "-o", str(csv_path)]) == 0
        header, row = csv_path.read_text().strip().split("\n")
        ed = float(row.split(",")[0])
        assert ed > 0.0

    def test_stride_mask(self, tmp_path):
        mask_path = tmp_path / "m.spmk"
        assert main(["mask", "make", "--ny", "8", "--nx", "8",
                     "--stride", "4", "-o", str(mask_path)]) == 0
        mask = nio.read_mask(mask_path)
        assert mask.unmasked_count == 4

    def test_nearest_fill_runs(self, tmp_path, scene_file):
        vol = render(tmp_path, scene_file)
        mask = tmp_path / "m.spmk"
        main(["mask", "make", "--ny", "8", "--nx", "8", "--ratio", "0.9",
              "--seed", "3", "-o", str(mask)])
        out = tmp_path / "filled.trnv"
        assert main(["mask", "apply", "--in", str(vol), "--mask", str(mask),
                     "--fill", "nearest", "-o", str(out)]) == 0


class TestFullPipeline:
    def test_dataset_train_complete_reconstruct(self, tmp_path):
        specs = tmp_path / "specs.toml"
        specs.write_text(DATASET_TOML)
        data_dir = tmp_path / "data"
        assert main(["dataset", "gen", "--specs", str(specs), "--out", str(data_dir)]) == 0
        manifest = data_dir / "manifest.csv"
        assert manifest.exists()
        assert len(list(data_dir.glob("*.trnv"))) == 6

        ckpt = tmp_path / "model.mrmt"
        log = tmp_path / "loss.csv"
        assert main(["train", "--manifest", str(manifest), "--config", "tiny",
                     "--epochs", "3", "--batch", "2", "--seed", "1",
                     "--mask-ratio", "0.5", "--log", str(log), "-o", str(ckpt)]) == 0
        assert ckpt.exists() and len(log.read_text().strip().splitlines()) == 4

        mask = tmp_path / "m.spmk"
        main(["mask", "make", "--ny", "8", "--nx", "8", "--ratio", "0.5",
              "--seed", "2", "-o", str(mask)])
        sample = data_dir / "scene_0000.trnv"
        recovered = tmp_path / "rec.trnv"
        assert main(["complete", "--in", str(sample), "--mask", str(mask),
                     "--ckpt", str(ckpt), "-o", str(recovered)]) == 0
        original = nio.read_transient(sample)
        completed = nio.read_transient(recovered)
        keep = ~nio.read_mask(mask).masked
        assert np.array_equal(completed.data[keep], original.data[keep])

    def test_single_point_bp_end_to_end(self, tmp_path):
        point_scene = tmp_path / "point.toml"
        point_scene.write_text(POINT_TOML)
        vol = render(tmp_path, point_scene)
        out_dir = tmp_path / "vol"
        pgm = tmp_path / "proj.pgm"
        depth = tmp_path / "depth.pgm"
        assert main(["reconstruct", "--in", str(vol), "--method", "bp",
                     "--out", str(out_dir), "--export-pgm", str(pgm),
                     "--export-depth", str(depth)]) == 0
        data = np.load(out_dir / "volume.npy")
        meta = json.loads((out_dir / "meta.json").read_text())
        am = np.unravel_index(data.argmax(), data.shape)
        center = (np.asarray(meta["origin"])
                  + (np.asarray(am) + 0.5) * np.asarray(meta["voxel_size"]))
        # scene truth: a 1 cm sphere at (0, 0, 0.4); the sphere is not
        # aligned to any voxel center, so allow two voxels of slack
        assert np.all(np.abs(center - np.array([0.4, 0.0, 0.0]))
                      <= 2 * np.asarray(meta["voxel_size"]))
        assert pgm.exists() and depth.exists()
        image = nio.read_pgm(pgm)
        assert image.shape == (16, 16)

    def test_reconstruct_requires_some_output(self, tmp_path, scene_file):
        vol = render(tmp_path, scene_file)
        assert main(["reconstruct", "--in", str(vol), "--method", "bp"]) == 2

    def test_eval_image_mode(self, tmp_path):
        a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
        nio.export_pgm(a, np.full((6, 6), 1.0))
        nio.export_pgm(b, np.full((6, 6), 0.9))
        csv_path = tmp_path / "img.csv"
        assert main(["eval", "image", "--ref", str(a), "--cand", str(b),
                     "-o", str(csv_path)]) == 0
        row = csv_path.read_text().strip().split("\n")[1]
        psnr = float(row.split(",")[3])
        # 0.9 quantizes to 230/255; PSNR is finite and near 20 dB
        assert 19.0 < psnr < 21.0

    def test_classify_train_and_predict(self, tmp_path):
        specs = tmp_path / "specs.toml"
        specs.write_text(DATASET_TOML)
        data_dir = tmp_path / "data"
        main(["dataset", "gen", "--specs", str(specs), "--out", str(data_dir)])
        ckpt = tmp_path / "pre.mrmt"
        main(["train", "--manifest", str(data_dir / "manifest.csv"), "--config",
              "tiny", "--epochs", "2", "--batch", "2", "--mask-ratio", "0.5",
              "-o", str(ckpt)])
        head = tmp_path / "head.mrmt"
        assert main(["classify", "train", "--manifest", str(data_dir / "manifest.csv"),
                     "--ckpt", str(ckpt), "--epochs", "10", "--seed", "4",
                     "-o", str(head)]) == 0
        assert head.exists() and (tmp_path / "head.mrmt.labels.txt").exists()
        mask = tmp_path / "m.spmk"
        main(["mask", "make", "--ny", "8", "--nx", "8", "--ratio", "0.5",
              "--seed", "5", "-o", str(mask)])
        code = main(["classify", "predict", "--in", str(data_dir / "scene_0000.trnv"),
                     "--mask", str(mask), "--ckpt", str(head)])
        assert code == 0
