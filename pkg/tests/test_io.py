import struct

import numpy as np
import pytest

from nlos_forge import ScanGeometry, SpmMask, TransientVolume, make_random_mask
from nlos_forge import io as nio
from nlos_forge.mae import MaeConfig, MaeModel, gradcheck_config
from nlos_forge.metrics import MetricReport


def random_volume(ny=4, nx=4, n_bins=8, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    g = ScanGeometry(2.0, 2.0, nx, ny, n_bins, bin_width=32e-12)
    # f32-exact values so the container round-trip is lossless end to end
    data = rng.uniform(size=(ny, nx, n_bins)).astype(np.float32).astype(np.float64)
    return TransientVolume(g, data)


class TestTransientContainer:
    def test_round_trip_bit_identical(self, tmp_path):
        vol = random_volume()
        p1, p2 = tmp_path / "a.trnv", tmp_path / "b.trnv"
        nio.write_transient(p1, vol)
        nio.write_transient(p2, nio.read_transient(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_payload_and_geometry_survive(self, tmp_path):
        vol = random_volume(3, 5, 16, seed=2)
        path = tmp_path / "v.trnv"
        nio.write_transient(path, vol)
        back = nio.read_transient(path)
        assert np.array_equal(back.data, vol.data)
        g = back.geometry
        assert (g.ny, g.nx, g.n_bins) == (3, 5, 16)
        assert g.bin_width == pytest.approx(32e-12, rel=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.trnv"
        path.write_bytes(b"XXXX" + b"\0" * 32)
        with pytest.raises(nio.BadMagicError):
            nio.read_transient(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.trnv"
        path.write_bytes(b"TRNV" + struct.pack("<I", 9) + b"\0" * 32)
        with pytest.raises(nio.BadVersionError):
            nio.read_transient(path)

    def test_truncation(self, tmp_path):
        vol = random_volume()
        path = tmp_path / "t.trnv"
        nio.write_transient(path, vol)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(nio.TruncatedFileError) as err:
            nio.read_transient(path)
        assert "offset" in str(err.value)

    def test_trailing_bytes_rejected(self, tmp_path):
        vol = random_volume()
        path = tmp_path / "t.trnv"
        nio.write_transient(path, vol)
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(nio.TrailingDataError):
            nio.read_transient(path)


class TestMaskContainer:
    def test_round_trip(self, tmp_path):
        mask = make_random_mask(6, 9, 0.7, seed=5)
        p1, p2 = tmp_path / "a.spmk", tmp_path / "b.spmk"
        nio.write_mask(p1, mask)
        back = nio.read_mask(p1)
        nio.write_mask(p2, back)
        assert p1.read_bytes() == p2.read_bytes()
        assert np.array_equal(back.masked, mask.masked)

    def test_bad_payload_byte(self, tmp_path):
        path = tmp_path / "m.spmk"
        path.write_bytes(b"SPMK" + struct.pack("<III", 1, 1, 2) + bytes([0, 7]))
        with pytest.raises(nio.FormatError):
            nio.read_mask(path)

    def test_truncated_mask(self, tmp_path):
        path = tmp_path / "m.spmk"
        path.write_bytes(b"SPMK" + struct.pack("<III", 1, 4, 4) + bytes(3))
        with pytest.raises(nio.TruncatedFileError):
            nio.read_mask(path)


class TestCheckpointContainer:
    def test_round_trip_bit_identical(self, tmp_path):
        config = gradcheck_config()
        model = MaeModel(config, seed=1)
        p1, p2 = tmp_path / "a.mrmt", tmp_path / "b.mrmt"
        nio.write_checkpoint(p1, config, model.state_tensors())
        cfg_back, tensors = nio.read_checkpoint(p1)
        nio.write_checkpoint(p2, cfg_back, tensors)
        assert p1.read_bytes() == p2.read_bytes()
        assert cfg_back == config

    def test_tensors_survive(self, tmp_path):
        config = gradcheck_config()
        model = MaeModel(config, seed=2)
        path = tmp_path / "c.mrmt"
        nio.write_checkpoint(path, config, model.state_tensors())
        _, tensors = nio.read_checkpoint(path)
        for name, tensor in model.state_tensors().items():
            assert np.array_equal(tensors[name], tensor.astype(np.float32))

    def test_crc_detects_corruption(self, tmp_path):
        config = gradcheck_config()
        path = tmp_path / "c.mrmt"
        nio.write_checkpoint(path, config, MaeModel(config).state_tensors())
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(nio.CrcMismatchError):
            nio.read_checkpoint(path)

    def test_duplicate_names_rejected_on_read(self, tmp_path):
        # handcraft a tiny checkpoint with a repeated tensor name
        config = MaeConfig(n_bins=8, enc_width=16, enc_depth=1, enc_heads=2,
                           dec_width=8, dec_depth=1, dec_heads=2, ny=4, nx=4)
        body = b"MRMT" + struct.pack("<I", 1)
        body += struct.pack("<9I", 8, 16, 1, 2, 8, 1, 2, 4, 4) + struct.pack("<f", 0.95)
        entry = struct.pack("<H", 1) + b"x" + struct.pack("<B", 1) + struct.pack("<I", 1)
        entry += struct.pack("<f", 0.5)
        body += entry + entry
        import zlib
        path = tmp_path / "dup.mrmt"
        path.write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
        with pytest.raises(nio.FormatError, match="duplicate"):
            nio.read_checkpoint(path)

    def test_model_from_checkpoint_matches(self, tmp_path):
        config = gradcheck_config()
        model = MaeModel(config, seed=3)
        path = tmp_path / "m.mrmt"
        nio.write_checkpoint(path, config, model.state_tensors())
        cfg, tensors = nio.read_checkpoint(path)
        restored = MaeModel.from_checkpoint(cfg, tensors)
        for name in model.params:
            assert np.array_equal(restored.params[name],
                                  model.params[name].astype(np.float32))


class TestPgmAndCsv:
    def test_pgm_quantization(self, tmp_path):
        path = tmp_path / "c.pgm"
        nio.export_pgm(path, np.full((5, 7), 0.5))
        blob = path.read_bytes()
        assert blob.startswith(b"P5\n7 5\n255\n")
        assert set(blob[len(b"P5\n7 5\n255\n"):]) == {128}  # round(0.5 * 255)

    def test_pgm_round_trip_grid(self, tmp_path):
        img = np.linspace(0, 1, 16).reshape(4, 4)
        path = tmp_path / "g.pgm"
        nio.export_pgm(path, img)
        back = nio.read_pgm(path)
        assert back.shape == (4, 4)
        assert np.allclose(back, img, atol=1.0 / 255.0)

    def test_metrics_csv(self, tmp_path):
        report = MetricReport(ed=0.1, cs=0.9, ssim=0.8, psnr=float("inf"))
        path = tmp_path / "m.csv"
        nio.export_metrics_csv(path, report)
        header, row = path.read_text().strip().split("\n")
        assert header == "ed,cs,ssim,psnr"
        values = row.split(",")
        assert float(values[0]) == 0.1 and float(values[3]) == float("inf")
