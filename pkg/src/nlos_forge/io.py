"""Bit-exact file containers: transients, masks, checkpoints, PGM, CSV.

All formats are little-endian regardless of platform and are documented in
docs/formats.md.  Readers validate magic, version and declared sizes, and
raise typed errors that name the byte offset of the problem; checkpoints
additionally carry a trailing CRC32.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .core import ScanGeometry, TransientVolume
from .masking import SpmMask

TRANSIENT_MAGIC = b"TRNV"
MASK_MAGIC = b"SPMK"
CHECKPOINT_MAGIC = b"MRMT"


class FormatError(ValueError):
    """Malformed container file; offset is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BadMagicError(FormatError):
    pass


class BadVersionError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class TrailingDataError(FormatError):
    pass


class CrcMismatchError(FormatError):
    pass


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            raise TruncatedFileError(
                f"needed {n} bytes, file ends after {len(self.blob)}", self.offset
            )
        out = self.blob[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def expect_magic(self, magic: bytes):
        at = self.offset
        if self.take(len(magic)) != magic:
            raise BadMagicError(f"expected magic {magic!r}", at)

    def expect_version(self, version: int):
        at = self.offset
        (got,) = self.unpack("<I")
        if got != version:
            raise BadVersionError(f"unsupported version {got}, expected {version}", at)

    def expect_end(self):
        if self.offset != len(self.blob):
            raise TrailingDataError(
                f"{len(self.blob) - self.offset} unexpected trailing bytes", self.offset
            )


# ---------------------------------------------------------------------------
# Transient container (TRNV)
# ---------------------------------------------------------------------------

def write_transient(path, volume: TransientVolume) -> None:
    g = volume.geometry
    parts = [
        TRANSIENT_MAGIC,
        struct.pack("<IIII", 1, g.ny, g.nx, g.n_bins),
        struct.pack("<fff", g.bin_width / 1e-12, g.wall_width, g.wall_height),
        np.ascontiguousarray(volume.data, dtype="<f4").tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_transient(path) -> TransientVolume:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    r.expect_magic(TRANSIENT_MAGIC)
    r.expect_version(1)
    ny, nx, n_bins = r.unpack("<III")
    bin_width_ps, wall_width, wall_height = r.unpack("<fff")
    payload = r.take(ny * nx * n_bins * 4)
    r.expect_end()
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(ny, nx, n_bins)
    geometry = ScanGeometry(float(wall_width), float(wall_height), nx, ny,
                            n_bins, float(bin_width_ps) * 1e-12)
    return TransientVolume(geometry, data)


# ---------------------------------------------------------------------------
# Mask container (SPMK)
# ---------------------------------------------------------------------------

def write_mask(path, mask: SpmMask) -> None:
    parts = [
        MASK_MAGIC,
        struct.pack("<III", 1, mask.ny, mask.nx),
        mask.masked.astype(np.uint8).tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_mask(path) -> SpmMask:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    r.expect_magic(MASK_MAGIC)
    r.expect_version(1)
    ny, nx = r.unpack("<II")
    at = r.offset
    payload = np.frombuffer(r.take(ny * nx), dtype=np.uint8)
    r.expect_end()
    if np.any(payload > 1):
        raise FormatError("mask payload bytes must be 0 or 1", at)
    return SpmMask(payload.reshape(ny, nx).astype(bool), pattern="custom")


# ---------------------------------------------------------------------------
# Checkpoint container (MRMT)
# ---------------------------------------------------------------------------

_CONFIG_INT_FIELDS = ("n_bins", "enc_width", "enc_depth", "enc_heads",
                      "dec_width", "dec_depth", "dec_heads", "ny", "nx")


def write_checkpoint(path, config, tensors: dict) -> None:
    """Write config plus a named-tensor list (f32), CRC32-sealed.

    Tensor order in the file follows the dict's insertion order; names must
    be unique.
    """
    if len(set(tensors)) != len(tensors):
        raise ValueError("tensor names must be unique")
    body = [CHECKPOINT_MAGIC, struct.pack("<I", 1)]
    body.append(struct.pack("<9I", *(getattr(config, f) for f in _CONFIG_INT_FIELDS)))
    body.append(struct.pack("<f", config.mask_ratio))
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        body.append(struct.pack("<H", len(encoded)))
        body.append(encoded)
        body.append(struct.pack("<B", arr.ndim))
        body.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        body.append(arr.tobytes())
    blob = b"".join(body)
    with open(path, "wb") as fh:
        fh.write(blob + struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF))


def read_checkpoint(path):
    """Load (MaeConfig, {name: f32 tensor}) from a checkpoint file."""
    from .mae.config import MaeConfig

    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFileError("file too short for CRC", 0)
    body, (crc_stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    crc_actual = zlib.crc32(body) & 0xFFFFFFFF
    if crc_actual != crc_stored:
        raise CrcMismatchError(
            f"CRC mismatch: stored {crc_stored:#010x}, computed {crc_actual:#010x}",
            len(body),
        )
    r = _Reader(body)
    r.expect_magic(CHECKPOINT_MAGIC)
    r.expect_version(1)
    ints = r.unpack("<9I")
    (mask_ratio,) = r.unpack("<f")
    config = MaeConfig(**dict(zip(_CONFIG_INT_FIELDS, ints)), mask_ratio=float(mask_ratio))
    tensors: dict = {}
    while r.offset < len(body):
        (name_len,) = r.unpack("<H")
        at = r.offset
        name = r.take(name_len).decode("utf-8")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}", at)
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I") if rank else ()
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = r.take(count * 4)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    return config, tensors


# ---------------------------------------------------------------------------
# Images and reports
# ---------------------------------------------------------------------------

def export_pgm(path, image: np.ndarray) -> None:
    """Binary PGM (P5, maxval 255): values in [0, 1] quantize to round(v*255)."""
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM export expects a 2D image")
    quantized = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + quantized.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM written by export_pgm; returns floats in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    parts = blob.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise FormatError("not a binary P5 PGM", 0)
    width, height = map(int, parts[1].split())
    maxval = int(parts[2])
    payload = parts[3]
    if len(payload) != width * height:
        raise TruncatedFileError(
            f"PGM payload is {len(payload)} bytes, expected {width * height}",
            len(blob) - len(payload),
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width) / float(maxval)


def export_metrics_csv(path, report) -> None:
    """Wide-form metric row: header ed,cs,ssim,psnr."""
    with open(path, "w", newline="") as fh:
        fh.write("ed,cs,ssim,psnr\n")
        fh.write(f"{report.ed!r},{report.cs!r},{report.ssim!r},{report.psnr!r}\n")


export_csv = export_metrics_csv
