"""Architecture configuration for the transient masked autoencoder."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class MaeConfig:
    """Shapes of the encoder/decoder Transformer over an ny x nx scan grid.

    One token is one scanning point's full n_bins histogram.  Widths must be
    divisible by the head counts, and by 4 for the 2D sin-cos positional
    embeddings.
    """

    n_bins: int = 128
    enc_width: int = 64
    enc_depth: int = 2
    enc_heads: int = 4
    dec_width: int = 32
    dec_depth: int = 1
    dec_heads: int = 4
    ny: int = 16
    nx: int = 16
    mask_ratio: float = 0.95

    def __post_init__(self):
        for name in ("n_bins", "enc_width", "enc_depth", "enc_heads",
                     "dec_width", "dec_depth", "dec_heads", "ny", "nx"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.enc_width % self.enc_heads or self.dec_width % self.dec_heads:
            raise ValueError("widths must be divisible by their head counts")
        if self.enc_width % 4 or self.dec_width % 4:
            raise ValueError("widths must be divisible by 4 (2D sin-cos embeddings)")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must be in [0, 1]")

    @property
    def n_tokens(self) -> int:
        return self.ny * self.nx


def tiny_config(**overrides) -> MaeConfig:
    """Desk-scale defaults: trains in minutes on one CPU core."""
    base = dict(n_bins=128, enc_width=64, enc_depth=2, enc_heads=4,
                dec_width=32, dec_depth=1, dec_heads=4, ny=16, nx=16,
                mask_ratio=0.95)
    base.update(overrides)
    return MaeConfig(**base)


def paper_config(**overrides) -> MaeConfig:
    """Full-scale architecture defaults: 1024/24 encoder, 512/8 decoder,
    16 heads each, mask ratio 0.95, over a 64 x 64 grid.  ~329M parameters;
    far past what desk-scale CPU training can fit."""
    base = dict(n_bins=512, enc_width=1024, enc_depth=24, enc_heads=16,
                dec_width=512, dec_depth=8, dec_heads=16, ny=64, nx=64,
                mask_ratio=0.95)
    base.update(overrides)
    return MaeConfig(**base)


def gradcheck_config(**overrides) -> MaeConfig:
    """Smallest config exercising every layer type; used for f64 gradient checks."""
    base = dict(n_bins=8, enc_width=16, enc_depth=1, enc_heads=2,
                dec_width=8, dec_depth=1, dec_heads=2, ny=4, nx=4,
                mask_ratio=0.5)
    base.update(overrides)
    return MaeConfig(**base)
