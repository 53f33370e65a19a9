"""Masked autoencoder over transient grids.

One token per scanning point: the full histogram is linearly embedded, the
encoder runs over the unmasked tokens only (plus fixed 2D sin-cos positional
embeddings), a learned mask token fills every masked grid slot at the
decoder input, and the decoder head emits one histogram per slot.  The loss
is the mean squared error over masked elements only, and the backward pass
computes exact gradients for every parameter.
"""

from __future__ import annotations

import numpy as np

from ..core import TransientVolume
from ..masking import SpmMask, combine_predictions
from .config import MaeConfig
from . import layers


class GradientError(RuntimeError):
    """A backward pass produced a non-finite gradient; names the tensor."""


def parameter_shapes(config: MaeConfig) -> dict:
    """Name -> shape of every learnable tensor, in checkpoint order."""
    shapes = {
        "embed.w": (config.n_bins, config.enc_width),
        "embed.b": (config.enc_width,),
    }

    def block(prefix, width):
        shapes.update({
            f"{prefix}.ln1.g": (width,), f"{prefix}.ln1.b": (width,),
            f"{prefix}.attn.wq": (width, width), f"{prefix}.attn.bq": (width,),
            f"{prefix}.attn.wk": (width, width), f"{prefix}.attn.bk": (width,),
            f"{prefix}.attn.wv": (width, width), f"{prefix}.attn.bv": (width,),
            f"{prefix}.attn.wo": (width, width), f"{prefix}.attn.bo": (width,),
            f"{prefix}.ln2.g": (width,), f"{prefix}.ln2.b": (width,),
            f"{prefix}.mlp.w1": (width, 4 * width), f"{prefix}.mlp.b1": (4 * width,),
            f"{prefix}.mlp.w2": (4 * width, width), f"{prefix}.mlp.b2": (width,),
        })

    for i in range(config.enc_depth):
        block(f"enc.{i}", config.enc_width)
    shapes["enc_norm.g"] = (config.enc_width,)
    shapes["enc_norm.b"] = (config.enc_width,)
    shapes["proj.w"] = (config.enc_width, config.dec_width)
    shapes["proj.b"] = (config.dec_width,)
    shapes["mask_token"] = (config.dec_width,)
    for i in range(config.dec_depth):
        block(f"dec.{i}", config.dec_width)
    shapes["head.w"] = (config.dec_width, config.n_bins)
    shapes["head.b"] = (config.n_bins,)
    return shapes


def parameter_count(config: MaeConfig) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(config).values())


class MaeModel:
    """Parameters plus architecture; f32 for training, f64 for gradient checks."""

    def __init__(self, config: MaeConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self.params: dict[str, np.ndarray] = {}
        for name, shape in parameter_shapes(config).items():
            leaf = name.rsplit(".", 1)[-1]
            if leaf == "g":
                tensor = np.ones(shape)
            elif leaf.startswith("b"):
                tensor = np.zeros(shape)
            else:
                tensor = rng.normal(0.0, 0.02, size=shape)
            self.params[name] = tensor.astype(self.dtype)
        self.enc_pos = layers.sincos_position_embedding(
            config.ny, config.nx, config.enc_width).astype(self.dtype)
        self.dec_pos = layers.sincos_position_embedding(
            config.ny, config.nx, config.dec_width).astype(self.dtype)

    # -- persistence ---------------------------------------------------------

    def state_tensors(self) -> dict:
        return dict(self.params)

    @classmethod
    def from_checkpoint(cls, config: MaeConfig, tensors: dict, dtype=np.float32) -> "MaeModel":
        model = cls(config, seed=0, dtype=dtype)
        expected = parameter_shapes(config)
        for name, shape in expected.items():
            if name not in tensors:
                raise ValueError(f"checkpoint is missing tensor {name!r}")
            if tuple(tensors[name].shape) != tuple(shape):
                raise ValueError(f"tensor {name!r} has shape {tensors[name].shape}, expected {shape}")
            model.params[name] = tensors[name].astype(model.dtype)
        head_names = [n for n in tensors if n.startswith("cls_head.")]
        if head_names:
            for name in head_names:
                model.params[name] = tensors[name].astype(model.dtype)
        return model

    # -- forward / loss / backward -------------------------------------------

    def _check_inputs(self, volume: TransientVolume, mask: SpmMask):
        c = self.config
        if volume.data.shape != (c.ny, c.nx, c.n_bins):
            raise ValueError(f"volume shape {volume.data.shape} does not match config "
                             f"({c.ny}, {c.nx}, {c.n_bins})")
        if (mask.ny, mask.nx) != (c.ny, c.nx):
            raise ValueError(f"mask grid {mask.ny}x{mask.nx} does not match config grid "
                             f"{c.ny}x{c.nx}")

    def forward_raw(self, data2d: np.ndarray, masked_flat: np.ndarray, want_cache: bool = False):
        """Run the network on (N, T) histogram rows with a flat boolean mask.

        Returns (pred (N, T), latents (U, enc_width), cache or None).  The
        encoder sequence length is exactly the unmasked count U.
        """
        c = self.config
        p = self.params
        unmasked_idx = np.flatnonzero(~masked_flat)
        masked_idx = np.flatnonzero(masked_flat)

        tokens = data2d[unmasked_idx].astype(self.dtype) @ p["embed.w"] + p["embed.b"]
        tokens = tokens + self.enc_pos[unmasked_idx]
        enc_caches = []
        for i in range(c.enc_depth):
            tokens, cache = layers.block_fwd(tokens, p, f"enc.{i}", c.enc_heads)
            enc_caches.append(cache)
        latents, enc_norm_cache = layers.layernorm_fwd(tokens, p["enc_norm.g"], p["enc_norm.b"])

        projected, proj_cache = layers.linear_fwd(latents, p["proj.w"], p["proj.b"])
        dec_in = np.empty((c.n_tokens, c.dec_width), dtype=self.dtype)
        dec_in[unmasked_idx] = projected
        dec_in[masked_idx] = p["mask_token"]
        tokens = dec_in + self.dec_pos
        dec_caches = []
        for i in range(c.dec_depth):
            tokens, cache = layers.block_fwd(tokens, p, f"dec.{i}", c.dec_heads)
            dec_caches.append(cache)
        pred, head_cache = layers.linear_fwd(tokens, p["head.w"], p["head.b"])

        cache = None
        if want_cache:
            cache = (data2d, unmasked_idx, masked_idx, enc_caches, enc_norm_cache,
                     proj_cache, dec_caches, head_cache)
        return pred, latents, cache

    def forward(self, volume: TransientVolume, mask: SpmMask):
        """Complete the volume: predictions at masked points, measured data kept.

        Returns (completed TransientVolume, encoder latents (U, enc_width)).
        """
        self._check_inputs(volume, mask)
        data2d = volume.data.reshape(self.config.n_tokens, self.config.n_bins)
        pred, latents, _ = self.forward_raw(data2d, mask.masked.reshape(-1))
        predicted = TransientVolume(
            volume.geometry,
            pred.astype(np.float64).reshape(volume.data.shape),
        )
        return combine_predictions(volume, predicted, mask), latents

    def masked_loss(self, target2d: np.ndarray, pred: np.ndarray, masked_flat: np.ndarray) -> float:
        """Mean squared error over elements of masked scanning points only."""
        masked_idx = np.flatnonzero(masked_flat)
        if len(masked_idx) == 0:
            raise ValueError("masked loss is undefined for a mask with no masked points")
        diff = pred[masked_idx] - target2d[masked_idx]
        return float(np.mean(diff * diff))

    def backward(self, volume: TransientVolume, mask: SpmMask):
        """Loss and exact gradients of the masked loss for every parameter."""
        self._check_inputs(volume, mask)
        c = self.config
        p = self.params
        data2d = volume.data.reshape(c.n_tokens, c.n_bins).astype(self.dtype)
        masked_flat = mask.masked.reshape(-1)
        pred, _, cache = self.forward_raw(data2d, masked_flat, want_cache=True)
        (_, unmasked_idx, masked_idx, enc_caches, enc_norm_cache,
         proj_cache, dec_caches, head_cache) = cache

        loss = self.masked_loss(data2d, pred, masked_flat)
        grads = {name: np.zeros_like(tensor) for name, tensor in p.items()
                 if not name.startswith("cls_head.")}

        dpred = np.zeros_like(pred)
        n_masked_elements = len(masked_idx) * c.n_bins
        dpred[masked_idx] = 2.0 * (pred[masked_idx] - data2d[masked_idx]) / n_masked_elements

        dtokens = layers.linear_bwd(dpred, head_cache, grads, "head.w", "head.b")
        for i in reversed(range(c.dec_depth)):
            dtokens = layers.block_bwd(dtokens, dec_caches[i], p, grads,
                                       f"dec.{i}", c.dec_heads)
        grads["mask_token"] += dtokens[masked_idx].sum(axis=0)
        dlatents = layers.linear_bwd(dtokens[unmasked_idx], proj_cache, grads,
                                     "proj.w", "proj.b")
        dtokens = layers.layernorm_bwd(dlatents, enc_norm_cache, grads, "enc_norm")
        for i in reversed(range(c.enc_depth)):
            dtokens = layers.block_bwd(dtokens, enc_caches[i], p, grads,
                                       f"enc.{i}", c.enc_heads)
        grads["embed.w"] += data2d[unmasked_idx].T @ dtokens
        grads["embed.b"] += dtokens.sum(axis=0)

        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise GradientError(f"non-finite gradient in tensor {name!r}")
        return loss, grads

    # -- classification head ---------------------------------------------------

    def add_classification_head(self, n_classes: int, seed: int = 0):
        if n_classes < 2:
            raise ValueError("classification needs at least 2 classes")
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        self.params["cls_head.w"] = rng.normal(
            0.0, 0.02, size=(self.config.enc_width, n_classes)).astype(self.dtype)
        self.params["cls_head.b"] = np.zeros(n_classes, dtype=self.dtype)

    @property
    def n_classes(self) -> int | None:
        w = self.params.get("cls_head.w")
        return None if w is None else w.shape[1]

    def classify(self, volume: TransientVolume, mask: SpmMask) -> np.ndarray:
        """Class logits: linear head over the max-pooled encoder latents."""
        if "cls_head.w" not in self.params:
            raise ValueError("model has no classification head; call add_classification_head")
        _, latents = self.forward(volume, mask)
        pooled = latents.max(axis=0)
        return pooled @ self.params["cls_head.w"] + self.params["cls_head.b"]
