"""Central finite-difference verification of the analytic gradients.

Samples parameter entries across every tensor (covering attention, MLP,
layer norms, embeddings, mask token, projections and the output head),
perturbs each by +/-h in f64, and compares the difference quotient with the
analytic gradient.
"""

from __future__ import annotations

import numpy as np

from ..core import TransientVolume
from ..masking import SpmMask
from .model import MaeModel


def check_gradients(
    model: MaeModel,
    volume: TransientVolume,
    mask: SpmMask,
    n_samples: int = 200,
    h: float = 1e-5,
    seed: int = 0,
) -> dict:
    """Max/percentile relative errors over sampled entries of every tensor.

    Requires an f64 model; f32 arithmetic is too noisy near the 1e-4 band.
    """
    if model.dtype != np.float64:
        raise ValueError("gradient checking requires an f64 model")
    _, grads = model.backward(volume, mask)

    data2d = volume.data.reshape(model.config.n_tokens, model.config.n_bins)
    masked_flat = mask.masked.reshape(-1)

    def loss_now() -> float:
        pred, _, _ = model.forward_raw(data2d, masked_flat)
        return model.masked_loss(data2d.astype(model.dtype), pred, masked_flat)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    names = sorted(grads)
    # At least one probe per tensor, remaining draws proportional to size.
    sizes = np.array([model.params[n].size for n in names], dtype=float)
    extra = rng.choice(len(names), size=max(n_samples - len(names), 0),
                       p=sizes / sizes.sum())
    counts = np.bincount(extra, minlength=len(names)) + 1

    errors = []
    for name, count in zip(names, counts):
        tensor = model.params[name]
        flat_idx = rng.integers(0, tensor.size, size=count)
        for i in flat_idx:
            original = tensor.flat[i]
            tensor.flat[i] = original + h
            up = loss_now()
            tensor.flat[i] = original - h
            down = loss_now()
            tensor.flat[i] = original
            numeric = (up - down) / (2.0 * h)
            analytic = grads[name].flat[i]
            denom = max(abs(numeric), abs(analytic), 1e-7)
            errors.append((abs(numeric - analytic) / denom, name))

    rel = np.array([e for e, _ in errors])
    worst = max(errors, key=lambda t: t[0])
    return {
        "max_rel_error": float(rel.max()),
        "median_rel_error": float(np.median(rel)),
        "n_checked": len(errors),
        "worst_tensor": worst[1],
        "per_tensor_max": {
            name: float(max(e for e, n in errors if n == name)) for name in names
        },
    }
