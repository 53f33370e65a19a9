"""Self-supervised pretraining and head finetuning loops.

Each epoch draws a fresh random mask per sample (at the config's ratio),
shuffles the sample order, averages gradients over each batch, and takes one
AdamW step per batch under the warm-up + cosine schedule.  Everything is
keyed off integer seeds through counter-based generators, so a fixed
(init, mask, order) seed triple reproduces the loss log bit for bit.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import TransientVolume, normalize_per_transient
from ..masking import make_random_mask
from .model import MaeModel
from .optim import OptimizerState, adamw_step, lr_at_step


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite during epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainLog:
    epoch_losses: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss"])
            for epoch, loss in enumerate(self.epoch_losses):
                writer.writerow([epoch, repr(loss)])


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence(entropy=list(key)).generate_state(1)[0])


def load_training_volumes(manifest_path) -> list[TransientVolume]:
    """Load and normalize every volume listed in a dataset manifest."""
    from .. import io as nio
    from ..scenes import read_manifest

    manifest_path = Path(manifest_path)
    rows = read_manifest(manifest_path)
    return [normalize_per_transient(nio.read_transient(manifest_path.parent / row["file"]))
            for row in rows]


def train(
    model: MaeModel,
    dataset,
    epochs: int,
    batch_size: int,
    *,
    mask_seed: int = 0,
    base_lr: float = 1e-4,
    betas: tuple = (0.9, 0.95),
    weight_decay: float = 0.05,
    warmup_epochs: int = 6,
    checkpoint_dir=None,
    log_path=None,
    threads: int = 1,
) -> TrainLog:
    """Pretrain in place; returns the per-epoch mean-loss log.

    dataset is a manifest path or a list of normalized TransientVolume with
    grid/bins matching the model config.  threads > 1 evaluates batch items
    on a pool; gradients are still reduced in batch order, so the result
    does not depend on scheduling.
    """
    volumes = load_training_volumes(dataset) if isinstance(dataset, (str, Path)) else list(dataset)
    if epochs > 0 and not volumes:
        raise ValueError("training requires a non-empty dataset")
    c = model.config
    for vol in volumes:
        if vol.data.shape != (c.ny, c.nx, c.n_bins):
            raise ValueError(f"dataset volume shape {vol.data.shape} does not match config")

    log = TrainLog()
    if epochs == 0:
        if log_path:
            log.write_csv(log_path)
        return log

    batch_size = max(1, min(batch_size, len(volumes)))
    steps_per_epoch = (len(volumes) + batch_size - 1) // batch_size
    total_steps = steps_per_epoch * epochs
    warmup_steps = steps_per_epoch * warmup_epochs
    trainable = {k: v for k, v in model.params.items() if not k.startswith("cls_head.")}
    state = OptimizerState.for_params(
        trainable, base_lr=base_lr, betas=betas,
        weight_decay=weight_decay, warmup_epochs=warmup_epochs)

    step = 0
    for epoch in range(epochs):
        order_rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=mask_seed, spawn_key=(1, epoch))))
        order = order_rng.permutation(len(volumes))
        epoch_losses = []
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]

            def item(idx):
                mask = make_random_mask(c.ny, c.nx, c.mask_ratio,
                                        _derived_seed(mask_seed, epoch, int(idx)))
                return model.backward(volumes[idx], mask)

            if threads > 1 and len(batch) > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    results = list(pool.map(item, batch))
            else:
                results = [item(idx) for idx in batch]

            grads_sum = None
            for loss, grads in results:  # fixed reduction order
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch)
                epoch_losses.append(loss)
                if grads_sum is None:
                    grads_sum = grads
                else:
                    for name in grads_sum:
                        grads_sum[name] += grads[name]
            for name in grads_sum:
                grads_sum[name] /= len(batch)
            lr = lr_at_step(step, warmup_steps, total_steps, base_lr)
            adamw_step(model.params, grads_sum, state, lr)
            step += 1
        mean_loss = float(np.mean(epoch_losses))
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(epoch)
        log.epoch_losses.append(mean_loss)
        if checkpoint_dir is not None:
            from .. import io as nio
            path = Path(checkpoint_dir)
            path.mkdir(parents=True, exist_ok=True)
            nio.write_checkpoint(path / f"epoch_{epoch:04d}.mrmt", c, model.state_tensors())

    if log_path:
        log.write_csv(log_path)
    return log


def finetune_head(
    model: MaeModel,
    volumes: list,
    labels: list,
    masks: list,
    *,
    epochs: int = 50,
    lr: float = 1e-2,
    seed: int = 0,
) -> list:
    """Train the classification head only; the encoder stays frozen.

    Cross-entropy on logits from the max-pooled latents.  Returns per-epoch
    mean losses.
    """
    if model.n_classes is None:
        raise ValueError("attach a classification head before finetuning")
    if not (len(volumes) == len(labels) == len(masks)):
        raise ValueError("volumes, labels and masks must align")
    n_classes = model.n_classes
    if any(not 0 <= int(l) < n_classes for l in labels):
        raise ValueError("labels must be in [0, n_classes)")

    # Latents do not change while the encoder is frozen: pool once.
    pooled = []
    for vol, mask in zip(volumes, masks):
        _, latents = model.forward(vol, mask)
        pooled.append(latents.max(axis=0))
    pooled = np.stack(pooled)
    targets = np.asarray(labels, dtype=int)

    head = {k: model.params[k] for k in ("cls_head.w", "cls_head.b")}
    state = OptimizerState.for_params(head, base_lr=lr, weight_decay=0.0, warmup_epochs=0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    losses = []
    for _ in range(epochs):
        order = rng.permutation(len(pooled))
        epoch_loss = 0.0
        for idx in order:
            logits = pooled[idx] @ head["cls_head.w"] + head["cls_head.b"]
            shifted = logits - logits.max()
            probs = np.exp(shifted) / np.exp(shifted).sum()
            epoch_loss -= float(np.log(max(probs[targets[idx]], 1e-30)))
            dlogits = probs.copy()
            dlogits[targets[idx]] -= 1.0
            grads = {
                "cls_head.w": np.outer(pooled[idx], dlogits).astype(head["cls_head.w"].dtype),
                "cls_head.b": dlogits.astype(head["cls_head.b"].dtype),
            }
            adamw_step(head, grads, state, lr)
        losses.append(epoch_loss / len(pooled))
    return losses
