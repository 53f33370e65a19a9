"""Command-line pipeline driver.

Every stage of the experiment flow is a subcommand that reads and writes the
binary containers, so full protocols compose as shell pipelines.  Each stage
is a pure file-to-file transform: identical inputs, flags and seed give
byte-identical outputs.

Exit codes: 0 success, 2 usage, 3 I/O, 4 shape/validation, 5 numerical
failure.  --threads caps parallelism; NLOS_FORGE_SEED supplies the default
for every --seed flag.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import io as nio
from . import masking, metrics, recon
from .core import ScanGeometry, normalize_per_transient
from .mae import (MaeModel, TrainingDivergedError, finetune_head,
                  load_training_volumes, paper_config, tiny_config, train)
from .mae.model import GradientError
from .noise import NoiseParams, apply_spad_noise
from .renderer import RenderOptions, render_confocal
from .scenes import SceneSpec, generate_dataset, generate_scene, read_manifest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4
EXIT_NUMERICAL = 5


def _default_seed() -> int:
    return int(os.environ.get("NLOS_FORGE_SEED", "0"))


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _as_range(value) -> tuple:
    if isinstance(value, (int, float)):
        return (float(value), float(value))
    lo, hi = value
    return (float(lo), float(hi))


def scene_spec_from_dict(entry: dict, default_seed: int = 0) -> SceneSpec:
    """Build a SceneSpec from a TOML table; scalars mean pinned ranges."""
    kwargs = {}
    for key in ("primitive", "sample_count", "letter", "albedo", "label", "seed"):
        if key in entry:
            kwargs[key] = entry[key]
    for key in ("z_range", "scale_range", "x_range", "y_range"):
        if key in entry:
            kwargs[key] = _as_range(entry[key])
    if "rotation" in entry:
        kwargs["rotation"] = tuple(_as_range(r) for r in entry["rotation"])
    kwargs.setdefault("seed", default_seed)
    return SceneSpec(**kwargs)


def _geometry_from_args(args, defaults: dict | None = None) -> ScanGeometry:
    d = dict(defaults or {})
    for key, flag in (("nx", "nx"), ("ny", "ny"), ("n_bins", "n_bins"),
                      ("bin_width_ps", "bin_width_ps"),
                      ("wall_width", "wall_width"), ("wall_height", "wall_height")):
        value = getattr(args, flag, None)
        if value is not None:
            d[key] = value
    return ScanGeometry(
        wall_width=float(d.get("wall_width", 2.0)),
        wall_height=float(d.get("wall_height", 2.0)),
        nx=int(d.get("nx", 32)),
        ny=int(d.get("ny", 32)),
        n_bins=int(d.get("n_bins", 256)),
        bin_width=float(d.get("bin_width_ps", 32.0)) * 1e-12,
    )


def _add_geometry_flags(parser):
    parser.add_argument("--nx", type=int)
    parser.add_argument("--ny", type=int)
    parser.add_argument("--n-bins", dest="n_bins", type=int)
    parser.add_argument("--bin-width-ps", dest="bin_width_ps", type=float)
    parser.add_argument("--wall-width", dest="wall_width", type=float)
    parser.add_argument("--wall-height", dest="wall_height", type=float)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_render(args) -> int:
    config = _load_toml(args.scene)
    scene_table = config.get("scene", config)
    spec = scene_spec_from_dict(scene_table, default_seed=args.seed)
    geometry = _geometry_from_args(args, config.get("geometry"))
    options = RenderOptions(
        falloff_exponent=args.falloff_exponent,
        include_cosine=args.include_cosine,
        bin_weighting=args.bin_weighting,
    )
    volume = render_confocal(generate_scene(spec), geometry, options, threads=args.threads)
    if args.normalize:
        volume = normalize_per_transient(volume)
    nio.write_transient(args.output, volume)
    return EXIT_OK


def _cmd_noise(args) -> int:
    volume = nio.read_transient(args.input)
    params = NoiseParams(
        jitter_fwhm=args.jitter_fwhm_ps * 1e-12,
        bias=args.bias,
        photon_scale=args.photon_scale,
        seed=args.seed,
    )
    nio.write_transient(args.output, apply_spad_noise(volume, params))
    return EXIT_OK


def _cmd_mask_make(args) -> int:
    if (args.stride is None) == (args.ratio is None):
        print("mask make: give exactly one of --ratio or --stride", file=sys.stderr)
        return EXIT_USAGE
    if args.stride is not None:
        mask = masking.make_regular_mask(args.ny, args.nx, args.stride)
    else:
        mask = masking.make_random_mask(args.ny, args.nx, args.ratio, args.seed)
    nio.write_mask(args.output, mask)
    return EXIT_OK


def _cmd_mask_apply(args) -> int:
    volume = nio.read_transient(args.input)
    mask = nio.read_mask(args.mask)
    nio.write_transient(args.output, masking.fill_masked(volume, mask, args.fill))
    return EXIT_OK


def _cmd_dataset_gen(args) -> int:
    config = _load_toml(args.specs)
    geometry = _geometry_from_args(args, config.get("geometry"))
    specs = []
    for entry in config.get("scenes", []):
        count = int(entry.get("count", 1))
        base_seed = int(entry.get("seed", args.seed))
        table = {k: v for k, v in entry.items() if k != "count"}
        for i in range(count):
            table["seed"] = base_seed + i
            specs.append(scene_spec_from_dict(table))
    rows = generate_dataset(specs, geometry, args.out)
    print(f"dataset: {len(rows)} scenes in {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    factory = tiny_config if args.config == "tiny" else paper_config
    volumes = load_training_volumes(args.manifest)
    if not volumes:
        print("train: manifest lists no volumes", file=sys.stderr)
        return EXIT_VALIDATION
    ny, nx, n_bins = volumes[0].data.shape
    overrides = {"ny": ny, "nx": nx, "n_bins": n_bins}
    if args.mask_ratio is not None:
        overrides["mask_ratio"] = args.mask_ratio
    config = factory(**overrides)
    model = MaeModel(config, seed=args.init_seed)
    log = train(
        model, volumes, args.epochs, args.batch,
        mask_seed=args.seed, base_lr=args.lr,
        weight_decay=args.weight_decay, warmup_epochs=args.warmup_epochs,
        log_path=args.log, threads=args.threads,
    )
    nio.write_checkpoint(args.output, config, model.state_tensors())
    if log.epoch_losses:
        print(f"train: {args.epochs} epochs, final loss {log.epoch_losses[-1]:.6g}")
    return EXIT_OK


def _cmd_complete(args) -> int:
    volume = normalize_per_transient(nio.read_transient(args.input))
    mask = nio.read_mask(args.mask)
    config, tensors = nio.read_checkpoint(args.ckpt)
    model = MaeModel.from_checkpoint(config, tensors)
    completed, _ = model.forward(volume, mask)
    nio.write_transient(args.output, completed)
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    if args.out is None and args.export_pgm is None and args.export_depth is None:
        print("reconstruct: nothing to write; give --out, --export-pgm or --export-depth",
              file=sys.stderr)
        return EXIT_USAGE
    volume = nio.read_transient(args.input)
    options = recon.ReconOptions(
        method=args.method, nz=args.nz, z_max=args.z_max, lct_snr=args.lct_snr,
        attenuation_compensation=not args.no_attenuation,
    )
    result = recon.reconstruct(volume, options, threads=args.threads)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.save(out / "volume.npy", result.data)
        meta = {"origin": result.origin.tolist(),
                "voxel_size": result.voxel_size.tolist(),
                "dims": list(result.dims)}
        (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    if args.export_pgm:
        nio.export_pgm(args.export_pgm, recon.max_projection(result, axis=0))
    if args.export_depth:
        depth = recon.depth_from_argmax(result)
        z_span = result.voxel_size[0] * result.dims[0]
        nio.export_pgm(args.export_depth, (depth - result.origin[0]) / z_span)
    return EXIT_OK


def _cmd_eval(args) -> int:
    if args.kind == "image":
        ref = nio.read_pgm(args.ref)
        cand = nio.read_pgm(args.cand)
    else:
        ref = nio.read_transient(args.ref).data
        cand = nio.read_transient(args.cand).data
    report = metrics.evaluate(ref, cand, data_range=args.data_range)
    if args.output:
        nio.export_metrics_csv(args.output, report)
    print(f"ed={report.ed:.6g} cs={report.cs:.6g} ssim={report.ssim:.6g} psnr={report.psnr:.6g}")
    return EXIT_OK


def _classes_path(ckpt_path) -> Path:
    return Path(str(ckpt_path) + ".labels.txt")


def _cmd_classify_train(args) -> int:
    manifest_rows = read_manifest(args.manifest)
    volumes = load_training_volumes(args.manifest)
    labels_text = [row["label"] for row in manifest_rows]
    classes = sorted(set(labels_text))
    if len(classes) < 2:
        print("classify train: need at least 2 distinct labels", file=sys.stderr)
        return EXIT_VALIDATION
    labels = [classes.index(t) for t in labels_text]

    config, tensors = nio.read_checkpoint(args.ckpt)
    model = MaeModel.from_checkpoint(config, tensors)
    model.add_classification_head(len(classes), seed=args.seed)
    masks = [masking.make_random_mask(config.ny, config.nx, args.mask_ratio,
                                      args.seed + i) for i in range(len(volumes))]
    finetune_head(model, volumes, labels, masks,
                  epochs=args.epochs, lr=args.lr, seed=args.seed)
    nio.write_checkpoint(args.output, config, model.state_tensors())
    _classes_path(args.output).write_text("\n".join(classes) + "\n")

    predictions = [int(np.argmax(model.classify(v, m))) for v, m in zip(volumes, masks)]
    report = metrics.classification_report(labels, predictions, len(classes))
    print(f"classify: training accuracy {report['accuracy']:.3f} over {len(classes)} classes")
    return EXIT_OK


def _cmd_classify_predict(args) -> int:
    volume = normalize_per_transient(nio.read_transient(args.input))
    mask = nio.read_mask(args.mask)
    config, tensors = nio.read_checkpoint(args.ckpt)
    model = MaeModel.from_checkpoint(config, tensors)
    if model.n_classes is None:
        print("classify predict: checkpoint has no classification head", file=sys.stderr)
        return EXIT_VALIDATION
    logits = model.classify(volume, mask)
    index = int(np.argmax(logits))
    classes_file = _classes_path(args.ckpt)
    if classes_file.exists():
        classes = classes_file.read_text().splitlines()
        print(classes[index] if index < len(classes) else index)
    else:
        print(index)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlos-forge",
        description="Confocal NLOS transient imaging pipeline",
    )
    parser.add_argument("--threads", type=int, default=1,
                        help="cap on worker threads for parallel stages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene spec into a transient container")
    p.add_argument("--scene", required=True, help="TOML scene spec")
    _add_geometry_flags(p)
    p.add_argument("--falloff-exponent", type=int, default=4, choices=(0, 2, 4))
    p.add_argument("--include-cosine", action="store_true")
    p.add_argument("--bin-weighting", choices=("nearest", "linear"), default="nearest")
    p.add_argument("--normalize", action="store_true",
                   help="normalize each transient to [0, 1] before writing")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("noise", help="apply the SPAD noise model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--jitter-fwhm-ps", type=float, default=128.0)
    p.add_argument("--bias", type=float, default=0.0)
    p.add_argument("--photon-scale", type=float, default=1000.0)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_noise)

    p = sub.add_parser("mask", help="make or apply scanning pattern masks")
    mask_sub = p.add_subparsers(dest="mask_command", required=True)
    m = mask_sub.add_parser("make")
    m.add_argument("--ny", type=int, required=True)
    m.add_argument("--nx", type=int, required=True)
    m.add_argument("--ratio", type=float)
    m.add_argument("--stride", type=int)
    m.add_argument("--seed", type=int, default=_default_seed())
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=_cmd_mask_make)
    m = mask_sub.add_parser("apply")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--mask", required=True)
    m.add_argument("--fill", choices=("zero", "nearest"), default="zero")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=_cmd_mask_apply)

    p = sub.add_parser("dataset", help="dataset generation")
    ds_sub = p.add_subparsers(dest="dataset_command", required=True)
    d = ds_sub.add_parser("gen")
    d.add_argument("--specs", required=True, help="TOML with [geometry] and [[scenes]]")
    d.add_argument("--out", required=True)
    _add_geometry_flags(d)
    d.add_argument("--seed", type=int, default=_default_seed())
    d.set_defaults(func=_cmd_dataset_gen)

    p = sub.add_parser("train", help="pretrain the masked autoencoder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--config", choices=("tiny", "paper"), default="tiny")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--mask-ratio", type=float)
    p.add_argument("--weight-decay", type=float, default=0.05)
    p.add_argument("--warmup-epochs", type=int, default=6)
    p.add_argument("--log", help="per-epoch loss CSV")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("complete", help="recover masked transients with a checkpoint")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_complete)

    p = sub.add_parser("reconstruct", help="volumetric reconstruction")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--method", choices=("bp", "lct", "fk"), default="lct")
    p.add_argument("--nz", type=int)
    p.add_argument("--z-max", dest="z_max", type=float)
    p.add_argument("--lct-snr", dest="lct_snr", type=float, default=1e2)
    p.add_argument("--no-attenuation", action="store_true")
    p.add_argument("--out", help="directory for volume.npy + meta.json")
    p.add_argument("--export-pgm", help="max-intensity projection image")
    p.add_argument("--export-depth", help="argmax depth map image")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("eval", help="similarity metrics between two files")
    p.add_argument("kind", nargs="?", choices=("volume", "image"), default="volume")
    p.add_argument("--ref", required=True)
    p.add_argument("--cand", required=True)
    p.add_argument("--data-range", dest="data_range", type=float, default=1.0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("classify", help="frozen-encoder classification")
    cls_sub = p.add_subparsers(dest="classify_command", required=True)
    ct = cls_sub.add_parser("train")
    ct.add_argument("--manifest", required=True)
    ct.add_argument("--ckpt", required=True, help="pretrained encoder checkpoint")
    ct.add_argument("--mask-ratio", type=float, default=0.5)
    ct.add_argument("--epochs", type=int, default=50)
    ct.add_argument("--lr", type=float, default=1e-2)
    ct.add_argument("--seed", type=int, default=_default_seed())
    ct.add_argument("-o", "--output", required=True)
    ct.set_defaults(func=_cmd_classify_train)
    cp = cls_sub.add_parser("predict")
    cp.add_argument("--in", dest="input", required=True)
    cp.add_argument("--mask", required=True)
    cp.add_argument("--ckpt", required=True)
    cp.set_defaults(func=_cmd_classify_predict)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_IO
    except nio.FormatError as exc:
        print(f"error: bad container: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDivergedError, GradientError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
