"""
Command-line interface for sparse-data-diffusion.

    sdd train      --config run.yaml --out-dir runs/a
    sdd sample     runs/a/model.sddckpt --kind ddim --n 1000 --out gen.sddmat
    sdd threshold  gen.sddmat --match data.sddmat --out gen_t.sddmat
    sdd eval       data.sddmat gen.sddmat --out report.json
    sdd gen-data   --preset toy-clustered --n 2000 --out data.sddmat
    sdd info       runs/a/model.sddckpt
    sdd replay     runs/a/manifests.jsonl

Exit codes: 0 success, 2 usage or format errors, 3 numerical failures.
"""

import argparse
import contextlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .codec import ScaleSpec, sparsity_per_row
from .config import SEED_ENV, EvalConfig, RunConfig, apply_overrides, build_run_config, load_config, resolve, seed_from_env
from .data import DatasetHandle, SyntheticSpec, from_synthetic, load_dataset, load_matrix, preset_spec, PRESETS, save_matrix
from .denoiser import init, load_checkpoint, parameter_count, parameter_overhead, save_checkpoint
from .errors import ArgumentError, FormatError, SddError
from .manifest import RunManifest, append_manifest, matrix_fingerprint, read_manifests
from .metrics import ALL_METRICS, MetricsReport, evaluate, pixel_mean, write_histogram_csv
from .numerics import Rng
from .sampler import SampleConfig, sample_dense_baseline, sample_with_logits, threshold_to_sparsity
from .schedule import NoiseSchedule
from .trainer import Trainer, moving_average
from .validators.config import SampleConfigValidator
from .validators.report import ReportValidator, ThresholdResultValidator

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.sddckpt"
LOSS_LOG_NAME = "loss.csv"


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _resolve_dataset(cfg: RunConfig) -> DatasetHandle:
    """Dataset named by the config; the toy-clustered preset when none is given."""
    if cfg.data.path:
        return load_dataset(cfg.data.path, cfg.data.per_feature)
    spec = cfg.data.synthetic_spec(cfg.train.seed) or preset_spec("toy-clustered", seed=cfg.train.seed)
    return from_synthetic(spec, cfg.data.n, cfg.data.per_feature)


def cmd_train(args: argparse.Namespace, argv: list[str]) -> int:
    overrides = list(args.set or [])
    if args.steps is not None:
        overrides.append(f"train.total_steps={args.steps}")
    if args.seed is not None:
        overrides.append(f"train.seed={args.seed}")
    raw = apply_overrides(load_config(args.config), overrides)
    if args.data:
        # an explicit dataset replaces any configured synthetic source
        data = raw["data"] = dict(raw.get("data") or {})
        data.pop("synthetic", None)
        data.pop("preset", None)
        data["path"] = args.data
    cfg = build_run_config(raw)

    # everything that can fail on input happens before the output directory exists
    dataset = _resolve_dataset(cfg)
    fingerprint = dataset.fingerprint()
    seed = cfg.train.seed
    params = init(Rng(seed).spawn(1), dataset.d, cfg.model.hidden, cfg.model.temb_dim, cfg.model.sparsity_bits)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / CHECKPOINT_NAME
    log_path = out_dir / LOSS_LOG_NAME

    if not args.quiet:
        print(f"Training: {dataset.name} (n={dataset.n}, d={dataset.d}, sparsity={dataset.sparsity():.4f})")
        print(f"  model: hidden={list(cfg.model.hidden)} sparsity_bits={cfg.model.sparsity_bits} "
              f"parameters={parameter_count(params)}")

    trainer = Trainer(params, cfg.train, cfg.schedule, dataset.scale)
    batches = dataset.batches(cfg.train.batch_size, Rng(seed).spawn(2))
    history = trainer.fit(batches, log_path=log_path)

    metadata = {
        "d": dataset.d,
        "scale": dataset.scale.to_dict(),
        "schedule": cfg.schedule.to_dict(),
        "train": cfg.train.to_dict(),
        "steps_done": trainer.step,
        "dataset_fingerprint": fingerprint,
        "dataset_sparsity": dataset.sparsity(),
        "build": f"sparse-data-diffusion {__version__}",
    }
    save_checkpoint(checkpoint_path, trainer.params, trainer.ema, metadata)

    append_manifest(out_dir, RunManifest(
        command="train",
        argv=argv,
        config=cfg.to_dict(),
        seed=seed,
        dataset_fingerprint=fingerprint,
        artifacts={"checkpoint": str(checkpoint_path), "loss_log": str(log_path)},
    ))

    if not args.quiet:
        totals = [b.total for b in history]
        window = max(1, min(cfg.train.log_every or 1, len(totals) // 2 or 1))
        smoothed = moving_average(totals, window)
        if smoothed.size:
            print(f"  loss (moving average over {window}): {smoothed[0]:.5f} -> {smoothed[-1]:.5f}")
        print(f"\n✓ Wrote {checkpoint_path}")
    return 0


def _sample_config(args: argparse.Namespace) -> tuple[SampleConfig, int | None]:
    cfg = resolve(args.config, args.set)
    values = cfg.sample.to_dict()
    flags = {"kind": args.kind, "steps": args.steps, "seed": args.seed, "batch": args.batch, "eta": args.eta}
    values.update({k: v for k, v in flags.items() if v is not None})
    if args.no_ema:
        values["use_ema"] = False
    env_seed = seed_from_env()
    if env_seed is not None:
        values["seed"] = env_seed

    result = SampleConfigValidator().validate(values)
    for warning in result.warnings:
        logger.warning("sample config: %s", warning)
    if not result.passed:
        raise ArgumentError("Invalid sampler settings: " + "; ".join(result.errors))
    return SampleConfig(**values), args.n or cfg.sample_count


def cmd_sample(args: argparse.Namespace, argv: list[str]) -> int:
    sample_cfg, n = _sample_config(args)
    n = n or sample_cfg.batch
    params, ema, metadata = load_checkpoint(args.checkpoint)
    model = ema if sample_cfg.use_ema else params
    scale = ScaleSpec.from_dict(metadata["scale"])
    schedule = NoiseSchedule.from_dict(metadata["schedule"])
    d = int(metadata["d"])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    artifacts = {"samples": str(out)}
    if model.sparsity_bits:
        samples, logits = sample_with_logits(model, d, sample_cfg, schedule, scale, n)
        if args.logits_out:
            save_matrix(args.logits_out, logits)
            artifacts["logits"] = str(args.logits_out)
    else:
        samples = sample_dense_baseline(model, d, sample_cfg, schedule, scale, n)

    save_matrix(out, samples)
    if args.csv:
        save_matrix(args.csv, samples)
        artifacts["csv"] = str(args.csv)

    append_manifest(out.parent, RunManifest(
        command="sample",
        argv=argv,
        config={"sample": sample_cfg.to_dict(), "n": n, "checkpoint": str(args.checkpoint)},
        seed=sample_cfg.seed,
        dataset_fingerprint=metadata.get("dataset_fingerprint"),
        artifacts=artifacts,
    ))

    mean_sparsity = float(sparsity_per_row(samples).mean())
    if not args.quiet:
        print(f"Sampled {samples.shape[0]} x {samples.shape[1]} with {sample_cfg.kind} ({sample_cfg.steps} steps)")
    print(f"mean sparsity: {mean_sparsity:.6f}")
    return 0


def cmd_threshold(args: argparse.Namespace, argv: list[str]) -> int:
    samples = load_matrix(args.samples)
    if args.match:
        target = load_dataset(args.match).sparsity()
    else:
        target = args.target_sparsity

    thresholded, result = threshold_to_sparsity(samples, target, args.grid)
    document = result.to_dict()
    check = ThresholdResultValidator().validate(document)
    for warning in check.warnings:
        logger.warning("%s", warning)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    result_path = Path(args.result) if args.result else out.with_suffix(".threshold.json")
    save_matrix(out, thresholded)
    result_path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")

    append_manifest(out.parent, RunManifest(
        command="threshold",
        argv=argv,
        config={"target_sparsity": target, "grid_size": args.grid, "match": args.match},
        seed=0,
        dataset_fingerprint=matrix_fingerprint(samples),
        artifacts={"samples": str(out), "result": str(result_path)},
    ))

    if not args.quiet:
        status = "converged" if result.converged else "UNCONVERGED"
        print(f"tau={result.threshold:.6g} achieved={result.achieved_sparsity:.6f} "
              f"target={result.target_sparsity:.6f} ({status})")
    return 0


def _eval_config(args: argparse.Namespace) -> EvalConfig:
    cfg = resolve(args.config, args.set).eval
    if args.metrics is not None:
        cfg.metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    flags = {"k": args.k, "bandwidth": args.bandwidth, "quantize_levels": args.quantize_levels}
    for key, value in flags.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def cmd_eval(args: argparse.Namespace, argv: list[str]) -> int:
    cfg = _eval_config(args)
    real = load_matrix(args.real)
    gen = load_matrix(args.gen)
    report = evaluate(real, gen, cfg.metrics, k=cfg.k, bandwidth=cfg.bandwidth,
                      quantize_levels=cfg.quantize_levels)

    check = ReportValidator().validate(report.to_dict())
    for warning in check.warnings:
        logger.warning("report: %s", warning)
    for error in check.errors:
        logger.error("report: %s", error)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out)
    artifacts = {"report": str(out)}
    stem = out.with_suffix("")
    if report.sparsity_hist_real is not None:
        for label, hist in (("real", report.sparsity_hist_real), ("gen", report.sparsity_hist_gen)):
            path = Path(f"{stem}.sparsity_{label}.csv")
            write_histogram_csv(path, hist)
            artifacts[f"sparsity_hist_{label}"] = str(path)
    if args.csv:
        report.to_csv(args.csv)
        artifacts["csv"] = str(args.csv)
    if args.pixel_mean:
        save_matrix(args.pixel_mean, np.stack([pixel_mean(real), pixel_mean(gen)]))
        artifacts["pixel_mean"] = str(args.pixel_mean)

    append_manifest(out.parent, RunManifest(
        command="eval",
        argv=argv,
        config=asdict(cfg),
        seed=0,
        dataset_fingerprint=matrix_fingerprint(real),
        artifacts=artifacts,
    ))

    if not args.quiet:
        _print_report(report)
    return 0


def _print_report(report: MetricsReport) -> None:
    print(f"Evaluated {report.n_gen} generated vs {report.n_real} real rows (d={report.d})")
    for key, value in report.flat().items():
        if value is None or key in ("n_real", "n_gen", "d"):
            continue
        print(f"  {key}: {value:.6g}" if isinstance(value, float) else f"  {key}: {value}")
    for group, reason in report.unavailable.items():
        print(f"  {group}: unavailable ({reason})")


def cmd_gen_data(args: argparse.Namespace, argv: list[str]) -> int:
    seed = seed_from_env()
    seed = args.seed if seed is None else seed
    if args.preset:
        spec = preset_spec(args.preset, seed=seed)
    else:
        spec = SyntheticSpec(kind=args.kind, d=args.d, target_sparsity=args.sparsity, seed=seed)
    dataset = from_synthetic(spec, args.n)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(out, dataset.values)
    fingerprint = dataset.fingerprint()
    append_manifest(out.parent, RunManifest(
        command="gen-data",
        argv=argv,
        config={"synthetic": spec.to_dict(), "n": args.n},
        seed=seed,
        dataset_fingerprint=fingerprint,
        artifacts={"data": str(out)},
    ))

    if not args.quiet:
        print(f"Wrote {out}: n={dataset.n} d={dataset.d} sparsity={dataset.sparsity():.4f} fingerprint={fingerprint}")
    return 0


def cmd_info(args: argparse.Namespace, argv: list[str]) -> int:
    params, _, metadata = load_checkpoint(args.checkpoint)
    arch = metadata["architecture"]
    print(f"Checkpoint: {args.checkpoint}")
    print(f"  d={arch['d']} hidden={arch['hidden']} temb_dim={arch['temb_dim']} sparsity_bits={arch['sparsity_bits']}")
    print(f"  parameters: {parameter_count(params)}")
    overhead = parameter_overhead(arch["d"], arch["hidden"], arch["temb_dim"])
    print(f"  sparsity-bit overhead: +{overhead['extra_parameters']} "
          f"({overhead['relative_increase'] * 100:.1f}% over the dense model)")
    for key in ("steps_done", "dataset_fingerprint", "dataset_sparsity", "build"):
        if key in metadata:
            print(f"  {key}: {metadata[key]}")
    return 0


def cmd_replay(args: argparse.Namespace, argv: list[str]) -> int:
    entries = read_manifests(args.manifest)
    if not entries:
        raise FormatError(f"no manifest entries in {args.manifest}")
    try:
        entry = entries[args.index]
    except IndexError as exc:
        raise ArgumentError(f"manifest index {args.index} out of range ({len(entries)} entries)") from exc

    if not args.quiet:
        print(f"Replaying: sdd {' '.join(entry['argv'])}")
    with _seed_env(entry["seed"]):
        return main(entry["argv"])


@contextlib.contextmanager
def _seed_env(seed: int):
    previous = os.environ.get(SEED_ENV)
    os.environ[SEED_ENV] = str(seed)
    try:
        yield
    finally:
        if previous is None:
            os.environ.pop(SEED_ENV, None)
        else:
            os.environ[SEED_ENV] = previous


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdd",
        description="Sparse data diffusion: train, sample, threshold and evaluate",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="Only output errors and results")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a denoiser and write a checkpoint")
    p.add_argument("--config", help="Path to config YAML/JSON file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config value (repeatable)")
    p.add_argument("--data", help="Dataset path (SDDMAT1, CSV or IDX)")
    p.add_argument("--steps", type=int, help="Training steps")
    p.add_argument("--seed", type=int, help="Training seed")
    p.add_argument("--out-dir", default="runs/latest", help="Output directory")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="Draw samples from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--config", help="Config file whose sample section provides defaults")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config value (repeatable)")
    p.add_argument("--kind", choices=["ddpm", "ddim"])
    p.add_argument("--steps", type=int)
    p.add_argument("--n", type=int, help="Number of samples")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch", type=int, help="Chains run together")
    p.add_argument("--eta", type=float, help="DDPM noise scale (1 = ancestral, 0 = deterministic)")
    p.add_argument("--no-ema", action="store_true", help="Sample with the raw instead of the EMA parameters")
    p.add_argument("--out", required=True, help="SDDMAT1 output path")
    p.add_argument("--csv", help="Also write the samples as CSV")
    p.add_argument("--logits-out", help="Write the clamped sparsity-bit logits")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("threshold", help="Zero small values until a target sparsity is reached")
    p.add_argument("samples")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target-sparsity", type=float)
    target.add_argument("--match", help="Dataset whose mean sparsity is the target")
    p.add_argument("--grid", type=int, default=1000, help="Threshold grid size")
    p.add_argument("--out", required=True, help="Thresholded SDDMAT1 output path")
    p.add_argument("--result", help="ThresholdResult JSON path (default: <out>.threshold.json)")
    p.set_defaults(handler=cmd_threshold)

    p = sub.add_parser("eval", help="Compare generated against real data")
    p.add_argument("real")
    p.add_argument("gen")
    p.add_argument("--config", help="Config file whose eval section provides defaults")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config value (repeatable)")
    p.add_argument("--metrics", help=f"Comma-separated metric groups (default: {','.join(ALL_METRICS)})")
    p.add_argument("--k", type=int, help="Neighbours for LISI")
    p.add_argument("--bandwidth", type=float, help="MMD kernel bandwidth (default: median heuristic)")
    p.add_argument("--quantize-levels", type=int, help="Also measure sparsity on a grid of this many levels")
    p.add_argument("--out", default="report.json")
    p.add_argument("--csv", help="Also write scalar metrics as CSV")
    p.add_argument("--pixel-mean", help="Write per-dimension means of real and generated data")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("gen-data", help="Write a synthetic sparse dataset")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--kind", default="clustered-deposits", choices=["clustered-deposits", "sparse-mixture"])
    p.add_argument("--d", type=int, default=256)
    p.add_argument("--sparsity", type=float, default=0.9)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("info", help="Print checkpoint metadata")
    p.add_argument("checkpoint")
    p.set_defaults(handler=cmd_info)

    p = sub.add_parser("replay", help="Re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--index", type=int, default=-1, help="Entry to replay (default: last)")
    p.set_defaults(handler=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2

    _configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args, argv)
    except SddError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"Error: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
