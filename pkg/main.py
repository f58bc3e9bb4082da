#!/usr/bin/env python3
"""
Stego Leak CLI

Command-line interface for the data-leakage steganography pipeline:
encode records into secret images, train the hide/reveal networks, embed,
reveal, decode and evaluate, plus the LSB baseline.
"""

import functools
import logging
import math
import shutil
import sys
from pathlib import Path
from typing import List, Optional, Tuple

import click
import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

sys.path.insert(0, str(Path(__file__).parent / "src"))

from stego_leak import __version__  # noqa: E402
from stego_leak.baselines.lsb import bits_to_bytes, bytes_to_bits, capacity, lsb_embed, lsb_extract  # noqa: E402
from stego_leak.core.errors import ConfigError, ImageFormatError, SchemaError, StegoError  # noqa: E402
from stego_leak.core.models import LossWeights, LsbConfig, NetworkConfig  # noqa: E402
from stego_leak.data.manifest import (  # noqa: E402
    MANIFEST_NAME, group_by_image, plan_images, read_manifest, write_manifest,
)
from stego_leak.data.media_io import (  # noqa: E402
    RasterImage, generate_synthetic_covers, list_pngs, load_cover_directory, load_png,
    save_binary_png, save_png, save_residual_png,
)
from stego_leak.data.payments import PaymentSpec, generate_synthetic_payments  # noqa: E402
from stego_leak.data.tabular_codec import (  # noqa: E402
    AttributeKind, AttributeSpec, decode_bits, fit_schema, load_csv, load_schema, pack_records,
    save_schema, unpack_bits, write_csv,
)
from stego_leak.evaluation.metrics import MetricsReport, psnr, write_metrics_csv  # noqa: E402
from stego_leak.networks.stego_networks import (  # noqa: E402
    IdentityBackend, build_model, full_forward, reveal_forward,
)
from stego_leak.simulators.sweep import alpha_sweep, write_sweep_csv  # noqa: E402
from stego_leak.simulators.trainer import (  # noqa: E402
    PairSampler, evaluate as evaluate_pairs, load_checkpoint, resume, save_checkpoint, train as train_model,
)
from stego_leak.utils.config import RunConfig, load_run_config  # noqa: E402
from stego_leak.utils.logging_setup import configure_logging  # noqa: E402

console = Console()
err_console = Console(stderr=True)

logger = logging.getLogger("stego_leak.cli")

# evaluation pairs are drawn from a stream separate from training
EVAL_SEED_OFFSET = 1


def handle_errors(func):
    """Map package errors to a single-line message and an exit code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            _fail(exc, 2)
        except (StegoError, OSError) as exc:
            _fail(exc, 1)

    return wrapper


def _fail(exc: Exception, code: int) -> None:
    err_console.print(f"error: {type(exc).__name__}: {exc}", markup=False, highlight=False, soft_wrap=True)
    sys.exit(code)


def _config(ctx: click.Context, **paths: Optional[str]) -> RunConfig:
    """Resolve the run config; non-empty path options override config keys."""
    overrides = list(ctx.obj["overrides"])
    overrides += [f"{key}={value}" for key, value in paths.items() if value]
    return load_run_config(ctx.obj["config_path"], overrides)


def _require_dir(value: str, key: str) -> Path:
    if not value:
        raise ConfigError(f"{key} is not set (use --{key.replace('_', '-')} or the config file)")
    path = Path(value)
    if not path.is_dir():
        raise ConfigError(f"{key} is not a directory: {path}")
    return path


def _require_file(value: str, key: str) -> Path:
    if not value:
        raise ConfigError(f"{key} is not set (use --{key.replace('_', '-')} or the config file)")
    path = Path(value)
    if not path.is_file():
        raise ConfigError(f"{key} does not exist: {path}")
    return path


def _load_secrets(directory: Path, network: NetworkConfig) -> Tuple[List[np.ndarray], Optional[int]]:
    """Secret images as [1, H, W] arrays, plus the payload bits per image from the manifest."""
    paths = list_pngs(directory)
    if not paths:
        raise ConfigError(f"no secret PNGs in {directory}")
    expected = (1, network.image_height, network.image_width)
    secrets = []
    for path in paths:
        image = load_png(path)
        if image.pixels.shape != expected:
            raise ImageFormatError(f"{path}: secret must be {expected}, got {image.pixels.shape}")
        secrets.append(image.pixels)

    payload_dims = None
    manifest = directory / MANIFEST_NAME
    if manifest.exists():
        groups = group_by_image(read_manifest(manifest))
        payload_dims = max(sum(e.payload_dims for e in group) for group in groups.values())
    return secrets, payload_dims


def _load_covers(directory: Path, config: RunConfig, network: NetworkConfig) -> List[np.ndarray]:
    covers = load_cover_directory(
        directory,
        config.crop_size,
        (network.image_height, network.image_width),
        network.cover_channels,
        seed=config.seed,
    )
    return [c.pixels for c in covers]


def _copy_manifest(source_dir: Path, out_dir: Path) -> None:
    manifest = source_dir / MANIFEST_NAME
    if manifest.exists():
        shutil.copyfile(manifest, out_dir / MANIFEST_NAME)


def _format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def _report_table(title: str, rows: List[Tuple[str, MetricsReport]]) -> Table:
    table = Table(title=title, show_header=True, header_style="bold magenta")
    for column, style in (("Run", "cyan"), ("BPP", "yellow"), ("alpha", "yellow"), ("L_all x1e4", "red"),
                          ("PSNR [dB]", "green"), ("SSIM", "green"), ("BACC", "blue")):
        table.add_column(column, style=style)
    for label, report in rows:
        table.add_row(
            label,
            f"{report.bpp:.4f}",
            f"{report.alpha:g}",
            f"{report.scaled_losses()['L_all']:.2f}",
            _format_db(report.psnr_db),
            f"{report.ssim:.4f}",
            f"{report.bacc:.4f}",
        )
    return table


@click.group()
@click.version_option(version=__version__)
@click.option('--config', '-c', 'config_path', type=click.Path(), help='Flat key=value config file')
@click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE', help='Override a config key')
@click.option('--verbose', '-v', is_flag=True, help='Debug logging')
@click.option('--quiet', '-q', is_flag=True, help='Warnings and errors only')
@click.pass_context
def cli(ctx, config_path, overrides, verbose, quiet):
    """Stego Leak: hide tabular records in images and measure the leak"""
    configure_logging(logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO)
    ctx.obj = {"config_path": config_path, "overrides": overrides}


@cli.command()
@click.option('--out-dir', '-o', type=click.Path(file_okay=False), required=True, help='Output directory')
@click.option('--records', '-n', default=238, show_default=True, help='Number of payment records')
@click.option('--covers', default=20, show_default=True, help='Number of cover images')
@click.option('--height', default=64, show_default=True, help='Cover height')
@click.option('--width', default=64, show_default=True, help='Cover width')
@click.option('--channels', type=click.Choice(['1', '3']), default='3', help='Cover channels')
@click.pass_context
@handle_errors
def synth(ctx, out_dir, records, covers, height, width, channels):
    """Write a synthetic payments CSV and a directory of synthetic covers"""
    config = _config(ctx)
    out = Path(out_dir)
    covers_dir = out / "covers"
    covers_dir.mkdir(parents=True, exist_ok=True)

    spec = PaymentSpec()
    rows = generate_synthetic_payments(records, seed=config.seed, spec=spec)
    write_csv(rows, out / "payments.csv", spec.header)
    images = generate_synthetic_covers(covers, height, width, int(channels), seed=config.seed)
    for index, image in enumerate(images):
        save_png(image, covers_dir / f"cover_{index:05d}.png")

    console.print(f"[green]Wrote {records} records to {out / 'payments.csv'}[/green]")
    console.print(f"[green]Wrote {covers} covers to {covers_dir}[/green]")


@cli.command(name="fit-schema")
@click.argument('csv_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True, help='Schema file to write')
@click.option('--column', 'columns', multiple=True, help='Columns to include (default: all)')
@click.option('--numeric', multiple=True, help='Columns to treat as numeric')
@click.option('--bins', default=32, show_default=True, help='Quantile bins per numeric column')
@click.pass_context
@handle_errors
def fit_schema_cmd(ctx, csv_path, out, columns, numeric, bins):
    """Fit one-hot vocabularies and numeric bins from a CSV"""
    records = load_csv(csv_path, list(columns) or None)
    names = list(columns) or (list(records[0].keys()) if records else [])
    unknown = [c for c in numeric if c not in names]
    if unknown:
        raise ConfigError(f"numeric columns not in the selected columns: {unknown}")
    specs = [
        AttributeSpec(name, AttributeKind.NUMERIC if name in numeric else AttributeKind.CATEGORICAL, bins)
        for name in names
    ]
    schema = fit_schema(records, specs)
    save_schema(schema, out)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Attribute", style="cyan")
    table.add_column("Kind", style="green")
    table.add_column("Width", style="yellow")
    for attribute in schema.attributes:
        table.add_row(attribute.name, attribute.kind.value, str(attribute.width))
    console.print(table)
    console.print(f"D = [bold]{schema.total_dims}[/bold], schema saved to {out}")


@cli.command(name="encode-data")
@click.argument('csv_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--schema', 'schema_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--out-dir', '-o', type=click.Path(file_okay=False), required=True, help='Secret image directory')
@click.option('--height', type=int, help='Secret height (default: image_height)')
@click.option('--width', type=int, help='Secret width (default: image_width)')
@click.option('--records-per-image', type=int, help='Records packed per secret image')
@click.pass_context
@handle_errors
def encode_data(ctx, csv_path, schema_path, out_dir, height, width, records_per_image):
    """Encode CSV records into 1-bit secret PNGs plus a manifest"""
    config = _config(ctx)
    height = height or config.image_height
    width = width or config.image_width
    per_image = records_per_image or config.records_per_image

    schema = load_schema(schema_path)
    records = load_csv(csv_path, schema.names)
    if not records:
        raise SchemaError(f"{csv_path} has no records")
    entries = plan_images(len(records), schema.total_dims, height, width, per_image)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = group_by_image(entries)
    for filename, group in groups.items():
        image = pack_records(schema, [records[e.record_index] for e in group], height, width)
        save_binary_png(image.pixels, out / filename)
    write_manifest(entries, out / MANIFEST_NAME)

    console.print(
        f"[green]Encoded {len(records)} records (D={schema.total_dims}) into "
        f"{len(groups)} secret images in {out}[/green]"
    )


@cli.command()
@click.option('--secrets-dir', type=click.Path(), help='Secret PNG directory')
@click.option('--covers-dir', type=click.Path(), help='Cover PNG directory')
@click.option('--checkpoint', type=click.Path(), help='Checkpoint to write')
@click.option('--resume', 'resume_run', is_flag=True, help='Continue from the checkpoint')
@click.option('--progress/--no-progress', default=True, help='Show a progress bar')
@click.pass_context
@handle_errors
def train(ctx, secrets_dir, covers_dir, checkpoint, resume_run, progress):
    """Train the preparation, hiding and reveal networks"""
    config = _config(ctx, secrets_dir=secrets_dir, covers_dir=covers_dir, checkpoint=checkpoint)
    secrets_path = _require_dir(config.secrets_dir, "secrets_dir")
    covers_path = _require_dir(config.covers_dir, "covers_dir")
    if not config.checkpoint:
        raise ConfigError("checkpoint is not set (use --checkpoint or the config file)")
    checkpoint_path = Path(config.checkpoint)
    if resume_run:
        _require_file(config.checkpoint, "checkpoint")

    network = config.network_config()
    training = config.training_config()
    secrets, payload_dims = _load_secrets(secrets_path, network)
    covers = _load_covers(covers_path, config, network)
    sampler = PairSampler(secrets, covers, training.seed, payload_dims)

    if resume_run:
        result = resume(checkpoint_path, sampler, training, checkpoint_path, progress=progress)
    else:
        model = build_model(network, seed=training.seed, dtype=training.precision.dtype)
        result = train_model(model, sampler, training, checkpoint_path=checkpoint_path, progress=progress)

    save_checkpoint(result.model, checkpoint_path, result.history, result.optimizer, result.iteration)
    if config.history_csv:
        result.history.to_csv(config.history_csv)

    last = result.history.records[-1] if result.history.records else None
    console.print(Panel.fit(
        f"Iterations: [bold]{result.iteration}[/bold]"
        f"{' (early stop)' if result.stopped_early else ''}\n"
        f"Parameters: {result.model.parameter_count():,}\n"
        + (f"Last loss_all: {last.loss_all:.6g} (mse {last.loss_mse:.6g}, bce {last.loss_bce:.6g})\n" if last else "")
        + f"Checkpoint: {checkpoint_path}",
        title="Training", border_style="green",
    ))


@cli.command()
@click.option('--checkpoint', type=click.Path(), help='Trained checkpoint')
@click.option('--secrets-dir', type=click.Path(), help='Secret PNG directory')
@click.option('--covers-dir', type=click.Path(), help='Cover PNG directory')
@click.option('--out-dir', '-o', type=click.Path(file_okay=False), required=True, help='Container directory')
@click.option('--residuals', is_flag=True, help='Also write amplified |cover - container| images')
@click.pass_context
@handle_errors
def embed(ctx, checkpoint, secrets_dir, covers_dir, out_dir, residuals):
    """Hide every secret image in a cover and write the containers"""
    config = _config(ctx, checkpoint=checkpoint, secrets_dir=secrets_dir, covers_dir=covers_dir)
    checkpoint_path = _require_file(config.checkpoint, "checkpoint")
    secrets_path = _require_dir(config.secrets_dir, "secrets_dir")
    covers_path = _require_dir(config.covers_dir, "covers_dir")

    model = load_checkpoint(checkpoint_path).model
    covers = _load_covers(covers_path, config, model.config)
    rng = np.random.default_rng(config.seed)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if residuals:
        (out / "residuals").mkdir(exist_ok=True)

    psnrs = []
    expected = (1, model.config.image_height, model.config.image_width)
    for path in list_pngs(secrets_path):
        secret = load_png(path).pixels
        if secret.shape != expected:
            raise ImageFormatError(f"{path}: secret must be {expected}, got {secret.shape}")
        cover = covers[int(rng.integers(len(covers)))]
        _, container, _ = full_forward(model, secret, cover)
        container_image = RasterImage(np.clip(container.data, 0.0, 1.0))
        save_png(container_image, out / path.name)
        if residuals:
            save_residual_png(RasterImage(cover), container_image, out / "residuals" / path.name)
        psnrs.append(psnr(cover, container_image.pixels, config.psnr()))
    _copy_manifest(secrets_path, out)

    mean_psnr = float(np.mean(psnrs)) if psnrs else math.nan
    console.print(f"[green]Wrote {len(psnrs)} containers to {out} (mean PSNR {_format_db(mean_psnr)} dB)[/green]")


@cli.command()
@click.argument('containers_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--checkpoint', type=click.Path(), help='Trained checkpoint')
@click.option('--out-dir', '-o', type=click.Path(file_okay=False), required=True, help='Revealed image directory')
@click.pass_context
@handle_errors
def reveal(ctx, containers_dir, checkpoint, out_dir):
    """Reveal the secret images hidden in container PNGs"""
    config = _config(ctx, checkpoint=checkpoint)
    model = load_checkpoint(_require_file(config.checkpoint, "checkpoint")).model
    source = Path(containers_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    count = 0
    for path in list_pngs(source):
        revealed = reveal_forward(model, load_png(path).pixels)
        save_png(RasterImage(np.clip(revealed.data, 0.0, 1.0)), out / path.name)
        count += 1
    _copy_manifest(source, out)
    console.print(f"[green]Revealed {count} images into {out}[/green]")


@cli.command(name="decode-data")
@click.argument('images_dir', type=click.Path(exists=True, file_okay=False))
@click.option('--schema', 'schema_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--manifest', 'manifest_path', type=click.Path(exists=True, dir_okay=False),
              help='Manifest CSV (default: IMAGES_DIR/manifest.csv)')
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True, help='Reconstructed CSV')
@click.pass_context
@handle_errors
def decode_data(ctx, images_dir, schema_path, manifest_path, out):
    """Decode secret or revealed images back into CSV records"""
    source = Path(images_dir)
    manifest = Path(manifest_path) if manifest_path else source / MANIFEST_NAME
    if not manifest.is_file():
        raise ConfigError(f"manifest not found: {manifest}")
    schema = load_schema(schema_path)
    entries = read_manifest(manifest)

    decoded = {}
    for filename, group in group_by_image(entries).items():
        image = load_png(source / filename)
        if image.channels != 1:
            raise ImageFormatError(f"{filename}: expected a single-channel image")
        for entry in group:
            if entry.payload_dims != schema.total_dims:
                raise SchemaError(
                    f"{filename}: manifest D={entry.payload_dims} does not match schema D={schema.total_dims}"
                )
            bits = unpack_bits(image.pixels, entry.payload_dims, entry.bit_offset)
            decoded[entry.record_index] = decode_bits(schema, bits)

    write_csv([decoded[i] for i in sorted(decoded)], out, schema.names)
    console.print(f"[green]Decoded {len(decoded)} records into {out}[/green]")


@cli.command()
@click.option('--backend', type=click.Choice(['model', 'identity']), default='model', show_default=True,
              help='Trained model or the identity oracle')
@click.option('--checkpoint', type=click.Path(), help='Trained checkpoint (model backend)')
@click.option('--secrets-dir', type=click.Path(), help='Secret PNG directory')
@click.option('--covers-dir', type=click.Path(), help='Cover PNG directory')
@click.option('--out', '-o', type=click.Path(dir_okay=False), help='Metrics CSV (default: metrics_csv)')
@click.option('--progress/--no-progress', default=False, help='Show a progress bar')
@click.pass_context
@handle_errors
def evaluate(ctx, backend, checkpoint, secrets_dir, covers_dir, out, progress):
    """Report PSNR, SSIM, BACC, BPP and losses over freshly drawn pairs"""
    config = _config(
        ctx, checkpoint=checkpoint, secrets_dir=secrets_dir, covers_dir=covers_dir, metrics_csv=out
    )
    secrets_path = _require_dir(config.secrets_dir, "secrets_dir")
    covers_path = _require_dir(config.covers_dir, "covers_dir")
    if backend == "model":
        model = load_checkpoint(_require_file(config.checkpoint, "checkpoint")).model
        network, stego = model.config, model
    else:
        network, stego = config.network_config(), IdentityBackend()

    secrets, payload_dims = _load_secrets(secrets_path, network)
    covers = _load_covers(covers_path, config, network)
    sampler = PairSampler(secrets, covers, config.seed + EVAL_SEED_OFFSET, payload_dims)
    report = evaluate_pairs(
        stego,
        config.eval_pairs,
        sampler,
        delta=config.delta,
        weights=LossWeights(config.alpha, config.beta),
        psnr_mode=config.psnr(),
        progress=progress,
    )
    if config.metrics_csv:
        write_metrics_csv([report], config.metrics_csv)

    console.print(_report_table(f"Evaluation over {report.n_pairs} pairs", [(backend, report)]))
    console.print(f"PSNR: {_format_db(report.psnr_db)}  SSIM: {report.ssim:.6f}  BACC: {report.bacc:.6f}")


@cli.command()
@click.option('--secrets-dir', type=click.Path(), help='Secret PNG directory')
@click.option('--covers-dir', type=click.Path(), help='Cover PNG directory')
@click.option('--out', '-o', type=click.Path(dir_okay=False), help='Sweep CSV (default: metrics_csv)')
@click.option('--progress/--no-progress', default=False, help='Show progress bars')
@click.pass_context
@handle_errors
def sweep(ctx, secrets_dir, covers_dir, out, progress):
    """Train and evaluate one model per alpha (and per seed in sweep_seeds)"""
    config = _config(ctx, secrets_dir=secrets_dir, covers_dir=covers_dir, metrics_csv=out)
    secrets_path = _require_dir(config.secrets_dir, "secrets_dir")
    covers_path = _require_dir(config.covers_dir, "covers_dir")
    if not config.metrics_csv:
        raise ConfigError("metrics_csv is not set (use --out or the config file)")

    network = config.network_config()
    secrets, payload_dims = _load_secrets(secrets_path, network)
    covers = _load_covers(covers_path, config, network)
    results = alpha_sweep(
        config.training_config(),
        network,
        config.alphas,
        lambda seed: PairSampler(secrets, covers, seed, payload_dims),
        lambda seed: PairSampler(secrets, covers, seed + EVAL_SEED_OFFSET, payload_dims),
        seeds=config.sweep_seeds or None,
        eval_pairs=config.eval_pairs,
        delta=config.delta,
        psnr_mode=config.psnr(),
        progress=progress,
    )
    write_sweep_csv(results, config.metrics_csv)
    console.print(_report_table("Alpha sweep", [(f"alpha={r.alpha:g}", r.report) for r in results]))
    console.print(f"[green]Sweep saved to {config.metrics_csv}[/green]")


@cli.group()
def lsb():
    """n-bit least-significant-bit baseline"""


@lsb.command(name="embed")
@click.argument('cover_path', type=click.Path(exists=True, dir_okay=False))
@click.argument('payload_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True, help='Container PNG')
@click.option('--bits', '-n', type=int, help='Bits replaced per byte (default: lsb_bits)')
@click.pass_context
@handle_errors
def lsb_embed_cmd(ctx, cover_path, payload_path, out, bits):
    """Embed a payload file into the low bits of a cover PNG"""
    config = _config(ctx)
    lsb_config = LsbConfig(bits or config.lsb_bits)
    cover = load_png(cover_path).to_uint8()
    payload = bytes_to_bits(Path(payload_path).read_bytes())
    container = lsb_embed(cover, payload, lsb_config)
    save_png(RasterImage.from_uint8(container), out)

    quality = psnr(cover.astype(np.float64), container.astype(np.float64), config.psnr(), data_range=255.0)
    console.print(
        f"[green]Embedded {payload.size} of {capacity(cover, lsb_config)} bits into {out} "
        f"(PSNR {_format_db(quality)} dB)[/green]"
    )


@lsb.command(name="extract")
@click.argument('container_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--length', type=int, required=True, help='Payload length in bytes')
@click.option('--out', '-o', type=click.Path(dir_okay=False), required=True, help='Payload file to write')
@click.option('--bits', '-n', type=int, help='Bits replaced per byte (default: lsb_bits)')
@click.pass_context
@handle_errors
def lsb_extract_cmd(ctx, container_path, length, out, bits):
    """Extract a payload of the given length from a container PNG"""
    config = _config(ctx)
    lsb_config = LsbConfig(bits or config.lsb_bits)
    container = load_png(container_path).to_uint8()
    payload = lsb_extract(container, length * 8, lsb_config)
    Path(out).write_bytes(bits_to_bytes(payload))
    console.print(f"[green]Extracted {length} bytes into {out}[/green]")


if __name__ == '__main__':
    cli()
