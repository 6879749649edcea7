"""Command-line interface.

Subcommands: ``composite`` (paste + guided immersion), ``sweep``
(parameter grids), ``toy-sample`` (oracle-only sampling demo),
``diagnose`` (boundary-energy report across mitigation variants).

Exit codes: 0 ok, 2 input/config error, 3 backend or transport error,
4 internal error. ``XDC_LOG`` selects verbosity: quiet (default), info,
or trace (per-step JSON records on stderr).
"""

import concurrent.futures
import functools
import json
import os
import sys

import click
import numpy as np
from PIL import Image, ImageDraw

from . import grids
from .denoiser import OracleDenoiser, demo_mixture, reference_oracle
from .errors import BackendError, ConfigError, InputError, MaskError, XdcError
from .runconfig import RunConfig, build_run_config, write_sidecar
from .sampler import boundary_energy, run_composite
from .schedule import make_schedule

EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_INTERNAL = 4


def log_level():
    return os.environ.get("XDC_LOG", "quiet").lower()


def info(msg):
    if log_level() in ("info", "trace"):
        click.echo(msg, err=True)


def trace_sink():
    return sys.stderr if log_level() == "trace" else None


def run_guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (InputError, ConfigError, MaskError, FileNotFoundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_INPUT)
        except BackendError as exc:
            click.echo(f"backend error: {exc}", err=True)
            sys.exit(EXIT_BACKEND)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(EXIT_INTERNAL)

    return wrapper


def shared_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--t-in", "t_in", type=float, default=None),
        click.option("--t-out", "t_out", type=float, default=None),
        click.option("--n-in", "n_in", type=int, default=None),
        click.option("--n-out", "n_out", type=int, default=None),
        click.option("--r", "r", type=float, default=None),
        click.option("--u", "u", type=int, default=None),
        click.option("--p-blend", "p_blend", type=int, default=None),
        click.option("--blend-space", "blend_space",
                      type=click.Choice(["xt", "x0"]), default=None),
        click.option("--sampler", "sampler_kind",
                      type=click.Choice(["ddpm", "ddim"]), default=None),
        click.option("--steps", type=int, default=None),
        click.option("--backend", type=click.Choice(["oracle", "bridge"]),
                      default=None),
        click.option("--bridge-addr", "bridge_addr", type=str, default=None),
        click.option("--prompt", type=str, default=None),
        click.option("--workers", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def gather_config(config_path, **overrides):
    return build_run_config(config_path, overrides)


@click.group()
def main():
    """Guided-diffusion compositing tool."""


# ---------------------------------------------------------------------------
# input assembly


def load_inputs(cfg):
    """Resolve (reference grid, mask) from the configured paths.

    With an object image, the object is alpha-composited onto the
    reference first and its footprint becomes the mask (an explicit mask
    file still wins).
    """
    if not cfg.reference:
        raise InputError("config must name a reference image")
    try:
        reference, _ = grids.load_image(cfg.reference)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read reference {cfg.reference}: {exc}")

    mask = None
    if cfg.object:
        try:
            obj, alpha = grids.load_image(cfg.object)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read object {cfg.object}: {exc}")
        if alpha is None:
            alpha = np.ones(obj.shape[:2])
        try:
            reference, mask = grids.paste(
                obj, alpha, reference,
                (cfg.object_row, cfg.object_col), cfg.object_scale,
            )
        except XdcError as exc:
            raise InputError(f"cannot paste object: {exc}")
    if cfg.mask:
        try:
            mask = grids.load_mask(cfg.mask)
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read mask {cfg.mask}: {exc}")
        if mask.shape != reference.shape[:2]:
            raise InputError(
                f"mask {mask.shape} does not match reference {reference.shape[:2]}"
            )
    if mask is None:
        raise InputError("config must provide a mask or an object image")
    return reference, mask


def make_backend(cfg, reference):
    cfg.validate_backend()
    if cfg.backend == "oracle":
        return reference_oracle(
            reference, std=cfg.oracle_std, schedule=make_schedule(cfg.steps)
        )
    from .bridge_client import BridgeDenoiser

    return BridgeDenoiser(cfg.bridge_addr)


def composite_once(cfg, reference, mask, backend):
    guidance = cfg.guidance()
    # Freeze the derived feather width so sidecar re-runs are exact.
    cfg.p_blend = guidance.resolved_p_blend()
    guidance.p_blend = cfg.p_blend
    return run_composite(
        reference, mask, guidance, backend,
        condition=cfg.prompt or None, trace=trace_sink(),
    )


# ---------------------------------------------------------------------------
# commands


@main.command()
@shared_options
@run_guarded
def composite(config_path, **overrides):
    """Paste the object (if any) and immerse it into the reference."""
    cfg = gather_config(config_path, **overrides)
    if not cfg.output:
        raise InputError("config must name an output path")
    reference, mask = load_inputs(cfg)
    backend = make_backend(cfg, reference)
    info(f"composite: {reference.shape} grid, backend={cfg.backend}")
    result = run_composite_with_backend(cfg, reference, mask, backend)
    grids.save_image(cfg.output, result)
    write_sidecar(cfg.output + ".sidecar", cfg, backend.schedule, cfg.output)
    info(f"wrote {cfg.output} (+ sidecar)")


def run_composite_with_backend(cfg, reference, mask, backend):
    try:
        return composite_once(cfg, reference, mask, backend)
    finally:
        close = getattr(backend, "close", None)
        if close:
            close()


@main.command()
@shared_options
@run_guarded
def sweep(config_path, **overrides):
    """Run the cross product of the configured sweep axes, tile the results."""
    cfg = gather_config(config_path, **overrides)
    if not cfg.output:
        raise InputError("config must name an output path")
    axes = [
        (name, list(values))
        for name, values in (
            ("t_in", cfg.sweep_t_in), ("n_in", cfg.sweep_n_in), ("r", cfg.sweep_r),
        )
        if values
    ]
    if not axes:
        raise InputError("sweep needs at least one non-empty sweep_* axis")
    reference, mask = load_inputs(cfg)

    cells = [{}]
    for name, values in axes:
        cells = [dict(cell, **{name: v}) for cell in cells for v in values]
    n_cols = len(axes[-1][1])

    def run_cell(cell):
        local = RunConfig(**{**cfg.__dict__, **cell})
        backend = make_backend(local, reference)
        return run_composite_with_backend(local, reference, mask, backend)

    results = [None] * len(cells)
    errors = {}
    workers = max(1, cfg.workers)
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(run_cell, cell): i for i, cell in enumerate(cells)}
        for future in concurrent.futures.as_completed(futures):
            i = futures[future]
            try:
                results[i] = future.result()
            except Exception as exc:  # cell failures are recorded, not fatal
                errors[i] = str(exc)

    stem = cfg.output.rsplit(".", 1)[0]
    for i, (cell, result) in enumerate(zip(cells, results)):
        label = "_".join(f"{k}{v}" for k, v in cell.items())
        if result is not None:
            grids.save_image(f"{stem}.cell_{i:03d}_{label}.png", result)
        else:
            click.echo(f"cell {i} ({label}) failed: {errors[i]}", err=True)
    tile_grid(cfg.output, cells, results, reference.shape, n_cols)
    info(f"wrote {cfg.output} ({len(cells)} cells, {len(errors)} failed)")


def tile_grid(path, cells, results, grid_shape, n_cols):
    """Annotated contact sheet; parameter text sits in a margin strip."""
    h, w = grid_shape[:2]
    margin = 14
    n_rows = (len(cells) + n_cols - 1) // n_cols
    sheet = Image.new("RGB", (n_cols * w, n_rows * (h + margin)), (32, 32, 32))
    draw = ImageDraw.Draw(sheet)
    for i, (cell, result) in enumerate(zip(cells, results)):
        row, col = divmod(i, n_cols)
        x0, y0 = col * w, row * (h + margin)
        label = " ".join(f"{k}={v}" for k, v in cell.items()) or "base"
        if result is None:
            label += " FAILED"
        else:
            raw = np.clip(np.rint((result + 1.0) * 127.5), 0, 255).astype(np.uint8)
            if raw.shape[2] == 1:
                raw = np.repeat(raw, 3, axis=2)
            sheet.paste(Image.fromarray(raw[:, :, :3], mode="RGB"), (x0, y0 + margin))
        draw.text((x0 + 2, y0 + 2), label, fill=(255, 255, 64))
    sheet.save(path)


@main.command("toy-sample")
@shared_options
@run_guarded
def toy_sample(config_path, **overrides):
    """Sample the built-in demo mixture with the analytic oracle."""
    cfg = gather_config(config_path, **overrides)
    mixture = demo_mixture()
    backend = OracleDenoiser(mixture=mixture, schedule=make_schedule(cfg.steps))
    h, w, c = backend.grid_shape
    blank = np.zeros((h, w, c))
    nomask = np.zeros((h, w))
    base = cfg.guidance()
    samples = []
    for i in range(cfg.sample_count):
        local = cfg.guidance()
        local.t_in = local.t_out = 0.0  # unguided: plain mixture sampling
        local.r = 0.0
        local.p_blend = 0
        local.seed = base.seed + i
        samples.append(run_composite(blank, nomask, local, backend))

    means = mixture.means
    assign = [
        int(np.argmin([np.sum((s - m) ** 2) for m in means])) for s in samples
    ]
    counts = np.bincount(assign, minlength=len(means))
    click.echo(
        json.dumps({
            "samples": len(samples),
            "component_counts": counts.tolist(),
            "denoiser_calls": backend.calls,
        })
    )
    out = cfg.output or "toy_samples.png"
    n_cols = int(np.ceil(np.sqrt(len(samples))))
    tile_grid(out, [{"seed": base.seed + i} for i in range(len(samples))],
              samples, (h, w, c), n_cols)
    info(f"wrote {out}")


@main.command()
@shared_options
@run_guarded
def diagnose(config_path, **overrides):
    """Boundary-energy report across feathering and blend-space variants."""
    cfg = gather_config(config_path, **overrides)
    reference, mask = load_inputs(cfg)
    default_blend = cfg.guidance().resolved_p_blend()
    for blend_space in ("xt", "x0"):
        for p_blend in (0, default_blend):
            local = RunConfig(**cfg.__dict__)
            local.p_blend = p_blend
            local.blend_space = blend_space
            backend = make_backend(local, reference)
            result = run_composite_with_backend(local, reference, mask, backend)
            energy = boundary_energy(result, mask, band=cfg.band)
            click.echo(
                json.dumps({
                    "p_blend": p_blend,
                    "blend_space": blend_space,
                    "boundary_energy": energy,
                })
            )


if __name__ == "__main__":
    main()
