"""Bridge command line: ``bridge serve --model ID --addr HOST:PORT``."""

import sys

import click

from .models import EchoModel, ModelError, load_model
from .server import serve


@click.group()
def main():
    """Denoiser bridge server."""


def _parse_shape(text):
    try:
        h, w, c = (int(p) for p in text.lower().split("x"))
        return (h, w, c)
    except ValueError:
        raise click.BadParameter(f"shape must be HxWxC, got {text!r}")


@main.command("serve")
@click.option("--model", "model_id", default=None,
              help="Model identifier: echo or diffusers:<repo-or-path>.")
@click.option("--addr", default="127.0.0.1:8765", show_default=True,
              help="HOST:PORT to listen on.")
@click.option("--echo-mode", is_flag=True,
              help="Serve the weight-free echo backend (CI mode).")
@click.option("--shape", default="16x16x1", show_default=True,
              help="Grid shape HxWxC for echo mode.")
@click.option("--steps", default=50, show_default=True,
              help="Declared step count for echo mode.")
def serve_cmd(model_id, addr, echo_mode, shape, steps):
    """Listen for engine connections and answer denoise requests."""
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter(f"addr must be HOST:PORT, got {addr!r}")
    if echo_mode:
        model = EchoModel(shape=_parse_shape(shape), steps=steps)
    elif model_id:
        try:
            model = load_model(model_id, steps=steps, shape=_parse_shape(shape))
        except ModelError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    else:
        click.echo("error: pass --model ID or --echo-mode", err=True)
        sys.exit(2)
    click.echo(
        f"serving {type(model).__name__} on {host}:{port} "
        f"(shape {model.grid_shape}, steps {model.steps})",
        err=True,
    )
    serve(model, host, int(port))


if __name__ == "__main__":
    main()
