"""Run configuration: flat key-value files, CLI overrides, sidecars.

A run is fully described by one human-readable file of ``key = value``
lines ('#' starts a comment). The composite command writes a sidecar in
the same format next to each output; feeding the sidecar back through
``--config`` reproduces the run bit-exactly.
"""

import hashlib
from dataclasses import dataclass, fields

from .errors import ConfigError, InputError
from .sampler import GuidanceConfig

_LIST_KEYS = {"sweep_t_in", "sweep_n_in", "sweep_r"}
# Informational sidecar keys, accepted and ignored on load.
_INFO_KEYS = ("schedule_", "output_sha256", "engine_")


@dataclass
class RunConfig:
    # inputs / outputs
    reference: str | None = None
    object: str | None = None
    mask: str | None = None
    output: str | None = None
    object_row: int = 0
    object_col: int = 0
    object_scale: float = 1.0
    # guidance parameters (mirror GuidanceConfig)
    t_in: float = 0.5
    t_out: float = 1.0
    n_in: int = 2
    n_out: int = 1
    r: float = 0.0
    u: int = 4
    p_blend: int | None = None
    blend_space: str = "xt"
    sampler_kind: str = "ddpm"
    seed: int = 0
    guidance_scale: float = 1.0
    # backend
    steps: int = 50
    backend: str = "oracle"
    bridge_addr: str | None = None
    prompt: str | None = None
    oracle_std: float = 0.2
    # tooling
    workers: int = 1
    sample_count: int = 16
    band: int = 4
    sweep_t_in: tuple = ()
    sweep_n_in: tuple = ()
    sweep_r: tuple = ()

    def guidance(self):
        cfg = GuidanceConfig(
            t_in=self.t_in,
            t_out=self.t_out,
            n_in=self.n_in,
            n_out=self.n_out,
            r=self.r,
            u=self.u,
            p_blend=self.p_blend,
            blend_space=self.blend_space,
            sampler_kind=self.sampler_kind,
            seed=self.seed,
            guidance_scale=self.guidance_scale,
        )
        cfg.validate()
        return cfg

    def validate_backend(self):
        if self.backend not in ("oracle", "bridge"):
            raise ConfigError(f"backend must be oracle or bridge, got {self.backend!r}")
        if self.backend == "bridge" and not self.bridge_addr:
            raise ConfigError("bridge backend requires bridge_addr (HOST:PORT)")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")


_FIELD_TYPES = {f.name: f for f in fields(RunConfig)}


def _parse_value(key, raw):
    raw = raw.strip()
    if key in _LIST_KEYS:
        if not raw:
            return ()
        base = float if key != "sweep_n_in" else int
        try:
            return tuple(base(part) for part in raw.split(","))
        except ValueError:
            raise ConfigError(f"cannot parse list value for {key}: {raw!r}")
    if raw.lower() in ("none", ""):
        return None
    target = {
        "object_row": int, "object_col": int, "n_in": int, "n_out": int,
        "u": int, "p_blend": int, "seed": int, "steps": int, "workers": int,
        "sample_count": int, "band": int,
        "t_in": float, "t_out": float, "r": float, "guidance_scale": float,
        "oracle_std": float, "object_scale": float,
    }.get(key, str)
    try:
        return target(raw)
    except ValueError:
        raise ConfigError(f"cannot parse value for {key}: {raw!r}")


def parse_config_text(text, path="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if any(key.startswith(p) for p in _INFO_KEYS):
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}")
    return parse_config_text(text, path=str(path))


def build_run_config(config_path=None, overrides=None):
    """File values first, then non-None CLI overrides on top."""
    values = load_config(config_path) if config_path else {}
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return RunConfig(**values)


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def config_to_text(cfg, extra=None):
    lines = [f"{f.name} = {_format_value(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_sidecar(path, cfg, schedule, output_path):
    """Full effective config plus schedule digest and output hash."""
    extra = {"output_sha256": sha256_file(output_path)}
    text = config_to_text(cfg, extra=extra) + schedule.to_config_text() + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
