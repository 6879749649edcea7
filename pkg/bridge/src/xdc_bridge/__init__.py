"""Denoiser bridge: serves a diffusion model behind a binary wire protocol."""

from .models import EchoModel, ModelError, load_model
from .server import BridgeServer, serve

__version__ = "0.1.0"

__all__ = ["BridgeServer", "EchoModel", "ModelError", "load_model", "serve"]
