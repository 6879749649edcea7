"""Model adapters served by the bridge.

An adapter exposes: ``grid_shape`` (latent H, W, C), ``steps``,
``capabilities`` (protocol flag bits), ``denoise(t, scale, remote_cfg,
condition, grid) -> [grid, ...]``, and optionally ``encode``/``decode``.

``EchoModel`` needs no weights and is what CI runs against: denoise
returns the state unchanged, encode/decode are identities. Real
checkpoints load through ``load_model("diffusers:<repo-or-path>")``,
which imports the model stack lazily.
"""

import numpy as np

from .protocol import CAP_CONDITION, CAP_ENCODE_DECODE


class ModelError(Exception):
    """Adapter failure while answering a request."""


class EchoModel:
    """Weight-free test backend: every prediction echoes its input."""

    def __init__(self, shape=(16, 16, 1), steps=50):
        self.grid_shape = tuple(shape)
        self.steps = steps
        self.capabilities = CAP_CONDITION | CAP_ENCODE_DECODE

    def denoise(self, t, scale, remote_cfg, condition, grid):
        if condition and not remote_cfg:
            return [grid, grid]
        return [grid]

    def encode(self, grid):
        return grid

    def decode(self, grid):
        return grid


class StableDiffusionModel:
    """Latent-diffusion checkpoint behind the protocol.

    Loads a diffusers pipeline; the latent geometry and VAE scaling come
    from the checkpoint. Engine steps 1..T map onto the checkpoint's
    training timesteps by linear rescaling. Parity with any particular
    reference sampler spacing is checkpoint-specific; this adapter is the
    manual, weights-required path and is not covered by CI.
    """

    def __init__(self, source, steps=50, device="cpu"):
        try:
            import torch
            from diffusers import AutoencoderKL, UNet2DConditionModel
            from transformers import CLIPTextModel, CLIPTokenizer
        except ImportError as exc:
            raise ModelError(
                "real checkpoints need the optional model stack "
                f"(pip install 'xdc-bridge[models]'): {exc}"
            )
        self._torch = torch
        self.device = device
        self.unet = UNet2DConditionModel.from_pretrained(source, subfolder="unet").to(device)
        self.vae = AutoencoderKL.from_pretrained(source, subfolder="vae").to(device)
        self.tokenizer = CLIPTokenizer.from_pretrained(source, subfolder="tokenizer")
        self.text_encoder = CLIPTextModel.from_pretrained(
            source, subfolder="text_encoder"
        ).to(device)
        self.unet.eval()
        self.vae.eval()
        self.text_encoder.eval()

        sample = self.unet.config.sample_size
        channels = self.unet.config.in_channels
        self.grid_shape = (sample, sample, channels)
        self.steps = steps
        self.train_steps = 1000
        self.vae_scale = getattr(self.vae.config, "scaling_factor", 0.18215)
        self.capabilities = CAP_CONDITION | CAP_ENCODE_DECODE

    def _embed(self, text):
        torch = self._torch
        tokens = self.tokenizer(
            text, padding="max_length", truncation=True,
            max_length=self.tokenizer.model_max_length, return_tensors="pt",
        ).input_ids.to(self.device)
        with torch.no_grad():
            return self.text_encoder(tokens)[0]

    def _unet_eps(self, latents, timestep, embedding):
        torch = self._torch
        with torch.no_grad():
            return self.unet(latents, timestep, encoder_hidden_states=embedding).sample

    def denoise(self, t, scale, remote_cfg, condition, grid):
        torch = self._torch
        # (H, W, C) -> (1, C, H, W)
        latents = torch.as_tensor(
            np.ascontiguousarray(grid.transpose(2, 0, 1)[None]), dtype=torch.float32,
            device=self.device,
        )
        timestep = max(0, min(self.train_steps - 1,
                              int(round(t * self.train_steps / self.steps)) - 1))
        uncond = self._unet_eps(latents, timestep, self._embed(""))
        if not condition:
            grids = [uncond]
        else:
            cond = self._unet_eps(latents, timestep, self._embed(condition))
            if remote_cfg:
                grids = [uncond + scale * (cond - uncond)]
            else:
                grids = [uncond, cond]
        return [g[0].cpu().numpy().transpose(1, 2, 0).astype(np.float64) for g in grids]

    def encode(self, grid):
        torch = self._torch
        pixels = torch.as_tensor(
            np.ascontiguousarray(grid.transpose(2, 0, 1)[None]), dtype=torch.float32,
            device=self.device,
        )
        with torch.no_grad():
            latents = self.vae.encode(pixels).latent_dist.mode() * self.vae_scale
        return latents[0].cpu().numpy().transpose(1, 2, 0).astype(np.float64)

    def decode(self, grid):
        torch = self._torch
        latents = torch.as_tensor(
            np.ascontiguousarray(grid.transpose(2, 0, 1)[None]) / self.vae_scale,
            dtype=torch.float32, device=self.device,
        )
        with torch.no_grad():
            pixels = self.vae.decode(latents).sample
        return pixels[0].cpu().numpy().transpose(1, 2, 0).astype(np.float64)


def load_model(identifier, steps=50, shape=(16, 16, 1)):
    """``echo`` or ``diffusers:<repo-or-path>``."""
    if identifier == "echo":
        return EchoModel(shape=shape, steps=steps)
    if identifier.startswith("diffusers:"):
        return StableDiffusionModel(identifier.split(":", 1)[1], steps=steps)
    raise ModelError(
        f"unknown model identifier {identifier!r}; use 'echo' or 'diffusers:<path>'"
    )
