"""Dilated causal CNN encoder producing per-timestamp representations.

Pipeline per series: affine input projection -> optional timestamp masking
-> ``depth`` residual blocks (conv -> GELU -> conv, dilation 2**i, identity
skip) -> 1x1 output head. Every convolution is causal, so the representation
at t never sees observations after t.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from . import numerics as nx
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigurationError, DataError, DimensionError
from .numerics import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dim: int = 64
    output_dim: int = 320
    depth: int = 10
    kernel_width: int = 3
    mask_prob: float = 0.5

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim", "depth", "kernel_width"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ConfigurationError(f"mask_prob must lie in [0, 1], got {self.mask_prob}")

    @property
    def receptive_field(self) -> int:
        # two convs per block, each widening the field by (K-1)*dilation
        return 1 + 2 * (self.kernel_width - 1) * sum(2 ** i for i in range(self.depth))


@dataclass
class BlockParams:
    conv1_kernel: np.ndarray
    conv1_bias: np.ndarray
    conv2_kernel: np.ndarray
    conv2_bias: np.ndarray


@dataclass
class EncoderParams:
    proj_weight: np.ndarray
    proj_bias: np.ndarray
    blocks: list[BlockParams] = field(default_factory=list)
    head_kernel: np.ndarray | None = None

    @classmethod
    def init(cls, config: EncoderConfig, seed=0) -> "EncoderParams":
        """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        rng = np.random.default_rng(seed)

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        h, k = config.hidden_dim, config.kernel_width
        proj_weight = uniform((h, config.input_dim), config.input_dim)
        proj_bias = uniform((h,), config.input_dim)
        blocks = []
        for _ in range(config.depth):
            blocks.append(BlockParams(
                conv1_kernel=uniform((h, h, k), h * k),
                conv1_bias=uniform((h,), h * k),
                conv2_kernel=uniform((h, h, k), h * k),
                conv2_bias=uniform((h,), h * k),
            ))
        head = uniform((config.output_dim, h, 1), h)
        return cls(proj_weight, proj_bias, blocks, head)

    def named(self) -> dict[str, np.ndarray]:
        out = {"proj_weight": self.proj_weight, "proj_bias": self.proj_bias}
        for i, b in enumerate(self.blocks):
            for key, value in asdict(b).items():
                out[f"blocks.{i}.{key}"] = value
        out["head_kernel"] = self.head_kernel
        return out

    @classmethod
    def from_named(cls, named: Mapping[str, np.ndarray]) -> "EncoderParams":
        depth = len({k.split(".")[1] for k in named if k.startswith("blocks.")})
        blocks = [
            BlockParams(*(np.asarray(named[f"blocks.{i}.{key}"], dtype=np.float64)
                          for key in ("conv1_kernel", "conv1_bias", "conv2_kernel", "conv2_bias")))
            for i in range(depth)
        ]
        return cls(np.asarray(named["proj_weight"], dtype=np.float64),
                   np.asarray(named["proj_bias"], dtype=np.float64),
                   blocks,
                   np.asarray(named["head_kernel"], dtype=np.float64))

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.named().values())


def _tensors(params) -> dict[str, Tensor]:
    if isinstance(params, EncoderParams):
        return {k: Tensor(v) for k, v in params.named().items()}
    return {k: nx.as_tensor(v) for k, v in params.items()}


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def project_input(x, params) -> Tensor:
    """Per-timestamp affine map, [..., D, T] -> [..., hidden, T]."""
    p = _tensors(params) if isinstance(params, EncoderParams) else params
    x = nx.as_tensor(x)
    w, b = nx.as_tensor(p["proj_weight"]), nx.as_tensor(p["proj_bias"])
    if x.ndim < 2 or x.shape[-2] != w.shape[1]:
        raise DimensionError(f"input has shape {x.shape}, projection expects {w.shape[1]} channels")
    return w @ x + b.reshape(-1, 1)


def mask_timestamps(latent, mask_prob: float, rng_seed=None) -> tuple[Tensor, np.ndarray]:
    """Zero whole timestamps of ``latent`` [..., C, T] with i.i.d. Bernoulli(mask_prob).

    Returns the masked tensor and the boolean mask of shape [..., T]
    (True where a column was zeroed).
    """
    latent = nx.as_tensor(latent)
    shape = latent.shape[:-2] + latent.shape[-1:]
    mask = _rng(rng_seed).random(shape) < mask_prob
    keep = (~mask).astype(np.float64)[..., None, :]
    return latent * keep, mask


def _forward(x: Tensor, p: Mapping[str, Tensor], config: EncoderConfig, training: bool, rng) -> tuple[Tensor, np.ndarray | None]:
    if x.shape[-1] < 1:
        raise DataError("cannot encode an empty series")
    h = project_input(x, p)
    mask = None
    if training:
        h, mask = mask_timestamps(h, config.mask_prob, rng)
    for i in range(config.depth):
        d = 2 ** i
        y = nx.conv1d_dilated(h, p[f"blocks.{i}.conv1_kernel"], d, True, p[f"blocks.{i}.conv1_bias"])
        y = nx.gelu(y)
        y = nx.conv1d_dilated(y, p[f"blocks.{i}.conv2_kernel"], d, True, p[f"blocks.{i}.conv2_bias"])
        h = h + y
    head = p["head_kernel"]
    out = head[:, :, 0] @ h
    return out, mask


def encode(x, params, config: EncoderConfig, training: bool = False, rng_seed=None,
           return_mask: bool = False):
    """Encode [D, T] (or batched [B, D, T]) into [output_dim, T] representations.

    ``params`` is an :class:`EncoderParams` or a mapping of name -> Tensor
    (the latter lets a training step pass watched tensors). Masking happens
    only when ``training`` is true.
    """
    p = _tensors(params) if isinstance(params, EncoderParams) else params
    out, mask = _forward(nx.as_tensor(x), p, config, training, _rng(rng_seed) if training else None)
    return (out, mask) if return_mask else out


def encode_causal_padded(series, params, config: EncoderConfig, pad: int = 200) -> np.ndarray:
    """Inference encoding with ``pad`` zero timesteps prepended then dropped."""
    if pad < 0:
        raise ConfigurationError("pad must be >= 0")
    x = np.asarray(series.data if isinstance(series, Tensor) else series, dtype=np.float64)
    widths = [(0, 0)] * (x.ndim - 1) + [(pad, 0)]
    out = encode(np.pad(x, widths), params, config, training=False)
    return out.data[..., pad:].copy()


def save_checkpoint(path, params: EncoderParams, config: EncoderConfig, meta: dict | None = None):
    full = {"encoder_config": asdict(config)}
    full.update(meta or {})
    return save_tensors(path, params.named(), full, kind="encoder")


def load_checkpoint(path) -> tuple[EncoderParams, EncoderConfig, dict]:
    tensors, meta, kind = load_tensors(path)
    if kind != "encoder":
        raise DataError(f"{path} holds a {kind!r} container, not an encoder")
    config = EncoderConfig(**meta["encoder_config"])
    return EncoderParams.from_named(tensors), config, meta
