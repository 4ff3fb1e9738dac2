"""Contrastive, reconstruction and combined training losses.

Representation pairs are laid out as [B, T, C]: B instances, T timestamps of
the overlap between the two augmented views, C channels. Every loss takes
and returns :class:`~tsvforge.numerics.Tensor` values so it can sit inside a
gradient tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .errors import ConfigurationError, ContractViolation, DimensionError
from .numerics import Tensor

# symmetric bound for the optional dot-product clamp; the log-sum-exp is
# max-shifted, so no clamp is needed to keep exp() finite
DOT_CLAMP = 50.0


@dataclass
class ViewPair:
    r: Tensor
    r_prime: Tensor

    def __post_init__(self):
        self.r = nx.as_tensor(self.r)
        self.r_prime = nx.as_tensor(self.r_prime)
        if self.r.shape != self.r_prime.shape or self.r.ndim != 3:
            raise DimensionError(f"view shapes differ or are not [B, T, C]: {self.r.shape} vs {self.r_prime.shape}")
        if self.r.shape[0] < 1:
            raise ContractViolation("a view pair needs at least one instance")
        if self.r.shape[1] < 1:
            raise ContractViolation("the views do not overlap (T_overlap = 0)")

    @property
    def batch(self) -> int:
        return self.r.shape[0]

    @property
    def length(self) -> int:
        return self.r.shape[1]


@dataclass(frozen=True)
class MsmConfig:
    lambda_max: float = 0.5
    warmup_fraction: float = 0.5
    decoder_dims: tuple[int, ...] = (128, 64)

    def __post_init__(self):
        if not 0.0 <= self.lambda_max <= 1.0:
            raise ConfigurationError("lambda_max must lie in [0, 1]")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigurationError("warmup_fraction must lie in [0, 1]")


def _l2_normalize(r: Tensor) -> Tensor:
    norm = nx.sqrt((r * r).sum(axis=-1, keepdims=True) + 1e-12)
    return r / norm


def _contrast_rows(a: Tensor, b: Tensor, clamp: float | None = None) -> Tensor:
    """Per-anchor InfoNCE over the second axis of [G, N, C] inputs.

    For anchor n in group g the positive is b[g, n]; the candidates are every
    b[g, m] plus every a[g, m] with m != n. Returns the [G, N] losses.
    """
    n = a.shape[1]
    cross = a @ b.swapaxes(1, 2)
    own = a @ a.swapaxes(1, 2)
    if clamp is not None:
        cross, own = nx.clip(cross, -clamp, clamp), nx.clip(own, -clamp, clamp)
    own = own + np.where(np.eye(n, dtype=bool), -np.inf, 0.0)
    logits = nx.concat([cross, own], axis=-1)
    return nx.logsumexp(logits, axis=-1) - nx.diagonal(cross)


def _prepare(pair: ViewPair, normalize: bool) -> tuple[Tensor, Tensor]:
    r, rp = pair.r, pair.r_prime
    if normalize:
        r, rp = _l2_normalize(r), _l2_normalize(rp)
    return r, rp


def temporal_loss(pair: ViewPair, normalize: bool = False, clamp: float | None = None) -> Tensor:
    """Negatives are the other timestamps of the same instance."""
    r, rp = _prepare(pair, normalize)
    return _contrast_rows(r, rp, clamp).mean()


def instance_loss(pair: ViewPair, normalize: bool = False, clamp: float | None = None) -> Tensor:
    """Negatives are the other instances at the same timestamp."""
    r, rp = _prepare(pair, normalize)
    return _contrast_rows(r.swapaxes(0, 1), rp.swapaxes(0, 1), clamp).mean()


def dual_loss(pair: ViewPair, normalize: bool = False, clamp: float | None = None) -> Tensor:
    return temporal_loss(pair, normalize, clamp) + instance_loss(pair, normalize, clamp)


def _pool_time(r: Tensor) -> Tensor:
    # [B, T, C] -> [B, ceil(T/2), C]
    return nx.maxpool1d_time(r.swapaxes(1, 2), 2).swapaxes(1, 2)


def hierarchical_levels(T: int) -> int:
    """Number of resolutions visited for an overlap of length T."""
    levels = 1
    while T > 1:
        T = -(-T // 2)
        levels += 1
    return levels


def hierarchical_loss(pair: ViewPair, normalize: bool = False, clamp: float | None = None) -> Tensor:
    """Dual loss averaged over successively max-pooled resolutions.

    Levels with T > 1 contribute the dual loss; the final T = 1 level
    contributes the instance loss alone.
    """
    r, rp = pair.r, pair.r_prime
    total = None
    levels = 0
    while r.shape[1] > 1:
        term = dual_loss(ViewPair(r, rp), normalize, clamp)
        total = term if total is None else total + term
        levels += 1
        r, rp = _pool_time(r), _pool_time(rp)
    term = instance_loss(ViewPair(r, rp), normalize, clamp)
    total = term if total is None else total + term
    levels += 1
    return total * (1.0 / levels)


def msm_loss(x_original, reconstruction, mask) -> Tensor:
    """Mean squared error over masked timestamps only.

    ``x_original`` and ``reconstruction`` are [..., D, T]; ``mask`` is a
    boolean [..., T]. An empty mask gives 0.
    """
    x = nx.as_tensor(x_original)
    rec = nx.as_tensor(reconstruction)
    if x.shape != rec.shape:
        raise DimensionError(f"reconstruction shape {rec.shape} != original {x.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[:-2] + x.shape[-1:]:
        raise DimensionError(f"mask shape {mask.shape} does not match series {x.shape}")
    count = int(mask.sum())
    if count == 0:
        return Tensor(0.0)
    weight = mask.astype(np.float64)[..., None, :]
    diff = rec - x
    return (diff * diff * weight).sum() * (1.0 / (count * x.shape[-2]))


def combined_loss(contrastive, msm, lambda_t: float) -> Tensor:
    if not 0.0 <= lambda_t <= 1.0:
        raise ContractViolation(f"lambda must lie in [0, 1], got {lambda_t}")
    contrastive, msm = nx.as_tensor(contrastive), nx.as_tensor(msm)
    if lambda_t == 0.0:
        return contrastive
    if lambda_t == 1.0:
        return msm
    return contrastive * (1.0 - lambda_t) + msm * lambda_t


def lambda_schedule(iteration: int, total_iters: int, cfg: MsmConfig) -> float:
    """Linear warm-up from 0 to ``lambda_max``, flat afterwards."""
    if not 0 <= iteration <= total_iters:
        raise ContractViolation(f"iteration {iteration} outside [0, {total_iters}]")
    end = cfg.warmup_fraction * total_iters
    if iteration >= end:
        return cfg.lambda_max
    return cfg.lambda_max * iteration / end
