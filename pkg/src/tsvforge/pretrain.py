"""Self-supervised pretraining of the encoder.

Each step draws ``batch_size`` training windows, cuts two overlapping crops
from every window (shared crop geometry, per-instance time offset), encodes
both crops with independent timestamp masks and minimises the hierarchical
contrastive loss on the overlap. With an :class:`MsmConfig` a small MLP
decoder also reconstructs the masked input timestamps and the two losses are
blended with a warm-up weight.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .encoder import EncoderConfig, EncoderParams, encode, save_checkpoint
from .errors import ConfigurationError, ContractViolation, DataError, DivergenceError
from .numerics import GradTape, Tensor, backward
from .objectives import MsmConfig, ViewPair, combined_loss, hierarchical_loss, lambda_schedule, msm_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PretrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    n_iters: int = 200
    seed: int = 0
    msm: MsmConfig | None = None
    max_train_length: int = 3000
    normalize_reps: bool = False
    dot_clamp: float | None = None

    def __post_init__(self):
        if self.n_iters < 1:
            raise ConfigurationError("n_iters must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.max_train_length < 2:
            raise ConfigurationError("max_train_length must be >= 2")
        if self.lr < 0:
            raise ConfigurationError("lr must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.msm is not None:
            d["msm"]["decoder_dims"] = list(self.msm.decoder_dims)
        return d


class Adam:
    """Adaptive moment estimation over a dict of named numpy arrays."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        updated = {}
        for name, p in params.items():
            g = grads[name]
            m = self.beta1 * self.m.get(name, 0.0) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            updated[name] = p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return updated


def sample_crops(T: int, rng: np.random.Generator) -> tuple[int, int, int, int]:
    """Draw two overlapping crops [a1, b1) and [a2, b2) of a length-T window.

    a1 <= a2 < b1 <= b2. The overlap length is uniform on [1, T]; the
    overlap position and the two outer ends are then uniform given it.
    """
    if T < 2:
        raise ContractViolation(f"need at least 2 timesteps to crop, got {T}")
    length = int(rng.integers(1, T + 1))
    a2 = int(rng.integers(0, T - length + 1))
    b1 = a2 + length
    a1 = int(rng.integers(0, a2 + 1))
    b2 = int(rng.integers(b1, T + 1))
    return a1, b1, a2, b2


def make_windows(train_values: np.ndarray, max_len: int) -> np.ndarray:
    """Chop a [D, T] training series into equal windows [k, D, w], w <= max_len."""
    D, T = train_values.shape
    if T < 2:
        raise DataError("training split is shorter than 2 timesteps")
    k = -(-T // max_len)
    w = T // k
    return np.stack([train_values[:, i * w:(i + 1) * w] for i in range(k)])


def init_decoder(rep_dim: int, out_dim: int, hidden: tuple[int, ...], seed) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    dims = [rep_dim, *hidden, out_dim]
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        params[f"decoder.{i}.weight"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"decoder.{i}.bias"] = rng.uniform(-bound, bound, size=(fan_out,))
    return params


def decode(reps: Tensor, params) -> Tensor:
    """Per-timestamp MLP, [..., C, T] -> [..., D, T], GELU between layers."""
    n_layers = len(params) // 2
    h = reps
    for i in range(n_layers):
        h = params[f"decoder.{i}.weight"] @ h + nx.as_tensor(params[f"decoder.{i}.bias"]).reshape(-1, 1)
        if i < n_layers - 1:
            h = nx.gelu(h)
    return h


@dataclass
class StepRecord:
    step: int
    loss: float
    lam: float

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "loss": self.loss, "lambda": self.lam})


class Pretrainer:
    """Owns encoder (and optional decoder) parameters plus optimizer state.

    All randomness comes from ``config.seed``: initialisation, window
    sampling, crops and masks use separate child streams so enabling the
    reconstruction branch does not perturb the contrastive trajectory.
    """

    def __init__(self, encoder_config: EncoderConfig, config: PretrainConfig, params: EncoderParams | None = None):
        self.encoder_config = encoder_config
        self.config = config
        init_seq, dec_seq, sample_seq = np.random.SeedSequence(config.seed).spawn(3)
        enc = params if params is not None else EncoderParams.init(encoder_config, init_seq)
        self.params: dict[str, np.ndarray] = dict(enc.named())
        if config.msm is not None:
            self.params.update(init_decoder(encoder_config.output_dim, encoder_config.input_dim,
                                            tuple(config.msm.decoder_dims), dec_seq))
        self.rng = np.random.default_rng(sample_seq)
        self.optimizer = Adam(config.lr)
        self.step_count = 0
        self.history: list[StepRecord] = []

    @property
    def encoder_params(self) -> EncoderParams:
        return EncoderParams.from_named({k: v for k, v in self.params.items() if not k.startswith("decoder.")})

    def lambda_at(self, step: int) -> float:
        if self.config.msm is None:
            return 0.0
        return lambda_schedule(step, self.config.n_iters, self.config.msm)

    def train_step(self, batch: np.ndarray, lambda_t: float | None = None) -> float:
        """One optimizer step on a [B, D, L] batch; returns the loss."""
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 3:
            raise ContractViolation(f"batch must be [B, D, L], got {batch.shape}")
        if lambda_t is None:
            lambda_t = self.lambda_at(self.step_count)
        rng = self.rng
        B, _, L = batch.shape
        a1, b1, a2, b2 = sample_crops(L, rng)
        offsets = rng.integers(-a1, L - b2 + 1, size=B)
        view1 = _gather(batch, offsets, a1, b1)
        view2 = _gather(batch, offsets, a2, b2)

        with GradTape() as tape:
            p = {name: tape.watch(Tensor(value), name) for name, value in self.params.items()}
            out1, mask1 = encode(view1, p, self.encoder_config, training=True, rng_seed=rng, return_mask=True)
            out2, mask2 = encode(view2, p, self.encoder_config, training=True, rng_seed=rng, return_mask=True)
            overlap = b1 - a2
            r1 = out1[:, :, a2 - a1:].swapaxes(1, 2)
            r2 = out2[:, :, :overlap].swapaxes(1, 2)
            loss = hierarchical_loss(ViewPair(r1, r2), self.config.normalize_reps, self.config.dot_clamp)
            if self.config.msm is not None:
                dec = {k: v for k, v in p.items() if k.startswith("decoder.")}
                rec_loss = (msm_loss(view1, decode(out1, dec), mask1)
                            + msm_loss(view2, decode(out2, dec), mask2)) * 0.5
                loss = combined_loss(loss, rec_loss, lambda_t)

        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"non-finite loss {value} at step {self.step_count}")
        grads = backward(tape, loss)
        self.params = self.optimizer.step(self.params, {k: g.data for k, g in grads.items()})
        self.history.append(StepRecord(self.step_count, value, float(lambda_t)))
        self.step_count += 1
        return value

    def fit(self, train_values: np.ndarray, n_iters: int | None = None, log_path=None) -> EncoderParams:
        windows = make_windows(np.asarray(train_values, dtype=np.float64), self.config.max_train_length)
        n_iters = self.config.n_iters if n_iters is None else n_iters
        fh = open(log_path, "w") if log_path else None
        try:
            for _ in range(n_iters):
                idx = self.rng.integers(0, len(windows), size=self.config.batch_size)
                loss = self.train_step(windows[idx])
                if fh:
                    fh.write(self.history[-1].to_json() + "\n")
                if self.step_count % 50 == 0:
                    log.info("step %d loss %.5f", self.step_count, loss)
        finally:
            if fh:
                fh.close()
        return self.encoder_params


def _gather(batch: np.ndarray, offsets: np.ndarray, start: int, stop: int) -> np.ndarray:
    idx = offsets[:, None] + np.arange(start, stop)[None, :]
    return np.take_along_axis(batch, idx[:, None, :], axis=2)


def pretrain(dataset, config: PretrainConfig, encoder_config: EncoderConfig | None = None,
             checkpoint_path=None, log_path=None) -> EncoderParams:
    """Train an encoder on the training split of ``dataset`` and return its parameters.

    ``dataset`` may be a SeriesDataset (only rows before ``train_end`` are
    read) or a plain [D, T] array of training values.
    """
    train = dataset.train_values() if hasattr(dataset, "train_values") else np.asarray(dataset, dtype=np.float64)
    if encoder_config is None:
        encoder_config = EncoderConfig(input_dim=train.shape[0])
    trainer = Pretrainer(encoder_config, config)
    params = trainer.fit(train, log_path=log_path)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, params, encoder_config,
                        {"pretrain_config": config.to_dict(), "steps": trainer.step_count})
    return params
