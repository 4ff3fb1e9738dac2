"""Dual-head forecaster with per-horizon validation-selected blend weights.

For each horizon two ridge heads are fit on the training split: head A on
the representation alone, head B on the representation plus the daily
sine/cosine pair of the anchor timestamp. The blend weight pair is chosen
from a fixed 17-point grid by sqrt(MSE) + MAE on the validation split and
then applied to the test split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import SeriesDataset
from .encoder import EncoderConfig, EncoderParams, encode_causal_padded
from .errors import ConfigurationError, ContractViolation, DimensionError
from .features import TimeIndex, build_forecast_examples, time_features
from .heads import ALPHA_GRID, RidgeHead, alpha_search
from .pretrain import PretrainConfig, pretrain

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightGrid:
    """Candidate (w1, w2) pairs, w1 running 0.90 down to 0.10 in steps of 0.05."""

    candidates: tuple[tuple[float, float], ...] = tuple(
        ((18 - k) / 20, (2 + k) / 20) for k in range(17)
    )


DEFAULT_GRID = WeightGrid()


def val_objective(pred, truth) -> float:
    """sqrt(MSE) + MAE over every entry."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} vs truth {truth.shape}")
    if pred.size == 0:
        raise ContractViolation("cannot score empty predictions")
    err = pred - truth
    return float(np.sqrt(np.mean(err * err)) + np.mean(np.abs(err)))


def blend(pred_a, pred_b, w1: float) -> np.ndarray:
    """w1 * A + (1 - w1) * B, written so that A == B returns B bit-for-bit."""
    pred_a = np.asarray(pred_a, dtype=np.float64)
    pred_b = np.asarray(pred_b, dtype=np.float64)
    return pred_b + w1 * (pred_a - pred_b)


def select_weights(pred_a_val, pred_b_val, truth_val, grid: WeightGrid = DEFAULT_GRID) -> tuple[float, float, float]:
    """Exhaustive grid search; ties keep the earlier (larger w1) candidate."""
    best = None
    for w1, w2 in grid.candidates:
        score = val_objective(blend(pred_a_val, pred_b_val, w1), truth_val)
        if best is None or score < best[2]:
            best = (w1, w2, score)
    return best


@dataclass
class HorizonModel:
    horizon: int
    head_a: RidgeHead
    head_b: RidgeHead
    weights: tuple[float, float]
    val_score: float
    baseline_val_score: float = float("nan")


@dataclass
class EnsembleModel:
    horizons: dict[int, HorizonModel] = field(default_factory=dict)

    def __getitem__(self, h: int) -> HorizonModel:
        try:
            return self.horizons[h]
        except KeyError:
            raise KeyError(f"horizon {h} has not been fitted") from None


def ensemble_forecast(model: EnsembleModel, reps_test, time_test, horizon: int,
                      weights: tuple[float, float] | None = None) -> np.ndarray:
    """Blend head predictions at each anchor.

    ``reps_test`` is [C, n] (one representation column per anchor) and
    ``time_test`` the matching TimeIndex, hours, or precomputed [n, 2] features.
    """
    hm = model[horizon]
    X = np.asarray(reps_test, dtype=np.float64).T
    tf = time_test if isinstance(time_test, np.ndarray) and time_test.ndim == 2 else time_features(time_test)
    pa = hm.head_a.predict(X)
    pb = hm.head_b.predict(np.hstack([X, tf[:X.shape[0]]]))
    w1 = hm.weights[0] if weights is None else weights[0]
    return blend(pa, pb, w1)


def fit_horizon(train, val, horizon: int, alpha_grid=ALPHA_GRID, grid: WeightGrid = DEFAULT_GRID) -> HorizonModel:
    """Fit both heads on ``train`` and choose weights on ``val``.

    ``train`` and ``val`` are (orig, enh) pairs of ForecastExamples.
    """
    (tr_a, tr_b), (va_a, va_b) = train, val
    _, head_a = alpha_search(tr_a.X, tr_a.Y, va_a.X, va_a.Y, alpha_grid)
    _, head_b = alpha_search(tr_b.X, tr_b.Y, va_b.X, va_b.Y, alpha_grid)
    pa, pb = head_a.predict(va_a.X), head_b.predict(va_b.X)
    w1, w2, score = select_weights(pa, pb, va_a.Y, grid)
    return HorizonModel(horizon, head_a, head_b, (w1, w2), score, val_objective(pa, va_a.Y))


@dataclass
class HorizonResult:
    horizon: int
    truth: np.ndarray
    ensemble: np.ndarray
    baseline: np.ndarray

    def metrics(self, which: str) -> tuple[float, float]:
        err = getattr(self, which) - self.truth
        return float(np.mean(err * err)), float(np.mean(np.abs(err)))


@dataclass
class PipelineResult:
    model: EnsembleModel
    results: dict[int, HorizonResult]
    encoder_params: EncoderParams
    encoder_config: EncoderConfig

    def rows(self, dataset: str = "series") -> list[dict]:
        out = []
        for h, res in self.results.items():
            hm = self.model[h]
            for method in ("baseline", "ensemble"):
                mse, mae = res.metrics(method)
                out.append({
                    "dataset": dataset, "horizon": h, "method": method, "mse": mse, "mae": mae,
                    "w1": hm.weights[0] if method == "ensemble" else 1.0,
                    "w2": hm.weights[1] if method == "ensemble" else 0.0,
                    "alpha_A": hm.head_a.alpha,
                    "alpha_B": hm.head_b.alpha if method == "ensemble" else None,
                })
        return out


def _examples(reps, targets, tf, seg: slice, horizon: int):
    r, y, t = reps[:, seg], targets[:, seg], tf[seg]
    return build_forecast_examples(r, y, horizon), build_forecast_examples(r, y, horizon, t)


def encode_dataset(dataset: SeriesDataset, params: EncoderParams, config: EncoderConfig, pad: int = 200) -> np.ndarray:
    return encode_causal_padded(dataset.values, params, config, pad)


def run_pipeline(dataset: SeriesDataset, horizons, encoder_params: EncoderParams | None = None,
                 encoder_config: EncoderConfig | None = None, pretrain_config: PretrainConfig | None = None,
                 alpha_grid=ALPHA_GRID, grid: WeightGrid = DEFAULT_GRID, pad: int = 200,
                 reps: np.ndarray | None = None, checkpoint_path=None) -> PipelineResult:
    """Pretrain (unless params are given), encode, then fit/select/forecast per horizon.

    ``dataset`` must already be split and normalised. Targets are every
    column of ``dataset.values`` (so select the univariate target first for
    the univariate protocol).
    """
    horizons = [int(h) for h in horizons]
    if not horizons or min(horizons) < 1:
        raise ConfigurationError("horizons must be a nonempty list of positive ints")
    if encoder_config is None:
        encoder_config = EncoderConfig(input_dim=dataset.D)
    if encoder_params is None:
        encoder_params = pretrain(dataset, pretrain_config or PretrainConfig(), encoder_config,
                                  checkpoint_path=checkpoint_path)
    if reps is None:
        reps = encode_dataset(dataset, encoder_params, encoder_config, pad)
    tf = time_features(TimeIndex.from_timestamps(dataset.timestamps))
    targets = dataset.values
    model = EnsembleModel()
    results = {}
    for h in horizons:
        tr = _examples(reps, targets, tf, dataset.segment("train"), h)
        va = _examples(reps, targets, tf, dataset.segment("val"), h)
        te = _examples(reps, targets, tf, dataset.segment("test"), h)
        hm = fit_horizon(tr, va, h, alpha_grid, grid)
        model.horizons[h] = hm
        pa = hm.head_a.predict(te[0].X)
        pb = hm.head_b.predict(te[1].X)
        results[h] = HorizonResult(h, te[0].Y, blend(pa, pb, hm.weights[0]), pa)
        log.info("h=%d weights=%s alpha_A=%g alpha_B=%g", h, hm.weights, hm.head_a.alpha, hm.head_b.alpha)
    return PipelineResult(model, results, encoder_params, encoder_config)
