"""Metrics, synthetic data, the hybrid baseline runner and the ablation harness."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import (SeriesDataset, load_csv, normalize, select_target, split_by_months,
                   split_by_ratio)
from .encoder import EncoderConfig, load_checkpoint
from .ensemble import run_pipeline
from .errors import ConfigurationError, DimensionError, EmptyDatasetError
from .features import (TimeIndex, default_lags, default_roll_windows, hybrid_features,
                       target_windows)
from .heads import ALPHA_GRID, alpha_search, boosted_residual_fit
from .objectives import MsmConfig
from .pretrain import PretrainConfig

log = logging.getLogger(__name__)

METHODS = ("baseline", "msm", "hybrid", "ensemble")
REPORT_FIELDS = ("dataset", "seed", "horizon", "method", "mse", "mae", "w1", "w2", "alpha_A", "alpha_B")
SPACE_NOTE = "errors are computed on z-score normalised values (train-split statistics)"


def _check(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction {pred.shape} vs truth {truth.shape}")
    if pred.size == 0:
        raise EmptyDatasetError("empty prediction")
    return pred - truth


def mse(pred, truth) -> float:
    err = _check(pred, truth)
    return float(np.mean(err * err))


def mae(pred, truth) -> float:
    return float(np.mean(np.abs(_check(pred, truth))))


def synth_series(T: int, daily_amp: float = 1.0, weekly_amp: float = 0.0, trend: float = 0.0,
                 noise_sd: float = 0.0, seed: int = 0, start: str = "2016-07-01T00:00:00",
                 name: str = "synthetic") -> SeriesDataset:
    """Hourly univariate series: trend*t + daily and weekly sines + Gaussian noise."""
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    t = np.arange(T, dtype=np.float64)
    y = trend * t + daily_amp * np.sin(2 * np.pi * t / 24) + weekly_amp * np.sin(2 * np.pi * t / 168)
    if noise_sd:
        y = y + np.random.default_rng(seed).normal(0.0, noise_sd, T)
    stamps = np.datetime64(start, "s") + np.arange(T) * np.timedelta64(3600, "s")
    spec = dict(T=T, daily_amp=daily_amp, weekly_amp=weekly_amp, trend=trend, noise_sd=noise_sd,
                seed=seed, start=start)
    digest = hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()
    return SeriesDataset(stamps, y[None, :], ["OT"], target_mode="univariate", name=name, source_hash=digest)


# ------------------------------------------------------------------ hybrid

@dataclass(frozen=True)
class HybridConfig:
    n_trees: int = 100
    depth: int = 3
    shrinkage: float = 0.1
    lags: tuple[int, ...] | None = None
    roll_windows: tuple[int, ...] | None = None


def _hybrid_examples(F, valid, series, seg: slice, h: int):
    y = target_windows(series[None, seg], h)
    anchors = np.arange(seg.start, seg.start + y.shape[0])
    keep = valid[anchors]
    if not keep.any():
        raise EmptyDatasetError(f"no hybrid examples with enough history in rows {seg.start}:{seg.stop}")
    return F[anchors[keep]], y[keep]


def run_hybrid(dataset: SeriesDataset, horizons, cfg: HybridConfig = HybridConfig(),
               alpha_grid=ALPHA_GRID, target: str = "OT") -> dict[int, dict]:
    """Linear fit on engineered features, then boosted trees on its residuals.

    Only the univariate target column is forecast.
    """
    j = dataset.feature_names.index(target) if target in dataset.feature_names else dataset.D - 1
    series = dataset.values[j]
    step = dataset.step_hours
    lags = cfg.lags or default_lags(step)
    rolls = cfg.roll_windows or default_roll_windows(step)
    F, valid = hybrid_features(series, TimeIndex.from_timestamps(dataset.timestamps), lags, rolls)
    out = {}
    for h in horizons:
        Xtr, Ytr = _hybrid_examples(F, valid, series, dataset.segment("train"), h)
        Xva, Yva = _hybrid_examples(F, valid, series, dataset.segment("val"), h)
        Xte, Yte = _hybrid_examples(F, valid, series, dataset.segment("test"), h)
        alpha, stage1 = alpha_search(Xtr, Ytr, Xva, Yva, alpha_grid)
        model = boosted_residual_fit(Xtr, Ytr, stage1, cfg.n_trees, cfg.depth, cfg.shrinkage)
        out[h] = {"truth": Yte, "pred": model.predict(Xte), "alpha": alpha, "n_trees": len(model.trees)}
    return out


# ------------------------------------------------------------------ experiments

@dataclass
class ExperimentConfig:
    data: str | None = None
    synthetic: dict | None = None
    mode: str = "univariate"
    horizons: list[int] = field(default_factory=lambda: [24, 48, 168, 336, 720])
    method: str = "all"
    seeds: list[int] = field(default_factory=lambda: [0])
    split: str = "months"
    ratios: list[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])
    encoder: dict = field(default_factory=dict)
    pretrain: dict = field(default_factory=dict)
    msm: dict = field(default_factory=dict)
    hybrid: dict = field(default_factory=dict)
    alpha_grid: list[float] = field(default_factory=lambda: list(ALPHA_GRID))
    pad: int = 200
    output_dir: str | None = None
    checkpoint: str | None = None

    def __post_init__(self):
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigurationError("horizons must be nonempty and all >= 1")
        if self.method != "all" and self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.mode not in ("univariate", "multivariate"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.split not in ("months", "ratio"):
            raise ConfigurationError(f"unknown split {self.split!r}")
        if (self.data is None) == (self.synthetic is None):
            raise ConfigurationError("give exactly one of data or synthetic")
        if not self.seeds:
            raise ConfigurationError("seeds must be nonempty")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def methods(self) -> tuple[str, ...]:
        return METHODS if self.method == "all" else (self.method,)

    def pretrain_config(self, seed: int, msm: bool = False) -> PretrainConfig:
        msm_cfg = None
        if msm:
            m = dict(self.msm)
            if "decoder_dims" in m:
                m["decoder_dims"] = tuple(m["decoder_dims"])
            msm_cfg = MsmConfig(**m)
        return PretrainConfig(**{**self.pretrain, "seed": seed, "msm": msm_cfg})


def prepare_dataset(cfg: ExperimentConfig) -> SeriesDataset:
    if cfg.data is not None:
        ds = load_csv(cfg.data)
    else:
        ds = synth_series(**cfg.synthetic)
    ds = select_target(ds, cfg.mode)
    ds = split_by_months(ds) if cfg.split == "months" else split_by_ratio(ds, tuple(cfg.ratios))
    return normalize(ds)


def _row(dataset, seed, h, method, mse_, mae_, w1=None, w2=None, alpha_a=None, alpha_b=None) -> dict:
    return {"dataset": dataset, "seed": seed, "horizon": h, "method": method, "mse": mse_, "mae": mae_,
            "w1": w1, "w2": w2, "alpha_A": alpha_a, "alpha_B": alpha_b}


def run_ablation(cfg: ExperimentConfig, dataset: SeriesDataset | None = None) -> dict:
    """Run the requested methods and assemble a report dict.

    baseline and ensemble share one pretrained encoder per seed; msm
    pretrains its own encoder with the reconstruction branch; hybrid needs
    no encoder.
    """
    ds = dataset if dataset is not None else prepare_dataset(cfg)
    methods = cfg.methods
    enc_cfg = EncoderConfig(**{**cfg.encoder, "input_dim": ds.D})
    rows = []
    for seed in cfg.seeds:
        by_method: dict[str, dict[int, dict]] = {}
        if {"baseline", "ensemble"} & set(methods):
            params, shared_cfg, ckpt_out = None, enc_cfg, None
            if cfg.checkpoint:
                params, shared_cfg, _ = load_checkpoint(cfg.checkpoint)
            elif cfg.output_dir:
                ckpt_out = Path(cfg.output_dir) / f"encoder_seed{seed}.ckpt"
            res = run_pipeline(ds, cfg.horizons, encoder_params=params, encoder_config=shared_cfg,
                               pretrain_config=cfg.pretrain_config(seed), alpha_grid=cfg.alpha_grid,
                               pad=cfg.pad, checkpoint_path=ckpt_out)
            for r in res.rows(ds.name):
                by_method.setdefault(r["method"], {})[r["horizon"]] = r
        if "msm" in methods:
            res = run_pipeline(ds, cfg.horizons, encoder_config=enc_cfg,
                               pretrain_config=cfg.pretrain_config(seed, msm=True),
                               alpha_grid=cfg.alpha_grid, pad=cfg.pad)
            for r in res.rows(ds.name):
                if r["method"] == "baseline":
                    by_method.setdefault("msm", {})[r["horizon"]] = {**r, "method": "msm"}
        if "hybrid" in methods:
            hy = run_hybrid(ds, cfg.horizons, HybridConfig(**cfg.hybrid), cfg.alpha_grid)
            for h, out in hy.items():
                by_method.setdefault("hybrid", {})[h] = _row(
                    ds.name, seed, h, "hybrid", mse(out["pred"], out["truth"]), mae(out["pred"], out["truth"]),
                    alpha_a=out["alpha"])
        for h in cfg.horizons:
            for m in methods:
                r = by_method[m][h]
                rows.append(_row(ds.name, seed, h, m, r["mse"], r["mae"], r.get("w1"), r.get("w2"),
                                 r.get("alpha_A"), r.get("alpha_B")))
    return build_report(cfg, ds, rows)


def build_report(cfg: ExperimentConfig, ds: SeriesDataset, rows: list[dict]) -> dict:
    return {
        "header": {"space": "normalized", "note": SPACE_NOTE},
        "config": cfg.to_dict(),
        "input_hash": ds.source_hash,
        "rows": rows,
        "averages": averages(rows),
    }


def averages(rows: list[dict]) -> list[dict]:
    """Per (dataset, method) arithmetic mean over horizons and seeds."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["dataset"], r["method"]), []).append(r)
    out = []
    for (dataset, method), rs in groups.items():
        out.append({"dataset": dataset, "method": method, "n": len(rs),
                    "mse": float(np.mean([r["mse"] for r in rs])),
                    "mae": float(np.mean([r["mae"] for r in rs]))})
    return out


# ------------------------------------------------------------------ reports

def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# {report['header']['note']}\n")
    buf.write(f"# input_hash={report['input_hash']}\n")
    w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in report["rows"]:
        w.writerow({k: ("" if r.get(k) is None else r[k]) for k in REPORT_FIELDS})
    for a in report["averages"]:
        w.writerow({"dataset": a["dataset"], "horizon": "average", "method": a["method"],
                    "mse": a["mse"], "mae": a["mae"]})
    return buf.getvalue()


def write_report(report: dict, out_dir, stem: str = "report") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, cpath = out / f"{stem}.json", out / f"{stem}.csv"
    jpath.write_text(report_json(report))
    cpath.write_text(report_csv(report))
    return jpath, cpath


def render_table(report: dict) -> str:
    """Plain-text table: one line per (dataset, horizon), MSE/MAE per method."""
    rows = report["rows"]
    methods = [m for m in METHODS if any(r["method"] == m for r in rows)]
    cells: dict[tuple, dict] = {}
    for r in rows:
        cells.setdefault((r["dataset"], r["horizon"]), {}).setdefault(r["method"], []).append(r)
    head = f"{'Dataset':<12}{'H':>6}" + "".join(f"{m:>20}" for m in methods)
    lines = [f"# {report['header']['note']}", head, f"{'':<18}" + "".join(f"{'MSE':>10}{'MAE':>10}" for _ in methods)]
    for (dataset, h), per in cells.items():
        parts = []
        for m in methods:
            rs = per.get(m, [])
            if rs:
                parts.append(f"{np.mean([r['mse'] for r in rs]):>10.3f}{np.mean([r['mae'] for r in rs]):>10.3f}")
            else:
                parts.append(f"{'-':>10}{'-':>10}")
        lines.append(f"{dataset:<12}{h:>6}" + "".join(parts))
    avg = {a["method"]: a for a in report["averages"]}
    lines.append(f"{'Average':<18}" + "".join(
        f"{avg[m]['mse']:>10.3f}{avg[m]['mae']:>10.3f}" if m in avg else f"{'-':>20}" for m in methods))
    return "\n".join(lines) + "\n"
