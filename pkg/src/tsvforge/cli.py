"""Command-line entry point.

Every experiment subcommand takes ``--config FILE`` (JSON with the same keys
as :class:`~tsvforge.harness.ExperimentConfig`) and flags that override
individual keys. Failures exit with the ``exit_code`` of the raised
:class:`~tsvforge.errors.TsvForgeError` subclass.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .checkpoint import save_tensors
from .data import write_csv
from .encoder import EncoderConfig, encode_causal_padded, load_checkpoint
from .ensemble import run_pipeline
from .errors import ConfigurationError, DataError, TsvForgeError
from .pretrain import pretrain

log = logging.getLogger("tsvforge")

SYNTH_KEYS = ("T", "daily_amp", "weekly_amp", "trend", "noise_sd", "seed", "start", "name")


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from None


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file with configuration keys")
    p.add_argument("--seed", type=int, help="random seed (overrides 'seeds')")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_experiment(p: argparse.ArgumentParser):
    _add_common(p)
    p.add_argument("--data", help="ETT-style CSV path")
    p.add_argument("--synthetic", type=_json_arg, help="synthetic series spec as JSON")
    p.add_argument("--mode", choices=("univariate", "multivariate"))
    p.add_argument("--horizons", type=_int_list, help="comma-separated horizons")
    p.add_argument("--method", choices=("baseline", "msm", "hybrid", "ensemble", "all"))
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--split", choices=("months", "ratio"))
    p.add_argument("--ratios", type=_float_list)
    p.add_argument("--pad", type=int)
    p.add_argument("--alpha-grid", dest="alpha_grid", type=_float_list)
    p.add_argument("--encoder", type=_json_arg, help="EncoderConfig overrides as JSON")
    p.add_argument("--pretrain", type=_json_arg, help="PretrainConfig overrides as JSON")
    p.add_argument("--msm", type=_json_arg, help="MsmConfig overrides as JSON")
    p.add_argument("--hybrid", type=_json_arg, help="HybridConfig overrides as JSON")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--checkpoint", help="encoder checkpoint to load instead of pretraining")
    p.add_argument("--n-iters", dest="n_iters", type=int, help="shorthand for pretrain.n_iters")
    p.add_argument("--max-train-length", dest="max_train_length", type=int,
                   help="shorthand for pretrain.max_train_length")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsvforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic hourly series as CSV")
    _add_common(p)
    p.add_argument("--T", type=int)
    p.add_argument("--daily-amp", dest="daily_amp", type=float)
    p.add_argument("--weekly-amp", dest="weekly_amp", type=float)
    p.add_argument("--trend", type=float)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--start")
    p.add_argument("--name")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("pretrain", help="train an encoder on the training split")
    _add_experiment(p)
    p.add_argument("--out", type=Path, help="checkpoint path")
    p.add_argument("--log", type=Path, help="JSON-lines training log path")

    p = sub.add_parser("encode", help="encode a whole series with a trained encoder")
    _add_experiment(p)
    p.add_argument("--out", type=Path, help="representation container path")

    p = sub.add_parser("forecast", help="fit heads, select weights and score the test split")
    _add_experiment(p)

    p = sub.add_parser("ablate", help="run the method comparison and write a report")
    _add_experiment(p)

    p = sub.add_parser("report", help="render or convert a saved JSON report")
    _add_common(p)
    p.add_argument("input", type=Path)
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--out", type=Path)
    return parser


def _read_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return cfg


def experiment_config(args) -> harness.ExperimentConfig:
    """Merge the JSON file with command-line overrides."""
    d = _read_config(args.config)
    for key in ("data", "synthetic", "mode", "horizons", "method", "seeds", "split", "ratios", "pad",
                "alpha_grid", "encoder", "pretrain", "msm", "hybrid", "output_dir", "checkpoint"):
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    if args.data is not None:
        d.pop("synthetic", None)
    elif args.synthetic is not None:
        d.pop("data", None)
    if args.seed is not None:
        d["seeds"] = [args.seed]
    for key in ("n_iters", "max_train_length"):
        value = getattr(args, key, None)
        if value is not None:
            d["pretrain"] = {**d.get("pretrain", {}), key: value}
    return harness.ExperimentConfig.from_dict(d)


def _single_seed(cfg: harness.ExperimentConfig) -> int:
    if len(cfg.seeds) != 1:
        raise ConfigurationError(f"this command runs one seed at a time, got {cfg.seeds}")
    return cfg.seeds[0]


def _output_dir(cfg: harness.ExperimentConfig) -> Path:
    out = Path(cfg.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    d = _read_config(args.config)
    unknown = set(d) - set(SYNTH_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown synth keys {sorted(unknown)}")
    for key in SYNTH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            d[key] = value
    d.setdefault("T", 2000)
    path = write_csv(args.out, harness.synth_series(**d))
    print(path)
    return 0


def cmd_pretrain(args) -> int:
    cfg = experiment_config(args)
    seed = _single_seed(cfg)
    ds = harness.prepare_dataset(cfg)
    enc_cfg = EncoderConfig(**{**cfg.encoder, "input_dim": ds.D})
    out = args.out or _output_dir(cfg) / f"encoder_seed{seed}.ckpt"
    log_path = args.log or Path(out).with_suffix(".jsonl")
    pretrain(ds, cfg.pretrain_config(seed, msm=cfg.method == "msm"), enc_cfg,
             checkpoint_path=out, log_path=log_path)
    print(out)
    return 0


def cmd_encode(args) -> int:
    cfg = experiment_config(args)
    if not cfg.checkpoint:
        raise ConfigurationError("encode needs --checkpoint")
    ds = harness.prepare_dataset(cfg)
    params, enc_cfg, _ = load_checkpoint(cfg.checkpoint)
    reps = encode_causal_padded(ds.values, params, enc_cfg, cfg.pad)
    out = args.out or _output_dir(cfg) / "representations.ckpt"
    save_tensors(out, {"reps": reps}, {"input_hash": ds.source_hash, "pad": cfg.pad,
                                       "splits": list(ds.splits)}, kind="representations")
    print(out)
    return 0


def cmd_forecast(args) -> int:
    cfg = experiment_config(args)
    seed = _single_seed(cfg)
    ds = harness.prepare_dataset(cfg)
    out = _output_dir(cfg)
    params, enc_cfg, ckpt_out = None, EncoderConfig(**{**cfg.encoder, "input_dim": ds.D}), None
    if cfg.checkpoint:
        params, enc_cfg, _ = load_checkpoint(cfg.checkpoint)
    else:
        ckpt_out = out / f"encoder_seed{seed}.ckpt"
    res = run_pipeline(ds, cfg.horizons, encoder_params=params, encoder_config=enc_cfg,
                       pretrain_config=cfg.pretrain_config(seed), alpha_grid=cfg.alpha_grid,
                       pad=cfg.pad, checkpoint_path=ckpt_out)
    for h, hm in res.model.horizons.items():
        hm.head_a.save(out / f"head_A_h{h}.ckpt", {"horizon": h})
        hm.head_b.save(out / f"head_B_h{h}.ckpt", {"horizon": h, "weights": list(hm.weights)})
    rows = [{**r, "seed": seed} for r in res.rows(ds.name)]
    report = harness.build_report(cfg, ds, rows)
    paths = harness.write_report(report, out, "forecast")
    sys.stdout.write(harness.render_table(report))
    log.info("wrote %s", ", ".join(map(str, paths)))
    return 0


def cmd_ablate(args) -> int:
    cfg = experiment_config(args)
    report = harness.run_ablation(cfg)
    paths = harness.write_report(report, _output_dir(cfg), "ablation")
    sys.stdout.write(harness.render_table(report))
    log.info("wrote %s", ", ".join(map(str, paths)))
    return 0


def cmd_report(args) -> int:
    try:
        report = json.loads(args.input.read_text())
    except OSError as exc:
        raise DataError(f"cannot read report {args.input}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.input}: not a JSON report ({exc})") from exc
    if not isinstance(report, dict) or "rows" not in report:
        raise DataError(f"{args.input}: missing 'rows'")
    text = {"table": harness.render_table, "csv": harness.report_csv, "json": harness.report_json}[args.format](report)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"synth": cmd_synth, "pretrain": cmd_pretrain, "encode": cmd_encode,
            "forecast": cmd_forecast, "ablate": cmd_ablate, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except TsvForgeError as exc:
        print(f"tsvforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"tsvforge: I/O error: {exc}", file=sys.stderr)
        return DataError.exit_code
