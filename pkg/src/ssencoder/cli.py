"""Command-line front end: train, evaluate, simulate, nstep, spectrum, generate.

Runs are driven by a flat key=value config file; any key can be overridden
with the flag of the same name. The resolved configuration is written into
the output directory so a run can be re-executed bit-identically.

Exit codes: 0 success, 1 runtime error, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import metrics
from .data import Dataset, SyntheticSystem, generate, load_csv, save_csv
from .model import ModelFormatError, SSEncoderModel, build_model
from .optim import MODES, PRECISIONS, TrainConfig, refine_full, train


class ConfigError(Exception):
    """Configuration problem; maps to exit code 2."""


def _parse_hidden(text: str) -> tuple:
    text = text.strip()
    if not text or text == "none":
        return ()
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"hidden: expected comma-separated ints, got {text!r}") from None


def _parse_optional_float(text: str):
    return float(text) if text.strip() else None


def _parse_optional_str(text: str):
    text = text.strip()
    return None if text in ("", "auto") else text


# key -> (parser, default, required-for-train)
CONFIG_SCHEMA = {
    "train_file": (str, None, True),
    "val_file": (str, None, True),
    "test_file": (_parse_optional_str, None, False),
    "out_dir": (str, None, True),
    "n_u": (int, 1, False),
    "n_y": (int, 1, False),
    "n_x": (int, None, True),
    "n_a": (int, 50, False),
    "n_b": (int, 50, False),
    "hidden": (_parse_hidden, (15,), False),
    "T": (int, None, True),
    "k0": (int, 0, False),
    "batch_size": (int, 256, False),
    "learning_rate": (float, 1e-3, False),
    "max_epochs": (int, 100, False),
    "seed": (int, 0, False),
    "precision": (str, "f64", False),
    "mode": (str, "encoder-batch", False),
    "final_refine_epochs": (int, 0, False),
    "init_rule": (str, "standard", False),
    "val_init": (_parse_optional_str, None, False),
    "sim_init": (str, "encoder", False),
    "max_seconds": (_parse_optional_float, None, False),
    "sample_period": (_parse_optional_float, None, False),
}


def parse_config_file(path) -> dict:
    """Read a flat key = value file; '#' starts a comment, blank lines ignored."""
    raw = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            raw[key] = value
    return raw


def resolve_config(file_values: dict, overrides: dict) -> dict:
    """Apply defaults, file values and flag overrides; returns typed values."""
    cfg = {}
    for key, (parse, default, _) in CONFIG_SCHEMA.items():
        if overrides.get(key) is not None:
            value = overrides[key]
            cfg[key] = parse(value) if isinstance(value, str) else value
        elif key in file_values:
            try:
                cfg[key] = parse(file_values[key])
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        else:
            cfg[key] = default
    return cfg


def write_config(cfg: dict, path) -> None:
    with open(path, "w") as fh:
        for key in CONFIG_SCHEMA:
            value = cfg[key]
            if value is None:
                text = ""
            elif isinstance(value, tuple):
                text = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            fh.write(f"{key} = {text}\n")


def _require(cfg: dict, keys) -> None:
    for key in keys:
        if cfg.get(key) is None:
            raise ConfigError(f"{key} is required")


def _train_config(cfg: dict) -> TrainConfig:
    tc = TrainConfig(
        n_x=cfg["n_x"], n_a=cfg["n_a"], n_b=cfg["n_b"], T=cfg["T"], k0=cfg["k0"],
        hidden=cfg["hidden"], n_batch=cfg["batch_size"],
        learning_rate=cfg["learning_rate"], max_epochs=cfg["max_epochs"],
        seed=cfg["seed"], precision=cfg["precision"], mode=cfg["mode"],
        final_refine_epochs=cfg["final_refine_epochs"], init_rule=cfg["init_rule"],
        val_init=cfg["val_init"], sim_init=cfg["sim_init"],
        max_seconds=cfg["max_seconds"],
    )
    try:
        tc.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return tc


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {key: getattr(args, key) for key in CONFIG_SCHEMA}
    cfg = resolve_config(file_values, overrides)
    _require(cfg, ("train_file", "val_file", "out_dir", "n_x", "T"))
    tc = _train_config(cfg)

    train_data = load_csv(cfg["train_file"], cfg["n_u"], cfg["n_y"])
    val_data = load_csv(cfg["val_file"], cfg["n_u"], cfg["n_y"])
    model = build_model(cfg["n_x"], cfg["n_u"], cfg["n_y"], cfg["n_a"], cfg["n_b"],
                        hidden=cfg["hidden"], seed=cfg["seed"],
                        init_rule=cfg["init_rule"], dtype=tc.dtype)

    best, log = train(model, train_data, val_data, tc)
    if tc.final_refine_epochs > 0:
        best = refine_full(best, train_data, val_data, tc)

    os.makedirs(cfg["out_dir"], exist_ok=True)
    model_path = os.path.join(cfg["out_dir"], "model.json")
    log_path = os.path.join(cfg["out_dir"], "train_log.csv")
    best.save(model_path)
    log.to_csv(log_path)
    write_config(cfg, os.path.join(cfg["out_dir"], "config.resolved.cfg"))

    print(f"model: {model_path}")
    print(f"log: {log_path}")
    print(f"epochs: {len(log.records)}")
    if log.best_val_nrms is not None:
        print(f"best_val_nrms: {100.0 * log.best_val_nrms:.4f}%")
    if cfg["test_file"]:
        test_data = load_csv(cfg["test_file"], cfg["n_u"], cfg["n_y"])
        report = metrics.evaluate_simulation(best, test_data, init=tc.resolved_val_init())
        print(f"test_nrms: {100.0 * report.nrms:.4f}%")
    return 0


def _load_model_and_data(args):
    model = SSEncoderModel.load(args.model)
    data = load_csv(args.data, model.n_u, model.n_y)
    return model, data


def cmd_evaluate(args) -> int:
    model, data = _load_model_and_data(args)
    report = metrics.evaluate_simulation(model, data, init=args.init)
    print(f"samples: {report.n}")
    print(f"t0: {report.t0}")
    print(f"sigma_y: {repr(report.sigma_y)}")
    print(f"rms: {repr(report.rms)}")
    print(f"nrms: {100.0 * report.nrms:.4f}%")
    if args.nstep is not None:
        curve = metrics.nstep_nrms(model, data, args.nstep)
        _write_nstep_csv(curve, args.nstep_out)
        print(f"nstep_out: {args.nstep_out}")
    if args.spectrum_out:
        yhat = model.simulate(data, init=args.init)
        t0 = data.n_samples - yhat.shape[0]
        freqs, resid_mag, ref_mag = metrics.error_spectrum(
            yhat, data.y[t0:], args.sample_period)
        _write_spectrum_csv(freqs, resid_mag, ref_mag, args.spectrum_out)
        print(f"spectrum_out: {args.spectrum_out}")
    return 0


def cmd_simulate(args) -> int:
    model, data = _load_model_and_data(args)
    yhat = model.simulate(data, init=args.init)
    t0 = data.n_samples - yhat.shape[0]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"yhat{i + 1}" for i in range(model.n_y)])
        for i in range(yhat.shape[0]):
            w.writerow([t0 + i] + [repr(float(v)) for v in yhat[i]])
    print(f"predictions: {args.out}")
    return 0


def _write_nstep_csv(curve, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "nrms"])
        for n, v in enumerate(curve.values):
            w.writerow([n, repr(float(v))])


def cmd_nstep(args) -> int:
    model, data = _load_model_and_data(args)
    curve = metrics.nstep_nrms(model, data, args.nmax)
    _write_nstep_csv(curve, args.out)
    print(f"sections: {curve.n_sections}")
    print(f"nstep_out: {args.out}")
    return 0


def _write_spectrum_csv(freqs, resid_mag, ref_mag, path) -> None:
    n_ch = resid_mag.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq"]
                   + [f"residual_mag{i + 1}" for i in range(n_ch)]
                   + [f"output_mag{i + 1}" for i in range(n_ch)])
        for i in range(freqs.shape[0]):
            w.writerow([repr(float(freqs[i]))]
                       + [repr(float(v)) for v in resid_mag[i]]
                       + [repr(float(v)) for v in ref_mag[i]])


def cmd_spectrum(args) -> int:
    model, data = _load_model_and_data(args)
    yhat = model.simulate(data, init=args.init)
    t0 = data.n_samples - yhat.shape[0]
    freqs, resid_mag, ref_mag = metrics.error_spectrum(
        yhat, data.y[t0:], args.sample_period)
    _write_spectrum_csv(freqs, resid_mag, ref_mag, args.out)
    print(f"spectrum_out: {args.out}")
    return 0


def _system_from_file(path) -> SyntheticSystem:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read system file: {exc}") from exc
    try:
        kind = doc.pop("kind")
        noise_std = float(doc.pop("noise_std", 0.0))
        if kind == "linear-ss":
            from .data import linear_system
            sys_ = linear_system(doc["A"], doc["B"], doc["C"], doc["D"], noise_std)
        elif kind == "wiener":
            from .data import wiener_system
            sys_ = wiener_system(doc["A"], doc["B"], doc["C"], doc["D"],
                                 doc.get("nonlinearity", "tanh"), noise_std)
        elif kind == "duffing":
            from .data import duffing_system
            sys_ = duffing_system(
                alpha=doc.get("alpha", 1.0), beta=doc.get("beta", 5.0),
                delta=doc.get("delta", 0.4), gamma=doc.get("gamma", 1.0),
                dt=doc.get("dt", 0.1), substeps=doc.get("substeps", 1),
                noise_std=noise_std)
        else:
            raise ConfigError(f"unknown system kind {kind!r}")
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid system file: {exc}") from exc
    return sys_


def cmd_generate(args) -> int:
    sys_ = _system_from_file(args.system)
    if sys_.kind in ("linear-ss", "wiener"):
        # reject unusable specs before spending time on simulation
        rho = np.max(np.abs(np.linalg.eigvals(sys_.parameters["A"])))
        if rho >= 1.0:
            raise ConfigError(f"unstable system: spectral radius {rho:.6g} >= 1")
    if args.samples < 1:
        raise ConfigError("samples must be >= 1")
    sub = np.random.SeedSequence(args.seed).generate_state(2)
    rng = np.random.default_rng(int(sub[0]))
    if args.input_kind == "gaussian":
        u = args.input_scale * rng.standard_normal((args.samples, 1))
    else:
        u = rng.uniform(-args.input_scale, args.input_scale, size=(args.samples, 1))
    d = generate(sys_, u, seed=int(sub[1]))
    save_csv(d, args.out)
    print(f"dataset: {args.out}")
    print(f"samples: {d.n_samples}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssencoder",
        description="Encoder-initialized multiple-shooting identification of "
                    "nonlinear state-space models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", help="key = value config file")
    for key, (parse, _, _) in CONFIG_SCHEMA.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                       metavar="V", help=f"override config key {key}")
    p.set_defaults(func=cmd_train)

    def model_data(p):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--data", required=True, help="dataset CSV")
        p.add_argument("--init", default="encoder", choices=["encoder", "zero"],
                       help="free-run initialization")

    p = sub.add_parser("evaluate", help="print RMS/NRMS of the free-run simulation")
    model_data(p)
    p.add_argument("--nstep", type=int, default=None, metavar="N",
                   help="also write the n-step NRMS curve for n = 0..N")
    p.add_argument("--nstep-out", default="nstep.csv")
    p.add_argument("--spectrum-out", default=None,
                   help="also write the residual spectrum CSV")
    p.add_argument("--sample-period", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="write free-run predictions to CSV")
    model_data(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("nstep", help="write the n-step NRMS curve to CSV")
    model_data(p)
    p.add_argument("--nmax", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_nstep)

    p = sub.add_parser("spectrum", help="write the residual spectrum to CSV")
    model_data(p)
    p.add_argument("--out", required=True)
    p.add_argument("--sample-period", type=float, default=None)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("generate", help="generate a synthetic dataset CSV")
    p.add_argument("--system", required=True, help="system spec JSON file")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--input-kind", default="gaussian", choices=["gaussian", "uniform"])
    p.add_argument("--input-scale", type=float, default=1.0)
    p.set_defaults(func=cmd_generate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
