"""Command-line harness: make-data, train, generate, profile-loss, eval.

Every command reads a JSON run config, applies flag overrides, validates the
result completely and only then touches the filesystem. Exit codes: 0 success,
2 validation error, 3 incompatible or unreadable artifact, 1 internal error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataError, FormatError, NonFiniteError

log = logging.getLogger("jointdiff")

CONFIG_VERSION = 1
EXIT_OK, EXIT_INTERNAL, EXIT_INVALID, EXIT_ARTIFACT = 0, 1, 2, 3

_SCHEDULE = {"kind": str, "T_max": int, "beta_start": float, "beta_end": float}
SCHEMA = {
    "data": {"n_samples": int, "n_frames": int, "video_dim": int, "audio_frames": int, "audio_dim": int,
             "n_events": int, "jitter": float, "min_gap": int, "seed": int},
    "model": {"inject_mode": str, "hidden_dim": int, "n_layers": int, "n_inject_sites": int, "heads": int,
              "connector_dim": int, "connector_context": int, "pool_cross_attention": bool,
              "time_embed_dim": int, "init_seed": int, "schedule_v": _SCHEDULE, "schedule_a": _SCHEDULE},
    "train": {"lr": float, "batch_size": int, "epochs": int, "seed": int, "freeze_core_after": (int, None),
              "save_every": int},
    "sampling": {"gamma": float, "T": int, "guidance_v": float, "guidance_a": float, "n_samples": int,
                 "seed": int, "window": int, "self_condition": bool},
    "profile": {"n_bins": int, "samples_per_bin": int, "seed": int},
    "paths": {"dataset": str, "checkpoint": str, "loss_csv": str, "samples_dir": str, "profile_csv": str},
}


class UsageError(Exception):
    """Invalid input detected before any work started (exit 2)."""


def _check_value(value, kind, where: str):
    if isinstance(kind, dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be an object", field=where)
        return _check_object(value, kind, where)
    if isinstance(kind, tuple):
        if value is None and None in kind:
            return None
        kind = kind[0]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}", field=where)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}", field=where)
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{where} must be of type {kind.__name__}, got {value!r}", field=where)
    return value


def _check_object(raw: dict, schema: dict, where: str) -> dict:
    prefix = f"{where}." if where else ""
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key {prefix}{unknown[0]}", field=prefix + unknown[0])
    missing = [k for k in schema if k not in raw]
    if missing:
        raise ConfigError(f"missing field {prefix}{missing[0]}", field=prefix + missing[0])
    return {k: _check_value(raw[k], schema[k], prefix + k) for k in schema}


def parse_config(raw: dict) -> dict:
    """Type-check a raw config dict against :data:`SCHEMA`; returns a normalised copy."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "version" not in raw:
        raise ConfigError("missing field version", field="version")
    if raw["version"] != CONFIG_VERSION:
        raise ConfigError(f"config version {raw['version']!r} is not supported (expected {CONFIG_VERSION})",
                          field="version")
    body = {k: v for k, v in raw.items() if k != "version"}
    out = _check_object(body, SCHEMA, "")
    out["version"] = CONFIG_VERSION
    return out


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw)


# -- typed views of the config ------------------------------------------------
@dataclass
class Plan:
    cfg: dict

    def pair_spec(self):
        from .datagen import PairSpec
        d = self.cfg["data"]
        return PairSpec(d["n_frames"], d["video_dim"], d["audio_frames"], d["audio_dim"], d["n_events"],
                        d["jitter"], 0, d["seed"], d["min_gap"])

    def model_config(self):
        from .datagen import N_LABELS
        from .jointmodel import BranchConfig, ModelConfig
        from .schedule import schedule_from_dict
        d, m = self.cfg["data"], self.cfg["model"]
        for key in ("schedule_v", "schedule_a"):
            schedule_from_dict(m[key])
        return ModelConfig(
            video=BranchConfig("video", d["n_frames"], d["video_dim"], m["hidden_dim"], m["n_layers"],
                               m["n_inject_sites"], m["heads"]),
            audio=BranchConfig("audio", d["audio_frames"], d["audio_dim"], m["hidden_dim"], m["n_layers"],
                               m["n_inject_sites"], m["heads"]),
            inject_mode=m["inject_mode"],
            connector_dim=m["connector_dim"],
            connector_context=m["connector_context"],
            pool_cross_attention=m["pool_cross_attention"],
            n_labels=N_LABELS,
            time_embed_dim=m["time_embed_dim"],
            schedule_v=dict(m["schedule_v"]),
            schedule_a=dict(m["schedule_a"]),
            init_seed=m["init_seed"],
        )

    def train_options(self):
        from .jointmodel import TrainOptions
        t = self.cfg["train"]
        if t["lr"] < 0 or t["batch_size"] < 1 or t["epochs"] < 0 or t["save_every"] < 0:
            raise ConfigError("train needs lr >= 0, batch_size >= 1, epochs >= 0, save_every >= 0", field="train")
        if t["freeze_core_after"] is not None and t["freeze_core_after"] < 0:
            raise ConfigError("train.freeze_core_after must be >= 0 or null", field="train.freeze_core_after")
        return TrainOptions(lr=t["lr"], batch_size=t["batch_size"], epochs=t["epochs"], seed=t["seed"],
                            freeze_core_after=t["freeze_core_after"], save_every=t["save_every"],
                            checkpoint_path=self.cfg["paths"]["checkpoint"])

    def timestep_map(self, T_v: int, T_a: int):
        from .schedule import TimestepMap
        s = self.cfg["sampling"]
        return TimestepMap(s["T"], T_v, T_a, s["gamma"])


def apply_overrides(cfg: dict, args) -> dict:
    """Copy of ``cfg`` with every flag that was given written into its field."""
    cfg = copy.deepcopy(cfg)
    seed = getattr(args, "seed", None)
    if seed is not None:
        section = {"make-data": "data", "train": "train", "generate": "sampling",
                   "profile-loss": "profile"}.get(args.command)
        if section:
            cfg[section]["seed"] = seed
    mapping = [
        ("gamma", "sampling", "gamma"), ("inject_mode", "model", "inject_mode"),
        ("guidance_v", "sampling", "guidance_v"), ("guidance_a", "sampling", "guidance_a"),
        ("n_samples", "sampling" if args.command == "generate" else "data", "n_samples"),
        ("epochs", "train", "epochs"), ("lr", "train", "lr"), ("steps", "sampling", "T"),
        ("n_bins", "profile", "n_bins"), ("samples_per_bin", "profile", "samples_per_bin"),
        ("dataset", "paths", "dataset"), ("checkpoint", "paths", "checkpoint"),
        ("loss_csv", "paths", "loss_csv"), ("out_dir", "paths", "samples_dir"),
        ("out_csv", "paths", "profile_csv"),
    ]
    for attr, section, key in mapping:
        value = getattr(args, attr, None)
        if value is not None:
            cfg[section][key] = value
    return parse_config(cfg)


# -- helpers ------------------------------------------------------------------
def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _require_parent(path: str, what: str) -> Path:
    p = Path(path)
    parent = p.parent if p.parent != Path("") else Path(".")
    if parent.exists() and not parent.is_dir():
        raise UsageError(f"{what}: {parent} is not a directory")
    return p


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


def write_loss_csv(path, losses) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(losses, start=1):
            w.writerow([i, repr(float(v))])


# -- commands -----------------------------------------------------------------
def cmd_make_data(plan: Plan, args) -> int:
    from .datagen import make_dataset
    spec = plan.pair_spec()
    n = plan.cfg["data"]["n_samples"]
    if n < 1:
        raise ConfigError("data.n_samples must be >= 1", field="data.n_samples")
    out = _require_parent(plan.cfg["paths"]["dataset"], "dataset path")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds = make_dataset(spec, n, out)
    _emit({"command": "make-data", "path": str(out), "count": len(ds), "seed": spec.seed,
           "video_shape": list(ds[0].x_v.shape), "audio_shape": list(ds[0].x_a.shape)})
    return EXIT_OK


def cmd_train(plan: Plan, args) -> int:
    from .datagen import read_dataset
    from .jointmodel import JointModel, load_checkpoint, train

    config = plan.model_config()
    opts = plan.train_options()
    data_path = _require_file(plan.cfg["paths"]["dataset"], "dataset")
    ckpt_path = _require_parent(plan.cfg["paths"]["checkpoint"], "checkpoint path")
    csv_path = _require_parent(plan.cfg["paths"]["loss_csv"], "loss CSV path")
    ckpt = None
    if args.resume:
        ckpt = load_checkpoint(_require_file(str(ckpt_path), "checkpoint to resume"), lr=opts.lr)
        if ckpt.model.config != config:
            raise UsageError("checkpoint model config differs from the run config; refusing to resume")
    dataset = read_dataset(data_path)
    if len(dataset) == 0:
        raise UsageError(f"dataset {data_path} is empty")
    shapes = (dataset[0].x_v.shape, dataset[0].x_a.shape)
    if shapes != (config.video.latent_shape, config.audio.latent_shape):
        raise UsageError(f"dataset latents {shapes} do not match the model config")

    if ckpt is None:
        model, optimizer, start, history = JointModel(config), None, 0, []
    else:
        model, optimizer, start, history = ckpt.model, ckpt.optimizer, ckpt.epoch, ckpt.history
    # train.epochs is the total; a resumed run only does what is left
    opts.epochs = max(opts.epochs - start, 0)
    for p in (ckpt_path, csv_path):
        p.parent.mkdir(parents=True, exist_ok=True)
    log.info("training %s model (%d parameters) from epoch %d", config.inject_mode, model.num_parameters(), start + 1)

    history_now = list(history)

    def on_epoch(epoch, loss):
        log.info("epoch %d loss %.5f", epoch, loss)
        history_now.append(loss)
        write_loss_csv(csv_path, history_now)

    try:
        report = train(model, dataset, opts, optimizer=optimizer, start_epoch=start, history=history,
                       on_epoch=on_epoch)
    except NonFiniteError:
        write_loss_csv(csv_path, history_now)
        raise
    if report.last_epoch == start and not ckpt_path.exists():
        from .jointmodel import save_checkpoint
        save_checkpoint(ckpt_path, model, report.optimizer, epoch=start, history=report.epoch_losses)
    write_loss_csv(csv_path, report.epoch_losses)
    _emit({"command": "train", "checkpoint": str(ckpt_path), "loss_csv": str(csv_path),
           "first_epoch": start + 1, "last_epoch": report.last_epoch,
           "final_loss": report.epoch_losses[-1] if report.epoch_losses else None})
    return EXIT_OK


def _check_mode(model, args) -> None:
    wanted = getattr(args, "inject_mode", None)
    if wanted is not None and model.config.inject_mode != wanted:
        raise UsageError(f"checkpoint holds a {model.config.inject_mode} model, not {wanted}")


def cmd_generate(plan: Plan, args) -> int:
    from .datagen import N_LABELS, Dataset, Pair, write_dataset
    from .jointmodel import joint_generate, load_checkpoint
    from .metrics import evaluate_pairs, write_report
    from .numerics import Rng

    s = plan.cfg["sampling"]
    if s["n_samples"] < 1:
        raise ConfigError("sampling.n_samples must be >= 1", field="sampling.n_samples")
    if s["window"] < 0:
        raise ConfigError("sampling.window must be >= 0", field="sampling.window")
    plan.timestep_map(1, 1)  # validates gamma and T before loading anything
    ckpt = load_checkpoint(_require_file(plan.cfg["paths"]["checkpoint"], "checkpoint"))
    model = ckpt.model
    _check_mode(model, args)
    tmap = plan.timestep_map(model.schedule_v.T_max, model.schedule_a.T_max)
    out_dir = Path(plan.cfg["paths"]["samples_dir"])
    if out_dir.exists() and not out_dir.is_dir():
        raise UsageError(f"{out_dir} exists and is not a directory")

    labels = np.arange(s["n_samples"]) % N_LABELS
    x_v, x_a = joint_generate(model, tmap, labels, (s["guidance_v"], s["guidance_a"]), Rng(s["seed"]),
                              self_condition=s["self_condition"])
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"sampling": s, "checkpoint": plan.cfg["paths"]["checkpoint"], "epoch": ckpt.epoch,
            "inject_mode": model.config.inject_mode}
    pairs = [Pair(x_v[i], x_a[i], int(labels[i]), []) for i in range(len(labels))]
    write_dataset(out_dir / "samples.jdds", Dataset(pairs, meta))
    ratio = model.config.audio.frames // model.config.video.frames
    report = evaluate_pairs(zip(x_v, x_a), ratio, s["window"])
    report["gamma"] = s["gamma"]
    write_report(out_dir / "metrics.json", report)
    _emit({"command": "generate", "samples": str(out_dir / "samples.jdds"), "count": len(labels),
           "gamma": s["gamma"], "av_align": report["mean"]["score_modified"]})
    return EXIT_OK


def cmd_profile_loss(plan: Plan, args) -> int:
    from .datagen import read_dataset
    from .jointmodel import load_checkpoint
    from .numerics import Rng
    from .schedule import profile_bins, profile_loss

    p = plan.cfg["profile"]
    if p["samples_per_bin"] < 1:
        raise ConfigError("profile.samples_per_bin must be >= 1", field="profile.samples_per_bin")
    try:
        profile_bins(plan.cfg["sampling"]["T"], p["n_bins"])
    except ContractError as exc:
        raise ConfigError(str(exc), field="profile.n_bins") from exc
    plan.timestep_map(1, 1)
    ckpt = load_checkpoint(_require_file(plan.cfg["paths"]["checkpoint"], "checkpoint"))
    dataset = read_dataset(_require_file(plan.cfg["paths"]["dataset"], "dataset"))
    out = _require_parent(plan.cfg["paths"]["profile_csv"], "profile CSV path")
    model = ckpt.model
    _check_mode(model, args)
    tmap = plan.timestep_map(model.schedule_v.T_max, model.schedule_a.T_max)
    prof = profile_loss(model, dataset, tmap, p["n_bins"], p["samples_per_bin"], Rng(p["seed"]))
    out.parent.mkdir(parents=True, exist_ok=True)
    prof.to_csv(out)
    _emit({"command": "profile-loss", "csv": str(out), "gamma": tmap.gamma, "rows": len(prof.bins),
           "curve_distance": prof.curve_distance()})
    return EXIT_OK


def cmd_eval(args) -> int:
    from .datagen import read_dataset
    from .metrics import evaluate_pairs, write_report

    if args.window < 0:
        raise UsageError("--window must be >= 0")
    dirs = [Path(d) for d in args.sample_dirs]
    for d in dirs:
        _require_file(str(d / "samples.jdds"), "samples file")
    results = {}
    for d in dirs:
        ds = read_dataset(d / "samples.jdds")
        if len(ds) == 0:
            raise UsageError(f"{d}: no samples")
        ratio = ds[0].x_a.shape[0] // ds[0].x_v.shape[0]
        report = evaluate_pairs(((p.x_v, p.x_a) for p in ds), ratio, args.window)
        if "sampling" in ds.meta:
            report["gamma"] = ds.meta["sampling"]["gamma"]
        write_report(d / "metrics.json", report)
        results[str(d)] = report["mean"]["score_modified"]
    _emit({"command": "eval", "window": args.window, "av_align": results})
    return EXIT_OK


# -- entry point --------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointdiff", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="JSON run config")
        p.add_argument("--seed", type=int, help="seed for this command's randomness")
        return p

    p = with_config("make-data", "synthesize a paired dataset")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--dataset", help="output dataset file")

    p = with_config("train", "train a joint model")
    p.add_argument("--inject-mode", choices=("cmc_pe", "cross_attention", "none"))
    p.add_argument("--epochs", type=int, help="total epochs (a resumed run continues up to this)")
    p.add_argument("--lr", type=float)
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--loss-csv")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint path")

    for name, help_ in (("generate", "sample pairs and score them"), ("profile-loss", "per-step loss curves")):
        p = with_config(name, help_)
        p.add_argument("--gamma", type=float)
        p.add_argument("--steps", type=int, help="number of global steps T")
        p.add_argument("--checkpoint")
        p.add_argument("--inject-mode", choices=("cmc_pe", "cross_attention", "none"))
        p.add_argument("--guidance-v", type=float)
        p.add_argument("--guidance-a", type=float)
    gen = sub.choices["generate"]
    gen.add_argument("--n-samples", type=int)
    gen.add_argument("--out-dir")
    prof = sub.choices["profile-loss"]
    prof.add_argument("--dataset")
    prof.add_argument("--n-bins", type=int)
    prof.add_argument("--samples-per-bin", type=int)
    prof.add_argument("--out-csv")

    p = sub.add_parser("eval", help="score existing sample directories")
    p.add_argument("sample_dirs", nargs="+")
    p.add_argument("--window", type=int, default=1)
    return parser


COMMANDS = {"make-data": cmd_make_data, "train": cmd_train, "generate": cmd_generate,
            "profile-loss": cmd_profile_loss}


def run(argv=None) -> int:
    from .errors import IncompatibleVersionError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "eval":
            return cmd_eval(args)
        plan = Plan(apply_overrides(load_config(args.config), args))
        return COMMANDS[args.command](plan, args)
    except (UsageError, ConfigError, ContractError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (IncompatibleVersionError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NonFiniteError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort handler for the exit-code contract
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
