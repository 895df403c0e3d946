"""``semcom`` command-line entry point.

Every subcommand reads one JSON config (sections ``train``, ``link``,
``sscc``, ``eval``, ``bler``, ``sscc_eval``, ``instability``), applies
``--set section.key=value`` overrides and writes CSV results into ``--out``.
Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import DESK_SCALE, ConfigError, TrainConfig, link_from_dict, sscc_from_dict

log = logging.getLogger("semcom")

DEFAULTS: dict = {
    "variant": "full",
    "train": {**{k: v for k, v in TrainConfig().to_dict().items() if k != "link"}, **DESK_SCALE},
    "link": TrainConfig().link.to_dict(),
    "sscc": {"m": 2, "r": "1/2", "quality_levels": list(range(8)), "csi_mode": "perfect"},
    "eval": {"snr_db": [-7, -3, 1, 5, 7], "scenarios": ["UMi", "UMa", "RMa"], "n_images": 256, "seed": 0},
    "bler": {"ebn0_db": [-6, -3, 0, 3, 6, 9, 12, 15], "scenarios": ["UMi", "UMa", "RMa"],
             "n_blocks": 200, "seed": 0},
    "sscc_eval": {"ebn0_db": [-7, -3, 1, 5, 7, 15], "scenarios": ["UMi", "UMa", "RMa"],
                  "n_images": 64, "seed": 0},
    "instability": {"seeds": [0, 1, 2, 3, 4], "epochs": 5, "n_images": 32, "batch": 16},
}


class UsageError(Exception):
    pass


class RunFailure(Exception):
    pass


# config -----------------------------------------------------------------------------

def _merge(base: dict, update: dict, path: str = "") -> dict:
    for key, val in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise UsageError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise UsageError(f"config key {where!r} must be an object")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val
    return base


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, item: str) -> None:
    """Apply one ``dotted.key=value``; the value is JSON if it parses, else a string."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise UsageError(f"override {item!r} is not of the form key=value")
    *parents, leaf = key.split(".")
    node = cfg
    for p in parents:
        if not isinstance(node.get(p), dict):
            raise UsageError(f"unknown config key {key!r}")
        node = node[p]
    if leaf not in node or isinstance(node[leaf], dict):
        raise UsageError(f"unknown config key {key!r}")
    node[leaf] = _parse_value(raw)


def load_config(path: str | None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        _merge(cfg, user)
    for item in overrides:
        apply_override(cfg, item)
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig.from_dict({**cfg["train"], "link": cfg["link"]})
    except (ConfigError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid train/link config: {exc}") from None


def _link_and_sscc(cfg: dict):
    try:
        return link_from_dict(cfg["link"]), sscc_from_dict(cfg["sscc"])
    except (ConfigError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid link/sscc config: {exc}") from None


# subcommands ---------------------------------------------------------------------------

def cmd_train(cfg: dict, out: Path, args) -> None:
    from .harness.checkpoint import checkpoint_save
    from .harness.train import train, write_loss_csv

    tc = train_config(cfg)
    res = train(tc, cfg["variant"])
    write_loss_csv(res.trace, out / "loss.csv")
    if not res.completed:
        raise RunFailure(f"training aborted: {json.dumps(res.abort, default=str)}")
    path = out / tc.checkpoint
    checkpoint_save(res.checkpoint(), path)
    log.info("wrote %s and %s", path, out / "loss.csv")


def cmd_eval(cfg: dict, out: Path, args) -> None:
    from .harness.checkpoint import checkpoint_load
    from .harness.evaluate import eval_sweep, write_records_csv

    path = Path(args.checkpoint) if args.checkpoint else out / cfg["train"]["checkpoint"]
    if not path.is_file():
        raise RunFailure(f"checkpoint not found: {path}")
    ev = cfg["eval"]
    records = eval_sweep(checkpoint_load(path), ev["snr_db"], ev["scenarios"], ev["n_images"], ev["seed"])
    write_records_csv(records, out / "eval.csv")


def cmd_bler(cfg: dict, out: Path, args) -> None:
    from .harness.evaluate import write_records_csv
    from .harness.sweeps import bler_sweep

    link, sscc = _link_and_sscc(cfg)
    b = cfg["bler"]
    write_records_csv(bler_sweep(link, sscc, b["scenarios"], b["ebn0_db"], b["n_blocks"], b["seed"]),
                      out / "bler.csv")


def cmd_sscc(cfg: dict, out: Path, args) -> None:
    from .harness.data import load_dataset
    from .harness.evaluate import write_records_csv
    from .harness.sweeps import sscc_psnr_sweep

    link, sscc = _link_and_sscc(cfg)
    s = cfg["sscc_eval"]
    data = load_dataset(cfg["train"]["dataset"], s["n_images"], "test")
    write_records_csv(sscc_psnr_sweep(data.images, link, sscc, s["scenarios"], s["ebn0_db"], s["seed"]),
                      out / "sscc.csv")


def cmd_gradcheck(cfg: dict, out: Path, args) -> None:
    from .harness.gradsuite import TOLERANCE, run_suite

    cases = run_suite()
    with open(out / "gradcheck.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "max_rel_err", "passed"])
        for c in cases:
            w.writerow([c.name, repr(c.max_rel_err), int(c.passed)])
    failed = [c.name for c in cases if not c.passed]
    for c in cases:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name:<20} {c.max_rel_err:.2e}")
    if failed:
        raise RunFailure(f"gradient check above {TOLERANCE:g}: {', '.join(failed)}")


def cmd_instability(cfg: dict, out: Path, args) -> None:
    import dataclasses

    from .harness.instability import instability_experiment, write_instability_csv

    ins = cfg["instability"]
    try:
        base = dataclasses.replace(train_config(cfg), epochs=ins["epochs"], n_images=ins["n_images"],
                                   batch=ins["batch"])
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid instability config: {exc}") from None
    write_instability_csv(instability_experiment(base, ins["seeds"]), out / "instability.csv")


COMMANDS = {
    "train": (cmd_train, "train one variant; writes the checkpoint and loss.csv"),
    "eval": (cmd_eval, "evaluate a checkpoint over scenarios x SNR; writes eval.csv"),
    "bler": (cmd_bler, "SSCC block error rate versus Eb/N0; writes bler.csv"),
    "sscc": (cmd_sscc, "SSCC image PSNR versus Eb/N0; writes sscc.csv"),
    "gradcheck": (cmd_gradcheck, "finite-difference gradient suite; writes gradcheck.csv"),
    "instability": (cmd_instability, "in-loop ZF vs residual precoder on deep fades; writes instability.csv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semcom", description="MU-MIMO OFDM semantic communication simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", "-c", help="JSON config file")
        p.add_argument("--out", "-o", default=".", help="output directory (default: .)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. train.lr=0.001 (repeatable)")
        p.add_argument("--verbose", "-v", action="store_true")
        if name == "eval":
            p.add_argument("--checkpoint", help="checkpoint file (default: OUT/<train.checkpoint>)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](cfg, out, args)
    except UsageError as exc:
        print(f"semcom {args.command}: {exc}", file=sys.stderr)
        return 2
    except RunFailure as exc:
        print(f"semcom {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"semcom {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
