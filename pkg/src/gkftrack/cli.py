"""Command-line front end: simulate -> train -> track -> eval -> plot-data.

Errors end the process with a distinct exit code and one JSON line on stderr::

    {"error": "missing_file", "exit_code": 3, "message": "..."}

Log verbosity comes from the GKFTRACK_LOG environment variable (default WARNING).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__, fileio, metrics
from .config import RunConfig, load_config
from .gkf import GainNetConfig, GainNetwork
from .neural.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .simulator import ConfigError, generate_scenario
from .tracker import track_sequence
from .trainer import TrainingDiverged, train

log = logging.getLogger("gkftrack")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_SCHEMA = 4
EXIT_CONFIG = 5
EXIT_CHECKPOINT = 6
EXIT_DIVERGED = 7


class CliError(Exception):
    def __init__(self, code: str, exit_code: int, message: str):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _need(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError("missing_file", EXIT_MISSING_FILE, f"no such file: {p}")
    return p


def _provenance(cfg: RunConfig) -> dict:
    return cfg.to_dict()


# ------------------------------------------------------------- subcommands
def cmd_simulate(args, cfg: RunConfig) -> None:
    seed = cfg.seed if args.seed is None else args.seed
    sc = generate_scenario(cfg.simulator, seed)
    fileio.write_scenario(args.out, sc, _provenance(cfg))
    log.info("wrote %d frames to %s", len(sc.frames), args.out)


def _network_from_checkpoint(path, cfg: RunConfig) -> GainNetwork:
    arch, params, _, meta = load_checkpoint(_need(path))
    net_cfg = GainNetConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in arch.items()})
    model = cfg.tracker.model()
    if (net_cfg.state_dim, net_cfg.obs_dim) != (model.state_dim, model.obs_dim):
        raise CheckpointError(
            f"{path}: network is {net_cfg.state_dim}x{net_cfg.obs_dim}, "
            f"tracker model {model.kind} needs {model.state_dim}x{model.obs_dim}")
    trained_on = meta.get("motion_model")
    if trained_on is not None and trained_on != model.kind:
        raise CheckpointError(f"{path}: trained with {trained_on}, tracker uses {model.kind}")
    return GainNetwork(net_cfg, params)


def cmd_train(args, cfg: RunConfig) -> None:
    train_sc = [fileio.read_scenario(_need(p)) for p in args.scenarios]
    val_sc = [fileio.read_scenario(_need(p)) for p in args.val or []]
    tcfg = cfg.training
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    if args.mode is not None:
        tcfg.mode = args.mode
    res = train(train_sc, tcfg, cfg.tracker, net_config=cfg.net_config(), val_sequences=val_sc, log_path=args.log)
    meta = {"motion_model": cfg.tracker.motion_model, "tool_version": __version__, "config": _provenance(cfg),
            "steps": len(res.log), "restores": res.restores}
    save_checkpoint(args.out, res.net.config.arch(), res.net.params, res.opt, meta)
    log.info("trained %d steps; checkpoint at %s", len(res.log), args.out)


def cmd_track(args, cfg: RunConfig) -> None:
    mode = args.mode or cfg.motion_mode
    sc = fileio.read_scenario(_need(args.input))
    net = None
    if mode == "GRU-KF":
        if not args.checkpoint:
            raise CliError("missing_checkpoint", EXIT_USAGE, "GRU-KF mode needs --checkpoint")
        net = _network_from_checkpoint(args.checkpoint, cfg)
    out = track_sequence(sc.detection_frames(), mode, cfg.tracker, net)
    fileio.write_tracks(args.out, out, [f.timestamp for f in sc.frames], _provenance(cfg),
                        {"motion_mode": mode, "input": Path(args.input).name})


def cmd_eval(args, cfg: RunConfig) -> dict:
    outputs, ts = fileio.read_tracks(_need(args.tracks))
    gt = fileio.read_scenario(_need(args.gt))
    if len(ts) != len(gt.frames):
        raise CliError("schema_violation", EXIT_SCHEMA,
                       f"track file has {len(ts)} frames, ground truth has {len(gt.frames)}")
    report = metrics.evaluate(metrics.track_eval_frames(outputs, len(ts)), metrics.gt_eval_frames(gt), cfg.evaluation)
    doc = report.to_dict()
    doc["tool_version"] = __version__
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return doc


def _read_jsonl(path) -> list[dict]:
    rows = []
    for i, line in enumerate(_need(path).read_text().splitlines(), start=1):
        if line.strip():
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise CliError("schema_violation", EXIT_SCHEMA, f"{path}:{i}: invalid JSON: {e.msg}") from None
    return rows


def cmd_plot_data(args, cfg: RunConfig) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.log:
        labels = args.label or [Path(p).stem for p in args.log]
        if len(labels) != len(args.log):
            raise CliError("usage", EXIT_USAGE, "give one --label per --log")
        w.writerow(["run", "step", "loss", "loss_annotation", "loss_pseudo", "val_amota"])
        for label, path in zip(labels, args.log):
            for r in _read_jsonl(path):
                if "step" not in r or "loss" not in r:
                    raise CliError("schema_violation", EXIT_SCHEMA, f"{path}: training log rows need step and loss")
                w.writerow([label, r["step"]] + [repr(r[k]) if k in r else ""
                                                 for k in ("loss", "loss_annotation", "loss_pseudo", "val_amota")])
    elif args.report:
        doc = json.loads(_need(args.report).read_text())
        w.writerow(["class", "recall_threshold", "motar", "motp", "tp", "fp", "fn", "ids"])
        for cid, rep in sorted(doc.get("classes", {}).items()):
            for r in rep["rows"]:
                w.writerow([cid, r["recall_threshold"], r["motar"], r["motp"], r["tp"], r["fp"], r["fn"], r["ids"]])
    else:
        raise CliError("usage", EXIT_USAGE, "plot-data needs --log or --report")
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


# ------------------------------------------------------------------ parser
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", EXIT_USAGE, message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gkftrack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="YAML run config (defaults apply for omitted keys)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic scenario file")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)

    s = sub.add_parser("train", help="train the gain network on scenario files")
    s.add_argument("--scenarios", nargs="+", required=True)
    s.add_argument("--val", nargs="*")
    s.add_argument("--mode", choices=("supervised", "semi"))
    s.add_argument("--epochs", type=int)
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--log", help="JSONL training log path")

    s = sub.add_parser("track", help="run the tracker on a scenario or detection file")
    s.add_argument("--input", required=True)
    s.add_argument("--mode", choices=("EKF", "GRU-KF"))
    s.add_argument("--checkpoint")
    s.add_argument("--out", required=True)

    s = sub.add_parser("eval", help="score a track file against ground truth")
    s.add_argument("--tracks", required=True)
    s.add_argument("--gt", required=True, help="scenario or annotation file")
    s.add_argument("--out", help="JSON report (stdout if omitted)")
    s.add_argument("--csv", help="per-threshold CSV")

    s = sub.add_parser("plot-data", help="CSV series from training logs or an eval report")
    s.add_argument("--log", nargs="*")
    s.add_argument("--label", nargs="*")
    s.add_argument("--report")
    s.add_argument("--out")
    return p


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "track": cmd_track, "eval": cmd_eval,
            "plot-data": cmd_plot_data}


def _fail(e: CliError) -> int:
    sys.stderr.write(json.dumps({"error": e.code, "exit_code": e.exit_code, "message": str(e)}) + "\n")
    return e.exit_code


def run_cli(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("GKFTRACK_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.config:
            _need(args.config)
        cfg = load_config(args.config)
        COMMANDS[args.command](args, cfg)
    except CliError as e:
        return _fail(e)
    except fileio.FormatError as e:
        return _fail(CliError("schema_violation", EXIT_SCHEMA, str(e)))
    except ConfigError as e:
        return _fail(CliError("config_error", EXIT_CONFIG, str(e)))
    except CheckpointError as e:
        return _fail(CliError("checkpoint_mismatch", EXIT_CHECKPOINT, str(e)))
    except TrainingDiverged as e:
        return _fail(CliError("training_diverged", EXIT_DIVERGED, str(e)))
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except Exception as e:  # noqa: BLE001 - last-resort single-line report
        return _fail(CliError("internal_error", EXIT_ERROR, f"{type(e).__name__}: {e}"))
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
