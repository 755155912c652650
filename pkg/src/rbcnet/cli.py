"""Command-line entry point orchestrating every stage.

Subcommands: gen-data, validate-data, train-sl, train-rl, arena, serve,
gradcheck. Values come from (highest precedence first) command-line flags,
the section named after the subcommand in --config (YAML), then defaults.
Every run directory gets a manifest.json with the resolved configuration.

Exit codes: 0 success, 2 configuration/usage error, 3 data-validation
failure, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch
import yaml

from . import __version__

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _load_config_section(path, section: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise CliError(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise CliError(f"config {path} must be a mapping of sections")
    section_data = data.get(section, {})
    if not isinstance(section_data, dict):
        raise CliError(f"config section {section!r} must be a mapping")
    return section_data


def _resolve(args: argparse.Namespace, section: str, defaults: dict) -> dict:
    """defaults <- config file section <- explicitly passed flags."""
    resolved = dict(defaults)
    resolved.update(_load_config_section(args.config, section))
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _write_manifest(out_dir: Path, command: str, config: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "code_version": __version__,
        "argv": sys.argv[1:],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _setup_threads(deterministic: bool, threads) -> None:
    if deterministic:
        torch.set_num_threads(1)
    elif threads:
        torch.set_num_threads(int(threads))


def _parse_bot(spec: str):
    from .bots import BotSpec
    parts = spec.split(":")
    kind = parts[0]
    if kind in ("random", "greedy"):
        return BotSpec(kind=kind)
    if kind == "net":
        if len(parts) < 2:
            raise CliError("net bot spec is net:CHECKPOINT[:argmax|sample[:TEMP]]")
        mode = parts[2] if len(parts) > 2 else "argmax"
        temperature = float(parts[3]) if len(parts) > 3 else 1.0
        return BotSpec(kind="net", checkpoint=parts[1], mode=mode, temperature=temperature)
    raise CliError(f"unknown bot spec {spec!r}")


def _network_config(resolved: dict):
    from .net import NetworkConfig
    preset = resolved.get("net_preset", "desk")
    seed = int(resolved.get("seed", 0))
    if preset == "desk":
        base = NetworkConfig.desk_scale(seed=seed)
    elif preset == "full":
        base = NetworkConfig(seed=seed)
    elif preset == "tiny":
        base = NetworkConfig.tiny(seed=seed)
    else:
        raise CliError(f"net_preset must be desk/full/tiny, got {preset!r}")
    overrides = {k: int(resolved[k]) for k in
                 ("trunk_channels", "trunk_blocks") if resolved.get(k) is not None}
    if overrides:
        base = type(base)(**{**asdict(base), **overrides})
    return base


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .sl import gen_synthetic
    defaults = {"games": 200, "seed": 0, "bots": "greedy,random",
                "turn_cap": 60, "out": "games.jsonl"}
    cfg = _resolve(args, "gen_data", defaults)
    bots = cfg["bots"].split(",") if isinstance(cfg["bots"], str) else list(cfg["bots"])
    for kind in bots:
        if kind not in ("greedy", "random"):
            raise CliError(f"gen-data bots must be greedy/random, got {kind!r}")
    out = Path(cfg["out"])
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    count = gen_synthetic(out, n_games=int(cfg["games"]), seed=int(cfg["seed"]),
                          bot_kinds=tuple(bots), turn_cap=int(cfg["turn_cap"]))
    if out.parent != Path("."):
        _write_manifest(out.parent, "gen-data", cfg)
    print(f"wrote {count} games to {out}")
    return EXIT_OK


def cmd_validate_data(args) -> int:
    import jsonschema
    from .records import load_schema, replay_errors, RecordError
    defaults = {"data": None, "schema_only": False}
    cfg = _resolve(args, "validate_data", defaults)
    if not cfg["data"]:
        raise CliError("validate-data needs --data FILE")
    schema = load_schema()
    bad = 0
    total = 0
    try:
        with open(cfg["data"], "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                total += 1
                try:
                    data = json.loads(line)
                    jsonschema.validate(data, schema)
                except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
                    print(f"line {line_no}: schema: {str(exc).splitlines()[0]}")
                    bad += 1
                    continue
                if cfg["schema_only"]:
                    continue
                from .records import record_from_json
                try:
                    errors = replay_errors(record_from_json(data))
                except RecordError as exc:
                    errors = [str(exc)]
                if errors:
                    print(f"line {line_no}: replay: {errors[0]}")
                    bad += 1
    except OSError as exc:
        raise CliError(f"cannot read {cfg['data']}: {exc}")
    print(f"{total - bad}/{total} records valid")
    return EXIT_OK if bad == 0 else EXIT_VALIDATION


def cmd_train_sl(args) -> int:
    from .net import PolicyValueNet, net_to_checkpoint, save_checkpoint
    from .sl import build_example_set, evaluate, ingest, split_games, train
    defaults = {"data": None, "out": "runs/sl", "epochs": 5, "batch_size": 256,
                "lr": 1e-3, "split": 0.9, "seed": 0, "move_target": "requested",
                "net_preset": "desk", "trunk_channels": None, "trunk_blocks": None}
    cfg = _resolve(args, "train_sl", defaults)
    if not cfg["data"]:
        raise CliError("train-sl needs --data FILE (run gen-data first)")
    if not Path(cfg["data"]).exists():
        raise CliError(f"data file {cfg['data']} does not exist")
    out_dir = Path(cfg["out"])
    _write_manifest(out_dir, "train-sl", cfg)
    records, rejected = ingest(cfg["data"])
    if rejected:
        print(f"rejected {len(rejected)} invalid records")
    if not records:
        raise CliError("no valid records in the data file", EXIT_VALIDATION)
    exset = build_example_set(records, move_target=cfg["move_target"])
    train_rows, test_rows = split_games(len(records), float(cfg["split"]),
                                        int(cfg["seed"]))
    net = PolicyValueNet(_network_config(cfg))
    print(f"{len(records)} games, {len(exset)} examples "
          f"({len(train_rows)}/{len(test_rows)} game split)")
    net, history = train(net, exset, train_rows, test_rows,
                         epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]),
                         lr=float(cfg["lr"]), seed=int(cfg["seed"]),
                         log=lambda e: print(json.dumps(e)))
    ckpt_path = out_dir / "sl.ckpt"
    save_checkpoint(ckpt_path, net_to_checkpoint(
        net, meta={"stage": "sl", "games": len(records), "snapshot": "sl"}))
    (out_dir / "metrics.json").write_text(json.dumps(history, indent=2))
    if test_rows.size:
        final = evaluate(net, exset, exset.examples_for_games(test_rows))
        print(f"test sense accuracy {final.sense_accuracy:.4f}, "
              f"move accuracy {final.move_accuracy:.4f}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def cmd_train_rl(args) -> int:
    from .rl import PPOConfig, train_rl
    defaults = {"sl_checkpoint": None, "out": "runs/rl", "games_per_iter": 64,
                "max_iterations": 50, "time_budget_s": None, "turn_cap": 60,
                "lr": 3e-4, "clip_eps": 0.2, "gamma": 0.997, "lam": 0.95,
                "update_epochs": 4, "minibatch_size": 256, "value_coef": 0.5,
                "entropy_coef": 0.01, "snapshot_threshold": 0.65,
                "snapshot_window": 500, "warmup_games": 100, "temperature": 1.0,
                "max_parallel": 32, "checkpoint_every": 10, "seed": 0}
    cfg = _resolve(args, "train_rl", defaults)
    if not cfg["sl_checkpoint"]:
        raise CliError("train-rl needs --sl-checkpoint (train-sl produces one); "
                       "self-play starts from the supervised network")
    if not Path(cfg["sl_checkpoint"]).exists():
        raise CliError(f"supervised checkpoint {cfg['sl_checkpoint']} does not exist")
    out_dir = Path(cfg["out"])
    _write_manifest(out_dir, "train-rl", cfg)
    config = PPOConfig(
        clip_eps=float(cfg["clip_eps"]), gamma=float(cfg["gamma"]), lam=float(cfg["lam"]),
        update_epochs=int(cfg["update_epochs"]), minibatch_size=int(cfg["minibatch_size"]),
        value_coef=float(cfg["value_coef"]), entropy_coef=float(cfg["entropy_coef"]),
        lr=float(cfg["lr"]), games_per_iter=int(cfg["games_per_iter"]),
        snapshot_threshold=float(cfg["snapshot_threshold"]),
        snapshot_window=int(cfg["snapshot_window"]), warmup_games=int(cfg["warmup_games"]),
        turn_cap=int(cfg["turn_cap"]), temperature=float(cfg["temperature"]),
        max_parallel=int(cfg["max_parallel"]),
        max_iterations=int(cfg["max_iterations"]),
        time_budget_s=None if cfg["time_budget_s"] is None else float(cfg["time_budget_s"]),
        checkpoint_every=int(cfg["checkpoint_every"]), seed=int(cfg["seed"]))
    _, summary = train_rl(cfg["sl_checkpoint"], out_dir, config,
                          log=lambda e: print(json.dumps(e)))
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_arena(args) -> int:
    from .arena import run_match
    defaults = {"a": "random", "b": "random", "games": 100, "seed": 0,
                "turn_cap": 60, "out": None}
    cfg = _resolve(args, "arena", defaults)
    result = run_match(_parse_bot(cfg["a"]), _parse_bot(cfg["b"]),
                       games=int(cfg["games"]), seed=int(cfg["seed"]),
                       turn_cap=int(cfg["turn_cap"]))
    print(result.format_table())
    if cfg["out"]:
        Path(cfg["out"]).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg["out"]).write_text(json.dumps(result.to_json(), indent=2))
        print(f"report: {cfg['out']}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .net import NetworkConfig, gradient_check
    defaults = {"trunk_channels": 4, "trunk_blocks": 1, "batch": 2,
                "samples_per_param": 120, "seed": 0, "threshold": 1e-4}
    cfg = _resolve(args, "gradcheck", defaults)
    config = NetworkConfig(trunk_channels=int(cfg["trunk_channels"]),
                           trunk_blocks=int(cfg["trunk_blocks"]),
                           value_hidden=8, seed=int(cfg["seed"]))
    report = gradient_check(config, batch=int(cfg["batch"]),
                            samples_per_param=int(cfg["samples_per_param"]),
                            seed=int(cfg["seed"]))
    for name, rel in sorted(report["per_param"].items()):
        print(f"{name:30s} {rel:.3e}")
    print(f"checked {report['checked']} coordinates; "
          f"max relative error {report['max_rel_error']:.3e} ({report['worst_param']})")
    ok = report["max_rel_error"] < float(cfg["threshold"])
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    defaults = {"data_dir": None, "host": "127.0.0.1", "port": 8000,
                "max_games": 256, "ui": None}
    cfg = _resolve(args, "serve", defaults)
    data_dir = cfg["data_dir"] or os.environ.get("RBCNET_DATA_DIR", "rbcnet-data")
    app = create_app(data_dir, max_games=int(cfg["max_games"]))
    if cfg["ui"]:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=cfg["ui"], html=True), name="ui")
    print(f"serving on http://{cfg['host']}:{cfg['port']} (data: {data_dir})")
    uvicorn.run(app, host=cfg["host"], port=int(cfg["port"]), log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbcnet",
        description="Reconnaissance Blind Chess agent: data, training, arena, service.")
    parser.add_argument("--config", help="YAML config file with per-subcommand sections")
    parser.add_argument("--deterministic", action="store_true",
                        help="force single-threaded math for bit-reproducible runs")
    parser.add_argument("--threads", type=int, help="torch thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic scripted-bot games")
    p.add_argument("--out")
    p.add_argument("--games", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--bots", help="comma list of greedy/random (ordered pairs cycle)")
    p.add_argument("--turn-cap", dest="turn_cap", type=int)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("validate-data", help="schema + referee replay validation")
    p.add_argument("--data")
    p.add_argument("--schema-only", dest="schema_only", action="store_true", default=None)
    p.set_defaults(fn=cmd_validate_data)

    p = sub.add_parser("train-sl", help="supervised training on game records")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--split", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--move-target", dest="move_target", choices=("requested", "taken"))
    p.add_argument("--net-preset", dest="net_preset", choices=("desk", "full", "tiny"))
    p.add_argument("--trunk-channels", dest="trunk_channels", type=int)
    p.add_argument("--trunk-blocks", dest="trunk_blocks", type=int)
    p.set_defaults(fn=cmd_train_sl)

    p = sub.add_parser("train-rl", help="PPO self-play from a supervised checkpoint")
    p.add_argument("--sl-checkpoint", dest="sl_checkpoint")
    p.add_argument("--out")
    p.add_argument("--games-per-iter", dest="games_per_iter", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--time-budget-s", dest="time_budget_s", type=float)
    p.add_argument("--turn-cap", dest="turn_cap", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--entropy-coef", dest="entropy_coef", type=float)
    p.add_argument("--update-epochs", dest="update_epochs", type=int)
    p.add_argument("--minibatch-size", dest="minibatch_size", type=int)
    p.add_argument("--max-parallel", dest="max_parallel", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_train_rl)

    p = sub.add_parser("arena", help="head-to-head match between two bots")
    p.add_argument("--a")
    p.add_argument("--b")
    p.add_argument("--games", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--turn-cap", dest="turn_cap", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_arena)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--trunk-channels", dest="trunk_channels", type=int)
    p.add_argument("--trunk-blocks", dest="trunk_blocks", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--samples-per-param", dest="samples_per_param", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("serve", help="run the game service")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--max-games", dest="max_games", type=int)
    p.add_argument("--ui", help="directory of built web UI files to serve at /")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_threads(args.deterministic, args.threads)
    np.seterr(all="warn")
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
