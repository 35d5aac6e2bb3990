"""Command-line front end: ``ppgl train | eval | plot | report``.

Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .checkpoint import CheckpointError
from .config import ALGOS, POLICIES, ConfigError, TrainConfig, coerce_value, load_config_file, resolve_config
from .envs import ENVIRONMENTS, make_env

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3
SEED_ENV_VAR = "PPGL_SEED"

logger = logging.getLogger("ppgl")

# flags with bespoke spelling; every other TrainConfig field gets --field-name
_SPECIAL = {"total_timesteps", "out_dir", "stale_hidden"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ppgl", description="PPO / PPG training lab")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every update")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    train = sub.add_parser("train", help="train a policy")
    train.add_argument("--env", choices=list(ENVIRONMENTS))
    train.add_argument("--algo", choices=ALGOS)
    train.add_argument("--policy", choices=POLICIES)
    train.add_argument("--timesteps", dest="total_timesteps", type=int)
    train.add_argument("--config", type=Path, help="key = value file; flags override it")
    train.add_argument("--out", dest="out_dir", help="run directory")
    train.add_argument("--stale-hidden", dest="stale_hidden", action="store_true", default=None)
    train.add_argument("--resume", type=Path, help="checkpoint to continue from")
    for f in fields(TrainConfig):
        if f.name in _SPECIAL or f.name in ("env", "algo", "policy"):
            continue
        flag = "--" + f.name.replace("_", "-")
        train.add_argument(flag, dest=f.name, metavar=f.name.upper(), type=str, default=None)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", type=Path, required=True)
    ev.add_argument("--env", choices=list(ENVIRONMENTS), required=True)
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--deterministic", action="store_true")
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--json", dest="json_out", type=Path, help="also write the full report here")

    plot = sub.add_parser("plot", help="render metrics.csv as an SVG reward curve")
    plot.add_argument("--log", type=Path, required=True)
    plot.add_argument("--out", type=Path, required=True)
    plot.add_argument("--window", type=int, default=10)

    rep = sub.add_parser("report", help="tabulate eval rewards over run directories")
    rep.add_argument("runs", nargs="+", type=Path)
    rep.add_argument("--mode", choices=("deterministic", "stochastic"), default="deterministic")
    return parser


def _seed_fallback() -> int | None:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from None


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    """Defaults < PPGL_SEED < config file < command-line flags."""
    file_values = {}
    if args.config is not None:
        file_values = load_config_file(args.config)
    if "seed" not in file_values:
        env_seed = _seed_fallback()
        if env_seed is not None:
            file_values["seed"] = env_seed
    overrides = {}
    for f in fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        overrides[f.name] = coerce_value(f.name, value) if isinstance(value, str) and f.type != "str" else value
    return resolve_config(file_values, overrides)


def default_run_dir(config: TrainConfig) -> Path:
    return Path("runs") / f"{config.env}_{config.algo}_{config.policy}_s{config.seed}"


def cmd_train(args) -> int:
    from .harness import train

    config = config_from_args(args)
    out_dir = Path(config.out_dir) if config.out_dir else default_run_dir(config)
    result = train(config, out_dir=out_dir, resume=args.resume)
    for event in result.events:
        print(event, file=sys.stderr)
    last = result.metrics[-1].mean_reward if result.metrics else float("nan")
    print(f"run {out_dir}: {result.updates} updates, {result.total_steps} steps, mean_reward {last:.2f}")
    if result.eval_report is not None:
        print(f"eval (deterministic) mean {result.eval_report.mean:.2f} std {result.eval_report.std:.2f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .harness import evaluate, load_policy

    if not args.checkpoint.exists():
        print(f"checkpoint not found: {args.checkpoint}", file=sys.stderr)
        return EXIT_IO
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    policy = load_policy(args.checkpoint)
    env = make_env(args.env)
    if (policy.obs_dim, policy.act_dim) != (env.obs_dim, env.act_dim):
        raise ValueError(
            f"checkpoint expects obs_dim={policy.obs_dim}, act_dim={policy.act_dim}; "
            f"{args.env} has obs_dim={env.obs_dim}, act_dim={env.act_dim}"
        )
    seed = args.seed if args.seed is not None else (_seed_fallback() or 0)
    mode = "deterministic" if args.deterministic else "stochastic"
    report = evaluate(policy, args.env, args.episodes, mode=mode, seed=seed)
    print(
        f"{args.env} {mode}: mean {report.mean:.3f} std {report.std:.3f} min {report.min:.3f} "
        f"max {report.max:.3f} progress_fraction {report.progress_fraction:.2f} ({report.n_episodes} episodes)"
    )
    if args.json_out is not None:
        args.json_out.write_text(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plot import emit_reward_curve_svg

    if not args.log.exists():
        print(f"metrics file not found: {args.log}", file=sys.stderr)
        return EXIT_IO
    if args.window < 1:
        raise UsageError("--window must be >= 1")
    print(emit_reward_curve_svg(args.log, args.out, window=args.window))
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import report_table

    missing = [str(p) for p in args.runs if not p.is_dir()]
    if missing:
        print(f"not a directory: {', '.join(missing)}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(report_table(args.runs, mode=args.mode))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "plot": cmd_plot, "report": cmd_report}


def parse_and_run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"ppgl {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CheckpointError) as exc:
        print(f"ppgl {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - the exit-code contract needs a catch-all
        print(f"ppgl {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
