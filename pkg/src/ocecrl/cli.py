"""Command-line entry point: ``run``, ``verify``, ``eval`` and ``report``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import RunConfig
from .diagnostics import emit_report, evaluate_policy, read_history_csv, write_history_csv
from .envs.registry import build_env
from .errors import ValidationError
from .sgda import load_checkpoint, run
from .verify import run_suite

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


@dataclass
class CommandResult:
    status: int
    artifacts: list[str] = field(default_factory=list)
    summary: str = ""


def _out_dir(arg: str | None, config: RunConfig | None = None) -> Path:
    chosen = arg or (config.out_dir if config else None) or os.environ.get("OCECRL_OUT_DIR") or "ocecrl-out"
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, data: dict) -> Path:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def _eval_kwargs(config: RunConfig) -> dict:
    c = config.constraints[0] if config.constraints else None
    return dict(
        betas=config.betas,
        thresholds=config.thresholds,
        orientation=c.orientation if c else "reward",
        constraint_index=1,
        horizon=config.horizon,
    )


def cmd_run(args) -> CommandResult:
    config = RunConfig.load(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = _out_dir(args.out, config)
    config = replace(config, out_dir=str(out))
    result = run(config)
    paths = [
        write_history_csv(result.history, out / "history.csv"),
        _write_json(out / "checkpoint.json", result.checkpoint()),
        _write_json(out / "config.json", config.to_dict()),
    ]
    if config.m > 0:
        report = evaluate_policy(result.env, result.final_policy, args.episodes, seed=config.seed,
                                 converged_t=result.state.t, **_eval_kwargs(config))
        emitted = emit_report(result.history, report, out, run_info=_run_info(result))
        paths += [p for k, p in emitted.items() if k != "history"]
    t = ", ".join(f"{x:.4g}" for x in result.state.t)
    lam = ", ".join(f"{x:.4g}" for x in result.state.lam)
    return CommandResult(EXIT_OK, [str(p) for p in paths], f"run finished: J={config.iterations} t=[{t}] lambda=[{lam}]")


def _run_info(result) -> dict:
    return {
        "iterations": result.config.iterations,
        "seed": result.config.seed,
        "final_t": result.state.t.tolist(),
        "final_lambda": result.state.lam.tolist(),
        "sampled_index": result.sampled_index,
    }


def cmd_verify(args) -> CommandResult:
    checks = run_suite(args.suite)
    passed = all(c.passed for c in checks)
    payload = {"suite": args.suite, "passed": passed, "checks": [c.as_dict() for c in checks]}
    print(json.dumps(payload, indent=2))
    artifacts = []
    if args.out:
        artifacts.append(str(_write_json(_out_dir(args.out) / f"verify_{args.suite}.json", payload)))
    n_ok = sum(c.passed for c in checks)
    return CommandResult(EXIT_OK if passed else EXIT_RUNTIME, artifacts, f"suite {args.suite}: {n_ok}/{len(checks)} checks passed")


def _load_for_eval(path):
    try:
        data, policy = load_checkpoint(path)
        config = RunConfig.from_dict(data["config"]) if "config" in data else None
    except ValidationError as exc:
        raise RuntimeError(f"corrupt checkpoint: {exc}") from exc
    if config is None:
        raise RuntimeError("corrupt checkpoint: no embedded config")
    return data, policy, config


def cmd_eval(args) -> CommandResult:
    data, policy, config = _load_for_eval(args.checkpoint)
    env, _ = build_env(config.env)
    seed = config.seed if args.seed is None else args.seed
    report = evaluate_policy(env, policy, args.episodes, seed=seed, converged_t=data["t"], **_eval_kwargs(config))
    out = _out_dir(args.out, None)
    d = report.as_dict()
    path = _write_json(out / "eval.json", d)
    return CommandResult(EXIT_OK, [str(path)],
                         f"eval: {report.n_episodes} episodes, mean return {report.mean_return:.4g}, "
                         f"violation rate {report.violation_rate:.3g}")


def cmd_report(args) -> CommandResult:
    data, policy, config = _load_for_eval(args.checkpoint)
    run_dir = Path(args.checkpoint).parent
    try:
        history = read_history_csv(run_dir / "history.csv")
    except (OSError, ValueError, KeyError) as exc:
        raise RuntimeError(f"cannot read run history next to the checkpoint: {exc}") from exc
    env, _ = build_env(config.env)
    seed = config.seed if args.seed is None else args.seed
    report = evaluate_policy(env, policy, args.episodes, seed=seed, converged_t=data["t"], **_eval_kwargs(config))
    info = {"iterations": len(history), "seed": seed, "final_t": data["t"], "final_lambda": data["lambda"]}
    emitted = emit_report(history, report, _out_dir(args.out, None), run_info=info)
    return CommandResult(EXIT_OK, [str(p) for p in emitted.values()], "report written")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ocecrl", description="Risk-aware constrained RL with OCE risk measures.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the outer descent-ascent loop from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--episodes", type=int, default=100)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a named property suite")
    v.add_argument("--suite", default="all")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("eval", help="evaluate a checkpointed policy without learning")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    rp = sub.add_parser("report", help="write report files for a finished run directory")
    rp.add_argument("--checkpoint", required=True)
    rp.add_argument("--episodes", type=int, default=100)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "episodes", 1) is not None and getattr(args, "episodes", 1) < 1:
        print("error: --episodes must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - the runtime exit path reports every failure
        dump = Path(os.environ.get("OCECRL_OUT_DIR") or ".") / "ocecrl-error.txt"
        try:
            dump.write_text(traceback.format_exc())
            where = f" (details in {dump})"
        except OSError:
            where = ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return EXIT_RUNTIME
    print(result.summary)
    for a in result.artifacts:
        print(f"  wrote {a}")
    return result.status


if __name__ == "__main__":
    sys.exit(main())
