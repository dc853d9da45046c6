"""``hybridqrl`` command line: train, gradcheck, surface, hist, rollout, smooth.

Exit codes: 0 success, 1 validation error, 2 runtime failure, 3 gradient
check failure. Relative output paths are resolved against
``$HYBRIDQRL_OUTPUT_ROOT`` (default: the working directory).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__, analysis, gradcheck
from .checkpoint import checkpoint_hash, load_checkpoint, read_header, save_checkpoint
from .config import PRESETS, RunConfig, load_config, parse_override, resolve
from .envs import ENVIRONMENTS, PreprocConfig, make_pipeline, spec_sheet
from .errors import ArchitectureError, ArgumentError, ConfigurationError
from .model import build_net
from .rl import Trainer, rollout

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_GRADCHECK = 0, 1, 2, 3
OUTPUT_ROOT_VAR = "HYBRIDQRL_OUTPUT_ROOT"
SMOOTH_WINDOW = {"mini-pong": 10, "mini-breakout": 250}

log = logging.getLogger("hybridqrl")


def output_path(path) -> Path:
    path = Path(path)
    if path.is_absolute():
        return path
    return Path(os.environ.get(OUTPUT_ROOT_VAR, ".")) / path


# ---------------------------------------------------------------------------
# train


def _check_shapes(config: RunConfig) -> None:
    p = config.preproc
    expected = (p.target_size, p.target_size, p.stack)
    if config.model.input_shape != expected:
        raise ConfigurationError(f"model.input_shape {config.model.input_shape} does not match preproc output {expected}")
    sheet = {**spec_sheet(config.env), **config.env_overrides}
    if int(sheet["size"]) * int(sheet["scale"]) < p.target_size:
        raise ConfigurationError("preproc.target_size exceeds the rendered frame size")


def cmd_train(config: RunConfig, quiet: bool = False) -> Path:
    """Run one training job; returns the run directory."""
    _check_shapes(config)
    run_dir = output_path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "checkpoints").mkdir(exist_ok=True)
    manifest = {
        "config": config.to_flat(),
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    env = make_pipeline(config.env, config.seed, config.preproc, **config.env_overrides)
    net = build_net(config.model, seed=config.seed)
    meta = {"env": config.env, "env_overrides": {k: list(v) if isinstance(v, tuple) else v for k, v in config.env_overrides.items()},
            "preproc": asdict(config.preproc), "seed": config.seed, "preset": config.preset}
    hist = analysis.FeatureHistogramLogger(keep_samples=True)
    log_fh = open(run_dir / "log.jsonl", "w")

    def on_record(rec):
        log_fh.write(json.dumps(rec) + "\n")
        log_fh.flush()
        if not quiet and rec["type"] == "episode" and rec["episode"] % 20 == 0:
            log.info("episode %d step %d return %.1f eps %.3f", rec["episode"], rec["end_step"], rec["return_env_units"], rec["epsilon"])

    def on_step(tr):
        if config.checkpoint_every and tr.t % config.checkpoint_every == 0:
            save_checkpoint(tr.online, run_dir / "checkpoints" / f"step-{tr.t:09d}.ckpt", {**meta, "step": tr.t})

    trainer = Trainer(env, net, config.trainer, setting=config.preset, on_record=on_record, on_features=hist, on_step=on_step)
    try:
        run = trainer.train()
    finally:
        log_fh.close()
    save_checkpoint(trainer.online, run_dir / "final.ckpt", {**meta, "step": trainer.t})

    window = SMOOTH_WINDOW.get(config.env, 10)
    returns = run.returns
    smoothed = analysis.smooth_returns(returns, window)
    _write_returns_csv(run_dir / "returns.csv", returns, smoothed)
    (run_dir / "features.csv").write_text(hist.summary_csv())
    if hist.samples:
        np.savez_compressed(run_dir / "features.npz", steps=np.array([h.step for h in hist.snapshots]),
                            **{f"s{i}": s for i, s in enumerate(hist.samples)})
    summary = {
        "steps": run.steps,
        "episodes": len(returns),
        "optimizer_steps": run.n_updates,
        "target_syncs": len(run.syncs),
        f"trailing_mean_{window}": analysis.trailing_mean(returns, window),
        "wall_clock_s": run.wall_clock,
    }
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    manifest["summary"] = summary
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if len(returns):
        from .plotting import plot_returns

        plot_returns({config.preset or config.model.model_type: smoothed}, run_dir / "returns.png", window)
    return run_dir


def _write_returns_csv(path, returns, smoothed) -> None:
    lines = ["episode,return_env_units,smoothed"]
    lines += [f"{i},{r!r},{s!r}" for i, (r, s) in enumerate(zip(returns.tolist(), smoothed.tolist()))]
    Path(path).write_text("\n".join(lines) + "\n")


def load_run_config(path) -> RunConfig:
    """Config of a finished run, reconstructed from its manifest."""
    data = json.loads(Path(path).read_text())
    return RunConfig.from_flat(data["config"] if "config" in data else data)


# ---------------------------------------------------------------------------
# gradcheck


def cmd_gradcheck(scopes: Sequence[str] = gradcheck.SCOPES, seed: int = 0, stream=None):
    stream = stream or sys.stdout
    results = []
    for scope in scopes:
        for r in gradcheck.run_suite(scope, seed):
            print(r.line(), file=stream)
            results.append(r)
    ok = all(r.passed for r in results)
    print(f"{'ALL PASSED' if ok else 'FAILURES'}: {sum(r.passed for r in results)}/{len(results)} checks", file=stream)
    return ok, results


# ---------------------------------------------------------------------------
# analysis commands


def _env_from_checkpoint(header: dict, env_name: Optional[str], seed: int):
    meta = header.get("metadata", {})
    name = env_name or meta.get("env", "mini-pong")
    if name not in ENVIRONMENTS:
        raise ConfigurationError(f"unknown environment {name!r}")
    preproc = PreprocConfig(**meta.get("preproc", {}))
    overrides = meta.get("env_overrides", {}) if name == meta.get("env") else {}
    overrides = {k: tuple(v) if isinstance(v, list) else v for k, v in overrides.items()}
    return make_pipeline(name, seed, preproc, **overrides)


def cmd_surface(checkpoint, output, indices=None, feature_seed: int = 0, ranges=None, expand: float = 1.0,
                resolution: int = 41, space: str = "conv", episode_log=None, env_name=None, episode_seed: int = 0,
                epsilon: float = 0.0, max_steps: Optional[int] = 5000, plot: bool = True) -> dict:
    header = read_header(checkpoint)
    net = load_checkpoint(checkpoint)
    head = analysis.truncate_model(net)
    if episode_log is not None:
        conv_log = analysis.ConvOutputLog.load(episode_log)
        if conv_log.dim != net.spec.conv_output_dim:
            raise ArchitectureError(f"episode log has {conv_log.dim} features, network expects {net.spec.conv_output_dim}")
    else:
        env = _env_from_checkpoint(header, env_name, episode_seed)
        conv_log = analysis.log_episode(net, env, epsilon, episode_seed, max_steps)
    vectors = conv_log.vectors.astype(np.float64)
    if space == "latent":
        vectors = np.asarray(head.latent(vectors), dtype=np.float64)
    n_in = head.n_inputs(space)
    i, j = indices if indices is not None else analysis.pick_features(n_in, feature_seed)
    if not (0 <= i < n_in and 0 <= j < n_in):
        raise ArgumentError(f"feature indices must lie in [0, {n_in})")
    if ranges is None:
        ranges = analysis.auto_ranges(vectors, i, j, expand)
    grid = analysis.q_surface(head, vectors.mean(axis=0), i, j, ranges, resolution, space)
    out = output_path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, manifest_path = grid.write(
        out,
        checkpoint_sha256=checkpoint_hash(checkpoint),
        model_type=net.spec.model_type,
        feature_seed=None if indices is not None else feature_seed,
        episode_seed=episode_seed,
        episode_steps=len(conv_log),
        expand=expand,
    )
    paths = {"csv": str(csv_path), "manifest": str(manifest_path)}
    if plot:
        from .plotting import plot_surface

        paths["png"] = str(plot_surface(grid, out.with_suffix(".png"), f"{net.spec.model_type} head, inputs {i} and {j}"))
    return paths


def cmd_rollout(checkpoint, episodes: int, epsilon: float = 0.0, seed: int = 0, env_name=None) -> dict:
    if episodes < 0:
        raise ArgumentError("episodes must be >= 0")
    if not 0.0 <= epsilon <= 1.0:
        raise ArgumentError("epsilon must lie in [0, 1]")
    header = read_header(checkpoint)
    net = load_checkpoint(checkpoint)
    env = _env_from_checkpoint(header, env_name, seed)
    if env.env.n_actions != net.spec.n_actions or env.config.stack != net.spec.input_shape[2]:
        raise ArchitectureError("checkpoint does not fit the environment's action or observation space")
    returns = rollout(net, env, episodes, epsilon, seed)
    return {
        "episodes": int(episodes),
        "epsilon": epsilon,
        "seed": seed,
        "mean": float(returns.mean()) if episodes else None,
        "std": float(returns.std()) if episodes else None,
        "returns": returns.tolist(),
    }


def cmd_smooth(logs: Sequence, window: int, output, plot: bool = True) -> dict:
    if window < 1:
        raise ArgumentError("window must be >= 1")
    curves = {}
    for p in logs:
        curves[Path(p).parent.name or str(p)] = analysis.smooth_returns(analysis.read_returns(p), window)
    out = output_path(output)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["run,episode,smoothed"]
    for name, c in curves.items():
        lines += [f"{name},{i},{v!r}" for i, v in enumerate(c.tolist())]
    out.write_text("\n".join(lines) + "\n")
    paths = {"csv": str(out)}
    if plot and curves:
        from .plotting import plot_returns

        paths["png"] = str(plot_returns(curves, out.with_suffix(".png"), window))
    return paths


def cmd_hist(run_dir, output=None, plot: bool = True) -> dict:
    run_dir = Path(run_dir)
    src = run_dir / "features.npz"
    if not src.exists():
        raise ArgumentError(f"{src} not found (train writes it when latent snapshots were taken)")
    logger = analysis.FeatureHistogramLogger()
    with np.load(src) as data:
        for k, step in enumerate(data["steps"]):
            logger(int(step), data[f"s{k}"])
    out = output_path(output) if output else run_dir / "histograms.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(logger.counts_csv())
    summary = out.with_name(out.stem + "-summary.csv")
    summary.write_text(logger.summary_csv())
    paths = {"csv": str(out), "summary": str(summary)}
    if plot and logger.snapshots:
        from .plotting import plot_histograms

        paths["png"] = str(plot_histograms(logger.snapshots, out.with_suffix(".png")))
    return paths


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridqrl", description="Hybrid quantum-classical deep Q-learning toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train an agent and write a run directory")
    t.add_argument("--config", help="JSON file of flat dotted keys")
    t.add_argument("--preset", choices=sorted(PRESETS), help="named hyperparameter setting")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key (repeatable)")
    t.add_argument("--output-dir", help="run directory (default: runs/<preset or model>-seed<seed>)")
    t.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    g = sub.add_parser("gradcheck", help="run gradient oracle suites")
    g.add_argument("--scope", action="append", choices=gradcheck.SCOPES, help="suite to run (default: all)")
    g.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("surface", help="Q-value surface over two head inputs")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--output", default="surface.csv")
    s.add_argument("--episode-log", help="npz conv-output log; default: play one episode")
    s.add_argument("--env", choices=sorted(ENVIRONMENTS), help="environment for the logged episode")
    s.add_argument("--episode-seed", type=int, default=0)
    s.add_argument("--epsilon", type=float, default=0.0, help="exploration during the logged episode")
    s.add_argument("--max-steps", type=int, default=5000)
    s.add_argument("--indices", type=int, nargs=2, metavar=("I", "J"))
    s.add_argument("--feature-seed", type=int, default=0, help="seed for random feature choice")
    s.add_argument("--range-i", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--range-j", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--expand", type=float, default=1.0, help="widen auto ranges about their centre (e.g. 4)")
    s.add_argument("--resolution", type=int, default=41)
    s.add_argument("--space", choices=analysis.SPACES, default="conv")
    s.add_argument("--no-plot", action="store_true")

    h = sub.add_parser("hist", help="latent-feature histograms of a run")
    h.add_argument("--run-dir", required=True)
    h.add_argument("--output")
    h.add_argument("--no-plot", action="store_true")

    r = sub.add_parser("rollout", help="play episodes with a frozen checkpoint")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--env", choices=sorted(ENVIRONMENTS))
    r.add_argument("--episodes", type=int, default=10)
    r.add_argument("--epsilon", type=float, default=0.0)
    r.add_argument("--seed", type=int, default=0)

    m = sub.add_parser("smooth", help="trailing-average return curves from run logs")
    m.add_argument("logs", nargs="+", help="log.jsonl files")
    m.add_argument("--window", type=int, default=10)
    m.add_argument("--output", default="smoothed.csv")
    m.add_argument("--no-plot", action="store_true")
    return p


def _train_config(args) -> RunConfig:
    keys = {}
    if args.config:
        keys.update(load_config(args.config).to_flat())
        keys.pop("config_version", None)
        if args.preset:
            keys.pop("audit", None)
    for item in args.set:
        k, v = parse_override(item)
        keys[k] = v
    preset = args.preset or keys.pop("preset", None)
    if args.output_dir:
        keys["output_dir"] = args.output_dir
    elif "output_dir" not in keys:
        seed = keys.get("seed", 0)
        keys["output_dir"] = f"runs/{preset or keys.get('model.type', 'hybrid')}-seed{seed}"
    return resolve(keys, preset=preset)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "train":
            config = _train_config(args)
            if args.print_config:
                _check_shapes(config)
                print(config.to_json())
                return EXIT_OK
            run_dir = cmd_train(config, quiet=not args.verbose)
            print(json.dumps({"run_dir": str(run_dir), **json.loads((run_dir / "manifest.json").read_text())["summary"]}))
        elif args.command == "gradcheck":
            ok, _ = cmd_gradcheck(args.scope or gradcheck.SCOPES, args.seed)
            return EXIT_OK if ok else EXIT_GRADCHECK
        elif args.command == "surface":
            ranges = None
            if args.range_i or args.range_j:
                if not (args.range_i and args.range_j):
                    raise ArgumentError("give both --range-i and --range-j")
                ranges = (tuple(args.range_i), tuple(args.range_j))
            paths = cmd_surface(args.checkpoint, args.output, args.indices, args.feature_seed, ranges, args.expand,
                                args.resolution, args.space, args.episode_log, args.env, args.episode_seed,
                                args.epsilon, args.max_steps, plot=not args.no_plot)
            print(json.dumps(paths))
        elif args.command == "hist":
            print(json.dumps(cmd_hist(args.run_dir, args.output, plot=not args.no_plot)))
        elif args.command == "rollout":
            print(json.dumps(cmd_rollout(args.checkpoint, args.episodes, args.epsilon, args.seed, args.env)))
        elif args.command == "smooth":
            print(json.dumps(cmd_smooth(args.logs, args.window, args.output, plot=not args.no_plot)))
    except (ConfigurationError, ArgumentError, ArchitectureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failures of any kind
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
