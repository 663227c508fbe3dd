"""Command-line entry point.

Exit status: 0 on success, 1 on usage or configuration errors, 2 on runtime
failures (including any benchmark cell that failed).  Environment overrides
use the ``MIXNOISE_`` prefix; see :mod:`mixnoise.bench.config`.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import ENV_PREFIX, ConfigError, RunConfig, load_config

log = logging.getLogger("mixnoise")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p, config_required=False):
    p.add_argument("--config", required=False, default=None,
                   help="INI config file or bundled name (e.g. full_grid); "
                        f"falls back to ${ENV_PREFIX}CONFIG" + (" (required)" if config_required else ""))
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", default=None, help="output directory (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixnoise", description="Mixed impulsive/Gaussian noise estimation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="simulate a labelled training dataset")
    _common(p, config_required=True)

    p = sub.add_parser("train", help="train the U-net++ separator")
    _common(p, config_required=True)
    p.add_argument("--data", default=None, help="dataset directory from gen-data (default: simulate)")
    p.add_argument("--small", action="store_true", help="use a reduced-width network")

    p = sub.add_parser("estimate", help="estimate noise parameters of one frame or sample file")
    p.add_argument("--seed", type=int, default=0, help="seed of the half-sample draws")
    p.add_argument("input", help=".impf frame, .npy array or whitespace-separated text")
    p.add_argument("--method", default="none", help="separation method applied first")
    p.add_argument("--checkpoint", default=None, help="U-net++ checkpoint for --method unet")
    p.add_argument("--scheme", default=None, help="modulation scheme (needed by mle_alt for raw arrays)")

    p = sub.add_parser("benchmark", help="run the estimation benchmark over a grid")
    _common(p, config_required=True)
    p.add_argument("--checkpoint", default=None, help="U-net++ checkpoint for the unet method")
    p.add_argument("--rounds", type=int, default=None, help="override rounds per cell")

    p = sub.add_parser("report", help="re-emit CSV/SVG outputs from a manifest")
    p.add_argument("manifest", help="manifest.json written by benchmark")
    p.add_argument("--out", default=None, help="output directory (default: manifest's directory)")
    p.add_argument("--format", action="append", choices=("csv", "json", "svg"), default=None)

    p = sub.add_parser("selftest", help="run the fast invariant suite")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args) -> RunConfig:
    path = args.config or os.environ.get(ENV_PREFIX + "CONFIG")
    overrides = dict(seed=args.seed, out=args.out)
    if getattr(args, "checkpoint", None):
        overrides["checkpoint"] = args.checkpoint
    if getattr(args, "rounds", None) is not None:
        overrides["rounds"] = args.rounds
    if path is None:
        raise ConfigError("no config given: pass --config or set MIXNOISE_CONFIG")
    return load_config(path, **overrides)


def _train_spec(cfg: RunConfig):
    from ..sigmod import DatasetSpec

    return DatasetSpec(
        alphas=list(cfg.alphas), lambdas=list(cfg.lambdas), gsnrs=list(cfg.gsnrs),
        schemes=list(cfg.schemes), frames_per_cell=cfg.train_frames_per_cell, L=cfg.length,
        oversample=cfg.oversample, es=cfg.es, master_seed=cfg.seed,
    )


def cmd_gen_data(args):
    from ..sigmod import build_dataset

    cfg = _config(args)
    manifest = build_dataset(_train_spec(cfg), cfg.out)
    print(f"wrote {manifest.n_frames} frames to {cfg.out}")
    return EXIT_OK


def cmd_train(args):
    from ..sigmod import load_dataset, simulate_dataset, stack_frames
    from ..unetpp import UnetConfig, build_network, save_checkpoint, train

    cfg = _config(args)
    if args.data:
        _, frames = load_dataset(args.data)
    else:
        frames = simulate_dataset(_train_spec(cfg))
    Y, S, _ = stack_frames(frames)
    ucfg = UnetConfig(length=Y.shape[-1])
    if args.small:
        ucfg = UnetConfig(backbone_channels=(4, 8, 12, 16, 20, 24), length=Y.shape[-1], head_hidden=32)
    net = build_network(ucfg, seed=cfg.seed)

    def progress(epoch, loss):
        log.info("epoch %d loss %.6g", epoch, loss)

    net, curve = train(net, Y, S, epochs=cfg.train_epochs, batch=cfg.train_batch,
                       seed=cfg.seed, lr=cfg.train_lr, callback=progress)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, "model.unpp")
    save_checkpoint(net, path)
    with open(os.path.join(cfg.out, "train_curve.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        fh.writelines(f"{i},{v!r}\n" for i, v in enumerate(curve))
    print(f"saved {path}; loss {curve[0]:.4g} -> {curve[-1]:.4g}")
    return EXIT_OK


def _read_input(path):
    from ..sigmod import read_frame

    if path.endswith(".impf"):
        return read_frame(path)
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path)


def cmd_estimate(args):
    from ..baselines import BaselineSpec, run_baseline
    from ..ecfest import estimate

    data = _read_input(args.input)
    method = args.method
    if method == "unet":
        from ..unetpp import load_checkpoint, separate_and_cancel

        if not args.checkpoint:
            raise ConfigError("--method unet needs --checkpoint")
        noise = separate_and_cancel(load_checkpoint(args.checkpoint), data)
    elif method == "none" and not hasattr(data, "y"):
        noise = np.asarray(data, dtype=np.float64)
    else:
        try:
            spec = BaselineSpec(method=method, scheme=args.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        noise = run_baseline(spec, data)
    result = estimate(noise, random_state=args.seed)
    print(json.dumps(result.as_dict(), indent=2, sort_keys=True, default=str))
    return EXIT_OK


def cmd_benchmark(args):
    from .report import emit_report
    from .runner import run_benchmark

    cfg = _config(args)
    result = run_benchmark(cfg)
    for failure in result.failures:
        log.error("cell %s failed: %s", failure.cell, failure.error)
    if result.rows:
        for path in emit_report(result, cfg.out):
            log.info("wrote %s", path)
        print(f"{len(result.rows)} rows written to {cfg.out}")
    return EXIT_OK if result.ok else EXIT_RUNTIME


def cmd_report(args):
    from .report import emit_report, load_manifest

    if not os.path.exists(args.manifest):
        raise ConfigError(f"manifest not found: {args.manifest}")
    result = load_manifest(args.manifest)
    out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    formats = tuple(args.format or ("csv", "svg"))
    paths = emit_report(result, out, formats)
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def cmd_selftest(args):
    from .selftest import run_selftest

    failures = run_selftest(seed=args.seed)
    return EXIT_OK if not failures else EXIT_RUNTIME


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "report": cmd_report,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"mixnoise: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"mixnoise: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
