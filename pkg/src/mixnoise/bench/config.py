"""Run configuration: INI text with ``[section]`` headers and ``key = value`` lines.

Sections and keys (all optional; defaults in brackets)::

    [run]
    version = 1
    seed = 0                 ; master seed
    out = results            ; output directory
    mode = eval              ; eval | train
    rounds = 20              ; estimation rounds per cell
    frames_per_round = 20    ; frames pooled into one estimate
    length = 256             ; frame length L (multiple of 32)
    oversample = 4
    es = 5.0                 ; signal energy used for noise scaling
    pure_noise = false       ; zero the signal (noise-only frames)
    workers = 1              ; bounded pool size over cells
    timing = wall            ; wall | off (off writes 0 seconds)

    [grid]
    alphas = 1.2, 1.5, 1.8
    lambdas = 0.1, 1, 10
    gsnrs = 0, 10, 20
    schemes = QPSK

    [methods]
    names = none, clip_only
    checkpoint =             ; required when 'unet' is listed

    [train]
    frames_per_cell = 2000
    epochs = 30
    batch = 200
    lr = 0.001

    [baselines]
    ss_beta = 1.0
    kalman_q = 0.01
    lmp_order = 8
    lmp_p = 1.2
    lmp_step = 0.01
    mle_max_iter = 3

Environment variables override file values: ``MIXNOISE_<SECTION>__<KEY>``
(e.g. ``MIXNOISE_RUN__ROUNDS=5``), plus the shortcuts ``MIXNOISE_SEED`` and
``MIXNOISE_OUT``.  Command-line options override both.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field

from ..baselines import METHODS as BASELINE_METHODS
from ..sigmod import _check_scheme

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "ENV_PREFIX", "ALL_METHODS"]

ENV_PREFIX = "MIXNOISE_"
ALL_METHODS = BASELINE_METHODS + ("unet",)
CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _words(text):
    return tuple(v for v in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    out: str = "results"
    mode: str = "eval"
    rounds: int = 20
    frames_per_round: int = 20
    length: int = 256
    oversample: int = 4
    es: float = 5.0
    pure_noise: bool = False
    workers: int = 1
    timing: str = "wall"
    alphas: tuple = (1.2, 1.5, 1.8)
    lambdas: tuple = (0.1, 1.0, 10.0)
    gsnrs: tuple = (0.0, 10.0, 20.0)
    schemes: tuple = ("QPSK",)
    methods: tuple = ("none", "clip_only")
    checkpoint: str | None = None
    train_frames_per_cell: int = 2000
    train_epochs: int = 30
    train_batch: int = 200
    train_lr: float = 1e-3
    baselines: dict = field(default_factory=dict)
    source_text: str = ""

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        if self.mode not in ("eval", "train"):
            raise ConfigError("mode must be 'eval' or 'train'")
        if self.timing not in ("wall", "off"):
            raise ConfigError("timing must be 'wall' or 'off'")
        if self.rounds < 0 or self.frames_per_round < 1 or self.workers < 1:
            raise ConfigError("rounds >= 0, frames_per_round >= 1 and workers >= 1 required")
        if self.length < 32 or self.length % 32:
            raise ConfigError("length must be a positive multiple of 32")
        if not (self.alphas and self.lambdas and self.gsnrs and self.schemes):
            raise ConfigError("grid needs at least one alpha, lambda, gsnr and scheme")
        for a in self.alphas:
            if not 0.5 < a <= 2.0:
                raise ConfigError(f"alpha {a} outside (0.5, 2]")
        if any(lam < 0 for lam in self.lambdas):
            raise ConfigError("lambdas must be nonnegative")
        try:
            object.__setattr__(self, "schemes", tuple(_check_scheme(s) for s in self.schemes))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown or not self.methods:
            raise ConfigError(f"unknown methods {unknown}; choose from {ALL_METHODS}")

    def cells(self):
        """Grid cells ``(alpha, lambda, gsnr, scheme)`` in canonical sorted order."""
        return sorted(
            (a, lam, g, s)
            for s in self.schemes
            for a in self.alphas
            for lam in self.lambdas
            for g in self.gsnrs
        )

    def replace(self, **changes) -> RunConfig:
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("source_text")
        return d


_KEYS = {
    ("run", "version"): ("version", int),
    ("run", "seed"): ("seed", int),
    ("run", "out"): ("out", str),
    ("run", "mode"): ("mode", str),
    ("run", "rounds"): ("rounds", int),
    ("run", "frames_per_round"): ("frames_per_round", int),
    ("run", "length"): ("length", int),
    ("run", "oversample"): ("oversample", int),
    ("run", "es"): ("es", float),
    ("run", "pure_noise"): ("pure_noise", _bool),
    ("run", "workers"): ("workers", int),
    ("run", "timing"): ("timing", str),
    ("grid", "alphas"): ("alphas", _floats),
    ("grid", "lambdas"): ("lambdas", _floats),
    ("grid", "gsnrs"): ("gsnrs", _floats),
    ("grid", "schemes"): ("schemes", _words),
    ("methods", "names"): ("methods", _words),
    ("methods", "checkpoint"): ("checkpoint", lambda v: v.strip() or None),
    ("train", "frames_per_cell"): ("train_frames_per_cell", int),
    ("train", "epochs"): ("train_epochs", int),
    ("train", "batch"): ("train_batch", int),
    ("train", "lr"): ("train_lr", float),
}

_BASELINE_KEYS = {
    "ss_beta": float,
    "kalman_q": float,
    "lmp_order": int,
    "lmp_p": float,
    "lmp_step": float,
    "mle_max_iter": int,
}


def _apply(values, baselines, section, key, raw):
    section, key = section.lower(), key.lower()
    if section == "baselines":
        if key not in _BASELINE_KEYS:
            raise ConfigError(f"unknown key [baselines] {key}")
        try:
            baselines[key] = _BASELINE_KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"[baselines] {key}: {exc}") from None
        return
    if (section, key) not in _KEYS:
        raise ConfigError(f"unknown key [{section}] {key}")
    name, conv = _KEYS[(section, key)]
    try:
        values[name] = conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str, env=None, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from INI text, environment and keyword overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    values, baselines = {}, {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            _apply(values, baselines, section, key, raw)
    env = os.environ if env is None else env
    for var, raw in sorted(env.items()):
        if not var.startswith(ENV_PREFIX):
            continue
        rest = var[len(ENV_PREFIX):]
        if rest == "SEED":
            _apply(values, baselines, "run", "seed", raw)
        elif rest == "OUT":
            _apply(values, baselines, "run", "out", raw)
        elif "__" in rest:
            section, key = rest.split("__", 1)
            _apply(values, baselines, section, key, raw)
    for name, value in overrides.items():
        if value is not None:
            values[name] = value
    return RunConfig(**values, baselines=baselines, source_text=text)


def load_config(path, env=None, **overrides) -> RunConfig:
    """Read ``path`` (a file, or the name of a bundled config such as ``full_grid``)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        bundled = os.path.join(os.path.dirname(os.path.dirname(__file__)), "configs", path + ".ini")
        if os.path.exists(bundled):
            path = bundled
        else:
            raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, env=env, **overrides)
