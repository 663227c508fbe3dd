"""Benchmark orchestration: fresh frames per cell, separation, estimation, aggregation."""

from __future__ import annotations

import math
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .._validation import EstimationFailure
from ..baselines import BaselineSpec, run_baseline
from ..ecfest import estimate
from ..sigmod import frame_seed, make_frame
from .config import RunConfig

__all__ = ["ResultRow", "CellFailure", "BenchmarkResult", "cell_id", "cell_frames", "run_cell", "run_benchmark"]


@dataclass
class ResultRow:
    alpha: float
    lam: float
    gsnr: float
    scheme: str
    method: str
    alpha_hats: list = field(default_factory=list)
    gamma_g_hats: list = field(default_factory=list)
    gamma_s_hats: list = field(default_factory=list)
    lambda_hats: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def key(self):
        return (self.alpha, self.lam, self.gsnr, self.scheme, self.method)

    @property
    def rounds(self) -> int:
        return len(self.alpha_hats)

    @staticmethod
    def _mean(values) -> float:
        arr = np.asarray(values, dtype=np.float64)
        arr = arr[~np.isnan(arr)]
        return float(np.mean(arr)) if arr.size else math.nan

    @property
    def alpha_hat_mean(self) -> float:
        return self._mean(self.alpha_hats)

    @property
    def gamma_g_hat_mean(self) -> float:
        return self._mean(self.gamma_g_hats)

    @property
    def gamma_s_hat_mean(self) -> float:
        return self._mean(self.gamma_s_hats)

    @property
    def lambda_hat_mean(self) -> float:
        return self._mean(self.lambda_hats)


@dataclass(frozen=True)
class CellFailure:
    cell: tuple
    error: str


@dataclass
class BenchmarkResult:
    config: RunConfig
    rows: list
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def cell_id(cell) -> int:
    """Stable integer id of a grid cell, independent of the rest of the grid."""
    alpha, lam, gsnr, scheme = cell
    return zlib.crc32(f"{float(alpha)!r}|{float(lam)!r}|{float(gsnr)!r}|{scheme}".encode())


def cell_frames(cfg: RunConfig, cell, round_index: int):
    """The ``frames_per_round`` frames of one round, identical for every method."""
    alpha, lam, gsnr, scheme = cell
    cid = cell_id(cell)
    first = round_index * cfg.frames_per_round
    return [
        make_frame(
            scheme, alpha, lam, gsnr, cfg.length,
            seed=frame_seed(cfg.seed, cid, first + k),
            oversample=cfg.oversample, es=cfg.es, signal=not cfg.pure_noise,
        )
        for k in range(cfg.frames_per_round)
    ]


def _noise_estimates(method, frames, cfg, net):
    if method == "unet":
        from ..unetpp import predict

        Y = np.stack([f.y for f in frames])
        return Y - predict(net, Y)
    spec = BaselineSpec(method=method, scheme=frames[0].scheme, **cfg.baselines)
    return np.stack([run_baseline(spec, f) for f in frames])


def run_cell(cfg: RunConfig, cell, net=None):
    """All methods on one cell; returns a list of :class:`ResultRow`."""
    alpha, lam, gsnr, scheme = cell
    rows = {m: ResultRow(alpha, lam, gsnr, scheme, m) for m in cfg.methods}
    for r in range(cfg.rounds):
        frames = cell_frames(cfg, cell, r)
        for method in cfg.methods:
            row = rows[method]
            start = time.perf_counter()
            noise = _noise_estimates(method, frames, cfg, net)
            try:
                res = estimate(noise)
                vals = (res.alpha_hat, res.gamma_g_hat, res.gamma_s_hat, res.lambda_hat)
            except EstimationFailure:
                vals = (math.nan,) * 4
            elapsed = time.perf_counter() - start
            row.alpha_hats.append(float(vals[0]))
            row.gamma_g_hats.append(float(vals[1]))
            row.gamma_s_hats.append(float(vals[2]))
            row.lambda_hats.append(float(vals[3]))
            if cfg.timing == "wall":
                row.seconds += elapsed
    return [rows[m] for m in cfg.methods]


def _load_net(cfg):
    if "unet" not in cfg.methods:
        return None
    if not cfg.checkpoint:
        raise ValueError("method 'unet' requires a checkpoint ([methods] checkpoint or --checkpoint)")
    from ..unetpp import load_checkpoint

    return load_checkpoint(cfg.checkpoint)


def _isolated(cfg, cell, net):
    try:
        if net is None and "unet" in cfg.methods:
            net = _load_net(cfg)
        return run_cell(cfg, cell, net), None
    except Exception as exc:  # one failing cell must not abort the run
        return [], CellFailure(tuple(cell), f"{type(exc).__name__}: {exc}")


def run_benchmark(cfg: RunConfig, net=None) -> BenchmarkResult:
    """Run every cell of ``cfg`` and collect rows sorted by ``(cell, method)``.

    ``net`` overrides the configured checkpoint for the ``unet`` method.
    Cells run in a process pool of ``cfg.workers``; the output does not
    depend on scheduling.
    """
    if "unet" in cfg.methods and net is None:
        net = _load_net(cfg)
    if cfg.rounds == 0:
        warnings.warn("rounds = 0: benchmark produces no rows", RuntimeWarning, stacklevel=2)
        return BenchmarkResult(cfg, [], [])
    cells = cfg.cells()
    if cfg.workers == 1 or len(cells) == 1:
        outcomes = [_isolated(cfg, c, net) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_isolated, [cfg] * len(cells), cells, [net] * len(cells)))
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows = sorted(
        (row for found, _ in outcomes for row in found),
        key=lambda r: (r.alpha, r.lam, r.gsnr, r.scheme, order[r.method]),
    )
    failures = sorted((f for _, f in outcomes if f is not None), key=lambda f: f.cell)
    return BenchmarkResult(cfg, rows, failures)
