"""Nested U-net++ separator for I/Q frames, built on :mod:`mixnoise.diffkit`."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import diffkit as dk
from ._validation import as_frame
from .prep import clip, clip_threshold

__all__ = [
    "UnetConfig",
    "Network",
    "TrainingError",
    "CheckpointError",
    "build_network",
    "forward",
    "train",
    "separate_and_cancel",
    "save_checkpoint",
    "load_checkpoint",
    "preprocess",
    "UnetSeparator",
]

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class UnetConfig:
    backbone_channels: tuple = (16, 32, 60, 96, 144, 256)
    kernel: int = 3
    convs_per_unit: int = 3
    dropout: float = 0.3
    leak: float = 0.01
    length: int = 256
    in_channels: int = 2
    out_channels: int = 2
    deep_supervision: bool = True
    ds_reduce: str = "mean"
    mu: float = 1e-4
    head_mix_channels: int = 8
    head_hidden: int | None = None
    head_skip: bool = True
    head_out_gain: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "backbone_channels", tuple(int(c) for c in self.backbone_channels))
        chans = self.backbone_channels
        if len(chans) < 2:
            raise ValueError("backbone needs at least two levels")
        if any(b <= a for a, b in zip(chans, chans[1:])):
            raise ValueError("backbone channels must be strictly increasing")
        if self.length % 2 ** (self.depth - 1):
            raise ValueError(f"length {self.length} not divisible by 2**{self.depth - 1}")
        if self.kernel % 2 == 0:
            raise ValueError("kernel length must be odd")
        if self.ds_reduce not in ("mean", "sum"):
            raise ValueError("ds_reduce must be 'mean' or 'sum'")

    @property
    def depth(self) -> int:
        return len(self.backbone_channels)

    @property
    def hidden(self) -> int:
        return self.head_hidden if self.head_hidden is not None else 2 * self.length * 2

    def fingerprint(self) -> bytes:
        """SHA-256 of the architecture-defining fields."""
        arch = asdict(self)
        arch.pop("mu")
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).digest()


def _nodes(depth):
    return [(i, j) for j in range(depth) for i in range(depth - j)]


def _node_inputs(cfg: UnetConfig, i, j):
    c = cfg.backbone_channels
    if j == 0:
        return cfg.in_channels if i == 0 else c[i - 1]
    return j * c[i] + c[i + 1]


@dataclass
class Network:
    cfg: UnetConfig
    params: dict
    meta: dict = field(default_factory=dict)

    def parameters(self):
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype):
        """Copy with parameters cast to ``dtype`` (float64 for gradient checks)."""
        return Network(
            self.cfg,
            {k: dk.Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in self.params.items()},
            dict(self.meta),
        )


def build_network(cfg: UnetConfig = UnetConfig(), seed=0, dtype=np.float32) -> Network:
    """Allocate every convolution unit ``U_i^j`` (``i + j < depth``) and the output head.

    Weights are fan-in scaled uniform; biases start at zero.
    """
    rng = np.random.default_rng(seed)
    params = {}

    def add(name, shape, fan_in, gain=6.0):
        bound = math.sqrt(gain / fan_in)
        params[name] = dk.Tensor(
            rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True, name=name
        )

    def zeros(name, n):
        params[name] = dk.Tensor(np.zeros(n, dtype=dtype), requires_grad=True, name=name)

    K = cfg.kernel
    for i, j in _nodes(cfg.depth):
        cin = _node_inputs(cfg, i, j)
        cout = cfg.backbone_channels[i]
        for k in range(cfg.convs_per_unit):
            add(f"U{i}_{j}.conv{k}.w", (cout, cin, K), cin * K)
            zeros(f"U{i}_{j}.conv{k}.b", cout)
            cin = cout
    c0 = cfg.backbone_channels[0]
    mix = cfg.head_mix_channels
    names = [f"head{j}" for j in range(1, cfg.depth)] if cfg.deep_supervision else ["head"]
    feat = c0 if cfg.deep_supervision else c0 * (cfg.depth - 1)
    for name in names:
        add(f"{name}.mix.w", (mix, feat, 1), feat)
        zeros(f"{name}.mix.b", mix)
        if cfg.head_skip:
            add(f"{name}.out.w", (cfg.out_channels, mix, 1), mix, gain=cfg.head_out_gain)
            zeros(f"{name}.out.b", cfg.out_channels)
    flat = mix * cfg.length
    add("head.fc1.W", (cfg.hidden, flat), flat)
    zeros("head.fc1.b", cfg.hidden)
    add("head.fc2.W", (cfg.out_channels * cfg.length, cfg.hidden), cfg.hidden, gain=cfg.head_out_gain)
    zeros("head.fc2.b", cfg.out_channels * cfg.length)
    return Network(cfg, params)


def _unit(net, i, j, x, training, rng):
    cfg = net.cfg
    p = net.params
    for k in range(cfg.convs_per_unit):
        x = dk.conv1d(x, p[f"U{i}_{j}.conv{k}.w"], p[f"U{i}_{j}.conv{k}.b"])
        x = dk.leaky_relu(x, cfg.leak)
    return dk.dropout(x, cfg.dropout, training=training, rng=rng)


def _head(net, feats, name):
    cfg = net.cfg
    p = net.params
    B = feats.shape[0]
    mixed = dk.conv1d(feats, p[f"{name}.mix.w"], p[f"{name}.mix.b"])
    h = dk.reshape(mixed, (B, cfg.head_mix_channels * cfg.length))
    h = dk.leaky_relu(dk.dense(h, p["head.fc1.W"], p["head.fc1.b"]), cfg.leak)
    h = dk.dense(h, p["head.fc2.W"], p["head.fc2.b"])
    out = dk.reshape(h, (B, cfg.out_channels, cfg.length))
    if cfg.head_skip:
        # Per-sample path alongside the dense layers.
        out = dk.add(out, dk.conv1d(mixed, p[f"{name}.out.w"], p[f"{name}.out.b"]))
    return out


def head_outputs(net: Network, x, training=False, rng=None):
    """Supervision-head outputs, each ``(B, out_channels, L)``."""
    cfg = net.cfg
    x = dk.Tensor(np.asarray(x, dtype=net.params["head.fc1.W"].dtype)) if not isinstance(x, dk.Tensor) else x
    squeeze = x.data.ndim == 2
    if squeeze:
        x = dk.reshape(x, (1, *x.shape))
    if x.shape[-1] != cfg.length or x.shape[-2] != cfg.in_channels:
        raise ValueError(
            f"input shape {x.shape[-2:]} does not match network ({cfg.in_channels}, {cfg.length})"
        )
    out = {}
    for j in range(cfg.depth):
        for i in range(cfg.depth - j):
            if j == 0:
                inp = x if i == 0 else dk.downsample_max(out[i - 1, 0])
            else:
                inp = dk.concat([out[i, k] for k in range(j)] + [dk.upsample_dup(out[i + 1, j - 1])])
            out[i, j] = _unit(net, i, j, inp, training, rng)
    sup = [out[0, j] for j in range(1, cfg.depth)]
    if cfg.deep_supervision:
        heads = [_head(net, f, f"head{j}") for j, f in enumerate(sup, start=1)]
    else:
        heads = [_head(net, dk.concat(sup), "head")]
    if squeeze:
        heads = [dk.reshape(h, h.shape[1:]) for h in heads]
    return heads


def forward(net: Network, y_clipped, training=False, rng=None):
    """Separated signal estimate; heads are averaged under deep supervision."""
    heads = head_outputs(net, y_clipped, training, rng)
    return heads[0] if len(heads) == 1 else dk.mean_of(heads)


def training_loss(net: Network, y_clipped, s, training=True, rng=None):
    heads = head_outputs(net, y_clipped, training, rng)
    return dk.deep_supervision_loss(heads, s, net.parameters(), net.cfg.mu, net.cfg.ds_reduce)


def preprocess(Y) -> np.ndarray:
    """Clip every frame at its own empirical threshold."""
    Y = as_frame(Y, dtype=np.float32)
    if Y.ndim == 2:
        return clip(Y, clip_threshold(Y))
    return np.stack([clip(f, clip_threshold(f)) for f in Y])


def train(net: Network, Y, S, epochs=30, batch=200, seed=0, lr=0.001, callback=None):
    """Optimize the deep-supervision loss with Adam.

    ``Y`` are received frames ``(B, 2, L)`` (clipped here), ``S`` the clean
    targets.  Returns the network and the per-epoch mean training loss.
    """
    Y = np.asarray(Y)
    S = np.asarray(S, dtype=net.params["head.fc1.W"].dtype)
    if Y.shape[0] == 0:
        raise TrainingError("empty dataset")
    if Y.shape != S.shape or Y.shape[1:] != (net.cfg.in_channels, net.cfg.length):
        raise TrainingError(f"dataset shape {Y.shape} does not match network config")
    Yc = preprocess(Y).astype(S.dtype)
    rng = np.random.default_rng(seed)
    opt = dk.Adam(net.parameters(), lr=lr)
    curve = []
    n = Y.shape[0]
    for epoch in range(epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            opt.zero_grad()
            loss = training_loss(net, Yc[idx], S[idx], training=True, rng=rng)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, batch starting {start}; "
                    f"max |param| = {max(float(np.abs(p.data).max()) for p in net.parameters()):.3g}"
                )
            loss.backward()
            opt.step()
            total += value * len(idx)
        curve.append(total / n)
        log.info("epoch %d loss %.6f (%.1fs)", epoch + 1, curve[-1], time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, curve[-1])
    net.meta = {"epochs": int(net.meta.get("epochs", 0)) + epochs, "final_loss": curve[-1] if curve else math.nan}
    return net, curve


def predict(net: Network, Y, batch=200) -> np.ndarray:
    """Eval-mode signal estimate for raw received frames (clipping applied here)."""
    Y = as_frame(Y, dtype=np.float32)
    squeeze = Y.ndim == 2
    Yc = preprocess(Y[None] if squeeze else Y)
    dtype = net.params["head.fc1.W"].dtype
    outs = [forward(net, Yc[k : k + batch].astype(dtype)).data for k in range(0, len(Yc), batch)]
    out = np.concatenate(outs)
    return out[0] if squeeze else out


def separate_and_cancel(net: Network, y) -> np.ndarray:
    """Noise estimate ``y - forward(clip(y))``; accepts a Frame or a raw array."""
    arr = y.y if hasattr(y, "y") else y
    arr = as_frame(arr, dtype=np.float32)
    return arr - predict(net, arr).astype(np.float32)


# -- checkpoints ------------------------------------------------------------

_MAGIC = b"UNPP"
_VERSION = 1
_CONFIG_RECORD = "__config__"
_META_RECORD = "__meta__"


def _records(net: Network):
    cfg_bytes = json.dumps(asdict(net.cfg), sort_keys=True).encode()
    yield _CONFIG_RECORD, np.frombuffer(cfg_bytes, dtype=np.uint8).astype(np.float32)
    meta = [float(net.meta.get("epochs", 0)), float(net.meta.get("final_loss", math.nan))]
    yield _META_RECORD, np.array(meta, dtype=np.float32)
    for name, p in net.params.items():
        yield name, p.data


def save_checkpoint(net: Network, path) -> None:
    """Write parameters, config and training metadata in the UNPP container."""
    records = list(_records(net))
    parts = [struct.pack("<4sH", _MAGIC, _VERSION), net.cfg.fingerprint(), struct.pack("<I", len(records))]
    for name, arr in records:
        raw_name = name.encode()
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, cfg: UnetConfig | None = None) -> Network:
    """Read a checkpoint; refuses files whose fingerprint disagrees with ``cfg``."""
    raw = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: corrupt checkpoint (truncated at byte {pos})")
        chunk = raw[pos : pos + n]
        pos += n
        return chunk

    magic, version = struct.unpack("<4sH", take(6))
    if magic != _MAGIC:
        raise CheckpointError(f"{path}: corrupt checkpoint (bad magic {magic!r})")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    fingerprint = take(32)
    (count,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode()
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        size = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(take(4 * size), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(raw):
        raise CheckpointError(f"{path}: corrupt checkpoint ({len(raw) - pos} trailing bytes)")
    if _CONFIG_RECORD not in arrays:
        raise CheckpointError(f"{path}: corrupt checkpoint (missing config record)")
    stored = json.loads(arrays.pop(_CONFIG_RECORD).astype(np.uint8).tobytes())
    stored_cfg = UnetConfig(**stored)
    if stored_cfg.fingerprint() != fingerprint:
        raise CheckpointError(f"{path}: corrupt checkpoint (config does not match fingerprint)")
    if cfg is not None and cfg.fingerprint() != fingerprint:
        raise CheckpointError(f"{path}: architecture fingerprint mismatch; refusing to load")
    use_cfg = stored_cfg if cfg is None else cfg
    meta_arr = arrays.pop(_META_RECORD, np.array([0, math.nan], dtype=np.float32))
    template = build_network(use_cfg, seed=0)
    if set(template.params) != set(arrays):
        raise CheckpointError(f"{path}: parameter names do not match the architecture")
    params = {}
    for name, tpl in template.params.items():
        if arrays[name].shape != tpl.shape:
            raise CheckpointError(f"{path}: parameter {name} has shape {arrays[name].shape}, expected {tpl.shape}")
        params[name] = dk.Tensor(arrays[name], requires_grad=True, name=name)
    meta = {"epochs": int(meta_arr[0]), "final_loss": float(meta_arr[1])}
    return Network(use_cfg, params, meta)


class UnetSeparator(TransformerMixin, BaseEstimator):
    """Learned signal/noise separator for received I/Q frames.

    ``fit(Y, S)`` trains on received frames and their clean signals;
    ``predict(Y)`` returns the separated signal and ``transform(Y)`` the
    residual noise ``Y - predict(Y)``, ready for a parameter estimator.
    """

    def __init__(
        self,
        backbone_channels=(16, 32, 60, 96, 144, 256),
        kernel=3,
        convs_per_unit=3,
        dropout=0.3,
        leak=0.01,
        deep_supervision=True,
        ds_reduce="mean",
        mu=1e-4,
        epochs=30,
        batch_size=200,
        lr=0.001,
        random_state=0,
    ):
        self.backbone_channels = backbone_channels
        self.kernel = kernel
        self.convs_per_unit = convs_per_unit
        self.dropout = dropout
        self.leak = leak
        self.deep_supervision = deep_supervision
        self.ds_reduce = ds_reduce
        self.mu = mu
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.random_state = random_state

    def _config(self, length):
        return UnetConfig(
            backbone_channels=tuple(self.backbone_channels),
            kernel=self.kernel,
            convs_per_unit=self.convs_per_unit,
            dropout=self.dropout,
            leak=self.leak,
            length=length,
            deep_supervision=self.deep_supervision,
            ds_reduce=self.ds_reduce,
            mu=self.mu,
        )

    def fit(self, Y, S):
        Y = as_frame(Y, dtype=np.float32)
        S = as_frame(S, dtype=np.float32)
        if Y.ndim != 3 or Y.shape != S.shape:
            raise ValueError("Y and S must both have shape (B, 2, L)")
        seed = np.random.SeedSequence(self.random_state if self.random_state is not None else 0)
        init_seed, train_seed = (int(s.generate_state(1)[0]) for s in seed.spawn(2))
        self.network_ = build_network(self._config(Y.shape[-1]), seed=init_seed)
        _, self.loss_curve_ = train(
            self.network_, Y, S, epochs=self.epochs, batch=self.batch_size, seed=train_seed, lr=self.lr
        )
        return self

    @classmethod
    def from_checkpoint(cls, path):
        net = load_checkpoint(path)
        cfg = net.cfg
        est = cls(
            backbone_channels=cfg.backbone_channels, kernel=cfg.kernel,
            convs_per_unit=cfg.convs_per_unit, dropout=cfg.dropout, leak=cfg.leak,
            deep_supervision=cfg.deep_supervision, ds_reduce=cfg.ds_reduce, mu=cfg.mu,
        )
        est.network_ = net
        est.loss_curve_ = []
        return est

    def predict(self, Y):
        check_is_fitted(self, "network_")
        return predict(self.network_, Y)

    def transform(self, Y):
        check_is_fitted(self, "network_")
        Y = as_frame(Y, dtype=np.float32)
        return Y - self.predict(Y).astype(np.float32)
