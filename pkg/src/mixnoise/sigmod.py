"""Baseband modulation, GSNR-calibrated noise, frames and the dataset container."""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from ._validation import check_random_state
from .noisegen import MixedNoiseParams, StableParams, sample_sas, truncate_dynamic_range

__all__ = [
    "SCHEMES",
    "Frame",
    "FrameMeta",
    "DatasetSpec",
    "DatasetManifest",
    "constellation",
    "modulate",
    "solve_noise_scales",
    "gsnr_of",
    "make_frame",
    "frame_seed",
    "write_frame",
    "read_frame",
    "build_dataset",
    "simulate_dataset",
    "load_dataset",
    "stack_frames",
]

SCHEMES = ("MSK", "QPSK", "QAM16")
_SCHEME_CODE = {name: i for i, name in enumerate(SCHEMES)}

MAGIC = b"IMPF"
VERSION = 1
_HEADER = struct.Struct("<4sHIB")


def _check_scheme(scheme):
    key = str(scheme).upper().replace("-", "")
    if key == "16QAM":
        key = "QAM16"
    if key not in _SCHEME_CODE:
        raise ValueError(f"unknown modulation scheme {scheme!r}; expected one of {SCHEMES}")
    return key


def constellation(scheme) -> np.ndarray:
    """Unit-peak complex alphabet of a linear scheme (QPSK or QAM16)."""
    scheme = _check_scheme(scheme)
    if scheme == "QPSK":
        pts = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j])
    elif scheme == "QAM16":
        levels = np.array([-3.0, -1.0, 1.0, 3.0])
        pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    else:
        raise ValueError("MSK has no memoryless alphabet")
    return pts / np.abs(pts).max()


def modulate(scheme, n_symbols: int, oversample: int = 4, seed=None) -> np.ndarray:
    """Random unit-peak baseband waveform as a ``(2, n_symbols*oversample)`` array.

    QPSK and 16-QAM use rectangular pulses; MSK is continuous-phase FSK with
    modulation index 1/2, i.e. the phase moves by ``+-pi/(2*oversample)`` per
    sample.
    """
    scheme = _check_scheme(scheme)
    n_symbols = int(n_symbols)
    oversample = int(oversample)
    if n_symbols < 1 or oversample < 1:
        raise ValueError("n_symbols and oversample must be positive")
    if (n_symbols * oversample) % 32:
        raise ValueError("n_symbols * oversample must be divisible by 32")
    rng = check_random_state(seed)
    if scheme == "MSK":
        bits = rng.integers(0, 2, size=n_symbols) * 2 - 1
        steps = np.repeat(bits, oversample) * (np.pi / (2 * oversample))
        phase = np.concatenate([[0.0], np.cumsum(steps)[:-1]])
        wave = np.exp(1j * phase)
    else:
        alphabet = constellation(scheme)
        idx = rng.integers(0, alphabet.size, size=n_symbols)
        wave = np.repeat(alphabet[idx], oversample)
    return np.stack([wave.real, wave.imag])


def solve_noise_scales(alpha: float, lam: float, gsnr_db: float, es: float = 1.0):
    """``(gamma_s, gamma_g)`` meeting a strength ratio and a GSNR.

    Uses ``GSNR = 10 log10(es / (2 (gamma_s**alpha + gamma_g**2)))`` and
    ``lam = gamma_g**2 / gamma_s**alpha``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if es <= 0:
        raise ValueError("es must be positive")
    if math.isinf(gsnr_db) and gsnr_db > 0:
        return 0.0, 0.0
    dispersion = es * 10.0 ** (-gsnr_db / 10.0) / (2.0 * (1.0 + lam))
    gamma_s = dispersion ** (1.0 / alpha)
    gamma_g = math.sqrt(lam * dispersion)
    return gamma_s, gamma_g


def gsnr_of(alpha, gamma_s, gamma_g, es=1.0) -> float:
    return 10.0 * math.log10(es / (2.0 * (gamma_s**alpha + gamma_g**2)))


@dataclass(frozen=True)
class FrameMeta:
    alpha: float
    lam: float
    gsnr_db: float
    gamma_s: float
    gamma_g: float
    seed: int
    es: float = 1.0

    @property
    def noise_params(self) -> MixedNoiseParams:
        return MixedNoiseParams(self.alpha, self.gamma_s, self.gamma_g)


@dataclass
class Frame:
    """One simulated frame; ``s``, ``n`` and ``y`` are float32 arrays of shape ``(2, L)``."""

    scheme: str
    s: np.ndarray
    n: np.ndarray
    y: np.ndarray
    meta: FrameMeta

    @property
    def length(self) -> int:
        return self.s.shape[1]


def make_frame(
    scheme,
    alpha,
    lam,
    gsnr_db,
    L: int = 256,
    seed=0,
    *,
    oversample: int = 4,
    es: float = 1.0,
    coverage: float | None = 0.999,
    signal: bool = True,
) -> Frame:
    """Simulate ``y = s + n`` for one grid cell.

    The impulsive component is drawn per real channel and limited to its
    ``coverage`` dynamic range by resampling (``coverage=None`` disables
    this).  ``signal=False`` zeroes ``s`` and yields a pure-noise frame.
    """
    scheme = _check_scheme(scheme)
    if L % 32:
        raise ValueError("frame length must be divisible by 32")
    if L % oversample:
        raise ValueError("frame length must be a multiple of oversample")
    ss = np.random.SeedSequence(int(seed))
    sig_ss, imp_ss, gau_ss, trunc_ss = ss.spawn(4)
    s = modulate(scheme, L // oversample, oversample, np.random.default_rng(sig_ss))
    if not signal:
        s = np.zeros_like(s)
    gamma_s, gamma_g = solve_noise_scales(alpha, lam, gsnr_db, es)
    noise = np.zeros(2 * L)
    if gamma_s > 0:
        imp = StableParams(alpha, gamma_s)
        impulsive = sample_sas(imp, 2 * L, np.random.default_rng(imp_ss))
        if coverage is not None:
            impulsive = truncate_dynamic_range(
                impulsive, imp, coverage, np.random.default_rng(trunc_ss)
            )
        noise = noise + impulsive
    if gamma_g > 0:
        noise = noise + math.sqrt(2.0) * gamma_g * np.random.default_rng(gau_ss).standard_normal(
            2 * L
        )
    s32 = s.astype(np.float32)
    y32 = s32 + noise.reshape(2, L).astype(np.float32)
    n32 = y32 - s32
    meta = FrameMeta(
        float(alpha), float(lam), float(gsnr_db), gamma_s, gamma_g, int(seed), float(es)
    )
    return Frame(scheme, s32, n32, y32, meta)


def frame_seed(master_seed: int, cell_index: int, frame_index: int) -> int:
    """Deterministic per-frame seed derived from the master seed."""
    state = np.random.SeedSequence([int(master_seed), int(cell_index), int(frame_index)])
    return int(state.generate_state(1, dtype=np.uint32)[0])


def write_frame(frame: Frame, path) -> None:
    L = frame.length
    header = _HEADER.pack(MAGIC, VERSION, L, _SCHEME_CODE[frame.scheme])
    payload = np.concatenate([frame.s, frame.n, frame.y]).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_frame(path, meta: FrameMeta | None = None) -> Frame:
    """Read one frame blob; raises ``ValueError`` on a malformed file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated frame header")
    magic, version, L, code = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported frame version {version}")
    if code >= len(SCHEMES):
        raise ValueError(f"{path}: unknown scheme code {code}")
    body = raw[_HEADER.size :]
    if len(body) != 6 * L * 4:
        raise ValueError(f"{path}: expected {6 * L * 4} payload bytes, found {len(body)}")
    data = np.frombuffer(body, dtype="<f4").reshape(6, L).astype(np.float32)
    return Frame(SCHEMES[code], data[0:2].copy(), data[2:4].copy(), data[4:6].copy(), meta)


@dataclass
class DatasetSpec:
    """What to simulate.  A cell is one ``(scheme, alpha, lambda, gsnr)`` combination."""

    alphas: list
    lambdas: list
    gsnrs: list
    schemes: list = field(default_factory=lambda: ["QPSK"])
    frames_per_cell: int = 10
    L: int = 256
    oversample: int = 4
    es: float = 1.0
    master_seed: int = 0
    coverage: float | None = 0.999

    def cells(self):
        return [
            (_check_scheme(sc), float(a), float(lam), float(g))
            for sc, a, lam, g in product(self.schemes, self.alphas, self.lambdas, self.gsnrs)
        ]


@dataclass
class DatasetManifest:
    spec: dict
    cells: list
    frames: list

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _iter_dataset(spec: DatasetSpec):
    cells = spec.cells()
    if not cells:
        raise ValueError("dataset grid is empty")
    if spec.frames_per_cell < 1:
        raise ValueError("frames_per_cell must be >= 1")
    for ci, (scheme, alpha, lam, gsnr) in enumerate(cells):
        for fi in range(spec.frames_per_cell):
            seed = frame_seed(spec.master_seed, ci, fi)
            frame = make_frame(
                scheme, alpha, lam, gsnr, spec.L, seed,
                oversample=spec.oversample, es=spec.es, coverage=spec.coverage,
            )
            yield ci, fi, frame


def simulate_dataset(spec: DatasetSpec) -> list:
    """The frames :func:`build_dataset` would store, kept in memory."""
    return [frame for _, _, frame in _iter_dataset(spec)]


def build_dataset(spec: DatasetSpec, out_dir) -> DatasetManifest:
    """Simulate every cell of ``spec`` and store it under ``out_dir``."""
    cells = spec.cells()
    out = Path(out_dir)
    records = []
    for ci, fi, frame in _iter_dataset(spec):
        if not records:
            (out / "frames").mkdir(parents=True, exist_ok=True)
        rel = f"frames/c{ci:04d}_f{fi:05d}.impf"
        write_frame(frame, out / rel)
        records.append({"file": rel, "cell": ci, "scheme": frame.scheme, **asdict(frame.meta)})
    manifest = DatasetManifest(
        spec=asdict(spec),
        cells=[list(c) for c in cells],
        frames=records,
    )
    tmp = out / "manifest.json.tmp"
    tmp.write_text(manifest.to_json())
    os.replace(tmp, out / "manifest.json")
    return manifest


def load_dataset(path):
    """Return ``(manifest, frames)`` for a dataset directory."""
    root = Path(path)
    data = json.loads((root / "manifest.json").read_text())
    manifest = DatasetManifest(**data)
    frames = []
    for rec in manifest.frames:
        meta = FrameMeta(
            rec["alpha"], rec["lam"], rec["gsnr_db"], rec["gamma_s"], rec["gamma_g"],
            rec["seed"], rec.get("es", 1.0),
        )
        frame = read_frame(root / rec["file"], meta)
        if frame.scheme != rec["scheme"]:
            raise ValueError(f"{rec['file']}: scheme mismatch with manifest")
        frames.append(frame)
    return manifest, frames


def stack_frames(frames):
    """Stack frames into ``(Y, S, N)`` arrays of shape ``(B, 2, L)``."""
    if not frames:
        raise ValueError("no frames")
    Y = np.stack([f.y for f in frames])
    S = np.stack([f.s for f in frames])
    N = np.stack([f.n for f in frames])
    return Y, S, N
