"""Model parameters, sampled paths, the binary path format and the exact fBm backend."""

import math
import struct
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e

from .. import rng as rngmod
from .fgn import fgn_from_generator

BACKENDS = ("exact-fbm", "nclt", "chaos-grid")
CLI_BACKENDS = {"fbm": "exact-fbm", "nclt": "nclt", "chaos": "chaos-grid"}

MAGIC = b"HERM1"
_HEADER = struct.Struct("<5sIddQBQ")


@dataclass(frozen=True)
class ModelParams:
    order: int
    hurst: float
    c_qH: float | None = None

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"Hermite order must be an integer >= 1, got {self.order}")
        if not 0.5 < self.hurst < 1.0:
            raise ValueError(f"Hurst parameter {self.hurst} outside (1/2, 1)")
        if self.c_qH is not None and not self.c_qH > 0:
            raise ValueError("c_qH must be positive")

    @property
    def fgn_hurst(self):
        """Hurst index of the underlying noise, 1 + (H-1)/q."""
        return 1.0 + (self.hurst - 1.0) / self.order

    @property
    def kernel_exponent(self):
        """alpha in (u-y)_+^{-alpha}: 1/2 + (1-H)/q."""
        return 0.5 + (1.0 - self.hurst) / self.order


@dataclass(frozen=True, eq=False)
class ProcessPath:
    """Z(0), Z(step), ..., Z(n*step) for one realization."""

    params: ModelParams
    step: float
    values: np.ndarray
    backend: str
    seed: int

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("a path needs at least two values")
        if v[0] != 0.0:
            raise ValueError("paths start at Z(0) = 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.size - 1

    @property
    def horizon(self):
        return self.n * self.step

    def times(self):
        return np.arange(self.values.size) * self.step


def hermite_poly(q, x):
    """H_q(x) = He_q(x) / q!, the normalization with H_1(x) = x, H_2(x) = (x^2-1)/2."""
    if q < 0:
        raise ValueError("q must be >= 0")
    c = np.zeros(q + 1)
    c[q] = 1.0 / math.factorial(q)
    out = hermite_e.hermeval(np.asarray(x, dtype=float), c)
    return float(out) if np.ndim(out) == 0 else out


def simulate_fbm_exact(hurst, n, step, seed, rep_id=0):
    """fBm on {0, step, ..., n*step}: cumulative sums of exact fGn scaled by step^H."""
    params = ModelParams(1, hurst)
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = rngmod.stream(seed, rep_id, rngmod.PATH_NOISE)
    x = fgn_from_generator(hurst, max(n, 2), gen)[:n]
    values = np.empty(n + 1)
    values[0] = 0.0
    np.cumsum(x, out=values[1:])
    values[1:] *= step**hurst
    return ProcessPath(params, float(step), values, "exact-fbm", int(seed))


def write_path(path, filename):
    header = _HEADER.pack(MAGIC, path.params.order, path.params.hurst, path.step,
                          path.n, BACKENDS.index(path.backend), path.seed)
    with open(filename, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(path.values, dtype="<f8").tobytes())


def read_path(filename):
    with open(filename, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:5] != MAGIC:
        raise ValueError(f"{filename}: not a HERM1 path file")
    magic, q, hurst, step, length, tag, seed = _HEADER.unpack_from(raw)
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if values.size != length + 1:
        raise ValueError(f"{filename}: expected {length + 1} values, found {values.size}")
    if tag >= len(BACKENDS):
        raise ValueError(f"{filename}: unknown backend tag {tag}")
    return ProcessPath(ModelParams(q, hurst), step, values.astype(float), BACKENDS[tag], seed)
