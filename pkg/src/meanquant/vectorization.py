"""Kernel functions and the codebook-based vectorization of measures.

A measure mu is mapped to the k-vector whose j-th entry is the integral of
psi(|u - c_j| / sigma) against mu, for a bounded 1-Lipschitz bump psi.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError, DimensionMismatch, NegativeArgument
from .measure import DiscreteMeasure, MeasureSample
from .quantization import Codebook, min_separation, sq_distances


def _psi0(u):
    return np.maximum(1.0 - np.maximum(u - 1.0, 0.0), 0.0)


def _exponential(u):
    return np.exp(-u)


def _gaussian(u):
    return np.exp(-u * u / 2.0)


class Kernel(str, Enum):
    PSI0 = "psi0"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"  # same function as EXPONENTIAL, kept as a separate label

    def __call__(self, u):
        return _KERNEL_FUNCS[self](np.asarray(u, dtype=np.float64))

    @classmethod
    def parse(cls, name: str) -> "Kernel":
        try:
            return cls(_ALIASES.get(name, name))
        except ValueError:
            raise ConfigError(f"unknown kernel {name!r}") from None


_KERNEL_FUNCS = {
    Kernel.PSI0: _psi0,
    Kernel.EXPONENTIAL: _exponential,
    Kernel.GAUSSIAN: _gaussian,
    Kernel.LAPLACE: _exponential,
}
_ALIASES = {"exp": "exponential", "gauss": "gaussian"}


def kernel_eval(kernel, u: float) -> float:
    """Value of ``kernel`` at ``u >= 0``."""
    if u < 0:
        raise NegativeArgument(f"kernel argument must be >= 0, got {u}")
    return float(_as_kernel(kernel)(u))


def _as_kernel(kernel) -> Kernel:
    return kernel if isinstance(kernel, Kernel) else Kernel.parse(kernel)


@dataclass(frozen=True)
class KernelCheck:
    bounded: bool
    near_one_inside: bool
    small_outside: bool
    lipschitz_ok: bool
    kernel: str
    p: int
    delta: float
    grid_step: float

    @property
    def passed(self) -> bool:
        return self.bounded and self.near_one_inside and self.small_outside and self.lipschitz_ok

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel, "p": self.p, "delta": self.delta,
            "grid_step": self.grid_step, "bounded": self.bounded,
            "near_one_inside": self.near_one_inside,
            "small_outside": self.small_outside, "lipschitz_ok": self.lipschitz_ok,
            "passed": self.passed,
        }


def check_kernel(kernel, p: int, delta: float, grid_step: float = 1e-3) -> KernelCheck:
    """Check the four (p, delta)-kernel conditions for a built-in kernel.

    The conditions are suprema over half-lines; they are evaluated on a grid of
    ``[0, 4p]`` with step ``grid_step`` to which 1/p and 2p are added. The
    tail condition sup_{u > 2p} psi <= delta uses that every built-in kernel is
    non-increasing and continuous, so the supremum is psi(2p). Violations
    narrower than the grid step go unnoticed.
    """
    k = _as_kernel(kernel)
    if grid_step <= 0:
        raise ConfigError("grid_step must be positive")
    if p < 1:
        raise ConfigError("p must be a positive integer")
    if delta < 0:
        raise ConfigError("delta must be non-negative")
    top = 4.0 * p
    n = int(math.ceil(top / grid_step))
    grid = np.union1d(np.linspace(0.0, top, n + 1), [1.0 / p, 2.0 * p])
    vals = k(grid)

    bounded = bool(np.all(vals <= 1.0) and np.all(vals >= 0.0))
    near_one = bool(np.max(vals[grid <= 1.0 / p]) >= 1.0 - delta)
    tail = vals[grid > 2.0 * p]
    small = bool(float(k(2.0 * p)) <= delta and (tail.size == 0 or np.max(tail) <= delta))
    du = np.diff(grid)
    dv = np.abs(np.diff(vals))
    # allow for rounding in psi itself, nothing more
    lipschitz = bool(np.all(dv <= du * (1.0 + 1e-9) + 1e-15))
    return KernelCheck(bounded, near_one, small, lipschitz, k.value, int(p), float(delta), float(grid_step))


@dataclass(frozen=True)
class VectorizeConfig:
    sigma: float
    kernel: Kernel = Kernel.EXPONENTIAL

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "kernel", _as_kernel(self.kernel))

    def to_json(self) -> dict:
        return {"sigma": self.sigma, "kernel": self.kernel.value}


@dataclass(frozen=True, eq=False)
class Embedding:
    """n x k matrix of vectorized measures, one row per measure."""

    rows: np.ndarray
    codebook: Codebook | None = None
    config: VectorizeConfig | None = None
    labels: tuple | None = None

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def k(self) -> int:
        return self.rows.shape[1]


def _vectorize_arrays(points, weights, centers, cfg):
    dist = np.sqrt(sq_distances(points, centers))
    return weights @ cfg.kernel(dist / cfg.sigma)


def vectorize(m: DiscreteMeasure, cb: Codebook, cfg: VectorizeConfig) -> np.ndarray:
    """Kernel-smoothed masses of ``m`` around every codepoint."""
    if m.ambient_dim != cb.ambient_dim:
        raise DimensionMismatch(f"measure dim {m.ambient_dim} vs codebook dim {cb.ambient_dim}")
    return _vectorize_arrays(m.points, m.weights, cb.codepoints, cfg)


def vectorize_sample(sample: MeasureSample, cb: Codebook, cfg: VectorizeConfig) -> Embedding:
    rows = np.empty((sample.n, cb.k))
    for i, m in enumerate(sample.measures):
        rows[i] = vectorize(m, cb, cfg)
    return Embedding(rows, cb, cfg, sample.labels)


def default_sigma(cb: Codebook) -> float:
    """Half the smallest gap between distinct codepoints.

    Falls back to the ball radius when k = 1 or all codepoints coincide.
    """
    uniq = np.unique(cb.codepoints, axis=0)
    if uniq.shape[0] < 2:
        return cb.ball_radius
    return min_separation(uniq) / 2.0


def mean_nn_sigma(cb: Codebook) -> float:
    """Mean over distinct codepoints of half the distance to the nearest other one.

    Less sensitive than :func:`default_sigma` to a single close pair, which
    becomes likely as k grows. Same fallback for k = 1.
    """
    uniq = np.unique(cb.codepoints, axis=0)
    if uniq.shape[0] < 2:
        return cb.ball_radius
    d2 = sq_distances(uniq, uniq)
    np.fill_diagonal(d2, np.inf)
    return float(np.mean(np.sqrt(d2.min(axis=1)))) / 2.0


SIGMA_RULES = {"min_gap": default_sigma, "mean_nn": mean_nn_sigma}


# -- CSV ------------------------------------------------------------------------


def write_embedding_csv(emb: Embedding, path, labels=None) -> None:
    """Write rows with 17 significant digits; header ``v1..vk`` (+ ``label``)."""
    labels = emb.labels if labels is None else labels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = [f"v{j + 1}" for j in range(emb.k)]
        if labels is not None:
            header.append("label")
        w.writerow(header)
        for i, row in enumerate(emb.rows):
            out = [format(float(x), ".17g") for x in row]
            if labels is not None:
                out.append(str(labels[i]))
            w.writerow(out)


def read_embedding_csv(path) -> Embedding:
    """Inverse of :func:`write_embedding_csv`."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    header = rows[0]
    has_label = header[-1] == "label"
    k = len(header) - int(has_label)
    if k < 1 or any(not h.startswith("v") for h in header[:k]):
        raise DataError(f"{path}: bad header {header}")
    try:
        data = np.array([[float(x) for x in r[:k]] for r in rows[1:]])
        labels = tuple(int(r[k]) for r in rows[1:]) if has_label else None
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed row: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != k or any(len(r) != len(header) for r in rows[1:]):
        raise DataError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite entries")
    return Embedding(data, labels=labels)
