"""Voronoi geometry, distortion and the batch / mini-batch quantizers.

Both quantizers target the empirical mean measure of a sample of discrete
measures. The batch quantizer is Lloyd's algorithm run on that mean measure;
the mini-batch quantizer is a MacQueen-type stochastic scheme that only sees
one mini-batch per step, with a 1/(t+1) step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Union

import numpy as np

from .errors import (
    BatchTooSmall,
    ConfigError,
    DataError,
    DimensionMismatch,
    EmptySample,
    EmptySupport,
    PointOutsideBall,
)
from .measure import (
    DiscreteMeasure,
    MeasureSample,
    inside_ball,
    mean_measure,
    stack_support,
)

ALGORITHMS = ("batch", "minibatch", "minibatch_nosplit")
EMPTY_CELL_POLICIES = ("keep", "reseed_farthest")
MOVE_TOL = 1e-12
_UINT64 = (1 << 64) - 1


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the named sub-stream ``keys`` of ``seed``."""
    return np.random.default_rng([int(seed) & _UINT64, *keys])


@dataclass(frozen=True, eq=False)
class Codebook:
    """Ordered codepoints c_1..c_k, stored as a read-only (k, d) array."""

    codepoints: np.ndarray
    ball_radius: float

    @property
    def k(self) -> int:
        return self.codepoints.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.codepoints.shape[1]

    def to_json(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "ball_radius": self.ball_radius,
            "codepoints": self.codepoints.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Codebook":
        try:
            pts = np.asarray(obj["codepoints"], dtype=np.float64)
            d = int(obj["ambient_dim"])
            radius = float(obj["ball_radius"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed codebook: {exc}") from exc
        if pts.ndim != 2 or pts.shape[1] != d:
            raise DimensionMismatch(f"codepoints do not have dimension {d}")
        return make_codebook(pts, radius)

    def __repr__(self) -> str:
        return f"Codebook(k={self.k}, ambient_dim={self.ambient_dim}, ball_radius={self.ball_radius:g})"


def make_codebook(codepoints, ball_radius: float) -> Codebook:
    c = np.array(codepoints, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2 or c.shape[0] < 1:
        raise DataError("a codebook needs at least one codepoint")
    if not np.all(np.isfinite(c)):
        raise DataError("codepoints must be finite")
    if not np.all(inside_ball(c, ball_radius)):
        raise PointOutsideBall(f"codepoint outside B(0, {ball_radius:g})")
    c.setflags(write=False)
    return Codebook(c, float(ball_radius))


@dataclass
class QuantizeConfig:
    k: int
    algorithm: str = "batch"
    iterations: Union[int, str] = "auto"
    minibatch_size: int = 1000
    seed: int = 0
    init: Union[str, Codebook] = "kmeanspp"
    empty_cell_policy: str = "keep"
    restarts: int = 1

    def validate(self) -> None:
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.iterations != "auto" and (
            not isinstance(self.iterations, (int, np.integer)) or self.iterations < 1
        ):
            raise ConfigError(f"iterations must be 'auto' or a positive integer")
        if self.minibatch_size < 1:
            raise ConfigError("minibatch_size must be positive")
        if self.empty_cell_policy not in EMPTY_CELL_POLICIES:
            raise ConfigError(f"empty_cell_policy must be one of {EMPTY_CELL_POLICIES}")
        if self.restarts < 1:
            raise ConfigError("restarts must be >= 1")
        if isinstance(self.init, Codebook):
            if self.init.k != self.k:
                raise ConfigError(f"initial codebook has {self.init.k} points, k={self.k}")
        elif self.init != "kmeanspp":
            raise ConfigError("init must be 'kmeanspp' or a Codebook")

    def to_json(self) -> dict:
        d = {f: getattr(self, f) for f in (
            "k", "algorithm", "iterations", "minibatch_size", "seed",
            "empty_cell_policy", "restarts")}
        d["init"] = self.init.to_json() if isinstance(self.init, Codebook) else self.init
        return d


@dataclass
class QuantizeReport:
    algorithm: str
    distortion_trace: list
    cell_masses: list
    min_cell_separation: float
    min_cell_mass: float
    iterations_run: int
    planned_iterations: int
    final_distortion: float
    seed: int
    early_stopped: bool = False
    restart: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        if math.isinf(d["min_cell_separation"]):
            d["min_cell_separation"] = None
        return d


# -- geometry -----------------------------------------------------------------


def _check_dims(cb: Codebook, d: int) -> None:
    if cb.ambient_dim != d:
        raise DimensionMismatch(f"codebook dim {cb.ambient_dim} vs data dim {d}")


def sq_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) matrix of squared Euclidean distances.

    Coordinates are accumulated one axis at a time so the result does not
    depend on BLAS or on the expansion |x|^2 - 2<x,c> + |c|^2, which would
    break exact ties.
    """
    out = np.zeros((points.shape[0], centers.shape[0]))
    for a in range(points.shape[1]):
        diff = points[:, a, None] - centers[None, :, a]
        out += diff * diff
    return out


def assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center index (lowest index on ties) and squared distance."""
    d2 = sq_distances(points, centers)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]


def voronoi_assign(cb: Codebook, x) -> int:
    """1-based index of the Voronoi cell W_j(c) containing ``x``.

    Equidistant points go to the lowest index, so the cells partition R^d.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    _check_dims(cb, x.shape[1])
    labels, _ = assign(x, cb.codepoints)
    return int(labels[0]) + 1


def distortion(cb: Codebook, m: DiscreteMeasure) -> float:
    """Sum over atoms of weight times squared distance to the nearest codepoint."""
    _check_dims(cb, m.ambient_dim)
    _, d2 = assign(m.points, cb.codepoints)
    return float(np.dot(m.weights, d2))


def _cell_sums(points, weights, labels, k):
    masses = np.bincount(labels, weights=weights, minlength=k)
    moments = np.empty((k, points.shape[1]))
    for a in range(points.shape[1]):
        moments[:, a] = np.bincount(labels, weights=weights * points[:, a], minlength=k)
    return masses, moments


def cell_stats(cb: Codebook, m: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Cell masses p_j and first moments sum(weight * u) over each cell.

    Returns
    -------
    masses : ndarray of shape (k,)
    moments : ndarray of shape (k, d)
        ``moments[j] / masses[j]`` is the centroid of cell j when it is non-empty.
    """
    _check_dims(cb, m.ambient_dim)
    labels, _ = assign(m.points, cb.codepoints)
    return _cell_sums(m.points, m.weights, labels, cb.k)


def min_separation(centers: np.ndarray) -> float:
    k = centers.shape[0]
    if k < 2:
        return math.inf
    d2 = sq_distances(centers, centers)
    return float(np.sqrt(np.min(d2[~np.eye(k, dtype=bool)])))


# -- seeding --------------------------------------------------------------------


def _kmeanspp_arrays(points, weights, k, rng):
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.choice(n, p=weights / weights.sum())
    mind2 = sq_distances(points, points[chosen[:1]])[:, 0]
    for i in range(1, k):
        score = weights * mind2
        total = score.sum()
        if total > 0:
            chosen[i] = rng.choice(n, p=score / total)
        else:
            # every support point already coincides with a chosen one
            chosen[i] = rng.choice(n, p=weights / weights.sum())
        np.minimum(mind2, sq_distances(points, points[chosen[i : i + 1]])[:, 0], out=mind2)
    return points[chosen].copy()


def kmeanspp_init(m: DiscreteMeasure, k: int, seed) -> Codebook:
    """Weighted k-means++ seeding over the support of ``m``.

    The first codepoint is drawn with probability proportional to atom weight,
    each next one proportionally to weight times squared distance to the
    codepoints already chosen. ``seed`` is anything accepted by
    :func:`numpy.random.default_rng`.
    """
    if m.n_atoms == 0:
        raise EmptySupport("cannot seed from an empty measure")
    if k < 1:
        raise ConfigError("k must be >= 1")
    rng = np.random.default_rng(seed)
    return make_codebook(_kmeanspp_arrays(m.points, m.weights, k, rng), m.ball_radius)


# -- Lloyd --------------------------------------------------------------------


def _lloyd_update(centers, points, weights, labels, mind2, policy):
    k = centers.shape[0]
    masses, moments = _cell_sums(points, weights, labels, k)
    new = centers.copy()
    full = masses > 0
    new[full] = moments[full] / masses[full, None]
    if policy == "reseed_farthest" and not np.all(full):
        d2 = mind2.copy()
        for j in np.flatnonzero(~full):
            far = int(np.argmax(d2))
            new[j] = points[far]
            np.minimum(d2, sq_distances(points, points[far : far + 1])[:, 0], out=d2)
    return new


def lloyd_step(cb: Codebook, m: DiscreteMeasure, policy: str = "keep") -> Codebook:
    """One Lloyd iteration: move every non-empty cell's codepoint to its centroid.

    Empty cells keep their codepoint (``policy="keep"``) or jump to the support
    point farthest from the current codebook (``"reseed_farthest"``).
    """
    _check_dims(cb, m.ambient_dim)
    if policy not in EMPTY_CELL_POLICIES:
        raise ConfigError(f"unknown empty-cell policy {policy!r}")
    labels, mind2 = assign(m.points, cb.codepoints)
    new = _lloyd_update(cb.codepoints, m.points, m.weights, labels, mind2, policy)
    return make_codebook(new, cb.ball_radius)


def auto_iterations(n: int) -> int:
    """ceil(log n / log(4/3)), at least 1."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    return max(1, math.ceil(math.log(n) / math.log(4.0 / 3.0)))


def _initial_centers(cfg: QuantizeConfig, target: DiscreteMeasure, restart: int):
    if isinstance(cfg.init, Codebook):
        _check_dims(cfg.init, target.ambient_dim)
        return np.array(cfg.init.codepoints)
    ss = np.random.SeedSequence([int(cfg.seed) & _UINT64, restart, 0])
    return _kmeanspp_arrays(target.points, target.weights, cfg.k, np.random.default_rng(ss))


def _report(cfg, centers, target, **kw) -> QuantizeReport:
    labels, d2 = assign(target.points, centers)
    masses = np.bincount(labels, weights=target.weights, minlength=centers.shape[0])
    return QuantizeReport(
        algorithm=cfg.algorithm,
        cell_masses=masses.tolist(),
        min_cell_separation=min_separation(centers),
        min_cell_mass=float(masses.min()),
        final_distortion=float(np.dot(target.weights, d2)),
        seed=int(cfg.seed),
        **kw,
    )


def _run_batch(cfg, xbar, T, restart, callback):
    centers = _initial_centers(cfg, xbar, restart)
    labels, mind2 = assign(xbar.points, centers)
    trace = [float(np.dot(xbar.weights, mind2))]
    ran, stopped = 0, False
    for _ in range(T):
        new = _lloyd_update(centers, xbar.points, xbar.weights, labels, mind2, cfg.empty_cell_policy)
        move = float(np.sqrt(np.max(np.sum((new - centers) ** 2, axis=1))))
        centers = new
        ran += 1
        labels, mind2 = assign(xbar.points, centers)
        trace.append(float(np.dot(xbar.weights, mind2)))
        if callback is not None:
            callback(ran, make_codebook(centers, xbar.ball_radius))
        if move < MOVE_TOL:
            stopped = True
            break
    report = _report(
        cfg, centers, xbar,
        distortion_trace=trace, iterations_run=ran, planned_iterations=T,
        early_stopped=stopped, restart=restart,
    )
    return centers, report


def _restart_count(cfg):
    return 1 if isinstance(cfg.init, Codebook) else cfg.restarts


def batch_quantize(
    sample: MeasureSample,
    cfg: QuantizeConfig,
    callback: Callable[[int, Codebook], None] | None = None,
) -> tuple[Codebook, QuantizeReport]:
    """Lloyd's algorithm on the empirical mean measure of ``sample``.

    Runs ``cfg.iterations`` steps (``"auto"`` resolves through
    :func:`auto_iterations`), stopping early once no codepoint moves by more
    than 1e-12. With ``cfg.restarts > 1`` the run with the lowest final
    empirical distortion is kept. ``callback(t, codebook)`` is invoked after
    every step of every restart.
    """
    cfg.validate()
    if cfg.algorithm != "batch":
        raise ConfigError("batch_quantize needs algorithm='batch'")
    if sample.n == 0:
        raise EmptySample("empty sample")
    xbar = mean_measure(sample)
    T = auto_iterations(sample.n) if cfg.iterations == "auto" else int(cfg.iterations)
    best = None
    for r in range(_restart_count(cfg)):
        centers, report = _run_batch(cfg, xbar, T, r, callback)
        if best is None or report.final_distortion < best[1].final_distortion:
            best = (centers, report)
    return make_codebook(best[0], xbar.ball_radius), best[1]


# -- mini-batch -------------------------------------------------------------------


def project_to_ball(centers: np.ndarray, radius: float) -> np.ndarray:
    """Radial projection of every row onto the closed ball B(0, radius)."""
    norms = np.sqrt(np.sum(centers * centers, axis=1))
    out = centers.copy()
    far = norms > radius
    out[far] = centers[far] * (radius / norms[far])[:, None]
    return out


def _batch_mean(measures):
    pts, w = stack_support(measures)
    return pts, w / len(measures)


def minibatch_step(centers, t, mass_batch, update_batch, radius):
    """Single update c <- proj(c - grad / ((t+1) p)), t counted from 0.

    ``mass_batch`` estimates cell masses p_j, ``update_batch`` the numerator
    integral of (c_j - u) over cell j. Cells with zero estimated mass are left
    untouched.
    """
    k = centers.shape[0]
    p1, w1 = _batch_mean(mass_batch)
    lab1, _ = assign(p1, centers)
    phat = np.bincount(lab1, weights=w1, minlength=k)
    p2, w2 = _batch_mean(update_batch)
    lab2, _ = assign(p2, centers)
    mass2, moment2 = _cell_sums(p2, w2, lab2, k)
    grad = centers * mass2[:, None] - moment2
    new = centers.copy()
    live = phat > 0
    new[live] = centers[live] - grad[live] / ((t + 1) * phat[live, None])
    return project_to_ball(new, radius)


def _split_batches(n, cfg):
    if cfg.iterations == "auto":
        T = max(1, n // cfg.minibatch_size)
    else:
        T = int(cfg.iterations)
    if T > n:
        raise BatchTooSmall(f"{T} mini-batches requested from {n} measures")
    if cfg.algorithm == "minibatch" and n // T < 2:
        raise BatchTooSmall("split mode needs at least 2 measures per mini-batch")
    return T


def _run_minibatch(cfg, sample, xbar, T, restart):
    centers = _initial_centers(cfg, xbar, restart)
    order = rng_stream(cfg.seed, restart, 1).permutation(sample.n)
    ms = sample.measures
    for t, idx in enumerate(np.array_split(order, T)):
        batch = [ms[i] for i in idx]
        if cfg.algorithm == "minibatch":
            half = (len(batch) + 1) // 2
            b1, b2 = batch[:half], batch[half:]
        else:
            b1 = b2 = batch
        centers = minibatch_step(centers, t, b1, b2, xbar.ball_radius)
    report = _report(
        cfg, centers, xbar,
        distortion_trace=[], iterations_run=T, planned_iterations=T, restart=restart,
    )
    return centers, report


def minibatch_quantize(sample: MeasureSample, cfg: QuantizeConfig) -> tuple[Codebook, QuantizeReport]:
    """MacQueen-type mini-batch quantization of the mean measure.

    The sample is shuffled with the run seed and cut into T nearly equal
    mini-batches. With ``iterations="auto"`` T is ``n // minibatch_size``
    (at least 1). In ``"minibatch"`` mode each batch is halved: the first half
    (the larger one for odd sizes) estimates the cell masses, the second half
    the update direction. ``"minibatch_nosplit"`` uses the whole batch for both.
    """
    cfg.validate()
    if cfg.algorithm not in ("minibatch", "minibatch_nosplit"):
        raise ConfigError("minibatch_quantize needs a minibatch algorithm")
    if sample.n == 0:
        raise EmptySample("empty sample")
    T = _split_batches(sample.n, cfg)
    xbar = mean_measure(sample)
    best = None
    for r in range(_restart_count(cfg)):
        centers, report = _run_minibatch(cfg, sample, xbar, T, r)
        if best is None or report.final_distortion < best[1].final_distortion:
            best = (centers, report)
    return make_codebook(best[0], xbar.ball_radius), best[1]


def quantize(sample: MeasureSample, cfg: QuantizeConfig) -> tuple[Codebook, QuantizeReport]:
    """Dispatch on ``cfg.algorithm``."""
    if cfg.algorithm == "batch":
        return batch_quantize(sample, cfg)
    return minibatch_quantize(sample, cfg)
