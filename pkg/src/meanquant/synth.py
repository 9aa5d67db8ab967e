"""Synthetic mixture-of-measures benchmark and its Q1 / Q2 sweeps.

Each mixture component is a point cloud built from p support centers: p - 1
centers shared by every component on a sphere, plus one vertex of the unit
hypercube that differs between components. Every center (scaled by the signal
level r) receives N Gaussian draws.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, field, replace

import numpy as np

from .cluster import ClusterLabels, kmeans_vectors, nmi
from .errors import SpecInvalid
from .measure import MeasureSample, make_measure, stack_support
from .quantization import QuantizeConfig, make_codebook, minibatch_quantize, rng_stream
from .vectorization import SIGMA_RULES, Embedding, Kernel, VectorizeConfig, vectorize_sample

METHODS = ("atol", "rand", "grid", "histogram")

# sub-stream keys; data, calibration and method streams never share a generator
_CENTERS, _VERTICES, _NOISE, _SHUFFLE, _CALIB, _METHOD, _CLUSTER = range(7)


@dataclass(frozen=True)
class MixtureSpec:
    d: int = 2
    L: int = 3
    p: int = 4
    r: float = 1.0
    N: int = 25
    sphere_radius: float = 10.0
    n_per_class: int = 20
    noise_sd: float = 1.0

    def validate(self) -> None:
        if self.d < 1:
            raise SpecInvalid("d must be >= 1")
        if self.L < 1 or self.L > 2 ** self.d:
            raise SpecInvalid(f"need 1 <= L <= 2^d = {2 ** self.d}, got L={self.L}")
        if self.p < 1 or self.N < 1 or self.n_per_class < 1:
            raise SpecInvalid("p, N and n_per_class must be >= 1")
        if not (self.r > 0 and self.sphere_radius > 0 and self.noise_sd >= 0):
            raise SpecInvalid("r and sphere_radius must be positive, noise_sd non-negative")

    @classmethod
    def from_json(cls, obj: dict) -> "MixtureSpec":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecInvalid(f"unknown spec fields {sorted(unknown)}")
        try:
            spec = cls(**obj)
        except TypeError as exc:
            raise SpecInvalid(str(exc)) from exc
        spec.validate()
        return spec

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MixtureCenters:
    sphere: np.ndarray  # (p - 1, d), shared by all classes
    vertex_ids: tuple  # hypercube vertex (as an integer bitmask) of each class

    def vertex(self, ell: int, d: int) -> np.ndarray:
        v = self.vertex_ids[ell - 1]
        return np.array([(v >> a) & 1 for a in range(d)], dtype=np.float64)

    def class_centers(self, ell: int, d: int) -> np.ndarray:
        return np.vstack([self.sphere, self.vertex(ell, d)[None, :]])


def gen_centers(spec: MixtureSpec, seed: int, vertex_ids=None) -> MixtureCenters:
    """Shared sphere centers plus one distinct hypercube vertex per class.

    ``vertex_ids`` overrides the seeded draw of vertices without replacement.
    """
    spec.validate()
    g = rng_stream(seed, _CENTERS)
    raw = g.standard_normal((spec.p - 1, spec.d))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    sphere = spec.sphere_radius * raw / np.where(norms > 0, norms, 1.0)
    if vertex_ids is None:
        vertex_ids = rng_stream(seed, _VERTICES).choice(2 ** spec.d, spec.L, replace=False)
    vertex_ids = tuple(int(v) for v in vertex_ids)
    if len(vertex_ids) != spec.L or len(set(vertex_ids)) != spec.L:
        raise SpecInvalid("need L distinct vertices")
    if any(not 0 <= v < 2 ** spec.d for v in vertex_ids):
        raise SpecInvalid("vertex id out of range")
    return MixtureCenters(sphere, vertex_ids)


def _draw_points(ell, index, spec, centers, seed):
    # keyed by the vertex, not the class slot, so relabeling vertices permutes samples
    g = rng_stream(seed, _NOISE, centers.vertex_ids[ell - 1], index)
    c = spec.r * centers.class_centers(ell, spec.d)
    eps = g.standard_normal((c.shape[0], spec.N, spec.d)) * spec.noise_sd
    return (c[:, None, :] + eps).reshape(-1, spec.d)


def _radius_for(points) -> float:
    top = float(np.max(np.linalg.norm(points, axis=1)))
    return top * 1.01 if top > 0 else 1.0


def sample_measure(ell: int, spec: MixtureSpec, seed: int, index: int = 0, centers=None):
    """One draw of mixture component ``ell``: p * N unit-weight atoms."""
    spec.validate()
    if not 1 <= ell <= spec.L:
        raise SpecInvalid(f"class {ell} not in [1, {spec.L}]")
    centers = gen_centers(spec, seed) if centers is None else centers
    pts = _draw_points(ell, index, spec, centers, seed)
    return make_measure(pts, np.ones(pts.shape[0]), _radius_for(pts))


def gen_sample(spec: MixtureSpec, seed: int, vertex_ids=None) -> MeasureSample:
    """L * n_per_class labeled measures in a seeded shuffled order.

    All measures share a ball radius of 1.01 times the largest atom norm.
    """
    centers = gen_centers(spec, seed, vertex_ids)
    clouds, labels = [], []
    for ell in range(1, spec.L + 1):
        for i in range(spec.n_per_class):
            clouds.append(_draw_points(ell, i, spec, centers, seed))
            labels.append(ell)
    radius = _radius_for(np.concatenate(clouds))
    order = rng_stream(seed, _SHUFFLE).permutation(len(clouds))
    measures = [make_measure(clouds[i], np.ones(clouds[i].shape[0]), radius) for i in order]
    return MeasureSample(tuple(measures), [labels[i] for i in order])


# -- baselines --------------------------------------------------------------------


def grid_points(spec: MixtureSpec, k: int) -> np.ndarray:
    """floor(k^(1/d)) points per axis over [0, 10r]^d, endpoints included."""
    m = _per_axis(k, spec.d)
    side = 10.0 * spec.r
    axis = np.array([side / 2.0]) if m == 1 else np.linspace(0.0, side, m)
    mesh = np.meshgrid(*([axis] * spec.d), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def _per_axis(k: int, d: int) -> int:
    m = int(math.floor(k ** (1.0 / d) + 1e-9))
    while (m + 1) ** d <= k:
        m += 1
    while m > 1 and m ** d > k:
        m -= 1
    return max(m, 1)


def baseline_codebook(kind: str, sample: MeasureSample, k: int, spec: MixtureSpec, seed: int):
    """``rand``: k support points drawn weight-proportionally from the pooled
    sample; ``grid``: the regular lattice of :func:`grid_points`.

    The grid may hold fewer than k points (m^d <= k); read ``codebook.k``.
    """
    if k < 1:
        raise SpecInvalid("k must be >= 1")
    if kind == "rand":
        pts, w = stack_support(sample.measures)
        idx = rng_stream(seed, _METHOD, 1).choice(pts.shape[0], size=k, p=w / w.sum())
        return make_codebook(pts[idx], sample.ball_radius)
    if kind == "grid":
        g = grid_points(spec, k)
        radius = max(sample.ball_radius, float(np.max(np.linalg.norm(g, axis=1))) * 1.01)
        return make_codebook(g, radius)
    raise SpecInvalid(f"unknown baseline {kind!r}")


def histogram_vectorize(sample: MeasureSample, bins_per_axis: int, box_side: float) -> Embedding:
    """Weight per tile of the regular tiling of [0, box_side]^d.

    Tiles are flattened in row-major axis order; atoms outside the box land in
    the nearest edge tile.
    """
    if bins_per_axis < 1:
        raise SpecInvalid("bins_per_axis must be >= 1")
    d = sample.ambient_dim
    rows = np.zeros((sample.n, bins_per_axis ** d))
    for i, m in enumerate(sample.measures):
        cell = np.floor(m.points / box_side * bins_per_axis).astype(np.int64)
        cell = np.clip(cell, 0, bins_per_axis - 1)
        flat = np.ravel_multi_index(tuple(cell.T), (bins_per_axis,) * d)
        rows[i] = np.bincount(flat, weights=m.weights, minlength=bins_per_axis ** d)
    return Embedding(rows, labels=sample.labels)


# -- harness --------------------------------------------------------------------


@dataclass
class BenchResult:
    method: str
    sweep_name: str
    sweep_value: float
    nmis: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)

    @property
    def reps(self) -> int:
        return len(self.nmis)

    @property
    def mean(self) -> float:
        return float(np.mean(self.nmis))

    @property
    def ci95(self) -> float:
        """1.96 * sample standard deviation / sqrt(reps); 0 for a single rep."""
        if self.reps < 2:
            return 0.0
        return float(1.96 * np.std(self.nmis, ddof=1) / math.sqrt(self.reps))


def calibration_subset(n: int, seed: int, rep: int, fraction: float = 0.1) -> np.ndarray:
    size = max(1, math.ceil(fraction * n))
    return np.sort(rng_stream(seed, _CALIB, rep).choice(n, size=size, replace=False))


def embed(method: str, sample: MeasureSample, k: int, spec: MixtureSpec, seed: int, rep: int,
          minibatch_size: int = 1000, sigma_rule: str = "mean_nn") -> Embedding:
    """Vectorize ``sample`` with one of the benchmark methods at budget ``k``.

    Codebook methods use the exponential kernel with a scalar scale chosen by
    ``sigma_rule`` (see ``vectorization.SIGMA_RULES``).
    """
    if method == "histogram":
        return histogram_vectorize(sample, _per_axis(k, spec.d), 10.0 * spec.r)
    if method == "atol":
        calib = sample.subset(calibration_subset(sample.n, seed, rep))
        kk = min(k, sum(m.n_atoms for m in calib))
        algo = "minibatch" if calib.n >= 2 else "minibatch_nosplit"
        cfg = QuantizeConfig(
            k=kk, algorithm=algo, minibatch_size=minibatch_size,
            seed=int(rng_stream(seed, _METHOD, rep, 0).integers(2**63)),
        )
        cb, _ = minibatch_quantize(calib, cfg)
    elif method in ("rand", "grid"):
        sub_seed = int(rng_stream(seed, _METHOD, rep, 2).integers(2**63))
        cb = baseline_codebook(method, sample, k, spec, sub_seed)
    else:
        raise SpecInvalid(f"unknown method {method!r}")
    sigma = SIGMA_RULES[sigma_rule](cb)
    return vectorize_sample(sample, cb, VectorizeConfig(sigma, Kernel.EXPONENTIAL))


def _one_rep(spec, rep, seed, points, methods, restarts, sigma_rule):
    """All (method, sweep point) scores for one repetition.

    ``points`` is a list of (spec_for_point, budget).
    """
    out = []
    data_seed = int(rng_stream(seed, 100, rep).integers(2**63))
    samples = {}
    for pi, (pspec, k) in enumerate(points):
        if pspec not in samples:
            samples[pspec] = gen_sample(pspec, data_seed)
        sample = samples[pspec]
        truth = ClusterLabels(sample.labels)
        for method in methods:
            t0 = time.perf_counter()
            emb = embed(method, sample, k, pspec, data_seed, rep, sigma_rule=sigma_rule)
            clus_seed = int(rng_stream(seed, _CLUSTER, rep, pi).integers(2**63))
            labels = kmeans_vectors(emb, pspec.L, restarts=restarts, seed=clus_seed)
            score = nmi(labels, truth)
            out.append((method, pi, score, (time.perf_counter() - t0) * 1e3))
    return out


def _run(spec, points, sweep_name, values, methods, reps, seed, restarts, workers, sigma_rule):
    spec.validate()
    for m in methods:
        if m not in METHODS:
            raise SpecInvalid(f"unknown method {m!r}; choose from {METHODS}")
    if reps < 1:
        raise SpecInvalid("reps must be >= 1")
    if sigma_rule not in SIGMA_RULES:
        raise SpecInvalid(f"unknown sigma rule {sigma_rule!r}")
    results = {(m, pi): BenchResult(m, sweep_name, values[pi]) for pi in range(len(points)) for m in methods}
    job = lambda rep: _one_rep(spec, rep, seed, points, methods, restarts, sigma_rule)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            per_rep = list(ex.map(job, range(reps)))
    else:
        per_rep = [job(rep) for rep in range(reps)]
    for rows in per_rep:
        for method, pi, score, ms in rows:
            results[(method, pi)].nmis.append(score)
            results[(method, pi)].wall_ms.append(ms)
    return [results[(m, pi)] for m in methods for pi in range(len(points))]


def run_q1(spec: MixtureSpec, budgets, methods=METHODS, reps: int = 100, seed: int = 0,
           restarts: int = 100, workers: int = 1, sigma_rule: str = "mean_nn") -> list:
    """NMI against budget k at the mixture's signal level r.

    Every repetition draws a fresh sample per sweep point; repetitions own
    independent seeded streams, so ``workers`` does not change the numbers.
    """
    points = [(spec, int(k)) for k in budgets]
    return _run(spec, points, "budget", [int(k) for k in budgets], methods, reps, seed, restarts,
                workers, sigma_rule)


def run_q2(spec: MixtureSpec, signal_levels, budget: int = 32, methods=METHODS, reps: int = 100,
           seed: int = 0, restarts: int = 100, workers: int = 1, sigma_rule: str = "mean_nn") -> list:
    """NMI against signal level r at a fixed budget."""
    points = [(replace(spec, r=float(r)), int(budget)) for r in signal_levels]
    for ps, _ in points:
        ps.validate()
    return _run(spec, points, "signal", [float(r) for r in signal_levels], methods, reps, seed,
                restarts, workers, sigma_rule)


def write_results_csv(results, path, timing: bool = True) -> None:
    """Per-repetition rows: method,sweep_name,sweep_value,rep,nmi,wall_ms.

    With ``timing=False`` the wall_ms column is left blank so that reruns are
    byte-identical.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "sweep_name", "sweep_value", "rep", "nmi", "wall_ms"])
        for res in results:
            for rep, (score, ms) in enumerate(zip(res.nmis, res.wall_ms)):
                w.writerow([res.method, res.sweep_name, _fmt(res.sweep_value), rep,
                            format(score, ".17g"), format(ms, ".3f") if timing else ""])


def write_aggregate_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "sweep_name", "sweep_value", "reps", "mean", "ci95"])
        for res in results:
            w.writerow([res.method, res.sweep_name, _fmt(res.sweep_value), res.reps,
                        format(res.mean, ".17g"), format(res.ci95, ".17g")])


def _fmt(v) -> str:
    return str(v) if isinstance(v, int) else format(float(v), "g")
