"""Brute-force oracles and certificate checkers for small instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import MassMismatch, MissingLabels, TooLarge, UnsupportedInstance, ConfigError
from .measure import DiscreteMeasure, MeasureSample, _ball_mask
from .quantization import Codebook, assign, make_codebook, min_separation, distortion

MAX_BRUTE_FORCE_ATOMS = 12
MASS_RTOL = 1e-9


# -- shattering -------------------------------------------------------------------


@dataclass
class ShatteringCertificate:
    """Outcome of a shattering check.

    ``witnesses`` maps each cross-class pair (i1, i2), i1 < i2, 0-based, to
    ``(j, direction)`` where j is the 1-based codepoint index and direction is
    ``"i1>i2"`` when the small ball around c_j carries at least Delta more
    mass in X_i1 than the large ball in X_i2, ``"i2>i1"`` for the reverse.
    """

    satisfied: bool
    p: int
    r: float
    delta: float
    witnesses: dict = field(default_factory=dict)
    failing_pair: tuple | None = None
    ball_convention: str = "closed"

    def to_json(self) -> dict:
        return {
            "satisfied": self.satisfied, "p": self.p, "r": self.r, "delta": self.delta,
            "ball_convention": self.ball_convention,
            "failing_pair": list(self.failing_pair) if self.failing_pair else None,
            "witnesses": [
                {"i1": a, "i2": b, "codepoint": j, "direction": s}
                for (a, b), (j, s) in sorted(self.witnesses.items())
            ],
        }


def ball_mass_table(sample: MeasureSample, centers: np.ndarray, radius: float) -> np.ndarray:
    """(n, k) table of X_i(B(c_j, radius)) for closed Euclidean balls."""
    out = np.empty((sample.n, centers.shape[0]))
    for i, m in enumerate(sample.measures):
        for j, c in enumerate(centers):
            out[i, j] = np.sum(m.weights[_ball_mask(m.points, c, radius, "euclidean")])
    return out


def check_shattering(sample: MeasureSample, cb: Codebook, p: int, r: float, delta: float) -> ShatteringCertificate:
    """Exhaustively test (p, r, delta)-shattering of a labeled sample by ``cb``.

    Each cross-class pair needs a codepoint c_j with
    X_i1(B(c_j, r/p)) >= X_i2(B(c_j, 4pr)) + delta, or the same with i1 and
    i2 swapped.
    """
    if sample.labels is None:
        raise MissingLabels("shattering needs class labels")
    if p < 1 or r <= 0 or delta <= 0:
        raise ConfigError("need p >= 1, r > 0, delta > 0")
    small = ball_mass_table(sample, cb.codepoints, r / p)
    big = ball_mass_table(sample, cb.codepoints, 4 * p * r)
    z = np.asarray(sample.labels)
    cert = ShatteringCertificate(True, int(p), float(r), float(delta))
    for i1 in range(sample.n):
        for i2 in range(i1 + 1, sample.n):
            if z[i1] == z[i2]:
                continue
            fwd = np.flatnonzero(small[i1] >= big[i2] + delta)
            if fwd.size:
                cert.witnesses[(i1, i2)] = (int(fwd[0]) + 1, "i1>i2")
                continue
            bwd = np.flatnonzero(small[i2] >= big[i1] + delta)
            if bwd.size:
                cert.witnesses[(i1, i2)] = (int(bwd[0]) + 1, "i2>i1")
                continue
            cert.satisfied = False
            cert.failing_pair = (i1, i2)
            return cert
    return cert


# -- Wasserstein-1 ----------------------------------------------------------------


def _w1_line(x1, w1, x2, w2) -> float:
    # integral of |F1 - F2| over the merged breakpoints
    xs = np.concatenate([x1, x2])
    ws = np.concatenate([w1, -w2])
    order = np.argsort(xs, kind="stable")
    xs, ws = xs[order], ws[order]
    diff = np.cumsum(ws)[:-1]
    return float(np.sum(np.abs(diff) * np.diff(xs)))


def w1_exact(m1: DiscreteMeasure, m2: DiscreteMeasure) -> float:
    """Exact Wasserstein-1 distance on the instances we can solve exactly.

    In dimension 1 any weights are allowed (CDF-difference integral). In higher
    dimension both measures must carry the same number of atoms with one common
    weight; the optimal plan is then a permutation, found by linear assignment.
    """
    if m1.ambient_dim != m2.ambient_dim:
        raise UnsupportedInstance("measures live in different dimensions")
    t1, t2 = m1.total_mass, m2.total_mass
    if abs(t1 - t2) > MASS_RTOL * max(t1, t2):
        raise MassMismatch(f"total masses differ: {t1} vs {t2}")
    if m1.ambient_dim == 1:
        return _w1_line(m1.points[:, 0], m1.weights, m2.points[:, 0], m2.weights)
    w = m1.weights[0]
    uniform = (
        m1.n_atoms == m2.n_atoms
        and np.all(m1.weights == w)
        and np.allclose(m2.weights, w, rtol=MASS_RTOL, atol=0)
    )
    if not uniform:
        raise UnsupportedInstance("multi-dimensional W1 needs equal-count uniform-weight supports")
    cost = np.sqrt(np.sum((m1.points[:, None, :] - m2.points[None, :, :]) ** 2, axis=2))
    rows, cols = linear_sum_assignment(cost)
    return float(w * cost[rows, cols].sum())


@dataclass
class ConcentrationResult:
    concentrated: bool
    w: float
    failing_pair: tuple | None = None
    reason: str | None = None
    max_w1: float = 0.0

    def __bool__(self) -> bool:
        return self.concentrated

    def to_json(self) -> dict:
        return {
            "concentrated": self.concentrated, "w": self.w, "max_w1": self.max_w1,
            "failing_pair": list(self.failing_pair) if self.failing_pair else None,
            "reason": self.reason,
        }


def check_concentration(sample: MeasureSample, w: float) -> ConcentrationResult:
    """Within-class pairs must have equal total mass and W1 distance <= w."""
    if sample.labels is None:
        raise MissingLabels("concentration needs class labels")
    z = sample.labels
    worst = 0.0
    for i1 in range(sample.n):
        for i2 in range(i1 + 1, sample.n):
            if z[i1] != z[i2]:
                continue
            a, b = sample.measures[i1], sample.measures[i2]
            ta, tb = a.total_mass, b.total_mass
            if abs(ta - tb) > MASS_RTOL * max(ta, tb):
                return ConcentrationResult(False, w, (i1, i2), "unequal total mass", worst)
            d = w1_exact(a, b)
            worst = max(worst, d)
            if d > w:
                return ConcentrationResult(False, w, (i1, i2), f"W1={d:.6g} > {w:g}", worst)
    return ConcentrationResult(True, w, max_w1=worst)


# -- exact k-means ------------------------------------------------------------------


@dataclass
class BruteForceResult:
    codebook: Codebook
    distortion: float
    partition: tuple  # 0-based block index per atom
    optimal_partitions: list  # every partition within 1e-9 relative of the optimum


def _partitions(n, k):
    """Restricted growth strings of length n with at most k blocks."""
    a = [0] * n

    def rec(i, used):
        if i == n:
            yield a
            return
        for b in range(min(used + 1, k)):
            a[i] = b
            yield from rec(i + 1, max(used, b + 1))

    yield from rec(0, 0)


def brute_force_kmeans(m: DiscreteMeasure, k: int) -> BruteForceResult:
    """Globally optimal k-point quantizer of a small measure.

    Enumerates every partition of the support into at most k non-empty groups
    and places a codepoint at each group's weighted centroid. The optimal
    quantizer's cells induce such a partition, so the minimum is global.
    """
    n = m.n_atoms
    if n > MAX_BRUTE_FORCE_ATOMS:
        raise TooLarge(f"{n} atoms exceed the enumeration cap of {MAX_BRUTE_FORCE_ATOMS}")
    if not 1 <= k <= n:
        raise ConfigError(f"need 1 <= k <= {n}")
    x, w = m.points, m.weights
    wx = w[:, None] * x
    wxx = w * np.sum(x * x, axis=1)
    scored = []
    for part in _partitions(n, k):
        lab = np.asarray(part)
        nb = lab.max() + 1
        mass = np.bincount(lab, weights=w, minlength=nb)
        mom = np.stack([np.bincount(lab, weights=wx[:, a], minlength=nb) for a in range(x.shape[1])], 1)
        sq = np.bincount(lab, weights=wxx, minlength=nb)
        cost = float(np.sum(sq - np.sum(mom * mom, axis=1) / mass))
        scored.append((cost, tuple(part)))

    def exact(part):
        lab = np.asarray(part)
        nb = lab.max() + 1
        cents = np.stack([
            np.sum(w[lab == b, None] * x[lab == b], axis=0) / np.sum(w[lab == b]) for b in range(nb)
        ])
        return cents, float(np.sum(w * np.min(
            np.sum((x[:, None, :] - cents[None]) ** 2, axis=2), axis=1)))

    # the incremental cost is cancellation-prone: rescore near-optimal candidates exactly
    scale = max(float(np.sum(wxx)), 1e-300)
    lo = min(c for c, _ in scored)
    cands = [p for c, p in scored if c <= lo + 1e-7 * scale]
    exact_scores = [(exact(p), p) for p in cands]
    best_val = min(v for (_, v), _ in exact_scores)
    optimal = [p for (_, v), p in exact_scores if v <= best_val * (1 + 1e-9) + 1e-300]
    (cents, val), part = min(exact_scores, key=lambda t: t[0][1])
    if cents.shape[0] < k:
        cents = np.concatenate([cents, np.repeat(cents[:1], k - cents.shape[0], axis=0)])
    cb = make_codebook(cents, m.ball_radius)
    return BruteForceResult(cb, distortion(cb, m), part, optimal)


def partition_centroids(m: DiscreteMeasure, partition, k: int | None = None) -> Codebook:
    """Codebook of weighted centroids of the blocks of ``partition``."""
    lab = np.asarray(partition)
    nb = int(lab.max()) + 1
    cents = np.stack([
        np.sum(m.weights[lab == b, None] * m.points[lab == b], axis=0) / np.sum(m.weights[lab == b])
        for b in range(nb)
    ])
    if k is not None and nb < k:
        cents = np.concatenate([cents, np.repeat(cents[:1], k - nb, axis=0)])
    return make_codebook(cents, m.ball_radius)


def codebook_diagnostics(cb: Codebook, m: DiscreteMeasure) -> tuple[float, float]:
    """Empirical separation B (min codepoint gap) and min cell mass p_min.

    B is ``inf`` when k = 1.
    """
    labels, _ = assign(m.points, cb.codepoints)
    masses = np.bincount(labels, weights=m.weights, minlength=cb.k)
    return min_separation(cb.codepoints), float(masses.min())
