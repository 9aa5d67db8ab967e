"""Discrete measures on a closed Euclidean ball and their empirical mean."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    EmptySample,
    EmptySupport,
    LengthMismatch,
    NonPositiveWeight,
    PointOutsideBall,
)

# Relative slack on the ball constraint; absorbs the last-ulp error of a
# radial projection, never anything larger.
BALL_RTOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def inside_ball(points: np.ndarray, radius: float) -> np.ndarray:
    """Boolean mask of rows of ``points`` with Euclidean norm <= ``radius``."""
    norms = np.sqrt(np.sum(points * points, axis=1))
    return norms <= radius * (1.0 + BALL_RTOL)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite weighted point set in the closed ball B(0, R) of R^d.

    Use :func:`make_measure` to build one; the constructor trusts its input.
    ``points`` has shape (n_atoms, ambient_dim) and ``weights`` shape (n_atoms,).
    Both arrays are read-only.
    """

    points: np.ndarray
    weights: np.ndarray
    ball_radius: float

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def with_radius(self, ball_radius: float) -> "DiscreteMeasure":
        return make_measure(self.points, self.weights, ball_radius)

    def to_json(self) -> dict:
        return {"points": self.points.tolist(), "weights": self.weights.tolist()}

    def __repr__(self) -> str:
        return (
            f"DiscreteMeasure(n_atoms={self.n_atoms}, ambient_dim={self.ambient_dim}, "
            f"total_mass={self.total_mass:g}, ball_radius={self.ball_radius:g})"
        )


def make_measure(points, weights, ball_radius: float) -> DiscreteMeasure:
    """Validate and build a :class:`DiscreteMeasure`.

    Points outside the ball are rejected, never clipped.

    Raises
    ------
    EmptySupport, DimensionMismatch, NonPositiveWeight, PointOutsideBall
    """
    pts = np.asarray(points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if pts.size == 0 or (pts.ndim >= 1 and pts.shape[0] == 0):
        raise EmptySupport("a measure needs at least one atom")
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise DimensionMismatch(f"points must be a 2-d array, got shape {pts.shape}")
    if w.ndim != 1 or w.shape[0] != pts.shape[0]:
        raise DimensionMismatch(
            f"{pts.shape[0]} points but weights of shape {w.shape}"
        )
    if not np.all(np.isfinite(pts)):
        raise DataError("point coordinates must be finite")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise NonPositiveWeight("weights must be positive and finite")
    if not (np.isfinite(ball_radius) and ball_radius > 0):
        raise DataError(f"ball_radius must be positive, got {ball_radius}")
    ok = inside_ball(pts, ball_radius)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise PointOutsideBall(
            f"atom {bad} has norm {np.linalg.norm(pts[bad]):.6g} > R={ball_radius:g}"
        )
    if not np.isfinite(np.sum(w)):
        raise NonPositiveWeight("total mass is not finite")
    return DiscreteMeasure(_frozen(pts), _frozen(w), float(ball_radius))


def _ball_mask(points: np.ndarray, center: np.ndarray, radius: float, norm: str) -> np.ndarray:
    diff = points - center
    if norm == "euclidean":
        dist = np.sqrt(np.sum(diff * diff, axis=1))
    elif norm == "linf":
        dist = np.max(np.abs(diff), axis=1)
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return dist <= radius


def ball_mass(m: DiscreteMeasure, center, radius: float, norm: str = "euclidean") -> float:
    """Mass that ``m`` puts on the closed ball B(center, radius)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    c = np.asarray(center, dtype=np.float64).reshape(-1)
    if c.shape[0] != m.ambient_dim:
        raise DimensionMismatch(f"center has dim {c.shape[0]}, measure has {m.ambient_dim}")
    return float(np.sum(m.weights[_ball_mask(m.points, c, radius, norm)]))


def coalesce(m: DiscreteMeasure, tolerance: float = 0.0) -> DiscreteMeasure:
    """Merge atoms lying within L-inf distance ``tolerance`` of an earlier atom.

    Each atom joins the first earlier representative it is close to; merged
    weights are summed at the representative's location.
    """
    reps: list[int] = []
    weights: list[float] = []
    for i, x in enumerate(m.points):
        for slot, r in enumerate(reps):
            if np.max(np.abs(m.points[r] - x)) <= tolerance:
                weights[slot] += float(m.weights[i])
                break
        else:
            reps.append(i)
            weights.append(float(m.weights[i]))
    return make_measure(m.points[reps], weights, m.ball_radius)


@dataclass(frozen=True, eq=False)
class MeasureSample:
    """A sample X_1..X_n of measures sharing dimension and ball radius.

    ``labels`` (optional) hold the hidden classes as integers in [1, L].
    """

    measures: tuple
    labels: tuple | None = None
    _dim: int = field(init=False, repr=False)

    def __post_init__(self):
        measures = tuple(self.measures)
        object.__setattr__(self, "measures", measures)
        if measures:
            dims = {m.ambient_dim for m in measures}
            radii = {m.ball_radius for m in measures}
            if len(dims) > 1:
                raise DimensionMismatch(f"mixed ambient dimensions {sorted(dims)}")
            if len(radii) > 1:
                raise DataError(f"mixed ball radii {sorted(radii)}")
            object.__setattr__(self, "_dim", dims.pop())
        else:
            object.__setattr__(self, "_dim", 0)
        if self.labels is not None:
            labels = tuple(int(z) for z in self.labels)
            if len(labels) != len(measures):
                raise LengthMismatch(f"{len(labels)} labels for {len(measures)} measures")
            if any(z < 1 for z in labels):
                raise DataError("labels must be integers >= 1")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.measures)

    @property
    def ambient_dim(self) -> int:
        return self._dim

    @property
    def ball_radius(self) -> float:
        return self.measures[0].ball_radius if self.measures else float("nan")

    @property
    def mass_bound(self) -> float:
        """Largest total mass in the sample (the mass bound M)."""
        return max(m.total_mass for m in self.measures)

    def subset(self, idx: Sequence[int]) -> "MeasureSample":
        labels = None if self.labels is None else [self.labels[i] for i in idx]
        return MeasureSample(tuple(self.measures[i] for i in idx), labels)

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return iter(self.measures)

    def __getitem__(self, i):
        return self.measures[i]


def stack_support(measures: Iterable[DiscreteMeasure]) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate supports and weights of ``measures`` in order."""
    measures = list(measures)
    pts = np.concatenate([m.points for m in measures], axis=0)
    w = np.concatenate([m.weights for m in measures])
    return pts, w


def mean_measure(sample: MeasureSample, coalesce_tol: float | None = None) -> DiscreteMeasure:
    """Empirical mean measure of ``sample``.

    Support is the concatenation of all supports (sample order, then atom
    order); each weight is divided by n. Duplicate points are kept unless
    ``coalesce_tol`` is given.
    """
    if sample.n == 0:
        raise EmptySample("cannot average an empty sample")
    pts, w = stack_support(sample.measures)
    m = DiscreteMeasure(_frozen(pts), _frozen(w / sample.n), sample.ball_radius)
    if coalesce_tol is not None:
        m = coalesce(m, coalesce_tol)
    return m


# -- NDJSON --------------------------------------------------------------------


def read_ndjson(path) -> MeasureSample:
    """Read a measure file.

    First line is a header ``{"ambient_dim": d, "ball_radius": R, "labels": [...]}``
    (labels optional); every following non-blank line is
    ``{"points": [[...], ...], "weights": [...]}``.
    """
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
        d = int(header["ambient_dim"])
        radius = float(header["ball_radius"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"bad header line in {path}: {exc}") from exc
    measures = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
            pts = np.asarray(rec["points"], dtype=np.float64)
            w = rec["weights"]
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        if pts.ndim != 2 or pts.shape[1] != d:
            raise DimensionMismatch(f"{path}:{lineno}: points do not have dimension {d}")
        measures.append(make_measure(pts, w, radius))
    if not measures:
        raise EmptySample(f"{path} holds no measures")
    return MeasureSample(tuple(measures), header.get("labels"))


def write_ndjson(sample: MeasureSample, path) -> None:
    header = {"ambient_dim": sample.ambient_dim, "ball_radius": sample.ball_radius}
    if sample.labels is not None:
        header["labels"] = list(sample.labels)
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for m in sample.measures:
            fh.write(json.dumps(m.to_json()) + "\n")
