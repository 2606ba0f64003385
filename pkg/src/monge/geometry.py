"""Convex bodies, projective metrics and straight-line interpolation.

Every body is stored as a bounded convex set with nonempty interior.  Boxes
and polytopes are kept in half-space form ``A z <= b`` with unit normals so
that chord clipping and clearance share one code path.  Balls use the
quadratic line/sphere intersection.

Metrics are callables on point pairs with a vectorised ``pairwise`` method.
The Hilbert metric is evaluated from the chord through the two points::

    h(x, y) = 1/2 * log( |y - x'| |x - y'| / (|x - x'| |y - y'|) )

where ``x' = x + s (y - x)`` and ``y' = x + t (y - x)`` are the boundary
intersections, ``s < 0 < 1 < t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .errors import (
    DimensionMismatch,
    InvalidBody,
    ParameterOutOfRange,
    PointNotInterior,
    ZeroDirection,
)

#: boundary tolerance, relative to the body diameter
BOUNDARY_TOL = 1e-9
#: Hilbert evaluations refuse points closer than this (relative) to the boundary
HILBERT_CLEARANCE = 1e-7
#: pairs closer than this (relative) are treated as coincident by the Hilbert metric
COINCIDENT_TOL = 1e-12

_CHUNK = 1 << 18


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a 1-d float array, optionally checking its dimension."""
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1:
        raise DimensionMismatch(f"expected a single point, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionMismatch(f"point has dimension {p.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def as_points(X, dim: int | None = None) -> np.ndarray:
    """Coerce ``X`` to an ``(m, n)`` float array."""
    P = np.asarray(X, dtype=float)
    if P.ndim == 1:
        P = P[:, None] if dim == 1 else P[None, :]
    if P.ndim != 2:
        raise DimensionMismatch(f"expected an (m, n) array of points, got shape {P.shape}")
    if dim is not None and P.shape[1] != dim:
        raise DimensionMismatch(f"points have dimension {P.shape[1]}, expected {dim}")
    return P


@dataclass(frozen=True)
class ChordIntersection:
    """Boundary hits ``x + s v`` and ``x + t v`` of the line through ``x``."""

    s: float
    t: float
    x: np.ndarray
    v: np.ndarray

    @property
    def lower(self) -> np.ndarray:
        return self.x + self.s * self.v

    @property
    def upper(self) -> np.ndarray:
        return self.x + self.t * self.v


class ConvexBody:
    """Bounded convex domain with nonempty interior."""

    dim: int
    diameter: float
    kind: str

    def clearance(self, X) -> np.ndarray:
        """Signed Euclidean distance to the boundary (positive inside)."""
        raise NotImplementedError

    def chord_params(self, X, V) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised chord parameters for rows of ``X`` (or one point) and ``V``."""
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def tolerance(self) -> float:
        return BOUNDARY_TOL * self.diameter

    def _check_interior(self, X, margin: float) -> None:
        c = self.clearance(X)
        if np.any(c < margin):
            worst = int(np.argmin(c))
            raise PointNotInterior(
                f"point {np.atleast_2d(X)[worst]} has clearance {c.flat[worst]:.3g} "
                f"(required > {margin:.3g})"
            )


class _HalfSpaceBody(ConvexBody):
    """Shared code for bodies given as ``A z <= b`` with unit-norm rows of ``A``."""

    A: np.ndarray
    b: np.ndarray

    def clearance(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.min(self.b[None, :] - X @ self.A.T, axis=1)

    def chord_params(self, X, V):
        X = as_points(X, self.dim)
        V = np.asarray(V, dtype=float)
        slack = self.b[None, :] - X @ self.A.T  # (m, F)
        AV = V @ self.A.T  # (..., F)
        if V.ndim == 3:
            slack = slack[:, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = slack / AV
        t = np.min(np.where(AV > 0, ratio, np.inf), axis=-1)
        s = np.max(np.where(AV < 0, ratio, -np.inf), axis=-1)
        return s, t


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, center, radius: float):
        self.center = as_point(center)
        self.radius = float(radius)
        if not self.radius > 0:
            raise InvalidBody("ball radius must be positive")
        self.dim = self.center.shape[0]
        self.diameter = 2.0 * self.radius

    def clearance(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return self.radius - np.linalg.norm(X - self.center, axis=1)

    def chord_params(self, X, V):
        X = as_points(X, self.dim)
        V = np.asarray(V, dtype=float)
        D = X - self.center
        if V.ndim == 3:
            D = D[:, None, :]
        a = np.sum(V * V, axis=-1)
        bq = np.sum(V * D, axis=-1)
        cq = np.sum(D * D, axis=-1) - self.radius**2
        disc = np.sqrt(np.maximum(bq * bq - a * cq, 0.0))
        # stable roots: product of roots is cq / a
        with np.errstate(divide="ignore", invalid="ignore"):
            q = -(bq + np.where(bq >= 0, disc, -disc))
            r1 = q / a
            r2 = cq / q
        s = np.minimum(r1, r2)
        t = np.maximum(r1, r2)
        return s, t

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Box(_HalfSpaceBody):
    kind = "box"

    def __init__(self, lower, upper):
        self.lower = as_point(lower)
        self.upper = as_point(upper, self.lower.shape[0])
        if not np.all(self.lower < self.upper):
            raise InvalidBody("box needs lower < upper in every coordinate")
        self.dim = self.lower.shape[0]
        eye = np.eye(self.dim)
        self.A = np.vstack([eye, -eye])
        self.b = np.concatenate([self.upper, -self.lower])
        self.diameter = float(np.linalg.norm(self.upper - self.lower))

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def to_dict(self):
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class Polytope(_HalfSpaceBody):
    """Convex hull of a vertex list; facets are derived once at construction."""

    kind = "polytope"

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if V.ndim != 2 or V.shape[0] < V.shape[1] + 1:
            raise InvalidBody("polytope needs at least n + 1 vertices in R^n")
        n = V.shape[1]
        if np.linalg.matrix_rank(V[1:] - V[0]) < n:
            raise InvalidBody("polytope vertices do not span R^n (empty interior)")
        self.dim = n
        if n == 1:
            lo, hi = V.min(), V.max()
            self.vertices = np.array([[lo], [hi]])
            self.A = np.array([[1.0], [-1.0]])
            self.b = np.array([hi, -lo])
        else:
            hull = ConvexHull(V)
            self.vertices = V[np.sort(hull.vertices)]
            eq = np.unique(np.round(hull.equations, 12), axis=0)
            norms = np.linalg.norm(eq[:, :-1], axis=1)
            self.A = eq[:, :-1] / norms[:, None]
            self.b = -eq[:, -1] / norms
        diffs = self.vertices[:, None, :] - self.vertices[None, :, :]
        self.diameter = float(np.sqrt((diffs**2).sum(-1)).max())

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def to_dict(self):
        return {"kind": "polytope", "vertices": self.vertices.tolist()}

    def __repr__(self):
        return f"Polytope({len(self.vertices)} vertices in R^{self.dim})"


def boundary_chord(body: ConvexBody, x, v) -> ChordIntersection:
    """Intersect the line ``x + tau v`` with the boundary of ``body``.

    Returns ``s < 0 < t`` such that ``x + s v`` and ``x + t v`` lie on the
    boundary.  The parameters scale inversely with ``|v|``.
    """
    x = as_point(x, body.dim)
    v = as_point(v, body.dim)
    if np.linalg.norm(v) <= body.tolerance * 1e-3:
        raise ZeroDirection("direction vector is (numerically) zero")
    body._check_interior(x, body.tolerance)
    s, t = body.chord_params(x[None, :], v[None, :])
    return ChordIntersection(float(s[0]), float(t[0]), x, v)


def contains_interior(body: ConvexBody, x) -> tuple[bool, float]:
    """Return ``(inside, clearance)``; inside means clearance above tolerance."""
    c = float(body.clearance(as_point(x, body.dim)[None, :])[0])
    return c > body.tolerance, c


def interpolate(x, y, t):
    """Point ``(1 - t) x + t y`` on the segment from ``x`` to ``y``."""
    x = as_point(x)
    y = as_point(y, x.shape[0])
    t_arr = np.asarray(t, dtype=float)
    if np.any((t_arr < 0) | (t_arr > 1)) or not np.all(np.isfinite(t_arr)):
        raise ParameterOutOfRange(f"interpolation parameter {t} outside [0, 1]")
    if t_arr.ndim == 0:
        return (1.0 - t_arr) * x + t_arr * y
    return (1.0 - t_arr)[:, None] * x + t_arr[:, None] * y


def finsler_norm(body: ConvexBody, x, v) -> float:
    """Hilbert-geometry Finsler norm ``|v|/2 (1/|x-a| + 1/|x-b|)``."""
    x = as_point(x, body.dim)
    v = as_point(v, body.dim)
    body._check_interior(x, body.tolerance)
    if not np.any(v):
        return 0.0
    s, t = body.chord_params(x[None, :], v[None, :])
    return float(0.5 * (1.0 / -s[0] + 1.0 / t[0]))


# ---------------------------------------------------------------------------
# metrics


class Metric:
    """A metric on (a subset of) R^n; subclasses implement ``pairwise``."""

    kind: str
    dim: int | None = None

    def __call__(self, x, y) -> float:
        x = as_point(x, self.dim)
        y = as_point(y, x.shape[0])
        return float(self.pairwise(x[None, :], y[None, :])[0, 0])

    def pairwise(self, X, Y) -> np.ndarray:
        raise NotImplementedError

    def rowwise(self, X, Y) -> np.ndarray:
        """Distances between matching rows of ``X`` and ``Y``."""
        raise NotImplementedError

    def _coerce(self, X, Y):
        X = as_points(X, self.dim)
        Y = as_points(Y, X.shape[1])
        return X, Y

    def to_dict(self) -> dict:
        raise NotImplementedError

    def segments_are_geodesics(self) -> bool:
        return True


class NormMetric(Metric):
    """Translation-invariant metric ``|x - y|`` for some norm."""

    def norm(self, V: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pairwise(self, X, Y):
        X, Y = self._coerce(X, Y)
        out = np.empty((X.shape[0], Y.shape[0]))
        step = max(1, _CHUNK // max(1, Y.shape[0] * X.shape[1]))
        for i in range(0, X.shape[0], step):
            out[i : i + step] = self.norm(X[i : i + step, None, :] - Y[None, :, :])
        return out

    def rowwise(self, X, Y):
        X, Y = self._coerce(X, Y)
        return self.norm(X - Y)


class Euclidean(NormMetric):
    kind = "euclidean"

    def norm(self, V):
        return np.sqrt(np.sum(V * V, axis=-1))

    def to_dict(self):
        return {"kind": "euclidean"}

    def __repr__(self):
        return "Euclidean()"


class PNorm(NormMetric):
    kind = "pnorm"

    def __init__(self, p: float):
        self.p = float(p)
        if not self.p >= 1:
            raise ValueError("p-norm needs p >= 1")

    def norm(self, V):
        A = np.abs(V)
        if np.isinf(self.p):
            return A.max(axis=-1)
        if self.p == 1:
            return A.sum(axis=-1)
        # scale by the max entry to avoid under/overflow
        m = A.max(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = m[..., 0] * np.sum((A / np.where(m > 0, m, 1.0)) ** self.p, axis=-1) ** (1.0 / self.p)
        return r

    def to_dict(self):
        return {"kind": "pnorm", "p": self.p}

    def __repr__(self):
        return f"PNorm(p={self.p})"


class PolyhedralNorm(NormMetric):
    """Gauge of a centrally symmetric polytope with the origin inside."""

    kind = "polyhedral"

    def __init__(self, unit_ball):
        if not isinstance(unit_ball, Polytope):
            unit_ball = Polytope(unit_ball)
        V = unit_ball.vertices
        scale = unit_ball.diameter
        for v in V:
            if np.min(np.linalg.norm(V + v, axis=1)) > 1e-9 * scale:
                raise InvalidBody("polyhedral norm unit ball must be centrally symmetric")
        if np.any(unit_ball.b <= 1e-12 * scale):
            raise InvalidBody("origin must be interior to the unit ball")
        self.unit_ball = unit_ball
        self.dim = unit_ball.dim
        self._A = unit_ball.A / unit_ball.b[:, None]

    def norm(self, V):
        # |a.v| over all facets is exactly symmetric in v -> -v
        return np.max(np.abs(V @ self._A.T), axis=-1)

    def to_dict(self):
        return {"kind": "polyhedral", "vertices": self.unit_ball.vertices.tolist()}

    def __repr__(self):
        return f"PolyhedralNorm({self.unit_ball!r})"


class Hilbert(Metric):
    """Hilbert metric of a bounded convex body."""

    kind = "hilbert"

    def __init__(self, body: ConvexBody):
        self.body = body
        self.dim = body.dim

    def pairwise(self, X, Y):
        X, Y = self._coerce(X, Y)
        margin = HILBERT_CLEARANCE * self.body.diameter
        self.body._check_interior(X, margin)
        self.body._check_interior(Y, margin)
        out = np.empty((X.shape[0], Y.shape[0]))
        step = max(1, _CHUNK // max(1, Y.shape[0] * X.shape[1]))
        for i in range(0, X.shape[0], step):
            Xi = X[i : i + step]
            V = Y[None, :, :] - Xi[:, None, :]
            out[i : i + step] = self._from_chords(Xi, V)
        return out

    def rowwise(self, X, Y):
        X, Y = self._coerce(X, Y)
        margin = HILBERT_CLEARANCE * self.body.diameter
        self.body._check_interior(X, margin)
        self.body._check_interior(Y, margin)
        return self._from_chords(X, Y - X)

    def _from_chords(self, X, V):
        lengths = np.sqrt(np.sum(V * V, axis=-1))
        near = lengths < COINCIDENT_TOL * self.body.diameter
        V = np.where(near[..., None], 1.0, V)
        s, t = self.body.chord_params(X, V)
        # h = 1/2 [log((1 - s)/(-s)) + log(t/(t - 1))]
        with np.errstate(divide="ignore", invalid="ignore"):
            h = 0.5 * (np.log1p(-1.0 / s) + np.log1p(1.0 / (t - 1.0)))
        return np.where(near, 0.0, h)

    def to_dict(self):
        return {"kind": "hilbert"}

    def __repr__(self):
        return f"Hilbert({self.body!r})"


def distance(metric: Metric, x, y) -> float:
    """Distance between two points; exactly zero when ``x == y``."""
    x = as_point(x, metric.dim)
    y = as_point(y, x.shape[0])
    if np.array_equal(x, y):
        if isinstance(metric, Hilbert):
            metric.body._check_interior(x[None, :], HILBERT_CLEARANCE * metric.body.diameter)
        return 0.0
    return metric(x, y)


def check_dim(metric: Metric, dim: int) -> None:
    if metric.dim is not None and metric.dim != dim:
        raise DimensionMismatch(f"metric lives in R^{metric.dim}, points in R^{dim}")


# ---------------------------------------------------------------------------
# serialisation


def body_from_dict(d: dict) -> ConvexBody:
    kind = d.get("kind")
    if kind == "ball":
        return Ball(d["center"], d["radius"])
    if kind == "box":
        return Box(d["lower"], d["upper"])
    if kind == "polytope":
        return Polytope(d["vertices"])
    raise InvalidBody(f"unknown body kind {kind!r}")


def metric_from_dict(d: dict, body: ConvexBody | None = None) -> Metric:
    kind = d.get("kind")
    if kind == "euclidean":
        return Euclidean()
    if kind == "pnorm":
        return PNorm(d["p"])
    if kind == "polyhedral":
        return PolyhedralNorm(Polytope(d["vertices"]))
    if kind == "hilbert":
        inner = d.get("body")
        if inner is not None:
            body = body_from_dict(inner)
        if body is None:
            raise InvalidBody("Hilbert metric needs a convex body")
        return Hilbert(body)
    raise ValueError(f"unknown metric kind {kind!r}")


def space_to_dict(body: ConvexBody, metric: Metric) -> dict:
    return {"body": body.to_dict(), "metric": metric.to_dict()}


def space_from_dict(d: dict) -> tuple[ConvexBody, Metric]:
    body = body_from_dict(d["body"])
    return body, metric_from_dict(d["metric"], body)
