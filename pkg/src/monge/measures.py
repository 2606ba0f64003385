"""Finitely supported probability measures, epsilon-nets and doubling estimates."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (
    DegenerateMeasure,
    EmptyDiscretization,
    InvalidMeasure,
    RejectionBudgetExceeded,
)
from .geometry import ConvexBody, Metric, as_points, check_dim

MERGE_TOL = 1e-12
MASS_TOL = 1e-12
DOUBLING_HALVINGS = 6


class DiscreteMeasure:
    """Probability measure on finitely many distinct points.

    Weights must be positive; they are normalised to sum to one.  Points
    closer than ``MERGE_TOL`` are merged into the first occurrence and their
    weights summed (``merged`` records how many atoms disappeared).
    """

    def __init__(self, points, weights=None, *, normalize: bool = True):
        P = as_points(points)
        if P.shape[0] == 0:
            raise InvalidMeasure("measure needs at least one atom")
        if not np.all(np.isfinite(P)):
            raise InvalidMeasure("atom coordinates must be finite")
        if weights is None:
            w = np.full(P.shape[0], 1.0 / P.shape[0])
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape[0] != P.shape[0]:
                raise InvalidMeasure(f"{P.shape[0]} points but {w.shape[0]} weights")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise InvalidMeasure("weights must be finite and strictly positive")
        P, w, merged = _merge_duplicates(P, w)
        total = w.sum()
        if normalize:
            w = w / total
        elif abs(total - 1.0) > MASS_TOL:
            raise InvalidMeasure(f"weights sum to {total!r}, not 1")
        self.points = P
        self.weights = w
        self.merged = merged
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def diameter(self, metric: Metric) -> float:
        if len(self) == 1:
            return 0.0
        return float(metric.pairwise(self.points, self.points).max())

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points": self.points.tolist(), "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMeasure":
        pts = np.asarray(d["points"], dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if "dim" in d and pts.shape[1] != int(d["dim"]):
            raise InvalidMeasure(f"declared dim {d['dim']} but points have dimension {pts.shape[1]}")
        return cls(pts, d.get("weights"))

    def __repr__(self):
        return f"DiscreteMeasure({len(self)} atoms in R^{self.dim})"


def _merge_duplicates(P, w):
    if P.shape[0] < 2:
        return P.copy(), w.copy(), 0
    pairs = cKDTree(P).query_pairs(MERGE_TOL, output_type="ndarray")
    if len(pairs) == 0:
        return P.copy(), w.copy(), 0
    m = P.shape[0]
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(m, m))
    _, labels = connected_components(graph, directed=False)
    first = np.full(labels.max() + 1, m)
    np.minimum.at(first, labels, np.arange(m))
    keep = np.sort(first)
    remap = np.empty(labels.max() + 1, dtype=int)
    remap[labels[keep]] = np.arange(len(keep))
    merged_w = np.bincount(remap[labels], weights=w, minlength=len(keep))
    return P[keep].copy(), merged_w, m - len(keep)


def dirac(point) -> DiscreteMeasure:
    return DiscreteMeasure(np.atleast_2d(np.asarray(point, dtype=float)))


def uniform(points) -> DiscreteMeasure:
    return DiscreteMeasure(points)


def canonical_order(measure: DiscreteMeasure) -> DiscreteMeasure:
    """Same measure with atoms sorted lexicographically by coordinates."""
    order = np.lexsort(measure.points.T[::-1])
    return DiscreteMeasure(measure.points[order], measure.weights[order])


# ---------------------------------------------------------------------------
# discretisers

DENSITIES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "uniform": lambda X: np.ones(X.shape[0]),
    "linear": lambda X: X[:, 0],
    "gaussian": lambda X: np.exp(-0.5 * np.sum((X - X.mean(axis=0)) ** 2, axis=1) / 0.1),
}


def grid_discretize(body: ConvexBody, resolution: int, density=None) -> DiscreteMeasure:
    """Cell-centre discretisation of a density on ``body``.

    The bounding box is cut into ``resolution`` cells per axis; cells whose
    centre is interior to the body are kept with weight proportional to the
    density at the centre.
    """
    resolution = int(resolution)
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    lo, hi = body.bounding_box()
    h = (hi - lo) / resolution
    axes = [lo[k] + (np.arange(resolution) + 0.5) * h[k] for k in range(body.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    X = X[body.clearance(X) > body.tolerance]
    if X.shape[0] == 0:
        raise EmptyDiscretization("no grid cell centre lies inside the body")
    if density is None:
        w = np.ones(X.shape[0])
    else:
        if isinstance(density, str):
            density = DENSITIES[density]
        w = np.asarray(density(X), dtype=float).ravel()
    keep = w > 0
    if not np.any(keep):
        raise EmptyDiscretization("density vanishes at every interior cell centre")
    return DiscreteMeasure(X[keep], w[keep])


def sample_uniform(body: ConvexBody, count: int, seed: int) -> DiscreteMeasure:
    """Rejection sample ``count`` interior points with equal weights."""
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = body.bounding_box()
    budget = 1000 * count
    accepted = []
    n_acc = attempts = 0
    while n_acc < count:
        if attempts >= budget:
            raise RejectionBudgetExceeded(f"accepted {n_acc} of {count} after {attempts} draws")
        batch = min(budget - attempts, max(64, 2 * (count - n_acc)))
        X = rng.uniform(lo, hi, size=(batch, body.dim))
        attempts += batch
        X = X[body.clearance(X) > body.tolerance]
        accepted.append(X)
        n_acc += X.shape[0]
    X = np.concatenate(accepted)[:count]
    return DiscreteMeasure(X)


# ---------------------------------------------------------------------------
# nets and projections


@dataclass(frozen=True)
class Net:
    indices: np.ndarray
    epsilon: float
    covering_radius: float
    points: np.ndarray

    def __len__(self):
        return len(self.indices)


def greedy_eps_net(points, metric: Metric, epsilon: float) -> Net:
    """Maximal epsilon-discrete subset built by a single scan in input order.

    A point joins the net iff its distance to every earlier net point
    exceeds ``epsilon``; maximality makes the result an epsilon-net.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    P = as_points(points)
    if P.shape[0] == 0:
        raise ValueError("need at least one point")
    check_dim(metric, P.shape[1])
    dmin = np.full(P.shape[0], np.inf)
    chosen = []
    for i in range(P.shape[0]):
        if dmin[i] > epsilon:
            chosen.append(i)
            np.minimum(dmin, metric.pairwise(P[i : i + 1], P)[0], out=dmin)
            dmin[i] = 0.0
    idx = np.asarray(chosen, dtype=int)
    return Net(idx, float(epsilon), float(dmin.max()), P[idx])


def net_separation(net: Net, metric: Metric) -> float:
    """Smallest distance between two distinct net points (inf for a single point)."""
    if len(net) < 2:
        return np.inf
    D = metric.pairwise(net.points, net.points)
    np.fill_diagonal(D, np.inf)
    return float(D.min())


def nearest_point_projection(points, targets, metric: Metric) -> np.ndarray:
    """Index of the nearest target per point; ties go to the smallest index."""
    P = as_points(points)
    T = as_points(targets, P.shape[1])
    if T.shape[0] == 0:
        raise ValueError("targets must be nonempty")
    check_dim(metric, P.shape[1])
    # argmin returns the first minimiser
    return np.argmin(metric.pairwise(P, T), axis=1)


def pushforward_weights(measure: DiscreteMeasure, assignment, n_targets: int) -> np.ndarray:
    a = np.asarray(assignment, dtype=int)
    if a.shape != (len(measure),):
        raise ValueError("assignment must give one target per atom")
    return np.bincount(a, weights=measure.weights, minlength=n_targets)


def pushforward(measure: DiscreteMeasure, assignment, targets) -> DiscreteMeasure:
    """Image measure: atoms sent to the same target have their weights summed.

    The result lists the targets that receive mass, in target-index order.
    """
    T = as_points(targets, measure.dim)
    w = pushforward_weights(measure, assignment, T.shape[0])
    keep = w > 0
    return DiscreteMeasure(T[keep], w[keep])


# ---------------------------------------------------------------------------
# doubling


@dataclass(frozen=True)
class DoublingEstimate:
    C: float
    d: float
    R: float
    probes: int = 0
    worst: tuple = field(default=(), compare=False)


def estimate_doubling(
    measure: DiscreteMeasure,
    metric: Metric,
    radius_cap: float,
    halvings: int = DOUBLING_HALVINGS,
    centers=None,
) -> DoublingEstimate:
    """Empirical doubling constant from closed-ball mass ratios.

    Probes are (centre, r) with r = radius_cap * 2**-k, k = 0..halvings, and
    the centre running over ``centers`` (atom indices, default all atoms).
    The estimate is a lower bound on the true constant.
    """
    if len(measure) < 2:
        raise DegenerateMeasure("doubling constant is undefined for a single atom")
    if not radius_cap > 0:
        raise ValueError("radius_cap must be positive")
    check_dim(metric, measure.dim)
    radii = radius_cap * 2.0 ** -np.arange(halvings + 1)
    idx = np.arange(len(measure)) if centers is None else np.asarray(centers, dtype=int)
    best, worst, probes = 1.0, (), 0
    step = max(1, (1 << 22) // len(measure))
    for start in range(0, len(idx), step):
        chunk = idx[start : start + step]
        D = metric.pairwise(measure.points[chunk], measure.points)
        # closed balls; radii and doubled radii share values along the ladder
        mass = {r: (D <= r) @ measure.weights for r in np.unique(np.concatenate([radii, 2 * radii]))}
        for r in radii:
            ratio = mass[2 * r] / mass[r]
            probes += len(chunk)
            k = int(np.argmax(ratio))
            if ratio[k] > best:
                best, worst = float(ratio[k]), (int(chunk[k]), float(r))
    return DoublingEstimate(best, math.log2(best), float(radius_cap), probes, worst)


def packing_bound(C: float, diameter: float, epsilon: float) -> float:
    """Packing bound ``C ** ceil(log2(2 D / eps))`` on an eps-discrete set."""
    if diameter <= 0:
        return 1.0
    k = math.ceil(math.log2(2.0 * diameter / epsilon))
    return C ** max(k, 0)


def check_net_cardinality(net: Net, estimate: DoublingEstimate, diameter: float) -> bool:
    return len(net) <= packing_bound(estimate.C, diameter, net.epsilon) * (1 + 1e-12)


# ---------------------------------------------------------------------------
# files


@dataclass
class LoadReport:
    path: str
    atoms_read: int
    merged: int
    weight_sum: float

    def describe(self) -> str:
        return (
            f"{self.path}: read {self.atoms_read} atoms, merged {self.merged} duplicates, "
            f"renormalised weights from total {self.weight_sum!r}"
        )


def load_measure(path) -> tuple[DiscreteMeasure, LoadReport]:
    """Read a measure from JSON or CSV, sorted canonically; see ``LoadReport``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        pts, w = _parse_csv(text, str(path))
    else:
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidMeasure(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
        try:
            pts = np.asarray(d["points"], dtype=float)
            w = np.asarray(d.get("weights", np.ones(len(pts))), dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidMeasure(f"{path}: malformed measure document ({e})") from None
        if pts.ndim == 1:
            pts = pts[:, None]
        if "dim" in d and (pts.ndim != 2 or pts.shape[1] != int(d["dim"])):
            raise InvalidMeasure(f"{path}: declared dim {d['dim']} disagrees with points")
    total = float(np.sum(w))
    m = DiscreteMeasure(pts, w)
    m = canonical_order(m)
    return m, LoadReport(str(path), len(pts), len(pts) - len(m), total)


def _parse_csv(text: str, name: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidMeasure(f"{name}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[-1] != "w" or any(h != f"x{k + 1}" for k, h in enumerate(header[:-1])):
        raise InvalidMeasure(f"{name}:1: expected header x1,...,xn,w, got {','.join(header)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InvalidMeasure(f"{name}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as e:
            raise InvalidMeasure(f"{name}:{lineno}: {e}") from None
    if not data:
        raise InvalidMeasure(f"{name}: no data rows")
    arr = np.asarray(data)
    return arr[:, :-1], arr[:, -1]


def save_measure(measure: DiscreteMeasure, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        cols = [f"x{k + 1}" for k in range(measure.dim)] + ["w"]
        lines = [",".join(cols)]
        for p, w in zip(measure.points, measure.weights):
            lines.append(",".join(f"{v:.17g}" for v in (*p, w)))
        path.write_text("\n".join(lines) + "\n")
    else:
        path.write_text(json.dumps(measure.to_dict()))
