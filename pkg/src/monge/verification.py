"""Structural diagnostics: map-ness, transport sets, slice disjointness."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ProvenanceMismatch
from .geometry import Euclidean, Metric, interpolate
from .transport import TransportPlan

ROUNDING_THRESHOLD = 0.05


@dataclass(frozen=True)
class SplittingReport:
    """``index = sum_i (m_i - max_j pi_ij)`` with ``m_i`` the row mass."""

    index: float
    worst_source: int
    worst_fraction: float
    best_target: np.ndarray
    row_mass: np.ndarray
    rounded_map: np.ndarray | None

    def rounded_plan(self, plan: TransportPlan) -> TransportPlan:
        rows = np.nonzero(self.row_mass > 0)[0]
        return TransportPlan(
            rows, self.best_target[rows], self.row_mass[rows], plan.source, plan.target, plan.cost_tag
        )

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "worst_source": self.worst_source,
            "worst_fraction": self.worst_fraction,
            "map": None if self.rounded_map is None else self.rounded_map.tolist(),
        }


def splitting_index(plan: TransportPlan, threshold: float = ROUNDING_THRESHOLD) -> SplittingReport:
    """How far a plan is from being induced by a map.

    Zero exactly when every source sends all its mass to one target.  Below
    ``threshold`` the argmax map (smallest target index on ties) is attached.
    """
    m = len(plan.source)
    # sort by row, then mass descending, then column ascending: first entry per row is the argmax
    order = np.lexsort((plan.cols, -plan.mass, plan.rows))
    r, c, w = plan.rows[order], plan.cols[order], plan.mass[order]
    first = np.ones(len(r), dtype=bool)
    first[1:] = r[1:] != r[:-1]
    best_mass = np.zeros(m)
    best_target = np.full(m, -1)
    best_mass[r[first]] = w[first]
    best_target[r[first]] = c[first]
    row_mass = np.bincount(plan.rows, weights=plan.mass, minlength=m)
    # sum the non-argmax entries directly instead of subtracting, which cancels
    index = float(np.sum(w[~first]))
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(row_mass > 0, best_mass / row_mass, 1.0)
    worst = int(np.argmin(frac))
    rounded = best_target.copy() if index <= threshold else None
    return SplittingReport(index, worst, float(frac[worst]), best_target, row_mass, rounded)


@dataclass(frozen=True)
class TransportSetSample:
    points: np.ndarray
    pair: np.ndarray
    t: np.ndarray
    sources: np.ndarray
    targets: np.ndarray


def transport_set(support, t_grid) -> TransportSetSample:
    """All ``(1 - t) x + t y`` over coupled pairs and the given t values.

    ``support`` is a plan or a pair of coordinate arrays ``(X, Y)``.
    """
    if isinstance(support, TransportPlan):
        X, Y = support.pairs()
    else:
        X, Y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in support)
    if len(X) == 0:
        raise ValueError("support is empty")
    ts = np.atleast_1d(np.asarray(t_grid, dtype=float))
    pts = np.concatenate([interpolate(x, y, ts) for x, y in zip(X, Y)])
    pair = np.repeat(np.arange(len(X)), len(ts))
    return TransportSetSample(pts, pair, np.tile(ts, len(X)), X, Y)


def geodesic_residuals(metric: Metric, sample: TransportSetSample) -> np.ndarray:
    """``|d(x, z) + d(z, y) - d(x, y)|`` for every sampled ``z``."""
    X = sample.sources[sample.pair]
    Y = sample.targets[sample.pair]
    Z = sample.points
    d = metric.rowwise
    return np.abs(d(X, Z) + d(Z, Y) - d(X, Y))


@dataclass(frozen=True)
class DisjointnessReport:
    margin: float
    separation_tol: float
    slices: int
    closest: tuple = ()

    @property
    def ok(self) -> bool:
        return self.margin > self.separation_tol

    def to_dict(self) -> dict:
        return {"margin": self.margin, "separation_tol": self.separation_tol, "slices": self.slices, "ok": self.ok}


def check_interpolant_disjointness(
    plan: TransportPlan, t: float = 0.5, separation_tol: float | None = None
) -> DisjointnessReport:
    """Minimum distance between interpolated slices of different targets.

    Each target atom ``y`` owns the slice ``{(1-t) x + t y : (x, y) coupled}``.
    For plans optimal under a strictly convex cost the slices are disjoint.
    """
    if not plan.strictly_convex:
        raise ProvenanceMismatch(f"plan cost {plan.cost_tag!r} is not tagged strictly convex")
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    X, Y = plan.pairs()
    if separation_tol is None:
        pts = np.concatenate([X, Y])
        separation_tol = 1e-9 * float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    labels = plan.cols
    n_slices = len(np.unique(labels))
    if n_slices < 2:
        return DisjointnessReport(np.inf, separation_tol, n_slices)
    Z = (1.0 - t) * X + t * Y
    best, closest = np.inf, ()
    step = max(1, (1 << 20) // len(Z))
    for s in range(0, len(Z), step):
        D = Euclidean().pairwise(Z[s : s + step], Z)
        D[labels[s : s + step, None] == labels[None, :]] = np.inf
        k = np.unravel_index(np.argmin(D), D.shape)
        if D[k] < best:
            best, closest = float(D[k]), (s + int(k[0]), int(k[1]))
    return DisjointnessReport(best, separation_tol, n_slices, closest)


# ---------------------------------------------------------------------------
# run summary

CSV_COLUMNS = [
    "epsilon",
    "j",
    "net_size",
    "fidelity",
    "transport",
    "cardinality",
    "total",
    "w1_nu_mu2",
    "primary_cost",
    "secondary_cost",
    "splitting_index",
]


@dataclass
class ConvergenceSummary:
    rows: list
    primary_gap: float
    secondary_gap: float
    final_splitting: float
    trend_ok: bool | None
    passed: bool
    notices: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "primary_gap": self.primary_gap,
            "secondary_gap": self.secondary_gap,
            "final_splitting": self.final_splitting,
            "trend_ok": self.trend_ok,
            "passed": self.passed,
            "notices": self.notices,
        }

    def to_csv(self) -> str:
        return rows_to_csv(self.rows)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([f"{r[c]:.17g}" if isinstance(r[c], float) else r[c] for c in CSV_COLUMNS])
    return buf.getvalue()


def convergence_report(
    run,
    direct,
    primary_gap_tol: float = 0.05,
    splitting_tol: float = ROUNDING_THRESHOLD,
) -> ConvergenceSummary:
    """Trend table plus final-vs-direct gaps and a pass/fail verdict.

    ``run`` is an ``ApproxRun``; ``direct`` a ``SelectionResult`` for the same
    pair of measures.  Gaps are relative to the direct costs (absolute when
    those vanish).
    """
    records = run.records
    if not records:
        raise ValueError("run has no records")
    rows = [rec.row() for rec in records]
    final = records[-1]
    notices = []

    def rel(a, b):
        return abs(a - b) / abs(b) if abs(b) > 1e-12 else abs(a - b)

    primary_gap = rel(final.primary_cost, direct.primary_cost)
    secondary_gap = rel(final.secondary_cost, direct.secondary_cost)
    split = splitting_index(final.plan).index
    if len(records) < 2:
        trend_ok = None
        notices.append("schedule has a single epsilon; trend checks skipped")
    else:
        w = [r.w1_nu_mu2 for r in records]
        trend_ok = all(b <= a + 1e-12 for a, b in zip(w, w[1:]))
    passed = primary_gap <= primary_gap_tol and split <= splitting_tol and trend_ok is not False
    return ConvergenceSummary(rows, primary_gap, secondary_gap, split, trend_ok, passed, notices)
