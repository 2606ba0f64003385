"""Exact discrete Kantorovich problem: plans, duals, Wasserstein distances.

The balanced transportation LP is handed to HiGHS (dual simplex, through
``scipy.optimize.linprog``) so that the returned plan is a basic solution,
i.e. a vertex of the transport polytope.  Every solve is followed by an
independent certificate check: marginals, dual feasibility, duality gap and
complementary slackness.  A failed check raises ``NumericalFailure`` rather
than returning a silently wrong plan.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from .errors import (
    DimensionMismatch,
    Infeasible,
    LipschitzViolation,
    NotDistanceCost,
    NumericalFailure,
)
from .geometry import Euclidean, Metric, check_dim
from .measures import DiscreteMeasure

TAU = 1e-8
MARGINAL_TOL = 1e-10
FEAS_TOL = 1e-9
#: entries at or below this mass are dropped from returned plans
PLAN_FLOOR = 1e-15

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


@dataclass(frozen=True)
class CostMatrix:
    """Dense cost between two point clouds plus a record of how it was built."""

    values: np.ndarray
    sources: np.ndarray
    targets: np.ndarray
    tag: str = "custom"
    metric: Metric | None = None
    power: float | None = None
    epsilon: float | None = None
    strictly_convex: bool = False

    def __post_init__(self):
        v = self.values
        if v.shape != (len(self.sources), len(self.targets)):
            raise DimensionMismatch(f"cost shape {v.shape} does not match the point clouds")
        finite = v[np.isfinite(v)]
        if np.any(np.isnan(v)) or np.any(finite < 0):
            raise ValueError("costs must be nonnegative")
        if self.tag != "beta" and finite.size != v.size:
            raise ValueError("costs must be finite")

    @property
    def shape(self):
        return self.values.shape


def build_cost(mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: Metric, power: float = 1.0) -> CostMatrix:
    """``values[i, j] = distance(x_i, y_j) ** power``."""
    if mu1.dim != mu2.dim:
        raise DimensionMismatch(f"measures live in R^{mu1.dim} and R^{mu2.dim}")
    if not power >= 1:
        raise ValueError("power must be >= 1")
    check_dim(metric, mu1.dim)
    D = metric.pairwise(mu1.points, mu2.points)
    if power != 1:
        D = D**power
    return CostMatrix(D, mu1.points, mu2.points, tag="distance", metric=metric, power=float(power))


def squared_euclidean_cost(mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> CostMatrix:
    D = Euclidean().pairwise(mu1.points, mu2.points) ** 2
    return CostMatrix(D, mu1.points, mu2.points, tag="sqeuclidean", power=2.0, strictly_convex=True)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling: ``mass[k]`` moves from source ``rows[k]`` to target ``cols[k]``."""

    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    source: DiscreteMeasure
    target: DiscreteMeasure
    cost_tag: str = "custom"
    strictly_convex: bool = False

    @classmethod
    def from_dense(cls, P, source, target, **kw) -> "TransportPlan":
        P = np.asarray(P, dtype=float)
        r, c = np.nonzero(P > PLAN_FLOOR)
        return cls(r, c, P[r, c], source, target, **kw)

    @classmethod
    def from_entries(cls, entries, source, target, **kw) -> "TransportPlan":
        e = np.asarray(entries, dtype=float).reshape(-1, 3)
        return cls(e[:, 0].astype(int), e[:, 1].astype(int), e[:, 2], source, target, **kw)

    def __len__(self):
        return len(self.mass)

    def dense(self) -> np.ndarray:
        P = np.zeros((len(self.source), len(self.target)))
        np.add.at(P, (self.rows, self.cols), self.mass)
        return P

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.rows, weights=self.mass, minlength=len(self.source))

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.cols, weights=self.mass, minlength=len(self.target))

    def marginal_error(self) -> float:
        return max(
            np.abs(self.row_sums() - self.source.weights).max(),
            np.abs(self.col_sums() - self.target.weights).max(),
        )

    def integrate(self, cost) -> float:
        """Integral of a cost (matrix or ``CostMatrix``) against the plan."""
        C = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost)
        return float(np.sum(self.mass * C[self.rows, self.cols]))

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the coupled pairs, one row per entry."""
        return self.source.points[self.rows], self.target.points[self.cols]

    def to_dict(self) -> dict:
        return {"entries": [[int(i), int(j), float(m)] for i, j, m in zip(self.rows, self.cols, self.mass)]}


@dataclass(frozen=True)
class DualPotential:
    phi: np.ndarray
    psi: np.ndarray

    def objective(self, mu1: DiscreteMeasure, mu2: DiscreteMeasure) -> float:
        return float(self.phi @ mu1.weights + self.psi @ mu2.weights)

    def to_dict(self) -> dict:
        return {"phi": self.phi.tolist(), "psi": self.psi.tolist()}


class KantorovichSolution(NamedTuple):
    plan: TransportPlan
    dual: DualPotential
    value: float

    @property
    def dual_gap(self) -> float:
        return self.value - self.dual.objective(self.plan.source, self.plan.target)

    def to_dict(self) -> dict:
        d = self.plan.to_dict()
        d.update(value=self.value, dual_gap=self.dual_gap)
        return d


def transport_constraints(m: int, n: int, rows: np.ndarray, cols: np.ndarray) -> sp.csr_matrix:
    """Row-sum and column-sum equalities for the variables ``(rows[k], cols[k])``.

    The last column constraint is dropped: it is implied by the others for
    balanced marginals and keeping it only invites inconsistency in floating
    point.
    """
    k = len(rows)
    ar = np.arange(k)
    R = sp.csr_matrix((np.ones(k), (rows, ar)), shape=(m, k))
    C = sp.csr_matrix((np.ones(k), (cols, ar)), shape=(n, k))
    return sp.vstack([R, C[:-1]]).tocsr()


def solve_lp(c, A_eq, b_eq, method: str = "highs-ds"):
    """Thin wrapper over HiGHS with tight tolerances.

    ``method="highs-ipm"`` runs interior point followed by crossover, so the
    result is still a vertex; it is much faster on the large joint programs.
    """
    res = linprog(c, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method=method, options=_HIGHS_OPTIONS)
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status != 0:
        raise NumericalFailure(res.message)
    return res


def solve_masked(a: np.ndarray, b: np.ndarray, C: np.ndarray, mask: np.ndarray | None = None):
    """Transportation LP restricted to the entries where ``mask`` is true.

    Returns ``(dense_plan, phi, psi, value)``; entries outside the mask are
    not variables at all, so the plan vanishes there exactly.
    """
    m, n = C.shape
    if mask is None:
        rows = np.repeat(np.arange(m), n)
        cols = np.tile(np.arange(n), m)
    else:
        rows, cols = np.nonzero(mask)
        if len(rows) == 0:
            raise Infeasible("no admissible entries")
    A = transport_constraints(m, n, rows, cols)
    res = solve_lp(C[rows, cols], A, np.concatenate([a, b[:-1]]))
    y = res.eqlin.marginals
    phi = np.array(y[:m])
    psi = np.concatenate([y[m:], [0.0]])
    P = np.zeros((m, n))
    P[rows, cols] = np.where(res.x > PLAN_FLOOR, res.x, 0.0)
    return P, phi, psi, float(res.fun)


def solve_kantorovich(mu1: DiscreteMeasure, mu2: DiscreteMeasure, cost: CostMatrix) -> KantorovichSolution:
    """Optimal vertex plan and dual pair for the discrete Kantorovich problem.

    The duals are normalised so that ``phi[0] == 0``.  Raises
    ``NumericalFailure`` if the returned certificate does not verify within
    ``TAU * (1 + value)``.
    """
    C = np.asarray(cost.values, dtype=float)
    if C.shape != (len(mu1), len(mu2)):
        raise DimensionMismatch(f"cost is {C.shape}, measures have {len(mu1)} and {len(mu2)} atoms")
    P, phi, psi, value = solve_masked(mu1.weights, mu2.weights, C)
    shift = phi[0]
    phi, psi = phi - shift, psi + shift
    plan = TransportPlan.from_dense(P, mu1, mu2, cost_tag=cost.tag, strictly_convex=cost.strictly_convex)
    value = plan.integrate(C)
    dual = DualPotential(phi, psi)
    _certify(plan, dual, C, value)
    return KantorovichSolution(plan, dual, value)


def _certify(plan: TransportPlan, dual: DualPotential, C: np.ndarray, value: float) -> None:
    tol = TAU * (1.0 + abs(value))
    err = plan.marginal_error()
    if err > MARGINAL_TOL:
        raise NumericalFailure(f"marginal error {err:.3g}")
    reduced = C - dual.phi[:, None] - dual.psi[None, :]
    if reduced.min() < -FEAS_TOL * (1.0 + abs(value)):
        raise NumericalFailure(f"dual infeasible by {-reduced.min():.3g}")
    gap = value - dual.objective(plan.source, plan.target)
    if abs(gap) > tol:
        raise NumericalFailure(f"duality gap {gap:.3g}")
    slack = np.abs(reduced[plan.rows, plan.cols])
    if slack.size and slack.max() > tol:
        raise NumericalFailure(f"complementary slackness violated by {slack.max():.3g}")


def wasserstein(mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: Metric, p: float = 1.0) -> float:
    """``W_p`` for the given metric."""
    sol = solve_kantorovich(mu1, mu2, build_cost(mu1, mu2, metric, p))
    return max(sol.value, 0.0) ** (1.0 / p)


# ---------------------------------------------------------------------------
# 1-Lipschitz potential


@dataclass(frozen=True)
class LipschitzPotential:
    """A single 1-Lipschitz function on the union of both supports."""

    points: np.ndarray
    values: np.ndarray
    source_index: np.ndarray
    target_index: np.ndarray

    @property
    def on_sources(self) -> np.ndarray:
        return self.values[self.source_index]

    @property
    def on_targets(self) -> np.ndarray:
        return self.values[self.target_index]


def union_points(P: np.ndarray, Q: np.ndarray, tol: float = 1e-12):
    """Merge two clouds; returns ``(U, index_of_P_rows, index_of_Q_rows)``."""
    U = np.concatenate([P, Q])
    idx = np.arange(len(U))
    for i, j in sorted(cKDTree(U).query_pairs(tol)):
        idx[j] = min(idx[j], idx[i])
    # resolve chains to their smallest representative
    while True:
        nxt = idx[idx]
        if np.array_equal(nxt, idx):
            break
        idx = nxt
    keep, inv = np.unique(idx, return_inverse=True)
    return U[keep], inv[: len(P)], inv[len(P) :]


def extract_lipschitz_potential(
    dual: DualPotential, cost: CostMatrix, plan: TransportPlan | None = None
) -> LipschitzPotential:
    """Reconcile a distance-cost dual pair into one 1-Lipschitz potential.

    Uses ``phi(u) = min_j d(u, y_j) - psi_j`` on the union of the supports,
    which agrees with the solver's ``phi`` on every source carrying mass and
    is tight, ``phi(x) - phi(y) = d(x, y)``, on the plan's support.
    """
    if cost.tag != "distance" or cost.power != 1 or cost.metric is None:
        raise NotDistanceCost("potential extraction needs a distance cost (power 1)")
    metric = cost.metric
    U, si, ti = union_points(cost.sources, cost.targets)
    values = np.min(metric.pairwise(U, cost.targets) - dual.psi[None, :], axis=1)
    if len(values):
        values = values - values[si[0]] + dual.phi[0]
    scale = 1.0 + float(np.abs(cost.values).max())
    tol = TAU * scale
    step = max(1, (1 << 20) // len(U))
    for k in range(0, len(U), step):
        D = metric.pairwise(U[k : k + step], U)
        excess = np.abs(values[k : k + step, None] - values[None, :]) - D
        if excess.max() > tol:
            raise LipschitzViolation(f"potential is not 1-Lipschitz (excess {excess.max():.3g})")
    if plan is not None:
        gap = np.abs(values[si[plan.rows]] - values[ti[plan.cols]] - cost.values[plan.rows, plan.cols])
        if gap.size and gap.max() > tol:
            raise LipschitzViolation(f"potential not tight on the plan support (gap {gap.max():.3g})")
    return LipschitzPotential(U, values, si, ti)


# ---------------------------------------------------------------------------
# cyclical monotonicity


@dataclass
class MonotonicityReport:
    violations: list
    worst_slack: float
    checked: int
    exhaustive: bool

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> list:
        return [{"entries": list(map(int, t)), "slack": float(s)} for t, s in self.violations]


def check_cyclical_monotonicity(
    plan: TransportPlan,
    cost,
    cycle_length: int = 2,
    trials: int = 1000,
    seed: int = 0,
    tol: float = TAU,
) -> MonotonicityReport:
    """Look for k-cycles on the plan support that a cyclic reassignment improves.

    Supports of at most 12 entries are checked exhaustively for k = 2, 3;
    otherwise ``trials`` random k-tuples of distinct entries are sampled.
    """
    k = int(cycle_length)
    if k < 2:
        raise ValueError("cycle_length must be >= 2")
    C = cost.values if isinstance(cost, CostMatrix) else np.asarray(cost)
    n_e = len(plan)
    if n_e < k:
        return MonotonicityReport([], np.inf, 0, True)
    exhaustive = n_e <= 12 and k in (2, 3)
    if exhaustive:
        T = np.array(list(itertools.permutations(range(n_e), k)), dtype=int)
    else:
        rng = np.random.default_rng(seed)
        T = np.array([rng.choice(n_e, size=k, replace=False) for _ in range(trials)], dtype=int)
    r, c = plan.rows[T], plan.cols[T]
    lhs = C[r, c].sum(axis=1)
    with np.errstate(invalid="ignore"):
        rhs = C[r, np.roll(c, -1, axis=1)].sum(axis=1)
        slack = rhs - lhs
    bad = slack < -tol * (1.0 + np.abs(lhs))
    violations = [(tuple(T[i]), float(slack[i])) for i in np.nonzero(bad)[0]]
    finite = slack[np.isfinite(slack)]
    worst = float(finite.min()) if finite.size else np.inf
    return MonotonicityReport(violations, worst, len(T), exhaustive)
