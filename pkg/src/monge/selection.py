"""Secondary selection among distance-cost optimal plans.

Distance costs leave a whole face of optimal plans.  We fix one 1-Lipschitz
Kantorovich potential ``phi``, keep only the pairs where it is tight,
``phi(x) - phi(y) = rho(x, y)``, and minimise the squared Euclidean cost over
plans supported on those pairs.  Off-tight pairs are excluded as variables
instead of being priced with a large constant.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EmptyAdmissibleSet, Infeasible, NotDistanceCost, NumericalFailure, TooLarge
from .geometry import Euclidean, Metric
from .measures import DiscreteMeasure
from .transport import (
    CostMatrix,
    LipschitzPotential,
    TransportPlan,
    build_cost,
    extract_lipschitz_potential,
    solve_kantorovich,
    solve_masked,
)

PRIMARY_TOL = 1e-7
MONOTONE_TOL = 1e-9


def default_eta(rho_cost: CostMatrix) -> float:
    return 1e-7 * (1.0 + float(rho_cost.values.max()))


@dataclass(frozen=True)
class BetaCost:
    admissible: np.ndarray
    secondary: np.ndarray
    rho: np.ndarray
    eta: float
    sources: np.ndarray
    targets: np.ndarray

    @property
    def values(self) -> np.ndarray:
        """Squared distance on admissible pairs, +inf elsewhere."""
        return np.where(self.admissible, self.secondary, np.inf)

    def as_cost(self) -> CostMatrix:
        return CostMatrix(self.values, self.sources, self.targets, tag="beta")

    @property
    def admissible_count(self) -> int:
        return int(self.admissible.sum())


def build_beta(
    phi,
    rho_cost: CostMatrix,
    eta: float | None = None,
    mu1: DiscreteMeasure | None = None,
    mu2: DiscreteMeasure | None = None,
) -> BetaCost:
    """Tight set of a potential and the Euclidean secondary cost on it.

    ``phi`` is a ``LipschitzPotential`` or a pair ``(phi_on_sources,
    phi_on_targets)``.  When both measures are given, a zero-cost solve
    checks that some plan lives on the admissible set.
    """
    if rho_cost.tag != "distance" or rho_cost.power != 1:
        raise NotDistanceCost("the tight set needs the distance cost (power 1)")
    if isinstance(phi, LipschitzPotential):
        ps, pt = phi.on_sources, phi.on_targets
    else:
        ps, pt = (np.asarray(a, dtype=float) for a in phi)
    if eta is None:
        eta = default_eta(rho_cost)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    tight = np.abs(ps[:, None] - pt[None, :] - rho_cost.values) <= eta
    secondary = Euclidean().pairwise(rho_cost.sources, rho_cost.targets) ** 2
    beta = BetaCost(tight, secondary, rho_cost.values, float(eta), rho_cost.sources, rho_cost.targets)
    if not tight.any(axis=1).all() or not tight.any(axis=0).all():
        raise EmptyAdmissibleSet(f"some atom has no tight partner at eta={eta:.3g}")
    if mu1 is not None and mu2 is not None:
        try:
            solve_masked(mu1.weights, mu2.weights, np.zeros(tight.shape), tight)
        except Infeasible:
            raise EmptyAdmissibleSet(f"no plan is supported on the tight set at eta={eta:.3g}") from None
    return beta


@dataclass(frozen=True)
class SelectionResult:
    plan: TransportPlan
    primary_cost: float
    secondary_cost: float
    eta: float
    admissible_count: int
    w1: float | None = None

    def to_dict(self) -> dict:
        d = self.plan.to_dict()
        d.update(
            primary_cost=self.primary_cost,
            secondary_cost=self.secondary_cost,
            eta=self.eta,
            admissible_count=self.admissible_count,
        )
        return d


def solve_secondary(mu1: DiscreteMeasure, mu2: DiscreteMeasure, beta: BetaCost) -> SelectionResult:
    """Minimise the squared Euclidean cost over plans on the admissible set."""
    try:
        P, _, _, _ = solve_masked(mu1.weights, mu2.weights, beta.secondary, beta.admissible)
    except Infeasible as e:
        raise Infeasible(f"admissible set admits no plan (eta={beta.eta:.3g} too tight?): {e}") from None
    plan = TransportPlan.from_dense(P, mu1, mu2, cost_tag="beta")
    if plan.marginal_error() > 1e-10:
        raise NumericalFailure(f"secondary plan marginal error {plan.marginal_error():.3g}")
    return SelectionResult(
        plan,
        plan.integrate(beta.rho),
        plan.integrate(beta.secondary),
        beta.eta,
        beta.admissible_count,
    )


def select(
    mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: Metric, eta: float | None = None
) -> SelectionResult:
    """Full pipeline: W1 solve, potential, tight set, secondary solve.

    The returned plan is checked to be W1-optimal within
    ``PRIMARY_TOL * (1 + W1)``.
    """
    rho = build_cost(mu1, mu2, metric, 1.0)
    sol = solve_kantorovich(mu1, mu2, rho)
    potential = extract_lipschitz_potential(sol.dual, rho, sol.plan)
    beta = build_beta(potential, rho, eta, mu1, mu2)
    res = solve_secondary(mu1, mu2, beta)
    if res.primary_cost > sol.value + PRIMARY_TOL * (1.0 + sol.value):
        raise NumericalFailure(
            f"selected plan costs {res.primary_cost!r} > W1 = {sol.value!r}; eta {beta.eta:.3g} too loose"
        )
    return SelectionResult(res.plan, res.primary_cost, res.secondary_cost, res.eta, res.admissible_count, sol.value)


# ---------------------------------------------------------------------------
# restricted monotonicity


@dataclass
class RestrictedReport:
    violations: list
    pairs_checked: int
    collinear_pairs: int

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> list:
        return [{"entry": int(e), "other": int(f), "inner": float(v)} for e, f, v in self.violations]


def check_restricted_monotonicity(plan: TransportPlan, collinearity_tol: float | None = None) -> RestrictedReport:
    """Check ``(y - y').(x - x') >= 0`` whenever ``x`` lies on ``[x', y']``.

    Segment membership is Euclidean: the foot of ``x`` on the segment must
    have parameter in [0, 1] and lie within ``collinearity_tol``.
    """
    X, Y = plan.pairs()
    if collinearity_tol is None:
        pts = np.concatenate([X, Y])
        span = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
        collinearity_tol = 1e-7 * span
    n = len(X)
    violations, collinear = [], 0
    step = max(1, (1 << 20) // max(n, 1))
    for s in range(0, n, step):
        x, y = X[s : s + step, None, :], Y[s : s + step, None, :]
        xp, yp = X[None, :, :], Y[None, :, :]
        seg = yp - xp
        L2 = np.sum(seg * seg, axis=-1)
        rel = x - xp
        with np.errstate(invalid="ignore", divide="ignore"):
            tau = np.where(L2 > 0, np.sum(rel * seg, axis=-1) / L2, 0.0)
        tau_c = np.clip(tau, 0.0, 1.0)
        foot = xp + tau_c[..., None] * seg
        dist = np.sqrt(np.sum((x - foot) ** 2, axis=-1))
        seg_len = np.sqrt(L2)
        ptol = collinearity_tol / np.where(seg_len > 0, seg_len, 1.0)
        on_seg = (dist <= collinearity_tol) & (tau >= -ptol) & (tau <= 1 + ptol)
        inner = np.sum((y - yp) * rel, axis=-1)
        collinear += int(on_seg.sum())
        bad = on_seg & (inner < -MONOTONE_TOL)
        for i, j in zip(*np.nonzero(bad)):
            violations.append((s + int(i), int(j), float(inner[i, j])))
    return RestrictedReport(violations, n * n, collinear)


# ---------------------------------------------------------------------------
# oracle


def brute_force_secondary(mu1: DiscreteMeasure, mu2: DiscreteMeasure, metric: Metric) -> tuple[float, float]:
    """Enumerate all permutation maps between uniform n-atom measures.

    Returns the minimal average ``rho`` cost and, among the maps achieving it
    within 1e-10, the minimal average squared Euclidean cost.
    """
    n = len(mu1)
    if n != len(mu2):
        raise ValueError("brute force needs equal cardinalities")
    if not (np.allclose(mu1.weights, 1.0 / n, rtol=0, atol=1e-12) and np.allclose(mu2.weights, 1.0 / n, rtol=0, atol=1e-12)):
        raise ValueError("brute force needs uniform weights")
    if n > 6:
        raise TooLarge(f"{n}! permutations is past the brute-force limit (n <= 6)")
    R = metric.pairwise(mu1.points, mu2.points)
    S = Euclidean().pairwise(mu1.points, mu2.points) ** 2
    perms = np.array(list(itertools.permutations(range(n))), dtype=int)
    ar = np.arange(n)
    primary = R[ar, perms].sum(axis=1) / n
    secondary = S[ar, perms].sum(axis=1) / n
    best = primary.min()
    face = primary <= best + 1e-10
    return float(best), float(secondary[face].min())
