"""Quantised epsilon-scheme for distance-cost transport.

For ``eps`` in (0, 1) we minimise, over plans with first marginal ``mu1`` and
a finitely supported free second marginal ``nu``::

    C_eps(pi) = W1(nu, mu2) / eps + int (rho + eps |x - y|^2) dpi + eps**(3d + 2) * #supp(nu)

Candidate supports for ``nu`` are greedy ``1/j``-nets of ``supp mu2`` for a
few ``j`` around ``j(eps)``.  With the support fixed the first two terms form
one linear program in ``(pi, gamma)``, ``gamma`` coupling ``nu`` to ``mu2``;
the cardinality term is added after the solve and candidates are compared on
their totals.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateMeasure, EmptyNet, MongeError, NumericalFailure
from .geometry import Euclidean, Metric, check_dim
from .measures import (
    DiscreteMeasure,
    estimate_doubling,
    greedy_eps_net,
    nearest_point_projection,
    pushforward,
)
from .selection import SelectionResult, select
from .transport import (
    CostMatrix,
    PLAN_FLOOR,
    TransportPlan,
    build_cost,
    solve_kantorovich,
    solve_lp,
)
from .verification import check_interpolant_disjointness, splitting_index

log = logging.getLogger(__name__)

MASS_FLOOR = 1e-12
CERT_TOL = 1e-8


def default_epsilons() -> list[float]:
    return [0.4 * 2.0**-k for k in range(5)]


def _ceil(x: float) -> int:
    # absorb round-off such as 0.2**-2 == 25.000000000000004
    return max(1, math.ceil(x * (1 - 1e-12)))


NET_RULES: dict[str, Callable[[float], int]] = {
    "eps^-2": lambda e: _ceil(e**-2),
    "eps^-3": lambda e: _ceil(e**-3),
    "eps^-1": lambda e: _ceil(1.0 / e),
}


@dataclass
class ApproxConfig:
    epsilons: list = field(default_factory=default_epsilons)
    d: float | None = None
    net_rule: str | Callable[[float], int] = "eps^-2"
    eta: float | None = None
    mass_floor: float = MASS_FLOOR
    workers: int = 1

    def __post_init__(self):
        eps = [float(e) for e in self.epsilons]
        if not eps:
            raise ValueError("need at least one epsilon")
        if any(not 0 < e < 1 for e in eps):
            raise ValueError("epsilons must lie in (0, 1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if self.d is not None and self.d < 0:
            raise ValueError("doubling exponent d must be >= 0")
        if isinstance(self.net_rule, str) and self.net_rule not in NET_RULES:
            raise ValueError(f"unknown net rule {self.net_rule!r}; choose from {sorted(NET_RULES)}")
        self.epsilons = eps

    def j_of(self, epsilon: float) -> int:
        rule = NET_RULES[self.net_rule] if isinstance(self.net_rule, str) else self.net_rule
        return int(rule(epsilon))

    def candidate_js(self, epsilon: float) -> list[int]:
        j = self.j_of(epsilon)
        return sorted({max(1, j // 2), j, 2 * j})


@dataclass(frozen=True)
class CepsBreakdown:
    fidelity: float
    transport: float
    cardinality: float
    total: float
    w1_nu_mu2: float
    support_size: int

    def to_dict(self) -> dict:
        return {
            "fidelity": self.fidelity,
            "transport": self.transport,
            "cardinality": self.cardinality,
            "total": self.total,
        }


def c_eps_cost(metric: Metric, epsilon: float, x, y) -> float:
    """``rho(x, y) + eps |x - y|^2`` with the Euclidean square."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        return 0.0
    return float(metric(x, y) + epsilon * np.sum((x - y) ** 2))


def c_eps_matrix(metric: Metric, epsilon: float, X, Y) -> CostMatrix:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    V = metric.pairwise(X, Y) + epsilon * Euclidean().pairwise(X, Y) ** 2
    return CostMatrix(V, X, Y, tag="c_eps", metric=metric, epsilon=float(epsilon), strictly_convex=True)


def second_marginal(plan: TransportPlan) -> DiscreteMeasure:
    """``pr2 # pi`` on the target atoms that receive mass."""
    w = plan.col_sums()
    keep = w > 0
    return DiscreteMeasure(plan.target.points[keep], w[keep])


def eval_C_eps(
    pi: TransportPlan,
    mu2: DiscreteMeasure,
    metric: Metric,
    epsilon: float,
    d: float,
    mass_floor: float = MASS_FLOOR,
) -> CepsBreakdown:
    """Evaluate the three terms of ``C_eps`` for a plan."""
    nu = second_marginal(pi)
    w1 = solve_kantorovich(nu, mu2, build_cost(nu, mu2, metric, 1.0)).value
    w1 = max(w1, 0.0)
    X, Y = pi.pairs()
    c = metric.rowwise(X, Y) + epsilon * np.sum((X - Y) ** 2, axis=1)
    transport = float(np.sum(pi.mass * c))
    count = int(np.sum(pi.col_sums() > mass_floor))
    fidelity = w1 / epsilon
    cardinality = epsilon ** (3 * d + 2) * count
    return CepsBreakdown(fidelity, transport, cardinality, fidelity + transport + cardinality, w1, count)


@dataclass(frozen=True)
class CandidateResult:
    j: int
    net_size: int
    plan: TransportPlan
    breakdown: CepsBreakdown
    lp_value: float


def solve_on_support(
    mu1: DiscreteMeasure,
    mu2: DiscreteMeasure,
    metric: Metric,
    epsilon: float,
    S: np.ndarray,
) -> tuple[TransportPlan, float]:
    """Joint LP for ``(pi, gamma)`` with ``nu`` supported on the rows of ``S``.

    Variables are ``pi_ij`` (source i -> support point j) followed by
    ``gamma_jk`` (support point j -> atom k of mu2).  Constraints: row sums of
    pi equal mu1, column sums of pi equal row sums of gamma, column sums of
    gamma equal mu2 (the last one dropped as redundant).
    """
    n1, s, n2 = len(mu1), len(S), len(mu2)
    C = c_eps_matrix(metric, epsilon, mu1.points, S).values
    G = metric.pairwise(S, mu2.points) / epsilon
    n_pi, n_g = n1 * s, s * n2
    pi_r = np.repeat(np.arange(n1), s)
    pi_c = np.tile(np.arange(s), n1)
    g_r = np.repeat(np.arange(s), n2)
    g_c = np.tile(np.arange(n2), s)
    ones_pi, ones_g = np.ones(n_pi), np.ones(n_g)
    rows_block = sp.csr_matrix((ones_pi, (pi_r, np.arange(n_pi))), shape=(n1, n_pi + n_g))
    balance = sp.csr_matrix(
        (
            np.concatenate([ones_pi, -ones_g]),
            (np.concatenate([pi_c, g_r]), np.concatenate([np.arange(n_pi), n_pi + np.arange(n_g)])),
        ),
        shape=(s, n_pi + n_g),
    )
    cols_block = sp.csr_matrix((ones_g, (g_c, n_pi + np.arange(n_g))), shape=(n2, n_pi + n_g))
    A = sp.vstack([rows_block, balance, cols_block[:-1]]).tocsr()
    b = np.concatenate([mu1.weights, np.zeros(s), mu2.weights[:-1]])
    res = solve_lp(np.concatenate([C.ravel(), G.ravel()]), A, b, method="highs-ipm")
    x = res.x[:n_pi].reshape(n1, s)
    x = np.where(x > PLAN_FLOOR, x, 0.0)
    nu = x.sum(axis=0)
    keep = np.nonzero(nu > 0)[0]
    target = DiscreteMeasure(S[keep], nu[keep])
    plan = TransportPlan.from_dense(x[:, keep], mu1, target, cost_tag="c_eps", strictly_convex=True)
    if plan.marginal_error() > 1e-10:
        raise NumericalFailure(f"joint LP plan marginal error {plan.marginal_error():.3g}")
    return plan, float(res.fun)


@dataclass(frozen=True)
class MinimizerResult:
    plan: TransportPlan
    breakdown: CepsBreakdown
    j: int
    net_size: int
    candidates: tuple


def minimize_C_eps(
    mu1: DiscreteMeasure,
    mu2: DiscreteMeasure,
    metric: Metric,
    epsilon: float,
    config: ApproxConfig | None = None,
    d: float | None = None,
) -> MinimizerResult:
    """Best plan over the net-supported candidate family for one epsilon."""
    config = config or ApproxConfig(epsilons=[epsilon])
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if d is None:
        d = resolve_d(mu2, metric, config)
    candidates = []
    for j in config.candidate_js(epsilon):
        net = greedy_eps_net(mu2.points, metric, 1.0 / j)
        if len(net) == 0:
            raise EmptyNet(f"net for j={j} is empty")
        plan, lp_value = solve_on_support(mu1, mu2, metric, epsilon, net.points)
        br = eval_C_eps(plan, mu2, metric, epsilon, d, config.mass_floor)
        candidates.append(CandidateResult(j, len(net), plan, br, lp_value))
    best = min(candidates, key=lambda c: (c.breakdown.total, c.j))
    return MinimizerResult(best.plan, best.breakdown, best.j, best.net_size, tuple(candidates))


def projected_plan(reference: TransportPlan, net_points: np.ndarray, metric: Metric) -> TransportPlan:
    """``(id x p)#pi`` for the nearest-point projection ``p`` onto a net."""
    assign = nearest_point_projection(reference.target.points, net_points, metric)
    cols = assign[reference.cols]
    P = np.zeros((len(reference.source), len(net_points)))
    np.add.at(P, (reference.rows, cols), reference.mass)
    nu = P.sum(axis=0)
    keep = np.nonzero(nu > 0)[0]
    target = DiscreteMeasure(net_points[keep], nu[keep])
    return TransportPlan.from_dense(P[:, keep], reference.source, target, cost_tag="projected")


def quantization_error(mu2: DiscreteMeasure, net_points: np.ndarray, metric: Metric) -> float:
    """``W1(p # mu2, mu2)`` for the nearest-point projection ``p`` onto the net."""
    assign = nearest_point_projection(mu2.points, net_points, metric)
    image = pushforward(mu2, assign, net_points)
    return max(solve_kantorovich(image, mu2, build_cost(image, mu2, metric, 1.0)).value, 0.0)


def resolve_d(mu2: DiscreteMeasure, metric: Metric, config: ApproxConfig) -> float:
    if config.d is not None:
        return float(config.d)
    try:
        diam = mu2.diameter(metric)
        return estimate_doubling(mu2, metric, diam).d
    except DegenerateMeasure:
        return 0.0


# ---------------------------------------------------------------------------
# schedule


@dataclass
class ApproxRecord:
    epsilon: float
    j: int
    net_size: int
    plan: TransportPlan
    nu: DiscreteMeasure
    breakdown: CepsBreakdown
    w1_nu_mu2: float
    primary_cost: float
    secondary_cost: float
    splitting_index: float
    certificate_margin: float = np.inf
    comparison_totals: tuple = ()
    quantization_excess: float = -np.inf
    disjointness_margin: float = np.inf

    def row(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "j": self.j,
            "net_size": self.net_size,
            "fidelity": self.breakdown.fidelity,
            "transport": self.breakdown.transport,
            "cardinality": self.breakdown.cardinality,
            "total": self.breakdown.total,
            "w1_nu_mu2": self.w1_nu_mu2,
            "primary_cost": self.primary_cost,
            "secondary_cost": self.secondary_cost,
            "splitting_index": self.splitting_index,
        }


@dataclass
class ApproxRun:
    records: list
    d: float
    direct_w1: float
    config: ApproxConfig
    failures: dict = field(default_factory=dict)

    @property
    def final(self) -> ApproxRecord:
        return self.records[-1]

    @property
    def output_plan(self) -> TransportPlan:
        return self.final.plan

    def checks(self) -> dict:
        """Trend and certificate checks over the recorded schedule."""
        out = {}
        w = [r.w1_nu_mu2 for r in self.records]
        if len(w) >= 2:
            out["fidelity_nonincreasing"] = all(b <= a + 1e-12 for a, b in zip(w, w[1:]))
            out["fidelity_final_le_initial"] = w[-1] <= w[0] + 1e-12
        fin = self.final
        out["fidelity_final_mesh"] = fin.w1_nu_mu2 <= 2.0 / self.config.j_of(fin.epsilon) + 1e-9
        out["primary_within_5pct"] = abs(fin.primary_cost - self.direct_w1) <= 0.05 * max(self.direct_w1, 1e-12)
        out["certificate"] = all(r.certificate_margin >= -CERT_TOL for r in self.records)
        out["quantization"] = all(r.quantization_excess <= 1e-9 for r in self.records)
        out["disjoint_slices"] = all(r.disjointness_margin > 0 for r in self.records)
        return out


def run_schedule(
    mu1: DiscreteMeasure,
    mu2: DiscreteMeasure,
    metric: Metric,
    config: ApproxConfig | None = None,
    direct: SelectionResult | None = None,
) -> ApproxRun:
    """Minimise ``C_eps`` along the schedule and record diagnostics.

    ``direct`` (the selected W1-optimal plan) is computed when not supplied;
    its projections onto each candidate net are the comparison plans for the
    minimiser certificate.  Failures at one epsilon are logged and recorded
    without stopping the run.
    """
    config = config or ApproxConfig()
    check_dim(metric, mu1.dim)
    d = resolve_d(mu2, metric, config)
    if direct is None:
        direct = select(mu1, mu2, metric, config.eta)

    def one(eps):
        res = minimize_C_eps(mu1, mu2, metric, eps, config, d)
        X, Y = res.plan.pairs()
        rho = metric.rowwise(X, Y)
        sq = np.sum((X - Y) ** 2, axis=1)
        comps, quant = [], -np.inf
        for cand in res.candidates:
            net = greedy_eps_net(mu2.points, metric, 1.0 / cand.j)
            q = projected_plan(direct.plan, net.points, metric)
            comps.append(eval_C_eps(q, mu2, metric, eps, d, config.mass_floor).total)
            quant = max(quant, quantization_error(mu2, net.points, metric) - 1.0 / cand.j)
        disj = check_interpolant_disjointness(res.plan, 0.5)
        return ApproxRecord(
            epsilon=eps,
            j=res.j,
            net_size=res.net_size,
            plan=res.plan,
            nu=res.plan.target,
            breakdown=res.breakdown,
            w1_nu_mu2=res.breakdown.w1_nu_mu2,
            primary_cost=float(np.sum(res.plan.mass * rho)),
            secondary_cost=float(np.sum(res.plan.mass * sq)),
            splitting_index=splitting_index(res.plan).index,
            certificate_margin=min(comps) - res.breakdown.total,
            comparison_totals=tuple(comps),
            quantization_excess=quant,
            disjointness_margin=disj.margin,
        )

    def guarded(eps):
        try:
            return one(eps)
        except MongeError as e:
            log.warning("epsilon=%g failed: %s", eps, e)
            return e

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            outcomes = list(ex.map(guarded, config.epsilons))
    else:
        outcomes = [guarded(e) for e in config.epsilons]
    records, failures = [], {}
    for eps, out in zip(config.epsilons, outcomes):
        if isinstance(out, Exception):
            failures[eps] = str(out)
        else:
            records.append(out)
    return ApproxRun(records, d, direct.w1 if direct.w1 is not None else direct.primary_cost, config, failures)
