import math

import numpy as np
import pytest

from monge.approximation import (
    ApproxConfig,
    c_eps_cost,
    eval_C_eps,
    minimize_C_eps,
    projected_plan,
    quantization_error,
    run_schedule,
)
from monge.errors import DegenerateMeasure
from monge.geometry import Ball, Box, Euclidean, Hilbert
from monge.measures import DiscreteMeasure, grid_discretize, greedy_eps_net
from monge.selection import select
from monge.transport import TransportPlan, wasserstein
from monge.verification import convergence_report, splitting_index


def line(*xs):
    return DiscreteMeasure(np.asarray(xs, dtype=float)[:, None])


BOOK1, BOOK2 = line(0, 1, 2), line(1, 2, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        ApproxConfig(epsilons=[0.2, 0.4])
    with pytest.raises(ValueError):
        ApproxConfig(epsilons=[1.0])
    with pytest.raises(ValueError):
        ApproxConfig(d=-1)
    with pytest.raises(ValueError):
        ApproxConfig(net_rule="nope")
    cfg = ApproxConfig()
    assert cfg.epsilons == pytest.approx([0.4, 0.2, 0.1, 0.05, 0.025])
    # 0.2 ** -2 is 25.000000000000004 in floating point
    assert cfg.j_of(0.2) == 25
    assert cfg.candidate_js(0.4) == [3, 7, 14]
    assert ApproxConfig(net_rule=lambda e: 4).candidate_js(0.1) == [2, 4, 8]


def test_c_eps_examples():
    assert c_eps_cost(Euclidean(), 0.3, [1.0], [1.0]) == 0.0
    assert c_eps_cost(Euclidean(), 0.5, [0.0], [2.0]) == pytest.approx(4.0)
    h = c_eps_cost(Hilbert(Ball([0, 0], 1)), 0.1, [0, 0], [0.5, 0])
    assert h == pytest.approx(0.5 * math.log(3) + 0.025, abs=1e-12)
    with pytest.raises(ValueError):
        c_eps_cost(Euclidean(), 0.0, [0.0], [1.0])


def test_eval_single_atoms():
    a, b = line(0.2), line(0.7)
    plan = TransportPlan.from_dense([[1.0]], a, b)
    br = eval_C_eps(plan, b, Euclidean(), 0.3, 1.5)
    assert br.fidelity == 0.0
    assert br.transport == pytest.approx(0.5 + 0.3 * 0.25)
    assert br.cardinality == pytest.approx(0.3 ** (3 * 1.5 + 2))
    assert br.total == br.fidelity + br.transport + br.cardinality


def test_eval_book_shift_terms():
    plan = TransportPlan.from_dense(np.eye(3) / 3, BOOK1, BOOK2)
    br = eval_C_eps(plan, BOOK2, Euclidean(), 0.1, 1)
    assert br.fidelity == pytest.approx(0.0, abs=1e-15)
    assert br.transport == pytest.approx(1.1, abs=1e-12)
    assert br.cardinality == pytest.approx(3e-5, rel=1e-12)


def test_eval_fidelity_against_independent_w1():
    # plan lands on {0, 2}; mu2 is uniform on {0, 1, 2, 3}
    src = line(0, 3)
    plan = TransportPlan.from_dense([[0.5, 0], [0, 0.5]], src, line(0, 2))
    mu2 = line(0, 1, 2, 3)
    br = eval_C_eps(plan, mu2, Euclidean(), 0.5, 0)
    # CDF formula: |F_nu - F_mu2| is 1/4 on [0,1), 0 on [1,2), 1/4 on [2,3)
    assert br.fidelity == pytest.approx(0.5 / 0.5, abs=1e-12)


def test_minimize_dirac_to_dirac():
    a, b = line(0.0), line(0.4)
    res = minimize_C_eps(a, b, Euclidean(), 0.3, ApproxConfig(epsilons=[0.3], d=1))
    assert res.plan.to_dict()["entries"] == [[0, 0, 1.0]]
    assert res.breakdown.total == pytest.approx(c_eps_cost(Euclidean(), 0.3, [0], [0.4]) + 0.3**5)


def _cloud():
    rng = np.random.default_rng(7)
    mu1 = grid_discretize(Box([0, 0], [1, 1]), 6)
    mu2 = DiscreteMeasure(rng.uniform(0.3, 0.7, (40, 2)))
    return mu1, mu2


def test_coarse_net_wins_at_large_eps():
    mu1, mu2 = _cloud()
    res = minimize_C_eps(mu1, mu2, Euclidean(), 0.5, ApproxConfig(epsilons=[0.5], d=1))
    totals = {c.j: c.breakdown.total for c in res.candidates}
    sizes = {c.j: c.breakdown.support_size for c in res.candidates}
    assert res.breakdown.total == min(totals.values())
    # the cardinality term keeps the finest net from winning
    assert res.j < max(totals) and sizes[res.j] < sizes[max(totals)]


def test_fine_net_wins_at_small_eps():
    mu1, mu2 = _cloud()
    res = minimize_C_eps(mu1, mu2, Euclidean(), 0.01, ApproxConfig(epsilons=[0.01], d=1, net_rule="eps^-1"))
    assert res.j == max(c.j for c in res.candidates)
    assert res.breakdown.w1_nu_mu2 <= 1.0 / res.j


def test_candidates_respect_lp_and_breakdown():
    mu1, mu2 = _cloud()
    res = minimize_C_eps(mu1, mu2, Euclidean(), 0.2, ApproxConfig(epsilons=[0.2], d=1))
    for c in res.candidates:
        assert c.plan.marginal_error() <= 1e-10
        # the LP objective already contains fidelity and transport
        assert c.lp_value == pytest.approx(c.breakdown.fidelity + c.breakdown.transport, abs=1e-9)
        b = c.breakdown
        assert min(b.fidelity, b.transport, b.cardinality) >= 0


def test_quantization_bound():
    _, mu2 = _cloud()
    for j in [2, 5, 11]:
        net = greedy_eps_net(mu2.points, Euclidean(), 1.0 / j)
        assert quantization_error(mu2, net.points, Euclidean()) <= 1.0 / j + 1e-9


def test_projected_plan_keeps_first_marginal():
    mu1, mu2 = _cloud()
    direct = select(mu1, mu2, Euclidean())
    net = greedy_eps_net(mu2.points, Euclidean(), 0.1)
    q = projected_plan(direct.plan, net.points, Euclidean())
    assert np.allclose(q.row_sums(), mu1.weights, atol=1e-12)
    assert np.isclose(q.mass.sum(), 1.0)


def test_schedule_dirac_records_identical():
    a, b = DiscreteMeasure([[0.1, 0.1]]), DiscreteMeasure([[0.6, 0.2]])
    run = run_schedule(a, b, Euclidean(), ApproxConfig(epsilons=[0.4, 0.2, 0.1]))
    assert run.d == 0.0  # single atom falls back to d = 0
    assert {r.w1_nu_mu2 for r in run.records} == {0.0}
    assert len({r.primary_cost for r in run.records}) == 1
    assert convergence_report(run, select(a, b, Euclidean())).passed


def test_schedule_book_shift():
    run = run_schedule(BOOK1, BOOK2, Euclidean(), ApproxConfig(epsilons=[0.4, 0.2, 0.1, 0.05]))
    w = [r.w1_nu_mu2 for r in run.records]
    assert all(b <= a + 1e-12 for a, b in zip(w, w[1:]))
    assert w[-1] <= 1.0 / ApproxConfig().j_of(0.05)
    assert run.final.primary_cost == pytest.approx(1.0, abs=1e-9)
    assert splitting_index(run.output_plan).index == 0.0
    checks = run.checks()
    assert all(checks.values()), checks
    rep = convergence_report(run, select(BOOK1, BOOK2, Euclidean()))
    assert rep.passed and rep.primary_gap <= 0.05


def test_schedule_square_to_atoms():
    rng = np.random.default_rng(0)
    mu1 = grid_discretize(Box([0, 0], [1, 1]), 10)
    mu2 = DiscreteMeasure(rng.uniform(0.1, 0.9, (5, 2)))
    run = run_schedule(mu1, mu2, Euclidean(), ApproxConfig(workers=2))
    assert [r.epsilon for r in run.records] == ApproxConfig().epsilons
    assert all(run.checks().values())
    assert abs(run.final.primary_cost - wasserstein(mu1, mu2, Euclidean())) <= 0.05 * run.direct_w1


def test_schedule_records_failures_and_continues(monkeypatch):
    import monge.approximation as ap

    real = ap.minimize_C_eps

    def flaky(mu1, mu2, metric, eps, config=None, d=None):
        if eps == 0.2:
            raise ap.NumericalFailure("synthetic")
        return real(mu1, mu2, metric, eps, config, d)

    monkeypatch.setattr(ap, "minimize_C_eps", flaky)
    run = run_schedule(BOOK1, BOOK2, Euclidean(), ApproxConfig(epsilons=[0.4, 0.2, 0.1]))
    assert list(run.failures) == [0.2]
    assert [r.epsilon for r in run.records] == [0.4, 0.1]
