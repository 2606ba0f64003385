"""Exact W1 transport with a certified dual and a Lipschitz potential."""
import numpy as np

from monge import DiscreteMeasure, Euclidean, build_cost, extract_lipschitz_potential, solve_kantorovich

rng = np.random.default_rng(1)
mu1 = DiscreteMeasure(rng.uniform(0, 1, (6, 2)))
mu2 = DiscreteMeasure(rng.uniform(0, 1, (6, 2)))
cost = build_cost(mu1, mu2, Euclidean())
sol = solve_kantorovich(mu1, mu2, cost)
print(f"W1 = {sol.value:.12f}, duality gap = {sol.dual_gap:.1e}")
for i, j, w in zip(sol.plan.rows, sol.plan.cols, sol.plan.mass):
    print(f"  {mu1.points[i].round(3)} -> {mu2.points[j].round(3)}  mass {w:.4f}")

pot = extract_lipschitz_potential(sol.dual, cost, sol.plan)
D = Euclidean().pairwise(pot.points, pot.points)
lip = np.abs(pot.values[:, None] - pot.values[None, :]) - D
print(f"potential on {len(pot.points)} points, worst Lipschitz excess {lip.max():.1e}")
