"""Choosing among optimal plans with the quadratic secondary cost.

Shifting three books one slot to the right has two W1-optimal plans: move
each book by one, or move the leftmost book by three.  The quadratic
tie-break picks the shift.
"""
from monge import DiscreteMeasure, Euclidean, brute_force_secondary, check_restricted_monotonicity, select

mu1 = DiscreteMeasure([[0.0], [1.0], [2.0]])
mu2 = DiscreteMeasure([[1.0], [2.0], [3.0]])
res = select(mu1, mu2, Euclidean())
pairs = [(float(mu1.points[i, 0]), float(mu2.points[j, 0])) for i, j in zip(res.plan.rows, res.plan.cols)]
print("selected pairs:", pairs)
print("primary", res.primary_cost, "secondary", res.secondary_cost)
print("brute force:", brute_force_secondary(mu1, mu2, Euclidean()))
print("restricted monotone:", check_restricted_monotonicity(res.plan).ok)
