"""Structural checks: interpolated slices of a strictly convex plan are disjoint.

On the crossing instance the vertical pairing keeps the midpoint slices
apart; the crossed pairing makes them meet.
"""
import numpy as np

from monge import DiscreteMeasure, TransportPlan, check_interpolant_disjointness, splitting_index

src = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0]])
tgt = DiscreteMeasure([[0.0, 1.0], [1.0, 1.0]])
for name, P in [("vertical", np.eye(2) / 2), ("crossed", np.fliplr(np.eye(2)) / 2)]:
    plan = TransportPlan.from_dense(P, src, tgt, cost_tag="c_eps", strictly_convex=True)
    rep = check_interpolant_disjointness(plan, 0.5)
    print(f"{name:9} margin {rep.margin:.3f} ok={rep.ok} splitting {splitting_index(plan).index}")

product = TransportPlan.from_dense(np.full((2, 2), 0.25), src, tgt)
print("product plan splitting index:", splitting_index(product).index)
