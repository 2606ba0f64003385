"""Greedy nets, nearest-point projections and doubling estimates."""
import numpy as np

from monge import Box, Euclidean, estimate_doubling, grid_discretize, greedy_eps_net
from monge.measures import check_net_cardinality, packing_bound

m = Euclidean()
square = grid_discretize(Box([0, 0], [1, 1]), 100)
est = estimate_doubling(square, m, 0.25, halvings=3, centers=np.arange(0, len(square), 50))
print(f"doubling constant {est.C:.2f}, exponent {est.d:.2f}")
diam = m([0.005, 0.005], [0.995, 0.995])
for eps in (0.4, 0.2, 0.1, 0.05):
    net = greedy_eps_net(square.points, m, eps)
    bound = packing_bound(est.C, diam, eps)
    print(f"eps={eps:<5} net size {len(net):4d} bound {bound:10.0f} within bound: {check_net_cardinality(net, est, diam)}")
