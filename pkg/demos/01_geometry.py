"""Projective metrics: the Hilbert distance on the unit disc is hyperbolic.

Along a diameter the Hilbert distance from the centre equals artanh(r), and
straight segments are geodesics for every metric in the library.
"""
import numpy as np

from monge import Ball, Box, Euclidean, Hilbert, PNorm, boundary_chord, interpolate

disc = Hilbert(Ball([0, 0], 1))
for r in (0.1, 0.5, 0.9, 0.99):
    print(f"r={r:<5} hilbert={disc([0, 0], [r, 0]):.12f} artanh={np.arctanh(r):.12f}")

chord = boundary_chord(Ball([0, 0], 1), [0.2, 0.1], [1, 1])
print("chord through (0.2, 0.1) in direction (1, 1):", chord.lower, chord.upper)

x, y = np.array([-0.5, 0.3]), np.array([0.7, -0.2])
for m in (Euclidean(), PNorm(1), disc, Hilbert(Box([-1, -1], [1, 1]))):
    z = interpolate(x, y, 0.3)
    print(f"{m!r:40} d(x,y)={m(x, y):.6f} additivity residual={m(x, z) + m(z, y) - m(x, y):+.1e}")
