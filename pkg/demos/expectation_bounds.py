"""
Upper and lower expectations under a volatility band
====================================================

A claim on the terminal value of a driftless process is worth different
amounts to someone who fears high volatility and someone who hopes for it.
With the volatility pinned anywhere in [0.5, 1.0], the worst-case and
best-case valuations bracket every single-sigma value.
"""

import numpy as np

from knightian import GridSpec, Mode, VolBounds, expectation, parse, tree_expectation
from knightian.gexp import LOWER, UPPER

bounds = VolBounds(sigma_lo=0.5, sigma_hi=1.0, horizon=1.0)
grid = GridSpec(-6.0, 6.0, 401, 800)

# The running example: a capped exponential. Concave-convex with a kink,
# so neither extreme of the band is worst everywhere.
payoff = parse("min(exp(x), 1)")

upper = expectation(payoff, bounds, grid, UPPER)
lower = expectation(payoff, bounds, grid, LOWER)
print("payoff min(exp(x), 1) on sigma in [0.5, 1.0]:")
print(f"  upper expectation {upper:.6f}")
print(f"  lower expectation {lower:.6f}")

# Every fixed sigma inside the band prices between the two bounds.
for sigma in (0.5, 0.75, 1.0):
    v = expectation(payoff, bounds, grid, Mode.fixed(sigma))
    print(f"  fixed sigma={sigma}: {v:.6f}")

# A linear payoff has no exposure to volatility at all: both bounds are the
# starting value and the gap collapses.
for text in ("x", "3*x - 2"):
    gap = expectation(parse(text), bounds, grid, UPPER) - expectation(
        parse(text), bounds, grid, LOWER
    )
    print(f"payoff {text}: upper - lower = {gap:.2e}")

# A convex payoff maxes out the band: the worst case for the seller is
# sigma_hi throughout, so the upper value is sigma_hi^2 * T.
quad = expectation(parse("x^2"), bounds, grid, UPPER)
print(f"payoff x^2: upper {quad:.4f} (compare sigma_hi^2 * T = {bounds.sigma_hi**2:.1f})")

# An exact discrete-time lattice gives an independent check on the solver.
tree = tree_expectation(payoff, bounds, 12, UPPER)
print(f"12-step lattice upper value {tree:.6f} (pde {upper:.6f})")

# Shrink the band to a point and the two bounds collapse onto the ordinary
# linear expectation, bit for bit.
point = VolBounds(0.7, 0.7, 1.0)
pu = expectation(payoff, point, grid, UPPER)
pl = expectation(payoff, point, grid, LOWER)
print(f"degenerate band at 0.7: upper - lower = {pu - pl:.1e}")
