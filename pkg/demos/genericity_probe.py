"""
How fragile is implementability?
================================

Implementable allocations demand net trades with identical means under every
volatility in the band. That is a knife-edge property: almost any bump in
how the endowment is split between agents destroys it. The probe perturbs
the even split with seeded random bumps and reports how often the resulting
equilibrium fails the implementability check.
"""

from knightian import (
    Agent,
    Economy,
    GridSpec,
    Perturbation,
    Utility,
    VolBounds,
    genericity_probe,
    parse,
)

bounds = VolBounds(0.5, 1.0, 1.0)
grid = GridSpec(-6.0, 6.0, 201, 350)
economy = Economy(
    (
        Agent("a1", Utility.log(), parse("min(exp(x), 1)")),
        Agent("a2", Utility.log(), parse("1 - min(exp(x), 1)")),
    ),
    bounds,
    grid,
)

# Gaussian-bump perturbations of the even split, amplitude 0.1: essentially
# every draw produces a curved net trade, hence a failing verdict.
res = genericity_probe(
    economy, n_samples=40, perturbation=Perturbation("bump", 0.1), seed=7
)
print(f"bump amplitude 0.1: {res.n_failing}/{res.n_solved} perturbed economies fail")
print(
    f"  failing fraction {res.fraction_failing:.3f}, "
    f"wilson 95% [{res.wilson_low:.3f}, {res.wilson_high:.3f}]"
)
widest = max(res.samples, key=lambda s: (s.gap_max or 0.0))
print(f"  largest mean-value spread seen: {widest.gap_max:.4f}\n")

# Amplitude zero keeps the even split exactly: net trades vanish and every
# sample is implementable. The failures above are the perturbation's doing.
null = genericity_probe(
    economy, n_samples=40, perturbation=Perturbation("bump", 0.0), seed=7
)
print(f"bump amplitude 0.0: {null.n_failing}/{null.n_solved} fail (control run)")

# Ramp-shaped tilts are no kinder than bumps.
ramp = genericity_probe(
    economy, n_samples=40, perturbation=Perturbation("ramp", 0.1), seed=7
)
print(f"ramp amplitude 0.1: {ramp.n_failing}/{ramp.n_solved} fail")
