"""Whether equilibrium trades can be carried by linear hedging alone.

The net trade of an agent is the priced difference between equilibrium
consumption and endowment.  A net trade is implementable without ambiguity
premia exactly when its upper and lower expectations agree; the genericity
probe measures how rarely that happens under random endowment
perturbations.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .dsl import BinOp, Call, Lit, Neg, Pow, Var
from .equilibrium import (
    Agent,
    ConvergenceError,
    Economy,
    EquilibriumResult,
    PriorSpec,
    solve_equilibrium,
)
from .gexp import GapResult, mean_ambiguity_gap

__all__ = [
    "NetTradeSet",
    "AgentVerdict",
    "ImplementabilityVerdict",
    "Perturbation",
    "ProbeSample",
    "ProbeResult",
    "net_trades",
    "check_implementability",
    "genericity_probe",
]


@dataclass(eq=False)
class NetTradeSet:
    """Priced net trades on the grid, one row per agent; rows sum to zero."""

    names: tuple
    values: np.ndarray  # (n_agents, nx)


def net_trades(result: EquilibriumResult, economy: Economy) -> NetTradeSet:
    """Net trade grid of each agent: shadow * (consumption - endowment)."""
    if result.names != economy.names:
        raise ValueError("result and economy list different agents")
    if result.allocations.shape != economy.endowment_values.shape:
        raise ValueError("result and economy use different grids")
    values = result.psi * (result.allocations - economy.endowment_values)
    clearing = float(np.max(np.abs(values.sum(axis=0))))
    if clearing > 1e-10:
        raise ValueError(f"market clearing violated (residual {clearing:.3e})")
    return NetTradeSet(economy.names, values)


@dataclass(eq=False)
class AgentVerdict:
    name: str
    upper: float
    lower: float
    gap: float
    mean_af: bool


@dataclass(eq=False)
class ImplementabilityVerdict:
    agents: tuple
    implementable: bool
    tol: float

    def agent(self, name: str) -> AgentVerdict:
        for v in self.agents:
            if v.name == name:
                return v
        raise KeyError(name)


def check_implementability(
    result: EquilibriumResult, economy: Economy, tol: float = 1e-3
) -> ImplementabilityVerdict:
    """Equilibrium is implementable when every net trade is mean-ambiguity-free."""
    trades = net_trades(result, economy)
    verdicts = []
    for name, row in zip(trades.names, trades.values):
        res: GapResult = mean_ambiguity_gap(row, economy.bounds, economy.grid, tol)
        verdicts.append(AgentVerdict(name, res.upper, res.lower, res.gap, res.mean_af))
    return ImplementabilityVerdict(tuple(verdicts), all(v.mean_af for v in verdicts), tol)


@dataclass(frozen=True)
class Perturbation:
    """Random endowment tilt family: localized bump or monotone ramp."""

    family: str = "bump"
    amplitude: float = 0.1

    def __post_init__(self):
        if self.family not in ("bump", "ramp"):
            raise ValueError(f"unknown perturbation family {self.family!r}")
        if self.amplitude < 0.0:
            raise ValueError("amplitude must be nonnegative")


@dataclass(eq=False)
class ProbeSample:
    index: int
    seed: int
    center: float
    width: float
    gap_max: Optional[float]
    implementable: Optional[bool]
    error: Optional[str] = None


@dataclass(eq=False)
class ProbeResult:
    samples: tuple
    n_samples: int
    n_solved: int
    n_failed_solves: int
    n_failing: int
    fraction_failing: float
    wilson_low: float
    wilson_high: float
    tol: float
    perturbation: Perturbation


def _shifted_scaled(center: float, width: float):
    # (x - center) / width
    return BinOp("/", BinOp("-", Var(), Lit(center)), Lit(width))


def _tilt_expr(family: str, center: float, width: float):
    z = _shifted_scaled(center, width)
    if family == "bump":
        return Call("exp", (Neg(Pow(z, 2)),))
    # ramp: clamp z to [0, 1]
    return Call("min", (Call("max", (z, Lit(0.0))), Lit(1.0)))


def _clamped_share(e_total: float, amplitude: float, tilt):
    # e/2 + amplitude * tilt, clamped into [0.01 e, 0.99 e]
    eps = 0.01 * e_total
    raw = BinOp("+", Lit(0.5 * e_total), BinOp("*", Lit(amplitude), tilt))
    return Call("min", (Call("max", (raw, Lit(eps))), Lit(e_total - eps)))


def genericity_probe(
    economy: Economy,
    n_samples: int,
    perturbation: Perturbation = Perturbation(),
    seed: int = 0,
    prior: Optional[PriorSpec] = None,
    tol: float = 1e-3,
) -> ProbeResult:
    """Estimate how often perturbed endowments break implementability.

    Each sample redraws the first agent's endowment as a clamped tilt of the
    fifty-fifty split, re-solves the equilibrium, and tests the net trades.
    The failing fraction over successful solves is reported with a 95 percent
    Wilson interval; solve failures are tallied separately, never silently
    counted as either outcome.
    """
    if economy.n_agents != 2:
        raise ValueError("the probe redraws a two-agent endowment split")
    if not economy.constant_aggregate:
        raise ValueError("the probe requires a constant aggregate endowment")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if prior is None:
        prior = PriorSpec.constant(economy.bounds.sigma_hi)

    e_total = float(np.mean(economy.aggregate))
    scale = economy.bounds.sigma_hi * math.sqrt(economy.bounds.horizon)
    a1, a2 = economy.agents

    samples = []
    n_failing = 0
    n_failed_solves = 0
    for k in range(n_samples):
        # one independent substream per sample; reproducible regardless of
        # how many samples precede it
        sample_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        rng = np.random.default_rng(sample_seed)
        center = float(rng.uniform(-1.5 * scale, 1.5 * scale))
        width = float(rng.uniform(0.3 * scale, 1.0 * scale))

        tilt = _tilt_expr(perturbation.family, center, width)
        e1 = _clamped_share(e_total, perturbation.amplitude, tilt)
        e2 = BinOp("-", Lit(e_total), e1)
        perturbed = Economy(
            (
                Agent(a1.name, a1.utility, e1),
                Agent(a2.name, a2.utility, e2),
            ),
            economy.bounds,
            economy.grid,
        )
        try:
            result = solve_equilibrium(perturbed, prior)
            verdict = check_implementability(result, perturbed, tol)
        except ConvergenceError as err:
            n_failed_solves += 1
            samples.append(ProbeSample(k, sample_seed, center, width, None, None, str(err)))
            continue
        gap_max = max(v.gap for v in verdict.agents)
        if not verdict.implementable:
            n_failing += 1
        samples.append(
            ProbeSample(k, sample_seed, center, width, gap_max, verdict.implementable)
        )

    n_solved = n_samples - n_failed_solves
    if n_solved > 0:
        fraction = n_failing / n_solved
        ci = binomtest(n_failing, n_solved).proportion_ci(
            confidence_level=0.95, method="wilson"
        )
        low, high = float(ci.low), float(ci.high)
    else:
        fraction, low, high = math.nan, math.nan, math.nan
    return ProbeResult(
        samples=tuple(samples),
        n_samples=n_samples,
        n_solved=n_solved,
        n_failed_solves=n_failed_solves,
        n_failing=n_failing,
        fraction_failing=fraction,
        wilson_low=low,
        wilson_high=high,
        tol=tol,
        perturbation=perturbation,
    )
