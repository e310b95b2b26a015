"""Planner-weight computation of risk-sharing equilibria.

Agents share a constant aggregate endowment under a common volatility band.
Candidate allocations come from the planner problem: consumptions align the
weighted marginal utilities at a common shadow value.  The weights are then
adjusted until each agent's budget, priced under a chosen reference
volatility, balances.  With a constant aggregate the efficient allocations
are constant across states, which is what makes the weight search and the
PDE budget check agree.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dsl import Expr, evaluate
from .gexp import GridSpec, Mode, ValueField, VolBounds, conditional_at, solve_terminal_values

__all__ = [
    "Utility",
    "Agent",
    "Economy",
    "PriorSpec",
    "ConvergenceError",
    "NegishiError",
    "NonConstantEndowmentError",
    "EquilibriumResult",
    "Allocations",
    "inverse_marginal",
    "efficient_allocation_at",
    "allocation_field",
    "budget_excess",
    "solve_equilibrium",
    "full_insurance_check",
]

# planner weights closer to the simplex boundary than this are treated as
# degenerate rather than converged
BOUNDARY_MARGIN = 1e-8


class ConvergenceError(RuntimeError):
    """An iterative solve (allocation or weight search) failed to converge."""


class NegishiError(ConvergenceError):
    """Weight iteration diverged or was attracted to the simplex boundary."""


class NonConstantEndowmentError(RuntimeError):
    """Equilibrium construction requires a constant aggregate endowment."""


@dataclass(frozen=True)
class Utility:
    """Strictly concave flow utility; kind is log, power, or exp."""

    kind: str
    gamma: Optional[float] = None
    a: Optional[float] = None

    def __post_init__(self):
        if self.kind == "log":
            if self.gamma is not None or self.a is not None:
                raise ValueError("log utility takes no parameters")
        elif self.kind == "power":
            if self.a is not None or self.gamma is None or not self.gamma > 0 or self.gamma == 1:
                raise ValueError("power utility needs gamma > 0, gamma != 1")
        elif self.kind == "exp":
            if self.gamma is not None or self.a is None or not self.a > 0:
                raise ValueError("exp utility needs a > 0")
        else:
            raise ValueError(f"unknown utility kind {self.kind!r}")

    @classmethod
    def log(cls) -> "Utility":
        return cls("log")

    @classmethod
    def power(cls, gamma: float) -> "Utility":
        return cls("power", gamma=float(gamma))

    @classmethod
    def exponential(cls, a: float) -> "Utility":
        return cls("exp", a=float(a))

    def value(self, c):
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0.0):
            raise ValueError("consumption must be positive")
        if self.kind == "log":
            out = np.log(c)
        elif self.kind == "power":
            out = c ** (1.0 - self.gamma) / (1.0 - self.gamma)
        else:
            out = -np.exp(-self.a * c) / self.a
        return float(out) if out.ndim == 0 else out

    def marginal(self, c):
        c = np.asarray(c, dtype=float)
        if np.any(c <= 0.0):
            raise ValueError("consumption must be positive")
        if self.kind == "log":
            out = 1.0 / c
        elif self.kind == "power":
            out = c ** (-self.gamma)
        else:
            out = np.exp(-self.a * c)
        return float(out) if out.ndim == 0 else out


def inverse_marginal(utility: Utility, y):
    """Consumption level whose marginal utility equals y.

    For exp utility the marginal range on positive consumption is (0, 1), so
    y >= 1 is rejected.
    """
    ya = np.asarray(y, dtype=float)
    if np.any(ya <= 0.0):
        raise ValueError("marginal utility value must be positive")
    if utility.kind == "log":
        out = 1.0 / ya
    elif utility.kind == "power":
        out = ya ** (-1.0 / utility.gamma)
    else:
        if np.any(ya >= 1.0):
            raise ValueError(
                "y outside the marginal range (0, 1) of exp utility on positive consumption"
            )
        out = -np.log(ya) / utility.a
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Agent:
    name: str
    utility: Utility
    endowment: Expr


@dataclass(frozen=True)
class PriorSpec:
    """Reference volatility used for pricing; must sit inside the band."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("prior sigma must be positive")

    @classmethod
    def constant(cls, sigma: float) -> "PriorSpec":
        return cls(float(sigma))

    def mode(self) -> Mode:
        return Mode.fixed(self.sigma)


def _check_prior(prior: PriorSpec, bounds: VolBounds):
    if not bounds.sigma_lo <= prior.sigma <= bounds.sigma_hi:
        raise ValueError(
            f"prior sigma {prior.sigma} outside the band "
            f"[{bounds.sigma_lo}, {bounds.sigma_hi}]"
        )


@dataclass(eq=False)
class Economy:
    """Agents with endowment claims over a common band and grid.

    Endowments are evaluated once on the grid and must be strictly positive
    there.  `constant_aggregate` records whether the summed endowment is flat,
    which the equilibrium construction requires.
    """

    agents: tuple
    bounds: VolBounds
    grid: GridSpec

    def __post_init__(self):
        self.agents = tuple(self.agents)
        if not self.agents:
            raise ValueError("economy needs at least one agent")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValueError("agent names must be unique")
        nodes = self.grid.nodes
        rows = []
        for agent in self.agents:
            vals = evaluate(agent.endowment, nodes)
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"endowment of {agent.name!r} is not finite on the grid")
            # individual endowments may touch zero (a kinked claim can), but
            # never go negative; the aggregate must stay strictly positive
            if np.any(vals < 0.0):
                raise ValueError(f"endowment of {agent.name!r} is negative on the grid")
            rows.append(vals)
        self.endowment_values = np.stack(rows)
        self.aggregate = self.endowment_values.sum(axis=0)
        if np.any(self.aggregate <= 0.0):
            raise ValueError("aggregate endowment must be strictly positive on the grid")
        scale = max(1.0, float(np.max(np.abs(self.aggregate))))
        self.constant_aggregate = bool(np.ptp(self.aggregate) <= 1e-10 * scale)
        if any(a.utility.kind == "exp" for a in self.agents):
            warnings.warn(
                "exp utility has bounded marginal utility; allocations may hit "
                "the consumption floor and the weight search may fail",
                stacklevel=2,
            )

    @property
    def names(self) -> tuple:
        return tuple(a.name for a in self.agents)

    @property
    def n_agents(self) -> int:
        return len(self.agents)


def _shadow_bisect(alpha: np.ndarray, e_vals: np.ndarray, utilities) -> np.ndarray:
    """Solve sum_i inverse_marginal_i(lam / alpha_i) = e for lam, elementwise.

    The sum is strictly decreasing in lam, so bisection from a geometric
    bracket converges unconditionally whenever the target is attainable.
    """
    e = np.asarray(e_vals, dtype=float)
    if np.any(e <= 0.0):
        raise ValueError("aggregate endowment must be positive")
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0.0):
        raise ValueError("weights must be positive")

    caps = [alpha[i] for i, u in enumerate(utilities) if u.kind == "exp"]
    lam_cap = min(caps) if caps else math.inf

    def total(lam):
        acc = np.zeros_like(e)
        for i, u in enumerate(utilities):
            acc = acc + inverse_marginal(u, lam / alpha[i])
        return acc

    hi0 = lam_cap * (1.0 - 1e-12) if math.isfinite(lam_cap) else 1.0
    lo = np.full_like(e, hi0 * 0.5)
    for _ in range(600):
        need = total(lo) < e
        if not np.any(need):
            break
        lo = np.where(need, lo * 0.25, lo)
        if np.any(lo < 1e-280):
            raise ConvergenceError("failed to bracket the shadow value from below")
    else:
        raise ConvergenceError("failed to bracket the shadow value from below")

    hi = np.full_like(e, hi0)
    if math.isfinite(lam_cap):
        if np.any(total(hi) > e):
            raise ConvergenceError(
                "aggregate endowment unattainable with positive consumption "
                "(exp-utility marginal range exhausted)"
            )
    else:
        for _ in range(600):
            need = total(hi) > e
            if not np.any(need):
                break
            hi = np.where(need, hi * 4.0, hi)
            if np.any(hi > 1e280):
                raise ConvergenceError("failed to bracket the shadow value from above")
        else:
            raise ConvergenceError("failed to bracket the shadow value from above")

    for _ in range(120):
        mid = 0.5 * (lo + hi)
        low_side = total(mid) >= e
        lo = np.where(low_side, mid, lo)
        hi = np.where(low_side, hi, mid)
    lam = 0.5 * (lo + hi)

    resid = np.max(np.abs(total(lam) - e) / np.maximum(1.0, np.abs(e)))
    if resid > 1e-9:
        raise ConvergenceError(f"shadow-value bisection residual {resid:.3e}")
    return lam


def efficient_allocation_at(alpha, e_val: float, utilities):
    """Planner allocation of a scalar endowment level.

    Returns (consumptions, shadow value); weighted marginal utilities all
    equal the shadow value.
    """
    alpha = np.asarray(alpha, dtype=float)
    lam = _shadow_bisect(alpha, np.asarray(float(e_val)), utilities)
    c = np.array([inverse_marginal(u, float(lam) / alpha[i]) for i, u in enumerate(utilities)])
    return c, float(lam)


@dataclass(eq=False)
class Allocations:
    """Per-agent consumption grids with the shadow-value grid."""

    consumption: np.ndarray  # (n_agents, nx)
    shadow: np.ndarray  # (nx,)

    @property
    def psi(self) -> np.ndarray:
        """State-price density proxy: the shadow-value grid itself."""
        return self.shadow


def allocation_field(alpha, economy: Economy) -> Allocations:
    """Planner allocation node by node across the grid."""
    if len(np.asarray(alpha)) != economy.n_agents:
        raise ValueError("one weight per agent required")
    if not economy.constant_aggregate:
        warnings.warn(
            "aggregate endowment varies across the grid; the planner field is "
            "informative only and does not support an equilibrium here",
            stacklevel=2,
        )
    utilities = [a.utility for a in economy.agents]
    lam = _shadow_bisect(np.asarray(alpha, dtype=float), economy.aggregate, utilities)
    alpha = np.asarray(alpha, dtype=float)
    c = np.stack([inverse_marginal(u, lam / alpha[i]) for i, u in enumerate(utilities)])
    return Allocations(c, lam)


def budget_excess(alpha, economy: Economy, prior: PriorSpec) -> np.ndarray:
    """Priced budget surplus of each agent at the candidate weights.

    The claim shadow * (c_i - e_i) is valued by a linear heat solve at the
    prior volatility; at an equilibrium every component vanishes.
    """
    _check_prior(prior, economy.bounds)
    alloc = allocation_field(alpha, economy)
    mode = prior.mode()
    out = np.empty(economy.n_agents)
    for i in range(economy.n_agents):
        payoff = alloc.shadow * (alloc.consumption[i] - economy.endowment_values[i])
        field = solve_terminal_values(payoff, economy.bounds, economy.grid, mode)
        out[i] = conditional_at(field, 0.0, 0.0)
    return out


@dataclass(eq=False)
class EquilibriumResult:
    alpha: np.ndarray  # planner weights, summing to one
    allocations: np.ndarray  # (n_agents, nx) consumption grids
    shadow: np.ndarray  # (nx,) shadow-value grid
    psi: np.ndarray  # state-price density proxy (equals shadow)
    prior: PriorSpec
    names: tuple
    iterations: int
    budget_residual: np.ndarray  # PDE-priced budget surplus per agent


def _endowment_price(economy: Economy, prior: PriorSpec, i: int) -> float:
    field = solve_terminal_values(
        economy.endowment_values[i], economy.bounds, economy.grid, prior.mode()
    )
    return conditional_at(field, 0.0, 0.0)


def solve_equilibrium(
    economy: Economy,
    prior: PriorSpec,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> EquilibriumResult:
    """Find planner weights whose allocation balances every priced budget.

    Requires a constant aggregate endowment.  Budgets inside the weight
    search use the linearity of the fixed-volatility solve: the price of
    shadow * (c_i - e_i) with constant c_i and constant shadow reduces to
    shadow * (c_i - price of e_i).  The returned result still carries the
    full PDE-priced budget surplus as a cross-check.
    """
    if not economy.constant_aggregate:
        raise NonConstantEndowmentError(
            "aggregate endowment varies across the grid; constant-sum "
            "endowments are required for an equilibrium"
        )
    _check_prior(prior, economy.bounds)
    n = economy.n_agents
    utilities = [a.utility for a in economy.agents]
    e_const = float(np.mean(economy.aggregate))
    e_prices = np.array([_endowment_price(economy, prior, i) for i in range(n)])

    def excess(alpha: np.ndarray) -> np.ndarray:
        c, lam = efficient_allocation_at(alpha, e_const, utilities)
        return lam * (c - e_prices)

    iterations = 0
    if n == 1:
        alpha = np.array([1.0])
    elif n == 2:
        alpha, iterations = _solve_two_agent(excess, tol)
    else:
        alpha, iterations = _solve_many_agent(excess, n, tol, max_iter)

    if np.any(alpha < BOUNDARY_MARGIN):
        raise NegishiError(
            "weight iteration attracted to the simplex boundary; no interior "
            "equilibrium at this prior"
        )

    alloc = allocation_field(alpha, economy)
    residual = budget_excess(alpha, economy, prior)
    if np.max(np.abs(residual)) > 1e-6:
        raise NegishiError(
            f"PDE budget check disagrees with the weight search "
            f"(residual {np.max(np.abs(residual)):.3e})"
        )
    return EquilibriumResult(
        alpha=alpha,
        allocations=alloc.consumption,
        shadow=alloc.shadow,
        psi=alloc.psi,
        prior=prior,
        names=economy.names,
        iterations=iterations,
        budget_residual=residual,
    )


def _solve_two_agent(excess, tol):
    """Bisection on the first weight; the budget surplus of agent one is
    increasing in it, so a sign bracket pins the root."""

    def f(a):
        return float(excess(np.array([a, 1.0 - a]))[0])

    evals = 0
    lo_a, hi_a = 0.5, 0.5
    f_mid = f(0.5)
    evals += 1
    if abs(f_mid) <= tol:
        return np.array([0.5, 0.5]), evals
    try:
        if f_mid > 0:
            hi_a = 0.5
            lo_a = 0.25
            while f(lo_a) > 0:
                evals += 1
                lo_a *= 0.5
                if lo_a < 1e-12:
                    raise NegishiError("no interior sign change for the budget surplus")
            evals += 1
        else:
            lo_a = 0.5
            hi_a = 0.75
            while f(hi_a) < 0:
                evals += 1
                hi_a = 1.0 - 0.5 * (1.0 - hi_a)
                if 1.0 - hi_a < 1e-12:
                    raise NegishiError("no interior sign change for the budget surplus")
            evals += 1
    except NegishiError:
        raise
    except ConvergenceError as err:
        # allocation became infeasible before the surplus changed sign
        raise NegishiError(f"budget surplus infeasible near the boundary: {err}") from err

    for _ in range(200):
        mid = 0.5 * (lo_a + hi_a)
        fm = f(mid)
        evals += 1
        if abs(fm) <= tol:
            return np.array([mid, 1.0 - mid]), evals
        if fm > 0:
            hi_a = mid
        else:
            lo_a = mid
        if hi_a - lo_a < 1e-16:
            break
    mid = 0.5 * (lo_a + hi_a)
    if abs(f(mid)) > tol:
        raise NegishiError("two-agent weight bisection did not reach tolerance")
    return np.array([mid, 1.0 - mid]), evals


def _solve_many_agent(excess, n, tol, max_iter):
    """Damped multiplicative update with backtracking on the surplus norm."""
    alpha = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        surplus = excess(alpha)
        norm = float(np.max(np.abs(surplus)))
        if norm <= tol:
            return alpha, it
        kappa = 0.5
        while True:
            cand = alpha * (1.0 - kappa * surplus)
            if np.all(cand > 0.0):
                cand = cand / cand.sum()
                if float(np.max(np.abs(excess(cand)))) < norm or kappa < 1e-6:
                    break
            kappa *= 0.5
            if kappa < 1e-12:
                raise NegishiError("damped weight update stalled")
        alpha = cand
    raise NegishiError(f"weight iteration did not converge in {max_iter} steps")


def full_insurance_check(result: EquilibriumResult) -> float:
    """Largest variation of any agent's consumption across states."""
    return float(np.max(np.ptp(result.allocations, axis=1)))
