"""Pathwise replication under volatility uncertainty.

The upper value surface of a payoff yields a delta and a curvature field.
Along simulated paths the delta accumulates trading gains while the
curvature drives a nondecreasing compensator; upper value plus gains minus
compensator reproduces the payoff up to discretization noise.  The
compensator accrues fastest under volatilities far from the worst case and
vanishes along extremal paths.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dsl import Expr, evaluate
from .gexp import (
    GridSpec,
    UPPER,
    ValueField,
    VolBounds,
    layer_at_or_below,
    solve_value_field,
)

__all__ = [
    "SimulationError",
    "GridFunction",
    "HedgeField",
    "ControlSpec",
    "PathBatch",
    "ReplicationReport",
    "TransformedStrategy",
    "hedge_field",
    "simulate_paths",
    "replicate",
    "exp_martingale_transform",
    "strategy_gains",
]


class SimulationError(RuntimeError):
    """Path simulation or replication produced unusable statistics."""


@dataclass(eq=False)
class GridFunction:
    """Space-time field sampled like the solver stores it: the time layer at
    or below t, linear interpolation in x (clamped at the grid edges)."""

    values: np.ndarray  # (nt + 1, nx)
    grid: GridSpec
    horizon: float

    def at(self, t: float, x):
        k = layer_at_or_below(t, self.horizon, self.grid.nt)
        xa = np.asarray(x, dtype=float)
        out = np.interp(xa, self.grid.nodes, self.values[k])
        return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class HedgeField:
    """Delta and curvature of the upper value surface of a payoff."""

    eta: GridFunction  # delta: first space derivative
    phi_hat: GridFunction  # half the second space derivative
    field: ValueField

    @property
    def bounds(self) -> VolBounds:
        return self.field.bounds

    @property
    def grid(self) -> GridSpec:
        return self.field.grid


def hedge_field(expr: Expr, bounds: VolBounds, grid: GridSpec) -> HedgeField:
    """Differentiate the upper value surface by central differences.

    Boundary columns copy their interior neighbors; paths that wander that
    far are excluded from replication statistics anyway.
    """
    field = solve_value_field(expr, bounds, grid, UPPER)
    v = field.values
    dx = grid.dx
    eta = np.empty_like(v)
    eta[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * dx)
    eta[:, 0] = eta[:, 1]
    eta[:, -1] = eta[:, -2]
    phi = np.empty_like(v)
    phi[:, 1:-1] = 0.5 * (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / dx**2
    phi[:, 0] = phi[:, 1]
    phi[:, -1] = phi[:, -2]
    return HedgeField(
        GridFunction(eta, grid, bounds.horizon),
        GridFunction(phi, grid, bounds.horizon),
        field,
    )


@dataclass(eq=False)
class ControlSpec:
    """Volatility control for simulated paths.

    `constant` holds sigma fixed; `extremal` picks sigma_hi where the hedge
    curvature is nonnegative and sigma_lo elsewhere, the worst case for the
    upper value.
    """

    kind: str
    sigma: Optional[float] = None
    hedge: Optional[HedgeField] = None

    @classmethod
    def constant(cls, sigma: float) -> "ControlSpec":
        return cls("constant", sigma=float(sigma))

    @classmethod
    def extremal(cls, hedge: HedgeField) -> "ControlSpec":
        return cls("extremal", hedge=hedge)


@dataclass(eq=False)
class PathBatch:
    """Simulated driver paths with their realized volatility schedule.

    `b` has shape (n_paths, n_steps + 1) with b[:, 0] = 0; `sigmas` has shape
    (n_paths, n_steps), entry (i, k) applying on [t_k, t_{k+1}).
    """

    b: np.ndarray
    sigmas: np.ndarray
    dt: float
    seed: int
    bounds: VolBounds
    increments: str

    @property
    def n_paths(self) -> int:
        return self.b.shape[0]

    @property
    def n_steps(self) -> int:
        return self.b.shape[1] - 1


def _draw_increments(seed: int, n_paths: int, n_steps: int, kind: str) -> np.ndarray:
    """Unit-variance increments, one counter-based substream per path index.

    Path i is a pure function of (seed, i), so enlarging the batch never
    reshuffles earlier paths.
    """
    z = np.empty((n_paths, n_steps))
    for i in range(n_paths):
        gen = np.random.Generator(np.random.Philox(key=(seed << 32) + i))
        if kind == "binary":
            z[i] = 2.0 * gen.integers(0, 2, n_steps) - 1.0
        else:
            z[i] = gen.standard_normal(n_steps)
    return z


def simulate_paths(
    control: ControlSpec,
    bounds: VolBounds,
    n_paths: int,
    n_steps: int,
    seed: int = 0,
    increments: str = "binary",
) -> PathBatch:
    """Simulate driver paths from 0 under the given volatility control."""
    if n_paths < 1 or n_steps < 1:
        raise ValueError("n_paths and n_steps must be positive")
    if increments not in ("binary", "gaussian"):
        raise ValueError(f"unknown increment kind {increments!r}")
    if control.kind == "constant":
        if control.sigma is None or not bounds.sigma_lo <= control.sigma <= bounds.sigma_hi:
            raise ValueError("constant control needs sigma inside the band")
    elif control.kind == "extremal":
        if control.hedge is None:
            raise ValueError("extremal control needs a hedge field")
        if control.hedge.bounds != bounds:
            raise ValueError("hedge field was built for different bounds")
    else:
        raise ValueError(f"unknown control kind {control.kind!r}")

    dt = bounds.horizon / n_steps
    sq = math.sqrt(dt)
    z = _draw_increments(seed, n_paths, n_steps, increments)

    if control.kind == "constant":
        sigmas = np.full((n_paths, n_steps), float(control.sigma))
        b = np.empty((n_paths, n_steps + 1))
        b[:, 0] = 0.0
        np.cumsum(control.sigma * sq * z, axis=1, out=b[:, 1:])
    else:
        phi = control.hedge.phi_hat
        sigmas = np.empty((n_paths, n_steps))
        b = np.empty((n_paths, n_steps + 1))
        b[:, 0] = 0.0
        for k in range(n_steps):
            curv = phi.at(k * dt, b[:, k])
            # ties at zero curvature take the high edge of the band
            sig = np.where(curv >= 0.0, bounds.sigma_hi, bounds.sigma_lo)
            sigmas[:, k] = sig
            b[:, k + 1] = b[:, k] + sig * sq * z[:, k]
    return PathBatch(b, sigmas, dt, seed, bounds, increments)


@dataclass(eq=False)
class ReplicationReport:
    """Pathwise accounting of upper value + gains - compensator vs payoff."""

    n_paths: int
    n_steps: int
    n_excluded: int
    seed: int
    upper_value: float
    mean_gap: float
    se_gap: float
    mean_gains: float
    mean_k: float
    se_k: float
    min_k_increment: float
    gaps: np.ndarray  # per included path
    k_terminal: np.ndarray  # per included path

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "n_steps": self.n_steps,
            "n_excluded": self.n_excluded,
            "seed": self.seed,
            "upper_value": self.upper_value,
            "mean_gap": self.mean_gap,
            "se_gap": self.se_gap,
            "mean_gains": self.mean_gains,
            "mean_k": self.mean_k,
            "se_k": self.se_k,
            "min_k_increment": self.min_k_increment,
        }


def replicate(
    expr: Expr, hedge: HedgeField, paths: PathBatch, upper_value: Optional[float] = None
) -> ReplicationReport:
    """Run the hedging identity along a path batch.

    Per path: gap = [upper value + sum eta dB - K_T] - payoff(B_T), where the
    compensator K accrues (worst-case flux of twice the curvature minus
    curvature times realized variance) * dt, a nonnegative amount each step.
    Paths leaving the grid are excluded from the statistics.
    """
    if hedge.bounds != paths.bounds:
        raise ValueError("hedge field and paths use different bounds")
    if upper_value is None:
        upper_value = _origin_value(hedge.field)

    b = paths.b
    grid = hedge.grid
    inside = np.all((b >= grid.x_min) & (b <= grid.x_max), axis=1)
    n_excluded = int(b.shape[0] - inside.sum())
    if not np.any(inside):
        raise SimulationError("every path left the grid; enlarge it or shorten the horizon")

    n_steps = paths.n_steps
    dt = paths.dt
    gains = np.zeros(b.shape[0])
    k_acc = np.zeros(b.shape[0])
    min_inc = math.inf
    g = hedge.bounds.g
    for k in range(n_steps):
        t_k = k * dt
        bk = b[:, k]
        eta_k = hedge.eta.at(t_k, bk)
        phi_k = hedge.phi_hat.at(t_k, bk)
        gains += eta_k * (b[:, k + 1] - bk)
        inc = (g(2.0 * phi_k) - phi_k * paths.sigmas[:, k] ** 2) * dt
        k_acc += inc
        min_inc = min(min_inc, float(inc[inside].min()))

    payoff = evaluate(expr, b[:, -1])
    gap = (upper_value + gains - k_acc) - payoff
    gap_in = gap[inside]
    k_in = k_acc[inside]
    if not (np.all(np.isfinite(gap_in)) and np.all(np.isfinite(k_in))):
        raise SimulationError("non-finite replication statistics")

    n_in = gap_in.size
    se_gap = float(np.std(gap_in, ddof=1) / math.sqrt(n_in)) if n_in > 1 else math.nan
    se_k = float(np.std(k_in, ddof=1) / math.sqrt(n_in)) if n_in > 1 else math.nan
    return ReplicationReport(
        n_paths=b.shape[0],
        n_steps=n_steps,
        n_excluded=n_excluded,
        seed=paths.seed,
        upper_value=float(upper_value),
        mean_gap=float(gap_in.mean()),
        se_gap=se_gap,
        mean_gains=float(gains[inside].mean()),
        mean_k=float(k_in.mean()),
        se_k=se_k,
        min_k_increment=min_inc,
        gaps=gap_in,
        k_terminal=k_in,
    )


def _origin_value(field: ValueField) -> float:
    return float(np.interp(0.0, field.grid.nodes, field.values[0]))


@dataclass(eq=False)
class TransformedStrategy:
    """A strategy rebased to a positive loading: holds numerator / loading.

    Sampling divides the two fields at the query point itself; dividing
    interpolated values keeps the rebased gains consistent with integrating
    against loading * dB.
    """

    numerator: GridFunction
    loading: GridFunction
    floor: float

    def at(self, t: float, x):
        return self.numerator.at(t, x) / self.loading.at(t, x)

    @property
    def node_values(self) -> np.ndarray:
        return self.numerator.values / self.loading.values


def exp_martingale_transform(
    theta: GridFunction, loading: GridFunction, floor: float = 1e-6
) -> TransformedStrategy:
    """Rebase strategy theta to the integrator with the given loading.

    The loading must stay at least `floor` away from zero in absolute value
    on the whole grid.
    """
    if not floor > 0.0:
        raise ValueError("floor must be positive")
    if theta.values.shape != loading.values.shape:
        raise ValueError("theta and loading live on different grids")
    if theta.grid != loading.grid or theta.horizon != loading.horizon:
        raise ValueError("theta and loading live on different grids")
    low = float(np.min(np.abs(loading.values)))
    if low < floor:
        raise ValueError(f"loading reaches {low:.3e}, below the floor {floor:.3e}")
    return TransformedStrategy(theta, loading, floor)


def strategy_gains(strategy, paths: PathBatch, loading: Optional[GridFunction] = None):
    """Accumulated trading gains of a sampled strategy along each path.

    Without a loading the integrator is the driver itself; with one, each
    increment is scaled by the loading sampled at the step's left endpoint.
    """
    b = paths.b
    dt = paths.dt
    gains = np.zeros(b.shape[0])
    for k in range(paths.n_steps):
        t_k = k * dt
        bk = b[:, k]
        s = strategy.at(t_k, bk)
        db = b[:, k + 1] - bk
        if loading is not None:
            db = loading.at(t_k, bk) * db
        gains += s * db
    return gains
