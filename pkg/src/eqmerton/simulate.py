"""Monte Carlo simulation of the equilibrium wealth dynamics and statistical
verification of the identities that define the equilibrium.

Because the CRRA policies are linear in wealth, each time step is an exact
log-normal update; discretization error is confined to the time quadrature of
the utility integral and to treating the consumption ratio as constant per
step (left endpoint).

Randomness is counter-based and splittable: paths are processed in fixed-size
blocks and block b draws from ``Philox(key=[seed, b])``, so path i, step k is
a deterministic function of (seed, i, k) regardless of how many workers
process the blocks. Block partials are combined by pairwise summation in
block order, making results bit-identical across worker counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .model import CrraUtility, DiscountSpec, MarketParams, ParameterError, TimeGrid
from .policy import EquilibriumPolicy
from .solver import ValueCurve

__all__ = [
    "SimConfig",
    "SimBatch",
    "Spike",
    "Verdict",
    "PerturbationRow",
    "simulate_equilibrium",
    "verify_value_identity",
    "martingale_check",
    "moment_check",
    "perturbation_test",
]

STAT_THRESHOLD = 3.0  # all statistical verdicts use three standard errors


@dataclass(frozen=True)
class SimConfig:
    """Ensemble size, RNG seed, simulation grid, and initial wealth."""

    n_paths: int
    seed: int
    grid: TimeGrid
    x0: float
    n_workers: int = 1
    block_size: int = 4096

    def __post_init__(self):
        if self.n_paths < 1:
            raise ParameterError(f"n_paths must be >= 1, got {self.n_paths}")
        if not (self.x0 > 0):
            raise ParameterError(f"initial wealth must be > 0, got {self.x0}")
        if self.n_workers < 1 or self.block_size < 1:
            raise ParameterError("n_workers and block_size must be >= 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError("seed must fit in 64 bits")


@dataclass(frozen=True)
class SimBatch:
    """Summary of one simulated ensemble."""

    j_estimate: float
    j_std_error: float
    terminal_moments: dict
    mean_wealth: np.ndarray
    mean_value_over_h: np.ndarray
    n_paths: int


@dataclass(frozen=True)
class Verdict:
    """Outcome of a statistical check; statistic is a z-score against the
    three-standard-error threshold."""

    name: str
    statistic: float
    threshold: float
    passed: bool
    details: str = ""


@dataclass(frozen=True)
class Spike:
    """Constant deviation applied on a short window; None leaves the
    equilibrium component untouched."""

    zeta: Optional[float] = None
    consumption: Optional[float] = None


@dataclass(frozen=True)
class PerturbationRow:
    epsilon: float
    d_estimate: float
    std_error: float
    z: float


def _pairwise_combine(items: list[dict]) -> dict:
    """Pairwise tree sum of per-block partials, in block order."""
    if len(items) == 1:
        return items[0]
    paired = []
    for i in range(0, len(items) - 1, 2):
        merged = {k: items[i][k] + items[i + 1][k] for k in items[i]}
        paired.append(merged)
    if len(items) % 2:
        paired.append(items[-1])
    return _pairwise_combine(paired)


def _accumulate_blocks(cfg: SimConfig, n_sub_steps: int, block_fn: Callable) -> dict:
    """Run block_fn(block_paths, Z) over all path blocks and combine sums."""
    n_blocks = (cfg.n_paths + cfg.block_size - 1) // cfg.block_size

    def run(b: int) -> dict:
        m_b = min(cfg.block_size, cfg.n_paths - b * cfg.block_size)
        rng = np.random.Generator(np.random.Philox(key=[int(cfg.seed), b]))
        Z = rng.standard_normal((m_b, n_sub_steps))
        return block_fn(Z)

    if cfg.n_workers == 1:
        partials = [run(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.n_workers) as pool:
            partials = list(pool.map(run, range(n_blocks)))
    return _pairwise_combine(partials)


def _wealth_paths(Z, x0, m, zeta_steps, c_steps, dt):
    """Exact log-normal stepping for policies linear in wealth."""
    drift = (m.r + m.mu * zeta_steps - c_steps - 0.5 * m.sigma**2 * zeta_steps**2) * dt
    vol = m.sigma * zeta_steps * np.sqrt(dt)
    incr = drift[None, :] + vol[None, :] * Z
    log_x = np.concatenate(
        [np.zeros((Z.shape[0], 1)), np.cumsum(incr, axis=1)], axis=1
    )
    return x0 * np.exp(log_x)


def _j_per_path(X, c_nodes, h_nodes, u: CrraUtility, dt: float) -> np.ndarray:
    """h-weighted utility functional per path: trapezoid quadrature of
    h(s - t) U(c X) plus the discounted bequest term."""
    bequest = h_nodes[-1] * X[:, -1] ** u.p / u.p
    if np.all(c_nodes == 0.0):
        return bequest
    util = h_nodes[None, :] * (c_nodes[None, :] * X) ** u.p / u.p
    w = np.full(X.shape[1], dt)
    w[0] = w[-1] = dt / 2.0
    return util @ w + bequest


def _node_index(g: TimeGrid, t: float) -> int:
    idx = int(round(t / g.dt))
    if not (0 <= idx <= g.n_steps) or abs(g.nodes[idx] - t) > 1e-9 * max(1.0, g.horizon):
        raise ParameterError(f"time {t} is not a node of the simulation grid")
    return idx


def simulate_equilibrium(
    pol: EquilibriumPolicy,
    cfg: SimConfig,
    m: MarketParams,
    u: CrraUtility,
    d: DiscountSpec,
    moment_orders: tuple = (),
    start_time: float = 0.0,
) -> SimBatch:
    """Simulate the equilibrium wealth SDE from (start_time, x0) and estimate
    the expected-utility functional together with per-node summaries."""
    g = cfg.grid
    i0 = _node_index(g, start_time)
    nodes = g.nodes[i0:]
    n_sub = len(nodes) - 1
    if n_sub < 1:
        raise ParameterError("simulation must span at least one step")
    c_nodes = pol.consumption_at(nodes)
    zeta_steps = np.full(n_sub, pol.stock_fraction)
    h_nodes = d.h(nodes - nodes[0])
    lam_nodes = np.interp(nodes, pol.grid.nodes, pol.curve.values)
    h_rem = d.h(g.horizon - nodes)

    def block(Z):
        X = _wealth_paths(Z, cfg.x0, m, zeta_steps, c_nodes[:-1], g.dt)
        J = _j_per_path(X, c_nodes, h_nodes, u, g.dt)
        out = {
            "j_sum": J.sum(),
            "j_sq": (J**2).sum(),
            "wealth": X.sum(axis=0),
            "voh": (lam_nodes[None, :] * X**u.p / u.p / h_rem[None, :]).sum(axis=0),
        }
        for q in moment_orders:
            xq = X[:, -1] ** q
            out[f"m{q}_sum"] = xq.sum()
            out[f"m{q}_sq"] = (xq**2).sum()
        return out

    acc = _accumulate_blocks(cfg, n_sub, block)
    n = cfg.n_paths
    j_mean = acc["j_sum"] / n
    j_var = max(acc["j_sq"] / n - j_mean**2, 0.0)
    moments = {}
    for q in moment_orders:
        mq = acc[f"m{q}_sum"] / n
        vq = max(acc[f"m{q}_sq"] / n - mq**2, 0.0)
        moments[q] = (mq, np.sqrt(vq / n))
    return SimBatch(
        j_estimate=float(j_mean),
        j_std_error=float(np.sqrt(j_var / n)),
        terminal_moments=moments,
        mean_wealth=acc["wealth"] / n,
        mean_value_over_h=acc["voh"] / n,
        n_paths=n,
    )


def verify_value_identity(
    sol: ValueCurve,
    cfg: SimConfig,
    m: MarketParams,
    u: CrraUtility,
    d: DiscountSpec,
    t: float,
    x: float,
    policy: Optional[EquilibriumPolicy] = None,
    target_scale: float = 1.0,
) -> Verdict:
    """Check v(t,x) = lam(t) x^p / p against the Monte Carlo estimate of the
    expected-utility functional under the equilibrium policy started at (t,x).

    ``target_scale`` multiplies the analytic side of the identity; values
    other than 1 give a deliberate mismatch used as a statistical-power
    control (the check must then fail).
    """
    from .policy import equilibrium_policy

    if policy is None:
        policy = equilibrium_policy(sol, m, u, verify=False)
    g = cfg.grid
    i0 = _node_index(g, t)
    target = (
        target_scale * float(np.interp(t, sol.grid.nodes, sol.values)) * x**u.p / u.p
    )
    if i0 == g.n_steps:
        # terminal time: the functional is the bequest utility, zero variance
        return Verdict(
            name="value_identity", statistic=0.0, threshold=STAT_THRESHOLD,
            passed=True, details=f"t=T, exact identity J = U(x) = {target:.6g}",
        )
    cfg_t = SimConfig(
        n_paths=cfg.n_paths, seed=cfg.seed, grid=g, x0=x,
        n_workers=cfg.n_workers, block_size=cfg.block_size,
    )
    batch = simulate_equilibrium(policy, cfg_t, m, u, d, start_time=t)
    se = batch.j_std_error
    z = (batch.j_estimate - target) / se if se > 0 else np.inf * np.sign(
        batch.j_estimate - target
    )
    if batch.j_estimate == target:
        z = 0.0
    return Verdict(
        name="value_identity",
        statistic=float(z),
        threshold=STAT_THRESHOLD,
        passed=bool(abs(z) <= STAT_THRESHOLD),
        details=f"J={batch.j_estimate:.6g} se={se:.3g} target={target:.6g}",
    )


def _checkpoint_stats(cfg, m, u, zeta, lam_at, h_rem_at, checkpoints, nodes):
    """Per-checkpoint sums and cross sums of v(s, X(s)) / h(T - s) under a
    constant-fraction, zero-consumption policy."""
    n_sub = len(nodes) - 1
    zeta_steps = np.full(n_sub, zeta)
    c_steps = np.zeros(n_sub)
    k = len(checkpoints)

    def block(Z):
        X = _wealth_paths(Z, cfg.x0, m, zeta_steps, c_steps, cfg.grid.dt)
        Y = lam_at[None, :] * X[:, checkpoints] ** u.p / u.p / h_rem_at[None, :]
        return {"s": Y.sum(axis=0), "cross": Y.T @ Y}

    acc = _accumulate_blocks(cfg, n_sub, block)
    n = cfg.n_paths
    mean = acc["s"] / n
    cov = acc["cross"] / n - np.outer(mean, mean)
    return mean, cov, n


def martingale_check(
    sol: ValueCurve,
    cfg: SimConfig,
    m: MarketParams,
    u: CrraUtility,
    d: DiscountSpec,
    n_checkpoints: int = 5,
    suboptimal_zeta: float = 0.0,
) -> tuple[Verdict, Verdict]:
    """No-consumption martingale test of v(s, X(s)) / h(T - s).

    Under the equilibrium fraction the checkpoint means must be flat within
    three pooled standard errors of the paired differences; under a
    deliberately suboptimal constant fraction the means must be decreasing
    beyond noise (the perturbed process has nonpositive drift).
    """
    from .policy import stock_fraction

    g = cfg.grid
    nodes = g.nodes
    checkpoints = np.unique(
        np.linspace(0, g.n_steps, max(n_checkpoints, 1)).round().astype(int)
    )
    lam_at = np.interp(nodes[checkpoints], sol.grid.nodes, sol.values)
    h_rem_at = d.h(g.horizon - nodes[checkpoints])
    if len(checkpoints) < 2:
        vac = Verdict("martingale_flat", 0.0, STAT_THRESHOLD, True, "single checkpoint")
        return vac, Verdict(
            "submartingale_decreasing", 0.0, STAT_THRESHOLD, True, "single checkpoint"
        )

    zeta_eq = stock_fraction(m, u)
    mean, cov, n = _checkpoint_stats(cfg, m, u, zeta_eq, lam_at, h_rem_at, checkpoints, nodes)
    worst = 0.0
    for i in range(len(checkpoints)):
        for j in range(i + 1, len(checkpoints)):
            var_d = max(cov[i, i] + cov[j, j] - 2 * cov[i, j], 0.0)
            se = np.sqrt(var_d / n)
            diff = mean[i] - mean[j]
            z = abs(diff) / se if se > 0 else (0.0 if diff == 0 else np.inf)
            worst = max(worst, z)
    flat = Verdict(
        name="martingale_flat",
        statistic=float(worst),
        threshold=STAT_THRESHOLD,
        passed=bool(worst <= STAT_THRESHOLD),
        details=f"max pairwise |z| over {len(checkpoints)} checkpoints",
    )

    mean_s, cov_s, _ = _checkpoint_stats(
        cfg, m, u, suboptimal_zeta, lam_at, h_rem_at, checkpoints, nodes
    )
    weakest = np.inf
    for i in range(len(checkpoints) - 1):
        var_d = max(cov_s[i, i] + cov_s[i + 1, i + 1] - 2 * cov_s[i, i + 1], 0.0)
        se = np.sqrt(var_d / n)
        diff = mean_s[i] - mean_s[i + 1]  # positive when decreasing
        z = diff / se if se > 0 else (np.inf if diff > 0 else -np.inf)
        weakest = min(weakest, z)
    decreasing = Verdict(
        name="submartingale_decreasing",
        statistic=float(weakest) if np.isfinite(weakest) else weakest,
        threshold=STAT_THRESHOLD,
        passed=bool(weakest >= STAT_THRESHOLD),
        details=f"min consecutive drop z under zeta={suboptimal_zeta}",
    )
    return flat, decreasing


def moment_check(
    cfg: SimConfig,
    m: MarketParams,
    u: CrraUtility,
    exponent_q: float,
    growth_rate: float,
    n_checkpoints: int = 5,
) -> list[Verdict]:
    """Compare sample E[X(s)^q] under the no-consumption equilibrium fraction
    with x0^q e^{growth_rate * s} at evenly spaced checkpoints."""
    from .policy import stock_fraction

    g = cfg.grid
    checkpoints = np.unique(
        np.linspace(0, g.n_steps, max(n_checkpoints + 1, 2)).round().astype(int)
    )
    checkpoints = checkpoints[checkpoints > 0]
    zeta_steps = np.full(g.n_steps, stock_fraction(m, u))
    c_steps = np.zeros(g.n_steps)

    def block(Z):
        X = _wealth_paths(Z, cfg.x0, m, zeta_steps, c_steps, g.dt)
        Y = X[:, checkpoints] ** exponent_q
        return {"s": Y.sum(axis=0), "sq": (Y**2).sum(axis=0)}

    acc = _accumulate_blocks(cfg, g.n_steps, block)
    n = cfg.n_paths
    out = []
    for idx, cp in enumerate(checkpoints):
        s = g.nodes[cp]
        mean = acc["s"][idx] / n
        se = np.sqrt(max(acc["sq"][idx] / n - mean**2, 0.0) / n)
        target = cfg.x0**exponent_q * np.exp(growth_rate * s)
        z = (mean - target) / se if se > 0 else (0.0 if mean == target else np.inf)
        out.append(
            Verdict(
                name=f"moment_q{exponent_q}_s{s:g}",
                statistic=float(z),
                threshold=STAT_THRESHOLD,
                passed=bool(abs(z) <= STAT_THRESHOLD),
                details=f"sample={mean:.6g} target={target:.6g}",
            )
        )
    return out


def perturbation_test(
    pol: EquilibriumPolicy,
    cfg: SimConfig,
    m: MarketParams,
    u: CrraUtility,
    d: DiscountSpec,
    t: float,
    epsilons,
    spike: Spike,
) -> list[PerturbationRow]:
    """Estimate D(eps) = (J(equilibrium) - J(spiked)) / eps with common random
    numbers, for a ladder of window widths eps.

    The spike replaces the stock fraction and/or the consumption ratio by the
    given constants on [t, t + eps] (snapped to whole grid steps, at least
    one). A None component follows the equilibrium path, which is how
    first-order stationarity in the fraction alone is probed.
    """
    g = cfg.grid
    i0 = _node_index(g, t)
    nodes = g.nodes[i0:]
    n_sub = len(nodes) - 1
    if n_sub < 1:
        raise ParameterError("perturbation window must precede the horizon")
    c_nodes = pol.consumption_at(nodes)
    h_nodes = d.h(nodes - nodes[0])
    zeta_base = np.full(n_sub, pol.stock_fraction)
    rows = []
    for eps in epsilons:
        if eps <= 0:
            raise ParameterError("epsilons must be positive")
        width = max(1, int(round(eps / g.dt)))
        width = min(width, n_sub)
        zeta_s = zeta_base.copy()
        c_steps = c_nodes[:-1].copy()
        if spike.zeta is not None:
            zeta_s[:width] = spike.zeta
        if spike.consumption is not None:
            c_steps[:width] = spike.consumption

        def block(Z, zeta_s=zeta_s, c_steps=c_steps, eps=eps):
            X_eq = _wealth_paths(Z, cfg.x0, m, zeta_base, c_nodes[:-1], g.dt)
            J_eq = _j_per_path(X_eq, c_nodes, h_nodes, u, g.dt)
            X_sp = _wealth_paths(Z, cfg.x0, m, zeta_s, c_steps, g.dt)
            c_sp_nodes = np.concatenate([c_steps, c_nodes[-1:]])
            J_sp = _j_per_path(X_sp, c_sp_nodes, h_nodes, u, g.dt)
            D = (J_eq - J_sp) / eps
            return {"d": D.sum(), "d2": (D**2).sum()}

        acc = _accumulate_blocks(cfg, n_sub, block)
        n = cfg.n_paths
        d_mean = acc["d"] / n
        se = np.sqrt(max(acc["d2"] / n - d_mean**2, 0.0) / n)
        z = d_mean / se if se > 0 else (0.0 if d_mean == 0 else np.inf)
        rows.append(
            PerturbationRow(
                epsilon=float(eps), d_estimate=float(d_mean),
                std_error=float(se), z=float(z),
            )
        )
    return rows
