"""Solvers for the time coefficient of the CRRA value function v(t,x) = lam(t) x^p / p.

Three routes are provided:

* ``solve_no_consumption`` -- closed form lam(t) = h(T-t) e^{K (T-t)} for the
  bequest-only problem, cross-checked against backward RK4 integration of the
  linear terminal-value ODE it solves.
* ``picard_solve`` -- damped fixed-point iteration on the full nonlinear
  integral equation, discretized with composite trapezoid quadrature.
* ``mixture_ode_solve`` -- backward RK4 on the component ODE system available
  when the discount function is a finite exponential mixture.

Diagnostics: a priori bounds any solution must respect, and residuals of the
integral equation and of its differential form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import nnls

from .model import (
    CrraUtility,
    DiscountSpec,
    ExponentialMixtureDiscount,
    MarketParams,
    ParameterError,
    TimeGrid,
)

__all__ = [
    "NonConvergenceError",
    "StepFailureError",
    "FitTooCoarseError",
    "ValueCurve",
    "BoundsCertificate",
    "MixtureFitReport",
    "growth_constant",
    "solve_no_consumption",
    "picard_solve",
    "mixture_ode_solve",
    "fit_exponential_mixture",
    "a_priori_bounds",
    "residual_integral_equation",
    "residual_differential_form",
    "differential_form_rhs",
    "pde_residual_no_consumption",
    "theta_closed_form",
]


class NonConvergenceError(RuntimeError):
    """Picard iteration exhausted max_iter without meeting the tolerance."""

    def __init__(self, iterations: int, last_delta: float):
        self.iterations = iterations
        self.last_delta = last_delta
        super().__init__(
            f"fixed-point iteration did not converge after {iterations} sweeps "
            f"(last sup-norm change {last_delta:.3e})"
        )


class StepFailureError(RuntimeError):
    """Backward integration produced a nonpositive value; the grid is too coarse."""


class FitTooCoarseError(RuntimeError):
    """Exponential-mixture fit exceeded the requested error ceiling."""

    def __init__(self, sup_error: float, ceiling: float):
        self.sup_error = sup_error
        self.ceiling = ceiling
        super().__init__(
            f"mixture fit sup-error {sup_error:.3e} exceeds ceiling {ceiling:.3e}"
        )


@dataclass(frozen=True)
class ValueCurve:
    """The scalar coefficient lam(t) on a time grid, with lam(T) = 1.

    ``derivative`` is lam'(t) reconstructed from the differential form of the
    defining equation (analytic where a closed form exists). ``components``
    holds the per-rate component curves when produced by the mixture route.
    """

    grid: TimeGrid
    values: np.ndarray
    derivative: np.ndarray
    provenance: str
    components: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.grid.n_steps + 1
        if self.values.shape != (n,) or self.derivative.shape != (n,):
            raise ParameterError("value/derivative arrays must match the grid")
        if np.any(self.values <= 0):
            raise ParameterError("value curve must be strictly positive")
        if abs(self.values[-1] - 1.0) > 1e-14:
            raise ParameterError(
                f"terminal condition lam(T)=1 violated: {self.values[-1]!r}"
            )

    def consumption_rate(self, u: CrraUtility) -> np.ndarray:
        """Equilibrium consumption-to-wealth ratio lam(t)^(1/(p-1))."""
        return self.values ** (1.0 / (u.p - 1.0))


@dataclass(frozen=True)
class BoundsCertificate:
    """Solver-independent interval every solution must occupy at every node."""

    A: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (0 < self.lower < 1 < self.upper):
            raise ParameterError(
                f"bounds must bracket the terminal value 1: [{self.lower}, {self.upper}]"
            )

    def contains(self, values: np.ndarray, slack: float = 1e-12) -> bool:
        return bool(
            np.all(values >= self.lower - slack) and np.all(values <= self.upper + slack)
        )


@dataclass(frozen=True)
class MixtureFitReport:
    mixture: ExponentialMixtureDiscount
    sup_error_h: float
    sup_error_h_prime: float


def growth_constant(m: MarketParams, u: CrraUtility) -> float:
    """K = p (r + mu^2 / (2 (1-p) sigma^2)), the CRRA wealth-growth constant."""
    return u.p * (m.r + m.mu**2 / (2.0 * (1.0 - u.p) * m.sigma**2))


def _cumulative_trapezoid(y: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * dt)
    return out


def _kernel_and_weights(m, u, d, g):
    """Upper-triangular kernel H[i,j] = h(t_j - t_i) e^{K (t_j - t_i)} and
    row-wise trapezoid weights over [t_i, T]."""
    t = g.nodes
    n = g.n_steps
    K = growth_constant(m, u)
    tau = np.maximum(t[None, :] - t[:, None], 0.0)
    H = d.h(tau) * np.exp(K * tau)
    mask = np.triu(np.ones((n + 1, n + 1)))
    W = np.full((n + 1, n + 1), g.dt) * mask
    idx = np.arange(n + 1)
    W[idx, idx] = g.dt / 2.0
    W[:, n] = g.dt / 2.0
    W[n, n] = 0.0
    return H, W, mask


def _integral_equation_rhs(values, m, u, d, g, kernel=None):
    """Right-hand side of the fixed-point map at every grid node."""
    H, W, mask = kernel if kernel is not None else _kernel_and_weights(m, u, d, g)
    n = g.n_steps
    p = u.p
    q = p / (p - 1.0)
    cons = values ** (1.0 / (p - 1.0))
    C = _cumulative_trapezoid(p * cons, g.dt)
    E = np.exp(C[:, None] - C[None, :])
    M = H * (values**q)[None, :] * E * mask
    return np.sum(M * W, axis=1) + H[:, n] * E[:, n]


def solve_no_consumption(
    m: MarketParams, u: CrraUtility, d: DiscountSpec, g: TimeGrid
) -> ValueCurve:
    """Bequest-only coefficient lam(t) = h(T-t) e^{K (T-t)}.

    The closed form is asserted against backward RK4 integration of the
    terminal-value ODE lam' + [h'(T-t)/h(T-t) + K] lam = 0, lam(T) = 1,
    to 1e-8 in sup norm.
    """
    K = growth_constant(m, u)
    t = g.nodes
    tau = g.horizon - t
    lam = d.h(tau) * np.exp(K * tau)
    lam_prime = -(d.h_prime(tau) / d.h(tau) + K) * lam

    def rhs(ti, y):
        taui = g.horizon - ti
        return -(d.h_prime(taui) / d.h(taui) + K) * y

    numeric = _rk4_backward(rhs, t, 1.0)
    gap = float(np.max(np.abs(numeric - lam)))
    if gap > 1e-8:
        raise StepFailureError(
            f"closed form and RK4 integration disagree by {gap:.3e}; refine the grid"
        )
    # pin the terminal node exactly
    lam = lam.copy()
    lam[-1] = 1.0
    return ValueCurve(grid=g, values=lam, derivative=lam_prime, provenance="closed_form")


def _rk4_backward(rhs, t: np.ndarray, terminal) -> np.ndarray:
    """Classical RK4 from t[-1] down to t[0]; rhs(t, y) -> dy/dt."""
    y = np.asarray(terminal, dtype=float)
    out = np.empty((len(t),) + y.shape)
    out[-1] = y
    for i in range(len(t) - 1, 0, -1):
        hstep = t[i - 1] - t[i]
        ti = t[i]
        k1 = rhs(ti, y)
        k2 = rhs(ti + hstep / 2.0, y + hstep / 2.0 * k1)
        k3 = rhs(ti + hstep / 2.0, y + hstep / 2.0 * k2)
        k4 = rhs(ti + hstep, y + hstep * k3)
        y = y + hstep / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i - 1] = y
    return out


def picard_solve(
    m: MarketParams,
    u: CrraUtility,
    d: DiscountSpec,
    g: TimeGrid,
    tol: float = 1e-10,
    max_iter: int = 200,
    damping: float = 0.5,
    initial: Optional[np.ndarray] = None,
) -> ValueCurve:
    """Damped Picard iteration on the discretized integral equation.

    Iterates are clipped into the a priori bounds box, which stabilizes the
    raw map (the underlying theory proves existence and uniqueness, not
    contraction). Raises NonConvergenceError when max_iter is exhausted.
    """
    if tol <= 0 or max_iter < 1 or not (0 < damping <= 1):
        raise ParameterError("need tol > 0, max_iter >= 1, damping in (0, 1]")
    bounds = a_priori_bounds(m, u, d, g)
    kernel = _kernel_and_weights(m, u, d, g)
    lam = np.ones(g.n_steps + 1) if initial is None else np.asarray(initial, float).copy()
    lam = np.clip(lam, bounds.lower, bounds.upper)
    delta = np.inf
    for _ in range(max_iter):
        new = _integral_equation_rhs(lam, m, u, d, g, kernel=kernel)
        delta = float(np.max(np.abs(new - lam)))
        lam = (1.0 - damping) * lam + damping * new
        np.clip(lam, bounds.lower, bounds.upper, out=lam)
        if delta <= tol:
            break
    else:
        raise NonConvergenceError(max_iter, delta)
    lam[-1] = 1.0
    deriv = differential_form_rhs(lam, m, u, d, g)
    return ValueCurve(grid=g, values=lam, derivative=deriv, provenance="picard")


def mixture_ode_solve(
    m: MarketParams, u: CrraUtility, d: ExponentialMixtureDiscount, g: TimeGrid
) -> ValueCurve:
    """Backward RK4 on the component system for an exponential-mixture discount.

    Each component lam_n obeys

        lam_n'(t) = (rho_n - K + p lam(t)^(1/(p-1))) lam_n(t) - lam(t)^(p/(p-1)),
        lam_n(T) = 1,   lam(t) = sum_n beta_n lam_n(t).

    This is the system obtained by differentiating the component integral
    equations directly; it degenerates for a single term to the autonomous
    ODE lam' = (rho - K) lam + (p-1) lam^(p/(p-1)).
    """
    if not isinstance(d, ExponentialMixtureDiscount):
        raise ParameterError("mixture_ode_solve requires an exponential-mixture discount")
    K = growth_constant(m, u)
    p = u.p
    q = p / (p - 1.0)
    betas = np.array(d.betas)
    rhos = np.array(d.rhos)

    def rhs(_t, y):
        lam = betas @ y
        if lam <= 0 or np.any(y <= 0):
            raise StepFailureError(
                "component curve became nonpositive during integration; refine the grid"
            )
        return (rhos - K + p * lam ** (1.0 / (p - 1.0))) * y - lam**q

    comps = _rk4_backward(rhs, g.nodes, np.ones(len(betas)))
    comps = comps.T  # (n_terms, n_nodes)
    lam = betas @ comps
    if np.any(lam <= 0) or np.any(comps <= 0):
        raise StepFailureError("mixture solve produced nonpositive values")
    lam[-1] = 1.0
    cons = lam ** (1.0 / (p - 1.0))
    comp_deriv = (rhos[:, None] - K + p * cons[None, :]) * comps - (lam**q)[None, :]
    deriv = betas @ comp_deriv
    return ValueCurve(
        grid=g, values=lam, derivative=deriv, provenance="mixture_ode", components=comps
    )


def theta_closed_form(
    m: MarketParams, u: CrraUtility, rho: float, g: TimeGrid
) -> ValueCurve:
    """Closed form for a single-exponential discount in the full problem.

    With a = (rho - K)/(1-p) the autonomous ODE lam' = (rho-K) lam +
    (p-1) lam^(p/(p-1)) has the solution lam = theta^(1-p),
    theta(t) = e^{-a (T-t)} + (1 - e^{-a (T-t)})/a, which reduces to
    theta = 1 + (T-t) as a -> 0.
    """
    K = growth_constant(m, u)
    p = u.p
    a = (rho - K) / (1.0 - p)
    tau = g.horizon - g.nodes
    if abs(a) < 1e-14:
        theta = 1.0 + tau
    else:
        theta = np.exp(-a * tau) + (-np.expm1(-a * tau)) / a
    lam = theta ** (1.0 - p)
    lam[-1] = 1.0
    deriv = (rho - K) * lam + (p - 1.0) * lam ** (p / (p - 1.0))
    return ValueCurve(grid=g, values=lam, derivative=deriv, provenance="closed_form")


def fit_exponential_mixture(
    d: DiscountSpec,
    n_terms: int,
    rho_grid,
    g: TimeGrid,
    max_sup_error: Optional[float] = None,
) -> MixtureFitReport:
    """Approximate h and h' simultaneously by an n_terms exponential sum.

    Nonnegative least squares over the candidate-rate pool (with the
    weights-sum-to-one constraint appended as a heavily weighted equation),
    restriction to the n_terms largest weights, a second restricted solve,
    and a final projection onto the simplex. Reports achieved sup errors on
    both h and h'.
    """
    rho_grid = np.asarray(rho_grid, dtype=float)
    if n_terms < 1 or len(rho_grid) < n_terms:
        raise ParameterError("need n_terms >= 1 and at least n_terms candidate rates")
    if np.any(rho_grid < 0):
        raise ParameterError("candidate rates must be nonnegative")
    t = g.nodes
    hv = d.h(t)
    hpv = d.h_prime(t)
    sum_weight = 1e6

    def design(rates):
        eh = np.exp(-np.outer(t, rates))
        ehp = -rates[None, :] * eh
        A = np.vstack([eh, ehp, sum_weight * np.ones((1, len(rates)))])
        b = np.concatenate([hv, hpv, [sum_weight]])
        return A, b, eh, ehp

    A, b, _, _ = design(rho_grid)
    beta, _ = nnls(A, b)
    support = np.sort(np.argsort(beta)[::-1][:n_terms])
    rates = rho_grid[support]
    A2, b2, eh2, ehp2 = design(rates)
    beta2, _ = nnls(A2, b2)
    beta2 = np.clip(beta2, 0.0, None)
    total = beta2.sum()
    if total <= 0:
        raise FitTooCoarseError(np.inf, max_sup_error if max_sup_error else np.inf)
    beta2 /= total
    keep = beta2 > 0
    beta2, rates = beta2[keep], rates[keep]
    eh2, ehp2 = eh2[:, keep], ehp2[:, keep]
    err_h = float(np.max(np.abs(eh2 @ beta2 - hv)))
    err_hp = float(np.max(np.abs(ehp2 @ beta2 - hpv)))
    if max_sup_error is not None and err_h + err_hp > max_sup_error:
        raise FitTooCoarseError(err_h + err_hp, max_sup_error)
    mix = ExponentialMixtureDiscount(betas=tuple(beta2), rhos=tuple(rates))
    return MixtureFitReport(mixture=mix, sup_error_h=err_h, sup_error_h_prime=err_hp)


def a_priori_bounds(
    m: MarketParams, u: CrraUtility, d: DiscountSpec, g: TimeGrid
) -> BoundsCertificate:
    """Grid instantiation of the constant A and the resulting bounds box.

    A = sup_t |h'(T-t)/h(T-t) + K| + sup_{t<=s<=T} |d/dt log(h(s-t)/h(T-t))|,
    a sufficient (not minimal) choice. The bounds are monotone in A, so any
    upper estimate of the two suprema is valid.
    """
    K = growth_constant(m, u)
    p = u.p
    t = g.nodes
    tau = g.horizon - t
    rate_T = d.h_prime(tau) / d.h(tau)
    term1 = float(np.max(np.abs(rate_T + K)))
    # d/dt log(h(s-t)/h(T-t)) = -h'(s-t)/h(s-t) + h'(T-t)/h(T-t), for s >= t
    diff = np.maximum(t[None, :] - t[:, None], 0.0)
    rate_st = d.h_prime(diff) / d.h(diff)
    term2 = float(np.max(np.abs(-rate_st + rate_T[:, None])))
    A = max(term1 + term2, 1e-8)
    lower = float(np.exp(-A * g.horizon))
    # Gronwall comparison for theta = lam^{1/(1-p)}: theta' >= -(A/(1-p)) theta - 1
    # with theta(T) = 1 integrates to theta(t) <= (c+1) e^{A (T-t)/(1-p)} - c,
    # c = (1-p)/A, hence the upper envelope below (which degenerates to 1 as
    # T -> 0, as it must since lam(T) = 1).
    c = (1.0 - p) / A
    upper = float(((c + 1.0) * np.exp(A * g.horizon / (1.0 - p)) - c) ** (1.0 - p))
    return BoundsCertificate(A=A, lower=lower, upper=upper)


def residual_integral_equation(
    sol: ValueCurve, m: MarketParams, u: CrraUtility, d: DiscountSpec
) -> float:
    """Sup-norm gap between lam and the integral-equation right-hand side."""
    rhs = _integral_equation_rhs(sol.values, m, u, d, sol.grid)
    return float(np.max(np.abs(rhs - sol.values)))


def differential_form_rhs(
    values: np.ndarray, m: MarketParams, u: CrraUtility, d: DiscountSpec, g: TimeGrid
) -> np.ndarray:
    """lam'(t) implied by the differential form of the integral equation:

        lam' = -[h'(T-t)/h(T-t) + K] lam + (p-1) lam^(p/(p-1))
               + int_t^T [-h'(s-t) + h(s-t) h'(T-t)/h(T-t)] e^{K (s-t)}
                 lam(s)^(p/(p-1)) exp(-int_t^s p lam^(1/(p-1))) ds.

    The kernel -h'(s-t) + h(s-t) h'(T-t)/h(T-t) vanishes identically for
    exponential discounting, leaving the autonomous local ODE.
    """
    t = g.nodes
    n = g.n_steps
    K = growth_constant(m, u)
    p = u.p
    q = p / (p - 1.0)
    tau = g.horizon - t
    rate_T = d.h_prime(tau) / d.h(tau)
    local = -(rate_T + K) * values + (p - 1.0) * values**q
    diff = np.maximum(t[None, :] - t[:, None], 0.0)
    kern = (-d.h_prime(diff) + d.h(diff) * rate_T[:, None]) * np.exp(K * diff)
    cons = values ** (1.0 / (p - 1.0))
    C = _cumulative_trapezoid(p * cons, g.dt)
    E = np.exp(C[:, None] - C[None, :])
    mask = np.triu(np.ones((n + 1, n + 1)))
    W = np.full((n + 1, n + 1), g.dt) * mask
    idx = np.arange(n + 1)
    W[idx, idx] = g.dt / 2.0
    W[:, n] = g.dt / 2.0
    W[n, n] = 0.0
    integral = np.sum(kern * (values**q)[None, :] * E * mask * W, axis=1)
    return local + integral


def residual_differential_form(
    sol: ValueCurve, m: MarketParams, u: CrraUtility, d: DiscountSpec
) -> float:
    """Sup-norm, over interior nodes, of lam' (central differences) minus the
    differential-form right-hand side."""
    g = sol.grid
    if g.n_steps < 3:
        raise ParameterError("need at least 4 grid nodes for the residual")
    lam = sol.values
    rhs = differential_form_rhs(lam, m, u, d, g)
    dlam = (lam[2:] - lam[:-2]) / (2.0 * g.dt)
    return float(np.max(np.abs(dlam - rhs[1:-1])))


def pde_residual_no_consumption(
    sol: ValueCurve, m: MarketParams, u: CrraUtility, d: DiscountSpec, x=1.0
) -> float:
    """Residual of the bequest-only value PDE under v = lam U_p.

    v_t + (h'(T-t)/h(T-t)) v + r x v_x - (mu^2 / 2 sigma^2) v_x^2 / v_xx = 0
    collapses to (lam' + [h'(T-t)/h(T-t) + K] lam) x^p / p; uses the stored
    derivative.
    """
    g = sol.grid
    tau = g.horizon - g.nodes
    rate = d.h_prime(tau) / d.h(tau)
    K = growth_constant(m, u)
    core = sol.derivative + (rate + K) * sol.values
    x = np.asarray(x, dtype=float)
    scale = np.max(np.abs(x**u.p / u.p))
    return float(np.max(np.abs(core)) * scale)
