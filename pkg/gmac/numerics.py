"""
Shared numerical kernels: the J-function and its inverse, Gaussian-mixture
densities and entropy, composite quadrature, and a dense LP front end.
"""
import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special, stats

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import J_METHOD, QUAD_ABS_TOL, QUAD_PANELS, QUAD_ORDER, QUAD_MAX_DOUBLINGS
from gmac.errors import DomainError, NumericalError, LpUnboundedError

logger = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)

# Closed-form J approximation constants
H1, H2, H3 = 0.3073, 0.8935, 1.1064

# Beyond this sigma the exact J is 1.0 in double precision
_EXACT_SATURATION = 40.0


def _as_output(value, scalar):
    return float(value) if scalar else value


# --- J-function -------------------------------------------------------------

def _j_closed_form(sigma):
    return (1.0 - np.power(2.0, -H1 * np.power(sigma, 2.0 * H2))) ** H3


def _j_inverse_closed_form(i):
    inner = -np.log2(1.0 - np.power(i, 1.0 / H3)) / H1
    return np.power(inner, 1.0 / (2.0 * H2))


def _j_piecewise(sigma):
    low = -0.0421061 * sigma**3 + 0.209252 * sigma**2 - 0.00640081 * sigma
    mid = 1.0 - np.exp(0.00181491 * sigma**3 - 0.142675 * sigma**2 - 0.0822054 * sigma + 0.0549608)
    return np.where(sigma <= 1.6363, low, np.where(sigma < 10.0, mid, 1.0))


def _j_inverse_piecewise(i):
    with np.errstate(divide="ignore", invalid="ignore"):
        low = 1.09542 * i**2 + 0.214217 * i + 2.33727 * np.sqrt(i)
        high = -0.706692 * np.log(0.386013 * (1.0 - i)) + 1.75017 * i
    return np.where(i <= 0.3646, low, high)


def _j_exact_scalar(sigma):
    if sigma == 0.0:
        return 0.0
    if sigma >= _EXACT_SATURATION:
        return 1.0
    mean = sigma * sigma / 2.0

    def integrand(l):
        density = math.exp(-((l - mean) ** 2) / (2.0 * sigma * sigma)) / (math.sqrt(2.0 * math.pi) * sigma)
        return density * np.logaddexp(0.0, -l) * LOG2E

    value, err = integrate.quad(integrand, mean - 12.0 * sigma, mean + 12.0 * sigma,
                                points=[0.0] if abs(mean) < 12.0 * sigma else None,
                                epsabs=1e-12, epsrel=1e-10, limit=200)
    return 1.0 - value


def _j_exact(sigma):
    return np.vectorize(_j_exact_scalar, otypes=[float])(sigma)


def _j_inverse_exact(i):
    def solve(target):
        if target == 0.0:
            return 0.0
        return optimize.brentq(lambda s: _j_exact_scalar(s) - target, 0.0, _EXACT_SATURATION,
                               xtol=1e-12, rtol=1e-12)
    return np.vectorize(solve, otypes=[float])(i)


_J_FUNCTIONS = {
    "closed_form": (_j_closed_form, _j_inverse_closed_form),
    "piecewise": (_j_piecewise, _j_inverse_piecewise),
    "exact": (_j_exact, _j_inverse_exact),
}


def _j_pair(method):
    try:
        return _J_FUNCTIONS[method or J_METHOD]
    except KeyError:
        raise DomainError(f"Unknown J-function method: {method}") from None


def j_function(sigma, method=None):
    """
    Mutual information between an equiprobable bit and a consistent Gaussian
    LLR N(sigma^2/2, sigma^2).

    Args:
        sigma (float or ndarray): LLR standard deviation, >= 0
        method (str, optional): closed_form, piecewise or exact

    Returns:
        float or ndarray: information in [0, 1]
    """
    scalar = np.ndim(sigma) == 0
    sigma = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(sigma)) or np.any(sigma < 0):
        raise DomainError("J-function requires finite sigma >= 0")
    forward, _ = _j_pair(method)
    value = np.clip(forward(sigma), 0.0, 1.0)
    return _as_output(value, scalar)


def j_inverse(i, method=None):
    """
    Inverse of the J-function on [0, 1).

    Args:
        i (float or ndarray): mutual information, 0 <= i < 1
        method (str, optional): closed_form, piecewise or exact

    Returns:
        float or ndarray: sigma >= 0
    """
    scalar = np.ndim(i) == 0
    i = np.asarray(i, dtype=float)
    if not np.all(np.isfinite(i)) or np.any(i < 0) or np.any(i >= 1.0):
        raise DomainError("J-inverse requires 0 <= i < 1 (sigma is unbounded at i = 1)")
    _, inverse = _j_pair(method)
    value = np.maximum(inverse(i), 0.0)
    return _as_output(value, scalar)


# --- Gaussian mixtures --------------------------------------------------------

@dataclass(frozen=True)
class GaussianMixture:
    """Gaussian mixture with a common component variance."""
    means: np.ndarray
    weights: np.ndarray
    variance: float

    def __post_init__(self):
        means = np.atleast_1d(np.asarray(self.means, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if means.size == 0 or means.shape != weights.shape:
            raise DomainError("Mixture needs at least one component and one weight per mean")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"Mixture weights must be nonnegative and sum to 1 (sum={weights.sum()!r})")
        if not self.variance > 0:
            raise DomainError("Mixture variance must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "variance", float(self.variance))

    @classmethod
    def uniform(cls, means, variance):
        means = np.atleast_1d(np.asarray(means, dtype=float))
        return cls(means, np.full(means.size, 1.0 / means.size), variance)

    @property
    def std(self):
        return math.sqrt(self.variance)


def mixture_logpdf(mix: GaussianMixture, y):
    """Natural-log density of the mixture at y (vectorized)."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(mix.weights)
    sq = (y[..., None] - mix.means) ** 2
    log_terms = log_w - sq / (2.0 * mix.variance) - 0.5 * math.log(2.0 * math.pi * mix.variance)
    return special.logsumexp(log_terms, axis=-1)


def mixture_pdf(mix: GaussianMixture, y):
    """Density of the mixture at y."""
    return np.exp(mixture_logpdf(mix, y))


# --- Quadrature ----------------------------------------------------------------

@lru_cache(maxsize=32)
def _legendre_rule(order):
    return np.polynomial.legendre.leggauss(order)


def composite_legendre(a, b, panels, order=QUAD_ORDER):
    """
    Composite Gauss-Legendre rule on [a, b].

    Returns:
        tuple: (nodes, weights) as flat arrays of length panels * order
    """
    if not b > a or panels < 1:
        raise DomainError("Composite rule needs b > a and at least one panel")
    x, w = _legendre_rule(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def mixture_entropy(mix: GaussianMixture, abs_tol=QUAD_ABS_TOL):
    """
    Differential entropy h(Y) in bits of a Gaussian mixture.

    Integrates -p log2 p with a composite Gauss-Legendre rule over
    [min mean - 10 std, max mean + 10 std], doubling the panel count until
    two successive estimates agree within abs_tol.

    Raises:
        NumericalError: if the estimates do not settle
    """
    std = mix.std
    a = mix.means.min() - 10.0 * std
    b = mix.means.max() + 10.0 * std
    panels = max(QUAD_PANELS, int(math.ceil((b - a) / std)))

    def estimate(n_panels):
        nodes, weights = composite_legendre(a, b, n_panels)
        logp = mixture_logpdf(mix, nodes)
        return -float(np.sum(weights * np.exp(logp) * logp)) * LOG2E

    previous = estimate(panels)
    history = [previous]
    for _ in range(QUAD_MAX_DOUBLINGS):
        panels *= 2
        current = estimate(panels)
        history.append(current)
        if abs(current - previous) <= abs_tol:
            return current
        previous = current
    raise NumericalError(
        "Mixture entropy quadrature did not converge",
        diagnostics={"estimates": history, "panels": panels, "range": (a, b), "abs_tol": abs_tol},
    )


# --- Linear programming ----------------------------------------------------------

@dataclass
class LinearProgram:
    """maximize c.x subject to A_ub x <= b_ub, A_eq x = b_eq, x >= lower."""
    objective: np.ndarray
    a_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        n = self.objective.size
        for rows, rhs, label in ((self.a_ub, self.b_ub, "inequality"), (self.a_eq, self.b_eq, "equality")):
            if rows is None:
                continue
            rows = np.atleast_2d(np.asarray(rows, dtype=float))
            if rows.shape[1] != n or rhs is None or len(rhs) != rows.shape[0]:
                raise DomainError(f"Malformed {label} constraints: expected {n} columns and one rhs per row")
        if self.lower is None:
            self.lower = np.zeros(n)
        elif len(self.lower) != n:
            raise DomainError("Lower bounds must have one entry per variable")

    @property
    def num_variables(self):
        return self.objective.size


@dataclass
class LpResult:
    status: str                      # "optimal" or "infeasible"
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    slack: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def feasible(self):
        return self.status == "optimal"


def lp_solve(lp: LinearProgram, tol=1e-9):
    """
    Solve a dense LP with the HiGHS dual simplex, which returns vertex solutions.

    Returns:
        LpResult: optimal solution or an infeasible verdict

    Raises:
        LpUnboundedError: objective unbounded above
        NumericalError: solver stopped for any other reason
    """
    a_ub = None if lp.a_ub is None else np.atleast_2d(lp.a_ub)
    a_eq = None if lp.a_eq is None else np.atleast_2d(lp.a_eq)
    bounds = [(float(lo), None) for lo in lp.lower]
    res = optimize.linprog(
        -lp.objective, A_ub=a_ub, b_ub=lp.b_ub, A_eq=a_eq, b_eq=lp.b_eq,
        bounds=bounds, method="highs-ds",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
    )
    if res.status == 0:
        return LpResult("optimal", res.x, float(lp.objective @ res.x), getattr(res, "slack", None))
    if res.status == 2:
        logger.debug("LP infeasible: %s", res.message)
        return LpResult("infeasible")
    if res.status == 3:
        raise LpUnboundedError(f"LP is unbounded: {res.message}")
    raise NumericalError(f"LP solver stopped: {res.message}", diagnostics={"status": res.status})


# --- Statistics ----------------------------------------------------------------------

def wilson_interval(errors, trials, confidence=0.95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    z = stats.norm.ppf(1.0 - (1.0 - confidence) / 2.0)
    p = errors / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2.0 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    low = 0.0 if errors <= 0 else max(0.0, centre - half)
    high = 1.0 if errors >= trials else min(1.0, centre + half)
    return low, high
