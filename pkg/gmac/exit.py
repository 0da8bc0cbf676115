"""
EXIT analysis of the joint two-user, per-level BP decoder under the Gaussian
approximation.

Message flow per user and iteration: the state node turns the channel output
and the partner's variable-to-state messages into state-to-variable messages
(I_SV); variable nodes combine them with check messages (I_VC, I_VS); check
nodes answer (I_CV).

The state-to-variable LLR is a mixture over the interfering levels and is far
from Gaussian on the upper levels, so by default I_SV is the mutual information
of that LLR integrated directly. The mean-matched form
1/2 J(sqrt(2 F00)) + 1/2 J(sqrt(2 F01)) is kept as the "mean" model.
"""
import csv
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (SNR_CONVENTION, SV_MODEL, EXIT_MAX_ITERS, EXIT_CONVERGED, SV_CURVE_POINTS,
                    QUAD_PANELS, QUAD_MAX_DOUBLINGS)
from gmac.errors import DomainError, NumericalError
from gmac.models import DegreeDistribution
from gmac.numerics import j_function, j_inverse, composite_legendre, GaussianMixture, mixture_pdf
from gmac.constellation import decompose_levels, level_atom_table, snr_to_noise_var

logger = logging.getLogger(__name__)

INFO_CLIP = 1.0 - 1e-12
F_REL_TOL = 1e-5
SV_MODELS = ("information", "mean")


def _clip(i):
    return np.clip(i, 0.0, INFO_CLIP)


# --- Transfer functions ------------------------------------------------------------

def vc_terms(degrees, i_cv, i_sv, method=None):
    """
    Per-degree variable-to-check information J(sqrt((j-1) s_cv^2 + s_sv^2)).

    Returns:
        ndarray: shape broadcast(i_cv, i_sv) + (len(degrees),)
    """
    degrees = np.asarray(degrees, dtype=float)
    s_cv = np.asarray(j_inverse(_clip(i_cv), method))[..., None]
    s_sv = np.asarray(j_inverse(_clip(i_sv), method))[..., None]
    return j_function(np.sqrt((degrees - 1.0) * s_cv ** 2 + s_sv ** 2), method)


def exit_vc(dd: DegreeDistribution, i_cv, i_sv, method=None):
    """Variable-to-check information averaged over edge degrees."""
    value = vc_terms(dd.degrees, i_cv, i_sv, method) @ dd.fractions
    return float(value) if np.ndim(value) == 0 else value


def exit_vs(dd: DegreeDistribution, i_cv, method=None):
    """Variable-to-state information; one message per node, so node fractions weight it."""
    node = dd.node_perspective()
    degrees = np.array(list(node), dtype=float)
    weights = np.array(list(node.values()))
    s_cv = np.asarray(j_inverse(_clip(i_cv), method))[..., None]
    value = j_function(np.sqrt(degrees) * s_cv, method) @ weights
    return float(value) if np.ndim(value) == 0 else value


def exit_cv(d_c, i_vc, method=None):
    """Check-to-variable information for a concentrated check degree."""
    if d_c < 2:
        raise DomainError("Check degree must be at least 2")
    s = j_inverse(_clip(1.0 - np.asarray(i_vc, dtype=float)), method)
    return 1.0 - j_function(math.sqrt(d_c - 1) * np.asarray(s), method)


def inverse_cv(d_c, i_cv, method=None):
    """I_VC needed for the checks to deliver i_cv: the inverted check curve."""
    if d_c < 2:
        raise DomainError("Check degree must be at least 2")
    s = j_inverse(_clip(1.0 - np.asarray(i_cv, dtype=float)), method)
    return 1.0 - j_function(np.asarray(s) / math.sqrt(d_c - 1), method)


def coupling_mean(i_vs_other, method=None):
    """Mean m of the partner's variable-to-state LLRs, m = J^-1(I_VS)^2 / 2."""
    return 0.5 * float(j_inverse(float(_clip(i_vs_other)), method)) ** 2


# --- Channel context and state-node integrals --------------------------------------------

class LevelChannelContext:
    """
    One bit-level of the two-user channel with exact knowledge of the levels
    decoded earlier in the SIC order. Caches state-node curves per user.

    Args:
        c1, c2 (UserConstellation): constellation pair
        level (int): level index, 1-based
        noise_var (float): noise variance
        order (sequence, optional): SIC decoding order of levels, natural by default
        method (str, optional): J-function variant
        sv_model (str, optional): "information" or "mean", config.SV_MODEL by default
    """

    def __init__(self, c1, c2, level, noise_var, order=None, method=None, sv_model=None):
        if c1.L != c2.L:
            raise DomainError("Both users need the same number of levels")
        if not 1 <= level <= c1.L:
            raise DomainError(f"Level must lie within 1..{c1.L}")
        if not noise_var > 0:
            raise DomainError("Noise variance must be positive")
        self.c1, self.c2 = c1, c2
        self.level = level
        self.noise_var = float(noise_var)
        self.order = tuple(order) if order is not None else tuple(range(1, c1.L + 1))
        if sorted(self.order) != list(range(1, c1.L + 1)):
            raise DomainError("Decoding order must be a permutation of the levels")
        self.method = method
        self.sv_model = sv_model or SV_MODEL
        if self.sv_model not in SV_MODELS:
            raise DomainError(f"Unknown state-node model {self.sv_model!r}; expected one of {SV_MODELS}")
        self.d1, self.d2 = decompose_levels(c1), decompose_levels(c2)
        self.known_levels = self.order[:self.order.index(level)]
        self.atoms = level_atom_table(self.d1, self.d2, level, self.known_levels)
        self._curves = {}
        self._lock = threading.Lock()

    @classmethod
    def at_snr(cls, c1, c2, level, snr_db, convention=None, order=None, method=None, sv_model=None):
        return cls(c1, c2, level, snr_to_noise_var(snr_db, convention or SNR_CONVENTION), order, method,
                   sv_model)

    @property
    def realizations(self):
        return self.atoms.shape[0]

    def user_atoms(self, target_user):
        """Atom table indexed [realization, own bit, other bit, atom]."""
        if target_user not in (1, 2):
            raise DomainError("target_user must be 1 or 2")
        return self.atoms if target_user == 1 else np.swapaxes(self.atoms, 1, 2)


def _log_likelihoods(atoms, y, noise_var):
    """log P(y | atoms) up to a constant shared by all atom sets."""
    sq = (y[:, None] - atoms[None, :]) ** 2
    return np.logaddexp.reduce(-sq / (2.0 * noise_var), axis=1) - math.log(atoms.size)


def _state_llr_grid(atoms_r, b_other, m, noise_var, y_panels, v_panels):
    """
    Quadrature weights and state-to-variable LLRs f(y, vs) given own bit 0.

    Returns:
        tuple: (weights, llr) of equal shape, (ny,) when m = 0 else (ny, nv)
    """
    std = math.sqrt(noise_var)
    own0 = atoms_r[0, b_other]
    a, b = own0.min() - 8.0 * std, own0.max() + 8.0 * std
    y, wy = composite_legendre(a, b, y_panels)
    py = mixture_pdf(GaussianMixture.uniform(own0, noise_var), y) * wy
    a0 = _log_likelihoods(atoms_r[0, 0], y, noise_var)
    b0 = _log_likelihoods(atoms_r[0, 1], y, noise_var)
    a1 = _log_likelihoods(atoms_r[1, 0], y, noise_var)
    b1 = _log_likelihoods(atoms_r[1, 1], y, noise_var)
    if m <= 1e-12:
        return py, np.logaddexp(a0, b0) - np.logaddexp(a1, b1)
    sign = 1.0 if b_other == 0 else -1.0
    spread = math.sqrt(2.0 * m)
    v, wv = composite_legendre(sign * m - 8.0 * spread, sign * m + 8.0 * spread, v_panels)
    pv = np.exp(-((v - sign * m) ** 2) / (4.0 * m)) / math.sqrt(4.0 * math.pi * m) * wv
    vv = v[None, :]
    llr = np.logaddexp(a0[:, None] + vv, b0[:, None]) - np.logaddexp(a1[:, None] + vv, b1[:, None])
    return py[:, None] * pv[None, :], llr


def _llr_mean(weights, llr):
    return float(np.sum(weights * llr))


def _llr_information(weights, llr):
    return 1.0 - float(np.sum(weights * np.logaddexp(0.0, -llr))) / math.log(2.0)


def _state_expectation(ctx: LevelChannelContext, target_user, b_other, m, realization, statistic):
    """Per-realization expectation of a state-LLR statistic with panel doubling."""
    if m < 0:
        raise DomainError("m must be nonnegative")
    if b_other not in (0, 1):
        raise DomainError("b_other must be 0 or 1")
    atoms = ctx.user_atoms(target_user)
    rows = range(atoms.shape[0]) if realization is None else [realization]
    std = math.sqrt(ctx.noise_var)
    values = []
    for r in rows:
        width = np.ptp(atoms[r, 0, b_other]) + 16.0 * std
        y_panels = max(QUAD_PANELS, int(math.ceil(width / std)))
        v_panels = QUAD_PANELS
        previous = statistic(*_state_llr_grid(atoms[r], b_other, m, ctx.noise_var, y_panels, v_panels))
        history = [previous]
        for _ in range(QUAD_MAX_DOUBLINGS):
            y_panels, v_panels = 2 * y_panels, 2 * v_panels
            current = statistic(*_state_llr_grid(atoms[r], b_other, m, ctx.noise_var, y_panels, v_panels))
            history.append(current)
            if abs(current - previous) <= F_REL_TOL * max(1.0, abs(current)):
                break
            previous = current
        else:
            raise NumericalError("State-node integral did not converge",
                                 diagnostics={"estimates": history, "m": m, "realization": r})
        values.append(current)
    return float(np.mean(values))


def f_means(ctx: LevelChannelContext, target_user, b_other, m, realization=None):
    """
    Mean of the state-to-variable LLR toward target_user given its own bit 0
    and the partner's bit b_other, with partner messages N(+-m, 2m).

    Evaluated by tensor Gauss-Legendre quadrature over (y, vs); the panel
    counts double until two estimates agree.

    Args:
        realization (int, optional): known-bit realization; averaged over all when None

    Raises:
        NumericalError: if the quadrature does not settle
    """
    return _state_expectation(ctx, target_user, b_other, m, realization, _llr_mean)


def f_information(ctx: LevelChannelContext, target_user, b_other, m, realization=None):
    """
    1 - E[log2(1 + exp(-f))] of the state-to-variable LLR f under the same
    conditioning as f_means.

    f is the exact posterior LLR of the own bit given y and a consistent
    Gaussian partner message, so averaging over b_other and the known-bit
    realizations gives I(U; Y, VS). Flipping every bit negates the atoms,
    which makes own bit 0 representative.
    """
    return _state_expectation(ctx, target_user, b_other, m, realization, _llr_information)


def exit_sv(ctx: LevelChannelContext, target_user, m):
    """
    State-to-variable information toward target_user, averaged over
    partner bits (1/2 each) and known-bit realizations.

    "information" model: the mutual information of the state LLR.
    "mean" model: 1/2 J(sqrt(2 F00)) + 1/2 J(sqrt(2 F01)).
    """
    total = 0.0
    for r in range(ctx.realizations):
        for b_other in (0, 1):
            if ctx.sv_model == "mean":
                f = max(0.0, f_means(ctx, target_user, b_other, m, realization=r))
                total += 0.5 * j_function(math.sqrt(2.0 * f), ctx.method)
            else:
                total += 0.5 * min(1.0, max(0.0, f_information(ctx, target_user, b_other, m, realization=r)))
    return total / ctx.realizations


def _sv_grid(points):
    t = np.linspace(0.0, 1.0, points)
    return (1.0 - (1.0 - t) ** 3) * (1.0 - 1e-6)


def sv_curve(ctx: LevelChannelContext, target_user, points=SV_CURVE_POINTS):
    """
    I_SV toward target_user tabulated against the partner's I_VS.

    Returns:
        tuple: (i_vs grid, i_sv values), non-decreasing
    """
    key = (target_user, points)
    with ctx._lock:
        cached = ctx._curves.get(key)
    if cached is not None:
        return cached
    grid = _sv_grid(points)
    values = np.array([exit_sv(ctx, target_user, coupling_mean(x, ctx.method)) for x in grid])
    curve = (grid, np.maximum.accumulate(np.clip(values, 0.0, 1.0)))
    with ctx._lock:
        ctx._curves[key] = curve
    logger.debug("State curve level %d user %d: I_SV from %.4f to %.4f",
                 ctx.level, target_user, curve[1][0], curve[1][-1])
    return curve


def sv_lookup(ctx, target_user, i_vs_other):
    grid, values = sv_curve(ctx, target_user)
    return float(np.interp(i_vs_other, grid, values))


# --- Joint trajectory -------------------------------------------------------------------

@dataclass(frozen=True)
class ExitState:
    """Mutual informations of both users after one iteration; index 0 is user 1."""
    iteration: int
    i_cv: Tuple[float, float]
    i_vc: Tuple[float, float]
    i_vs: Tuple[float, float]
    i_sv: Tuple[float, float]

    def rows(self):
        return [(self.iteration, k + 1, self.i_cv[k], self.i_vc[k], self.i_vs[k], self.i_sv[k])
                for k in (0, 1)]


@dataclass
class Trajectory:
    converged: bool
    trace: List[ExitState] = field(default_factory=list)

    def __iter__(self):
        return iter((self.converged, self.trace))

    @property
    def final(self):
        return self.trace[-1] if self.trace else None


def joint_trajectory(ctx: LevelChannelContext, lambda1: DegreeDistribution, lambda2: DegreeDistribution,
                     dc1=None, dc2=None, max_iters=EXIT_MAX_ITERS, threshold=EXIT_CONVERGED):
    """
    Iterate the coupled EXIT recursion from zero information.

    Within a user the updates run in message order: I_SV from the partner's
    I_VS, then I_VC, I_CV, and I_VS from the fresh I_CV. The two users update
    from the same previous state (Jacobi across users, as the flooding
    decoder does). Converged when both users' I_VC reach threshold.

    Returns:
        Trajectory: unpacks as (converged, trace)
    """
    dds = (lambda1, lambda2)
    dcs = (dc1 or lambda1.d_c, dc2 or lambda2.d_c)
    icv, ivs = [0.0, 0.0], [0.0, 0.0]
    trace = []
    for iteration in range(1, max_iters + 1):
        new_cv, new_vc, new_vs, new_sv = [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]
        for k in (0, 1):
            new_sv[k] = sv_lookup(ctx, k + 1, ivs[1 - k])
            new_vc[k] = float(exit_vc(dds[k], icv[k], new_sv[k], ctx.method))
            new_cv[k] = float(exit_cv(dcs[k], new_vc[k], ctx.method))
            new_vs[k] = float(exit_vs(dds[k], new_cv[k], ctx.method))
        state = ExitState(iteration, tuple(new_cv), tuple(new_vc), tuple(new_vs), tuple(new_sv))
        trace.append(state)
        if min(new_vc) >= threshold:
            return Trajectory(True, trace)
        change = max(abs(a - b) for a, b in zip(new_cv + new_vs, icv + ivs))
        icv, ivs = new_cv, new_vs
        if iteration > 1 and change < 1e-10:
            break
    return Trajectory(False, trace)


def state_profile(trace: Sequence[ExitState], user):
    """
    I_SV seen by user (1-based) as a function of its own I_CV along a trace.

    I_SV of iteration t is paired with I_CV of iteration t-1, the value it
    meets at the variable nodes. Returns non-decreasing (i_cv, i_sv) arrays.
    """
    k = user - 1
    icv = [0.0] + [s.i_cv[k] for s in trace[:-1]]
    isv = [s.i_sv[k] for s in trace]
    icv = np.maximum.accumulate(np.array(icv))
    isv = np.maximum.accumulate(np.array(isv))
    return icv, isv


def exit_chart_curves(dd: DegreeDistribution, grid=None, i_sv=0.0, method=None):
    """
    Variable-node curve and inverted check-node curve on a grid of I_CV.

    Args:
        i_sv (float or ndarray): state information per grid point
    """
    grid = np.linspace(0.0, 0.99, 100) if grid is None else np.asarray(grid, dtype=float)
    i_sv = np.broadcast_to(np.asarray(i_sv, dtype=float), grid.shape)
    return {
        "i_cv": grid,
        "vc": exit_vc(dd, grid, i_sv, method),
        "cv_inverse": inverse_cv(dd.d_c, grid, method),
    }


def decoding_threshold(c1, c2, level, lambda1, lambda2, lo_db, hi_db, tol_db=0.01,
                       convention=None, order=None, method=None, max_iters=EXIT_MAX_ITERS):
    """
    Lowest SNR (dB) in [lo_db, hi_db] at which the joint trajectory converges, by bisection.

    Raises:
        NumericalError: if the pair does not converge at hi_db
    """
    def converges(snr_db):
        ctx = LevelChannelContext.at_snr(c1, c2, level, snr_db, convention, order, method)
        return joint_trajectory(ctx, lambda1, lambda2, max_iters=max_iters).converged

    if not converges(hi_db):
        raise NumericalError(f"Pair does not converge even at {hi_db} dB",
                             diagnostics={"lo_db": lo_db, "hi_db": hi_db})
    if converges(lo_db):
        return lo_db
    while hi_db - lo_db > tol_db:
        mid = 0.5 * (lo_db + hi_db)
        if converges(mid):
            hi_db = mid
        else:
            lo_db = mid
    logger.info("Decoding threshold level %d: %.3f dB", level, hi_db)
    return hi_db


TRACE_FIELDS = ["iteration", "user", "I_CV", "I_VC", "I_VS", "I_SV"]


def trace_records(trace: Sequence[ExitState]):
    return [dict(zip(TRACE_FIELDS, row)) for state in trace for row in state.rows()]


def write_trace_csv(trace: Sequence[ExitState], path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=TRACE_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(trace_records(trace))
    return path
