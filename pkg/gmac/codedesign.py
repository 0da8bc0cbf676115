"""
Degree-distribution design by linear programming on EXIT charts, alternating
between the two users of each bit-level.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (REFERENCE_DIR, DESIGN_V_MAX, DESIGN_DELTA, DESIGN_MARGIN, DESIGN_ROUNDS,
                    DESIGN_REFINEMENTS, DEFAULT_THREADS, SNR_CONVENTION)
from gmac.errors import DesignError, DomainError, GmacError, LpInfeasibleError, NumericalError
from gmac.models import DegreeDistribution, DesignBundle, LevelDesign
from gmac.numerics import LinearProgram, lp_solve
from gmac.constellation import (constellations_to_json, per_level_capacities, snr_to_noise_var)
from gmac.exit import (LevelChannelContext, joint_trajectory, state_profile, vc_terms,
                       inverse_cv, trace_records)

logger = logging.getLogger(__name__)


def node_perspective(dd: DegreeDistribution) -> Dict[int, float]:
    """Node fractions L_j = (lambda_j / j) / sum_i (lambda_i / i)."""
    return dd.node_perspective()


def design_rate(dd: DegreeDistribution) -> float:
    """1 - (1/d_c) / sum_j (lambda_j / j); raises DesignError when not positive."""
    return dd.design_rate()


def _safe_rate(dd):
    try:
        return dd.design_rate()
    except DesignError:
        return 0.0


@dataclass
class DesignContext:
    """
    Inputs of one LP: the level channel, the user being designed, its check
    degree, and the partner's fixed distribution.
    """
    channel: LevelChannelContext
    target_user: int
    partner: DegreeDistribution
    d_c: int
    v_max: int = DESIGN_V_MAX
    delta: float = DESIGN_DELTA
    margin: float = DESIGN_MARGIN
    current: Optional[DegreeDistribution] = None

    def __post_init__(self):
        if not 0.0 < self.delta <= 0.1:
            raise DomainError("delta must lie in (0, 0.1]")
        if self.v_max < 3:
            raise DomainError("v_max must be at least 3")
        if self.target_user not in (1, 2):
            raise DomainError("target_user must be 1 or 2")
        if self.d_c < 2:
            raise DomainError("Check degree must be at least 2")

    @property
    def degrees(self):
        return np.arange(2, self.v_max + 1)

    @property
    def grid(self):
        steps = int(round((1.0 - self.delta) / self.delta))
        return np.arange(steps + 1) * self.delta

    def pair(self, dd):
        """(user 1, user 2) distributions with dd in the target slot."""
        return (dd, self.partner) if self.target_user == 1 else (self.partner, dd)


def initial_distribution(d_c, v_max=DESIGN_V_MAX):
    """Regular check-feasible start, lambda = x^ceil(v_max/4) capped below d_c; lambda = x otherwise."""
    degree = min(math.ceil(v_max / 4) + 1, d_c - 1)
    if degree < 2:
        return DegreeDistribution.regular(2, d_c)
    return DegreeDistribution.regular(degree, d_c)


def design_lp(dctx: DesignContext, i_sv_profile, margin=None):
    """
    Linear program over lambda_2..lambda_vmax on the delta-grid:
    sum_j lambda_j VC_j(x, s(x)) >= CV^-1(x) + margin, sum lambda = 1,
    lambda >= 0, maximize sum lambda_j / j.

    Args:
        i_sv_profile (ndarray): state information s(x) per grid point

    Returns:
        tuple: (LinearProgram, grid, rhs)
    """
    margin = dctx.margin if margin is None else margin
    grid, degrees = dctx.grid, dctx.degrees
    terms = vc_terms(degrees, grid, np.asarray(i_sv_profile), dctx.channel.method)
    rhs = np.asarray(inverse_cv(dctx.d_c, grid, dctx.channel.method)) + margin
    lp = LinearProgram(
        objective=1.0 / degrees,
        a_ub=-terms, b_ub=-rhs,
        a_eq=np.ones((1, degrees.size)), b_eq=np.array([1.0]),
    )
    return lp, grid, rhs


def _tabulate_profile(dctx, current):
    trajectory = joint_trajectory(dctx.channel, *dctx.pair(current))
    icv, isv = state_profile(trajectory.trace, dctx.target_user)
    return np.interp(dctx.grid, icv, isv)


def _binding_points(lp, grid, rhs):
    best = (-lp.a_ub).max(axis=1) - rhs
    failing = grid[best < 0]
    if failing.size:
        return [round(float(x), 6) for x in failing]
    return [round(float(x), 6) for x in grid[np.argsort(best)[:5]]]


def optimize_lambda(dctx: DesignContext) -> DegreeDistribution:
    """
    Highest-rate distribution for the target user with the partner fixed.

    The partner's influence enters through I_SV tabulated against the
    target's I_CV along the current joint trajectory. The LP answer is
    checked with the joint trajectory; on failure the profile is
    re-tabulated with the new pair and the margin doubled.

    Raises:
        LpInfeasibleError: no distribution keeps the tunnel open
        DesignError: the LP answer never passed the trajectory check
    """
    current = dctx.current or initial_distribution(dctx.d_c, dctx.v_max)
    margin = dctx.margin
    for attempt in range(DESIGN_REFINEMENTS + 1):
        profile = _tabulate_profile(dctx, current)
        lp, grid, rhs = design_lp(dctx, profile, margin)
        result = lp_solve(lp)
        if not result.feasible:
            raise LpInfeasibleError(
                f"No degree distribution opens the tunnel for user {dctx.target_user} "
                f"at level {dctx.channel.level} (d_c={dctx.d_c})",
                binding=_binding_points(lp, grid, rhs),
            )
        candidate = DegreeDistribution.from_vector(dctx.degrees, result.x, dctx.d_c)
        candidate.design_rate()
        if joint_trajectory(dctx.channel, *dctx.pair(candidate)).converged:
            logger.debug("User %d level %d: rate %.4f after %d refinements",
                         dctx.target_user, dctx.channel.level, candidate.design_rate(), attempt)
            return candidate
        current = candidate
        margin *= 2.0
    raise DesignError(f"LP solution for user {dctx.target_user} did not pass the trajectory check "
                      f"after {DESIGN_REFINEMENTS} refinements")


def alternating_design(ctx: LevelChannelContext, dc1, dc2, v_max=DESIGN_V_MAX, delta=DESIGN_DELTA,
                       rounds=DESIGN_ROUNDS, init=None, margin=DESIGN_MARGIN):
    """
    Alternate optimize_lambda between the users until both rates move by
    less than 1e-4 or the rounds run out.

    Returns:
        tuple: (DegreeDistribution, DegreeDistribution) passing the joint trajectory

    Raises:
        LpInfeasibleError: propagated from the LP
        DesignError: the final pair does not converge
    """
    if rounds < 1:
        raise DomainError("rounds must be at least 1")
    dcs = (dc1, dc2)
    if init is not None:
        pair = [init[0], init[1]]
    else:
        pair = [initial_distribution(dc1, v_max), initial_distribution(dc2, v_max)]
    previous = [_safe_rate(dd) for dd in pair]
    for round_idx in range(rounds):
        for k in (1, 2):
            dctx = DesignContext(ctx, k, pair[2 - k], dcs[k - 1], v_max, delta, margin, current=pair[k - 1])
            try:
                pair[k - 1] = optimize_lambda(dctx)
            except DesignError as e:
                logger.warning("Keeping previous distribution for user %d: %s", k, e)
        rates = [_safe_rate(dd) for dd in pair]
        logger.info("Level %d round %d: rates %.4f / %.4f", ctx.level, round_idx + 1, rates[0], rates[1])
        if all(abs(r - p) < 1e-4 for r, p in zip(rates, previous)):
            break
        previous = rates
    if not joint_trajectory(ctx, pair[0], pair[1]).converged:
        raise DesignError(f"Designed pair for level {ctx.level} does not converge at the design SNR")
    logger.info("Level %d design sum rate %.4f", ctx.level, sum(_safe_rate(dd) for dd in pair))
    return pair[0], pair[1]


def select_dc(ctx: LevelChannelContext, dc_range, v_max=DESIGN_V_MAX, delta=DESIGN_DELTA,
              rounds=DESIGN_ROUNDS, equal=True, threads=DEFAULT_THREADS):
    """
    Run alternating_design for each check-degree candidate and keep the
    highest sum rate; ties go to the smaller check degree.

    Args:
        dc_range (tuple or sequence): (low, high) inclusive, or explicit candidates
        equal (bool): both users share one check degree

    Returns:
        tuple: (dc1, dc2, (DegreeDistribution, DegreeDistribution))
    """
    values = list(range(dc_range[0], dc_range[1] + 1)) if isinstance(dc_range, tuple) else list(dc_range)
    if not values:
        raise DomainError("Check-degree range is empty")
    if equal:
        candidates = [(d, d) for d in values]
    else:
        candidates = [(d1, d2) for d1 in values for d2 in values]

    def attempt(dcs):
        try:
            return dcs, alternating_design(ctx, dcs[0], dcs[1], v_max, delta, rounds)
        except (LpInfeasibleError, DesignError, NumericalError) as e:
            logger.info("d_c %s failed at level %d: %s", dcs, ctx.level, e)
            return dcs, None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        outcomes = list(pool.map(attempt, candidates))
    feasible = [(dcs, pair, sum(_safe_rate(dd) for dd in pair)) for dcs, pair in outcomes if pair is not None]
    if not feasible:
        raise DesignError(f"No check degree in {values} yields a converging design at level {ctx.level}")
    feasible.sort(key=lambda item: (-round(item[2], 9), item[0][0] + item[0][1], item[0]))
    (dc1, dc2), pair, rate = feasible[0]
    logger.info("Level %d: selected d_c = (%d, %d), sum rate %.4f", ctx.level, dc1, dc2, rate)
    return dc1, dc2, pair


def design_all_levels(c1, c2, snr_db, dc=None, dc_range=(4, 12), v_max=DESIGN_V_MAX, delta=DESIGN_DELTA,
                      rounds=DESIGN_ROUNDS, convention=None, order=None, threads=DEFAULT_THREADS,
                      name="custom", method=None) -> DesignBundle:
    """
    Full design at one SNR: per-level capacities, then a code pair for every
    level in SIC order. Levels that cannot be designed are listed in the
    bundle's failures instead of aborting the others.

    Args:
        dc (list, optional): fixed check degree per level (1-based level order)
        dc_range (tuple): searched when dc is None
    """
    convention = convention or SNR_CONVENTION
    noise_var = snr_to_noise_var(snr_db, convention)
    order = list(order) if order is not None else list(range(1, c1.L + 1))
    capacities = per_level_capacities(c1, c2, noise_var, order)
    codes, traces, failures = [], {}, {}
    for level in order:
        ctx = LevelChannelContext(c1, c2, level, noise_var, order, method)
        try:
            if dc is not None:
                dcs = (dc[level - 1], dc[level - 1])
                pair = alternating_design(ctx, dcs[0], dcs[1], v_max, delta, rounds)
            else:
                dc1, dc2, pair = select_dc(ctx, tuple(dc_range), v_max, delta, rounds, threads=threads)
        except GmacError as e:
            logger.warning("Level %d design failed: %s", level, e)
            failures[str(level)] = str(e)
            continue
        for user, dd in zip((1, 2), pair):
            codes.append(LevelDesign.from_distribution(dd, user, level, snr_db, name))
        traces[f"level{level}"] = trace_records(joint_trajectory(ctx, *pair).trace)
    bundle = DesignBundle(constellation=name, points=constellations_to_json(c1, c2), dsnr_db=snr_db,
                          snr_convention=convention, order=order, capacities=capacities,
                          codes=codes, traces=traces, failures=failures)
    logger.info("Design %s at %.1f dB: sum rate %.4f of sum capacity %.4f",
                name, snr_db, bundle.sum_rate, bundle.sum_capacity)
    return bundle


# --- Bundle files ---------------------------------------------------------------------------

REFERENCE_BUNDLES = {
    "MC-10": "mc_10db",
    "MC-18": "mc_18db",
    "OPT-18": "opt_18db",
}


def save_bundle(bundle: DesignBundle, path):
    with open(path, "w") as f:
        json.dump(bundle.model_dump(mode="json", by_alias=True), f, indent=2)
    return path


def load_bundle(path) -> DesignBundle:
    with open(path, "r") as f:
        return DesignBundle.model_validate(json.load(f))


def reference_bundle(name) -> DesignBundle:
    """Published reference designs shipped under data/designs (MC-10, MC-18, OPT-18)."""
    try:
        bundle_id = REFERENCE_BUNDLES[name.upper()]
    except KeyError:
        raise DesignError(f"Unknown reference design: {name}") from None
    return load_bundle(os.path.join(REFERENCE_DIR, f"{bundle_id}.json"))
