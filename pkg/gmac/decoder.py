"""
Joint two-user belief-propagation decoding per bit-level with the MAC state
node, and successive interference cancellation across levels.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import BP_MAX_ITER, BP_CLAMP
from gmac.errors import DomainError
from gmac.constellation import LevelDecomposition, level_atom_table, realization_index
from gmac.ldpc import TannerGraph, syndrome_ok

logger = logging.getLogger(__name__)

PHI_FLOOR = 1e-10


@dataclass(frozen=True)
class StateNodeTable:
    """
    Sum-constellation atoms of one level grouped by (known-bit realization,
    user 1 bit, user 2 bit). Messages are computed toward target_user.
    """
    level: int
    known_levels: Tuple[int, ...]
    atoms: np.ndarray
    noise_var: float
    target_user: int = 1

    def for_user(self, user):
        if user not in (1, 2):
            raise DomainError("target_user must be 1 or 2")
        return StateNodeTable(self.level, self.known_levels, self.atoms, self.noise_var, user)

    @property
    def user_atoms(self):
        """[realization, own bit, other bit, atom]."""
        return self.atoms if self.target_user == 1 else np.swapaxes(self.atoms, 1, 2)

    @property
    def realizations(self):
        return self.atoms.shape[0]


def build_state_table(d1: LevelDecomposition, d2: LevelDecomposition, level, noise_var,
                      order=None, target_user=1) -> StateNodeTable:
    """Precompute the atoms of a level given the levels decoded before it."""
    order = tuple(order) if order is not None else tuple(range(1, d1.L + 1))
    known = order[:order.index(level)]
    atoms = level_atom_table(d1, d2, level, known)
    return StateNodeTable(level, tuple(known), atoms, float(noise_var), target_user)


def _level_log_likelihoods(tbl: StateNodeTable, y, realization):
    atoms = tbl.user_atoms[realization]                      # (n, 2, 2, A)
    sq = (y[:, None, None, None] - atoms) ** 2
    return logsumexp(-sq / (2.0 * tbl.noise_var), axis=-1)  # (n, 2, 2)


def state_update(tbl: StateNodeTable, y, vs_other, realization=0):
    """
    State-to-variable LLR toward tbl.target_user.

    The partner's current-level bit is weighted by its message vs_other
    (bit 0 with e^vs relative to bit 1); the partner's and own undecoded
    levels are marginalized uniformly. vs_other may be +-inf.
    """
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(np.asarray(y, dtype=float))
    vs = np.broadcast_to(np.asarray(vs_other, dtype=float), y.shape)
    realization = np.broadcast_to(np.asarray(realization, dtype=np.int64), y.shape)
    ll = _level_log_likelihoods(tbl, y, realization)
    with np.errstate(over="ignore"):
        log_w0 = -np.logaddexp(0.0, -vs)
        log_w1 = -np.logaddexp(0.0, vs)
    num = np.logaddexp(ll[:, 0, 0] + log_w0, ll[:, 0, 1] + log_w1)
    den = np.logaddexp(ll[:, 1, 0] + log_w0, ll[:, 1, 1] + log_w1)
    out = num - den
    return float(out[0]) if scalar else out


def channel_llr(tbl: StateNodeTable, y, realization=0):
    """Channel-only LLR: the state update with no partner information."""
    return state_update(tbl, y, 0.0, realization)


def _phi(x):
    x = np.clip(x, PHI_FLOOR, BP_CLAMP)
    return -np.log(np.tanh(x / 2.0))


def check_update(graph: TannerGraph, v2c):
    """Exact tanh-rule check-to-variable messages on the check-sorted edge array."""
    v2c = np.clip(v2c, -BP_CLAMP, BP_CLAMP)
    mags = _phi(np.abs(v2c))
    totals = np.bincount(graph.edge_check, weights=mags, minlength=graph.m)
    negative = (v2c < 0).astype(np.int64)
    parity = np.bincount(graph.edge_check, weights=negative, minlength=graph.m).astype(np.int64)
    sign = 1.0 - 2.0 * ((parity[graph.edge_check] - negative) & 1)
    extrinsic = np.maximum(totals[graph.edge_check] - mags, PHI_FLOOR)
    return sign * _phi(extrinsic)


@dataclass
class DecodeResult:
    """Hard decisions of one level for both users."""
    level: int
    bits: Tuple[np.ndarray, np.ndarray]
    iterations: int
    syndrome_ok: Tuple[bool, bool]
    message_stats: List[Dict] = field(default_factory=list)

    @property
    def success(self):
        return all(self.syndrome_ok)


def joint_bp_decode(y, graphs: Sequence[TannerGraph], tbl: StateNodeTable, max_iter=BP_MAX_ITER,
                    realization=0, collect_stats=False) -> DecodeResult:
    """
    Flooding BP over both users' graphs joined by the state nodes.

    Per iteration and user: state-to-variable messages from the partner's
    variable-to-state messages, variable-to-check and check-to-variable
    updates, then the new variable-to-state messages (sum of incoming check
    messages). Stops once both syndromes pass.

    Args:
        realization (int or ndarray): known-bit realization per position
        collect_stats (bool): record mean/variance of variable-to-state messages
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if any(g.n != n for g in graphs):
        raise DomainError("Graphs and received word differ in length")
    tables = (tbl.for_user(1), tbl.for_user(2))
    c2v = [np.zeros(g.num_edges) for g in graphs]
    check_sum = [np.zeros(n), np.zeros(n)]
    hard = [np.ones(n, dtype=np.uint8), np.ones(n, dtype=np.uint8)]
    ok = [False, False]
    stats = []
    iteration = 0
    for iteration in range(1, max_iter + 1):
        sv = [state_update(tables[k], y, check_sum[1 - k], realization) for k in (0, 1)]
        for k, g in enumerate(graphs):
            total = sv[k] + check_sum[k]
            v2c = total[g.edge_var] - c2v[k]
            c2v[k] = check_update(g, v2c)
            check_sum[k] = np.bincount(g.edge_var, weights=c2v[k], minlength=n)
            posterior = sv[k] + check_sum[k]
            hard[k] = (posterior <= 0).astype(np.uint8)
            ok[k] = syndrome_ok(g, hard[k])
            if collect_stats:
                stats.append({"iteration": iteration, "user": k + 1,
                              "mean": float(np.mean(check_sum[k])), "var": float(np.var(check_sum[k]))})
        if all(ok):
            break
    return DecodeResult(tbl.level, (hard[0], hard[1]), iteration, (ok[0], ok[1]), stats)


@dataclass
class LevelStage:
    """Everything SIC needs for one level: both users' graphs and the state table."""
    level: int
    graphs: Tuple[TannerGraph, TannerGraph]
    table: StateNodeTable


def sic_decode(y, stages: Sequence[LevelStage], max_iter=BP_MAX_ITER, genie_words=None) -> List[DecodeResult]:
    """
    Decode levels in the given order, conditioning each on the hard decisions
    of the earlier levels. With genie_words ({level: (word1, word2)}) the
    true earlier-level codewords are used instead.
    """
    decided = {}
    results = []
    for stage in stages:
        known = stage.table.known_levels
        if known:
            source = genie_words if genie_words is not None else decided
            keys = np.stack([source[lv][0] for lv in known] + [source[lv][1] for lv in known], axis=-1)
            realization = realization_index(keys)
        else:
            realization = 0
        result = joint_bp_decode(y, stage.graphs, stage.table, max_iter, realization)
        decided[stage.level] = result.bits
        results.append(result)
        logger.debug("Level %d decoded in %d iterations, syndromes %s",
                     stage.level, result.iterations, result.syndrome_ok)
    return results


def write_message_stats(result: DecodeResult, path):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["iteration", "user", "mean", "var"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(result.message_stats)
    return path
