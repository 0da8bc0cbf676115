"""
User constellations, multilevel decomposition, the sum constellation seen by
the receiver, (per-level) mutual informations and the constellation search.
"""
import json
import math
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from config import (SNR_CONVENTION, COLLISION_TOL, OPT_SEED_GRID, OPT_SEED_KEEP,
                    OPT_SWEEPS, DEFAULT_THREADS)
from gmac.errors import ConstellationError, DomainError, OptimizationError, NumericalError
from gmac.numerics import GaussianMixture, mixture_entropy

logger = logging.getLogger(__name__)

# OPT points are printed with three decimals (user 1 power 1.0006)
POWER_TOL = 1e-3
SYMMETRY_TOL = 1e-9

_PAM4 = [-3.0 / math.sqrt(5.0), -1.0 / math.sqrt(5.0), 1.0 / math.sqrt(5.0), 3.0 / math.sqrt(5.0)]

_NAMED = {
    "MC": (_PAM4, _PAM4),
    "SP": ([p / 4.0 for p in _PAM4], _PAM4),
    "OPT": ([-1.316, -0.519, 0.519, 1.316], [-1.406, -0.150, 0.150, 1.406]),
}

SNR_CONVENTIONS = ("per_user", "total")
MC_CAPACITY_10DB = 2.1474


@dataclass(frozen=True)
class UserConstellation:
    """2^L real amplitudes used uniformly by one user."""
    points: np.ndarray
    L: int

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if self.L < 1 or points.shape != (2 ** self.L,):
            raise ConstellationError(f"Constellation with L={self.L} needs exactly {2 ** self.L} points")
        if np.any(np.diff(points) <= 0):
            raise ConstellationError("Constellation points must be strictly increasing")
        if np.max(np.abs(points + points[::-1])) > SYMMETRY_TOL:
            raise ConstellationError("Constellation must be symmetric about zero")
        power = float(np.mean(points ** 2))
        if power > 1.0 + POWER_TOL:
            raise ConstellationError(f"Average power {power:.6f} exceeds the unit power constraint")
        object.__setattr__(self, "points", points)

    @classmethod
    def from_points(cls, points):
        points = np.sort(np.asarray(points, dtype=float))
        L = int(round(math.log2(points.size))) if points.size else 0
        return cls(points, L)

    @classmethod
    def from_amplitudes(cls, amplitudes):
        amplitudes = np.asarray(amplitudes, dtype=float)
        return cls(np.sort(_level_sums(amplitudes)), amplitudes.size)

    @property
    def power(self):
        return float(np.mean(self.points ** 2))

    def to_list(self):
        return [float(p) for p in self.points]


@dataclass
class LevelDecomposition:
    """
    Per-level amplitudes h_i (with l_i = -h_i), sorted by decreasing amplitude.
    Bit 0 maps to h_i and bit 1 to l_i.
    """
    amplitudes: np.ndarray
    rates: Optional[List[float]] = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=float)

    @property
    def L(self):
        return self.amplitudes.size

    @property
    def high(self):
        return self.amplitudes

    @property
    def low(self):
        return -self.amplitudes

    @property
    def powers(self):
        """P_i = l_i^2 + h_i^2."""
        return 2.0 * self.amplitudes ** 2

    def level_values(self, level, bits):
        """Signal values of one level (1-based) for an array of bits."""
        amp = self.amplitudes[level - 1]
        return np.where(np.asarray(bits) == 0, amp, -amp)

    def modulate(self, level_bits):
        """Sum the levels: level_bits has shape (L, n)."""
        level_bits = np.asarray(level_bits)
        signs = 1.0 - 2.0 * level_bits
        return self.amplitudes @ signs

    def points(self):
        return np.sort(_level_sums(self.amplitudes))


@dataclass
class SumConstellation:
    """Merged pairwise sums with weights counts/denominator."""
    values: np.ndarray
    counts: np.ndarray
    denominator: int
    tol: float = COLLISION_TOL

    @property
    def probabilities(self):
        return self.counts / self.denominator

    def __len__(self):
        return self.values.size


def _bit_patterns(L):
    if L == 0:
        return np.zeros((1, 0), dtype=np.int8)
    return np.array(list(itertools.product((0, 1), repeat=L)), dtype=np.int8)


def _level_sums(amplitudes):
    patterns = _bit_patterns(amplitudes.size)
    return (1.0 - 2.0 * patterns) @ amplitudes


def named_constellation(name) -> Tuple[UserConstellation, UserConstellation]:
    """
    MC, SP or OPT constellation pair.

    MC and SP are stored as exact unit-power 4-PAM, +-3/sqrt(5) and +-1/sqrt(5)
    (SP scales user 1 by 1/4), not as their printed four-decimal values; the
    MC sum capacity of 2.1474 bpcu at 10 dB depends on the exact points. OPT
    keeps the printed three-decimal points, whose capacity at 18 dB is
    3.2966 bpcu against 3.3174 for the unrounded optimum.
    """
    try:
        user1, user2 = _NAMED[str(name).upper()]
    except KeyError:
        raise ConstellationError(f"Unknown constellation name: {name}") from None
    return UserConstellation.from_points(user1), UserConstellation.from_points(user2)


def decompose_levels(c: UserConstellation) -> LevelDecomposition:
    """
    Split a symmetric constellation into L binary amplitude levels.

    The upper half of the sorted points must be the lower half shifted by
    2*a_1; the remainder is decomposed recursively.
    """
    amplitudes = []
    points = c.points.copy()
    scale = max(1.0, float(np.max(np.abs(points))))
    while points.size > 2:
        half = points.size // 2
        shifts = (points[half:] - points[:half]) / 2.0
        if np.ptp(shifts) > SYMMETRY_TOL * scale or shifts[0] <= 0:
            raise ConstellationError("Constellation is not decomposable into +/- amplitude levels")
        amp = float(np.mean(shifts))
        amplitudes.append(amp)
        points = points[half:] - amp
        if np.max(np.abs(points + points[::-1])) > SYMMETRY_TOL * scale:
            raise ConstellationError("Constellation is not decomposable into +/- amplitude levels")
    amplitudes.append(float(points[-1]))
    if amplitudes[-1] <= 0:
        raise ConstellationError("Constellation is not decomposable into +/- amplitude levels")
    decomposition = LevelDecomposition(np.array(sorted(amplitudes, reverse=True)))
    if np.max(np.abs(decomposition.points() - c.points)) > SYMMETRY_TOL * scale:
        raise ConstellationError("Level decomposition does not reproduce the constellation")
    return decomposition


def _merge_atoms(values, tol):
    order = np.argsort(values, kind="stable")
    values = values[order]
    merged, counts = [], []
    start = 0
    for idx in range(1, values.size + 1):
        if idx == values.size or values[idx] - values[start] > tol:
            merged.append(float(np.mean(values[start:idx])))
            counts.append(idx - start)
            start = idx
    return np.array(merged), np.array(counts, dtype=np.int64)


def sum_constellation(c1: UserConstellation, c2: UserConstellation, tol=COLLISION_TOL) -> SumConstellation:
    """All 4^L pairwise sums with uniform weight; sums within tol are merged."""
    if c1.L != c2.L:
        raise ConstellationError("Both users need the same number of levels")
    sums = (c1.points[:, None] + c2.points[None, :]).ravel()
    values, counts = _merge_atoms(sums, tol)
    return SumConstellation(values, counts, 4 ** c1.L, tol)


def snr_to_noise_var(snr_db, convention=None):
    """Noise variance for an SNR in dB under the given convention."""
    convention = convention or SNR_CONVENTION
    snr = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    if convention == "per_user":
        value = 1.0 / snr
    elif convention == "total":
        value = 2.0 / snr
    else:
        raise DomainError(f"Unknown SNR convention: {convention}")
    return float(value) if np.ndim(value) == 0 else value


def _noise_entropy(noise_var):
    return 0.5 * math.log2(2.0 * math.pi * math.e * noise_var)


def sum_capacity(sc: SumConstellation, noise_var) -> float:
    """I(Y; X1, X2) = h(Y) - h(Z) in bits per channel use."""
    if not noise_var > 0:
        raise DomainError("Noise variance must be positive")
    mix = GaussianMixture(sc.values, sc.probabilities, noise_var)
    return max(0.0, mixture_entropy(mix) - _noise_entropy(noise_var))


def pair_capacity(c1: UserConstellation, c2: UserConstellation, noise_var) -> float:
    return sum_capacity(sum_constellation(c1, c2), noise_var)


def gaussian_sum_capacity(noise_var) -> float:
    """Sum capacity with Gaussian inputs of unit power per user."""
    return 0.5 * math.log2(1.0 + 2.0 / noise_var)


def symmetric_rate(c1, c2, noise_var) -> float:
    """Half the sum capacity at fixed uniform inputs."""
    return 0.5 * pair_capacity(c1, c2, noise_var)


def _combinations(d1: LevelDecomposition, d2: LevelDecomposition):
    """Every bit pattern of both users: (bits1, bits2, received value)."""
    p1 = _bit_patterns(d1.L)
    p2 = _bit_patterns(d2.L)
    v1 = (1.0 - 2.0 * p1) @ d1.amplitudes
    v2 = (1.0 - 2.0 * p2) @ d2.amplitudes
    bits1 = np.repeat(p1, p2.shape[0], axis=0)
    bits2 = np.tile(p2, (p1.shape[0], 1))
    values = (v1[:, None] + v2[None, :]).ravel()
    return bits1, bits2, values


def conditional_mixtures(d1, d2, known_levels: Sequence[int], noise_var):
    """
    Received-signal mixtures conditioned on every realization of the known
    level bits (1-based levels) of both users.

    Returns:
        list: (probability, GaussianMixture) per realization
    """
    if d1.L != d2.L:
        raise ConstellationError("Both users need the same number of levels")
    bits1, bits2, values = _combinations(d1, d2)
    idx = [level - 1 for level in known_levels]
    if not idx:
        return [(1.0, GaussianMixture.uniform(values, noise_var))]
    keys = np.concatenate([bits1[:, idx], bits2[:, idx]], axis=1)
    realizations = _bit_patterns(2 * len(idx))
    out = []
    for key in realizations:
        mask = np.all(keys == key, axis=1)
        out.append((1.0 / realizations.shape[0], GaussianMixture.uniform(values[mask], noise_var)))
    return out


def realization_index(bits):
    """Row of _bit_patterns matching a 0/1 key (first entry most significant)."""
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape[-1] == 0:
        return np.zeros(bits.shape[:-1], dtype=np.int64)
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits @ weights


def level_atom_table(d1, d2, level, known_levels):
    """
    Received values grouped by the current-level bits of both users.

    Args:
        level (int): current level, 1-based
        known_levels (sequence): levels decoded before it, 1-based

    Returns:
        ndarray: shape (4^|K|, 2, 2, A); entry [r, b1, b2] holds the values
        consistent with realization r of the known bits (user 1 levels
        first, then user 2) and current-level bits b1, b2
    """
    if d1.L != d2.L:
        raise ConstellationError("Both users need the same number of levels")
    if not 1 <= level <= d1.L or level in known_levels:
        raise DomainError(f"Level {level} is invalid or already decoded")
    bits1, bits2, values = _combinations(d1, d2)
    idx = [k - 1 for k in known_levels]
    keys = realization_index(np.concatenate([bits1[:, idx], bits2[:, idx]], axis=1))
    cur = level - 1
    table = []
    for r in range(4 ** len(idx)):
        table.append([[values[(keys == r) & (bits1[:, cur] == b1) & (bits2[:, cur] == b2)]
                       for b2 in (0, 1)] for b1 in (0, 1)])
    return np.array(table)


def _conditional_entropy(d1, d2, known_levels, noise_var):
    if len(known_levels) == d1.L:
        return _noise_entropy(noise_var)
    return sum(p * mixture_entropy(mix) for p, mix in conditional_mixtures(d1, d2, known_levels, noise_var))


def _check_order(order, L):
    order = tuple(order) if order is not None else tuple(range(1, L + 1))
    if sorted(order) != list(range(1, L + 1)):
        raise DomainError(f"Decoding order must be a permutation of levels 1..{L}")
    return order


def per_level_capacities(c1, c2, noise_var, order=None) -> List[float]:
    """
    Per-level sum capacities I(Y; U_1i, U_2i | earlier levels) in decoding order.

    Args:
        order (tuple, optional): permutation of the 1-based levels; natural order by default
    """
    d1, d2 = decompose_levels(c1), decompose_levels(c2)
    order = _check_order(order, d1.L)
    entropies = [_conditional_entropy(d1, d2, order[:s], noise_var) for s in range(d1.L + 1)]
    return [entropies[s] - entropies[s + 1] for s in range(d1.L)]


def allocate_rates(c1, c2, noise_var, order=None):
    """Decompositions whose per-level rates split each level's capacity evenly."""
    d1, d2 = decompose_levels(c1), decompose_levels(c2)
    order = _check_order(order, d1.L)
    capacities = per_level_capacities(c1, c2, noise_var, order)
    rates = [0.0] * d1.L
    for level, cap in zip(order, capacities):
        rates[level - 1] = cap / 2.0
    d1.rates, d2.rates = list(rates), list(rates)
    return d1, d2


def calibrate_snr_convention(snr_db=10.0, target=MC_CAPACITY_10DB, tol=0.02):
    """
    Decide which SNR convention reproduces the MC sum capacity at 10 dB.

    Returns:
        tuple: (convention, {convention: capacity})
    """
    c1, c2 = named_constellation("MC")
    capacities = {conv: pair_capacity(c1, c2, snr_to_noise_var(snr_db, conv)) for conv in SNR_CONVENTIONS}
    matches = [conv for conv, cap in capacities.items() if abs(cap - target) <= tol]
    if len(matches) != 1:
        raise NumericalError("SNR calibration is ambiguous", diagnostics=capacities)
    logger.info("SNR convention calibrated to %s (%s)", matches[0], capacities)
    return matches[0], capacities


# --- Constellation search ------------------------------------------------------

def _amplitude_capacity(a1, a2, noise_var):
    values = (_level_sums(a1)[:, None] + _level_sums(a2)[None, :]).ravel()
    mix = GaussianMixture.uniform(values, noise_var)
    return max(0.0, mixture_entropy(mix) - _noise_entropy(noise_var))


def _feasible(a, gap=1e-9):
    tails = np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])
    return bool(np.all(a > tails + gap) and np.sum(a ** 2) <= 1.0 + 1e-12)


def _coordinate_bounds(a, i, gap=1e-6):
    lo = max(gap, float(np.sum(a[i + 1:])) + gap)
    hi = math.sqrt(max(0.0, 1.0 - float(np.sum(a ** 2) - a[i] ** 2)))
    for k in range(i):
        hi = min(hi, float(a[k] - (np.sum(a[k + 1:]) - a[i])) - gap)
    return lo, hi


def _seed_pairs(L, grid, rng):
    seeds = []
    if L == 2:
        phis = (np.arange(grid) + 0.5) / grid * (math.pi / 4.0)
        singles = [np.array([math.cos(p), math.sin(p)]) for p in phis]
        seeds.extend((a1, a2) for a1 in singles for a2 in singles)
        for name in _NAMED:
            c1, c2 = named_constellation(name)
            a1, a2 = decompose_levels(c1).amplitudes, decompose_levels(c2).amplitudes
            seeds.extend([(a1, a2), (a2, a1)])
    else:
        for _ in range(grid * grid):
            pair = []
            for _user in range(2):
                u = rng.uniform(0.05, 1.0, size=L)
                a = np.zeros(L)
                for i in range(L - 1, -1, -1):
                    a[i] = np.sum(a[i + 1:]) + u[i]
                pair.append(a / np.linalg.norm(a))
            seeds.append(tuple(pair))
    return [(np.array(a1, dtype=float), np.array(a2, dtype=float)) for a1, a2 in seeds
            if _feasible(np.array(a1)) and _feasible(np.array(a2))]


def _rank_key(item):
    capacity, a1, a2 = item
    return (-round(capacity, 12), tuple(np.round(np.concatenate([a1, a2]), 12)))


def _descend(a1, a2, noise_var, sweeps, settle):
    amps = [a1.copy(), a2.copy()]
    best = _amplitude_capacity(amps[0], amps[1], noise_var)
    gain = float("inf")
    for sweep in range(sweeps):
        start = best
        for user in (0, 1):
            for i in range(amps[user].size):
                lo, hi = _coordinate_bounds(amps[user], i)
                if hi - lo < 1e-9:
                    continue

                def negative(t, user=user, i=i):
                    trial = amps[user].copy()
                    trial[i] = t
                    pair = (trial, amps[1]) if user == 0 else (amps[0], trial)
                    return -_amplitude_capacity(pair[0], pair[1], noise_var)

                res = optimize.minimize_scalar(negative, bounds=(lo, hi), method="bounded",
                                               options={"xatol": 1e-7})
                if -res.fun > best:
                    best = -res.fun
                    amps[user][i] = res.x
        gain = best - start
        if gain < settle:
            break
    return best, amps[0], amps[1], gain


def optimize_constellations(noise_var, L=2, seed_grid=OPT_SEED_GRID, keep=OPT_SEED_KEEP,
                            sweeps=OPT_SWEEPS, threads=DEFAULT_THREADS, seed=0, settle=1e-5):
    """
    Search the user constellation pair with maximal sum capacity under the
    unit power and 2^L cardinality constraints with uniform inputs.

    Each user is parametrized by its level amplitudes. A seed grid (which
    always includes the named MC/SP/OPT pairs for L = 2) is evaluated, the
    best seeds are refined by coordinate descent with bounded scalar searches.

    Returns:
        tuple: (UserConstellation, UserConstellation)

    Raises:
        OptimizationError: the best candidate had not settled after all sweeps
    """
    if L < 1:
        raise DomainError("L must be at least 1")
    rng = np.random.default_rng(seed)
    if L == 1:
        seeds = [(np.array([1.0]), np.array([t])) for t in (np.arange(seed_grid) + 0.5) / seed_grid]
    else:
        seeds = _seed_pairs(L, seed_grid, rng)

    def evaluate(pair):
        return _amplitude_capacity(pair[0], pair[1], noise_var), pair[0], pair[1]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        scored = list(pool.map(evaluate, seeds))
    scored.sort(key=_rank_key)
    logger.info("Constellation search: %d seeds, best seed capacity %.4f", len(scored), scored[0][0])

    def refine(item):
        return _descend(item[1], item[2], noise_var, sweeps, settle)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        refined = list(pool.map(refine, scored[:keep]))
    candidates = [(cap, a1, a2) for cap, a1, a2, _ in refined] + scored[:1]
    candidates.sort(key=_rank_key)
    best_cap, a1, a2 = candidates[0]
    c1, c2 = UserConstellation.from_amplitudes(a1), UserConstellation.from_amplitudes(a2)

    winner = next((r for r in refined if r[0] == best_cap), None)
    if winner is not None and winner[3] >= settle and winner[3] > 1e-4:
        raise OptimizationError("Constellation search did not settle", best=(c1, c2),
                                capacity=best_cap, diagnostics={"last_gain": winner[3]})
    logger.info("Optimized constellation capacity %.4f bpcu", best_cap)
    return c1, c2


# --- Serialization --------------------------------------------------------------

def constellations_to_json(c1, c2):
    return {"user1": c1.to_list(), "user2": c2.to_list(), "L": c1.L}


def constellations_from_json(obj):
    try:
        c1 = UserConstellation.from_points(obj["user1"])
        c2 = UserConstellation.from_points(obj["user2"])
    except KeyError as e:
        raise ConstellationError(f"Constellation JSON is missing {e}") from None
    if "L" in obj and int(obj["L"]) != c1.L:
        raise ConstellationError("Constellation JSON L does not match the point count")
    return c1, c2


def load_constellations(path):
    with open(path, "r") as f:
        return constellations_from_json(json.load(f))


def dump_constellations(c1, c2, path, **extra):
    payload = constellations_to_json(c1, c2)
    payload.update(extra)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2)
    return path


def resolve_constellations(spec):
    """A name (MC/SP/OPT), a JSON dict or a path to a JSON file."""
    if isinstance(spec, dict):
        return constellations_from_json(spec)
    if isinstance(spec, str) and spec.upper() in _NAMED:
        return named_constellation(spec)
    if isinstance(spec, str) and os.path.exists(spec):
        return load_constellations(spec)
    raise ConstellationError(f"Cannot resolve constellation: {spec!r}")
