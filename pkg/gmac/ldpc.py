"""
Finite-length LDPC codes: degree quantization, progressive edge growth,
systematic encoding over GF(2) and syndrome checks.
"""
import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.sparse import csr_matrix

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from gmac.errors import DomainError, GraphError
from gmac.models import DegreeDistribution

logger = logging.getLogger(__name__)

OVERFLOW_SLOTS = 2


@dataclass(frozen=True)
class TannerGraph:
    """
    Bipartite parity-check structure. check_neighbors[c] holds the sorted
    variable indices of check c.
    """
    n: int
    m: int
    check_neighbors: Tuple[np.ndarray, ...]
    seed: Optional[int] = None

    def __post_init__(self):
        if len(self.check_neighbors) != self.m:
            raise GraphError(f"Expected {self.m} checks, got {len(self.check_neighbors)}")
        rows = []
        for c, nbrs in enumerate(self.check_neighbors):
            nbrs = np.asarray(nbrs, dtype=np.int64)
            if nbrs.size and (nbrs.min() < 0 or nbrs.max() >= self.n):
                raise GraphError(f"Check {c} references a variable outside 0..{self.n - 1}")
            if np.any(np.diff(nbrs) <= 0):
                if np.unique(nbrs).size != nbrs.size:
                    raise GraphError(f"Check {c} has parallel edges")
                nbrs = np.sort(nbrs)
            rows.append(nbrs)
        object.__setattr__(self, "check_neighbors", tuple(rows))

    @cached_property
    def edge_check(self):
        return np.repeat(np.arange(self.m), self.check_degrees)

    @cached_property
    def edge_var(self):
        if not self.check_neighbors:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.check_neighbors)

    @cached_property
    def check_degrees(self):
        return np.array([nbrs.size for nbrs in self.check_neighbors], dtype=np.int64)

    @cached_property
    def var_degrees(self):
        return np.bincount(self.edge_var, minlength=self.n)

    @cached_property
    def var_neighbors(self):
        order = np.lexsort((self.edge_check, self.edge_var))
        splits = np.cumsum(self.var_degrees)[:-1]
        return tuple(np.split(self.edge_check[order], splits))

    @property
    def num_edges(self):
        return int(self.edge_var.size)

    def __eq__(self, other):
        if not isinstance(other, TannerGraph):
            return NotImplemented
        return (self.n, self.m, self.seed) == (other.n, other.m, other.seed) and all(
            np.array_equal(a, b) for a, b in zip(self.check_neighbors, other.check_neighbors))


def quantize_degrees(n, dd: DegreeDistribution):
    """
    Variable and check degree lists realizing dd at blocklength n.

    Node counts are n * L_j with largest-remainder rounding; the check count
    is round(E / d_c) and the edge surplus is absorbed by moving that many
    check degrees by one.

    Returns:
        tuple: (variable degrees, check degrees) as int arrays
    """
    if n < 100:
        raise DomainError("Blocklength must be at least 100")
    node = dd.node_perspective()
    degrees = np.array(list(node), dtype=np.int64)
    raw = n * np.array(list(node.values()))
    counts = np.floor(raw).astype(np.int64)
    short = n - int(counts.sum())
    # largest remainders first, smaller degree on ties
    rank = np.lexsort((degrees, -(raw - counts)))
    counts[rank[:short]] += 1

    var_degrees = np.repeat(degrees, counts)
    edges = int(var_degrees.sum())
    m = max(1, int(round(edges / dd.d_c)))
    check_degrees = np.full(m, dd.d_c, dtype=np.int64)
    diff = edges - m * dd.d_c
    if abs(diff) > m or dd.d_c + np.sign(diff) < 1:
        raise GraphError(f"Cannot balance {edges} edges over {m} checks of degree {dd.d_c}")
    check_degrees[:abs(diff)] += int(np.sign(diff))
    if var_degrees.max() > m:
        raise GraphError(f"Variable degree {var_degrees.max()} exceeds the {m} available checks")
    return var_degrees, check_degrees


class _PegBuilder:
    """Incremental graph with padded adjacency arrays for vectorized BFS."""

    def __init__(self, var_degrees, check_degrees):
        self.n, self.m = var_degrees.size, check_degrees.size
        self.cap = check_degrees
        self.var_adj = np.full((self.n, int(var_degrees.max())), -1, dtype=np.int64)
        # spare columns for the overflow fallback at the tail of the schedule
        self.chk_adj = np.full((self.m, int(check_degrees.max()) + OVERFLOW_SLOTS), -1, dtype=np.int64)
        self.var_fill = np.zeros(self.n, dtype=np.int64)
        self.chk_fill = np.zeros(self.m, dtype=np.int64)

    def connect(self, v, c):
        self.var_adj[v, self.var_fill[v]] = c
        self.chk_adj[c, self.chk_fill[c]] = v
        self.var_fill[v] += 1
        self.chk_fill[c] += 1

    def _pick(self, candidates):
        fill = self.chk_fill[candidates]
        return int(candidates[np.argmin(fill)])  # argmin keeps the lowest index on ties

    def choose_check(self, v):
        available = self.chk_fill < self.cap
        own = self.var_adj[v, :self.var_fill[v]]
        available[own] = False
        if not available.any():
            # remaining sockets all sit on checks v already uses
            spare = self.chk_fill < self.chk_adj.shape[1]
            spare[own] = False
            if not spare.any():
                raise GraphError(f"No check left for variable {v}")
            logger.debug("Variable %d overflows a check past its target degree", v)
            return self._pick(np.flatnonzero(spare))
        if own.size == 0:
            return self._pick(np.flatnonzero(available))

        depth = np.full(self.m, -1, dtype=np.int64)
        seen_var = np.zeros(self.n, dtype=bool)
        seen_var[v] = True
        frontier = np.array([v])
        layer = 0
        while frontier.size:
            checks = self.var_adj[frontier].ravel()
            checks = np.unique(checks[checks >= 0])
            checks = checks[depth[checks] < 0]
            if checks.size == 0:
                break
            depth[checks] = layer
            if not np.any(available & (depth < 0)):
                break
            nbrs = self.chk_adj[checks].ravel()
            nbrs = np.unique(nbrs[nbrs >= 0])
            frontier = nbrs[~seen_var[nbrs]]
            seen_var[frontier] = True
            layer += 1

        unreached = available & (depth < 0)
        if unreached.any():
            return self._pick(np.flatnonzero(unreached))
        reached = np.flatnonzero(available)
        deepest = reached[depth[reached] == depth[reached].max()]
        return self._pick(deepest)


def peg_construct(n, var_degrees, check_degrees, seed=0) -> TannerGraph:
    """
    Progressive edge growth. Variables are processed in non-decreasing degree
    order (shuffled by seed within a degree); each edge goes to a check that
    is unreachable, or else deepest, in the BFS tree of the variable, ties
    broken by lowest current check degree and then lowest index. When the
    only sockets left sit on checks the variable already uses, the edge goes
    to the least-filled other check, one past its target degree.
    """
    var_degrees = np.asarray(var_degrees, dtype=np.int64)
    check_degrees = np.asarray(check_degrees, dtype=np.int64)
    if var_degrees.size != n:
        raise GraphError(f"Expected {n} variable degrees, got {var_degrees.size}")
    if var_degrees.sum() != check_degrees.sum():
        raise GraphError("Degree lists are not edge-balanced")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    order = perm[np.argsort(var_degrees[perm], kind="stable")]

    builder = _PegBuilder(var_degrees, check_degrees)
    for count, v in enumerate(order):
        for _ in range(var_degrees[v]):
            builder.connect(v, builder.choose_check(v))
        if (count + 1) % 2000 == 0:
            logger.debug("PEG placed %d of %d variables", count + 1, n)

    rows = tuple(np.sort(builder.chk_adj[c, :builder.chk_fill[c]]) for c in range(builder.m))
    return TannerGraph(n, builder.m, rows, seed)


def parity_check_matrix(g: TannerGraph) -> csr_matrix:
    data = np.ones(g.num_edges, dtype=np.uint8)
    return csr_matrix((data, (g.edge_check, g.edge_var)), shape=(g.m, g.n))


def syndrome(g: TannerGraph, bits):
    bits = np.asarray(bits)
    if bits.shape[-1] != g.n:
        raise DomainError(f"Word length {bits.shape[-1]} does not match n = {g.n}")
    return np.bincount(g.edge_check, weights=bits[g.edge_var], minlength=g.m).astype(np.int64) % 2


def syndrome_ok(g: TannerGraph, bits) -> bool:
    """True iff every check is satisfied."""
    return not syndrome(g, bits).any()


def has_four_cycles(g: TannerGraph) -> bool:
    """Two checks sharing two variables close a 4-cycle."""
    h = parity_check_matrix(g).astype(np.int32)
    overlap = (h @ h.T).tocoo()
    off = overlap.row != overlap.col
    return bool(np.any(overlap.data[off] > 1))


def girth(g: TannerGraph, limit=12):
    """
    Length of the shortest cycle, or None when there is none up to limit.
    BFS from every variable; meant for small and medium graphs.
    """
    best = None
    var_nbrs, chk_nbrs = g.var_neighbors, g.check_neighbors
    for root in range(g.n):
        # nodes: variables 0..n-1, checks n..n+m-1
        dist = {root: 0}
        parent = {root: -1}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            if best is not None and 2 * dist[u] + 1 >= best:
                break
            if 2 * dist[u] >= limit:
                break
            nbrs = (var_nbrs[u] + g.n) if u < g.n else chk_nbrs[u - g.n]
            for w in nbrs:
                w = int(w)
                if w == parent[u]:
                    continue
                if w in dist:
                    length = dist[u] + dist[w] + 1
                    if length <= limit and (best is None or length < best):
                        best = length
                else:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue.append(w)
    return best


# --- Encoding -------------------------------------------------------------------

@dataclass
class EncoderState:
    """
    Reduced row echelon form of H over GF(2). Message bits sit at the free
    columns; each pivot bit is the parity of the message bits its row touches.
    """
    n: int
    m: int
    rank: int
    pivots: np.ndarray
    free: np.ndarray
    reduced: np.ndarray          # bool, rank x k, reduced rows restricted to free columns

    @property
    def k(self):
        return self.n - self.rank

    @property
    def rate(self):
        return self.k / self.n

    @property
    def redundant_checks(self):
        return self.m - self.rank


def _packed_rows(g: TannerGraph):
    width = -(-g.n // 64) * 8
    packed = np.zeros((g.m, width), dtype=np.uint8)
    np.bitwise_or.at(packed, (g.edge_check, g.edge_var >> 3),
                     (0x80 >> (g.edge_var & 7)).astype(np.uint8))
    return packed


def make_encoder(g: TannerGraph) -> EncoderState:
    """Gaussian elimination over GF(2) on bit-packed rows."""
    packed = _packed_rows(g)
    words = packed.view(np.uint64)
    pivots = []
    r = 0
    for col in range(g.n):
        if r == g.m:
            break
        byte, mask = col >> 3, np.uint8(0x80 >> (col & 7))
        hits = np.flatnonzero(packed[r:, byte] & mask)
        if hits.size == 0:
            continue
        p = r + int(hits[0])
        if p != r:
            words[[r, p]] = words[[p, r]]
        rows = np.flatnonzero(packed[:, byte] & mask)
        rows = rows[rows != r]
        if rows.size:
            words[rows] ^= words[r]
        pivots.append(col)
        r += 1
    pivots = np.array(pivots, dtype=np.int64)
    free = np.setdiff1d(np.arange(g.n), pivots)
    bits = np.unpackbits(packed[:r], axis=1, count=g.n).astype(bool)
    state = EncoderState(g.n, g.m, r, pivots, free, bits[:, free])
    if state.redundant_checks:
        logger.info("Parity-check matrix has %d redundant checks; k = %d", state.redundant_checks, state.k)
    return state


def encode(state: EncoderState, message) -> np.ndarray:
    """Systematic codeword with the message at the free positions."""
    message = np.asarray(message, dtype=np.uint8)
    if message.shape != (state.k,):
        raise DomainError(f"Message length {message.size} does not match k = {state.k}")
    word = np.zeros(state.n, dtype=np.uint8)
    word[state.free] = message
    word[state.pivots] = np.count_nonzero(state.reduced[:, message.astype(bool)], axis=1) % 2
    return word


def extract_message(state: EncoderState, word) -> np.ndarray:
    return np.asarray(word)[..., state.free]


# --- Graph files ------------------------------------------------------------------

def write_graph(g: TannerGraph, path):
    """Header 'n m seed' then one check per line (space separated variables)."""
    with open(path, "w") as f:
        f.write(f"{g.n} {g.m} {-1 if g.seed is None else g.seed}\n")
        for nbrs in g.check_neighbors:
            f.write(" ".join(str(int(v)) for v in nbrs) + "\n")
    return path


def read_graph(path) -> TannerGraph:
    try:
        with open(path, "r") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise GraphError(f"Cannot read graph file {path}: {e.strerror or e}") from e
    try:
        n, m, seed = (int(tok) for tok in lines[0].split())
        rows = tuple(np.array([int(tok) for tok in line.split()], dtype=np.int64) for line in lines[1:m + 1])
    except (ValueError, IndexError) as e:
        raise GraphError(f"Malformed graph file {path}: {e}") from None
    if len(rows) != m:
        raise GraphError(f"Graph file {path} lists {len(rows)} checks, header says {m}")
    return TannerGraph(n, m, rows, None if seed < 0 else seed)
