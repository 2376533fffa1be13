"""Constructive search for coding prefixes containing every short block.

Blocks are enumerated length-then-lexicographically.  The search keeps a
committed prefix, pulls the target point back along it and explores the
admissible tree of the residual breadth first until some node word completes
the wanted block; the prefix is then committed through the end of that
occurrence and the largest index j with B_1..B_j all present is recomputed.

"Obstructed" always means "no occurrence within the recorded budget".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .codings import DEFAULT_NODE_CAP, DEFAULT_TOLERANCE, expand, kmp_feed, kmp_table, prefix_consistent
from .geometry import DEFAULT_CELL_BUDGET
from .ifs import IfsSystem, resolvable_depth

DEFAULT_BLOCK_DEPTH = 40
DEFAULT_LOOKAHEAD = 8


@dataclass(frozen=True)
class BlockEnumeration:
    """All non-empty words over {1..n} in length-lex order, indexed from 1."""
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("alphabet size must be at least 2")

    def count_upto(self, length: int) -> int:
        """Number of blocks of length at most ``length``."""
        return sum(self.n ** i for i in range(1, length + 1))

    def length(self, k: int) -> int:
        if k < 1:
            raise ValueError("block indices start at 1")
        L = 1
        while self.count_upto(L) < k:
            L += 1
        return L

    def block(self, k: int) -> tuple:
        L = self.length(k)
        offset = k - self.count_upto(L - 1) - 1
        out = []
        for _ in range(L):
            offset, r = divmod(offset, self.n)
            out.append(r + 1)
        return tuple(reversed(out))

    def index(self, word: Sequence[int]) -> int:
        word = tuple(word)
        if not word or any(not 1 <= e <= self.n for e in word):
            raise ValueError(f"not a block over 1..{self.n}: {word}")
        offset = 0
        for e in word:
            offset = offset * self.n + (e - 1)
        return self.count_upto(len(word) - 1) + offset + 1

    def blocks(self, K: int) -> list:
        return [self.block(k) for k in range(1, K + 1)]


def block_enumeration(n: int) -> BlockEnumeration:
    return BlockEnumeration(n)


def _factors(prefix: Sequence[int], max_len: int) -> set:
    p = tuple(prefix)
    return {p[i:i + L] for L in range(1, max_len + 1) for i in range(len(p) - L + 1)}


def find_occurrence(prefix: Sequence[int], block: Sequence[int]) -> Optional[tuple]:
    """Half-open interval ``(start, end)`` of the first occurrence, or None."""
    p, b = tuple(prefix), tuple(block)
    for i in range(len(p) - len(b) + 1):
        if p[i:i + len(b)] == b:
            return i, i + len(b)
    return None


def verify_blocks(prefix: Sequence[int], K: int, n: int) -> tuple:
    """``(all present, missing blocks)`` for B_1..B_K as factors of ``prefix``."""
    blocks = BlockEnumeration(n).blocks(K)
    if not blocks:
        return True, []
    present = _factors(prefix, max(len(b) for b in blocks))
    missing = [b for b in blocks if b not in present]
    return not missing, missing


def satisfied_index(prefix: Sequence[int], n: int, K: int) -> int:
    """Largest j <= K with B_1..B_j all factors of ``prefix``."""
    enum = BlockEnumeration(n)
    present = _factors(prefix, enum.length(K) if K else 0)
    j = 0
    while j < K and enum.block(j + 1) in present:
        j += 1
    return j


@dataclass
class UniversalSearchState:
    system: IfsSystem
    x: np.ndarray
    prefix: tuple = ()
    j: int = 0
    residual: Optional[np.ndarray] = None
    scale: float = 1.0                 # 1 / contraction of the prefix
    nodes_used: int = 0

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if self.x.shape != (self.system.dimension,):
            raise ValueError("target point has the wrong dimension")
        if self.residual is None:
            y, scale = self.x.copy(), 1.0
            for e in self.system.check_word(self.prefix):
                y = (y - self.system.shifts[e - 1]) / self.system.ratios[e - 1]
                scale /= self.system.ratios[e - 1]
            self.residual, self.scale = y, scale


@dataclass(frozen=True)
class Extended:
    state: UniversalSearchState
    occurrence: tuple              # half-open interval in state.prefix
    depth: int                     # digits added


@dataclass(frozen=True)
class Obstructed:
    block: tuple
    depth_budget: int
    depth_reached: int
    nodes: int


def extend_with_block(s: IfsSystem, state: UniversalSearchState, block: Sequence[int],
                      delta: float = DEFAULT_TOLERANCE, depth_budget: int = DEFAULT_BLOCK_DEPTH,
                      node_budget: int = DEFAULT_NODE_CAP, budget: int = DEFAULT_CELL_BUDGET,
                      ceiling: Optional[float] = None, lookahead: int = DEFAULT_LOOKAHEAD):
    """Search the residual's admissible tree for a word completing ``block``.

    Nodes whose effective tolerance ``delta / contraction`` exceeds
    ``ceiling`` (default Diam/16) are not explored: past that point wrong
    digits start passing the membership test and a found block would say
    nothing about the point.

    The automaton starts from the state reached on the committed prefix, so
    occurrences straddling the old prefix end are found too.  Candidate words
    are re-checked for prefix consistency before they are committed.

    Any occurrence may be committed, but one leaving the residual near the
    edge of the attractor forces a long run of a single digit afterwards.  So
    the search continues ``lookahead`` levels past the first occurrence and
    commits the one whose residual lies closest to the bounding-ball centre
    (ties: shallower, then earlier in tree order).
    """
    block = s.check_word(block)
    if not block:
        raise ValueError("block must be non-empty")
    if state.system is not s:
        raise ValueError("state belongs to another system")
    occ = find_occurrence(state.prefix, block)
    if occ is not None:
        return Extended(state, occ, 0)
    ceiling = s.diameter / 16 if ceiling is None else float(ceiling)
    table = kmp_table(block, s.n)
    start_state = kmp_feed(table, state.prefix)
    y = state.residual[None, :]
    scale = np.array([state.scale])
    kst = np.array([start_state], dtype=np.int64)
    prev_state = kst
    parents, digits = [], []
    nodes = 0
    candidates = []                 # (distance to centre, depth, order, word, residual, scale)
    last = depth_budget
    for depth in range(1, depth_budget + 1):
        if depth > last:
            break
        parent, digit, y, scale = expand(s, y, scale, delta, budget)
        fine = delta * scale <= ceiling
        parent, digit, y, scale = parent[fine], digit[fine], y[fine], scale[fine]
        nodes += len(digit)
        if not len(digit):
            break
        kst = table[kst[parent], digit.astype(np.int64) - 1]
        parents.append(parent)
        digits.append(digit)
        # a node whose automaton state is final completed the block at this level
        fresh = np.nonzero(kst == len(block))[0]
        if depth > 1 and len(fresh):
            fresh = fresh[prev_state[parent[fresh]] != len(block)]
        for i in fresh:
            tail = []
            k = int(i)
            for lv in range(depth - 1, -1, -1):
                tail.append(int(digits[lv][k]))
                k = int(parents[lv][k])
            word = state.prefix + tuple(reversed(tail))
            if prefix_consistent(s, np.array([word]), state.x[None, :], delta)[0]:
                dist = float(np.linalg.norm(y[i] - s.ball_center))
                candidates.append((dist, depth, int(i), word, y[i].copy(), float(scale[i])))
                last = min(last, depth + lookahead)
        prev_state = kst
        if nodes > node_budget:
            break
    if candidates:
        dist, depth, _, word, res, sc = min(candidates, key=lambda c: c[:3])
        new = UniversalSearchState(s, state.x, word, state.j, res, sc, state.nodes_used + nodes)
        return Extended(new, (len(word) - len(block), len(word)), depth)
    return Obstructed(block, depth_budget, len(digits), nodes)


@dataclass
class UniversalResult:
    success: bool
    prefix: tuple
    K: int
    j: int
    certificate: list = field(default_factory=list)   # (k, block, start, end)
    obstructed_at: Optional[int] = None
    obstruction: Optional[Obstructed] = None
    beyond_resolution: bool = False
    history: list = field(default_factory=list)       # j after each step

    def to_csv(self) -> str:
        lines = ["k,block,start,end"]
        for k, b, a, e in self.certificate:
            lines.append(f'{k},"{" ".join(map(str, b))}",{a},{e}')
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        head = f"blocks 1..{self.K}: " + ("certified" if self.success else f"obstructed at block {self.obstructed_at}")
        tail = "" if not self.beyond_resolution else " (prefix deeper than the tolerance can resolve)"
        return f"{head}; prefix length {len(self.prefix)}; j = {self.j}{tail}"


def certificate_for(prefix: Sequence[int], K: int, n: int) -> list:
    out = []
    for k, b in enumerate(BlockEnumeration(n).blocks(K), start=1):
        occ = find_occurrence(prefix, b)
        if occ is None:
            break
        out.append((k, b, occ[0], occ[1]))
    return out


def build_universal_prefix(s: IfsSystem, x, K: int, delta: float = DEFAULT_TOLERANCE,
                           depth_budget: int = DEFAULT_BLOCK_DEPTH,
                           node_budget: int = DEFAULT_NODE_CAP) -> UniversalResult:
    """Grow a prefix containing B_1..B_K, or report the first block that obstructs."""
    if K < 1:
        raise ValueError("K must be at least 1")
    enum = BlockEnumeration(s.n)
    state = UniversalSearchState(s, x)
    history = []
    while state.j < K:
        block = enum.block(state.j + 1)
        res = extend_with_block(s, state, block, delta, depth_budget, node_budget)
        if isinstance(res, Obstructed):
            return UniversalResult(False, state.prefix, K, state.j, certificate_for(state.prefix, state.j, s.n),
                                   state.j + 1, res, len(state.prefix) > resolvable_depth(s, delta), history)
        new = res.state
        j = satisfied_index(new.prefix, s.n, K)
        if j <= state.j:
            raise RuntimeError("search made no progress; the committed occurrence was not counted")
        new.j = j
        history.append(j)
        state = new
    return UniversalResult(True, state.prefix, K, state.j, certificate_for(state.prefix, K, s.n),
                           beyond_resolution=len(state.prefix) > resolvable_depth(s, delta), history=history)
