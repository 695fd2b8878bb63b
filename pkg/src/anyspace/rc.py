"""Recursive conditioning over a dtree with per-node cache control.

A :class:`Session` owns the recorded instantiation, the caches and the call
counters.  Each query records the evidence, runs the recursion from the root
and un-records it again, so the same session can be queried repeatedly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dtree import Dtree
from .model import Instantiation, strides_for

BYTES_PER_CELL = 8
BYTES_PER_COUNTED_CELL = 12


@dataclass
class CacheFactor:
    """Fraction of each internal node's cache that may be filled."""

    values: dict[int, float]
    seed: int = 0

    @classmethod
    def full(cls, tree: Dtree, seed: int = 0) -> "CacheFactor":
        return cls({n.id: 1.0 for n in tree.internal()}, seed)

    @classmethod
    def none(cls, tree: Dtree, seed: int = 0) -> "CacheFactor":
        return cls({n.id: 0.0 for n in tree.internal()}, seed)

    @classmethod
    def uniform(cls, tree: Dtree, fraction: float, seed: int = 0) -> "CacheFactor":
        return cls({n.id: float(fraction) for n in tree.internal()}, seed)

    @classmethod
    def cached(cls, tree: Dtree, nodes, seed: int = 0) -> "CacheFactor":
        nodes = set(nodes)
        return cls({n.id: 1.0 if n.id in nodes else 0.0 for n in tree.internal()}, seed)

    @property
    def is_discrete(self) -> bool:
        return all(v in (0.0, 1.0) for v in self.values.values())

    def check(self, tree: Dtree) -> None:
        internal = {n.id for n in tree.internal()}
        missing = internal - set(self.values)
        if missing:
            raise ValueError(f"cache factor has no entry for nodes {sorted(missing)}")
        extra = set(self.values) - internal
        if extra:
            raise ValueError(f"cache factor names non-internal nodes {sorted(extra)}")
        for nid, v in self.values.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"cache factor of node {nid} is {v}, outside [0, 1]")


def admitted_indices(cf: CacheFactor, node: int, size: int) -> frozenset[int] | None:
    """Context indices node ``node`` may cache; ``None`` means all of them.

    The subset is uniform given its size.  Its size is ``cf * size`` rounded
    up or down at random so that its expectation is exactly ``cf * size``.
    """
    frac = cf.values[node]
    if frac >= 1.0:
        return None
    if frac <= 0.0:
        return frozenset()
    rng = np.random.default_rng([cf.seed, node])
    want = frac * size
    k = math.floor(want)
    if rng.random() < want - k:
        k += 1
    return frozenset(rng.choice(size, size=k, replace=False).tolist())


def cache_admission(tree: Dtree, cf: CacheFactor, node: int, index: int) -> bool:
    size = tree.count(tree.nodes[node].context)
    chosen = admitted_indices(cf, node, size)
    return chosen is None or index in chosen


def retrieval_count(tree: Dtree, cf: CacheFactor, node: int) -> int:
    """Exact number of lookups each cache entry of ``node`` receives.

    Evidence-free runs only.  Walks up to the nearest cached ancestor (or the
    root), collecting its context and the cutsets of every node on the way;
    each entry is computed once per instantiation of that union modulo the
    node's own context, and looked up on all the other visits.
    """
    if cf.values.get(node) != 1.0:
        raise ValueError(f"node {node} is not cached")
    n = tree.nodes[node]
    if n.parent is None:
        return 0
    seen = set()
    for a in tree.ancestors(node):
        anc = tree.nodes[a]
        seen.update(anc.cutset)
        if cf.values[a] == 1.0:
            seen.update(anc.context)
            break
    return tree.count(seen - set(n.context)) - 1


def predicted_calls(tree: Dtree, cf: CacheFactor) -> list[float]:
    """Average calls per node under ``cf`` with no evidence; root is 1."""
    ave = [0.0] * len(tree.nodes)
    for n in tree.nodes:
        if n.parent is None:
            ave[n.id] = 1.0
            continue
        p = tree.nodes[n.parent]
        f = cf.values[p.id]
        ave[n.id] = tree.count(p.cutset) * (f * tree.count(p.context) + (1.0 - f) * ave[p.id])
    return ave


@dataclass
class NodeStats:
    calls: int = 0
    hits: int = 0
    misses: int = 0
    cached: int = 0
    evicted: int = 0


class Session:
    """Evaluation state for one dtree and cache factor."""

    def __init__(self, tree: Dtree, cf: CacheFactor):
        cf.check(tree)
        self.tree = tree
        self.cf = cf
        cards = tree.factors.cards
        self.cards = cards
        self.recorded = [-1] * len(cards)
        self.context_keys: list[tuple[tuple[int, int], ...]] = []
        self.admit: dict[int, frozenset[int] | None] = {}
        for n in tree.nodes:
            ctx_cards = [cards[v] for v in n.context]
            self.context_keys.append(tuple(zip(n.context, strides_for(ctx_cards))))
            if not n.is_leaf:
                self.admit[n.id] = admitted_indices(cf, n.id, math.prod(ctx_cards))
        self.caches: dict[int, dict] = {n.id: {} for n in tree.internal()}
        self.stats = [NodeStats() for _ in tree.nodes]
        self.cells = 0
        self.peak_cells = 0
        self.lookups: dict[int, dict[int, int]] | None = None
        self.mode = None
        self.evidence: Instantiation | None = None
        self.has_run = False

    def capacity(self, node: int) -> int:
        n = self.tree.nodes[node]
        return math.ceil(self.cf.values[node] * self.tree.count(n.context))

    def context_index(self, node: int) -> int:
        rec = self.recorded
        return sum(rec[v] * s for v, s in self.context_keys[node])

    def reset(self, clear_caches: bool = True) -> None:
        if clear_caches:
            for c in self.caches.values():
                c.clear()
            self.cells = 0
        self.stats = [NodeStats() for _ in self.tree.nodes]
        self.peak_cells = self.cells
        self.lookups = None

    def record(self, evidence: Instantiation) -> None:
        self.tree.factors.check_instantiation(evidence)
        for v, x in evidence.items():
            self.recorded[v] = x

    def unrecord(self, evidence: Instantiation) -> None:
        for v in evidence:
            self.recorded[v] = -1

    def dump_stats(self) -> str:
        return "\n".join(
            f"node={i} calls={s.calls} hits={s.hits} misses={s.misses} "
            f"cached={s.cached} evicted={s.evicted}"
            for i, s in enumerate(self.stats)
        )


def new_session(tree: Dtree, cf: CacheFactor) -> Session:
    return Session(tree, cf)


def _run(s: Session, evidence: Instantiation, *, forget: bool, fast: bool) -> float:
    tree = s.tree
    nodes = tree.nodes
    factors = tree.factors.factors
    rec = s.recorded
    cards = s.cards
    caches = s.caches
    admit = s.admit
    stats = s.stats
    keys = s.context_keys
    leaf_tables = {
        n.id: (factors[n.factor].values, tuple(zip(factors[n.factor].scope, factors[n.factor].strides)))
        for n in tree.leaves()
    }
    remaining = {}
    if forget:
        counts = {n.id: retrieval_count(tree, s.cf, n.id) for n in tree.internal() if s.cf.values[n.id] == 1.0}
    lookups = s.lookups

    def rc(nid: int) -> float:
        st = stats[nid]
        st.calls += 1
        node = nodes[nid]
        if node.factor is not None:
            values, layout = leaf_tables[nid]
            base = 0
            free = None
            for v, k in layout:
                x = rec[v]
                if x < 0:
                    free = [(v2, k2) for v2, k2 in layout if rec[v2] < 0]
                    break
                base += x * k
            if free is None:
                return values[base]
            # variables no cutset instantiates are summed out of the leaf table
            base = sum(rec[v] * k for v, k in layout if rec[v] >= 0)
            total = 0.0
            for combo in itertools.product(*(range(cards[v]) for v, _ in free)):
                total += values[base + sum(x * k for x, (_, k) in zip(combo, free))]
            return total
        key = 0
        for v, k in keys[nid]:
            key += rec[v] * k
        cache = caches[nid]
        if key in cache:
            st.hits += 1
            if lookups is not None:
                per = lookups[nid]
                per[key] = per.get(key, 0) + 1
            p = cache[key]
            if forget:
                left = remaining[nid][key] - 1
                if left == 0:
                    del cache[key]
                    del remaining[nid][key]
                    st.evicted += 1
                    s.cells -= 1
                else:
                    remaining[nid][key] = left
            return p
        st.misses += 1
        p = 0.0
        free = [v for v in node.cutset if rec[v] < 0]
        left, right = node.left, node.right
        for combo in itertools.product(*(range(cards[v]) for v in free)):
            for v, x in zip(free, combo):
                rec[v] = x
            pl = rc(left)
            if fast and pl == 0.0:
                continue
            p += pl * rc(right)
        for v in free:
            rec[v] = -1
        allowed = admit[nid]
        if allowed is None or key in allowed:
            st.cached += 1
            if forget:
                n_left = counts[nid]
                if n_left == 0:
                    st.evicted += 1
                    return p
                remaining.setdefault(nid, {})[key] = n_left
            cache[key] = p
            s.cells += 1
            if s.cells > s.peak_cells:
                s.peak_cells = s.cells
        return p

    s.record(evidence)
    try:
        return rc(0)
    finally:
        s.unrecord(evidence)


def rc_query(
    s: Session, evidence: Instantiation | None = None, *, track_lookups: bool = False, fast: bool = False
) -> float:
    """Probability of ``evidence``: the sum of the factor product over all
    full instantiations consistent with it.

    Caches and counters start empty for every query.  ``fast`` skips the
    right child when the left one returns zero; call counts then no longer
    follow the closed forms.
    """
    evidence = dict(evidence or {})
    s.reset()
    if track_lookups:
        s.lookups = {n.id: {} for n in s.tree.internal()}
    s.mode, s.evidence = "prob", evidence
    p = _run(s, evidence, forget=False, fast=fast)
    s.has_run = True
    return p


def rc_query_forgetting(s: Session, evidence: Instantiation | None = None) -> tuple[float, int]:
    """Like :func:`rc_query`, but drops a cache entry after its last lookup.

    Returns the probability and the peak number of live cache cells.  With
    evidence the lookup counts are not exact, so entries are kept instead.
    """
    if not s.cf.is_discrete:
        raise ValueError("forgetting needs a discrete cache factor (every node 0 or 1)")
    evidence = dict(evidence or {})
    s.reset()
    s.mode, s.evidence = "prob", evidence
    p = _run(s, evidence, forget=not evidence, fast=False)
    s.has_run = True
    return p, s.peak_cells


def exact_calls_check(s: Session) -> list[int]:
    if not s.has_run:
        raise RuntimeError("no query has been run on this session")
    return [st.calls for st in s.stats]


@dataclass
class CurvePoint:
    budget: int
    cached_nodes: frozenset[int]
    predicted_calls: float
    used_cells: int = 0
    cache_factor: CacheFactor | None = field(default=None, repr=False)


def tradeoff_curve(tree: Dtree, budgets: Sequence[int], seed: int = 0) -> list[CurvePoint]:
    """Greedy discrete cache allocation for each budget (in cells).

    Budgets are processed in ascending order and the allocation only grows,
    so the predicted call totals never increase.  At each step the node with
    the best call reduction per cell among those that still fit is cached;
    ties go to the lower preorder id.
    """
    if any(b < 0 for b in budgets) or list(budgets) != sorted(budgets):
        raise ValueError("budgets must be nonnegative and ascending")
    cost = {n.id: tree.count(n.context) for n in tree.internal()}
    chosen: set[int] = set()
    used = 0
    cf = CacheFactor.cached(tree, chosen, seed)
    total = sum(predicted_calls(tree, cf))
    points = []
    for budget in budgets:
        while True:
            best = None
            for nid in sorted(cost):
                if nid in chosen or used + cost[nid] > budget:
                    continue
                trial = CacheFactor.cached(tree, chosen | {nid}, seed)
                t = sum(predicted_calls(tree, trial))
                gain = (total - t) / cost[nid]
                if best is None or gain > best[0]:
                    best = (gain, nid, t)
            if best is None:
                break
            chosen.add(best[1])
            used += cost[best[1]]
            total = best[2]
        cf = CacheFactor.cached(tree, chosen, seed)
        points.append(CurvePoint(budget, frozenset(chosen), total, used, cf))
    return points


def full_cache_cells(tree: Dtree) -> int:
    return sum(tree.count(n.context) for n in tree.internal())
