"""MPE and MAP by two-phase recursive conditioning.

Nodes whose cutset holds a MAP variable maximise over their cases; nodes
below them, where every MAP variable is already recorded, sum.  Cached
values are hypothesis lists, so a session can answer a sequence of queries
and only recompute the parts of the tree that new evidence touches.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from .dtree import validate_map_dtree
from .model import FactorSet, Instantiation
from .rc import Session

RTOL = 1e-12
DEFAULT_CAP = 1024

# a partial instantiation is a tuple of (variable id, value) sorted by id
Pair = tuple[tuple[tuple[int, int], ...], float]


class HypothesisOverflow(RuntimeError):
    pass


class MapDtreeError(ValueError):
    pass


@dataclass(frozen=True)
class HypothesisSet:
    """Maximal instantiations of ``scope`` (sorted variable ids) and their probability.

    ``entries`` holds ``(values, p)`` with ``values`` aligned to ``scope``,
    sorted by mixed-radix index.
    """

    scope: tuple[int, ...]
    entries: tuple[tuple[tuple[int, ...], float], ...]

    @classmethod
    def from_pairs(cls, scope: Iterable[int], pairs: Iterable[Pair]) -> "HypothesisSet":
        scope = tuple(sorted(scope))
        out = {}
        for inst, p in pairs:
            d = dict(inst)
            key = tuple(d[v] for v in scope)
            out.setdefault(key, p)
        return cls(scope, tuple(sorted(out.items())))

    @property
    def probability(self) -> float:
        return max(p for _, p in self.entries)

    def instantiations(self) -> list[Instantiation]:
        return [dict(zip(self.scope, values)) for values, _ in self.entries]

    def same_as(self, other: "HypothesisSet", rtol: float = 1e-9) -> bool:
        if self.scope != other.scope:
            return False
        if [v for v, _ in self.entries] != [v for v, _ in other.entries]:
            return False
        return all(
            abs(p - q) <= rtol * max(abs(p), abs(q))
            for (_, p), (_, q) in zip(self.entries, other.entries)
        )

    def lines(self, net: FactorSet) -> list[str]:
        out = []
        for values, p in self.entries:
            parts = [f"p={p:.12g}"]
            for v, x in zip(self.scope, values):
                var = net.variables[v]
                parts.append(f"{var.name}={var.labels[x]}")
            out.append(" ".join(parts))
        return out


def max_set(pairs: Iterable[Pair], rtol: float = RTOL) -> list[Pair]:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("max of an empty hypothesis set")
    top = max(p for _, p in pairs)
    seen = set()
    out = []
    for inst, p in pairs:
        if p >= top * (1.0 - rtol) and inst not in seen:
            seen.add(inst)
            out.append((inst, p))
    return out


def _merge(i: tuple, j: tuple) -> tuple:
    d = dict(i)
    for v, x in j:
        if d.setdefault(v, x) != x:
            raise AssertionError(f"hypotheses disagree on variable {v}")
    return tuple(sorted(d.items()))


def cross(left: Iterable[Pair], right: Iterable[Pair]) -> list[Pair]:
    right = list(right)
    return [(_merge(i, j), p * q) for i, p in left for j, q in right]


@dataclass
class InvalidationReport:
    cleared: list[int]
    retained_cells: int


def _cells(value) -> int:
    return len(value) if isinstance(value, list) else 1


def _run_map(s: Session, hyp: frozenset[int], evidence: Instantiation, cap: int) -> list[Pair]:
    tree = s.tree
    nodes = tree.nodes
    factors = tree.factors.factors
    rec = s.recorded
    cards = s.cards
    caches = s.caches
    admit = s.admit
    stats = s.stats
    keys = s.context_keys
    ev = set(evidence)
    summing = {n.id: bool(set(n.cutset) - hyp - ev) for n in tree.internal()}

    def rcmap(nid: int) -> list[Pair]:
        st = stats[nid]
        st.calls += 1
        node = nodes[nid]
        if node.factor is not None:
            f = factors[node.factor]
            p = f.values[sum(rec[v] * k for v, k in zip(f.scope, f.strides))]
            return [(tuple((v, rec[v]) for v in f.scope if v in hyp), p)]
        key = 0
        for v, k in keys[nid]:
            key += rec[v] * k
        cache = caches[nid]
        if key in cache:
            st.hits += 1
            return cache[key]
        st.misses += 1
        free = [v for v in node.cutset if rec[v] < 0]
        cases = itertools.product(*(range(cards[v]) for v in free))
        if summing[nid]:
            total = 0.0
            inst = ()
            for combo in cases:
                for v, x in zip(free, combo):
                    rec[v] = x
                (il, pl), = rcmap(node.left)
                (ir, pr), = rcmap(node.right)
                total += pl * pr
                inst = _merge(il, ir)
            result = [(inst, total)]
        else:
            result = []
            for combo in cases:
                for v, x in zip(free, combo):
                    rec[v] = x
                result = max_set(result + cross(rcmap(node.left), rcmap(node.right)))
                if len(result) > cap:
                    for v in free:
                        rec[v] = -1
                    raise HypothesisOverflow(f"more than {cap} tied hypotheses at node {nid}")
        for v in free:
            rec[v] = -1
        allowed = admit[nid]
        if allowed is None or key in allowed:
            cache[key] = result
            st.cached += 1
            s.cells += len(result)
            if s.cells > s.peak_cells:
                s.peak_cells = s.cells
        return result

    s.record(evidence)
    try:
        return rcmap(0)
    finally:
        s.unrecord(evidence)


def _query(s: Session, hyp: frozenset[int], evidence: Instantiation, mode, cap: int) -> list[Pair]:
    tree = s.tree
    violations = validate_map_dtree(tree, sorted(hyp), ignore=sorted(evidence))
    if violations:
        desc = ", ".join(f"node {a} under node {b}" for a, b in violations[:5])
        raise MapDtreeError(f"dtree mixes MAP and summation phases: {desc}")
    for leaf in tree.leaves():
        loose = set(leaf.vars) - set(leaf.acutset) - set(evidence)
        if loose:
            raise MapDtreeError(
                f"leaf {leaf.id} has variables no ancestor cutset instantiates; build the dtree with el2sdt"
            )
    if s.mode == mode and s.evidence == evidence and s.has_run:
        s.reset(clear_caches=False)
    else:
        s.reset()
    s.mode, s.evidence = mode, dict(evidence)
    pairs = _run_map(s, hyp, evidence, cap)
    s.has_run = True
    return pairs


def _finish(scope, pairs: list[Pair], single: bool) -> HypothesisSet:
    hs = HypothesisSet.from_pairs(scope, pairs)
    if single and len(hs.entries) > 1:
        hs = HypothesisSet(hs.scope, hs.entries[:1])
    return hs


def rc_map(
    s: Session,
    map_vars: Sequence[int],
    evidence: Instantiation | None = None,
    *,
    single: bool = False,
    cap: int = DEFAULT_CAP,
) -> HypothesisSet:
    """Most probable instantiations of ``map_vars`` given ``evidence``.

    Needs a dtree where no MAP cutset lies below a summation cutset and every
    leaf variable is instantiated on arrival (:func:`el2sdt` over an order
    that eliminates the MAP variables last).  Caches carry over between calls
    on the same session as long as the evidence is unchanged or was changed
    through :func:`update_evidence`.
    """
    evidence = dict(evidence or {})
    m = frozenset(map_vars)
    clash = m & set(evidence)
    if clash:
        names = " ".join(s.tree.factors.variables[v].name for v in sorted(clash))
        raise ValueError(f"MAP variables also carry evidence: {names}")
    pairs = _query(s, m, evidence, ("map", m), cap)
    return _finish(m, pairs, single)


def rc_mpe(
    s: Session, evidence: Instantiation | None = None, *, single: bool = False, cap: int = DEFAULT_CAP
) -> HypothesisSet:
    evidence = dict(evidence or {})
    everything = frozenset(range(len(s.tree.factors.variables)))
    pairs = _query(s, everything, evidence, ("mpe",), cap)
    return _finish(everything, pairs, single)


def update_evidence(s: Session, new_evidence: Instantiation) -> InvalidationReport:
    """Switch the session to ``new_evidence`` keeping every cache it cannot affect.

    Only caches on the path from a leaf whose factor mentions a changed
    variable up to the root are cleared.
    """
    if not s.has_run:
        raise RuntimeError("no query has been run on this session")
    old = s.evidence or {}
    new = dict(new_evidence)
    s.tree.factors.check_instantiation(new)
    delta = {v for v in set(old) | set(new) if old.get(v) != new.get(v)}
    cleared = set()
    for leaf in s.tree.leaves():
        if delta & set(leaf.vars):
            cleared.update(s.tree.ancestors(leaf.id))
    for nid in cleared:
        cache = s.caches[nid]
        s.cells -= sum(_cells(v) for v in cache.values())
        cache.clear()
    s.evidence = new
    return InvalidationReport(sorted(cleared), s.cells)
