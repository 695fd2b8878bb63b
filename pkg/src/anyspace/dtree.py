"""Decomposition trees.

A dtree is a full binary tree whose leaves are the factors of a network.
Trees are built from nested tuples (an ``int`` is a leaf holding that factor
index, a pair is an internal node) and then flattened into preorder with the
variable sets RC needs attached to every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

from .model import FactorSet, unit_factor

Shape = Union[int, tuple]


@dataclass(frozen=True)
class Node:
    id: int
    parent: int | None
    left: int | None
    right: int | None
    factor: int | None
    vars: tuple[int, ...]
    cutset: tuple[int, ...]
    acutset: tuple[int, ...]
    context: tuple[int, ...]
    cluster: tuple[int, ...]

    @property
    def is_leaf(self) -> bool:
        return self.factor is not None


@dataclass(frozen=True)
class Dtree:
    factors: FactorSet
    nodes: tuple[Node, ...]

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def internal(self) -> list[Node]:
        return [n for n in self.nodes if not n.is_leaf]

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.is_leaf]

    def ancestors(self, nid: int) -> list[int]:
        """Strict ancestors of ``nid``, nearest first."""
        out = []
        p = self.nodes[nid].parent
        while p is not None:
            out.append(p)
            p = self.nodes[p].parent
        return out

    def count(self, var_ids: Sequence[int]) -> int:
        cards = self.factors.cards
        return math.prod(cards[v] for v in var_ids)

    @property
    def shape(self) -> Shape:
        def build(n: Node) -> Shape:
            if n.is_leaf:
                return n.factor
            return (build(self.nodes[n.left]), build(self.nodes[n.right]))

        return build(self.root)


def compute_sets(factors: FactorSet, shape: Shape) -> Dtree:
    """Flatten ``shape`` into preorder and attach vars/cutset/acutset/context/cluster."""
    flat: list[dict] = []

    def walk(s: Shape, parent: int | None) -> tuple[int, frozenset]:
        nid = len(flat)
        rec = {"parent": parent, "left": None, "right": None, "factor": None}
        flat.append(rec)
        if isinstance(s, int):
            if not 0 <= s < len(factors.factors):
                raise ValueError(f"leaf refers to missing factor {s}")
            rec["factor"] = s
            rec["vars"] = frozenset(factors.factors[s].scope)
        else:
            if len(s) != 2:
                raise ValueError("internal dtree nodes must have exactly two children")
            rec["left"], lv = walk(s[0], nid)
            rec["right"], rv = walk(s[1], nid)
            rec["vars"] = lv | rv
        return nid, rec["vars"]

    walk(shape, None)
    leaf_ids = [r["factor"] for r in flat if r["factor"] is not None]
    if sorted(leaf_ids) != list(range(len(factors.factors))):
        raise ValueError("dtree leaves must be exactly the factors of the network")

    # preorder visits parents first, so one forward pass carries acutsets down
    acutsets: list[frozenset] = [frozenset()] * len(flat)
    nodes = []
    for nid, rec in enumerate(flat):
        acut = acutsets[nid]
        if rec["factor"] is None:
            cut = (flat[rec["left"]]["vars"] & flat[rec["right"]]["vars"]) - acut
            acutsets[rec["left"]] = acutsets[rec["right"]] = acut | cut
            context = rec["vars"] & acut
            cluster = cut | context
        else:
            cut = frozenset()
            context = rec["vars"] & acut
            cluster = rec["vars"]
        nodes.append(
            Node(
                nid, rec["parent"], rec["left"], rec["right"], rec["factor"],
                tuple(sorted(rec["vars"])), tuple(sorted(cut)), tuple(sorted(acut)),
                tuple(sorted(context)), tuple(sorted(cluster)),
            )
        )
    return Dtree(factors, tuple(nodes))


def _compose(trees: list[tuple[Shape, frozenset, int]]) -> tuple[Shape, frozenset, int]:
    # balanced join, subtrees ordered by their smallest factor index
    trees = sorted(trees, key=lambda t: t[2])

    def build(lo: int, hi: int):
        if hi - lo == 1:
            return trees[lo]
        mid = (lo + hi) // 2
        l, r = build(lo, mid), build(mid, hi)
        return (l[0], r[0]), l[1] | r[1], min(l[2], r[2])

    return build(0, len(trees))


def _check_order(factors: FactorSet, order: Sequence[int]) -> None:
    if not factors.factors:
        raise ValueError("cannot build a dtree over an empty factor set")
    if sorted(order) != list(range(len(factors.variables))):
        raise ValueError("elimination order must be a permutation of all variables")
    mentioned = set()
    for f in factors.factors:
        mentioned.update(f.scope)
    orphans = [factors.variables[v].name for v in order if v not in mentioned]
    if orphans:
        raise ValueError(f"variables appear in no factor: {' '.join(orphans)}")


def _el2dt(factors: FactorSet, order: Sequence[int], split_singletons: bool) -> Dtree:
    _check_order(factors, order)
    extra = []
    forest = [(i, frozenset(f.scope), i) for i, f in enumerate(factors.factors)]
    for x in order:
        gamma = [t for t in forest if x in t[1]]
        if len(gamma) == 1 and split_singletons:
            fid = len(factors.factors) + len(extra)
            extra.append(unit_factor(factors.variables[x]))
            gamma.append((fid, frozenset([x]), fid))
        if not gamma:
            continue
        forest = [t for t in forest if x not in t[1]]
        forest.append(_compose(gamma))
    shape = _compose(forest)[0]
    return compute_sets(factors.with_factors(extra), shape)


def el2dt(factors: FactorSet, order: Sequence[int]) -> Dtree:
    return _el2dt(factors, order, split_singletons=False)


def el2sdt(factors: FactorSet, order: Sequence[int]) -> Dtree:
    """Like :func:`el2dt`, but pairs a lone tree with a unit factor.

    The result has singleton-or-empty cutsets, every variable in some cutset,
    and cutsets ordered along root-to-leaf paths opposite to ``order``.
    """
    return _el2dt(factors, order, split_singletons=True)


def dtree_width(tree: Dtree) -> int:
    return max(len(n.cluster) for n in tree.nodes) - 1


def order_width(factors: FactorSet, order: Sequence[int]) -> int:
    scopes = [frozenset(f.scope) for f in factors.factors]
    width = 0
    for x in order:
        touching = [s for s in scopes if x in s]
        cluster = frozenset([x]).union(*touching)
        width = max(width, len(cluster) - 1)
        scopes = [s for s in scopes if x not in s]
        rest = cluster - {x}
        if rest:
            scopes.append(rest)
    return width


def validate_map_dtree(
    tree: Dtree, map_vars: Sequence[int], ignore: Sequence[int] = ()
) -> list[tuple[int, int]]:
    """Return ``(map_node, offending_node)`` pairs; an empty list means valid.

    A node whose cutset holds a MAP variable must not sit below a node whose
    cutset holds a non-MAP variable, and no cutset may mix the two (the pair
    is then ``(n, n)``).  Variables in ``ignore`` (typically evidence) count
    as neither.
    """
    m = set(map_vars)
    skip = set(ignore)
    violations = []
    for n in tree.internal():
        cut = set(n.cutset) - skip
        if not cut & m:
            continue
        if cut - m:
            violations.append((n.id, n.id))
        for a in tree.ancestors(n.id):
            if set(tree.nodes[a].cutset) - skip - m:
                violations.append((n.id, a))
    return violations


def sdt_properties(tree: Dtree, order: Sequence[int]) -> dict[int, bool]:
    """Check the four structural guarantees of :func:`el2sdt`, keyed 1..4."""
    pos = {v: i for i, v in enumerate(order)}
    in_cutsets = set()
    for n in tree.internal():
        in_cutsets.update(n.cutset)
    ordered = True
    for n in tree.internal():
        for a in tree.ancestors(n.id):
            for x in n.cutset:
                for y in tree.nodes[a].cutset:
                    if pos[x] >= pos[y]:
                        ordered = False
    return {
        1: dtree_width(tree) <= order_width(tree.factors, order),
        2: set(order) <= in_cutsets,
        3: all(len(n.cutset) <= 1 for n in tree.internal()),
        4: ordered,
    }


def dump(tree: Dtree) -> str:
    names = [v.name for v in tree.factors.variables]

    def fmt(ids):
        return "{" + ",".join(names[i] for i in ids) + "}"

    lines = []
    for n in tree.nodes:
        if n.is_leaf:
            f = tree.factors.factors[n.factor]
            head = f"LEAF {f.name or 'f' + str(n.factor)}"
        else:
            head = f"INTERNAL {n.left} {n.right}"
        lines.append(
            f"{n.id} {head} vars={fmt(n.vars)} cutset={fmt(n.cutset)} "
            f"context={fmt(n.context)} cluster={fmt(n.cluster)}"
        )
    return "\n".join(lines)
