"""Brute-force reference answers and random test networks.

Everything here enumerates full instantiations, so it is only usable on
small networks; it exists to check the real engines.
"""

from __future__ import annotations

import itertools
import math
import random
from typing import Sequence

from .mapmpe import HypothesisSet
from .model import FactorSet, Instantiation, Variable, make_factor

MAX_INSTANTIATIONS = 2**24


def _guard(net: FactorSet) -> None:
    n = math.prod(net.cards)
    if n > MAX_INSTANTIATIONS:
        raise ValueError(f"{n} joint instantiations is too many to enumerate")


def _weights(net: FactorSet, evidence: Instantiation):
    """Yield (full instantiation tuple, factor product) for consistent rows."""
    _guard(net)
    ranges = [
        (evidence[v.id],) if v.id in evidence else range(v.cardinality) for v in net.variables
    ]
    for values in itertools.product(*ranges):
        p = 1.0
        for f in net.factors:
            p *= f.values[sum(values[v] * s for v, s in zip(f.scope, f.strides))]
        yield values, p


def joint_prob(net: FactorSet, evidence: Instantiation | None = None) -> float:
    evidence = dict(evidence or {})
    net.check_instantiation(evidence)
    return math.fsum(p for _, p in _weights(net, evidence))


def _argmax(scope, table: dict, rtol: float) -> HypothesisSet:
    top = max(table.values())
    keep = sorted((k, p) for k, p in table.items() if p >= top * (1.0 - rtol))
    return HypothesisSet(tuple(scope), tuple(keep))


def brute_mpe(net: FactorSet, evidence: Instantiation | None = None, rtol: float = 1e-12) -> HypothesisSet:
    evidence = dict(evidence or {})
    net.check_instantiation(evidence)
    table = dict(_weights(net, evidence))
    return _argmax(range(len(net.variables)), table, rtol)


def brute_map(
    net: FactorSet, map_vars: Sequence[int], evidence: Instantiation | None = None, rtol: float = 1e-12
) -> HypothesisSet:
    evidence = dict(evidence or {})
    net.check_instantiation(evidence)
    scope = sorted(set(map_vars))
    if set(scope) & set(evidence):
        raise ValueError("MAP variables also carry evidence")
    sums: dict[tuple, list[float]] = {}
    for values, p in _weights(net, evidence):
        sums.setdefault(tuple(values[v] for v in scope), []).append(p)
    table = {k: math.fsum(ps) for k, ps in sums.items()}
    return _argmax(scope, table, rtol)


def random_factor_set(
    rng: random.Random,
    max_vars: int = 10,
    max_factors: int = 12,
    max_scope: int = 3,
    cards: Sequence[int] = (2, 3),
    zero_prob: float = 0.0,
    min_vars: int = 2,
) -> FactorSet:
    """A random factor set in which every variable appears in some factor."""
    n = rng.randint(min_vars, max_vars)
    variables = []
    for i in range(n):
        k = rng.choice(cards)
        variables.append(Variable(i, f"X{i}", k, tuple(f"v{j}" for j in range(k))))
    m = rng.randint(max(1, math.ceil(n / max_scope)), max(max_factors, math.ceil(n / max_scope)))
    scopes = [rng.sample(range(n), rng.randint(1, min(max_scope, n))) for _ in range(m)]
    covered = set().union(*scopes)
    for v in range(n):
        if v not in covered:
            # put the orphan into a scope with room, else a new factor, else overfill
            roomy = [s for s in scopes if len(s) < max_scope]
            if roomy:
                rng.choice(roomy).append(v)
            elif len(scopes) < max_factors:
                scopes.append([v])
            else:
                rng.choice(scopes).append(v)
    factors = []
    for i, s in enumerate(scopes):
        size = math.prod(variables[v].cardinality for v in s)
        values = [0.0 if rng.random() < zero_prob else rng.uniform(0.05, 1.0) for _ in range(size)]
        factors.append(make_factor([variables[v] for v in s], values, name=f"f{i}"))
    return FactorSet(tuple(variables), tuple(factors))


def random_cpt_network(rng: random.Random, n: int = 8, max_parents: int = 2, cards: Sequence[int] = (2, 3)) -> FactorSet:
    """A Bayesian network: one conditional table per variable, parents earlier."""
    variables = []
    for i in range(n):
        k = rng.choice(cards)
        variables.append(Variable(i, f"X{i}", k, tuple(f"v{j}" for j in range(k))))
    factors = []
    for i, child in enumerate(variables):
        parents = rng.sample(range(i), min(i, rng.randint(0, max_parents)))
        scope = [variables[p] for p in parents] + [child]
        rows = math.prod(v.cardinality for v in scope[:-1])
        values = []
        for _ in range(rows):
            w = [rng.uniform(0.05, 1.0) for _ in range(child.cardinality)]
            values += [x / sum(w) for x in w]
        factors.append(make_factor(scope, values, name=f"cpt{i}"))
    return FactorSet(tuple(variables), tuple(factors))


def random_order(rng: random.Random, net: FactorSet) -> list[int]:
    order = list(range(len(net.variables)))
    rng.shuffle(order)
    return order


def random_evidence(rng: random.Random, net: FactorSet, k: int, exclude=()) -> Instantiation:
    pool = [v for v in net.variables if v.id not in set(exclude)]
    chosen = rng.sample(pool, min(k, len(pool)))
    return {v.id: rng.randrange(v.cardinality) for v in chosen}
