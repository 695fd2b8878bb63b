"""Variables, instantiations and factor tables.

Instantiations are plain ``dict[int, int]`` maps from variable id to value
index.  Factor tables are flat and laid out in mixed radix with the last
scope variable varying fastest, so ``values[i]`` for scope ``(A, B)`` with
binary variables runs over ``a0b0, a0b1, a1b0, a1b1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Sequence

Instantiation = Dict[int, int]


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    cardinality: int
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.cardinality < 1:
            raise ValueError(f"variable {self.name!r}: cardinality must be >= 1")
        if len(self.labels) != self.cardinality:
            raise ValueError(
                f"variable {self.name!r}: expected {self.cardinality} labels, "
                f"got {len(self.labels)}"
            )
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"variable {self.name!r}: duplicate labels")

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"variable {self.name!r} has no value {label!r}") from None


def strides_for(cards: Sequence[int]) -> tuple[int, ...]:
    """Mixed-radix strides with the last position varying fastest."""
    strides = [1] * len(cards)
    for i in range(len(cards) - 2, -1, -1):
        strides[i] = strides[i + 1] * cards[i + 1]
    return tuple(strides)


@dataclass(frozen=True)
class Factor:
    scope: tuple[int, ...]
    cards: tuple[int, ...]
    values: tuple[float, ...]
    name: str = ""
    unit: bool = False
    strides: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "strides", strides_for(self.cards))

    def __len__(self):
        return len(self.values)

    def index(self, inst: Instantiation) -> int:
        try:
            return sum(inst[v] * s for v, s in zip(self.scope, self.strides))
        except KeyError as exc:
            raise KeyError(f"variable id {exc.args[0]} of factor scope is unassigned") from None


def make_factor(
    scope: Sequence[Variable], values: Iterable[float], name: str = "", unit: bool = False
) -> Factor:
    scope = tuple(scope)
    ids = tuple(v.id for v in scope)
    if len(set(ids)) != len(ids):
        raise ValueError("factor scope repeats a variable")
    cards = tuple(v.cardinality for v in scope)
    values = tuple(float(x) for x in values)
    expected = math.prod(cards)
    if len(values) != expected:
        raise ValueError(f"factor over {len(scope)} variables needs {expected} values, got {len(values)}")
    for x in values:
        if not math.isfinite(x) or x < 0:
            raise ValueError(f"factor values must be finite and nonnegative, got {x!r}")
    return Factor(ids, cards, values, name, unit)


def unit_factor(var: Variable) -> Factor:
    return make_factor([var], [1.0] * var.cardinality, name=f"__unit_{var.name}", unit=True)


def factor_value(f: Factor, inst: Instantiation) -> float:
    return f.values[f.index(inst)]


def instantiation_count(variables: Iterable[Variable]) -> int:
    return math.prod(v.cardinality for v in variables)


def enumerate_consistent(
    variables: Sequence[Variable], recorded: Instantiation | None = None
) -> Iterator[Instantiation]:
    """Yield every instantiation of ``variables`` that agrees with ``recorded``.

    Variables already recorded keep their value; the rest run in mixed-radix
    order (in the given sequence order, last fastest).
    """
    recorded = dict(recorded or {})
    fixed = {v.id: recorded[v.id] for v in variables if v.id in recorded}
    free = [v for v in variables if v.id not in recorded]
    for combo in itertools.product(*(range(v.cardinality) for v in free)):
        inst = dict(fixed)
        inst.update(zip((v.id for v in free), combo))
        yield {v.id: inst[v.id] for v in variables}


@dataclass(frozen=True)
class FactorSet:
    variables: tuple[Variable, ...]
    factors: tuple[Factor, ...]

    def __post_init__(self):
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise ValueError(f"variable ids must be dense, {v.name!r} has id {v.id} at position {i}")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        for f in self.factors:
            for vid, card in zip(f.scope, f.cards):
                if not 0 <= vid < len(self.variables):
                    raise ValueError(f"factor {f.name!r} references unknown variable id {vid}")
                if self.variables[vid].cardinality != card:
                    raise ValueError(f"factor {f.name!r} disagrees on cardinality of {self.variables[vid].name!r}")

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def variable(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"unknown variable {name!r}")

    def with_factors(self, extra: Iterable[Factor]) -> "FactorSet":
        return FactorSet(self.variables, self.factors + tuple(extra))

    def check_instantiation(self, inst: Instantiation) -> None:
        for vid, val in inst.items():
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"unknown variable id {vid}")
            if not 0 <= val < self.variables[vid].cardinality:
                raise ValueError(f"value {val} out of range for {self.variables[vid].name!r}")

    def describe(self, inst: Instantiation) -> str:
        return ",".join(
            f"{self.variables[v].name}={self.variables[v].labels[inst[v]]}" for v in sorted(inst)
        )
