"""Variable elimination, instrumented for peak memory.

Cell accounting: input tables count from the start; restricting a table by
evidence and summing a variable out of a bucket product happen in place
(the smaller result replaces the larger table); multiplying two or more
tables allocates the product while its inputs are still alive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import FactorSet, Instantiation
from .rc import BYTES_PER_CELL, BYTES_PER_COUNTED_CELL

MB = 2**20


@dataclass
class VeStep:
    variable: int
    consumed: list[int]
    produced: int
    produced_size: int


@dataclass
class VeRun:
    result: float
    peak_cells: int
    initial_cells: int
    steps: list[VeStep] = field(default_factory=list)


def _multiply(tables: list[tuple[tuple[int, ...], np.ndarray]]) -> tuple[tuple[int, ...], np.ndarray]:
    scope = tuple(sorted(set().union(*(s for s, _ in tables))))
    local = {v: i for i, v in enumerate(scope)}
    args = []
    for s, arr in tables:
        args += [arr, [local[v] for v in s]]
    return scope, np.einsum(*args, list(range(len(scope))))


def ve_prob(net: FactorSet, order: Sequence[int], evidence: Instantiation | None = None) -> VeRun:
    evidence = dict(evidence or {})
    if sorted(order) != list(range(len(net.variables))):
        raise ValueError("elimination order must be a permutation of all variables")
    net.check_instantiation(evidence)

    live: dict[int, tuple[tuple[int, ...], np.ndarray]] = {}
    for i, f in enumerate(net.factors):
        arr = np.asarray(f.values, dtype=float).reshape(f.cards) if f.scope else np.asarray(f.values[0])
        live[i] = (f.scope, arr)
    cells = sum(a.size for _, a in live.values())
    initial = peak = cells

    for i, (scope, arr) in list(live.items()):
        if any(v in evidence for v in scope):
            index = tuple(evidence[v] if v in evidence else slice(None) for v in scope)
            new = arr[index]
            cells += new.size - arr.size
            live[i] = (tuple(v for v in scope if v not in evidence), new)

    run = VeRun(0.0, peak, initial)
    next_id = len(net.factors)
    for x in order:
        bucket = [i for i, (s, _) in live.items() if x in s]
        if not bucket:
            continue
        if len(bucket) == 1:
            scope, prod = live[bucket[0]]
        else:
            scope, prod = _multiply([live[i] for i in bucket])
            cells += prod.size
            peak = max(peak, cells)
        for i in bucket:
            cells -= live.pop(i)[1].size
        if len(bucket) == 1:
            cells += prod.size
        axis = scope.index(x)
        out = prod.sum(axis=axis)
        cells += out.size - prod.size
        live[next_id] = (scope[:axis] + scope[axis + 1:], out)
        run.steps.append(VeStep(x, bucket, next_id, int(out.size)))
        next_id += 1

    run.result = float(math.prod(float(a) for _, a in live.values()))
    run.peak_cells = peak
    return run


@dataclass
class MemoryReport:
    ve_cells: int
    rc_cells: int

    @property
    def cells_ratio(self) -> float:
        return self.ve_cells / self.rc_cells if self.rc_cells else math.inf

    @property
    def ve_mb(self) -> float:
        return BYTES_PER_CELL * self.ve_cells / MB

    @property
    def rc_mb(self) -> float:
        return BYTES_PER_COUNTED_CELL * self.rc_cells / MB

    @property
    def mb_ratio(self) -> float:
        return self.ve_mb / self.rc_mb if self.rc_cells else math.inf

    def row(self, network: str) -> list[str]:
        def log2(n):
            return f"{math.log2(n):.1f}" if n > 0 else "-inf"

        def num(x):
            return "inf" if math.isinf(x) else f"{x:.2f}"

        return [
            network, log2(self.ve_cells), log2(self.rc_cells),
            num(self.cells_ratio), f"{self.ve_mb:.2f}", f"{self.rc_mb:.2f}", num(self.mb_ratio),
        ]


REPORT_HEADER = ["network", "ve_cells_log2", "rc_cells_log2", "cells_ratio", "ve_mb", "rc_mb", "mb_ratio"]


def memory_report(ve: VeRun | int, rc_peak_cells: int) -> MemoryReport:
    ve_cells = ve.peak_cells if isinstance(ve, VeRun) else int(ve)
    return MemoryReport(ve_cells, rc_peak_cells)
