"""Text format for factor networks, elimination orders and evidence.

A network file is a sequence of ``variable`` and ``factor`` blocks::

    # two binary variables and one joint table
    variable A 2 true false
    variable B 2 true false
    factor A B
    .32 .28 .10 .30

Values follow the header and may span several lines; there must be exactly
as many as the product of the scope cardinalities, laid out with the last
scope variable varying fastest.  ``#`` starts a comment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import Factor, FactorSet, Instantiation, Variable, make_factor


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class NetworkDocument:
    network: FactorSet
    variable_lines: list[int] = field(default_factory=list)
    factor_lines: list[int] = field(default_factory=list)


def _tokens(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        for tok in raw.split("#", 1)[0].split():
            yield lineno, tok


def _number(tok: str, lineno: int) -> float:
    # float() also takes "nan", "inf" and "1_000"; none of those belong here
    if "_" in tok or not any(c.isdigit() for c in tok):
        raise ParseError(f"expected a number, got {tok!r}", lineno)
    try:
        x = float(tok)
    except ValueError:
        raise ParseError(f"expected a number, got {tok!r}", lineno) from None
    if not math.isfinite(x) or x < 0:
        raise ParseError(f"factor values must be finite and nonnegative, got {tok!r}", lineno)
    return x


def parse_document(text: str) -> NetworkDocument:
    toks = list(_tokens(text))
    variables: list[Variable] = []
    by_name: dict[str, Variable] = {}
    factors: list[Factor] = []
    doc = NetworkDocument(FactorSet((), ()))
    i = 0

    def header(start: int) -> tuple[int, list[str]]:
        # a header is every token on the keyword's line
        lineno = toks[start][0]
        j = start
        words = []
        while j < len(toks) and toks[j][0] == lineno:
            words.append(toks[j][1])
            j += 1
        return j, words

    while i < len(toks):
        lineno, kw = toks[i]
        if kw == "variable":
            i, words = header(i)
            if len(words) < 3:
                raise ParseError("expected: variable <name> <cardinality> <labels...>", lineno)
            name, card_tok, labels = words[1], words[2], tuple(words[3:])
            if name in by_name:
                raise ParseError(f"duplicate variable {name!r}", lineno)
            if not card_tok.isdigit() or int(card_tok) < 1:
                raise ParseError(f"bad cardinality {card_tok!r} for {name!r}", lineno)
            try:
                var = Variable(len(variables), name, int(card_tok), labels)
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            variables.append(var)
            by_name[name] = var
            doc.variable_lines.append(lineno)
        elif kw == "factor":
            i, words = header(i)
            names = words[1:]
            if not names:
                raise ParseError("factor with an empty scope", lineno)
            scope = []
            for n in names:
                if n not in by_name:
                    raise ParseError(f"unknown variable {n!r} in factor scope", lineno)
                scope.append(by_name[n])
            if len(set(names)) != len(names):
                raise ParseError("factor scope repeats a variable", lineno)
            size = math.prod(v.cardinality for v in scope)
            values = []
            while len(values) < size:
                if i >= len(toks):
                    raise ParseError(f"factor {' '.join(names)} needs {size} values, got {len(values)}", lineno)
                vline, tok = toks[i]
                if tok in ("variable", "factor"):
                    raise ParseError(f"factor {' '.join(names)} needs {size} values, got {len(values)}", vline)
                values.append(_number(tok, vline))
                i += 1
            factors.append(make_factor(scope, values, name=f"f{len(factors)}"))
            doc.factor_lines.append(lineno)
        else:
            raise ParseError(f"unexpected token {kw!r}", lineno)

    doc.network = FactorSet(tuple(variables), tuple(factors))
    return doc


def parse_network(text: str) -> FactorSet:
    return parse_document(text).network


def _format_value(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def serialize_network(net: FactorSet) -> str:
    """Inverse of :func:`parse_network`; unit factors are omitted."""
    lines = []
    for v in net.variables:
        lines.append(" ".join(["variable", v.name, str(v.cardinality), *v.labels]))
    for f in net.factors:
        if f.unit:
            continue
        lines.append(" ".join(["factor", *(net.variables[x].name for x in f.scope)]))
        lines.append(" ".join(_format_value(x) for x in f.values))
    return "\n".join(lines) + "\n"


def parse_order(text: str, net: FactorSet) -> list[int]:
    seen: list[int] = []
    for lineno, name in _tokens(text):
        try:
            vid = net.variable(name).id
        except KeyError:
            raise ParseError(f"unknown variable {name!r} in order", lineno) from None
        if vid in seen:
            raise ParseError(f"variable {name!r} appears twice in order", lineno)
        seen.append(vid)
    missing = [v.name for v in net.variables if v.id not in seen]
    if missing:
        raise ParseError(f"order is missing variables: {' '.join(missing)}")
    return seen


def parse_evidence(text: str, net: FactorSet) -> Instantiation:
    evidence: Instantiation = {}
    text = text.strip()
    if not text:
        return evidence
    for item in text.split(","):
        name, sep, label = (s.strip() for s in item.partition("="))
        if not sep or not name or not label:
            raise ParseError(f"bad evidence item {item.strip()!r}, expected name=label")
        try:
            var = net.variable(name)
        except KeyError:
            raise ParseError(f"unknown variable {name!r} in evidence") from None
        if var.id in evidence:
            raise ParseError(f"variable {name!r} assigned twice in evidence")
        try:
            evidence[var.id] = var.index_of(label)
        except KeyError:
            raise ParseError(f"variable {name!r} has no value {label!r}") from None
    return evidence


def parse_names(text: str, net: FactorSet) -> list[int]:
    """Comma- or whitespace-separated variable names to ids."""
    ids = []
    for name in text.replace(",", " ").split():
        try:
            vid = net.variable(name).id
        except KeyError:
            raise ParseError(f"unknown variable {name!r}") from None
        if vid not in ids:
            ids.append(vid)
    return ids
