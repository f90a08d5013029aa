"""Rate expression trees: parsing, evaluation, rendering, dimension inference.

The grammar covers arithmetic over identifiers: ``+ - * / ^`` with
parentheses and unary minus; ``^`` binds tightest and is right-associative.
Trees serialize to nested lists (JSON-friendly) and render back to a
canonical text with minimal parentheses.

Dimension inference supports symbolic exponents so Hill terms like
``Vmax*C^n/(K^n + C^n)`` type-check: a power with a symbolic dimensionless
exponent over a dimensioned base is tracked as an opaque factor that must
cancel against an identical factor before the expression is accepted.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

from .errors import DimensionError, ExprParseError
from .units import DIMENSIONLESS, UnitExpr

Node = tuple  # ("num", v) | ("sym", name) | ("neg", x) | (op, l, r) for op in + - * / ^

_TOKEN_RE = re.compile(r"\s*(\d+\.?\d*(?:[eE][+-]?\d+)?|[A-Za-z_][A-Za-z0-9_]*|\^|\*|/|\+|-|\(|\))")


def parse_expr(text: str) -> Node:
    """Parse expression text into a tree; raises ExprParseError with position."""
    tokens: list[tuple[str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise ExprParseError(text, pos, f"unexpected character {text[pos]!r}")
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    if not tokens:
        raise ExprParseError(text, 0, "empty expression")

    idx = 0

    def peek() -> str | None:
        return tokens[idx][0] if idx < len(tokens) else None

    def cur_pos() -> int:
        return tokens[idx][1] if idx < len(tokens) else len(text)

    def advance() -> str:
        nonlocal idx
        tok = tokens[idx][0]
        idx += 1
        return tok

    def parse_sum() -> Node:
        node = parse_product()
        while peek() in ("+", "-"):
            op = advance()
            node = (op, node, parse_product())
        return node

    def parse_product() -> Node:
        node = parse_unary()
        while peek() in ("*", "/"):
            op = advance()
            node = (op, node, parse_unary())
        return node

    def parse_unary() -> Node:
        if peek() == "-":
            advance()
            return ("neg", parse_unary())
        if peek() == "+":
            advance()
            return parse_unary()
        return parse_power()

    def parse_power() -> Node:
        base = parse_primary()
        if peek() == "^":
            advance()
            return ("^", base, parse_unary())
        return base

    def parse_primary() -> Node:
        tok = peek()
        if tok is None:
            raise ExprParseError(text, cur_pos(), "unexpected end of expression")
        if tok == "(":
            advance()
            node = parse_sum()
            if peek() != ")":
                raise ExprParseError(text, cur_pos(), "expected ')'")
            advance()
            return node
        if tok[0].isdigit():
            advance()
            return ("num", float(tok))
        if tok[0].isalpha() or tok[0] == "_":
            advance()
            return ("sym", tok)
        raise ExprParseError(text, cur_pos(), f"unexpected token {tok!r}")

    node = parse_sum()
    if idx != len(tokens):
        raise ExprParseError(text, cur_pos(), f"trailing token {peek()!r}")
    return node


def symbols(node: Node) -> set[str]:
    kind = node[0]
    if kind == "sym":
        return {node[1]}
    if kind == "num":
        return set()
    if kind == "neg":
        return symbols(node[1])
    return symbols(node[1]) | symbols(node[2])


def evaluate(node: Node, env: Mapping[str, float]) -> float:
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "sym":
        return env[node[1]]
    if kind == "neg":
        return -evaluate(node[1], env)
    a = evaluate(node[1], env)
    b = evaluate(node[2], env)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if kind == "/":
        return a / b
    if kind == "^":
        return a**b
    raise ValueError(f"unknown node kind {kind!r}")


def compile_fn(node: Node) -> Callable[[Mapping[str, float]], float]:
    """Compile the tree to a closure; avoids re-walking per RHS evaluation."""
    kind = node[0]
    if kind == "num":
        v = node[1]
        return lambda env: v
    if kind == "sym":
        name = node[1]
        return lambda env: env[name]
    if kind == "neg":
        f = compile_fn(node[1])
        return lambda env: -f(env)
    fa = compile_fn(node[1])
    fb = compile_fn(node[2])
    if kind == "+":
        return lambda env: fa(env) + fb(env)
    if kind == "-":
        return lambda env: fa(env) - fb(env)
    if kind == "*":
        return lambda env: fa(env) * fb(env)
    if kind == "/":
        return lambda env: fa(env) / fb(env)
    if kind == "^":
        return lambda env: fa(env) ** fb(env)
    raise ValueError(f"unknown node kind {kind!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def render_expr(node: Node, parent_prec: int = 0, right: bool = False) -> str:
    kind = node[0]
    if kind == "num":
        v = node[1]
        return repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(v)
    if kind == "sym":
        return node[1]
    if kind == "neg":
        inner = render_expr(node[1], _PREC["neg"])
        text = f"-{inner}"
        return f"({text})" if parent_prec > _PREC["neg"] else text
    prec = _PREC[kind]
    # Division and subtraction need parens on an equal-precedence right child.
    left_text = render_expr(node[1], prec)
    right_text = render_expr(node[2], prec + (1 if kind in ("-", "/", "^") else 0))
    if kind == "^":
        left_text = render_expr(node[1], prec + 1)
        right_text = render_expr(node[2], prec)
    text = f"{left_text}{kind}{right_text}"
    if prec < parent_prec or (right and prec == parent_prec):
        return f"({text})"
    return text


def rename_symbols(node: Node, mapping: Mapping[str, str]) -> Node:
    kind = node[0]
    if kind == "sym":
        return ("sym", mapping.get(node[1], node[1]))
    if kind == "num":
        return node
    if kind == "neg":
        return ("neg", rename_symbols(node[1], mapping))
    return (kind, rename_symbols(node[1], mapping), rename_symbols(node[2], mapping))


def to_jsonable(node: Node) -> list:
    kind = node[0]
    if kind in ("num", "sym"):
        return [kind, node[1]]
    if kind == "neg":
        return ["neg", to_jsonable(node[1])]
    return [kind, to_jsonable(node[1]), to_jsonable(node[2])]


def from_jsonable(data: list) -> Node:
    kind = data[0]
    if kind in ("num", "sym"):
        return (kind, data[1])
    if kind == "neg":
        return ("neg", from_jsonable(data[1]))
    return (kind, from_jsonable(data[1]), from_jsonable(data[2]))


@dataclass(frozen=True)
class Dim:
    """An inferred dimension: concrete unit dims plus opaque symbolic factors.

    ``sym_factors`` maps (exponent symbol, base dims) -> integer count; a
    nonzero count means the expression contains an uncancelled ``base^sym``
    power whose concrete dimension is unknown.
    """

    dims: tuple[int, int, int, int]
    sym_factors: tuple[tuple[tuple[str, tuple[int, int, int, int]], int], ...] = ()

    @property
    def concrete(self) -> bool:
        return not self.sym_factors

    def mul(self, other: "Dim", sign: int = 1) -> "Dim":
        dims = tuple(a + sign * b for a, b in zip(self.dims, other.dims))
        counts = dict(self.sym_factors)
        for key, n in other.sym_factors:
            counts[key] = counts.get(key, 0) + sign * n
            if counts[key] == 0:
                del counts[key]
        return Dim(dims, tuple(sorted(counts.items())))


def _flatten(node: Node, op: str) -> Iterator[Node]:
    if node[0] == op:
        yield from _flatten(node[1], op)
        yield from _flatten(node[2], op)
    else:
        yield node


def infer_dims(node: Node, env: Mapping[str, UnitExpr]) -> Dim:
    """Infer the dimension of a tree, given units for every symbol.

    Raises DimensionError naming the offending terms for additive mismatches
    and for powers that cannot be typed.
    """
    kind = node[0]
    if kind == "num":
        return Dim(DIMENSIONLESS)
    if kind == "sym":
        name = node[1]
        if name == "t":
            return Dim((0, 0, 0, 1))
        if name not in env:
            raise DimensionError(f"symbol {name!r} has no declared unit")
        return Dim(env[name].dims)
    if kind == "neg":
        return infer_dims(node[1], env)
    if kind in ("+", "-"):
        terms = list(_flatten(node, kind)) if kind == "+" else [node[1], node[2]]
        dim = infer_dims(terms[0], env)
        for term in terms[1:]:
            d = infer_dims(term, env)
            if d != dim:
                raise DimensionError(
                    "additive terms have different dimensions: "
                    f"{render_expr(terms[0])!r} has {dim.dims}{' (symbolic)' if not dim.concrete else ''}, "
                    f"{render_expr(term)!r} has {d.dims}{' (symbolic)' if not d.concrete else ''}"
                )
        return dim
    if kind == "*":
        return infer_dims(node[1], env).mul(infer_dims(node[2], env))
    if kind == "/":
        return infer_dims(node[1], env).mul(infer_dims(node[2], env), sign=-1)
    if kind == "^":
        base_dim = infer_dims(node[1], env)
        exp = node[2]
        exp_dim = infer_dims(exp, env)
        if exp_dim.dims != DIMENSIONLESS or not exp_dim.concrete:
            raise DimensionError(
                f"exponent {render_expr(exp)!r} must be dimensionless"
            )
        if base_dim.dims == DIMENSIONLESS and base_dim.concrete:
            return Dim(DIMENSIONLESS)
        if exp[0] == "num":
            v = exp[1]
            if not float(v).is_integer():
                raise DimensionError(
                    f"non-integer exponent {v!r} over dimensioned base "
                    f"{render_expr(node[1])!r}"
                )
            n = int(v)
            if not base_dim.concrete:
                raise DimensionError(
                    f"numeric power of a symbolic-dimension base {render_expr(node[1])!r}"
                )
            return Dim(tuple(d * n for d in base_dim.dims))
        # Symbolic dimensionless exponent over a dimensioned base: opaque factor.
        exp_key = render_expr(exp)
        if not base_dim.concrete:
            raise DimensionError(
                f"nested symbolic power in {render_expr(node)!r}"
            )
        return Dim(DIMENSIONLESS, (((exp_key, base_dim.dims), 1),))
    raise ValueError(f"unknown node kind {kind!r}")


def check_dimensions(
    node: Node,
    env: Mapping[str, UnitExpr],
    required_dims: tuple[int, int, int, int] | None = None,
) -> UnitExpr:
    """Infer the unit dims of an expression; optionally enforce required dims.

    Returns a UnitExpr with unit scale carrying the inferred dimension vector
    (scales of the environment units do not affect the verdict).
    """
    dim = infer_dims(node, env)
    if not dim.concrete:
        pending = ", ".join(f"{base}^{sym}" for (sym, base), _n in dim.sym_factors)
        raise DimensionError(
            f"expression {render_expr(node)!r} has uncancelled symbolic powers: {pending}"
        )
    if required_dims is not None and dim.dims != required_dims:
        raise DimensionError(
            f"expression {render_expr(node)!r} has dims {dim.dims}, required {required_dims}"
        )
    return UnitExpr(1.0, dim.dims)
