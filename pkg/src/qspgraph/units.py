"""Dimensional algebra over the unit grammar used by model documents.

Base dimensions are amount (mol), mass (g), volume (L) and time (s);
molarity is derived as amount/volume so concentrations and amounts stay
interconvertible through compartment volumes.  A ``UnitExpr`` is a positive
scale relative to the canonical base plus an integer exponent vector; two
units are commensurable iff their exponent vectors are equal.

Grammar (product/quotient of atoms with integer powers, plus positive
numeric factors)::

    unit   := factor (('*' | '/') factor)*
    factor := base ('^' signed_int)?
    base   := ATOM | NUMBER | '(' unit ')'

Both the short spellings (``nM``, ``mL/day``) and the long SimBiology-style
spellings (``nanomolarity``, ``milliliter/day``) are accepted.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import DimensionError, UnitParseError

#: dimension vector order: amount, mass, volume, time
DIM_NAMES = ("amount", "mass", "volume", "time")

DIMENSIONLESS = (0, 0, 0, 0)

_AMOUNT = (1, 0, 0, 0)
_MASS = (0, 1, 0, 0)
_VOLUME = (0, 0, 1, 0)
_TIME = (0, 0, 0, 1)
_CONC = (1, 0, -1, 0)

# atom -> (scale, dims); scales are relative to (mol, g, L, s)
_ATOMS: dict[str, tuple[float, tuple[int, int, int, int]]] = {
    "mol": (1.0, _AMOUNT),
    "mmol": (1e-3, _AMOUNT),
    "umol": (1e-6, _AMOUNT),
    "nmol": (1e-9, _AMOUNT),
    "pmol": (1e-12, _AMOUNT),
    "g": (1.0, _MASS),
    "mg": (1e-3, _MASS),
    "ug": (1e-6, _MASS),
    "L": (1.0, _VOLUME),
    "mL": (1e-3, _VOLUME),
    "uL": (1e-6, _VOLUME),
    "s": (1.0, _TIME),
    "minute": (60.0, _TIME),
    "hour": (3600.0, _TIME),
    "day": (86400.0, _TIME),
    "M": (1.0, _CONC),
    "mM": (1e-3, _CONC),
    "uM": (1e-6, _CONC),
    "nM": (1e-9, _CONC),
    "pM": (1e-12, _CONC),
    "1": (1.0, DIMENSIONLESS),
}

# SimBiology-style long spellings and common variants, normalized to atoms.
_ALIASES: dict[str, str] = {
    "mole": "mol",
    "millimole": "mmol",
    "micromole": "umol",
    "nanomole": "nmol",
    "picomole": "pmol",
    "gram": "g",
    "milligram": "mg",
    "microgram": "ug",
    "liter": "L",
    "litre": "L",
    "milliliter": "mL",
    "millilitre": "mL",
    "microliter": "uL",
    "microlitre": "uL",
    "second": "s",
    "sec": "s",
    "min": "minute",
    "h": "hour",
    "hr": "hour",
    "molarity": "M",
    "millimolarity": "mM",
    "micromolarity": "uM",
    "nanomolarity": "nM",
    "picomolarity": "pM",
    "dimensionless": "1",
}

_TOKEN_RE = re.compile(r"\s*(\d+\.?\d*(?:[eE][+-]?\d+)?|[A-Za-z]+[A-Za-z0-9]*|\^|\*|/|\(|\)|-|\+)")


@dataclass(frozen=True)
class UnitExpr:
    """A physical unit: positive scale times a product of base dimensions."""

    scale: float
    dims: tuple[int, int, int, int]

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise DimensionError(f"unit scale must be positive and finite, got {self.scale}")

    def __mul__(self, other: "UnitExpr") -> "UnitExpr":
        return UnitExpr(self.scale * other.scale, tuple(a + b for a, b in zip(self.dims, other.dims)))

    def __truediv__(self, other: "UnitExpr") -> "UnitExpr":
        return UnitExpr(self.scale / other.scale, tuple(a - b for a, b in zip(self.dims, other.dims)))

    def __pow__(self, n: int) -> "UnitExpr":
        return UnitExpr(self.scale**n, tuple(a * n for a in self.dims))

    def commensurable(self, other: "UnitExpr") -> bool:
        return self.dims == other.dims

    @property
    def dimensionless(self) -> bool:
        return self.dims == DIMENSIONLESS


ONE = UnitExpr(1.0, DIMENSIONLESS)
MOLAR = UnitExpr(1.0, _CONC)
PER_SECOND = UnitExpr(1.0, (0, 0, 0, -1))
LITER = UnitExpr(1.0, _VOLUME)
MOLE = UnitExpr(1.0, _AMOUNT)
SECOND = UnitExpr(1.0, _TIME)

CONC_DIMS = _CONC
AMOUNT_DIMS = _AMOUNT
VOLUME_DIMS = _VOLUME
TIME_DIMS = _TIME
MASS_DIMS = _MASS
CLEARANCE_DIMS = (0, 0, 1, -1)
RATE_DIMS = (0, 0, 0, -1)


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: list[tuple[str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                if text[pos:].strip() == "":
                    break
                raise UnitParseError(text, pos, f"unexpected character {text[pos]!r}")
            self.items.append((m.group(1), m.start(1)))
            pos = m.end()
        self.i = 0

    def peek(self) -> str | None:
        return self.items[self.i][0] if self.i < len(self.items) else None

    def pos(self) -> int:
        return self.items[self.i][1] if self.i < len(self.items) else len(self.text)

    def next(self) -> str:
        tok = self.items[self.i][0]
        self.i += 1
        return tok


def _atom(name: str, text: str, pos: int) -> UnitExpr:
    key = _ALIASES.get(name, name)
    if key not in _ATOMS:
        raise UnitParseError(text, pos, f"unknown unit atom {name!r}")
    scale, dims = _ATOMS[key]
    return UnitExpr(scale, dims)


def _parse_factor(toks: _Tokens) -> UnitExpr:
    tok = toks.peek()
    if tok is None:
        raise UnitParseError(toks.text, toks.pos(), "expected unit atom")
    if tok == "(":
        toks.next()
        inner = _parse_expr(toks)
        if toks.peek() != ")":
            raise UnitParseError(toks.text, toks.pos(), "expected ')'")
        toks.next()
        base = inner
    elif tok[0].isdigit():
        toks.next()
        value = float(tok)
        if value <= 0:
            raise UnitParseError(toks.text, toks.pos(), "numeric unit factor must be positive")
        base = UnitExpr(value, DIMENSIONLESS)
    elif tok[0].isalpha():
        pos = toks.pos()
        toks.next()
        base = _atom(tok, toks.text, pos)
    else:
        raise UnitParseError(toks.text, toks.pos(), f"unexpected token {tok!r}")

    if toks.peek() == "^":
        toks.next()
        sign = 1
        if toks.peek() in ("-", "+"):
            sign = -1 if toks.next() == "-" else 1
        exp_tok = toks.peek()
        if exp_tok is None or not exp_tok[0].isdigit():
            raise UnitParseError(toks.text, toks.pos(), "expected integer exponent after '^'")
        toks.next()
        if "." in exp_tok or "e" in exp_tok or "E" in exp_tok:
            raise UnitParseError(toks.text, toks.pos(), "unit exponents must be integers")
        base = base ** (sign * int(exp_tok))
    return base


def _parse_expr(toks: _Tokens) -> UnitExpr:
    unit = _parse_factor(toks)
    while toks.peek() in ("*", "/"):
        op = toks.next()
        rhs = _parse_factor(toks)
        unit = unit * rhs if op == "*" else unit / rhs
    return unit


@lru_cache(maxsize=4096)
def parse_unit(text: str) -> UnitExpr:
    """Parse unit text into a UnitExpr.

    Raises UnitParseError with the offending position for unknown atoms or
    malformed expressions.
    """
    toks = _Tokens(text)
    if toks.peek() is None:
        raise UnitParseError(text, 0, "empty unit")
    unit = _parse_expr(toks)
    if toks.peek() is not None:
        raise UnitParseError(text, toks.pos(), f"trailing token {toks.peek()!r}")
    return unit


def normalize(value: float, from_unit: UnitExpr, to_unit: UnitExpr) -> float:
    """Convert a value between commensurable units."""
    if not from_unit.commensurable(to_unit):
        raise DimensionError(
            f"incommensurable units: dims {from_unit.dims} vs {to_unit.dims}"
        )
    return value * from_unit.scale / to_unit.scale


def to_canonical(value: float, unit: UnitExpr) -> float:
    """Value expressed in the canonical base (mol, g, L, s)."""
    return value * unit.scale


# Preferred spellings for canonical rendering, per dimension and decade.
_TIME_ATOMS = [("day", 86400.0), ("hour", 3600.0), ("minute", 60.0), ("s", 1.0)]
_PREFIXED = {
    _AMOUNT: [("mol", 1.0), ("mmol", 1e-3), ("umol", 1e-6), ("nmol", 1e-9), ("pmol", 1e-12)],
    _MASS: [("g", 1.0), ("mg", 1e-3), ("ug", 1e-6)],
    _VOLUME: [("L", 1.0), ("mL", 1e-3), ("uL", 1e-6)],
    _CONC: [("M", 1.0), ("mM", 1e-3), ("uM", 1e-6), ("nM", 1e-9), ("pM", 1e-12)],
}


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(abs(a), abs(b))


def render_unit(unit: UnitExpr) -> str:
    """Render a canonical, re-parseable spelling of ``unit``.

    Searches atom choices jointly so compound scales resolve to a single
    spelling per dimension (``nM/hour``, ``1/(nM*hour)``); falls back to a
    positive numeric factor when the scale has no atom decomposition, so the
    function is total: ``parse_unit(render_unit(u)) == u`` up to float
    round-off on the scale.
    """
    import itertools

    amount, mass, volume, time = unit.dims

    # Concentration pairs (amount and volume with opposite signs) may render
    # via molarity atoms; try both with and without that pairing.
    conc_power = 0
    if amount != 0 and volume != 0 and (amount > 0) != (volume > 0):
        conc_power = (1 if amount > 0 else -1) * min(abs(amount), abs(volume))

    group_opts = {
        "conc": _PREFIXED[_CONC],
        "amount": _PREFIXED[_AMOUNT],
        "mass": _PREFIXED[_MASS],
        "volume": _PREFIXED[_VOLUME],
        "time": _TIME_ATOMS,
    }

    best: tuple[float, list[tuple[str, int]], float] | None = None
    for use_conc in ((True, False) if conc_power else (False,)):
        parts: list[tuple[str, int]] = []
        a, v = amount, volume
        if use_conc:
            parts.append(("conc", conc_power))
            a -= conc_power
            v += conc_power
        if a:
            parts.append(("amount", a))
        if mass:
            parts.append(("mass", mass))
        if v:
            parts.append(("volume", v))
        if time:
            parts.append(("time", time))

        option_lists = [group_opts[key] for key, _p in parts]
        for combo in itertools.product(*option_lists) if parts else [()]:
            factor = 1.0
            named: list[tuple[str, int]] = []
            for (key, power), (name, sc) in zip(parts, combo):
                factor *= sc**power
                named.append((name, power))
            residual = unit.scale / factor
            badness = abs(math.log10(residual)) if residual > 0 else math.inf
            if _close(residual, 1.0):
                badness = -1.0  # exact fit always wins
            if best is None or badness < best[0]:
                best = (badness, named, residual)

    _badness, named, residual = best if best else (0.0, [], unit.scale)
    num = [n if p == 1 else f"{n}^{p}" for n, p in named if p > 0]
    den = [n if p == -1 else f"{n}^{-p}" for n, p in named if p < 0]
    if not _close(residual, 1.0):
        num.insert(0, repr(residual))
    if not num:
        num = ["1"]
    text = "*".join(num)
    if den:
        text += "/" + (den[0] if len(den) == 1 else "(" + "*".join(den) + ")")
    return text


def canonical_key(unit: UnitExpr) -> str:
    """Stable text key identifying a unit (used by style spelling maps)."""
    return render_unit(unit)
