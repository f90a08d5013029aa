"""Understanding-phase front end: restricted SimBiology-script parsing.

The grammar covers the programmatic model-building subset used by desk-scale
QSP scripts: ``sbiomodel``, ``addcompartment``, ``addspecies``,
``addparameter``, ``addreaction``, ``addkineticlaw``, ``adddose``,
configset access, ``sbiosimulate`` and plotting calls.  Name/value argument
pairs are order-insensitive and both quote styles are accepted.  Unrecognized
lines become lossless ``unknown`` statements, never parse failures.

Structured ``%!`` comment directives carry model data that has no SimBiology
statement form (compartment connectivity, provenance tags, constraints, ...);
they are ordinary comments to MATLAB and round-trip exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .errors import IngestError, LoweringError
from .expr import parse_expr
from .model import (
    TEMPLATE_SLOTS,
    Compartment,
    ConstraintDecl,
    Dose,
    Parameter,
    PlotSpec,
    QspModel,
    Reaction,
    Species,
    canonicalize,
    model_check,
)
from .units import canonical_key, parse_unit

STATEMENT_KINDS = (
    "model_decl",
    "add_compartment",
    "add_species",
    "add_parameter",
    "add_reaction",
    "set_kinetic_law",
    "add_dose",
    "configset",
    "simulate",
    "plot",
    "comment",
    "unknown",
)

#: MATLAB shorthand color codes <-> color names used by plot specs
COLOR_CODES = {
    "black": "k",
    "red": "r",
    "green": "g",
    "blue": "b",
    "cyan": "c",
    "magenta": "m",
    "yellow": "y",
    "white": "w",
}
CODE_COLORS = {v: k for k, v in COLOR_CODES.items()}

#: kinetic law spellings <-> template ids
LAW_NAMES = {
    "MassAction": "mass_action",
    "MichaelisMenten": "michaelis_menten",
    "Hill": "hill",
    "Custom": "custom_rate_expression",
}
TEMPLATE_LAWS = {v: k for k, v in LAW_NAMES.items()}


@dataclass(frozen=True)
class Statement:
    kind: str
    line: int
    raw: str
    call: str | None = None
    lhs: tuple[str, ...] = ()
    args: tuple[Any, ...] = ()
    directive: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScriptAst:
    statements: tuple[Statement, ...] = ()

    def raw_text(self) -> str:
        return "".join(s.raw for s in self.statements)

    def of_kind(self, kind: str) -> list[Statement]:
        return [s for s in self.statements if s.kind == kind]


# argument atoms produced by the call parser
@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class Cell:
    items: tuple[Any, ...]


@dataclass(frozen=True)
class Raw:
    text: str


def _scan_string(text: str, i: int, line_no: int) -> tuple[str, int]:
    quote = text[i]
    out = []
    i += 1
    while i < len(text):
        ch = text[i]
        if ch == quote:
            if i + 1 < len(text) and text[i + 1] == quote:  # doubled-quote escape
                out.append(quote)
                i += 2
                continue
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise IngestError("unterminated string literal", line_no, i)


def _split_args(text: str, line_no: int, offset: int) -> list[str]:
    """Split a call's argument text on top-level commas."""
    parts = []
    depth_paren = depth_brace = 0
    current = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch in "'\"":
            s, j = _scan_string(text, i, line_no)
            current.append(text[i:j])
            i = j
            continue
        if ch == "(":
            depth_paren += 1
        elif ch == ")":
            depth_paren -= 1
            if depth_paren < 0:
                raise IngestError("unbalanced ')'", line_no, offset + i)
        elif ch == "{":
            depth_brace += 1
        elif ch == "}":
            depth_brace -= 1
            if depth_brace < 0:
                raise IngestError("unbalanced '}'", line_no, offset + i)
        elif ch == "," and depth_paren == 0 and depth_brace == 0:
            parts.append("".join(current).strip())
            current = []
            i += 1
            continue
        current.append(ch)
        i += 1
    if depth_paren or depth_brace:
        raise IngestError("unbalanced brackets in argument list", line_no, offset + len(text))
    tail = "".join(current).strip()
    if tail:
        parts.append(tail)
    return parts


_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _parse_arg(text: str, line_no: int) -> Any:
    text = text.strip()
    if not text:
        return Raw("")
    if text[0] in "'\"":
        value, end = _scan_string(text, 0, line_no)
        if text[end:].strip():
            return Raw(text)
        return Str(value)
    if _NUM_RE.match(text):
        return Num(float(text))
    if text.startswith("{") and text.endswith("}"):
        inner = text[1:-1]
        items = tuple(_parse_arg(p, line_no) for p in _split_args(inner, line_no, 1))
        return Cell(items)
    if _IDENT_RE.match(text):
        return Ident(text)
    return Raw(text)


_CALL_RE = re.compile(
    r"^\s*(?:(\[[^\]]*\]|[A-Za-z_][A-Za-z0-9_.]*)\s*=\s*)?([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*;?\s*$",
    re.DOTALL,
)
_PROP_RE = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.+?)\s*;?\s*$"
)

_CALL_KINDS = {
    "sbiomodel": "model_decl",
    "addcompartment": "add_compartment",
    "addspecies": "add_species",
    "addparameter": "add_parameter",
    "addreaction": "add_reaction",
    "addkineticlaw": "set_kinetic_law",
    "adddose": "add_dose",
    "getconfigset": "configset",
    "sbiosimulate": "simulate",
    "plot": "plot",
    "subplot": "plot",
    "figure": "plot",
    "title": "plot",
    "xlabel": "plot",
    "ylabel": "plot",
    "legend": "plot",
    "hold": "plot",
}


def _check_balance(code: str, line_no: int) -> None:
    depth_paren = depth_brace = 0
    i = 0
    while i < len(code):
        ch = code[i]
        if ch in "'\"":
            _value, i = _scan_string(code, i, line_no)
            continue
        if ch == "(":
            depth_paren += 1
        elif ch == ")":
            depth_paren -= 1
            if depth_paren < 0:
                raise IngestError("unbalanced ')'", line_no, i)
        elif ch == "{":
            depth_brace += 1
        elif ch == "}":
            depth_brace -= 1
            if depth_brace < 0:
                raise IngestError("unbalanced '}'", line_no, i)
        i += 1
    if depth_paren or depth_brace:
        raise IngestError("unbalanced brackets", line_no, len(code))


def parse_script(text: str) -> ScriptAst:
    """Parse a script into statements; unknown constructs are preserved."""
    statements: list[Statement] = []
    configset_vars: set[str] = set()

    lines = text.splitlines(keepends=True)
    for idx, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped:
            statements.append(Statement("comment", idx, raw))
            continue
        if stripped.startswith("%"):
            body = stripped.lstrip("%").strip()
            if stripped.startswith("%!"):
                directive = tuple(stripped[2:].strip().split())
                statements.append(Statement("comment", idx, raw, directive=directive))
            else:
                statements.append(Statement("comment", idx, raw))
            continue

        _check_balance(stripped, idx)

        m = _CALL_RE.match(stripped)
        if m:
            lhs_text, call, arg_text = m.group(1), m.group(2), m.group(3)
            kind = _CALL_KINDS.get(call)
            if call == "set" or (kind is None and call in ("set",)):
                kind = None
            if call == "set":
                first = arg_text.split(",", 1)[0].strip()
                if first.split(".", 1)[0] in configset_vars:
                    statements.append(Statement("configset", idx, raw, call=call))
                    continue
            if kind is not None:
                lhs: tuple[str, ...] = ()
                if lhs_text:
                    lhs = tuple(
                        part.strip()
                        for part in lhs_text.strip("[]").split(",")
                        if part.strip()
                    )
                args = tuple(_parse_arg(p, idx) for p in _split_args(arg_text, idx, 0))
                statements.append(Statement(kind, idx, raw, call=call, lhs=lhs, args=args))
                if kind == "configset" and lhs:
                    configset_vars.add(lhs[0])
                continue
            statements.append(Statement("unknown", idx, raw, call=call))
            continue

        pm = _PROP_RE.match(stripped)
        if pm and pm.group(1) in configset_vars:
            statements.append(Statement("configset", idx, raw, call=pm.group(1)))
            continue
        # bare 'figure;' or 'hold on;' style commands
        word = stripped.rstrip(";").strip()
        if word in ("figure", "hold on", "hold off"):
            statements.append(Statement("plot", idx, raw, call=word.split()[0]))
            continue
        statements.append(Statement("unknown", idx, raw))

    return ScriptAst(tuple(statements))


# -- lowering -----------------------------------------------------------------


def _name_value(args: tuple[Any, ...], start: int) -> dict[str, Any]:
    pairs: dict[str, Any] = {}
    i = start
    while i + 1 < len(args) + 1 and i < len(args):
        if isinstance(args[i], Str) and i + 1 < len(args):
            pairs[args[i].value] = args[i + 1]
            i += 2
        else:
            i += 1
    return pairs


_REACTION_SIDE_RE = re.compile(r"\s*\+\s*")


def _parse_reaction_side(text: str, line: int) -> tuple[tuple[str, int], ...]:
    text = text.strip()
    if text in ("null", ""):
        return ()
    out = []
    for term in _REACTION_SIDE_RE.split(text):
        term = term.strip()
        m = re.match(r"^(?:(\d+)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?)$", term)
        if not m:
            raise LoweringError(f"cannot parse reaction term {term!r}", line)
        nu = int(m.group(1)) if m.group(1) else 1
        name = m.group(2).split(".")[-1]  # drop compartment qualifier
        out.append((name, nu))
    return tuple(out)


def match_template(
    rate_text: str,
    reactants: tuple[tuple[str, int], ...],
    species_ids: set[str],
    param_ids: set[str],
) -> tuple[str, tuple[tuple[str, str | float], ...]]:
    """Classify a rate expression against the kinetic templates.

    Returns (template, slot bindings); unmatched expressions are custom.
    """
    tree = parse_expr(rate_text)

    def flatten_product(node) -> list | None:
        if node[0] == "*":
            left = flatten_product(node[1])
            right = flatten_product(node[2])
            if left is None or right is None:
                return None
            return left + right
        if node[0] in ("sym", "num"):
            return [node]
        if node[0] == "^" and node[1][0] == "sym" and node[2][0] == "num":
            return [node]
        return None

    factors = flatten_product(tree)
    if factors is not None:
        powers: dict[str, int] = {}
        others: list = []
        ok = True
        for f in factors:
            if f[0] == "sym":
                powers[f[1]] = powers.get(f[1], 0) + 1
            elif f[0] == "^":
                if float(f[2][1]).is_integer():
                    powers[f[1][1]] = powers.get(f[1][1], 0) + int(f[2][1])
                else:
                    ok = False
            else:
                others.append(f)
        if ok and not others:
            species_powers = {s: p for s, p in powers.items() if s in species_ids}
            params = [s for s in powers if s not in species_ids]
            if (
                len(params) == 1
                and powers[params[0]] == 1
                and species_powers == {sid: nu for sid, nu in reactants}
            ):
                return "mass_action", (("k", params[0]),)

    # Vmax*C/(Km + C)
    if tree[0] == "/":
        num, den = tree[1], tree[2]
        if num[0] == "*" and den[0] == "+":
            n_factors = [num[1], num[2]]
            if all(f[0] == "sym" for f in n_factors):
                a, b = n_factors[0][1], n_factors[1][1]
                c_candidates = [x for x in (a, b) if x in species_ids]
                v_candidates = [x for x in (a, b) if x not in species_ids]
                if len(c_candidates) == 1 and len(v_candidates) == 1:
                    c_sym, v_sym = c_candidates[0], v_candidates[0]
                    d1, d2 = den[1], den[2]
                    for km_node, c_node in ((d1, d2), (d2, d1)):
                        if (
                            c_node == ("sym", c_sym)
                            and km_node[0] == "sym"
                            and km_node[1] not in species_ids
                        ):
                            if reactants and reactants[0][0] == c_sym:
                                return "michaelis_menten", (
                                    ("Km", km_node[1]),
                                    ("Vmax", v_sym),
                                )
            # Vm*C^n/(K^n + C^n)
            if num[0] == "*" and num[2][0] == "^":
                v_node, cpow = num[1], num[2]
                if (
                    v_node[0] == "sym"
                    and cpow[1][0] == "sym"
                    and den[1][0] == "^"
                    and den[2][0] == "^"
                ):
                    c_sym = cpow[1][1]
                    n_node = cpow[2]
                    kpow, cpow2 = den[1], den[2]
                    if cpow2[1] != ("sym", c_sym):
                        kpow, cpow2 = cpow2, kpow
                    if (
                        cpow2 == cpow
                        and kpow[2] == n_node
                        and kpow[1][0] == "sym"
                        and c_sym in species_ids
                        and reactants
                        and reactants[0][0] == c_sym
                    ):
                        n_binding: str | float
                        if n_node[0] == "num":
                            n_binding = float(n_node[1])
                        else:
                            n_binding = n_node[1]
                        return "hill", (
                            ("K", kpow[1][1]),
                            ("Vmax", v_node[1]),
                            ("n", n_binding),
                        )

    return "custom_rate_expression", ()


def lower_to_model(ast: ScriptAst) -> tuple[QspModel, list[str]]:
    """Build a QspModel from a parsed script; unknown statements warn."""
    warnings: list[str] = []
    name = "model"
    convention = "concentration"
    context_tags: list[str] = []
    canonical_units: dict[str, str] = {}
    compartments: dict[str, dict] = {}
    species: dict[str, dict] = {}
    parameters: dict[str, dict] = {}
    reactions: dict[str, dict] = {}
    reaction_order: list[str] = []
    doses: list[Dose] = []
    plots: list[PlotSpec] = []
    constraints: list[ConstraintDecl] = []
    connectivity: dict[str, list[str]] = {}

    var_compartment: dict[str, str] = {}
    var_reaction: dict[str, str] = {}
    auto_reaction = 0
    current_subplot = 1

    def require(entity: str, table: dict, line: int, what: str) -> None:
        if entity not in table:
            raise LoweringError(f"{what} references undeclared entity {entity!r}", line)

    for st in ast.statements:
        if st.kind == "comment" and st.directive:
            d = st.directive
            try:
                if d[0] == "convention":
                    convention = d[1]
                elif d[0] == "context":
                    context_tags.extend(d[1:])
                elif d[0] == "canonical":
                    canonical_units[d[1]] = d[2]
                elif d[0] == "connect":
                    src, _arrow, dst = d[1], d[2], d[3]
                    connectivity.setdefault(src, []).append(dst)
                elif d[0] == "prov":
                    parameters[d[1]]["provenance_tag"] = d[2]
                elif d[0] == "sigma2":
                    parameters[d[1]]["uncertainty"] = float(d[2])
                elif d[0] == "dist":
                    parameters[d[1]]["distribution"] = (d[2], tuple(float(x) for x in d[3:]))
                elif d[0] == "attr":
                    species[d[1]].setdefault("attributes", {})[d[2]] = " ".join(d[3:])
                elif d[0] == "boundary":
                    reactions[d[1]]["boundary"] = True
                elif d[0] == "modifier":
                    reactions[d[1]]["modifiers"] = tuple(reactions[d[1]].get("modifiers", ())) + (d[2],)
                elif d[0] == "constraint":
                    constraints.append(ConstraintDecl(id=d[1], predicate=d[2], args=tuple(d[3:])))
                elif d[0] == "volume_expr":
                    compartments[d[1]]["time_varying"] = True
                    compartments[d[1]]["volume_expression"] = " ".join(d[2:])
                else:
                    warnings.append(f"line {st.line}: unknown directive {d[0]!r}")
            except (KeyError, IndexError, ValueError) as exc:
                raise LoweringError(f"bad directive {' '.join(d)!r}: {exc}", st.line)
            continue
        if st.kind in ("comment",):
            continue
        if st.kind == "unknown":
            warnings.append(f"line {st.line}: unrecognized statement kept verbatim: {st.raw.strip()!r}")
            continue
        if st.kind == "model_decl":
            if st.args and isinstance(st.args[0], Str):
                name = st.args[0].value
            continue
        if st.kind == "add_compartment":
            if len(st.args) < 2 or not isinstance(st.args[1], Str):
                raise LoweringError("addcompartment needs (model, 'name', value, ...)", st.line)
            cid = st.args[1].value
            volume = st.args[2].value if len(st.args) > 2 and isinstance(st.args[2], Num) else 1.0
            nv = _name_value(st.args, 3)
            unit_arg = nv.get("CapacityUnits")
            unit = unit_arg.value if isinstance(unit_arg, Str) else "L"
            compartments[cid] = {"volume_value": volume, "volume_unit": unit}
            if st.lhs:
                var_compartment[st.lhs[0]] = cid
            continue
        if st.kind == "add_species":
            if len(st.args) < 2 or not isinstance(st.args[1], Str):
                raise LoweringError("addspecies needs (compartment, 'name', value, ...)", st.line)
            comp_ref = st.args[0]
            if isinstance(comp_ref, Ident):
                if comp_ref.name not in var_compartment:
                    raise LoweringError(
                        f"addspecies references undeclared compartment variable {comp_ref.name!r}",
                        st.line,
                    )
                comp = var_compartment[comp_ref.name]
            elif isinstance(comp_ref, Str):
                comp = comp_ref.value
                require(comp, compartments, st.line, "addspecies")
            else:
                raise LoweringError("addspecies first argument must be a compartment", st.line)
            sid = st.args[1].value
            init = st.args[2].value if len(st.args) > 2 and isinstance(st.args[2], Num) else 0.0
            nv = _name_value(st.args, 3)
            unit_arg = nv.get("InitialAmountUnits")
            unit = unit_arg.value if isinstance(unit_arg, Str) else "M"
            mw_arg = nv.get("MolecularWeight")
            mw = mw_arg.value if isinstance(mw_arg, Num) else None
            species[sid] = {
                "compartment": comp,
                "initial_value": init,
                "unit": unit,
                "molecular_weight": mw,
            }
            continue
        if st.kind == "add_parameter":
            if len(st.args) < 2 or not isinstance(st.args[1], Str):
                raise LoweringError("addparameter needs (model, 'name', value, ...)", st.line)
            pid = st.args[1].value
            value = st.args[2].value if len(st.args) > 2 and isinstance(st.args[2], Num) else None
            nv = _name_value(st.args, 3)
            unit_arg = nv.get("ValueUnits")
            unit = unit_arg.value if isinstance(unit_arg, Str) else "1"
            parameters[pid] = {"value": value, "unit": unit, "provenance_tag": "user"}
            continue
        if st.kind == "add_reaction":
            if len(st.args) < 2 or not isinstance(st.args[1], Str):
                raise LoweringError("addreaction needs (model, 'A + B -> C', ...)", st.line)
            eq = st.args[1].value
            if "->" not in eq:
                raise LoweringError(f"reaction equation {eq!r} has no '->'", st.line)
            left, right = eq.split("->", 1)
            nv = _name_value(st.args, 2)
            name_arg = nv.get("Name")
            if isinstance(name_arg, Str):
                rid = name_arg.value
            else:
                auto_reaction += 1
                rid = f"r{auto_reaction}"
            rate_arg = nv.get("ReactionRate")
            rate = rate_arg.value if isinstance(rate_arg, Str) else None
            reactions[rid] = {
                "reactants": _parse_reaction_side(left, st.line),
                "products": _parse_reaction_side(right, st.line),
                "rate": rate,
                "template": None,
                "slots": (),
            }
            reaction_order.append(rid)
            if st.lhs:
                var_reaction[st.lhs[0]] = rid
            continue
        if st.kind == "set_kinetic_law":
            if not st.args or not isinstance(st.args[0], (Ident, Str)):
                raise LoweringError("addkineticlaw needs (reaction, 'LawName', ...)", st.line)
            r_ref = st.args[0]
            if isinstance(r_ref, Ident):
                if r_ref.name not in var_reaction:
                    raise LoweringError(
                        f"addkineticlaw references undeclared reaction variable {r_ref.name!r}",
                        st.line,
                    )
                rid = var_reaction[r_ref.name]
            else:
                rid = r_ref.value
                require(rid, reactions, st.line, "addkineticlaw")
            law_arg = st.args[1] if len(st.args) > 1 else None
            if not isinstance(law_arg, Str) or law_arg.value not in LAW_NAMES:
                raise LoweringError(f"unknown kinetic law {law_arg!r}", st.line)
            template = LAW_NAMES[law_arg.value]
            nv = _name_value(st.args, 2)
            slot_values: list[str | float] = []
            pv = nv.get("ParameterVariableNames")
            if isinstance(pv, Cell):
                for item in pv.items:
                    if isinstance(item, Str):
                        if _NUM_RE.match(item.value):
                            slot_values.append(float(item.value))
                        else:
                            slot_values.append(item.value)
                    elif isinstance(item, Num):
                        slot_values.append(item.value)
            slot_names = TEMPLATE_SLOTS[template]
            slots = tuple(zip(slot_names, slot_values))
            reactions[rid]["template"] = template
            reactions[rid]["slots"] = slots
            continue
        if st.kind == "add_dose":
            if len(st.args) < 2 or not isinstance(st.args[1], Str):
                raise LoweringError("adddose needs (model, 'name', ...)", st.line)
            did = st.args[1].value
            nv = _name_value(st.args, 2)

            def num_of(key: str, default: float = 0.0) -> float:
                v = nv.get(key)
                return v.value if isinstance(v, Num) else default

            def str_of(key: str, default: str = "") -> str:
                v = nv.get(key)
                return v.value if isinstance(v, Str) else default

            target = str_of("TargetName")
            if "." not in target:
                raise LoweringError(f"dose target {target!r} must be compartment.species", st.line)
            comp, sid = target.split(".", 1)
            doses.append(
                Dose(
                    id=did,
                    kind=str_of("Kind", "bolus"),
                    amount=num_of("Amount"),
                    amount_unit=str_of("AmountUnits", "mol"),
                    time=num_of("Time"),
                    time_unit=str_of("TimeUnits", "s"),
                    compartment=comp,
                    species=sid,
                )
            )
            continue
        if st.kind == "plot":
            if st.call == "subplot" and len(st.args) >= 3 and isinstance(st.args[2], Num):
                current_subplot = int(st.args[2].value)
            elif st.call == "plot" and len(st.args) >= 2:
                series_text = None
                for a in st.args[1:]:
                    if isinstance(a, Raw):
                        series_text = a.text
                        break
                color = "black"
                for a in st.args[1:]:
                    if isinstance(a, Str) and a.value in CODE_COLORS:
                        color = CODE_COLORS[a.value]
                if series_text:
                    m = re.search(r"strcmp\(\s*\w+\s*,\s*['\"]([^'\"]+)['\"]\s*\)", series_text)
                    if m:
                        sid = m.group(1)
                        if sid in species:
                            plots.append(
                                PlotSpec(
                                    compartment=species[sid]["compartment"],
                                    species=sid,
                                    color=color,
                                    subplot=current_subplot,
                                )
                            )
            continue
        if st.kind in ("configset", "simulate"):
            continue

    # resolve reaction templates: explicit law wins, else match the rate
    species_ids = set(species)
    param_ids = set(parameters)
    reaction_objs = []
    for rid in reaction_order:
        r = reactions[rid]
        rate = r["rate"]
        template, slots = r["template"], tuple(r["slots"])
        if template is None:
            if rate is None:
                raise LoweringError(f"reaction {rid!r} has neither a kinetic law nor a rate")
            template, slots = match_template(rate, r["reactants"], species_ids, param_ids)
        rate_expression = rate if template == "custom_rate_expression" else None
        reaction_objs.append(
            Reaction(
                id=rid,
                reactants=r["reactants"],
                products=r["products"],
                template=template,
                slot_bindings=slots,
                modifiers=tuple(r.get("modifiers", ())),
                rate_expression=rate_expression,
                boundary=bool(r.get("boundary", False)),
            )
        )

    model = QspModel(
        name=name,
        convention=convention,
        compartments=tuple(
            Compartment(
                id=cid,
                volume_value=c["volume_value"],
                volume_unit=c["volume_unit"],
                connectivity=tuple(connectivity.get(cid, ())),
                time_varying=bool(c.get("time_varying", False)),
                volume_expression=c.get("volume_expression"),
            )
            for cid, c in compartments.items()
        ),
        species=tuple(
            Species(
                id=sid,
                compartment=s["compartment"],
                initial_value=s["initial_value"],
                unit=s["unit"],
                molecular_weight=s.get("molecular_weight"),
                attributes=tuple(sorted((s.get("attributes") or {}).items())),
            )
            for sid, s in species.items()
        ),
        parameters=tuple(
            Parameter(
                id=pid,
                value=p["value"],
                unit=p["unit"],
                uncertainty=p.get("uncertainty"),
                provenance_tag=p.get("provenance_tag", "user"),
                distribution=p.get("distribution"),
            )
            for pid, p in parameters.items()
        ),
        reactions=tuple(reaction_objs),
        doses=tuple(doses),
        plots=tuple(plots),
        constraints=tuple(constraints),
        context_tags=tuple(context_tags),
        canonical_units=tuple(sorted(canonical_units.items())),
    )
    try:
        model_check(model)
    except Exception as exc:
        raise LoweringError(str(exc)) from exc
    return canonicalize(model), warnings


# -- style extraction ---------------------------------------------------------


@dataclass(frozen=True)
class StyleProfile:
    naming: str = "snake"
    naming_confidence: float = 1.0
    unit_spellings: tuple[tuple[str, str], ...] = ()
    header_lines: tuple[str, ...] = ()
    ordering: str = "grouped"
    solver_config: tuple[str, ...] = ()

    def spelling_map(self) -> dict[str, str]:
        return dict(self.unit_spellings)

    def to_json(self) -> dict:
        return {
            "naming": self.naming,
            "naming_confidence": self.naming_confidence,
            "unit_spellings": dict(self.unit_spellings),
            "header_lines": list(self.header_lines),
            "ordering": self.ordering,
            "solver_config": list(self.solver_config),
        }

    @classmethod
    def from_json(cls, data: dict) -> "StyleProfile":
        return cls(
            naming=data.get("naming", "snake"),
            naming_confidence=float(data.get("naming_confidence", 1.0)),
            unit_spellings=tuple(sorted((data.get("unit_spellings") or {}).items())),
            header_lines=tuple(data.get("header_lines", ())),
            ordering=data.get("ordering", "grouped"),
            solver_config=tuple(data.get("solver_config", ())),
        )


DEFAULT_STYLE = StyleProfile()


def naming_vote(identifier: str) -> str | None:
    if "_" in identifier:
        return "snake"
    if re.search(r"[a-z][A-Z]", identifier):
        return "camel"
    return None


_VERSION_LINE_RE = re.compile(r"^%\s*version:\s*\S+\s*$")
_HASH_LINE_RE = re.compile(r"^%\s*hash:\s*\S+\s*$")


def extract_style(ast: ScriptAst) -> StyleProfile:
    """Deterministic style profile of a parsed script."""
    names: list[str] = []
    spellings: dict[str, str] = {}
    kind_positions: dict[str, list[int]] = {}
    solver_config: list[str] = []
    header_lines: list[str] = []
    in_header = True

    unit_keys = {
        "add_compartment": "CapacityUnits",
        "add_species": "InitialAmountUnits",
        "add_parameter": "ValueUnits",
    }

    for pos, st in enumerate(ast.statements):
        if st.kind == "comment":
            if in_header and not st.directive and st.raw.strip().startswith("%"):
                line = st.raw.rstrip("\n")
                if _VERSION_LINE_RE.match(line.strip()):
                    header_lines.append("% version: {tag}")
                elif _HASH_LINE_RE.match(line.strip()):
                    header_lines.append("% hash: {hash}")
                else:
                    header_lines.append(line)
            continue
        in_header = False
        kind_positions.setdefault(st.kind, []).append(pos)
        if st.kind in ("add_compartment", "add_species", "add_parameter"):
            if len(st.args) > 1 and isinstance(st.args[1], Str):
                names.append(st.args[1].value)
            nv = _name_value(st.args, 3)
            unit_arg = nv.get(unit_keys[st.kind])
            if isinstance(unit_arg, Str):
                try:
                    key = canonical_key(parse_unit(unit_arg.value))
                    spellings.setdefault(key, unit_arg.value)
                except Exception:
                    pass
        if st.kind == "add_reaction":
            nv = _name_value(st.args, 2)
            name_arg = nv.get("Name")
            if isinstance(name_arg, Str):
                names.append(name_arg.value)
        if st.kind == "add_dose":
            nv = _name_value(st.args, 2)
            for key in ("AmountUnits", "TimeUnits"):
                unit_arg = nv.get(key)
                if isinstance(unit_arg, Str):
                    try:
                        canon = canonical_key(parse_unit(unit_arg.value))
                        spellings.setdefault(canon, unit_arg.value)
                    except Exception:
                        pass
        if st.kind == "configset":
            solver_config.append(st.raw.rstrip("\n"))

    votes = [v for v in (naming_vote(n) for n in names) if v]
    if votes:
        snake = votes.count("snake")
        camel = votes.count("camel")
        naming = "snake" if snake >= camel else "camel"
        confidence = round(max(snake, camel) / len(votes), 6)
    else:
        naming, confidence = "snake", 1.0

    # Emission always writes version/hash lines, so the template carries the
    # placeholders whether or not the source script had them yet.
    if "% version: {tag}" not in header_lines:
        header_lines.append("% version: {tag}")
    if "% hash: {hash}" not in header_lines:
        header_lines.append("% hash: {hash}")

    chain = ["add_compartment", "add_species", "add_parameter", "add_reaction"]
    present = [k for k in chain if k in kind_positions]
    ordering = "grouped"
    for a, b in zip(present, present[1:]):
        if max(kind_positions[a]) > min(kind_positions[b]):
            ordering = "interleaved"
            break

    return StyleProfile(
        naming=naming,
        naming_confidence=confidence,
        unit_spellings=tuple(sorted(spellings.items())),
        header_lines=tuple(header_lines),
        ordering=ordering,
        solver_config=tuple(solver_config),
    )
