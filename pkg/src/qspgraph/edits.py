"""Structured edit scripts, clarification detection, atomic application, BFS
parameter alignment, and prior-grounded default proposals.

The edit grammar is line-oriented (one edit per line, ``#`` comments):

    ADD COMPARTMENT <id> VOLUME <num> <unit>
    ADD SPECIES <id> IN <comp|?> INIT <num|?> <unit> [MW <num>]
    ADD PARAMETER <id> VALUE <num|?> <unit>
    ADD REACTION <id>: <sum> -> <sum> KINETICS <template> <name>=<id|num|?>...
    SET PARAMETER <id> VALUE <num> <unit>
    ADD DOSE <kind> <num> <unit> AT <num> <unit> TO <comp>.<species>
    PLOT <comp>.<species> COLOR <name> SUBPLOT <n>
    REMOVE <kind> <id>
    ADD CONSTRAINT <predicate> <args...>

In a reaction edit, a ``<name>=`` that is not a template slot declares (or
references) a parameter of that name bound to the next open slot; writing
both ``kon=`` and ``koff=`` on a mass-action reaction declares the reversible
pair, which expands to forward and reverse reactions.  ``?`` marks a value
the human must confirm before the edit can be applied.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .errors import ApplyError, EditParseError, ModelError, OpenItemsError
from .hypergraph import (
    GraphDelta,
    QspHypergraph,
    adjacency,
    build_hypergraph,
    graph_diff,
    local_id,
    reconstruct_model,
    vertex_id,
    vertex_kind,
)
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
)
from .priors import PriorsKb, classify_quantity_kind, lookup_prior
from .units import CONC_DIMS, UnitExpr, normalize, parse_unit, render_unit
from .validation import (
    BLOCKING_PREDICATES,
    ViolationReport,
    Violation,
    expected_slot_unit,
    rate_expression_tree,
    required_rate_dims,
    validate,
)
from . import expr as expr_mod
from .errors import DimensionError, UnitParseError

CATEGORIES = (
    "compartment",
    "species",
    "reaction",
    "parameter",
    "dosing",
    "visualization",
    "constraint",
    "structural",
)

_REMOVE_KINDS = ("compartment", "species", "parameter", "reaction", "dose", "plot", "constraint")


@dataclass(frozen=True)
class Edit:
    category: str
    op: str
    payload: dict[str, Any]
    line: int
    raw: str

    def to_json(self) -> dict:
        return {
            "category": self.category,
            "op": self.op,
            "payload": self.payload,
            "line": self.line,
            "raw": self.raw,
        }


@dataclass(frozen=True)
class EditScript:
    edits: tuple[Edit, ...]
    text: str

    def unknown_slots(self) -> list[tuple[str, str]]:
        """(entity id, field) pairs still marked '?'."""
        out = []
        for e in self.edits:
            if e.op == "add_parameter" and e.payload.get("value") is None:
                out.append((e.payload["id"], "value"))
            if e.op == "add_species":
                if e.payload.get("initial_value") is None:
                    out.append((e.payload["id"], "initial_value"))
                if e.payload.get("compartment") is None:
                    out.append((e.payload["id"], "compartment"))
            if e.op == "add_reaction":
                slot_names = TEMPLATE_SLOTS[e.payload["template"]]
                for binding in e.payload.get("bindings", ()):
                    if binding.get("value") == "?":
                        name = binding["name"]
                        entity = f"{e.payload['id']}_{name}" if name in slot_names else name
                        out.append((entity, "value"))
        return out


_NUM_TOKEN = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _num_or_unknown(token: str, line: int) -> float | None:
    if token == "?":
        return None
    if not _NUM_TOKEN.match(token):
        raise EditParseError(f"expected a number or '?', got {token!r}", line)
    return float(token)


def _parse_sum(text: str, line: int) -> tuple[tuple[str, int], ...]:
    text = text.strip()
    if not text or text == "null":
        return ()
    out = []
    for term in re.split(r"\s*\+\s*", text):
        m = re.match(r"^(?:(\d+)\s*)?([A-Za-z_][A-Za-z0-9_]*)$", term.strip())
        if not m:
            raise EditParseError(f"cannot parse reaction term {term!r}", line)
        out.append((m.group(2), int(m.group(1)) if m.group(1) else 1))
    return tuple(out)


def parse_edit_script(text: str) -> EditScript:
    """Parse edit text; total on the grammar, errors carry line/column."""
    edits: list[Edit] = []
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        head = tokens[0].upper()

        if head == "ADD" and len(tokens) >= 2 and tokens[1].upper() == "COMPARTMENT":
            m = re.match(
                r"^ADD\s+COMPARTMENT\s+(\w+)\s+VOLUME\s+(\S+)\s+(\S+)\s*$", line, re.IGNORECASE
            )
            if not m:
                raise EditParseError("expected: ADD COMPARTMENT <id> VOLUME <num> <unit>", line_no)
            volume = _num_or_unknown(m.group(2), line_no)
            if volume is None:
                raise EditParseError("compartment volume cannot be '?'", line_no)
            edits.append(
                Edit(
                    "compartment",
                    "add_compartment",
                    {"id": m.group(1), "volume_value": volume, "volume_unit": m.group(3)},
                    line_no,
                    raw_line,
                )
            )
        elif head == "ADD" and tokens[1].upper() == "SPECIES":
            m = re.match(
                r"^ADD\s+SPECIES\s+(\w+)\s+IN\s+(\w+|\?)\s+INIT\s+(\S+)\s+(\S+)(?:\s+MW\s+(\S+))?\s*$",
                line,
                re.IGNORECASE,
            )
            if not m:
                raise EditParseError(
                    "expected: ADD SPECIES <id> IN <comp|?> INIT <num|?> <unit> [MW <num>]", line_no
                )
            mw = float(m.group(5)) if m.group(5) else None
            edits.append(
                Edit(
                    "species",
                    "add_species",
                    {
                        "id": m.group(1),
                        "compartment": None if m.group(2) == "?" else m.group(2),
                        "initial_value": _num_or_unknown(m.group(3), line_no),
                        "unit": m.group(4),
                        "molecular_weight": mw,
                    },
                    line_no,
                    raw_line,
                )
            )
        elif head == "ADD" and tokens[1].upper() == "PARAMETER":
            m = re.match(
                r"^ADD\s+PARAMETER\s+(\w+)\s+VALUE\s+(\S+)\s+(\S+)\s*$", line, re.IGNORECASE
            )
            if not m:
                raise EditParseError("expected: ADD PARAMETER <id> VALUE <num|?> <unit>", line_no)
            edits.append(
                Edit(
                    "parameter",
                    "add_parameter",
                    {
                        "id": m.group(1),
                        "value": _num_or_unknown(m.group(2), line_no),
                        "unit": m.group(3),
                    },
                    line_no,
                    raw_line,
                )
            )
        elif head == "SET" and len(tokens) >= 2 and tokens[1].upper() == "PARAMETER":
            m = re.match(
                r"^SET\s+PARAMETER\s+(\w+)\s+VALUE\s+(\S+)(?:\s+(\S+))?\s*$", line, re.IGNORECASE
            )
            if not m:
                raise EditParseError("expected: SET PARAMETER <id> VALUE <num> [<unit>]", line_no)
            value = _num_or_unknown(m.group(2), line_no)
            if value is None:
                raise EditParseError("SET PARAMETER requires a concrete value", line_no)
            edits.append(
                Edit(
                    "parameter",
                    "set_parameter",
                    {"id": m.group(1), "value": value, "unit": m.group(3)},
                    line_no,
                    raw_line,
                )
            )
        elif head == "ADD" and tokens[1].upper() == "REACTION":
            m = re.match(
                r"^ADD\s+REACTION\s+(\w+)\s*:\s*(.*?)->(.*?)\s+KINETICS\s+(\w+)((?:\s+\S+=\S+)*)\s*$",
                line,
                re.IGNORECASE,
            )
            if not m:
                raise EditParseError(
                    "expected: ADD REACTION <id>: <sum> -> <sum> KINETICS <template> <slot>=<val>...",
                    line_no,
                )
            template = m.group(4).lower()
            if template not in TEMPLATE_SLOTS:
                raise EditParseError(f"unknown kinetic template {m.group(4)!r}", line_no)
            bindings = []
            for pair in m.group(5).split():
                name, _eq, value = pair.partition("=")
                if not _eq:
                    raise EditParseError(f"expected <name>=<value>, got {pair!r}", line_no)
                bindings.append({"name": name, "value": value})
            edits.append(
                Edit(
                    "reaction",
                    "add_reaction",
                    {
                        "id": m.group(1),
                        "reactants": list(_parse_sum(m.group(2), line_no)),
                        "products": list(_parse_sum(m.group(3), line_no)),
                        "template": template,
                        "bindings": bindings,
                    },
                    line_no,
                    raw_line,
                )
            )
        elif head == "ADD" and tokens[1].upper() == "DOSE":
            m = re.match(
                r"^ADD\s+DOSE\s+(\w+)\s+(\S+)\s+(\S+)\s+AT\s+(\S+)\s+(\S+)\s+TO\s+(\w+)\.(\w+)\s*$",
                line,
                re.IGNORECASE,
            )
            if not m:
                raise EditParseError(
                    "expected: ADD DOSE <kind> <num> <unit> AT <num> <unit> TO <comp>.<species>",
                    line_no,
                )
            amount = _num_or_unknown(m.group(2), line_no)
            at = _num_or_unknown(m.group(4), line_no)
            if amount is None or at is None:
                raise EditParseError("dose amount and time cannot be '?'", line_no)
            edits.append(
                Edit(
                    "dosing",
                    "add_dose",
                    {
                        "kind": m.group(1),
                        "amount": amount,
                        "amount_unit": m.group(3),
                        "time": at,
                        "time_unit": m.group(5),
                        "compartment": m.group(6),
                        "species": m.group(7),
                    },
                    line_no,
                    raw_line,
                )
            )
        elif head == "PLOT":
            m = re.match(
                r"^PLOT\s+(\w+)\.(\w+)\s+COLOR\s+(\w+)\s+SUBPLOT\s+(\d+)\s*$", line, re.IGNORECASE
            )
            if not m:
                raise EditParseError(
                    "expected: PLOT <comp>.<species> COLOR <name> SUBPLOT <n>", line_no
                )
            edits.append(
                Edit(
                    "visualization",
                    "add_plot",
                    {
                        "compartment": m.group(1),
                        "species": m.group(2),
                        "color": m.group(3).lower(),
                        "subplot": int(m.group(4)),
                    },
                    line_no,
                    raw_line,
                )
            )
        elif head == "REMOVE":
            m = re.match(r"^REMOVE\s+(\w+)\s+(\w+)\s*$", line, re.IGNORECASE)
            if not m or m.group(1).lower() not in _REMOVE_KINDS:
                raise EditParseError(
                    f"expected: REMOVE <{'|'.join(_REMOVE_KINDS)}> <id>", line_no
                )
            edits.append(
                Edit(
                    "structural",
                    "remove",
                    {"kind": m.group(1).lower(), "id": m.group(2)},
                    line_no,
                    raw_line,
                )
            )
        elif head == "ADD" and tokens[1].upper() == "CONSTRAINT":
            if len(tokens) < 3:
                raise EditParseError("expected: ADD CONSTRAINT <predicate> <args...>", line_no)
            edits.append(
                Edit(
                    "constraint",
                    "add_constraint",
                    {"predicate": tokens[2], "args": tokens[3:]},
                    line_no,
                    raw_line,
                )
            )
        else:
            raise EditParseError(f"unrecognized edit statement {line!r}", line_no, 0)

    return EditScript(tuple(edits), text)


# -- clarification detection ---------------------------------------------------


@dataclass
class ClarificationItem:
    id: str
    target: tuple[str, str]  # (entity id, field)
    question: str
    default: tuple[float, str] | None = None  # (value, unit)
    unit_dims: tuple[int, int, int, int] | None = None
    status: str = "open"  # open | confirmed | overridden
    resolved_value: float | str | None = None
    resolved_unit: str | None = None
    source_prior: str | None = None
    derived: tuple[tuple[str, str, tuple[str, ...]], ...] = ()
    # derived: (target parameter, rule, operand ids); rule 'product' sets
    # target = product of operand values once they are all known.

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "target": list(self.target),
            "question": self.question,
            "default": list(self.default) if self.default else None,
            "status": self.status,
            "resolved_value": self.resolved_value,
            "resolved_unit": self.resolved_unit,
            "source_prior": self.source_prior,
            "derived": [list(d[:2]) + [list(d[2])] for d in self.derived],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ClarificationItem":
        return cls(
            id=data["id"],
            target=tuple(data["target"]),
            question=data["question"],
            default=tuple(data["default"]) if data.get("default") else None,
            status=data.get("status", "open"),
            resolved_value=data.get("resolved_value"),
            resolved_unit=data.get("resolved_unit"),
            source_prior=data.get("source_prior"),
            derived=tuple(
                (d[0], d[1], tuple(d[2])) for d in data.get("derived", ())
            ),
        )


def geometric_midpoint(lo: float, hi: float) -> float:
    """Log-scale midpoint for strictly positive intervals (arithmetic fallback)."""
    if lo > 0 and hi > 0:
        return (lo * hi) ** 0.5
    return (lo + hi) / 2.0


def _edit_param_units(edits: EditScript) -> dict[str, str]:
    units = {}
    for e in edits.edits:
        if e.op == "add_parameter":
            units[e.payload["id"]] = e.payload["unit"]
    return units


def _reaction_pairs(edits: EditScript) -> list[tuple[Edit, list[dict]]]:
    return [(e, e.payload.get("bindings", [])) for e in edits.edits if e.op == "add_reaction"]


def detect_missing(edits: EditScript, graph: QspHypergraph, kb: PriorsKb | None = None) -> list[ClarificationItem]:
    """One item per unknown slot, unbound required slot, or missing species field."""
    items: list[ClarificationItem] = []
    model = reconstruct_model(graph)
    tags = set(model.context_tags)
    counter = 0

    def new_item(**kwargs) -> ClarificationItem:
        nonlocal counter
        counter += 1
        return ClarificationItem(id=f"q{counter}", **kwargs)

    declared_units = _edit_param_units(edits)

    # Affinity association: exactly one concentration-dimensioned parameter in
    # the script makes kon/koff derivable (koff = KD * kon).
    affinity_params = []
    for pid, unit_text in declared_units.items():
        try:
            if parse_unit(unit_text).dims == CONC_DIMS:
                affinity_params.append(pid)
        except UnitParseError:
            pass
    affinity = affinity_params[0] if len(affinity_params) == 1 else None

    known: dict[str, tuple[float, str]] = {}  # id -> (value, unit text)
    for p in model.parameters:
        if p.value is not None:
            known[p.id] = (p.value, p.unit)
    for e in edits.edits:
        if e.op == "add_parameter" and e.payload["value"] is not None:
            known[e.payload["id"]] = (e.payload["value"], e.payload["unit"])

    # Reversible mass-action pairs make the missing rate constant derivable
    # through the affinity: koff = KD * kon (or kon = koff / KD).
    derived_targets: dict[str, tuple[str, tuple[str, ...]]] = {}
    if affinity:
        for e, bindings in _reaction_pairs(edits):
            if e.payload["template"] != "mass_action":
                continue
            named = [b for b in bindings if b["name"] not in TEMPLATE_SLOTS["mass_action"]]
            if len(named) != 2:
                continue
            kf, kr = named[0]["name"], named[1]["name"]
            for b, slot_side in ((named[0], e.payload["reactants"]), (named[1], e.payload["products"])):
                if b["value"] != "?" and _NUM_TOKEN.match(str(b["value"])):
                    unit = declared_units.get(b["name"])
                    if unit is None:
                        sp_units = {s.id: s.unit for s in model.species}
                        for se in edits.edits:
                            if se.op == "add_species":
                                sp_units[se.payload["id"]] = se.payload["unit"]
                        unit = _slot_unit_text(
                            "mass_action", "k", tuple(tuple(t) for t in slot_side), sp_units, model.convention
                        )
                    known.setdefault(b["name"], (float(b["value"]), unit))
            if named[1]["value"] == "?":
                derived_targets[kr] = ("product", (affinity, kf))
            elif named[0]["value"] == "?":
                derived_targets[kf] = ("quotient", (kr, affinity))

    def _dims_of(unit_text: str | None):
        if not unit_text:
            return None
        try:
            return parse_unit(unit_text).dims
        except UnitParseError:
            return None

    def derived_value(rule: str, operands: tuple[str, ...]) -> tuple[float, str] | None:
        """Evaluate a derivation in canonical base units, if operands are known."""
        resolved = []
        for op in operands:
            if op not in known:
                return None
            value, unit_text = known[op]
            try:
                u = parse_unit(unit_text)
            except UnitParseError:
                return None
            resolved.append((value * u.scale, u.dims))
        (a, da), (b, db) = resolved
        if rule == "product":
            value = a * b
            dims = tuple(x + y for x, y in zip(da, db))
        else:
            value = a / b
            dims = tuple(x - y for x, y in zip(da, db))
        unit = render_unit(UnitExpr(1.0, dims))
        return (normalize(value, UnitExpr(1.0, dims), parse_unit(unit)), unit)

    seen_targets: set[tuple[str, str]] = set()

    def add_param_item(pid: str, unit_text: str | None, question: str) -> None:
        if (pid, "value") in seen_targets:
            return
        seen_targets.add((pid, "value"))
        if pid in derived_targets:
            rule, operands = derived_targets[pid]
            symbol = " * " if rule == "product" else " / "
            value_unit = derived_value(rule, operands)
            items.append(
                new_item(
                    target=(pid, "value"),
                    question=f"{question} (derives as {pid} = {symbol.join(operands)})",
                    default=value_unit,
                    unit_dims=_dims_of(unit_text) or (value_unit and _dims_of(value_unit[1])),
                    source_prior=None,
                    derived=((pid, rule, operands),),
                )
            )
            return
        default = None
        source = None
        dims = _dims_of(unit_text)
        if kb is not None and unit_text:
            try:
                u = parse_unit(unit_text)
                kind = classify_quantity_kind(u)
                if kind:
                    prior = lookup_prior(kb, kind, tags | {pid})
                    if prior:
                        mid = geometric_midpoint(prior.lo, prior.hi)
                        default = (normalize(mid, prior.unit_expr, u), unit_text)
                        source = f"{kind}:{prior.unit}[{prior.lo:g},{prior.hi:g}]"
            except UnitParseError:
                pass
        items.append(
            new_item(
                target=(pid, "value"),
                question=question,
                default=default,
                unit_dims=dims,
                source_prior=source,
            )
        )

    species_in_script = {
        e.payload["id"]: e.payload for e in edits.edits if e.op == "add_species"
    }

    for e in edits.edits:
        if e.op == "add_parameter" and e.payload["value"] is None:
            add_param_item(
                e.payload["id"],
                e.payload["unit"],
                f"value for parameter {e.payload['id']} [{e.payload['unit']}]?",
            )
        elif e.op == "add_species":
            payload = e.payload
            if payload["initial_value"] is None:
                if (payload["id"], "initial_value") not in seen_targets:
                    seen_targets.add((payload["id"], "initial_value"))
                    items.append(
                        new_item(
                            target=(payload["id"], "initial_value"),
                            question=f"initial value for species {payload['id']} [{payload['unit']}]?",
                            unit_dims=_dims_of(payload["unit"]),
                        )
                    )
            if payload["compartment"] is None:
                # nearest-neighbor default: compartment of a binding partner
                default_comp = None
                for re_edit, _b in _reaction_pairs(edits):
                    sides = re_edit.payload["reactants"] + re_edit.payload["products"]
                    sids = [sid for sid, _nu in sides]
                    if payload["id"] in sids:
                        for other in sids:
                            if other == payload["id"]:
                                continue
                            if other in species_in_script and species_in_script[other]["compartment"]:
                                default_comp = species_in_script[other]["compartment"]
                            else:
                                try:
                                    default_comp = model.find_species(other).compartment
                                except ModelError:
                                    continue
                            break
                    if default_comp:
                        break
                items.append(
                    new_item(
                        target=(payload["id"], "compartment"),
                        question=f"compartment for species {payload['id']}?",
                        default=(default_comp, "") if default_comp else None,
                    )
                )
        elif e.op == "add_reaction":
            payload = e.payload
            template = payload["template"]
            slot_names = TEMPLATE_SLOTS[template]
            sp_units = {s.id: s.unit for s in model.species}
            for se in edits.edits:
                if se.op == "add_species":
                    sp_units[se.payload["id"]] = se.payload["unit"]
            sugar_bindings = [b for b in payload["bindings"] if b["name"] not in slot_names]
            reversible_pair = template == "mass_action" and len(sugar_bindings) == 2
            # which slot (and reactant side) each sugar name binds, in order,
            # matching the expansion at apply time
            sugar_slot_of: dict[int, tuple[str, list]] = {}
            if reversible_pair:
                sugar_slot_of[0] = ("k", payload["reactants"])
                sugar_slot_of[1] = ("k", payload["products"])
            else:
                explicit_names = {b["name"] for b in payload["bindings"] if b["name"] in slot_names}
                open_list = [s for s in slot_names if s not in explicit_names]
                for i, slot in zip(range(len(sugar_bindings)), open_list):
                    sugar_slot_of[i] = (slot, payload["reactants"])

            def inferred_unit(sugar_index: int) -> str | None:
                entry = sugar_slot_of.get(sugar_index)
                if entry is None:
                    return None
                slot, side = entry
                return _slot_unit_text(
                    template, slot, tuple(tuple(t) for t in side), sp_units, model.convention
                )

            sugar_index = -1
            for binding in payload["bindings"]:
                name, value = binding["name"], binding["value"]
                if name in slot_names:
                    if value == "?":
                        add_param_item(
                            f"{payload['id']}_{name}",
                            None,
                            f"value for reaction {payload['id']} slot {name}?",
                        )
                else:
                    sugar_index += 1
                    if value == "?":
                        unit_text = declared_units.get(name) or inferred_unit(sugar_index)
                        add_param_item(
                            name,
                            unit_text,
                            f"value for parameter {name} "
                            f"(reaction {payload['id']})" + (f" [{unit_text}]?" if unit_text else "?"),
                        )
            required = set(TEMPLATE_SLOTS[payload["template"]])
            sugar = [b for b in payload["bindings"] if b["name"] not in required]
            explicit = {b["name"] for b in payload["bindings"] if b["name"] in required}
            covered = len(explicit) + len(sugar)
            if payload["template"] == "mass_action":
                covered = len(explicit) + min(len(sugar), 2)
            if covered < len(required) and not (
                payload["template"] == "mass_action" and sugar
            ):
                for name in sorted(required - explicit):
                    add_param_item(
                        f"{payload['id']}_{name}",
                        None,
                        f"reaction {payload['id']} requires template slot {name}",
                    )

    return items


# -- application -----------------------------------------------------------------


def _resolve(value, entity: str, field_name: str, confirmations: Mapping[tuple[str, str], Any]):
    if value is not None:
        return value
    return confirmations.get((entity, field_name))


def _slot_unit_text(
    template: str,
    slot: str,
    reactants: tuple[tuple[str, int], ...],
    species_units: Mapping[str, str],
    convention: str,
) -> str:
    """Canonical unit for an auto-created slot parameter."""
    rate_dims = (1, 0, -1, -1) if convention == "concentration" else (1, 0, 0, -1)
    rate = UnitExpr(1.0, rate_dims)
    try:
        if template == "mass_action" and slot == "k":
            u = rate
            for sid, nu in reactants:
                u = u / (parse_unit(species_units[sid]) ** nu)
            return render_unit(UnitExpr(1.0, u.dims))
        if template in ("michaelis_menten", "hill") and slot == "Vmax":
            return render_unit(rate)
        if template == "michaelis_menten" and slot == "Km" and reactants:
            return render_unit(UnitExpr(1.0, parse_unit(species_units[reactants[0][0]]).dims))
        if template == "hill" and slot == "K" and reactants:
            return render_unit(UnitExpr(1.0, parse_unit(species_units[reactants[0][0]]).dims))
    except (KeyError, UnitParseError):
        pass
    return "1"


def _expand_reaction(
    edit_payload: dict,
    confirmations: Mapping,
    declared_units: dict[str, str],
    species_units: Mapping[str, str],
    convention: str,
    provenance_tags: Mapping[str, str] | None = None,
) -> tuple[list[Reaction], list[Parameter]]:
    """Expand one reaction edit into Reaction objects plus implied parameters."""
    template = edit_payload["template"]
    rid = edit_payload["id"]
    reactants = tuple((sid, nu) for sid, nu in edit_payload["reactants"])
    products = tuple((sid, nu) for sid, nu in edit_payload["products"])
    slot_names = TEMPLATE_SLOTS[template]

    explicit: dict[str, str | float] = {}
    sugar: list[tuple[str, float | None]] = []
    for binding in edit_payload["bindings"]:
        name, value = binding["name"], binding["value"]
        if value == "?":
            resolved = confirmations.get((name, "value"))
            if resolved is None and name in slot_names:
                resolved = confirmations.get((f"{rid}_{name}", "value"))
            value = resolved
        elif _NUM_TOKEN.match(str(value)):
            value = float(value)
        if name in slot_names:
            if value is None:
                raise OpenItemsError([f"{rid}.{name}"])
            explicit[name] = value
        else:
            sugar.append((name, value if isinstance(value, float) else None))

    params: list[Parameter] = []
    reactions: list[Reaction] = []

    def sugar_param(name: str, value: float | None, slot: str, for_reactants) -> str:
        unit = declared_units.get(name)
        if unit is None:
            unit = _slot_unit_text(template, slot, for_reactants, species_units, convention)
        provenance = (provenance_tags or {}).get(name, "user")
        params.append(Parameter(id=name, value=value, unit=unit, provenance_tag=provenance))
        return name

    if template == "mass_action" and len(sugar) == 2 and "k" not in explicit:
        (kf_name, _kf_value), (kr_name, _kr_value) = sugar
        for pname, pvalue in sugar:
            if pvalue is None:
                raise OpenItemsError([f"{pname}.value"])
        reactions.append(
            Reaction(id=rid, reactants=reactants, products=products, template="mass_action",
                     slot_bindings=(("k", kf_name),))
        )
        reactions.append(
            Reaction(id=f"{rid}_rev", reactants=products, products=reactants, template="mass_action",
                     slot_bindings=(("k", kr_name),))
        )
        if kf_name not in declared_units:
            sugar_param(kf_name, sugar[0][1], "k", reactants)
        if kr_name not in declared_units:
            sugar_param(kr_name, sugar[1][1], "k", products)
        return reactions, params

    slot_bindings: list[tuple[str, str | float]] = []
    sugar_iter = iter(sugar)
    for name in slot_names:
        if name in explicit:
            slot_bindings.append((name, explicit[name]))
            continue
        try:
            pname, pvalue = next(sugar_iter)
        except StopIteration:
            raise ApplyError(f"reaction {rid!r}: template slot {name!r} is unbound")
        if pvalue is None:
            raise OpenItemsError([f"{pname}.value"])
        slot_bindings.append((name, pname))
        if pname not in declared_units:
            sugar_param(pname, pvalue, name, reactants)
    reactions.append(
        Reaction(
            id=rid,
            reactants=reactants,
            products=products,
            template=template,
            slot_bindings=tuple(sorted(slot_bindings)),
        )
    )
    return reactions, params


def apply_edits(
    graph: QspHypergraph,
    edits: EditScript,
    confirmations: Mapping[tuple[str, str], Any] | None = None,
    kb: PriorsKb | None = None,
    provenance_tags: Mapping[str, str] | None = None,
) -> tuple[QspHypergraph, GraphDelta]:
    """Apply an edit script atomically.

    Preconditions: every '?' slot has a confirmation.  Post-apply validation
    with blocking violations raises ApplyError and leaves the input graph
    untouched (immutability makes rollback structural).
    """
    confirmations = confirmations or {}
    provenance_tags = provenance_tags or {}

    open_slots = [
        f"{entity}.{field_name}"
        for entity, field_name in edits.unknown_slots()
        if confirmations.get((entity, field_name)) is None
    ]
    if open_slots:
        raise OpenItemsError(open_slots)

    model = reconstruct_model(graph)
    compartments = {c.id: c for c in model.compartments}
    species = {s.id: s for s in model.species}
    parameters = {p.id: p for p in model.parameters}
    reactions = {r.id: r for r in model.reactions}
    doses = {d.id: d for d in model.doses}
    plots = list(model.plots)
    constraints = {c.id: c for c in model.constraints}

    declared_units = _edit_param_units(edits)
    dose_seq = len(doses)
    constraint_seq = len(constraints)
    species_units: dict[str, str] = {s.id: s.unit for s in model.species}
    for e in edits.edits:
        if e.op == "add_species":
            species_units[e.payload["id"]] = e.payload["unit"]

    def fresh(name: str) -> None:
        if name in compartments or name in species or name in parameters or name in reactions:
            raise ApplyError(f"identifier collision: {name!r} already exists")

    for e in edits.edits:
        p = e.payload
        if e.op == "add_compartment":
            fresh(p["id"])
            compartments[p["id"]] = Compartment(
                id=p["id"], volume_value=p["volume_value"], volume_unit=p["volume_unit"]
            )
        elif e.op == "add_species":
            fresh(p["id"])
            comp = _resolve(p["compartment"], p["id"], "compartment", confirmations)
            init = _resolve(p["initial_value"], p["id"], "initial_value", confirmations)
            if comp is None or init is None:
                raise OpenItemsError([f"{p['id']}"])
            species[p["id"]] = Species(
                id=p["id"],
                compartment=str(comp),
                initial_value=float(init),
                unit=p["unit"],
                molecular_weight=p.get("molecular_weight"),
            )
        elif e.op == "add_parameter":
            fresh(p["id"])
            value = _resolve(p["value"], p["id"], "value", confirmations)
            if value is None:
                raise OpenItemsError([f"{p['id']}.value"])
            tag = provenance_tags.get(p["id"], "user" if p["value"] is not None else "confirmed")
            parameters[p["id"]] = Parameter(
                id=p["id"], value=float(value), unit=p["unit"], provenance_tag=tag
            )
        elif e.op == "set_parameter":
            if p["id"] not in parameters:
                raise ApplyError(f"SET PARAMETER: unknown parameter {p['id']!r}")
            old = parameters[p["id"]]
            unit = p.get("unit") or old.unit
            parameters[p["id"]] = replace(
                old, value=float(p["value"]), unit=unit,
                provenance_tag=provenance_tags.get(p["id"], "user"),
            )
        elif e.op == "add_reaction":
            fresh(p["id"])
            new_reactions, new_params = _expand_reaction(
                p, confirmations, declared_units, species_units, model.convention,
                provenance_tags,
            )
            for r in new_reactions:
                if r.id in reactions:
                    raise ApplyError(f"identifier collision: {r.id!r} already exists")
                reactions[r.id] = r
            for param in new_params:
                if param.id not in parameters:
                    value = param.value
                    if value is None:
                        value = confirmations.get((param.id, "value"))
                    if value is None:
                        raise OpenItemsError([f"{param.id}.value"])
                    parameters[param.id] = replace(param, value=float(value))
        elif e.op == "add_dose":
            dose_seq += 1
            did = f"dose{dose_seq}"
            doses[did] = Dose(
                id=did,
                kind=p["kind"],
                amount=p["amount"],
                amount_unit=p["amount_unit"],
                time=p["time"],
                time_unit=p["time_unit"],
                compartment=p["compartment"],
                species=p["species"],
            )
        elif e.op == "add_plot":
            spec = PlotSpec(
                compartment=p["compartment"],
                species=p["species"],
                color=p["color"],
                subplot=p["subplot"],
            )
            if spec not in plots:
                plots.append(spec)
        elif e.op == "add_constraint":
            constraint_seq += 1
            cid = f"con{constraint_seq}"
            constraints[cid] = ConstraintDecl(id=cid, predicate=p["predicate"], args=tuple(p["args"]))
        elif e.op == "remove":
            kind, target = p["kind"], p["id"]
            table = {
                "compartment": compartments,
                "species": species,
                "parameter": parameters,
                "reaction": reactions,
                "dose": doses,
                "constraint": constraints,
            }.get(kind)
            if kind == "plot":
                before = len(plots)
                plots = [pl for pl in plots if pl.species != target]
                if len(plots) == before:
                    raise ApplyError(f"REMOVE plot: no plot for species {target!r}")
            elif table is None or target not in table:
                raise ApplyError(f"REMOVE {kind}: unknown id {target!r}")
            else:
                del table[target]

    candidate = QspModel(
        name=model.name,
        convention=model.convention,
        compartments=tuple(compartments.values()),
        species=tuple(species.values()),
        parameters=tuple(parameters.values()),
        reactions=tuple(reactions.values()),
        doses=tuple(doses.values()),
        plots=tuple(plots),
        constraints=tuple(constraints.values()),
        context_tags=model.context_tags,
        canonical_units=model.canonical_units,
    )
    try:
        new_graph = build_hypergraph(candidate)
    except ModelError as exc:
        raise ApplyError(
            f"edits rejected: {exc}",
            report=ViolationReport(
                (Violation("connectivity", exc.site or "model", 1.0, str(exc)),)
            ),
        ) from exc

    report = validate(new_graph, kb)
    blockers = [v for v in report.items if v.predicate in BLOCKING_PREDICATES]
    if blockers:
        raise ApplyError(
            f"edits rolled back: {len(blockers)} blocking violation(s)", report=report
        )
    delta = graph_diff(graph, new_graph)
    return new_graph, delta


# -- BFS alignment -----------------------------------------------------------------


@dataclass(frozen=True)
class Proposal:
    parameter: str
    value: float
    unit: str
    interval: tuple[float, float]
    source_prior: str

    def to_json(self) -> dict:
        return {
            "parameter": self.parameter,
            "value": self.value,
            "unit": self.unit,
            "interval": list(self.interval),
            "source_prior": self.source_prior,
        }


@dataclass(frozen=True)
class AlignmentReport:
    frontiers: dict[str, dict[int, tuple[str, ...]]]
    dependents: tuple[tuple[str, str], ...]  # (vertex id, reason)
    proposals: tuple[Proposal, ...]

    def to_json(self) -> dict:
        return {
            "frontiers": {
                seed: {str(h): list(v) for h, v in hops.items()} for seed, hops in self.frontiers.items()
            },
            "dependents": [list(d) for d in self.dependents],
            "proposals": [p.to_json() for p in self.proposals],
        }


def entity_checks(graph: QspHypergraph, vid: str, kb: PriorsKb | None) -> str | None:
    """First failed check for a vertex: dimensional, stoichiometric, range,
    connectivity; '?' provenance counts as dimensional (value unverifiable)."""
    v = graph.vertices.get(vid)
    if v is None:
        return "connectivity"
    tags = set(graph.meta.get("context_tags", ()))

    if v.kind == "parameter":
        try:
            u = parse_unit(v.attrs.get("unit", ""))
        except UnitParseError:
            return "dimensional"
        if v.attrs.get("value") is None or v.attrs.get("provenance_tag") == "?":
            return "dimensional"
        # dimensional consistency against every slot usage
        for e in graph.incident(vid):
            if e.kind != "parameter_dependency":
                continue
            rvid = next(m for m in e.members if m.startswith("reaction:"))
            slot = e.attr_map().get("slot")
            if rvid in graph.vertices and slot:
                expected = expected_slot_unit(graph, rvid, slot)
                if expected is not None and expected.dims != u.dims:
                    return "dimensional"
        if kb is not None:
            kind = classify_quantity_kind(u)
            if kind:
                prior = lookup_prior(kb, kind, tags | {local_id(vid)})
                if prior:
                    value = normalize(float(v.attrs["value"]), u, prior.unit_expr)
                    if not (prior.lo <= value <= prior.hi):
                        return "range"
        return None

    if v.kind == "species":
        try:
            parse_unit(v.attrs.get("unit", ""))
        except UnitParseError:
            return "dimensional"
        comp_vid = vertex_id("compartment", v.attrs.get("compartment", ""))
        if comp_vid not in graph.vertices:
            return "connectivity"
        return None

    if v.kind == "reaction":
        env_missing = False
        try:
            tree = rate_expression_tree(graph, vid)
        except Exception:
            return "dimensional"
        if tree is not None:
            from .validation import _unit_env

            try:
                expr_mod.check_dimensions(tree, _unit_env(graph), required_dims=required_rate_dims(graph))
            except DimensionError:
                return "dimensional"
            except KeyError:
                return "connectivity"
        slots = v.attrs.get("slot_bindings") or {}
        for required in TEMPLATE_SLOTS.get(graph.psi.get(vid, ""), ()):
            if required not in slots:
                return "connectivity"
        incident = [e for e in graph.incident(vid) if e.kind == "stoichiometric"]
        if not incident:
            return "stoichiometric"
        for e in incident:
            if e.weight == 0 or not isinstance(e.weight, int):
                return "stoichiometric"
        mu = {}
        sides = []
        for e in incident:
            svid = next(m for m in e.members if m.startswith("species:"))
            sv = graph.vertices.get(svid)
            if sv is None:
                return "connectivity"
            mw = sv.attrs.get("molecular_weight")
            sides.append((local_id(svid), e.weight, mw))
        boundary = bool(v.attrs.get("boundary")) or all(w < 0 for _s, w, _m in sides) or all(
            w > 0 for _s, w, _m in sides
        )
        if not boundary and all(mw is not None for _s, _w, mw in sides):
            total = sum(mw * w for _s, w, mw in sides)
            magnitude = max(abs(mw * w) for _s, w, mw in sides)
            if magnitude and abs(total) / magnitude > 1e-9:
                return "stoichiometric"
        return None

    if v.kind == "compartment":
        from .validation import CENTRAL_COMPARTMENT_IDS

        try:
            parse_unit(v.attrs.get("volume_unit", ""))
        except UnitParseError:
            return "dimensional"
        if kb is not None and local_id(vid) in CENTRAL_COMPARTMENT_IDS:
            prior = lookup_prior(kb, "central_volume", tags | {local_id(vid)})
            if prior:
                u = parse_unit(v.attrs["volume_unit"])
                value = normalize(float(v.attrs["volume_value"]), u, prior.unit_expr)
                if not (prior.lo <= value <= prior.hi):
                    return "range"
        return None
    return None


def bfs_align(graph: QspHypergraph, delta: GraphDelta, kb: PriorsKb | None = None, max_hops: int = 3) -> AlignmentReport:
    """Breadth-first alignment from each added vertex (cumulative frontiers).

    The dependent set is every entity within ``max_hops`` of a new vertex
    that fails a dimensional / stoichiometric / range / connectivity check or
    carries unconfirmed ('?') provenance; proposals come from the priors KB.
    """
    nbrs = adjacency(graph)
    seeds = sorted(vid for vid in delta.added_vertices if vid in graph.vertices)

    frontiers: dict[str, dict[int, tuple[str, ...]]] = {}
    union_frontier: set[str] = set()
    for seed in seeds:
        dist = {seed: 0}
        frontier = {seed}
        hops: dict[int, tuple[str, ...]] = {}
        reached = {seed}
        for h in range(1, max_hops + 1):
            nxt = set()
            for vid in frontier:
                nxt |= nbrs.get(vid, set())
            reached |= nxt
            frontier = {v for v in nxt if v not in dist}
            for v in frontier:
                dist[v] = h
            hops[h] = tuple(sorted(reached))
        frontiers[seed] = hops
        union_frontier |= reached

    dependents = []
    for vid in sorted(union_frontier):
        if vertex_kind(vid) == "function_type":
            continue
        reason = entity_checks(graph, vid, kb)
        if reason:
            dependents.append((vid, reason))

    proposals = propose_defaults_for(graph, tuple(dependents), kb)
    return AlignmentReport(frontiers=frontiers, dependents=tuple(dependents), proposals=proposals)


def propose_defaults_for(
    graph: QspHypergraph, dependents: tuple[tuple[str, str], ...], kb: PriorsKb | None
) -> tuple[Proposal, ...]:
    """Prior-grounded defaults (log-scale midpoints) for dependent parameters.

    Proposals are never auto-applied; entities with no matching prior are
    omitted (their clarification stays open without a default).
    """
    if kb is None:
        return ()
    tags = set(graph.meta.get("context_tags", ()))
    out = []
    for vid, _reason in dependents:
        if not vid.startswith("parameter:"):
            continue
        v = graph.vertices.get(vid)
        if v is None:
            continue
        try:
            u = parse_unit(v.attrs.get("unit", ""))
        except UnitParseError:
            continue
        kind = classify_quantity_kind(u)
        if not kind:
            continue
        prior = lookup_prior(kb, kind, tags | {local_id(vid)})
        if not prior:
            continue
        mid = geometric_midpoint(prior.lo, prior.hi)
        value = normalize(mid, prior.unit_expr, u)
        lo = normalize(prior.lo, prior.unit_expr, u)
        hi = normalize(prior.hi, prior.unit_expr, u)
        out.append(
            Proposal(
                parameter=local_id(vid),
                value=value,
                unit=v.attrs.get("unit", ""),
                interval=(lo, hi),
                source_prior=kb.prior_id(prior),
            )
        )
    return tuple(out)


def propose_defaults(report: AlignmentReport, graph: QspHypergraph, kb: PriorsKb | None) -> tuple[Proposal, ...]:
    return propose_defaults_for(graph, report.dependents, kb)


# -- provenance record ---------------------------------------------------------


@dataclass(frozen=True)
class ProvenanceRecord:
    version_tag: str
    parent_tag: str | None
    edit_text: str
    delta: dict
    script_sha256: str
    report_sha256: str
    timestamp: float = field(default_factory=lambda: time.time())

    def to_json(self) -> dict:
        return {
            "version_tag": self.version_tag,
            "parent_tag": self.parent_tag,
            "edit_text": self.edit_text,
            "delta": self.delta,
            "script_sha256": self.script_sha256,
            "report_sha256": self.report_sha256,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProvenanceRecord":
        return cls(
            version_tag=data["version_tag"],
            parent_tag=data.get("parent_tag"),
            edit_text=data.get("edit_text", ""),
            delta=data.get("delta", {}),
            script_sha256=data.get("script_sha256", ""),
            report_sha256=data.get("report_sha256", ""),
            timestamp=data.get("timestamp", 0.0),
        )
