"""Domain types for QSP models and the canonical JSON model document.

A model is an immutable value: compartments, species, parameters, reactions,
doses, plot specs and constraint declarations, plus a global quantity
convention ("concentration" or "amount").  Entity identifiers are unique
across all kinds and every cross-reference must resolve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Iterable

from . import expr as expr_mod
from .errors import ModelError
from .units import parse_unit

KINETIC_TEMPLATES = ("mass_action", "michaelis_menten", "hill", "custom_rate_expression")

#: required slot names per kinetic template, in canonical order
TEMPLATE_SLOTS: dict[str, tuple[str, ...]] = {
    "mass_action": ("k",),
    "michaelis_menten": ("Vmax", "Km"),
    "hill": ("Vmax", "K", "n"),
    "custom_rate_expression": (),
}

CONVENTIONS = ("concentration", "amount")


@dataclass(frozen=True)
class Compartment:
    id: str
    volume_value: float
    volume_unit: str
    connectivity: tuple[str, ...] = ()
    time_varying: bool = False
    volume_expression: str | None = None


@dataclass(frozen=True)
class Species:
    id: str
    compartment: str
    initial_value: float
    unit: str
    molecular_weight: float | None = None
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Parameter:
    id: str
    value: float | None  # None marks an unconfirmed placeholder
    unit: str
    uncertainty: float | None = None
    provenance_tag: str = "user"
    distribution: tuple[str, tuple[float, ...]] | None = None


@dataclass(frozen=True)
class Reaction:
    id: str
    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    template: str
    slot_bindings: tuple[tuple[str, str | float], ...] = ()
    modifiers: tuple[str, ...] = ()
    rate_expression: str | None = None
    boundary: bool = False

    def slot_map(self) -> dict[str, str | float]:
        return dict(self.slot_bindings)


@dataclass(frozen=True)
class Dose:
    id: str
    kind: str
    amount: float
    amount_unit: str
    time: float
    time_unit: str
    compartment: str
    species: str


@dataclass(frozen=True)
class PlotSpec:
    compartment: str
    species: str
    color: str
    subplot: int


@dataclass(frozen=True)
class ConstraintDecl:
    id: str
    predicate: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class QspModel:
    name: str = "model"
    compartments: tuple[Compartment, ...] = ()
    species: tuple[Species, ...] = ()
    parameters: tuple[Parameter, ...] = ()
    reactions: tuple[Reaction, ...] = ()
    doses: tuple[Dose, ...] = ()
    plots: tuple[PlotSpec, ...] = ()
    constraints: tuple[ConstraintDecl, ...] = ()
    convention: str = "concentration"
    context_tags: tuple[str, ...] = ()
    canonical_units: tuple[tuple[str, str], ...] = ()

    @property
    def kinetic_templates(self) -> frozenset[str]:
        return frozenset(r.template for r in self.reactions)

    @property
    def symbol_table(self) -> dict[str, str | float]:
        table: dict[str, str | float] = {}
        for r in self.reactions:
            for slot, target in r.slot_bindings:
                table[f"{r.id}.{slot}"] = target
        return table

    def entity_ids(self) -> set[str]:
        return (
            {c.id for c in self.compartments}
            | {s.id for s in self.species}
            | {p.id for p in self.parameters}
            | {r.id for r in self.reactions}
        )

    def compartment(self, cid: str) -> Compartment:
        for c in self.compartments:
            if c.id == cid:
                return c
        raise ModelError(f"unknown compartment {cid!r}")

    def find_species(self, sid: str) -> Species:
        for s in self.species:
            if s.id == sid:
                return s
        raise ModelError(f"unknown species {sid!r}")

    def find_parameter(self, pid: str) -> Parameter:
        for p in self.parameters:
            if p.id == pid:
                return p
        raise ModelError(f"unknown parameter {pid!r}")


def model_check(model: QspModel) -> None:
    """Enforce model invariants; raises ModelError naming the site."""
    seen: dict[str, str] = {}
    for kind, items in (
        ("compartment", model.compartments),
        ("species", model.species),
        ("parameter", model.parameters),
        ("reaction", model.reactions),
    ):
        for item in items:
            if not item.id or not isinstance(item.id, str):
                raise ModelError(f"{kind} with empty id", site=repr(item.id))
            if item.id in seen:
                raise ModelError(
                    f"duplicate identifier {item.id!r} ({seen[item.id]} and {kind})",
                    site=item.id,
                )
            seen[item.id] = kind

    if model.convention not in CONVENTIONS:
        raise ModelError(f"unknown quantity convention {model.convention!r}")

    comp_ids = {c.id for c in model.compartments}
    species_ids = {s.id for s in model.species}
    param_ids = {p.id for p in model.parameters}

    for c in model.compartments:
        if not (c.volume_value > 0):
            raise ModelError(f"compartment volume must be positive, got {c.volume_value}", site=c.id)
        parse_unit(c.volume_unit)
        for nbr in c.connectivity:
            if nbr not in comp_ids:
                raise ModelError(f"connectivity references unknown compartment {nbr!r}", site=c.id)
    for s in model.species:
        if s.compartment not in comp_ids:
            raise ModelError(f"species references unknown compartment {s.compartment!r}", site=s.id)
        if s.initial_value < 0:
            raise ModelError(f"initial value must be nonnegative, got {s.initial_value}", site=s.id)
        if s.molecular_weight is not None and not (s.molecular_weight > 0):
            raise ModelError(f"molecular weight must be positive, got {s.molecular_weight}", site=s.id)
        parse_unit(s.unit)
    for p in model.parameters:
        if p.value is not None and p.value < 0:
            raise ModelError(f"parameter value must be nonnegative, got {p.value}", site=p.id)
        if p.uncertainty is not None and p.uncertainty < 0:
            raise ModelError(f"variance must be nonnegative, got {p.uncertainty}", site=p.id)
        parse_unit(p.unit)
    for r in model.reactions:
        if r.template not in KINETIC_TEMPLATES:
            raise ModelError(f"unknown kinetic template {r.template!r}", site=r.id)
        for side_name, side in (("reactants", r.reactants), ("products", r.products)):
            ids = [sid for sid, _nu in side]
            if len(ids) != len(set(ids)):
                raise ModelError(f"duplicate species in {side_name}; merge coefficients", site=r.id)
        if len(set(sid for sid, _nu in r.reactants) & set(sid for sid, _nu in r.products)) > 0:
            raise ModelError(
                "species appears on both sides of a reaction; split catalytic "
                "or autocatalytic steps into separate species",
                site=r.id,
            )
        for sid, nu in list(r.reactants) + list(r.products):
            if sid not in species_ids:
                raise ModelError(f"reaction references unknown species {sid!r}", site=r.id)
            if not (isinstance(nu, int) and nu > 0):
                raise ModelError(f"stoichiometric coefficient must be a positive integer, got {nu!r}", site=r.id)
        for m in r.modifiers:
            if m not in species_ids:
                raise ModelError(f"modifier references unknown species {m!r}", site=r.id)
        slots = r.slot_map()
        for required in TEMPLATE_SLOTS[r.template]:
            if required not in slots:
                raise ModelError(f"template {r.template} slot {required!r} is unbound", site=r.id)
        for slot, target in r.slot_bindings:
            if isinstance(target, str) and target not in param_ids and target not in species_ids:
                raise ModelError(
                    f"slot {slot!r} references unknown entity {target!r}", site=r.id
                )
        if r.template == "custom_rate_expression":
            if not r.rate_expression:
                raise ModelError("custom template requires a rate expression", site=r.id)
        if r.rate_expression:
            tree = expr_mod.parse_expr(r.rate_expression)
            for sym in expr_mod.symbols(tree):
                if sym == "t":
                    continue
                if sym not in species_ids and sym not in param_ids and sym not in comp_ids:
                    raise ModelError(
                        f"rate expression references unknown symbol {sym!r}", site=r.id
                    )
        if not r.reactants and not r.products:
            raise ModelError("reaction with no participants", site=r.id)
    for d in model.doses:
        if d.compartment not in comp_ids:
            raise ModelError(f"dose targets unknown compartment {d.compartment!r}", site=d.id)
        if d.species not in species_ids:
            raise ModelError(f"dose targets unknown species {d.species!r}", site=d.id)
        parse_unit(d.amount_unit)
        parse_unit(d.time_unit)
    for pl in model.plots:
        if pl.compartment not in comp_ids:
            raise ModelError(f"plot targets unknown compartment {pl.compartment!r}", site=f"plot:{pl.species}")
        if pl.species not in species_ids:
            raise ModelError(f"plot targets unknown species {pl.species!r}", site=f"plot:{pl.species}")
    known = comp_ids | species_ids | param_ids
    for con in model.constraints:
        if con.predicate == "range" and con.args:
            if con.args[0] not in known:
                raise ModelError(
                    f"constraint references unknown entity {con.args[0]!r}", site=con.id
                )


def is_boundary(reaction: Reaction) -> bool:
    """Source/sink classification: empty side or an explicit boundary flag."""
    return reaction.boundary or not reaction.reactants or not reaction.products


def canonicalize(model: QspModel) -> QspModel:
    """Sort entity lists and intra-entity lists into canonical order."""

    def sort_pairs(pairs: Iterable[tuple[str, Any]]) -> tuple:
        return tuple(sorted(pairs, key=lambda kv: kv[0]))

    return replace(
        model,
        compartments=tuple(
            replace(c, connectivity=tuple(sorted(c.connectivity)))
            for c in sorted(model.compartments, key=lambda c: c.id)
        ),
        species=tuple(
            replace(s, attributes=sort_pairs(s.attributes))
            for s in sorted(model.species, key=lambda s: s.id)
        ),
        parameters=tuple(sorted(model.parameters, key=lambda p: p.id)),
        reactions=tuple(
            replace(
                r,
                reactants=tuple(sorted(r.reactants)),
                products=tuple(sorted(r.products)),
                slot_bindings=sort_pairs(r.slot_bindings),
                modifiers=tuple(sorted(r.modifiers)),
            )
            for r in sorted(model.reactions, key=lambda r: r.id)
        ),
        doses=tuple(sorted(model.doses, key=lambda d: d.id)),
        plots=tuple(sorted(model.plots, key=lambda p: (p.subplot, p.compartment, p.species, p.color))),
        constraints=tuple(sorted(model.constraints, key=lambda c: c.id)),
        context_tags=tuple(sorted(model.context_tags)),
        canonical_units=sort_pairs(model.canonical_units),
    )


def models_equal(a: QspModel, b: QspModel) -> bool:
    """Entity-wise structural equality on canonical forms."""
    return canonicalize(a) == canonicalize(b)


# -- canonical model document (JSON) ----------------------------------------


def to_document(model: QspModel) -> dict:
    model = canonicalize(model)
    doc: dict[str, Any] = {
        "name": model.name,
        "convention": model.convention,
        "compartments": [
            {
                "id": c.id,
                "volume_value": c.volume_value,
                "volume_unit": c.volume_unit,
                "connectivity": list(c.connectivity),
                **({"time_varying": True, "volume_expression": c.volume_expression} if c.time_varying else {}),
            }
            for c in model.compartments
        ],
        "species": [
            {
                "id": s.id,
                "compartment": s.compartment,
                "initial_value": s.initial_value,
                "unit": s.unit,
                **({"molecular_weight": s.molecular_weight} if s.molecular_weight is not None else {}),
                **({"attributes": dict(s.attributes)} if s.attributes else {}),
            }
            for s in model.species
        ],
        "parameters": [
            {
                "id": p.id,
                "value": p.value,
                "unit": p.unit,
                **({"uncertainty": p.uncertainty} if p.uncertainty is not None else {}),
                "provenance_tag": p.provenance_tag,
                **(
                    {"distribution": {"kind": p.distribution[0], "params": list(p.distribution[1])}}
                    if p.distribution
                    else {}
                ),
            }
            for p in model.parameters
        ],
        "reactions": [
            {
                "id": r.id,
                "reactants": [[sid, nu] for sid, nu in r.reactants],
                "products": [[sid, nu] for sid, nu in r.products],
                "template": r.template,
                "slot_bindings": dict(r.slot_bindings),
                **({"modifiers": list(r.modifiers)} if r.modifiers else {}),
                **({"rate_expression": r.rate_expression} if r.rate_expression else {}),
                **({"boundary": True} if r.boundary else {}),
            }
            for r in model.reactions
        ],
        "doses": [
            {
                "id": d.id,
                "kind": d.kind,
                "amount": d.amount,
                "amount_unit": d.amount_unit,
                "time": d.time,
                "time_unit": d.time_unit,
                "compartment": d.compartment,
                "species": d.species,
            }
            for d in model.doses
        ],
        "plots": [
            {"compartment": p.compartment, "species": p.species, "color": p.color, "subplot": p.subplot}
            for p in model.plots
        ],
        "constraints": [
            {"id": c.id, "predicate": c.predicate, "args": list(c.args)} for c in model.constraints
        ],
    }
    if model.context_tags:
        doc["context_tags"] = list(model.context_tags)
    if model.canonical_units:
        doc["canonical_units"] = dict(model.canonical_units)
    return doc


def model_from_document(doc: dict) -> QspModel:
    def pairs(d: dict | None) -> tuple:
        return tuple(sorted((d or {}).items()))

    model = QspModel(
        name=doc.get("name", "model"),
        convention=doc.get("convention", "concentration"),
        compartments=tuple(
            Compartment(
                id=c["id"],
                volume_value=float(c["volume_value"]),
                volume_unit=c["volume_unit"],
                connectivity=tuple(c.get("connectivity", ())),
                time_varying=bool(c.get("time_varying", False)),
                volume_expression=c.get("volume_expression"),
            )
            for c in doc.get("compartments", ())
        ),
        species=tuple(
            Species(
                id=s["id"],
                compartment=s["compartment"],
                initial_value=float(s["initial_value"]),
                unit=s["unit"],
                molecular_weight=(
                    float(s["molecular_weight"]) if s.get("molecular_weight") is not None else None
                ),
                attributes=pairs(s.get("attributes")),
            )
            for s in doc.get("species", ())
        ),
        parameters=tuple(
            Parameter(
                id=p["id"],
                value=(float(p["value"]) if p.get("value") is not None else None),
                unit=p["unit"],
                uncertainty=(float(p["uncertainty"]) if p.get("uncertainty") is not None else None),
                provenance_tag=p.get("provenance_tag", "user"),
                distribution=(
                    (p["distribution"]["kind"], tuple(float(x) for x in p["distribution"]["params"]))
                    if p.get("distribution")
                    else None
                ),
            )
            for p in doc.get("parameters", ())
        ),
        reactions=tuple(
            Reaction(
                id=r["id"],
                reactants=tuple((sid, int(nu)) for sid, nu in r.get("reactants", ())),
                products=tuple((sid, int(nu)) for sid, nu in r.get("products", ())),
                template=r["template"],
                slot_bindings=tuple(
                    sorted(
                        (slot, target if isinstance(target, str) else float(target))
                        for slot, target in (r.get("slot_bindings") or {}).items()
                    )
                ),
                modifiers=tuple(r.get("modifiers", ())),
                rate_expression=r.get("rate_expression"),
                boundary=bool(r.get("boundary", False)),
            )
            for r in doc.get("reactions", ())
        ),
        doses=tuple(
            Dose(
                id=d["id"],
                kind=d["kind"],
                amount=float(d["amount"]),
                amount_unit=d["amount_unit"],
                time=float(d["time"]),
                time_unit=d["time_unit"],
                compartment=d["compartment"],
                species=d["species"],
            )
            for d in doc.get("doses", ())
        ),
        plots=tuple(
            PlotSpec(
                compartment=p["compartment"],
                species=p["species"],
                color=p["color"],
                subplot=int(p["subplot"]),
            )
            for p in doc.get("plots", ())
        ),
        constraints=tuple(
            ConstraintDecl(id=c["id"], predicate=c["predicate"], args=tuple(c.get("args", ())))
            for c in doc.get("constraints", ())
        ),
        context_tags=tuple(doc.get("context_tags", ())),
        canonical_units=pairs(doc.get("canonical_units")),
    )
    model_check(model)
    return canonicalize(model)


def document_bytes(model: QspModel) -> bytes:
    return (json.dumps(to_document(model), indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")
