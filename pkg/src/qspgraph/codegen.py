"""Script emission from the hypergraph plus the two-stage validation checks.

``emit_script`` is deterministic: identical (graph, style, tag) inputs yield
byte-identical scripts.  Emission refuses graphs with blocking violations
(unit consistency, connectivity, stoichiometry, mass balance) and never
alters weights, templates, units or compartment assignments -- the script is
a faithful rendering that re-ingests to a topology-equivalent graph.

``topology_equivalent`` compares graphs under a kind- and attribute-
preserving id normalization; ``syntax_conformance`` scores a script against
a style profile over four checks (naming, ordering, unit spellings, header).
"""

from __future__ import annotations

import json
from typing import Any

from . import expr as expr_mod
from .errors import CodegenError
from .hypergraph import (
    QspHypergraph,
    graph_hash,
    graph_to_document,
    local_id,
    reconstruct_model,
)
from .ingest import (
    COLOR_CODES,
    DEFAULT_STYLE,
    StyleProfile,
    TEMPLATE_LAWS,
    extract_style,
    parse_script,
)
from .model import TEMPLATE_SLOTS, Reaction
from .units import canonical_key, parse_unit
from .validation import validate

_EMIT_BLOCKING = ("unit_consistency", "connectivity")


def _unit_text(unit: str, style: StyleProfile) -> str:
    """Spell a unit the way the source script did, else canonically."""
    try:
        key = canonical_key(parse_unit(unit))
    except Exception:
        return unit
    return style.spelling_map().get(key, key)


def _num(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e15:
        return repr(float(value))
    return repr(float(value))


def _rate_text(reaction: Reaction) -> str | None:
    """Canonical rate string for a reaction (explicit for custom templates)."""
    if reaction.template == "custom_rate_expression":
        return reaction.rate_expression
    slots = reaction.slot_map()

    def slot_repr(name: str) -> str:
        target = slots.get(name)
        if isinstance(target, float):
            return _num(target)
        return str(target)

    if reaction.template == "mass_action":
        parts = [slot_repr("k")]
        for sid, nu in sorted(reaction.reactants):
            parts.append(sid if nu == 1 else f"{sid}^{nu}")
        return "*".join(parts)
    if reaction.template == "michaelis_menten":
        if not reaction.reactants:
            return None
        c = sorted(reaction.reactants)[0][0]
        return f"{slot_repr('Vmax')}*{c}/({slot_repr('Km')} + {c})"
    if reaction.template == "hill":
        if not reaction.reactants:
            return None
        c = sorted(reaction.reactants)[0][0]
        n = slot_repr("n")
        return f"{slot_repr('Vmax')}*{c}^{n}/({slot_repr('K')}^{n} + {c}^{n})"
    return None


def _side_text(side: tuple[tuple[str, int], ...]) -> str:
    if not side:
        return "null"
    return " + ".join(sid if nu == 1 else f"{nu} {sid}" for sid, nu in sorted(side))


def emit_script(graph: QspHypergraph, style: StyleProfile | None = None, version_tag: str = "v1.0") -> str:
    """Emit a SimBiology-style script for the graph honoring a style profile."""
    style = style or DEFAULT_STYLE
    report = validate(graph)
    blockers = [v for v in report.items if v.predicate in _EMIT_BLOCKING]
    if blockers:
        raise CodegenError(
            f"emission refused: {len(blockers)} blocking violation(s)", report=report
        )
    model = reconstruct_model(graph)
    content_hash = graph_hash(graph)[:12]

    lines: list[str] = []
    wrote_version = wrote_hash = False
    for template in style.header_lines:
        if template == "% version: {tag}":
            lines.append(f"% version: {version_tag}")
            wrote_version = True
        elif template == "% hash: {hash}":
            lines.append(f"% hash: {content_hash}")
            wrote_hash = True
        else:
            lines.append(template)
    if not wrote_version:
        lines.append(f"% version: {version_tag}")
    if not wrote_hash:
        lines.append(f"% hash: {content_hash}")

    lines.append(f"m = sbiomodel('{model.name}');")
    if model.convention != "concentration":
        lines.append(f"%! convention {model.convention}")
    if model.context_tags:
        lines.append("%! context " + " ".join(model.context_tags))
    for name, unit in model.canonical_units:
        lines.append(f"%! canonical {name} {unit}")

    comp_var = {c.id: f"c{i + 1}" for i, c in enumerate(model.compartments)}

    def compartment_lines() -> list[str]:
        out = []
        for c in model.compartments:
            out.append(
                f"{comp_var[c.id]} = addcompartment(m, '{c.id}', {_num(c.volume_value)}, "
                f"'CapacityUnits', '{_unit_text(c.volume_unit, style)}');"
            )
            if c.time_varying and c.volume_expression:
                out.append(f"%! volume_expr {c.id} {c.volume_expression}")
        for c in model.compartments:
            for nbr in c.connectivity:
                out.append(f"%! connect {c.id} -> {nbr}")
        return out

    def species_lines() -> list[str]:
        out = []
        for i, s in enumerate(model.species):
            extra = ""
            if s.molecular_weight is not None:
                extra = f", 'MolecularWeight', {_num(s.molecular_weight)}"
            out.append(
                f"s{i + 1} = addspecies({comp_var[s.compartment]}, '{s.id}', {_num(s.initial_value)}, "
                f"'InitialAmountUnits', '{_unit_text(s.unit, style)}'{extra});"
            )
            for key, value in s.attributes:
                out.append(f"%! attr {s.id} {key} {value}")
        return out

    def parameter_lines(params) -> list[str]:
        out = []
        for i, p in params:
            value_text = _num(p.value) if p.value is not None else "0.0"
            out.append(
                f"p{i + 1} = addparameter(m, '{p.id}', {value_text}, "
                f"'ValueUnits', '{_unit_text(p.unit, style)}');"
            )
            if p.value is None:
                out.append(f"%! prov {p.id} ?")
            elif p.provenance_tag != "user":
                out.append(f"%! prov {p.id} {p.provenance_tag}")
            if p.uncertainty is not None:
                out.append(f"%! sigma2 {p.id} {_num(p.uncertainty)}")
            if p.distribution is not None:
                params_text = " ".join(_num(x) for x in p.distribution[1])
                out.append(f"%! dist {p.id} {p.distribution[0]} {params_text}")
        return out

    def reaction_lines(r: Reaction, index: int) -> list[str]:
        out = []
        eq = f"{_side_text(r.reactants)} -> {_side_text(r.products)}"
        rate = _rate_text(r)
        rate_part = f", 'ReactionRate', '{rate}'" if rate else ""
        out.append(
            f"r{index + 1} = addreaction(m, '{eq}', 'Name', '{r.id}'{rate_part});"
        )
        law = TEMPLATE_LAWS[r.template]
        slot_names = TEMPLATE_SLOTS[r.template]
        if slot_names:
            slots = r.slot_map()
            cell = ", ".join(
                f"'{slots[name] if isinstance(slots[name], str) else _num(slots[name])}'"
                for name in slot_names
            )
            out.append(
                f"kl{index + 1} = addkineticlaw(r{index + 1}, '{law}', "
                f"'ParameterVariableNames', {{{cell}}});"
            )
        else:
            out.append(f"kl{index + 1} = addkineticlaw(r{index + 1}, '{law}');")
        if r.boundary and r.reactants and r.products:
            out.append(f"%! boundary {r.id}")
        for m_id in r.modifiers:
            out.append(f"%! modifier {r.id} {m_id}")
        return out

    if style.ordering == "interleaved":
        lines.extend(compartment_lines())
        lines.extend(species_lines())
        bound_params: dict[str, int] = {}
        for r in model.reactions:
            for _slot, target in r.slot_bindings:
                if isinstance(target, str) and target not in bound_params:
                    for i, p in enumerate(model.parameters):
                        if p.id == target:
                            bound_params[target] = i
        unbound = [(i, p) for i, p in enumerate(model.parameters) if p.id not in bound_params]
        lines.extend(parameter_lines(unbound))
        emitted_params: set[str] = set()
        for j, r in enumerate(model.reactions):
            fresh = [
                (bound_params[t], model.parameters[bound_params[t]])
                for _slot, t in r.slot_bindings
                if isinstance(t, str) and t in bound_params and t not in emitted_params
            ]
            emitted_params.update(p.id for _i, p in fresh)
            lines.extend(parameter_lines(sorted(fresh)))
            lines.extend(reaction_lines(r, j))
    else:
        lines.extend(compartment_lines())
        lines.extend(species_lines())
        lines.extend(parameter_lines(list(enumerate(model.parameters))))
        for j, r in enumerate(model.reactions):
            lines.extend(reaction_lines(r, j))

    for i, d in enumerate(model.doses):
        lines.append(
            f"d{i + 1} = adddose(m, '{d.id}', 'Kind', '{d.kind}', "
            f"'Amount', {_num(d.amount)}, 'AmountUnits', '{_unit_text(d.amount_unit, style)}', "
            f"'Time', {_num(d.time)}, 'TimeUnits', '{_unit_text(d.time_unit, style)}', "
            f"'TargetName', '{d.compartment}.{d.species}');"
        )
    for con in model.constraints:
        args = " ".join(con.args)
        lines.append(f"%! constraint {con.id} {con.predicate} {args}".rstrip())

    if style.solver_config:
        lines.extend(style.solver_config)
    lines.append("[t, x, names] = sbiosimulate(m);")

    if model.plots:
        n_sub = max(p.subplot for p in model.plots)
        lines.append("figure;")
        for p in model.plots:
            lines.append(f"subplot({n_sub}, 1, {p.subplot});")
            code = COLOR_CODES.get(p.color, "k")
            lines.append(f"plot(t, x(:, strcmp(names, '{p.species}')), '{code}');")
            lines.append(f"title('{p.species} ({p.compartment})');")

    return "\n".join(lines) + "\n"


# -- topology equivalence ------------------------------------------------------


def _strip_refs(kind: str, attrs: dict) -> dict:
    """Attribute record with identifier-valued fields blanked (for sorting)."""
    cleaned = json.loads(json.dumps(attrs))
    if kind == "compartment":
        cleaned.pop("connectivity", None)
    elif kind == "species":
        cleaned.pop("compartment", None)
    elif kind == "reaction":
        slots = cleaned.get("slot_bindings") or {}
        cleaned["slot_bindings"] = sorted(slots.keys())
        cleaned.pop("modifiers", None)
        cleaned.pop("rate_expression", None)
    return cleaned


def _canonical_unit_text(text: str) -> str:
    try:
        return canonical_key(parse_unit(text))
    except Exception:
        return text


def _rename_graph(graph: QspHypergraph, mapping: dict[str, str]) -> dict:
    """Graph document with every entity reference renamed by ``mapping``.

    Unit strings are canonicalized as well: spelling is style, not topology.
    """
    doc = graph_to_document(graph)

    def rename(entity: str) -> str:
        return mapping.get(entity, entity)

    for v in doc["vertices"]:
        kind, local = v["kind"], local_id(v["id"])
        v["id"] = f"{v['id'].split(':', 1)[0]}:{rename(local)}"
        attrs = v["attrs"]
        for unit_field in ("unit", "volume_unit"):
            if unit_field in attrs:
                attrs[unit_field] = _canonical_unit_text(attrs[unit_field])
        if kind == "compartment":
            attrs["connectivity"] = sorted(rename(c) for c in attrs.get("connectivity", ()))
        elif kind == "species":
            attrs["compartment"] = rename(attrs.get("compartment", ""))
        elif kind == "reaction":
            slots = attrs.get("slot_bindings") or {}
            attrs["slot_bindings"] = {
                slot: (rename(t) if isinstance(t, str) else t) for slot, t in slots.items()
            }
            if attrs.get("modifiers"):
                attrs["modifiers"] = sorted(rename(m) for m in attrs["modifiers"])
            if attrs.get("rate_expression"):
                tree = expr_mod.parse_expr(attrs["rate_expression"])
                attrs["rate_expression"] = expr_mod.render_expr(
                    expr_mod.rename_symbols(tree, mapping)
                )
    vertex_rename = {}
    for v_old, v_new in zip(graph_to_document(graph)["vertices"], doc["vertices"]):
        vertex_rename[v_old["id"]] = v_new["id"]

    for e in doc["hyperedges"]:
        e["members"] = sorted(vertex_rename.get(m, m) for m in e["members"])
        attrs = e["attrs"]
        if "reaction" in attrs:
            attrs["reaction"] = rename(attrs["reaction"])
        if "direction" in attrs and "->" in str(attrs["direction"]):
            a, b = str(attrs["direction"]).split("->", 1)
            attrs["direction"] = f"{rename(a)}->{rename(b)}"
        e.pop("id", None)  # content ids are recomputed from renamed members

    meta = doc.get("meta", {})
    for d in meta.get("doses", ()):
        d["compartment"] = rename(d.get("compartment", ""))
        d["species"] = rename(d.get("species", ""))
        d["id"] = rename(d.get("id", ""))
        for unit_field in ("amount_unit", "time_unit"):
            if unit_field in d:
                d[unit_field] = _canonical_unit_text(d[unit_field])
    for p in meta.get("plots", ()):
        p["compartment"] = rename(p.get("compartment", ""))
        p["species"] = rename(p.get("species", ""))
    for c in meta.get("constraints", ()):
        c["args"] = [rename(a) for a in c.get("args", ())]
    # Re-sort renamed collections so list order cannot leak original ids.
    for key in ("doses", "plots", "constraints"):
        if key in meta:
            meta[key] = sorted(meta[key], key=lambda item: json.dumps(item, sort_keys=True))

    doc["hyperedges"].sort(key=lambda e: json.dumps(e, sort_keys=True))
    doc["vertices"].sort(key=lambda v: v["id"])
    return doc


def _canonical_ordinals(graph: QspHypergraph) -> dict[str, str]:
    """Entity id -> canonical ordinal name via attribute-seeded refinement."""
    # Initial key: kind + reference-free attributes.
    keys: dict[str, str] = {}
    for vid, v in graph.vertices.items():
        record = {"kind": v.kind, "attrs": _strip_refs(v.kind, v.attrs)}
        if vid in graph.psi:
            record["psi"] = graph.psi[vid]
        keys[vid] = json.dumps(record, sort_keys=True)

    # Refine with edge-neighborhood fingerprints (2 rounds).
    for _ in range(2):
        new_keys = {}
        for vid in graph.vertices:
            signature = []
            for e in graph.incident(vid):
                others = tuple(sorted(keys[m] for m in e.members if m != vid and m in keys))
                attrs = {k: v for k, v in e.attrs if k not in ("reaction", "direction", "declared")}
                signature.append(
                    json.dumps([e.kind, e.weight, sorted(attrs.items()), others], sort_keys=True)
                )
            new_keys[vid] = keys[vid] + "|" + "|".join(sorted(signature))
        keys = new_keys

    mapping: dict[str, str] = {}
    by_kind: dict[str, list[str]] = {}
    for vid, v in graph.vertices.items():
        by_kind.setdefault(v.kind, []).append(vid)
    for kind, vids in by_kind.items():
        for ordinal, vid in enumerate(sorted(vids, key=lambda x: (keys[x], x))):
            if kind == "function_type":
                continue  # template names are semantic, not arbitrary ids
            mapping[local_id(vid)] = f"{kind[0]}{ordinal:04d}"
    return mapping


def _first_mismatches(a: Any, b: Any, path: str, out: list[str], limit: int = 10) -> None:
    if len(out) >= limit:
        return
    if type(a) is not type(b):
        out.append(f"{path}: {a!r} vs {b!r}")
        return
    if isinstance(a, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a:
                out.append(f"{path}.{key}: missing on left")
            elif key not in b:
                out.append(f"{path}.{key}: missing on right")
            else:
                _first_mismatches(a[key], b[key], f"{path}.{key}", out, limit)
            if len(out) >= limit:
                return
    elif isinstance(a, list):
        if len(a) != len(b):
            out.append(f"{path}: length {len(a)} vs {len(b)}")
        for i, (x, y) in enumerate(zip(a, b)):
            _first_mismatches(x, y, f"{path}[{i}]", out, limit)
            if len(out) >= limit:
                return
    elif a != b:
        out.append(f"{path}: {a!r} vs {b!r}")


def topology_equivalent(g_a: QspHypergraph, g_b: QspHypergraph) -> dict:
    """Equivalence under a kind/attribute-preserving bijection of ids.

    Ids are replaced by canonical ordinals derived from sorted attribute
    keys and neighborhood refinement; equivalence is byte equality of the
    canonicalized documents.  The report lists the first divergent records.
    """
    doc_a = _rename_graph(g_a, _canonical_ordinals(g_a))
    doc_b = _rename_graph(g_b, _canonical_ordinals(g_b))
    text_a = json.dumps(doc_a, sort_keys=True)
    text_b = json.dumps(doc_b, sort_keys=True)
    if text_a == text_b:
        return {"equivalent": True, "mismatches": []}
    mismatches: list[str] = []
    # Vertices carry the meaningful records; report them before edge noise.
    for key in ("vertices", "meta", "hyperedges"):
        _first_mismatches(doc_a.get(key), doc_b.get(key), f"$.{key}", mismatches)
        if len(mismatches) >= 10:
            break
    return {"equivalent": False, "mismatches": mismatches}


# -- syntax conformance --------------------------------------------------------


def syntax_conformance(script_text: str, style: StyleProfile) -> dict:
    """Score a script against a style profile (4 checks, equal weight)."""
    ast = parse_script(script_text)
    observed = extract_style(ast)
    findings: list[str] = []
    checks = 4
    passed = 0

    if observed.naming == style.naming:
        passed += 1
    else:
        findings.append(
            f"naming: expected {style.naming}, observed {observed.naming} "
            f"(confidence {observed.naming_confidence})"
        )

    if observed.ordering == style.ordering:
        passed += 1
    else:
        findings.append(f"ordering: expected {style.ordering}, observed {observed.ordering}")

    expected_spellings = style.spelling_map()
    bad_units = [
        f"{key} spelled {spelling!r} (style says {expected_spellings[key]!r})"
        for key, spelling in observed.spelling_map().items()
        if key in expected_spellings and spelling != expected_spellings[key]
    ]
    if not bad_units:
        passed += 1
    else:
        findings.append("unit spellings: " + "; ".join(bad_units))

    expected_header = [h for h in style.header_lines]
    observed_header = [h for h in observed.header_lines]
    if observed_header == expected_header:
        passed += 1
    else:
        findings.append(
            f"header: expected {expected_header!r}, observed {observed_header!r}"
        )

    return {"score": passed / checks, "findings": findings}
