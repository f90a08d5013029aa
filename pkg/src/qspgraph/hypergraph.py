"""Typed hypergraph encoding of QSP models and the lossless model mappings.

Vertices carry a kind (compartment, species, parameter, reaction,
function_type) and an attribute record (phi); reaction vertices carry a
kinetic template label (psi).  Hyperedges are modeled as binary incidences
grouped by reaction, which is equivalent to full hyperedges for every
operation here and keeps stoichiometric-matrix recovery linear in the
number of nonzeros.

Edge identifiers are content hashes of (kind, members, weight, attrs), so
edges are immutable values: any change is an add+remove pair in a diff.
Vertex identifiers are ``<kind>:<entity id>``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import GraphError, ReconstructionError, SerializationError
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

VERTEX_KINDS = ("compartment", "species", "parameter", "reaction", "function_type")
EDGE_KINDS = ("stoichiometric", "transport", "parameter_dependency", "regulatory", "template_link")

_KIND_PREFIX = {
    "compartment": "compartment:",
    "species": "species:",
    "parameter": "parameter:",
    "reaction": "reaction:",
    "function_type": "template:",
}


def vertex_id(kind: str, entity_id: str) -> str:
    return _KIND_PREFIX[kind] + entity_id


def local_id(vid: str) -> str:
    return vid.split(":", 1)[1]


def vertex_kind(vid: str) -> str:
    prefix = vid.split(":", 1)[0] + ":"
    for kind, p in _KIND_PREFIX.items():
        if p == prefix:
            return kind
    raise GraphError(f"vertex id {vid!r} has no kind prefix")


@dataclass(frozen=True)
class Vertex:
    id: str
    kind: str
    attrs: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Hyperedge:
    id: str
    kind: str
    members: tuple[str, ...]
    weight: int = 0
    attrs: tuple[tuple[str, Any], ...] = ()

    def attr_map(self) -> dict[str, Any]:
        return dict(self.attrs)


def edge_id(kind: str, members: Iterable[str], weight: int, attrs: tuple[tuple[str, Any], ...]) -> str:
    payload = json.dumps([kind, sorted(members), weight, sorted(attrs)], sort_keys=True)
    return "e:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def make_edge(kind: str, members: Iterable[str], weight: int = 0, **attrs: Any) -> Hyperedge:
    members = tuple(sorted(members))
    if not members:
        raise GraphError("hyperedge must have a nonempty member set")
    attr_items = tuple(sorted(attrs.items()))
    return Hyperedge(edge_id(kind, members, weight, attr_items), kind, members, weight, attr_items)


@dataclass(frozen=True)
class QspHypergraph:
    vertices: dict[str, Vertex] = field(default_factory=dict)
    hyperedges: dict[str, Hyperedge] = field(default_factory=dict)
    psi: dict[str, str] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def phi(self) -> dict[str, dict[str, Any]]:
        """Attribute map: vertex id -> attribute record."""
        return {vid: v.attrs for vid, v in self.vertices.items()}

    def vertices_of_kind(self, kind: str) -> list[Vertex]:
        return sorted((v for v in self.vertices.values() if v.kind == kind), key=lambda v: v.id)

    def edges_of_kind(self, kind: str) -> list[Hyperedge]:
        return sorted((e for e in self.hyperedges.values() if e.kind == kind), key=lambda e: e.id)

    def incident(self, vid: str) -> list[Hyperedge]:
        return sorted((e for e in self.hyperedges.values() if vid in e.members), key=lambda e: e.id)


def graph_check(graph: QspHypergraph) -> None:
    """Structural hypergraph invariants (see Domain Types)."""
    for vid, v in graph.vertices.items():
        if v.kind not in VERTEX_KINDS:
            raise GraphError(f"vertex {vid!r} has unknown kind {v.kind!r}")
        if vid != vertex_id(v.kind, local_id(vid)):
            raise GraphError(f"vertex id {vid!r} does not carry its kind prefix")
    for eid, e in graph.hyperedges.items():
        if e.kind not in EDGE_KINDS:
            raise GraphError(f"edge {eid!r} has unknown kind {e.kind!r}")
        if not e.members:
            raise GraphError(f"edge {eid!r} has an empty member set")
        if e.kind == "stoichiometric" and e.weight == 0:
            raise GraphError(f"stoichiometric edge {eid!r} has zero weight")
        attrs = e.attr_map()
        if "correlation" in attrs and not -1.0 <= attrs["correlation"] <= 1.0:
            raise GraphError(f"edge {eid!r} correlation outside [-1, 1]")
        if "clearance" in attrs and not attrs["clearance"] > 0:
            raise GraphError(f"edge {eid!r} clearance must be positive")
        if "hill_n" in attrs and not attrs["hill_n"] > 0:
            raise GraphError(f"edge {eid!r} Hill coefficient must be positive")
    for vid, v in graph.vertices.items():
        if v.kind == "reaction" and vid not in graph.psi:
            raise GraphError(f"reaction vertex {vid!r} has no kinetic template entry")


# -- model -> graph ----------------------------------------------------------


def _transport_typed(reaction: Reaction, species_comp: Mapping[str, str]) -> tuple[str, str] | None:
    """A 1->1 unit-stoichiometry reaction across compartments moves a species."""
    if len(reaction.reactants) == 1 and len(reaction.products) == 1:
        (src, nu_r), (dst, nu_p) = reaction.reactants[0], reaction.products[0]
        if nu_r == 1 and nu_p == 1:
            c_src, c_dst = species_comp[src], species_comp[dst]
            if c_src != c_dst:
                return c_src, c_dst
    return None


def build_hypergraph(model: QspModel) -> QspHypergraph:
    """Encode a model as a typed hypergraph (lossless; see reconstruct_model)."""
    model_check(model)
    model = canonicalize(model)

    vertices: dict[str, Vertex] = {}
    edges: dict[str, Hyperedge] = {}
    psi: dict[str, str] = {}

    for c in model.compartments:
        attrs: dict[str, Any] = {
            "volume_value": c.volume_value,
            "volume_unit": c.volume_unit,
            "connectivity": list(c.connectivity),
        }
        if c.time_varying:
            attrs["time_varying"] = True
            attrs["volume_expression"] = c.volume_expression
        vid = vertex_id("compartment", c.id)
        vertices[vid] = Vertex(vid, "compartment", attrs)
    for s in model.species:
        attrs = {
            "compartment": s.compartment,
            "initial_value": s.initial_value,
            "unit": s.unit,
        }
        if s.molecular_weight is not None:
            attrs["molecular_weight"] = s.molecular_weight
        if s.attributes:
            attrs["attributes"] = dict(s.attributes)
        vid = vertex_id("species", s.id)
        vertices[vid] = Vertex(vid, "species", attrs)
    for p in model.parameters:
        attrs = {
            "value": p.value,
            "unit": p.unit,
            "provenance_tag": p.provenance_tag,
        }
        if p.uncertainty is not None:
            attrs["uncertainty"] = p.uncertainty
        if p.distribution is not None:
            attrs["distribution"] = {"kind": p.distribution[0], "params": list(p.distribution[1])}
        vid = vertex_id("parameter", p.id)
        vertices[vid] = Vertex(vid, "parameter", attrs)

    species_comp = {s.id: s.compartment for s in model.species}

    for r in model.reactions:
        attrs = {
            "template": r.template,
            "slot_bindings": {slot: target for slot, target in r.slot_bindings},
        }
        if r.modifiers:
            attrs["modifiers"] = list(r.modifiers)
        if r.rate_expression:
            attrs["rate_expression"] = r.rate_expression
        if r.boundary:
            attrs["boundary"] = True
        rvid = vertex_id("reaction", r.id)
        vertices[rvid] = Vertex(rvid, "reaction", attrs)
        psi[rvid] = r.template

        for sid, nu in r.reactants:
            e = make_edge("stoichiometric", [rvid, vertex_id("species", sid)], weight=-nu, reaction=r.id)
            edges[e.id] = e
        for sid, nu in r.products:
            e = make_edge("stoichiometric", [rvid, vertex_id("species", sid)], weight=+nu, reaction=r.id)
            edges[e.id] = e
        for slot, target in r.slot_bindings:
            if isinstance(target, str):
                kind = "parameter" if any(p.id == target for p in model.parameters) else "species"
                e = make_edge(
                    "parameter_dependency",
                    [rvid, vertex_id(kind, target)],
                    slot=slot,
                    reaction=r.id,
                )
                edges[e.id] = e
        for m in r.modifiers:
            mod_attrs: dict[str, Any] = {"role": "modifier", "reaction": r.id}
            if r.template == "hill":
                n_binding = r.slot_map().get("n")
                if isinstance(n_binding, float) and n_binding > 0:
                    mod_attrs["hill_n"] = n_binding
            e = make_edge("regulatory", [rvid, vertex_id("species", m)], **mod_attrs)
            edges[e.id] = e
        crossing = _transport_typed(r, species_comp)
        if crossing:
            c_src, c_dst = crossing
            e = make_edge(
                "transport",
                [vertex_id("compartment", c_src), vertex_id("compartment", c_dst)],
                weight=1,
                reaction=r.id,
                direction=f"{c_src}->{c_dst}",
            )
            edges[e.id] = e

    for c in model.compartments:
        for nbr in c.connectivity:
            e = make_edge(
                "transport",
                [vertex_id("compartment", c.id), vertex_id("compartment", nbr)],
                weight=1,
                declared=True,
                direction=f"{c.id}->{nbr}",
            )
            edges[e.id] = e

    for template in sorted(model.kinetic_templates):
        vid = vertex_id("function_type", template)
        vertices[vid] = Vertex(vid, "function_type", {"template": template})

    meta: dict[str, Any] = {
        "name": model.name,
        "convention": model.convention,
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
        meta["context_tags"] = list(model.context_tags)
    if model.canonical_units:
        meta["canonical_units"] = dict(model.canonical_units)

    graph = QspHypergraph(vertices=vertices, hyperedges=edges, psi=psi, meta=meta)
    graph_check(graph)
    return graph


def template_link_edges(graph: QspHypergraph) -> list[Hyperedge]:
    """Synthesize the reaction -> function-type link edges on demand."""
    links = []
    for rvid, template in sorted(graph.psi.items()):
        tvid = vertex_id("function_type", template)
        if tvid in graph.vertices:
            links.append(make_edge("template_link", [rvid, tvid], template=template))
    return links


# -- graph -> model ----------------------------------------------------------


def reconstruct_model(graph: QspHypergraph) -> QspModel:
    """Invert build_hypergraph; raises ReconstructionError on unbound slots."""
    graph_check(graph)

    compartments = []
    for v in graph.vertices_of_kind("compartment"):
        a = v.attrs
        compartments.append(
            Compartment(
                id=local_id(v.id),
                volume_value=a["volume_value"],
                volume_unit=a["volume_unit"],
                connectivity=tuple(a.get("connectivity", ())),
                time_varying=bool(a.get("time_varying", False)),
                volume_expression=a.get("volume_expression"),
            )
        )
    species = []
    for v in graph.vertices_of_kind("species"):
        a = v.attrs
        species.append(
            Species(
                id=local_id(v.id),
                compartment=a["compartment"],
                initial_value=a["initial_value"],
                unit=a["unit"],
                molecular_weight=a.get("molecular_weight"),
                attributes=tuple(sorted((a.get("attributes") or {}).items())),
            )
        )
    parameters = []
    for v in graph.vertices_of_kind("parameter"):
        a = v.attrs
        dist = a.get("distribution")
        parameters.append(
            Parameter(
                id=local_id(v.id),
                value=a.get("value"),
                unit=a["unit"],
                uncertainty=a.get("uncertainty"),
                provenance_tag=a.get("provenance_tag", "user"),
                distribution=((dist["kind"], tuple(dist["params"])) if dist else None),
            )
        )

    incidences: dict[str, list[tuple[str, int]]] = {}
    for e in graph.edges_of_kind("stoichiometric"):
        rvid = next(m for m in e.members if m.startswith("reaction:"))
        svid = next(m for m in e.members if m.startswith("species:"))
        incidences.setdefault(rvid, []).append((local_id(svid), e.weight))

    reactions = []
    missing: list[str] = []
    for v in graph.vertices_of_kind("reaction"):
        a = v.attrs
        template = graph.psi[v.id]
        slot_map = a.get("slot_bindings") or {}
        for required in TEMPLATE_SLOTS.get(template, ()):
            if required not in slot_map:
                missing.append(f"{local_id(v.id)}.{required}")
        pairs = incidences.get(v.id, [])
        reactants = tuple(sorted((sid, -w) for sid, w in pairs if w < 0))
        products = tuple(sorted((sid, w) for sid, w in pairs if w > 0))
        reactions.append(
            Reaction(
                id=local_id(v.id),
                reactants=reactants,
                products=products,
                template=template,
                slot_bindings=tuple(
                    sorted((slot, t if isinstance(t, str) else float(t)) for slot, t in slot_map.items())
                ),
                modifiers=tuple(a.get("modifiers", ())),
                rate_expression=a.get("rate_expression"),
                boundary=bool(a.get("boundary", False)),
            )
        )
    if missing:
        raise ReconstructionError(
            f"unbound template slots: {', '.join(sorted(missing))}", missing=sorted(missing)
        )

    meta = graph.meta
    model = QspModel(
        name=meta.get("name", "model"),
        convention=meta.get("convention", "concentration"),
        compartments=tuple(compartments),
        species=tuple(species),
        parameters=tuple(parameters),
        reactions=tuple(reactions),
        doses=tuple(
            Dose(
                id=d["id"],
                kind=d["kind"],
                amount=d["amount"],
                amount_unit=d["amount_unit"],
                time=d["time"],
                time_unit=d["time_unit"],
                compartment=d["compartment"],
                species=d["species"],
            )
            for d in meta.get("doses", ())
        ),
        plots=tuple(
            PlotSpec(
                compartment=p["compartment"],
                species=p["species"],
                color=p["color"],
                subplot=p["subplot"],
            )
            for p in meta.get("plots", ())
        ),
        constraints=tuple(
            ConstraintDecl(id=c["id"], predicate=c["predicate"], args=tuple(c.get("args", ())))
            for c in meta.get("constraints", ())
        ),
        context_tags=tuple(meta.get("context_tags", ())),
        canonical_units=tuple(sorted((meta.get("canonical_units") or {}).items())),
    )
    model_check(model)
    return canonicalize(model)


# -- stoichiometric matrix ---------------------------------------------------


@dataclass(frozen=True)
class StoichMatrix:
    rows: tuple[str, ...]  # species ids
    cols: tuple[str, ...]  # reaction ids
    entries: dict[tuple[int, int], int]
    col_boundary: tuple[bool, ...] = ()

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def column(self, j: int) -> dict[int, int]:
        return {i: w for (i, jj), w in self.entries.items() if jj == j}

    def to_dense(self):
        import numpy as np

        dense = np.zeros((len(self.rows), len(self.cols)), dtype=np.int64)
        for (i, j), w in self.entries.items():
            dense[i, j] = w
        return dense

    def internal_cols(self) -> list[int]:
        return [j for j, b in enumerate(self.col_boundary) if not b]


def extract_stoich_matrix(graph: QspHypergraph) -> StoichMatrix:
    """Recover the signed sparse stoichiometric matrix from edge weights."""
    species_ids = tuple(local_id(v.id) for v in graph.vertices_of_kind("species"))
    reaction_vs = graph.vertices_of_kind("reaction")
    reaction_ids = tuple(local_id(v.id) for v in reaction_vs)
    row_index = {sid: i for i, sid in enumerate(species_ids)}
    col_index = {rid: j for j, rid in enumerate(reaction_ids)}

    entries: dict[tuple[int, int], int] = {}
    has_neg = [False] * len(reaction_ids)
    has_pos = [False] * len(reaction_ids)
    for e in graph.edges_of_kind("stoichiometric"):
        rvid = next(m for m in e.members if m.startswith("reaction:"))
        svid = next(m for m in e.members if m.startswith("species:"))
        i, j = row_index[local_id(svid)], col_index[local_id(rvid)]
        entries[(i, j)] = entries.get((i, j), 0) + e.weight
        if e.weight < 0:
            has_neg[j] = True
        else:
            has_pos[j] = True

    col_boundary = tuple(
        bool(graph.vertices[vertex_id("reaction", rid)].attrs.get("boundary", False))
        or not has_neg[j]
        or not has_pos[j]
        for j, rid in enumerate(reaction_ids)
    )
    return StoichMatrix(species_ids, reaction_ids, entries, col_boundary)


# -- diff / apply ------------------------------------------------------------


def _vertex_record(graph: QspHypergraph, vid: str) -> dict[str, Any]:
    v = graph.vertices[vid]
    record: dict[str, Any] = {"kind": v.kind, "attrs": v.attrs}
    if vid in graph.psi:
        record["psi"] = graph.psi[vid]
    return record


def _edge_record(e: Hyperedge) -> dict[str, Any]:
    return {
        "kind": e.kind,
        "members": list(e.members),
        "weight": e.weight,
        "attrs": dict(e.attrs),
    }


@dataclass(frozen=True)
class GraphDelta:
    added_vertices: dict[str, dict] = field(default_factory=dict)
    removed_vertices: dict[str, dict] = field(default_factory=dict)
    modified_vertices: dict[str, tuple[dict, dict]] = field(default_factory=dict)
    added_edges: dict[str, dict] = field(default_factory=dict)
    removed_edges: dict[str, dict] = field(default_factory=dict)
    meta_change: tuple[dict, dict] | None = None

    def is_empty(self) -> bool:
        return not (
            self.added_vertices
            or self.removed_vertices
            or self.modified_vertices
            or self.added_edges
            or self.removed_edges
            or self.meta_change
        )

    @property
    def size(self) -> int:
        return (
            len(self.added_vertices)
            + len(self.removed_vertices)
            + len(self.modified_vertices)
            + len(self.added_edges)
            + len(self.removed_edges)
            + (1 if self.meta_change else 0)
        )

    def to_json(self) -> dict:
        return {
            "added_vertices": self.added_vertices,
            "removed_vertices": self.removed_vertices,
            "modified_vertices": {k: list(v) for k, v in self.modified_vertices.items()},
            "added_edges": self.added_edges,
            "removed_edges": self.removed_edges,
            "meta_change": list(self.meta_change) if self.meta_change else None,
        }


def graph_diff(old: QspHypergraph, new: QspHypergraph) -> GraphDelta:
    """Structural delta; apply_delta(old, diff(old, new)) == new exactly."""
    old_v, new_v = set(old.vertices), set(new.vertices)
    added_vertices = {vid: _vertex_record(new, vid) for vid in sorted(new_v - old_v)}
    removed_vertices = {vid: _vertex_record(old, vid) for vid in sorted(old_v - new_v)}
    modified = {}
    for vid in sorted(old_v & new_v):
        before, after = _vertex_record(old, vid), _vertex_record(new, vid)
        if before != after:
            modified[vid] = (before, after)

    old_e, new_e = set(old.hyperedges), set(new.hyperedges)
    added_edges = {eid: _edge_record(new.hyperedges[eid]) for eid in sorted(new_e - old_e)}
    removed_edges = {eid: _edge_record(old.hyperedges[eid]) for eid in sorted(old_e - new_e)}

    meta_change = None
    if old.meta != new.meta:
        meta_change = (json.loads(json.dumps(old.meta)), json.loads(json.dumps(new.meta)))

    return GraphDelta(added_vertices, removed_vertices, modified, added_edges, removed_edges, meta_change)


def apply_delta(graph: QspHypergraph, delta: GraphDelta) -> QspHypergraph:
    vertices = dict(graph.vertices)
    psi = dict(graph.psi)
    for vid in delta.removed_vertices:
        vertices.pop(vid, None)
        psi.pop(vid, None)
    for vid, record in delta.added_vertices.items():
        vertices[vid] = Vertex(vid, record["kind"], json.loads(json.dumps(record["attrs"])))
        if "psi" in record:
            psi[vid] = record["psi"]
    for vid, (_before, after) in delta.modified_vertices.items():
        vertices[vid] = Vertex(vid, after["kind"], json.loads(json.dumps(after["attrs"])))
        if "psi" in after:
            psi[vid] = after["psi"]
        else:
            psi.pop(vid, None)

    edges = dict(graph.hyperedges)
    for eid in delta.removed_edges:
        edges.pop(eid, None)
    for eid, record in delta.added_edges.items():
        edges[eid] = Hyperedge(
            eid,
            record["kind"],
            tuple(record["members"]),
            record["weight"],
            tuple(sorted(record["attrs"].items())),
        )

    meta = graph.meta if delta.meta_change is None else json.loads(json.dumps(delta.meta_change[1]))
    return QspHypergraph(vertices=vertices, hyperedges=edges, psi=psi, meta=json.loads(json.dumps(meta)))


# -- canonical serialization -------------------------------------------------


def _check_finite(obj: Any, path: str) -> None:
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise SerializationError(f"non-finite number at {path}: {obj!r}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")


def graph_to_document(graph: QspHypergraph) -> dict:
    doc = {
        "vertices": [
            {
                "id": v.id,
                "kind": v.kind,
                "attrs": v.attrs,
                **({"psi": graph.psi[v.id]} if v.id in graph.psi else {}),
            }
            for v in sorted(graph.vertices.values(), key=lambda v: v.id)
        ],
        "hyperedges": [
            {
                "id": e.id,
                "kind": e.kind,
                "members": list(e.members),
                "weight": e.weight,
                "attrs": dict(e.attrs),
            }
            for e in sorted(graph.hyperedges.values(), key=lambda e: e.id)
        ],
        "meta": graph.meta,
    }
    # Deep copy: documents are freely mutable without aliasing live graphs.
    return json.loads(json.dumps(doc))


def canonical_serialize(graph: QspHypergraph) -> bytes:
    """Deterministic graph bytes: sorted keys and ids, LF, UTF-8.

    Floats render via Python's shortest round-trip repr (<= 17 significant
    digits).  Non-finite numeric attributes raise SerializationError.
    """
    doc = graph_to_document(graph)
    _check_finite(doc, "$")
    try:
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
    except ValueError as exc:
        raise SerializationError(str(exc)) from exc
    return (text + "\n").encode("utf-8")


def graph_from_document(doc: dict) -> QspHypergraph:
    vertices = {}
    psi = {}
    for v in doc.get("vertices", ()):
        vertices[v["id"]] = Vertex(v["id"], v["kind"], v.get("attrs", {}))
        if "psi" in v:
            psi[v["id"]] = v["psi"]
    edges = {}
    for e in doc.get("hyperedges", ()):
        edges[e["id"]] = Hyperedge(
            e["id"],
            e["kind"],
            tuple(e["members"]),
            e.get("weight", 0),
            tuple(sorted((e.get("attrs") or {}).items())),
        )
    return QspHypergraph(vertices=vertices, hyperedges=edges, psi=psi, meta=doc.get("meta", {}))


def parse_graph(data: bytes) -> QspHypergraph:
    return graph_from_document(json.loads(data.decode("utf-8")))


def graph_hash(graph: QspHypergraph) -> str:
    return hashlib.sha256(canonical_serialize(graph)).hexdigest()


# -- adjacency (shared definition used by BFS alignment and the validator) ---


def adjacency(graph: QspHypergraph) -> dict[str, set[str]]:
    """Undirected adjacency over all edge incidences plus species containment.

    Every incidence traversal counts as one hop; species are adjacent to
    their containing compartment through the containment relation recorded
    in phi (there is no dedicated edge kind for containment).
    """
    nbrs: dict[str, set[str]] = {vid: set() for vid in graph.vertices}
    for e in graph.hyperedges.values():
        for a in e.members:
            for b in e.members:
                if a != b and a in nbrs and b in nbrs:
                    nbrs[a].add(b)
    for v in graph.vertices.values():
        if v.kind == "species":
            cvid = vertex_id("compartment", v.attrs.get("compartment", ""))
            if cvid in nbrs:
                nbrs[v.id].add(cvid)
                nbrs[cvid].add(v.id)
    return nbrs
