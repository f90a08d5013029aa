"""Motif-seeded detection of biological modules (pk, tmdd, metabolic).

Detection is deterministic and motif-based rather than density clustering:

* pk      -- connected components of compartments under transport edges,
             together with transport reactions and any boundary reactions
             not claimed by another module;
* tmdd    -- clusters of binding triangles (two reactants forming one
             complex) linked through shared non-drug species or through
             conversion reactions such as receptor shedding;
* metabolic -- clusters of Michaelis-Menten / Hill reactions sharing species.

Modules may overlap on shared species; every reaction vertex belongs to at
least one module (unclassified fallback).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .hypergraph import GraphDelta, QspHypergraph, graph_to_document, local_id, vertex_id

MODULE_KINDS = ("pk", "tmdd", "metabolic", "unclassified")

_FUNCTION_LABELS = {
    "pk": ("distribution", "elimination"),
    "tmdd": ("target_binding", "receptor_turnover"),
    "metabolic": ("enzymatic_conversion",),
    "unclassified": (),
}

_MODULE_PREDICATES = {
    "pk": ("unit_consistency", "connectivity"),
    "tmdd": ("unit_consistency", "mass_balance", "stoichiometry_integrality"),
    "metabolic": ("unit_consistency", "mass_balance"),
    "unclassified": ("unit_consistency",),
}


@dataclass(frozen=True)
class BiologicalModule:
    id: str
    kind: str
    vertex_ids: tuple[str, ...]
    edge_ids: tuple[str, ...]
    functions: tuple[str, ...]
    constraints: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "vertex_ids": list(self.vertex_ids),
            "edge_ids": list(self.edge_ids),
            "functions": list(self.functions),
            "constraints": list(self.constraints),
        }


def _reaction_sides(graph: QspHypergraph, rvid: str) -> tuple[list[tuple[str, int]], list[tuple[str, int]]]:
    reactants, products = [], []
    for e in graph.incident(rvid):
        if e.kind != "stoichiometric":
            continue
        svid = next(m for m in e.members if m.startswith("species:"))
        if e.weight < 0:
            reactants.append((local_id(svid), -e.weight))
        else:
            products.append((local_id(svid), e.weight))
    return sorted(reactants), sorted(products)


def _is_boundary(graph: QspHypergraph, rvid: str) -> bool:
    reactants, products = _reaction_sides(graph, rvid)
    return bool(graph.vertices[rvid].attrs.get("boundary", False)) or not reactants or not products


@dataclass(frozen=True)
class _Triangle:
    rvid: str
    reactants: tuple[str, str]
    product: str

    @property
    def species(self) -> frozenset[str]:
        return frozenset(self.reactants) | {self.product}


def _binding_triangles(graph: QspHypergraph) -> list[_Triangle]:
    """Binding (A + B -> C) and unbinding (C -> A + B) motifs at unit stoichiometry."""
    triangles = []
    for v in graph.vertices_of_kind("reaction"):
        reactants, products = _reaction_sides(graph, v.id)
        if (
            len(reactants) == 2
            and len(products) == 1
            and all(nu == 1 for _s, nu in reactants + products)
        ):
            triangles.append(_Triangle(v.id, (reactants[0][0], reactants[1][0]), products[0][0]))
        elif (
            len(reactants) == 1
            and len(products) == 2
            and all(nu == 1 for _s, nu in reactants + products)
        ):
            triangles.append(_Triangle(v.id, (products[0][0], products[1][0]), reactants[0][0]))
    return triangles


def _conversions(graph: QspHypergraph) -> list[tuple[str, str, str]]:
    """(reaction vid, source species, target species) for 1->1 conversions."""
    out = []
    for v in graph.vertices_of_kind("reaction"):
        reactants, products = _reaction_sides(graph, v.id)
        if len(reactants) == 1 and len(products) == 1 and reactants[0][1] == 1 and products[0][1] == 1:
            out.append((v.id, reactants[0][0], products[0][0]))
    return out


class _UnionFind:
    def __init__(self, items: Iterable[int]):
        self.parent = {i: i for i in items}

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _species_compartment(graph: QspHypergraph, sid: str) -> str | None:
    v = graph.vertices.get(vertex_id("species", sid))
    return v.attrs.get("compartment") if v else None


def detect_modules(graph: QspHypergraph) -> list[BiologicalModule]:
    """Motif-seeded module detection; deterministic output order."""
    modules: list[BiologicalModule] = []
    claimed_reactions: set[str] = set()

    edge_by_id = graph.hyperedges

    # --- tmdd: clusters of binding triangles -------------------------------
    triangles = _binding_triangles(graph)
    conversions = _conversions(graph)
    if triangles:
        # The drug is the species shared across the most triangles (>= 2).
        counts: dict[str, int] = {}
        for t in triangles:
            for sid in t.species:
                counts[sid] = counts.get(sid, 0) + 1
        drug = None
        if len(triangles) >= 2:
            top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
            if top[0][1] >= 2:
                drug = top[0][0]

        uf = _UnionFind(range(len(triangles)))
        for i in range(len(triangles)):
            for j in range(i + 1, len(triangles)):
                shared = triangles[i].species & triangles[j].species
                if shared - ({drug} if drug else set()):
                    uf.union(i, j)
        # Conversion links (e.g. shedding) join triangles through their
        # non-drug members.
        for _rvid, src, dst in conversions:
            src_tris = [i for i, t in enumerate(triangles) if src in t.species - ({drug} if drug else set())]
            dst_tris = [i for i, t in enumerate(triangles) if dst in t.species - ({drug} if drug else set())]
            for i in src_tris:
                for j in dst_tris:
                    uf.union(i, j)

        clusters: dict[int, list[_Triangle]] = {}
        for i, t in enumerate(triangles):
            clusters.setdefault(uf.find(i), []).append(t)

        seq = 0
        for root in sorted(clusters, key=lambda r: min(t.rvid for t in clusters[r])):
            cluster = clusters[root]
            species: set[str] = set()
            reactions: set[str] = set()
            for t in cluster:
                species |= set(t.species)
                reactions.add(t.rvid)
            non_drug = species - ({drug} if drug else set())
            # conversion reactions whose endpoints live in this cluster
            for rvid, src, dst in conversions:
                if src in non_drug or dst in non_drug:
                    reactions.add(rvid)
                    species |= {src, dst}
                    non_drug |= {src, dst} - ({drug} if drug else set())
            # boundary turnover (synthesis/degradation/internalization) of
            # non-drug members belongs to the binding system
            for v in graph.vertices_of_kind("reaction"):
                if v.id in reactions or not _is_boundary(graph, v.id):
                    continue
                reactants, products = _reaction_sides(graph, v.id)
                touched = {sid for sid, _nu in reactants + products}
                if touched and touched <= non_drug | species and touched & non_drug:
                    reactions.add(v.id)

            vertex_ids = sorted(
                [vertex_id("species", s) for s in species if vertex_id("species", s) in graph.vertices]
                + sorted(reactions)
            )
            edge_ids = sorted(
                e.id
                for e in graph.hyperedges.values()
                if e.kind == "stoichiometric" and set(e.members) <= set(vertex_ids)
            )
            seq += 1
            modules.append(
                BiologicalModule(
                    id=f"tmdd_{seq}",
                    kind="tmdd",
                    vertex_ids=tuple(vertex_ids),
                    edge_ids=tuple(edge_ids),
                    functions=_FUNCTION_LABELS["tmdd"],
                    constraints=_MODULE_PREDICATES["tmdd"],
                )
            )
            claimed_reactions |= reactions

    # --- metabolic: MM / Hill reaction stars --------------------------------
    mm_reactions = [
        v.id
        for v in graph.vertices_of_kind("reaction")
        if graph.psi.get(v.id) in ("michaelis_menten", "hill")
    ]
    if mm_reactions:
        uf = _UnionFind(range(len(mm_reactions)))
        touched_species: list[set[str]] = []
        for rvid in mm_reactions:
            reactants, products = _reaction_sides(graph, rvid)
            mods = set(graph.vertices[rvid].attrs.get("modifiers", ()))
            touched_species.append({sid for sid, _nu in reactants + products} | mods)
        for i in range(len(mm_reactions)):
            for j in range(i + 1, len(mm_reactions)):
                if touched_species[i] & touched_species[j]:
                    uf.union(i, j)
        clusters2: dict[int, list[int]] = {}
        for i in range(len(mm_reactions)):
            clusters2.setdefault(uf.find(i), []).append(i)
        seq = 0
        for root in sorted(clusters2, key=lambda r: mm_reactions[min(clusters2[r])]):
            idxs = clusters2[root]
            species = set()
            for i in idxs:
                species |= touched_species[i]
            vertex_ids = sorted(
                [vertex_id("species", s) for s in species if vertex_id("species", s) in graph.vertices]
                + [mm_reactions[i] for i in idxs]
            )
            edge_ids = sorted(
                e.id
                for e in graph.hyperedges.values()
                if e.kind in ("stoichiometric", "regulatory") and set(e.members) <= set(vertex_ids)
            )
            seq += 1
            modules.append(
                BiologicalModule(
                    id=f"metabolic_{seq}",
                    kind="metabolic",
                    vertex_ids=tuple(vertex_ids),
                    edge_ids=tuple(edge_ids),
                    functions=_FUNCTION_LABELS["metabolic"],
                    constraints=_MODULE_PREDICATES["metabolic"],
                )
            )
            claimed_reactions |= {mm_reactions[i] for i in idxs}

    # --- pk: compartment components under transport ------------------------
    comp_vids = [v.id for v in graph.vertices_of_kind("compartment")]
    if comp_vids:
        index = {vid: i for i, vid in enumerate(comp_vids)}
        uf = _UnionFind(range(len(comp_vids)))
        transport_edges = graph.edges_of_kind("transport")
        for e in transport_edges:
            members = [m for m in e.members if m in index]
            for a in members[1:]:
                uf.union(index[members[0]], index[a])
        comp_clusters: dict[int, list[str]] = {}
        for vid, i in index.items():
            comp_clusters.setdefault(uf.find(i), []).append(vid)

        transport_reactions = {
            e.attr_map().get("reaction")
            for e in transport_edges
            if e.attr_map().get("reaction")
        }
        seq = 0
        for root in sorted(comp_clusters, key=lambda r: min(comp_clusters[r])):
            cluster_comps = sorted(comp_clusters[root])
            comp_locals = {local_id(c) for c in cluster_comps}
            vertex_ids = set(cluster_comps)
            edge_ids = {e.id for e in transport_edges if set(e.members) <= vertex_ids}

            # transport reactions moving species within this component
            moved_species: set[str] = set()
            for rid in sorted(r for r in transport_reactions if r):
                rvid = vertex_id("reaction", rid)
                if rvid not in graph.vertices:
                    continue
                reactants, products = _reaction_sides(graph, rvid)
                touched = {sid for sid, _nu in reactants + products}
                comps = {_species_compartment(graph, s) for s in touched}
                if comps <= comp_locals:
                    vertex_ids.add(rvid)
                    claimed_reactions.add(rvid)
                    moved_species |= touched
            # unclaimed boundary reactions over species housed here (e.g.
            # linear elimination, synthesis of the drug)
            for v in graph.vertices_of_kind("reaction"):
                if v.id in claimed_reactions or not _is_boundary(graph, v.id):
                    continue
                reactants, products = _reaction_sides(graph, v.id)
                touched = {sid for sid, _nu in reactants + products}
                if touched and {_species_compartment(graph, s) for s in touched} <= comp_locals:
                    vertex_ids.add(v.id)
                    claimed_reactions.add(v.id)
                    moved_species |= touched
            for s in moved_species:
                svid = vertex_id("species", s)
                if svid in graph.vertices:
                    vertex_ids.add(svid)
            for e in graph.hyperedges.values():
                if e.kind == "stoichiometric" and set(e.members) <= vertex_ids:
                    edge_ids.add(e.id)
            seq += 1
            modules.append(
                BiologicalModule(
                    id=f"pk_{seq}",
                    kind="pk",
                    vertex_ids=tuple(sorted(vertex_ids)),
                    edge_ids=tuple(sorted(edge_ids)),
                    functions=_FUNCTION_LABELS["pk"],
                    constraints=_MODULE_PREDICATES["pk"],
                )
            )

    # --- unclassified fallback ----------------------------------------------
    leftovers = [
        v.id for v in graph.vertices_of_kind("reaction") if v.id not in claimed_reactions
    ]
    if leftovers:
        species = set()
        for rvid in leftovers:
            reactants, products = _reaction_sides(graph, rvid)
            species |= {sid for sid, _nu in reactants + products}
        vertex_ids = sorted(
            leftovers + [vertex_id("species", s) for s in species if vertex_id("species", s) in graph.vertices]
        )
        edge_ids = sorted(
            e.id
            for e in graph.hyperedges.values()
            if e.kind == "stoichiometric" and set(e.members) <= set(vertex_ids)
        )
        modules.append(
            BiologicalModule(
                id="unclassified_1",
                kind="unclassified",
                vertex_ids=tuple(vertex_ids),
                edge_ids=tuple(edge_ids),
                functions=(),
                constraints=_MODULE_PREDICATES["unclassified"],
            )
        )

    modules.sort(key=lambda m: (MODULE_KINDS.index(m.kind), m.id))
    # Re-number ids deterministically after the sort.
    renumbered = []
    counters: dict[str, int] = {}
    for m in modules:
        counters[m.kind] = counters.get(m.kind, 0) + 1
        renumbered.append(
            BiologicalModule(
                id=f"{m.kind}_{counters[m.kind]}",
                kind=m.kind,
                vertex_ids=m.vertex_ids,
                edge_ids=m.edge_ids,
                functions=m.functions,
                constraints=m.constraints,
            )
        )
    return renumbered


def serialize_with_modules(graph: QspHypergraph) -> bytes:
    """Graph document bytes with a regenerated ``modules`` key.

    The modules list is always derived from the graph, never hand-authored;
    readers of the document may ignore it.
    """
    doc = graph_to_document(graph)
    doc["modules"] = [m.to_json() for m in detect_modules(graph)]
    return (json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n").encode("utf-8")


@dataclass(frozen=True)
class IntegrityReport:
    module_id: str
    ok: bool
    reasons: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {"module_id": self.module_id, "ok": self.ok, "reasons": list(self.reasons)}


def check_module_integrity(
    graph: QspHypergraph, module: BiologicalModule, delta: GraphDelta
) -> IntegrityReport:
    """Fail iff the delta removes module members or breaks the defining motif.

    Pure additions never fail; attribute-only modifications pass as long as
    the motif (membership and kinds) survives re-detection on the new graph.
    """
    reasons = []
    removed_members = (set(delta.removed_vertices) & set(module.vertex_ids)) | (
        set(delta.removed_edges) & set(module.edge_ids)
    )
    if removed_members:
        reasons.append(f"delta removes module members: {sorted(removed_members)}")

    if not reasons:
        from .hypergraph import apply_delta

        new_graph = apply_delta(graph, delta)
        survivors = [
            m
            for m in detect_modules(new_graph)
            if m.kind == module.kind and set(module.vertex_ids) <= set(m.vertex_ids)
        ]
        if not survivors:
            reasons.append("defining motif no longer detected as a superset module")
    return IntegrityReport(module.id, ok=not reasons, reasons=tuple(reasons))
