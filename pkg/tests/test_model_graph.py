"""Model <-> hypergraph mappings: round trip, stoichiometry, diff, serialization."""

import json
import random

import pytest

from qspgraph.errors import ModelError, ReconstructionError, SerializationError
from qspgraph.hypergraph import (
    QspHypergraph,
    Vertex,
    apply_delta,
    build_hypergraph,
    canonical_serialize,
    extract_stoich_matrix,
    graph_diff,
    parse_graph,
    reconstruct_model,
    vertex_id,
)
from qspgraph.model import (
    Compartment,
    Parameter,
    QspModel,
    Reaction,
    Species,
    document_bytes,
    model_check,
    model_from_document,
    models_equal,
    to_document,
)

from conftest import random_model


def binding_model() -> QspModel:
    return QspModel(
        name="binding",
        compartments=(Compartment("central", 3.0, "L"),),
        species=(
            Species("D", "central", 100.0, "nM", 150000.0),
            Species("R1", "central", 10.0, "nM", 100000.0),
            Species("DR1", "central", 0.0, "nM", 250000.0),
        ),
        parameters=(
            Parameter("kon", 0.1, "1/(nM*hour)"),
            Parameter("koff", 0.1, "1/hour"),
        ),
        reactions=(
            Reaction("bind", (("D", 1), ("R1", 1)), (("DR1", 1),), "mass_action", (("k", "kon"),)),
            Reaction("unbind", (("DR1", 1),), (("D", 1), ("R1", 1)), "mass_action", (("k", "koff"),)),
        ),
    )


def test_empty_model_maps_to_empty_graph():
    g = build_hypergraph(QspModel(name="empty"))
    assert len(g.vertices) == 0
    assert len(g.hyperedges) == 0
    assert models_equal(reconstruct_model(g), QspModel(name="empty"))


def test_binding_reaction_edge_weights():
    g = build_hypergraph(binding_model())
    bind_vid = vertex_id("reaction", "bind")
    weights = {}
    for e in g.edges_of_kind("stoichiometric"):
        if bind_vid in e.members:
            svid = next(m for m in e.members if m.startswith("species:"))
            weights[svid.split(":", 1)[1]] = e.weight
    assert weights == {"D": -1, "R1": -1, "DR1": 1}


def test_two_compartment_model_graph_shape(base_pk_script):
    from qspgraph.ingest import lower_to_model, parse_script

    model, _ = lower_to_model(parse_script(base_pk_script))
    g = build_hypergraph(model)
    assert len(g.vertices_of_kind("compartment")) == 2
    declared = [e for e in g.edges_of_kind("transport") if e.attr_map().get("declared")]
    assert len(declared) == 2  # the connectivity pair
    reaction_ids = {v.id.split(":", 1)[1] for v in g.vertices_of_kind("reaction")}
    assert "elim" in reaction_ids


def test_vertex_count_accounting():
    rng = random.Random(7)
    for _ in range(20):
        m = random_model(rng)
        g = build_hypergraph(m)
        expected = (
            len(m.compartments)
            + len(m.species)
            + len(m.parameters)
            + len(m.reactions)
            + len(m.kinetic_templates)
        )
        assert len(g.vertices) == expected


def test_round_trip_structural_identity():
    m = binding_model()
    assert models_equal(reconstruct_model(build_hypergraph(m)), m)


def test_round_trip_fifty_random_models_byte_identical():
    rng = random.Random(42)
    for _ in range(50):
        m = random_model(rng)
        m2 = reconstruct_model(build_hypergraph(m))
        assert document_bytes(m) == document_bytes(m2)


def test_reconstruction_error_lists_missing_bindings():
    g = build_hypergraph(binding_model())
    vid = vertex_id("reaction", "bind")
    broken = dict(g.vertices)
    attrs = json.loads(json.dumps(broken[vid].attrs))
    attrs["slot_bindings"] = {}
    broken[vid] = Vertex(vid, "reaction", attrs)
    bad = QspHypergraph(vertices=broken, hyperedges=dict(g.hyperedges), psi=dict(g.psi), meta=g.meta)
    with pytest.raises(ReconstructionError) as err:
        reconstruct_model(bad)
    assert "bind.k" in err.value.missing


def test_dangling_reference_is_a_structured_error():
    m = QspModel(
        name="bad",
        compartments=(Compartment("c", 1.0, "L"),),
        species=(Species("A", "c", 1.0, "nM"),),
        parameters=(Parameter("k", 0.1, "1/hour"),),
        reactions=(Reaction("r", (("GHOST", 1),), (), "mass_action", (("k", "k"),)),),
    )
    with pytest.raises(ModelError) as err:
        build_hypergraph(m)
    assert "GHOST" in str(err.value)
    assert err.value.site == "r"


def test_stoich_matrix_single_column():
    g = build_hypergraph(binding_model())
    S = extract_stoich_matrix(g)
    j = S.cols.index("bind")
    col = {S.rows[i]: w for (i, jj), w in S.entries.items() if jj == j}
    assert col == {"D": -1, "R1": -1, "DR1": 1}


def test_stoich_matrix_reversible_pair_negated():
    g = build_hypergraph(binding_model())
    S = extract_stoich_matrix(g)
    jb, ju = S.cols.index("bind"), S.cols.index("unbind")
    for i in range(len(S.rows)):
        assert S.entries.get((i, jb), 0) == -S.entries.get((i, ju), 0)


def test_stoich_nnz_matches_incidences():
    rng = random.Random(3)
    for _ in range(10):
        g = build_hypergraph(random_model(rng))
        S = extract_stoich_matrix(g)
        assert S.nnz == len(g.edges_of_kind("stoichiometric"))


def test_diff_identity_is_empty():
    g = build_hypergraph(binding_model())
    assert graph_diff(g, g).is_empty()


def test_diff_apply_reproduces_target():
    rng = random.Random(11)
    for _ in range(25):
        a = build_hypergraph(random_model(rng))
        b = build_hypergraph(random_model(rng))
        delta = graph_diff(a, b)
        rebuilt = apply_delta(a, delta)
        assert canonical_serialize(rebuilt) == canonical_serialize(b)


def test_diff_size_tracks_small_mutations():
    m = binding_model()
    g = build_hypergraph(m)
    m2 = QspModel(
        name=m.name,
        compartments=m.compartments,
        species=m.species,
        parameters=m.parameters + (Parameter("knew", 1.0, "1/hour"),),
        reactions=m.reactions,
    )
    delta = graph_diff(g, build_hypergraph(m2))
    assert set(delta.added_vertices) == {vertex_id("parameter", "knew")}
    assert not delta.removed_vertices


def test_three_op_mutation_gives_delta_of_size_three():
    m = binding_model()
    g = build_hypergraph(m)
    mutated = QspModel(
        name=m.name,
        compartments=m.compartments,
        species=m.species,
        parameters=tuple(p for p in m.parameters if p.id != "koff")  # remove one
        + (Parameter("knew", 1.0, "1/hour"),)  # add one
        + (Parameter("kon", 0.2, "1/(nM*hour)"),),  # modify one (value change)
        reactions=tuple(r for r in m.reactions if r.id != "unbind"),
    )
    mutated = QspModel(
        name=mutated.name,
        compartments=mutated.compartments,
        species=mutated.species,
        parameters=tuple(p for p in mutated.parameters if p.id != "kon")
        + (Parameter("kon", 0.2, "1/(nM*hour)"),),
        reactions=mutated.reactions,
    )
    delta = graph_diff(g, build_hypergraph(mutated))
    vertex_ops = (
        len(delta.added_vertices) + len(delta.removed_vertices) + len(delta.modified_vertices)
    )
    assert vertex_ops == 4  # knew added; koff and unbind removed; kon modified
    assert set(delta.modified_vertices) == {vertex_id("parameter", "kon")}


def test_canonical_serialize_deterministic_and_permutation_stable():
    m = binding_model()
    g1 = build_hypergraph(m)
    shuffled = QspModel(
        name=m.name,
        compartments=m.compartments,
        species=tuple(reversed(m.species)),
        parameters=tuple(reversed(m.parameters)),
        reactions=tuple(reversed(m.reactions)),
    )
    g2 = build_hypergraph(shuffled)
    assert canonical_serialize(g1) == canonical_serialize(g1)
    assert canonical_serialize(g1) == canonical_serialize(g2)


def test_serialize_parse_serialize_identity():
    g = build_hypergraph(binding_model())
    data = canonical_serialize(g)
    assert canonical_serialize(parse_graph(data)) == data


def test_serialize_rejects_non_finite():
    g = build_hypergraph(binding_model())
    vid = vertex_id("parameter", "kon")
    broken = dict(g.vertices)
    attrs = dict(broken[vid].attrs)
    attrs["value"] = float("nan")
    broken[vid] = Vertex(vid, "parameter", attrs)
    bad = QspHypergraph(vertices=broken, hyperedges=dict(g.hyperedges), psi=dict(g.psi), meta=g.meta)
    with pytest.raises(SerializationError):
        canonical_serialize(bad)


def test_model_document_round_trip():
    m = binding_model()
    doc = to_document(m)
    m2 = model_from_document(json.loads(json.dumps(doc)))
    assert models_equal(m, m2)
    for key in ("compartments", "species", "parameters", "reactions", "doses", "plots", "constraints"):
        assert key in doc


def test_duplicate_identifier_rejected():
    m = QspModel(
        name="dup",
        compartments=(Compartment("x", 1.0, "L"),),
        species=(Species("x", "x", 0.0, "nM"),),
    )
    with pytest.raises(ModelError):
        model_check(m)
