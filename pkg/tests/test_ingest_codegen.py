"""Script parsing, lowering, style extraction, emission, and conformance."""

import random

import pytest

from qspgraph.codegen import emit_script, syntax_conformance, topology_equivalent
from qspgraph.errors import CodegenError, IngestError, LoweringError
from qspgraph.hypergraph import build_hypergraph
from qspgraph.ingest import (
    DEFAULT_STYLE,
    StyleProfile,
    extract_style,
    lower_to_model,
    parse_script,
)
from qspgraph.model import Parameter, QspModel, document_bytes

from conftest import BASE_PK_SCRIPT, random_model


def test_parse_compartment_statement():
    ast = parse_script("c1 = addcompartment(m, 'central', 3, 'CapacityUnits', 'liter');\n")
    st = ast.of_kind("add_compartment")[0]
    assert st.args[1].value == "central"
    assert st.args[2].value == 3.0


def test_empty_file_gives_empty_ast():
    assert parse_script("").statements == ()


def test_unknown_statements_are_lossless():
    text = "weird_stuff(1, 2);\nfor i = 1:10\nend\n"
    ast = parse_script(text)
    assert ast.raw_text() == text
    kinds = [s.kind for s in ast.statements]
    assert "unknown" in kinds


def test_raw_text_reproduces_input_byte_for_byte():
    ast = parse_script(BASE_PK_SCRIPT)
    assert ast.raw_text() == BASE_PK_SCRIPT


def test_unbalanced_quote_is_a_parse_error():
    with pytest.raises(IngestError) as err:
        parse_script("x = addspecies(c1, 'D;\n")
    assert err.value.line == 1


def test_unbalanced_paren_is_a_parse_error():
    with pytest.raises(IngestError):
        parse_script("x = addcompartment(m, 'c', 1;\n")


def test_lowering_matches_hand_translation(base_pk_script):
    model, warnings = lower_to_model(parse_script(base_pk_script))
    assert warnings == []
    assert model.name == "two_compartment_pk"
    assert {c.id for c in model.compartments} == {"central", "peripheral"}
    central = model.compartment("central")
    assert central.volume_value == 3.0 and central.connectivity == ("peripheral",)
    assert model.find_species("D").molecular_weight == 150000.0
    elim = next(r for r in model.reactions if r.id == "elim")
    assert elim.template == "mass_action" and elim.slot_map() == {"k": "kel"}
    assert model.doses[0].amount == 300.0 and model.doses[0].species == "D"
    assert model.plots[0].color == "black" and model.plots[0].subplot == 1


def test_mass_action_template_from_rate():
    text = (
        "m = sbiomodel('x');\n"
        "c1 = addcompartment(m, 'c', 1.0, 'CapacityUnits', 'liter');\n"
        "s1 = addspecies(c1, 'D', 1.0, 'InitialAmountUnits', 'nanomolarity');\n"
        "s2 = addspecies(c1, 'R1', 1.0, 'InitialAmountUnits', 'nanomolarity');\n"
        "s3 = addspecies(c1, 'DR1', 0.0, 'InitialAmountUnits', 'nanomolarity');\n"
        "p1 = addparameter(m, 'kon', 0.1, 'ValueUnits', '1/(nanomolarity*hour)');\n"
        "r1 = addreaction(m, 'D + R1 -> DR1', 'Name', 'bind', 'ReactionRate', 'kon*D*R1');\n"
    )
    model, _ = lower_to_model(parse_script(text))
    r = model.reactions[0]
    assert r.template == "mass_action"
    assert r.slot_map() == {"k": "kon"}


def test_michaelis_menten_template_from_rate():
    text = (
        "m = sbiomodel('x');\n"
        "c1 = addcompartment(m, 'c', 1.0, 'CapacityUnits', 'liter');\n"
        "s1 = addspecies(c1, 'C', 5.0, 'InitialAmountUnits', 'micromolarity');\n"
        "s2 = addspecies(c1, 'P', 0.0, 'InitialAmountUnits', 'micromolarity');\n"
        "p1 = addparameter(m, 'Vmax', 2.0, 'ValueUnits', 'micromolarity/hour');\n"
        "p2 = addparameter(m, 'Km', 1.0, 'ValueUnits', 'micromolarity');\n"
        "r1 = addreaction(m, 'C -> P', 'Name', 'conv', 'ReactionRate', 'Vmax*C/(Km + C)');\n"
    )
    model, _ = lower_to_model(parse_script(text))
    assert model.reactions[0].template == "michaelis_menten"
    assert model.reactions[0].slot_map() == {"Vmax": "Vmax", "Km": "Km"}


def test_hill_template_from_rate_with_symbolic_n():
    text = (
        "m = sbiomodel('x');\n"
        "c1 = addcompartment(m, 'c', 1.0, 'CapacityUnits', 'liter');\n"
        "s1 = addspecies(c1, 'C', 5.0, 'InitialAmountUnits', 'micromolarity');\n"
        "s2 = addspecies(c1, 'P', 0.0, 'InitialAmountUnits', 'micromolarity');\n"
        "p1 = addparameter(m, 'Vm', 2.0, 'ValueUnits', 'micromolarity/hour');\n"
        "p2 = addparameter(m, 'K', 1.0, 'ValueUnits', 'micromolarity');\n"
        "p3 = addparameter(m, 'n', 2.0, 'ValueUnits', 'dimensionless');\n"
        "r1 = addreaction(m, 'C -> P', 'Name', 'h', 'ReactionRate', 'Vm*C^n/(K^n + C^n)');\n"
    )
    model, _ = lower_to_model(parse_script(text))
    assert model.reactions[0].template == "hill"
    assert model.reactions[0].slot_map() == {"Vmax": "Vm", "K": "K", "n": "n"}


def test_undeclared_species_is_a_lowering_error():
    text = (
        "m = sbiomodel('x');\n"
        "c1 = addcompartment(m, 'c', 1.0, 'CapacityUnits', 'liter');\n"
        "r1 = addreaction(m, 'GHOST -> null', 'Name', 'r', 'ReactionRate', '0.1*GHOST');\n"
    )
    with pytest.raises(LoweringError):
        lower_to_model(parse_script(text))


def test_style_extraction(base_pk_script):
    style = extract_style(parse_script(base_pk_script))
    assert style.naming == "snake"
    assert style.naming_confidence == 1.0
    assert style.ordering == "grouped"
    assert style.spelling_map()["nM"] == "nanomolarity"
    assert "cs.SolverType = 'ode45';" in style.solver_config
    assert "% version: {tag}" in style.header_lines


def test_naming_majority_vote_with_confidence():
    text = (
        "m = sbiomodel('x');\n"
        "c1 = addcompartment(m, 'main_comp', 1.0, 'CapacityUnits', 'liter');\n"
        "p1 = addparameter(m, 'k_el', 0.1, 'ValueUnits', '1/hour');\n"
        "p2 = addparameter(m, 'k_abs', 0.2, 'ValueUnits', '1/hour');\n"
        "p3 = addparameter(m, 'kOn', 0.1, 'ValueUnits', '1/hour');\n"
        "p4 = addparameter(m, 'kOff', 0.2, 'ValueUnits', '1/hour');\n"
    )
    style = extract_style(parse_script(text))
    assert style.naming == "snake"
    assert style.naming_confidence == pytest.approx(0.6)


def test_configset_lines_captured_verbatim():
    style = extract_style(parse_script(BASE_PK_SCRIPT))
    assert style.solver_config == (
        "cs = getconfigset(m);",
        "cs.SolverType = 'ode45';",
        "cs.StopTime = 100;",
    )


def test_emission_determinism(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    style = extract_style(parse_script(base_pk_script))
    g = build_hypergraph(model)
    assert emit_script(g, style, "v1.0") == emit_script(g, style, "v1.0")


def test_empty_graph_emits_model_declaration_only():
    g = build_hypergraph(QspModel(name="bare"))
    text = emit_script(g, DEFAULT_STYLE, "v1.0")
    lines = [l for l in text.splitlines() if l and not l.startswith("%")]
    assert lines[0] == "m = sbiomodel('bare');"
    assert all(l.startswith(("m =", "[t, x, names]")) for l in lines)


def test_round_trip_topology_equivalence(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    style = extract_style(parse_script(base_pk_script))
    g = build_hypergraph(model)
    emitted = emit_script(g, style, "v1.0")
    model2, _ = lower_to_model(parse_script(emitted))
    result = topology_equivalent(g, build_hypergraph(model2))
    assert result["equivalent"], result["mismatches"]


def test_round_trip_random_models():
    rng = random.Random(17)
    for _ in range(20):
        m = random_model(rng)
        g = build_hypergraph(m)
        emitted = emit_script(g, DEFAULT_STYLE, "v1.0")
        m2, _ = lower_to_model(parse_script(emitted))
        result = topology_equivalent(g, build_hypergraph(m2))
        assert result["equivalent"], (m.name, result["mismatches"][:3])
        # weights, templates, units and compartments survive exactly
        assert document_bytes(m) == document_bytes(m2)


def test_emission_refused_on_blocking_violations():
    m = QspModel(
        name="bad",
        compartments=(),
        species=(),
        parameters=(Parameter("k", 1.0, "florg"),),
    )
    # bypass model_check by constructing the graph by hand
    from qspgraph.hypergraph import QspHypergraph, Vertex, vertex_id

    vid = vertex_id("parameter", "k")
    g = QspHypergraph(
        vertices={vid: Vertex(vid, "parameter", {"value": 1.0, "unit": "florg", "provenance_tag": "user"})},
        hyperedges={},
        psi={},
        meta={"name": "bad"},
    )
    with pytest.raises(CodegenError) as err:
        emit_script(g, DEFAULT_STYLE, "v1.0")
    assert err.value.report is not None
    assert err.value.report.epsilon >= 1.0


def test_topology_equivalence_detects_value_change(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    g1 = build_hypergraph(model)
    changed = QspModel(
        name=model.name,
        convention=model.convention,
        compartments=model.compartments,
        species=model.species,
        parameters=tuple(
            Parameter(p.id, 0.42, p.unit) if p.id == "kel" else p for p in model.parameters
        ),
        reactions=model.reactions,
        doses=model.doses,
        plots=model.plots,
        context_tags=model.context_tags,
    )
    result = topology_equivalent(g1, build_hypergraph(changed))
    assert not result["equivalent"]
    assert any("0.42" in m or "0.1" in m for m in result["mismatches"])


def test_topology_equivalence_invariant_under_renaming(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    g1 = build_hypergraph(model)
    emitted = emit_script(g1, DEFAULT_STYLE, "v1.0")
    renamed_text = (
        emitted.replace("'D'", "'drug'")
        .replace("'D -> null'", "'drug -> null'")
        .replace("'D -> D_p'", "'drug -> D_p'")
        .replace("'D_p -> D'", "'D_p -> drug'")
        .replace("'kel*D'", "'kel*drug'")
        .replace("'k12*D'", "'k12*drug'")
        .replace("'central.D'", "'central.drug'")
    )
    model2, _ = lower_to_model(parse_script(renamed_text))
    result = topology_equivalent(g1, build_hypergraph(model2))
    assert result["equivalent"], result["mismatches"][:5]


def test_self_conformance_is_perfect(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    style = extract_style(parse_script(base_pk_script))
    emitted = emit_script(build_hypergraph(model), style, "v1.0")
    result = syntax_conformance(emitted, style)
    assert result["score"] == 1.0 and result["findings"] == []


def test_naming_mismatch_lowers_score(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    style = extract_style(parse_script(base_pk_script))
    camel_style = StyleProfile(
        naming="camel",
        naming_confidence=1.0,
        unit_spellings=style.unit_spellings,
        header_lines=style.header_lines,
        ordering=style.ordering,
        solver_config=style.solver_config,
    )
    emitted = emit_script(build_hypergraph(model), style, "v1.0")
    result = syntax_conformance(emitted, camel_style)
    assert result["score"] < 1.0
    assert any("naming" in f for f in result["findings"])


def test_exactly_one_failed_check_scores_three_quarters(base_pk_script):
    model, _ = lower_to_model(parse_script(base_pk_script))
    style = extract_style(parse_script(base_pk_script))
    emitted = emit_script(build_hypergraph(model), style, "v1.0")
    # violate exactly the unit-spelling check
    hacked = emitted.replace("'nanomolarity'", "'nM'")
    result = syntax_conformance(hacked, style)
    assert result["score"] == 0.75
    assert len(result["findings"]) == 1
