"""Edit grammar, clarification detection, atomic application, BFS alignment."""

import random
from dataclasses import replace

import pytest

from qspgraph.edits import (
    apply_edits,
    bfs_align,
    detect_missing,
    entity_checks,
    geometric_midpoint,
    parse_edit_script,
    propose_defaults,
)
from qspgraph.errors import ApplyError, EditParseError, OpenItemsError
from qspgraph.hypergraph import (
    build_hypergraph,
    canonical_serialize,
    graph_diff,
    local_id,
    vertex_id,
)
from qspgraph.model import Compartment, Parameter, QspModel, Reaction, Species
from qspgraph.priors import default_kb
from qspgraph.units import parse_unit

from conftest import TMDD_R1_EDIT, random_model

KB = default_kb()


def base_model() -> QspModel:
    return QspModel(
        name="base",
        compartments=(
            Compartment("central", 3.0, "L", ("peripheral",)),
            Compartment("peripheral", 4.0, "L", ("central",)),
        ),
        species=(
            Species("D", "central", 0.0, "nM", 150000.0),
            Species("D_p", "peripheral", 0.0, "nM", 150000.0),
        ),
        parameters=(
            Parameter("kel", 0.1, "1/hour"),
            Parameter("k12", 0.2, "1/hour"),
            Parameter("k21", 0.15, "1/hour"),
        ),
        reactions=(
            Reaction("elim", (("D", 1),), (), "mass_action", (("k", "kel"),)),
            Reaction("dist_cp", (("D", 1),), (("D_p", 1),), "mass_action", (("k", "k12"),)),
            Reaction("dist_pc", (("D_p", 1),), (("D", 1),), "mass_action", (("k", "k21"),)),
        ),
        context_tags=("human",),
    )


# -- grammar --------------------------------------------------------------------


def test_reaction_edit_with_two_unknown_slots():
    script = parse_edit_script(
        "ADD REACTION bind: D + R1 -> DR1 KINETICS mass_action kon=? koff=?\n"
    )
    assert len(script.edits) == 1
    assert script.edits[0].category == "reaction"
    assert script.unknown_slots() == [("kon", "value"), ("koff", "value")]


def test_set_parameter_edit():
    script = parse_edit_script("SET PARAMETER KD VALUE 10 nM\n")
    edit = script.edits[0]
    assert edit.category == "parameter"
    assert edit.payload == {"id": "KD", "value": 10.0, "unit": "nM"}


def test_plot_edit():
    script = parse_edit_script("PLOT plasma.D COLOR black SUBPLOT 1\n")
    edit = script.edits[0]
    assert edit.category == "visualization"
    assert edit.payload == {"compartment": "plasma", "species": "D", "color": "black", "subplot": 1}


def test_all_eight_categories_parse():
    text = "\n".join(
        [
            "ADD COMPARTMENT tumor VOLUME 0.5 L",
            "ADD SPECIES X IN tumor INIT 1 nM",
            "ADD PARAMETER kx VALUE 0.1 1/hour",
            "ADD REACTION degx: X -> null KINETICS mass_action k=kx",
            "ADD DOSE bolus 10 nmol AT 0 hour TO tumor.X",
            "PLOT tumor.X COLOR red SUBPLOT 1",
            "ADD CONSTRAINT range kx 0.01 1 1/hour",
            "REMOVE parameter kx",
        ]
    )
    script = parse_edit_script(text)
    assert [e.category for e in script.edits] == [
        "compartment",
        "species",
        "parameter",
        "reaction",
        "dosing",
        "visualization",
        "constraint",
        "structural",
    ]


def test_malformed_line_reports_position():
    with pytest.raises(EditParseError) as err:
        parse_edit_script("ADD SPECIES broken\n")
    assert err.value.line == 1


# -- detect_missing ---------------------------------------------------------------


def test_fully_specified_edit_has_no_items():
    g = build_hypergraph(base_model())
    items = detect_missing(parse_edit_script(TMDD_R1_EDIT), g, KB)
    assert items == []


def test_affinity_default_is_log_midpoint_of_prior():
    g = build_hypergraph(base_model())
    script = parse_edit_script("ADD PARAMETER KD1 VALUE ? M\n")
    items = detect_missing(script, g, KB)
    assert len(items) == 1
    value, unit = items[0].default
    assert unit == "M"
    assert value == pytest.approx(1e-9)  # geometric midpoint of [1e-12, 1e-6]
    assert items[0].source_prior.startswith("binding_affinity")


def test_koff_derivation_rule_attached():
    g = build_hypergraph(base_model())
    script = parse_edit_script(
        "ADD PARAMETER KD1 VALUE ? M\n"
        "ADD SPECIES R1 IN central INIT 10 nM\n"
        "ADD SPECIES DR1 IN central INIT 0 nM\n"
        "ADD REACTION bind_r1: D + R1 -> DR1 KINETICS mass_action kon1=0.15 koff1=?\n"
    )
    items = detect_missing(script, g, KB)
    by_target = {i.target[0]: i for i in items}
    assert "KD1" in by_target and by_target["KD1"].default is not None
    koff = by_target["koff1"]
    assert koff.derived == (("koff1", "product", ("KD1", "kon1")),)


def test_both_rate_constants_unknown_with_known_affinity():
    # KD given: ask for kon; koff carries the derivation and is not asked as
    # a free value; KD itself is never asked.
    g = build_hypergraph(base_model())
    script = parse_edit_script(
        "ADD PARAMETER KD1 VALUE 1 nM\n"
        "ADD SPECIES R1 IN central INIT 10 nM\n"
        "ADD SPECIES DR1 IN central INIT 0 nM\n"
        "ADD REACTION bind_r1: D + R1 -> DR1 KINETICS mass_action kon1=? koff1=?\n"
    )
    items = detect_missing(script, g, KB)
    targets = {i.target[0]: i for i in items}
    assert "KD1" not in targets
    assert "kon1" in targets and not targets["kon1"].derived
    assert targets["koff1"].derived == (("koff1", "product", ("KD1", "kon1")),)


def test_species_without_compartment_defaults_to_partner():
    g = build_hypergraph(base_model())
    script = parse_edit_script(
        "ADD SPECIES R1 IN central INIT 10 nM\n"
        "ADD SPECIES DR1 IN ? INIT 0 nM\n"
        "ADD REACTION bind: D + R1 -> DR1 KINETICS mass_action kon=0.1 koff=0.1\n"
    )
    items = detect_missing(script, g, KB)
    comp_items = [i for i in items if i.target == ("DR1", "compartment")]
    assert comp_items and comp_items[0].default[0] == "central"


def test_unbound_template_slot_is_asked():
    g = build_hypergraph(base_model())
    script = parse_edit_script(
        "ADD SPECIES C IN central INIT 5 nM\n"
        "ADD SPECIES P IN central INIT 0 nM\n"
        "ADD REACTION conv: C -> P KINETICS michaelis_menten Vmax=2.0\n"
    )
    items = detect_missing(script, g, KB)
    assert any(i.target == ("conv_Km", "value") for i in items)


# -- apply ------------------------------------------------------------------------


def test_empty_edit_script_is_identity():
    g = build_hypergraph(base_model())
    g2, delta = apply_edits(g, parse_edit_script(""), kb=KB)
    assert delta.is_empty()
    assert canonical_serialize(g2) == canonical_serialize(g)


def test_tmdd_edit_applies_atomically():
    g = build_hypergraph(base_model())
    g2, delta = apply_edits(g, parse_edit_script(TMDD_R1_EDIT), kb=KB)
    added = {local_id(v) for v in delta.added_vertices}
    assert {"R1", "sR1", "DR1", "DsR1"} <= added
    assert {"synth_r1", "deg_r1", "bind_r1", "bind_r1_rev", "int_dr1", "shed_r1"} <= added
    from qspgraph.validation import validate

    assert validate(g2, KB).epsilon == 0


def test_open_item_blocks_application():
    g = build_hypergraph(base_model())
    script = parse_edit_script("ADD PARAMETER KD1 VALUE ? M\n")
    with pytest.raises(OpenItemsError):
        apply_edits(g, script, kb=KB)
    # with a confirmation it goes through
    g2, delta = apply_edits(g, script, {("KD1", "value"): 1e-9}, kb=KB)
    assert vertex_id("parameter", "KD1") in delta.added_vertices


def test_removing_referenced_species_rolls_back():
    g = build_hypergraph(base_model())
    before = canonical_serialize(g)
    with pytest.raises(ApplyError) as err:
        apply_edits(g, parse_edit_script("REMOVE species D\n"), kb=KB)
    assert err.value.report is not None
    assert any(v.predicate == "connectivity" for v in err.value.report.items)
    assert canonical_serialize(g) == before


def test_id_collision_rolls_back():
    g = build_hypergraph(base_model())
    before = canonical_serialize(g)
    with pytest.raises(ApplyError):
        apply_edits(g, parse_edit_script("ADD PARAMETER kel VALUE 1 1/hour\n"), kb=KB)
    assert canonical_serialize(g) == before


def test_blocking_violation_rolls_back():
    g = build_hypergraph(base_model())
    before = canonical_serialize(g)
    script = parse_edit_script(
        "ADD PARAMETER kbad VALUE 5 L\n"
        "ADD SPECIES X IN central INIT 1 nM\n"
        "ADD REACTION degx: X -> null KINETICS mass_action k=kbad\n"
    )
    with pytest.raises(ApplyError) as err:
        apply_edits(g, script, kb=KB)
    assert any(v.predicate == "unit_consistency" for v in err.value.report.items)
    assert canonical_serialize(g) == before


def test_atomicity_fuzz():
    """Injected failures never leave partial state (200 trials)."""
    rng = random.Random(31337)
    bad_templates = [
        "ADD SPECIES X{i} IN nowhere INIT 1 nM",
        "ADD PARAMETER kel VALUE 1 1/hour",
        "REMOVE species D",
        "REMOVE reaction missing_r",
        "ADD PARAMETER kbad{i} VALUE 5 L\nADD SPECIES Y{i} IN central INIT 1 nM\n"
        "ADD REACTION degy{i}: Y{i} -> null KINETICS mass_action k=kbad{i}",
        "ADD PARAMETER p{i} VALUE ? nM",
        "ADD REACTION dangling{i}: GHOST{i} -> null KINETICS mass_action k=kel",
    ]
    g = build_hypergraph(base_model())
    before = canonical_serialize(g)
    partial = 0
    for i in range(200):
        text = rng.choice(bad_templates).format(i=i)
        try:
            apply_edits(g, parse_edit_script(text), kb=KB)
            partial += 1  # should never succeed
        except (ApplyError, OpenItemsError):
            if canonical_serialize(g) != before:
                partial += 1
    assert partial == 0


# -- BFS alignment ------------------------------------------------------------------


def naive_dependents(graph, delta, kb, max_hops=3):
    """Brute-force oracle: full scan filtered by independently computed BFS distance."""
    pairs = set()
    for e in graph.hyperedges.values():
        members = list(e.members)
        for i in range(len(members)):
            for j in range(len(members)):
                if i != j:
                    pairs.add((members[i], members[j]))
    for v in graph.vertices.values():
        if v.kind == "species":
            cvid = vertex_id("compartment", v.attrs.get("compartment", ""))
            if cvid in graph.vertices:
                pairs.add((v.id, cvid))
                pairs.add((cvid, v.id))

    seeds = [vid for vid in delta.added_vertices if vid in graph.vertices]
    dist = {vid: 0 for vid in seeds}
    frontier = list(seeds)
    for hop in range(1, max_hops + 1):
        nxt = []
        for vid in frontier:
            for a, b in pairs:
                if a == vid and b not in dist:
                    dist[b] = hop
                    nxt.append(b)
        frontier = nxt

    out = set()
    for vid in graph.vertices:  # full scan over ALL entities
        if vid not in dist:
            continue
        from qspgraph.hypergraph import vertex_kind

        if vertex_kind(vid) == "function_type":
            continue
        reason = entity_checks(graph, vid, kb)
        if reason:
            out.add((vid, reason))
    return out


def _mutate(model: QspModel, rng: random.Random, tag: int) -> QspModel:
    """Random mutation; some inject inconsistencies for the dependent set."""
    choice = rng.randrange(5)
    if choice == 0:  # out-of-range affinity parameter
        return replace(
            model,
            parameters=model.parameters + (Parameter(f"KD_bad{tag}", 10.0 ** rng.uniform(1, 6), "M"),),
        )
    if choice == 1:  # unconfirmed parameter
        return replace(
            model,
            parameters=model.parameters + (Parameter(f"p_open{tag}", None, "1/hour", provenance_tag="?"),),
        )
    if choice == 2 and len(model.species) >= 2:  # dimensionally wrong binding constant
        a, b = model.species[0], model.species[1]
        return replace(
            model,
            parameters=model.parameters + (Parameter(f"k_bad{tag}", 0.1, "L"),),
            reactions=model.reactions
            + (
                Reaction(
                    f"r_bad{tag}",
                    ((a.id, 1),),
                    ((b.id, 1),),
                    "mass_action",
                    (("k", f"k_bad{tag}"),),
                ),
            ),
        )
    if choice == 3:  # benign new species + degradation
        comp = model.compartments[0].id
        return replace(
            model,
            species=model.species + (Species(f"S_new{tag}", comp, 1.0, "nM"),),
            parameters=model.parameters + (Parameter(f"k_new{tag}", 0.1, "1/hour"),),
            reactions=model.reactions
            + (
                Reaction(
                    f"r_new{tag}", ((f"S_new{tag}", 1),), (), "mass_action", (("k", f"k_new{tag}"),)
                ),
            ),
        )
    # benign isolated parameter
    return replace(
        model,
        parameters=model.parameters + (Parameter(f"p_iso{tag}", 0.5, "1/hour"),),
    )


def test_bfs_matches_naive_oracle_exactly():
    rng = random.Random(2718)
    checked = 0
    for trial in range(100):
        base = random_model(rng, n_species=rng.randint(3, 12), n_reactions=rng.randint(2, 12))
        g1 = build_hypergraph(base)
        mutated = _mutate(base, rng, trial)
        g2 = build_hypergraph(mutated)
        delta = graph_diff(g1, g2)
        report = bfs_align(g2, delta, KB)
        oracle = naive_dependents(g2, delta, KB)
        assert set(report.dependents) == oracle, (trial, set(report.dependents) ^ oracle)
        for seed, hops in report.frontiers.items():
            assert set(hops[1]) <= set(hops[2]) <= set(hops[3])
        checked += 1
    assert checked == 100


def test_isolated_consistent_parameter_has_empty_dependent_set():
    base = base_model()
    g1 = build_hypergraph(base)
    extended = replace(base, parameters=base.parameters + (Parameter("know", 0.5, "1/hour"),))
    g2 = build_hypergraph(extended)
    report = bfs_align(g2, graph_diff(g1, g2), KB)
    assert report.dependents == ()


def test_bfs_reaches_shared_drug_then_its_reactions():
    base = base_model()
    g1 = build_hypergraph(base)
    g2, delta = apply_edits(g1, parse_edit_script(TMDD_R1_EDIT), kb=KB)
    report = bfs_align(g2, delta, KB)
    bind_frontiers = report.frontiers[vertex_id("reaction", "bind_r1")]
    assert vertex_id("species", "D") in bind_frontiers[1]
    assert vertex_id("reaction", "elim") in bind_frontiers[2]


# -- proposals -----------------------------------------------------------------------


def test_proposals_are_prior_grounded_and_in_interval():
    base = base_model()
    g1 = build_hypergraph(base)
    bad = replace(
        base, parameters=base.parameters + (Parameter("KD_wild", 1.0, "M"),)
    )
    g2 = build_hypergraph(bad)
    report = bfs_align(g2, graph_diff(g1, g2), KB)
    assert any(vid == vertex_id("parameter", "KD_wild") for vid, _r in report.dependents)
    proposals = propose_defaults(report, g2, KB)
    assert len(proposals) == 1
    p = proposals[0]
    assert p.parameter == "KD_wild"
    assert p.interval[0] <= p.value <= p.interval[1]
    # dims agree with the parameter's declared unit
    assert parse_unit(p.unit).dims == parse_unit("M").dims
    # log-midpoint of [1e-12, 1e-6] M
    assert p.value == pytest.approx(1e-9)


def test_central_volume_proposal_geometric_mean():
    assert geometric_midpoint(3.0, 5.0) == pytest.approx((3.0 * 5.0) ** 0.5)
    assert geometric_midpoint(3.0, 5.0) == pytest.approx(3.873, abs=1e-3)


def test_parameter_without_prior_kind_gets_no_proposal():
    base = base_model()
    g1 = build_hypergraph(base)
    bad = replace(base, parameters=base.parameters + (Parameter("mystery", None, "g/mol", provenance_tag="?"),))
    g2 = build_hypergraph(bad)
    report = bfs_align(g2, graph_diff(g1, g2), KB)
    assert any(local_id(vid) == "mystery" for vid, _r in report.dependents)
    assert all(p.parameter != "mystery" for p in report.proposals)
