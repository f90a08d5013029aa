"""Motif-seeded module detection and integrity checking."""

import random

from qspgraph.hypergraph import build_hypergraph, graph_diff, local_id, vertex_id
from qspgraph.ingest import lower_to_model, parse_script
from qspgraph.model import Compartment, Parameter, QspModel, Reaction, Species
from qspgraph.modules import check_module_integrity, detect_modules

from conftest import BASE_PK_SCRIPT, random_model


def full_tmdd_model() -> QspModel:
    return QspModel(
        name="tmdd_full",
        compartments=(
            Compartment("central", 3.0, "L", ("peripheral",)),
            Compartment("peripheral", 4.0, "L", ("central",)),
        ),
        species=(
            Species("D", "central", 100.0, "nM"),
            Species("D_p", "peripheral", 0.0, "nM"),
            Species("R1", "central", 10.0, "nM"),
            Species("sR1", "central", 1.0, "nM"),
            Species("DR1", "central", 0.0, "nM"),
        ),
        parameters=(
            Parameter("kel", 0.1, "1/hour"),
            Parameter("k12", 0.2, "1/hour"),
            Parameter("k21", 0.15, "1/hour"),
            Parameter("kon1", 0.1, "1/(nM*hour)"),
            Parameter("koff1", 0.1, "1/hour"),
            Parameter("ksyn1", 2.0, "nM/hour"),
            Parameter("kdeg1", 0.2, "1/hour"),
            Parameter("kshed1", 0.05, "1/hour"),
            Parameter("kint1", 0.25, "1/hour"),
        ),
        reactions=(
            Reaction("elim", (("D", 1),), (), "mass_action", (("k", "kel"),)),
            Reaction("dist_cp", (("D", 1),), (("D_p", 1),), "mass_action", (("k", "k12"),)),
            Reaction("dist_pc", (("D_p", 1),), (("D", 1),), "mass_action", (("k", "k21"),)),
            Reaction("synth_r1", (), (("R1", 1),), "mass_action", (("k", "ksyn1"),)),
            Reaction("deg_r1", (("R1", 1),), (), "mass_action", (("k", "kdeg1"),)),
            Reaction("bind_r1", (("D", 1), ("R1", 1)), (("DR1", 1),), "mass_action", (("k", "kon1"),)),
            Reaction("unbind_r1", (("DR1", 1),), (("D", 1), ("R1", 1)), "mass_action", (("k", "koff1"),)),
            Reaction("int_dr1", (("DR1", 1),), (), "mass_action", (("k", "kint1"),)),
            Reaction("shed_r1", (("R1", 1),), (("sR1", 1),), "mass_action", (("k", "kshed1"),)),
        ),
    )


def test_two_compartment_pk_module():
    model, _ = lower_to_model(parse_script(BASE_PK_SCRIPT))
    modules = detect_modules(build_hypergraph(model))
    pk = [m for m in modules if m.kind == "pk"]
    assert len(pk) == 1
    members = set(pk[0].vertex_ids)
    assert vertex_id("compartment", "central") in members
    assert vertex_id("compartment", "peripheral") in members
    assert any(e for e in pk[0].edge_ids)  # transport edges present


def test_tmdd_module_membership():
    modules = detect_modules(build_hypergraph(full_tmdd_model()))
    kinds = {m.kind for m in modules}
    assert "pk" in kinds and "tmdd" in kinds
    tmdd = next(m for m in modules if m.kind == "tmdd")
    locals_ = {local_id(v) for v in tmdd.vertex_ids}
    assert {"D", "R1", "sR1", "DR1", "bind_r1", "unbind_r1", "shed_r1", "int_dr1"} <= locals_


def test_empty_graph_has_no_modules():
    assert detect_modules(build_hypergraph(QspModel(name="empty"))) == []


def test_every_reaction_is_covered():
    rng = random.Random(5)
    for _ in range(15):
        g = build_hypergraph(random_model(rng))
        modules = detect_modules(g)
        covered = set()
        for m in modules:
            covered |= {v for v in m.vertex_ids if v.startswith("reaction:")}
        reactions = {v.id for v in g.vertices_of_kind("reaction")}
        assert reactions <= covered


def test_detection_invariant_under_insertion_order():
    m = full_tmdd_model()
    g1 = build_hypergraph(m)
    shuffled = QspModel(
        name=m.name,
        compartments=tuple(reversed(m.compartments)),
        species=tuple(reversed(m.species)),
        parameters=tuple(reversed(m.parameters)),
        reactions=tuple(reversed(m.reactions)),
    )
    g2 = build_hypergraph(shuffled)
    mods1 = [(m.kind, m.vertex_ids) for m in detect_modules(g1)]
    mods2 = [(m.kind, m.vertex_ids) for m in detect_modules(g2)]
    assert mods1 == mods2


def test_monotone_additivity_under_pure_extension():
    base = full_tmdd_model()
    g1 = build_hypergraph(base)
    extended = QspModel(
        name=base.name,
        compartments=base.compartments,
        species=base.species + (Species("R2", "central", 5.0, "nM"), Species("DR2", "central", 0.0, "nM")),
        parameters=base.parameters + (Parameter("kon2", 0.05, "1/(nM*hour)"), Parameter("koff2", 0.5, "1/hour")),
        reactions=base.reactions
        + (
            Reaction("bind_r2", (("D", 1), ("R2", 1)), (("DR2", 1),), "mass_action", (("k", "kon2"),)),
            Reaction("unbind_r2", (("DR2", 1),), (("D", 1), ("R2", 1)), "mass_action", (("k", "koff2"),)),
        ),
    )
    g2 = build_hypergraph(extended)
    before = detect_modules(g1)
    after = detect_modules(g2)
    for module in before:
        grown = [
            m for m in after if m.kind == module.kind and set(module.vertex_ids) <= set(m.vertex_ids)
        ]
        assert grown, f"module {module.id} vanished under pure extension"


def test_integrity_pass_on_extension():
    base = full_tmdd_model()
    g1 = build_hypergraph(base)
    modules = detect_modules(g1)
    extended = QspModel(
        name=base.name,
        compartments=base.compartments,
        species=base.species + (Species("R2", "central", 5.0, "nM"),),
        parameters=base.parameters + (Parameter("ksyn2", 1.0, "nM/hour"),),
        reactions=base.reactions
        + (Reaction("synth_r2", (), (("R2", 1),), "mass_action", (("k", "ksyn2"),)),),
    )
    delta = graph_diff(g1, build_hypergraph(extended))
    for module in modules:
        assert check_module_integrity(g1, module, delta).ok


def test_integrity_fails_on_member_removal():
    base = full_tmdd_model()
    g1 = build_hypergraph(base)
    tmdd = next(m for m in detect_modules(g1) if m.kind == "tmdd")
    # remove the complex species and its reactions
    pruned = QspModel(
        name=base.name,
        compartments=base.compartments,
        species=tuple(s for s in base.species if s.id != "DR1"),
        parameters=base.parameters,
        reactions=tuple(r for r in base.reactions if r.id not in ("bind_r1", "unbind_r1", "int_dr1")),
    )
    delta = graph_diff(g1, build_hypergraph(pruned))
    report = check_module_integrity(g1, tmdd, delta)
    assert not report.ok
    assert "removes module members" in report.reasons[0]


def test_integrity_pass_on_parameter_rename():
    base = full_tmdd_model()
    g1 = build_hypergraph(base)
    modules = detect_modules(g1)
    renamed = QspModel(
        name=base.name,
        compartments=base.compartments,
        species=base.species,
        parameters=tuple(
            Parameter("kassoc", p.value, p.unit) if p.id == "kon1" else p for p in base.parameters
        ),
        reactions=tuple(
            Reaction(
                r.id, r.reactants, r.products, r.template,
                tuple((s, "kassoc" if t == "kon1" else t) for s, t in r.slot_bindings),
            )
            for r in base.reactions
        ),
    )
    delta = graph_diff(g1, build_hypergraph(renamed))
    for module in modules:
        assert check_module_integrity(g1, module, delta).ok
