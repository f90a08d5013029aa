"""Round trip: script -> model -> hypergraph -> script -> hypergraph.

Parses a two-compartment SimBiology-style script, encodes it as a typed
hypergraph, regenerates the script in the captured style, and checks that
re-ingesting the regenerated script reproduces an equivalent topology --
the whole Understanding phase in miniature.
"""

from qspgraph import (
    build_hypergraph,
    emit_script,
    extract_stoich_matrix,
    extract_style,
    lower_to_model,
    parse_script,
    topology_equivalent,
)

SCRIPT = """% two_compartment_pk baseline
m = sbiomodel('two_compartment_pk');
c1 = addcompartment(m, 'central', 3.0, 'CapacityUnits', 'liter');
c2 = addcompartment(m, 'peripheral', 4.0, 'CapacityUnits', 'liter');
%! connect central -> peripheral
%! connect peripheral -> central
s1 = addspecies(c1, 'D', 0.0, 'InitialAmountUnits', 'nanomolarity', 'MolecularWeight', 150000.0);
s2 = addspecies(c2, 'D_p', 0.0, 'InitialAmountUnits', 'nanomolarity', 'MolecularWeight', 150000.0);
p1 = addparameter(m, 'kel', 0.1, 'ValueUnits', '1/hour');
p2 = addparameter(m, 'k12', 0.2, 'ValueUnits', '1/hour');
p3 = addparameter(m, 'k21', 0.15, 'ValueUnits', '1/hour');
r1 = addreaction(m, 'D -> null', 'Name', 'elim', 'ReactionRate', 'kel*D');
kl1 = addkineticlaw(r1, 'MassAction', 'ParameterVariableNames', {'kel'});
r2 = addreaction(m, 'D -> D_p', 'Name', 'dist_cp', 'ReactionRate', 'k12*D');
kl2 = addkineticlaw(r2, 'MassAction', 'ParameterVariableNames', {'k12'});
r3 = addreaction(m, 'D_p -> D', 'Name', 'dist_pc', 'ReactionRate', 'k21*D_p');
kl3 = addkineticlaw(r3, 'MassAction', 'ParameterVariableNames', {'k21'});
d1 = adddose(m, 'dose1', 'Kind', 'bolus', 'Amount', 300.0, 'AmountUnits', 'nanomole', 'Time', 0.0, 'TimeUnits', 'hour', 'TargetName', 'central.D');
"""

ast = parse_script(SCRIPT)
model, warnings = lower_to_model(ast)
style = extract_style(ast)
print(f"model {model.name!r}: {len(model.compartments)} compartments, "
      f"{len(model.species)} species, {len(model.reactions)} reactions")
print(f"style: naming={style.naming}, ordering={style.ordering}, "
      f"spellings={dict(style.unit_spellings)}")

graph = build_hypergraph(model)
print(f"\nhypergraph: {len(graph.vertices)} vertices, {len(graph.hyperedges)} edges")

S = extract_stoich_matrix(graph)
print("\nstoichiometric matrix (rows = species, cols = reactions):")
print("     " + "  ".join(f"{c:>8}" for c in S.cols))
dense = S.to_dense()
for sid, row in zip(S.rows, dense):
    print(f"{sid:>4} " + "  ".join(f"{w:>8}" for w in row))

emitted = emit_script(graph, style, "v1.0")
print("\nregenerated script (first lines):")
for line in emitted.splitlines()[:8]:
    print("  " + line)

model2, _ = lower_to_model(parse_script(emitted))
verdict = topology_equivalent(graph, build_hypergraph(model2))
print(f"\nre-ingested topology equivalent: {verdict['equivalent']}")
