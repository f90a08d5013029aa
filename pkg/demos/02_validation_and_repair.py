"""Constraint validation and the convergent repair loop.

Builds a model whose parameters are declared off-scale against its canonical
unit system and whose binding affinity sits far outside the physiological
interval, then watches the validator find everything and the repair loop fix
what it may fix (exact unit rescales) while surfacing the rest to a human
(range clamps are propose-only).
"""

from qspgraph import build_hypergraph, default_kb, repair_until_converged, validate
from qspgraph.model import Compartment, Parameter, QspModel, Reaction, Species

kb = default_kb()
print(f"priors KB {kb.version} (sha256 {kb.sha256[:12]}...), {len(kb.entries)} entries")
for entry in kb.entries:
    print(f"  {entry.entity_kind:18} {entry.context or ('*',)} "
          f"[{entry.lo:g}, {entry.hi:g}] {entry.unit}  -- {entry.note}")

model = QspModel(
    name="needs_repair",
    compartments=(Compartment("central", 3.0, "L"),),
    species=(
        Species("D", "central", 100.0, "nM", 150000.0),
        Species("R1", "central", 10.0, "nM", 100000.0),
        Species("DR1", "central", 0.0, "nM", 250000.0),
    ),
    parameters=(
        Parameter("kon", 2.7778e-05, "1/(M*s)"),   # off canonical scale, rescalable
        Parameter("koff", 2.7778e-05, "1/s"),      # off canonical scale, rescalable
        Parameter("KD", 1.0e9, "nM"),              # 1 M: far outside 1e-12..1e-6 M
    ),
    reactions=(
        Reaction("bind", (("D", 1), ("R1", 1)), (("DR1", 1),), "mass_action", (("k", "kon"),)),
        Reaction("unbind", (("DR1", 1),), (("D", 1), ("R1", 1)), "mass_action", (("k", "koff"),)),
    ),
    context_tags=("human",),
    canonical_units=(("conc", "nM"), ("rate", "1/hour")),
)

graph = build_hypergraph(model)
report = validate(graph, kb)
print("\nbefore repair:")
print(report.to_text())

repaired, trace = repair_until_converged(graph, kb, target=0.0)
print(f"repair: iterations={trace.iterations} converged={trace.converged} "
      f"rho_observed={trace.rho_observed}")
print(f"epsilon trace: {trace.epsilon_trace}")
for applied in trace.applied:
    print(f"  applied {applied.rule} at {applied.site}")
for site in trace.irreparable:
    print(f"  irreparable {site.site}: {site.reason}")
    if site.proposal:
        print(f"    clamp proposal: {site.proposal}")

print("\nafter repair:")
print(validate(repaired, kb).to_text())
