"""Clarification workflow and breadth-first parameter alignment.

Submits an edit with unknown values: the engine asks for the affinity with a
prior-grounded default (the log-midpoint of the physiological interval), the
dependent rate constant derives automatically (koff = KD * kon), and BFS
alignment sweeps three hops around the new entities for anything needing a
consistent value.
"""

import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import BASE_PK_SCRIPT

from qspgraph import Session

EDIT = """ADD PARAMETER KD1 VALUE ? M
ADD PARAMETER kon1 VALUE 0.1 1/(nM*hour)
ADD SPECIES R1 IN central INIT 10 nM MW 100000
ADD SPECIES DR1 IN ? INIT 0 nM MW 250000
ADD REACTION bind_r1: D + R1 -> DR1 KINETICS mass_action kon1=0.1 koff1=?
PLOT central.DR1 COLOR red SUBPLOT 2
"""

with tempfile.TemporaryDirectory() as tmp:
    session = Session(Path(tmp) / "clarify")
    session.start_understanding(BASE_PK_SCRIPT)

    out = session.submit_edit(EDIT)
    print("clarifications:")
    for item in out["items"]:
        default = f" default={item['default']}" if item["default"] else ""
        prior = f" [{item['source_prior']}]" if item["source_prior"] else ""
        print(f"  {item['id']}: {item['question']}{default}{prior}")

    # accept the prior default for the affinity; the compartment for DR1 too
    for item in list(session.state.items):
        if item.status == "open" and item.default is not None:
            session.resolve(item.id, accept_default=True)
            print(f"accepted default for {item.target[0]}")

    print("\nitem statuses after resolution:")
    for item in session.state.items:
        print(f"  {item.target[0]}.{item.target[1]}: {item.status} "
              f"-> {item.resolved_value} {item.resolved_unit or ''}")

    result = session.confirm()
    print(f"\ncommitted {result['version']}; epsilon={result['report']['epsilon']}")

    alignment = result.get("alignment")
    graph = session.graph()
    kd = graph.vertices["parameter:KD1"]
    koff = graph.vertices["parameter:koff1"]
    print(f"KD1 = {kd.attrs['value']} {kd.attrs['unit']} (provenance {kd.attrs['provenance_tag']})")
    print(f"koff1 = {koff.attrs['value']:.6g} {koff.attrs['unit']} (provenance {koff.attrs['provenance_tag']})")
