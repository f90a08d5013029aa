"""The progressive case-study ladder through the session state machine.

Starting from the two-compartment baseline, three structured edit scripts add
(1) full R1 target-mediated disposition with soluble-receptor shedding at
1 nM affinity, (2) a second receptor system at 10 nM, and (3) cooperative
trimer assembly -- each committed as a validated, simulated, versioned
artifact set with plot manifests (black free drug, red DR1, green trimer).
"""

import json
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import BASE_PK_SCRIPT, TMDD_R1_EDIT, TMDD_R2_EDIT, TRIMER_EDIT

from qspgraph import Session, detect_modules

with tempfile.TemporaryDirectory() as tmp:
    session = Session(Path(tmp) / "ladder")
    state = session.start_understanding(BASE_PK_SCRIPT)
    print(f"understanding converged -> {state.version_tag} (phase {state.phase})")

    for name, edit in (("TMDD R1", TMDD_R1_EDIT), ("TMDD R2", TMDD_R2_EDIT), ("trimer", TRIMER_EDIT)):
        preview = session.submit_edit(edit)
        added = len(preview["delta"]["added_vertices"])
        result = session.confirm()
        print(f"{name}: committed {result['version']} "
              f"(+{added} vertices, epsilon={result['report']['epsilon']}, "
              f"diagnostics {'pass' if result['diagnostics']['ok'] else 'FAIL'})")

    tag = session.state.version_tag
    print(f"\nversions: {session.store.tags()}")
    print(f"replay check: {session.replay()['all_match']}")

    manifest = json.loads(session.artifact(tag, "plot_manifest.json"))
    print("\nplot manifest:")
    for sub in manifest["subplots"]:
        for series in sub["series"]:
            print(f"  subplot {sub['index']}: {series['species']} in {series['color']}")

    modules = detect_modules(session.graph(tag))
    print("\ndetected modules:")
    for module in modules:
        members = [v.split(":", 1)[1] for v in module.vertex_ids if v.startswith("species:")]
        print(f"  {module.id} ({module.kind}): species {members}")

    csv = session.artifact(tag, "trajectory.csv").decode()
    print(f"\ntrajectory: {len(csv.splitlines()) - 1} points, columns {csv.splitlines()[0]}")
