"""ODE assembly and integration for hypergraph models.

Assembly normalizes all quantities to canonical base units (mol, g, L, s)
and compiles per-reaction rate closures from kinetic templates; reaction
rates are referenced to the home compartment (the first reactant's, else the
first product's), and cross-compartment incidences scale by the volume
ratio so amount balance is exact.

Integration uses an explicit adaptive Dormand-Prince 5(4) pair with
proportional step control.  Bolus dose events are hit exactly: the
integrator runs segment-wise between event times and restarts after each
state jump.  Stiffness (step-size underflow) is reported as an error, never
silently absorbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import (
    AssemblyError,
    SimulationError,
    StiffnessError,
    UnsupportedFeatureError,
)
from . import expr as expr_mod
from .hypergraph import QspHypergraph, extract_stoich_matrix, reconstruct_model
from .linalg_exact import integerize, left_nullspace, to_fractions
from .model import Reaction, is_boundary
from .units import parse_unit, to_canonical
from .validation import BLOCKING_PREDICATES, validate


@dataclass(frozen=True)
class DoseEvent:
    time_s: float
    species_index: int
    delta: float  # canonical state units (M for concentration convention)
    dose_id: str = ""


@dataclass(frozen=True)
class OdeSystem:
    species_order: tuple[str, ...]
    initial_state: np.ndarray
    rate_terms: tuple[tuple[Callable[[np.ndarray], float], tuple[tuple[int, float], ...]], ...]
    dose_events: tuple[DoseEvent, ...]
    volumes: np.ndarray  # liters, per species (its compartment volume)
    convention: str = "concentration"
    term_count: int = 0

    def rhs(self, _t: float, state: np.ndarray) -> np.ndarray:
        out = np.zeros_like(state)
        for rate_fn, incidences in self.rate_terms:
            v = rate_fn(state)
            for idx, coeff in incidences:
                out[idx] += coeff * v
        return out


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray  # seconds, strictly increasing
    states: np.ndarray  # len(times) x n_species
    species_order: tuple[str, ...]
    stats: dict
    rel_tol: float
    abs_tol: float

    def column(self, species_id: str) -> np.ndarray:
        return self.states[:, self.species_order.index(species_id)]

    def to_csv(self) -> str:
        header = "time_s," + ",".join(self.species_order)
        lines = [header]
        for t, row in zip(self.times, self.states):
            lines.append(",".join([repr(float(t))] + [repr(float(x)) for x in row]))
        return "\n".join(lines) + "\n"


def trajectory_from_csv(text: str) -> Trajectory:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    species = tuple(header[1:])
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    arr = np.array(rows)
    return Trajectory(arr[:, 0], arr[:, 1:], species, {}, 0.0, 0.0)


def assemble(graph: QspHypergraph) -> OdeSystem:
    """Build the executable ODE system from a validated graph."""
    report = validate(graph)
    blockers = [v for v in report.items if v.predicate in BLOCKING_PREDICATES]
    if blockers:
        raise AssemblyError(
            f"graph has {len(blockers)} blocking violation(s); repair before simulating",
            report=report,
        )
    model = reconstruct_model(graph)
    for c in model.compartments:
        if c.time_varying:
            raise UnsupportedFeatureError(
                f"compartment {c.id!r} declares a time-varying volume; "
                "only constant volumes are simulatable in this version"
            )

    conc_convention = model.convention == "concentration"
    species_order = tuple(s.id for s in model.species)
    index = {sid: i for i, sid in enumerate(species_order)}
    comp_volume = {
        c.id: to_canonical(c.volume_value, parse_unit(c.volume_unit)) for c in model.compartments
    }
    volumes = np.array([comp_volume[s.compartment] for s in model.species])

    initial = np.zeros(len(species_order))
    for i, s in enumerate(model.species):
        initial[i] = to_canonical(s.initial_value, parse_unit(s.unit))

    param_values: dict[str, float] = {}
    for p in model.parameters:
        if p.value is None:
            raise AssemblyError(f"parameter {p.id!r} has no confirmed value")
        param_values[p.id] = to_canonical(p.value, parse_unit(p.unit))

    species_comp = {s.id: s.compartment for s in model.species}

    def home_compartment(r: Reaction) -> str:
        if r.reactants:
            return species_comp[r.reactants[0][0]]
        if r.products:
            return species_comp[r.products[0][0]]
        raise AssemblyError(f"reaction {r.id!r} has no participants")

    rate_terms = []
    term_count = 0

    for r in model.reactions:
        home = home_compartment(r)
        v_home = comp_volume[home]
        incidences = []
        for sid, nu in r.reactants:
            scale = v_home / comp_volume[species_comp[sid]] if conc_convention else 1.0
            incidences.append((index[sid], -nu * scale))
        for sid, nu in r.products:
            scale = v_home / comp_volume[species_comp[sid]] if conc_convention else 1.0
            incidences.append((index[sid], +nu * scale))
        term_count += len(incidences)

        slots = r.slot_map()

        def slot_value(name: str, rid: str = r.id) -> float:
            target = slots.get(name)
            if target is None:
                raise AssemblyError(f"reaction {rid!r} slot {name!r} is unbound")
            if isinstance(target, float):
                return target
            if target in param_values:
                return param_values[target]
            raise AssemblyError(f"reaction {rid!r} slot {name!r} binds non-parameter {target!r}")

        if r.template == "mass_action":
            k = slot_value("k")
            reactant_idx = tuple((index[sid], nu) for sid, nu in r.reactants)

            def rate_ma(state, k=k, ridx=reactant_idx):
                v = k
                for i, nu in ridx:
                    x = state[i]
                    if x <= 0.0:
                        return 0.0 if x == 0.0 else v * 0.0
                    v *= x if nu == 1 else x**nu
                return v

            rate_fn = rate_ma
        elif r.template == "michaelis_menten":
            vmax, km = slot_value("Vmax"), slot_value("Km")
            ci = index[r.reactants[0][0]]

            def rate_mm(state, vmax=vmax, km=km, ci=ci):
                c = max(state[ci], 0.0)
                return vmax * c / (km + c) if km + c > 0 else 0.0

            rate_fn = rate_mm
        elif r.template == "hill":
            vmax, kh, n = slot_value("Vmax"), slot_value("K"), slot_value("n")
            ci = index[r.reactants[0][0]]

            def rate_hill(state, vmax=vmax, kh=kh, n=n, ci=ci):
                c = max(state[ci], 0.0)
                cn = c**n
                denom = kh**n + cn
                return vmax * cn / denom if denom > 0 else 0.0

            rate_fn = rate_hill
        else:  # custom_rate_expression
            tree = expr_mod.parse_expr(r.rate_expression or "0")
            syms = expr_mod.symbols(tree)
            # Custom expressions are authored in model units; evaluate with
            # canonical values -- the dimension check guarantees consistency.
            compiled = expr_mod.compile_fn(tree)
            sym_index = {s: index[s] for s in syms if s in index}
            sym_params = {s: param_values[s] for s in syms if s in param_values}
            sym_volumes = {s: comp_volume[s] for s in syms if s in comp_volume}

            def rate_custom(state, compiled=compiled, sym_index=sym_index, sym_params=sym_params, sym_volumes=sym_volumes):
                env = dict(sym_params)
                env.update(sym_volumes)
                for s, i in sym_index.items():
                    env[s] = state[i]
                env["t"] = 0.0
                return compiled(env)

            rate_fn = rate_custom

        rate_terms.append((rate_fn, tuple(incidences)))

    # Declared clearance transport edges: CL*(C_src - C_dst)/V terms.
    for e in graph.edges_of_kind("transport"):
        attrs = e.attr_map()
        cl = attrs.get("clearance")
        pair = attrs.get("species_pair")
        if cl is None or not pair:
            continue
        src, dst = pair
        if src not in index or dst not in index:
            continue
        cl_canonical = to_canonical(float(cl), parse_unit(attrs.get("clearance_unit", "L/s")))
        si, di = index[src], index[dst]
        vs, vd = volumes[si], volumes[di]

        def rate_transport(state, si=si, di=di, cl=cl_canonical, vs=vs):
            return cl * (state[si] - state[di]) / vs

        incid = ((si, -1.0), (di, +float(vs / vd)))
        rate_terms.append((rate_transport, incid))
        term_count += 2

    # Doses: bolus state jumps at event times.
    events = []
    for d in model.doses:
        if d.kind != "bolus":
            raise UnsupportedFeatureError(f"dose kind {d.kind!r} is not supported (bolus only)")
        t_s = to_canonical(d.time, parse_unit(d.time_unit))
        amount_unit = parse_unit(d.amount_unit)
        amount = to_canonical(d.amount, amount_unit)
        i = index[d.species]
        if conc_convention:
            if amount_unit.dims == (1, 0, 0, 0):  # amount -> concentration jump
                delta = amount / volumes[i]
            elif amount_unit.dims == (1, 0, -1, 0):  # already a concentration
                delta = amount
            else:
                raise AssemblyError(
                    f"dose {d.id!r} amount unit must be an amount or concentration"
                )
        else:
            if amount_unit.dims != (1, 0, 0, 0):
                raise AssemblyError(f"dose {d.id!r} amount unit must be an amount")
            delta = amount
        events.append(DoseEvent(t_s, i, delta, d.id))
    events.sort(key=lambda ev: (ev.time_s, ev.dose_id))

    return OdeSystem(
        species_order=species_order,
        initial_state=initial,
        rate_terms=tuple(rate_terms),
        dose_events=tuple(events),
        volumes=volumes,
        convention=model.convention,
        term_count=term_count,
    )


# Dormand-Prince 5(4) coefficients.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _integrate_segment(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    t1: float,
    y0: np.ndarray,
    out_times: np.ndarray,
    rel_tol: float,
    abs_tol: float,
    stats: dict,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate over [t0, t1], landing exactly on each requested output time."""
    n_out = len(out_times)
    outputs = np.empty((n_out, len(y0)))
    out_i = 0
    t, y = t0, y0.copy()
    k1 = rhs(t, y)
    stats["rhs_evals"] += 1

    span = t1 - t0
    h = min(span, max(span * 1e-3, 1e-6 * span)) or span
    h_min = max(abs(span), abs(t1), 1.0) * 1e-14
    max_steps = 2_000_000

    while out_i < n_out and out_times[out_i] <= t + h_min:
        outputs[out_i] = y
        out_i += 1

    while t < t1 - h_min:
        if stats["steps"] + stats["rejected_steps"] > max_steps:
            raise StiffnessError(
                f"step budget exhausted at t={t:.6g}s; system may be stiff -- "
                "review tolerances and units"
            )
        target = out_times[out_i] if out_i < n_out else t1
        h = min(h, target - t, t1 - t)
        if h < h_min:
            raise StiffnessError(
                f"step size underflow at t={t:.6g}s (h={h:.3g}); the system "
                "looks stiff for the explicit solver -- review tolerances and units"
            )

        ks = [k1]
        failed = False
        for stage in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(_A[stage], ks))
            ki = rhs(t + _C[stage] * h, yi)
            stats["rhs_evals"] += 1
            ks.append(ki)
        y_new = yi  # stage 7 uses the 5th-order weights: A[6] == b
        if not np.all(np.isfinite(y_new)):
            failed = True
            err_norm = math.inf
        else:
            err_vec = h * sum(e * k for e, k in zip(_E, ks))
            scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            err_norm = math.sqrt(float(np.mean((err_vec / scale) ** 2)))

        if err_norm <= 1.0 and not failed:
            t_new = t + h
            t, y = t_new, y_new
            k1 = ks[6]  # FSAL
            stats["steps"] += 1
            neg = float(np.min(y))
            if neg < -abs_tol * 1e3:
                raise SimulationError(
                    f"state went negative ({neg:.3g}) at t={t:.6g}s beyond the "
                    "tolerance guard; the model is likely mis-specified"
                )
            if neg < 0:
                np.clip(y, 0.0, None, out=y)
            while out_i < n_out and out_times[out_i] <= t + h_min:
                outputs[out_i] = y
                out_i += 1
            growth = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm ** (-0.2)))
            h = h * growth
        else:
            stats["rejected_steps"] += 1
            shrink = 0.2 if not math.isfinite(err_norm) else min(0.9, max(0.2, 0.9 * err_norm ** (-0.2)))
            h = h * shrink

    while out_i < n_out:
        outputs[out_i] = y
        out_i += 1
    return y, outputs


def simulate(
    system: OdeSystem,
    t_span: tuple[float, float],
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    t_eval: np.ndarray | None = None,
    n_points: int = 201,
) -> Trajectory:
    """Integrate the system over t_span (seconds) with dose-event restarts."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise SimulationError(f"invalid time span {t_span!r}")
    if np.any(system.initial_state < 0):
        raise SimulationError("initial state has negative entries")

    if t_eval is None:
        t_eval = np.linspace(t0, t1, n_points)
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) <= 0):
            raise SimulationError("t_eval must be strictly increasing")

    stats = {"steps": 0, "rejected_steps": 0, "rhs_evals": 0}
    y = system.initial_state.copy()
    states = np.empty((len(t_eval), len(y)))

    events = [ev for ev in system.dose_events if t0 <= ev.time_s <= t1]
    breakpoints: list[float] = sorted({ev.time_s for ev in events} | {t0, t1})

    # Apply doses scheduled exactly at t0 before integration starts.
    for ev in events:
        if ev.time_s == t0:
            y[ev.species_index] += ev.delta

    cursor = 0
    for seg_start, seg_end in zip(breakpoints, breakpoints[1:]):
        mask = (t_eval >= seg_start) & (t_eval <= seg_end) if seg_end == t1 else (
            (t_eval >= seg_start) & (t_eval < seg_end)
        )
        seg_times = t_eval[mask]
        y, outputs = _integrate_segment(
            system.rhs, seg_start, seg_end, y, seg_times, rel_tol, abs_tol, stats
        )
        states[cursor : cursor + len(seg_times)] = outputs
        cursor += len(seg_times)
        for ev in events:
            if ev.time_s == seg_end:
                y[ev.species_index] += ev.delta

    if cursor < len(t_eval):  # t1 output when the final point fell on a boundary
        states[cursor:] = y

    if not np.all(np.isfinite(states)):
        raise SimulationError("trajectory contains non-finite states")

    return Trajectory(
        times=t_eval,
        states=states,
        species_order=system.species_order,
        stats=stats,
        rel_tol=rel_tol,
        abs_tol=abs_tol,
    )


# -- diagnostics ---------------------------------------------------------------


def conservation_basis(graph: QspHypergraph) -> list[tuple[dict[str, int], str]]:
    """Integer left-null-space vectors of S restricted to internal reactions."""
    S = extract_stoich_matrix(graph)
    internal = S.internal_cols()
    if not S.rows:
        return []
    dense = [[0] * len(internal) for _ in S.rows]
    for (i, j), w in S.entries.items():
        if j in internal:
            dense[i][internal.index(j)] = w
    if not internal:
        basis = [[Fraction(int(i == j)) for i in range(len(S.rows))] for j in range(len(S.rows))]
    else:
        basis = left_nullspace(to_fractions(dense))
    out = []
    for vec in basis:
        ints = integerize(vec)
        label = " + ".join(
            f"{'' if c == 1 else c}*{sid}".lstrip("*") if c != 1 else sid
            for sid, c in zip(S.rows, ints)
            if c != 0
        )
        out.append(({sid: c for sid, c in zip(S.rows, ints) if c != 0}, label))
    return out


def _law_expectations(graph: QspHypergraph) -> list[tuple[dict[str, int], str, str]]:
    """Internal conservation laws with their expected trajectory behavior.

    A law untouched by boundary reactions must stay constant.  When every
    boundary column moves it in one direction (and boundary rates are
    sign-definite, i.e. not custom expressions), the law is monotone after
    the last dose; mixed-sign boundary effects carry no expectation.
    """
    S = extract_stoich_matrix(graph)
    model = reconstruct_model(graph)
    custom_boundary = {
        r.id for r in model.reactions if is_boundary(r) and r.template == "custom_rate_expression"
    }
    expectations = []
    for coeffs, label in conservation_basis(graph):
        effects = []
        definite = True
        for j, rid in enumerate(S.cols):
            if not S.col_boundary[j]:
                continue
            effect = sum(coeffs.get(S.rows[i], 0) * w for (i, jj), w in S.entries.items() if jj == j)
            if effect != 0:
                effects.append(effect)
                if rid in custom_boundary:
                    definite = False
        if not effects:
            expect = "constant"
        elif not definite:
            expect = "none"
        elif all(e < 0 for e in effects):
            expect = "non_increasing"
        elif all(e > 0 for e in effects):
            expect = "non_decreasing"
        else:
            expect = "none"
        expectations.append((coeffs, label, expect))
    return expectations


def species_composition(graph: QspHypergraph) -> dict[str, dict[str, int]]:
    """Base-unit composition of each species, inferred from binding motifs.

    Binding reactions (A + B -> C at unit stoichiometry) make C's composition
    the sum of A's and B's; 1->1 conversions (shedding) preserve composition.
    Base species map to themselves.
    """
    model = reconstruct_model(graph)
    comp: dict[str, dict[str, int]] = {s.id: {s.id: 1} for s in model.species}
    bindings = []
    conversions = []
    for r in model.reactions:
        if len(r.reactants) == 2 and len(r.products) == 1 and all(
            nu == 1 for _s, nu in list(r.reactants) + list(r.products)
        ):
            bindings.append((r.reactants[0][0], r.reactants[1][0], r.products[0][0]))
        if len(r.reactants) == 1 and len(r.products) == 2 and all(
            nu == 1 for _s, nu in list(r.reactants) + list(r.products)
        ):
            bindings.append((r.products[0][0], r.products[1][0], r.reactants[0][0]))
        if len(r.reactants) == 1 and len(r.products) == 1 and r.reactants[0][1] == 1 and r.products[0][1] == 1:
            conversions.append((r.reactants[0][0], r.products[0][0]))

    for _ in range(len(model.species) + 1):
        changed = False
        for a, b, c in bindings:
            combined: dict[str, int] = {}
            for part in (comp[a], comp[b]):
                for base, count in part.items():
                    combined[base] = combined.get(base, 0) + count
            if comp[c] != combined and c not in combined:
                comp[c] = combined
                changed = True
        for src, dst in conversions:
            if comp[dst] != comp[src] and dst not in comp[src]:
                comp[dst] = dict(comp[src])
                changed = True
        if not changed:
            break
    return comp


def diagnostics(trajectory: Trajectory, graph: QspHypergraph, threshold: float = 1e-6) -> dict:
    """Conservation drift, negativity, and occupancy checks for a trajectory."""
    model = reconstruct_model(graph)
    comp_volume = {
        c.id: to_canonical(c.volume_value, parse_unit(c.volume_unit)) for c in model.compartments
    }
    species_comp = {s.id: s.compartment for s in model.species}
    idx = {sid: i for i, sid in enumerate(trajectory.species_order)}

    # Conservation laws act on amounts, not concentrations.
    if model.convention == "concentration":
        volumes = np.array([comp_volume[species_comp[s]] for s in trajectory.species_order])
        amounts = trajectory.states * volumes
    else:
        amounts = trajectory.states

    dose_times = {d.species: [] for d in model.doses}
    for d in model.doses:
        dose_times[d.species].append(to_canonical(d.time, parse_unit(d.time_unit)))

    conservation = []
    for coeffs, label, expect in _law_expectations(graph):
        vec = np.zeros(len(trajectory.species_order))
        for sid, c in coeffs.items():
            vec[idx[sid]] = c
        values = amounts @ vec
        # Doses hitting the law's support break it at event times; judge the
        # law from the first output at or after the last such dose.
        last_dose = max(
            (t for sid in coeffs for t in dose_times.get(sid, ())),
            default=float(trajectory.times[0]),
        )
        start = int(np.searchsorted(trajectory.times, last_dose))
        start = min(start, len(values) - 1)
        window = values[start:]
        scale = max(float(np.max(np.abs(window))), 1e-30)
        if expect == "constant":
            drift = float(np.max(np.abs(window - window[0])) / max(abs(window[0]), 1e-30))
            ok = drift <= threshold
            measure = {"max_relative_drift": drift}
        elif expect == "non_increasing":
            rise = float(np.max(np.diff(window), initial=0.0)) / scale
            ok = rise <= threshold
            measure = {"max_relative_increase": rise}
        elif expect == "non_decreasing":
            fall = float(-np.min(np.diff(window), initial=0.0)) / scale
            ok = fall <= threshold
            measure = {"max_relative_decrease": fall}
        else:
            ok = True
            measure = {}
        conservation.append({"law": label, "expectation": expect, "ok": ok, **measure})

    min_state = float(np.min(trajectory.states))
    negativity = {
        "min_state": min_state,
        "ok": min_state >= -trajectory.abs_tol,
    }

    occupancy = []
    composition = species_composition(graph)
    pools: dict[str, np.ndarray] = {}
    for base in sorted({b for c in composition.values() for b in c}):
        vec = np.zeros(len(trajectory.species_order))
        for sid, parts in composition.items():
            if base in parts and sid in idx:
                vec[idx[sid]] = parts[base]
        pools[base] = amounts @ vec
    for sid, parts in sorted(composition.items()):
        if len(parts) < 2 or sid not in idx:
            continue
        complex_amount = amounts[:, idx[sid]]
        bound = np.min([pools[base] for base in parts], axis=0)
        worst = float(np.max(complex_amount - bound))
        scale = max(float(np.max(np.abs(bound))), 1e-30)
        occupancy.append(
            {
                "complex": sid,
                "pools": sorted(parts),
                "max_excess_relative": worst / scale,
                "ok": worst <= threshold * scale,
            }
        )

    ok = (
        all(c["ok"] for c in conservation)
        and negativity["ok"]
        and all(o["ok"] for o in occupancy)
    )
    return {
        "ok": ok,
        "threshold": threshold,
        "conservation": conservation,
        "negativity": negativity,
        "occupancy": occupancy,
        "solver_stats": trajectory.stats,
    }


def plot_manifest(graph: QspHypergraph, version_tag: str) -> dict:
    """Plot-spec passthrough for the UI/CLI plotter."""
    model = reconstruct_model(graph)
    subplots: dict[int, list[dict]] = {}
    for p in model.plots:
        subplots.setdefault(p.subplot, []).append(
            {
                "species": p.species,
                "compartment": p.compartment,
                "color": p.color,
                "label": f"{p.species} ({p.compartment})",
            }
        )
    return {
        "version": version_tag,
        "time_unit": "s",
        "subplots": [
            {"index": k, "series": series} for k, series in sorted(subplots.items())
        ],
    }
