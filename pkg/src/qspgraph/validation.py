"""Biological-constraint predicate suite, violation functional, repair loop.

Predicates: unit_consistency, mass_balance, stoichiometry_integrality,
range_plausibility, connectivity.  ``validate`` runs all of them and returns
a deterministic ViolationReport whose epsilon is the (equal-weight) sum of
residuals.  ``repair_until_converged`` applies the ordered local repair rules
until epsilon reaches the target, a fixed point, or the iteration cap; the
observed contraction ratio and the logarithmic iteration bound are reported.

Repair rules (ordered):

1. unit rescale when dims match the declared canonical unit but scales
   differ (exact, value-preserving);
2. insert a missing nu=1 incidence for a rate-referenced species;
3. reconnect an orphaned declared transport edge to its compartment pair;
4. propose-only clamps for range violations (never auto-applied).

Every applied repair is checked for monotonicity: a candidate that would
raise epsilon or retract a previously satisfied site is reverted and the
site reported as irreparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Any, Callable, Mapping

from . import expr as expr_mod
from .errors import ModelError, QspError
from .hypergraph import (
    QspHypergraph,
    StoichMatrix,
    Vertex,
    extract_stoich_matrix,
    local_id,
    make_edge,
    vertex_id,
)
from .linalg_exact import positive_nullvector, to_fractions
from .model import TEMPLATE_SLOTS
from .priors import PriorsKb, classify_quantity_kind, lookup_prior
from .units import CONC_DIMS, AMOUNT_DIMS, TIME_DIMS, UnitExpr, parse_unit, normalize
from .errors import UnitParseError, DimensionError

PREDICATES = (
    "unit_consistency",
    "mass_balance",
    "stoichiometry_integrality",
    "range_plausibility",
    "connectivity",
)

#: predicates that gate code emission and committed versions
BLOCKING_PREDICATES = frozenset(
    {"unit_consistency", "connectivity", "stoichiometry_integrality", "mass_balance"}
)

#: compartment names checked against the central-volume physiological prior
CENTRAL_COMPARTMENT_IDS = frozenset({"central", "plasma"})


@dataclass(frozen=True)
class Violation:
    predicate: str
    site: str
    residual: float
    message: str
    repair_hint: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "predicate": self.predicate,
            "site": self.site,
            "residual": self.residual,
            "message": self.message,
        }


@dataclass(frozen=True)
class ViolationReport:
    items: tuple[Violation, ...] = ()

    @property
    def epsilon(self) -> float:
        return sum(v.residual for v in self.items)

    def for_predicate(self, predicate: str) -> tuple[Violation, ...]:
        return tuple(v for v in self.items if v.predicate == predicate)

    def blocking(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.items if v.predicate in BLOCKING_PREDICATES)

    def violated_keys(self) -> set[tuple[str, str]]:
        """(predicate, site) pairs present in this report."""
        return {(v.predicate, v.site) for v in self.items}

    def to_json(self) -> dict:
        return {"epsilon": self.epsilon, "items": [v.to_json() for v in self.items]}

    def to_text(self) -> str:
        if not self.items:
            return "all predicates satisfied (epsilon = 0)\n"
        header = f"{'predicate':28} {'site':32} {'residual':>10}  message"
        lines = [header, "-" * len(header)]
        for v in self.items:
            lines.append(f"{v.predicate:28} {v.site:32} {v.residual:10.4g}  {v.message}")
        lines.append(f"epsilon = {self.epsilon:.6g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ValidationConfig:
    weights: tuple[tuple[str, float], ...] = ()

    def weight(self, predicate: str) -> float:
        return dict(self.weights).get(predicate, 1.0)


def _try_unit(text: str) -> UnitExpr | None:
    try:
        return parse_unit(text)
    except UnitParseError:
        return None


def _unit_env(graph: QspHypergraph) -> dict[str, UnitExpr]:
    env: dict[str, UnitExpr] = {}
    for v in graph.vertices.values():
        if v.kind == "species":
            u = _try_unit(v.attrs.get("unit", ""))
            if u:
                env[local_id(v.id)] = u
        elif v.kind == "parameter":
            u = _try_unit(v.attrs.get("unit", ""))
            if u:
                env[local_id(v.id)] = u
        elif v.kind == "compartment":
            u = _try_unit(v.attrs.get("volume_unit", ""))
            if u:
                env[local_id(v.id)] = u
    return env


def rate_expression_tree(graph: QspHypergraph, rvid: str) -> expr_mod.Node | None:
    """The effective rate expression of a reaction vertex (template expansion)."""
    v = graph.vertices[rvid]
    attrs = v.attrs
    template = graph.psi.get(rvid)
    if attrs.get("rate_expression"):
        return expr_mod.parse_expr(attrs["rate_expression"])
    slots = attrs.get("slot_bindings") or {}

    def slot_node(name: str) -> expr_mod.Node | None:
        target = slots.get(name)
        if target is None:
            return None
        if isinstance(target, str):
            return ("sym", target)
        return ("num", float(target))

    reactants: list[tuple[str, int]] = []
    for e in graph.incident(rvid):
        if e.kind == "stoichiometric" and e.weight < 0:
            svid = next(m for m in e.members if m.startswith("species:"))
            reactants.append((local_id(svid), -e.weight))
    reactants.sort()

    if template == "mass_action":
        node = slot_node("k")
        if node is None:
            return None
        for sid, nu in reactants:
            factor: expr_mod.Node = ("sym", sid) if nu == 1 else ("^", ("sym", sid), ("num", float(nu)))
            node = ("*", node, factor)
        return node
    if template == "michaelis_menten":
        vmax, km = slot_node("Vmax"), slot_node("Km")
        if vmax is None or km is None or not reactants:
            return None
        c: expr_mod.Node = ("sym", reactants[0][0])
        return ("/", ("*", vmax, c), ("+", km, c))
    if template == "hill":
        vmax, k, n = slot_node("Vmax"), slot_node("K"), slot_node("n")
        if vmax is None or k is None or n is None or not reactants:
            return None
        c = ("sym", reactants[0][0])
        return ("/", ("*", vmax, ("^", c, n)), ("+", ("^", k, n), ("^", c, n)))
    return None


def required_rate_dims(graph: QspHypergraph) -> tuple[int, int, int, int]:
    convention = graph.meta.get("convention", "concentration")
    base = CONC_DIMS if convention == "concentration" else AMOUNT_DIMS
    return tuple(b - t for b, t in zip(base, TIME_DIMS))


def expected_slot_unit(
    graph: QspHypergraph, rvid: str, slot: str
) -> UnitExpr | None:
    """Dimension of a template slot implied by convention and reactant units."""
    env = _unit_env(graph)
    template = graph.psi.get(rvid)
    rate = UnitExpr(1.0, required_rate_dims(graph))
    reactants = []
    for e in graph.incident(rvid):
        if e.kind == "stoichiometric" and e.weight < 0:
            svid = next(m for m in e.members if m.startswith("species:"))
            reactants.append((local_id(svid), -e.weight))
    reactants.sort()
    try:
        if template == "mass_action" and slot == "k":
            u = rate
            for sid, nu in reactants:
                u = u / (env[sid] ** nu)
            return UnitExpr(1.0, u.dims)
        if template == "michaelis_menten":
            if slot == "Vmax":
                return rate
            if slot == "Km" and reactants:
                return UnitExpr(1.0, env[reactants[0][0]].dims)
        if template == "hill":
            if slot == "Vmax":
                return rate
            if slot == "K" and reactants:
                return UnitExpr(1.0, env[reactants[0][0]].dims)
            if slot == "n":
                return UnitExpr(1.0, (0, 0, 0, 0))
    except KeyError:
        return None
    return None


# -- predicate evaluation ----------------------------------------------------


def _check_unit_consistency(graph: QspHypergraph, out: list[Violation]) -> None:
    env = _unit_env(graph)
    canonical = graph.meta.get("canonical_units") or {}
    canon_units = {name: _try_unit(text) for name, text in canonical.items()}

    for v in sorted(graph.vertices.values(), key=lambda v: v.id):
        unit_field = {"species": "unit", "parameter": "unit", "compartment": "volume_unit"}.get(v.kind)
        if not unit_field:
            continue
        text = v.attrs.get(unit_field, "")
        u = _try_unit(text)
        if u is None:
            out.append(
                Violation("unit_consistency", v.id, 1.0, f"unparseable unit {text!r}")
            )
            continue
        # Scale-normalization findings against the declared canonical units.
        for name, cu in canon_units.items():
            if cu is not None and cu.dims == u.dims and not math.isclose(cu.scale, u.scale, rel_tol=1e-12):
                out.append(
                    Violation(
                        "unit_consistency",
                        v.id,
                        1.0,
                        f"unit {text!r} is off-scale vs canonical {canonical[name]!r}",
                        repair_hint=("rescale", unit_field, canonical[name]),
                    )
                )
                break

    required = required_rate_dims(graph)
    for rvid in sorted(graph.psi):
        if rvid not in graph.vertices:
            continue
        try:
            tree = rate_expression_tree(graph, rvid)
        except QspError as exc:
            out.append(Violation("unit_consistency", rvid, 1.0, str(exc)))
            continue
        if tree is None:
            continue
        try:
            expr_mod.check_dimensions(tree, env, required_dims=required)
        except DimensionError as exc:
            out.append(Violation("unit_consistency", rvid, 1.0, str(exc)))
        except KeyError:
            pass  # dangling symbol: reported by the connectivity predicate


def _mu_from_graph(graph: QspHypergraph) -> dict[str, float]:
    mu = {}
    for v in graph.vertices_of_kind("species"):
        mw = v.attrs.get("molecular_weight")
        if mw is not None:
            mu[local_id(v.id)] = float(mw)
    return mu


def mass_balance_check(
    S: StoichMatrix,
    mu: Mapping[str, float],
    counter: dict[str, int] | None = None,
) -> dict[str, float]:
    """Per-internal-reaction residuals |mu^T S_j|.

    A reaction passes when its residual is at most 1e-9 * max(mu).  Raises
    ModelError when an internal reaction touches a species without a mass.
    The scan touches each nonzero exactly once (see the optional counter).
    """
    residuals = {rid: 0.0 for j, rid in enumerate(S.cols) if not S.col_boundary[j]}
    for (i, j), w in S.entries.items():
        if counter is not None:
            counter["visits"] = counter.get("visits", 0) + 1
        if S.col_boundary[j]:
            continue
        sid = S.rows[i]
        if sid not in mu:
            raise ModelError(
                f"species {sid!r} participates in internal reaction {S.cols[j]!r} "
                "but has no molecular mass"
            )
        residuals[S.cols[j]] += mu[sid] * w
    return {rid: abs(total) for rid, total in residuals.items()}


def mass_balance_tolerance(mu: Mapping[str, float]) -> float:
    return 1e-9 * max(mu.values(), default=1.0)


def mass_feasibility(S: StoichMatrix) -> tuple[Fraction, ...] | None:
    """Strictly positive rational mu with mu^T S = 0 on internal columns.

    Exact rational arithmetic; returns None when no such vector exists.
    """
    internal = S.internal_cols()
    m = len(S.rows)
    if m == 0:
        return ()
    cols = []
    for j in internal:
        col = [0] * m
        for (i, jj), w in S.entries.items():
            if jj == j:
                col[i] = w
        cols.append(col)
    result = positive_nullvector(to_fractions(cols), m)
    return tuple(result) if result is not None else None


def _check_mass_balance(graph: QspHypergraph, out: list[Violation]) -> None:
    S = extract_stoich_matrix(graph)
    mu = _mu_from_graph(graph)
    if not mu:
        return
    for j, rid in enumerate(S.cols):
        if S.col_boundary[j]:
            continue
        col = S.column(j)
        if not col:
            continue
        if any(S.rows[i] not in mu for i in col):
            continue  # not evaluable without full masses; not a violation
        total = sum(mu[S.rows[i]] * w for i, w in col.items())
        magnitude = max(abs(mu[S.rows[i]] * w) for i, w in col.items())
        residual = abs(total) / magnitude if magnitude else 0.0
        if residual > 1e-9:
            out.append(
                Violation(
                    "mass_balance",
                    vertex_id("reaction", rid),
                    residual,
                    f"internal reaction mass residual {abs(total):.6g} (scaled {residual:.3g})",
                )
            )


def _check_stoichiometry(graph: QspHypergraph, out: list[Violation]) -> None:
    for e in graph.edges_of_kind("stoichiometric"):
        if not isinstance(e.weight, int) or e.weight == 0:
            out.append(
                Violation(
                    "stoichiometry_integrality",
                    e.id,
                    1.0,
                    f"stoichiometric weight must be a nonzero integer, got {e.weight!r}",
                )
            )
    for v in graph.vertices_of_kind("reaction"):
        incident = [e for e in graph.incident(v.id) if e.kind == "stoichiometric"]
        if not incident:
            out.append(
                Violation(
                    "stoichiometry_integrality",
                    v.id,
                    1.0,
                    "reaction has no stoichiometric incidences",
                )
            )


def _range_residual(value: float, lo: float, hi: float) -> float:
    """Normalized log-distance outside a closed interval."""
    tiny = 1e-30
    v = max(value, tiny)
    if lo <= value <= hi:
        return 0.0
    bound = lo if value < lo else hi
    return abs(math.log10(v / max(bound, tiny)))


def _check_ranges(graph: QspHypergraph, kb: PriorsKb | None, out: list[Violation]) -> None:
    if kb is None:
        return
    tags = set(graph.meta.get("context_tags", ()))
    for v in graph.vertices_of_kind("parameter"):
        value = v.attrs.get("value")
        if value is None:
            continue
        u = _try_unit(v.attrs.get("unit", ""))
        if u is None:
            continue
        kind = classify_quantity_kind(u)
        if kind is None:
            continue
        prior = lookup_prior(kb, kind, tags | {local_id(v.id)})
        if prior is None:
            continue
        canonical = normalize(float(value), u, prior.unit_expr)
        residual = _range_residual(canonical, prior.lo, prior.hi)
        if residual > 0:
            out.append(
                Violation(
                    "range_plausibility",
                    v.id,
                    residual,
                    f"{kind} {canonical:.4g} {prior.unit} outside "
                    f"[{prior.lo:.4g}, {prior.hi:.4g}] {prior.unit}",
                    repair_hint=("clamp", kb.prior_id(prior), str(prior.lo), str(prior.hi), prior.unit),
                )
            )
    for v in graph.vertices_of_kind("compartment"):
        if local_id(v.id) not in CENTRAL_COMPARTMENT_IDS:
            continue  # the only shipped volume prior is for the central pool
        u = _try_unit(v.attrs.get("volume_unit", ""))
        if u is None:
            continue
        prior = lookup_prior(kb, "central_volume", tags | {local_id(v.id)})
        if prior is None:
            continue
        canonical = normalize(float(v.attrs.get("volume_value", 0.0)), u, prior.unit_expr)
        residual = _range_residual(canonical, prior.lo, prior.hi)
        if residual > 0:
            out.append(
                Violation(
                    "range_plausibility",
                    v.id,
                    residual,
                    f"compartment volume {canonical:.4g} {prior.unit} outside "
                    f"[{prior.lo:.4g}, {prior.hi:.4g}] {prior.unit}",
                    repair_hint=("clamp", kb.prior_id(prior), str(prior.lo), str(prior.hi), prior.unit),
                )
            )
    for decl in graph.meta.get("constraints", ()):
        if decl.get("predicate") != "range" or len(decl.get("args", ())) < 4:
            continue
        target, lo_s, hi_s, unit_s = decl["args"][:4]
        vid = next(
            (vertex_id(kind, target) for kind in ("parameter", "species") if vertex_id(kind, target) in graph.vertices),
            None,
        )
        if vid is None:
            continue
        v = graph.vertices[vid]
        value = v.attrs.get("value", v.attrs.get("initial_value"))
        u = _try_unit(v.attrs.get("unit", ""))
        cu = _try_unit(unit_s)
        if value is None or u is None or cu is None or not u.commensurable(cu):
            continue
        canonical = normalize(float(value), u, cu)
        residual = _range_residual(canonical, float(lo_s), float(hi_s))
        if residual > 0:
            out.append(
                Violation(
                    "range_plausibility",
                    vid,
                    residual,
                    f"declared constraint {decl.get('id')}: value {canonical:.4g} {unit_s} "
                    f"outside [{lo_s}, {hi_s}] {unit_s}",
                )
            )


def _check_connectivity(graph: QspHypergraph, out: list[Violation]) -> None:
    vids = set(graph.vertices)
    species_ids = {local_id(v.id) for v in graph.vertices_of_kind("species")}
    param_ids = {local_id(v.id) for v in graph.vertices_of_kind("parameter")}
    comp_ids = {local_id(v.id) for v in graph.vertices_of_kind("compartment")}

    for e in sorted(graph.hyperedges.values(), key=lambda e: e.id):
        missing = [m for m in e.members if m not in vids]
        if missing:
            hint = ()
            if e.kind == "transport" and e.attr_map().get("declared"):
                hint = ("reconnect_transport",)
            out.append(
                Violation(
                    "connectivity",
                    e.id,
                    1.0,
                    f"{e.kind} edge references missing vertices {sorted(missing)}",
                    repair_hint=hint,
                )
            )

    for v in graph.vertices_of_kind("species"):
        comp = v.attrs.get("compartment")
        if comp not in comp_ids:
            out.append(
                Violation("connectivity", v.id, 1.0, f"species placed in unknown compartment {comp!r}")
            )
    for v in graph.vertices_of_kind("compartment"):
        for nbr in v.attrs.get("connectivity", ()):
            if nbr not in comp_ids:
                out.append(
                    Violation("connectivity", v.id, 1.0, f"connectivity to unknown compartment {nbr!r}")
                )

    for v in graph.vertices_of_kind("reaction"):
        attrs = v.attrs
        template = graph.psi.get(v.id, "")
        slots = attrs.get("slot_bindings") or {}
        for required in TEMPLATE_SLOTS.get(template, ()):
            if required not in slots:
                out.append(
                    Violation("connectivity", v.id, 1.0, f"template slot {required!r} is unbound")
                )
        for slot, target in sorted(slots.items()):
            if isinstance(target, str) and target not in param_ids and target not in species_ids:
                out.append(
                    Violation(
                        "connectivity", v.id, 1.0, f"slot {slot!r} references unknown entity {target!r}"
                    )
                )
        for m in attrs.get("modifiers", ()):
            if m not in species_ids:
                out.append(
                    Violation("connectivity", v.id, 1.0, f"modifier references unknown species {m!r}")
                )
        incident_species = {
            local_id(next(m for m in e.members if m.startswith("species:")))
            for e in graph.incident(v.id)
            if e.kind == "stoichiometric"
        }
        if attrs.get("rate_expression"):
            try:
                tree = expr_mod.parse_expr(attrs["rate_expression"])
            except QspError:
                tree = None
            if tree is not None:
                for sym in sorted(expr_mod.symbols(tree)):
                    if sym == "t" or sym in param_ids or sym in comp_ids:
                        continue
                    if sym not in species_ids:
                        out.append(
                            Violation(
                                "connectivity",
                                v.id,
                                1.0,
                                f"rate expression references unknown symbol {sym!r}",
                            )
                        )
                    elif sym not in incident_species and sym not in attrs.get("modifiers", ()):
                        out.append(
                            Violation(
                                "connectivity",
                                v.id,
                                1.0,
                                f"rate references species {sym!r} with no stoichiometric incidence",
                                repair_hint=("add_incidence", sym),
                            )
                        )

    meta = graph.meta
    for d in meta.get("doses", ()):
        if d.get("species") not in species_ids or d.get("compartment") not in comp_ids:
            out.append(
                Violation(
                    "connectivity",
                    f"dose:{d.get('id')}",
                    1.0,
                    f"dose targets unknown {d.get('compartment')}.{d.get('species')}",
                )
            )
    for p in meta.get("plots", ()):
        if p.get("species") not in species_ids or p.get("compartment") not in comp_ids:
            out.append(
                Violation(
                    "connectivity",
                    f"plot:{p.get('compartment')}.{p.get('species')}",
                    1.0,
                    "plot targets unknown species",
                )
            )


def validate(
    graph: QspHypergraph,
    kb: PriorsKb | None = None,
    config: ValidationConfig | None = None,
) -> ViolationReport:
    """Run all predicates; findings are data, not errors."""
    config = config or ValidationConfig()
    out: list[Violation] = []
    _check_unit_consistency(graph, out)
    _check_mass_balance(graph, out)
    _check_stoichiometry(graph, out)
    _check_ranges(graph, kb, out)
    _check_connectivity(graph, out)
    weighted = [
        replace(v, residual=v.residual * config.weight(v.predicate)) if config.weight(v.predicate) != 1.0 else v
        for v in out
    ]
    weighted.sort(key=lambda v: (v.predicate, v.site, v.message))
    return ViolationReport(tuple(weighted))


# -- repair ------------------------------------------------------------------


@dataclass(frozen=True)
class AppliedRepair:
    rule: str
    site: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"rule": self.rule, "site": self.site, "detail": self.detail}


@dataclass(frozen=True)
class IrreparableSite:
    site: str
    predicate: str
    reason: str
    proposal: dict | None = None

    def to_json(self) -> dict:
        return {
            "site": self.site,
            "predicate": self.predicate,
            "reason": self.reason,
            "proposal": self.proposal,
        }


@dataclass(frozen=True)
class RepairOptions:
    #: fraction of repairable sites actually repaired per step (test knob for
    #: controlled contraction ratios); 1.0 repairs everything repairable.
    repair_fraction: float = 1.0


@dataclass(frozen=True)
class RepairReport:
    iterations: int
    epsilon_trace: tuple[float, ...]
    rho_observed: float | None
    converged: bool
    applied: tuple[AppliedRepair, ...] = ()
    irreparable: tuple[IrreparableSite, ...] = ()
    bound_satisfied: bool | None = None

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "epsilon_trace": list(self.epsilon_trace),
            "rho_observed": self.rho_observed,
            "converged": self.converged,
            "applied": [a.to_json() for a in self.applied],
            "irreparable": [s.to_json() for s in self.irreparable],
            "bound_satisfied": self.bound_satisfied,
        }

    def to_text(self) -> str:
        lines = [
            f"iterations: {self.iterations}  converged: {self.converged}  "
            f"rho_observed: {self.rho_observed}",
            "epsilon trace: " + " -> ".join(f"{e:g}" for e in self.epsilon_trace),
        ]
        if self.applied:
            header = f"{'rule':26} {'site':32}  detail"
            lines += [header, "-" * len(header)]
            for a in self.applied:
                lines.append(f"{a.rule:26} {a.site:32}  {a.detail}")
        if self.irreparable:
            header = f"{'irreparable site':32} {'predicate':22}  reason"
            lines += [header, "-" * len(header)]
            for s in self.irreparable:
                lines.append(f"{s.site:32} {s.predicate:22}  {s.reason}")
        return "\n".join(lines) + "\n"


def _with_vertex_attrs(graph: QspHypergraph, vid: str, attrs: dict[str, Any]) -> QspHypergraph:
    vertices = dict(graph.vertices)
    old = vertices[vid]
    vertices[vid] = Vertex(vid, old.kind, attrs)
    return QspHypergraph(vertices=vertices, hyperedges=dict(graph.hyperedges), psi=dict(graph.psi), meta=graph.meta)


def _candidate_repair(
    graph: QspHypergraph, violation: Violation
) -> tuple[str, Callable[[QspHypergraph], QspHypergraph]] | None:
    hint = violation.repair_hint
    if not hint:
        return None
    if hint[0] == "rescale":
        _tag, unit_field, canonical_text = hint
        vid = violation.site

        def apply_rescale(g: QspHypergraph) -> QspHypergraph:
            v = g.vertices[vid]
            attrs = dict(v.attrs)
            current = parse_unit(attrs[unit_field])
            target = parse_unit(canonical_text)
            value_field = {"unit": "value", "volume_unit": "volume_value"}.get(unit_field, "value")
            if v.kind == "species":
                value_field = "initial_value"
            if attrs.get(value_field) is not None:
                attrs[value_field] = normalize(float(attrs[value_field]), current, target)
            attrs[unit_field] = canonical_text
            return _with_vertex_attrs(g, vid, attrs)

        return ("unit_rescale", apply_rescale)
    if hint[0] == "add_incidence":
        sym = hint[1]
        rvid = violation.site

        def apply_incidence(g: QspHypergraph) -> QspHypergraph:
            edges = dict(g.hyperedges)
            e = make_edge(
                "stoichiometric",
                [rvid, vertex_id("species", sym)],
                weight=-1,
                reaction=local_id(rvid),
            )
            edges[e.id] = e
            return QspHypergraph(vertices=dict(g.vertices), hyperedges=edges, psi=dict(g.psi), meta=g.meta)

        return ("insert_unit_coefficient", apply_incidence)
    if hint[0] == "reconnect_transport":
        eid = violation.site

        def apply_reconnect(g: QspHypergraph) -> QspHypergraph:
            edge = g.hyperedges.get(eid)
            if edge is None:
                return g
            direction = edge.attr_map().get("direction", "")
            if "->" not in direction:
                return g
            a, b = direction.split("->", 1)
            va, vb = vertex_id("compartment", a), vertex_id("compartment", b)
            if va not in g.vertices or vb not in g.vertices:
                return g
            edges = dict(g.hyperedges)
            del edges[eid]
            e = make_edge("transport", [va, vb], weight=1, declared=True, direction=direction)
            edges[e.id] = e
            return QspHypergraph(vertices=dict(g.vertices), hyperedges=edges, psi=dict(g.psi), meta=g.meta)

        return ("reconnect_transport", apply_reconnect)
    return None


def repair_step(
    graph: QspHypergraph,
    report: ViolationReport,
    kb: PriorsKb | None = None,
    options: RepairOptions | None = None,
) -> tuple[QspHypergraph, tuple[AppliedRepair, ...], tuple[IrreparableSite, ...]]:
    """Apply at most one repair per violated site; never increase epsilon.

    Range violations yield propose-only clamps (human-gated): the graph is
    unchanged and the site is surfaced as irreparable-pending-confirmation.
    """
    options = options or RepairOptions()
    applied: list[AppliedRepair] = []
    irreparable: list[IrreparableSite] = []
    current = graph
    current_report = report

    candidates: list[tuple[Violation, tuple[str, Callable]]] = []
    seen_sites: set[str] = set()
    for violation in report.items:
        if violation.site in seen_sites:
            continue
        if violation.predicate == "range_plausibility" and violation.repair_hint[:1] == ("clamp",):
            prior_id, lo, hi, unit = violation.repair_hint[1:]
            irreparable.append(
                IrreparableSite(
                    violation.site,
                    violation.predicate,
                    "clamp proposal requires human confirmation",
                    proposal={
                        "site": violation.site,
                        "clamp_to": [float(lo), float(hi)],
                        "unit": unit,
                        "source_prior": prior_id,
                    },
                )
            )
            seen_sites.add(violation.site)
            continue
        cand = _candidate_repair(current, violation)
        if cand is None:
            irreparable.append(
                IrreparableSite(violation.site, violation.predicate, "no applicable repair rule")
            )
            seen_sites.add(violation.site)
            continue
        candidates.append((violation, cand))
        seen_sites.add(violation.site)

    limit = len(candidates)
    if options.repair_fraction < 1.0 and candidates:
        limit = max(1, math.ceil(options.repair_fraction * len(candidates)))

    for violation, (rule, transform) in candidates[:limit]:
        attempt = transform(current)
        attempt_report = validate(attempt, kb)
        # Inflationary contract: a repair may not re-violate anything that was
        # satisfied before it, and may not raise epsilon.
        newly_violated = attempt_report.violated_keys() - current_report.violated_keys()
        if newly_violated or attempt_report.epsilon > current_report.epsilon + 1e-12:
            irreparable.append(
                IrreparableSite(
                    violation.site,
                    violation.predicate,
                    f"repair {rule} would retract satisfied predicates or raise epsilon",
                )
            )
            continue
        current = attempt
        current_report = attempt_report
        applied.append(AppliedRepair(rule, violation.site, violation.message))

    for violation, (rule, _transform) in candidates[limit:]:
        irreparable.append(
            IrreparableSite(violation.site, violation.predicate, "deferred by repair budget")
        )

    return current, tuple(applied), tuple(irreparable)


def repair_until_converged(
    graph: QspHypergraph,
    kb: PriorsKb | None = None,
    target: float = 0.0,
    max_iter: int = 10,
    options: RepairOptions | None = None,
) -> tuple[QspHypergraph, RepairReport]:
    """Iterate repair_step until epsilon <= target, a fixed point, or the cap."""
    if target < 0:
        raise ValueError("target epsilon must be nonnegative")
    current = graph
    report = validate(current, kb)
    trace = [report.epsilon]
    applied_all: list[AppliedRepair] = []
    irreparable: tuple[IrreparableSite, ...] = ()
    iterations = 0

    while trace[-1] > target and iterations < max_iter:
        current, applied, irreparable = repair_step(current, report, kb, options)
        report = validate(current, kb)
        iterations += 1
        trace.append(report.epsilon)
        applied_all.extend(applied)
        if not applied:
            break  # fixed point: nothing left that the rules can touch

    ratios = [
        trace[i + 1] / trace[i]
        for i in range(len(trace) - 1)
        if trace[i] > 0
    ]
    rho = max(ratios) if ratios else None
    converged = trace[-1] <= target

    bound_satisfied = None
    if rho is not None and 0 < rho < 1 and trace[0] > 0:
        effective_target = max(target, trace[-1], 1e-300)
        if trace[0] > effective_target:
            bound = math.ceil(math.log(trace[0] / effective_target) / math.log(1.0 / rho)) + 1
            bound_satisfied = iterations <= bound
            assert bound_satisfied, (
                f"iteration bound violated: {iterations} > {bound} "
                f"(rho={rho}, eps0={trace[0]}, target={effective_target})"
            )
        else:
            bound_satisfied = True

    return current, RepairReport(
        iterations=iterations,
        epsilon_trace=tuple(trace),
        rho_observed=rho,
        converged=converged,
        applied=tuple(applied_all),
        irreparable=irreparable,
        bound_satisfied=bound_satisfied,
    )
