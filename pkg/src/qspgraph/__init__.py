"""Deterministic QSP model workbench.

Pharmacology models become typed biological hypergraphs; the package
validates units, mass balance and physiological ranges with a convergent
repair loop, applies structured edits with breadth-first parameter
alignment and explicit human confirmation, and compiles graphs both to
SimBiology-style scripts and to an executable ODE system for verification.
"""

from .model import (
    Compartment,
    ConstraintDecl,
    Dose,
    Parameter,
    PlotSpec,
    QspModel,
    Reaction,
    Species,
    model_check,
    model_from_document,
    models_equal,
    to_document,
)
from .hypergraph import (
    GraphDelta,
    Hyperedge,
    QspHypergraph,
    StoichMatrix,
    Vertex,
    apply_delta,
    build_hypergraph,
    canonical_serialize,
    extract_stoich_matrix,
    graph_diff,
    graph_hash,
    parse_graph,
    reconstruct_model,
)
from .units import UnitExpr, normalize, parse_unit, render_unit
from .priors import PhysioPrior, PriorsKb, default_kb, load_kb, lookup_prior, save_kb
from .validation import (
    RepairReport,
    ViolationReport,
    mass_balance_check,
    mass_feasibility,
    repair_step,
    repair_until_converged,
    validate,
)
from .modules import BiologicalModule, check_module_integrity, detect_modules
from .ingest import ScriptAst, StyleProfile, extract_style, lower_to_model, parse_script
from .codegen import emit_script, syntax_conformance, topology_equivalent
from .simulate import OdeSystem, Trajectory, assemble, diagnostics, plot_manifest, simulate
from .edits import (
    AlignmentReport,
    ClarificationItem,
    EditScript,
    ProvenanceRecord,
    apply_edits,
    bfs_align,
    detect_missing,
    parse_edit_script,
)
from .session import QspState, Session

__version__ = "0.1.0"

__all__ = [
    "AlignmentReport",
    "BiologicalModule",
    "ClarificationItem",
    "Compartment",
    "ConstraintDecl",
    "Dose",
    "EditScript",
    "GraphDelta",
    "Hyperedge",
    "OdeSystem",
    "Parameter",
    "PhysioPrior",
    "PlotSpec",
    "PriorsKb",
    "ProvenanceRecord",
    "QspHypergraph",
    "QspModel",
    "QspState",
    "Reaction",
    "RepairReport",
    "ScriptAst",
    "Session",
    "Species",
    "StoichMatrix",
    "StyleProfile",
    "Trajectory",
    "UnitExpr",
    "Vertex",
    "ViolationReport",
    "apply_delta",
    "apply_edits",
    "assemble",
    "bfs_align",
    "build_hypergraph",
    "canonical_serialize",
    "check_module_integrity",
    "default_kb",
    "detect_missing",
    "detect_modules",
    "diagnostics",
    "emit_script",
    "extract_stoich_matrix",
    "extract_style",
    "graph_diff",
    "graph_hash",
    "load_kb",
    "lookup_prior",
    "lower_to_model",
    "mass_balance_check",
    "mass_feasibility",
    "model_check",
    "model_from_document",
    "models_equal",
    "normalize",
    "parse_edit_script",
    "parse_graph",
    "parse_script",
    "parse_unit",
    "plot_manifest",
    "reconstruct_model",
    "render_unit",
    "repair_step",
    "repair_until_converged",
    "save_kb",
    "simulate",
    "syntax_conformance",
    "to_document",
    "topology_equivalent",
    "validate",
]
