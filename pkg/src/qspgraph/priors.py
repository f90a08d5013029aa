"""Frozen physiological-priors knowledge base.

The shipped default KB contains only intervals with a literature basis; all
other entries must come from a user-supplied KB file.  A KB file is refused
when its content hash does not match its declared ``sha256`` (the frozen
contract), and lookups never mutate.

Intervals are treated as closed on both ends.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import KbError
from .units import (
    CLEARANCE_DIMS,
    CONC_DIMS,
    RATE_DIMS,
    VOLUME_DIMS,
    UnitExpr,
    parse_unit,
)


@dataclass(frozen=True)
class PhysioPrior:
    entity_kind: str
    context: tuple[str, ...]
    lo: float
    hi: float
    unit: str
    note: str = ""
    priority: int = 0

    def __post_init__(self):
        if not (0 <= self.lo <= self.hi):
            raise KbError(f"prior {self.entity_kind}: interval [{self.lo}, {self.hi}] is invalid")

    @property
    def unit_expr(self) -> UnitExpr:
        return parse_unit(self.unit)

    def to_json(self) -> dict:
        return {
            "entity_kind": self.entity_kind,
            "context": list(self.context),
            "lo": self.lo,
            "hi": self.hi,
            "unit": self.unit,
            "note": self.note,
            "priority": self.priority,
        }


@dataclass(frozen=True)
class PriorsKb:
    version: str
    entries: tuple[PhysioPrior, ...]
    frozen: bool = True
    sha256: str = ""

    def prior_id(self, prior: PhysioPrior) -> str:
        ctx = ",".join(prior.context) or "*"
        return f"{self.version}/{prior.entity_kind}[{ctx}]"


def _content_hash(version: str, entries: tuple[PhysioPrior, ...]) -> str:
    payload = json.dumps(
        {"version": version, "entries": [e.to_json() for e in entries]},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def make_kb(version: str, entries: list[PhysioPrior]) -> PriorsKb:
    entries_t = tuple(sorted(entries, key=lambda e: (e.entity_kind, e.context, -e.priority)))
    return PriorsKb(version=version, entries=entries_t, frozen=True, sha256=_content_hash(version, entries_t))


def default_kb() -> PriorsKb:
    """The shipped KB: four literature-grounded priors.

    binding_affinity covers the typical therapeutic range 1e-12..1e-6 M
    (with a human-stratified entry preferred when the context says human),
    central_volume covers 3..5 L for compartments tagged/named central, and
    clearance carries the 4 mL/day biologics point estimate.
    """
    return make_kb(
        "default-1",
        [
            PhysioPrior(
                entity_kind="binding_affinity",
                context=(),
                lo=1e-12,
                hi=1e-6,
                unit="M",
                note="typical therapeutic binding affinity interval",
            ),
            PhysioPrior(
                entity_kind="binding_affinity",
                context=("human",),
                lo=1e-12,
                hi=1e-6,
                unit="M",
                note="human-stratified therapeutic binding affinity interval",
                priority=1,
            ),
            PhysioPrior(
                entity_kind="central_volume",
                context=("human",),
                lo=3.0,
                hi=5.0,
                unit="L",
                note="human central (plasma) volume range",
            ),
            PhysioPrior(
                entity_kind="clearance",
                context=("biologic",),
                lo=4.0,
                hi=4.0,
                unit="mL/day",
                note="biologics clearance point estimate",
            ),
        ],
    )


def load_kb(path: str | Path) -> PriorsKb:
    """Load a KB file, refusing it when the declared sha256 mismatches."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = tuple(
        PhysioPrior(
            entity_kind=e["entity_kind"],
            context=tuple(e.get("context", ())),
            lo=float(e["lo"]),
            hi=float(e["hi"]),
            unit=e["unit"],
            note=e.get("note", ""),
            priority=int(e.get("priority", 0)),
        )
        for e in data["entries"]
    )
    version = data.get("version", "user")
    declared = data.get("sha256", "")
    actual = _content_hash(version, entries)
    if declared != actual:
        raise KbError(
            f"KB {path} content hash mismatch: declared {declared[:12]}..., actual {actual[:12]}..."
        )
    return PriorsKb(version=version, entries=entries, frozen=True, sha256=actual)


def save_kb(kb: PriorsKb, path: str | Path) -> None:
    data = {
        "version": kb.version,
        "sha256": kb.sha256 or _content_hash(kb.version, kb.entries),
        "entries": [e.to_json() for e in kb.entries],
    }
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def lookup_prior(kb: PriorsKb, entity_kind: str, context: set[str] | frozenset[str] | tuple[str, ...]) -> PhysioPrior | None:
    """Most-specific matching entry.

    An entry matches when its context tags are a subset of the query
    context; among matches the largest tag set wins, ties broken by the
    declared priority, then by entry order.
    """
    ctx = set(context)
    best: PhysioPrior | None = None
    best_key: tuple[int, int] | None = None
    for entry in kb.entries:
        if entry.entity_kind != entity_kind:
            continue
        if not set(entry.context) <= ctx:
            continue
        key = (len(entry.context), entry.priority)
        if best_key is None or key > best_key:
            best, best_key = entry, key
    return best


#: parameter-kind classification by dimension vector
_KIND_BY_DIMS = {
    CONC_DIMS: "binding_affinity",
    CLEARANCE_DIMS: "clearance",
    RATE_DIMS: "rate_constant",
    VOLUME_DIMS: "volume",
}


def classify_quantity_kind(unit: UnitExpr) -> str | None:
    """Map a unit's dimension vector to a prior entity kind, if any."""
    return _KIND_BY_DIMS.get(unit.dims)
