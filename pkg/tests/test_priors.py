"""Priors knowledge base: frozen-content contract and specificity lookup."""

import json

import pytest

from qspgraph.errors import KbError
from qspgraph.priors import (
    PhysioPrior,
    classify_quantity_kind,
    default_kb,
    load_kb,
    lookup_prior,
    make_kb,
    save_kb,
)
from qspgraph.units import parse_unit


def test_binding_affinity_lookup_human():
    kb = default_kb()
    prior = lookup_prior(kb, "binding_affinity", {"human"})
    assert prior is not None
    assert (prior.lo, prior.hi, prior.unit) == (1e-12, 1e-6, "M")
    # the human-stratified entry wins over the generic one
    assert prior.context == ("human",)


def test_central_volume_lookup_human():
    kb = default_kb()
    prior = lookup_prior(kb, "central_volume", {"human"})
    assert prior is not None
    assert (prior.lo, prior.hi, prior.unit) == (3.0, 5.0, "L")


def test_unknown_kind_returns_none():
    assert lookup_prior(default_kb(), "made_up_kind", {"human"}) is None


def test_specificity_more_tags_win():
    kb = make_kb(
        "t",
        [
            PhysioPrior("clearance", (), 1.0, 10.0, "mL/day"),
            PhysioPrior("clearance", ("human", "biologic"), 2.0, 6.0, "mL/day"),
            PhysioPrior("clearance", ("human",), 1.5, 8.0, "mL/day"),
        ],
    )
    assert lookup_prior(kb, "clearance", {"human", "biologic"}).lo == 2.0
    assert lookup_prior(kb, "clearance", {"human"}).lo == 1.5
    assert lookup_prior(kb, "clearance", {"mouse"}).lo == 1.0


def test_kb_file_round_trip(tmp_path):
    kb = default_kb()
    path = tmp_path / "kb.json"
    save_kb(kb, path)
    loaded = load_kb(path)
    assert loaded.sha256 == kb.sha256
    assert loaded.entries == kb.entries
    assert loaded.frozen


def test_kb_refused_on_hash_mismatch(tmp_path):
    kb = default_kb()
    path = tmp_path / "kb.json"
    save_kb(kb, path)
    data = json.loads(path.read_text())
    data["entries"][0]["hi"] = 1.0  # tamper after freezing
    path.write_text(json.dumps(data))
    with pytest.raises(KbError) as err:
        load_kb(path)
    assert "hash mismatch" in str(err.value)


def test_invalid_interval_rejected():
    with pytest.raises(KbError):
        PhysioPrior("x", (), 2.0, 1.0, "M")
    with pytest.raises(KbError):
        PhysioPrior("x", (), -1.0, 1.0, "M")


def test_quantity_kind_classification():
    assert classify_quantity_kind(parse_unit("nM")) == "binding_affinity"
    assert classify_quantity_kind(parse_unit("mL/day")) == "clearance"
    assert classify_quantity_kind(parse_unit("1/hour")) == "rate_constant"
    assert classify_quantity_kind(parse_unit("L")) == "volume"
    assert classify_quantity_kind(parse_unit("g/mol")) is None
