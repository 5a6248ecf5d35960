from __future__ import annotations

import pytest

from edskit import catalog
from edskit.exterior import Chart
from edskit.symcore import is_zero, normal_form, to_text

ALL_COORDS = ("x", "y", "u", "p", "q", "r", "t", "Z", "P", "Q", "R", "T", "v", "ux", "uy")


def _texts(entry: catalog.CatalogEntry):
    yield entry.F
    for hs in list(entry.invariants.values()) + list(entry.first_order_invariants.values()):
        yield from hs
    for tr in entry.transformations:
        if tr.runnable:
            yield from (s for s in (tr.f, tr.g, tr.F) if s)
        yield from tr.domain


def _chart(entry: catalog.CatalogEntry) -> Chart:
    consts = list(entry.constants)
    funcs = list(entry.functions)
    for tr in entry.transformations:
        consts += tr.constants
        funcs += tr.functions
    return Chart(ALL_COORDS, tuple(dict.fromkeys(consts)), [f.build() for f in funcs])


RUNNABLE = [e.id for e in catalog.entries() if e.runnable]


@pytest.mark.parametrize("entry_id", RUNNABLE)
def test_print_parse_roundtrip(entry_id):
    entry = catalog.get(entry_id)
    chart = _chart(entry)
    for text in _texts(entry):
        e = chart.parse(text)
        back = chart.parse(to_text(e))
        assert normal_form(back) == normal_form(e) or is_zero(back - e), text


@pytest.mark.parametrize("entry_id", catalog.ids())
def test_selftest_entry(entry_id):
    lines = catalog.selftest([entry_id])
    assert lines
    failed = [f"{ln.check}: {ln.detail}" for ln in lines if not ln.ok]
    assert not failed


def test_aliases_and_lookup():
    assert catalog.get("liouville").id == "IX"
    assert catalog.get("sg").id == "sine-gordon"
    assert catalog.get("VIII").id == "VIII*"
    with pytest.raises(KeyError, match="known"):
        catalog.get("XIV")


def test_catalog_size_and_stubs():
    assert len(catalog.ids()) >= 12
    stubs = [e for e in catalog.entries() if not e.runnable]
    assert stubs and all(e.note for e in stubs)


def test_sg_constant_fixture():
    assert catalog.SG_COMPATIBILITY_CONSTANT == "1/16"
    assert catalog.sg_constant_matches("sin(u)/16")
    assert not catalog.sg_constant_matches("sin(u)")


def test_as_dict_keys():
    d = catalog.get("IX").as_dict()
    assert d["id"] == "IX" and d["F"] == "exp(u)"
    assert any(t["name"] == "liouville-wave" for t in d["transformations"])
