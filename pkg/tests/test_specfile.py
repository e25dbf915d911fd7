import pytest
from hypothesis import given, settings, strategies as st

from berwald_lab import catalog, mkropina as mk
from berwald_lab.specfile import SpecError, dump_spec, load_spec, parse_spec

BASE = """
[space]
dim = 4
coords = t x y z
m = 0.5
[params]
c = 1.5
[metric]
1 1 = -1
2 2 = 1
3 3 = 1
4 4 = 1
[oneform]
1 = c
[analysis]
box = t:-1,1 x:-1,1 y:-1,1 z:-1,1
"""


def test_parse_minimal():
    sf = parse_spec(BASE)
    assert sf.dim == 4 and sf.coords == ["t", "x", "y", "z"] and sf.m == 0.5
    assert sf.params == {"c": 1.5}
    assert sf.metric[(0, 0)] == "-1" and sf.oneform == {0: "c"}
    assert sf.grid == 5 and sf.tol_berwald == 1e-8 and sf.tol_metrizable == 1e-6 and sf.fd_step == 1e-4
    assert not sf.simply_connected


@pytest.mark.parametrize("old, new, fragment", [
    ("1 = c", "1 = q", "undeclared"),
    ("1 = c", "1 = c*(", "expected"),
    ("2 2 = 1", "2 1 = 1", "upper triangle"),
    ("2 2 = 1", "2 5 = 1", "exceeds"),
    ("[analysis]", "[analysis]\ngrid = 1", "grid"),
    ("[analysis]", "[analysis]\ntol_berwald = -1", "positive"),
    ("box = t:-1,1 x:-1,1 y:-1,1 z:-1,1", "box = t:-1,1 x:-1,1 y:-1,1", "missing"),
    ("box = t:-1,1 x:-1,1 y:-1,1 z:-1,1", "box = t:1,1 x:-1,1 y:-1,1 z:-1,1", "empty"),
    ("m = 0.5", "m = 0", "m = 0"),
    ("dim = 4", "dim = 3", "coordinates declared"),
    ("[params]", "[parms]", "unknown section"),
    ("[analysis]", "[analysis]\nfoo = 1", "unknown key"),
    ("2 2 = 1", "2 2 = 1\n2 2 = 2", "duplicate"),
    ("c = 1.5", "c = abc", "expected a number"),
    ("coords = t x y z", "coords = t x x z", "distinct"),
])
def test_spec_errors(old, new, fragment):
    with pytest.raises(SpecError) as info:
        parse_spec(BASE.replace(old, new), "s.spec")
    assert fragment in str(info.value)
    assert str(info.value).startswith("s.spec")


def test_error_carries_line_number():
    with pytest.raises(SpecError) as info:
        parse_spec(BASE.replace("1 = c", "1 = q"), "s.spec")
    assert info.value.line == BASE.splitlines().index("1 = c") + 1


def test_missing_file(tmp_path):
    with pytest.raises(SpecError):
        load_spec(tmp_path / "absent.spec")


@pytest.mark.parametrize("entry", catalog.entries(), ids=lambda e: e.name)
def test_export_roundtrip(entry, tmp_path):
    text = entry.export()
    path = tmp_path / f"{entry.name}.spec"
    path.write_text(text)
    back = load_spec(path)
    orig = entry.specfile
    for field in ("dim", "coords", "m", "simply_connected", "params", "metric", "oneform", "box", "grid",
                  "tol_berwald", "tol_metrizable", "fd_step"):
        assert getattr(back, field) == getattr(orig, field), field
    assert dump_spec(back) == dump_spec(orig)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: v != 0.0),
       st.floats(1e-12, 1.0), st.floats(-10, 10), st.floats(0.1, 10))
def test_float_fields_roundtrip_exactly(m, tol, lo, width):
    sf = parse_spec(BASE)
    sf.m, sf.tol_metrizable = m, tol
    sf.box = [(lo, lo + width)] + sf.box[1:]
    back = parse_spec(dump_spec(sf))
    assert back.m == m and back.tol_metrizable == tol and back.box == sf.box


def test_catalog_listing():
    assert len(catalog.names()) >= 6
    with pytest.raises(catalog.UnknownEntryError):
        catalog.get("nope")


def test_exported_cosmological_reanalyzes(tmp_path):
    path = tmp_path / "c.spec"
    path.write_text(catalog.get("cosmological").export())
    sf = load_spec(path)
    r = mk.analyze(sf.to_mkropina(), sf.options())
    assert r.verdict.globally_metrizable == mk.YES
