"""Named example geometries with their expected verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field

from .finsler import MKropinaSpec
from .mkropina import (FLAT_CONSTANT, NO, NOT_METRIZABLE, OTHER, PP_WAVE, YES, YES_H1,
                       AnalysisOptions)
from .specfile import SpecFile, dump_spec, parse_spec


class UnknownEntryError(KeyError):
    pass


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    text: str
    expected: dict
    provenance: str
    trivializing_map: dict | None = field(default=None)

    @property
    def specfile(self) -> SpecFile:
        return parse_spec(self.text, f"<catalog:{self.name}>", name=self.name)

    @property
    def spec(self) -> MKropinaSpec:
        return self.specfile.to_mkropina()

    @property
    def box(self):
        return self.specfile.box

    def options(self, threads: int = 1) -> AnalysisOptions:
        return self.specfile.options(threads)

    def export(self) -> str:
        return dump_spec(self.specfile, header=f"catalog entry: {self.name}\n{self.description}")


_PP_BOX = "u:-1,1 v:-1,1 x:-1,1 y:-1,1"

_ENTRIES = [
    CatalogEntry(
        name="flat-constant",
        description="Minkowski metric with a constant timelike 1-form",
        text=f"""
[space]
dim = 4
coords = t x y z
m = 0.5
[params]
c0 = 1.0
c1 = 0.3
[metric]
1 1 = -1
2 2 = 1
3 3 = 1
4 4 = 1
[oneform]
1 = c0
2 = c1
[analysis]
box = t:-1,1 x:-1,1 y:-1,1 z:-1,1
""",
        expected=dict(is_berwald=True, locally_metrizable=True, globally_metrizable=YES,
                      ricci_flat=True, affinely_ricci_flat=True, classification_tag=FLAT_CONSTANT),
        provenance="PAPER",
    ),
    CatalogEntry(
        name="cosmological",
        description="FLRW-type metric dt² − t²(dx²+dy²+dz²) with b = c t² dt",
        text="""
[space]
dim = 4
coords = t x y z
m = 0.5
[params]
c = 1.0
[metric]
1 1 = 1
2 2 = -t^2
3 3 = -t^2
4 4 = -t^2
[oneform]
1 = c*t^2
[analysis]
box = t:1,2 x:-1,1 y:-1,1 z:-1,1
""",
        expected=dict(is_berwald=True, locally_metrizable=True, globally_metrizable=YES,
                      ricci_flat=True, affinely_ricci_flat=True, classification_tag=FLAT_CONSTANT),
        provenance="PAPER",
        trivializing_map={
            "coords": ["T", "X", "Y", "Z"],
            "old_of_new": {"t": "exp(c^0.5*T)", "x": "c^0.5*X", "y": "c^0.5*Y", "z": "c^0.5*Z"},
            "metric": [[1, 0, 0, 0], [0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, -1]],
            "oneform": [1, 0, 0, 0],
        },
    ),
    CatalogEntry(
        name="ppwave-harmonic",
        description="pp-wave −2dudv + (x²−y²) sin(u) du² + dx² + dy² with b = du",
        text=f"""
[space]
dim = 4
coords = u v x y
m = 0.5
simply_connected = true
[metric]
1 1 = (x^2 - y^2)*sin(u)
1 2 = -1
3 3 = 1
4 4 = 1
[oneform]
1 = 1
[analysis]
box = {_PP_BOX}
""",
        expected=dict(is_berwald=True, locally_metrizable=True, globally_metrizable=YES_H1,
                      ricci_flat=True, affinely_ricci_flat=True, classification_tag=PP_WAVE),
        provenance="PAPER",
    ),
    CatalogEntry(
        name="rho-u-metrizable",
        description="null 1-form du with a_uu = H̃ + ρ(u) v, ρ = 1 + u²",
        text=f"""
[space]
dim = 4
coords = u v x y
m = 0.5
simply_connected = true
[metric]
1 1 = x*y + (1 + u^2)*v
1 2 = -1
1 3 = 0.2*u
3 3 = 1 + 0.1*x^2
4 4 = 1
[oneform]
1 = 1
[analysis]
box = {_PP_BOX}
""",
        expected=dict(is_berwald=True, locally_metrizable=True, globally_metrizable=YES_H1,
                      ricci_flat=False, affinely_ricci_flat=False, classification_tag=OTHER),
        provenance="PAPER",
    ),
    CatalogEntry(
        name="rho-x-nonmetrizable",
        description="null 1-form du with a_uu = x³ v: Berwald but not locally metrizable",
        text=f"""
[space]
dim = 4
coords = u v x y
m = 0.5
[metric]
1 1 = x^3*v
1 2 = -1
3 3 = 1
4 4 = 1
[oneform]
1 = 1
[analysis]
box = {_PP_BOX}
""",
        expected=dict(is_berwald=True, locally_metrizable=False, globally_metrizable=NO,
                      ricci_flat=False, affinely_ricci_flat=False, classification_tag=NOT_METRIZABLE),
        provenance="DERIVED",
    ),
    CatalogEntry(
        name="prop4-dressed",
        description="pp-wave data dressed by ψ = u²: a = e^(2mψ)(...), b = e^((1+m)ψ) du",
        text=f"""
[space]
dim = 4
coords = u v x y
m = 0.5
simply_connected = true
[metric]
1 1 = exp(u^2)*x^2
1 2 = -exp(u^2)
1 3 = exp(u^2)*0.5*y*u
3 3 = exp(u^2)
4 4 = exp(u^2)
[oneform]
1 = exp(1.5*u^2)
[analysis]
box = {_PP_BOX}
""",
        expected=dict(is_berwald=True, locally_metrizable=True, globally_metrizable=YES_H1,
                      ricci_flat=False, affinely_ricci_flat=False, classification_tag=OTHER),
        provenance="PAPER",
    ),
]

_REGISTRY = {e.name: e for e in _ENTRIES}


def names() -> list[str]:
    return [e.name for e in _ENTRIES]


def get(name: str) -> CatalogEntry:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownEntryError(f"unknown catalog entry {name!r}; known: {', '.join(names())}") from None


def entries() -> list[CatalogEntry]:
    return list(_ENTRIES)
