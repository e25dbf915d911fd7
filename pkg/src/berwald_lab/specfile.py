"""Reader and writer for the line-oriented spec-file format.

    [space]     dim, coords, m, simply_connected
    [params]    name = float
    [metric]    i j = expr      (1-based, upper triangle, omitted = 0)
    [oneform]   i = expr
    [analysis]  box, grid, tol_berwald, tol_metrizable, fd_step

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from . import expr as ex
from .finsler import MKropinaSpec
from .mkropina import AnalysisOptions
from .pseudo_riemann import DEFAULT_FD_STEP, MetricSpec, OneFormSpec

SECTIONS = ("space", "params", "metric", "oneform", "analysis")
NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*$")


class SpecError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<spec>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class SpecFile:
    dim: int
    coords: list[str]
    m: float
    simply_connected: bool = False
    params: dict[str, float] = field(default_factory=dict)
    metric: dict[tuple[int, int], str] = field(default_factory=dict)
    oneform: dict[int, str] = field(default_factory=dict)
    box: list[tuple[float, float]] = field(default_factory=list)
    grid: int = 5
    tol_berwald: float = 1e-8
    tol_metrizable: float = 1e-6
    fd_step: float = DEFAULT_FD_STEP
    name: str = ""
    lines: dict = field(default_factory=dict, repr=False, compare=False)
    source: str = field(default="<spec>", repr=False, compare=False)

    def to_mkropina(self) -> MKropinaSpec:
        """Build the expression-level spec; undeclared symbols become SpecError."""
        names = list(self.params)

        def parse(text, key):
            try:
                return ex.parse(text, self.coords, names)
            except ex.ExprError as e:
                raise SpecError(str(e), self.lines.get(key), self.source) from e

        metric = {k: parse(v, ("metric", k)) for k, v in self.metric.items()}
        oneform = {k: parse(v, ("oneform", k)) for k, v in self.oneform.items()}
        try:
            a = MetricSpec(self.coords, metric, self.params)
            b = OneFormSpec(self.coords, oneform, self.params)
            return MKropinaSpec(a, b, self.m, name=self.name)
        except ValueError as e:
            raise SpecError(str(e), None, self.source) from e

    def options(self, threads: int = 1) -> AnalysisOptions:
        return AnalysisOptions(box=list(self.box), grid=self.grid, tol_berwald=self.tol_berwald,
                               tol_metrizable=self.tol_metrizable, fd_step=self.fd_step,
                               simply_connected=self.simply_connected, threads=threads)


def _float(text: str, line: int, source: str, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SpecError(f"{what}: expected a number, got {text!r}", line, source) from None
    if value != value or value in (float("inf"), float("-inf")):
        raise SpecError(f"{what}: must be finite", line, source)
    return value


def _bool(text: str, line: int, source: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise SpecError(f"expected true or false, got {text!r}", line, source)


def parse_spec(text: str, source: str = "<spec>", name: str = "") -> SpecFile:
    section = None
    space: dict[str, tuple[str, int]] = {}
    analysis: dict[str, tuple[str, int]] = {}
    params: dict[str, float] = {}
    metric: dict[tuple[int, int], str] = {}
    oneform: dict[int, str] = {}
    lines: dict = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise SpecError(f"malformed section header {line!r}", lineno, source)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise SpecError(f"unknown section [{section}]", lineno, source)
            if section in seen:
                raise SpecError(f"duplicate section [{section}]", lineno, source)
            seen.add(section)
            continue
        if section is None:
            raise SpecError("content before the first section header", lineno, source)
        if "=" not in line:
            raise SpecError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (s.strip() for s in line.split("=", 1))
        if not value:
            raise SpecError(f"empty value for {key!r}", lineno, source)
        if section == "space":
            if key not in ("dim", "coords", "m", "simply_connected"):
                raise SpecError(f"unknown key {key!r} in [space]", lineno, source)
            if key in space:
                raise SpecError(f"duplicate key {key!r}", lineno, source)
            space[key] = (value, lineno)
        elif section == "analysis":
            if key not in ("box", "grid", "tol_berwald", "tol_metrizable", "fd_step"):
                raise SpecError(f"unknown key {key!r} in [analysis]", lineno, source)
            if key in analysis:
                raise SpecError(f"duplicate key {key!r}", lineno, source)
            analysis[key] = (value, lineno)
        elif section == "params":
            if not NAME_RE.match(key) or key in ex.FUNCTIONS:
                raise SpecError(f"invalid parameter name {key!r}", lineno, source)
            if key in params:
                raise SpecError(f"duplicate parameter {key!r}", lineno, source)
            params[key] = _float(value, lineno, source, key)
        elif section == "metric":
            parts = key.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                raise SpecError(f"metric key must be two indices 'i j', got {key!r}", lineno, source)
            i, j = int(parts[0]), int(parts[1])
            if i > j:
                raise SpecError(f"metric entry {i} {j} is below the diagonal; give the upper triangle",
                                lineno, source)
            if (i - 1, j - 1) in metric:
                raise SpecError(f"duplicate metric entry {i} {j}", lineno, source)
            metric[(i - 1, j - 1)] = value
            lines[("metric", (i - 1, j - 1))] = lineno
        elif section == "oneform":
            if not key.isdigit():
                raise SpecError(f"1-form key must be an index, got {key!r}", lineno, source)
            i = int(key)
            if i - 1 in oneform:
                raise SpecError(f"duplicate 1-form entry {i}", lineno, source)
            oneform[i - 1] = value
            lines[("oneform", i - 1)] = lineno

    for key in ("dim", "coords", "m"):
        if key not in space:
            raise SpecError(f"[space] is missing {key!r}", None, source)
    dim_text, dim_line = space["dim"]
    if not dim_text.isdigit() or int(dim_text) < 1:
        raise SpecError(f"dim must be a positive integer, got {dim_text!r}", dim_line, source)
    dim = int(dim_text)
    coords_text, coords_line = space["coords"]
    coords = coords_text.split()
    if len(coords) != dim:
        raise SpecError(f"dim = {dim} but {len(coords)} coordinates declared", coords_line, source)
    for c in coords:
        if not NAME_RE.match(c) or c in ex.FUNCTIONS:
            raise SpecError(f"invalid coordinate name {c!r}", coords_line, source)
    if len(set(coords)) != dim:
        raise SpecError("coordinate names must be distinct", coords_line, source)
    clash = set(coords) & set(params)
    if clash:
        raise SpecError(f"names declared as both coordinate and parameter: {sorted(clash)}", None, source)
    m = _float(*space["m"], source, "m")
    if m == 0.0:
        raise SpecError("m = 0 is excluded", space["m"][1], source)
    simply = _bool(*space["simply_connected"], source) if "simply_connected" in space else False

    for (i, j) in metric:
        if j >= dim:
            raise SpecError(f"metric index {j + 1} exceeds dim = {dim}", lines[("metric", (i, j))], source)
    for i in oneform:
        if i >= dim or i < 0:
            raise SpecError(f"1-form index {i + 1} out of range 1..{dim}", lines[("oneform", i)], source)
    if any(i < 0 for i, _ in metric):
        raise SpecError("metric indices are 1-based", None, source)
    if not oneform:
        raise SpecError("[oneform] has no components", None, source)

    if "box" not in analysis:
        raise SpecError("[analysis] is missing 'box'", None, source)
    box_text, box_line = analysis["box"]
    ranges: dict[str, tuple[float, float]] = {}
    for item in box_text.split():
        if ":" not in item or "," not in item:
            raise SpecError(f"box entry must look like 'x:lo,hi', got {item!r}", box_line, source)
        cname, rng = item.split(":", 1)
        if cname not in coords:
            raise SpecError(f"box names unknown coordinate {cname!r}", box_line, source)
        if cname in ranges:
            raise SpecError(f"box gives {cname!r} twice", box_line, source)
        lo_t, hi_t = rng.split(",", 1)
        lo = _float(lo_t, box_line, source, f"box {cname}")
        hi = _float(hi_t, box_line, source, f"box {cname}")
        if not lo < hi:
            raise SpecError(f"box range for {cname!r} is empty ({lo} ≥ {hi})", box_line, source)
        ranges[cname] = (lo, hi)
    missing = [c for c in coords if c not in ranges]
    if missing:
        raise SpecError(f"box is missing coordinates {missing}", box_line, source)

    sf = SpecFile(dim, coords, m, simply, params, metric, oneform,
                  [ranges[c] for c in coords], name=name, lines=lines, source=source)
    if "grid" in analysis:
        text_g, line_g = analysis["grid"]
        if not text_g.isdigit() or int(text_g) < 2:
            raise SpecError(f"grid must be an integer ≥ 2, got {text_g!r}", line_g, source)
        sf.grid = int(text_g)
    for key in ("tol_berwald", "tol_metrizable", "fd_step"):
        if key in analysis:
            value = _float(*analysis[key], source, key)
            if value <= 0:
                raise SpecError(f"{key} must be positive", analysis[key][1], source)
            setattr(sf, key, value)
    sf.to_mkropina()
    return sf


def load_spec(path) -> SpecFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise SpecError(f"cannot read spec file: {e.strerror}", None, str(path)) from e
    except UnicodeDecodeError:
        raise SpecError("spec file is not valid UTF-8", None, str(path)) from None
    return parse_spec(text, str(path), name=path.stem)


def dump_spec(sf: SpecFile, header: str = "") -> str:
    """Serialize with floats in shortest round-trip form."""
    out = []
    if header:
        out += [f"# {line}" for line in header.splitlines()]
    out.append("[space]")
    out.append(f"dim = {sf.dim}")
    out.append(f"coords = {' '.join(sf.coords)}")
    out.append(f"m = {sf.m!r}")
    out.append(f"simply_connected = {'true' if sf.simply_connected else 'false'}")
    if sf.params:
        out.append("")
        out.append("[params]")
        out += [f"{k} = {v!r}" for k, v in sf.params.items()]
    out.append("")
    out.append("[metric]")
    out += [f"{i + 1} {j + 1} = {sf.metric[(i, j)]}" for i, j in sorted(sf.metric)]
    out.append("")
    out.append("[oneform]")
    out += [f"{i + 1} = {sf.oneform[i]}" for i in sorted(sf.oneform)]
    out.append("")
    out.append("[analysis]")
    box = " ".join(f"{c}:{lo!r},{hi!r}" for c, (lo, hi) in zip(sf.coords, sf.box))
    out.append(f"box = {box}")
    out.append(f"grid = {sf.grid}")
    out.append(f"tol_berwald = {sf.tol_berwald!r}")
    out.append(f"tol_metrizable = {sf.tol_metrizable!r}")
    out.append(f"fd_step = {sf.fd_step!r}")
    return "\n".join(out) + "\n"
