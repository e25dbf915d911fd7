"""Serialization of analysis reports (JSON document and plain text)."""

from __future__ import annotations

import json
import math

from .mkropina import NULL_THRESHOLD, AnalysisReport
from .specfile import SpecFile

TOP_LEVEL_KEYS = ("spec", "berwald", "verdict", "curvature", "classification", "diagnostics")

_num = {"type": "number"}
_num_or_null = {"type": ["number", "null"]}
_bool_or_null = {"type": ["boolean", "null"]}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": list(TOP_LEVEL_KEYS),
    "additionalProperties": False,
    "properties": {
        "spec": {
            "type": "object",
            "required": ["name", "dim", "coords", "m", "params", "metric", "oneform", "simply_connected"],
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "dim": {"type": "integer", "minimum": 1},
                "coords": {"type": "array", "items": {"type": "string"}},
                "m": _num,
                "params": {"type": "object", "additionalProperties": _num},
                "metric": {"type": "object", "additionalProperties": {"type": "string"}},
                "oneform": {"type": "object", "additionalProperties": {"type": "string"}},
                "simply_connected": {"type": "boolean"},
            },
        },
        "berwald": {
            "type": "object",
            "required": ["is_berwald", "residual_max", "null_points", "non_null_points", "base_point",
                         "f_at_base", "fb_at_base", "closed_form_agreement"],
            "additionalProperties": False,
            "properties": {
                "is_berwald": {"type": "boolean"},
                "residual_max": _num,
                "null_points": {"type": "integer"},
                "non_null_points": {"type": "integer"},
                "base_point": {"type": "array", "items": _num},
                "f_at_base": {"type": ["array", "null"], "items": _num},
                "fb_at_base": _num_or_null,
                "closed_form_agreement": _num_or_null,
            },
        },
        "verdict": {
            "type": "object",
            "required": ["locally_metrizable", "globally_metrizable", "df_max", "skew_ricci_max",
                         "paths_agree", "lemma2_residual", "causal_character", "regions", "psi",
                         "metrizing_metric", "metrization_branch", "metrization_checks"],
            "additionalProperties": False,
            "properties": {
                "locally_metrizable": _bool_or_null,
                "globally_metrizable": {"enum": ["yes", "yes-under-trivial-H1-assumption", "unknown", "no"]},
                "df_max": _num_or_null,
                "skew_ricci_max": _num_or_null,
                "paths_agree": _bool_or_null,
                "lemma2_residual": _num_or_null,
                "causal_character": {"enum": ["timelike", "spacelike", "null", "positive", "negative", "mixed"]},
                "regions": {"type": "object"},
                "psi": {"type": ["string", "null"]},
                "metrizing_metric": {"type": ["object", "string", "null"]},
                "metrization_branch": {"enum": ["closed-form", "poincare", None]},
                "metrization_checks": {
                    "type": ["object", "null"],
                    "properties": {"value_identity": _num, "b_parallel": _num, "christoffel_match": _num},
                },
            },
        },
        "curvature": {
            "type": "object",
            "required": ["affine_ricci_max", "sym_ricci_max", "skew_ricci_max", "ricci_flat",
                         "affinely_ricci_flat"],
            "additionalProperties": False,
            "properties": {
                "affine_ricci_max": _num_or_null,
                "sym_ricci_max": _num_or_null,
                "skew_ricci_max": _num_or_null,
                "ricci_flat": _bool_or_null,
                "affinely_ricci_flat": _bool_or_null,
            },
        },
        "classification": {
            "type": "object",
            "required": ["supported", "tag", "reason", "harmonicity_residual", "metrized_riemann_max"],
            "additionalProperties": False,
            "properties": {
                "supported": {"type": "boolean"},
                "tag": {"enum": ["flat-constant-form", "pp-wave", "other", "not-metrizable", None]},
                "reason": {"type": "string"},
                "harmonicity_residual": _num_or_null,
                "metrized_riemann_max": _num_or_null,
            },
        },
        "diagnostics": {
            "type": "object",
            "required": ["grid", "grid_points", "excluded_points", "box", "tol_berwald", "tol_metrizable",
                         "fd_step", "null_threshold", "connection_backing", "tangent_samples"],
            "additionalProperties": False,
            "properties": {
                "grid": {"type": "integer"},
                "grid_points": {"type": "integer"},
                "excluded_points": {"type": "integer"},
                "box": {"type": "object", "additionalProperties": {"type": "array", "items": _num}},
                "tol_berwald": _num,
                "tol_metrizable": _num,
                "fd_step": _num,
                "null_threshold": _num,
                "connection_backing": {"enum": ["symbolic", "pointwise"]},
                "tangent_samples": {"type": "integer"},
            },
        },
    },
}


def _clean(value):
    """Plain JSON types: numpy scalars to Python, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, float) and value == 0.0:
        return 0.0
    return value


def to_dict(report: AnalysisReport, specfile: SpecFile | None = None) -> dict:
    spec = report.spec
    opts = report.options
    v = report.verdict
    if specfile is not None:
        metric = {f"{i + 1} {j + 1}": s for (i, j), s in sorted(specfile.metric.items())}
        oneform = {str(i + 1): s for i, s in sorted(specfile.oneform.items())}
        params = dict(specfile.params)
    else:
        metric = {f"{i + 1} {j + 1}": s for (i, j), s in sorted(spec.metric.to_strings().items())}
        oneform = {str(i + 1): s for i, s in sorted(spec.oneform.to_strings().items())}
        params = dict(spec.metric.params)
    metr = report.metrization
    metrizing = None
    if metr is not None:
        if hasattr(metr.a_tilde, "to_strings"):
            metrizing = {f"{i + 1} {j + 1}": s for (i, j), s in sorted(metr.a_tilde.to_strings().items())}
        else:
            metrizing = "pointwise"
    checks = report.metrization_checks
    curv = report.curvature or {}
    cls = report.classification
    out = {
        "spec": {
            "name": spec.name,
            "dim": spec.n,
            "coords": list(spec.coords),
            "m": spec.m,
            "params": params,
            "metric": metric,
            "oneform": oneform,
            "simply_connected": bool(opts.simply_connected),
        },
        "berwald": dict(report.berwald),
        "verdict": {
            "locally_metrizable": v.locally_metrizable,
            "globally_metrizable": v.globally_metrizable,
            "df_max": v.df_max,
            "skew_ricci_max": v.skew_ricci_max,
            "paths_agree": v.paths_agree,
            "lemma2_residual": v.lemma2_residual,
            "causal_character": v.causal_character,
            "regions": v.regions,
            "psi": metr.psi_string() if metr is not None else None,
            "metrizing_metric": metrizing,
            "metrization_branch": metr.branch if metr is not None else None,
            "metrization_checks": None if checks is None else {
                "value_identity": checks.value_identity,
                "b_parallel": checks.b_parallel,
                "christoffel_match": checks.christoffel_match,
            },
        },
        "curvature": {
            "affine_ricci_max": curv.get("affine_ricci_max"),
            "sym_ricci_max": curv.get("sym_ricci_max"),
            "skew_ricci_max": curv.get("skew_ricci_max"),
            "ricci_flat": curv.get("ricci_flat"),
            "affinely_ricci_flat": curv.get("affinely_ricci_flat"),
        },
        "classification": {
            "supported": cls.supported,
            "tag": cls.tag,
            "reason": cls.reason,
            "harmonicity_residual": cls.harmonicity_residual,
            "metrized_riemann_max": cls.metrized_riemann_max,
        },
        "diagnostics": {
            "grid": opts.grid,
            "grid_points": int(len(report.points)),
            "excluded_points": report.excluded,
            "box": {c: [lo, hi] for c, (lo, hi) in zip(spec.coords, opts.box)},
            "tol_berwald": opts.tol_berwald,
            "tol_metrizable": opts.tol_metrizable,
            "fd_step": opts.fd_step if opts.fd_step is not None else 1e-4,
            "null_threshold": NULL_THRESHOLD,
            "connection_backing": report.connection_backing,
            "tangent_samples": opts.tangent_samples,
        },
    }
    return _clean(out)


def to_json(report: AnalysisReport, specfile: SpecFile | None = None) -> str:
    return json.dumps(to_dict(report, specfile), indent=2, allow_nan=False) + "\n"


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)


def to_text(report: AnalysisReport, specfile: SpecFile | None = None) -> str:
    d = to_dict(report, specfile)
    s, bw, v, c, cl, dg = (d[k] for k in TOP_LEVEL_KEYS)
    lines = [
        f"spec: {s['name'] or '<unnamed>'}  (n = {s['dim']}, coords = {' '.join(s['coords'])}, m = {s['m']})",
        "",
        "Berwald",
        f"  is_berwald            {_fmt(bw['is_berwald'])}",
        f"  residual_max          {_fmt(bw['residual_max'])}",
        f"  null / non-null pts   {bw['null_points']} / {bw['non_null_points']}",
        f"  f at base point       {_fmt(bw['f_at_base'])}",
        "",
        "Metrizability",
        f"  locally_metrizable    {_fmt(v['locally_metrizable'])}",
        f"  globally_metrizable   {v['globally_metrizable']}",
        f"  df_max                {_fmt(v['df_max'])}",
        f"  skew_ricci_max        {_fmt(v['skew_ricci_max'])}",
        f"  paths_agree           {_fmt(v['paths_agree'])}",
        f"  causal character      {v['causal_character']}",
    ]
    if v["psi"] is not None:
        lines.append(f"  psi                   {v['psi']}")
    if isinstance(v["metrizing_metric"], dict):
        lines.append("  metrizing metric")
        lines += [f"    a~[{k}] = {e}" for k, e in v["metrizing_metric"].items()]
    elif v["metrizing_metric"]:
        lines.append(f"  metrizing metric      {v['metrizing_metric']} ({v['metrization_branch']})")
    if v["metrization_checks"]:
        mc = v["metrization_checks"]
        lines.append(f"  checks: F identity {_fmt(mc['value_identity'])}, "
                     f"b~ parallel {_fmt(mc['b_parallel'])}, Christoffel match {_fmt(mc['christoffel_match'])}")
    for name, region in v["regions"].items():
        lines.append(f"  region {name}: {region}")
    lines += [
        "",
        "Curvature",
        f"  affine_ricci_max      {_fmt(c['affine_ricci_max'])}",
        f"  ricci_flat            {_fmt(c['ricci_flat'])}",
        f"  affinely_ricci_flat   {_fmt(c['affinely_ricci_flat'])}",
        "",
        "Classification",
        f"  tag                   {cl['tag'] or 'unsupported'}",
    ]
    if cl["reason"]:
        lines.append(f"  note                  {cl['reason']}")
    if cl["harmonicity_residual"] is not None:
        lines.append(f"  harmonicity residual  {_fmt(cl['harmonicity_residual'])}")
    lines += [
        "",
        f"grid: {dg['grid_points']} points ({dg['excluded_points']} excluded), "
        f"tol_berwald {dg['tol_berwald']}, tol_metrizable {dg['tol_metrizable']}, fd_step {dg['fd_step']}",
    ]
    return "\n".join(lines) + "\n"
