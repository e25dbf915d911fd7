import json

import jsonschema
import pytest

from berwald_lab import catalog, report


@pytest.mark.parametrize("name", catalog.names())
def test_report_validates_against_schema(name, report_of):
    r = report_of(name)
    doc = json.loads(report.to_json(r, catalog.get(name).specfile))
    jsonschema.Draft202012Validator(report.REPORT_SCHEMA).validate(doc)
    assert tuple(doc) == report.TOP_LEVEL_KEYS


def test_schema_is_itself_valid():
    jsonschema.Draft202012Validator.check_schema(report.REPORT_SCHEMA)


def test_schema_rejects_unknown_verdict(report_of):
    doc = report.to_dict(report_of("flat-constant"))
    doc["verdict"]["globally_metrizable"] = "maybe"
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(doc, report.REPORT_SCHEMA)


def test_text_report_mentions_verdicts(report_of):
    text = report.to_text(report_of("rho-x-nonmetrizable"))
    assert "locally_metrizable    false" in text
    assert "not-metrizable" in text


def test_cosmological_psi_and_metric(report_of):
    doc = report.to_dict(report_of("cosmological"))
    assert doc["verdict"]["psi"] == "0.5*ln(abs(t^4))"
    assert doc["verdict"]["metrization_branch"] == "closed-form"
    assert set(doc["verdict"]["metrizing_metric"]) == {"1 1", "2 2", "3 3", "4 4"}


def test_null_entry_reports_pointwise_metric(report_of):
    doc = report.to_dict(report_of("prop4-dressed"))
    assert doc["verdict"]["metrizing_metric"] == "pointwise"
    assert doc["diagnostics"]["connection_backing"] == "symbolic"
