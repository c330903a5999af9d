import copy

import pytest

from c3cert.fixtures import (FixtureError, TABLE_IDS, certificate_from_document, load_table, rows_digest,
                             table_document)
from c3cert.polyalg import parse


def test_table1_first_coefficients():
    doc = table_document(1)
    row = next(r for r in doc["rows"] if r["name"] == "T")
    assert [float(v) for v in row["coefficients"][:5]] == [0.0] * 5
    assert float(row["coefficients"][5]) == 201.843


@pytest.mark.parametrize("tid", TABLE_IDS)
def test_digest_and_sizes(tid):
    doc = table_document(tid)
    assert rows_digest(doc) == doc["digest"]
    cert = load_table(tid)
    for name in cert.names():
        assert len(cert.bases[name]) == (35 if name.startswith("T") else 10)


def test_printed_order_mapping():
    doc = table_document(1)
    cert = load_table(1)
    row = next(r for r in doc["rows"] if r["name"] == "T")
    for mono_text, c in zip(doc["printed_basis"]["T"], row["coefficients"]):
        m = next(iter(parse(mono_text).terms))
        assert cert["T"].coeff(m) == pytest.approx(float(c))


def test_product_tables():
    t4 = load_table(4)
    assert len(t4.names("T^(")) == 9 and "Z^(2)" in t4
    t6 = load_table(6)
    assert {"Z^(2)", "V^(1)", "V^(2)"} <= set(t6.names())
    assert t6.constants["xi"] == 0.01
    t2 = load_table(2)
    assert t2.names() == ["T", "V"]


def test_tampered_fixture_rejected():
    doc = copy.deepcopy(table_document(1))
    doc["rows"][0]["coefficients"][5] = "201.844"
    with pytest.raises(FixtureError, match="digest"):
        certificate_from_document(doc)


def test_short_row_names_offender():
    doc = copy.deepcopy(table_document(1))
    doc["rows"][1]["coefficients"] = doc["rows"][1]["coefficients"][:-1]
    doc["digest"] = rows_digest(doc)
    with pytest.raises(FixtureError, match="'Z'"):
        certificate_from_document(doc)


def test_unknown_table():
    with pytest.raises(FixtureError):
        load_table(7)
