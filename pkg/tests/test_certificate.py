import json

import pytest

from c3cert.certificate import Certificate, CertificateError
from c3cert.fixtures import load_table


def test_roundtrip_bit_exact(tmp_path):
    cert = load_table(3)
    cert.dump(tmp_path / "c.json")
    back = Certificate.load(tmp_path / "c.json")
    assert back.digest() == cert.digest()
    for name in cert.names():
        assert back.coefficient_vector(name) == cert.coefficient_vector(name)


def test_decimal_only_roundtrip():
    cert = load_table(1)
    doc = cert.to_json()
    for entry in doc["polynomials"].values():
        del entry["coefficients_hex"]
    assert Certificate.from_json(json.loads(json.dumps(doc))).digest() == cert.digest()


def test_bad_row_length():
    doc = load_table(1).to_json()
    doc["polynomials"]["T"]["coefficients"] = doc["polynomials"]["T"]["coefficients"][:-1]
    del doc["polynomials"]["T"]["coefficients_hex"]
    with pytest.raises(CertificateError, match="'T'"):
        Certificate.from_json(doc)
    with pytest.raises(CertificateError):
        Certificate.from_json({"nothing": 1})
