"""Published certificate tables shipped as JSON fixtures.

Each ``tableN.json`` keeps the printed monomial order and the coefficients
exactly as printed.  :func:`load_table` maps the printed order onto the
canonical basis explicitly, monomial by monomial, instead of assuming the two
orders coincide.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources

from ..certificate import Certificate
from ..polyalg import basis, coefficients, parse

__all__ = ["load_table", "certificate_from_document", "is_table_document", "table_document", "TABLE_IDS", "FixtureError", "PRODUCT_TARGETS"]

TABLE_IDS = (1, 2, 3, 4, 5, 6)


class FixtureError(ValueError):
    pass


def table_document(table_id: int) -> dict:
    if table_id not in TABLE_IDS:
        raise FixtureError(f"no fixture for table {table_id}; expected one of {TABLE_IDS}")
    text = resources.files(__package__).joinpath(f"table{table_id}.json").read_text()
    return json.loads(text)


def rows_digest(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc["rows"], sort_keys=True).encode()).hexdigest()


def load_table(table_id: int) -> Certificate:
    return certificate_from_document(table_document(table_id))


def is_table_document(doc: dict) -> bool:
    return isinstance(doc, dict) and "rows" in doc and "printed_basis" in doc


def certificate_from_document(doc: dict) -> Certificate:
    """Certificate from a table document (shipped or a user transcription)."""
    table_id = doc.get("table")
    if rows_digest(doc) != doc.get("digest"):
        raise FixtureError(f"table {table_id}: coefficient digest mismatch (fixture edited without provenance update)")
    b_xy = basis(["x1", "x2", "y1", "y2"], 3)
    b_x = basis(["x1", "x2"], 3)
    polys, bases = {}, {}
    for row in doc["rows"]:
        name = row["name"]
        binary = name.startswith("T")
        printed = doc["printed_basis"]["T" if binary else "unary"]
        target = b_xy if binary else b_x
        vals = [float(v) for v in row["coefficients"]]
        if len(vals) != len(printed):
            raise FixtureError(f"table {table_id} row {name!r}: {len(vals)} coefficients for {len(printed)} monomials")
        acc = parse("0")
        for mono_text, c in zip(printed, vals):
            acc = acc + parse(mono_text) * c
        # the canonical basis must span every printed monomial
        coefficients(acc, target)
        polys[name] = acc
        bases[name] = target
    constants = dict(doc["constants"])
    meta = {"table": table_id, "system": doc["system"], "mode": doc["mode"], "source": doc["source"]}
    if table_id in PRODUCT_TARGETS:
        meta["vf_states"], meta["inf_states"] = (list(t) for t in PRODUCT_TARGETS[table_id])
    return Certificate(polys, bases, constants, meta)


# automaton states playing the finite-visit / infinite-visit roles in the
# product tables (Z^(2) ranks q2; V^(1), V^(2) rank the states outside q3)
PRODUCT_TARGETS = {4: ((2,), ()), 5: ((), (3,)), 6: ((2,), (3,))}
