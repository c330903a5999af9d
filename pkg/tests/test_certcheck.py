import json

import pytest

from c3cert.certcheck import (EXIT_FAIL, EXIT_PASS, EXIT_VACUOUS, CheckConfig, ConditionReport, aggregate_verdict,
                              check_boundedness, check_certificate)
from c3cert.certgen import ProblemSpec
from c3cert.certificate import Certificate, CertificateError
from c3cert.fixtures import load_table
from c3cert.polyalg import parse
from c3cert.sysmodel import discretize_inputs, make_hopf

CFG = CheckConfig(samples=2000, seed=0, eps=1e-3)


@pytest.fixture(scope="module")
def finite_spec():
    sys, sets = make_hopf()
    return ProblemSpec(sys, discretize_inputs(sys.U, 8), "finite", vf_partitions=(sets["X_VF"],))


def test_table1_passes(finite_spec):
    rep = check_certificate(load_table(1), finite_spec, CFG)
    assert rep.verdict == "pass" and rep.exit_code == EXIT_PASS
    assert rep.worst("existence") > 0
    doc = json.loads(rep.dumps())
    assert doc["conditions"] and "sampling evidence" in doc["notes"][-1]


def test_negated_certificate_fails(finite_spec):
    cert = load_table(1)
    bad = Certificate({**cert.polys, "T": cert["T"] * -1.0}, cert.bases)
    rep = check_certificate(bad, finite_spec, CFG)
    assert rep.verdict == "fail" and rep.exit_code == EXIT_FAIL
    ex = rep.by_kind("existence")[0]
    assert ex.violations and ex.violations[0]["margin"] < 0


def test_missing_polynomial(finite_spec):
    cert = load_table(1)
    with pytest.raises(CertificateError, match="Z"):
        check_certificate(Certificate({"T": cert["T"]}, {"T": cert.bases["T"]}), finite_spec, CFG)


def _rep(kind, verdict):
    return ConditionReport(kind, kind, 10, 0, None, None, verdict=verdict)


def test_aggregate_verdict():
    assert aggregate_verdict([_rep("existence", "pass"), _rep("rank_fin", "vacuous")]) == "pass"
    assert aggregate_verdict([_rep("existence", "vacuous"), _rep("rank_fin", "pass")]) == "vacuous"
    assert aggregate_verdict([_rep("existence", "pass"), _rep("rank_fin", "fail")]) == "fail"
    assert aggregate_verdict([]) == "vacuous"
    assert EXIT_VACUOUS == 2


def test_boundedness():
    sys, _ = make_hopf()
    cert = Certificate({"T": parse("x1 + y1")}, {})
    dom = sys.X.with_prefix("x")
    from c3cert.semialg import ProductSet
    ps = ProductSet((dom, sys.X.with_prefix("y")))
    assert check_boundedness(cert, "T", ps, M=2.5, cfg=CFG).verdict == "pass"
    assert check_boundedness(cert, "T", ps, M=1.0, cfg=CFG).verdict == "fail"


def test_config_validation():
    with pytest.raises(ValueError):
        CheckConfig(samples=0)
