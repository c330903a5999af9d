import json
from collections import Counter

import numpy as np
import pytest

from c3cert.certgen import (Constants, ProblemSpec, ProgramError, enumerate_conditions, gen_counter, gen_fin_inf,
                            gen_finite_visits, gen_recurrence_on_trace, gen_verification_only, template_layout)
from c3cert.omega import build_product, fig5_dpa
from c3cert.sysmodel import FiniteInputSet, discretize_inputs, make_hopf


@pytest.fixture(scope="module")
def hopf():
    sys, sets = make_hopf("hopf")
    return sys, sets, discretize_inputs(sys.U, 4)


def test_constants_validation():
    with pytest.raises(ProgramError):
        Constants(xi=0.0)
    with pytest.raises(ProgramError):
        Constants(mu=-1)
    assert Constants(xi=(0.1, 0.2)).xi_for(2) == 0.2


def test_finite_program_shape(hopf):
    sys, sets, U = hopf
    cp = gen_finite_visits(sys, U, [sets["X_VF"]])
    names = [t.name for t in cp.templates]
    assert names == ["T", "Z"]
    assert cp.template("T").size == 35 and cp.template("Z").size == 10
    kinds = Counter(o.kind for o in cp.obligations)
    assert kinds["transitivity"] == len(U)
    assert kinds["existence"] == 1 and kinds["rank_fin"] == 1
    doc = json.loads(cp.dumps())
    assert doc["n_unknowns"] == 45


def test_fin_inf_and_counter_layouts(hopf):
    sys, sets, U = hopf
    cp = gen_fin_inf(sys, U, [sets["X_VF"]], None)
    assert [t.name for t in cp.templates] == ["T", "Z"]
    sys2, _ = make_hopf("hopf")
    X_INF = sets["X_INF"]
    cpc = gen_counter(sys2, U, X_INF, j_max=1)
    names = [t.name for t in cpc.templates]
    assert "T[0,2]" in names and "V[0]" in names and "V[1]" in names
    assert any(o.kind == "containment" for o in cpc.obligations)


def test_overlapping_sets_rejected(hopf):
    sys, sets, U = hopf
    with pytest.raises(ProgramError):
        gen_fin_inf(sys, U, [sets["X_INF"]], sets["X_INF"])


def test_product_layout_matches_tables():
    sys, sets = make_hopf("hopf_dpa")
    prod = build_product(sys, fig5_dpa(), sets["labeling"])
    spec = ProblemSpec(sys, discretize_inputs(sys.U, 2), "fin_inf", product=prod, vf_states=(1, 2),
                       inf_states=(3,), constants=Constants(xi=0.01))
    names = [n for n, _, _ in template_layout(spec)]
    assert names == [f"T^({p},{q})" for p in (1, 2, 3) for q in (1, 2, 3)] + ["Z^(2)", "V^(1)", "V^(2)"]


def test_verification_only_single_input(hopf):
    sys, sets, _ = hopf
    cp = gen_verification_only(sys, [sets["X_VF"]], (-3.0,))
    assert Counter(o.kind for o in cp.obligations)["transitivity"] == 1


def test_invalid_mode(hopf):
    sys, _, U = hopf
    with pytest.raises(ProgramError):
        ProblemSpec(sys, U, "nonsense")


def test_trace_program_rows_scaled():
    trace = [(1.0, 1.0), (0.0, 1.0), (2.0, 2.0)]
    cp = gen_recurrence_on_trace(trace, [False, True, False], deg_T=1)
    for ob in cp.obligations:
        vec, c0 = ob.dense
        assert max(np.max(np.abs(vec)), abs(c0)) == pytest.approx(1.0)
    with pytest.raises(ProgramError):
        gen_recurrence_on_trace(trace[:1], [False], deg_T=1)


def test_enumerated_condition_labels_unique():
    sys, sets = make_hopf("hopf_dpa")
    prod = build_product(sys, fig5_dpa(), sets["labeling"])
    spec = ProblemSpec(sys, FiniteInputSet(((0.0,),)), "fin_inf", product=prod, vf_states=(2,), inf_states=(3,))
    labels = [c.label for c in enumerate_conditions(spec)]
    assert len(labels) == len(set(labels))
