import random

import pytest
from hypothesis import given, settings, strategies as st

from c3cert.omega import (DPAError, accepts_lasso, build_product, fig5_dpa, format_dpa, parse_dpa,
                          priority_targets)
from c3cert.sysmodel import make_hopf
from oracles import brute_force_accepts, random_dpa, random_lasso


def test_fig5_runs():
    dpa = fig5_dpa()
    assert dpa.run(["b", "a", "a", "a"]) == [1, 2, 3, 3, 3]
    assert accepts_lasso(dpa, ["b"], ["a"])
    assert not accepts_lasso(dpa, [], ["a", "b"])
    assert not dpa.on_cycle(1) and dpa.on_cycle(2) and dpa.on_cycle(3)


def test_format_parse_roundtrip():
    dpa = fig5_dpa()
    assert parse_dpa(format_dpa(dpa)) == dpa


@pytest.mark.parametrize("text,msg", [
    ("alphabet: a\nstates: 1\ninitial: 1\npriority: 1\n", "missing transition"),
    ("alphabet: a\nstates: 1\ninitial: 2\npriority: 1\ntrans: 1 a 1\n", "initial"),
    ("alphabet: a\nstates: 1\ninitial: 1\npriority: 1 2\ntrans: 1 a 1\n", "priorities"),
    ("alphabet: a\nstates: 1\ninitial: 1\npriority: 1\ntrans: 1 c 1\n", "not in alphabet"),
    ("alphabet: a\nstates: 1\ninitial: 1\npriority: 1\nacceptance: max-odd\ntrans: 1 a 1\n", "min-even"),
])
def test_parse_errors(text, msg):
    with pytest.raises(DPAError, match=msg):
        parse_dpa(text)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=200, deadline=None)
def test_lasso_matches_brute_force(seed):
    rng = random.Random(seed)
    dpa = random_dpa(rng)
    prefix, cycle = random_lasso(rng)
    assert accepts_lasso(dpa, prefix, cycle) == brute_force_accepts(dpa, prefix, cycle)


def test_priority_targets():
    dpa = fig5_dpa()
    t = priority_targets(dpa, [1, 3])
    assert t.vf_states == (1, 2) and t.inf_states == ()
    with pytest.raises(DPAError):
        priority_targets(dpa, [2])
    with pytest.raises(DPAError):
        priority_targets(dpa, [1], even_pick=4)


def test_product_step():
    sys, sets = make_hopf("hopf_dpa")
    prod = build_product(sys, fig5_dpa(), sets["labeling"])
    (x, q) = prod.initial_state((0.9, 0.1))
    x2, q2 = prod.step((x, q), (0.0,))
    assert q2 == 2  # read "b" in q1
