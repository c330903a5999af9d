import pytest

from c3cert.semialg import SemiAlgebraicSet
from c3cert.sysmodel import (CounterSystem, UnlabeledStateError, chain_inf_set, chain_trace, discretize_inputs,
                             hopf_dynamics, label, make_chain_system, make_hopf, step)


def test_hopf_step_matches_formula():
    sys, _ = make_hopf("hopf")
    x1, x2, u, T = 0.9, 0.1, -1.0, 0.1
    r2 = x1 * x1 + x2 * x2
    nx = step(sys, (x1, x2), u)
    assert nx[0] == pytest.approx(x1 + T * (u * x1 - x2 - x1 * r2))
    assert nx[1] == pytest.approx(x2 + T * (x1 + u * x2 - x2 * r2))
    printed, _ = make_hopf("hopf", form="printed")
    assert step(printed, (x1, x2), u)[1] == pytest.approx(x2 + T * (x1 - u * x2 - x2 * r2))


def test_hopf_forms_rejected():
    with pytest.raises(KeyError):
        hopf_dynamics(form="other")
    with pytest.raises(KeyError):
        make_hopf("nope")


def test_initial_set_inside():
    for v in ("hopf", "hopf_dpa"):
        sys, _ = make_hopf(v)
        assert sys.check_initial_inside()


def test_discretize_inputs():
    sys, _ = make_hopf()
    U = discretize_inputs(sys.U, 8)
    vals = [u[0] for u in U]
    assert len(U) == 8 and vals[0] == -3.0 and vals[-1] == 0.5
    assert len(discretize_inputs(sys.U, 1)) == 1


def test_labeling_and_unlabeled():
    sys, sets = make_hopf("hopf_dpa")
    lm = sets["labeling"]
    assert label(lm, (0.0, 0.3)) == "a"
    assert label(lm, (0.9, 0.3)) == "b"
    with pytest.raises(UnlabeledStateError):
        label(lm, (0.0, -0.5))


def test_counter_saturates():
    sys, sets = make_hopf()
    cs = CounterSystem(sys, sets["X_INF"], j_max=1)
    state = ((0.1, 0.1), 0)
    js = []
    for _ in range(4):
        state = cs.step(state, (0.0,))
        js.append(state[1])
    assert js == sorted(js) and max(js) == 2


def test_chain_counter_sequence():
    # the printed program: count runs 0,0,1,1,1,2 ... with b at count == 0
    sys = make_chain_system()
    tr = chain_trace(sys, 12)
    inf = chain_inf_set()
    visits = [i for i, x in enumerate(tr) if inf.contains(x)]
    assert visits[:3] == [1, 4, 8]
    counter, seq = 0, []
    for x in tr[:6]:
        seq.append(counter)
        if inf.contains(x):
            counter += 1
    assert seq == [0, 0, 1, 1, 1, 2]


def test_chain_is_simulation_only():
    sys = make_chain_system()
    assert not sys.polynomial
    with pytest.raises(TypeError):
        sys.successor_polys((0.0,))
    with pytest.raises(ValueError):
        make_chain_system(0)


def test_box_validation():
    with pytest.raises(ValueError):
        SemiAlgebraicSet.box(["x1"], [(1, 0)])
