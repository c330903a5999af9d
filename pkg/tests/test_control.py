import csv
import math

import numpy as np
import pytest

from c3cert.certgen import ProblemSpec, t_name
from c3cert.certificate import Certificate
from c3cert.control import (ControllerGap, Trajectory, empirical_visits, extract_controller, monitor_dpa,
                            simulate)
from c3cert.fixtures import load_table
from c3cert.omega import fig5_dpa
from c3cert.polyalg import parse
from c3cert.sysmodel import FiniteInputSet, discretize_inputs, make_hopf


@pytest.fixture(scope="module")
def hopf():
    sys, sets = make_hopf()
    spec = ProblemSpec(sys, discretize_inputs(sys.U, 8), "fin_inf", vf_partitions=(sets["X_VF"],),
                       x_inf=sets["X_INF"])
    return sys, sets, spec


def test_existence_input_at_reference_state(hopf):
    _, _, spec = hopf
    ctrl = extract_controller(load_table(3), spec)
    m = ctrl.margins((0.9, 0.0))
    assert m.max() >= 0
    u, best = ctrl.act((0.9, 0.0))
    assert best == m.max() and u == spec.U_d.inputs[int(np.argmax(m))]


def test_singleton_inputs_give_constant_controller(hopf):
    sys, sets, _ = hopf
    spec = ProblemSpec(sys, FiniteInputSet(((-3.0,),)), "fin_inf", vf_partitions=(sets["X_VF"],),
                       x_inf=sets["X_INF"])
    ctrl = extract_controller(load_table(3), spec)
    tr = simulate(ctrl, (0.9, 0.0), 50)
    assert {u for u in tr.inputs} == {(-3.0,)}


def test_closed_loop_visits(hopf):
    sys, sets, spec = hopf
    ctrl = extract_controller(load_table(3), spec)
    tr = simulate(ctrl, (0.9, 0.0), 500)
    assert tr.status == "ok" and tr.steps == 500
    assert tr.first_inf_step is not None and tr.last_vf_step < 500
    # the controller's own constraint holds along the run
    assert min(tr.margins) >= -ctrl.delta
    st = empirical_visits(tr, sets["X_VF"], sets["X_INF"], 0.5)
    assert st.vf_tail == 0 and st.inf_gap_tail == 1


def test_simulate_preconditions(hopf):
    _, _, spec = hopf
    ctrl = extract_controller(load_table(3), spec)
    assert simulate(ctrl, (0.9, 0.0), 1).steps == 1
    with pytest.raises(ValueError):
        simulate(ctrl, (0.0, 0.0), 10)
    with pytest.raises(ValueError):
        simulate(ctrl, (0.9, 0.0), 0)


def test_gap_truncates(hopf):
    _, _, spec = hopf
    cert = load_table(3)
    cert = Certificate({**cert.polys, "T": parse("-1")}, cert.bases)
    ctrl = extract_controller(cert, spec)
    with pytest.raises(ControllerGap):
        ctrl.act((0.9, 0.0))
    tr = simulate(ctrl, (0.9, 0.0), 20)
    assert tr.truncated and tr.status == "gap" and tr.steps == 0
    assert ctrl.gap_report(n=50)["gaps"] == 50


def test_counter_memory_saturates(hopf):
    sys, sets, _ = hopf
    spec = ProblemSpec(sys, discretize_inputs(sys.U, 2), "counter", x_inf=sets["X_INF"], j_max=1,
                       share_counters=False)
    polys = {t_name(None, None, j, l): parse("1") for j in range(3) for l in range(j, 3)}
    ctrl = extract_controller(Certificate(polys, {}), spec)
    assert ctrl.mode == "counter"
    q, j = ctrl.initial_memory((0.9, 0.0))
    assert j == 0
    q, j = ctrl.update_memory((0.1, 0.1), q, j)
    assert j == 1
    q, j = ctrl.update_memory((0.1, 0.1), q, j)
    assert j == 1  # saturated at j_max
    q, j = ctrl.update_memory((0.9, 0.0), q, 0)
    assert j == 0  # outside X_INF


def test_csv_columns(tmp_path, hopf):
    _, _, spec = hopf
    tr = simulate(extract_controller(load_table(3), spec), (0.9, 0.0), 5)
    tr.to_csv(tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert list(rows[0]) == ["step", "x1", "x2", "u1", "label", "q", "j", "margin"]
    assert len(rows) == 6


def _traj(states, labels):
    n = len(states)
    return Trajectory(states, [(0.0,)] * (n - 1), [0.0] * (n - 1), labels, [None] * n, [None] * n)


A, B = (0.0, 0.3), (0.9, 0.3)


def test_monitor_accepts_eventually_a():
    v = monitor_dpa(_traj([B, A, A, A, A], ["b", "a", "a", "a", "a"]), fig5_dpa())
    assert v.run[:4] == [1, 2, 3, 3]
    assert v.verdict == "accept"


def test_monitor_rejects_alternation():
    v = monitor_dpa(_traj([A, B] * 4, ["a", "b"] * 4), fig5_dpa())
    assert v.verdict == "reject"


def test_monitor_inconclusive():
    states = [(0.01 * k, 0.3) for k in range(6)]
    assert monitor_dpa(_traj(states, ["a"] * 6), fig5_dpa()).verdict == "inconclusive"


def test_empirical_visit_examples():
    # inside X_INF for good after step 40
    sys, sets = make_hopf()
    states = [(0.9, 0.5)] * 40 + [(0.0, 0.0)] * 461
    st = empirical_visits(_traj(states, [None] * len(states)), sets["X_VF"], sets["X_INF"], 0.5)
    assert st.vf_tail == 0 and st.inf_gap_tail == 1 and st.finitely_often_proxy
    allvf = [(0.9, 0.5)] * 20
    st = empirical_visits(_traj(allvf, [None] * 20), sets["X_VF"], sets["X_INF"], 0.5)
    assert not st.finitely_often_proxy
    with pytest.raises(ValueError):
        empirical_visits(_traj(allvf, [None] * 20), tail_fraction=1.0)


def test_monitor_ignores_states_past_X():
    # a lasso inside X survives a trailing unlabeled state; no labels at all is inconclusive
    v = monitor_dpa(_traj([B, A, A, A, (0.0, -0.1)], ["b", "a", "a", "a", None]), fig5_dpa())
    assert v.verdict == "accept" and v.lasso == (2, 3)
    assert monitor_dpa(_traj([(0.0, -0.1)], [None]), fig5_dpa()).verdict == "inconclusive"


def test_upper_half_plane_is_left():
    # the Hopf rotation carries every state through x2 = 0 whatever the input
    sys, sets = make_hopf("hopf_dpa")
    spec = ProblemSpec(sys, FiniteInputSet(((-3.0,),)), "finite", vf_partitions=(sets["X_VF"],))
    ctrl = extract_controller(load_table(1), spec)
    tr = simulate(ctrl, (0.9, 0.1), 100)
    assert tr.status == "left-X" and tr.left_X_step == tr.steps < 40
    tr = simulate(ctrl, (0.9, 0.1), 100, beyond_X=True)
    assert tr.steps == 100 and tr.left_X_step < 40
    assert all(math.isnan(m) for m in tr.margins[tr.left_X_step:])
