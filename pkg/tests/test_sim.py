"""Closed-loop engine: determinism, containment, audits, failure diagnosis."""
import math
from dataclasses import replace

import numpy as np
import pytest

from dosquant import bounds, catalog, dos, sim
from dosquant.dynamics import LyapunovCertificate, PlantModel
from dosquant.sim import AttackSpec, SimConfig, audit, run, sweep_R

EMPTY_ATTACK = dos.DoSSequence((), horizon=5.0)


def paper_config(paper_system, paper_budget, *, R=2, horizon=5.0, seed=1,
                 attack=None, x0=(0.5,), X=0.65):
    model, cert = paper_system
    atk = attack if attack is not None else AttackSpec("random", seed)
    return SimConfig(model, cert, paper_budget, atk, 0.1, R, X, x0, horizon, 0.001)


# ---------------------------------------------------------------------------
# config validation


def test_config_rejects_initial_state_outside_radius(paper_system, paper_budget):
    with pytest.raises(ValueError):
        paper_config(paper_system, paper_budget, x0=(0.7,))


def test_config_requires_step_dividing_period(paper_system, paper_budget):
    model, cert = paper_system
    with pytest.raises(ValueError):
        SimConfig(model, cert, paper_budget, AttackSpec(), 0.1, 2, 0.65, (0.5,),
                  5.0, 0.0003)


# ---------------------------------------------------------------------------
# basic runs


def test_equilibrium_stays_exactly_at_origin(paper_system, paper_budget, paper_params):
    cfg = paper_config(paper_system, paper_budget, x0=(0.0,), X=0.0, horizon=2.0)
    trace = run(cfg, params=paper_params)
    assert trace.status == "ok"
    assert np.all(trace.x == 0.0)
    assert np.all(trace.xhat == 0.0)


def test_runs_are_bitwise_deterministic(paper_system, paper_budget, paper_params):
    cfg = paper_config(paper_system, paper_budget, horizon=3.0)
    a = run(cfg, params=paper_params)
    b = run(cfg, params=paper_params)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.xhat, b.xhat)
    assert np.array_equal(a.L, b.L)
    assert a.events == b.events
    assert a.successes == b.successes


def test_scalar_and_generic_paths_agree_exactly(paper_system, paper_budget, paper_params):
    model, cert = paper_system
    cfg = paper_config(paper_system, paper_budget, R=3, horizon=2.0, seed=3)
    cfg_vec = replace(cfg, model=replace(model, scalar_ok=False),
                      cert=replace(cert, scalar_ok=False))
    a = run(cfg, params=paper_params)
    b = run(cfg_vec, params=paper_params)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.xhat, b.xhat)
    assert np.array_equal(a.L, b.L)


def test_trace_shape_and_event_alignment(paper_system, paper_budget, paper_params):
    cfg = paper_config(paper_system, paper_budget, horizon=2.0)
    trace = run(cfg, params=paper_params)
    assert len(trace.t) == 2001
    assert np.all(np.diff(trace.t) > 0)
    for j, ev in enumerate(trace.events):
        if ev:
            assert j % 100 == 0  # events only on the sampling grid
    assert len(trace.attempts) == 21
    assert trace.theta is not None and trace.theta >= trace.z0


def test_stabilizes_at_two_bits_with_random_attack(paper_system, paper_budget,
                                                   paper_params):
    cfg = paper_config(paper_system, paper_budget, R=2, horizon=20.0, seed=1)
    trace = run(cfg, params=paper_params)
    assert trace.status == "ok"
    assert trace.final_state_inf() <= 1e-2
    dL = np.diff(trace.L)
    assert np.any(dL > 0) and np.any(dL < 0)  # growth then contraction sawtooth


def test_no_attack_high_rate_containment_and_contraction(paper_system, paper_budget,
                                                         paper_params):
    cfg = paper_config(paper_system, paper_budget, R=16,
                       attack=EMPTY_ATTACK, horizon=5.0)
    trace = run(cfg, params=paper_params)
    assert trace.status == "ok"
    rep = audit(trace, paper_params, R=16)
    assert rep.clauses["i_containment"].passed
    at_succ = [trace.L[j] for j, ev in enumerate(trace.events)
               if ev.startswith("success")]
    assert all(a > b for a, b in zip(at_succ, at_succ[1:]))


def test_contracting_linear_plant_zero_dos():
    model, cert = catalog.get_system("linear-contracting")
    budget = dos.DoSBudget(0.0, 0.0, 1e12, 1e12)
    params = bounds.derive(model, cert, budget, 0.1, 1.0)
    cfg = SimConfig(model, cert, budget, dos.DoSSequence((), 5.0), 0.1, 2,
                    1.0, (0.9,), 5.0, 0.001)
    trace = run(cfg, params=params)
    rep = audit(trace, params)
    assert rep.clauses["i_containment"].passed
    assert rep.clauses["i_containment"].worst_margin >= 0


# ---------------------------------------------------------------------------
# bookkeeping identity


def test_range_contraction_identity_along_successes(paper_system, paper_budget,
                                                    paper_params):
    cfg = paper_config(paper_system, paper_budget, R=2, horizon=10.0, seed=4)
    trace = run(cfg, params=paper_params)
    assert trace.status == "ok" and len(trace.successes) > 3
    F, R = paper_params.F, 2
    z = np.array(trace.successes)
    j_succ = [j for j, ev in enumerate(trace.events) if ev.startswith("success")]
    L_at = trace.L[j_succ]
    L0_minus = L_at[0] * 2 ** R
    for ell in range(len(z)):
        expected = math.exp(F * (z[ell] - z[0])) / 2 ** (R * (ell + 1)) * L0_minus
        if expected < 1e-280:
            break
        assert L_at[ell] == pytest.approx(expected, rel=1e-9)


# ---------------------------------------------------------------------------
# audits


def test_audit_all_clauses_pass_at_high_rate(paper_system, paper_budget, paper_params):
    for seed in range(5):
        cfg = paper_config(paper_system, paper_budget, R=16, horizon=5.0, seed=seed)
        trace = run(cfg, params=paper_params)
        rep = audit(trace, paper_params, R=16)
        assert rep.all_passed, {k: c.to_dict() for k, c in rep.clauses.items()
                                if not c.passed}


def test_audit_low_rate_flags_loose_envelopes(paper_system, paper_budget, paper_params):
    cfg = paper_config(paper_system, paper_budget, R=2, horizon=10.0, seed=2)
    trace = run(cfg, params=paper_params)
    rep = audit(trace, paper_params, R=2)
    assert rep.clauses["i_containment"].passed
    assert "does not contract" in rep.clauses["iii_success_envelope"].detail
    assert "does not decay" in rep.clauses["iv_time_envelope"].detail


BLACKOUT = dos.DoSSequence(((0.05, 6.0),), 10.0)  # one long mid-run outage


def test_audit_refuses_incomplete_trace(paper_system, paper_budget, paper_params):
    bad = replace(paper_params, F=0.0)  # range never grows between successes
    cfg = paper_config(paper_system, paper_budget, R=1, horizon=10.0,
                       attack=BLACKOUT)
    trace = run(cfg, params=bad)
    assert trace.status == "overflow"
    with pytest.raises(ValueError):
        audit(trace, bad)


def test_audit_report_serializes(paper_system, paper_budget, paper_params, tmp_path):
    cfg = paper_config(paper_system, paper_budget, horizon=2.0)
    trace = run(cfg, params=paper_params)
    rep = audit(trace, paper_params)
    sim.audit_to_json(rep, tmp_path / "audit.json")
    import json
    data = json.loads((tmp_path / "audit.json").read_text())
    assert set(data) == {"i_containment", "ii_pre_first_success",
                        "iii_success_envelope", "iv_time_envelope",
                        "v_level_set", "vi_success_times"}
    for clause in data.values():
        assert set(clause) == {"passed", "violations", "worst_margin", "detail"}


# ---------------------------------------------------------------------------
# failure diagnosis


def test_overflow_is_diagnosed_not_crashed(paper_system, paper_budget, paper_params):
    # a range that never grows cannot keep covering the error through a
    # long outage, so the next encode must overflow
    bad = replace(paper_params, F=0.0)
    cfg = paper_config(paper_system, paper_budget, R=1, horizon=10.0,
                       attack=BLACKOUT)
    trace = run(cfg, params=bad)
    assert trace.status == "overflow"
    assert trace.fault_time is not None
    assert trace.events[-1] == "overflow"
    assert "quantization region" in trace.fault_detail


def test_divergence_is_diagnosed(paper_params):
    # cubic blowup plant under a non-stabilizing law; the fine quantizer
    # tracks the state closely so the escape is seen before any overflow
    blowup = PlantModel(n=1, m=1, f=lambda x, u: x * x * x + u, scalar_ok=True)
    _, cert = catalog.get_system("paper-example")
    budget = dos.DoSBudget(0.0, 0.0, 1e12, 1e12)
    cfg = SimConfig(blowup, cert, budget, dos.DoSSequence((), 5.0), 0.1, 16,
                    2.0, (1.5,), 5.0, 0.001)
    trace = run(cfg, params=paper_params)
    assert trace.status == "divergence"
    assert trace.fault_time is not None
    assert len(trace.t) < 5001


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_minimal_stabilizing_rate(paper_system, paper_budget, paper_params):
    cfg = paper_config(paper_system, paper_budget, horizon=10.0, seed=1)
    res = sweep_R(cfg, range(1, 5), params=paper_params)
    assert res.R_thm == 14
    assert res.minimal_stabilizing() is not None
    assert res.minimal_stabilizing() <= 2
    by_R = {r.R: r for r in res.rows}
    assert not by_R[1].stabilized


def test_sweep_worst_case_needs_at_least_random_rate(paper_system, paper_budget,
                                                     paper_params):
    cfg_rnd = paper_config(paper_system, paper_budget, horizon=10.0, seed=1)
    cfg_wc = replace(cfg_rnd, attack=AttackSpec("worst-case", 1))
    rnd = sweep_R(cfg_rnd, range(1, 6), params=paper_params).minimal_stabilizing()
    wc = sweep_R(cfg_wc, range(1, 6), params=paper_params).minimal_stabilizing()
    assert wc is not None and rnd is not None
    assert wc >= rnd


def test_sweep_contracting_plant_every_rate_works():
    model, cert = catalog.get_system("linear-contracting")
    budget = dos.DoSBudget(0.0, 0.0, 1e12, 1e12)
    params = bounds.derive(model, cert, budget, 0.1, 1.0)
    cfg = SimConfig(model, cert, budget, dos.DoSSequence((), 10.0), 0.1, 1,
                    1.0, (0.9,), 10.0, 0.001)
    res = sweep_R(cfg, range(1, 4), params=params)
    assert all(r.stabilized for r in res.rows)


def test_sweep_rejects_empty_range(paper_system, paper_budget, paper_params):
    cfg = paper_config(paper_system, paper_budget)
    with pytest.raises(ValueError):
        sweep_R(cfg, [], params=paper_params)


# ---------------------------------------------------------------------------
# trace serialization


def test_trace_csv_layout(paper_system, paper_budget, paper_params, tmp_path):
    cfg = paper_config(paper_system, paper_budget, horizon=1.0)
    trace = run(cfg, params=paper_params)
    path = tmp_path / "trace.csv"
    sim.trace_to_csv(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x_1,xhat_1,L,u_1,event"
    assert len(lines) == len(trace.t) + 1
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    events = {ln.split(",")[-1] for ln in lines[1:]}
    assert events <= {"", "attempt-fail"} | {
        ev for ev in trace.events if ev.startswith("success")}
    # full precision round trip
    assert float(lines[2].split(",")[1]) == trace.x[1, 0]
