"""Attack model: measures, validation, resolution, generation, worst-case bounds."""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dosquant import dos
from dosquant.dos import (
    DoSBudget,
    DoSSequence,
    FeasibilityError,
    duration_measure,
    frequency_count,
    generate,
    lemma1_bounds,
    resolve_transmissions,
    sigma,
    validate,
)

EMPTY = DoSSequence((), horizon=10.0)


def seq(*intervals, horizon=10.0):
    return DoSSequence(tuple(intervals), horizon=horizon)


# ---------------------------------------------------------------------------
# structure


def test_intervals_must_be_ordered_and_disjoint():
    with pytest.raises(ValueError):
        seq((2.0, 0.5), (1.0, 0.5))
    with pytest.raises(ValueError):
        seq((1.0, 1.0), (1.5, 0.5))
    with pytest.raises(ValueError):
        seq((1.0, -0.1))
    with pytest.raises(ValueError):
        seq((-1.0, 0.5))
    with pytest.raises(ValueError):
        seq((11.0, 0.5), horizon=10.0)


def test_pulse_then_interval_at_shared_point_ok():
    # an interval may start exactly where the previous one ended
    s = seq((1.0, 0.5), (1.5, 0.25))
    assert s.in_dos(1.5)


# ---------------------------------------------------------------------------
# duration / frequency


def test_duration_empty():
    assert duration_measure(EMPTY, 0.0, 5.0) == 0.0


def test_duration_single_interval_inside_window():
    assert duration_measure(seq((1.0, 0.5)), 0.0, 2.0) == pytest.approx(0.5)


def test_duration_partial_overlaps():
    s = seq((1.0, 0.5), (2.0, 0.5))
    assert duration_measure(s, 1.25, 2.25) == pytest.approx(0.5)  # 0.25 + 0.25


def test_duration_rejects_reversed_window():
    with pytest.raises(ValueError):
        duration_measure(EMPTY, 2.0, 1.0)


def test_frequency_empty():
    assert frequency_count(EMPTY, 0.0, 3.0) == 0


def test_frequency_counts_onsets_in_closed_window():
    s = seq((1.0, 0.5), (2.0, 0.5))
    assert frequency_count(s, 0.0, 3.0) == 2
    assert frequency_count(s, 1.5, 2.0) == 1
    assert frequency_count(s, 1.0, 2.0) == 2  # both endpoints included


@st.composite
def well_formed(draw):
    n = draw(st.integers(0, 6))
    gaps = draw(st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n))
    lens = draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n))
    intervals = []
    t = 0.0
    for g, ln in zip(gaps, lens):
        t += g
        intervals.append((t, ln))
        t += ln
    return DoSSequence(tuple(intervals), horizon=t + 1.0)


@given(well_formed(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_duration_additive_over_adjacent_windows(s, f1, f2):
    a = f1 * s.horizon
    c = a + f2 * (s.horizon - a)
    b = 0.5 * (a + c)
    whole = duration_measure(s, a, c)
    split = duration_measure(s, a, b) + duration_measure(s, b, c)
    assert split == pytest.approx(whole, abs=1e-12)


@given(well_formed(), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_frequency_adjacent_windows_within_one_of_total(s, f1, f2):
    # closed windows may double-count a shared-endpoint onset
    a = f1 * s.horizon
    c = a + f2 * (s.horizon - a)
    b = 0.5 * (a + c)
    whole = frequency_count(s, a, c)
    split = frequency_count(s, a, b) + frequency_count(s, b, c)
    assert whole <= split <= whole + 1


# ---------------------------------------------------------------------------
# validation


def test_validate_empty_sequence_any_budget():
    assert validate(EMPTY, DoSBudget(0.0, 0.0, 2.0, 1.0)).valid


def test_validate_pulse_with_zero_eta_fails_frequency():
    rep = validate(seq((0.0, 0.0)), DoSBudget(0.0, 0.0, 2.0, 1.0))
    assert not rep.valid
    assert any(v.kind == "frequency" and v.tau == v.t == 0.0 for v in rep.violations)


def test_validate_flags_duration_violation():
    rep = validate(seq((0.0, 3.0)), DoSBudget(0.5, 2.0, 2.0, 0.5))
    assert not rep.valid
    assert any(v.kind == "duration" for v in rep.violations)


def test_generated_sequences_validate_across_seeds(paper_budget):
    for s in range(40):
        out = generate(paper_budget, 0.1, 10.0, seed=s)
        assert validate(out, paper_budget).valid


# ---------------------------------------------------------------------------
# resolution


def test_resolve_no_attack_all_attempts_succeed():
    log = resolve_transmissions(EMPTY, 0.1, 1.0)
    assert len(log.attempts) == 11
    assert log.successes == log.attempts
    assert log.successes[0] == 0.0


def test_resolve_interval_blocks_grid_points_left_closed():
    log = resolve_transmissions(seq((0.0, 0.25)), 0.1, 1.0)
    assert log.successes[0] == pytest.approx(0.3)
    assert len(log.attempts) - len(log.successes) == 3  # 0.0, 0.1, 0.2


def test_resolve_interval_end_is_open():
    # an attempt landing exactly at h + tau goes through
    log = resolve_transmissions(seq((0.1, 0.1)), 0.1, 0.5)
    assert 0.1 not in log.successes
    assert any(abs(t - 0.2) < 1e-12 for t in log.successes)


def test_resolve_pulse_blocks_exactly_its_instant():
    log = resolve_transmissions(seq((0.2, 0.0)), 0.1, 1.0)
    blocked = set(log.attempts) - set(log.successes)
    assert blocked == {0.2}


# ---------------------------------------------------------------------------
# generation


def test_generate_zero_budget_yields_empty():
    out = generate(DoSBudget(0.0, 0.0, 2.0, 1.0), 0.1, 10.0, seed=5)
    assert out.intervals == ()


def test_generate_eta_below_one_yields_empty():
    out = generate(DoSBudget(1.0, 0.9, 2.0, 1.0), 0.1, 10.0, seed=5)
    assert out.intervals == ()


def test_generate_random_blocks_an_attempt(paper_budget):
    out = generate(paper_budget, 0.1, 10.0, seed=1)
    assert validate(out, paper_budget).valid
    log = resolve_transmissions(out, 0.1, 10.0)
    assert len(log.successes) < len(log.attempts)


def test_generate_worst_case_respects_first_success_bound(paper_budget):
    out = generate(paper_budget, 0.1, 10.0, style="worst-case")
    assert validate(out, paper_budget).valid
    log = resolve_transmissions(out, 0.1, 10.0)
    z0_bound, _ = lemma1_bounds(paper_budget, 0.1)
    assert log.successes[0] <= z0_bound


def test_generate_worst_case_blocks_more_than_random(paper_budget):
    wc = generate(paper_budget, 0.1, 10.0, style="worst-case")
    wc_blocked = 101 - len(resolve_transmissions(wc, 0.1, 10.0).successes)
    rnd_blocked = max(
        101 - len(resolve_transmissions(generate(paper_budget, 0.1, 10.0, seed=s),
                                        0.1, 10.0).successes)
        for s in range(10))
    assert wc_blocked >= rnd_blocked


def test_generate_worst_case_infeasible_sigma():
    with pytest.raises(FeasibilityError):
        generate(DoSBudget(0.3, 1.3, 2.0, 0.2), 0.1, 10.0, style="worst-case")


def test_generate_unknown_style():
    with pytest.raises(ValueError):
        generate(DoSBudget(0.3, 1.3, 2.222, 0.714), 0.1, 1.0, style="adaptive")


# ---------------------------------------------------------------------------
# sigma / worst-case transmission bounds


def test_sigma_reported_value(paper_budget):
    assert sigma(paper_budget, 0.1) == pytest.approx(0.41, abs=5e-3)


def test_sigma_attack_free_limit():
    s = sigma(DoSBudget(0.0, 0.0, 1e12, 1e12), 0.1)
    assert s == pytest.approx(1.0, abs=1e-11)


def test_sigma_exact_boundary():
    assert sigma(DoSBudget(0.0, 0.0, 2.0, 0.2), 0.1) == 0.0


def test_lemma1_bounds_reported_value(paper_budget):
    z0b, _ = lemma1_bounds(paper_budget, 0.1)
    assert z0b == pytest.approx(1.0489, abs=1e-3)


def test_lemma1_bounds_zero_offsets():
    z0b, _ = lemma1_bounds(DoSBudget(0.0, 0.0, 2.222, 0.714), 0.1)
    assert z0b == 0.0


def test_lemma1_bounds_ell_zero_matches_base(paper_budget):
    z0b, off0 = lemma1_bounds(paper_budget, 0.1, ell=0)
    assert off0 == z0b


def test_lemma1_bounds_infeasible():
    with pytest.raises(FeasibilityError):
        lemma1_bounds(DoSBudget(0.3, 1.3, 2.0, 0.2), 0.1)


def test_lemma1_end_to_end_sample(paper_budget):
    s = sigma(paper_budget, 0.1)
    base = (paper_budget.kappa + paper_budget.eta * 0.1) / s
    for sd in range(20):
        out = generate(paper_budget, 0.1, 10.0, seed=sd)
        log = resolve_transmissions(out, 0.1, 10.0)
        z = np.array(log.successes)
        assert z[0] <= base + 1e-12
        offs = z - z[0]
        allowed = (np.arange(len(z)) * 0.1 + 0.43) / s
        assert np.all(offs <= allowed + 1e-12)


# ---------------------------------------------------------------------------
# CSV round trip


def test_csv_round_trip(tmp_path, paper_budget):
    out = generate(paper_budget, 0.1, 10.0, seed=3)
    path = tmp_path / "attack.csv"
    out.to_csv(path)
    back = DoSSequence.from_csv(path, horizon=10.0)
    assert back.intervals == out.intervals
    assert back.horizon == out.horizon


def test_csv_header_and_default_horizon(tmp_path):
    path = tmp_path / "attack.csv"
    path.write_text("h,tau\n1.0,0.5\n")
    s = DoSSequence.from_csv(path)
    assert s.intervals == ((1.0, 0.5),)
    assert s.horizon == 1.5


def test_csv_malformed_row_reports_line(tmp_path):
    path = tmp_path / "attack.csv"
    path.write_text("h,tau\n1.0,0.5\nnope,1\n")
    with pytest.raises(ValueError) as exc:
        DoSSequence.from_csv(path)
    assert "row 3" in str(exc.value)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "attack.csv"
    path.write_text("start,len\n1.0,0.5\n")
    with pytest.raises(ValueError) as exc:
        DoSSequence.from_csv(path)
    assert "row 1" in str(exc.value)
