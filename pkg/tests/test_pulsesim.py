import numpy as np
import pytest

from conftest import ideal_scenario
from mdiqkd import backend, pulsesim
from mdiqkd.forward import coincidence_rule, full_gain_table
from mdiqkd.model import Basis, BsmOutcome, Intensity

S, D, V = Intensity


def _counts(cell, sent, psi, err):
    c = np.zeros((2, 3, 3, 3), dtype=np.int64)
    c[cell] = (sent, psi, err)
    return c


def test_rounds_must_be_positive(ideal):
    with pytest.raises(ValueError):
        pulsesim.simulate_batch(ideal, 0, seed=1)


def test_no_light_no_detection():
    sc = ideal_scenario(mu=(1e-300, 5e-301, 0.0))
    summary = pulsesim.simulate_batch(sc, 200_000, seed=3)
    assert summary.psi_minus.sum() == 0


def test_deterministic_and_thread_independent(lab):
    a = pulsesim.simulate_batch(lab, 600_000, seed=5, threads=1)
    b = pulsesim.simulate_batch(lab, 600_000, seed=5, threads=3)
    assert a == b
    c = pulsesim.simulate_batch(lab, 600_000, seed=6, threads=1)
    assert a != c


def test_backends_agree(lab):
    py = backend.get("python")
    try:
        cy = backend.get("cython")
    except ImportError:
        pytest.skip("compiled kernels not built")
    a = pulsesim.simulate_batch(lab.with_loss(5, 0), 300_000, seed=9, kernels=py)
    b = pulsesim.simulate_batch(lab.with_loss(5, 0), 300_000, seed=9, kernels=cy)
    assert a == b


def test_merge_equals_single_run(lab):
    sc = lab.with_loss(8, 0)
    first = pulsesim.simulate_batch(sc, 500_000, seed=2, start=0)
    second = pulsesim.simulate_batch(sc, 500_000, seed=2, start=500_000)
    whole = pulsesim.simulate_batch(sc, 1_000_000, seed=2)
    assert first.merge(second) == whole


def test_sent_counts_multinomial(lab):
    n = 1_000_000
    summary = pulsesim.simulate_batch(lab, n, seed=4)
    expect = pulsesim.expected_sent(lab, n)
    p = expect / n
    sd = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(summary.sent - expect) < 5 * sd)


def test_simulate_round_replays_batch(lab):
    sc = lab.with_loss(0, 0)
    summary = pulsesim.simulate_batch(sc, 2000, seed=8)
    psi = 0
    for r in range(2000):
        rec = pulsesim.simulate_round(sc, 8, r)
        again = pulsesim.simulate_round(sc, 8, r)
        assert rec == again
        if rec.alice_choice.basis == rec.bob_choice.basis and rec.outcome is BsmOutcome.PSI_MINUS:
            psi += 1
    assert psi == summary.psi_minus.sum()


def test_verify_round_uses_coincidence_rule():
    rec = pulsesim.RoundRecord(0, None, None, BsmOutcome.PSI_MINUS)
    assert pulsesim.verify_round(rec, [[1, 0], [0, 1]])
    assert not pulsesim.verify_round(rec, [[1, 0], [1, 0]])
    assert coincidence_rule([[0, 0], [0, 0]]) is BsmOutcome.NO_DETECTION


def test_empirical_table_examples():
    cell = (Basis.X, S, S)
    summary = pulsesim.SimSummary(2_000_000, _counts(cell, 1_000_000, 494, 146))
    emp = pulsesim.empirical_gain_table(summary)
    assert emp.table.Q[cell] == pytest.approx(4.94e-4)
    assert emp.table.E[cell] == pytest.approx(0.2955, abs=5e-5)
    assert emp.gain_stderr[cell] == pytest.approx(np.sqrt(4.94e-4 * (1 - 4.94e-4) / 1e6))
    assert emp.empty.sum() == 17

    low = pulsesim.SimSummary(100, _counts((Basis.Z, D, D), 100, 0, 0))
    emp = pulsesim.empirical_gain_table(low)
    assert emp.table.Q[Basis.Z, D, D] == 0 and emp.table.E[Basis.Z, D, D] == 0.5
    assert emp.low_statistics[Basis.Z, D, D]
    with pytest.raises(ValueError):
        pulsesim.empirical_gain_table(low, strict=True)


def test_summary_rejects_inconsistent_counts():
    with pytest.raises(ValueError):
        pulsesim.SimSummary(10, _counts((Basis.Z, S, S), 5, 6, 0))
    with pytest.raises(ValueError):
        pulsesim.SimSummary(10, _counts((Basis.Z, S, S), 5, 2, 3))


def test_large_round_indices_allowed(ideal):
    s = pulsesim.simulate_batch(ideal, 1000, seed=1, start=2**62)
    assert s.rounds == 1000
    with pytest.raises(ValueError):
        pulsesim.simulate_batch(ideal, 10, seed=1, start=2**63 - 5)


def test_mc_matches_forward_model_at_1e6(lab):
    sc = lab.with_loss(10, 1.5)
    summary = pulsesim.simulate_batch(sc, 1_000_000, seed=21)
    gz, ez = pulsesim.oracle_deviations(summary, full_gain_table(sc))
    assert np.sum(np.abs(gz) > 4) + np.sum(np.abs(ez) > 4) <= 1
