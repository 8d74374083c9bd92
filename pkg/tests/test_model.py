import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdiqkd.model import (
    Basis,
    GainTable,
    Intensity,
    QubitSpec,
    SourceConfig,
    binary_entropy,
    db_to_transmittance,
    poisson_pn,
)


def h_ref(p):
    p = mpmath.mpf(p)
    if p in (0, 1):
        return mpmath.mpf(0)
    return -p * mpmath.log(p, 2) - (1 - p) * mpmath.log(1 - p, 2)


@pytest.mark.parametrize("p", [0.0, 0.5, 0.02, 1e-9, 0.3, 0.999])
def test_binary_entropy_matches_high_precision(p):
    assert binary_entropy(p) == pytest.approx(float(h_ref(p)), rel=1e-14, abs=1e-300)


def test_binary_entropy_examples():
    assert binary_entropy(0) == 0
    assert binary_entropy(0.5) == 1
    assert binary_entropy(0.02) == pytest.approx(0.14144, abs=5e-6)


def test_binary_entropy_symmetric_and_concave():
    grid = np.linspace(0, 1, 2001)
    h = np.array([binary_entropy(p) for p in grid])
    assert np.allclose(h, h[::-1], atol=1e-12, rtol=0)
    second = h[:-2] - 2 * h[1:-1] + h[2:]
    assert np.all(second <= 1e-12)


@pytest.mark.parametrize("p", [-0.1, 1.1, math.nan])
def test_binary_entropy_domain(p):
    with pytest.raises(ValueError):
        binary_entropy(p)


def test_db_to_transmittance_examples():
    assert db_to_transmittance(0) == 1.0
    assert db_to_transmittance(10) == pytest.approx(0.1, rel=1e-15)
    assert db_to_transmittance(26) == pytest.approx(2.512e-3, rel=2e-4)
    with pytest.raises(ValueError):
        db_to_transmittance(-1)


@given(st.floats(0, 60), st.floats(0, 60))
def test_db_to_transmittance_multiplicative(a, b):
    assert db_to_transmittance(a + b) == pytest.approx(db_to_transmittance(a) * db_to_transmittance(b), rel=1e-12)


def test_poisson_examples():
    assert poisson_pn(0, 0) == 1.0
    assert poisson_pn(1, 1) == pytest.approx(math.exp(-1), rel=1e-15)
    assert poisson_pn(0.5, 0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert poisson_pn(0, 3) == 0.0


@pytest.mark.parametrize("mu", [0.0, 0.01, 0.3, 0.7, 1.0])
def test_poisson_partial_sums(mu):
    assert abs(math.fsum(poisson_pn(mu, n) for n in range(51)) - 1) < 1e-15


def test_qubit_spec_and_source_invariants():
    with pytest.raises(ValueError):
        QubitSpec(1.2)
    assert QubitSpec(0.5, 2 * math.pi + 0.1).phi == pytest.approx(0.1)
    with pytest.raises(ValueError):
        SourceConfig(mu=(0.1, 0.2, 0.0))
    with pytest.raises(ValueError):
        SourceConfig(p_intensity=(0.5, 0.5, 0.1))
    SourceConfig(mu=(0.3, 0.04, 0.0))


def test_gain_table_rejects_out_of_range():
    Q = np.full((2, 3, 3), 1e-4)
    E = np.full((2, 3, 3), 0.5)
    GainTable(Q, E)
    bad = Q.copy()
    bad[0, 0, 0] = 1.5
    with pytest.raises(ValueError):
        GainTable(bad, E)
    bad = E.copy()
    bad[1, 2, 2] = -0.1
    with pytest.raises(ValueError):
        GainTable(Q, bad)
    with pytest.raises(ValueError):
        GainTable(Q[:1], E[:1])


def test_enums():
    assert len(Basis) == 2 and len(Intensity) == 3
    assert [i.label for i in Intensity] == ["s", "d", "v"]
    assert Intensity.from_label("Decoy") is Intensity.DECOY
