import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayesmetrology.encoding import EncodedProbe
from bayesmetrology.fisher import (FisherReport, classical_fisher, fisher_report,
                                   path_symmetric_identity, quantum_fisher, sld_quantum_fisher)
from bayesmetrology.povm import scheme_for_probe

from conftest import random_state


@pytest.mark.parametrize("name,expected", [("noon", 4.0), ("coherent", 2.0), ("tsv", 8.0)])
def test_quantum_fisher_closed_forms(probes, name, expected):
    # default cutoffs truncate the squeezed tail at the 1e-6 level
    assert quantum_fisher(probes[name]) == pytest.approx(expected, rel=1e-5)


def test_noon_counting_fisher_is_theta_independent(probes):
    s = probes["noon"]
    povm = scheme_for_probe("counting-even", s)
    for th in (0.0, 0.3, -0.7):
        assert classical_fisher(povm, s, th) == pytest.approx(4.0, rel=1e-9)


TABLE_PAIRS = [("coherent", "counting-odd"), ("coherent", "undo"), ("noon", "parity")] + [
    (n, k) for n in ("noon", "tsv", "ses", "tsc") for k in ("counting-even", "quadratures")]


@pytest.mark.parametrize("name,kind", TABLE_PAIRS)
def test_classical_fisher_theta_independent(probes, name, kind):
    s = probes[name]
    povm = scheme_for_probe(kind, s)
    assert classical_fisher(povm, s, 0.3) == pytest.approx(classical_fisher(povm, s, 0.0), rel=1e-6)


def test_quadratic_zero_uses_curvature_limit(probes):
    # counting-odd on NOON has p(1,1) = sin^2(theta), zero at theta = 0
    s = probes["noon"]
    assert classical_fisher(scheme_for_probe("counting-odd", s), s, 0.0) == pytest.approx(4.0, rel=1e-6)


def test_identity_effect_has_no_information(probes):
    from bayesmetrology.povm import Povm

    s = probes["noon"]
    support = EncodedProbe.from_state(s).occupied()
    trivial = Povm(np.zeros((support.size, 0)), np.zeros(0, dtype=int), ("all",), support,
                   s.dims.size, remainder=True)
    assert classical_fisher(trivial, s, 0.2) == 0.0


def test_parity_is_not_phase_covariant_off_noon(probes):
    s = probes["coherent"]
    povm = scheme_for_probe("parity", s)
    assert abs(classical_fisher(povm, s, 0.3) - classical_fisher(povm, s, 0.0)) > 0.1


@pytest.mark.parametrize("name", ["coherent", "noon", "tsv", "ses", "tsc"])
@pytest.mark.parametrize("kind", ["counting-even", "counting-odd", "parity", "quadratures"])
def test_classical_below_quantum(probes, name, kind):
    s = probes[name]
    rep = fisher_report(scheme_for_probe(kind, s), s, 0.2)
    assert rep.f_classical <= rep.f_quantum * (1 + 1e-9)


def test_fisher_report_crb():
    rep = FisherReport(2.0, 4.0)
    np.testing.assert_allclose(rep.crb([1, 10]), [0.5, 0.05])
    np.testing.assert_allclose(rep.quantum_crb([1, 10]), [0.25, 0.025])


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_sld_matches_pure_state_formula(seed):
    s = random_state(np.random.default_rng(seed), 3)
    enc = EncodedProbe.from_state(s)
    fq, L = sld_quantum_fisher(enc.rho(0.4), enc.drho(0.4))
    assert fq == pytest.approx(quantum_fisher(s), rel=1e-8)
    rho, drho = enc.rho(0.4), enc.drho(0.4)
    np.testing.assert_allclose(L @ rho + rho @ L, 2 * drho, atol=1e-9)


@given(st.floats(0.0, 1.0), st.floats(0.0, 2 * math.pi))
@settings(max_examples=25, deadline=None)
def test_mixed_qubit_qfi(r, phi):
    # Bloch vector r (cos phi, sin phi, 0) rotating about z: F_Q = r^2
    amp = np.array([[math.sqrt((1 + r) / 2), 0], [0, math.sqrt((1 - r) / 2)]], dtype=complex)
    # components whose mixture has coherence r/2 between |0> and |1>
    psi_plus = np.array([1, np.exp(1j * phi)]) / math.sqrt(2)
    psi_minus = np.array([1, -np.exp(1j * phi)]) / math.sqrt(2)
    comps = np.array([amp[0, 0] * psi_plus, amp[1, 1] * psi_minus])
    enc = EncodedProbe(comps, np.array([0.5, -0.5]))
    assert quantum_fisher(enc) == pytest.approx(r * r, abs=1e-9)


@pytest.mark.parametrize("name", ["coherent", "noon", "tsv", "ses", "tsc", "tsc-int"])
def test_path_symmetric_identity(probes, name):
    fq, formula = path_symmetric_identity(probes[name])
    assert formula == pytest.approx(fq, rel=1e-2)
