"""Truncated number-basis route: Lindblad propagation, herald
conditioning, and the closed forms it must reproduce.

These are the independent checks behind the Gaussian engine: the same
protocol is integrated directly in a small Fock space and compared to the
analytic heralded-state statistics. Pulse durations for the lossless
instances are chosen so the squeezing parameter r = g * T satisfies
cosh r = e^{gain}, which realizes a requested write gain exactly.
"""

import math

import numpy as np
import pytest

from phonon_herald.analytic import (
    ConditionalPhononState,
    conditional_state,
    g2_conditional_zero_threshold_detector,
    herald_click_probability,
    write_state_amplitudes,
)
from phonon_herald.exceptions import ConditioningError, ConfigError, TruncationError
from phonon_herald.fock import (
    Detector,
    RateSet,
    TruncatedState,
    condition_on_click,
    destroy,
    evolve_through,
    initial_state,
    lindblad_evolve,
    lindblad_evolve_rates,
    oracle_g2,
    phonon_number,
    phonon_second_factorial,
    photon_number,
    thermal_density,
    two_mode_ops,
)
from phonon_herald.params import (
    DriveSchedule,
    PulseSegment,
    SegmentKind,
    SystemParams,
)


def _scaled(gamma=0.0, n_th=0.0, n_0=0.0):
    """Unit-kappa instance; couplings come from segment photon numbers."""
    return SystemParams(g0=0.01, kappa=1.0, gamma=gamma, omega_m=1e4,
                        omega_c=1e4, n_th=n_th, n_0=n_0)


def _pure_squeeze_legs(gain, g=0.02):
    """Lossless pair-production legs realizing the gain exactly."""
    rates = RateSet(g_plus=g, g_minus=0.0, kappa=0.0, gamma=0.0, n_th=0.0)
    duration = math.acosh(math.exp(gain)) / g
    return [(rates, duration)]


# ---------------------------------------------------------------------------
# Operators and state constructors
# ---------------------------------------------------------------------------


def test_destroy_commutator_on_truncation():
    a = destroy(6)
    comm = a @ a.conj().T - a.conj().T @ a
    # canonical except the last level, which the truncation folds back
    assert np.allclose(np.diag(comm)[:-1], 1.0, atol=1e-14)
    assert np.diag(comm)[-1] == pytest.approx(-(6 - 1), abs=1e-12)


def test_two_mode_ops_commute_across_modes():
    a, b = two_mode_ops(3, 4)
    assert np.allclose(a @ b, b @ a, atol=1e-14)


def test_thermal_density_statistics():
    rho = thermal_density(0.5, 60)
    pops = np.diag(rho).real
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert float(np.dot(np.arange(60), pops)) == pytest.approx(0.5, rel=1e-9)
    # geometric ladder
    assert pops[1] / pops[0] == pytest.approx(0.5 / 1.5, rel=1e-12)


def test_initial_state_is_vacuum_times_thermal():
    p = _scaled(n_th=0.2, n_0=0.2)
    st = initial_state(p, 3, 12)
    assert st.trace == pytest.approx(1.0, abs=1e-9)
    assert photon_number(st) == pytest.approx(0.0, abs=1e-12)
    assert phonon_number(st) == pytest.approx(0.2, rel=1e-6)


# ---------------------------------------------------------------------------
# Lindblad propagation invariants
# ---------------------------------------------------------------------------


def test_evolution_preserves_trace_and_hermiticity():
    p = _scaled(gamma=2e-3, n_th=0.1, n_0=0.1)
    seg = PulseSegment(SegmentKind.WRITE, 10.0, 25.0)
    st = lindblad_evolve(initial_state(p, 5, 14), p, seg, 10.0)
    assert st.trace == pytest.approx(1.0, abs=1e-8)
    rho = st.rho
    assert float(np.max(np.abs(rho - rho.conj().T))) < 1e-12
    eigs = np.linalg.eigvalsh(rho)
    assert float(eigs.min()) > -1e-12


def test_dark_detailed_balance_is_stationary():
    # a thermal state at the bath occupancy does not move in the dark
    p = _scaled(gamma=0.05, n_th=0.3, n_0=0.3)
    st = initial_state(p, 2, 25)
    before = phonon_number(st)
    rates = RateSet.from_segment(p, PulseSegment(SegmentKind.OFF, 50.0))
    st = lindblad_evolve_rates(st, rates, 50.0)
    assert phonon_number(st) == pytest.approx(before, abs=1e-9)


def test_dark_relaxation_matches_exponential():
    p = _scaled(gamma=0.05, n_th=0.4, n_0=0.1)
    st = initial_state(p, 2, 25)
    rates = RateSet.from_segment(p, PulseSegment(SegmentKind.OFF, 1.0))
    t = 12.0
    st = lindblad_evolve_rates(st, rates, t)
    expected = 0.4 + (0.1 - 0.4) * math.exp(-0.05 * t)
    assert phonon_number(st) == pytest.approx(expected, rel=1e-8)


def test_truncation_leak_raises():
    p = _scaled()
    seg = PulseSegment(SegmentKind.WRITE, 40.0, 2500.0)  # g_plus = 0.5
    with pytest.raises(TruncationError):
        lindblad_evolve(initial_state(p, 3, 3), p, seg, 40.0)


def test_zero_duration_is_identity():
    p = _scaled(n_0=0.1, n_th=0.1)
    st = initial_state(p, 3, 8)
    rates = RateSet.from_segment(p, PulseSegment(SegmentKind.OFF, 1.0))
    out = lindblad_evolve_rates(st, rates, 0.0)
    assert np.array_equal(out.rho, st.rho)
    with pytest.raises(ConfigError):
        lindblad_evolve_rates(st, rates, -1.0)


# ---------------------------------------------------------------------------
# Write pulse against the pair-ladder closed forms
# ---------------------------------------------------------------------------


def test_lossless_write_builds_the_pair_ladder():
    gain = 0.05
    p = _scaled()
    st = evolve_through(initial_state(p, 10, 10), _pure_squeeze_legs(gain))
    amps = write_state_amplitudes(gain, 9)
    blocks = st.rho.reshape(10, 10, 10, 10)
    joint = np.einsum("abab->ab", blocks).real
    diag = np.diag(joint)
    assert float(np.max(np.abs(diag - np.abs(amps) ** 2))) < 1e-4
    # photons and phonons only appear in pairs
    off_diag_mass = float(joint.sum() - diag.sum())
    assert abs(off_diag_mass) < 1e-10


def test_click_probability_matches_closed_form():
    gain, n_0 = 0.1, 0.1
    p = _scaled(n_th=n_0, n_0=n_0)
    st = evolve_through(initial_state(p, 10, 20), _pure_squeeze_legs(gain))
    _, prob = condition_on_click(st, Detector.PROJECTOR_ONE)
    assert prob == pytest.approx(herald_click_probability(gain, n_0), abs=1e-6)
    assert prob == pytest.approx(0.15749039561983383, rel=1e-8)


def test_heralded_weights_match_conditional_state():
    # after a finite-gain write on a warm start, the conditioned
    # mechanical diagonal is the displaced-thermal ladder
    # (1 - pbar)^2 pbar^(n-1) n at pbar = p e^{-2 gain}
    gain, n_0 = 0.1, 0.1
    p = _scaled(n_th=n_0, n_0=n_0)
    st = evolve_through(initial_state(p, 10, 20), _pure_squeeze_legs(gain))
    cond, _ = condition_on_click(st, Detector.PROJECTOR_ONE)
    pops = cond.mech_populations()
    pbar = (n_0 / (1.0 + n_0)) * math.exp(-2.0 * gain)
    assert pbar == pytest.approx(0.07443006846163472, rel=1e-12)
    expected = ConditionalPhononState(pbar).weights(19)
    assert pops[0] == pytest.approx(0.0, abs=1e-12)
    assert float(np.max(np.abs(pops - expected))) < 1e-6


def test_threshold_detector_matches_series():
    gain, n_0 = 0.1, 0.1
    p = _scaled(n_th=n_0, n_0=n_0)
    st = evolve_through(initial_state(p, 10, 20), _pure_squeeze_legs(gain))
    cond, _ = condition_on_click(st, Detector.THRESHOLD)
    g2 = phonon_second_factorial(cond) / phonon_number(cond) ** 2
    series = g2_conditional_zero_threshold_detector(n_0, gain)
    assert g2 == pytest.approx(series, rel=1e-4)


def test_conditioning_failure_modes():
    p = _scaled(n_0=0.1, n_th=0.1)
    with pytest.raises(ConditioningError):
        condition_on_click(initial_state(p, 4, 8))  # optics still vacuum
    with pytest.raises(ConfigError):
        condition_on_click(
            TruncatedState(rho=np.eye(8, dtype=complex) / 8.0, n_a=1, n_b=8)
        )


def test_threshold_and_projector_differ_at_finite_gain():
    gain, n_0 = 0.1, 0.1
    p = _scaled(n_th=n_0, n_0=n_0)
    st = evolve_through(initial_state(p, 10, 20), _pure_squeeze_legs(gain))
    _, p_proj = condition_on_click(st, Detector.PROJECTOR_ONE)
    _, p_thresh = condition_on_click(st, Detector.THRESHOLD)
    assert p_thresh > p_proj  # threshold also fires on multi-pair events


# ---------------------------------------------------------------------------
# Readout g2 oracle
# ---------------------------------------------------------------------------


def test_oracle_g2_ideal_swap_is_single_phonon():
    # vacuum start, tiny write gain: the readout light inherits the
    # heralded single phonon and g2 collapses
    p = _scaled()
    write = PulseSegment(SegmentKind.WRITE, 2.5, 0.01)  # gain 5e-6
    off = PulseSegment(SegmentKind.OFF, 5.0)
    read = PulseSegment(SegmentKind.READOUT, 40.0, 1.0)
    st = evolve_through(initial_state(p, 4, 6),
                        [(RateSet.from_segment(p, write), 2.5)])
    g2 = oracle_g2(st, p, read, 20.0,
                   storage=[(RateSet.from_segment(p, off), 5.0)])
    assert g2 < 1e-4


def test_oracle_g2_warm_start_weak_gain_limit():
    # n_0 = 0.1, gain -> 0: the conditional statistics approach the
    # ideal-herald value 2 pbar (2 + pbar) / (1 + pbar)^2 = 0.3194...
    n_0 = 0.1
    p = _scaled(n_th=n_0, n_0=n_0)
    write = PulseSegment(SegmentKind.WRITE, 10.0, 0.01)  # gain 2e-5
    off = PulseSegment(SegmentKind.OFF, 5.0)
    read = PulseSegment(SegmentKind.READOUT, 40.0, 1.0)
    st = evolve_through(initial_state(p, 5, 14),
                        [(RateSet.from_segment(p, write), 10.0)])
    g2 = oracle_g2(st, p, read, 20.0,
                   storage=[(RateSet.from_segment(p, off), 5.0)])
    assert g2 == pytest.approx(0.3195342198479503, rel=1e-8)
    limit = conditional_state(n_0, 0.0).g2
    assert g2 == pytest.approx(limit, rel=5e-4)


def test_oracle_g2_converges_under_cutoff_doubling():
    p = _scaled()
    write = PulseSegment(SegmentKind.WRITE, 2.5, 0.01)
    read = PulseSegment(SegmentKind.READOUT, 30.0, 1.0)

    def run(n_a, n_b):
        st = evolve_through(initial_state(p, n_a, n_b),
                            [(RateSet.from_segment(p, write), 2.5)])
        return oracle_g2(st, p, read, 15.0)

    assert abs(run(4, 6) - run(8, 12)) < 1e-4


def test_oracle_g2_input_validation():
    p = _scaled()
    st = initial_state(p, 4, 6)
    read = PulseSegment(SegmentKind.READOUT, 30.0, 1.0)
    with pytest.raises(ConfigError):
        oracle_g2(st, p, read, -1.0)
    with pytest.raises(ConditioningError):
        oracle_g2(st, p, read, 5.0)  # no write photon to herald on
