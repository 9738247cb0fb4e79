"""Second-moment propagation: drift algebra, noise integrals, schedule
walks, and the closed-form limits they must reproduce.

The eigenbasis fast path is checked against scipy dense routes
(``expm`` for the propagator, ``quad_vec`` for the noise integral) on
seeded random rate sets, so a regression in either branch shows up as a
disagreement rather than a silent drift.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from phonon_herald.covariance import (
    CovarianceSet,
    Op,
    build_drift,
    eigensystem,
    evolve_schedule,
    noise_integral,
    noise_matrix,
    phi_integral,
    propagator,
    segment_generators,
    thermal_block,
)
from phonon_herald.covariance import _drift_from_rates
from phonon_herald.exceptions import InvalidScheduleError
from phonon_herald.params import (
    DriveSchedule,
    PulseSegment,
    SegmentKind,
    SystemParams,
    protocol_schedule,
)


def _random_rates(rng):
    kappa = float(10.0 ** rng.uniform(-1, 1))
    gamma = float(10.0 ** rng.uniform(-4, -1))
    g_plus = float(10.0 ** rng.uniform(-3, -0.5))
    g_minus = float(10.0 ** rng.uniform(-3, -0.5))
    return g_plus, g_minus, kappa, gamma


# ---------------------------------------------------------------------------
# Drift algebra
# ---------------------------------------------------------------------------


def test_drift_matrix_layout():
    d = _drift_from_rates(0.25, 0.5, 2.0, 0.125)
    expected = np.array(
        [
            [-1.0, 0.0, 0.5j, 0.25j],
            [0.0, -1.0, -0.25j, -0.5j],
            [0.5j, 0.25j, -0.0625, 0.0],
            [-0.25j, -0.5j, 0.0, -0.0625],
        ]
    )
    assert np.allclose(d.m, expected, atol=0.0)
    assert d.discriminant == pytest.approx(
        (2.0 - 0.125) ** 2 / 4.0 - 4.0 * (0.25 - 0.0625), rel=1e-14
    )


def test_drift_eigenvalue_pairs(rng):
    # -(kappa+gamma)/4 +- sqrt(disc)/2, each twice
    for _ in range(25):
        g_plus, g_minus, kappa, gamma = _random_rates(rng)
        d = _drift_from_rates(g_plus, g_minus, kappa, gamma)
        root = complex(d.discriminant) ** 0.5
        base = -(kappa + gamma) / 4.0
        expected = [base + root / 2.0] * 2 + [base - root / 2.0] * 2
        got = list(np.linalg.eigvals(d.m))
        scale = max(kappa, gamma, g_plus, g_minus)
        for e in expected:  # greedy matching; conjugate pairs defeat sorting
            k = int(np.argmin([abs(g - e) for g in got]))
            assert abs(got.pop(k) - e) < 1e-9 * scale


def test_noise_and_thermal_block_layout():
    n = noise_matrix(2.0, 0.5, 3.0)
    assert n[Op.A, Op.ADAG] == 2.0
    assert n[Op.B, Op.BDAG] == 0.5 * 4.0
    assert n[Op.BDAG, Op.B] == 0.5 * 3.0
    assert np.count_nonzero(n) == 3

    g = thermal_block(1.5)
    assert g[Op.A, Op.ADAG] == 1.0
    assert g[Op.B, Op.BDAG] == 2.5
    assert g[Op.BDAG, Op.B] == 1.5
    assert np.count_nonzero(g) == 3


# ---------------------------------------------------------------------------
# phi integral
# ---------------------------------------------------------------------------


def test_phi_integral_zero_argument_is_length():
    out = phi_integral(np.array([0.0 + 0.0j]), 2.5)
    assert out[0] == pytest.approx(2.5, rel=1e-15)


def test_phi_integral_branches_agree_at_crossover():
    # series and direct evaluation must meet smoothly at |sL| = 1e-4
    length = 1.0
    for mag in (0.9e-4, 1.1e-4):
        for phase in (0.0, 1.0, 2.5):
            s = np.array([mag * np.exp(1j * phase)])
            exact = (np.exp(s * length) - 1.0) / s
            assert phi_integral(s, length)[0] == pytest.approx(
                complex(exact[0]), rel=1e-12
            )


# ---------------------------------------------------------------------------
# Propagator and noise integral vs dense references
# ---------------------------------------------------------------------------


def test_propagator_matches_expm(rng):
    for _ in range(20):
        g_plus, g_minus, kappa, gamma = _random_rates(rng)
        d = _drift_from_rates(g_plus, g_minus, kappa, gamma)
        eig = eigensystem(d)
        dt = float(10.0 ** rng.uniform(-1, 1))
        dense = expm(d.m * dt)
        fast = propagator(eig, dt)
        assert np.max(np.abs(fast - dense)) < 1e-8 * max(
            1.0, float(np.max(np.abs(dense)))
        )


def test_noise_integral_matches_quadrature(rng):
    for _ in range(10):
        g_plus, g_minus, kappa, gamma = _random_rates(rng)
        d = _drift_from_rates(g_plus, g_minus, kappa, gamma)
        eig = eigensystem(d)
        noise = noise_matrix(kappa, gamma, float(rng.uniform(0.0, 5.0)))
        t_lower = float(rng.uniform(0.0, 1.0))
        t1 = t_lower + float(rng.uniform(0.1, 3.0))
        t2 = t_lower + float(rng.uniform(0.1, 3.0))
        fast = noise_integral(eig, noise, t1, t2, t_lower)

        def integrand(s):
            return expm(d.m * (t1 - s)) @ noise @ expm(d.m * (t2 - s)).T

        dense, _ = quad_vec(integrand, t_lower, min(t1, t2))
        assert np.max(np.abs(fast - dense)) < 1e-8 * max(
            1.0, float(np.max(np.abs(dense)))
        )


def test_noise_integral_zero_length():
    d = _drift_from_rates(0.0, 0.1, 1.0, 0.01)
    eig = eigensystem(d)
    noise = noise_matrix(1.0, 0.01, 2.0)
    assert np.all(noise_integral(eig, noise, 1.0, 3.0, 1.0) == 0.0)
    with pytest.raises(InvalidScheduleError):
        noise_integral(eig, noise, 1.0, 3.0, 2.0)


# ---------------------------------------------------------------------------
# Degenerate drift handling
# ---------------------------------------------------------------------------


def _degenerate_params():
    # kappa=1, gamma=0, beam-splitter g=0.25: disc = 1/4 - 4 g^2 = 0 exactly
    return SystemParams(g0=1.0, kappa=1.0, gamma=0.0, omega_m=1e4,
                        omega_c=1e4, n_th=0.0, n_0=0.0)


def test_exactly_degenerate_drift_flagged():
    p = _degenerate_params()
    seg = PulseSegment(SegmentKind.READOUT, 5.0, 0.0625)  # g = 0.25
    d = build_drift(p, seg)
    assert d.discriminant == 0.0
    assert eigensystem(d).degenerate


def test_degenerate_fallback_continuity():
    # the dense route at the defective point must agree with the
    # eigenbasis route immediately on either side of it
    p = _degenerate_params()
    duration = 5.0

    def final_block(n_cavity):
        seg = PulseSegment(SegmentKind.READOUT, duration, n_cavity)
        sched = DriveSchedule((seg,))
        cov = evolve_schedule(p.replace(n_0=0.4, n_th=0.4), sched, None,
                              [0.0, duration])
        return cov.block(duration, duration)

    at = final_block(0.0625)
    below = final_block(0.0625 * (1.0 - 1e-8))
    above = final_block(0.0625 * (1.0 + 1e-8))

    seg = PulseSegment(SegmentKind.READOUT, duration, 0.0625 * (1.0 - 1e-8))
    assert not eigensystem(build_drift(p, seg)).degenerate

    assert np.max(np.abs(at - below)) < 1e-6
    assert np.max(np.abs(at - above)) < 1e-6
    assert np.max(np.abs(above - below)) < 1e-6


def test_degenerate_propagator_matches_expm():
    p = _degenerate_params()
    seg = PulseSegment(SegmentKind.READOUT, 1.0, 0.0625)
    gen = segment_generators(p, seg)
    assert gen.eig.degenerate
    dense = expm(gen.eig.drift.m * 2.0)
    assert np.max(np.abs(propagator(gen.eig, 2.0) - dense)) < 1e-12


# ---------------------------------------------------------------------------
# Schedule walks against closed forms
# ---------------------------------------------------------------------------


def test_dark_segment_relaxes_to_the_bath(device_run):
    p = device_run.replace(n_0=0.01, n_th=6.4)
    # dark evolution: n(t) = n_th + (n_0 - n_th) e^{-gamma t}
    t = 2.0e-5
    sched = DriveSchedule((PulseSegment(SegmentKind.OFF, 3.0e-5),))
    cov = evolve_schedule(p, sched, None, [0.0, t])
    block = cov.block(t, t)
    expected = p.n_th + (p.n_0 - p.n_th) * math.exp(-p.gamma * t)
    assert block[Op.BDAG, Op.B].real == pytest.approx(expected, rel=1e-10)
    assert block[Op.B, Op.BDAG].real == pytest.approx(expected + 1.0, rel=1e-10)
    # the optical port stays vacuum in the dark
    assert block[Op.ADAG, Op.A].real == pytest.approx(0.0, abs=1e-12)
    assert block[Op.A, Op.ADAG].real == pytest.approx(1.0, rel=1e-12)


def test_dark_two_time_coherence_decays_at_half_gamma(device_run):
    # regression: <b'(t1) b(t2)> = n(t1) e^{-gamma (t2-t1)/2} in the dark
    p = device_run.replace(n_0=0.5, n_th=6.4)
    t1, t2 = 1.0e-5, 2.5e-5
    sched = DriveSchedule((PulseSegment(SegmentKind.OFF, 3.0e-5),))
    cov = evolve_schedule(p, sched, None, [t1, t2])
    n_t1 = cov.block(t1, t1)[Op.BDAG, Op.B].real
    expected = n_t1 * math.exp(-p.gamma * (t2 - t1) / 2.0)
    assert cov.block(t1, t2)[Op.BDAG, Op.B].real == pytest.approx(
        expected, rel=1e-10
    )


def test_weak_write_grows_pairs_adiabatically(device_run):
    # g << kappa: phonons grow as (n_0+1) e^{2 gain} - 1 with
    # gain = 2 g^2 T / kappa, and the cavity occupation follows at
    # <a'a> = (4 g^2 / kappa^2)(n_b + 1) once the field has settled
    p = device_run.replace(gamma=0.0, n_th=0.1, n_0=0.1)
    n_write = 0.04  # g/kappa ~ 1e-3 at the device coupling
    T = 5e-8
    seg = PulseSegment(SegmentKind.WRITE, T, n_write)
    cov = evolve_schedule(p, DriveSchedule((seg,)), None, [T])
    block = cov.block(T, T)
    g = p.g0 * math.sqrt(n_write)
    gain = 2.0 * g * g / p.kappa * T
    n_expected = (p.n_0 + 1.0) * math.exp(2.0 * gain) - 1.0
    n_b = block[Op.BDAG, Op.B].real
    assert n_b == pytest.approx(n_expected, rel=1e-2)
    n_a = 4.0 * g * g / p.kappa**2 * (n_b + 1.0)
    assert block[Op.ADAG, Op.A].real == pytest.approx(n_a, rel=1e-2)


def test_cooling_transient_and_steady_state(device_run):
    # cool-only from the bath occupancy at a moderate drive: monotone
    # non-increasing, and within 2% of the closed-form thermal floor after
    # ten optical-damping times
    from phonon_herald.analytic import cooling_steady_state

    n_r = 10.0
    p = device_run.replace(n_0=device_run.n_th)
    w_opt = 4.0 * p.g0**2 * n_r / p.kappa
    t_probe = 10.0 / w_opt
    times = np.linspace(0.0, t_probe, 41)
    sched = DriveSchedule((PulseSegment(SegmentKind.COOL, t_probe * 1.01, n_r),))
    cov = evolve_schedule(p, sched, None, list(times))
    occ = np.array([cov.block(float(t), float(t))[Op.BDAG, Op.B].real
                    for t in times])
    assert np.all(np.diff(occ) <= 1e-12 * occ[0])
    thermal = cooling_steady_state(p, n_r).thermal
    assert occ[-1] == pytest.approx(thermal, rel=0.02)


# ---------------------------------------------------------------------------
# Structural invariants
# ---------------------------------------------------------------------------


def _long_mixed_schedule():
    return DriveSchedule(
        (
            PulseSegment(SegmentKind.COOL, 2e-7, 1e3),
            PulseSegment(SegmentKind.WRITE, 5e-8, 0.1),
            PulseSegment(SegmentKind.OFF, 1e-6),
            PulseSegment(SegmentKind.READOUT, 1e-7, 1e3),
            PulseSegment(SegmentKind.OFF, 5e-6),
            PulseSegment(SegmentKind.WRITE, 5e-8, 0.2),
            PulseSegment(SegmentKind.READOUT, 2e-7, 1e4),
        )
    )


def test_commutators_preserved_along_long_schedule(device_run):
    sched = _long_mixed_schedule()
    marks = np.linspace(0.0, sched.total_duration, 29)
    cov = evolve_schedule(device_run, sched, None, list(marks))
    for t in marks:
        g = cov.block(float(t), float(t))
        assert abs(g[Op.A, Op.ADAG] - g[Op.ADAG, Op.A] - 1.0) < 1e-9
        assert abs(g[Op.B, Op.BDAG] - g[Op.BDAG, Op.B] - 1.0) < 1e-9


def test_hermitian_pair_symmetry(device_run):
    # <v_i v_j>* = <dag(v_j) dag(v_i)> with dag swapping (a, a') and (b, b')
    dag = {Op.A: Op.ADAG, Op.ADAG: Op.A, Op.B: Op.BDAG, Op.BDAG: Op.B}
    sched = _long_mixed_schedule()
    marks = np.linspace(0.0, sched.total_duration, 11)
    cov = evolve_schedule(device_run, sched, None, list(marks))
    for t in marks:
        g = cov.block(float(t), float(t))
        scale = max(1.0, float(np.max(np.abs(g))))
        for i in Op:
            for j in Op:
                err = abs(np.conj(g[i, j]) - g[dag[j], dag[i]])
                assert err < 1e-12 * scale, (t, i, j)


def test_two_time_blocks_compose_through_regression(device_run):
    # G(t1, t2) = G(t1, t1) U^T and G(t2, t1) = U G(t1, t1) for t1 < t2
    sched = protocol_schedule(t_write=5e-8, n_write=0.1, t_off=5e-9,
                              t_readout=1e-7, n_readout=1e3)
    t1, t2 = 5e-8, 5.6e-8
    cov = evolve_schedule(device_run, sched, None, [t1, t2])
    i, j = cov.index(t1), cov.index(t2)
    u = cov.propagator(i, j)
    g11 = cov.block(t1, t1)
    assert np.allclose(cov.block(t1, t2), g11 @ u.T, rtol=1e-12, atol=1e-300)
    assert np.allclose(cov.block(t2, t1), u @ g11, rtol=1e-12, atol=1e-300)


# ---------------------------------------------------------------------------
# Marked-time plumbing
# ---------------------------------------------------------------------------


def test_marked_time_handling(device_run):
    sched = DriveSchedule((PulseSegment(SegmentKind.OFF, 1e-6),))
    cov = evolve_schedule(device_run, sched, None, [5e-7, 5e-7, 0.0])
    assert isinstance(cov, CovarianceSet)
    assert len(cov.times) == 2  # duplicates collapse
    assert cov.index(5e-7) == 1
    with pytest.raises(ValueError):
        cov.index(2e-7)
    with pytest.raises(InvalidScheduleError):
        evolve_schedule(device_run, sched, None, [2e-6])
    with pytest.raises(InvalidScheduleError):
        evolve_schedule(device_run, sched, None, [])


def test_explicit_initial_block(device_run):
    init = thermal_block(2.0)
    sched = DriveSchedule((PulseSegment(SegmentKind.OFF, 1e-9),))
    cov = evolve_schedule(device_run, sched, init, [0.0])
    assert cov.block(0.0, 0.0)[Op.BDAG, Op.B].real == pytest.approx(2.0)
    with pytest.raises(InvalidScheduleError):
        evolve_schedule(device_run, sched, np.eye(3), [0.0])
