"""Closed-form results for the heralded single-phonon protocol.

Everything here lives in the adiabatic, weak-pulse regime: the cavity
follows the mechanics (g << kappa), the write pulse scatters photons at
the pair-production rate 2 g^2 / kappa, and detecting one of those photons
heralds a phonon added to the (slightly thermal) mechanical mode. The
dimensionless ``gain`` argument used throughout is that rate integrated
over the write pulse; it is also the squeezing parameter of the equivalent
two-mode squeezer (cosh r = e^gain).

These expressions are the reference the full covariance-matrix engine is
checked against in the tests, not a wrapper around it.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from numpy.typing import NDArray

from .exceptions import ConditioningError, ConfigError, ThresholdSeriesDiverged
from .params import SystemParams, effective_coupling

__all__ = [
    "ConditionalPhononState",
    "conditional_state",
    "g2_conditional_zero",
    "g2_conditional_zero_threshold_detector",
    "herald_rate",
    "herald_click_probability",
    "write_state_amplitudes",
    "conversion_efficiency",
    "CoolingSteadyState",
    "cooling_steady_state",
    "rabi_frequency",
    "rabi_threshold_photon_number",
    "DlczEstimate",
    "dlcz_estimate",
    "dlcz_gain_for_fidelity",
]


def _bright_fraction(n_0: float) -> float:
    """Boltzmann ratio p of a thermal state with mean occupancy n_0."""
    if n_0 < 0.0:
        raise ConfigError(f"n_0 must be >= 0, got {n_0!r}")
    return n_0 / (1.0 + n_0)


@dataclasses.dataclass(frozen=True)
class ConditionalPhononState:
    """Mechanical number statistics after a herald click (ideal detector).

    The distribution is the one-photon-added thermal state of an effective
    thermal parameter ``pbar``: no vacuum component, and weight
    ``(1 - pbar)^2 * pbar^(n-1) * n`` on Fock level ``n >= 1``.
    """

    pbar: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.pbar < 1.0):
            raise ConfigError(f"pbar must lie in [0, 1), got {self.pbar!r}")

    def weight(self, n: int) -> float:
        if n <= 0:
            return 0.0
        return (1.0 - self.pbar) ** 2 * self.pbar ** (n - 1) * n

    def weights(self, n_max: int) -> NDArray[np.float64]:
        """Populations of Fock levels 0..n_max."""
        n = np.arange(n_max + 1)
        out = (1.0 - self.pbar) ** 2 * np.where(n > 0, self.pbar ** np.maximum(n - 1, 0) * n, 0.0)
        return out

    @property
    def mean_phonons(self) -> float:
        return (1.0 + self.pbar) / (1.0 - self.pbar)

    @property
    def second_factorial_moment(self) -> float:
        """<b'b'bb> of the conditional state."""
        return 2.0 * self.pbar * (2.0 + self.pbar) / (1.0 - self.pbar) ** 2

    @property
    def g2(self) -> float:
        """Same-time conditional intensity correlation of the stored phonon."""
        return 2.0 * self.pbar * (2.0 + self.pbar) / (1.0 + self.pbar) ** 2


def conditional_state(n_0: float, gain: float) -> ConditionalPhononState:
    """Heralded mechanical state for initial occupancy n_0 and write gain.

    A finite write gain biases the herald toward hotter initial states,
    which is absorbed into the effective thermal parameter
    pbar = p * exp(-gain) with p = n_0 / (1 + n_0).
    """
    if gain < 0.0:
        raise ConfigError(f"gain must be >= 0, got {gain!r}")
    return ConditionalPhononState(_bright_fraction(n_0) * math.exp(-gain))


def g2_conditional_zero(n_0: float, gain: float = 0.0) -> float:
    """Conditional g2(0) of the heralded phonon, ideal single-photon herald.

    For n_0 << 1 this is approximately 4 * n_0: the residual two-phonon
    admixture is set entirely by the pre-cooling floor.
    """
    return conditional_state(n_0, gain).g2


def g2_conditional_zero_threshold_detector(
    n_0: float,
    gain: float,
    *,
    rel_tol: float = 1e-12,
    max_total: int = 200_000,
) -> float:
    """Conditional g2(0) when the herald is a click/no-click detector.

    A threshold detector fires on one *or more* write photons, so strong
    write pulses pollute the heralded state with multi-pair events. The
    joint probability of n initial thermal phonons and m scattered pairs is
    summed in log space over diagonals of constant n + m until the running
    totals stop moving at relative level ``rel_tol``.

    Raises ThresholdSeriesDiverged when p * e^gain >= 1 (equivalently
    pbar * e^{2 gain} >= 1), where the multi-pair cascade outruns the
    thermal weights and the conditional moments lose meaning.
    """
    p = _bright_fraction(n_0)
    if gain < 0.0:
        raise ConfigError(f"gain must be >= 0, got {gain!r}")
    if p * math.exp(gain) >= 1.0:
        raise ThresholdSeriesDiverged(
            f"threshold-detector moments diverge for n_0={n_0}, gain={gain} "
            f"(p * e^gain = {p * math.exp(gain):.6g} >= 1)"
        )
    if gain == 0.0:
        # Vanishing-gain limit: any click is a single pair, so the threshold
        # detector collapses onto the ideal projector.
        return g2_conditional_zero(n_0, 0.0)

    c2 = math.exp(2.0 * gain)  # cosh^2 r
    t2 = -math.expm1(-2.0 * gain)  # tanh^2 r
    log_p = math.log(p) if p > 0.0 else -math.inf
    log_t2 = math.log(t2)
    log_c2 = 2.0 * gain
    log_1mp = math.log1p(-p)

    w = 0.0  # click probability
    s1 = 0.0  # sum (n+m) P(n, m)
    s2 = 0.0  # sum (n+m)(n+m-1) P(n, m)
    quiet = 0
    for total in range(1, max_total + 1):
        d_w = 0.0
        for m in range(1, total + 1):
            n = total - m
            log_term = (
                log_1mp
                + (n * log_p if n else 0.0)
                + math.lgamma(n + m + 1)
                - math.lgamma(m + 1)
                - math.lgamma(n + 1)
                + m * log_t2
                - (n + 1) * log_c2
            )
            if log_term == -math.inf:
                continue
            d_w += math.exp(log_term)
        w += d_w
        s1 += total * d_w
        s2 += total * (total - 1) * d_w
        if d_w <= rel_tol * w and total * d_w <= rel_tol * max(s1, 1e-300):
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
    else:
        raise ThresholdSeriesDiverged(
            f"threshold-detector series did not settle within {max_total} diagonals"
        )

    if s1 <= 0.0 or w <= 0.0:
        raise ConditioningError("threshold detector click probability is numerically zero")
    return w * s2 / (s1 * s1)


def herald_rate(n_0: float, gain: float) -> float:
    """Mean number of write photons scattered per pulse: (e^{2 gain}-1)(n_0+1)."""
    if gain < 0.0:
        raise ConfigError(f"gain must be >= 0, got {gain!r}")
    _bright_fraction(n_0)  # validates n_0
    return math.expm1(2.0 * gain) * (n_0 + 1.0)


def herald_click_probability(gain: float, n_0: float) -> float:
    """Probability of scattering exactly one write photon per pulse."""
    if gain < 0.0:
        raise ConfigError(f"gain must be >= 0, got {gain!r}")
    p = _bright_fraction(n_0)
    c2 = math.exp(2.0 * gain)
    t2 = -math.expm1(-2.0 * gain)
    return (1.0 - p) * (t2 / c2) / (1.0 - p / c2) ** 2


def write_state_amplitudes(gain: float, n_max: int) -> NDArray[np.complex128]:
    """Amplitudes of the |n, n> pair components created from vacuum.

    Entry n is e^{-gain} * i^n * (1 - e^{-2 gain})^{n/2}: the two-mode
    squeezed vacuum with cosh r = e^gain written in the photon/phonon
    number basis. Entries n = 0 .. n_max are returned.
    """
    if gain < 0.0:
        raise ConfigError(f"gain must be >= 0, got {gain!r}")
    n = np.arange(n_max + 1)
    mag = math.exp(-gain) * (-math.expm1(-2.0 * gain)) ** (n / 2.0)
    return mag * (1j**n)


def conversion_efficiency(gain: float) -> float:
    """Phonon-to-photon transfer efficiency of a readout pulse, 1 - e^{-2 gain}."""
    if gain < 0.0:
        raise ConfigError(f"gain must be >= 0, got {gain!r}")
    return -math.expm1(-2.0 * gain)


# ---------------------------------------------------------------------------
# Sideband cooling
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class CoolingSteadyState:
    """Occupancy a continuous red-detuned drive cools the mechanics to.

    ``thermal`` and ``backaction`` are the standard weak-coupling limits
    (bath phonons leaking in against the optical damping rate, and the
    finite-linewidth quantum backaction floor); ``total`` is their sum.
    ``exact`` solves the full two-mode linear model without the adiabatic
    approximation, and ``rate`` is that model's slowest energy relaxation
    rate, which saturates once the optical damping approaches kappa.
    """

    thermal: float
    backaction: float
    total: float
    exact: float
    optical_damping: float
    rate: float


def cooling_steady_state(params: SystemParams, n_readout: float) -> CoolingSteadyState:
    if n_readout <= 0.0:
        raise ConfigError(f"n_readout must be > 0 for cooling, got {n_readout!r}")
    g2 = (params.g0**2) * n_readout
    if 4.0 * g2 >= params.omega_m**2:
        raise ConfigError(
            "drive too strong for the sideband-cooling expressions: "
            f"4 g0^2 n = {4.0 * g2:.3e} exceeds omega_m^2 = {params.omega_m**2:.3e}"
        )
    kappa, gamma = params.kappa, params.gamma
    gamma_opt = 4.0 * g2 / kappa

    thermal = gamma * (4.0 * g2 + kappa**2) * params.n_th / (4.0 * g2 * (kappa + gamma))
    backaction = (kappa**2 + 8.0 * g2) / (16.0 * (params.omega_m**2 - 4.0 * g2))

    exact = (
        gamma * params.n_th * (kappa + gamma + gamma_opt) / ((kappa + gamma) * (gamma + gamma_opt))
    )

    disc = (kappa - gamma) ** 2 / 4.0 - 4.0 * g2
    if disc >= 0.0:
        rate = (kappa + gamma) / 2.0 - math.sqrt(disc)
    else:
        rate = (kappa + gamma) / 2.0  # underdamped: envelope decay only
    return CoolingSteadyState(
        thermal=thermal,
        backaction=backaction,
        total=thermal + backaction,
        exact=exact,
        optical_damping=gamma_opt,
        rate=rate,
    )


def rabi_frequency(params: SystemParams, n_readout: float) -> float | None:
    """Photon-phonon exchange-revival frequency under a readout drive (rad/s).

    The hybridized cavity-mechanics modes beat at
    0.5 * sqrt(g0^2 n - kappa^2 / 16) once the drive-enhanced coupling
    overcomes the linewidth splitting; the intensity-correlation maxima of
    the emitted light recur with period 2 pi over this value. Returns None
    in the overdamped regime and 0.0 exactly at threshold.
    """
    if n_readout < 0.0:
        raise ConfigError(f"n_readout must be >= 0, got {n_readout!r}")
    arg = params.g0**2 * n_readout - params.kappa**2 / 16.0
    if arg < 0.0:
        return None
    return 0.5 * math.sqrt(arg)


def rabi_threshold_photon_number(params: SystemParams) -> float:
    """Readout photon number above which photon-phonon exchange oscillates."""
    return (params.kappa / (4.0 * params.g0)) ** 2


# ---------------------------------------------------------------------------
# DLCZ-style remote entanglement budget
# ---------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class DlczEstimate:
    """Write-gain operating point for heralded remote entanglement.

    ``fidelity_clamped`` flags estimates whose raw fidelity fell outside
    [0, 1] (too-strong write pulse, or a thermal floor that formally pushes
    the expression above unity) and was pinned to the boundary.
    """

    repetition_rate: float
    gain: float
    detection_efficiency: float
    n_0: float
    fidelity: float
    entanglement_time: float
    fidelity_clamped: bool


def dlcz_estimate(
    repetition_rate: float,
    gain: float,
    detection_efficiency: float,
    n_0: float = 0.0,
) -> DlczEstimate:
    """Entanglement fidelity and average generation time at a write gain.

    Fidelity is degraded by undetected double pairs, three ways each to
    lose one, and by the thermal floor:
    F = (1 - 3 * (2 gain) * (1 - eta)) / (1 - n_0), clamped to [0, 1].
    The mean time to a herald on either of two nodes is
    1 / (2 * rate * (2 gain) * eta).
    """
    if gain <= 0.0:
        raise ConfigError(f"gain must be > 0, got {gain!r}")
    if not (0.0 < detection_efficiency <= 1.0):
        raise ConfigError(f"detection_efficiency must be in (0, 1], got {detection_efficiency!r}")
    if repetition_rate <= 0.0:
        raise ConfigError(f"repetition_rate must be > 0, got {repetition_rate!r}")
    _bright_fraction(n_0)  # validates n_0 >= 0
    if n_0 >= 1.0:
        raise ConfigError(f"n_0 must be < 1 for the fidelity estimate, got {n_0!r}")

    raw = (1.0 - 3.0 * (2.0 * gain) * (1.0 - detection_efficiency)) / (1.0 - n_0)
    fidelity = min(1.0, max(0.0, raw))
    t_ent = 1.0 / (2.0 * repetition_rate * (2.0 * gain) * detection_efficiency)
    return DlczEstimate(
        repetition_rate=repetition_rate,
        gain=gain,
        detection_efficiency=detection_efficiency,
        n_0=n_0,
        fidelity=fidelity,
        entanglement_time=t_ent,
        fidelity_clamped=(raw != fidelity),
    )


def dlcz_gain_for_fidelity(
    fidelity: float,
    *,
    n_0: float,
    detection_efficiency: float,
) -> float:
    """Write gain that hits a target entanglement fidelity (inverse of above)."""
    if not (0.0 < fidelity <= 1.0):
        raise ConfigError(f"fidelity must be in (0, 1], got {fidelity!r}")
    if not (0.0 < detection_efficiency < 1.0):
        raise ConfigError(
            f"detection_efficiency must be in (0, 1) to invert, got {detection_efficiency!r}"
        )
    if not (0.0 <= n_0 < 1.0):
        raise ConfigError(f"n_0 must be in [0, 1), got {n_0!r}")
    gain = (1.0 - fidelity * (1.0 - n_0)) / (6.0 * (1.0 - detection_efficiency))
    if gain <= 0.0:
        raise ConfigError(
            f"fidelity {fidelity} is unreachable at n_0={n_0}: would need gain {gain:.3g}"
        )
    return gain
