"""Conditional photon correlations from Gaussian moment factoring.

The states produced by the linearized dynamics are zero-mean Gaussians, so
any operator moment factors into two-operator blocks over all perfect
pairings (Wick / Isserlis), with each pair keeping its original left-right
order. Heralding on a write photon is then just a ratio of such moments:
e.g. the photon number at time t conditioned on a click at the herald time
t_w is <a'(t_w) a'(t) a(t) a(t_w)> / <a'(t_w) a(t_w)>.

All public functions take the :class:`~phonon_herald.covariance.CovarianceSet`
produced by ``evolve_schedule`` with every time of interest marked.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from collections.abc import Iterable, Iterator, Sequence

import numpy as np
from numpy.typing import NDArray

from .covariance import CovarianceSet, Op
from .exceptions import CoherenceNotResolved, ConditioningError, NumericalError

_FLOOR = 1e-30
_IMAG_REL_TOL = 1e-9

OperatorRequest = Sequence[tuple[float, Op]]


class CorrelationKind(str, enum.Enum):
    """Which correlation quantity a record holds."""

    G1 = "G1"
    G2 = "G2"
    G3 = "G3"
    G1_NORM = "g1_norm"
    G2_COND = "g2_cond"


@dataclasses.dataclass(frozen=True)
class CorrelationRecord:
    """One evaluated correlation: the quantity, its time arguments, and the
    herald time it was conditioned on (None for unconditioned moments)."""

    kind: CorrelationKind
    times: tuple[float, ...]
    value: float
    herald_time: float | None = None


def _pairings(indices: tuple[int, ...]) -> Iterator[tuple[tuple[int, int], ...]]:
    if not indices:
        yield ()
        return
    first, rest = indices[0], indices[1:]
    for k, partner in enumerate(rest):
        for tail in _pairings(rest[:k] + rest[k + 1 :]):
            yield ((first, partner),) + tail


PAIRINGS_4 = tuple(_pairings(tuple(range(4))))  # 3 pairings
PAIRINGS_6 = tuple(_pairings(tuple(range(6))))  # 15 pairings


def gaussian_moment(cov: CovarianceSet, request: OperatorRequest) -> complex:
    """Moment of an ordered product of mode operators at marked times.

    ``request`` lists (time, operator) factors left to right. Odd-length
    products vanish identically for these zero-mean states.
    """
    ops = [(float(t), Op(op)) for t, op in request]
    n = len(ops)
    if n == 0:
        return 1.0 + 0.0j
    if n % 2:
        return 0.0 + 0.0j
    if n == 2:
        pairings: Iterable[tuple[tuple[int, int], ...]] = (((0, 1),),)
    elif n == 4:
        pairings = PAIRINGS_4
    elif n == 6:
        pairings = PAIRINGS_6
    else:
        pairings = _pairings(tuple(range(n)))

    total = 0.0 + 0.0j
    for pairing in pairings:
        prod = 1.0 + 0.0j
        for i, j in pairing:
            t_i, op_i = ops[i]
            t_j, op_j = ops[j]
            prod *= cov.block(t_i, t_j)[op_i, op_j]
        total += prod
    return total


def _real(value: complex, label: str) -> float:
    if abs(value.imag) > _IMAG_REL_TOL * max(abs(value.real), _FLOOR):
        raise NumericalError(f"{label} should be real, got {value!r}")
    return float(value.real)


def herald_intensity(cov: CovarianceSet, t_herald: float) -> float:
    """Unconditional photon emission strength <a' a> at the herald time."""
    return _real(cov.block(t_herald, t_herald)[Op.ADAG, Op.A], "herald intensity")


def _joint_intensity(cov: CovarianceSet, t_herald: float, t: float) -> float:
    value = gaussian_moment(
        cov, [(t_herald, Op.ADAG), (t, Op.ADAG), (t, Op.A), (t_herald, Op.A)]
    )
    return _real(value, f"joint intensity at t={t!r}")


def conditional_photon_number(cov: CovarianceSet, t_herald: float, t: float) -> float:
    """Cavity photon number at time t given a herald click at t_herald."""
    g1 = herald_intensity(cov, t_herald)
    if g1 <= _FLOOR:
        raise ConditioningError("herald intensity vanishes; nothing to condition on")
    return _joint_intensity(cov, t_herald, t) / g1


def conditional_g2(
    cov: CovarianceSet, t_herald: float, t_read: float, tau: float = 0.0
) -> CorrelationRecord:
    """Herald-conditioned intensity correlation g2(t_read, t_read + tau).

    Built from the three-fold coincidence <a'(t_w) a'(t2) a'(t1) a(t1)
    a(t2) a(t_w)> normalized by the pair of conditioned intensities, so a
    value of 1 marks Poissonian readout light and values << 1 mark the
    single-phonon character surviving readout.
    """
    t2 = t_read + tau
    g1 = herald_intensity(cov, t_herald)
    num = gaussian_moment(
        cov,
        [
            (t_herald, Op.ADAG),
            (t2, Op.ADAG),
            (t_read, Op.ADAG),
            (t_read, Op.A),
            (t2, Op.A),
            (t_herald, Op.A),
        ],
    )
    g3 = _real(num, "three-fold coincidence")
    d1 = _joint_intensity(cov, t_herald, t_read)
    d2 = _joint_intensity(cov, t_herald, t2)
    if g1 <= _FLOOR or d1 <= _FLOOR or d2 <= _FLOOR:
        raise ConditioningError(
            "conditional g2 undefined: herald or readout intensity is numerically zero"
        )
    return CorrelationRecord(
        kind=CorrelationKind.G2_COND,
        times=(t_read, t2),
        value=g3 * g1 / (d1 * d2),
        herald_time=t_herald,
    )


def conditional_g1(
    cov: CovarianceSet, t_herald: float, t_read: float, tau: float
) -> CorrelationRecord:
    """Herald-conditioned field coherence |g1| between t_read and t_read + tau."""
    t2 = t_read + tau
    num = gaussian_moment(
        cov, [(t_herald, Op.ADAG), (t_read, Op.ADAG), (t2, Op.A), (t_herald, Op.A)]
    )
    d1 = _joint_intensity(cov, t_herald, t_read)
    d2 = _joint_intensity(cov, t_herald, t2)
    if d1 <= _FLOOR or d2 <= _FLOOR:
        raise ConditioningError("conditional g1 undefined: readout intensity vanishes")
    return CorrelationRecord(
        kind=CorrelationKind.G1_NORM,
        times=(t_read, t2),
        value=abs(num) / math.sqrt(d1 * d2),
        herald_time=t_herald,
    )


@dataclasses.dataclass(frozen=True)
class CoherenceEstimate:
    """1/e decay time of a (possibly oscillating) coherence trace."""

    time: float
    linewidth_hz: float
    oscillatory: bool


def coherence_time(
    taus: NDArray[np.float64] | Sequence[float],
    values: NDArray[np.float64] | Sequence[float],
) -> CoherenceEstimate:
    """Extract the 1/e time of a coherence trace sampled on a tau grid.

    Monotonic traces are interpolated directly. Traces with coherent
    photon-phonon exchange oscillate through zeros, so there the envelope
    through the local maxima (anchored at tau = 0) is what decays; the
    crossing is found by linear interpolation between the bracketing
    envelope samples either way. The quoted linewidth is the Lorentzian
    full width 1/(pi * time) in Hz.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if taus.ndim != 1 or taus.shape != values.shape or taus.size < 3:
        raise ValueError("need matching 1-d grids with at least 3 points")
    if np.any(np.diff(taus) <= 0.0):
        raise ValueError("tau grid must be strictly increasing")
    ref = values[0]
    if not (ref > 0.0):
        raise CoherenceNotResolved(f"trace starts at {ref!r}; no coherence to track")
    target = ref / math.e

    rises = np.diff(values) > 1e-9 * ref
    oscillatory = bool(np.any(rises))
    if oscillatory:
        keep = [0]
        for i in range(1, len(values) - 1):
            if values[i] >= values[i - 1] and values[i] > values[i + 1]:
                keep.append(i)
        if values[-1] > values[-2]:
            keep.append(len(values) - 1)
        env_t = taus[keep]
        env_v = values[keep]
    else:
        env_t, env_v = taus, values

    below = np.nonzero(env_v < target)[0]
    if below.size == 0:
        raise CoherenceNotResolved(
            f"trace never falls below 1/e of its start within tau <= {taus[-1]:.3g}"
        )
    j = int(below[0])
    t0, t1 = env_t[j - 1], env_t[j]
    v0, v1 = env_v[j - 1], env_v[j]
    frac = (v0 - target) / (v0 - v1)
    t_c = float(t0 + frac * (t1 - t0))
    return CoherenceEstimate(time=t_c, linewidth_hz=1.0 / (math.pi * t_c), oscillatory=oscillatory)
