"""System parameters, pulse schedules, and operating-regime checks.

All frequencies are stored as angular rates (rad/s). Constructors that
accept laboratory-style values in Hz are provided (``SystemParams.from_hz``)
so configs can be written the way instruments report them. Occupancies are
dimensionless mean quanta.

A protocol run is described by a :class:`DriveSchedule`: an ordered list of
pulse segments, each either a blue-detuned write pulse (two-mode-squeezing
interaction), a red-detuned readout/cooling pulse (beam-splitter
interaction), or a dark interval. Segment boundaries are half-open
``[start, end)``; a query exactly on a boundary belongs to the later
segment, and the final instant of the schedule belongs to the last one.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from pathlib import Path

from .exceptions import ConfigError, InvalidScheduleError

HBAR = 1.054571817e-34  # J s
TWO_PI = 2.0 * math.pi


class SegmentKind(str, enum.Enum):
    """What a drive segment does to the optomechanical system."""

    COOL = "cool"
    WRITE = "write"
    OFF = "off"
    READOUT = "readout"


class Sideband(str, enum.Enum):
    """Which motional sideband the drive tone sits on.

    The lower sideband (drive at cavity frequency minus the mechanical
    frequency) gives the beam-splitter interaction used for cooling and
    readout; the upper sideband gives the two-mode-squeezing interaction
    used for the write pulse. Both sit one mechanical frequency away from
    cavity resonance, so the circulating photon number for a given input
    power is the same for either choice.
    """

    UPPER = "upper"
    LOWER = "lower"


@dataclasses.dataclass(frozen=True)
class SystemParams:
    """Static device parameters.

    Parameters
    ----------
    g0 : float
        Vacuum optomechanical coupling rate (rad/s).
    kappa : float
        Total cavity energy decay rate (rad/s).
    gamma : float
        Intrinsic mechanical energy decay rate (rad/s). May be zero for
        idealized lossless-mechanics studies.
    omega_m : float
        Mechanical resonance frequency (rad/s).
    omega_c : float
        Cavity resonance frequency (rad/s). Only used to convert between
        optical input power and circulating photon number.
    n_th : float
        Mechanical bath occupancy the resonator thermalizes toward.
    n_0 : float
        Residual mechanical occupancy at the start of the protocol,
        i.e. after any pre-cooling. Must not exceed ``n_th``.
    """

    g0: float
    kappa: float
    gamma: float
    omega_m: float
    omega_c: float
    n_th: float
    n_0: float

    def __post_init__(self) -> None:
        for name in ("g0", "kappa", "omega_m", "omega_c"):
            value = getattr(self, name)
            if not (value > 0.0) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a positive finite rate, got {value!r}")
        if self.gamma < 0.0 or not math.isfinite(self.gamma):
            raise ConfigError(f"gamma must be >= 0, got {self.gamma!r}")
        if self.n_th < 0.0 or self.n_0 < 0.0:
            raise ConfigError("occupancies n_th, n_0 must be >= 0")
        if self.n_0 > self.n_th:
            raise ConfigError(
                f"initial occupancy n_0={self.n_0} exceeds bath occupancy n_th={self.n_th}; "
                "pre-cooling cannot end hotter than the bath"
            )

    @classmethod
    def from_hz(
        cls,
        *,
        g0_over_2pi: float,
        kappa_over_2pi: float,
        gamma_over_2pi: float,
        omega_m_over_2pi: float,
        omega_c_over_2pi: float,
        n_th: float,
        n_0: float,
    ) -> "SystemParams":
        """Build from ordinary (cyclic) frequencies in Hz."""
        return cls(
            g0=TWO_PI * g0_over_2pi,
            kappa=TWO_PI * kappa_over_2pi,
            gamma=TWO_PI * gamma_over_2pi,
            omega_m=TWO_PI * omega_m_over_2pi,
            omega_c=TWO_PI * omega_c_over_2pi,
            n_th=n_th,
            n_0=n_0,
        )

    def replace(self, **changes: float) -> "SystemParams":
        return dataclasses.replace(self, **changes)


@dataclasses.dataclass(frozen=True)
class PulseSegment:
    """One contiguous interval of the drive schedule.

    ``n_cavity`` is the steady circulating photon number set up by the
    drive tone during this segment (zero when the drive is off).
    """

    kind: SegmentKind
    duration: float
    n_cavity: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SegmentKind(self.kind))
        if not (self.duration > 0.0) or not math.isfinite(self.duration):
            raise InvalidScheduleError(
                f"segment duration must be positive and finite, got {self.duration!r}"
            )
        if self.kind is SegmentKind.OFF:
            object.__setattr__(self, "n_cavity", 0.0)
        elif self.n_cavity < 0.0 or not math.isfinite(self.n_cavity):
            raise InvalidScheduleError(f"n_cavity must be >= 0, got {self.n_cavity!r}")


@dataclasses.dataclass(frozen=True)
class DriveSchedule:
    """An ordered, gap-free sequence of pulse segments starting at t=0."""

    segments: tuple[PulseSegment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise InvalidScheduleError("schedule needs at least one segment")

    @property
    def start_times(self) -> tuple[float, ...]:
        times = [0.0]
        for seg in self.segments[:-1]:
            times.append(times[-1] + seg.duration)
        return tuple(times)

    @property
    def total_duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def segment_at(self, t: float) -> tuple[int, PulseSegment]:
        """Return (index, segment) covering time ``t``.

        Boundaries belong to the later segment; ``t == total_duration``
        belongs to the last one.
        """
        total = self.total_duration
        if t < 0.0 or t > total * (1.0 + 1e-12) + 1e-300:
            raise InvalidScheduleError(f"t={t!r} outside schedule [0, {total!r}]")
        edge = 0.0
        for i, seg in enumerate(self.segments):
            edge += seg.duration
            if t < edge:
                return i, seg
        return len(self.segments) - 1, self.segments[-1]

    def segment_index_for_start(self, t_start: float) -> int:
        return self.segment_at(t_start)[0]


def effective_coupling(params: SystemParams, segment: PulseSegment) -> float:
    """Drive-enhanced coupling rate g = g0 * sqrt(n_cavity) for a segment."""
    return params.g0 * math.sqrt(segment.n_cavity)


def coupling_pair(params: SystemParams, segment: PulseSegment) -> tuple[float, float]:
    """Two-mode-squeezing and beam-splitter rates (g_plus, g_minus) for a segment.

    A write segment drives only the squeezing term; readout and cooling
    segments drive only the beam-splitter term; dark segments drive neither.
    """
    g = effective_coupling(params, segment)
    if segment.kind is SegmentKind.WRITE:
        return g, 0.0
    if segment.kind in (SegmentKind.READOUT, SegmentKind.COOL):
        return 0.0, g
    return 0.0, 0.0


def tilde_gain(params: SystemParams, segment: PulseSegment) -> float:
    """Adiabatic pair-production / conversion rate 2 g^2 / kappa (1/s).

    Valid when the cavity is much faster than the effective coupling
    (g << kappa), so the optical field follows the mechanics.
    """
    g = effective_coupling(params, segment)
    return 2.0 * g * g / params.kappa


def power_to_photon_number(
    params: SystemParams, power: float, sideband: Sideband = Sideband.LOWER
) -> float:
    """Circulating photon number for an input power (W) on a sideband tone.

    Assumes a single fully coupled port and a drive detuned from cavity
    resonance by one mechanical frequency; the detuning enters squared, so
    both sideband tones give the same number.
    """
    Sideband(sideband)  # validate
    if power < 0.0:
        raise ConfigError(f"power must be >= 0, got {power!r}")
    denom = HBAR * params.omega_c * (params.omega_m**2 + params.kappa**2 / 4.0)
    return params.kappa * power / denom


def photon_number_to_power(
    params: SystemParams, n_cavity: float, sideband: Sideband = Sideband.LOWER
) -> float:
    """Inverse of :func:`power_to_photon_number` (returns W)."""
    Sideband(sideband)
    if n_cavity < 0.0:
        raise ConfigError(f"n_cavity must be >= 0, got {n_cavity!r}")
    denom = HBAR * params.omega_c * (params.omega_m**2 + params.kappa**2 / 4.0)
    return n_cavity * denom / params.kappa


@dataclasses.dataclass(frozen=True)
class RegimeReport:
    """Result of checking a parameter set + schedule against the regime
    the closed-form expressions assume.

    ``margins`` maps each check name to the dimensionless quantity being
    bounded, so a caller can see how close to the edge a run sits. The
    thermal decoherence time 1/(gamma * n_th) is reported under both rate
    conventions since configs in the wild quote it both ways.
    """

    weak_coupling_ok: bool
    sideband_resolved_ok: bool
    decoherence_budget_ok: bool
    pulse_bandwidth_ok: bool
    ground_state_ok: bool
    margins: dict[str, float]
    thermal_decoherence_time_angular: float
    thermal_decoherence_time_cycles: float

    @property
    def all_ok(self) -> bool:
        return (
            self.weak_coupling_ok
            and self.sideband_resolved_ok
            and self.decoherence_budget_ok
            and self.pulse_bandwidth_ok
            and self.ground_state_ok
        )


def validate_regime(params: SystemParams, schedule: DriveSchedule) -> RegimeReport:
    """Check the assumptions behind the adiabatic closed forms.

    Checks: single-photon coupling far below the cavity linewidth, cavity
    linewidth far below the mechanical frequency, thermal decoherence
    accumulated over write+storage small, write pulse long compared with
    the cavity response, and near-ground-state initial mechanics.
    """
    t_write = sum(s.duration for s in schedule.segments if s.kind is SegmentKind.WRITE)
    t_off = sum(s.duration for s in schedule.segments if s.kind is SegmentKind.OFF)

    weak = params.g0 / params.kappa
    sideband = params.kappa / params.omega_m
    budget = (t_write + t_off) * params.gamma * params.n_th
    bandwidth = params.kappa * t_write if t_write > 0.0 else math.inf

    gn = params.gamma * params.n_th
    t_dec_angular = math.inf if gn == 0.0 else 1.0 / gn
    t_dec_cycles = math.inf if gn == 0.0 else TWO_PI / gn

    return RegimeReport(
        weak_coupling_ok=weak < 0.1,
        sideband_resolved_ok=sideband < 0.1,
        decoherence_budget_ok=budget <= 0.25,
        pulse_bandwidth_ok=bandwidth > 1.0,
        ground_state_ok=params.n_0 < 0.1,
        margins={
            "g0_over_kappa": weak,
            "kappa_over_omega_m": sideband,
            "thermal_phonons_during_protocol": budget,
            "kappa_times_t_write": bandwidth,
            "n_0": params.n_0,
        },
        thermal_decoherence_time_angular=t_dec_angular,
        thermal_decoherence_time_cycles=t_dec_cycles,
    )


def default_params() -> SystemParams:
    """Parameters of the reference device used throughout the examples.

    A 5.1 GHz mechanical mode coupled to a 1540 nm optical cavity with a
    140 MHz linewidth, g0/2pi = 1 MHz, a 7.5 kHz mechanical linewidth, a
    6.4-phonon bath, and 0.01 residual occupancy after pre-cooling.
    """
    return SystemParams.from_hz(
        g0_over_2pi=1.0e6,
        kappa_over_2pi=0.14e9,
        gamma_over_2pi=7.5e3,
        omega_m_over_2pi=5.1e9,
        omega_c_over_2pi=1.947e14,
        n_th=6.4,
        n_0=0.01,
    )


def protocol_schedule(
    *,
    t_write: float,
    n_write: float,
    t_off: float,
    t_readout: float,
    n_readout: float,
    t_cool: float = 0.0,
    n_cool: float = 0.0,
) -> DriveSchedule:
    """Standard write -> store -> read sequence, with an optional leading
    pre-cooling segment. Zero-duration stages are simply omitted."""
    segments: list[PulseSegment] = []
    if t_cool > 0.0:
        segments.append(PulseSegment(SegmentKind.COOL, t_cool, n_cool))
    segments.append(PulseSegment(SegmentKind.WRITE, t_write, n_write))
    if t_off > 0.0:
        segments.append(PulseSegment(SegmentKind.OFF, t_off))
    if t_readout > 0.0:
        segments.append(PulseSegment(SegmentKind.READOUT, t_readout, n_readout))
    return DriveSchedule(tuple(segments))


# ---------------------------------------------------------------------------
# Config-file parsing (INI).
#
# [system]   keys: g0_over_2pi, kappa_over_2pi, gamma_over_2pi,
#            omega_m_over_2pi, omega_c_over_2pi (all Hz), n_th, n_0.
#            Missing keys fall back to default_params().
# [schedule] keys: segment.<i>.kind / .duration / .n_cavity, i = 0,1,2,...
#            contiguous from 0.
# Other sections are left for the caller (sweep definitions etc.).
# ---------------------------------------------------------------------------

_SYSTEM_HZ_KEYS = {
    "g0_over_2pi": "g0",
    "kappa_over_2pi": "kappa",
    "gamma_over_2pi": "gamma",
    "omega_m_over_2pi": "omega_m",
    "omega_c_over_2pi": "omega_c",
}


def load_config(path: str | Path) -> configparser.ConfigParser:
    """Read an INI config file, raising ConfigError on any parse problem."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with p.open() as fh:
            cp.read_file(fh)
    except (configparser.Error, OSError) as exc:
        raise ConfigError(f"could not parse {p}: {exc}") from exc
    return cp


def _get_float(cp: configparser.ConfigParser, section: str, key: str) -> float:
    raw = cp.get(section, key)
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from exc


def params_from_config(cp: configparser.ConfigParser) -> SystemParams:
    """Build SystemParams from the [system] section, defaulting absent keys."""
    base = default_params()
    if not cp.has_section("system"):
        return base
    changes: dict[str, float] = {}
    for key in cp.options("system"):
        if key in _SYSTEM_HZ_KEYS:
            changes[_SYSTEM_HZ_KEYS[key]] = TWO_PI * _get_float(cp, "system", key)
        elif key in ("n_th", "n_0"):
            changes[key] = _get_float(cp, "system", key)
        else:
            raise ConfigError(f"unknown key in [system]: {key}")
    return base.replace(**changes)


def schedule_from_config(cp: configparser.ConfigParser) -> DriveSchedule | None:
    """Build a DriveSchedule from the [schedule] section, or None if absent."""
    if not cp.has_section("schedule"):
        return None
    fields: dict[int, dict[str, str]] = {}
    for key in cp.options("schedule"):
        parts = key.split(".")
        if len(parts) != 3 or parts[0] != "segment":
            raise ConfigError(f"unknown key in [schedule]: {key}")
        try:
            idx = int(parts[1])
        except ValueError as exc:
            raise ConfigError(f"bad segment index in [schedule]: {key}") from exc
        if parts[2] not in ("kind", "duration", "n_cavity"):
            raise ConfigError(f"unknown segment field in [schedule]: {key}")
        fields.setdefault(idx, {})[parts[2]] = cp.get("schedule", key)
    if not fields:
        return None
    if sorted(fields) != list(range(len(fields))):
        raise ConfigError(f"segment indices must be 0..{len(fields) - 1}, got {sorted(fields)}")
    segments = []
    for i in range(len(fields)):
        entry = fields[i]
        if "kind" not in entry or "duration" not in entry:
            raise ConfigError(f"segment.{i} needs at least .kind and .duration")
        try:
            kind = SegmentKind(entry["kind"].strip().lower())
        except ValueError as exc:
            raise ConfigError(f"segment.{i}.kind = {entry['kind']!r} is not a segment kind") from exc
        try:
            duration = float(entry["duration"])
            n_cavity = float(entry.get("n_cavity", "0"))
        except ValueError as exc:
            raise ConfigError(f"segment.{i} has a non-numeric field") from exc
        segments.append(PulseSegment(kind, duration, n_cavity))
    return DriveSchedule(tuple(segments))
