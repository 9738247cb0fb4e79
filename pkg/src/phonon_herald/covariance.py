"""Two-time Gaussian moment propagation for the driven optomechanical pair.

The linearized dynamics couple the cavity field a and the mechanical mode b
through either a pair-production term (upper-sideband write pulse) or a
beam-splitter term (lower-sideband readout/cooling pulse). With Gaussian
inputs everything is fixed by the 4x4 matrix of second moments of the
operator vector v = (a, a_dag, b, b_dag):

    G(t1, t2)[i, j] = < v_i(t1) v_j(t2) >

in that literal operator order, *without* normal ordering, so commutators
stay visible (e.g. G[0,1] - G[1,0] = 1 at equal times).

Equal-time blocks obey dG/dt = M G + G M^T + N. Piecewise-constant drives
make M and N constant on each segment, so the step across an interval of
length L is

    G -> U G U^T + D(L),      U = X e^{Lambda L} X^{-1},

where D is the accumulated input noise, computed in the eigenbasis of M
(see :func:`noise_integral`). Two-time blocks then follow from the quantum
regression theorem: for t1 < t2, G(t1, t2) = G(t1, t1) U(t1 -> t2)^T and
G(t2, t1) = U(t1 -> t2) G(t1, t1).

Segments whose drift is (numerically) defective - the write-pulse
threshold where the discriminant of the eigenvalue pair vanishes - fall
back to a dense matrix exponential plus direct quadrature of the noise
integral.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad_vec
from scipy.linalg import expm

from .exceptions import InvalidScheduleError
from .params import DriveSchedule, PulseSegment, SystemParams, coupling_pair

Complex4x4 = NDArray[np.complex128]


class Op(enum.IntEnum):
    """Index of each operator in the vector v = (a, a_dag, b, b_dag)."""

    A = 0
    ADAG = 1
    B = 2
    BDAG = 3


@dataclasses.dataclass(frozen=True)
class DriftMatrix:
    """Drift matrix M of d<v>/dt = M <v>, with the rates that built it.

    Keeping (g_plus, g_minus, kappa, gamma) alongside the matrix lets the
    eigendecomposition detect the defective point from the closed-form
    discriminant instead of guessing from floating-point eigenvalues.
    """

    m: Complex4x4
    g_plus: float
    g_minus: float
    kappa: float
    gamma: float

    @property
    def discriminant(self) -> float:
        """(kappa-gamma)^2/4 - 4 (g_minus^2 - g_plus^2); zero when M is defective."""
        return (self.kappa - self.gamma) ** 2 / 4.0 - 4.0 * (self.g_minus**2 - self.g_plus**2)


def _drift_from_rates(g_plus: float, g_minus: float, kappa: float, gamma: float) -> DriftMatrix:
    jgp = 1j * g_plus
    jgm = 1j * g_minus
    m = np.array(
        [
            [-kappa / 2.0, 0.0, jgm, jgp],
            [0.0, -kappa / 2.0, -jgp, -jgm],
            [jgm, jgp, -gamma / 2.0, 0.0],
            [-jgp, -jgm, 0.0, -gamma / 2.0],
        ],
        dtype=np.complex128,
    )
    return DriftMatrix(m=m, g_plus=g_plus, g_minus=g_minus, kappa=kappa, gamma=gamma)


def build_drift(params: SystemParams, segment: PulseSegment) -> DriftMatrix:
    """Drift matrix for one schedule segment."""
    g_plus, g_minus = coupling_pair(params, segment)
    return _drift_from_rates(g_plus, g_minus, params.kappa, params.gamma)


def noise_matrix(kappa: float, gamma: float, n_th: float) -> Complex4x4:
    """Input-noise matrix N: vacuum on the optical port, n_th thermal on the
    mechanical port."""
    n = np.zeros((4, 4), dtype=np.complex128)
    n[Op.A, Op.ADAG] = kappa
    n[Op.B, Op.BDAG] = gamma * (n_th + 1.0)
    n[Op.BDAG, Op.B] = gamma * n_th
    return n


def thermal_block(n_mech: float) -> Complex4x4:
    """Initial G(0,0): optical vacuum, mechanics thermal at n_mech quanta."""
    g = np.zeros((4, 4), dtype=np.complex128)
    g[Op.A, Op.ADAG] = 1.0
    g[Op.B, Op.BDAG] = n_mech + 1.0
    g[Op.BDAG, Op.B] = n_mech
    return g


def phi_integral(s: NDArray[np.complex128], length: float) -> NDArray[np.complex128]:
    """Elementwise (e^{s L} - 1) / s, series-expanded where s L is tiny.

    np.expm1 refuses complex arguments, so the cancellation near s L -> 0
    is handled with a 4-term Taylor series instead (crossover at |s L| =
    1e-4 keeps both branches well under machine accuracy).
    """
    s = np.asarray(s, dtype=np.complex128)
    z = s * length
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, s)
    direct = (np.exp(z) - 1.0) / safe
    series = length * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0)
    return np.where(small, series, direct)


@dataclasses.dataclass(frozen=True)
class EigenSystem:
    """Eigendecomposition of a segment drift, or the fallback flag.

    When ``degenerate`` is set the decomposition fields are None and every
    consumer routes through dense matrix exponentials of ``drift.m``.
    """

    drift: DriftMatrix
    lambdas: NDArray[np.complex128] | None
    vectors: Complex4x4 | None
    inverse: Complex4x4 | None
    degenerate: bool


def eigensystem(
    drift: DriftMatrix,
    *,
    degeneracy_tol: float = 1e-12,
    cond_limit: float = 1e8,
) -> EigenSystem:
    """Diagonalize a drift matrix, or flag it for the dense fallback.

    The eigenvalue pairs of M are -(kappa+gamma)/4 +- sqrt(disc)/2; at
    disc = 0 the matrix is defective and the eigenbasis route breaks down,
    so both a scaled |disc| test and the conditioning of the eigenvector
    matrix gate the closed-form path.
    """
    scale = max(drift.kappa, drift.gamma, drift.g_plus, drift.g_minus) ** 2
    degenerate = abs(drift.discriminant) < degeneracy_tol * scale
    lambdas = vectors = inverse = None
    if not degenerate:
        lambdas, vectors = np.linalg.eig(drift.m)
        if np.linalg.cond(vectors) > cond_limit:
            degenerate = True
            lambdas = vectors = None
        else:
            inverse = np.linalg.inv(vectors)
    return EigenSystem(
        drift=drift,
        lambdas=lambdas,
        vectors=vectors,
        inverse=inverse,
        degenerate=degenerate,
    )


def propagator(eig: EigenSystem, dt: float) -> Complex4x4:
    """Mean-value propagator U(dt) = e^{M dt} for one segment's drift."""
    if eig.degenerate:
        return expm(eig.drift.m * dt)
    return (eig.vectors * np.exp(eig.lambdas * dt)) @ eig.inverse


def noise_integral(
    eig: EigenSystem,
    noise: Complex4x4,
    t1: float,
    t2: float,
    t_lower: float,
) -> Complex4x4:
    """Accumulated input noise between two (possibly unequal) times.

    Evaluates  integral_{t_lower}^{min(t1,t2)} U(t1-s) N U(t2-s)^T ds
    for a single segment's constant drift and noise. In the eigenbasis the
    (i,j) entry integrates to

        E_ij * (e^{(lambda_i+lambda_j) L} - 1) / (lambda_i + lambda_j),

    with L = min(t1,t2) - t_lower and E_ij the end-point factors
    e^{lambda_i (t1-m)} e^{lambda_j (t2-m)}; the removable singularity at
    lambda_i + lambda_j -> 0 is series-expanded (:func:`phi_integral`).
    Degenerate drifts integrate the matrix-exponential form directly by
    adaptive quadrature.
    """
    m = min(t1, t2)
    length = m - t_lower
    if length < 0.0:
        raise InvalidScheduleError(
            f"noise integral needs t_lower <= min(t1, t2), got {t_lower!r} > {m!r}"
        )
    if length == 0.0:
        return np.zeros((4, 4), dtype=np.complex128)

    if eig.degenerate:
        drift_m = eig.drift.m

        def integrand(s: float) -> Complex4x4:
            w1 = expm(drift_m * (t1 - s))
            w2 = expm(drift_m * (t2 - s))
            return w1 @ noise @ w2.T

        d, _err = quad_vec(integrand, t_lower, m)
        return d

    x, xinv, lam = eig.vectors, eig.inverse, eig.lambdas
    y = xinv @ noise @ xinv.T
    ends = np.exp(lam * (t1 - m))[:, None] * np.exp(lam * (t2 - m))[None, :]
    phi = phi_integral(lam[:, None] + lam[None, :], length)
    return x @ (y * ends * phi) @ x.T


@dataclasses.dataclass(frozen=True)
class SegmentGenerators:
    """Eigensystem and noise matrix for one schedule segment."""

    eig: EigenSystem
    noise: Complex4x4


def segment_generators(
    params: SystemParams,
    segment: PulseSegment,
    *,
    degeneracy_tol: float = 1e-12,
    cond_limit: float = 1e8,
) -> SegmentGenerators:
    """Assemble the propagation machinery for a segment."""
    drift = build_drift(params, segment)
    eig = eigensystem(drift, degeneracy_tol=degeneracy_tol, cond_limit=cond_limit)
    return SegmentGenerators(
        eig=eig, noise=noise_matrix(params.kappa, params.gamma, params.n_th)
    )


def _step(gen: SegmentGenerators, g: Complex4x4, dt: float) -> tuple[Complex4x4, Complex4x4]:
    """Advance an equal-time block by dt within one segment.

    Returns (new block, propagator U over the interval).
    """
    u = propagator(gen.eig, dt)
    d = noise_integral(gen.eig, gen.noise, dt, dt, 0.0)
    return u @ g @ u.T + d, u


@dataclasses.dataclass(frozen=True)
class CovarianceBlock:
    """One labelled two-time block G(t1, t2)."""

    t1: float
    t2: float
    g: Complex4x4


@dataclasses.dataclass
class CovarianceSet:
    """Equal-time blocks at a set of marked times plus the propagators
    linking them, with lazy construction of any two-time block.

    ``steps[k]`` maps marked time k to marked time k+1. Two-time blocks and
    composed propagators are cached per index pair, so the full quadratic
    family of pairs is available without being materialized eagerly.
    """

    times: NDArray[np.float64]
    equal_time: list[Complex4x4]
    steps: list[Complex4x4]
    _props: dict[tuple[int, int], Complex4x4] = dataclasses.field(
        default_factory=dict, repr=False, compare=False
    )
    _blocks: dict[tuple[int, int], Complex4x4] = dataclasses.field(
        default_factory=dict, repr=False, compare=False
    )

    def index(self, t: float) -> int:
        """Locate a marked time, with 1e-9 relative slack on the grid span."""
        tol = 1e-9 * max(abs(self.times[-1]), abs(t), 1e-300)
        i = int(np.searchsorted(self.times, t))
        for k in (i - 1, i):
            if 0 <= k < len(self.times) and abs(self.times[k] - t) <= tol:
                return k
        raise ValueError(f"t={t!r} is not a marked time of this covariance set")

    def propagator(self, i: int, j: int) -> Complex4x4:
        """U carrying marked time i to marked time j (i <= j)."""
        if i == j:
            return np.eye(4, dtype=np.complex128)
        key = (i, j)
        if key not in self._props:
            self._props[key] = self.steps[j - 1] @ self.propagator(i, j - 1)
        return self._props[key]

    def block(self, t1: float, t2: float) -> Complex4x4:
        """G(t1, t2) for any pair of marked times."""
        i, j = self.index(t1), self.index(t2)
        key = (i, j)
        if key not in self._blocks:
            if i == j:
                self._blocks[key] = self.equal_time[i]
            elif i < j:
                self._blocks[key] = self.equal_time[i] @ self.propagator(i, j).T
            else:
                self._blocks[key] = self.propagator(j, i) @ self.equal_time[j]
        return self._blocks[key]

    def pair(self, t1: float, t2: float) -> CovarianceBlock:
        """Labelled variant of :meth:`block`."""
        return CovarianceBlock(t1=t1, t2=t2, g=self.block(t1, t2))


def _merged_times(marked_times, total: float) -> NDArray[np.float64]:
    times = np.sort(np.asarray(list(marked_times), dtype=float))
    if times.size == 0:
        raise InvalidScheduleError("at least one marked time is required")
    if times[0] < 0.0 or times[-1] > total * (1.0 + 1e-9):
        raise InvalidScheduleError(
            f"marked times must lie within the schedule [0, {total!r}], "
            f"got range [{times[0]!r}, {times[-1]!r}]"
        )
    tol = 1e-12 * max(total, 1e-300)
    keep = [times[0]]
    for t in times[1:]:
        if t - keep[-1] > tol:
            keep.append(t)
    return np.array(keep)


def evolve_schedule(
    params: SystemParams,
    schedule: DriveSchedule,
    init: Complex4x4 | None,
    marked_times,
) -> CovarianceSet:
    """Propagate the second moments through a drive schedule.

    ``init`` is the G(0,0) block (None means optical vacuum with the
    mechanics thermal at ``params.n_0``). ``marked_times`` are the instants
    correlation functions will be evaluated at; duplicates (within 1e-12 of
    the schedule span) collapse. The walk visits every segment boundary up
    to the last marked time so each sub-interval sees a single constant
    drive.
    """
    total = schedule.total_duration
    times = _merged_times(marked_times, total)
    tol = 1e-12 * max(total, 1e-300)

    g = np.array(init if init is not None else thermal_block(params.n_0), dtype=complex)
    if g.shape != (4, 4):
        raise InvalidScheduleError(f"initial block must be 4x4, got {g.shape}")

    boundaries = []
    edge = 0.0
    for seg in schedule.segments[:-1]:
        edge += seg.duration
        if edge < times[-1] - tol:
            boundaries.append(edge)
    events = sorted(set(np.concatenate([times, np.array(boundaries)]).tolist()))

    gen_cache: dict[int, SegmentGenerators] = {}
    equal_time: list[Complex4x4] = []
    steps: list[Complex4x4] = []
    running = np.eye(4, dtype=np.complex128)
    cursor = 0.0
    next_mark = 0

    if abs(times[0]) <= tol:
        equal_time.append(g.copy())
        next_mark = 1

    for event in events:
        dt = event - cursor
        if dt > tol:
            seg_idx, _seg = schedule.segment_at(cursor)
            if seg_idx not in gen_cache:
                gen_cache[seg_idx] = segment_generators(params, schedule.segments[seg_idx])
            g, u = _step(gen_cache[seg_idx], g, dt)
            running = u @ running
            cursor = event
        if next_mark < len(times) and abs(event - times[next_mark]) <= tol:
            equal_time.append(g.copy())
            if next_mark > 0:
                steps.append(running)
            running = np.eye(4, dtype=np.complex128)
            next_mark += 1

    if next_mark != len(times):
        raise InvalidScheduleError("internal walk failed to visit every marked time")
    return CovarianceSet(times=times, equal_time=equal_time, steps=steps)
