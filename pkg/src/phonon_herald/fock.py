"""Truncated Fock-space oracle for the two-mode protocol.

A deliberately independent route to the same physics as the Gaussian
engine: represent the cavity/mechanics pair on a truncated number basis,
evolve the density matrix with the full Lindblad generator via
``scipy.sparse.linalg.expm_multiply`` (exact up to truncation, no
trajectory sampling), and condition on herald outcomes by explicit
projection. Used only for cross-validation in the tests - it shares no
code with the covariance engine beyond the parameter containers.

Everything is written in rate units (hbar = 1): the Hamiltonian during a
segment is H = -g_plus (a'b' + ab) - g_minus (a'b + ab'), with collapse
operators sqrt(kappa) a, sqrt(gamma (n_th+1)) b and sqrt(gamma n_th) b'.

Density matrices are vectorized row-major, so A rho B -> (A kron B^T) vec.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
from collections.abc import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.sparse.linalg import expm_multiply

from .exceptions import ConditioningError, ConfigError, TruncationError
from .params import PulseSegment, SystemParams, coupling_pair

DEFAULT_LEAK_TOL = 1e-6


@dataclasses.dataclass(frozen=True)
class RateSet:
    """Constant rates during one schedule segment (hashable cache key)."""

    g_plus: float
    g_minus: float
    kappa: float
    gamma: float
    n_th: float

    @classmethod
    def from_segment(cls, params: SystemParams, segment: PulseSegment) -> "RateSet":
        g_plus, g_minus = coupling_pair(params, segment)
        return cls(
            g_plus=g_plus,
            g_minus=g_minus,
            kappa=params.kappa,
            gamma=params.gamma,
            n_th=params.n_th,
        )


def destroy(dim: int) -> NDArray[np.complex128]:
    """Single-mode annihilation operator on a dim-level truncation."""
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(np.complex128)


def two_mode_ops(n_a: int, n_b: int) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Dense (a, b) on the n_a x n_b tensor space."""
    a = np.kron(destroy(n_a), np.eye(n_b))
    b = np.kron(np.eye(n_a), destroy(n_b))
    return a, b


@dataclasses.dataclass
class TruncatedState:
    """A (possibly unnormalized) two-mode operator on the truncated basis.

    Unnormalized matrices appear as intermediates of regression-style
    correlation functions, so no trace-one invariant is enforced here.
    """

    rho: NDArray[np.complex128]
    n_a: int
    n_b: int

    def __post_init__(self) -> None:
        dim = self.n_a * self.n_b
        if self.rho.shape != (dim, dim):
            raise ConfigError(f"rho must be {dim}x{dim} for cutoffs ({self.n_a}, {self.n_b})")

    @property
    def trace(self) -> float:
        return float(np.trace(self.rho).real)

    @property
    def populations(self) -> NDArray[np.float64]:
        """Joint number populations, shape (n_a, n_b)."""
        return np.diag(self.rho).real.reshape(self.n_a, self.n_b)

    @property
    def leakage(self) -> float:
        """Population sitting on either top truncation level."""
        pops = self.populations
        return float(pops[-1, :].sum() + pops[:, -1].sum())

    def mech_populations(self) -> NDArray[np.float64]:
        return self.populations.sum(axis=0)

    def photon_populations(self) -> NDArray[np.float64]:
        return self.populations.sum(axis=1)


def thermal_density(n_mean: float, dim: int) -> NDArray[np.complex128]:
    """Truncated thermal state, exact Boltzmann weights (tail not folded back
    in, so detailed-balance ratios stay exact; the missing trace is the
    truncation tail and must be negligible for the chosen dim)."""
    if n_mean < 0.0:
        raise ConfigError(f"n_mean must be >= 0, got {n_mean!r}")
    if n_mean == 0.0:
        w = np.zeros(dim)
        w[0] = 1.0
    else:
        p = n_mean / (1.0 + n_mean)
        w = (1.0 - p) * p ** np.arange(dim)
    return np.diag(w).astype(np.complex128)


def initial_state(params: SystemParams, n_a: int, n_b: int) -> TruncatedState:
    """Optical vacuum x mechanical thermal state at params.n_0."""
    vac = np.zeros((n_a, n_a), dtype=np.complex128)
    vac[0, 0] = 1.0
    rho = np.kron(vac, thermal_density(params.n_0, n_b))
    return TruncatedState(rho=rho, n_a=n_a, n_b=n_b)


@functools.lru_cache(maxsize=32)
def liouvillian(rates: RateSet, n_a: int, n_b: int) -> sp.csr_matrix:
    """Sparse Lindblad generator acting on row-major vectorized matrices."""
    a_dense, b_dense = two_mode_ops(n_a, n_b)
    a = sp.csr_matrix(a_dense)
    b = sp.csr_matrix(b_dense)
    dim = n_a * n_b
    eye = sp.identity(dim, format="csr", dtype=np.complex128)

    h = -rates.g_plus * (a.conj().T @ b.conj().T + a @ b) - rates.g_minus * (
        a.conj().T @ b + a @ b.conj().T
    )
    lv = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))

    collapse: list[sp.csr_matrix] = []
    if rates.kappa > 0.0:
        collapse.append(np.sqrt(rates.kappa) * a)
    if rates.gamma > 0.0:
        collapse.append(np.sqrt(rates.gamma * (rates.n_th + 1.0)) * b)
        if rates.n_th > 0.0:
            collapse.append(np.sqrt(rates.gamma * rates.n_th) * b.conj().T)
    for c in collapse:
        cdc = (c.conj().T @ c).tocsr()
        lv = lv + sp.kron(c, c.conj()) - 0.5 * (sp.kron(cdc, eye) + sp.kron(eye, cdc.T))
    return lv.tocsr()


def lindblad_evolve(
    state: TruncatedState,
    params: SystemParams,
    segment: PulseSegment,
    dt: float,
    *,
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> TruncatedState:
    """Evolve for ``dt`` under one schedule segment's constant drive."""
    return lindblad_evolve_rates(
        state, RateSet.from_segment(params, segment), dt, leak_tol=leak_tol
    )


def lindblad_evolve_rates(
    state: TruncatedState,
    rates: RateSet,
    duration: float,
    *,
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> TruncatedState:
    """Evolve for ``duration`` under constant rates.

    The leakage check is relative to the trace so the same routine can
    carry the unnormalized matrices used by regression correlators.
    """
    if duration < 0.0:
        raise ConfigError(f"duration must be >= 0, got {duration!r}")
    if duration == 0.0:
        return TruncatedState(rho=state.rho.copy(), n_a=state.n_a, n_b=state.n_b)
    lv = liouvillian(rates, state.n_a, state.n_b)
    vec = expm_multiply(lv * duration, state.rho.reshape(-1))
    out = TruncatedState(
        rho=vec.reshape(state.rho.shape), n_a=state.n_a, n_b=state.n_b
    )
    scale = max(abs(out.trace), 1e-300)
    if out.leakage > leak_tol * scale:
        raise TruncationError(
            f"truncation leak {out.leakage:.3e} exceeds {leak_tol:.1e} x trace "
            f"(cutoffs {state.n_a}, {state.n_b})"
        )
    return out


def evolve_through(
    state: TruncatedState,
    legs: Sequence[tuple[RateSet, float]],
    *,
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> TruncatedState:
    for rates, duration in legs:
        state = lindblad_evolve_rates(state, rates, duration, leak_tol=leak_tol)
    return state


class Detector(enum.Enum):
    """Herald detector model used when conditioning by projection."""

    PROJECTOR_ONE = "projector_one"  # ideal single-photon resolving, outcome 1
    THRESHOLD = "threshold"  # click on one or more photons


def condition_on_click(
    state: TruncatedState, detector: Detector = Detector.PROJECTOR_ONE
) -> tuple[TruncatedState, float]:
    """Project on a herald click, reset the optics to vacuum, renormalize.

    Returns the conditioned state and the click probability. The optical
    reset reflects the detector absorbing the write photon; the mechanical
    marginal is untouched.
    """
    blocks = state.rho.reshape(state.n_a, state.n_b, state.n_a, state.n_b)
    if detector is Detector.PROJECTOR_ONE:
        if state.n_a < 2:
            raise ConfigError("projector-1 conditioning needs at least 2 optical levels")
        mech = blocks[1, :, 1, :]
    elif detector is Detector.THRESHOLD:
        mech = blocks[1:, :, 1:, :].trace(axis1=0, axis2=2)
    else:  # pragma: no cover - enum is closed
        raise ConfigError(f"unknown detector {detector!r}")
    prob = float(np.trace(mech).real)
    if prob <= 1e-300:
        raise ConditioningError(f"herald click probability is numerically zero ({prob!r})")
    rho = np.zeros_like(state.rho).reshape(state.n_a, state.n_b, state.n_a, state.n_b)
    rho[0, :, 0, :] = np.asarray(mech) / prob
    return (
        TruncatedState(rho=rho.reshape(state.rho.shape), n_a=state.n_a, n_b=state.n_b),
        prob,
    )


def _number_expectation(state: TruncatedState, mode: str, factorial: bool = False) -> float:
    pops = state.mech_populations() if mode == "b" else state.photon_populations()
    n = np.arange(pops.size, dtype=float)
    weights = n * (n - 1.0) if factorial else n
    return float(np.dot(weights, pops))


def photon_number(state: TruncatedState) -> float:
    return _number_expectation(state, "a")


def phonon_number(state: TruncatedState) -> float:
    return _number_expectation(state, "b")


def phonon_second_factorial(state: TruncatedState) -> float:
    """<b' b' b b> - the numerator of the mechanical g2."""
    return _number_expectation(state, "b", factorial=True)


def oracle_g2(
    state_at_herald: TruncatedState,
    params: SystemParams,
    readout_segment: PulseSegment,
    t_read: float,
    tau: float = 0.0,
    *,
    storage: Sequence[tuple[RateSet, float]] = (),
    leak_tol: float = DEFAULT_LEAK_TOL,
) -> float:
    """Herald-conditioned readout g2 by quantum regression.

    Mirrors the moment-quotient the Gaussian engine computes: the herald
    is treated as a photon-flux event (sandwich a . a' on the state at the
    herald time), the unnormalized matrix is carried through any
    ``storage`` legs and ``t_read`` of readout drive, and for tau > 0 a
    second flux sandwich is carried a further tau under the same drive.
    """
    if t_read < 0.0 or tau < 0.0:
        raise ConfigError("t_read and tau must be >= 0")
    n_a, n_b = state_at_herald.n_a, state_at_herald.n_b
    a, _b = two_mode_ops(n_a, n_b)
    read_rates = RateSet.from_segment(params, readout_segment)
    legs_to_read = [*storage, (read_rates, t_read)]
    legs_tau = [(read_rates, tau)] if tau > 0.0 else []

    def flux(matrix: NDArray[np.complex128]) -> NDArray[np.complex128]:
        return a @ matrix @ a.conj().T

    g1 = photon_number(state_at_herald)
    sigma = TruncatedState(rho=flux(state_at_herald.rho), n_a=n_a, n_b=n_b)
    sigma_r = evolve_through(sigma, legs_to_read, leak_tol=leak_tol)
    d1 = photon_number(sigma_r)

    if not legs_tau:
        aa = a @ a
        g3 = float(np.trace(aa.conj().T @ aa @ sigma_r.rho).real)
        d2 = d1
    else:
        inner = TruncatedState(rho=flux(sigma_r.rho), n_a=n_a, n_b=n_b)
        inner = evolve_through(inner, legs_tau, leak_tol=leak_tol)
        g3 = photon_number(inner)
        sigma_t2 = evolve_through(sigma_r, legs_tau, leak_tol=leak_tol)
        d2 = photon_number(sigma_t2)

    if g1 <= 0.0 or d1 <= 0.0 or d2 <= 0.0:
        raise ConditioningError("oracle g2 undefined: a herald/readout intensity vanished")
    return g3 * g1 / (d1 * d2)
