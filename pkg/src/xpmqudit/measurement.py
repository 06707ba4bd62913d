"""Ideal detectors on bus modes: on/off vacuum heralding and number projection.

Branch probabilities are Gram-matrix norms of the projected states, so
overlapping coherent components are accounted for exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .hybrid_state import HybridState, StateError, norm_squared, normalize, term_gram

__all__ = [
    "MeasurementBranch",
    "BranchSet",
    "TailMassError",
    "pnnd_herald",
    "qnd_project",
    "default_n_max",
    "number_amplitudes",
    "sample_branch",
    "sample_indices",
]

DEFAULT_TAIL_TOLERANCE = 1e-9
_NEGATIVE_SLACK = 1e-12


class TailMassError(RuntimeError):
    """Probability mass beyond the enumeration cutoff exceeds the tolerance."""


@dataclass(frozen=True)
class MeasurementBranch:
    """One detector outcome.

    ``post_state`` is normalized with the measured mode removed (except the
    PNND failure branch, which keeps it), or ``None`` when the outcome has
    probability zero.
    """

    outcome: int
    probability: float
    post_state: HybridState | None


@dataclass(frozen=True)
class BranchSet:
    branches: tuple[MeasurementBranch, ...]
    tail_mass: float
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE
    truncated: bool = field(default=False)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([b.probability for b in self.branches])

    @property
    def total(self) -> float:
        return float(self.probabilities.sum())

    def branch(self, outcome: int) -> MeasurementBranch:
        for b in self.branches:
            if b.outcome == outcome:
                return b
        raise KeyError(outcome)


def _check_mode(state: HybridState, mode: int):
    if not 0 <= mode < state.n_modes:
        raise StateError(f"invalid bus mode {mode} for {state.n_modes} live modes")


def _clamp(p: float, what: str) -> float:
    if p < -_NEGATIVE_SLACK:
        raise StateError(f"negative probability {p:.3e} for {what}")
    return max(p, 0.0)


def _without_mode(state: HybridState, mode: int, factors) -> HybridState:
    terms = [
        t.replace(coeff=t.coeff * f, bus=t.bus[:mode] + t.bus[mode + 1 :])
        for t, f in zip(state.terms, factors)
    ]
    return HybridState(tuple(terms), state.merge_tolerance, state.n_modes - 1)


def pnnd_herald(state: HybridState, mode: int) -> tuple[MeasurementBranch, MeasurementBranch]:
    """Ideal on/off detector on ``mode``: returns ``(vacuum, click)`` branches."""
    _check_mode(state, mode)
    total = norm_squared(state)
    vac = np.array([np.exp(-0.5 * abs(t.bus[mode]) ** 2) for t in state.terms])

    success = _without_mode(state, mode, vac)
    p_success = _clamp(norm_squared(success) / total, "vacuum") if len(success) else 0.0

    # (1 - |0><0|) psi: subtract the vacuum component, keeping the mode.
    projected = [
        t.replace(coeff=-t.coeff * f, bus=t.bus[:mode] + (0j,) + t.bus[mode + 1 :])
        for t, f in zip(state.terms, vac)
    ]
    failure = HybridState(state.terms + tuple(projected), state.merge_tolerance, state.n_modes)
    p_failure = _clamp(norm_squared(failure) / total, "click") if len(failure) else 0.0

    return (
        MeasurementBranch(0, p_success, normalize(success) if p_success > 0 else None),
        MeasurementBranch(1, p_failure, normalize(failure) if p_failure > 0 else None),
    )


def default_n_max(state: HybridState, mode: int) -> int:
    """Enumeration cutoff putting the Poisson tail below ~1e-12 for every label."""
    r = max((abs(t.bus[mode]) for t in state.terms), default=0.0)
    return int(math.ceil(r * r + 8.0 * r + 10.0))


def number_amplitudes(beta: complex, n_max: int) -> np.ndarray:
    """``<n|beta>`` for ``n = 0..n_max``, computed in log space."""
    n = np.arange(n_max + 1)
    if beta == 0:
        out = np.zeros(n_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    r, arg = abs(beta), np.angle(beta)
    log_mod = -0.5 * r * r + n * np.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(log_mod) * np.exp(1j * arg * n)


def qnd_project(
    state: HybridState,
    mode: int,
    n_max: int | None = None,
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE,
) -> BranchSet:
    """Photon-number projections ``|n><n|`` on ``mode`` for ``n = 0..n_max``.

    Branches are returned for every ``n``; outcomes with exactly zero
    probability carry ``post_state=None``.  If the unenumerated mass exceeds
    ``tail_tolerance`` a warning is issued and ``truncated`` is set.
    """
    _check_mode(state, mode)
    if n_max is None:
        n_max = default_n_max(state, mode)
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    total = norm_squared(state)
    terms = state.terms
    bare = [t.replace(bus=t.bus[:mode] + t.bus[mode + 1 :]) for t in terms]
    amps = np.array([number_amplitudes(t.bus[mode], n_max) for t in terms])
    coeffs = np.array([t.coeff for t in terms])[:, None] * amps
    g = term_gram(bare, bare)
    probs = np.real(np.sum(np.conj(coeffs) * (g @ coeffs), axis=0)) / total

    branches = []
    for n in range(n_max + 1):
        p = _clamp(float(probs[n]), f"n={n}")
        post = None
        if p > 0:
            # the projected squared norm is p * total, already known
            scale = 1.0 / math.sqrt(p * total)
            post = _without_mode(state, mode, amps[:, n] * scale)
        branches.append(MeasurementBranch(n, p, post))
    tail = 1.0 - sum(b.probability for b in branches)
    truncated = tail > tail_tolerance
    if truncated:
        warnings.warn(f"QND enumeration up to n={n_max} leaves tail mass {tail:.3e}", stacklevel=2)
    return BranchSet(tuple(branches), tail, tail_tolerance, truncated)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_indices(branch_set: BranchSet, size: int, rng_seed) -> np.ndarray:
    """Draw ``size`` branch indices with the branch probabilities."""
    if branch_set.tail_mass > branch_set.tail_tolerance:
        raise TailMassError(f"tail mass {branch_set.tail_mass:.3e} exceeds {branch_set.tail_tolerance:.1e}")
    p = branch_set.probabilities
    return _rng(rng_seed).choice(len(p), size=size, p=p / p.sum())


def sample_branch(branch_set: BranchSet, rng_seed) -> MeasurementBranch:
    """One branch drawn with its probability; ``rng_seed`` is an int or a Generator."""
    return branch_set.branches[int(sample_indices(branch_set, 1, rng_seed)[0])]
