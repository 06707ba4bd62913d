"""Unitary circuit elements acting on :class:`HybridState`.

Every element acts exactly on coherent labels or on qudit kets; none of them
ever expands a coherent state in the number basis.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass

from .hybrid_state import HybridState, HybridTerm, StateError

__all__ = [
    "CouplingPlan",
    "MIRRORED_PLAN",
    "xpm_couple",
    "phase_shift",
    "beamsplitter_5050",
    "bit_flip",
    "photon_phase",
    "check_theta",
]

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class CouplingPlan:
    """Which bus mode picks up the phase of each polarization of each qudit.

    Attributes are ``(bus_for_V, bus_for_H)`` pairs.
    """

    a: tuple[int, int]
    b: tuple[int, int]

    def modes(self) -> set[int]:
        return set(self.a) | set(self.b)


# Qudit a: V -> bus 0, H -> bus 1.  Qudit b uses the mirrored routing.
MIRRORED_PLAN = CouplingPlan(a=(0, 1), b=(1, 0))


def check_theta(theta: float) -> float:
    theta = float(theta)
    if not 0 < abs(theta) <= 0.5:
        warnings.warn(f"XPM phase {theta} is outside the weak-coupling range (0, 0.5]", stacklevel=3)
    return theta


def _check_mode(state: HybridState, mode: int):
    if not 0 <= mode < state.n_modes:
        raise StateError(f"invalid bus mode {mode} for {state.n_modes} live modes")


def xpm_couple(state: HybridState, plan: CouplingPlan, theta: float) -> HybridState:
    """Ideal cross-phase modulation ``|k>|beta> -> |k>|beta e^{i k theta}>``.

    Each bus mode accumulates ``e^{i k theta}`` where ``k`` counts the
    photons routed onto it by ``plan``.
    """
    for m in plan.modes():
        _check_mode(state, m)

    def couple(t: HybridTerm) -> HybridTerm:
        counts = [0] * state.n_modes
        for ket, (bus_v, bus_h) in ((t.ket_a, plan.a), (t.ket_b, plan.b)):
            counts[bus_v] += ket.n_v
            counts[bus_h] += ket.n_h
        bus = tuple(b * cmath.exp(1j * k * theta) if k else b for b, k in zip(t.bus, counts))
        return t.replace(bus=bus)

    return state.map_terms(couple)


def phase_shift(state: HybridState, mode: int, phi: float) -> HybridState:
    _check_mode(state, mode)
    factor = cmath.exp(1j * phi)

    def shift(t: HybridTerm) -> HybridTerm:
        bus = list(t.bus)
        bus[mode] *= factor
        return t.replace(bus=bus)

    return state.map_terms(shift)


def beamsplitter_5050(state: HybridState, mode1: int, mode2: int) -> HybridState:
    """Balanced beam splitter ``(b1, b2) -> ((b1 - b2)/sqrt2, (b1 + b2)/sqrt2)``.

    Equal input labels send exactly ``0`` to ``mode1``.
    """
    if mode1 == mode2:
        raise StateError("beam splitter needs two distinct modes")
    _check_mode(state, mode1)
    _check_mode(state, mode2)

    def split(t: HybridTerm) -> HybridTerm:
        bus = list(t.bus)
        b1, b2 = bus[mode1], bus[mode2]
        bus[mode1] = (b1 - b2) / SQRT2
        bus[mode2] = (b1 + b2) / SQRT2
        return t.replace(bus=bus)

    return state.map_terms(split)


def bit_flip(state: HybridState, which: str) -> HybridState:
    """``|j>_n -> |n-1-j>_n`` on qudit ``which`` (exchanges H and V photons)."""
    if which == "a":
        return state.map_terms(lambda t: t.replace(ket_a=t.ket_a.flipped()))
    if which == "b":
        return state.map_terms(lambda t: t.replace(ket_b=t.ket_b.flipped()))
    raise StateError(f"unknown qudit {which!r}")


def photon_phase(state: HybridState, which: str, phi: float) -> HybridState:
    """Per-photon polarization phase ``diag(1, e^{i phi})`` on every photon of one qudit.

    A term with ``j`` V photons on the chosen qudit gains ``e^{i j phi}``.
    """
    if which not in ("a", "b"):
        raise StateError(f"unknown qudit {which!r}")

    def rotate(t: HybridTerm) -> HybridTerm:
        j = t.ket_a.n_v if which == "a" else t.ket_b.n_v
        return t.replace(coeff=t.coeff * cmath.exp(1j * phi * j)) if j else t

    return state.map_terms(rotate)
