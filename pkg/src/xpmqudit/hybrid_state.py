"""Sparse superpositions of two-qudit kets dressed with coherent bus labels.

A term is ``coeff * |j_a>_n |j_b>_n |beta_1> ... |beta_k>`` where each
``|beta_m>`` is a coherent state of bus mode ``m``.  Coherent labels are not
orthogonal, so every norm and inner product goes through the Gram matrix of
the labels rather than summing ``|coeff|**2``.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QuditKet",
    "HybridTerm",
    "HybridState",
    "coherent_overlap",
    "gram_matrix",
    "inner",
    "norm",
    "normalize",
    "fidelity",
    "schmidt_coefficients",
    "product_state",
    "StateError",
]

DEFAULT_MERGE_TOLERANCE = 1e-12
NORMALIZED_TOLERANCE = 1e-9


class StateError(ValueError):
    """Raised for malformed or degenerate hybrid states."""


@dataclass(frozen=True, order=True)
class QuditKet:
    """Basis state ``|index>_dim``: ``dim-1-index`` H photons and ``index`` V photons."""

    dim: int
    index: int

    def __post_init__(self):
        if self.dim < 1:
            raise StateError(f"qudit dimension must be >= 1, got {self.dim}")
        if not 0 <= self.index <= self.dim - 1:
            raise StateError(f"index {self.index} outside [0, {self.dim - 1}]")

    @property
    def n_h(self) -> int:
        return self.dim - 1 - self.index

    @property
    def n_v(self) -> int:
        return self.index

    @property
    def photons(self) -> int:
        return self.dim - 1

    def flipped(self) -> QuditKet:
        return QuditKet(self.dim, self.dim - 1 - self.index)

    def __str__(self):
        return f"|{self.index}>_{self.dim}"


@dataclass(frozen=True)
class HybridTerm:
    coeff: complex
    ket_a: QuditKet
    ket_b: QuditKet
    bus: tuple[complex, ...]

    @property
    def kets(self) -> tuple[QuditKet, QuditKet]:
        return (self.ket_a, self.ket_b)

    def replace(self, coeff=None, ket_a=None, ket_b=None, bus=None) -> HybridTerm:
        return HybridTerm(
            self.coeff if coeff is None else complex(coeff),
            self.ket_a if ket_a is None else ket_a,
            self.ket_b if ket_b is None else ket_b,
            self.bus if bus is None else tuple(complex(b) for b in bus),
        )


def _merge(terms: Iterable[HybridTerm], tol: float) -> tuple[HybridTerm, ...]:
    # Terms sharing kets and bus labels (within tol) add coherently; first
    # occurrence fixes both the position and the stored label.
    slots: list[list] = []
    by_kets: dict[tuple[QuditKet, QuditKet], list[int]] = {}
    for term in terms:
        candidates = by_kets.setdefault(term.kets, [])
        for idx in candidates:
            other_bus = slots[idx][1].bus
            if len(other_bus) == len(term.bus) and all(
                abs(x - y) <= tol for x, y in zip(other_bus, term.bus)
            ):
                slots[idx][0] += term.coeff
                break
        else:
            candidates.append(len(slots))
            slots.append([term.coeff, term])
    return tuple(t.replace(coeff=c) for c, t in slots if c != 0)


@dataclass(frozen=True)
class HybridState:
    """Immutable superposition of :class:`HybridTerm` objects.

    Construction merges duplicate terms and drops exact zeros, so two states
    built from permutations of the same term list compare equal term-wise up
    to ordering.
    """

    terms: tuple[HybridTerm, ...]
    merge_tolerance: float = DEFAULT_MERGE_TOLERANCE
    n_modes: int = field(default=-1, compare=False)

    def __post_init__(self):
        terms = _merge(self.terms, self.merge_tolerance)
        modes = {len(t.bus) for t in terms}
        if len(modes) > 1:
            raise StateError(f"inconsistent bus-mode counts {sorted(modes)}")
        n_modes = modes.pop() if modes else max(self.n_modes, 0)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "n_modes", n_modes)

    @classmethod
    def from_terms(cls, terms: Iterable[HybridTerm], merge_tolerance=DEFAULT_MERGE_TOLERANCE, n_modes=-1):
        return cls(tuple(terms), merge_tolerance, n_modes)

    def map_terms(self, fn) -> HybridState:
        """Apply ``fn`` to every term; ``fn`` returns a term, a list of terms or None."""
        out = []
        for term in self.terms:
            res = fn(term)
            if res is None:
                continue
            if isinstance(res, HybridTerm):
                out.append(res)
            else:
                out.extend(res)
        n_modes = len(out[0].bus) if out else self.n_modes
        return HybridState(tuple(out), self.merge_tolerance, n_modes)

    def scaled(self, factor: complex) -> HybridState:
        return self.map_terms(lambda t: t.replace(coeff=t.coeff * factor))

    def drop_bus(self, mode: int) -> HybridState:
        """Remove ``mode`` from every label; only valid when it factors out."""
        labels = {t.bus[mode] for t in self.terms}
        ref = next(iter(labels))
        if any(abs(b - ref) > self.merge_tolerance for b in labels):
            raise StateError("bus not disentangled")
        return self.map_terms(lambda t: t.replace(bus=t.bus[:mode] + t.bus[mode + 1 :]))

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coeff for t in self.terms], dtype=complex)

    def amplitude(self, ja: int, jb: int) -> complex:
        """Summed coefficient of all terms on ``|ja>|jb>`` (labels ignored)."""
        return complex(sum(t.coeff for t in self.terms if t.ket_a.index == ja and t.ket_b.index == jb))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __str__(self):
        parts = []
        for t in self.terms:
            bus = ", ".join(f"{b:.4g}" for b in t.bus)
            parts.append(f"({t.coeff:.4g}) {t.ket_a}{t.ket_b} [{bus}]")
        return " + ".join(parts) if parts else "0"


def product_state(
    coeffs_a: Sequence[complex],
    coeffs_b: Sequence[complex],
    bus: Sequence[complex] = (),
    merge_tolerance: float = DEFAULT_MERGE_TOLERANCE,
) -> HybridState:
    """``(sum_i a_i |i>) (sum_j b_j |j>) |bus>`` with the qudit dimension set by length."""
    da, db = len(coeffs_a), len(coeffs_b)
    bus = tuple(complex(b) for b in bus)
    terms = [
        HybridTerm(complex(ca) * complex(cb), QuditKet(da, i), QuditKet(db, j), bus)
        for i, ca in enumerate(coeffs_a)
        for j, cb in enumerate(coeffs_b)
    ]
    return HybridState(tuple(terms), merge_tolerance, len(bus))


def coherent_overlap(beta1: complex, beta2: complex) -> complex:
    """Coherent-state inner product ``<beta1|beta2>``.

    Evaluated as ``exp(-|beta1-beta2|^2/2 + i Im(conj(beta1) beta2))``, which
    is algebraically identical to the textbook form but keeps the modulus
    bounded by one for large amplitudes and is exactly conjugate-symmetric.
    """
    b1, b2 = complex(beta1), complex(beta2)
    d = b1 - b2
    dist2 = d.real * d.real + d.imag * d.imag
    phase = b1.real * b2.imag - b1.imag * b2.real
    return complex(np.exp(-0.5 * dist2) * complex(np.cos(phase), np.sin(phase)))


def _overlap_array(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x - y
    phase = x.real * y.imag - x.imag * y.real
    return np.exp(-0.5 * (d.real**2 + d.imag**2) + 1j * phase)


def _ket_keys(terms: Sequence[HybridTerm]) -> np.ndarray:
    return np.array(
        [(t.ket_a.dim, t.ket_a.index, t.ket_b.dim, t.ket_b.index) for t in terms], dtype=np.int64
    ).reshape(-1, 4)


def term_gram(left: Sequence[HybridTerm], right: Sequence[HybridTerm], kets: bool = True) -> np.ndarray:
    """``G[i, j] = <left_i|right_j>`` over kets (optional) and all bus modes, ignoring coefficients."""
    n_modes = {len(t.bus) for t in left} | {len(t.bus) for t in right}
    if len(n_modes) > 1:
        raise StateError(f"bus-mode mismatch: {sorted(n_modes)}")
    g = np.ones((len(left), len(right)), dtype=complex)
    if n_modes:
        bl = np.array([t.bus for t in left], dtype=complex).reshape(len(left), -1)
        br = np.array([t.bus for t in right], dtype=complex).reshape(len(right), -1)
        for m in range(bl.shape[1]):
            g *= _overlap_array(bl[:, m][:, None], br[:, m][None, :])
    if kets:
        kl, kr = _ket_keys(left), _ket_keys(right)
        same = np.all(kl[:, None, :] == kr[None, :, :], axis=-1)
        g = np.where(same, g, 0.0)
    return g


def cross_gram(left: HybridState, right: HybridState, kets: bool = True) -> np.ndarray:
    if left.n_modes != right.n_modes:
        raise StateError(f"bus-mode mismatch: {left.n_modes} vs {right.n_modes}")
    return term_gram(left.terms, right.terms, kets)


def gram_matrix(state: HybridState) -> np.ndarray:
    return cross_gram(state, state)


def inner(left: HybridState, right: HybridState) -> complex:
    """``<left|right>`` using the exact coherent Gram matrix."""
    if not len(left) or not len(right):
        return 0j
    g = cross_gram(left, right)
    return complex(np.conj(left.coefficients) @ g @ right.coefficients)


def norm_squared(state: HybridState) -> float:
    if not len(state):
        raise StateError("empty state")
    c = state.coefficients
    value = complex(np.conj(c) @ gram_matrix(state) @ c)
    if value.real < -1e-12 * max(1.0, float(np.sum(np.abs(c) ** 2))):
        raise StateError(f"negative norm^2 {value.real:.3e}: Gram matrix not PSD")
    return max(value.real, 0.0)


def norm(state: HybridState) -> float:
    return float(np.sqrt(norm_squared(state)))


def normalize(state: HybridState) -> HybridState:
    if not len(state):
        raise StateError("null state")
    n = norm(state)
    if n == 0.0 or not np.isfinite(n):
        raise StateError("null state")
    return state.scaled(1.0 / n)


def _require_normalized(state: HybridState, what: str):
    n2 = norm_squared(state)
    if abs(n2 - 1.0) > NORMALIZED_TOLERANCE:
        raise StateError(f"{what} is not normalized (norm^2 = {n2:.12g})")


def fidelity(state: HybridState, target: HybridState, check: bool = True) -> float:
    """Overlap ``|<target|state>|^2`` of two normalized states.

    When ``target`` carries no bus modes but ``state`` still does, the bus
    of ``state`` is traced out and ``<target|rho|target>`` is returned, which
    reduces to the pure overlap whenever the bus factors out.
    """
    if check:
        _require_normalized(state, "state")
        _require_normalized(target, "target")
    if target.n_modes == state.n_modes:
        return float(abs(inner(target, state)) ** 2)
    if target.n_modes != 0:
        raise StateError(f"cannot compare {state.n_modes}-mode state with {target.n_modes}-mode target")
    lookup = {}
    for t in target.terms:
        lookup[t.kets] = lookup.get(t.kets, 0j) + t.coeff
    u = np.array([s.coeff * np.conj(lookup.get(s.kets, 0j)) for s in state.terms])
    g = cross_gram(state, state, kets=False)
    return float((np.conj(u) @ g @ u).real)


def schmidt_coefficients(state: HybridState, trace_bus: bool = False) -> list[float]:
    """Schmidt coefficients of the a|b split, descending.

    By default every term must carry the same bus label, which then factors
    out.  With ``trace_bus=True`` the bus is grouped with qudit b and the
    coefficients come from the spectrum of the reduced state of qudit a.
    """
    _require_normalized(state, "state")
    kets_a = sorted({t.ket_a for t in state.terms})
    kets_b = sorted({t.ket_b for t in state.terms})
    ia = {k: i for i, k in enumerate(kets_a)}
    ib = {k: i for i, k in enumerate(kets_b)}
    if trace_bus:
        c = state.coefficients
        g = cross_gram(state, state, kets=False)
        same_b = np.array([[ti.ket_b == tj.ket_b for tj in state.terms] for ti in state.terms])
        # rho_a[p, q] = sum_{i in p, j in q} c_i conj(c_j) <bus_j|bus_i> delta(b_i, b_j)
        w = np.where(same_b, g.T, 0.0) * np.outer(c, np.conj(c))
        pa = np.zeros((len(state), len(kets_a)))
        for i, t in enumerate(state.terms):
            pa[i, ia[t.ket_a]] = 1.0
        rho = pa.T @ w @ pa
        evals = np.clip(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)), 0.0, None)
        return sorted((float(np.sqrt(e)) for e in evals), reverse=True)
    if state.n_modes:
        first = state.terms[0].bus
        for t in state.terms[1:]:
            if any(abs(x - y) > state.merge_tolerance for x, y in zip(t.bus, first)):
                raise StateError("bus not disentangled")
    m = np.zeros((len(kets_a), len(kets_b)), dtype=complex)
    for t in state.terms:
        m[ia[t.ket_a], ib[t.ket_b]] += t.coeff
    return [float(s) for s in np.linalg.svd(m, compute_uv=False)]


def schmidt_rank(coefficients: Sequence[float], tol: float = 1e-6) -> int:
    return int(sum(1 for s in coefficients if s > tol))
