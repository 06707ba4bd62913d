"""Dense truncated-Fock brute-force simulator used to cross-check the symbolic engine.

Each qudit occupies two photonic modes (H and V counts) and each bus mode a
number basis truncated at ``cutoff`` photons.  Axes of the amplitude tensor
are ``(a_H, a_V, b_H, b_V, bus_0, bus_1, ...)``.  Nothing here reuses the
coherent-label algebra: coherent states are expanded by recursion and the
beam splitter is the matrix exponential of its coupling generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .hybrid_state import HybridState

__all__ = [
    "FockVector",
    "LeakageError",
    "coherent_vector",
    "embed",
    "apply_cross_kerr",
    "apply_phase",
    "apply_bs",
    "apply_bit_flip",
    "apply_photon_phase",
    "project_number",
    "add_vacuum_mode",
    "overlap",
    "run_herald",
    "run_cascade_stage",
    "compare_herald",
    "compare_cascade",
    "oracle_check",
]

DEFAULT_CUTOFF = 40
DEFAULT_LEAKAGE = 1e-10
PHOTON_AXES = {("a", "H"): 0, ("a", "V"): 1, ("b", "H"): 2, ("b", "V"): 3}


class LeakageError(RuntimeError):
    """Amplitude reached the truncation edge of a bus mode."""


@dataclass(frozen=True)
class FockVector:
    amplitudes: np.ndarray
    cutoff: int
    leakage_threshold: float = DEFAULT_LEAKAGE

    @property
    def n_bus(self) -> int:
        return self.amplitudes.ndim - 4

    @property
    def cutoffs(self) -> list[int]:
        return [s - 1 for s in self.amplitudes.shape]

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def with_amplitudes(self, amps: np.ndarray) -> FockVector:
        return FockVector(amps, self.cutoff, self.leakage_threshold)

    def leakage(self) -> float:
        """Largest probability found at the top level of any bus mode."""
        worst = 0.0
        p = np.abs(self.amplitudes) ** 2
        for ax in range(4, self.amplitudes.ndim):
            worst = max(worst, float(np.take(p, -1, axis=ax).sum()))
        return worst

    def checked(self) -> FockVector:
        leak = self.leakage()
        if leak > self.leakage_threshold:
            raise LeakageError(f"truncation leakage {leak:.3e} above {self.leakage_threshold:.1e}")
        return self


def coherent_vector(beta: complex, cutoff: int) -> np.ndarray:
    out = np.empty(cutoff + 1, dtype=complex)
    out[0] = math.exp(-0.5 * abs(beta) ** 2)
    for n in range(1, cutoff + 1):
        out[n] = out[n - 1] * beta / math.sqrt(n)
    return out


def _bus_axis(v: FockVector, mode: int) -> int:
    if not 0 <= mode < v.n_bus:
        raise ValueError(f"invalid bus mode {mode} for {v.n_bus} modes")
    return 4 + mode


def embed(state: HybridState, cutoff: int = DEFAULT_CUTOFF, leakage_threshold: float = DEFAULT_LEAKAGE) -> FockVector:
    """Dense Fock image of a hybrid state (coefficients kept unnormalized)."""
    dim_a = max(t.ket_a.dim for t in state.terms)
    dim_b = max(t.ket_b.dim for t in state.terms)
    shape = (dim_a, dim_a, dim_b, dim_b) + (cutoff + 1,) * state.n_modes
    amps = np.zeros(shape, dtype=complex)
    cache: dict[complex, np.ndarray] = {}
    for t in state.terms:
        bus = np.array(t.coeff, dtype=complex)
        for beta in t.bus:
            if beta not in cache:
                vec = coherent_vector(beta, cutoff)
                leak = 1.0 - float(np.vdot(vec, vec).real)
                if leak > leakage_threshold:
                    raise LeakageError(f"label {beta:.4g} leaks {leak:.3e} beyond cutoff {cutoff}")
                cache[beta] = vec
            bus = np.multiply.outer(bus, cache[beta])
        amps[t.ket_a.n_h, t.ket_a.n_v, t.ket_b.n_h, t.ket_b.n_v] += bus
    return FockVector(amps, cutoff, leakage_threshold)


def overlap(left: FockVector, right: FockVector) -> complex:
    return complex(np.vdot(left.amplitudes, right.amplitudes))


def _number(size: int) -> np.ndarray:
    return np.arange(size, dtype=float)


def _broadcast(values: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = len(values)
    return values.reshape(shape)


def apply_cross_kerr(v: FockVector, photon_mode: tuple[str, str], bus_mode: int, theta: float) -> FockVector:
    """Diagonal unitary ``exp(i theta n_photon n_bus)``."""
    if photon_mode not in PHOTON_AXES:
        raise ValueError(f"invalid photon mode {photon_mode}")
    pa, ba = PHOTON_AXES[photon_mode], _bus_axis(v, bus_mode)
    nd = v.amplitudes.ndim
    n_p = _broadcast(_number(v.amplitudes.shape[pa]), pa, nd)
    n_b = _broadcast(_number(v.amplitudes.shape[ba]), ba, nd)
    return v.with_amplitudes(v.amplitudes * np.exp(1j * theta * n_p * n_b))


def apply_phase(v: FockVector, bus_mode: int, phi: float) -> FockVector:
    ax = _bus_axis(v, bus_mode)
    n = _broadcast(_number(v.amplitudes.shape[ax]), ax, v.amplitudes.ndim)
    return v.with_amplitudes(v.amplitudes * np.exp(1j * phi * n))


@lru_cache(maxsize=8)
def _bs_blocks(cutoff: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    # Generator a2^dag a1 - a1^dag a2 at angle pi/4 rotates creation operators
    # a1^dag -> (a1^dag + a2^dag)/sqrt2, a2^dag -> (a2^dag - a1^dag)/sqrt2, i.e.
    # coherent labels (b1, b2) -> ((b1 - b2)/sqrt2, (b1 + b2)/sqrt2).
    size = cutoff + 1
    blocks = []
    for total in range(2 * cutoff + 1):
        n1 = np.array([k for k in range(size) if 0 <= total - k < size])
        n2 = total - n1
        flat = n1 * size + n2
        pos = {int(k): i for i, k in enumerate(n1)}
        gen = np.zeros((len(n1), len(n1)))
        for i, k in enumerate(n1):
            k2 = total - k
            # a2^dag a1 |k, k2> = sqrt(k (k2 + 1)) |k-1, k2+1>
            if k >= 1 and (k - 1) in pos:
                gen[pos[k - 1], i] += math.sqrt(k * (k2 + 1))
            # -a1^dag a2 |k, k2> = -sqrt((k + 1) k2) |k+1, k2-1>
            if k2 >= 1 and (k + 1) in pos:
                gen[pos[k + 1], i] -= math.sqrt((k + 1) * k2)
        blocks.append((flat, expm(math.pi / 4 * gen)))
    return tuple(blocks)


def apply_bs(v: FockVector, mode1: int, mode2: int) -> FockVector:
    """Balanced beam splitter matching ``(b1, b2) -> ((b1 - b2), (b1 + b2)) / sqrt2``."""
    if mode1 == mode2:
        raise ValueError("beam splitter needs two distinct modes")
    a1, a2 = _bus_axis(v, mode1), _bus_axis(v, mode2)
    size = v.cutoff + 1
    moved = np.moveaxis(v.amplitudes, (a1, a2), (-2, -1))
    lead = moved.shape[:-2]
    flat = moved.reshape(-1, size * size)
    out = np.zeros_like(flat)
    for idx, u in _bs_blocks(v.cutoff):
        out[:, idx] = flat[:, idx] @ u.T
    amps = np.moveaxis(out.reshape(lead + (size, size)), (-2, -1), (a1, a2))
    return v.with_amplitudes(amps).checked()


def apply_bit_flip(v: FockVector, which: str) -> FockVector:
    h, vv = PHOTON_AXES[(which, "H")], PHOTON_AXES[(which, "V")]
    return v.with_amplitudes(np.swapaxes(v.amplitudes, h, vv).copy())


def apply_photon_phase(v: FockVector, which: str, phi: float) -> FockVector:
    ax = PHOTON_AXES[(which, "V")]
    n = _broadcast(_number(v.amplitudes.shape[ax]), ax, v.amplitudes.ndim)
    return v.with_amplitudes(v.amplitudes * np.exp(1j * phi * n))


def project_number(v: FockVector, bus_mode: int, n: int) -> tuple[float, FockVector | None]:
    """Probability of ``n`` photons in ``bus_mode`` and the renormalized remainder."""
    ax = _bus_axis(v, bus_mode)
    total = v.norm_squared()
    sliced = np.take(v.amplitudes, n, axis=ax)
    p = float(np.vdot(sliced, sliced).real) / total
    if p == 0.0:
        return 0.0, None
    return p, v.with_amplitudes(sliced / math.sqrt(p * total))


def add_vacuum_mode(v: FockVector) -> FockVector:
    vac = np.zeros(v.cutoff + 1, dtype=complex)
    vac[0] = 1.0
    return v.with_amplitudes(np.multiply.outer(v.amplitudes, vac))


def _couple_mirrored(v: FockVector, theta: float) -> FockVector:
    # qudit a: V -> bus 0, H -> bus 1; qudit b mirrored
    for photon, bus in ((("a", "V"), 0), (("a", "H"), 1), (("b", "V"), 1), (("b", "H"), 0)):
        v = apply_cross_kerr(v, photon, bus, theta)
    return v


def run_herald(product: HybridState, alpha: complex, theta: float, cutoff: int = DEFAULT_CUTOFF):
    """Single heralded module in the Fock picture: returns ``(p_vacuum, post_vector)``."""
    state = product.map_terms(lambda t: t.replace(bus=(alpha, alpha)))
    v = embed(state, cutoff)
    v = v.with_amplitudes(v.amplitudes / math.sqrt(v.norm_squared()))
    v = apply_bs(_couple_mirrored(v, theta), 0, 1)
    return project_number(v, 0, 0)


def run_cascade_stage(v: FockVector, theta: float) -> FockVector:
    """Modified module: XPM, -2 theta on both buses, balanced beam splitter."""
    v = _couple_mirrored(v, theta)
    v = apply_phase(apply_phase(v, 0, -2 * theta), 1, -2 * theta)
    return apply_bs(v, 0, 1)


def _fidelity(symbolic: HybridState, oracle: FockVector) -> float:
    ref = embed(symbolic, oracle.cutoff)
    return abs(overlap(ref, oracle)) ** 2 / (ref.norm_squared() * oracle.norm_squared())


def compare_herald(a, b, alpha: complex, theta: float, cutoff: int = DEFAULT_CUTOFF) -> dict:
    """Success probability and heralded-state fidelity, symbolic vs Fock."""
    from .protocols import herald_module
    from .hybrid_state import product_state

    product = product_state(a.coeffs, b.coeffs)
    sym = herald_module(product, alpha, theta)
    success = sym.branch("success")
    p_fock, v = run_herald(product, alpha, theta, cutoff)
    fid = _fidelity(success.state, v) if v is not None and success.state is not None else 1.0
    return {
        "success_probability_symbolic": success.probability,
        "success_probability_fock": p_fock,
        "probability_deviation": abs(success.probability - p_fock),
        "state_infidelity": 1.0 - fid,
    }


def compare_cascade(
    a, b, alpha: complex, theta: float, cutoff: int = DEFAULT_CUTOFF, fidelity_floor: float = 1e-8
) -> dict:
    """Every cascade branch probability (and, above ``fidelity_floor``, the
    corrected post-state) recomputed in the Fock picture."""
    from .hybrid_state import product_state
    from .protocols import ProtocolParams, cascade

    sym = cascade(a, b, ProtocolParams(alpha, theta))
    by_outcome = {br.outcome: br for br in sym.branches}

    v = embed(product_state(a.coeffs, b.coeffs, (alpha, alpha)), cutoff)
    v = run_cascade_stage(v, theta)
    n_max = max(br.outcome[0] for br in sym.branches)
    max_dp, max_inf, compared = 0.0, 0.0, 0
    seen = set()
    for n in range(n_max + 1):
        p1, v1 = project_number(v, 0, n)
        if n == 0:
            outcomes = [((0,), p1, v1)]
        else:
            outcomes = []
            if p1 > 0:
                w = run_cascade_stage(apply_bs(add_vacuum_mode(apply_bit_flip(v1, "b")), 0, 1), theta)
                n2_max = max((br.outcome[1] for br in sym.branches if br.outcome[0] == n), default=0)
                for n2 in range(n2_max + 1):
                    p2, v2 = project_number(w, 0, n2)
                    outcomes.append(((n, n2), p1 * p2, v2))
        for outcome, p, vec in outcomes:
            br = by_outcome.get(outcome)
            p_sym = br.probability if br else 0.0
            max_dp = max(max_dp, abs(p - p_sym))
            seen.add(outcome)
            if br is None or vec is None or p < fidelity_floor:
                continue
            for op in br.corrections:
                if op["op"] == "photon_phase":
                    vec = apply_photon_phase(vec, op["qudit"], op["phi"])
            max_inf = max(max_inf, 1.0 - _fidelity(br.state, vec))
            compared += 1
    missing = [o for o in by_outcome if o not in seen]
    for o in missing:
        max_dp = max(max_dp, by_outcome[o].probability)
    return {
        "branches": len(sym.branches),
        "fidelities_compared": compared,
        "total_probability_symbolic": sym.total_probability,
        "max_probability_deviation": max_dp,
        "max_state_infidelity": max_inf,
    }


def oracle_check(alpha: complex = 2.0, thetas=(0.1, 0.2, 0.5), cutoff: int = DEFAULT_CUTOFF, inputs=None) -> dict:
    """Symbolic-vs-Fock agreement for the heralded module and the cascade."""
    from .protocols import QuditSpec

    if inputs is None:
        rng = np.random.default_rng(7)
        rand = [QuditSpec.from_unnormalized(rng.normal(size=3) + 1j * rng.normal(size=3)) for _ in range(2)]
        inputs = [(QuditSpec.maximal(3), QuditSpec.maximal(3)), tuple(rand)]
    rows = []
    for theta in thetas:
        for a, b in inputs:
            h = compare_herald(a, b, alpha, theta, cutoff)
            c = compare_cascade(a, b, alpha, theta, cutoff)
            rows.append(
                {
                    "theta": theta,
                    "coeffs_a": list(a.coeffs),
                    "coeffs_b": list(b.coeffs),
                    "herald": h,
                    "cascade": c,
                }
            )
    deviation = max(
        max(r["herald"]["probability_deviation"], r["herald"]["state_infidelity"],
            r["cascade"]["max_probability_deviation"], r["cascade"]["max_state_infidelity"])
        for r in rows
    )
    return {"alpha": alpha, "cutoff": cutoff, "max_deviation": deviation, "checks": rows}
