"""End-to-end entangling pipelines built from the elements and detectors.

``generate_entangled`` is the single heralded module (two qubus beams, XPM,
balanced beam splitter, on/off detector).  ``cascade`` is the deterministic
qutrit scheme: a modified module with a -2 theta compensation and a number
projection, whose non-vacuum outcomes are bit-flipped and fed through a
second module that reuses the surviving bus beam.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import elements
from .elements import MIRRORED_PLAN, beamsplitter_5050, bit_flip, phase_shift, photon_phase, xpm_couple
from .hybrid_state import (
    HybridState,
    HybridTerm,
    QuditKet,
    StateError,
    fidelity,
    norm_squared,
    normalize,
    product_state,
    schmidt_coefficients,
    schmidt_rank,
)
from .measurement import (
    DEFAULT_TAIL_TOLERANCE,
    BranchSet,
    TailMassError,
    pnnd_herald,
    qnd_project,
)

__all__ = [
    "QuditSpec",
    "ProtocolParams",
    "ProtocolBranch",
    "ProtocolResult",
    "generate_entangled",
    "herald_module",
    "cascade",
    "apply_loss",
    "loss_robustness_report",
    "run_trajectories",
    "quoted_error_probability",
    "solve_phase_corrections",
]


@dataclass(frozen=True)
class QuditSpec:
    """Pure input qudit ``sum_j coeffs[j] |j>_dim``."""

    dim: int
    coeffs: tuple[complex, ...]

    def __post_init__(self):
        coeffs = tuple(complex(c) for c in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        if self.dim < 2:
            raise ValueError(f"qudit dimension must be >= 2, got {self.dim}")
        if len(coeffs) != self.dim:
            raise ValueError(f"expected {self.dim} coefficients, got {len(coeffs)}")
        total = sum(abs(c) ** 2 for c in coeffs)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"coefficients are not normalized (sum |c|^2 = {total:.12g})")

    @classmethod
    def maximal(cls, dim: int) -> QuditSpec:
        return cls(dim, (1 / math.sqrt(dim),) * dim)

    @classmethod
    def from_unnormalized(cls, coeffs) -> QuditSpec:
        c = np.asarray(coeffs, dtype=complex)
        return cls(len(c), tuple(c / np.linalg.norm(c)))


@dataclass(frozen=True)
class ProtocolParams:
    alpha: complex
    theta: float
    n_max: int | None = None
    mode: str = "herald"
    rng_seed: int = 0
    trials: int = 0
    tail_tolerance: float = DEFAULT_TAIL_TOLERANCE

    def __post_init__(self):
        if abs(self.alpha) == 0:
            raise ValueError("qubus amplitude must be nonzero")
        if self.mode not in ("herald", "cascade", "trajectory"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")


@dataclass
class ProtocolBranch:
    label: str
    outcome: tuple[int, ...]
    probability: float
    state: HybridState | None
    corrections: list[dict] = field(default_factory=list)
    target: HybridState | None = None
    fidelity: float | None = None


@dataclass
class ProtocolResult:
    protocol: str
    branches: list[ProtocolBranch]
    tail_mass: float = 0.0
    ideal_success_probability: float | None = None
    error_probability: float | None = None
    error_probability_quoted: float | None = None
    trajectory_counts: dict[tuple[int, ...], int] | None = None

    @property
    def total_probability(self) -> float:
        return float(math.fsum(b.probability for b in self.branches))

    def branch(self, label: str, outcome: tuple[int, ...] | None = None) -> ProtocolBranch:
        for b in self.branches:
            if b.label == label and (outcome is None or b.outcome == outcome):
                return b
        raise KeyError((label, outcome))

    @property
    def success_probability(self) -> float:
        """Herald probability for the single module, diagonal-branch probability for the cascade."""
        key = "success" if self.protocol == "herald" else "diagonal"
        return sum(b.probability for b in self.branches if b.label == key)

    def family_probabilities(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for b in self.branches:
            out[b.label] = out.get(b.label, 0.0) + b.probability
        return out

    def branch_entropy(self) -> float:
        """Shannon entropy (bits) of the enumerated outcome distribution."""
        p = np.array([b.probability for b in self.branches if b.probability > 0])
        return float(-(p * np.log2(p)).sum()) if len(p) else 0.0


def quoted_error_probability(alpha: complex, theta: float) -> float:
    """Commonly quoted maximal-qutrit misherald estimate ``4/9 e^{-|a|^2 s1^2} + 2/9 e^{-|a|^2 s2^2}``.

    Kept for comparison only: the exact vacuum overlaps carry twice this
    exponent, see ``error_probability`` on the result.
    """
    a2 = abs(alpha) ** 2
    return 4 / 9 * math.exp(-a2 * math.sin(theta) ** 2) + 2 / 9 * math.exp(-a2 * math.sin(2 * theta) ** 2)


def _diagonal_target(state: HybridState) -> HybridState | None:
    """Normalized ``sum_i a_i b_i |i>|i>`` read off the bus-free input product state."""
    terms = [HybridTerm(t.coeff, t.ket_a, t.ket_b, ()) for t in state.terms if t.ket_a.index == t.ket_b.index]
    target = HybridState(tuple(terms), state.merge_tolerance, 0)
    if not len(target) or norm_squared(target) == 0:
        return None
    return normalize(target)


def _target_fidelity(state: HybridState | None, target: HybridState | None) -> float | None:
    if state is None or target is None:
        return None
    return fidelity(state, target, check=False)


def herald_module(product: HybridState, alpha: complex, theta: float) -> ProtocolResult:
    """Single-module heralded generation acting on a bus-free product state."""
    theta = elements.check_theta(theta)
    state = product.map_terms(lambda t: t.replace(bus=(alpha, alpha)))
    state = xpm_couple(state, MIRRORED_PLAN, theta)
    state = beamsplitter_5050(state, 0, 1)
    success, failure = pnnd_herald(state, 0)

    target = _diagonal_target(product)
    ideal = sum(abs(t.coeff) ** 2 for t in product.terms if t.ket_a.index == t.ket_b.index)
    ideal /= norm_squared(product)
    f = _target_fidelity(success.post_state, target)
    error = success.probability * (1.0 - f) if f is not None else success.probability
    dim = product.terms[0].ket_a.dim
    return ProtocolResult(
        protocol="herald",
        branches=[
            ProtocolBranch("success", (0,), success.probability, success.post_state, [], target, f),
            ProtocolBranch("failure", (1,), failure.probability, failure.post_state),
        ],
        ideal_success_probability=ideal,
        error_probability=max(error, 0.0),
        error_probability_quoted=quoted_error_probability(alpha, theta) if dim == 3 else None,
    )


def generate_entangled(a: QuditSpec, b: QuditSpec, params: ProtocolParams) -> ProtocolResult:
    """Heralded entangled-qudit generation from two independent qudits.

    The vacuum branch approaches ``sum_i a_i b_i |i>|i>`` with probability
    ``sum_i |a_i b_i|^2`` once ``|alpha| sin(theta) >> 1``.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    result = herald_module(product_state(a.coeffs, b.coeffs), params.alpha, params.theta)
    if params.mode == "trajectory" and params.trials:
        run_trajectories(result, params.trials, params.rng_seed)
    return result


def _modified_module(state: HybridState, theta: float) -> HybridState:
    state = xpm_couple(state, MIRRORED_PLAN, theta)
    state = phase_shift(state, 0, -2 * theta)
    state = phase_shift(state, 1, -2 * theta)
    return beamsplitter_5050(state, 0, 1)


def _recycle_bus(state: HybridState) -> HybridState:
    """Split the single surviving bus beam against vacuum into two equal halves."""
    state = state.map_terms(lambda t: t.replace(bus=t.bus + (0j,)))
    return beamsplitter_5050(state, 0, 1)


_QUARTER_TURNS = (0.0, -math.pi / 2, math.pi / 2, math.pi)


def solve_phase_corrections(
    phases: dict[tuple[int, int], float],
    qudits: tuple[str, ...] = ("a", "b"),
    tol: float = 1e-8,
) -> dict[str, float]:
    """Per-photon phase angles equalizing the given term phases.

    ``phases`` maps ``(j_a, j_b)`` to the structural phase of that component;
    ``photon_phase(q, phi)`` adds ``phi * j_q``.  Candidate angles are quarter
    turns, tried in the order ``0, -pi/2, pi/2, pi`` with qudit b varied
    slowest, and the first pair that aligns every component within ``tol``
    is returned.
    """
    options_a = _QUARTER_TURNS if "a" in qudits else (0.0,)
    options_b = _QUARTER_TURNS if "b" in qudits else (0.0,)
    keys = sorted(phases)
    for phi_b in options_b:
        for phi_a in options_a:
            total = [phases[k] + phi_a * k[0] + phi_b * k[1] for k in keys]
            ref = total[0]
            if all(abs(math.remainder(x - ref, 2 * math.pi)) < tol for x in total):
                return {"a": phi_a, "b": phi_b}
    raise StateError(f"no quarter-turn correction equalizes phases {phases}")


_OUTER = ((0, 0), (2, 2))
_MIDDLE = ((0, 1), (1, 2), (1, 0), (2, 1))


def _corrected(
    state: HybridState,
    a: QuditSpec,
    b: QuditSpec,
    family: tuple[tuple[int, int], ...],
    qudits: tuple[str, ...],
) -> tuple[HybridState, list[dict]]:
    # Structural phase = branch coefficient / input product; b was bit-flipped.
    phases = {}
    for ja, jb in family:
        amp = state.amplitude(ja, jb)
        weight = a.coeffs[ja] * b.coeffs[2 - jb]
        if abs(amp) > 0 and abs(weight) > 0:
            phases[(ja, jb)] = float(np.angle(amp / weight))
    if not phases:
        return state, []
    angles = solve_phase_corrections(phases, qudits)
    ops = []
    for q in ("a", "b"):
        if angles[q] != 0.0:
            state = photon_phase(state, q, angles[q])
            ops.append({"op": "photon_phase", "qudit": q, "phi": angles[q]})
    return state, ops


def _family_target(a: QuditSpec, b: QuditSpec, family) -> HybridState | None:
    terms = [
        HybridTerm(a.coeffs[ja] * b.coeffs[2 - jb], QuditKet(3, ja), QuditKet(3, jb), ())
        for ja, jb in family
    ]
    target = HybridState(tuple(terms), n_modes=0)
    if not len(target):
        return None
    return normalize(target)


def _check_tail(bs: BranchSet, where: str):
    if bs.truncated:
        raise TailMassError(f"{where}: QND tail mass {bs.tail_mass:.3e} exceeds {bs.tail_tolerance:.1e}")


def cascade(a: QuditSpec, b: QuditSpec, params: ProtocolParams) -> ProtocolResult:
    """Deterministic entangled-qutrit generation with two cascaded modules.

    Every ``(n, n')`` detection record becomes a branch labelled
    ``diagonal`` (``n = 0``), ``outer`` (``n >= 1, n' = 0``) or ``middle``
    (``n, n' >= 1``), with the feedforward corrections that were applied.
    """
    if a.dim != 3 or b.dim != 3:
        raise ValueError("the cascade scheme is defined for qutrits only")
    theta = elements.check_theta(params.theta)
    alpha = complex(params.alpha)
    state = product_state(a.coeffs, b.coeffs, (alpha, alpha))
    stage1 = qnd_project(_modified_module(state, theta), 0, params.n_max, params.tail_tolerance)
    _check_tail(stage1, "stage 1")

    diag_target = _diagonal_target(product_state(a.coeffs, b.coeffs))
    outer_target = _family_target(a, b, _OUTER)
    middle_target = _family_target(a, b, _MIDDLE)

    branches: list[ProtocolBranch] = []
    tail = stage1.tail_mass
    for br1 in stage1.branches:
        if br1.probability == 0.0:
            continue
        n = br1.outcome
        if n == 0:
            branches.append(
                ProtocolBranch(
                    "diagonal", (0,), br1.probability, br1.post_state, [], diag_target,
                    _target_fidelity(br1.post_state, diag_target),
                )
            )
            continue
        flipped = bit_flip(br1.post_state, "b")
        second = _modified_module(_recycle_bus(flipped), theta)
        stage2 = qnd_project(second, 0, params.n_max, params.tail_tolerance)
        _check_tail(stage2, f"stage 2 after n={n}")
        tail += br1.probability * stage2.tail_mass
        flip_op = {"op": "bit_flip", "qudit": "b"}
        for br2 in stage2.branches:
            p = br1.probability * br2.probability
            if p == 0.0:
                continue
            if br2.outcome == 0:
                fixed, ops = _corrected(br2.post_state, a, b, _OUTER, ("a",))
                label, target = "outer", outer_target
            else:
                fixed, ops = _corrected(br2.post_state, a, b, _MIDDLE, ("a", "b"))
                label, target = "middle", middle_target
            branches.append(
                ProtocolBranch(
                    label, (n, br2.outcome), p, fixed, [flip_op] + ops, target,
                    _target_fidelity(fixed, target),
                )
            )
    result = ProtocolResult(
        protocol="cascade",
        branches=branches,
        tail_mass=tail,
        ideal_success_probability=sum(abs(x * y) ** 2 for x, y in zip(a.coeffs, b.coeffs)),
    )
    if params.mode == "trajectory" and params.trials:
        run_trajectories(result, params.trials, params.rng_seed)
    return result


TRAJECTORY_BATCHES = 8


def run_trajectories(result: ProtocolResult, trials: int, seed: int, workers: int = 1) -> dict:
    """Monte Carlo detection records drawn from the enumerated branches.

    Trials are split into a fixed number of batches, each with a seed spawned
    from ``seed``; batches are merged in spawn order, so the counts do not
    depend on ``workers``.
    """
    probs = np.array([b.probability for b in result.branches])
    if result.tail_mass > DEFAULT_TAIL_TOLERANCE:
        raise TailMassError(f"tail mass {result.tail_mass:.3e} too large for sampling")
    seeds = np.random.SeedSequence(seed).spawn(TRAJECTORY_BATCHES)
    sizes = [trials // TRAJECTORY_BATCHES + (i < trials % TRAJECTORY_BATCHES) for i in range(TRAJECTORY_BATCHES)]

    def batch(i):
        rng = np.random.default_rng(seeds[i])
        return rng.choice(len(probs), size=sizes[i], p=probs / probs.sum())

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as pool:
            draws = list(pool.map(batch, range(TRAJECTORY_BATCHES)))
    else:
        draws = [batch(i) for i in range(TRAJECTORY_BATCHES)]
    counts = Counter(int(i) for d in draws for i in d)
    result.trajectory_counts = {result.branches[i].outcome: counts[i] for i in sorted(counts)}
    return result.trajectory_counts


def apply_loss(state: HybridState, which: str, polarization: str) -> HybridState:
    """Annihilate one photon of ``polarization`` on qudit ``which`` (unnormalized).

    A V loss sends ``|j>_n`` to ``sqrt(j) |j-1>_{n-1}``; an H loss sends it
    to ``sqrt(n-1-j) |j>_{n-1}``.  The squared norm of the result is the
    weight of the loss event.
    """
    if which not in ("a", "b"):
        raise StateError(f"unknown qudit {which!r}")
    if polarization not in ("H", "V"):
        raise StateError(f"unknown polarization {polarization!r}")

    def lose(ket: QuditKet) -> tuple[float, QuditKet | None]:
        if polarization == "V":
            if ket.n_v == 0:
                return 0.0, None
            return math.sqrt(ket.n_v), QuditKet(ket.dim - 1, ket.index - 1)
        if ket.n_h == 0:
            return 0.0, None
        return math.sqrt(ket.n_h), QuditKet(ket.dim - 1, ket.index)

    def act(t: HybridTerm):
        amp, ket = lose(t.ket_a if which == "a" else t.ket_b)
        if ket is None:
            return None
        if which == "a":
            return t.replace(coeff=t.coeff * amp, ket_a=ket)
        return t.replace(coeff=t.coeff * amp, ket_b=ket)

    out = state.map_terms(act)
    if not len(out):
        raise StateError("state destroyed by loss")
    return out


def _loss_patterns(m: int):
    # (number of V losses on a, on b); H losses make up the rest of m.
    return list(itertools.product(range(m + 1), repeat=2))


def loss_robustness_report(a: QuditSpec, b: QuditSpec, m: int, params: ProtocolParams, rank_tol: float = 1e-6) -> dict:
    """Herald every pattern of ``m`` photon losses per input qudit.

    Each pattern records its loss weight (squared norm of the annihilated
    input), the herald probability and the Schmidt coefficients of the
    heralded state with the spent bus traced out.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if m < 0 or (m > 0 and m >= a.dim - 1):
        raise ValueError(f"cannot lose {m} photons from each {a.dim}-level qudit")
    base = product_state(a.coeffs, b.coeffs)
    rows = []
    for va, vb in _loss_patterns(m):
        pattern = {"a": "V" * va + "H" * (m - va), "b": "V" * vb + "H" * (m - vb)}
        row = {"pattern": pattern, "destroyed": False}
        try:
            lossy = base
            for q in ("a", "b"):
                for pol in pattern[q]:
                    lossy = apply_loss(lossy, q, pol)
        except StateError:
            row.update(destroyed=True, weight=0.0)
            rows.append(row)
            continue
        weight = norm_squared(lossy)
        lossy = normalize(lossy)
        res = herald_module(lossy, params.alpha, params.theta)
        success = res.branch("success")
        row.update(
            weight=weight,
            dim=a.dim - m,
            herald_probability=success.probability,
            ideal_herald_probability=res.ideal_success_probability,
        )
        if success.state is not None:
            coeffs = schmidt_coefficients(success.state, trace_bus=True)
            rank = schmidt_rank(coeffs, rank_tol)
            if rank > a.dim - m:
                raise StateError(f"heralded rank {rank} exceeds reduced dimension {a.dim - m}")
            row.update(schmidt_coefficients=coeffs, schmidt_rank=rank, full_rank=rank == a.dim - m)
        else:
            row.update(schmidt_coefficients=[], schmidt_rank=0, full_rank=False)
        rows.append(row)
    return {"m": m, "dim": a.dim, "branches": rows}
