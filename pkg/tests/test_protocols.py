import cmath
import math

import numpy as np
import pytest

from conftest import random_spec
from xpmqudit.elements import MIRRORED_PLAN, beamsplitter_5050, phase_shift, xpm_couple
from xpmqudit.hybrid_state import (
    HybridState,
    HybridTerm,
    QuditKet,
    StateError,
    product_state,
    schmidt_coefficients,
)
from xpmqudit.measurement import TailMassError, qnd_project
from xpmqudit.protocols import (
    ProtocolParams,
    QuditSpec,
    apply_loss,
    cascade,
    quoted_error_probability,
    generate_entangled,
    loss_robustness_report,
    run_trajectories,
    solve_phase_corrections,
)

S3 = 1 / math.sqrt(3)


@pytest.fixture(scope="module")
def cascade_maximal():
    m = QuditSpec.maximal(3)
    return cascade(m, m, ProtocolParams(50, 0.1))


class TestSpecs:
    def test_maximal(self):
        assert QuditSpec.maximal(4).coeffs == (0.5,) * 4

    @pytest.mark.parametrize(
        "dim,coeffs",
        [(1, (1,)), (3, (1, 0)), (3, (1, 1, 0))],
    )
    def test_invalid(self, dim, coeffs):
        with pytest.raises(ValueError):
            QuditSpec(dim, coeffs)

    def test_from_unnormalized(self):
        assert QuditSpec.from_unnormalized([3, 4j]).coeffs == pytest.approx((0.6, 0.8j))

    @pytest.mark.parametrize("kw", [{"alpha": 0}, {"mode": "foo"}, {"trials": -1}])
    def test_params(self, kw):
        base = {"alpha": 1.0, "theta": 0.1} | kw
        with pytest.raises(ValueError):
            ProtocolParams(**base)


class TestHerald:
    def test_maximal_qutrit(self):
        m = QuditSpec.maximal(3)
        r = generate_entangled(m, m, ProtocolParams(1e4, 0.01))
        assert r.success_probability == pytest.approx(1 / 3, abs=1e-6)
        assert r.total_probability == pytest.approx(1, abs=1e-10)
        s = r.branch("success").state
        assert schmidt_coefficients(s.drop_bus(0)) == pytest.approx([S3] * 3, abs=1e-9)

    @pytest.mark.parametrize("n", range(2, 9))
    def test_maximal_qudit(self, n):
        m = QuditSpec.maximal(n)
        assert generate_entangled(m, m, ProtocolParams(1e4, 0.01)).success_probability == pytest.approx(
            1 / n, abs=1e-6
        )

    def test_single_diagonal_term(self):
        a = QuditSpec(3, (1, 0, 0))
        r = generate_entangled(a, a, ProtocolParams(3.0, 0.2))
        assert r.success_probability >= 1 - 1e-12
        assert r.branch("success").fidelity == pytest.approx(1, abs=1e-12)

    def test_no_diagonal_overlap(self):
        # |0>|1> only: the mode-0 label is i*sqrt2*alpha*sin(theta)*e^{2i theta}
        alpha, theta = 1.3, 0.4
        r = generate_entangled(QuditSpec(3, (1, 0, 0)), QuditSpec(3, (0, 1, 0)), ProtocolParams(alpha, theta))
        expected = math.exp(-2 * alpha**2 * math.sin(theta) ** 2)
        assert r.success_probability == pytest.approx(expected, rel=1e-12)
        assert r.ideal_success_probability == 0
        assert r.error_probability == pytest.approx(expected, rel=1e-12)

    def test_herald_limit_monotone(self):
        m = QuditSpec.maximal(3)
        theta = 0.1
        gaps = []
        for x in (1, 2, 4, 8, 16):
            r = generate_entangled(m, m, ProtocolParams(x / math.sin(theta), theta))
            gaps.append(abs(r.success_probability - 1 / 3))
        # once the gap drops below double resolution near 1/3 it stays at zero
        for a, b in zip(gaps, gaps[1:]):
            assert b <= a
            assert b < a or a < 1e-15

    @pytest.mark.parametrize("alpha,theta", [(2.0, 0.2), (10, 0.05), (3 * cmath.exp(0.7j), 0.3)])
    def test_error_closed_form(self, alpha, theta):
        m = QuditSpec.maximal(3)
        r = generate_entangled(m, m, ProtocolParams(alpha, theta))
        a2 = abs(alpha) ** 2
        derived = 4 / 9 * math.exp(-2 * a2 * math.sin(theta) ** 2) + 2 / 9 * math.exp(-2 * a2 * math.sin(2 * theta) ** 2)
        assert r.error_probability == pytest.approx(derived, abs=1e-12)
        assert r.error_probability_quoted == pytest.approx(quoted_error_probability(alpha, theta))
        assert r.success_probability == pytest.approx(1 / 3 + derived, abs=1e-12)

    def test_random_fidelity(self, rng):
        for n in (3, 4):
            a, b = random_spec(rng, n), random_spec(rng, n)
            r = generate_entangled(a, b, ProtocolParams(50, 0.1))
            assert r.branch("success").fidelity >= 1 - 1e-6
            assert r.success_probability == pytest.approx(r.ideal_success_probability, abs=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            generate_entangled(QuditSpec.maximal(3), QuditSpec.maximal(4), ProtocolParams(1, 0.1))

    def test_trajectory_mode(self):
        m = QuditSpec.maximal(3)
        r = generate_entangled(m, m, ProtocolParams(2.0, 0.3, mode="trajectory", trials=1000, rng_seed=4))
        assert sum(r.trajectory_counts.values()) == 1000


class TestNumberProjection:
    """Stage-1 number projection, rebuilt here from the individual elements."""

    alpha, theta = 2.0, 0.3

    def projected(self, n):
        s = product_state([S3] * 3, [S3] * 3, (self.alpha, self.alpha))
        s = xpm_couple(s, MIRRORED_PLAN, self.theta)
        s = phase_shift(phase_shift(s, 0, -2 * self.theta), 1, -2 * self.theta)
        s = beamsplitter_5050(s, 0, 1)
        return qnd_project(s, 0).branch(n).post_state

    def derived(self, d, n):
        beta = 1j * math.sqrt(2) * self.alpha * math.sin(d * self.theta)
        return cmath.exp(-abs(beta) ** 2 / 2) * beta**n / math.sqrt(math.factorial(n))

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_coefficients(self, n):
        post = self.projected(n)
        kets = {(i, j): i - j for i in range(3) for j in range(3) if i != j}
        got = np.array([post.amplitude(*k) for k in kets])
        want = np.array([self.derived(d, n) for d in kets.values()])
        scale = got[0] / want[0]
        assert np.allclose(got, scale * want, atol=1e-10, rtol=0)
        for i in range(3):
            assert post.amplitude(i, i) == 0

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_parity_ratio(self, n):
        post = self.projected(n)
        sign = cmath.exp(1j * n * math.pi)
        assert post.amplitude(0, 1) / post.amplitude(1, 0) == pytest.approx(sign, abs=1e-10)
        assert post.amplitude(0, 2) / post.amplitude(2, 0) == pytest.approx(sign, abs=1e-10)

    def test_surviving_labels(self):
        post = self.projected(2)
        gamma, gamma2 = self.alpha * math.cos(self.theta), self.alpha * math.cos(2 * self.theta)
        for t in post.terms:
            want = gamma if abs(t.ket_a.index - t.ket_b.index) == 1 else gamma2
            assert t.bus[0] == pytest.approx(math.sqrt(2) * want, abs=1e-14)


class TestCascade:
    def test_completeness_random(self, rng):
        for _ in range(10):
            r = cascade(random_spec(rng), random_spec(rng), ProtocolParams(4.0, 0.2))
            assert r.total_probability + r.tail_mass == pytest.approx(1, abs=1e-9)

    def test_family_probabilities(self, cascade_maximal):
        fam = cascade_maximal.family_probabilities()
        assert fam["diagonal"] == pytest.approx(1 / 3, abs=1e-9)
        assert fam["outer"] == pytest.approx(2 / 9, abs=1e-9)
        assert fam["middle"] == pytest.approx(4 / 9, abs=1e-9)

    def test_branch_fidelities(self, cascade_maximal):
        for br in cascade_maximal.branches:
            if br.probability >= 1e-12:
                assert br.fidelity >= 1 - 1e-6, (br.label, br.outcome)

    def test_correction_table(self, cascade_maximal):
        def phases(br):
            return {op["qudit"]: op["phi"] for op in br.corrections if op["op"] == "photon_phase"}

        for br in cascade_maximal.branches:
            if br.label == "diagonal":
                assert br.corrections == []
                continue
            assert br.corrections[0] == {"op": "bit_flip", "qudit": "b"}
            n, n2 = br.outcome
            got = phases(br)
            if br.label == "outer":
                assert "b" not in got
                # the |2>|2> component must pick up e^{-i n pi}
                assert cmath.exp(2j * got.get("a", 0.0)) == pytest.approx(cmath.exp(-1j * n * math.pi))
            elif n % 2 == 1 and n2 % 2 == 0:
                assert got == {"a": -math.pi / 2, "b": -math.pi / 2}

    def test_corrected_phases_aligned(self, cascade_maximal):
        for br in cascade_maximal.branches:
            if br.probability < 1e-12 or br.label == "diagonal":
                continue
            amps = [br.state.amplitude(t.ket_a.index, t.ket_b.index) for t in br.state.terms]
            amps = [z for z in amps if abs(z) > 1e-6]
            ref = cmath.phase(amps[0])
            assert all(abs(math.remainder(cmath.phase(z) - ref, 2 * math.pi)) < 1e-10 for z in amps)

    def test_qutrit_only(self):
        with pytest.raises(ValueError):
            cascade(QuditSpec.maximal(4), QuditSpec.maximal(4), ProtocolParams(2, 0.2))

    def test_tail_violation(self):
        m = QuditSpec.maximal(3)
        with pytest.warns(UserWarning), pytest.raises(TailMassError):
            cascade(m, m, ProtocolParams(4.0, 0.3, n_max=2))

    def test_solver_regression(self):
        # each photon on either qudit carrying a quarter turn needs -pi/2 on both
        middle = [(0, 1), (1, 2), (1, 0), (2, 1)]
        phases = {k: math.pi / 2 * (k[0] + k[1]) for k in middle}
        assert solve_phase_corrections(phases) == {"a": -math.pi / 2, "b": -math.pi / 2}
        assert solve_phase_corrections({(0, 0): 0.0, (2, 2): math.pi}, ("a",)) == {"a": -math.pi / 2, "b": 0.0}

    def test_solver_failure(self):
        with pytest.raises(StateError):
            solve_phase_corrections({(0, 0): 0.0, (2, 2): 0.3}, ("a",))


class TestTrajectories:
    def test_multinomial_bounds(self):
        m = QuditSpec.maximal(3)
        r = cascade(m, m, ProtocolParams(2.0, 0.3))
        trials = 100_000
        counts = run_trajectories(r, trials, seed=11)
        for br in r.branches:
            p = br.probability
            sigma = math.sqrt(trials * p * (1 - p))
            assert abs(counts.get(br.outcome, 0) - trials * p) <= 4 * sigma + 1e-9

    def test_workers_do_not_change_counts(self):
        m = QuditSpec.maximal(3)
        r = cascade(m, m, ProtocolParams(2.0, 0.3))
        one = dict(run_trajectories(r, 5000, seed=3, workers=1))
        four = dict(run_trajectories(r, 5000, seed=3, workers=4))
        assert one == four
        assert one != dict(run_trajectories(r, 5000, seed=4))


class TestLoss:
    def test_no_v_photon(self):
        s = product_state([1, 0, 0], [1, 0, 0])
        with pytest.raises(StateError, match="destroyed"):
            apply_loss(s, "a", "V")

    def test_v_loss_arithmetic(self):
        c = (0.2, 0.5j, math.sqrt(1 - 0.04 - 0.25))
        s = apply_loss(product_state(c, [1, 0, 0]), "a", "V")
        assert s.terms[0].ket_a == QuditKet(2, 0) and s.terms[0].coeff == pytest.approx(c[1])
        assert s.terms[1].ket_a == QuditKet(2, 1) and s.terms[1].coeff == pytest.approx(math.sqrt(2) * c[2])

    def test_h_loss_arithmetic(self):
        s = apply_loss(product_state([S3] * 3, [1, 0, 0]), "b", "H")
        assert {t.ket_b for t in s.terms} == {QuditKet(2, 0)}
        assert all(t.coeff == pytest.approx(S3 * math.sqrt(2)) for t in s.terms)

    def test_m0_matches_generate(self):
        m = QuditSpec.maximal(3)
        params = ProtocolParams(20, 0.2)
        rep = loss_robustness_report(m, m, 0, params)
        direct = generate_entangled(m, m, params)
        assert len(rep["branches"]) == 1
        assert rep["branches"][0]["herald_probability"] == pytest.approx(direct.success_probability, rel=1e-14)

    def test_v_losses_give_rank_two(self):
        m = QuditSpec.maximal(3)
        rep = loss_robustness_report(m, m, 1, ProtocolParams(50, 0.1))
        vv = next(r for r in rep["branches"] if r["pattern"] == {"a": "V", "b": "V"})
        assert vv["schmidt_rank"] == 2 and vv["full_rank"]
        assert all(r["schmidt_rank"] <= 2 for r in rep["branches"] if not r["destroyed"])
        asym = next(r for r in rep["branches"] if r["pattern"] == {"a": "V", "b": "H"})
        assert "schmidt_rank" in asym

    def test_m_too_large(self):
        m = QuditSpec.maximal(3)
        with pytest.raises(ValueError):
            loss_robustness_report(m, m, 2, ProtocolParams(5, 0.1))
