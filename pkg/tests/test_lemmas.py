from __future__ import annotations

import math

import numpy as np
import pytest

from raindrop.lemmas import (
    FAMILIES,
    Extremum,
    ExtremumKind,
    check_amplitude_decay,
    check_nonproper_criterion,
    check_order_preservation,
    check_trifecta,
    delta,
    extrema_sequence,
    noise_envelope,
    random_trifecta_states,
    run_suite,
)
from raindrop.ode import DomainError, IntegratorSettings, PhaseState, RhsKind, integrate

MAX, MIN = ExtremumKind.MAX, ExtremumKind.MIN


def test_delta_at_pi():
    assert delta(math.pi) == pytest.approx(0.94860, abs=5e-6)


class TestOrder:
    def test_pass(self):
        assert check_order_preservation(0.5, 1.0).passed

    def test_margin_grows(self):
        r = check_order_preservation(1e-3, 10.0, horizon=5.0)
        assert r.passed and r.margins["final_gap"] > r.margins["min_gap"]

    @pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.0, 1.0), (0.0, 1.0)])
    def test_rejects(self, a, b):
        with pytest.raises(DomainError):
            check_order_preservation(a, b)


class TestTrifecta:
    @pytest.mark.parametrize("state", [PhaseState(0, 0.1, 0, 0.1), PhaseState(0, 0, 1, 0),
                                       PhaseState(0, math.pi / 2 + 1, 0, 0)])
    def test_examples(self, state):
        r = check_trifecta(state)
        assert r.passed and r.witnesses["critical_points"] == []

    @pytest.mark.parametrize("state", [PhaseState(0, 0, 0, 0), PhaseState(0, -0.1, 1, 1),
                                       PhaseState(0, 0.1, -0.1, 1)])
    def test_rejects(self, state):
        with pytest.raises(DomainError):
            check_trifecta(state)

    def test_no_extrema_where_trifecta_holds(self):
        cfg = IntegratorSettings(horizon=20.0)
        for st in random_trifecta_states(np.random.default_rng(5), 5):
            tr = integrate(st, RhsKind.SHIFTED_G, cfg)
            assert extrema_sequence(tr) == []


class TestExtrema:
    def test_equilibrium(self):
        tr = integrate(PhaseState(0, 0, 0, 0), RhsKind.SHIFTED_G, IntegratorSettings(horizon=10))
        assert extrema_sequence(tr) == []

    def test_raindrop(self, report):
        ex = extrema_sequence(report.trajectory)
        assert len(ex) >= 3
        assert all(p.kind is not q.kind for p, q in zip(ex, ex[1:]))
        for e in ex:
            assert (e.value > 0) if e.kind is MAX else (e.value < 0)
        # spacing of critical points follows the linearised half period 3.63
        gaps = np.diff([e.s for e in ex])
        assert np.all(np.abs(gaps[1:] - math.pi / (math.sqrt(3) / 2)) < 0.15)

    def test_amplitude_decay(self, report):
        ex = extrema_sequence(report.trajectory)
        r = check_amplitude_decay(ex, noise_envelope(report))
        assert r.passed
        kept = r.witnesses["extrema"]
        assert len(kept) >= 3
        assert np.all(np.diff(np.abs([e[1] for e in kept])) < 0)


class TestAmplitudeDecay:
    def test_violation(self):
        r = check_amplitude_decay([Extremum(1.0, 1.0, MAX), Extremum(2.0, -1.0, MIN)])
        assert not r.passed and r.witnesses["s_violation"] == 2.0

    def test_bounce_bound(self):
        # |m| < k but above delta(k) k
        k = 2.0
        m = 0.5 * (k + delta(k) * k)
        r = check_amplitude_decay([Extremum(1.0, k, MAX), Extremum(2.0, -m, MIN)])
        assert not r.passed

    def test_large_amplitude_bound(self):
        k = 4.0
        ok = check_amplitude_decay([Extremum(0, k, MAX), Extremum(1, -(k - 0.2), MIN)])
        bad = check_amplitude_decay([Extremum(0, k, MAX), Extremum(1, -(k - 0.1), MIN)])
        assert ok.passed and not bad.passed

    def test_mirrored_pair(self):
        r = check_amplitude_decay([Extremum(0, -1.0, MIN), Extremum(1, 0.5, MAX)])
        assert r.passed

    def test_non_alternating(self):
        with pytest.raises(DomainError):
            check_amplitude_decay([Extremum(0, 1.0, MAX), Extremum(1, 0.5, MAX)])

    def test_degenerate_fails(self):
        r = check_amplitude_decay([Extremum(3.0, 1.0, ExtremumKind.DEGENERATE)])
        assert not r.passed and r.witnesses["s_violation"] == 3.0

    def test_sign_rule(self):
        r = check_amplitude_decay([Extremum(0, -0.5, MAX), Extremum(1, -0.7, MIN)])
        assert not r.passed

    def test_truncation_reported(self):
        ex = [Extremum(0, 1.0, MAX), Extremum(1, -0.5, MIN), Extremum(2, 1e-9, MAX)]
        r = check_amplitude_decay(ex, noise=lambda s: 1e-9)
        assert r.passed and r.witnesses["truncation"]["dropped"] == 1


class TestNonproper:
    def test_example(self):
        r = check_nonproper_criterion(1.0, 3.0)
        assert r.passed and r.margins["theta_ss"] >= 0

    def test_marginal(self):
        r = check_nonproper_criterion(2.0, 1.01)
        assert r.passed and r.margins["theta_ss"] >= 0

    @pytest.mark.parametrize("a,b0", [(1.0, 2.0), (1.0, 1.0), (0.0, 3.0)])
    def test_rejects(self, a, b0):
        with pytest.raises(DomainError):
            check_nonproper_criterion(a, b0)


class TestSuite:
    def test_families_and_determinism(self, report):
        one = [r.to_dict() for r in run_suite(report, n_random=5)]
        two = [r.to_dict() for r in run_suite(report, n_random=5)]
        assert [r["lemma"] for r in one] == list(FAMILIES)
        assert all(r["passed"] for r in one)
        assert one == two
