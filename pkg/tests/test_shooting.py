from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from raindrop.ode import IntegratorSettings, PhaseState, RhsKind, integrate
from raindrop.shooting import (
    BracketError,
    Outcome,
    classify,
    refine_interval,
)

from conftest import A_STAR

DEFAULT = IntegratorSettings()


def oracle_status(a: np.ndarray, horizon: float, h: float = 2e-3) -> np.ndarray:
    """Vectorised fixed-step RK4 for u''' = f(u): -1 low, +1 high, 0 undecided."""
    def f(u):
        return np.where(u <= 0, -1.0, np.where(u >= math.pi, 1.0, -np.cos(u)))

    u = np.zeros_like(a)
    u1 = a.astype(float).copy()
    u2 = np.zeros_like(a)
    status = np.zeros(len(a), dtype=int)
    for _ in range(int(round(horizon / h))):
        k1 = (u1, u2, f(u))
        k2 = (u1 + 0.5 * h * k1[1], u2 + 0.5 * h * k1[2], f(u + 0.5 * h * k1[0]))
        k3 = (u1 + 0.5 * h * k2[1], u2 + 0.5 * h * k2[2], f(u + 0.5 * h * k2[0]))
        k4 = (u1 + h * k3[1], u2 + h * k3[2], f(u + h * k3[0]))
        u = u + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        u1 = u1 + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        u2 = u2 + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        status = np.where(status != 0, status, np.where(u <= 0, -1, np.where(u >= math.pi, 1, 0)))
    return status


def oracle_bracket(a: np.ndarray, status: np.ndarray) -> tuple[float, float]:
    low = np.nonzero(status == -1)[0]
    high = np.nonzero(status == 1)[0]
    # one Low -> High transition: every Low slope lies below every High slope
    assert low.max() < high.min()
    return float(a[low.max()]), float(a[high.min()])


@pytest.fixture(scope="module")
def oracle_a_star():
    a = np.linspace(0.0, 10.0, 10**4)
    lo, hi = oracle_bracket(a, oracle_status(a, 10.0))
    for horizon in (15.0, 20.0, 25.0):
        a = np.linspace(lo, hi, 201)
        lo, hi = oracle_bracket(a, oracle_status(a, horizon))
    return lo, hi


class TestClassify:
    def test_zero_slope_escapes_low(self):
        c = classify(0.0, DEFAULT)
        assert c.outcome is Outcome.ESCAPED_LOW
        assert 0 < c.s_exit < 1e-3

    def test_negative_slope_escapes_low(self):
        assert classify(-0.5, DEFAULT).outcome is Outcome.ESCAPED_LOW

    def test_large_slope_escapes_high(self):
        c = classify(10.0, dataclasses.replace(DEFAULT, horizon=5.0))
        assert c.outcome is Outcome.ESCAPED_HIGH and c.s_exit <= 0.4

    def test_critical_undecided(self):
        assert classify(A_STAR, DEFAULT).outcome is Outcome.UNDECIDED

    def test_perturbed_slopes_escape(self):
        lo = classify(A_STAR - 1e-6, DEFAULT)
        hi = classify(A_STAR + 1e-6, DEFAULT)
        assert lo.outcome is Outcome.ESCAPED_LOW and lo.s_exit < 25
        assert hi.outcome is Outcome.ESCAPED_HIGH and hi.s_exit < 25

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
    def test_monotone(self, x, y):
        a, b = min(x, y), max(x, y)
        cfg = dataclasses.replace(DEFAULT, horizon=10.0)
        ca, cb = classify(a, cfg), classify(b, cfg)
        if ca.outcome is Outcome.ESCAPED_HIGH:
            assert cb.outcome is Outcome.ESCAPED_HIGH and cb.s_exit <= ca.s_exit
        if cb.outcome is Outcome.ESCAPED_LOW:
            assert ca.outcome is Outcome.ESCAPED_LOW

    def test_escape_is_final(self):
        rng = np.random.default_rng(7)
        cfg = dataclasses.replace(DEFAULT, horizon=10.0)
        done = 0
        for a in rng.uniform(0.01, 5.0, 40):
            c = classify(float(a), cfg)
            if not c.escaped:
                continue
            tr_exit = integrate(PhaseState(0, 0, float(a), 0), RhsKind.MODIFIED_F,
                                dataclasses.replace(cfg, horizon=c.s_exit + 1e-9))
            start = tr_exit.state(tr_exit.s_end)
            far = integrate(start, RhsKind.MODIFIED_F,
                            dataclasses.replace(cfg, horizon=2 * cfg.horizon, derivative_cap=None))
            grid = np.linspace(start.s + 1e-6, far.s_end, 2000)
            u = far.evaluate(grid)[0]
            assert not np.any((u > 0) & (u < math.pi))
            done += 1
            if done == 10:
                break
        assert done == 10


class TestRefine:
    def test_report(self, report):
        assert report.bracket_width <= 1e-13
        assert report.bracket.a_lo < report.a_star < report.bracket.a_hi
        assert report.bounded_horizon == 25.0
        assert len(report.bracket.history) == 5
        hist = report.bracket.history
        for outer, inner in zip(hist, hist[1:]):
            assert outer.contains(inner)
        assert all(r.lower <= report.a_star <= r.upper for r in hist)

    def test_regression_constant(self, report):
        assert report.a_star == pytest.approx(A_STAR, abs=1e-12)

    def test_matches_oracle(self, report, oracle_a_star):
        lo, hi = oracle_a_star
        assert hi - lo < 1e-8
        assert lo - 1e-8 <= report.a_star <= hi + 1e-8

    def test_bounded_trajectory_inside(self, report):
        traj = report.trajectory
        s = np.linspace(1e-3, report.bounded_horizon, 20001)
        u = traj.evaluate(s)[0]
        assert np.all((u > 0) & (u < math.pi))

    def test_bad_seeds(self):
        with pytest.raises(BracketError):
            refine_interval(5.0, 10.0)
        with pytest.raises(BracketError):
            refine_interval(10.0, 5.0)

    def test_to_dict(self, report):
        d = report.to_dict()
        assert set(d) >= {"a_star", "bracket_width", "bounded_horizon", "interval_history"}
        assert len(d["interval_history"]) == 5
