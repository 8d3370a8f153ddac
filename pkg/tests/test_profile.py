from __future__ import annotations

import math

import numpy as np
import pytest

from raindrop.lemmas import TAIL_THRESHOLD
from raindrop.ode import DomainError, IntegratorSettings, PhaseState, RhsKind, integrate
from raindrop.profile import (
    AngleProfile,
    CertificationError,
    Curve,
    assemble_theta,
    build_profile,
    curvature_profile,
    line_curve,
    properness_witness,
    residual_profile,
    select_sigma0,
    translator_residual,
)
from raindrop.shooting import ShootReport


@pytest.fixture(scope="module")
def curve(profile):
    return build_profile(profile, 1e-3)


class TestAngleProfile:
    def test_initial_data(self, profile, report):
        th, k, kk = profile.evaluate(0.0)
        assert th == 0.0 and kk == 0.0
        assert k == report.a_star

    def test_odd_reflection(self, profile):
        s = np.random.default_rng(3).uniform(0, profile.S, 100)
        th_p, k_p, kk_p = profile.evaluate(s)
        th_m, k_m, kk_m = profile.evaluate(-s)
        assert np.all(th_p + th_m == 0)
        assert np.all(k_p == k_m)
        assert np.all(kk_p + kk_m == 0)

    def test_tail(self, profile):
        assert abs(profile.theta(profile.S) - math.pi / 2) < TAIL_THRESHOLD

    def test_outside_span(self, profile):
        with pytest.raises(DomainError):
            profile.evaluate(profile.S + 1)

    def test_certification_rejects_escape(self, report):
        bad_traj = integrate(PhaseState(0, 0, 2.0, 0), RhsKind.MODIFIED_F,
                             IntegratorSettings(horizon=10.0))
        bad = ShootReport(2.0, 0.0, 10.0, bad_traj, report.bracket, 0.0, 0.0, 0)
        with pytest.raises(CertificationError):
            assemble_theta(bad)


class TestCurve:
    def test_origin_and_size(self, curve, profile):
        n = int(round(profile.S / 1e-3))
        assert len(curve) == 2 * n + 1
        mid = len(curve) // 2
        assert curve.s[mid] == 0 and curve.x[mid] == 0 and curve.y[mid] == 0

    def test_unit_speed(self, curve):
        ch = curve.chords()
        assert np.max(np.abs(ch - curve.ds)) < curve.ds**3

    def test_mirror(self, curve):
        assert np.max(np.abs(curve.x + curve.x[::-1])) <= 10 * curve.ds**3
        assert np.max(np.abs(curve.y - curve.y[::-1])) <= 10 * curve.ds**3

    def test_constant_profile_is_vertical(self):
        traj = integrate(PhaseState(0, math.pi / 2, 0, 0), RhsKind.ORIGINAL,
                         IntegratorSettings(horizon=2.0))
        c = build_profile(AngleProfile(0.0, traj, 2.0), 0.01)
        pos = c.s >= 0
        assert np.max(np.abs(c.x[pos])) < 1e-12
        assert np.max(np.abs(c.y[pos] - c.s[pos])) < 1e-12

    def test_properness(self, curve, profile):
        w = properness_witness(curve, profile.theta(curve.s))
        assert w.holds
        assert 0 < w.sigma0 < 1
        th = profile.theta(curve.s)
        tail = curve.s >= w.sigma0
        assert np.all(np.abs(th[tail] - math.pi / 2) < math.pi / 4)
        assert np.all(np.diff(curve.y[tail]) > 0)
        assert np.all(np.diff(curve.y[curve.s <= -w.sigma0]) < 0)

    def test_sigma0_requires_tail(self):
        s = np.linspace(0, 1, 11)
        with pytest.raises(DomainError):
            select_sigma0(s, np.zeros_like(s))

    def test_bad_ds(self, profile):
        with pytest.raises(DomainError):
            build_profile(profile, 0.0)
        with pytest.raises(DomainError):
            build_profile(profile, 100.0)


class TestCurvature:
    def test_values(self, profile, report):
        cp = curvature_profile(profile, np.array([-3.0, 0.0, 3.0]))
        assert cp.kappa[1] == report.a_star
        assert cp.kappa_ss[1] == -1.0
        assert cp.kappa[0] == cp.kappa[2]
        assert cp.kappa_s[0] == -cp.kappa_s[2]

    def test_nonconstant(self, profile):
        cp = curvature_profile(profile)
        assert np.ptp(cp.kappa) > 1.0
        assert np.all(np.diff(cp.s) > 0)


class TestResidual:
    def test_raindrop(self, curve):
        assert translator_residual(curve) < 1e-4

    def test_leading_error_term(self, curve, report):
        # chord-angle error at the apex is ds^2 kappa^2 cos(theta) / 6
        expected = report.a_star**2 * curve.ds**2 / 6
        assert translator_residual(curve) == pytest.approx(expected, rel=1e-2)

    def test_second_order(self, profile):
        r = [translator_residual(build_profile(profile, ds)) for ds in (2e-3, 1e-3)]
        assert 3.9 < r[0] / r[1] < 4.1

    def test_line(self):
        assert translator_residual(line_curve(50, 0.01)) == 1.0

    def test_too_few_vertices(self):
        c = line_curve(2, 0.1)
        with pytest.raises(DomainError):
            translator_residual(c)
        assert translator_residual(line_curve(3, 0.1)) == 1.0

    def test_profile_shape(self, curve):
        s, r = residual_profile(curve)
        assert len(s) == len(r) and np.all(np.diff(s) > 0)
