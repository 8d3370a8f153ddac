"""Executable checks of the qualitative properties used in the construction.

All checks on the monotone equation are run in the shifted variable
``v = u - pi/2`` where the odd right-hand side ``g`` makes the statements
symmetric.  Each check returns a :class:`LemmaReport`; failures carry the
arc length of the violation in ``witnesses``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ode import (
    D1_ZERO,
    HALF_PI,
    DomainError,
    IntegratorSettings,
    PhaseState,
    RhsKind,
    Trajectory,
    eval_rhs,
    find_events,
    integrate,
)
from .shooting import ShootReport, refine_interval, shoot

PI3_192 = math.pi ** 3 / 192.0
FAMILIES = ("order", "trifecta", "amplitude_decay", "converges", "nonproper")


def delta(z: float) -> float:
    """Contraction factor ``1 - z^2/192`` of a max-to-min bounce."""
    return 1.0 - z * z / 192.0


class ExtremumKind(enum.Enum):
    MAX = "max"
    MIN = "min"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class Extremum:
    s: float
    value: float
    kind: ExtremumKind
    d2: float = 0.0


@dataclass
class LemmaReport:
    lemma: str
    passed: bool
    witnesses: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"lemma": self.lemma, "passed": bool(self.passed),
                "witnesses": self.witnesses, "margins": self.margins}


def _with_horizon(settings: IntegratorSettings, horizon: float | None) -> IntegratorSettings:
    if horizon is None:
        return settings
    return dataclasses.replace(settings, horizon=float(horizon))


def check_order_preservation(a: float, b: float, settings: IntegratorSettings = IntegratorSettings(),
                             horizon: float | None = 10.0) -> LemmaReport:
    """Solutions of the monotone equation stay ordered: ``u_a < u_b`` for ``s > 0``."""
    if not (0 < a < b):
        raise DomainError(f"need 0 < a < b, got a={a!r}, b={b!r}")
    st = _with_horizon(settings, horizon)
    ta = shoot(a, st, stop_at_exit=False)
    tb = shoot(b, st, stop_at_exit=False)
    s = np.union1d(ta.s, tb.s)
    s = s[s > 0]
    gap = tb.evaluate(s)[0] - ta.evaluate(s)[0]
    i = int(np.argmin(gap))
    passed = bool(np.all(gap > 0))
    wit = {"a": a, "b": b, "horizon": st.horizon, "n_samples": int(len(s))}
    if not passed:
        wit["s_violation"] = float(s[np.argmax(gap <= 0)])
    return LemmaReport("order", passed, wit,
                       {"min_gap": float(gap[i]), "s_min_gap": float(s[i]),
                        "final_gap": float(gap[-1])})


def trifecta_holds(state: PhaseState) -> bool:
    g = eval_rhs(RhsKind.SHIFTED_G, state.value)
    return g >= 0 and state.d1 >= 0 and state.d2 >= 0 and (g > 0 or state.d1 > 0 or state.d2 > 0)


def check_trifecta(initial: PhaseState, settings: IntegratorSettings = IntegratorSettings(),
                   horizon: float | None = 20.0) -> LemmaReport:
    """With ``g(v), v', v'' >= 0`` (one strict) ``v`` increases with no critical point."""
    if not trifecta_holds(initial):
        raise DomainError("initial state does not satisfy g(v) >= 0, v' >= 0, v'' >= 0 "
                          "with one strict")
    st = _with_horizon(settings, horizon)
    traj = integrate(initial, RhsKind.SHIFTED_G, st)
    events = find_events(traj, [D1_ZERO])
    grid = np.arange(initial.s, st.horizon, st.scan_step)[1:]
    grid = np.append(grid, st.horizon)
    y = traj.evaluate(grid)
    increasing = bool(np.all(np.diff(y[0]) > 0) and np.all(y[1] > 0))
    passed = not events and increasing
    wit = {"initial": dataclasses.asdict(initial), "horizon": st.horizon,
           "critical_points": [e.s for e in events]}
    if not passed:
        bad = [e.s for e in events]
        if not increasing:
            bad.append(float(grid[np.argmax(y[1] <= 0)]))
        wit["s_violation"] = min(bad)
    return LemmaReport("trifecta", passed, wit, {"min_slope": float(np.min(y[1]))})


def _shift(traj: Trajectory) -> float:
    return HALF_PI if traj.rhs is RhsKind.MODIFIED_F else 0.0


def extrema_sequence(trajectory: Trajectory, s_max: float | None = None) -> list[Extremum]:
    """Critical points of ``v`` in increasing ``s``, typed by the sign of ``v''``.

    A monotone-equation trajectory is viewed through ``v = u - pi/2``.
    """
    shift = _shift(trajectory)
    tol = trajectory.settings.event_tol
    out = []
    for ev in find_events(trajectory, [D1_ZERO]):
        if s_max is not None and ev.s > s_max:
            break
        v, _, d2 = (float(c) for c in trajectory.evaluate(ev.s))
        if abs(d2) < tol:
            kind = ExtremumKind.DEGENERATE
        else:
            kind = ExtremumKind.MAX if d2 < 0 else ExtremumKind.MIN
        out.append(Extremum(ev.s, v - shift, kind, d2))
    return out


def check_amplitude_decay(extrema: Sequence[Extremum],
                          noise: Callable[[float], float] | None = None,
                          noise_factor: float = 10.0) -> LemmaReport:
    """Consecutive extrema contract: ``|m| < k``, with the sharper bounds
    ``|m| < delta(k) k`` for ``k <= pi`` and ``|m| < k - pi^3/192`` beyond.

    Maxima must be positive and minima negative.  When ``noise`` is given
    the chain stops at the first extremum whose amplitude is within
    ``noise_factor * noise(s)``; the cut is reported.
    """
    ex = list(extrema)
    for e in ex:
        if e.kind is ExtremumKind.DEGENERATE:
            return LemmaReport("amplitude_decay", False,
                               {"s_violation": e.s, "reason": "degenerate critical point",
                                "d2": e.d2})
    for p, q in zip(ex, ex[1:]):
        if p.kind is q.kind:
            raise DomainError(f"extrema do not alternate at s={q.s!r}")

    cut = None
    if noise is not None:
        for i, e in enumerate(ex):
            thr = noise_factor * noise(e.s)
            if abs(e.value) <= thr:
                cut = {"s": e.s, "threshold": thr, "dropped": len(ex) - i}
                ex = ex[:i]
                break

    wit: dict = {"n_extrema": len(ex), "truncation": cut,
                 "extrema": [[e.s, e.value, e.kind.value] for e in ex]}
    margins = {"strictmin": math.inf, "strictbounce": math.inf}
    for e in ex:
        if (e.kind is ExtremumKind.MAX) != (e.value > 0):
            wit["s_violation"] = e.s
            wit["reason"] = "maximum not positive" if e.kind is ExtremumKind.MAX \
                else "minimum not negative"
            return LemmaReport("amplitude_decay", False, wit, margins)
    for p, q in zip(ex, ex[1:]):
        k, m = abs(p.value), abs(q.value)
        bound = delta(k) * k if k <= math.pi else k - PI3_192
        margins["strictmin"] = min(margins["strictmin"], k - m)
        margins["strictbounce"] = min(margins["strictbounce"], bound - m)
        if not (m < k and m < bound):
            wit["s_violation"] = q.s
            wit["pair"] = [k, m]
            return LemmaReport("amplitude_decay", False, wit, margins)
    return LemmaReport("amplitude_decay", True, wit, margins)


def check_nonproper_criterion(a: float, b0: float, settings: IntegratorSettings = IntegratorSettings(),
                              horizon: float | None = 15.0) -> LemmaReport:
    """Large initial ``theta_ss`` forces linear curvature growth.

    With ``theta(0) = 0, theta_s(0) = a, theta_ss(0) = b0 > 2/a`` checks
    ``theta_ss >= b0 - 2/a`` and
    ``(b0 - 2/a) s <= kappa(s) - kappa(0) <= (b0 + 2/a) s``.
    """
    if not a > 0:
        raise DomainError(f"a must be positive, got {a!r}")
    eps = b0 - 2.0 / a
    if not eps > 0:
        raise DomainError(f"need b0 > 2/a = {2.0 / a!r}, got {b0!r}")
    st = _with_horizon(settings, horizon)
    st = dataclasses.replace(st, derivative_cap=None)
    traj = integrate(PhaseState(0.0, 0.0, a, b0), RhsKind.ORIGINAL, st)
    s = traj.s[1:]
    _, k, kss = traj.y[:, 1:]
    dk = k - a
    m_ss = kss - eps
    m_lo = dk - eps * s
    m_hi = (b0 + 2.0 / a) * s - dk
    ok = (m_ss >= 0) & (m_lo >= 0) & (m_hi >= 0)
    wit = {"a": a, "b0": b0, "horizon": st.horizon, "n_samples": int(len(s))}
    if not np.all(ok):
        wit["s_violation"] = float(s[np.argmin(ok)])
    return LemmaReport("nonproper", bool(np.all(ok)), wit,
                       {"theta_ss": float(np.min(m_ss)), "lower": float(np.min(m_lo)),
                        "upper": float(np.min(m_hi))})


def noise_envelope(report: ShootReport, settings: IntegratorSettings = IntegratorSettings()):
    """``s -> |u_hi(s) - u_lo(s)|`` for the final shooting bracket.

    Any feature of the computed solution smaller than this is not resolved
    by the bracket.
    """
    st = dataclasses.replace(settings, horizon=report.bounded_horizon)
    lo = shoot(report.bracket.a_lo, st, stop_at_exit=False)
    hi = shoot(report.bracket.a_hi, st, stop_at_exit=False)

    def env(s: float) -> float:
        return float(abs(hi.evaluate(s)[0] - lo.evaluate(s)[0]))

    return env


def check_converges(report: ShootReport, tail_threshold: float) -> LemmaReport:
    """The bounded solution stays in ``(0, pi)`` and approaches ``pi/2``."""
    traj = report.trajectory
    S = report.bounded_horizon
    grid = np.arange(traj.settings.scan_step, S, traj.settings.scan_step)
    grid = np.append(grid, S)
    u = traj.evaluate(grid)[0]
    inside = (u > 0) & (u < math.pi)
    tail = abs(float(traj.evaluate(S)[0]) - HALF_PI)
    wit = {"a_star": report.a_star, "bounded_horizon": S, "tail": tail,
           "tail_threshold": tail_threshold}
    passed = bool(np.all(inside)) and tail < tail_threshold
    if not np.all(inside):
        wit["s_violation"] = float(grid[np.argmin(inside)])
    elif not passed:
        wit["s_violation"] = S
    return LemmaReport("converges", passed, wit,
                       {"tail": tail_threshold - tail,
                        "distance_to_boundary": float(min(u.min(), math.pi - u.max()))})


# |theta - pi/2| at s = 25 on the default run is 4.5e-4
TAIL_THRESHOLD = 1e-3


def _aggregate(family: str, reports: list[LemmaReport]) -> LemmaReport:
    failed = [r for r in reports if not r.passed]
    margins: dict = {}
    for r in reports:
        for key, val in r.margins.items():
            if isinstance(val, (int, float)):
                margins[key] = min(margins.get(key, math.inf), val)
    wit = {"instances": len(reports), "failed": len(failed)}
    if failed:
        wit["first_failure"] = failed[0].witnesses
        if "s_violation" in failed[0].witnesses:
            wit["s_violation"] = failed[0].witnesses["s_violation"]
    return LemmaReport(family, not failed, wit, margins)


def random_order_pairs(rng: np.random.Generator, n: int) -> list[tuple[float, float]]:
    pairs = []
    while len(pairs) < n:
        a, b = np.sort(rng.uniform(0.01, 5.0, 2))
        if b - a > 1e-3:
            pairs.append((float(a), float(b)))
    return pairs


def random_trifecta_states(rng: np.random.Generator, n: int) -> list[PhaseState]:
    states = []
    while len(states) < n:
        v = float(rng.uniform(0.0, 3.0))
        d1, d2 = (float(x) for x in rng.uniform(0.0, 2.0, 2))
        # also exercise the boundary cases v = 0 / v' = 0 / v'' = 0
        mask = rng.integers(0, 2, 3)
        v, d1, d2 = v * mask[0], d1 * mask[1], d2 * mask[2]
        st = PhaseState(0.0, v, d1, d2)
        if trifecta_holds(st):
            states.append(st)
    return states


def run_suite(report: ShootReport | None = None, seed: int = 0, n_random: int = 50,
              settings: IntegratorSettings = IntegratorSettings(),
              inject: Sequence[Extremum] | None = None,
              tail_threshold: float = TAIL_THRESHOLD) -> list[LemmaReport]:
    """Default verification suite: one aggregated report per family.

    ``inject`` replaces the computed extrema chain (used to exercise the
    failure path).
    """
    rng = np.random.default_rng(seed)
    if report is None:
        report = refine_interval(settings=settings)
    out = [
        _aggregate("order", [check_order_preservation(a, b, settings)
                             for a, b in random_order_pairs(rng, n_random)]),
        _aggregate("trifecta", [check_trifecta(s, settings)
                                for s in random_trifecta_states(rng, n_random)]),
    ]
    if inject is None:
        ext = extrema_sequence(report.trajectory)
        decay = check_amplitude_decay(ext, noise_envelope(report, settings))
    else:
        decay = check_amplitude_decay(inject)
    out.append(decay)
    out.append(check_converges(report, tail_threshold))
    out.append(_aggregate("nonproper", [check_nonproper_criterion(1.0, 3.0, settings),
                                        check_nonproper_criterion(2.0, 1.01, settings)]))
    return out
