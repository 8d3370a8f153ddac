"""Shooting on the initial slope of the monotone angle ODE.

Solutions start from ``u(0) = 0, u'(0) = a, u''(0) = 0``.  Once ``u``
touches ``0`` or ``pi`` after ``s = 0`` it never comes back, so every slope
is classified by its first exit.  Slopes whose solution stays in
``[0, pi]`` up to a horizon ``m`` form a closed interval ``I_m``; the
intervals are nested in ``m`` and shrink onto the critical slope ``a*``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from .ode import (
    DomainError,
    IntegrationError,
    IntegratorSettings,
    PhaseState,
    RhsKind,
    Trajectory,
    integrate,
    value_cross,
)

log = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (5.0, 10.0, 15.0, 20.0, 25.0)
DEFAULT_SEEDS = (1e-3, 10.0)
DEFAULT_TOL = 1e-13
DEFAULT_MAX_ITER = 60

EXIT_LOW = value_cross(0.0, direction=-1)
EXIT_HIGH = value_cross(math.pi, direction=+1)


class Outcome(enum.Enum):
    ESCAPED_LOW = "escaped_low"
    ESCAPED_HIGH = "escaped_high"
    UNDECIDED = "undecided"


class BracketError(ValueError):
    """Seeds do not bracket the critical slope."""


class MonotonicityError(RuntimeError):
    """A slope escaped low above a slope that escaped high.

    This contradicts order preservation and means the integrator
    tolerances are too loose for the slopes being compared.
    """


@dataclass(frozen=True)
class Classification:
    a: float
    outcome: Outcome
    horizon: float
    s_exit: float | None = None

    @property
    def escaped(self) -> bool:
        return self.outcome is not Outcome.UNDECIDED


@dataclass(frozen=True)
class IntervalRecord:
    """Numerical ``I_m``: slopes staying in ``[0, pi]`` on ``[0, horizon]``."""

    horizon: float
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, other: "IntervalRecord") -> bool:
        return self.lower <= other.lower and other.upper <= self.upper


@dataclass(frozen=True)
class ShootBracket:
    a_lo: float
    a_hi: float
    history: tuple[IntervalRecord, ...] = ()

    @property
    def width(self) -> float:
        return self.a_hi - self.a_lo


@dataclass(frozen=True)
class ShootReport:
    a_star: float
    bracket_width: float
    bounded_horizon: float
    trajectory: Trajectory = field(repr=False)
    bracket: ShootBracket
    tolerance: float
    decision_horizon: float
    n_classifications: int

    def to_dict(self) -> dict:
        return {
            "a_star": self.a_star,
            "bracket_width": self.bracket_width,
            "bounded_horizon": self.bounded_horizon,
            "a_lo": self.bracket.a_lo,
            "a_hi": self.bracket.a_hi,
            "tolerance": self.tolerance,
            "decision_horizon": self.decision_horizon,
            "n_classifications": self.n_classifications,
            "interval_history": [
                {"horizon": r.horizon, "lower": r.lower, "upper": r.upper}
                for r in self.bracket.history
            ],
        }


def shoot(a: float, settings: IntegratorSettings, stop_at_exit: bool = True) -> Trajectory:
    """Integrate the monotone ODE from slope ``a`` up to ``settings.horizon``."""
    stops = (EXIT_LOW, EXIT_HIGH) if stop_at_exit else ()
    return integrate(PhaseState(0.0, 0.0, float(a), 0.0), RhsKind.MODIFIED_F, settings, stops)


def classify(a: float, settings: IntegratorSettings) -> Classification:
    """Classify slope ``a`` by its first exit from ``(0, pi)`` before the horizon."""
    if not math.isfinite(a):
        raise DomainError(f"slope must be finite, got {a!r}")
    traj = shoot(a, settings)
    if traj.events:
        ev = traj.events[0]
        outcome = Outcome.ESCAPED_LOW if ev.kind == EXIT_LOW else Outcome.ESCAPED_HIGH
        return Classification(a, outcome, settings.horizon, ev.s)
    return Classification(a, Outcome.UNDECIDED, settings.horizon)


class _Classifier:
    """Memo of escape outcomes; enforces order preservation as it goes."""

    def __init__(self, settings: IntegratorSettings):
        self.settings = settings
        self.count = 0
        self.max_low = -math.inf
        self.min_high = math.inf

    def __call__(self, a: float, horizon: float) -> Classification:
        c = classify(a, dataclasses.replace(self.settings, horizon=horizon))
        self.count += 1
        if c.outcome is Outcome.ESCAPED_LOW:
            self.max_low = max(self.max_low, a)
        elif c.outcome is Outcome.ESCAPED_HIGH:
            self.min_high = min(self.min_high, a)
        if self.max_low >= self.min_high:
            raise MonotonicityError(
                f"slope {self.max_low!r} escaped low but {self.min_high!r} escaped high"
            )
        return c


def _bisect_boundary(classify_at, outer: float, inner: float, horizon: float,
                     side: Outcome, tol: float, max_iter: int) -> tuple[float, float]:
    # outer escapes to `side` by `horizon`, inner does not; shrink the gap
    for _ in range(max_iter):
        if abs(inner - outer) < tol:
            break
        mid = 0.5 * (outer + inner)
        if classify_at(mid, horizon).outcome is side:
            outer = mid
        else:
            inner = mid
    return outer, inner


def refine_interval(
    seed_lo: float = DEFAULT_SEEDS[0],
    seed_hi: float = DEFAULT_SEEDS[1],
    horizon_schedule: Sequence[float] = DEFAULT_SCHEDULE,
    settings: IntegratorSettings = IntegratorSettings(),
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    decision_horizon: float | None = None,
) -> ShootReport:
    """Nested-interval search for the slope whose solution stays in ``[0, pi]``.

    For each horizon ``m`` of the schedule both ends of ``I_m`` are located by
    bisection.  The escape-low / escape-high bracket is then narrowed to
    ``tol`` using classifications run out to ``decision_horizon`` (default:
    twice the last horizon), since slopes that close to ``a*`` only exit
    past the schedule.
    """
    schedule = [float(h) for h in horizon_schedule]
    if not schedule or any(h <= 0 for h in schedule) or schedule != sorted(schedule):
        raise DomainError("horizon schedule must be positive and increasing")
    if not seed_lo < seed_hi:
        raise BracketError("seed_lo must be smaller than seed_hi")
    decision = 2.0 * schedule[-1] if decision_horizon is None else float(decision_horizon)
    if decision < schedule[-1]:
        raise DomainError("decision horizon must not precede the last schedule horizon")

    classify_at = _Classifier(settings)
    first = schedule[0]
    c_lo = classify_at(seed_lo, first)
    c_hi = classify_at(seed_hi, first)
    if c_lo.outcome is not Outcome.ESCAPED_LOW or c_hi.outcome is not Outcome.ESCAPED_HIGH:
        raise BracketError(
            f"seeds do not bracket at horizon {first}: "
            f"{seed_lo!r} -> {c_lo.outcome.value}, {seed_hi!r} -> {c_hi.outcome.value}"
        )

    low_out, high_out = float(seed_lo), float(seed_hi)
    history: list[IntervalRecord] = []
    for horizon in schedule:
        lo, hi = low_out, high_out
        inside = None
        for _ in range(max_iter):
            if hi - lo < tol:
                break
            mid = 0.5 * (lo + hi)
            outcome = classify_at(mid, horizon).outcome
            if outcome is Outcome.ESCAPED_LOW:
                lo = mid
            elif outcome is Outcome.ESCAPED_HIGH:
                hi = mid
            else:
                inside = mid
                break
        if inside is None:
            # I_m is narrower than tol: the bracket itself is the best estimate
            lower, upper = lo, hi
            low_out, high_out = lo, hi
        else:
            low_out, lower = _bisect_boundary(classify_at, lo, inside, horizon,
                                              Outcome.ESCAPED_LOW, tol, max_iter)
            high_out, upper = _bisect_boundary(classify_at, hi, inside, horizon,
                                               Outcome.ESCAPED_HIGH, tol, max_iter)
        if history:
            # I_{m+1} is a subset of I_m; clamp away sub-tolerance jitter
            lower = max(lower, history[-1].lower)
            upper = min(upper, history[-1].upper)
        history.append(IntervalRecord(horizon, lower, upper))
        log.info("horizon %g: I = [%r, %r] width %.3e", horizon, lower, upper, upper - lower)

    lo, hi = low_out, high_out
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        outcome = classify_at(mid, decision).outcome
        if outcome is Outcome.ESCAPED_LOW:
            lo = mid
        elif outcome is Outcome.ESCAPED_HIGH:
            hi = mid
        else:
            break
    a_star = 0.5 * (lo + hi)

    bounded = 0.0
    for horizon in schedule:
        if classify_at(a_star, horizon).outcome is Outcome.UNDECIDED:
            bounded = horizon
    if bounded <= 0.0:
        raise IntegrationError(
            f"critical slope {a_star!r} escapes before the first horizon",
            PhaseState(0.0, 0.0, a_star, 0.0),
        )
    trajectory = shoot(a_star, dataclasses.replace(settings, horizon=bounded), stop_at_exit=False)
    log.info("a* = %r, bracket width %.3e, bounded to s = %g", a_star, hi - lo, bounded)
    return ShootReport(
        a_star=a_star,
        bracket_width=hi - lo,
        bounded_horizon=bounded,
        trajectory=trajectory,
        bracket=ShootBracket(lo, hi, tuple(history)),
        tolerance=tol,
        decision_horizon=decision,
        n_classifications=classify_at.count,
    )
