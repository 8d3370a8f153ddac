"""Third-order angle ODE: right-hand sides, adaptive integration, events.

The profile angle of a translator satisfies ``theta''' = -cos(theta)``.  Two
monotone variants are used by the shooting construction:

* ``MODIFIED_F``: ``-cos u`` on ``[0, pi]``, clamped to ``-1`` below and
  ``+1`` above.
* ``SHIFTED_G``: the same function seen through ``v = u - pi/2``, i.e.
  ``sin v`` on ``[-pi/2, pi/2]`` and ``-1`` / ``+1`` outside.

``MODIFIED_F`` is evaluated through ``SHIFTED_G`` so that the two agree
bit-for-bit under the shift.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import OdeSolution

from ._dop853 import Stepper

HALF_PI = 0.5 * math.pi

__all__ = [
    "DomainError",
    "IntegrationError",
    "RhsKind",
    "PhaseState",
    "IntegratorSettings",
    "EventKind",
    "Event",
    "Trajectory",
    "eval_rhs",
    "integrate",
    "find_events",
    "value_cross",
    "D1_ZERO",
    "D2_ZERO",
]


class DomainError(ValueError):
    """Input outside the domain of an operation."""


class IntegrationError(RuntimeError):
    """Integration could not continue.

    ``state`` is the last valid :class:`PhaseState`; ``trajectory`` holds the
    partial solution when one could be assembled.
    """

    def __init__(self, message: str, state: "PhaseState", trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory


class RhsKind(enum.Enum):
    ORIGINAL = "original"
    MODIFIED_F = "modified_f"
    SHIFTED_G = "shifted_g"


def _g(v: float) -> float:
    if v <= -HALF_PI:
        return -1.0
    if v >= HALF_PI:
        return 1.0
    return math.sin(v)


def _f(u: float) -> float:
    return _g(u - HALF_PI)


def _original(x: float) -> float:
    return -math.cos(x)


_RHS = {
    RhsKind.ORIGINAL: _original,
    RhsKind.MODIFIED_F: _f,
    RhsKind.SHIFTED_G: _g,
}


def eval_rhs(kind: RhsKind, x: float) -> float:
    """Evaluate the right-hand side ``kind`` at ``x``."""
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"right-hand side evaluated at non-finite x={x!r}")
    return _RHS[kind](x)


@dataclass(frozen=True)
class PhaseState:
    """A point ``(s, value, value', value'')`` of the third-order phase flow."""

    s: float
    value: float
    d1: float
    d2: float

    def __post_init__(self):
        for name in ("s", "value", "d1", "d2"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"PhaseState.{name} must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.value, self.d1, self.d2], dtype=float)


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = 0.1
    event_tol: float = 1e-12
    horizon: float = 25.0
    # abort when |d1| or |d2| exceeds this on ORIGINAL / MODIFIED_F; None disables
    derivative_cap: float | None = 1e3

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "event_tol"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive and finite, got {val!r}")
        if self.event_tol > self.rel_tol:
            raise DomainError("event_tol must not exceed rel_tol")
        if not math.isfinite(self.horizon):
            raise DomainError("horizon must be finite")
        if self.derivative_cap is not None and not self.derivative_cap > 0:
            raise DomainError("derivative_cap must be positive")

    @property
    def scan_step(self) -> float:
        return self.max_step / 4.0


@dataclass(frozen=True)
class EventKind:
    """Zero of ``value - level`` (``component == 0``), ``d1`` or ``d2``.

    ``direction`` restricts detection to rising (+1) or falling (-1)
    crossings; 0 accepts both.
    """

    component: int
    level: float = 0.0
    direction: int = 0

    def __post_init__(self):
        if self.component not in (0, 1, 2):
            raise DomainError("component must be 0, 1 or 2")
        if self.direction not in (-1, 0, 1):
            raise DomainError("direction must be -1, 0 or 1")

    @property
    def label(self) -> str:
        if self.component == 0:
            return f"value_cross({self.level!r})"
        return "d1_zero" if self.component == 1 else "d2_zero"

    def residual(self, y: np.ndarray) -> np.ndarray:
        return y[self.component] - self.level


def value_cross(level: float, direction: int = 0) -> EventKind:
    return EventKind(0, float(level), direction)


D1_ZERO = EventKind(1)
D2_ZERO = EventKind(2)


@dataclass(frozen=True)
class Event:
    s: float
    kind: EventKind
    tangential: bool = False


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Dense solution record of one initial-value problem.

    ``s`` holds the accepted step nodes and ``y`` the states there (shape
    ``(3, len(s))``).  ``events`` lists the terminal event that stopped the
    integration, if any.
    """

    rhs: RhsKind
    initial: PhaseState
    settings: IntegratorSettings
    s: np.ndarray
    y: np.ndarray
    dense: OdeSolution = field(repr=False)
    events: tuple[Event, ...] = ()

    @property
    def s_end(self) -> float:
        return float(self.s[-1])

    @property
    def samples(self) -> list[PhaseState]:
        return [PhaseState(float(t), *map(float, col)) for t, col in zip(self.s, self.y.T)]

    def evaluate(self, s) -> np.ndarray:
        """Dense output ``(value, d1, d2)`` at ``s`` (scalar or array)."""
        arr = np.asarray(s, dtype=float)
        if np.any(arr < self.s[0]) or np.any(arr > self.s[-1]):
            raise DomainError(
                f"s outside covered span [{self.s[0]}, {self.s[-1]}]"
            )
        return self.dense(arr)

    def state(self, s: float) -> PhaseState:
        return PhaseState(float(s), *map(float, self.evaluate(float(s))))

    def segments(self) -> Iterable[tuple[float, float, object]]:
        """Yield ``(s_left, s_right, interpolant)`` per accepted step."""
        for i, interp in enumerate(self.dense.interpolants):
            yield float(self.s[i]), float(self.s[i + 1]), interp


def _scan_nodes(left: float, right: float, origin: float, step: float) -> list[float]:
    # global grid origin + k*step strictly inside (left, right), plus both ends
    k = math.floor((left - origin) / step) + 1
    nodes = [left]
    node = origin + step * k
    while node < right:
        if node > left:
            nodes.append(node)
        k += 1
        node = origin + step * k
    nodes.append(right)
    return nodes


def _crosses(before: float, after: float, direction: int) -> bool:
    if direction > 0:
        return before <= 0.0 < after
    if direction < 0:
        return before >= 0.0 > after
    return before * after < 0.0


class _Scanner:
    """Sequential sign-change detector for one event kind.

    Residuals below ``tol`` count as zero.  A run of such nodes between two
    resolved nodes becomes a crossing (opposite signs) or a tangential touch
    (same sign); a run covering a whole sample interval is ignored.  A run
    that begins at the initial point only yields a directional departure.
    """

    def __init__(self, kind: EventKind, tol: float):
        self.kind = kind
        self.tol = tol
        self.prev: tuple[float, float] | None = None
        self.last_sign = 0.0
        self.run: list[tuple[float, float]] = []
        self.run_from_start = True
        self.run_covers_interval = False

    def _thr(self, raw: float) -> float:
        return 0.0 if abs(raw) < self.tol else raw

    def _bisect(self, fn, lo: float, hi: float, target_positive: bool) -> float:
        left = lo
        raw_lo, raw_hi = fn(lo), fn(hi)
        for _ in range(200):
            if hi - lo <= self.tol and min(abs(raw_lo), abs(raw_hi)) < self.tol:
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            raw = fn(mid)
            thr = self._thr(raw)
            if thr != 0.0 and (thr > 0.0) == target_positive:
                hi, raw_hi = mid, raw
            else:
                lo, raw_lo = mid, raw
        # never return the left end itself: events lie strictly after it
        if lo > left and abs(raw_lo) <= abs(raw_hi):
            return lo
        return hi

    def feed(self, nodes: list[float], raws: list[float], fn) -> list[Event]:
        """Process the nodes of one sample interval (left end included)."""
        events: list[Event] = []
        left, right = nodes[0], nodes[-1]
        if self.prev is not None:
            # left node duplicates the previous interval's right node
            nodes, raws = nodes[1:], raws[1:]
        for s, raw in zip(nodes, raws):
            thr = self._thr(raw)
            if self.prev is None:
                self.prev = (s, raw)
                if thr == 0.0:
                    self.run = [(s, raw)]
                else:
                    self.last_sign = math.copysign(1.0, thr)
                    self.run_from_start = False
                continue
            if thr == 0.0:
                self.run.append((s, raw))
                if self.run[0][0] <= left and s >= right:
                    self.run_covers_interval = True
                self.prev = (s, raw)
                continue
            sign = math.copysign(1.0, thr)
            direction = self.kind.direction
            if not self.run:
                if _crosses(self.last_sign, sign, direction):
                    events.append(Event(self._bisect(fn, self.prev[0], s, sign > 0), self.kind))
            elif self.run_from_start:
                if direction != 0 and _crosses(0.0, sign, direction):
                    events.append(Event(self._bisect(fn, self.prev[0], s, sign > 0), self.kind))
            elif self.run_covers_interval:
                pass
            else:
                s_min = min(self.run, key=lambda item: abs(item[1]))[0]
                if self.last_sign != sign:
                    if _crosses(self.last_sign, sign, direction):
                        events.append(Event(s_min, self.kind))
                else:
                    events.append(Event(s_min, self.kind, tangential=True))
            self.run = []
            self.run_from_start = False
            self.run_covers_interval = False
            self.last_sign = sign
            self.prev = (s, raw)
        return events


def _scan_segment(
    scanners: Sequence[_Scanner],
    interp,
    left: float,
    right: float,
    settings: IntegratorSettings,
    origin: float,
    y_left: np.ndarray,
    y_right: np.ndarray,
) -> list[Event]:
    nodes = _scan_nodes(left, right, origin, settings.scan_step)
    # step ends carry the integrator's own states, not the interpolant's
    ys = [tuple(y_left)] + [interp.scalar(x) for x in nodes[1:-1]] + [tuple(y_right)]
    found: list[Event] = []
    for sc in scanners:
        c, lv = sc.kind.component, sc.kind.level
        fn = lambda t, c=c, lv=lv: interp.scalar(t)[c] - lv
        found.extend(sc.feed(nodes, [float(y[c]) - lv for y in ys], fn))
    return found


def _dedupe(events: list[Event], tol: float) -> list[Event]:
    events.sort(key=lambda e: (e.s, e.kind.component, e.kind.level))
    out: list[Event] = []
    for ev in events:
        if out and out[-1].kind == ev.kind and abs(out[-1].s - ev.s) <= tol:
            continue
        out.append(ev)
    return out


def integrate(
    initial: PhaseState,
    kind: RhsKind,
    settings: IntegratorSettings = IntegratorSettings(),
    stop_on: Sequence[EventKind] = (),
) -> Trajectory:
    """Integrate from ``initial`` to ``settings.horizon``.

    Integration halts early at the first event in ``stop_on`` strictly after
    ``initial.s``; the trajectory then ends at the event location.
    """
    if not settings.horizon > initial.s:
        raise DomainError("horizon must exceed the initial arc length")
    solver = Stepper(_RHS[kind], initial.s, initial.as_array(), settings.horizon,
                     settings.rel_tol, settings.abs_tol, settings.max_step)
    ts = [initial.s]
    ys = [initial.as_array()]
    interps = []
    events: list[Event] = []
    scanners = [_Scanner(k, settings.event_tol) for k in stop_on]
    cap = settings.derivative_cap if kind is not RhsKind.SHIFTED_G else None

    def build(evts=()) -> Trajectory:
        return Trajectory(kind, initial, settings, np.array(ts), np.array(ys).T,
                          OdeSolution(ts, interps), tuple(evts))

    while not solver.finished:
        msg = solver.step()
        if msg is not None:
            last = PhaseState(ts[-1], *map(float, ys[-1]))
            raise IntegrationError(f"integration failed: {msg}", last,
                                   build() if interps else None)
        interp = solver.dense_output()
        left, right = ts[-1], solver.t
        y_right = np.array(solver.y)
        if scanners:
            hits = _scan_segment(scanners, interp, left, right, settings, initial.s,
                                 ys[-1], y_right)
            hits = [e for e in hits if e.s > initial.s]
            if hits:
                first = min(hits, key=lambda e: e.s)
                interps.append(interp)
                ts.append(first.s)
                ys.append(np.array(interp.scalar(first.s)))
                events.append(first)
                break
        interps.append(interp)
        ts.append(right)
        ys.append(y_right)
        if cap is not None and (abs(y_right[1]) > cap or abs(y_right[2]) > cap):
            last = PhaseState(right, *map(float, y_right))
            raise IntegrationError(f"derivative cap {cap:g} exceeded at s={right!r}",
                                   last, build())
    return build(events)


def find_events(trajectory: Trajectory, specs: Sequence[EventKind]) -> list[Event]:
    """Locate every requested event over the covered span, sorted by ``s``.

    Sign changes are found on a grid of spacing ``max_step / 4`` and refined
    by bisection on the dense output.  Events at the initial point itself are
    not reported.
    """
    settings = trajectory.settings
    scanners = [_Scanner(k, settings.event_tol) for k in specs]
    found: list[Event] = []
    for i, (left, right, interp) in enumerate(trajectory.segments()):
        if right <= left:
            continue
        found.extend(
            _scan_segment(scanners, interp, left, right, settings, trajectory.initial.s,
                          trajectory.y[:, i], trajectory.y[:, i + 1])
        )
    found = [e for e in found if e.s > trajectory.initial.s]
    return _dedupe(found, settings.event_tol)
