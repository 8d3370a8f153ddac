"""Scalar-arithmetic DOP853 stepper for ``y''' = rhs(y)``.

Same tableau, error estimator, step-size control and 7th-order dense output
as :class:`scipy.integrate.DOP853`, written over plain floats for the fixed
three-component system; the numpy version spends most of its time in
per-call overhead at this size.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate._ivp import dop853_coefficients as _co

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERROR_EXPONENT = -1.0 / 8.0

_N = _co.N_STAGES  # 12
_A = [[(j, float(_co.A[i, j])) for j in range(i) if _co.A[i, j] != 0.0]
      for i in range(_co.N_STAGES_EXTENDED)]
_C = [float(c) for c in _co.C]
_B = [(j, float(b)) for j, b in enumerate(_co.B) if b != 0.0]
_E3 = [(j, float(e)) for j, e in enumerate(_co.E3) if e != 0.0]
_E5 = [(j, float(e)) for j, e in enumerate(_co.E5) if e != 0.0]
_D = [[(j, float(d)) for j, d in enumerate(row) if d != 0.0] for row in _co.D]


class DenseStep:
    """Continuous extension over one accepted step ``[t_old, t_old + h]``."""

    __slots__ = ("t_old", "t", "h", "y_old", "F", "_Farr")

    def __init__(self, t_old: float, h: float, y_old: tuple, F: list):
        self.t_old = t_old
        self.h = h
        self.t = t_old + h
        self.y_old = y_old
        self.F = F
        self._Farr = None

    def scalar(self, t: float) -> tuple[float, float, float]:
        x = (t - self.t_old) / self.h
        y0 = y1 = y2 = 0.0
        for i, f in enumerate(reversed(self.F)):
            y0 += f[0]
            y1 += f[1]
            y2 += f[2]
            w = x if i % 2 == 0 else 1.0 - x
            y0 *= w
            y1 *= w
            y2 *= w
        yo = self.y_old
        return (y0 + yo[0], y1 + yo[1], y2 + yo[2])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return np.array(self.scalar(float(t)))
        if self._Farr is None:
            self._Farr = np.array(self.F[::-1])
        x = ((t - self.t_old) / self.h)[:, None]
        y = np.zeros((len(x), 3))
        for i, f in enumerate(self._Farr):
            y += f
            y *= x if i % 2 == 0 else 1.0 - x
        y += np.asarray(self.y_old)
        return y.T


def _rms(a, b, c, sa, sb, sc) -> float:
    return math.sqrt(((a / sa) ** 2 + (b / sb) ** 2 + (c / sc) ** 2) / 3.0)


class Stepper:
    """Adaptive DOP853 for the phase vector ``(y, y', y'')``.

    ``step()`` advances by one accepted step and returns ``None``, or returns
    an error message when the step size underflows.
    """

    def __init__(self, rhs, t0: float, y0, t_bound: float, rtol: float, atol: float,
                 max_step: float):
        self.rhs = rhs
        self.t = float(t0)
        self.y = tuple(float(v) for v in y0)
        self.t_bound = float(t_bound)
        self.rtol = rtol
        self.atol = atol
        self.max_step = max_step
        self.f = self._fun(self.y)
        self.h_abs = self._initial_step()
        self.finished = self.t >= self.t_bound
        self._K = [None] * (_co.N_STAGES_EXTENDED)
        self._last = None

    def _fun(self, y):
        return (y[1], y[2], self.rhs(y[0]))

    def _initial_step(self) -> float:
        y0, f0 = self.y, self.f
        length = self.t_bound - self.t
        if length <= 0.0:
            return 0.0
        sc = [self.atol + abs(v) * self.rtol for v in y0]
        d0 = _rms(*y0, *sc)
        d1 = _rms(*f0, *sc)
        h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
        h0 = min(h0, length)
        y1 = tuple(y0[i] + h0 * f0[i] for i in range(3))
        f1 = self._fun(y1)
        d2 = _rms(*(f1[i] - f0[i] for i in range(3)), *sc) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
        return min(100 * h0, h1, length, self.max_step)

    def _stages(self, t, y, h, first: int, last: int):
        K = self._K
        y0, y1, y2 = y
        for s in range(first, last):
            a0 = a1 = a2 = 0.0
            for j, a in _A[s]:
                k = K[j]
                a0 += a * k[0]
                a1 += a * k[1]
                a2 += a * k[2]
            K[s] = self._fun((y0 + h * a0, y1 + h * a1, y2 + h * a2))

    def step(self) -> str | None:
        t, y = self.t, self.y
        min_step = 10.0 * abs(math.nextafter(t, math.inf) - t)
        h_abs = min(max(self.h_abs, min_step), self.max_step)
        rejected = False
        K = self._K
        K[0] = self.f
        while True:
            if h_abs < min_step:
                return f"required step size {h_abs!r} is below the spacing of floats at s={t!r}"
            t_new = t + h_abs
            if t_new > self.t_bound:
                t_new = self.t_bound
            h = t_new - t
            h_abs = abs(h)
            self._stages(t, y, h, 1, _N)
            b0 = b1 = b2 = 0.0
            for j, b in _B:
                k = K[j]
                b0 += b * k[0]
                b1 += b * k[1]
                b2 += b * k[2]
            y_new = (y[0] + h * b0, y[1] + h * b1, y[2] + h * b2)
            f_new = self._fun(y_new)
            K[_N] = f_new
            atol, rtol = self.atol, self.rtol
            s0 = atol + max(abs(y[0]), abs(y_new[0])) * rtol
            s1 = atol + max(abs(y[1]), abs(y_new[1])) * rtol
            s2 = atol + max(abs(y[2]), abs(y_new[2])) * rtol
            p0 = p1 = p2 = 0.0
            for j, e in _E5:
                k = K[j]
                p0 += e * k[0]
                p1 += e * k[1]
                p2 += e * k[2]
            q0 = q1 = q2 = 0.0
            for j, e in _E3:
                k = K[j]
                q0 += e * k[0]
                q1 += e * k[1]
                q2 += e * k[2]
            n5 = (p0 / s0) ** 2 + (p1 / s1) ** 2 + (p2 / s2) ** 2
            n3 = (q0 / s0) ** 2 + (q1 / s1) ** 2 + (q2 / s2) ** 2
            denom = n5 + 0.01 * n3
            # denom underflows to zero for subnormal error estimates
            err = 0.0 if denom == 0.0 else h_abs * n5 / math.sqrt(denom * 3.0)
            if err < 1.0:
                factor = MAX_FACTOR if err == 0.0 else min(MAX_FACTOR, SAFETY * err ** ERROR_EXPONENT)
                if rejected:
                    factor = min(1.0, factor)
                self.h_abs = h_abs * factor
                break
            h_abs *= max(MIN_FACTOR, SAFETY * err ** ERROR_EXPONENT)
            rejected = True
        self._last = (t, h, y, y_new, f_new)
        self.t, self.y, self.f = t_new, y_new, f_new
        self.finished = t_new >= self.t_bound
        return None

    def dense_output(self) -> DenseStep:
        t_old, h, y_old, y_new, f_new = self._last
        K = self._K
        self._stages(t_old, y_old, h, _N + 1, _co.N_STAGES_EXTENDED)
        f_old = K[0]
        d0, d1, d2 = y_new[0] - y_old[0], y_new[1] - y_old[1], y_new[2] - y_old[2]
        F = [
            (d0, d1, d2),
            (h * f_old[0] - d0, h * f_old[1] - d1, h * f_old[2] - d2),
            (2.0 * d0 - h * (f_new[0] + f_old[0]),
             2.0 * d1 - h * (f_new[1] + f_old[1]),
             2.0 * d2 - h * (f_new[2] + f_old[2])),
        ]
        for row in _D:
            a0 = a1 = a2 = 0.0
            for j, d in row:
                k = K[j]
                a0 += d * k[0]
                a1 += d * k[1]
                a2 += d * k[2]
            F.append((h * a0, h * a1, h * a2))
        return DenseStep(t_old, h, y_old, F)
