"""Profile curve of the translator: reflected angle, planar curve, curvature.

The bounded shooting solution ``u`` on ``[0, S]`` is extended to ``[-S, S]``
by odd reflection (the ODE is invariant under ``s -> -s, theta -> -theta``)
and integrated into a unit-speed curve ``gamma' = (cos theta, sin theta)``
with ``gamma(0) = (0, 0)``.  The curve translates with velocity ``(0, 1)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as L

from .ode import DomainError, IntegratorSettings, RhsKind, Trajectory, eval_rhs
from .shooting import ShootReport, shoot

TRANSLATION = (0.0, 1.0)
PROPER_SLOPE = math.sqrt(2.0) / 2.0

# least-squares derivative stencil used by translator_residual
RESIDUAL_WIDTH = 0.75
RESIDUAL_DEGREE = 16


class CertificationError(ValueError):
    """The shooting trajectory leaves ``[0, pi]`` on the claimed span."""


@dataclass(frozen=True)
class AngleProfile:
    """Odd angle function on ``[-S, S]`` backed by the ``s >= 0`` trajectory."""

    a_star: float
    half: Trajectory = field(repr=False)
    S: float

    def evaluate(self, s) -> np.ndarray:
        """``(theta, theta', theta'')`` at ``s``; shape ``(3,)`` or ``(3, n)``."""
        s = np.asarray(s, dtype=float)
        if np.any(np.abs(s) > self.S):
            raise DomainError(f"s outside [-{self.S}, {self.S}]")
        y = np.asarray(self.half.evaluate(np.abs(s)), dtype=float)
        neg = s < 0
        if np.any(neg):
            y = y.copy()
            y[0] = np.where(neg, -y[0], y[0])
            y[2] = np.where(neg, -y[2], y[2])
        return y

    def theta(self, s) -> np.ndarray:
        return self.evaluate(s)[0]


def _certify(traj: Trajectory, horizon: float) -> None:
    tol = traj.settings.event_tol
    if np.any(traj.y[0] < -tol) or np.any(traj.y[0] > math.pi + tol):
        bad = float(traj.s[np.argmax((traj.y[0] < -tol) | (traj.y[0] > math.pi + tol))])
        raise CertificationError(f"trajectory leaves [0, pi] at s={bad!r}")
    grid = np.arange(0.0, horizon, traj.settings.scan_step)
    vals = traj.evaluate(grid)[0]
    out = (vals < -tol) | (vals > math.pi + tol)
    if np.any(out):
        raise CertificationError(f"trajectory leaves [0, pi] at s={float(grid[np.argmax(out)])!r}")


def assemble_theta(report: ShootReport) -> AngleProfile:
    """Reflect the bounded half-trajectory of ``report`` into an odd profile.

    Values in ``[0, pi]`` make the monotone-ODE solution a solution of
    ``theta''' = -cos theta``; this is checked on the dense output.
    """
    S = float(report.bounded_horizon)
    if not S > 0:
        raise CertificationError("report has no bounded horizon")
    traj = report.trajectory
    if traj.s_end < S:
        raise CertificationError(f"trajectory ends at {traj.s_end!r} before {S!r}")
    _certify(traj, S)
    return AngleProfile(float(report.a_star), traj, S)


def profile_from_slope(a_star: float, horizon: float,
                       settings: IntegratorSettings = IntegratorSettings()) -> AngleProfile:
    """Build a profile directly from a known critical slope."""
    import dataclasses

    traj = shoot(a_star, dataclasses.replace(settings, horizon=float(horizon)), stop_at_exit=False)
    _certify(traj, float(horizon))
    return AngleProfile(float(a_star), traj, float(horizon))


@dataclass(frozen=True, eq=False)
class Curve:
    """Arc-length tagged polyline.  ``ds`` is the nominal sample step."""

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    ds: float

    def __post_init__(self):
        if not (len(self.s) == len(self.x) == len(self.y)):
            raise DomainError("s, x and y must have equal length")

    def __len__(self) -> int:
        return len(self.s)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])

    def chords(self) -> np.ndarray:
        return np.hypot(np.diff(self.x), np.diff(self.y))


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    s: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    kappa_s: np.ndarray
    kappa_ss: np.ndarray


def _half_grid(S: float, ds: float) -> int:
    if not (ds > 0 and math.isfinite(ds)):
        raise DomainError(f"ds must be positive, got {ds!r}")
    n = int(math.floor(S / ds + 1e-9))
    if n < 1:
        raise DomainError(f"ds={ds!r} exceeds the half span {S!r}")
    return n


def build_profile(profile: AngleProfile, ds: float) -> Curve:
    """Sample ``gamma`` at ``s = k * ds`` for ``|k| <= floor(S / ds)``.

    Composite Simpson on each cell, using the dense output at the cell
    ends and midpoint.
    """
    n = _half_grid(profile.S, ds)
    nodes = np.arange(2 * n + 1) * (0.5 * ds)
    theta = profile.theta(nodes)
    c, s_ = np.cos(theta), np.sin(theta)
    w = ds / 6.0
    dx = w * (c[0:-1:2] + 4.0 * c[1::2] + c[2::2])
    dy = w * (s_[0:-1:2] + 4.0 * s_[1::2] + s_[2::2])
    xr = np.concatenate([[0.0], np.cumsum(dx)])
    yr = np.concatenate([[0.0], np.cumsum(dy)])
    # negative side: theta(-s) = -theta(s) gives dx even and dy odd
    x = np.concatenate([-xr[:0:-1], xr])
    y = np.concatenate([yr[:0:-1], yr])
    s = np.arange(-n, n + 1) * ds
    return Curve(s, x, y, float(ds))


def line_curve(n: int, ds: float, angle: float = 0.0) -> Curve:
    """Straight unit-speed polyline through the origin with constant angle."""
    k = np.arange(-n, n + 1)
    s = k * ds
    return Curve(s, s * math.cos(angle), s * math.sin(angle), float(ds))


def curvature_profile(profile: AngleProfile, s=None) -> CurvatureProfile:
    """Curvature and its derivatives along the profile.

    ``kappa = theta'``, ``kappa_s = theta''`` and ``kappa_ss = -cos(theta)``.
    Without ``s`` the accepted step nodes of the half trajectory are used,
    mirrored to ``s < 0``.
    """
    if s is None:
        half = profile.half.s[profile.half.s <= profile.S]
        s = np.concatenate([-half[:0:-1], half])
    s = np.asarray(s, dtype=float)
    th, k, ks = profile.evaluate(s)
    kss = np.array([eval_rhs(RhsKind.ORIGINAL, t) for t in th])
    return CurvatureProfile(s, th, k, ks, kss)


def vertex_angles(curve: Curve) -> np.ndarray:
    """Unwrapped tangent angle at interior vertices from centered chords."""
    dx = curve.x[2:] - curve.x[:-2]
    dy = curve.y[2:] - curve.y[:-2]
    return np.unwrap(np.arctan2(dy, dx))


@functools.lru_cache(maxsize=32)
def _ls_kernel(half: int, degree: int, deriv: int) -> tuple[np.ndarray, ...]:
    # rows: weights giving the value and derivatives (in units of the half width)
    t = np.arange(-half, half + 1) / half
    coef_map = np.linalg.pinv(L.legvander(t, degree))
    out = []
    for d in range(deriv + 1):
        basis = np.array([L.legval(0.0, L.legder(np.eye(degree + 1)[j], d)) if d else
                          L.legval(0.0, np.eye(degree + 1)[j]) for j in range(degree + 1)])
        out.append(basis @ coef_map)
    return tuple(out)


def residual_profile(curve: Curve, width: float = RESIDUAL_WIDTH,
                     degree: int = RESIDUAL_DEGREE) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``|theta_sss + cos theta|`` reconstructed from vertices alone.

    Angles come from centered chords; the third derivative is a local
    least-squares polynomial fit over ``+-width`` in arc length.  A
    three-point difference applied three times loses everything to rounding
    at ``ds ~ 1e-3`` (error ~ eps / ds^3), the wide fit keeps the
    ``O(ds^2)`` angle error as the leading term.
    """
    n = len(curve)
    if n < 7:
        raise DomainError(f"need at least 7 vertices, got {n}")
    theta = vertex_angles(curve)
    m = len(theta)
    half = max(2, min(int(round(width / curve.ds)), (m - 1) // 2))
    deg = min(degree, 2 * half - 1)
    k3 = _ls_kernel(half, deg, 3)[3]
    scale = (half * curve.ds) ** 3
    d3 = np.convolve(theta, k3[::-1], mode="valid") / scale
    s = curve.s[1 + half: n - 1 - half]
    return s, np.abs(d3 + np.cos(theta[half: m - half]))


def translator_residual(curve: Curve, width: float = RESIDUAL_WIDTH,
                        degree: int = RESIDUAL_DEGREE) -> float:
    """Max over interior vertices of ``|theta_sss + cos theta|``."""
    return float(np.max(residual_profile(curve, width, degree)[1]))


@dataclass(frozen=True)
class ProperWitness:
    sigma0: float
    margin_right: float
    margin_left: float
    mirror_error: float

    @property
    def holds(self) -> bool:
        return self.margin_right >= 0.0 and self.margin_left >= 0.0


def select_sigma0(s: np.ndarray, theta: np.ndarray) -> float:
    """Smallest sample ``s >= 0`` after which ``|theta - pi/2| < pi/4`` holds."""
    pos = s >= 0
    sp, tp = s[pos], theta[pos]
    bad = np.abs(tp - 0.5 * math.pi) >= 0.25 * math.pi
    if bad[-1]:
        raise DomainError("angle is not within pi/4 of pi/2 at the end of the span")
    idx = np.nonzero(bad)[0]
    return float(sp[idx[-1] + 1] if len(idx) else sp[0])


def properness_witness(curve: Curve, theta: np.ndarray) -> ProperWitness:
    """Check ``y(s) - y(sigma0) >= (sqrt2/2)(s - sigma0)`` on both tails."""
    s, x, y = curve.s, curve.x, curve.y
    sigma0 = select_sigma0(s, theta)
    i_r = int(np.argmin(np.abs(s - sigma0)))
    i_l = int(np.argmin(np.abs(s + sigma0)))
    right = slice(i_r, None)
    left = slice(0, i_l + 1)
    m_r = np.min((y[right] - y[i_r]) - PROPER_SLOPE * (s[right] - s[i_r]))
    m_l = np.min((y[left] - y[i_l]) - PROPER_SLOPE * (s[i_l] - s[left]))
    mirror = float(max(np.max(np.abs(x + x[::-1])), np.max(np.abs(y - y[::-1]))))
    return ProperWitness(sigma0, float(m_r), float(m_l), mirror)
