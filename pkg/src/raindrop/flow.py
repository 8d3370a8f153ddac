"""Discrete curve diffusion flow on polylines.

Vertices move with normal velocity ``-kappa_ss`` along ``N = J T`` (the
tangent rotated by +90 degrees).  Curvature is the turning angle at a vertex
over its dual length, and ``kappa_ss`` a three-point second difference in
arc length, so the scheme sees zigzag modes and damps them.

Two time steppers are provided:

* ``explicit``: forward Euler, stable for ``dt <= 0.1 h^4``.
* ``semi_implicit``: the fourth-difference part is treated implicitly,
  ``(I + dt D4) dX = dt V``, which lifts the ``h^4`` restriction.  ``D4``
  is the square of the second-difference matrix on the vertex positions;
  since ``V ~ -D4 X`` the step is consistent and unconditionally damped.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .ode import DomainError
from .profile import Curve

log = logging.getLogger(__name__)

STABILITY_C = 0.1
MIN_VERTICES = 8
DEFAULT_COLLAR = 3
DEFAULT_BUFFER = 0.1
REDISTRIBUTE_EVERY = 10
REDISTRIBUTE_TOL = 0.05
# semi-implicit steps: dt = SEMI_IMPLICIT_C * h^2
SEMI_IMPLICIT_C = 0.1


class DegenerateGeometryError(ValueError):
    """Coincident vertices; tangents and curvature are undefined."""


class StepRejected(RuntimeError):
    """Time step violates the stability limit."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(f"{message}; suggested dt = {suggested_dt!r}")
        self.suggested_dt = suggested_dt


@dataclass(frozen=True, eq=False)
class FlowState:
    points: np.ndarray
    closed: bool
    t: float = 0.0
    dt: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DomainError("points must have shape (n, 2)")
        if len(pts) < MIN_VERTICES:
            raise DomainError(f"need at least {MIN_VERTICES} vertices, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    def with_(self, **kw) -> "FlowState":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True, eq=False)
class Geometry:
    s: np.ndarray
    edges: np.ndarray
    T: np.ndarray
    N: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray
    kappa_s: np.ndarray
    kappa_ss: np.ndarray
    low_accuracy: np.ndarray


@dataclass
class FlowDiagnostics:
    length: float
    signed_area: float | None
    max_displacement_from_reference: float
    t: float = 0.0
    dt: float = 0.0
    steps: int = 0
    scheme: str = "explicit"
    lengths: list = field(default_factory=list, repr=False)
    areas: list = field(default_factory=list, repr=False)

    def to_dict(self, history: bool = False) -> dict:
        out = {
            "length": self.length,
            "signed_area": self.signed_area,
            "max_displacement_from_reference": self.max_displacement_from_reference,
            "t": self.t,
            "dt": self.dt,
            "steps": self.steps,
            "scheme": self.scheme,
        }
        if history:
            out["lengths"] = list(self.lengths)
            out["areas"] = list(self.areas)
        return out


def _edges(state: FlowState) -> tuple[np.ndarray, np.ndarray]:
    p = state.points
    e = (np.roll(p, -1, axis=0) - p) if state.closed else np.diff(p, axis=0)
    ell = np.hypot(e[:, 0], e[:, 1])
    scale = max(1.0, float(np.max(np.abs(p))))
    if np.any(ell <= 1e-14 * scale):
        i = int(np.argmin(ell))
        raise DegenerateGeometryError(f"coincident vertices at index {i}")
    return e, ell


def length(state: FlowState) -> float:
    return float(np.sum(_edges(state)[1]))


def signed_area(state: FlowState) -> float:
    """Shoelace area; positive for counter-clockwise closed curves."""
    if not state.closed:
        raise DomainError("signed area needs a closed curve")
    x, y = state.points[:, 0], state.points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _d1(f, hm, hp):
    # centered first derivative on a non-uniform grid
    return (hm * hm * f[2] - hp * hp * f[0] + (hp * hp - hm * hm) * f[1]) / (hm * hp * (hm + hp))


def _d2(f, hm, hp):
    return 2.0 * ((f[2] - f[1]) / hp - (f[1] - f[0]) / hm) / (hm + hp)


def discrete_geometry(state: FlowState) -> Geometry:
    """Arc length, tangent, normal and curvature derivatives per vertex.

    Open curves get one-sided values at the two end vertices on each side;
    these are flagged in ``low_accuracy``.
    """
    e, ell = _edges(state)
    phi = np.arctan2(e[:, 1], e[:, 0])
    n = state.n
    low = np.zeros(n, dtype=bool)
    if state.closed:
        prev_phi, next_phi = np.roll(phi, 1), phi
        hm, hp = np.roll(ell, 1), ell
        turn = np.angle(np.exp(1j * (next_phi - prev_phi)))
        theta = np.unwrap(prev_phi + 0.5 * turn)
        kappa = turn / (0.5 * (hm + hp))
        nb = lambda f: (np.roll(f, 1), f, np.roll(f, -1))  # noqa: E731
        kappa_s = _d1(nb(kappa), hm, hp)
        kappa_ss = _d2(nb(kappa), hm, hp)
        s = np.concatenate([[0.0], np.cumsum(ell[:-1])])
    else:
        hm, hp = ell[:-1], ell[1:]
        turn = np.angle(np.exp(1j * (phi[1:] - phi[:-1])))
        th_in = phi[:-1] + 0.5 * turn
        theta = np.unwrap(np.concatenate([[phi[0]], th_in, [phi[-1]]]))
        k_in = turn / (0.5 * (hm + hp))
        s = np.concatenate([[0.0], np.cumsum(ell)])
        # linear extrapolation of curvature to the end vertices
        k0 = k_in[0] - (k_in[1] - k_in[0]) * ell[0] / (s[2] - s[1])
        kn = k_in[-1] + (k_in[-1] - k_in[-2]) * ell[-1] / (s[-2] - s[-3])
        kappa = np.concatenate([[k0], k_in, [kn]])
        ks = _d1((kappa[:-2], kappa[1:-1], kappa[2:]), hm, hp)
        kss = _d2((kappa[:-2], kappa[1:-1], kappa[2:]), hm, hp)
        kappa_s = np.concatenate([[ks[0]], ks, [ks[-1]]])
        kappa_ss = np.concatenate([[kss[0]], kss, [kss[-1]]])
        low[[0, 1, -2, -1]] = True
    T = np.column_stack([np.cos(theta), np.sin(theta)])
    N = np.column_stack([-T[:, 1], T[:, 0]])
    return Geometry(s, e, T, N, theta, kappa, kappa_s, kappa_ss, low)


def min_spacing(state: FlowState) -> float:
    return float(np.min(_edges(state)[1]))


def stable_dt(state: FlowState, scheme: str = "explicit") -> float:
    """Largest step the rule of the given scheme allows."""
    h = min_spacing(state)
    if scheme == "explicit":
        return STABILITY_C * h ** 4
    if scheme == "semi_implicit":
        return SEMI_IMPLICIT_C * h ** 2
    raise DomainError(f"unknown scheme {scheme!r}")


def _free_mask(n: int, closed: bool, collar: int) -> np.ndarray:
    free = np.ones(n, dtype=bool)
    if not closed:
        if n <= 2 * collar:
            raise DomainError(f"{n} vertices cannot hold two collars of {collar}")
        free[:collar] = False
        free[n - collar:] = False
    return free


def _d4_factor(state: FlowState, dt: float, free: np.ndarray):
    _, ell = _edges(state)
    n = state.n
    if state.closed:
        hm, hp = np.roll(ell, 1), ell
        rows = np.arange(n)
        im, ip = (rows - 1) % n, (rows + 1) % n
    else:
        hm, hp = ell[:-1], ell[1:]
        rows = np.arange(1, n - 1)
        im, ip = rows - 1, rows + 1
    wm = 2.0 / (hm * (hm + hp))
    wp = 2.0 / (hp * (hm + hp))
    D2 = sp.csr_matrix(
        (np.concatenate([wm, -(wm + wp), wp]),
         (np.concatenate([rows, rows, rows]), np.concatenate([im, rows, ip]))),
        shape=(n, n),
    )
    idx = np.nonzero(free)[0]
    D4 = (D2 @ D2).tocsc()[idx][:, idx]
    A = sp.identity(len(idx), format="csc") + dt * D4
    return splu(A.tocsc())


def _redistribute(state: FlowState, collar: int) -> FlowState:
    """Resample to uniform chord-length spacing by cubic interpolation."""
    p = state.points
    if state.closed:
        q = np.vstack([p, p[:1]])
        u = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(q, axis=0).T))])
        spline = CubicSpline(u, q, bc_type="periodic")
        new_u = np.linspace(0.0, u[-1], len(p) + 1)[:-1]
        return state.with_(points=spline(new_u))
    u = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(p, axis=0).T))])
    spline = CubicSpline(u, p)
    lo, hi = collar - 1, len(p) - collar
    new_u = np.linspace(u[lo], u[hi], hi - lo + 1)
    out = p.copy()
    out[lo + 1:hi] = spline(new_u[1:-1])
    return state.with_(points=out)


def _nonuniformity(state: FlowState) -> float:
    ell = _edges(state)[1]
    return float(ell.max() / ell.min() - 1.0)


class Stepper:
    """Advance a :class:`FlowState` with a fixed ``dt``.

    Open curves keep ``collar`` vertices fixed at each end.  Every
    ``redistribute_every`` steps the vertices are resampled to uniform
    spacing if the spacing ratio has drifted by more than
    ``redistribute_tol``.
    """

    def __init__(self, state: FlowState, dt: float, scheme: str = "explicit",
                 collar: int = DEFAULT_COLLAR, redistribute_every: int = REDISTRIBUTE_EVERY,
                 redistribute_tol: float = REDISTRIBUTE_TOL):
        if not (dt > 0 and math.isfinite(dt)):
            raise DomainError(f"dt must be positive, got {dt!r}")
        if scheme not in ("explicit", "semi_implicit"):
            raise DomainError(f"unknown scheme {scheme!r}")
        self.state = state.with_(dt=float(dt))
        self.dt = float(dt)
        self.scheme = scheme
        self.collar = collar
        self.every = redistribute_every
        self.tol = redistribute_tol
        self.steps = 0
        self.free = _free_mask(state.n, state.closed, collar)
        self._lu = None
        limit = stable_dt(state, scheme)
        if scheme == "explicit" and dt > limit * (1.0 + 1e-12):
            raise StepRejected(f"dt={dt!r} exceeds the explicit stability limit {limit!r}", limit)

    def step(self) -> FlowState:
        st = self.state
        geo = discrete_geometry(st)
        vel = -geo.kappa_ss[:, None] * geo.N
        vel[~self.free] = 0.0
        if self.scheme == "explicit":
            dX = self.dt * vel
        else:
            if self._lu is None:
                self._lu = _d4_factor(st, self.dt, self.free)
            dX = np.zeros_like(vel)
            dX[self.free] = self._lu.solve(self.dt * vel[self.free])
        _, ell = _edges(st)
        local = np.minimum(ell, np.roll(ell, 1)) if st.closed else \
            np.concatenate([[ell[0]], np.minimum(ell[:-1], ell[1:]), [ell[-1]]])
        disp = np.hypot(dX[:, 0], dX[:, 1])
        if np.any(disp > 0.5 * local):
            i = int(np.argmax(disp / local))
            suggested = self.dt * 0.25 * local[i] / disp[i]
            raise StepRejected(f"vertex {i} would move {disp[i]:.3e} > half its spacing",
                               min(suggested, stable_dt(st, self.scheme)))
        new = st.with_(points=st.points + dX, t=st.t + self.dt)
        self.steps += 1
        if self.every and self.steps % self.every == 0:
            if _nonuniformity(new) > self.tol:
                new = _redistribute(new, self.collar)
            self._lu = None
        self.state = new
        return new


def step_flow(state: FlowState, scheme: str = "explicit", collar: int = DEFAULT_COLLAR) -> FlowState:
    """One step of size ``state.dt`` (no redistribution)."""
    return Stepper(state, state.dt, scheme, collar, redistribute_every=0).step()


def polyline_distance(points: np.ndarray, ref: np.ndarray, closed: bool = False, k: int = 8) -> np.ndarray:
    """Distance of each point to the polyline through ``ref``."""
    a = ref
    b = np.roll(ref, -1, axis=0)
    nseg = len(ref) if closed else len(ref) - 1
    a, b = a[:nseg], b[:nseg]
    tree = cKDTree(ref)
    _, near = tree.query(points, k=min(k, len(ref)))
    near = np.atleast_2d(near)
    cand = np.concatenate([near, near - 1], axis=1)
    cand = cand % nseg if closed else np.clip(cand, 0, nseg - 1)
    pa, pb = a[cand], b[cand]
    d = pb - pa
    w = points[:, None, :] - pa
    t = np.clip(np.sum(w * d, axis=2) / np.maximum(np.sum(d * d, axis=2), 1e-300), 0.0, 1.0)
    proj = pa + t[..., None] * d
    return np.min(np.hypot(*(points[:, None, :] - proj).transpose(2, 0, 1)), axis=1)


def run_flow(state: FlowState, dt: float, steps: int, scheme: str = "explicit",
             collar: int = DEFAULT_COLLAR, reference: np.ndarray | None = None,
             snapshot_every: int = 0) -> tuple[FlowState, FlowDiagnostics, list]:
    """Run ``steps`` steps and record length (and area for closed curves)."""
    ref = state.points if reference is None else reference
    stepper = Stepper(state, dt, scheme, collar)
    lengths = [length(state)]
    areas = [signed_area(state)] if state.closed else []
    snaps = []
    for i in range(steps):
        cur = stepper.step()
        lengths.append(length(cur))
        if cur.closed:
            areas.append(signed_area(cur))
        if snapshot_every and (i + 1) % snapshot_every == 0:
            snaps.append(cur)
    cur = stepper.state
    dev = float(np.max(polyline_distance(cur.points, ref, cur.closed)))
    diag = FlowDiagnostics(lengths[-1], areas[-1] if cur.closed else None, dev, cur.t, dt,
                           steps, scheme, lengths, areas)
    return cur, diag, snaps


def run_translation_test(curve: Curve, T: float, dt: float | None = None,
                         scheme: str = "semi_implicit", collar: int = DEFAULT_COLLAR,
                         buffer: float = DEFAULT_BUFFER) -> FlowDiagnostics:
    """Evolve an open curve for time ``T`` and compare with its copy shifted by ``(0, T)``.

    The ``collar`` end vertices are held fixed; the deviation is the largest
    distance from a vertex to the shifted input polyline, ignoring ``buffer``
    of the vertices at each end.
    """
    if T < 0:
        raise DomainError("T must be non-negative")
    state = FlowState(curve.points, closed=False)
    ref = state.points + np.array([0.0, T])
    n = state.n
    cut = int(math.ceil(buffer * n))
    inner = slice(cut, n - cut)
    if T == 0:
        dev = float(np.max(polyline_distance(state.points[inner], ref)))
        return FlowDiagnostics(length(state), None, dev, 0.0, 0.0, 0, scheme)
    limit = stable_dt(state, scheme)
    if dt is None:
        steps = max(1, int(math.ceil(T / limit * (1.0 - 1e-12))))
        dt = T / steps
    else:
        steps = max(1, int(round(T / dt)))
        if abs(steps * dt - T) > 1e-9 * T:
            raise DomainError(f"T={T!r} is not a multiple of dt={dt!r}")
    stepper = Stepper(state, dt, scheme, collar)
    for _ in range(steps):
        stepper.step()
    cur = stepper.state
    dev = float(np.max(polyline_distance(cur.points[inner], ref)))
    log.info("translation test: %d steps of %.3e, deviation %.3e", steps, dt, dev)
    return FlowDiagnostics(length(cur), None, dev, cur.t, dt, steps, scheme)


def line_state(n: int = 64, extent: float = 2.0, angle: float = 0.0) -> FlowState:
    t = np.linspace(-extent, extent, n)
    return FlowState(np.column_stack([t * math.cos(angle), t * math.sin(angle)]), closed=False)


def circle_state(n: int = 128, radius: float = 1.0) -> FlowState:
    a = 2.0 * math.pi * np.arange(n) / n
    return FlowState(radius * np.column_stack([np.cos(a), np.sin(a)]), closed=True)


def ellipse_state(n: int = 256, a: float = 2.0, b: float = 1.0) -> FlowState:
    """Counter-clockwise ellipse with vertices equally spaced in arc length."""
    fine = np.linspace(0.0, 2.0 * math.pi, 64 * n + 1)
    speed = np.hypot(a * np.sin(fine), b * np.cos(fine))
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(fine))])
    target = np.linspace(0.0, arc[-1], n + 1)[:-1]
    t = np.interp(target, arc, fine)
    return FlowState(np.column_stack([a * np.cos(t), b * np.sin(t)]), closed=True)


def curve_state(curve: Curve) -> FlowState:
    return FlowState(curve.points, closed=False)
