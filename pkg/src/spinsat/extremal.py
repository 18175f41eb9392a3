"""Pontryagin extremals of the planar saturation problem.

The pseudo-Hamiltonian is ``P . (F0 + u F1)``; its maximization over
``|u| <= 2 pi`` selects ``u = 2 pi sign(phi)`` with the switching function
``phi = P . F1``.  Singular arcs (``phi`` identically zero) live on the
locus ``S``; the feedback control on ``S`` is ``model.singular_control``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .errors import (
    CollinearCrossingError,
    OffLocusError,
    PreconditionError,
)
from .integrator import DEFAULT_TOL, EventSpec, Trajectory, integrate_until
from .model import (
    LOCUS_TOL,
    U_MAX,
    NormalizedParams,
    PlanarState,
    admissibility_bound,
    d2r_dot_dtheta2,
    det_f0_f1,
    horizontal_ordinate,
    polar_diagnostics,
    rhs,
    singular_control,
    singular_locus,
)

P_NORM_MIN, P_NORM_MAX = 1e-6, 1e6
PHI_TOL = 1e-10
TIME_MINIMIZING = "time_minimizing"
TIME_MAXIMIZING = "time_maximizing"


class AdjointState(NamedTuple):
    p_y: float
    p_z: float


@dataclass(frozen=True)
class ExtremalPoint:
    state: PlanarState
    adjoint: AdjointState
    u: float
    phi: float
    h: float


def switching_function(s: Sequence[float], p: Sequence[float]) -> float:
    y, z = s
    p_y, p_z = p
    return -p_y * z + p_z * y


def hamiltonian(s: Sequence[float], p: Sequence[float], u: float, n: NormalizedParams) -> float:
    v = rhs(s, u, n)
    return float(p[0] * v[0] + p[1] * v[1])


def make_point(s: Sequence[float], p: Sequence[float], u: float, n: NormalizedParams) -> ExtremalPoint:
    s = PlanarState(float(s[0]), float(s[1]))
    p = AdjointState(float(p[0]), float(p[1]))
    if p == (0.0, 0.0):
        raise PreconditionError("the adjoint must be nonzero")
    return ExtremalPoint(s, p, float(u), switching_function(s, p), hamiltonian(s, p, u, n))


def extremal_rhs(e: ExtremalPoint, n: NormalizedParams) -> np.ndarray:
    """State and adjoint velocities ``(dX/dtau, dP/dtau)`` at fixed ``u``."""
    return _extremal_vec(np.array([*e.state, *e.adjoint]), e.u, n)


def _extremal_vec(w: np.ndarray, u: float, n: NormalizedParams) -> np.ndarray:
    y, z, p_y, p_z = w
    G, g = n.big_gamma, n.small_gamma
    return np.array([
        -G * y - u * z,
        g * (1.0 - z) + u * y,
        G * p_y - u * p_z,
        u * p_y + g * p_z,
    ])


def _phi_w(w: np.ndarray) -> float:
    return -w[2] * w[1] + w[3] * w[0]


@dataclass
class BangArc:
    """Bang extremal: samples, the extremal points and what stopped it.

    ``event`` is ``"switch"`` when phi crossed zero, the name of a caller
    event, or ``None`` when the horizon was reached.
    """

    trajectory: Trajectory
    points: list[ExtremalPoint]
    event: str | None

    @property
    def tau(self) -> np.ndarray:
        return self.trajectory.tau

    @property
    def duration(self) -> float:
        return self.trajectory.duration

    @property
    def end(self) -> ExtremalPoint:
        return self.points[-1]


def propagate_bang(
    e0: ExtremalPoint,
    sign: int,
    n: NormalizedParams,
    stop_events: Sequence[EventSpec] = (),
    horizon: float = 10.0,
    tol: float = DEFAULT_TOL,
) -> BangArc:
    """Follow the extremal with ``u = sign * 2 pi`` until phi vanishes.

    A zero of phi at the starting point (e.g. a seed on the singular locus)
    is not reported; the first subsequent crossing is.  The adjoint is
    rescaled to unit length at the start and whenever its norm leaves
    [1e-6, 1e6], which the PMP allows; reported points carry the rescaled P.
    """
    if sign not in (1, -1):
        raise PreconditionError(f"sign must be +1 or -1, got {sign!r}")
    if e0.phi * sign < -PHI_TOL:
        raise PreconditionError(f"u = {sign:+d}*2pi contradicts phi = {e0.phi:.3e} (maximization condition)")
    u = sign * U_MAX
    fun = lambda t, w: _extremal_vec(w, u, n)
    w0 = np.array([*e0.state, *e0.adjoint], dtype=float)
    # P is defined up to a positive factor; a unit start keeps step selection
    # (and hence switch times) independent of that factor
    p_scale = math.hypot(w0[2], w0[3])
    if p_scale == 0:
        raise PreconditionError("adjoint must be nonzero")
    w0[2:] /= p_scale
    zero_tol = 1e-15 * math.hypot(w0[2], w0[3]) * max(1.0, math.hypot(w0[0], w0[1]))
    switch = EventSpec("switch", lambda t, w: _phi_w(w), "either", zero_tol=zero_tol)
    norm_guard = EventSpec(
        "_renormalize",
        lambda t, w: min(math.hypot(w[2], w[3]) - P_NORM_MIN, P_NORM_MAX - math.hypot(w[2], w[3])),
        "falling",
    )
    events = [switch, *stop_events, norm_guard]

    taus, states, pts = [], [], []
    t_offset, remaining = 0.0, horizon
    event: str | None = None
    dense_pieces = []
    while True:
        first = 1e-6 if abs(_phi_w(w0)) <= zero_tol else None
        hit = integrate_until(fun, w0, events, remaining, tol, control=u, first_step=first)
        tr = hit.trajectory
        start = 0 if not taus else 1
        taus.extend((tr.tau[start:] + t_offset).tolist())
        states.extend(tr.states[start:])
        dense_pieces.append((t_offset, tr.dense))
        if hit.event != "_renormalize":
            event = hit.event
            break
        t_offset += hit.tau
        remaining = horizon - t_offset
        w0 = hit.state.copy()
        w0[2:] /= math.hypot(w0[2], w0[3])
        # phi is still nonzero here; reuse the same guards
        events[0] = EventSpec("switch", switch.guard, "either")

    states = np.array(states)
    taus = np.array(taus)
    for w in states:
        pts.append(make_point(w[:2], w[2:], u, n))
    traj = Trajectory(taus, states, np.full(len(taus), u), event, None, _chain_dense(dense_pieces))
    return BangArc(traj, pts, event)


def _chain_dense(pieces):
    if any(d is None for _, d in pieces):
        return None
    if len(pieces) == 1:
        return pieces[0][1]
    offsets = [o for o, _ in pieces]

    def dense(t):
        i = max(0, int(np.searchsorted(offsets, t, side="right")) - 1)
        o, d = pieces[i]
        return d(t - o)

    return dense


@dataclass
class SingularArc:
    """Singular arc samples ``(tau, state, u_s)`` and its stopping reason."""

    branch: str
    trajectory: Trajectory
    event: str | None

    @property
    def duration(self) -> float:
        return self.trajectory.duration

    @property
    def end(self) -> PlanarState:
        y, z = self.trajectory.final_state
        return PlanarState(float(y), float(z))


def propagate_singular(
    s0: Sequence[float],
    branch: str,
    n: NormalizedParams,
    stop_events: Sequence[EventSpec] = (),
    horizon: float | None = None,
    tol: float = DEFAULT_TOL,
) -> SingularArc:
    """Ride a singular branch with the closed-form feedback control.

    The horizontal branch integrates ``dy/dtau = -Gamma y - u_s(y, z0) z0``
    with z pinned at z0, stopping at admissibility loss (event
    ``"admissibility"``); the vertical branch relaxes with ``u = 0`` and y
    pinned at 0, stopping when z reaches 0 (event ``"target"``).
    """
    y0, z0s = float(s0[0]), float(s0[1])
    if horizon is None:
        horizon = 50.0 / n.small_gamma if n.small_gamma > 0 else 1e3
    if branch == "horizontal":
        z0 = horizontal_ordinate(n)
        if abs(z0s - z0) > LOCUS_TOL:
            raise OffLocusError(f"z = {z0s!r} is not on the horizontal singular line z0 = {z0!r}")
        u_start = singular_control((y0, z0), n)
        if abs(u_start) > U_MAX * (1.0 + 1e-12):
            raise PreconditionError(f"immediate-inadmissible: |u_s| = {abs(u_start)!r} > 2pi at y = {y0!r}")
        G = n.big_gamma

        def fun(t, x):
            return np.array([-G * x[0] - singular_control((x[0], z0), n) * z0, 0.0])

        control = lambda t, x: singular_control((x[0], z0), n)
        events = [
            EventSpec("admissibility", lambda t, x: U_MAX - abs(singular_control((x[0], z0), n)), "falling", 1e-13),
            *stop_events,
        ]
        x_init = (y0, z0)
    elif branch == "vertical":
        if abs(y0) > LOCUS_TOL:
            raise OffLocusError(f"y = {y0!r} is not on the vertical singular line")
        g = n.small_gamma

        def fun(t, x):
            return np.array([0.0, g * (1.0 - x[1])])

        control = 0.0
        events = [EventSpec("target", lambda t, x: x[1], "rising"), *stop_events]
        x_init = (0.0, z0s)
    else:
        raise PreconditionError(f"unknown singular branch {branch!r}")

    hit = integrate_until(fun, x_init, events, horizon, tol, control=control)
    tr = hit.trajectory
    if branch == "vertical":
        tr.states[:, 0] = 0.0
    else:
        tr.states[:, 1] = x_init[1]
    return SingularArc(branch, tr, hit.event)


def singular_adjoint(s: Sequence[float], n: NormalizedParams) -> AdjointState:
    """Unit adjoint with phi = 0 at ``s`` and H >= 0.

    P is normal to F1, i.e. parallel to (y, z); the orientation is chosen so
    that ``H = P . F0 >= 0``, ties broken toward positive p_z.
    """
    y, z = s
    r = math.hypot(y, z)
    if r == 0:
        raise PreconditionError("no adjoint normal to F1 at the origin")
    cand = AdjointState(y / r, z / r)
    h = hamiltonian(s, cand, 0.0, n)
    if h < 0 or (h == 0 and cand.p_z < 0):
        cand = AdjointState(-cand.p_y, -cand.p_z)
    return cand


@dataclass
class SwitchingCurve:
    """Switch points of extremals leaving the horizontal singular line.

    ``points[i]`` is the first zero of phi on the extremal seeded at
    ``(seed_y[i], z0)``; ``seed`` is the admissibility-loss point the curve
    emanates from.  Seeds whose extremal reached the vertical axis (or the
    horizon) without switching are listed in ``missing``.
    """

    points: list[PlanarState]
    seed_y: np.ndarray
    tau_to_switch: np.ndarray
    seed: PlanarState
    missing: list[float] = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float).reshape(-1, 2)


def default_switching_seeds(n: NormalizedParams, count: int = 64) -> np.ndarray:
    y_min = admissibility_bound(n)
    return y_min * (1.0 + np.geomspace(1e-3, 1.0, count))


def trace_switching_curve(
    n: NormalizedParams,
    seeds: Sequence[float] | None = None,
    *,
    branch: int = 1,
    horizon: float = 5.0,
    tol: float = DEFAULT_TOL,
    adjoint_scale: float = 1.0,
) -> SwitchingCurve:
    """Trace the switching curve born where the horizontal arc saturates.

    Each seed ``(branch*y, z0)`` with ``y > y_min`` starts an extremal with
    phi = 0 and the adjoint of the singular arc; it is propagated with the
    bang that saturates the singular control on that side (``u = -2 pi`` for
    ``branch = +1``, ``u = +2 pi`` on the mirrored branch) and its first
    switch point is recorded.  Extremals that reach the vertical axis first
    contribute no point.
    """
    if branch not in (1, -1):
        raise PreconditionError("branch must be +1 or -1")
    z0 = horizontal_ordinate(n)
    y_min = admissibility_bound(n)
    seeds = default_switching_seeds(n) if seeds is None else np.asarray(seeds, dtype=float)
    if np.any(seeds <= y_min):
        raise PreconditionError(f"switching-curve seeds must exceed y_min = {y_min!r}")
    sign = -branch
    axis = EventSpec("vertical_axis", lambda t, w: branch * w[0], "falling")

    points, kept, taus, missing = [], [], [], []
    for y in seeds:
        s = (branch * float(y), z0)
        p = singular_adjoint(s, n)
        p = AdjointState(p.p_y * adjoint_scale, p.p_z * adjoint_scale)
        arc = propagate_bang(make_point(s, p, sign * U_MAX, n), sign, n, [axis], horizon, tol)
        if arc.event == "switch":
            points.append(arc.end.state)
            kept.append(float(y))
            taus.append(arc.duration)
        else:
            missing.append(float(y))
    return SwitchingCurve(points, np.array(kept), np.array(taus), PlanarState(branch * y_min, z0), missing)


# clock form -----------------------------------------------------------------

def clock_form(s: Sequence[float], n: NormalizedParams) -> np.ndarray:
    """Covector alpha with alpha(F0) = 1, alpha(F1) = 0."""
    y, z = s
    det = det_f0_f1(y, z, n)
    return np.array([y, z]) / det


def clock_form_curl(s: Sequence[float], n: NormalizedParams, h: float = 1e-5) -> float:
    """Coefficient of d(alpha) = (d alpha_z/dy - d alpha_y/dz) dy^dz, central differences."""
    y, z = s
    dazy = (clock_form((y + h, z), n)[1] - clock_form((y - h, z), n)[1]) / (2 * h)
    dayz = (clock_form((y, z + h), n)[0] - clock_form((y, z - h), n)[0]) / (2 * h)
    return float(dazy - dayz)


_GL_NODES, _GL_WEIGHTS = leggauss(6)


def _pieces(traj: Trajectory) -> list[tuple[int, int]]:
    n = len(traj)
    cuts = [0]
    if traj.labels is not None:
        for i in range(1, n):
            if traj.labels[i] != traj.labels[i - 1]:
                cuts.append(i)
    elif np.all(np.isfinite(traj.u)):
        jumps = np.abs(np.diff(traj.u)) > 1e-3 * U_MAX
        cuts.extend((np.nonzero(jumps)[0] + 1).tolist())
    cuts.append(n)
    # the first sample of each piece is the junction, shared with the piece before
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        hi = min(b + 1, n)
        if hi - a >= 2:
            out.append((a, hi))
    return out


def _check_collinear(dets: np.ndarray, tol: float) -> None:
    # alpha blows up where F0 and F1 are collinear; touching or crossing is fatal
    if np.any(np.abs(dets) < tol) or (np.any(dets > 0) and np.any(dets < 0)):
        raise CollinearCrossingError("path touches the set where F0 and F1 are collinear")


def clock_integral(traj: Trajectory, n: NormalizedParams, collinear_tol: float = 1e-12) -> float:
    """Line integral of the clock form along a sampled path.

    Each smooth piece is interpolated by a cubic spline through its samples
    and integrated with 6-point Gauss-Legendre on every sample interval.
    For an exact trajectory of the control system this equals its duration.
    """
    total = 0.0
    dets = det_f0_f1(traj.states[:, 0], traj.states[:, 1], n)
    _check_collinear(dets, collinear_tol)
    for lo, hi in _pieces(traj):
        t = traj.tau[lo:hi]
        x = traj.states[lo:hi, :2]
        if len(t) >= 4:
            spline = CubicSpline(t, x, axis=0)
            deriv = spline.derivative()
        else:
            spline = deriv = None
        a, b = t[:-1], t[1:]
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        if spline is None:
            frac = (nodes - a[:, None]) / (b - a)[:, None]
            pos = x[:-1, None, :] + frac[..., None] * (x[1:] - x[:-1])[:, None, :]
            vel = np.broadcast_to(((x[1:] - x[:-1]) / (b - a)[:, None])[:, None, :], pos.shape)
        else:
            pos = spline(nodes)
            vel = deriv(nodes)
        yy, zz = pos[..., 0], pos[..., 1]
        det = det_f0_f1(yy, zz, n)
        _check_collinear(det, collinear_tol)
        integrand = (yy * vel[..., 0] + zz * vel[..., 1]) / det
        total += float(np.sum(half * (integrand @ _GL_WEIGHTS)))
    return total


def clock_compare(traj_a: Trajectory, traj_b: Trajectory, n: NormalizedParams, endpoint_tol: float = 1e-8) -> float:
    """Loop integral of the clock form along ``traj_a`` then ``traj_b`` reversed.

    Equals ``tau_a - tau_b`` for two trajectories sharing endpoints; positive
    when ``traj_a`` is slower.
    """
    xa, xb = traj_a.states[:, :2], traj_b.states[:, :2]
    if np.max(np.abs(xa[0] - xb[0])) > endpoint_tol or np.max(np.abs(xa[-1] - xb[-1])) > endpoint_tol:
        raise PreconditionError("trajectories must share start and end points")
    return clock_integral(traj_a, n) - clock_integral(traj_b, n)


# classification ---------------------------------------------------------------

def radial_speed_extremum(s: Sequence[float], n: NormalizedParams) -> str:
    """``"max"`` if |r_dot| is locally maximal in theta at fixed r, else ``"min"``."""
    d = polar_diagnostics(s, n)
    curv = d2r_dot_dtheta2(s, n)
    return "max" if math.copysign(1.0, d.r_dot) * curv < 0 else "min"


def classify_singular_point(s: Sequence[float], n: NormalizedParams) -> str:
    """Time-minimizing or time-maximizing character of a point of S.

    The vertical line is time-minimizing above z0 and time-maximizing below;
    the horizontal line is time-minimizing (its crossing with the vertical
    line is reported with the horizontal rule).
    """
    locus = singular_locus(n)
    if locus.on_horizontal(s):
        return TIME_MINIMIZING
    if locus.on_vertical(s):
        if locus.z0 is None:
            return TIME_MINIMIZING if radial_speed_extremum(s, n) == "max" else TIME_MAXIMIZING
        return TIME_MINIMIZING if s[1] > locus.z0 else TIME_MAXIMIZING
    raise OffLocusError(f"{tuple(s)} is not on the singular locus")
