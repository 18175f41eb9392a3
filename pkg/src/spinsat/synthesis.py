"""Time-optimal saturation sequence, inversion-recovery baseline and sweeps.

On the ``y >= 0`` branch the optimal control from thermal equilibrium is

1. a bang ``u = -2 pi`` from (0, 1) down to the horizontal singular line,
2. the singular feedback along ``z = z0`` until it saturates at ``y_min``,
3. a second bang ``u = -2 pi`` onto the vertical axis,
4. free relaxation (``u = 0``) up the vertical axis to the origin.

Close to the reachability threshold the bang from ``(y_min, z0)`` no longer
reaches the vertical axis; the singular arc is then left at the latest point
from which it does (see ``synthesize_optimal``).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ChainMismatchError, DomainError, PreconditionError, UnreachableError
from .extremal import (
    TIME_MAXIMIZING,
    TIME_MINIMIZING,
    SwitchingCurve,
    propagate_singular,
    trace_switching_curve,
)
from .integrator import DEFAULT_TOL, EventSpec, Trajectory, integrate, integrate_until
from .model import (
    U_MAX,
    NormalizedParams,
    PhysicalParams,
    PlanarState,
    admissibility_bound,
    det_f1_v,
    dr_dot_dtheta,
    horizontal_ordinate,
    normalize,
    singular_control,
)

log = logging.getLogger(__name__)

BANG = "bang"
SINGULAR_HORIZONTAL = "singular_horizontal"
SINGULAR_VERTICAL = "singular_vertical"
ZERO_CONTROL = "zero_control"
FEEDBACK = "u_s"

CHAIN_TOL = 1e-8
REPLAY_TOL = 1e-6
IR_PULSE_TAU = 0.5


@dataclass(frozen=True)
class Arc:
    """One segment of a schedule.

    ``u`` is the constant control of bang and zero-control arcs, ``0.0`` on
    the vertical singular arc and the marker ``"u_s"`` on the horizontal one
    (feedback law ``model.singular_control``).
    """

    kind: str
    u: float | str
    duration_tau: float
    start: PlanarState
    end: PlanarState


@dataclass(frozen=True)
class ControlSchedule:
    arcs: tuple[Arc, ...]
    normalized: NormalizedParams
    params: PhysicalParams | None = None
    name: str = "optimal"
    branch: int = 1
    switching_curve_clear: bool | None = None

    @property
    def total_tau(self) -> float:
        return float(sum(a.duration_tau for a in self.arcs))

    @property
    def total_seconds(self) -> float | None:
        if self.normalized.omega_max_hz is None:
            return None
        return self.normalized.to_seconds(self.total_tau)

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(a.kind for a in self.arcs)

    @property
    def structure(self) -> str:
        return "-".join(_ABBREV[k] for k in self.kinds)

    @property
    def start(self) -> PlanarState:
        return self.arcs[0].start

    @property
    def end(self) -> PlanarState:
        return self.arcs[-1].end


_ABBREV = {BANG: "B", SINGULAR_HORIZONTAL: "SH", SINGULAR_VERTICAL: "SV", ZERO_CONTROL: "Z"}


def _as_normalized(p: PhysicalParams | NormalizedParams) -> tuple[NormalizedParams, PhysicalParams | None]:
    if isinstance(p, PhysicalParams):
        return normalize(p), p
    if isinstance(p, NormalizedParams):
        return p, None
    raise PreconditionError(f"expected PhysicalParams or NormalizedParams, got {type(p).__name__}")


def _bang_field(u: float, n: NormalizedParams):
    G, g = n.big_gamma, n.small_gamma
    return lambda t, x: np.array([-G * x[0] - u * x[1], g * (1.0 - x[1]) + u * x[0]])


def _horizon(n: NormalizedParams) -> float:
    return 50.0 / n.small_gamma


def _pt(x) -> PlanarState:
    return PlanarState(float(x[0]), float(x[1]))


def _bang_to_axis(start, u: float, branch: int, n: NormalizedParams, tol: float):
    """Bang from ``start`` until y crosses 0 toward the other half-plane."""
    axis = EventSpec("axis", lambda t, x: branch * x[0], "falling", zero_tol=1e-300)
    return integrate_until(_bang_field(u, n), start, [axis], _horizon(n), tol, control=u)


# optimal synthesis --------------------------------------------------------------

def synthesize_optimal(
    p: PhysicalParams | NormalizedParams,
    target_tol: float = 1e-6,
    tol: float = DEFAULT_TOL,
    *,
    branch: int = 1,
    check_switching: bool = True,
) -> ControlSchedule:
    """Build the time-optimal saturation schedule from thermal equilibrium.

    Parameters
    ----------
    p : PhysicalParams or NormalizedParams
        Relaxation times and amplitude (or the normalized rates directly).
    target_tol : float
        Required distance of the terminal state from the origin.
    tol : float
        Integrator tolerance.
    branch : {+1, -1}
        Half-plane of the synthesis; ``-1`` is the mirror image (first bang
        ``u = +2 pi``) and has identical durations.
    check_switching : bool
        Trace the switching curve and record whether the second bang stays
        clear of it (``ControlSchedule.switching_curve_clear``).

    Raises
    ------
    UnreachableError
        If the first bang never reaches the vertical axis below the origin
        (within 50/gamma) or the construction cannot close on the origin.
    """
    if branch not in (1, -1):
        raise PreconditionError("branch must be +1 or -1")
    n, phys = _as_normalized(p)
    z0 = horizontal_ordinate(n)
    y_min = admissibility_bound(n)
    u_b = -branch * U_MAX
    x_eq = (0.0, 1.0)

    reach_z0 = EventSpec("z0", lambda t, x: x[1] - z0, "falling")
    axis = EventSpec("axis", lambda t, x: branch * x[0], "falling", zero_tol=1e-300)
    hit1 = integrate_until(_bang_field(u_b, n), x_eq, [reach_z0, axis], _horizon(n), tol, control=u_b)

    arcs: list[Arc] = []
    clear: bool | None = None
    if hit1.event is None:
        raise UnreachableError(
            f"first bang settles without reaching the horizontal singular line or the vertical axis "
            f"(omega_max/2pi = {n.omega_max_hz})"
        )
    if hit1.event == "axis":
        arcs.append(Arc(BANG, u_b, hit1.tau, _pt(x_eq), PlanarState(0.0, float(hit1.state[1]))))
    else:
        y1 = abs(float(hit1.state[0]))
        junction1 = PlanarState(branch * y1, z0)
        y_exit = _exit_ordinate(y1, y_min, z0, u_b, branch, n, tol)
        if y_exit is None:
            raise UnreachableError(
                f"no bang from the horizontal singular line reaches the vertical axis "
                f"(omega_max/2pi = {n.omega_max_hz})"
            )
        if y_exit >= y1:
            # singular arc not admissible or not usable: the first bang carries on to the axis
            hit = _bang_to_axis(x_eq, u_b, branch, n, tol)
            if hit.event is None:
                raise UnreachableError("first bang does not reach the vertical axis")
            arcs.append(Arc(BANG, u_b, hit.tau, _pt(x_eq), PlanarState(0.0, float(hit.state[1]))))
        else:
            arcs.append(Arc(BANG, u_b, hit1.tau, _pt(x_eq), junction1))
            extra = []
            if y_exit > y_min:
                extra = [EventSpec("exit", lambda t, x: abs(x[0]) - y_exit, "falling")]
            sing = propagate_singular(junction1, "horizontal", n, extra, tol=tol)
            if sing.event not in ("admissibility", "exit"):
                raise UnreachableError("horizontal singular arc did not reach its exit point")
            junction2 = PlanarState(branch * y_exit, z0)
            arcs.append(Arc(SINGULAR_HORIZONTAL, FEEDBACK, sing.duration, junction1, junction2))
            hit3 = _bang_to_axis(junction2, u_b, branch, n, tol)
            if hit3.event is None:
                raise UnreachableError("second bang does not reach the vertical axis")
            arcs.append(Arc(BANG, u_b, hit3.tau, junction2, PlanarState(0.0, float(hit3.state[1]))))
            if check_switching and y_exit == y_min:
                curve = trace_switching_curve(n, branch=branch, tol=tol)
                clear = second_bang_clears_curve(hit3.trajectory, curve)
                if not clear:
                    log.warning("second bang crosses the switching curve; synthesis may not be optimal")

    z3 = arcs[-1].end.z
    if z3 < -target_tol:
        vert = propagate_singular((0.0, z3), "vertical", n, tol=tol)
        if vert.event != "target":
            raise UnreachableError("vertical relaxation did not reach the origin")
        arcs.append(Arc(SINGULAR_VERTICAL, 0.0, vert.duration, PlanarState(0.0, z3), PlanarState(0.0, 0.0)))
    end = arcs[-1].end
    if math.hypot(*end) > target_tol:
        raise UnreachableError(f"terminal state {tuple(end)} misses the origin by more than {target_tol}")
    return ControlSchedule(tuple(arcs), n, phys, "optimal", branch, clear)


def _exit_ordinate(y1, y_min, z0, u_b, branch, n, tol) -> float | None:
    """Latest |y| on the horizontal line from which the bang reaches the axis.

    Returns ``y_min`` in the regular case, a value in ``(y_min, y1]`` close to
    the reachability threshold, or ``None`` if even ``y1`` fails.
    """
    def reaches(y):
        return _bang_to_axis((branch * y, z0), u_b, branch, n, tol).event == "axis"

    if y1 <= y_min:
        return y1 if reaches(y1) else None
    if reaches(y_min):
        return y_min
    if not reaches(y1):
        return None
    lo, hi = y_min, y1
    while hi - lo > 1e-13 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if reaches(mid):
            hi = mid
        else:
            lo = mid
    return hi


def second_bang_clears_curve(bang: Trajectory, curve: SwitchingCurve) -> bool:
    """True when the switching curve stays on one side of the second bang.

    The bang is a graph over y (y decreases monotonically to 0); for each
    curve point in its y-range the bang's ordinate at that y is located on
    the dense output and the sign of the vertical gap must never change.
    """
    pts = curve.as_array()
    if len(pts) == 0:
        return True
    ys = bang.states[:, 0]
    sgn = 1.0 if ys[0] > 0 else -1.0
    y_lo, y_hi = sorted((ys[0], ys[-1]))
    gaps = []
    for yc, zc in pts:
        if not y_lo < yc < y_hi:
            continue
        k = int(np.searchsorted(-sgn * ys, -sgn * yc))
        t_a, t_b = bang.tau[max(k - 1, 0)], bang.tau[min(k, len(ys) - 1)]
        if bang.dense is not None and t_b > t_a:
            t_star = brentq(lambda t: bang.dense(t)[0] - yc, t_a, t_b, xtol=1e-15)
            z_bang = bang.dense(t_star)[1]
        else:
            z_bang = np.interp(-sgn * yc, -sgn * ys, bang.states[:, 1])
        gaps.append(zc - z_bang)
    gaps = np.array(gaps)
    return bool(np.all(gaps > 0) or np.all(gaps < 0))


def is_reachable(p: PhysicalParams | NormalizedParams, tol: float = DEFAULT_TOL) -> bool:
    """Whether the origin can be reached: the first bang must hit the lower vertical axis."""
    n, _ = _as_normalized(p)
    return _bang_to_axis((0.0, 1.0), -U_MAX, 1, n, tol).event == "axis"


def reachability_threshold(t1: float, t2: float, lo: float = 1.0, hi: float = 10.0, xtol: float = 1e-3) -> float:
    """Smallest omega_max/(2 pi) [Hz] for which the origin is reachable (bisection)."""
    ok = lambda f: is_reachable(PhysicalParams(t1, t2, f))
    if ok(lo) or not ok(hi):
        raise DomainError(f"threshold not bracketed by [{lo}, {hi}] Hz")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# inversion recovery --------------------------------------------------------------

def inversion_recovery(
    p: PhysicalParams | NormalizedParams,
    tol: float = DEFAULT_TOL,
    *,
    branch: int = 1,
) -> ControlSchedule:
    """Bang onto the lower z-axis, then free relaxation up the axis to the origin.

    The pulse is the same full-amplitude rotation as the first optimal bang,
    held until y returns to 0 (a pi rotation without relaxation, slightly
    longer with it); relaxation then carries z from below zero to the origin.

    Raises
    ------
    UnreachableError
        If the pulse never reaches the z-axis or z cannot relax through zero.
    """
    n, phys = _as_normalized(p)
    u_b = -branch * U_MAX
    x_eq = PlanarState(0.0, 1.0)
    if n.small_gamma == 0:
        # no relaxation: the pulse is an exact pi rotation and z stays at -1
        pulse = integrate(_bang_field(u_b, n), x_eq, IR_PULSE_TAU, tol, control=u_b)
        raise UnreachableError(
            f"ir-unreachable: no longitudinal relaxation, pulse ends at z = {pulse.final_state[1]:.12g}"
        )
    hit = _bang_to_axis(x_eq, u_b, branch, n, tol)
    if hit.event is None:
        raise UnreachableError("ir-unreachable: the pulse never reaches the z-axis")
    xb = PlanarState(0.0, float(hit.state[1]))
    arcs = [Arc(BANG, u_b, hit.tau, x_eq, xb)]
    free = propagate_singular(xb, "vertical", n, tol=tol)
    if free.event != "target":
        raise UnreachableError("ir-unreachable: z does not relax through zero")
    arcs.append(Arc(ZERO_CONTROL, 0.0, free.duration, xb, PlanarState(0.0, 0.0)))
    return ControlSchedule(tuple(arcs), n, phys, "inversion_recovery", branch)


# replay -------------------------------------------------------------------------

def _arc_field(arc: Arc, n: NormalizedParams):
    if arc.kind == SINGULAR_HORIZONTAL:
        G, g = n.big_gamma, n.small_gamma

        def fun(t, x):
            u = max(-U_MAX, min(U_MAX, singular_control(x, n)))
            return np.array([-G * x[0] - u * x[1], g * (1.0 - x[1]) + u * x[0]])

        control = lambda t, x: max(-U_MAX, min(U_MAX, singular_control(x, n)))
        return fun, control
    u = float(arc.u)
    return _bang_field(u, n), u


def simulate_schedule(
    sched: ControlSchedule,
    x0: Sequence[float] | None = None,
    samples_per_arc: int = 400,
    tol: float = DEFAULT_TOL,
) -> Trajectory:
    """Replay a schedule through the integrator.

    Every arc is integrated from the replayed state with its own control
    law and resampled uniformly; samples are labelled with the arc kind.

    Raises
    ------
    ChainMismatchError
        If the declared arcs do not chain, ``x0`` is not the declared start,
        or the replay departs from a declared junction by more than 1e-6.
    """
    arcs = sched.arcs
    if not arcs:
        if x0 is None:
            raise PreconditionError("an empty schedule needs an initial state")
        x = np.array(x0, dtype=float).reshape(1, 2)
        return Trajectory(np.zeros(1), x, np.zeros(1), None, ())
    for a, b in zip(arcs[:-1], arcs[1:]):
        if math.dist(a.end, b.start) > CHAIN_TOL:
            raise ChainMismatchError(f"{a.kind} ends at {tuple(a.end)} but {b.kind} starts at {tuple(b.start)}")
    if x0 is not None and math.dist(x0, arcs[0].start) > CHAIN_TOL:
        raise ChainMismatchError(f"x0 = {tuple(x0)} is not the schedule start {tuple(arcs[0].start)}")

    n = sched.normalized
    taus, states, us, labels = [], [], [], []
    x = np.array(arcs[0].start, dtype=float)
    t0 = 0.0
    for i, arc in enumerate(arcs):
        if math.dist(x, arc.start) > REPLAY_TOL:
            raise ChainMismatchError(f"replay reached {tuple(x)} instead of {tuple(arc.start)}")
        if arc.duration_tau <= 0:
            continue
        fun, control = _arc_field(arc, n)
        tr = integrate(fun, x, arc.duration_tau, tol, control=control).resample(samples_per_arc)
        u = tr.u if not callable(control) else np.array([control(0.0, s) for s in tr.states])
        if taus:
            taus.pop(), states.pop(), us.pop(), labels.pop()
        taus.extend(tr.tau + t0)
        states.extend(tr.states)
        us.extend(u)
        labels.extend([arc.kind] * len(tr.tau))
        x = tr.final_state.copy()
        t0 += arc.duration_tau
    if math.dist(x, arcs[-1].end) > REPLAY_TOL:
        raise ChainMismatchError(f"replay ends at {tuple(x)}, schedule declares {tuple(arcs[-1].end)}")
    return Trajectory(np.array(taus), np.array(states), np.array(us), None, tuple(labels))


# sweeps and limits ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    omega_hz: float
    t_opt_s: float | None
    t_ir_s: float | None
    ratio: float | None
    reachable: bool
    structure: str = ""


def sweep_ratio(
    p_base: PhysicalParams,
    omegas: Iterable[float],
    tol: float = DEFAULT_TOL,
    check_switching: bool = False,
) -> list[SweepRow]:
    """T_opt / T_IR over a list of amplitudes; unreachable rows are flagged, not raised."""
    omegas = [float(w) for w in omegas]
    if any(w <= 0 for w in omegas):
        raise PreconditionError("amplitudes must be positive")
    rows = []
    for w in omegas:
        p = p_base.with_omega(w)
        try:
            opt = synthesize_optimal(p, tol=tol, check_switching=check_switching)
            t_opt, structure = opt.total_seconds, opt.structure
        except UnreachableError:
            t_opt, structure = None, ""
        try:
            t_ir = inversion_recovery(p, tol).total_seconds
        except UnreachableError:
            t_ir = None
        ratio = t_opt / t_ir if t_opt is not None and t_ir is not None else None
        rows.append(SweepRow(w, t_opt, t_ir, ratio, t_opt is not None, structure))
    return rows


@dataclass(frozen=True)
class AsymptoticLimits:
    t_opt_inf: float
    t_ir_inf: float
    ratio_inf: float


def asymptotic_times(t1: float, t2: float) -> AsymptoticLimits:
    """Durations in seconds in the limit of unbounded control amplitude.

    Bang pulses take no time in this limit; the singular arc and the final
    free relaxation are integrated in closed form.
    """
    if not t1 > t2 > 0:
        raise DomainError(f"requires t1 > t2 > 0, got t1={t1!r}, t2={t2!r}")
    a = t2 * (t2 - 2 * t1) / (2 * t1 * (t1 - t2) ** 2)
    arg1 = 1 - 2 / (a * t2)
    arg2 = (2 * t1 - t2) / (2 * (t1 - t2))
    if arg1 <= 0 or arg2 <= 0:
        raise DomainError("logarithm argument is not positive")
    t_opt = t2 / 2 * math.log(arg1) + t1 * math.log(arg2)
    t_ir = t1 * math.log(2.0)
    return AsymptoticLimits(t_opt, t_ir, t_opt / t_ir)


def asymptotic_singular_amplitude(y, t1: float, t2: float):
    """Physical singular field (omega_max/2pi) * u_s on the horizontal line, in 1/s."""
    return (t2 - 2 * t1) / (2 * t1 * (t1 - t2) * np.asarray(y, dtype=float))


# field map ----------------------------------------------------------------------

@dataclass
class FieldMap:
    """Grid samples of d(r_dot)/d(theta) and det(F1, V) over [-1, 1]^2.

    ``dr_dot_dtheta`` is NaN at the origin cell (null marker).  Cells within
    half a grid step of a singular branch are flagged ``on_singular`` and
    carry that branch's classification; the crossing cell is ``"junction"``.
    """

    y: np.ndarray
    z: np.ndarray
    dr_dot_dtheta: np.ndarray
    det_f1v: np.ndarray
    on_singular: np.ndarray
    classification: np.ndarray
    z0: float
    step: float = field(default=0.0)


def field_map(n: NormalizedParams, grid_n: int = 256) -> FieldMap:
    if grid_n < 2:
        raise PreconditionError("grid_n must be at least 2")
    z0 = horizontal_ordinate(n)
    axis = np.linspace(-1.0, 1.0, grid_n)
    h = axis[1] - axis[0]
    Y, Z = np.meshgrid(axis, axis, indexing="xy")
    drd = dr_dot_dtheta(Y, Z, n)
    det = det_f1_v(Y, Z, n)
    on_v = np.abs(Y) <= h / 2
    on_h = np.abs(Z - z0) <= h / 2
    cls = np.full(Y.shape, "", dtype=object)
    cls[on_h] = TIME_MINIMIZING
    cls[on_v & (Z > z0)] = TIME_MINIMIZING
    cls[on_v & (Z <= z0)] = TIME_MAXIMIZING
    cls[on_v & on_h] = "junction"
    return FieldMap(Y, Z, drd, det, on_v | on_h, cls, z0, h)


def singular_lines(n: NormalizedParams, count: int = 256) -> dict[str, np.ndarray]:
    """Polylines of both singular branches inside the unit disk.

    Each entry is an ``(m, 2)`` array of (y, z); the exact crossing point
    ``(0, z0)`` is included on the vertical line so its classification flip
    is resolved exactly.
    """
    z0 = horizontal_ordinate(n)
    half = math.sqrt(max(0.0, 1.0 - z0 * z0))
    yh = np.linspace(-half, half, count)
    zv = np.union1d(np.linspace(-1.0, 1.0, count), [z0])
    return {
        "horizontal": np.column_stack([yh, np.full_like(yh, z0)]),
        "vertical": np.column_stack([np.zeros_like(zv), zv]),
    }
