"""Adaptive Runge-Kutta propagation with dense-output event location.

Steps are taken with the embedded Dormand-Prince 8(5,3) pair from scipy,
driven one step at a time so that event guards can be checked after every
accepted step and localized on the step's 7th-order interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple, Sequence

import numpy as np
from scipy.integrate import DOP853, OdeSolution
from scipy.optimize import brentq

from .errors import PreconditionError, StepUnderflowError

Field = Callable[[float, np.ndarray], np.ndarray]
Guard = Callable[[float, np.ndarray], float]
Direction = Literal["rising", "falling", "either"]

DEFAULT_TOL = 1e-10
MIN_TOL, MAX_TOL = 1e-13, 1e-3
MIN_STEP = 1e-15
EVENT_TAU_TOL = 1e-14
SIMULTANEOUS_TOL = 1e-12
_PROBE_FRACTIONS = np.linspace(0.0, 1.0, 9)[1:]


@dataclass(frozen=True)
class EventSpec:
    """Zero crossing of ``guard(tau, state)`` in the requested direction.

    A guard that starts within ``zero_tol`` of zero does not fire at the
    initial point; its reference sign is taken from the first step on which
    it is clearly nonzero.
    """

    name: str
    guard: Guard
    direction: Direction = "either"
    zero_tol: float = 0.0

    def accepts(self, before: float) -> bool:
        if self.direction == "either":
            return True
        if self.direction == "rising":
            return before < 0
        return before > 0


@dataclass
class Trajectory:
    """Time-stamped samples of an integration.

    ``u`` holds the control applied at each sample (NaN when the integration
    was not control driven).  ``labels`` optionally tags every sample with the
    arc it belongs to.  ``dense`` is the continuous extension, when available.
    """

    tau: np.ndarray
    states: np.ndarray
    u: np.ndarray
    terminal_event: str | None = None
    labels: tuple[str, ...] | None = None
    dense: Callable[[float], np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def duration(self) -> float:
        return float(self.tau[-1] - self.tau[0])

    @property
    def initial_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def resample(self, n: int) -> "Trajectory":
        """Uniform resampling through the dense output (endpoints kept)."""
        if self.dense is None:
            raise PreconditionError("trajectory carries no dense output")
        taus = np.linspace(self.tau[0], self.tau[-1], max(n, 2))
        states = np.array([self.dense(t) for t in taus])
        states[0], states[-1] = self.states[0], self.states[-1]
        u = np.interp(taus, self.tau, self.u) if np.all(np.isfinite(self.u)) else np.full(len(taus), np.nan)
        return Trajectory(taus, states, u, self.terminal_event, None, self.dense)


class EventHit(NamedTuple):
    trajectory: Trajectory
    event: str | None
    tau: float
    state: np.ndarray


def _control_values(control, taus, states) -> np.ndarray:
    if control is None:
        return np.full(len(taus), np.nan)
    if callable(control):
        return np.array([control(t, x) for t, x in zip(taus, states)], dtype=float)
    return np.full(len(taus), float(control))


def _check(horizon: float, tol: float) -> None:
    if not horizon > 0:
        raise PreconditionError(f"horizon must be positive, got {horizon!r}")
    if not MIN_TOL <= tol <= MAX_TOL:
        raise PreconditionError(f"tol must lie in [{MIN_TOL}, {MAX_TOL}], got {tol!r}")


def _sign(v: float, zero_tol: float = 0.0) -> int:
    if abs(v) <= zero_tol:
        return 0
    return 1 if v > 0 else -1


def _propagate(
    fun: Field,
    x0,
    horizon: float,
    tol: float,
    events: Sequence[EventSpec],
    control,
    first_step: float | None,
    max_step: float,
) -> EventHit:
    _check(horizon, tol)
    x0 = np.array(x0, dtype=float)
    solver = DOP853(
        fun,
        0.0,
        x0,
        horizon,
        rtol=tol,
        atol=max(tol * 1e-2, 1e-16),
        first_step=first_step,
        max_step=max_step,
    )
    ts, xs, seg_ts, interps = [0.0], [x0.copy()], [0.0], []
    refs = [_sign(ev.guard(0.0, x0), ev.zero_tol) for ev in events]
    fired: str | None = None

    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed":
            raise StepUnderflowError(message or "integration failed")
        if solver.status == "running" and solver.step_size is not None and solver.step_size < MIN_STEP:
            raise StepUnderflowError(f"step size {solver.step_size!r} below {MIN_STEP}")
        t_old, t_new, x_new = solver.t_old, solver.t, solver.y
        dense = solver.dense_output()

        candidates = []
        if events:
            # interior probes catch pairs of crossings inside one step
            probes = t_old + (t_new - t_old) * _PROBE_FRACTIONS
            probe_states = [dense(t) for t in probes[:-1]] + [x_new]
        for i, ev in enumerate(events):
            t_prev = t_old
            for t_k, x_k in zip(probes, probe_states):
                g_k = ev.guard(t_k, x_k)
                ref = refs[i]
                s_k = _sign(g_k)
                if ref == 0:
                    refs[i] = _sign(g_k, ev.zero_tol)
                elif s_k != ref:
                    refs[i] = s_k
                    if ev.accepts(ref):
                        candidates.append((_locate(ev.guard, dense, t_prev, t_k, g_k), i))
                        break
                t_prev = t_k

        if candidates:
            t_first = min(c[0] for c in candidates)
            # ties within SIMULTANEOUS_TOL resolve to the event listed first
            root, idx = min((c for c in candidates if c[0] - t_first <= SIMULTANEOUS_TOL), key=lambda c: c[1])
            x_root = dense(root)
            ts.append(root)
            xs.append(np.array(x_root))
            seg_ts.append(root)
            interps.append(dense)
            fired = events[idx].name
            break

        ts.append(t_new)
        xs.append(x_new.copy())
        seg_ts.append(t_new)
        interps.append(dense)

    taus = np.array(ts)
    states = np.array(xs)
    sol = OdeSolution(seg_ts, interps) if interps else None
    traj = Trajectory(taus, states, _control_values(control, taus, states), fired, None, sol)
    return EventHit(traj, fired, float(taus[-1]), states[-1].copy())


def _locate(guard: Guard, dense, t_old: float, t_new: float, g_new: float) -> float:
    if g_new == 0.0:
        return t_new
    g = lambda t: guard(t, dense(t))
    g_old = g(t_old)
    if g_old == 0.0:
        return t_old
    if g_old * g_new > 0:
        # interpolant and accepted step disagree on the sign; take the step end
        return t_new
    return brentq(g, t_old, t_new, xtol=EVENT_TAU_TOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def integrate(
    field: Field,
    x0,
    horizon: float,
    tol: float = DEFAULT_TOL,
    *,
    control=None,
    first_step: float | None = None,
    max_step: float = np.inf,
) -> Trajectory:
    """Integrate ``dx/dtau = field(tau, x)`` from 0 to ``horizon``.

    Parameters
    ----------
    field : callable
        Vector field ``(tau, x) -> dx/dtau``.
    x0 : array-like
        Initial state (2 or 4 components in this package, any size works).
    horizon : float
        Final normalized time, > 0.
    tol : float
        Relative tolerance of the embedded error estimate, in [1e-13, 1e-3].
    control : float or callable, optional
        Value (or ``(tau, x) -> u``) recorded in ``Trajectory.u``.

    Raises
    ------
    StepUnderflowError
        If the step size collapses.
    """
    return _propagate(field, x0, horizon, tol, (), control, first_step, max_step).trajectory


def integrate_until(
    field: Field,
    x0,
    events: Sequence[EventSpec],
    horizon: float,
    tol: float = DEFAULT_TOL,
    *,
    control=None,
    first_step: float | None = None,
    max_step: float = np.inf,
) -> EventHit:
    """Integrate until the first event fires or ``horizon`` is reached.

    Returns an ``EventHit``; its ``event`` is ``None`` when the horizon was
    reached without any guard crossing.
    """
    if not events:
        raise PreconditionError("integrate_until needs at least one event")
    return _propagate(field, x0, horizon, tol, tuple(events), control, first_step, max_step)
