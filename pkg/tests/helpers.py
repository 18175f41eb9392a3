"""Path builders shared by the extremal and acceptance tests."""

import numpy as np
from scipy.optimize import fsolve

from spinsat.extremal import propagate_singular
from spinsat.integrator import EventSpec, Trajectory, integrate
from spinsat.model import U_MAX, horizontal_ordinate, rhs

Y_START, Y_END = 0.5, 0.45


def _bang(u, n):
    return lambda t, x: rhs(x, u, n)


def bang_sequence(x0, controls, durations, n, tol=1e-12, samples=200):
    """Concatenate constant-control arcs into one labelled trajectory."""
    taus, states, us, labels = [], [], [], []
    x, t0 = np.asarray(x0, float), 0.0
    for k, (u, d) in enumerate(zip(controls, durations)):
        tr = integrate(_bang(u, n), x, d, tol, control=u).resample(samples)
        if k:
            # the junction sample belongs to the arc that starts there
            for seq in (taus, states, us, labels):
                seq.pop()
        taus.extend(tr.tau + t0)
        states.extend(tr.states)
        us.extend([u] * len(tr))
        labels.extend([f"arc{k}"] * len(tr))
        x, t0 = tr.final_state, t0 + d
    return Trajectory(np.array(taus), np.array(states), np.array(us), None, tuple(labels))


def end_of(x0, controls, durations, n):
    x = np.asarray(x0, float)
    for u, d in zip(controls, durations):
        x = integrate(_bang(u, n), x, d, 1e-12).final_state
    return x


def two_bang_path(n, first_sign):
    """Bang-bang path from (Y_START, z0) to (Y_END, z0) with the given first sign."""
    z0 = horizontal_ordinate(n)
    a, b = (Y_START, z0), np.array([Y_END, z0])
    us = (first_sign * U_MAX, -first_sign * U_MAX)
    guess = (0.1, 0.1)
    sol = fsolve(lambda d: end_of(a, us, np.abs(d) + 1e-9, n) - b, guess, xtol=1e-13)
    durations = np.abs(sol) + 1e-9
    if np.max(np.abs(end_of(a, us, durations, n) - b)) > 1e-10:
        raise RuntimeError("two-bang path did not converge")
    return bang_sequence(a, us, durations, n), float(np.sum(durations))


def singular_path(n):
    z0 = horizontal_ordinate(n)
    stop = EventSpec("end", lambda t, x: x[0] - Y_END, "falling")
    arc = propagate_singular((Y_START, z0), "horizontal", n, [stop], tol=1e-12)
    tr = arc.trajectory
    fine = tr.resample(400)
    fine.states[:, 1] = z0
    fine.u[:] = tr.u[0]
    labels = ("singular",) * len(fine)
    return Trajectory(fine.tau, fine.states, np.full(len(fine), np.nan), None, labels), arc.duration


def optimal_tail(n, sched, y_start):
    """The optimal path from (y_start, z0) on the singular arc to the end of the second bang."""
    z0 = horizontal_ordinate(n)
    arc = propagate_singular((y_start, z0), "horizontal", n, tol=1e-12)
    sing = arc.trajectory.resample(400)
    sing.states[:, 1] = z0
    bang = bang_sequence(sing.final_state, [sched.arcs[2].u], [sched.arcs[2].duration_tau], n)
    tau = np.concatenate([sing.tau[:-1], bang.tau + sing.tau[-1]])
    states = np.vstack([sing.states[:-1], bang.states])
    labels = ("singular",) * (len(sing) - 1) + bang.labels
    u = np.concatenate([np.full(len(sing) - 1, np.nan), bang.u])
    return Trajectory(tau, states, u, None, labels), arc.duration + sched.arcs[2].duration_tau


def bang_competitor(start, end, controls, n, guess, fixed=()):
    """Bang-only path from start to end; the first two durations are solved for."""
    def residual(d):
        return end_of(start, controls, [*np.abs(d), *fixed], n) - np.asarray(end)

    sol = fsolve(residual, guess, xtol=1e-13)
    durations = [*np.abs(sol), *fixed]
    if np.max(np.abs(residual(sol))) > 1e-10:
        raise RuntimeError("competitor did not converge")
    return bang_sequence(start, controls, durations, n), float(np.sum(durations))
