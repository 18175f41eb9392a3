import math
import warnings

import numpy as np
import pytest

from helpers import singular_path, two_bang_path
from spinsat.errors import CollinearCrossingError, OffLocusError, PreconditionError
from spinsat.extremal import (
    TIME_MAXIMIZING,
    TIME_MINIMIZING,
    classify_singular_point,
    clock_compare,
    clock_form,
    clock_form_curl,
    default_switching_seeds,
    hamiltonian,
    make_point,
    propagate_bang,
    propagate_singular,
    radial_speed_extremum,
    singular_adjoint,
    switching_function,
    trace_switching_curve,
)
from spinsat.integrator import EventSpec, Trajectory
from spinsat.model import (
    U_MAX,
    NormalizedParams,
    admissibility_bound,
    control_field,
    derived_field,
    det_f0_f1,
    det_f1_v,
    drift_field,
    horizontal_ordinate,
)


@pytest.fixture(scope="module")
def curve(ref_norm):
    return trace_switching_curve(ref_norm)


def _bang_from_singular_line(n, y, scale=1.0):
    z0 = horizontal_ordinate(n)
    p = np.array(singular_adjoint((y, z0), n)) * scale
    return propagate_bang(make_point((y, z0), p, -U_MAX, n), -1, n, horizon=5.0, tol=1e-12)


def test_singular_adjoint_properties(ref_norm):
    for s in [(0.3, horizontal_ordinate(ref_norm)), (0.0, 0.4), (0.0, -0.6)]:
        p = singular_adjoint(s, ref_norm)
        assert math.hypot(*p) == pytest.approx(1.0)
        assert switching_function(s, p) == pytest.approx(0.0, abs=1e-15)
        assert hamiltonian(s, p, 0.0, ref_norm) >= 0


def test_switching_derivative_is_bracket(ref_norm):
    # d(phi)/d(tau) = P . V along any bang arc, independent of u
    arc = _bang_from_singular_line(ref_norm, 0.2)
    w = arc.trajectory.dense
    h = 1e-6
    for t in np.linspace(0.05, 0.9 * arc.duration, 7):
        phi = lambda tt: switching_function(w(tt)[:2], w(tt)[2:])
        fd = (phi(t + h) - phi(t - h)) / (2 * h)
        x = w(t)
        assert fd == pytest.approx(float(np.dot(x[2:], derived_field(x[:2], ref_norm))), abs=1e-7)


@pytest.mark.parametrize("y", [0.0075, 0.01, 0.05, 0.3])
def test_hamiltonian_conserved_and_nonnegative(ref_norm, y):
    arc = _bang_from_singular_line(ref_norm, y)
    hs = np.array([pt.h for pt in arc.points])
    assert hs.min() >= -1e-9
    assert np.ptp(hs) < 1e-8


def test_adjoint_scaling_invariance(ref_norm):
    a = _bang_from_singular_line(ref_norm, 0.05)
    b = _bang_from_singular_line(ref_norm, 0.05, scale=37.5)
    assert a.event == b.event == "switch"
    assert abs(a.duration - b.duration) < 1e-10


def test_bang_sign_precondition(ref_norm):
    e = make_point((0.3, 0.2), (0.0, 1.0), U_MAX, ref_norm)
    sign = 1 if e.phi < 0 else -1
    with pytest.raises(PreconditionError):
        propagate_bang(e, sign, ref_norm)


def test_horizontal_arc_duration_closed_form(ref_norm):
    G, g = ref_norm.big_gamma, ref_norm.small_gamma
    z0 = horizontal_ordinate(ref_norm)
    y_min = admissibility_bound(ref_norm)
    arc = propagate_singular((0.6, z0), "horizontal", ref_norm, tol=1e-12)
    assert arc.event == "admissibility"
    assert arc.end.y == pytest.approx(y_min, rel=1e-9)
    c = g * (1 - z0) * abs(z0)
    expected = math.log((G * 0.36 + c) / (G * y_min**2 + c)) / (2 * G)
    assert arc.duration == pytest.approx(expected, rel=1e-9)
    assert np.all(arc.trajectory.states[:, 1] == z0)


def test_vertical_arc_duration_closed_form(ref_norm):
    z3 = -0.3
    arc = propagate_singular((0.0, z3), "vertical", ref_norm, tol=1e-12)
    assert arc.event == "target"
    assert arc.duration == pytest.approx(math.log(1 - z3) / ref_norm.small_gamma, rel=1e-10)
    assert abs(arc.end.z) < 1e-10


def test_singular_preconditions(ref_norm):
    z0 = horizontal_ordinate(ref_norm)
    with pytest.raises(OffLocusError):
        propagate_singular((0.3, 0.2), "horizontal", ref_norm)
    with pytest.raises(OffLocusError):
        propagate_singular((0.3, -0.5), "vertical", ref_norm)
    with pytest.raises(PreconditionError, match="immediate-inadmissible"):
        propagate_singular((0.5 * admissibility_bound(ref_norm), z0), "horizontal", ref_norm)


def test_switching_curve_starts_at_admissibility_loss(ref_norm, curve):
    y_min, z0 = admissibility_bound(ref_norm), horizontal_ordinate(ref_norm)
    first = curve.points[0]
    assert len(curve.points) >= 32
    assert abs(first[0] - y_min) < 1e-4
    assert abs(first[1] - z0) < 1e-6
    assert np.all(np.asarray(curve.points)[:, 0] > 0)


def test_switching_curve_refines_without_displacement(ref_norm, curve):
    fine = trace_switching_curve(ref_norm, default_switching_seeds(ref_norm, 127))
    coarse = dict(zip(np.round(curve.seed_y, 15), curve.points))
    matched = 0
    for seed, pt in zip(np.round(fine.seed_y, 15), fine.points):
        if seed in coarse:
            assert np.max(np.abs(np.subtract(pt, coarse[seed]))) < 1e-6
            matched += 1
    assert matched >= len(curve.points) - 2


def generic_extremals(n, count=80, seed=1):
    rng = np.random.default_rng(seed)
    z0 = horizontal_ordinate(n)
    out = [((y, z0), tuple(singular_adjoint((y, z0), n))) for y in (0.02, 0.05, 0.1, 0.3, 0.6)]
    for _ in range(count):
        r, th, a = np.sqrt(rng.uniform(0.05, 0.9)), rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi)
        out.append(((r * np.cos(th), r * np.sin(th)), (np.cos(a), np.sin(a))))
    return out


def test_switch_times_scale_invariant(ref_norm):
    switched = 0
    for s, p in generic_extremals(ref_norm):
        sign = 1 if make_point(s, p, 0.0, ref_norm).phi >= 0 else -1
        base = propagate_bang(make_point(s, p, sign * U_MAX, ref_norm), sign, ref_norm, horizon=5.0)
        if base.event != "switch":
            continue
        switched += 1
        for scale in (1e-3, 3.7, 250.0):
            q = np.asarray(p) * scale
            other = propagate_bang(make_point(s, q, sign * U_MAX, ref_norm), sign, ref_norm, horizon=5.0)
            assert other.event == "switch"
            assert abs(other.duration - base.duration) < 1e-10
    assert switched >= 6


def test_switching_curve_adjoint_scale(ref_norm, curve):
    # seeds next to y_min switch within ~1e-4 with d(phi)/d(tau) ~ 1e-9, so
    # ulp-level differences in the rescaled adjoint move the root by ~1e-9
    for scale in (1e-3, 250.0):
        scaled = trace_switching_curve(ref_norm, adjoint_scale=scale)
        np.testing.assert_allclose(scaled.tau_to_switch, curve.tau_to_switch, atol=1e-8, rtol=0)


def test_switching_curve_rejects_inadmissible_seeds(ref_norm):
    with pytest.raises(PreconditionError):
        trace_switching_curve(ref_norm, [0.5 * admissibility_bound(ref_norm)])


def test_clock_form_annihilates_f1(ref_norm):
    for s in [(0.3, -0.2), (-0.5, 0.6), (0.1, -0.9)]:
        a = clock_form(s, ref_norm)
        assert a @ drift_field(s, ref_norm) == pytest.approx(1.0, rel=1e-13)
        assert a @ control_field(s) == pytest.approx(0.0, abs=1e-13)


def test_clock_form_curl_sign_map(ref_norm):
    # d(alpha) = det(F1, V) / det(F0, F1)^2 dy ^ dz
    rng = np.random.default_rng(3)
    for y, z in rng.uniform(-0.9, 0.9, (40, 2)):
        d = det_f0_f1(y, z, ref_norm)
        if abs(d) < 1e-2:
            continue
        assert clock_form_curl((y, z), ref_norm) == pytest.approx(det_f1_v(y, z, ref_norm) / d**2, rel=1e-6)


@pytest.fixture(scope="module")
def clock_paths(ref_norm):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return {"singular": singular_path(ref_norm), "up": two_bang_path(ref_norm, 1), "down": two_bang_path(ref_norm, -1)}


@pytest.mark.parametrize("a,b", [("up", "singular"), ("down", "singular"), ("up", "down")])
def test_clock_compare_matches_durations(ref_norm, clock_paths, a, b):
    (ta, da), (tb, db) = clock_paths[a], clock_paths[b]
    assert clock_compare(ta, tb, ref_norm) == pytest.approx(da - db, abs=1e-6)
    assert clock_compare(ta, tb, ref_norm) + clock_compare(tb, ta, ref_norm) == pytest.approx(0, abs=1e-10)


def test_horizontal_singular_beats_bang_bang(ref_norm, clock_paths):
    for k in ("up", "down"):
        assert clock_compare(clock_paths[k][0], clock_paths["singular"][0], ref_norm) > 0


def test_clock_compare_endpoint_mismatch(ref_norm, clock_paths):
    a = clock_paths["singular"][0]
    shifted = Trajectory(a.tau, a.states + [0.0, 1e-3], a.u, None, a.labels)
    with pytest.raises(PreconditionError):
        clock_compare(a, shifted, ref_norm)


def test_clock_integral_rejects_collinear_set(ref_norm):
    tau = np.linspace(0, 1, 5)
    # crosses the ellipse -Gamma y^2 + gamma z (1 - z) = 0 at z = 0.5
    states = np.column_stack([np.linspace(0.0, 0.3, 5), np.full(5, 0.5)])
    with pytest.raises(CollinearCrossingError):
        clock_compare(Trajectory(tau, states, np.zeros(5)), Trajectory(tau, states, np.zeros(5)), ref_norm)


def test_classification_flips_at_z0(ref_norm):
    z0 = horizontal_ordinate(ref_norm)
    assert classify_singular_point((0.0, z0 + 1e-6), ref_norm) == TIME_MINIMIZING
    assert classify_singular_point((0.0, z0 - 1e-6), ref_norm) == TIME_MAXIMIZING
    assert classify_singular_point((0.4, z0), ref_norm) == TIME_MINIMIZING
    assert classify_singular_point((0.0, z0), ref_norm) == TIME_MINIMIZING
    with pytest.raises(OffLocusError):
        classify_singular_point((0.3, 0.3), ref_norm)


@pytest.mark.parametrize("z", [-0.9, -0.3, -0.05, -0.03, 0.2, 0.7])
def test_vertical_rule_matches_radial_speed(ref_norm, z):
    expected = TIME_MINIMIZING if radial_speed_extremum((0.0, z), ref_norm) == "max" else TIME_MAXIMIZING
    assert classify_singular_point((0.0, z), ref_norm) == expected


def test_dissipation_free_phi_is_conserved():
    # with Gamma = gamma = 0 the state and P rotate together, so phi never changes
    n = NormalizedParams(0.0, 0.0)
    for s, p in [((0.3, 0.2), (0.2, -0.3)), ((-0.5, 0.1), (1.0, 0.5))]:
        e = make_point(s, p, 0.0, n)
        sign = 1 if e.phi >= 0 else -1
        arc = propagate_bang(make_point(s, p, sign * U_MAX, n), sign, n, horizon=3.0, tol=1e-12)
        assert arc.event is None
        phis = [pt.phi for pt in arc.points]
        assert np.ptp(phis) < 1e-10
        # reported points carry the unit-normalized adjoint
        assert phis[0] == pytest.approx(e.phi / math.hypot(*p), abs=1e-15)
