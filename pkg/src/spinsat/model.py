"""Normalized planar Bloch model of a dissipative spin-1/2.

The magnetization is scaled by its equilibrium value and time by the
maximum nutation frequency, so that the control amplitude is bounded by
2*pi and one unit of normalized time is one full nutation period at full
power.  With one transverse control component the dynamics reduce to the
(y, z) meridian plane::

    dy/dtau = -Gamma*y          - u*z
    dz/dtau =  gamma*(1 - z)    + u*y

written as ``F0 + u*F1`` with drift ``F0 = (-Gamma*y, gamma*(1 - z))`` and
control field ``F1 = (-z, y)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    ControlBoundsError,
    DegenerateRelaxationError,
    InvalidParamsError,
    OriginUndefinedError,
    SingularDenominatorError,
)

TWO_PI = 2.0 * math.pi
U_MAX = TWO_PI

# tolerances
LOCUS_TOL = 1e-8
IDENTITY_TOL = 1e-10
DENOM_GUARD = 1e-14
CONTROL_SLACK = 1e-12
BALL_SLACK = 1e-9


class PlanarState(NamedTuple):
    y: float
    z: float


class PolarDiagnostics(NamedTuple):
    r: float
    theta: float
    r_dot: float
    dr_dot_dtheta: float


@dataclass(frozen=True)
class PhysicalParams:
    """Relaxation times (seconds) and maximum amplitude omega_max/(2 pi) in Hz."""

    t1: float
    t2: float
    omega_max_hz: float

    def __post_init__(self) -> None:
        for name in ("t1", "t2", "omega_max_hz"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)) or value <= 0:
                raise InvalidParamsError(f"{name} must be a positive finite number, got {value!r}")
        if self.t2 > 2.0 * self.t1:
            raise InvalidParamsError(
                f"t2 = {self.t2} exceeds 2*t1 = {2.0 * self.t1}; relaxation would not be positive"
            )

    def with_omega(self, omega_max_hz: float) -> "PhysicalParams":
        return PhysicalParams(self.t1, self.t2, omega_max_hz)


@dataclass(frozen=True)
class NormalizedParams:
    """Dimensionless rates of the planar model.

    ``omega_max_hz`` is carried along only for converting durations back to
    seconds; it is ``None`` for synthetic parameter sets built directly from
    rates (e.g. the dissipation-free test systems).
    """

    big_gamma: float
    small_gamma: float
    u_max: float = U_MAX
    omega_max_hz: float | None = None

    def __post_init__(self) -> None:
        if self.big_gamma < 0 or self.small_gamma < 0:
            raise InvalidParamsError("relaxation rates must be non-negative")
        if not math.isclose(self.u_max, U_MAX, rel_tol=0, abs_tol=1e-15):
            raise InvalidParamsError("the normalized control bound is fixed at 2*pi")

    @property
    def degenerate(self) -> bool:
        return self.big_gamma == self.small_gamma

    def to_tau(self, seconds: float) -> float:
        """Convert lab time to normalized time (tau = f_max * t)."""
        return seconds * self._hz()

    def to_seconds(self, tau: float) -> float:
        return tau / self._hz()

    def _hz(self) -> float:
        if self.omega_max_hz is None:
            raise InvalidParamsError("no omega_max attached; time conversion unavailable")
        return self.omega_max_hz


def normalize(p: PhysicalParams) -> NormalizedParams:
    """Scale relaxation rates by the maximum nutation frequency.

    With omega_max = 2*pi*f the rates become ``Gamma = 2*pi/(omega_max*T2) =
    1/(f*T2)`` and ``gamma = 1/(f*T1)``.
    """
    if not isinstance(p, PhysicalParams):
        raise InvalidParamsError(f"expected PhysicalParams, got {type(p).__name__}")
    f = p.omega_max_hz
    return NormalizedParams(
        big_gamma=1.0 / (f * p.t2),
        small_gamma=1.0 / (f * p.t1),
        omega_max_hz=f,
    )


def drift_field(s: Sequence[float], n: NormalizedParams) -> np.ndarray:
    y, z = s
    return np.array([-n.big_gamma * y, n.small_gamma * (1.0 - z)])


def control_field(s: Sequence[float]) -> np.ndarray:
    y, z = s
    return np.array([-z, y])


def check_control(u: float, u_max: float = U_MAX) -> None:
    if abs(u) > u_max + CONTROL_SLACK:
        raise ControlBoundsError(f"|u| = {abs(u)!r} exceeds the bound {u_max!r}")


def rhs(s: Sequence[float], u: float, n: NormalizedParams) -> np.ndarray:
    """Velocity ``F0(s) + u*F1(s)`` of the planar system."""
    check_control(u, n.u_max)
    y, z = s
    return np.array([-n.big_gamma * y - u * z, n.small_gamma * (1.0 - z) + u * y])


def derived_field(s: Sequence[float], n: NormalizedParams) -> np.ndarray:
    """Field V with ``d(phi)/dtau = P . V`` along any extremal."""
    y, z = s
    g, G = n.small_gamma, n.big_gamma
    return np.array([-g + (g - G) * z, (g - G) * y])


def det_f1_v(y, z, n: NormalizedParams):
    """det(F1, V) = y*(gamma - 2*(gamma - Gamma)*z); array friendly."""
    g, G = n.small_gamma, n.big_gamma
    return y * (g - 2.0 * (g - G) * z)


def det_f0_f1(y, z, n: NormalizedParams):
    """det(F0, F1); vanishes where the drift is parallel to the control field."""
    return -n.big_gamma * y * y + n.small_gamma * z * (1.0 - z)


@dataclass(frozen=True)
class SingularLocus:
    """Both branches of S = {det(F1, V) = 0}.

    The vertical branch ``y = 0`` always exists.  ``z0`` is the ordinate of
    the horizontal branch, ``None`` when T1 == T2 (``degenerate`` is set).
    """

    z0: float | None
    degenerate: bool = False
    vertical_y: float = 0.0

    def on_vertical(self, s: Sequence[float], tol: float = LOCUS_TOL) -> bool:
        return abs(s[0]) <= tol

    def on_horizontal(self, s: Sequence[float], tol: float = LOCUS_TOL) -> bool:
        return self.z0 is not None and abs(s[1] - self.z0) <= tol

    def contains(self, s: Sequence[float], tol: float = LOCUS_TOL) -> bool:
        return self.on_vertical(s, tol) or self.on_horizontal(s, tol)


def singular_locus(n: NormalizedParams) -> SingularLocus:
    if n.degenerate:
        return SingularLocus(z0=None, degenerate=True)
    return SingularLocus(z0=-n.small_gamma / (2.0 * (n.big_gamma - n.small_gamma)))


def horizontal_ordinate(n: NormalizedParams) -> float:
    z0 = singular_locus(n).z0
    if z0 is None:
        raise DegenerateRelaxationError("T1 == T2: no horizontal singular line")
    return z0


def singular_control(s: Sequence[float], n: NormalizedParams) -> float:
    """Feedback control that keeps an extremal on the singular locus.

    The quotient is evaluated wherever its denominator is nonzero, including
    off the locus (used by diagnostics); only on S does it carry PMP meaning.
    On the vertical branch the numerator vanishes and the result is 0.
    """
    y, z = s
    if y == 0.0:
        return 0.0
    g, G = n.small_gamma, n.big_gamma
    z0 = horizontal_ordinate(n)
    num = -y * g * (G - 2.0 * g) - 2.0 * y * z0 * (g * g - G * G)
    den = 2.0 * (G - g) * (y * y - z0 * z0) - g * z0
    if abs(den) < DENOM_GUARD:
        raise SingularDenominatorError(f"singular control denominator {den!r} at y={y!r}")
    return num / den


def admissibility_bound(n: NormalizedParams) -> float:
    """Smallest |y| on the horizontal line where |u_s| <= 2*pi."""
    if n.degenerate:
        raise DegenerateRelaxationError("T1 == T2: no horizontal singular line")
    g, G = n.small_gamma, n.big_gamma
    return abs(g * (g - 2.0 * G)) / (TWO_PI * (2.0 * G - 2.0 * g))


def polar_diagnostics(s: Sequence[float], n: NormalizedParams) -> PolarDiagnostics:
    y, z = s
    r = math.hypot(y, z)
    if r < DENOM_GUARD:
        raise OriginUndefinedError("polar angle undefined at the origin")
    theta = math.atan2(z, y)
    g, G = n.small_gamma, n.big_gamma
    c, sn = y / r, z / r
    r_dot = -(G * c * c + g * sn * sn) * r + g * sn
    dr_dot = -(g - G) * r * 2.0 * sn * c + g * c
    return PolarDiagnostics(r, theta, r_dot, dr_dot)


def dr_dot_dtheta(y, z, n: NormalizedParams):
    """Array form of d(r_dot)/d(theta); NaN at the origin."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.hypot(y, z)
    g, G = n.small_gamma, n.big_gamma
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (-2.0 * (g - G) * y * z + g * y) / r
    return np.where(r < DENOM_GUARD, np.nan, out)


def d2r_dot_dtheta2(s: Sequence[float], n: NormalizedParams) -> float:
    """Second angular derivative of r_dot at fixed radius."""
    y, z = s
    r = math.hypot(y, z)
    if r < DENOM_GUARD:
        raise OriginUndefinedError("polar angle undefined at the origin")
    g, G = n.small_gamma, n.big_gamma
    return (-2.0 * (g - G) * (y * y - z * z) - g * z) / r


def mirror(s: Sequence[float]) -> PlanarState:
    """Reflection y -> -y, the symmetry that also flips the control sign."""
    return PlanarState(-s[0], s[1])
