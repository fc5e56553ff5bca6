"""Estimates of the action potential and the analytic bounds that bracket it.

The solver only ever produces an upper estimate (the action of one path);
the certificates here make the one-sided nature explicit and compare it
against the straight-segment and far-field bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .config import (UNIT_TOL, Configuration, _require_unit, min_separation, norm,
                     pair_separations, segment_min_separation)
from .envelopes import QUAD_RTOL
from .errors import BoundUnavailableError, InputDomainError, QuadratureError
from .potentials import PotentialSpec
from .solver import GeodesicResult, SolveOptions, solve_geodesic

CAP = 1.0 / 20.0


@dataclass(frozen=True)
class ManeEstimate:
    upper: float
    analytic_lower: float
    tolerance: float = 0.0
    segment_bound: float | None = None
    far_field_bound: float | None = None
    satisfied: dict = field(default_factory=dict)
    result: GeodesicResult | None = None

    def to_dict(self) -> dict:
        out = {"upper": self.upper, "analytic_lower": self.analytic_lower}
        if self.segment_bound is not None:
            out["segment_bound"] = self.segment_bound
        if self.far_field_bound is not None:
            out["far_field_bound"] = self.far_field_bound
        out["satisfied"] = dict(self.satisfied)
        return out


def line_integral(F: PotentialSpec, start: np.ndarray, direction: np.ndarray, length: float,
                  breaks=()) -> float:
    """Integral of the clamped potential along start + s*direction for s in [0, length].

    ``direction`` has unit weighted norm so s is arclength. The range is cut at
    dyadic points and at ``breaks`` so that each piece is resolved by quad.
    """
    if length <= 0:
        return 0.0
    cuts = {0.0, float(length)}
    c = min(1.0, length)
    while c < length:
        cuts.add(c)
        c *= 2.0
    cuts.update(float(b) for b in breaks if 0.0 < b < length)
    cuts = sorted(cuts)

    def integrand(s):
        return float(F.values(start + s * direction, clamp=True))

    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        val, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=200)
        if not math.isfinite(val) or err > max(100 * QUAD_RTOL * abs(val), 1e-300):
            raise QuadratureError(f"potential quadrature failed on [{lo}, {hi}] (err={err:.3g})")
        total += val
    return total


def _closest_points(x: Configuration, direction: np.ndarray, length: float):
    """Arclength positions of each pair's closest approach along a ray or segment."""
    out = []
    for i in range(x.N):
        for j in range(i + 1, x.N):
            p = x.bodies[i] - x.bodies[j]
            q = direction[i] - direction[j]
            qq = float(q @ q)
            if qq > 0:
                s = -float(p @ q) / qq
                if 0.0 < s < length:
                    out.append(s)
    return out


def segment_upper_bound(x: Configuration, y: Configuration, F: PotentialSpec, lam: float) -> float:
    """Action of the straight segment at constant speed sqrt(2 lambda).

    ``sqrt(2 lam) |y - x| + (1/sqrt(2 lam)) * integral of F along [x, y]``.
    """
    if not lam > 0:
        raise InputDomainError("energy constant must be positive")
    length = norm(y - x)
    if length == 0.0:
        return 0.0
    sep, _, pair = segment_min_separation(x, y)
    if sep <= 0.0:
        raise BoundUnavailableError(f"segment meets the collision set (pair {pair})")
    u = (y.bodies - x.bodies) / length
    try:
        integral = line_integral(F, x.bodies, u, length, _closest_points(x, u, length))
    except (QuadratureError, ArithmeticError) as exc:
        raise BoundUnavailableError(f"potential not integrable along the segment: {exc}") from None
    r = math.sqrt(2.0 * lam)
    return r * length + integral / r


def _tolerance(result: GeodesicResult, opts: SolveOptions) -> float:
    value = result.action.value
    return result.action.quadrature_error_estimate + 10.0 * opts.optimizer_tolerance * value


def mane_potential(x: Configuration, y: Configuration, F: PotentialSpec, lam: float,
                   opts: SolveOptions | None = None) -> ManeEstimate:
    """Upper estimate of the action potential from x to y, with its certificates."""
    opts = opts or SolveOptions()
    if not lam > 0:
        raise InputDomainError(f"energy constant must be positive, got {lam}")
    if x == y:
        return ManeEstimate(0.0, 0.0, satisfied={"analytic_lower": True})
    lower = math.sqrt(2.0 * lam) * norm(y - x)
    result = solve_geodesic(x, y, F, lam, opts)
    upper = result.action.value
    tol = _tolerance(result, opts)
    satisfied = {"analytic_lower": bool(lower <= upper + tol)}
    try:
        seg = segment_upper_bound(x, y, F, lam)
    except BoundUnavailableError:
        seg = None
    if seg is not None:
        satisfied["segment_bound"] = bool(upper <= seg + tol + QUAD_RTOL * seg)
    return ManeEstimate(upper, lower, tol, seg, None, satisfied, result)


def envelope_integral(F: PotentialSpec, lo: float, hi: float) -> float:
    return F.envelope.integral(lo, hi) if hi > lo else 0.0


def _check_far_field(x, a, b, s, T):
    _require_unit(a)
    _require_unit(b, "b")
    af = min_separation(a)
    if af <= 0.0:
        raise InputDomainError("a has a collision")
    if norm(a - b) > CAP * af + UNIT_TOL:
        raise InputDomainError("|a - b| exceeds a_flat / 20")
    if s < 50.0 * (1.0 + norm(x)) / af * (1.0 - UNIT_TOL):
        raise InputDomainError("s must be at least 50 (1 + |x|) / a_flat")
    if T < 0:
        raise InputDomainError("T must be nonnegative")
    return af


def far_field_upper_bound(x: Configuration, a: Configuration, s: float, b: Configuration, T: float,
                          F: PotentialSpec, lam: float, opts: SolveOptions | None = None,
                          mane_upper: float | None = None) -> float:
    """Length bound for a geodesic from x to x + s a + T b.

    ``T + m(x, x + s a)/sqrt(2 lam) + N^2/(lam a_flat) * integral of f from
    (x + s a)_flat to 2T + 2|x + s a|``, with the action potential replaced by
    its computed upper estimate (which can only enlarge the bound).
    """
    af = _check_far_field(x, a, b, s, T)
    z = x + s * a
    if mane_upper is None:
        mane_upper = mane_potential(x, z, F, lam, opts).upper
    coeff = F.N**2 / (lam * af)
    return T + mane_upper / math.sqrt(2.0 * lam) + coeff * envelope_integral(
        F, min_separation(z), 2.0 * T + 2.0 * norm(z))


@dataclass(frozen=True)
class FarFieldCertificate:
    bound: float
    length: float
    T: float
    tolerance: float
    passed: bool
    result: GeodesicResult | None = None


def far_field_certificate(x, a, s, b, T, F, lam, opts: SolveOptions | None = None
                          ) -> FarFieldCertificate:
    """Solve x -> x + s a + T b and compare its length with the far-field bound."""
    opts = opts or SolveOptions()
    bound = far_field_upper_bound(x, a, s, b, T, F, lam, opts)
    y = x + s * a + T * b
    result = solve_geodesic(x, y, F, lam, opts)
    length = result.path.length()
    tol = _tolerance(result, opts) / math.sqrt(2.0 * lam) + QUAD_RTOL * bound
    ok = T <= length + tol and length <= bound + tol
    return FarFieldCertificate(bound, length, T, tol, bool(ok), result)


# -- integrals of F along far rays ----------------------------------------------------


def max_pair_angle(z: Configuration, b: Configuration) -> float:
    """Largest angle between b_i - b_j and z_i - z_j over pairs."""
    worst = 0.0
    for i in range(z.N):
        for j in range(i + 1, z.N):
            u = b.bodies[i] - b.bodies[j]
            v = z.bodies[i] - z.bodies[j]
            nu, nv = np.linalg.norm(u), np.linalg.norm(v)
            if nu == 0 or nv == 0:
                return math.pi
            uu, vv = u / nu, v / nv
            worst = max(worst, 2.0 * math.atan2(np.linalg.norm(uu - vv), np.linalg.norm(uu + vv)))
    return worst


@dataclass(frozen=True)
class RayIntegralCheck:
    lhs: float
    rhs: float
    theta: float
    passed: bool


def ray_integral_bound(z: Configuration, b: Configuration, T: float, F: PotentialSpec,
                       theta: float | None = None) -> RayIntegralCheck:
    """Compare the integral of F over z + s b, s in [0, T], with the envelope bound.

    The bound is ``N^2 / (2 cos theta) / b_flat * integral of f from z_flat to
    2T + 2|z|``, valid when every pair of z opens at most theta from b's pair.
    """
    _require_unit(b, "b")
    bf = min_separation(b)
    if bf <= 0.0:
        raise InputDomainError("b has a collision")
    if min_separation(z) < 2.0:
        raise InputDomainError("need z_flat >= 2")
    worst = max_pair_angle(z, b)
    theta = worst if theta is None else theta
    if worst > theta + UNIT_TOL or not theta < math.pi / 2:
        raise BoundUnavailableError("pair angles exceed theta or theta >= pi/2")
    lhs = line_integral(F, z.bodies, b.bodies, T)
    rhs = F.N**2 / (2.0 * math.cos(theta)) / bf * envelope_integral(F, min_separation(z), 2.0 * T + 2.0 * norm(z))
    return RayIntegralCheck(lhs, rhs, theta, bool(lhs <= rhs * (1.0 + 10 * QUAD_RTOL)))


def cone_ray_integral_bound(z: Configuration, a: Configuration, b: Configuration, T: float,
                            F: PotentialSpec) -> RayIntegralCheck:
    """The same integral against the uniform constant 2 N^2 / a_flat.

    Requires ``|z/|z| - a| <= a_flat/20`` and ``|a - b| <= a_flat/20``.
    """
    _require_unit(a)
    af = min_separation(a)
    if af <= 0.0:
        raise InputDomainError("a has a collision")
    if norm(z / norm(z) - a) > CAP * af + UNIT_TOL or norm(a - b) > CAP * af + UNIT_TOL:
        raise InputDomainError("z direction or b outside the a_flat/20 cap around a")
    if min_separation(z) < 2.0:
        raise InputDomainError("need z_flat >= 2")
    lhs = line_integral(F, z.bodies, b.bodies, T)
    rhs = 2.0 * F.N**2 / af * envelope_integral(F, min_separation(z), 2.0 * T + 2.0 * norm(z))
    return RayIntegralCheck(lhs, rhs, math.pi / 3, bool(lhs <= rhs * (1.0 + 10 * QUAD_RTOL)))
