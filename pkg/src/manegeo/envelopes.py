"""Radial far-field majorants f of the pair potentials and their dyadic series."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InputDomainError, QuadratureError

QUAD_RTOL = 1e-10


def _quad_log(func, lo: float, hi: float, rtol: float = QUAD_RTOL) -> float:
    """Integrate func over [lo, hi] with the substitution s = e^u, block by block."""
    if hi <= lo:
        return 0.0
    # split into dyadic blocks so that each piece spans at most a factor 2
    edges = [lo]
    while edges[-1] * 2.0 < hi:
        edges.append(edges[-1] * 2.0)
    edges.append(hi)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(lambda u: func(math.exp(u)) * math.exp(u),
                                  math.log(a), math.log(b), epsabs=0.0, epsrel=rtol, limit=200)
        if not math.isfinite(val) or err > max(rtol * abs(val) * 10, 1e-300):
            raise QuadratureError(f"envelope quadrature failed on [{a}, {b}] (err={err:.3g})")
        total += val
    return total


class Envelope:
    """A nonnegative continuous function on (0, inf) with an integral method."""

    closed_form = False

    def __call__(self, s):
        raise NotImplementedError

    def integral(self, lo: float, hi: float) -> float:
        return self.numeric_integral(lo, hi)

    def numeric_integral(self, lo: float, hi: float) -> float:
        if lo <= 0:
            raise InputDomainError("envelope integrals need a positive lower limit")
        return _quad_log(lambda s: float(self(s)), lo, hi)

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class PowerEnvelope(Envelope):
    """f(s) = sum_k c_k s^(-p_k); the empty sum is the zero envelope."""

    terms: tuple = ()
    closed_form = True

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c, p in self.terms:
            out = out + c * s ** (-p)
        return out if out.ndim else float(out)

    def integral(self, lo, hi):
        if hi <= lo:
            return 0.0
        total = 0.0
        for c, p in self.terms:
            if p == 1.0:
                total += c * math.log(hi / lo)
            else:
                total += c * (hi ** (1.0 - p) - lo ** (1.0 - p)) / (1.0 - p)
        return total

    def to_dict(self):
        return {"power": [list(t) for t in self.terms]}


@dataclass(frozen=True)
class YukawaEnvelope(Envelope):
    """f(s) = A exp(-B s) / s."""

    A: float
    B: float
    closed_form = True

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = self.A * np.exp(-self.B * s) / s
        return out if out.ndim else float(out)

    def integral(self, lo, hi):
        if hi <= lo:
            return 0.0
        return self.A * float(special.exp1(self.B * lo) - special.exp1(self.B * hi))

    def to_dict(self):
        return {"yukawa": {"A": self.A, "B": self.B}}


@dataclass(frozen=True)
class TableEnvelope(Envelope):
    """Piecewise-linear interpolation of (s, f(s)) samples.

    Constant before the first abscissa; beyond the last one the envelope decays
    as ``f_last * s_last / s``.
    """

    points: tuple

    def __post_init__(self):
        pts = tuple((float(s), float(v)) for s, v in self.points)
        if len(pts) < 1 or any(s <= 0 or v < 0 for s, v in pts):
            raise InputDomainError("envelope table needs positive abscissae and nonnegative values")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise InputDomainError("envelope table abscissae must increase")
        object.__setattr__(self, "points", pts)

    closed_form = True

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        xs = np.array([p[0] for p in self.points])
        ys = np.array([p[1] for p in self.points])
        out = np.interp(s, xs, ys)
        out = np.where(s > xs[-1], ys[-1] * xs[-1] / np.maximum(s, xs[-1]), out)
        return out if out.ndim else float(out)

    def integral(self, lo, hi):
        if hi <= lo:
            return 0.0
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        total = 0.0
        a = lo
        if a < xs[0]:
            b = min(hi, xs[0])
            total += ys[0] * (b - a)
            a = b
        for (x0, y0), (x1, y1) in zip(self.points, self.points[1:]):
            lo_k, hi_k = max(a, x0), min(hi, x1)
            if hi_k > lo_k:
                fa = y0 + (y1 - y0) * (lo_k - x0) / (x1 - x0)
                fb = y0 + (y1 - y0) * (hi_k - x0) / (x1 - x0)
                total += 0.5 * (fa + fb) * (hi_k - lo_k)
        if hi > xs[-1]:
            total += ys[-1] * xs[-1] * math.log(hi / max(lo, xs[-1]))
        return total

    def to_dict(self):
        return {"table": [list(p) for p in self.points]}


@dataclass(frozen=True)
class SumEnvelope(Envelope):
    parts: tuple

    @property
    def closed_form(self):
        return all(p.closed_form for p in self.parts)

    def __call__(self, s):
        return sum(p(s) for p in self.parts)

    def integral(self, lo, hi):
        return sum(p.integral(lo, hi) for p in self.parts)

    def to_dict(self):
        return {"sum": [p.to_dict() for p in self.parts]}


class CallableEnvelope(Envelope):
    """Wrap an arbitrary function; integrals by adaptive quadrature."""

    def __init__(self, func):
        self.func = func

    def __call__(self, s):
        return self.func(s)

    def to_dict(self):
        return {"callable": getattr(self.func, "__name__", "f")}


ZERO_ENVELOPE = PowerEnvelope(())


def envelope_from_dict(data) -> Envelope:
    if "table" in data:
        return TableEnvelope(tuple(tuple(p) for p in data["table"]))
    if "power" in data:
        return PowerEnvelope(tuple((float(c), float(p)) for c, p in data["power"]))
    if "yukawa" in data:
        return YukawaEnvelope(float(data["yukawa"]["A"]), float(data["yukawa"]["B"]))
    if "sum" in data:
        return SumEnvelope(tuple(envelope_from_dict(p) for p in data["sum"]))
    raise InputDomainError(f"unknown envelope description: {data!r}")


def dyadic_term(f: Envelope, k: int, numeric: bool = False) -> float:
    """sqrt(2^-k * integral of f over [2^k, 2^(k+1)])."""
    lo, hi = 2.0**k, 2.0 ** (k + 1)
    val = f.numeric_integral(lo, hi) if numeric else f.integral(lo, hi)
    return math.sqrt(max(val, 0.0) * 2.0**-k)


def envelope_series_partial(f: Envelope, K: int, numeric: bool = False) -> float:
    """Partial sum over k = 1..K of the dyadic series that must converge for f."""
    if K < 1:
        raise InputDomainError("K must be at least 1")
    return math.fsum(dyadic_term(f, k, numeric) for k in range(1, K + 1))
