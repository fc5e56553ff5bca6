"""Configurations of N bodies in R^d and the geometry of the collision set.

All norms and inner products are the mass-weighted ones,
``||x|| = (sum_i m_i |x_i|^2)^(1/2)``; with unit masses they are Euclidean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import InputDomainError

UNIT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Configuration:
    """Positions of N bodies in R^d together with their masses."""

    bodies: np.ndarray
    masses: np.ndarray = field(default=None)

    def __post_init__(self):
        bodies = np.array(self.bodies, dtype=float)
        if bodies.ndim != 2:
            raise InputDomainError("bodies must be an (N, d) array")
        n, d = bodies.shape
        if n < 2 or d < 2:
            raise InputDomainError(f"need N >= 2 and d >= 2, got N={n}, d={d}")
        masses = np.ones(n) if self.masses is None else np.array(self.masses, dtype=float)
        if masses.shape != (n,):
            raise InputDomainError("masses must have one entry per body")
        if not np.all(masses > 0) or not np.all(np.isfinite(masses)):
            raise InputDomainError("masses must be strictly positive")
        bodies.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "bodies", bodies)
        object.__setattr__(self, "masses", masses)

    @property
    def N(self) -> int:
        return self.bodies.shape[0]

    @property
    def d(self) -> int:
        return self.bodies.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.bodies.reshape(-1)

    @property
    def unit_masses(self) -> bool:
        return bool(np.all(self.masses == 1.0))

    def weights(self) -> np.ndarray:
        """Per-coordinate weights of the flat vector (each mass repeated d times)."""
        return np.repeat(self.masses, self.d)

    def with_bodies(self, bodies) -> "Configuration":
        return Configuration(np.reshape(bodies, (self.N, self.d)), self.masses)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Configuration):
            if other.bodies.shape != self.bodies.shape or not np.array_equal(other.masses, self.masses):
                raise InputDomainError("configurations have different shapes or masses")
            return other.bodies
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return self.with_bodies(self.bodies + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_bodies(self.bodies - self._coerce(other))

    def __rsub__(self, other):
        return self.with_bodies(self._coerce(other) - self.bodies)

    def __mul__(self, scalar):
        return self.with_bodies(self.bodies * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_bodies(self.bodies / float(scalar))

    def __neg__(self):
        return self.with_bodies(-self.bodies)

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return np.array_equal(self.bodies, other.bodies) and np.array_equal(self.masses, other.masses)

    def __hash__(self):
        return hash((self.bodies.tobytes(), self.masses.tobytes()))

    def __repr__(self):
        return f"Configuration(bodies={self.bodies.tolist()}, masses={self.masses.tolist()})"

    def to_dict(self) -> dict:
        return {"d": self.d, "masses": self.masses.tolist(), "bodies": self.bodies.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Configuration":
        try:
            bodies = np.asarray(data["bodies"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputDomainError(f"configuration: bad or missing 'bodies' ({exc})") from None
        if "d" in data and bodies.ndim == 2 and bodies.shape[1] != int(data["d"]):
            raise InputDomainError("configuration: 'd' does not match body coordinates")
        return cls(bodies, data.get("masses"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Configuration":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Ray:
    """The open half ray ``origin + t * direction`` for t > 0."""

    origin: Configuration
    direction: Configuration

    def __post_init__(self):
        if abs(norm(self.direction) - 1.0) > UNIT_TOL:
            raise InputDomainError("ray direction must have unit weighted norm")

    def point(self, t: float) -> Configuration:
        return self.origin + t * self.direction


def inner(x: Configuration, y: Configuration) -> float:
    """Mass-weighted inner product <<x, y>>."""
    yb = x._coerce(y)
    return float(np.sum(x.masses[:, None] * x.bodies * yb))


def norm(x: Configuration) -> float:
    return math.sqrt(inner(x, x))


def pair_separations(bodies: np.ndarray) -> np.ndarray:
    """Pairwise distances |x_i - x_j|, i < j, along the last two axes (..., N, d)."""
    n = bodies.shape[-2]
    i, j = np.triu_indices(n, k=1)
    return np.linalg.norm(bodies[..., i, :] - bodies[..., j, :], axis=-1)


def min_separation(x: Configuration | np.ndarray) -> float:
    """The flat norm: smallest distance between two bodies (0 iff collision)."""
    bodies = x.bodies if isinstance(x, Configuration) else np.asarray(x)
    return float(np.min(pair_separations(bodies)))


def is_collision_free(x: Configuration) -> bool:
    return min_separation(x) > 0.0


def _require_unit(a: Configuration, name: str = "a"):
    if abs(norm(a) - 1.0) > UNIT_TOL:
        raise InputDomainError(f"{name} must have unit weighted norm, got {norm(a)!r}")


def angle_between(a: Configuration, b: Configuration) -> float:
    """Angle in [0, pi] between two nonzero configurations."""
    na, nb = norm(a), norm(b)
    if na == 0.0 or nb == 0.0:
        raise InputDomainError("angle undefined for a zero configuration")
    ua, ub = a / na, b / nb
    # 2*atan2(|u-v|, |u+v|) equals arccos(clamped cosine) but keeps precision near 0 and pi
    return 2.0 * math.atan2(norm(ua - ub), norm(ua + ub))


def base_point(x: Configuration, a: Configuration) -> Configuration:
    """Shift x far along a so that the forward cone around a avoids collisions."""
    _require_unit(a)
    af = min_separation(a)
    if af <= 0.0:
        raise InputDomainError("direction a has a collision")
    return x + (50.0 * (1.0 + norm(x)) / af) * a


@dataclass(frozen=True)
class Verdict:
    holds: bool
    checks: dict

    def __bool__(self):
        return self.holds


def separation_drift_check(a: Configuration, b: Configuration, delta: float) -> Verdict:
    """A configuration b close to a unit collision-free a keeps most of a's separation."""
    _require_unit(a)
    af = min_separation(a)
    if af <= 0.0:
        raise InputDomainError("a has a collision")
    if not 0.0 < delta < 0.2:
        raise InputDomainError(f"delta must lie in (0, 1/5), got {delta}")
    gap = norm(a - b)
    if gap > delta * af + UNIT_TOL:
        raise InputDomainError("|a - b| exceeds delta * a_flat")
    bf = min_separation(b)
    checks = {"b_flat": bf, "b_flat_bound": (1.0 - 2.0 * delta) * af,
              "b_flat_strict": af - 2.0 * gap}
    ok = bf >= checks["b_flat_bound"] - UNIT_TOL
    if abs(norm(b) - 1.0) <= UNIT_TOL:
        checks["cosine"] = inner(a, b)
        checks["cosine_bound"] = 1.0 - 2.0 * delta**2
        ok = ok and checks["cosine"] >= checks["cosine_bound"] - UNIT_TOL
    return Verdict(bool(ok), checks)


def cone_separation_check(x: Configuration, a: Configuration, b: Configuration,
                          s: float, t: float) -> Verdict:
    """Points x + s a + t b of the far cone stay at least (24/25) s a_flat from collisions."""
    _require_unit(a)
    _require_unit(b, "b")
    af = min_separation(a)
    if af <= 0.0:
        raise InputDomainError("a has a collision")
    if norm(a - b) > af / 20.0 + UNIT_TOL:
        raise InputDomainError("b lies outside the cap |a - b| <= a_flat / 20")
    if s < 50.0 * (1.0 + norm(x)) / af * (1.0 - UNIT_TOL) or t < 0.0:
        raise InputDomainError("need s >= 50(1+|x|)/a_flat and t >= 0")
    near = min_separation(x + s * a)
    far = min_separation(x + s * a + t * b)
    floor = 24.0 / 25.0 * s * af
    scale = UNIT_TOL * max(1.0, s)
    ok = far >= near - scale and near >= floor - scale and floor >= 2.0 - scale
    return Verdict(bool(ok), {"cone": far, "base": near, "floor": floor})


def dist_to_ray(z: Configuration, ray: Ray) -> float:
    """Distance from z to the open ray; equal to the distance to its closure."""
    rel = z - ray.origin
    t = max(0.0, inner(rel, ray.direction))
    return norm(rel - t * ray.direction)


def segment_min_separation(x: Configuration, y: Configuration) -> tuple[float, float, tuple[int, int]]:
    """Closest approach of any pair along the straight segment from x to y.

    Returns ``(separation, s, pair)`` where s in [0, 1] locates the closest point.
    """
    best = (math.inf, 0.0, (0, 1))
    for i, j in combinations(range(x.N), 2):
        p = x.bodies[i] - x.bodies[j]
        q = y.bodies[i] - y.bodies[j] - p
        qq = float(q @ q)
        s = 0.0 if qq == 0.0 else min(1.0, max(0.0, -float(p @ q) / qq))
        sep = float(np.linalg.norm(p + s * q))
        if sep < best[0]:
            best = (sep, s, (i, j))
    return best
