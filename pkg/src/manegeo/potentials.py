"""Pairwise potential families F = sum_{i<j} F_ij and their derivatives.

Every kind is radial: ``F_ij = c_ij * phi(|x_i - x_j|)`` where ``c_ij`` is
``m_i m_j`` for the mass-scaled kinds and 1 otherwise. Kinds that can turn
negative far from collisions are clamped at zero inside action functionals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .config import Configuration
from .envelopes import (ZERO_ENVELOPE, Envelope, PowerEnvelope, SumEnvelope,
                        YukawaEnvelope, envelope_from_dict)
from .errors import InputDomainError, SingularPotentialError

SINGULAR_CUTOFF = 1e-9


class PairKind:
    """Radial profile phi(r) with first and second derivatives."""

    name = "pair"
    mass_scaled = True
    can_be_negative = False

    def phi(self, r):
        raise NotImplementedError

    def dphi(self, r):
        raise NotImplementedError

    def d2phi(self, r):
        raise NotImplementedError

    def envelope(self, total_mass: float) -> Envelope:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def to_spec(self):
        p = self.params()
        return {self.name: p} if p else self.name


@dataclass(frozen=True)
class Zero(PairKind):
    name = "zero"

    def phi(self, r):
        return np.zeros_like(r)

    dphi = d2phi = phi

    def envelope(self, total_mass):
        return ZERO_ENVELOPE


@dataclass(frozen=True)
class Newtonian(PairKind):
    name = "newtonian"

    def phi(self, r):
        return 1.0 / r

    def dphi(self, r):
        return -1.0 / r**2

    def d2phi(self, r):
        return 2.0 / r**3

    def envelope(self, total_mass):
        return PowerEnvelope(((total_mass**2, 1.0),))


@dataclass(frozen=True)
class Homogeneous(PairKind):
    alpha: float
    name = "homogeneous"

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputDomainError("homogeneous potential needs alpha > 0")

    def phi(self, r):
        return r ** (-self.alpha)

    def dphi(self, r):
        return -self.alpha * r ** (-self.alpha - 1.0)

    def d2phi(self, r):
        return self.alpha * (self.alpha + 1.0) * r ** (-self.alpha - 2.0)

    def envelope(self, total_mass):
        return PowerEnvelope(((total_mass**2, self.alpha),))

    def params(self):
        return {"alpha": self.alpha}


@dataclass(frozen=True)
class QuasiHomogeneous(PairKind):
    alpha: float
    beta: float
    delta: float
    name = "quasi_homogeneous"

    def __post_init__(self):
        if not (self.alpha > self.beta > 0 and self.delta > 0):
            raise InputDomainError("quasi-homogeneous potential needs alpha > beta > 0 and delta > 0")

    def phi(self, r):
        return r ** (-self.alpha) + self.delta * r ** (-self.beta)

    def dphi(self, r):
        return -self.alpha * r ** (-self.alpha - 1.0) - self.delta * self.beta * r ** (-self.beta - 1.0)

    def d2phi(self, r):
        a, b = self.alpha, self.beta
        return a * (a + 1.0) * r ** (-a - 2.0) + self.delta * b * (b + 1.0) * r ** (-b - 2.0)

    def envelope(self, total_mass):
        m2 = total_mass**2
        return PowerEnvelope(((m2, self.alpha), (m2 * self.delta, self.beta)))

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta, "delta": self.delta}


@dataclass(frozen=True)
class LennardJones(PairKind):
    A: float
    B: float
    name = "lennard_jones"
    mass_scaled = False
    can_be_negative = True

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise InputDomainError("Lennard-Jones potential needs A, B > 0")

    def phi(self, r):
        return self.A * r**-12 - self.B * r**-6

    def dphi(self, r):
        return -12.0 * self.A * r**-13 + 6.0 * self.B * r**-7

    def d2phi(self, r):
        return 156.0 * self.A * r**-14 - 42.0 * self.B * r**-8

    def envelope(self, total_mass):
        return PowerEnvelope(((self.A, 12.0),))

    def params(self):
        return {"A": self.A, "B": self.B}


@dataclass(frozen=True)
class SeeligerYukawa(PairKind):
    A: float
    B: float
    name = "seeliger_yukawa"
    mass_scaled = False

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise InputDomainError("Seeliger-Yukawa potential needs A, B > 0")

    def phi(self, r):
        return self.A * np.exp(-self.B * r) / r

    def dphi(self, r):
        return -self.A * np.exp(-self.B * r) * (self.B * r + 1.0) / r**2

    def d2phi(self, r):
        b = self.B
        return self.A * np.exp(-b * r) * (b * b * r * r + 2.0 * b * r + 2.0) / r**3

    def envelope(self, total_mass):
        return YukawaEnvelope(self.A, self.B)

    def params(self):
        return {"A": self.A, "B": self.B}


@dataclass(frozen=True)
class MucketTreder(PairKind):
    A: float
    B: float
    name = "mucket_treder"
    mass_scaled = False
    can_be_negative = True

    def __post_init__(self):
        if not (self.A > 0 and self.B > 0):
            raise InputDomainError("Mucket-Treder potential needs A, B > 0")

    def phi(self, r):
        return (self.A - self.B * np.log(r)) / r

    def dphi(self, r):
        return (self.B * np.log(r) - self.A - self.B) / r**2

    def d2phi(self, r):
        return (2.0 * self.A + 3.0 * self.B - 2.0 * self.B * np.log(r)) / r**3

    def envelope(self, total_mass):
        # (A - B log s)/s <= A/s once s >= 1
        return PowerEnvelope(((self.A, 1.0),))

    def params(self):
        return {"A": self.A, "B": self.B}


@dataclass(frozen=True)
class Logarithmic(PairKind):
    name = "logarithmic"
    can_be_negative = True

    def phi(self, r):
        return -np.log(r)

    def dphi(self, r):
        return -1.0 / r

    def d2phi(self, r):
        return 1.0 / r**2

    def envelope(self, total_mass):
        # the clamped profile vanishes for r >= 1
        return ZERO_ENVELOPE


_KINDS = {
    "zero": Zero,
    "newtonian": Newtonian,
    "homogeneous": Homogeneous,
    "quasi_homogeneous": QuasiHomogeneous,
    "lennard_jones": LennardJones,
    "seeliger_yukawa": SeeligerYukawa,
    "mucket_treder": MucketTreder,
    "logarithmic": Logarithmic,
}


def kind_from_spec(spec) -> PairKind:
    """Parse ``"newtonian"`` or ``{"homogeneous": {"alpha": 2}}`` style descriptions."""
    if isinstance(spec, PairKind):
        return spec
    if isinstance(spec, str):
        name, params = spec, {}
    elif isinstance(spec, dict) and len(spec) == 1:
        (name, params), = spec.items()
        params = params or {}
    else:
        raise InputDomainError(f"unrecognised potential kind: {spec!r}")
    if name not in _KINDS:
        raise InputDomainError(f"unknown potential kind {name!r}")
    try:
        return _KINDS[name](**params)
    except TypeError as exc:
        raise InputDomainError(f"bad parameters for {name}: {exc}") from None


@dataclass(frozen=True)
class PotentialSpec:
    """A pairwise potential on configurations with masses, plus its envelope.

    ``kind`` applies to every pair unless ``pair_kinds`` overrides a pair.
    ``envelope=None`` selects the canonical envelope of the kinds in use.
    """

    kind: PairKind = field(default_factory=Newtonian)
    masses: tuple = (1.0, 1.0)
    envelope: Envelope | None = None
    pair_kinds: tuple = ()
    near_region_width: float = 2.0

    def __post_init__(self):
        masses = tuple(float(m) for m in self.masses)
        if len(masses) < 2 or any(m <= 0 for m in masses):
            raise InputDomainError("need at least two positive masses")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "kind", kind_from_spec(self.kind))
        overrides = tuple((int(i), int(j), kind_from_spec(k)) for i, j, k in self.pair_kinds)
        object.__setattr__(self, "pair_kinds", overrides)
        table = {}
        for i, j in combinations(range(len(masses)), 2):
            table[(i, j)] = self.kind
        for i, j, k in overrides:
            if (min(i, j), max(i, j)) not in table:
                raise InputDomainError(f"pair ({i}, {j}) out of range")
            table[(min(i, j), max(i, j))] = k
        object.__setattr__(self, "_table", table)
        if self.envelope is None:
            object.__setattr__(self, "envelope", self.canonical_envelope())

    @property
    def N(self) -> int:
        return len(self.masses)

    @property
    def is_zero(self) -> bool:
        return all(isinstance(k, Zero) for k in self._table.values())

    def pairs(self):
        """Iterate over ``(i, j, kind, coefficient)``."""
        for (i, j), k in self._table.items():
            c = self.masses[i] * self.masses[j] if k.mass_scaled else 1.0
            yield i, j, k, c

    def canonical_envelope(self) -> Envelope:
        total = sum(self.masses)
        parts = []
        seen = set()
        for _, _, k, _ in self.pairs():
            if k in seen:
                continue
            seen.add(k)
            env = k.envelope(total)
            if env != ZERO_ENVELOPE:
                parts.append(env)
        if not parts:
            return ZERO_ENVELOPE
        return parts[0] if len(parts) == 1 else SumEnvelope(tuple(parts))

    def for_config(self, x: Configuration) -> "PotentialSpec":
        if x.N != self.N or not np.allclose(x.masses, self.masses):
            raise InputDomainError("configuration masses do not match the potential spec")
        return self

    # -- evaluation on raw arrays of shape (..., N, d) -------------------------

    def _pair_geometry(self, bodies, i, j):
        diff = bodies[..., i, :] - bodies[..., j, :]
        r = np.linalg.norm(diff, axis=-1)
        small = r < SINGULAR_CUTOFF
        if np.any(small):
            raise SingularPotentialError((i, j), float(np.min(r)))
        return diff, r

    def values(self, bodies, clamp: bool = False) -> np.ndarray:
        bodies = np.asarray(bodies, dtype=float)
        total = np.zeros(bodies.shape[:-2])
        for i, j, k, c in self.pairs():
            if isinstance(k, Zero):
                continue
            _, r = self._pair_geometry(bodies, i, j)
            v = c * k.phi(r)
            if clamp and k.can_be_negative:
                v = np.maximum(v, 0.0)
            total = total + v
        return total

    def partials(self, bodies, clamp: bool = False) -> np.ndarray:
        """Euclidean partial derivatives dF/dx, same shape as ``bodies``."""
        bodies = np.asarray(bodies, dtype=float)
        out = np.zeros_like(bodies)
        for i, j, k, c in self.pairs():
            if isinstance(k, Zero):
                continue
            diff, r = self._pair_geometry(bodies, i, j)
            coef = c * k.dphi(r) / r
            if clamp and k.can_be_negative:
                coef = np.where(k.phi(r) > 0.0, coef, 0.0)
            g = coef[..., None] * diff
            out[..., i, :] += g
            out[..., j, :] -= g
        return out

    def hessians(self, bodies, clamp: bool = False) -> np.ndarray:
        """Euclidean Hessians, shape (..., N*d, N*d)."""
        bodies = np.asarray(bodies, dtype=float)
        lead = bodies.shape[:-2]
        n, d = bodies.shape[-2:]
        out = np.zeros(lead + (n * d, n * d))
        eye = np.eye(d)
        for i, j, k, c in self.pairs():
            if isinstance(k, Zero):
                continue
            diff, r = self._pair_geometry(bodies, i, j)
            u = diff / r[..., None]
            uu = u[..., :, None] * u[..., None, :]
            radial = c * k.d2phi(r)
            tangential = c * k.dphi(r) / r
            if clamp and k.can_be_negative:
                keep = k.phi(r) > 0.0
                radial = np.where(keep, radial, 0.0)
                tangential = np.where(keep, tangential, 0.0)
            block = radial[..., None, None] * uu + tangential[..., None, None] * (eye - uu)
            si, sj = slice(i * d, (i + 1) * d), slice(j * d, (j + 1) * d)
            out[..., si, si] += block
            out[..., sj, sj] += block
            out[..., si, sj] -= block
            out[..., sj, si] -= block
        return out

    def pair_values(self, r, clamp: bool = True) -> dict:
        """F_ij as a function of separation only, for envelope checks."""
        r = np.asarray(r, dtype=float)
        out = {}
        for i, j, k, c in self.pairs():
            v = c * k.phi(r)
            if clamp and k.can_be_negative:
                v = np.maximum(v, 0.0)
            out[(i, j)] = v
        return out

    def to_dict(self) -> dict:
        data = {"kind": self.kind.to_spec(), "envelope": self.envelope.to_dict()}
        if self.pair_kinds:
            data["pairs"] = [[i, j, k.to_spec()] for i, j, k in self.pair_kinds]
        return data

    @classmethod
    def from_dict(cls, data: dict, masses) -> "PotentialSpec":
        if not isinstance(data, dict) or "kind" not in data:
            raise InputDomainError("potential: missing 'kind'")
        env = data.get("envelope", "auto")
        envelope = None if env in (None, "auto") else envelope_from_dict(env)
        return cls(kind=kind_from_spec(data["kind"]), masses=tuple(masses), envelope=envelope,
                   pair_kinds=tuple(tuple(p) for p in data.get("pairs", ())))


def evaluate(F: PotentialSpec, x: Configuration, clamp: bool = False) -> float:
    """F(x); raises SingularPotentialError on (near) collisions."""
    F.for_config(x)
    return float(F.values(x.bodies, clamp=clamp))


def gradient(F: PotentialSpec, x: Configuration, clamp: bool = False) -> Configuration:
    """Gradient with respect to the mass scalar product, (1/m_i) dF/dx_i."""
    F.for_config(x)
    g = F.partials(x.bodies, clamp=clamp) / x.masses[:, None]
    return x.with_bodies(g)


def envelope_violations(F: PotentialSpec, separations) -> list[tuple[tuple[int, int], float, float, float]]:
    """Pairs and separations (>= the near-region width) where F_ij exceeds the envelope."""
    r = np.asarray(separations, dtype=float)
    r = r[r >= F.near_region_width]
    fr = np.asarray(F.envelope(r), dtype=float)
    bad = []
    for pair, v in F.pair_values(r).items():
        over = v > fr * (1.0 + 1e-12) + 1e-300
        for idx in np.nonzero(over)[0]:
            bad.append((pair, float(r[idx]), float(v[idx]), float(fr[idx])))
    return bad


def newtonian(masses=(1.0, 1.0)) -> PotentialSpec:
    return PotentialSpec(Newtonian(), masses=tuple(masses))


def zero(masses=(1.0, 1.0)) -> PotentialSpec:
    return PotentialSpec(Zero(), masses=tuple(masses))


def total_mass(F: PotentialSpec) -> float:
    return math.fsum(F.masses)
