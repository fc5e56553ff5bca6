"""Discrete Lagrangian and Maupertuis actions on piecewise-linear paths.

Both functionals evaluate the potential at segment midpoints only, so a path
may start or end on a collision. Kinetic terms are exact for the
piecewise-linear interpolant. Potentials that can go negative are clamped at
zero inside the actions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .config import Configuration, pair_separations
from .errors import InputDomainError
from .potentials import PotentialSpec

STALL_RTOL = 1e-14


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Ordered nodes of a path, optionally with time stamps."""

    nodes: np.ndarray  # (M, N, d)
    masses: np.ndarray
    times: np.ndarray | None = None
    fixed_ends: tuple = (True, True)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 3:
            raise InputDomainError("nodes must have shape (M, N, d)")
        masses = np.array(self.masses, dtype=float)
        if masses.shape != (nodes.shape[1],):
            raise InputDomainError("one mass per body required")
        times = None
        if self.times is not None:
            times = np.array(self.times, dtype=float)
            if times.shape != (nodes.shape[0],):
                raise InputDomainError("one time stamp per node required")
            if np.any(np.diff(times) <= 0):
                raise InputDomainError("time stamps must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "times", times)

    @classmethod
    def from_configurations(cls, configs, times=None) -> "DiscretePath":
        configs = list(configs)
        return cls(np.stack([c.bodies for c in configs]), configs[0].masses, times)

    @property
    def M(self) -> int:
        return self.nodes.shape[0]

    @property
    def timed(self) -> bool:
        return self.times is not None

    @property
    def sigma(self) -> float:
        if self.times is None:
            raise InputDomainError("path carries no time stamps")
        return float(self.times[-1] - self.times[0])

    def node(self, k: int) -> Configuration:
        return Configuration(self.nodes[k], self.masses)

    @property
    def start(self) -> Configuration:
        return self.node(0)

    @property
    def end(self) -> Configuration:
        return self.node(-1)

    def segment_lengths(self) -> np.ndarray:
        """Weighted norms of consecutive differences."""
        diff = np.diff(self.nodes, axis=0)
        return np.sqrt(np.einsum("kid,i->k", diff**2, self.masses))

    def length(self) -> float:
        return float(np.sum(self.segment_lengths()))

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation of the node positions at time t."""
        if self.times is None:
            raise InputDomainError("path carries no time stamps")
        if t <= self.times[0]:
            return self.nodes[0].copy()
        if t >= self.times[-1]:
            return self.nodes[-1].copy()
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1.0 - w) * self.nodes[k] + w * self.nodes[k + 1]

    def at_many(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        flat = self.nodes.reshape(self.M, -1)
        out = np.empty((ts.size, flat.shape[1]))
        for c in range(flat.shape[1]):
            out[:, c] = np.interp(ts, self.times, flat[:, c])
        return out.reshape((ts.size,) + self.nodes.shape[1:])

    def arclength_to(self, t: float) -> float:
        """Euclidean (weighted) length of the path restricted to [t0, t]."""
        seg = self.segment_lengths()
        if t >= self.times[-1]:
            return float(seg.sum())
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return float(seg[:k].sum() + w * seg[k])

    def spatial(self) -> "DiscretePath":
        return replace(self, times=None)


@dataclass(frozen=True)
class ActionValue:
    value: float
    quadrature_error_estimate: float = 0.0
    raw: bool = True

    def __float__(self):
        return self.value


def _weighted_sq(diff, masses):
    return np.einsum("kid,i->k", diff**2, masses)


def _speed_factor(F: PotentialSpec, mids, lam: float) -> np.ndarray:
    """sqrt(2 F(mid) + 2 lambda) per segment."""
    return np.sqrt(2.0 * F.values(mids, clamp=True) + 2.0 * lam)


def _check_lambda(lam):
    if not lam > 0:
        raise InputDomainError(f"energy constant must be positive, got {lam}")


def lagrangian_action(path: DiscretePath, F: PotentialSpec, lam: float) -> ActionValue:
    """Sum of |dx|^2/(2 dt) + dt (F(mid) + lambda) over segments."""
    _check_lambda(lam)
    if not path.timed:
        raise InputDomainError("lagrangian action needs a timed path")
    dt = np.diff(path.times)
    kin = _weighted_sq(np.diff(path.nodes, axis=0), path.masses) / (2.0 * dt)
    pot = dt * (F.values(path.midpoints(), clamp=True) + lam)
    return ActionValue(math.fsum(kin) + math.fsum(pot))


def segment_action_density(path: DiscretePath, F: PotentialSpec, lam: float) -> np.ndarray:
    """Per-segment Maupertuis contributions |dx| sqrt(2F(mid) + 2 lambda)."""
    return path.segment_lengths() * _speed_factor(F, path.midpoints(), lam)


def maupertuis_action(path: DiscretePath, F: PotentialSpec, lam: float) -> ActionValue:
    """Reparametrization-invariant action sum |dx| sqrt(2F(mid) + 2 lambda)."""
    _check_lambda(lam)
    return ActionValue(math.fsum(segment_action_density(path, F, lam)))


GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(16)
SEGMENT_NODES, SEGMENT_WEIGHTS = np.polynomial.legendre.leggauss(8)


def collision_end_segment(start, end, masses, F: PotentialSpec, lam: float) -> float:
    """Maupertuis contribution of a segment whose ``start`` is a collision.

    With s = u^2 the inverse-square-root singularity of sqrt(2F + 2 lambda)
    at the colliding end becomes smooth, so Gauss-Legendre in u converges fast.
    """
    start = np.asarray(start, dtype=float)
    delta = np.asarray(end, dtype=float) - start
    length = math.sqrt(float(np.sum(masses[:, None] * delta**2)))
    u = 0.5 * (GAUSS_NODES + 1.0)
    pts = start + (u**2)[:, None, None] * delta
    vals = np.sqrt(2.0 * F.values(pts, clamp=True) + 2.0 * lam) * 2.0 * u
    return length * 0.5 * math.fsum(GAUSS_WEIGHTS * vals)


def polyline_segment_actions(path: DiscretePath, F: PotentialSpec, lam: float) -> np.ndarray:
    """Maupertuis action of each straight segment of the interpolant.

    Eight-point Gauss-Legendre per segment; a segment that ends on a collision
    uses the substitution rule of :func:`collision_end_segment`. Unlike the
    midpoint sum, the total is the action of an actual path, hence an upper
    estimate of the action potential between the endpoints.
    """
    _check_lambda(lam)
    u = 0.5 * (SEGMENT_NODES + 1.0)
    a, b = path.nodes[:-1], path.nodes[1:]
    pts = a[:, None] + u[None, :, None, None] * (b - a)[:, None]
    speed = np.sqrt(2.0 * F.values(pts, clamp=True) + 2.0 * lam)
    out = path.segment_lengths() * 0.5 * (speed @ SEGMENT_WEIGHTS)
    if pair_separations(path.nodes[0]).min() == 0.0:
        out[0] = collision_end_segment(path.nodes[0], path.nodes[1], path.masses, F, lam)
    if pair_separations(path.nodes[-1]).min() == 0.0:
        out[-1] = collision_end_segment(path.nodes[-1], path.nodes[-2], path.masses, F, lam)
    return out


def polyline_action(path: DiscretePath, F: PotentialSpec, lam: float) -> ActionValue:
    return ActionValue(math.fsum(polyline_segment_actions(path, F, lam)))


def action_gradient(path: DiscretePath, F: PotentialSpec, lam: float) -> np.ndarray:
    """Exact gradient of the discrete Maupertuis action with respect to the nodes.

    Returned with the shape of ``path.nodes``; endpoint rows are zero.
    """
    _check_lambda(lam)
    m = path.masses
    diff = np.diff(path.nodes, axis=0)
    lens = np.sqrt(_weighted_sq(diff, m))
    mids = path.midpoints()
    g = _speed_factor(F, mids, lam)
    dF = F.partials(mids, clamp=True)
    safe = np.where(lens > 0, lens, 1.0)
    # d|dx_k| / d x_{k+1} = m * dx_k / |dx_k|
    unit = np.where(lens[:, None, None] > 0, m[None, :, None] * diff / safe[:, None, None], 0.0)
    # d g_k / d x_k = d g_k / d x_{k+1} = dF(mid) / (2 g_k)
    dg = dF / (2.0 * g[:, None, None])
    seg_next = unit * g[:, None, None] + lens[:, None, None] * dg  # w.r.t. x_{k+1}
    seg_prev = -unit * g[:, None, None] + lens[:, None, None] * dg  # w.r.t. x_k
    out = np.zeros_like(path.nodes)
    out[1:] += seg_next
    out[:-1] += seg_prev
    out[0] = 0.0
    out[-1] = 0.0
    return out


def canonical_reparametrize(path: DiscretePath, F: PotentialSpec, lam: float) -> DiscretePath:
    """Time stamps with |dx/dt| = sqrt(2F(mid) + 2 lambda) on every segment."""
    _check_lambda(lam)
    lens = path.segment_lengths()
    if np.any(lens == 0):
        raise InputDomainError("path has stalled segments; strip them first")
    dt = lens / _speed_factor(F, path.midpoints(), lam)
    times = np.concatenate([[0.0], np.cumsum(dt)])
    return replace(path, times=times)


def energy_residual(path: DiscretePath, F: PotentialSpec, lam: float) -> float:
    """max over segments of | |dx/dt|^2 - (2F(mid) + 2 lambda) | / (2 lambda)."""
    dt = np.diff(path.times)
    speed2 = _weighted_sq(np.diff(path.nodes, axis=0), path.masses) / dt**2
    target = 2.0 * F.values(path.midpoints(), clamp=True) + 2.0 * lam
    return float(np.max(np.abs(speed2 - target)) / (2.0 * lam))


def strip_stationary(path: DiscretePath) -> DiscretePath:
    """Drop nodes that repeat their predecessor (within 1e-14 relative)."""
    scale = max(1.0, float(np.max(np.abs(path.nodes))))
    keep = [0]
    for k in range(1, path.M):
        if np.max(np.abs(path.nodes[k] - path.nodes[keep[-1]])) > STALL_RTOL * scale:
            keep.append(k)
    if path.M > 1 and keep[-1] != path.M - 1 and len(keep) > 1:
        # keep the true endpoint rather than an earlier duplicate of it
        keep[-1] = path.M - 1
    times = None if path.times is None else path.times[keep]
    return DiscretePath(path.nodes[keep], path.masses, times, path.fixed_ends)


def richardson_estimate(coarse: float, fine: float) -> float:
    """|value(h) - value(h/2)| / 3 for a second-order rule."""
    return abs(coarse - fine) / 3.0


def refine(path: DiscretePath) -> DiscretePath:
    """Insert the midpoint of every segment (and of every time interval)."""
    mids = path.midpoints()
    nodes = np.empty((2 * path.M - 1,) + path.nodes.shape[1:])
    nodes[0::2] = path.nodes
    nodes[1::2] = mids
    times = None
    if path.times is not None:
        times = np.empty(2 * path.M - 1)
        times[0::2] = path.times
        times[1::2] = 0.5 * (path.times[:-1] + path.times[1:])
    return DiscretePath(nodes, path.masses, times, path.fixed_ends)


# -- CSV --------------------------------------------------------------------------


def path_to_csv(path: DiscretePath) -> str:
    buf = io.StringIO()
    n, d = path.nodes.shape[1:]
    masses = ";".join(f"{m:.17g}" for m in path.masses)
    buf.write(f"# N={n},d={d},masses={masses}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t"] + [f"x{i}_{c}" for i in range(n) for c in range(d)])
    for k in range(path.M):
        t = "" if path.times is None else f"{path.times[k]:.17g}"
        writer.writerow([t] + [f"{v:.17g}" for v in path.nodes[k].reshape(-1)])
    return buf.getvalue()


def path_from_csv(text: str) -> DiscretePath:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise InputDomainError("path CSV must start with a '# N=..,d=..,masses=..' header")
    meta = dict(item.split("=", 1) for item in lines[0][1:].strip().split(","))
    n, d = int(meta["N"]), int(meta["d"])
    masses = [float(m) for m in meta["masses"].split(";")]
    rows = list(csv.reader(lines[2:]))
    times = [r[0] for r in rows]
    coords = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), n, d)
    timed = all(t != "" for t in times)
    return DiscretePath(coords, masses, [float(t) for t in times] if timed else None)
