"""Fixed-endpoint minimization of the action between two configurations.

The interior nodes are optimized on a fixed grid of time fractions
``0 = tau_0 < ... < tau_{M-1} = 1`` with the total time eliminated in closed
form: for kinetic part K and potential part P of the discrete Lagrangian the
best total time is ``sqrt(K / P)`` and the reduced objective is
``J = 2 sqrt(K P)``. Unlike the discrete Maupertuis sum, this objective pins
nodes along the path, so Newton steps are well posed. The reported action is
the Maupertuis sum of the optimized nodes, which never exceeds J.

Each Newton step solves a block-tridiagonal system with a banded Cholesky
factorization (the rank-one part of the Hessian is handled by
Sherman-Morrison).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .action import (ActionValue, DiscretePath, canonical_reparametrize, energy_residual,
                     polyline_action, polyline_segment_actions, refine,
                     richardson_estimate)
from .config import Configuration, pair_separations
from .errors import (CollisionObstructionError, InputDomainError, SingularPotentialError)
from .potentials import PotentialSpec

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MULTIPLICITY_RTOL = 1e-6


@dataclass(frozen=True)
class SolveOptions:
    """Discretization and optimizer settings.

    ``grading_ratio`` switches to geometrically growing segments from the
    start point; with ``first_segment`` also set, the first segment has that
    length and the node set along a straight initial path does not depend on
    where the path ends (meshes of paths sharing a start are nested).
    """

    initial_nodes: int = 33
    max_refinements: int = 6
    optimizer_tolerance: float = 1e-9
    collision_guard: float = 1e-6
    max_iterations: int = 10_000
    grading_ratio: float | None = None
    first_segment: float | None = None
    min_refinements: int = 0
    restarts: int = 0
    spot_check: bool = False

    def __post_init__(self):
        if self.initial_nodes < 2:
            raise InputDomainError("initial_nodes must be at least 2")
        if self.max_refinements < 0 or self.min_refinements < 0 or self.restarts < 0:
            raise InputDomainError("refinement and restart counts must be nonnegative")
        for name in ("optimizer_tolerance", "collision_guard", "max_iterations"):
            if not getattr(self, name) > 0:
                raise InputDomainError(f"{name} must be positive")
        if self.grading_ratio is not None and not 1.0 < self.grading_ratio <= 1.25:
            raise InputDomainError("grading_ratio must lie in (1, 1.25]")
        if self.first_segment is not None and not self.first_segment > 0:
            raise InputDomainError("first_segment must be positive")

    @classmethod
    def from_dict(cls, data: dict | None) -> "SolveOptions":
        data = dict(data or {})
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InputDomainError(f"unknown solver options: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise InputDomainError(str(exc)) from None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class GeodesicResult:
    path: DiscretePath
    action: ActionValue
    el_residual: float
    el_residual_normalized: float
    energy_residual: float
    converged: bool
    refinement_settled: bool = True
    level_actions: tuple = ()
    iterations: int = 0
    multiple_minimizers: bool = False
    spot_check: dict | None = None
    lam: float = 0.0

    @property
    def sigma(self) -> float:
        return self.path.sigma

    @property
    def nodes(self) -> int:
        return self.path.M

    def to_dict(self) -> dict:
        return {"action": self.action.value, "el_residual": self.el_residual,
                "energy_residual": self.energy_residual, "converged": self.converged,
                "nodes": self.path.M, "sigma": self.sigma,
                "el_residual_normalized": self.el_residual_normalized,
                "quadrature_error_estimate": self.action.quadrature_error_estimate,
                "refinement_settled": self.refinement_settled,
                "level_actions": list(self.level_actions)}


# -- mesh construction ----------------------------------------------------------------


def graded_fractions(length: float, opts: SolveOptions) -> np.ndarray:
    """Node positions in [0, 1] along a path of the given length."""
    if opts.grading_ratio is None:
        return np.linspace(0.0, 1.0, opts.initial_nodes)
    r = opts.grading_ratio
    if opts.first_segment is None:
        steps = r ** np.arange(opts.initial_nodes - 1)
        cum = np.concatenate([[0.0], np.cumsum(steps)])
        return cum / cum[-1]
    h0 = opts.first_segment
    if h0 >= length:
        return np.array([0.0, 1.0])
    pos = [0.0]
    h = h0
    while pos[-1] + h < length:
        pos.append(pos[-1] + h)
        h *= r
    # the closing segment must not be much shorter than its neighbour
    if len(pos) > 1 and length - pos[-1] < 0.5 * (pos[-1] - pos[-2]):
        pos.pop()
    pos.append(length)
    return np.asarray(pos) / length


def _bump_path(x, y, fractions, pair, axis, height):
    i, j = pair
    nodes = (1.0 - fractions)[:, None, None] * x.bodies + fractions[:, None, None] * y.bodies
    bump = np.sin(np.pi * fractions)
    nodes[:, i, axis] += 0.5 * height * bump
    nodes[:, j, axis] -= 0.5 * height * bump
    return nodes


def _guard_separation(nodes) -> float:
    """Smallest pair separation over interior nodes and all segment midpoints."""
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    seps = [pair_separations(mids).min()]
    if nodes.shape[0] > 2:
        seps.append(pair_separations(nodes[1:-1]).min())
    return float(min(seps))


def _straight_blocked(x: Configuration, y: Configuration, guard: float):
    """Pair whose closest approach along the open segment falls below the guard."""
    for i in range(x.N):
        for j in range(i + 1, x.N):
            p = x.bodies[i] - x.bodies[j]
            q = y.bodies[i] - y.bodies[j] - p
            qq = float(q @ q)
            if qq == 0.0:
                if np.linalg.norm(p) < guard:
                    return (i, j)
                continue
            s = -float(p @ q) / qq
            if 0.0 < s < 1.0 and np.linalg.norm(p + s * q) < guard:
                return (i, j)
    return None


def initial_paths(x: Configuration, y: Configuration, opts: SolveOptions, count: int = 1):
    """Straight segment (when admissible) followed by deflected alternatives."""
    length = float(np.sqrt(np.sum(x.masses[:, None] * (y.bodies - x.bodies) ** 2)))
    fr = graded_fractions(length, opts)
    paths = []
    blocked = _straight_blocked(x, y, opts.collision_guard)
    straight = (1.0 - fr)[:, None, None] * x.bodies + fr[:, None, None] * y.bodies
    if blocked is None and _guard_separation(straight) >= opts.collision_guard:
        paths.append(straight)
    if len(paths) >= count:
        return paths
    pair = blocked
    if pair is None:
        pair = min(((i, j) for i in range(x.N) for j in range(i + 1, x.N)),
                   key=lambda p: np.min(np.linalg.norm(straight[:, p[0]] - straight[:, p[1]], axis=-1)))
    end_seps = [v for v in (pair_separations(x.bodies).min(), pair_separations(y.bodies).min()) if v > 0]
    height = max(2.0 * opts.collision_guard, 0.5 * min(end_seps) if end_seps else 0.0)
    candidates = []
    for axis in range(x.d):
        for sign in (1.0, -1.0):
            nodes = _bump_path(x, y, fr, pair, axis, sign * height)
            candidates.append((_guard_separation(nodes), axis, sign, nodes))
    candidates.sort(key=lambda c: -c[0])
    for sep, _, _, nodes in candidates:
        if len(paths) >= count:
            break
        if sep >= opts.collision_guard:
            paths.append(nodes)
    if not paths:
        raise CollisionObstructionError("no collision-free initial path: straight and deflected paths "
                                        "violate the collision guard")
    return paths


# -- reduced Lagrangian --------------------------------------------------------------


class _State:
    """Per-segment pieces of the reduced objective at one set of nodes."""

    def __init__(self, X, diff, kin, Fm, K, P):
        self.X, self.diff, self.kin, self.Fm, self.K, self.P = X, diff, kin, Fm, K, P
        self.sigma = math.sqrt(K / P)
        self.J = 2.0 * math.sqrt(K * P)


class _Problem:
    """Reduced discrete Lagrangian on a fixed time-fraction grid."""

    def __init__(self, nodes, masses, tau, F: PotentialSpec, lam: float, guard: float):
        self.M, self.N, self.d = nodes.shape
        self.D = self.N * self.d
        self.ends = (nodes[0].copy(), nodes[-1].copy())
        self.masses = masses
        self.w = np.repeat(masses, self.d)
        self.dtau = np.diff(tau)
        self.F = F
        self.lam = lam
        self.guard = guard

    def full(self, interior):
        X = np.empty((self.M, self.N, self.d))
        X[0], X[-1] = self.ends
        X[1:-1] = interior.reshape(self.M - 2, self.N, self.d)
        return X

    def state(self, interior):
        """Objective pieces, or None when the nodes leave the admissible region."""
        X = self.full(interior)
        if _guard_separation(X) < self.guard:
            return None
        diff = (X[1:] - X[:-1]).reshape(self.M - 1, self.D)
        try:
            Fm = self.F.values(0.5 * (X[1:] + X[:-1]), clamp=True)
        except SingularPotentialError:
            return None
        kin = np.sum(self.w * diff**2, axis=1) / (2.0 * self.dtau)
        K = math.fsum(kin)
        P = math.fsum(self.dtau * (Fm + self.lam))
        return _State(X, diff, kin, Fm, K, P)

    def change(self, old: _State, new: _State) -> float:
        """J(new) - J(old), accumulated segment by segment to avoid cancellation."""
        dK = math.fsum(np.sum(self.w * (new.diff - old.diff) * (new.diff + old.diff), axis=1)
                       / (2.0 * self.dtau))
        dP = math.fsum(self.dtau * (new.Fm - old.Fm))
        return 2.0 * (dK * new.P + old.K * dP) / (math.sqrt(new.K * new.P) + math.sqrt(old.K * old.P))

    def gradient_parts(self, st: _State):
        vel = st.diff / self.dtau[:, None]
        gK = self.w * (vel[:-1] - vel[1:])  # interior nodes 1..M-2
        mids = 0.5 * (st.X[1:] + st.X[:-1])
        dF = self.F.partials(mids, clamp=True).reshape(self.M - 1, self.D)
        wdF = self.dtau[:, None] * dF
        gP = 0.5 * (wdF[:-1] + wdF[1:])
        return gK, gP

    def local_residual(self, st: _State, g) -> float:
        """Largest node gradient relative to the action and length of its two segments."""
        h = np.sqrt(np.sum(self.w * st.diff**2, axis=1))
        local = st.kin / st.sigma + st.sigma * self.dtau * (st.Fm + self.lam)
        num = np.max(np.abs(g), axis=1) * (h[:-1] + h[1:])
        return float(np.max(num / (local[:-1] + local[1:])))

    def hessian_band(self, X, sigma, shift):
        """Upper banded storage of the positive part of the Hessian."""
        D, n_int = self.D, self.M - 2
        mids = 0.5 * (X[1:] + X[:-1])
        HF = self.F.hessians(mids, clamp=True)  # (M-1, D, D)
        wH = self.dtau[:, None, None] * HF
        inv = 1.0 / self.dtau
        W = np.diag(self.w)
        diag = (W[None] * (inv[:-1] + inv[1:])[:, None, None]) / sigma + 0.25 * sigma * (wH[:-1] + wH[1:])
        off = -(W[None] * inv[1:-1, None, None]) / sigma + 0.25 * sigma * wH[1:-1]
        u = 2 * D - 1
        ab = np.zeros((u + 1, n_int * D))
        ks = np.arange(n_int) * D
        for a in range(D):
            for b in range(a, D):
                ab[u + a - b, ks + b] = diag[:, a, b]
        ab[u, :] += shift
        if n_int > 1:
            for a in range(D):
                for b in range(D):
                    ab[D - 1 + a - b, ks[1:] + b] = off[:, a, b]
        return ab


def _newton_direction(prob: _Problem, st: _State, g, z):
    """Descent direction from the banded Hessian with a rank-one correction."""
    diag_max = None
    shift = 0.0
    for _ in range(40):
        ab = prob.hessian_band(st.X, st.sigma, shift)
        if diag_max is None:
            diag_max = float(np.max(np.abs(ab[-1])))
        try:
            cb = linalg.cholesky_banded(ab, lower=False, check_finite=False)
            break
        except linalg.LinAlgError:
            shift = 1e-8 * diag_max if shift == 0.0 else shift * 10.0
    else:
        return -g
    hg = linalg.cho_solve_banded((cb, False), g, check_finite=False)
    hz = linalg.cho_solve_banded((cb, False), z, check_finite=False)
    denom = st.J - float(z @ hz)
    if denom > 1e-12 * st.J:
        p = -(hg + hz * (float(z @ hg) / denom))
        if float(p @ g) < 0.0:
            return p
    return -hg


def _optimize(prob: _Problem, interior, tol, max_iterations):
    """Damped Newton iterations; returns (interior, converged, iterations)."""
    x = interior.reshape(-1).copy()
    if x.size == 0:
        return x, True, 0
    st = prob.state(x)
    if st is None:
        raise CollisionObstructionError("initial path violates the collision guard")
    for it in range(1, max_iterations + 1):
        gK, gP = prob.gradient_parts(st)
        g2 = gK / st.sigma + st.sigma * gP
        rel = prob.local_residual(st, g2)
        if rel <= tol:
            return x, True, it
        g = g2.reshape(-1)
        z = (gK / st.sigma - st.sigma * gP).reshape(-1)
        p = _newton_direction(prob, st, g, z)
        slope = float(p @ g)
        alpha = 1.0
        scale = max(1.0, float(np.max(np.abs(st.X))))
        accepted = None
        while alpha * float(np.max(np.abs(p))) > 1e-16 * scale:
            trial = x + alpha * p
            new = prob.state(trial)
            if new is not None and prob.change(st, new) <= ARMIJO * alpha * slope:
                accepted = new
                break
            alpha *= 0.5
        if accepted is None:
            # no representable decrease left: accept if the gradient is near the floor
            return x, rel <= 1e3 * tol, it
        x, st = trial, accepted
    return x, False, max_iterations


def _tau_grid(nodes, masses, F, lam):
    path = DiscretePath(nodes, masses)
    timed = canonical_reparametrize(path, F, lam)
    return timed.times / timed.times[-1]


# -- residuals ------------------------------------------------------------------------


def el_residual(path: DiscretePath, F: PotentialSpec, lam: float = 0.0) -> tuple[float, float]:
    """Discrete Euler-Lagrange defect at interior nodes.

    Returns ``(raw, normalized)``: the largest weighted norm of
    ``second divided difference - grad F(node)``, and the same divided by
    ``|grad F(node)| + lambda`` node by node.
    """
    if not path.timed:
        raise InputDomainError("el_residual needs a timed path")
    if path.M < 3:
        return 0.0, 0.0
    t = path.times
    dt = np.diff(t)
    vel = np.diff(path.nodes, axis=0) / dt[:, None, None]
    acc = 2.0 * (vel[1:] - vel[:-1]) / (t[2:] - t[:-2])[:, None, None]
    grad = F.partials(path.nodes[1:-1]) / path.masses[None, :, None]
    m = path.masses[None, :, None]
    defect = np.sqrt(np.sum(m * (acc - grad) ** 2, axis=(1, 2)))
    gnorm = np.sqrt(np.sum(m * grad**2, axis=(1, 2)))
    return float(defect.max()), float(np.max(defect / (gnorm + lam)))


# -- driver ---------------------------------------------------------------------------


def _check_inputs(x: Configuration, y: Configuration, F: PotentialSpec, lam: float):
    if not lam > 0:
        raise InputDomainError(f"energy constant must be positive, got {lam}")
    if x.bodies.shape != y.bodies.shape or not np.array_equal(x.masses, y.masses):
        raise InputDomainError("endpoints must share shape and masses")
    F.for_config(x)
    if x == y:
        raise InputDomainError("endpoints coincide")


def _solve_from(nodes0, x, F, lam, opts):
    masses = x.masses
    tau = _tau_grid(nodes0, masses, F, lam)
    nodes = nodes0
    levels = []
    total_iter = 0
    converged = True
    settled = False
    for level in range(opts.max_refinements + 1):
        prob = _Problem(nodes, masses, tau, F, lam, opts.collision_guard)
        interior, ok, its = _optimize(prob, nodes[1:-1], opts.optimizer_tolerance, opts.max_iterations)
        total_iter += its
        nodes = prob.full(interior)
        converged = ok
        value = polyline_action(DiscretePath(nodes, masses), F, lam).value
        levels.append(value)
        if len(levels) >= 2 and level >= opts.min_refinements:
            if abs(levels[-1] - levels[-2]) < 10.0 * opts.optimizer_tolerance * abs(value):
                settled = True
                break
        if level == opts.max_refinements:
            break
        fine = refine(DiscretePath(nodes, masses, tau))
        nodes, tau = fine.nodes, fine.times
    return nodes, levels, converged, settled, total_iter


def solve_geodesic(x: Configuration, y: Configuration, F: PotentialSpec, lam: float,
                   opts: SolveOptions | None = None, initial_path: DiscretePath | None = None
                   ) -> GeodesicResult:
    """Locally minimizing path from x to y in canonical parametrization."""
    opts = opts or SolveOptions()
    _check_inputs(x, y, F, lam)
    if initial_path is not None:
        starts = [initial_path.nodes.copy()]
        starts[0][0], starts[0][-1] = x.bodies, y.bodies
        if _guard_separation(starts[0]) < opts.collision_guard:
            raise CollisionObstructionError("supplied initial path violates the collision guard")
    else:
        starts = initial_paths(x, y, opts, count=1 + opts.restarts)
    best = None
    values = []
    for nodes0 in starts:
        out = _solve_from(nodes0, x, F, lam, opts)
        values.append(out[1][-1])
        if best is None or out[1][-1] < best[1][-1]:
            best = out
    nodes, levels, converged, settled, iterations = best
    multiple = len(values) > 1 and (max(values) - min(values)) > MULTIPLICITY_RTOL * min(values)
    if multiple:
        log.info("restarts reached distinct local minimizers: %s", values)
    spatial = DiscretePath(nodes, x.masses)
    timed = canonical_reparametrize(spatial, F, lam)
    if len(levels) >= 2:
        action = ActionValue(levels[-1], richardson_estimate(levels[-2], levels[-1]), raw=False)
    else:
        action = ActionValue(levels[-1])
    raw, normalized = el_residual(timed, F, lam)
    result = GeodesicResult(
        path=timed, action=action, el_residual=raw, el_residual_normalized=normalized,
        energy_residual=energy_residual(timed, F, lam), converged=converged,
        refinement_settled=settled, level_actions=tuple(levels), iterations=iterations,
        multiple_minimizers=multiple, lam=lam)
    if opts.spot_check:
        result = replace(result, spot_check=restriction_spot_check(result, F, lam, opts))
    return result


# -- restriction ----------------------------------------------------------------------


def _density(result: GeodesicResult, F: PotentialSpec, lam: float) -> np.ndarray:
    """Action per unit time on each segment (piecewise constant)."""
    dens = polyline_segment_actions(result.path, F, lam)
    return dens / np.diff(result.path.times)


def restricted_action(result: GeodesicResult, F: PotentialSpec, s: float, t: float) -> float:
    """Integral of the piecewise-constant action density over [s, t]."""
    times = result.path.times
    if not (0.0 <= s < t <= times[-1] * (1.0 + 1e-15)):
        raise InputDomainError(f"need 0 <= s < t <= sigma, got ({s}, {t})")
    t = min(t, times[-1])
    dens = _density(result, F, result.lam)
    lo = np.clip(times[:-1], s, t)
    hi = np.clip(times[1:], s, t)
    return math.fsum(dens * (hi - lo))


def restrict(result: GeodesicResult, F: PotentialSpec, s: float, t: float) -> GeodesicResult:
    """The sub-path on [s, t], time-shifted to start at 0, with its share of the action."""
    times = result.path.times
    value = restricted_action(result, F, s, t)
    t = min(t, times[-1])
    inside = (times > s) & (times < t)
    nodes = np.concatenate([result.path.at(s)[None], result.path.nodes[inside], result.path.at(t)[None]])
    new_times = np.concatenate([[s], times[inside], [t]]) - s
    keep = np.concatenate([[True], np.diff(new_times) > 0])
    sub = DiscretePath(nodes[keep], result.path.masses, new_times[keep])
    scale = value / result.action.value if result.action.value else 0.0
    return replace(result, path=sub,
                   action=ActionValue(value, result.action.quadrature_error_estimate * scale,
                                      result.action.raw),
                   energy_residual=energy_residual(sub, F, result.lam) if sub.M > 1 else 0.0)


def restriction_spot_check(result: GeodesicResult, F: PotentialSpec, lam: float,
                           opts: SolveOptions) -> dict:
    """Re-solve between the quarter points and compare with the restricted action."""
    sigma = result.sigma
    s, t = 0.25 * sigma, 0.75 * sigma
    sub = restrict(result, F, s, t)
    xa = Configuration(sub.path.nodes[0], result.path.masses)
    xb = Configuration(sub.path.nodes[-1], result.path.masses)
    inner = replace(opts, spot_check=False, restarts=0, grading_ratio=None, first_segment=None)
    again = solve_geodesic(xa, xb, F, lam, inner)
    tol = 10.0 * opts.optimizer_tolerance * sub.action.value + again.action.quadrature_error_estimate \
        + sub.action.quadrature_error_estimate
    return {"restricted": sub.action.value, "resolved": again.action.value,
            "pass": bool(again.action.value <= sub.action.value + tol)}

