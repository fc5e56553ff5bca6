"""Independent check by direct integration of the equations of motion.

Bodies follow ``m_i x_i'' = dF/dx_i``. Geodesics are shot from their start
with the velocity read off the canonical parametrization, and the endpoint
mismatch measures how well the discrete minimizer solves the ODE.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .config import Configuration, min_separation, pair_separations
from .errors import CollisionObstructionError, InputDomainError
from .potentials import PotentialSpec
from .solver import GeodesicResult

DEFAULT_GUARD = 1e-6


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    energy: np.ndarray
    status: str
    steps: int
    evaluations: int
    tolerance: float

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def position(self, k: int = -1) -> Configuration:
        return Configuration(self.positions[k], self.masses)

    def velocity(self, k: int = -1) -> Configuration:
        return Configuration(self.velocities[k], self.masses)

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])))


def _energy(F: PotentialSpec, pos, vel, masses) -> np.ndarray:
    kin = 0.5 * np.einsum("kid,i->k", vel**2, masses)
    return kin - np.atleast_1d(F.values(pos))


def integrate(x0: Configuration, v0: Configuration, F: PotentialSpec, t_end: float, tol: float = 1e-10,
              collision_guard: float = DEFAULT_GUARD, raise_on_collision: bool = False) -> Trajectory:
    """Integrate from (x0, v0) to t_end with an adaptive order-8 Runge-Kutta pair.

    Integration stops early when a pair separation drops below the guard; the
    status is then ``"collision-stop"``.
    """
    F.for_config(x0)
    if min_separation(x0) <= 0.0:
        raise InputDomainError("initial configuration has a collision")
    if v0.bodies.shape != x0.bodies.shape:
        raise InputDomainError("velocity shape does not match the configuration")
    if not t_end > 0:
        raise InputDomainError("t_end must be positive")
    masses = x0.masses
    shape = x0.bodies.shape
    half = x0.bodies.size

    def rhs(_, y):
        pos = y[:half].reshape(shape)
        if float(pair_separations(pos).min()) <= 0.0:
            return np.zeros_like(y)
        acc = F.partials(pos) / masses[:, None]
        return np.concatenate([y[half:], acc.reshape(-1)])

    def collide(_, y):
        return float(pair_separations(y[:half].reshape(shape)).min()) - collision_guard

    collide.terminal = True
    collide.direction = -1
    y0 = np.concatenate([x0.flat, v0.flat])
    scale = max(1.0, float(np.max(np.abs(y0))))
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", rtol=tol, atol=tol * scale,
                    events=collide)
    if sol.status == -1:
        raise ArithmeticError(f"integration failed: {sol.message}")
    status = "collision-stop" if sol.status == 1 else "ok"
    if status == "collision-stop" and raise_on_collision:
        raise CollisionObstructionError(f"pair separation below {collision_guard} at t={sol.t[-1]:.6g}")
    pos = sol.y[:half].T.reshape(-1, *shape)
    vel = sol.y[half:].T.reshape(-1, *shape)
    return Trajectory(sol.t, pos, vel, masses, _energy(F, pos, vel, masses), status,
                      len(sol.t) - 1, int(sol.nfev), tol)


def initial_velocity(result: GeodesicResult) -> Configuration:
    """Three-point one-sided difference at t = 0 on the canonical time grid."""
    path = result.path
    if path.M < 3:
        raise InputDomainError("need at least three nodes")
    t0, t1, t2 = path.times[:3]
    x0, x1, x2 = path.nodes[:3]
    h1, h2 = t1 - t0, t2 - t0
    # derivative at t0 of the quadratic through the three nodes
    v = (-(h1 + h2) / (h1 * h2)) * x0 + (h2 / (h1 * (h2 - h1))) * x1 - (h1 / (h2 * (h2 - h1))) * x2
    return Configuration(v, path.masses)


@dataclass(frozen=True)
class ShootReport:
    mismatch: float
    absolute: float
    velocity: Configuration
    trajectory: Trajectory


def shoot_match(result: GeodesicResult, F: PotentialSpec, tol: float = 1e-12) -> ShootReport:
    """Integrate from the geodesic's start and compare positions at the end time."""
    if not result.converged:
        raise InputDomainError("geodesic did not converge")
    path = result.path
    if float(pair_separations(path.nodes[1:-1]).min()) <= 0.0:
        raise InputDomainError("geodesic has an interior collision")
    start = path.start
    if min_separation(start) <= 0.0:
        raise InputDomainError("cannot shoot from a collision")
    v0 = initial_velocity(result)
    traj = integrate(start, v0, F, path.sigma, tol=tol, raise_on_collision=True)
    diff = traj.positions[-1] - path.nodes[-1]
    w = path.masses[:, None]
    absolute = math.sqrt(float(np.sum(w * diff**2)))
    chord = math.sqrt(float(np.sum(w * (path.nodes[-1] - path.nodes[0]) ** 2)))
    return ShootReport(absolute / chord, absolute, v0, traj)


@dataclass(frozen=True)
class VelocityLimit:
    velocity: Configuration
    indicator: float
    status: str


def velocity_limit(traj: Trajectory) -> VelocityLimit:
    """Last velocity with sup |v(t) - v(t_end)| over the final decade of time.

    The status is ``"inconclusive"`` after a collision stop or when the minimal
    separation is not growing over that decade.
    """
    v_end = traj.velocities[-1]
    window = traj.times >= traj.t_end / 10.0
    diff = traj.velocities[window] - v_end
    indicator = float(np.max(np.sqrt(np.einsum("kid,i->k", diff**2, traj.masses))))
    status = "converged"
    if traj.status != "ok":
        status = "inconclusive"
    else:
        seps = pair_separations(traj.positions[window]).min(axis=-1)
        growing = bool(np.all(np.diff(seps) >= -1e-12 * np.abs(seps[1:]))) and seps[-1] > 0
        if not growing or (seps[-1] < 2.0 * seps[0] and indicator > 0.0):
            status = "inconclusive"
    return VelocityLimit(Configuration(v_end, traj.masses), indicator, status)


def trajectory_to_csv(traj: Trajectory) -> str:
    """Columns t, x{i}_{k}, v{i}_{k}, energy."""
    K, N, d = traj.positions.shape
    cols = ["t"] + [f"x{i}_{k}" for i in range(N) for k in range(d)] \
        + [f"v{i}_{k}" for i in range(N) for k in range(d)] + ["energy"]
    data = np.column_stack([traj.times, traj.positions.reshape(K, -1), traj.velocities.reshape(K, -1),
                            traj.energy])
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for row in data:
        buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return buf.getvalue()
