import math
from dataclasses import replace

import numpy as np
import pytest

from helpers import config, solve_checked
from manegeo.config import norm
from manegeo.errors import CollisionObstructionError, InputDomainError
from manegeo.oracle import integrate, shoot_match, trajectory_to_csv, velocity_limit
from manegeo.solver import SolveOptions

X0 = config([[-1, 0], [1, 0]])


def test_free_motion_is_uniform(free):
    v0 = config([[0.3, -0.2], [1.0, 0.5]])
    traj = integrate(X0, v0, free, 50.0)
    assert traj.status == "ok"
    assert np.allclose(traj.positions[-1], X0.bodies + 50.0 * v0.bodies, rtol=0, atol=1e-12)
    assert np.array_equal(traj.velocities[-1], v0.bodies)
    assert velocity_limit(traj).velocity == v0


def test_hyperbolic_energy_drift(kepler):
    traj = integrate(X0, config([[0, -0.9], [0, 0.9]]), kepler, 1e3, tol=1e-10)
    assert traj.status == "ok"
    assert traj.energy_drift < 1e-9


def test_elliptic_orbit_returns_after_one_period(kepler):
    # relative motion r'' = -2 r/|r|^3; energy 1/4 - 1/2 = -1/4 gives semi-major axis 2 and period 4 pi
    v0 = config([[0, -0.5], [0, 0.5]])
    traj = integrate(X0, v0, kepler, 4 * math.pi, tol=1e-12)
    assert np.max(np.abs(traj.positions[-1] - X0.bodies)) < 1e-6
    assert np.max(np.abs(traj.velocities[-1] - v0.bodies)) < 1e-6
    assert velocity_limit(integrate(X0, v0, kepler, 1e3)).status == "inconclusive"


def test_hyperbolic_velocity_limit(kepler):
    traj = integrate(X0, config([[0, -0.9], [0, 0.9]]), kepler, 1e6)
    lim = velocity_limit(traj)
    lam = traj.energy[0]
    assert lim.status == "converged"
    assert norm(lim.velocity) == pytest.approx(math.sqrt(2 * lam), abs=1e-4)


def test_head_on_collision_stops(kepler):
    traj = integrate(X0, config([[0, 0], [0, 0]]), kepler, 10.0)
    assert traj.status == "collision-stop"
    assert velocity_limit(traj).status == "inconclusive"
    with pytest.raises(CollisionObstructionError):
        integrate(X0, config([[0, 0], [0, 0]]), kepler, 10.0, raise_on_collision=True)


def test_integrate_preconditions(kepler):
    with pytest.raises(InputDomainError):
        integrate(config([[0, 0], [0, 0]]), X0, kepler, 1.0)
    with pytest.raises(InputDomainError):
        integrate(X0, X0, kepler, -1.0)


def test_shoot_free_geodesic(free):
    r = solve_checked(X0, config([[3, 4], [1, 1]]), free, 0.5)
    assert shoot_match(r, free).mismatch < 1e-12


def test_shoot_kepler_geodesic_converges(kepler, kepler_pair):
    x, y = kepler_pair
    mism = []
    for M in (129, 257, 513):
        r = solve_checked(x, y, kepler, 0.5, SolveOptions(initial_nodes=M, max_refinements=0,
                                                         optimizer_tolerance=1e-12))
        mism.append(shoot_match(r, kepler).mismatch)
    assert mism[-1] < 1e-2
    assert mism[0] > mism[1] > mism[2]


def test_shoot_rejects_unconverged(kepler, kepler_pair):
    r = solve_checked(*kepler_pair, kepler, 0.5)
    with pytest.raises(InputDomainError):
        shoot_match(replace(r, converged=False), kepler)


def test_trajectory_csv_columns(kepler):
    traj = integrate(X0, config([[0, -0.9], [0, 0.9]]), kepler, 1.0)
    lines = trajectory_to_csv(traj).splitlines()
    assert lines[0] == "t,x0_0,x0_1,x1_0,x1_1,v0_0,v0_1,v1_0,v1_1,energy"
    assert len(lines) == len(traj.times) + 1
