import math

import numpy as np
import pytest

from helpers import config, pair_direction
from manegeo.config import norm
from manegeo.envelopes import PowerEnvelope
from manegeo.errors import InputDomainError, QuadratureError
from manegeo.hyperbolic import (GEOM, asymptotic_velocity, build_psi_table, build_sequence, cauchy_gaps,
                                crossing_times, dyadic_tail, last_crossing, run_hyperbolic, verify_runs)
from manegeo.potentials import newtonian, zero
from manegeo.solver import SolveOptions

ORIGIN = config(np.zeros((2, 2)))

# Psi~(2^n) for the Kepler pair from the origin along the symmetric direction (lambda = 1/2),
# summed term by term to infinity with mpmath at 30 digits from the closed-form base action
KEPLER_PSI_TILDE = {30: 0.0016302343459904137, 31: 0.0011710999498705947, 34: 0.00043292321614661324}


@pytest.fixture(scope="module")
def kepler_table():
    return build_psi_table(ORIGIN, pair_direction(), 0.5, newtonian())


@pytest.fixture(scope="module")
def free_report():
    return run_hyperbolic(ORIGIN, pair_direction(), 0.5, zero(), 28, 31, mode="strict")


def test_free_psi_constant_and_closed_form():
    table = build_psi_table(ORIGIN, pair_direction(), 0.5, zero(), j_max=40)
    assert table.base_term == pytest.approx(50 / math.sqrt(2), rel=1e-12)
    for j in (0, 10, 40):
        assert table.psi_at[j] == table.base_term
    for n in (3, 20, 35):
        closed = math.sqrt(table.base_term) * 2 ** (-(n + 1) / 2) * GEOM
        assert table.psi_tilde(2.0**n) == pytest.approx(closed, rel=1e-10)
    assert table.n0 == 27


def test_kepler_psi_tilde_matches_brute_sum(kepler_table):
    assert kepler_table.n0 == 31
    for n, ref in KEPLER_PSI_TILDE.items():
        got = kepler_table.psi_tilde(2.0**n)
        assert ref <= got <= ref * (1 + 1e-6)


def test_kepler_table_invariants(kepler_table):
    assert all(kepler_table.invariants().values())


def test_n0_is_deterministic(kepler_table):
    again = build_psi_table(ORIGIN, pair_direction(), 0.5, newtonian())
    assert again.n0 == kepler_table.n0
    assert again.psi_tilde_at == kepler_table.psi_tilde_at


def test_psi_tilde_domain(kepler_table):
    with pytest.raises(InputDomainError):
        kepler_table.psi_tilde(0.5)
    with pytest.raises(InputDomainError):
        kepler_table.psi(-1.0)


def test_dyadic_tail_detects_divergence():
    with pytest.raises(QuadratureError):
        dyadic_tail(PowerEnvelope(((1.0, 0.0),)), 1)
    f = PowerEnvelope(((1.0, 1.0),))
    brute = sum(math.sqrt(2.0**-i * math.log(2)) for i in range(5, 2000))
    assert dyadic_tail(f, 5) == pytest.approx(brute, rel=1e-12)


def test_strict_rejects_small_n_from(kepler_table):
    with pytest.raises(InputDomainError):
        build_sequence(ORIGIN, pair_direction(), 0.5, newtonian(), 10, 12, psi=kepler_table)
    with pytest.raises(InputDomainError):
        build_sequence(ORIGIN, pair_direction(), 0.5, newtonian(), 3, 5, mode="exploratory", psi=kepler_table)


def test_free_strict_run_passes_everything(free_report):
    r = free_report
    assert not r.failures and r.all_asserted_pass()
    assert all(c.passed for c in r.checks)
    lam = 0.5
    for n, run in r.runs.items():
        T = 2.0**n
        assert run.path.length() == pytest.approx(norm(r.x_star + T * pair_direction() - ORIGIN), rel=1e-12)
        assert run.path.length() <= T + r.psi.psi(T)
    assert r.velocity.error == pytest.approx(0.0, abs=1e-12)
    midpoint = [c for c in r.checks if c.eq == "midpoint"]
    assert midpoint and max(c.lhs for c in midpoint) < 1e-6


def test_free_crossings_are_line_sphere(free_report):
    r = free_report
    xs = norm(r.x_star)
    for n, cross in r.crossings.items():
        for j, s in cross.items():
            assert s == pytest.approx(2.0**j + xs, rel=1e-12)
        times = [cross[j] for j in sorted(cross)]
        assert all(b > a for a, b in zip(times, times[1:]))


def test_free_defect_is_base_offset_over_time(free_report):
    # gamma(t) = t a from the origin, so gamma(t) - x* - t a = -x* and the defect is |x*|/t
    xs = norm(free_report.x_star)
    for t, radius, angle, defect, bound in free_report.defect_curve:
        assert defect == pytest.approx(xs / t, rel=1e-9)
        if t > 2 * xs:
            assert angle < 1e-12


def test_kepler_exploratory_runs():
    r = run_hyperbolic(ORIGIN, pair_direction(), 0.5, newtonian(), 10, 14, mode="exploratory")
    assert sorted(r.runs) == [10, 11, 12, 13, 14]
    assert all(run.converged and run.energy_residual < 1e-10 for run in r.runs.values())
    assert not any(c.asserted for c in r.checks)
    window = [c for c in r.checks if c.eq in ("crossing_lower", "crossing_upper")]
    assert window and all(c.passed for c in window)


def test_crossing_times_errors(free_report):
    run = free_report.runs[28]
    with pytest.raises(InputDomainError):
        crossing_times(run, free_report.x_star, [29])
    assert last_crossing(run, free_report.x_star, 2.0**40) is None


def test_velocity_needs_two_runs(free_report):
    single = build_sequence(ORIGIN, pair_direction(), 0.5, zero(), 28, 28, psi=free_report.psi)
    with pytest.raises(InputDomainError):
        asymptotic_velocity(single)
    with pytest.raises(InputDomainError):
        cauchy_gaps(single)


def test_off_ray_start_three_bodies():
    masses = (1.0, 1.0, 1.0)
    x = config([[0.0, 0.5], [1.0, -0.5], [-1.0, 0.0]])
    a = pair_direction(3)
    r = build_sequence(x, a, 0.5, newtonian(masses), 12, 13, SolveOptions(max_refinements=1),
                       mode="exploratory")
    verify_runs(r)
    assert all(run.converged for run in r.runs.values())
    assert all(run.path.length() <= 2.0**n + r.psi.psi(2.0**n) for n, run in r.runs.items())
