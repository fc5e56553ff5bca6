import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from helpers import config
from manegeo.envelopes import (PowerEnvelope, SumEnvelope, TableEnvelope, YukawaEnvelope,
                               dyadic_term, envelope_from_dict, envelope_series_partial)
from manegeo.errors import InputDomainError, SingularPotentialError
from manegeo.potentials import (PotentialSpec, envelope_violations, evaluate, gradient, newtonian,
                                total_mass, zero)
from manegeo.verify import ordered_configuration, potential_gradient_error

KINDS = [
    "newtonian",
    {"homogeneous": {"alpha": 2.0}},
    {"quasi_homogeneous": {"alpha": 2.0, "beta": 1.0, "delta": 0.5}},
    {"lennard_jones": {"A": 1.0, "B": 1.0}},
    {"seeliger_yukawa": {"A": 1.0, "B": 0.5}},
    {"mucket_treder": {"A": 2.0, "B": 0.1}},
    "logarithmic",
]


def spec(kind, masses=(1.0, 1.0, 1.0)):
    return PotentialSpec.from_dict({"kind": kind}, masses)


def test_newtonian_value_and_mass_scaling():
    F = newtonian([2.0, 3.0])
    x = config([[0, 0], [0, 4]], [2.0, 3.0])
    assert evaluate(F, x) == pytest.approx(6.0 / 4.0)
    g = gradient(F, x)
    # attraction: body 0 pulled toward body 1, divided by its own mass
    assert g.bodies[0] == pytest.approx([0.0, 6.0 / 16.0 / 2.0])
    assert g.bodies[1] == pytest.approx([0.0, -6.0 / 16.0 / 3.0])


def test_zero_potential_is_zero(free):
    x = config([[0, 0], [1, 1]])
    assert evaluate(free, x) == 0.0
    assert free.is_zero


def test_singular_configuration_raises(kepler):
    with pytest.raises(SingularPotentialError) as info:
        evaluate(kepler, config([[1, 1], [1, 1]]))
    assert info.value.pair == (0, 1)


def test_pair_overrides_and_round_trip():
    F = PotentialSpec.from_dict({"kind": "newtonian", "pairs": [[0, 2, "zero"]]}, (1, 1, 1))
    x = config([[0, 0], [1, 0], [3, 0]])
    assert evaluate(F, x) == pytest.approx(1.0 + 0.5)
    again = PotentialSpec.from_dict(F.to_dict(), (1, 1, 1))
    assert evaluate(again, x) == evaluate(F, x)
    with pytest.raises(InputDomainError):
        PotentialSpec.from_dict({"kind": "newtonian", "pairs": [[0, 5, "zero"]]}, (1, 1))
    with pytest.raises(InputDomainError):
        PotentialSpec.from_dict({"kind": "gravity"}, (1, 1))


def test_clamp_removes_negative_far_field():
    F = spec({"lennard_jones": {"A": 1.0, "B": 1.0}}, (1.0, 1.0))
    x = config([[0, 0], [3, 0]])
    assert evaluate(F, x) < 0
    assert evaluate(F, x, clamp=True) == 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_canonical_envelopes_dominate(kind):
    F = spec(kind)
    r = np.geomspace(F.near_region_width, 1e6, 500)
    assert envelope_violations(F, r) == []
    assert math.isfinite(envelope_series_partial(F.envelope, 60))


def test_too_small_envelope_is_reported():
    F = PotentialSpec.from_dict({"kind": "newtonian", "envelope": {"power": [[0.1, 1]]}}, (1, 1))
    bad = envelope_violations(F, [2.0, 10.0])
    assert len(bad) == 2 and bad[0][0] == (0, 1)


def test_total_mass():
    assert total_mass(newtonian([1.0, 2.0, 0.5])) == 3.5


def test_newtonian_envelope_integral_closed_form():
    f = newtonian([1.0, 1.0]).envelope
    assert f.integral(3.0, 300.0) == pytest.approx(4.0 * math.log(100.0), rel=1e-14)
    assert f.integral(3.0, 300.0) == pytest.approx(f.numeric_integral(3.0, 300.0), rel=1e-10)


@pytest.mark.parametrize("env", [
    PowerEnvelope(((2.0, 1.5), (1.0, 3.0))),
    YukawaEnvelope(1.5, 0.3),
    TableEnvelope(((1.0, 2.0), (4.0, 1.0), (10.0, 0.25))),
    SumEnvelope((PowerEnvelope(((1.0, 2.0),)), YukawaEnvelope(1.0, 1.0))),
])
def test_envelope_integrals_match_quadrature(env):
    for lo, hi in [(0.5, 3.0), (2.0, 50.0), (7.0, 1e4)]:
        ref, _ = integrate.quad(lambda s: float(env(s)), lo, hi, epsrel=1e-12, limit=400)
        assert env.integral(lo, hi) == pytest.approx(ref, rel=1e-9)
    assert envelope_from_dict(env.to_dict()) == env


def test_dyadic_term_newtonian():
    f = PowerEnvelope(((4.0, 1.0),))
    assert dyadic_term(f, 5) == pytest.approx(math.sqrt(4.0 * math.log(2.0) / 32.0))


@given(st.integers(0, 2**31 - 1), st.sampled_from(KINDS))
def test_gradient_matches_central_differences(seed, kind):
    rng = np.random.default_rng(seed)
    masses = rng.uniform(0.5, 2.0, size=3)
    F = spec(kind, masses)
    x = ordered_configuration(rng, masses)
    assert potential_gradient_error(F, x) < 1e-6


@given(st.floats(0.1, 20.0), st.floats(0.1, 20.0), st.floats(0.1, 20.0))
def test_envelope_integral_additive(a, b, c):
    lo, mid, hi = sorted([a, b, c])
    f = YukawaEnvelope(1.0, 0.7)
    assert f.integral(lo, mid) + f.integral(mid, hi) == pytest.approx(f.integral(lo, hi), rel=1e-12, abs=1e-15)


def test_zero_spec_matches_masses():
    with pytest.raises(InputDomainError):
        zero([1.0, 1.0]).for_config(config([[0, 0], [1, 0], [2, 0]]))
