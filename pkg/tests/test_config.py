import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import config, pair_direction
from manegeo.config import (Configuration, Ray, angle_between, base_point, cone_separation_check,
                            dist_to_ray, inner, is_collision_free, min_separation, norm,
                            segment_min_separation, separation_drift_check)
from manegeo.errors import InputDomainError

coords = st.floats(-50, 50, allow_nan=False)
bodies = st.integers(2, 4).flatmap(lambda n: arrays(float, (n, 2), elements=coords))


def test_weighted_norm_uses_masses():
    x = config([[1, 0], [0, 2]], [4.0, 1.0])
    assert norm(x) == pytest.approx(math.sqrt(4 * 1 + 1 * 4))
    assert inner(x, x) == pytest.approx(8.0)


def test_rejects_bad_shapes_and_masses():
    with pytest.raises(InputDomainError):
        Configuration(np.zeros((1, 2)))
    with pytest.raises(InputDomainError):
        Configuration(np.zeros((2, 1)))
    with pytest.raises(InputDomainError):
        Configuration(np.zeros((2, 2)), [1.0, 0.0])


def test_min_separation_three_bodies():
    x = config([[0, 0], [3, 4], [0, 1]])
    assert min_separation(x) == 1.0
    assert is_collision_free(x)
    assert not is_collision_free(config([[1, 1], [1, 1], [0, 0]]))


def test_json_round_trip():
    x = config([[0.1, -2], [3, 1e-300]], [2.0, 0.5])
    assert Configuration.from_json(x.to_json()) == x


def test_angle_between_examples():
    a = config([[1, 0], [0, 0]])
    b = config([[0, 1], [0, 0]])
    assert angle_between(a, b) == pytest.approx(math.pi / 2)
    assert angle_between(a, a) == 0.0
    assert angle_between(a, -a) == pytest.approx(math.pi)
    with pytest.raises(InputDomainError):
        angle_between(a, 0 * a)


def test_base_point_shift():
    a = pair_direction()
    x = config([[0, 0], [0, 0]])
    xs = base_point(x, a)
    assert min_separation(a) == pytest.approx(math.sqrt(2))
    assert norm(xs - x) == pytest.approx(50 / math.sqrt(2))
    with pytest.raises(InputDomainError):
        base_point(x, config([[0.5 ** 0.5, 0], [0.5 ** 0.5, 0]]))


def test_dist_to_ray_behind_origin():
    ray = Ray(config([[0, 0], [0, 0]]), config([[1, 0], [0, 0]]))
    assert dist_to_ray(config([[-3, 4], [0, 0]]), ray) == pytest.approx(5.0)
    assert dist_to_ray(config([[3, 4], [0, 0]]), ray) == pytest.approx(4.0)


def test_segment_min_separation_crossing():
    x = config([[-1, 0], [1, 0]])
    y = config([[1, 0], [-1, 0]])
    sep, s, pair = segment_min_separation(x, y)
    assert sep == 0.0 and s == 0.5 and pair == (0, 1)


def test_separation_drift_and_cone_checks():
    a = pair_direction(3)
    b = (a + 0.01 * config([[0, 1], [0, -1], [0, 0]])) / norm(a + 0.01 * config([[0, 1], [0, -1], [0, 0]]))
    assert separation_drift_check(a, b, 0.1)
    x = config([[0, 1], [1, 0], [2, 2]])
    s = 50 * (1 + norm(x)) / min_separation(a)
    assert cone_separation_check(x, a, b, s, 1e3)
    with pytest.raises(InputDomainError):
        cone_separation_check(x, a, b, s / 2, 1.0)


@given(bodies, arrays(float, 2, elements=coords))
def test_flat_norm_translation_invariant(b, shift):
    x = Configuration(b)
    assert min_separation(x + np.broadcast_to(shift, b.shape)) == pytest.approx(min_separation(x), abs=1e-9)


@given(bodies, st.floats(0.1, 10))
def test_flat_norm_homogeneous(b, c):
    x = Configuration(b)
    assert min_separation(c * x) == pytest.approx(c * min_separation(x), rel=1e-12, abs=1e-12)


@given(bodies, bodies)
def test_angle_symmetric_and_bounded(b1, b2):
    if b1.shape != b2.shape:
        return
    x, y = Configuration(b1), Configuration(b2)
    if norm(x) == 0 or norm(y) == 0:
        return
    t = angle_between(x, y)
    assert 0.0 <= t <= math.pi + 1e-15
    assert t == pytest.approx(angle_between(y, x), abs=1e-12)


@given(bodies)
def test_segment_separation_below_endpoints(b):
    x = Configuration(b)
    y = Configuration(b[::-1].copy())
    sep = segment_min_separation(x, y)[0]
    assert sep <= min(min_separation(x), min_separation(y)) + 1e-12
