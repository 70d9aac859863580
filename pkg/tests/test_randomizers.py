import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from checkin_dp.oracle import hockey_stick
from checkin_dp.randomizers import (
    DiscreteMechanism,
    GradientRandomizer,
    clip,
    discrete_sample,
    gaussian_local_spec,
    privatize_gradient,
    randomized_response,
)


def rows_as_laws(mech):
    return [dict(zip(mech.outputs, row)) for row in mech.table]


def test_rr_keep_probability():
    rr = randomized_response(math.log(3))
    assert float(rr.prob(0, 0)) == pytest.approx(0.75, rel=1e-15)
    assert rr.row(0) == rr.row(1)[::-1]
    assert randomized_response(0.0).row(0) == (Fraction(1, 2), Fraction(1, 2))


@pytest.mark.parametrize("eps0", [0.1, 0.5, 1.0, 2.0])
def test_rr_is_exactly_tight(eps0):
    rr = randomized_response(eps0)
    p, q = rows_as_laws(rr)
    assert hockey_stick(p, q, eps0) == 0
    assert hockey_stick(p, q, eps0 * (1 - 1e-9)) > 0
    assert rr.epsilon0 == pytest.approx(eps0, abs=1e-12)
    assert rr.epsilon0 <= eps0 + 1e-9


def test_discrete_mechanism_validation():
    with pytest.raises(ValueError, match="sums to"):
        DiscreteMechanism((0, 1), ("a", "b"), ((0.5, 0.4), (0.5, 0.5)))
    with pytest.raises(ValueError, match="negative"):
        DiscreteMechanism((0,), ("a", "b"), ((1.5, -0.5),))
    with pytest.raises(ValueError, match="rows"):
        DiscreteMechanism((0, 1), ("a",), ((1.0,),))
    with pytest.raises(ValueError, match="repeat"):
        DiscreteMechanism((0, 0), ("a",), ((1.0,), (1.0,)))


def test_measured_epsilon_infinite_on_support_mismatch():
    mech = DiscreteMechanism((0, 1), ("a", "b"), ((1.0, 0.0), (0.5, 0.5)))
    assert mech.epsilon0 == math.inf


@settings(max_examples=100, deadline=None)
@given(g=arrays(np.float64, 5, elements=st.floats(-1e6, 1e6)), c=st.floats(1e-3, 1e3))
def test_clip_contractive_and_idempotent(g, c):
    once = clip(g, c)
    assert np.linalg.norm(once) <= c
    np.testing.assert_array_equal(clip(once, c), once)
    if np.linalg.norm(g) <= c:
        np.testing.assert_array_equal(once, g)


def test_clip_rescales_long_gradient():
    r = GradientRandomizer(1.0, 0.0, "gaussian", 3)
    g = np.array([2.0, 0.0, 0.0])
    out = privatize_gradient(r, g, np.random.default_rng(0))
    np.testing.assert_allclose(out, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(privatize_gradient(r, np.zeros(3), np.random.default_rng(0)), 0)


def test_batch_rows_clipped_independently():
    r = GradientRandomizer(1.0, 0.0, "gaussian", 2)
    out = privatize_gradient(r, np.array([[3.0, 4.0], [0.3, 0.4]]), np.random.default_rng(0))
    np.testing.assert_allclose(out, [[0.6, 0.8], [0.3, 0.4]])


@pytest.mark.parametrize("kind,scale,variance", [
    ("gaussian", 0.7, 0.49),
    ("laplace", 0.7, 2 * 0.49),
])
def test_noise_variance(kind, scale, variance):
    r = GradientRandomizer(1.0, scale, kind, 4)
    rng = np.random.default_rng(123)
    draws = privatize_gradient(r, np.zeros((100_000, 4)), rng)
    per_coord = draws.var(axis=0)
    assert np.all(np.abs(per_coord / variance - 1) < 0.03)


def test_same_seed_same_noise():
    r = GradientRandomizer(1.0, 1.0, "gaussian", 8)
    g = np.ones(8)
    a = privatize_gradient(r, g, np.random.default_rng(7))
    b = privatize_gradient(r, g, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()


def test_dimension_mismatch():
    r = GradientRandomizer(1.0, 1.0, "gaussian", 3)
    with pytest.raises(ValueError, match="dimension"):
        privatize_gradient(r, np.ones(4), np.random.default_rng(0))


def test_laplace_scale():
    r = GradientRandomizer.laplace_for(1.5, 0.5, 9)
    assert r.kind == "laplace"
    assert r.noise_scale == pytest.approx(2 * 1.5 * 3 / 0.5)


@pytest.mark.parametrize("kwargs", [
    dict(clip_norm=0.0, noise_scale=1.0),
    dict(clip_norm=1.0, noise_scale=-1.0),
    dict(clip_norm=1.0, noise_scale=1.0, kind="uniform"),
    dict(clip_norm=1.0, noise_scale=1.0, dimension=0),
])
def test_randomizer_validation(kwargs):
    with pytest.raises(ValueError):
        GradientRandomizer(**kwargs)


def test_gaussian_calibration():
    spec = gaussian_local_spec(GradientRandomizer(1.0, 20.0), 1e-6)
    assert spec.epsilon0 == pytest.approx(0.5298802526850473959852657, rel=1e-14)
    assert spec.delta0 == 1e-6
    sigma = 2 * math.sqrt(2 * math.log(1.25 / 1e-6))
    assert gaussian_local_spec(GradientRandomizer(1.0, sigma * 1.0000001), 1e-6).epsilon0 <= 1
    assert gaussian_local_spec(GradientRandomizer(1.0, 1e9), 1e-6).epsilon0 < 2e-8


def test_gaussian_calibration_rejects_eps0_above_one():
    # sigma = 10 calibrates to eps0 = 1.0597..., beyond the classical bound's validity.
    with pytest.raises(ValueError, match="1.0597"):
        gaussian_local_spec(GradientRandomizer(1.0, 10.0), 1e-6)
    with pytest.raises(ValueError):
        gaussian_local_spec(GradientRandomizer(1.0, 20.0), 1.0)
    with pytest.raises(ValueError):
        gaussian_local_spec(GradientRandomizer(1.0, 0.0), 1e-6)


def test_discrete_sample_frequencies():
    rr = randomized_response(math.log(3))
    out = discrete_sample(rr, [0] * 20_000, np.random.default_rng(1))
    assert np.mean(np.array(out) == 0) == pytest.approx(0.75, abs=0.01)
