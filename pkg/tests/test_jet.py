import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphfinsler import jet as J
from sphfinsler.errors import BaseMismatch, DivisionNearZero, OrderOutOfRange, SqrtNonPositive
from sphfinsler.jet import Jet, JetCaps, elementary, extract, seed_point

CAPS = JetCaps(2, 5)


def only_nonzero(jet, allowed):
    mask = np.ones(jet.caps.shape, dtype=bool)
    for ij in allowed:
        mask[ij] = False
    return np.all(jet.coeff[mask] == 0)


# -- examples ------------------------------------------------------------------

def test_seed_r_coordinate():
    r, _ = seed_point(1, 0, CAPS)
    assert r.coeff[0, 0] == 1 and r.coeff[1, 0] == 1
    assert only_nonzero(r, [(0, 0), (1, 0)])


def test_seed_s_coordinate():
    _, s = seed_point(2, 0.5, CAPS)
    assert s.coeff[0, 0] == 0.5 and s.coeff[0, 1] == 1
    assert only_nonzero(s, [(0, 0), (0, 1)])


def test_r_squared_second_coefficient():
    r, _ = seed_point(3, 0, CAPS)
    assert extract(elementary("mul", r, r), 2, 0) / 2 == 1
    assert (r * r).coeff[2, 0] == 1


def test_mul_r_r_at_two():
    r, _ = seed_point(2, 0, CAPS)
    sq = r * r
    assert sq.value == 4
    assert sq.extract(1, 0) == 4
    assert sq.coeff[2, 0] == 1


def test_sqrt_of_constant():
    c = Jet.constant(4.0, (np.float64(1), np.float64(0)), CAPS)
    root = elementary("sqrt", c)
    assert root.value == 2
    assert only_nonzero(root, [(0, 0)])


def test_exp_of_s():
    _, s = seed_point(1, 0, CAPS)
    e = elementary("exp", s)
    expected = [1, 1, 1 / 2, 1 / 6, 1 / 24, 1 / 120]
    np.testing.assert_allclose(e.coeff[0], expected, rtol=1e-15)
    assert np.all(e.coeff[1:] == 0)


def test_extract_third_s_derivative():
    _, s = seed_point(1, 1, CAPS)
    assert extract(s * s * s, 0, 3) == pytest.approx(6, rel=1e-15)


def test_extract_of_constant_is_zero():
    c = Jet.constant(3.5, (np.float64(1), np.float64(1)), CAPS)
    assert extract(c, 1, 0) == 0 and extract(c, 0, 4) == 0 and extract(c, 2, 5) == 0


def test_extract_mixed_partial():
    r, s = seed_point(1, 1, CAPS)
    assert extract(r * s, 1, 1) == 1


def test_extract_out_of_range():
    r, _ = seed_point(1, 1, CAPS)
    with pytest.raises(OrderOutOfRange):
        extract(r, 3, 0)
    with pytest.raises(OrderOutOfRange):
        extract(r, 0, 6)


def test_division_guard():
    r, s = seed_point(1, 0, CAPS)
    with pytest.raises(DivisionNearZero):
        r / s
    with pytest.raises(DivisionNearZero):
        elementary("div", r, r - 1.0)


def test_sqrt_guard():
    r, s = seed_point(1, 0, CAPS)
    with pytest.raises(SqrtNonPositive):
        s.sqrt()
    with pytest.raises(SqrtNonPositive):
        (-r).sqrt()


def test_base_mismatch():
    a, _ = seed_point(1, 0, CAPS)
    b, _ = seed_point(2, 0, CAPS)
    with pytest.raises(BaseMismatch):
        a * b


def test_caps_meet_on_combine():
    r, s = seed_point(1.0, 0.5, CAPS)
    small = r.truncate(JetCaps(1, 2))
    prod = small * s
    assert prod.caps == JetCaps(1, 2)


def test_unknown_operation():
    r, _ = seed_point(1, 0, CAPS)
    with pytest.raises(ValueError):
        elementary("tan", r)


def test_negative_caps_rejected():
    with pytest.raises(ValueError):
        JetCaps(-1, 2)


def test_batched_base_matches_scalar():
    r0 = np.array([0.7, 1.3])
    s0 = np.array([0.1, -0.4])
    rb, sb = seed_point(r0, s0, CAPS)
    fb = (rb * sb + 1.0).sqrt() / (rb + sb * sb)
    for k in range(2):
        r, s = seed_point(r0[k], s0[k], CAPS)
        f = (r * s + 1.0).sqrt() / (r + s * s)
        np.testing.assert_allclose(fb.coeff[..., k], f.coeff, rtol=1e-14)


def test_reexpand_s_is_exact_for_polynomials():
    r, s = seed_point(1.2, 0.0, JetCaps(1, 4))
    p = r * s * s * s + 2 * s * s - s
    moved = J.reexpand_s(p, 0.3, seed_point(1.2, 0.3, JetCaps(0, 0))[0].base, JetCaps(1, 3))
    r2, s2 = seed_point(1.2, 0.3, JetCaps(1, 3))
    direct = r2 * s2 * s2 * s2 + 2 * s2 * s2 - s2
    np.testing.assert_allclose(moved.coeff, direct.coeff, rtol=1e-13, atol=1e-15)


# -- invariants ----------------------------------------------------------------

coef = st.floats(-2.0, 2.0, allow_nan=False)


def random_jet(values, base=(np.float64(0.9), np.float64(0.2)), caps=CAPS):
    return Jet(np.array(values, dtype=float).reshape(caps.shape), base, caps)


jets = st.lists(coef, min_size=18, max_size=18)


def rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)


@settings(max_examples=60, deadline=None)
@given(jets, jets, jets)
def test_distributive(a, b, c):
    a, b, c = random_jet(a), random_jet(b), random_jet(c)
    lhs = a * (b + c)
    rhs = a * b + a * c
    scale = np.max(np.abs(a.coeff)) * (np.max(np.abs(b.coeff)) + np.max(np.abs(c.coeff))) + 1e-300
    assert np.max(np.abs(lhs.coeff - rhs.coeff)) / scale < 1e-14


@settings(max_examples=60, deadline=None)
@given(jets, jets, st.floats(1e-6, 1e3), st.sampled_from([-1.0, 1.0]))
def test_div_mul_roundtrip(a, b, magnitude, sign):
    # b = v (1 + eps): the guard threshold is a statement about the value, so the
    # remaining coefficients are drawn on the same scale as the value
    a = random_jet(a)
    eps = random_jet(b)
    eps.coeff[0, 0] = 0.0
    b = (eps * 0.25 + 1.0) * (sign * magnitude)
    back = (a * b) / b
    assert np.max(np.abs(back.coeff - a.coeff)) / (np.max(np.abs(a.coeff)) + 1e-300) < 1e-12


@settings(max_examples=60, deadline=None)
@given(jets, st.floats(1e-6, 1e3))
def test_sqrt_squared(a, magnitude):
    eps = random_jet(a)
    eps.coeff[0, 0] = 0.0
    x = (eps * 0.25 + 1.0) * magnitude
    root = x.sqrt()
    assert rel((root * root).coeff, x.coeff) < 1e-12


@settings(max_examples=40, deadline=None)
@given(jets)
def test_exp_log_inverse(a):
    x = random_jet(a)
    x.coeff[0, 0] = 1.0 + abs(x.coeff[0, 0])
    assert rel(x.log().exp().coeff, x.coeff) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), jets)
def test_pow_int_matches_repeated_product(k, a):
    x = random_jet(a)
    prod = x.like(1.0)
    for _ in range(k):
        prod = prod * x
    np.testing.assert_allclose(x.pow_int(k).coeff, prod.coeff, rtol=1e-12, atol=1e-12 * max(1, np.abs(prod.coeff).max()))


def _expression(r, s):
    return (J.exp(r * s) * J.sqrt(1.0 + r * r) / (2.0 + s) + J.log(3.0 + r * s * s)) * (r - 0.3 * s)


@pytest.mark.parametrize("r0,s0", [(0.8, 0.1), (1.3, -0.6), (2.0, 0.9)])
def test_jet_partials_match_finite_differences(r0, s0):
    r, s = seed_point(r0, s0, JetCaps(2, 2))
    f = _expression(r, s)

    def F(a, b):
        return float(_expression(np.float64(a), np.float64(b)))

    h = 1e-5
    fr = (F(r0 + h, s0) - F(r0 - h, s0)) / (2 * h)
    fs = (F(r0, s0 + h) - F(r0, s0 - h)) / (2 * h)
    assert f.extract(1, 0) == pytest.approx(fr, rel=1e-6)
    assert f.extract(0, 1) == pytest.approx(fs, rel=1e-6)

    # second partials: central differences of the first-order jet partials
    def first(a, b):
        rj, sj = seed_point(a, b, JetCaps(1, 1))
        g = _expression(rj, sj)
        return g.extract(1, 0), g.extract(0, 1)

    frr = (first(r0 + h, s0)[0] - first(r0 - h, s0)[0]) / (2 * h)
    fss = (first(r0, s0 + h)[1] - first(r0, s0 - h)[1]) / (2 * h)
    frs = (first(r0, s0 + h)[0] - first(r0, s0 - h)[0]) / (2 * h)
    assert f.extract(2, 0) == pytest.approx(frr, rel=1e-6)
    assert f.extract(0, 2) == pytest.approx(fss, rel=1e-6)
    assert f.extract(1, 1) == pytest.approx(frs, rel=1e-6)
    # plain second differences of the value function agree to their own noise level
    frr_plain = (F(r0 + 1e-4, s0) - 2 * F(r0, s0) + F(r0 - 1e-4, s0)) / 1e-8
    assert f.extract(2, 0) == pytest.approx(frr_plain, rel=1e-5, abs=1e-5)


def test_scalar_fast_paths_and_arrays():
    r, s = seed_point(1.5, 0.5, CAPS)
    assert (2 * r).value == 3 and (r * 2).value == 3
    assert (1 - s).value == 0.5 and (s - 1).value == -0.5
    assert (1 / r).value == pytest.approx(2 / 3)
    assert (r ** 2).coeff[2, 0] == pytest.approx(1)
    rb, sb = seed_point(np.array([1.0, 2.0]), np.array([0.0, 0.5]), CAPS)
    out = rb * np.array([2.0, 3.0])
    np.testing.assert_array_equal(out.value, [2.0, 6.0])
    assert math.isclose(float(J.sqrt(4.0)), 2.0)
