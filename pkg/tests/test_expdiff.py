"""Divided-difference kernel checked against high-precision mpmath arithmetic."""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zeno_lab.expdiff import exp_dd1, exp_dd2, phi1

def _dps_for(*xs):
    """Digits needed to resolve the smallest nonzero node separation."""
    seps = [abs(a - b) for a in xs for b in xs if a != b]
    if not seps:
        return 60
    return 60 + max(0, int(-mpmath.log10(min(seps))) + 1)


def mp_dd1(x0, x1):
    with mpmath.workdps(_dps_for(x0, x1)):
        a, b = mpmath.mpc(x0), mpmath.mpc(x1)
        if a == b:
            return mpmath.exp(a)
        return (mpmath.exp(b) - mpmath.exp(a)) / (b - a)


def mp_dd2(x0, x1, x2):
    with mpmath.workdps(_dps_for(x0, x1, x2)):
        a, b, c = mpmath.mpc(x0), mpmath.mpc(x1), mpmath.mpc(x2)
        if a == c:
            if a == b:
                return mpmath.exp(a) / 2
            a, b = b, a  # rotate so the outer pair differs
        return (mp_dd1(b, c) - mp_dd1(a, b)) / (c - a)


NODE_SETS = [
    (0.0, -0.5, -1.0),
    (0.0, 0.0, 0.0),
    (-3.0, -3.0, -7.0),
    (-200.0, -210.0, -0.5),
    (1e-9, -1e-9, 2e-9),
    (0.3, 0.3 + 1e-13, 0.3 - 1e-13),
    (-0.1 + 400j, -0.1 - 400j, -2.0),
    (-5 + 0.125j, -5 - 0.125j, -5.1),
    (-1 + 30j, -1 + 30.1j, -40.0),
    (-350.0, -350.2, -350.4),
    (2.0, 1.8, -3.0),
]


@pytest.mark.parametrize("nodes", NODE_SETS)
def test_dd2_matches_mpmath(nodes):
    got = complex(exp_dd2(*nodes))
    want = complex(mp_dd2(*nodes))
    scale = max(abs(want), 1e-300)
    assert abs(got - want) / scale < 5e-13


@pytest.mark.parametrize("nodes", [(n[0], n[1]) for n in NODE_SETS])
def test_dd1_matches_mpmath(nodes):
    got = complex(exp_dd1(*nodes))
    want = complex(mp_dd1(*nodes))
    scale = max(abs(want), 1e-300)
    assert abs(got - want) / scale < 5e-14


def test_phi1_small_and_large():
    assert phi1(0.0) == 1.0
    np.testing.assert_allclose(complex(phi1(1e-10 + 1e-10j)), 1 + (1e-10 + 1e-10j) / 2, rtol=1e-14)
    np.testing.assert_allclose(float(phi1(2.0)), (np.e**2 - 1) / 2, rtol=1e-15)


finite = st.floats(min_value=-300.0, max_value=30.0, allow_nan=False, allow_subnormal=False)
imagpart = st.floats(min_value=-1000.0, max_value=1000.0, allow_nan=False, allow_subnormal=False)


@st.composite
def nodes(draw):
    return complex(draw(finite), draw(imagpart))


@given(nodes(), nodes())
@settings(max_examples=300, deadline=None)
def test_dd1_hypothesis(x0, x1):
    got = complex(exp_dd1(x0, x1))
    want = complex(mp_dd1(x0, x1))
    assert abs(got - want) <= 5e-13 * max(abs(want), 1e-30) + 1e-290


@given(nodes(), nodes(), st.floats(min_value=1e-6, max_value=0.3, allow_subnormal=False))
@settings(max_examples=300, deadline=None)
def test_dd2_hypothesis_clustered_and_spread(x0, x1, eps):
    # a spread trio and a trio clustered around x0 at scale eps
    for trio in [(x0, x1, x0 + eps), (x0, x0 + eps * 1j, x0 - eps)]:
        got = complex(exp_dd2(*trio))
        want = complex(mp_dd2(*trio))
        assert abs(got - want) <= 1e-12 * max(abs(want), 1e-30) + 1e-290


@given(nodes(), nodes(), nodes())
@settings(max_examples=200, deadline=None)
def test_dd2_symmetric(x0, x1, x2):
    v = complex(exp_dd2(x0, x1, x2))
    for perm in [(x1, x0, x2), (x2, x1, x0), (x1, x2, x0)]:
        w = complex(exp_dd2(*perm))
        assert abs(v - w) <= 1e-12 * max(abs(v), 1e-30) + 1e-290


def test_vectorized_shapes():
    x0 = np.zeros((4, 3))
    x1 = np.full((4, 3), -0.5 + 2j)
    x2 = np.linspace(-1, 1, 12).reshape(4, 3)
    out = exp_dd2(x0, x1, x2)
    assert out.shape == (4, 3)
    single = complex(exp_dd2(0.0, -0.5 + 2j, x2[1, 1]))
    assert abs(out[1, 1] - single) < 1e-15
