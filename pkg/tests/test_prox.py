import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import scalar_prox_bruteforce
from piag.errors import InputError
from piag.prox import Regularizer, eval_reg, prox

REGS = [
    Regularizer(),
    Regularizer("l1", lam=0.7),
    Regularizer("squared-l2", lam=1.3),
    Regularizer("box-indicator", lower=-0.5, upper=1.5),
    Regularizer("elastic-net", lam=0.4, lam2=0.9),
]


def test_zero_prox_is_identity():
    res = prox(Regularizer(), 0.37, [1.0, 2.0])
    np.testing.assert_array_equal(res.point, [1.0, 2.0])
    np.testing.assert_array_equal(res.subgradient, [0.0, 0.0])


def test_l1_soft_threshold_examples():
    reg = Regularizer("l1", lam=1.0)
    res = prox(reg, 1.0, [2.5])
    assert res.point[0] == 1.5 and res.subgradient[0] == 1.0
    res = prox(reg, 1.0, [-0.5])
    assert res.point[0] == 0.0 and res.subgradient[0] == -0.5


def test_squared_l2_convention_against_scalar_minimizer():
    # r(x) = (lam/2) x^2
    reg = Regularizer("squared-l2", lam=1.0)
    brute = scalar_prox_bruteforce(lambda t: 0.5 * t * t, 1.0, 4.0)
    assert brute == pytest.approx(2.0, abs=1e-8)
    assert prox(reg, 1.0, [4.0]).point[0] == pytest.approx(brute, abs=1e-8)


@pytest.mark.parametrize("reg", REGS, ids=lambda r: r.kind)
@pytest.mark.parametrize("eta", [0.1, 1.0, 3.0])
def test_prox_matches_scalar_bruteforce(reg, eta):
    rng = np.random.default_rng(0)
    lo = max(reg.lower, -50.0)
    hi = min(reg.upper, 50.0)
    for y in rng.normal(size=15) * 3:
        brute = scalar_prox_bruteforce(lambda t: eval_reg(reg, [t]), eta, y, lo, hi)
        assert prox(reg, eta, [y]).point[0] == pytest.approx(brute, abs=1e-7)


def test_eval_reg_examples():
    assert eval_reg(Regularizer("l1", lam=2.0), [1.0, -3.0]) == 8.0
    box = Regularizer("box-indicator", lower=0.0, upper=1.0)
    assert eval_reg(box, [0.5]) == 0.0
    assert eval_reg(box, [1.5]) == math.inf
    assert eval_reg(Regularizer(), [5.0, -2.0]) == 0.0
    assert eval_reg(Regularizer("squared-l2", lam=2.0), [1.0, 2.0]) == 5.0
    assert eval_reg(Regularizer("elastic-net", lam=1.0, lam2=2.0), [1.0, -1.0]) == 4.0


def test_prox_input_errors():
    with pytest.raises(InputError):
        prox(Regularizer(), 0.0, [1.0])
    with pytest.raises(InputError):
        prox(Regularizer(), -1.0, [1.0])
    with pytest.raises(InputError):
        prox(Regularizer(), 1.0, [math.nan])
    with pytest.raises(InputError):
        Regularizer("box-indicator", lower=1.0, upper=0.0)
    with pytest.raises(InputError):
        Regularizer("l2")


vectors = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3).map(np.array)
etas = st.floats(1e-3, 10.0)


@settings(max_examples=200, deadline=None)
@given(reg=st.sampled_from(REGS), eta=etas, y1=vectors, y2=vectors)
def test_prox_nonexpansive(reg, eta, y1, y2):
    p1, p2 = prox(reg, eta, y1).point, prox(reg, eta, y2).point
    assert np.linalg.norm(p1 - p2) <= np.linalg.norm(y1 - y2) * (1 + 1e-12) + 1e-12


@settings(max_examples=100, deadline=None)
@given(reg=st.sampled_from(REGS), eta=etas, y=vectors)
def test_prox_identity_and_subgradient(reg, eta, y):
    res = prox(reg, eta, y)
    np.testing.assert_allclose(res.point + eta * res.subgradient, y, rtol=1e-12, atol=1e-12)
    rng = np.random.default_rng(0)
    r0 = eval_reg(reg, res.point)
    for _ in range(50):
        z = res.point + rng.normal(size=3) * rng.choice([1e-3, 1.0, 10.0])
        if reg.kind == "box-indicator":
            z = np.clip(z, reg.lower, reg.upper)
        lhs = eval_reg(reg, z)
        rhs = r0 + res.subgradient @ (z - res.point)
        assert lhs >= rhs - 1e-10 * max(1.0, abs(rhs))


@pytest.mark.parametrize("reg", REGS, ids=lambda r: r.kind)
def test_prox_optimality_witness(reg):
    rng = np.random.default_rng(1)
    for eta in (0.2, 2.0):
        y = rng.normal(size=4) * 2
        res = prox(reg, eta, y)
        best = 0.5 * np.sum((res.point - y) ** 2) + eta * eval_reg(reg, res.point)
        for _ in range(1000):
            z = res.point + rng.normal(size=4) * rng.choice([1e-4, 1e-2, 1.0])
            val = 0.5 * np.sum((z - y) ** 2) + eta * eval_reg(reg, z)
            assert best <= val + 1e-14


def test_regularizer_convexity_inside_domain():
    rng = np.random.default_rng(2)
    for reg in REGS:
        for _ in range(200):
            x, y = rng.uniform(-0.5, 1.5, size=(2, 3))
            t = rng.random()
            assert eval_reg(reg, t * x + (1 - t) * y) <= (
                t * eval_reg(reg, x) + (1 - t) * eval_reg(reg, y) + 1e-12)
