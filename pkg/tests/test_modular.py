import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epryoung.errors import InvalidParameterError
from epryoung.modular import (
    ModularFrame,
    criterion_constant,
    criterion_root_function,
    criterion_threshold,
    decompose_momentum,
    decompose_position,
    evaluate_criterion,
    fringe_function,
    integer_part,
    modular_part,
    squeezing_s2,
    squeezing_s2_asymptotic,
    squeezing_s2_shifted,
)

FRAME = ModularFrame()


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(0.01, 100.0))
@settings(max_examples=200)
def test_position_reconstruction(x, d):
    frame = ModularFrame(d=d)
    dec = decompose_position(x, frame)
    assert -d / 2 <= dec.modular_part < d / 2
    assert dec.integer_part * d + dec.modular_part == pytest.approx(x, abs=1e-12 * max(1.0, abs(x)))


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_momentum_reconstruction(p):
    dec = decompose_momentum(p, FRAME)
    period = FRAME.momentum_period
    assert -period / 2 <= dec.modular_part < period / 2
    assert dec.integer_part * period + dec.modular_part == pytest.approx(p, abs=1e-12 * max(1.0, abs(p)))


def test_half_open_cell_edges():
    assert decompose_position(0.5, FRAME).integer_part == 1
    assert decompose_position(0.5, FRAME).modular_part == -0.5
    assert decompose_position(-0.5, FRAME).integer_part == 0
    assert decompose_position(-0.5, FRAME).modular_part == -0.5


def test_vectorized_parts_agree_with_scalar():
    x = np.linspace(-7.3, 9.1, 101)
    n = integer_part(x, 1.0)
    m = modular_part(x, 1.0)
    for xi, ni, mi in zip(x, n, m):
        dec = decompose_position(xi, FRAME)
        assert (dec.integer_part, dec.modular_part) == (ni, mi)


def test_criterion_constant_value_and_runtime():
    import epryoung.modular as mod

    mod._C_VALUE = None
    t0 = time.perf_counter()
    c = criterion_constant()
    assert time.perf_counter() - t0 < 1.0
    assert c == pytest.approx(0.0782350873517, abs=1e-11)
    assert criterion_threshold() == 2 * c


def test_criterion_root_brackets():
    assert criterion_root_function(0.07) > 0 > criterion_root_function(0.08)
    assert abs(criterion_root_function(criterion_constant())) < 1e-10


def test_s2_values():
    assert squeezing_s2(1) == 0.0
    assert squeezing_s2(2) == pytest.approx(3.0 / math.pi**2, rel=1e-15)
    assert squeezing_s2(2) == pytest.approx(0.3040, abs=5e-4)


def test_s2_asymptotic_at_30():
    assert squeezing_s2_asymptotic(30) == pytest.approx(squeezing_s2(30), rel=0.02)


def test_s2_shifted():
    assert squeezing_s2_shifted(5, 0.0) == pytest.approx(squeezing_s2(5), rel=1e-15)
    assert squeezing_s2_shifted(2, math.pi) == pytest.approx(-3.0 / math.pi**2, rel=1e-14)
    phis = np.linspace(0, 2 * math.pi, 400, endpoint=False)
    assert np.mean([squeezing_s2_shifted(4, p) for p in phis]) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 7])
def test_fringe_function(n):
    xi = np.linspace(0, 1, 2000, endpoint=False)
    f = fringe_function(n, xi)
    assert f.mean() == pytest.approx(1.0, abs=1e-12)
    assert fringe_function(n, 0.0) == pytest.approx(n)
    assert fringe_function(n, 3.0) == pytest.approx(n)
    assert np.all(f >= -1e-12)


def test_evaluate_criterion_ideal():
    var = (2 * math.pi) ** 2 / 6 * (1 - 3 / math.pi**2)
    rep = evaluate_criterion(var, 0.0, FRAME)
    assert rep.entangled
    assert rep.lhs / rep.threshold == pytest.approx(0.7414, abs=1e-3)


@given(st.floats(0.0, 100.0), st.floats(0.0, 3.0), st.integers(-20, 20))
def test_evaluate_criterion_scale_covariance(var_p, var_n, k):
    lam = 2.0**k
    a = evaluate_criterion(var_p, var_n, FRAME)
    b = evaluate_criterion(var_p / lam**2, var_n, FRAME.rescaled(lam))
    assert a.lhs == b.lhs


def test_evaluate_criterion_rejects_negative():
    with pytest.raises(InvalidParameterError):
        evaluate_criterion(-1.0, 0.0, FRAME)
