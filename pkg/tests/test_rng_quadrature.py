import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdbal.errors import QuadratureError
from pdbal.quadrature import adaptive_gauss_legendre, composite_gauss_legendre, legendre_rule
from pdbal.rng import content_key, substream


def test_substreams_reproducible_and_distinct():
    a = substream(5, 1, 2).random(4)
    assert np.array_equal(a, substream(5, 1, 2).random(4))
    assert not np.array_equal(a, substream(5, 2, 1).random(4))
    assert not np.array_equal(a, substream(6, 1, 2).random(4))


def test_content_key():
    x = np.array([0.1, -2.0, 3.5])
    assert content_key(x) == content_key(x.copy())
    assert content_key(x) != content_key(x[::-1])
    assert 0 <= content_key(x) < 2**63


def test_legendre_rule_exact_on_polynomials():
    t, w = legendre_rule(8)
    for p in range(16):
        exact = 0.0 if p % 2 else 2.0 / (p + 1)
        assert np.sum(w * t**p) == pytest.approx(exact, abs=1e-14)


@given(st.floats(-3, 3), st.floats(0.1, 5))
def test_adaptive_matches_closed_form(a, width):
    b = a + width
    got = adaptive_gauss_legendre(lambda x, rows: np.exp(-x * x), a, b, nodes=16)[0]
    exact = 0.5 * math.sqrt(math.pi) * (math.erf(b) - math.erf(a))
    assert got == pytest.approx(exact, rel=1e-12, abs=1e-14)


def test_batched_rows_are_independent():
    lo, hi = np.array([0.0, 0.0]), np.array([1.0, math.pi])
    scale = np.array([1.0, 3.0])
    got = adaptive_gauss_legendre(lambda x, rows: scale[rows][:, None] * np.sin(x), lo, hi, nodes=8)
    assert got == pytest.approx([1 - math.cos(1), 6.0], rel=1e-12)
    assert composite_gauss_legendre(lambda x: x**2, [0.0], [3.0], 4, 3)[0] == pytest.approx(9.0, rel=1e-14)


def test_non_convergence_raises_with_diagnostics():
    with pytest.raises(QuadratureError) as err:
        adaptive_gauss_legendre(lambda x, rows: np.sign(np.sin(50 * x)) * x, 0.0, 1.0, nodes=4, max_panels=16)
    assert err.value.estimate is not None and err.value.panels is not None
