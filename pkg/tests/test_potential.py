import json
import math
from fractions import Fraction

import numpy as np
import pytest

import oracles
from thomlab.potential import (
    Potential,
    normalized_value,
    radial_derivative,
    spherical_gradient,
    bubble_sheet,
    bubble_sheet_symmetric,
    check_flow_potential,
    diagonal_powers,
    monomial,
    radial_power,
)

S2 = math.sqrt(2.0)


def bubble_terms():
    return [
        (Fraction(8, 3), (3, 0, 0)),
        (Fraction(8, 3), (0, 3, 0)),
        (S2, (1, 0, 2)),
        (S2, (0, 1, 2)),
    ]


def test_bubble_sheet_reference_values():
    g = bubble_sheet()
    assert g.n == 3
    assert g.evaluate([1.0, 0.0, 0.0]) == pytest.approx(8.0 / 3.0, rel=1e-15)
    w = np.array([-1.0, -1.0, 0.0]) / S2
    assert g.evaluate(w) == pytest.approx(-4.0 * S2 / 3.0, rel=1e-14)


def test_gradient_matches_symbolic_oracle():
    g = bubble_sheet()
    rng = np.random.default_rng(3)
    for _ in range(20):
        y = rng.uniform(-1.5, 1.5, size=3)
        expected = oracles.sympy_grad_at(bubble_terms(), list(y))
        np.testing.assert_allclose(g.gradient(y), expected, rtol=1e-12, atol=1e-14)


def test_gradient_matches_finite_differences():
    g = bubble_sheet()
    rng = np.random.default_rng(4)
    h = 1e-6
    for _ in range(10):
        y = rng.uniform(-1.0, 1.0, size=3)
        grad = g.gradient(y)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (g.evaluate(y + e) - g.evaluate(y - e)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-7, abs=1e-9)


def test_hessian_matches_symbolic_oracle():
    g = bubble_sheet()
    rng = np.random.default_rng(5)
    for _ in range(10):
        y = rng.uniform(-1.2, 1.2, size=3)
        expected = oracles.sympy_hess_at(bubble_terms(), list(y))
        np.testing.assert_allclose(g.hessian(y), expected, rtol=1e-12, atol=1e-13)


def test_hessian_matches_finite_differences():
    g = bubble_sheet()
    y = np.array([0.4, -0.7, 0.9])
    h = 1e-5
    hess = g.hessian(y)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd_row = (g.gradient(y + e) - g.gradient(y - e)) / (2 * h)
        np.testing.assert_allclose(hess[i], fd_row, rtol=1e-6, atol=1e-8)


def test_euler_identity_for_homogeneous():
    # <grad g, y> = p g(y) for degree-p homogeneous g
    rng = np.random.default_rng(6)
    for g, p in ((bubble_sheet(), 3), (radial_power(2, 4, 0.25), 4)):
        for _ in range(20):
            y = rng.uniform(-1.0, 1.0, size=g.n)
            lhs = float(np.dot(g.gradient(y), y))
            rhs = p * g.evaluate(y)
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-15)


def test_radial_derivative_bubble_axis():
    g = bubble_sheet()
    assert radial_derivative(g, [1.0, 0.0, 0.0]) == pytest.approx(8.0, rel=1e-14)


def test_spherical_gradient_vanishes_on_diagonal_ray():
    g = bubble_sheet()
    for a in (0.05, 0.3, 1.7):
        y = np.array([a, a, 0.0])
        sph = spherical_gradient(g, y)
        assert np.linalg.norm(sph) <= 1e-12 * max(1.0, np.linalg.norm(g.gradient(y)))


def test_normalized_value_on_decaying_ray():
    g = bubble_sheet()
    for t in (0.01, 0.2, 1.3):
        y = -np.array([t, t, 0.0]) / S2
        assert normalized_value(g, y, 3) == pytest.approx(-4.0 * S2 / 3.0, rel=1e-12)


def test_origin_helpers_raise():
    g = bubble_sheet()
    zero = np.zeros(3)
    for fn in (radial_derivative, spherical_gradient):
        with pytest.raises(ValueError):
            fn(g, zero)
    with pytest.raises(ValueError):
        normalized_value(g, zero, 3)


def test_canonicalization_merges_and_orders():
    # scrambled duplicates collapse to one canonical term list
    g = Potential(2, (((2, 0), 1.0), ((0, 2), 3.0), ((2, 0), 2.0)))
    assert g.terms == (((0, 2), 3.0), ((2, 0), 3.0))
    rng = np.random.default_rng(7)
    for _ in range(5):
        y = rng.uniform(-2, 2, size=2)
        exact = oracles.exact_eval(
            [(3, (0, 2)), (3, (2, 0))], [Fraction(v).limit_denominator(10**9) for v in y]
        )
        assert g.evaluate(y) == pytest.approx(float(exact), rel=1e-12)


def test_compensated_evaluation_survives_cancellation():
    g = Potential(2, (((2, 0), 1e16), ((1, 1), 1.0), ((0, 2), -1e16)))
    assert g.evaluate([1.0, 1.0]) == pytest.approx(1.0, abs=1e-6)


def test_homogeneous_components_and_order():
    g = diagonal_powers((4, 6))
    comps = g.homogeneous_components()
    assert sorted(comps) == [4, 6]
    assert g.order_p() == 4
    assert not g.is_homogeneous()
    lead = g.leading_part()
    assert lead.is_homogeneous() and lead.degree() == 4
    assert bubble_sheet().is_homogeneous()
    assert bubble_sheet().order_p() == 3


def test_radial_power_expansion():
    g = radial_power(2, 4)
    rng = np.random.default_rng(8)
    for _ in range(10):
        y = rng.uniform(-1.5, 1.5, size=2)
        assert g.evaluate(y) == pytest.approx(np.linalg.norm(y) ** 4, rel=1e-13)
    with pytest.raises(ValueError):
        radial_power(2, 3)


def test_partial_derivative_matches_symbolic():
    g = bubble_sheet()
    d0 = g.partial(0)
    y = [0.3, -0.8, 1.1]
    expected = oracles.sympy_grad_at(bubble_terms(), y)[0]
    assert d0.evaluate(y) == pytest.approx(expected, rel=1e-13)


def test_arithmetic_scaling_negation_addition():
    g = bubble_sheet()
    y = np.array([0.2, -0.4, 0.6])
    assert (-g).evaluate(y) == pytest.approx(-g.evaluate(y), rel=1e-15)
    assert g.scaled(2.5).evaluate(y) == pytest.approx(2.5 * g.evaluate(y), rel=1e-15)
    h = monomial(3, (0, 0, 2), 0.5)
    assert (g + h).evaluate(y) == pytest.approx(g.evaluate(y) + 0.5 * 0.36, rel=1e-12)


def test_serialization_round_trip():
    g = bubble_sheet_symmetric()
    g2 = Potential.from_json(g.to_json())
    assert g2 == g
    blob = json.loads(g.to_json())
    assert blob["n"] == 3
    y = np.array([0.1, 0.2, -0.3])
    assert g2.evaluate(y) == g.evaluate(y)


def test_flow_potential_guard_rejects_low_degree():
    bad = Potential(2, (((1, 0), 1.0), ((2, 0), 1.0)))
    with pytest.raises(ValueError):
        check_flow_potential(bad)
    check_flow_potential(bubble_sheet())
