"""Acceptance suite: one test per advertised guarantee of the laboratory.

Each test exercises a headline behaviour end to end at its stated tolerance
and runtime budget, so `pytest -v tests/test_acceptance.py` prints one
pass/fail line per guarantee.  Long shared runs come from the session
fixtures in conftest; their build times are tracked in ``fixture_wall`` so
budgets cover the runs themselves, not just the analysis.
"""
import math
import time

import numpy as np
import pytest

import oracles
from test_flow import _psi_action_checks
from thomlab.asymptotics import (
    RegionParams,
    characteristic_exponents,
    classify_decay,
    fit_rate,
    mz_trichotomy,
    region_membership,
    secant_analysis,
)
from thomlab.errors import BlowUp, UnstableModeExcited
from thomlab.flow import integrate_gradient, integrate_heavy_ball, vectorize
from thomlab.pde_spectral import CircleModel, SpectralState, run_series
from thomlab.potential import bubble_sheet, diagonal_powers, radial_power
from thomlab.reduction import ReducedModel, adams_simon_from_reduction, fit_reduced_polynomial
from thomlab.sphere_critical import ansatz_solution

BUBBLE_ALPHA0 = oracles.BUBBLE_ALPHA0          # 4 sqrt(2) / 3
NORM_LIMIT = oracles.GALERKIN_SQRT_T_NORM_LIMIT  # sqrt(2 pi / 3)


@pytest.fixture(scope="module")
def reduced_cubic():
    return ReducedModel(CircleModel.CUBIC, K=64)


def test_criterion_01_power_law_ansatz_is_exact_for_cubic_and_quartic():
    w3 = np.array([-1.0, -1.0, 0.0]) / math.sqrt(2.0)
    w4 = np.array([1.0, 0.0])
    cases = ((-bubble_sheet(), w3), (radial_power(2, 4, 0.25), w4))
    for g, w in cases:
        x0 = ansatz_solution(g, w, 10.0)
        t0 = time.perf_counter()
        traj = integrate_gradient(g, x0, t0=10.0, t_end=1.0e4)
        wall = time.perf_counter() - t0
        exact = ansatz_solution(g, w, traj.t)
        rel = np.linalg.norm(traj.y - exact, axis=1) \
            / np.linalg.norm(exact, axis=1)
        assert rel.max() <= 1e-6
        assert wall < 10.0


def test_criterion_02_rate_fit_recovers_order_and_prefactor(
        bubble_traj, quartic_traj, fixture_wall):
    t0 = time.perf_counter()
    fit_b = fit_rate(bubble_traj)
    fit_q = fit_rate(quartic_traj)
    wall = time.perf_counter() - t0
    assert fit_b.ell_star == pytest.approx(3.0, abs=1e-9)
    assert fit_b.alpha0 == pytest.approx(BUBBLE_ALPHA0, rel=0.02)
    assert fit_q.ell_star == pytest.approx(4.0, abs=1e-9)
    assert fit_q.alpha0 == pytest.approx(0.25, rel=0.02)
    total = wall + fixture_wall["bubble_traj"] + fixture_wall["quartic_traj"]
    assert total < 60.0


def test_criterion_03_secant_converges_to_nonnegative_critical_direction(
        bubble_traj, quartic_traj):
    for traj in (bubble_traj, quartic_traj):
        rep = secant_analysis(traj)
        assert rep.tail_arclength < 1e-4
        assert rep.criticality_residual < 1e-6
        assert rep.value_at_limit >= -1e-9


def test_criterion_04_circle_model_slow_decay_limit(slow_report, fixture_wall):
    assert slow_report.sqrt_t_norm_final == pytest.approx(NORM_LIMIT, rel=0.05)
    # doubling the mode cutoff and halving the step moves the extrapolated
    # limit by less than 0.1%
    assert slow_report.refinement_rel_change is not None
    assert slow_report.refinement_rel_change <= 1e-3
    assert fixture_wall["slow_report"] < 300.0


def test_criterion_05_even_harmonic_data_decays_exponentially_to_cos2():
    state = SpectralState.from_modes(64, cos={2: 0.05})
    series = run_series(state, t_end=3.0, dt=1e-4, model=CircleModel.CUBIC,
                        samples_per_decade=64)
    window = series.t >= 1.0
    slope = np.polyfit(series.t[window], np.log(series.norm[window]), 1)[0]
    assert slope == pytest.approx(-3.0, rel=0.02)
    final = series.xi[-1] / np.linalg.norm(series.xi[-1])
    target = np.zeros_like(final)
    target[2] = 1.0
    residual = min(np.linalg.norm(final - target),
                   np.linalg.norm(final + target))
    assert residual < 1e-6


def test_criterion_06_grouped_amplitudes_split_neutral_vs_stable(slow_report):
    xplus, xzero, xminus = slow_report.series.group_amplitudes()
    rep = mz_trichotomy(slow_report.series.t, xplus, xzero, xminus, b=3.0)
    assert rep.verdict == "neutral"

    b = 3.0
    t = np.linspace(0.0, 20.0, 400)
    rest = np.exp(-2.0 * b * t)
    rep = mz_trichotomy(t, rest, rest, np.exp(-b * t), b=b)
    assert rep.verdict == "stable_dominated"
    assert rep.measured_rate == pytest.approx(-b, rel=0.05)


def test_criterion_07_scalar_linear_cases_split_into_three_fast_classes(
        scalar_trio):
    traj, sys, lam = scalar_trio["oscillatory"]
    cls = classify_decay(traj, sys)
    assert cls.kind == "fast_oscillatory"
    assert cls.envelope_rate == pytest.approx(-0.5, abs=1e-4)

    traj, sys, lam = scalar_trio["resonant"]
    cls = classify_decay(traj, sys)
    assert cls.kind == "fast_resonant"
    assert cls.rate == pytest.approx(-0.5, abs=1e-4)

    traj, sys, lam = scalar_trio["eigen"]
    cls = classify_decay(traj, sys)
    gamma_plus, _ = oracles.scalar_rates(lam, -1.0)
    assert cls.kind == "fast_eigen"
    assert cls.rate == pytest.approx(gamma_plus, abs=1e-4)


def test_criterion_08_heavy_ball_slow_decay_and_damping_sweep():
    f = radial_power(2, 4, -0.25)
    products = {}
    for m, t_end in ((-0.5, 1.0e4), (-1.0, 1.0e5), (-2.0, 1.0e4)):
        y0 = np.array([0.06, 0.08])
        v0 = -f.gradient(y0) / m  # start on the quasistatic slow manifold
        traj = integrate_heavy_ball(f, m, y0, v0, t_end=t_end)
        if m == -1.0:
            radius = float(np.linalg.norm(traj.y[-1]))
            assert radius * math.sqrt(2.0 * traj.t[-1]) \
                == pytest.approx(1.0, rel=0.02)
        fit = fit_rate(traj)
        assert fit.ell_star == pytest.approx(4.0, abs=1e-9)
        products[m] = fit.alpha0 * abs(m)
    # alpha0 scales like 1/|m|: the products alpha0 * |m| coincide
    vals = list(products.values())
    assert max(vals) / min(vals) == pytest.approx(1.0, rel=0.02)
    assert products[-1.0] == pytest.approx(0.25, rel=0.02)


def test_criterion_09_mode_basis_relations_hold_on_random_ensemble():
    rng = np.random.default_rng(7)
    ms = (1.0, -1.0, 2.0, -2.0)
    for i in range(20):
        n = int(rng.integers(1, 9))
        raw = rng.normal(size=(n, n))
        A = (raw + raw.T) / 2.0
        sys = vectorize(A, ms[i % 4])
        _psi_action_checks(sys, tol=1e-10)


def test_criterion_10_reduction_consistency_and_cross_module_prefactor(
        reduced_cubic, slow_report):
    s0 = reduced_cubic.sample(np.zeros(2))
    assert np.linalg.norm(s0["h"]) == 0.0

    tight = ReducedModel(CircleModel.CUBIC, K=64, tol=1e-14)
    eps = 2e-4
    hp = tight.sample(np.array([eps, 0.0]))["h"]
    hm = tight.sample(np.array([-eps, 0.0]))["h"]
    assert np.linalg.norm(hp - hm) / (2.0 * eps) <= 1e-8

    rng = np.random.default_rng(5)
    fd_eps = 1e-5
    for _ in range(10):
        x = rng.uniform(-0.15, 0.15, size=2)
        grad = reduced_cubic.reduced_gradient(x)
        for i in range(2):
            e = np.zeros(2)
            e[i] = fd_eps
            fd = (reduced_cubic.sample(x + e)["f"]
                  - reduced_cubic.sample(x - e)["f"]) / (2.0 * fd_eps)
            assert grad[i] == pytest.approx(fd, abs=1e-6)

    fit = fit_reduced_polynomial(reduced_cubic)
    assert fit.p == 4
    c4 = fit.coefficients[(4, 0)]
    assert c4 == pytest.approx(oracles.REDUCED_QUARTIC_COEFF, rel=0.01)

    # the fitted quartic predicts the slow-decay amplitude limit
    predicted = (8.0 * c4) ** -0.5
    assert slow_report.limit_estimate == pytest.approx(predicted, rel=0.02)


def test_criterion_11_destabilized_model_admits_no_slow_decay():
    rng = np.random.default_rng(17)
    n_exit = 0
    n_fast = 0
    for run in range(10):
        if run % 3 == 2:
            # stable lattice draw: support in {2, 6} never feeds the
            # constant or kernel modes, so the run must decay
            ks = rng.choice([2, 6], size=int(rng.integers(1, 3)),
                            replace=False)
            cos = {int(k): float(rng.uniform(0.05, 0.12) * rng.choice([-1, 1]))
                   for k in ks}
            sin = {6: float(rng.uniform(0.03, 0.08))} if rng.random() < 0.5 \
                else {}
            t_end = 6.0
        else:
            # generic draw with both parities present
            k_odd = int(rng.choice([1, 3]))
            k_even = int(rng.choice([2, 4]))
            cos = {k_odd: float(rng.uniform(0.08, 0.15) * rng.choice([-1, 1])),
                   k_even: float(rng.uniform(0.08, 0.15) * rng.choice([-1, 1]))}
            sin = {int(rng.integers(1, 5)):
                   float(rng.uniform(0.05, 0.12) * rng.choice([-1, 1]))}
            t_end = 60.0
        state = SpectralState.from_modes(16, cos=cos, sin=sin)
        try:
            series = run_series(state, t_end=t_end, dt=1e-3,
                                model=CircleModel.CUBIC_FLIPPED)
        except (UnstableModeExcited, BlowUp):
            n_exit += 1
            continue
        if series.norm.max() > 0.5:
            n_exit += 1
            continue
        cls = classify_decay(series.as_trajectory())
        assert cls.kind == "fast_eigen"
        n_fast += 1
    assert n_exit + n_fast == 10
    assert n_exit >= 1 and n_fast >= 1

    verdict = adams_simon_from_reduction(
        ReducedModel(CircleModel.CUBIC_FLIPPED, K=32))
    assert verdict.verdict == "fails"


def test_criterion_12_characteristic_exponents_and_layer_disjointness():
    rep4 = characteristic_exponents(radial_power(2, 4, 0.25), r=0.05,
                                    n_samples=2000, seed=3)
    assert [c.q for c in rep4.clusters] == [4.0]
    assert rep4.clusters[0].share > 0.99

    rep3 = characteristic_exponents(-bubble_sheet(), r=0.05,
                                    n_samples=2000, seed=3)
    assert [c.q for c in rep3.clusters] == [3.0]
    assert rep3.clusters[0].share > 0.99

    g = diagonal_powers((4, 6))
    rep = characteristic_exponents(g, r=0.01, n_samples=40000, seed=12)
    assert sorted(c.q for c in rep.clusters) == [4.0, 6.0]

    in4 = in6 = in_both = 0
    for y in rep.points:
        p4 = region_membership(
            g, y, RegionParams(epsilon=0.1, r=0.01, omega=0.1, q=4.0))
        p6 = region_membership(
            g, y, RegionParams(epsilon=0.1, r=0.01, omega=0.1, q=6.0))
        in4 += p4.in_W_layer
        in6 += p6.in_W_layer
        in_both += p4.in_W_layer and p6.in_W_layer
    assert in4 > 0 and in6 > 0
    assert in_both == 0
