import math

import numpy as np
import pytest

import oracles
from thomlab.errors import BlowUp
from thomlab.flow import (
    ErrorModel,
    IntegrationControls,
    integrate_gradient,
    integrate_heavy_ball,
    project_coefficients,
    read_trajectory_csv,
    vectorize,
    write_trajectory_csv,
)
from thomlab.potential import bubble_sheet, monomial, radial_power

S2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# gradient flow


def test_radial_quartic_matches_closed_form(quartic_traj):
    # rdot = -r^3  =>  r(t) = (r0^-2 + 2t)^(-1/2)
    r = quartic_traj.norms()
    expected = oracles.radial_power_flow(0.1, 4, quartic_traj.t)
    np.testing.assert_allclose(r, expected, rtol=1e-6)


def test_bubble_radius_approaches_reciprocal_time(bubble_traj):
    # |y(t)| * t -> 1 / (beta0 p (p-2)) = (4 sqrt2)^-1 for the cubic
    late = bubble_traj.t >= 1e5
    product = bubble_traj.norms()[late] * bubble_traj.t[late]
    np.testing.assert_allclose(product, 1.0 / (4.0 * S2), rtol=0.02)


def test_gradient_flow_dissipates_potential(quartic_traj):
    g = quartic_traj.potential()
    vals = np.array([g.evaluate(yk) for yk in quartic_traj.y])
    assert np.all(np.diff(vals) <= 1e-12)


def test_time_reversal_returns_to_start():
    g = radial_power(2, 4, 0.25)
    y0 = np.array([0.06, -0.08])
    fwd = integrate_gradient(g, y0, t_end=5.0)
    back = integrate_gradient(-g, fwd.y[-1], t_end=float(fwd.t[-1]))
    np.testing.assert_allclose(back.y[-1], y0, rtol=1e-8)


def test_sample_grid_and_velocity_rows(quartic_traj):
    t = quartic_traj.t
    assert t[0] == 0.0 and np.all(np.diff(t) > 0)
    g = radial_power(2, 4, 0.25)
    # v rows are the exact right-hand side at the samples
    for k in (0, len(t) // 2, len(t) - 1):
        np.testing.assert_allclose(
            quartic_traj.v[k], -g.gradient(quartic_traj.y[k]), rtol=1e-12, atol=1e-300
        )


def test_start_validation():
    g = radial_power(2, 4, 0.25)
    with pytest.raises(ValueError):
        integrate_gradient(g, [0.6, 0.0], t_end=10.0)  # outside validity ball
    with pytest.raises(ValueError):
        integrate_gradient(g, [0.1, 0.0], t0=5.0, t_end=5.0)


def test_ascending_flow_raises_blowup_with_partial_path():
    g = radial_power(2, 4, -0.25)
    with pytest.raises(BlowUp) as exc:
        integrate_gradient(g, [0.1, 0.0], t_end=1e4)
    err = exc.value
    assert err.t_event > 0
    assert err.trajectory is not None and err.trajectory.t.size > 4
    assert err.trajectory.norms()[-1] <= 1.01  # stopped near the guard


def test_injected_error_respects_its_own_bound():
    g = bubble_sheet()
    model = ErrorModel(rho=0.75, N=4, b_N=2.0, theta=0.5, seed=11)
    err = model.realize(g)
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = rng.uniform(-0.2, 0.2, size=3)
        t = float(rng.uniform(0.0, 100.0))
        r = np.linalg.norm(y)
        bound = 0.5 * 2.0 * (r**0.75 * np.linalg.norm(g.gradient(y)) + r**4)
        assert np.linalg.norm(err(t, y)) <= bound * (1 + 1e-12)


# ---------------------------------------------------------------------------
# heavy-ball flow


def test_heavy_ball_matches_matrix_exponential(scalar_trio):
    for name, (traj, _, lam) in scalar_trio.items():
        exact = np.array(
            [
                oracles.companion_evolve(np.array([[lam]]), -1.0, [0.05], [0.0], tk)[0][0]
                for tk in traj.t
            ]
        )
        assert np.max(np.abs(traj.y[:, 0] - exact)) < 5e-8, name


def test_heavy_ball_oscillation_envelope_and_frequency(scalar_trio):
    traj, _, lam = scalar_trio["oscillatory"]
    u = traj.y[:, 0]
    # zero crossings at spacing pi / beta, beta = sqrt(lam - m^2/4) = sqrt(3)/2
    crossings = traj.t[np.nonzero(np.diff(np.sign(u)))[0]]
    beta = math.sqrt(3.0) / 2.0
    assert len(crossings) == int(beta * 30.0 / math.pi)
    # late samples are geometric in t, so crossing times carry grid error
    gaps = np.diff(crossings)
    np.testing.assert_allclose(gaps, math.pi / beta, rtol=5e-2)
    # peak envelope decays like e^(m t / 2)
    peaks_idx = [k for k in range(1, len(u) - 1) if abs(u[k]) >= abs(u[k - 1]) and abs(u[k]) >= abs(u[k + 1])]
    pt, pu = traj.t[peaks_idx], np.abs(u[peaks_idx])
    keep = pu > 1e-8
    slope = np.polyfit(pt[keep], np.log(pu[keep]), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.01)


def test_heavy_ball_resonant_polynomial_envelope(scalar_trio):
    traj, _, _ = scalar_trio["resonant"]
    # u = (a + b t) e^(m t / 2) with a = 0.05, b = a/2 for u'(0) = 0
    expected = (0.05 + 0.025 * traj.t) * np.exp(-traj.t / 2.0)
    np.testing.assert_allclose(traj.y[:, 0], expected, atol=5e-8)


def test_heavy_ball_dissipates_energy(scalar_trio):
    traj, _, lam = scalar_trio["oscillatory"]
    # E = |v|^2/2 - f(y) is non-increasing when m < 0
    f = traj.potential()
    f_vals = np.array([f.evaluate(yk) for yk in traj.y])
    energy = 0.5 * traj.v[:, 0] ** 2 - f_vals
    assert np.all(np.diff(energy) <= 1e-12)


def test_overdamped_limit_approaches_gradient_flow():
    f = monomial(1, (4,), -0.25)
    g = monomial(1, (4,), 0.25)
    gf = integrate_gradient(g, [0.1], t_end=50.0)
    errs = []
    for c in (1.0, 10.0, 100.0):
        ctrl = IntegrationControls(method="LSODA")
        v0 = -f.gradient([0.1]) / (-c)
        hb = integrate_heavy_ball(f, -c, [0.1], v0, t_end=50.0 * c, ctrl=ctrl)
        r_hb = np.interp(gf.t * c, hb.t, np.abs(hb.y[:, 0]))
        errs.append(float(np.max(np.abs(r_hb - np.abs(gf.y[:, 0])))))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-5


# ---------------------------------------------------------------------------
# linearization and mode projection


def test_vectorize_scalar_classes():
    s = vectorize([[0.0]], 1.0)
    assert s.I3 == (0,) and s.I1 == s.I2 == s.I4 == ()
    assert s.gamma_plus[0] == pytest.approx(1.0) and s.gamma_minus[0] == pytest.approx(0.0)
    s2 = vectorize([[0.25]], -1.0)
    assert s2.I2 == (0,)
    s3 = vectorize([[1.0]], -1.0)
    assert s3.I1 == (0,)
    assert s3.betas[0] == pytest.approx(math.sqrt(0.75), rel=1e-12)
    s4 = vectorize([[-1.0]], -1.0)
    assert s4.I4 == (0,)
    assert s4.gamma_plus[0] == pytest.approx(-0.5 + math.sqrt(1.25), rel=1e-12)


def _psi_action_checks(sys, tol=1e-10):
    L, G, psi = sys.L, sys.G, sys.psi
    scale = max(1.0, np.linalg.norm(L))
    # G-orthonormality of the mode basis
    gram = psi.T @ G @ psi
    assert np.max(np.abs(gram - np.eye(gram.shape[0]))) < tol
    m = sys.m
    cols = {lab: psi[:, k] for k, lab in enumerate(sys.psi_labels)}
    for k, (idx, lab) in enumerate(sys.psi_labels):
        v = psi[:, k]
        Lv = L @ v
        if lab == "plus":
            want = sys.gamma_plus[idx] * v
        elif lab == "minus":
            want = sys.gamma_minus[idx] * v
        elif lab == "osc_1":
            want = (m / 2) * v + sys.betas[idx] * cols[(idx, "osc_2")]
        elif lab == "osc_2":
            want = -sys.betas[idx] * cols[(idx, "osc_1")] + (m / 2) * v
        elif lab == "res_3":
            want = (m / 2) * v + cols[(idx, "res_4")]
        elif lab == "res_4":
            want = (m / 2) * v
        else:
            raise AssertionError(lab)
        assert np.max(np.abs(Lv - want)) < tol * scale, lab
    # adjoint: <Lx, y>_G = <x, L_adj y>_G
    Ladj = sys.adjoint()
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = rng.normal(size=L.shape[0])
        y = rng.normal(size=L.shape[0])
        lhs = (L @ x) @ G @ y
        rhs = x @ G @ (Ladj @ y)
        assert abs(lhs - rhs) < tol * scale * np.linalg.norm(x) * np.linalg.norm(y)


def test_mode_basis_relations_random_system():
    rng = np.random.default_rng(42)
    B = rng.normal(size=(6, 6))
    A = (B + B.T) / 2.0
    for m in (-1.0, 2.0):
        _psi_action_checks(vectorize(A, m))


def test_project_coefficients_parseval_and_reconstruction():
    rng = np.random.default_rng(9)
    B = rng.normal(size=(5, 5))
    A = (B + B.T) / 2.0
    sys = vectorize(A, -1.5)
    u = rng.normal(size=5)
    du = rng.normal(size=5)
    co = project_coefficients(sys, u, du)
    q = np.concatenate([u, du - (-1.5 / 2.0) * u])
    np.testing.assert_allclose(co.q, q, rtol=1e-12)
    recon = sys.psi @ co.xi
    np.testing.assert_allclose(recon, q, rtol=0, atol=1e-10 * np.linalg.norm(q))
    assert q @ sys.G @ q == pytest.approx(float(co.xi @ co.xi), rel=1e-10)


def test_projected_coefficients_evolve_by_stated_rates():
    # hyperbolic scalar mode: xi_plus/minus evolve like e^(gamma t)
    lam, m = 0.1, -1.0
    sys = vectorize([[lam]], m)
    tau = 2.5
    u0, du0 = [0.05], [0.01]
    u1, du1 = oracles.companion_evolve(np.array([[lam]]), m, u0, du0, tau)
    c0 = project_coefficients(sys, u0, du0)
    c1 = project_coefficients(sys, u1, du1)
    for k, (idx, lab) in enumerate(sys.psi_labels):
        gamma = sys.gamma_plus[idx] if lab == "plus" else sys.gamma_minus[idx]
        assert c1.xi[k] == pytest.approx(c0.xi[k] * math.exp(gamma * tau), rel=1e-10)


# ---------------------------------------------------------------------------
# serialization


def test_trajectory_csv_round_trip(tmp_path, scalar_trio):
    traj, _, _ = scalar_trio["oscillatory"]
    path = write_trajectory_csv(traj, tmp_path / "traj.csv")
    back = read_trajectory_csv(path)
    np.testing.assert_allclose(back.t, traj.t, rtol=1e-15)
    np.testing.assert_allclose(back.y, traj.y, rtol=1e-15)
    np.testing.assert_allclose(back.v, traj.v, rtol=1e-15)
    assert back.meta.get("state_velocity") is True
    assert (tmp_path / "traj.meta.json").exists()
