"""Tail diagnostics for decaying trajectories.

Everything here consumes sampled trajectories (geometric in time for the
tail) and extracts the quantitative decay data:

* ``fit_rate``: decay order ``ell_star`` and leading normalized value
  ``alpha0`` for power-law tails ``|y| ~ (alpha0 ell (ell-2) t)**(-1/(ell-2))``,
  validated through the compensated ratio ``kappa(t)/t -> 1``;
* ``classify_decay``: slow power law versus the three exponential
  mechanisms (pure eigendirection, resonant ``t e^{mt/2}``, oscillatory
  envelope);
* ``secant_analysis``: convergence of ``y/|y|``, tail arclength, the
  arclength-to-radius ratio, and the criticality residual of the limit;
* region membership and empirical characteristic exponents of a potential
  near the origin;
* the normalized-value monitor (with its almost-monotone Lyapunov check)
  and the three-way splitting test for grouped mode amplitudes;
* an a-posteriori check of the decay envelope and error-bound hypotheses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    EmptyRegion,
    ExponentialTail,
    InsufficientWindow,
    NonConvergentSecant,
)
from .flow import LinearizedSystem, Trajectory
from .potential import Potential, normalized_value, radial_derivative, spherical_gradient

__all__ = [
    "RateFit",
    "DecayClass",
    "Slow",
    "FastEigen",
    "FastOscillatory",
    "FastResonant",
    "Undetermined",
    "RegionParams",
    "SecantReport",
    "ExponentReport",
    "GStarReport",
    "MZReport",
    "A1A2Report",
    "fit_rate",
    "classify_decay",
    "secant_analysis",
    "region_membership",
    "characteristic_exponents",
    "monitor_gstar",
    "mz_trichotomy",
    "verify_A1_A2",
]


# ---------------------------------------------------------------------------
# shared helpers


def _tail_window(t: np.ndarray, r: np.ndarray, decades: float,
                 min_points: int = 12) -> np.ndarray:
    good = (t > 0) & (r > 0) & np.isfinite(r)
    if good.sum() < min_points:
        raise InsufficientWindow("too few positive samples in the tail")
    t_hi = t[good].max()
    mask = good & (t >= t_hi / 10.0**decades)
    span = t[mask].max() / t[mask].min()
    if mask.sum() < min_points or span < 10.0 ** (decades * 0.8):
        raise InsufficientWindow(
            f"tail window covers only {math.log10(span):.2f} decades")
    return mask


def _affine_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares y ~ a*x + b; returns (a, b, rms residual)."""
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def _snap_rational(value: float, max_denominator: int, rtol: float,
                   candidates=None) -> tuple[float, bool]:
    """Snap to the simplest nearby rational (smallest denominator wins)."""
    if candidates is not None:
        best = min(candidates, key=lambda c: abs(float(c) - value))
        if abs(float(best) - value) <= rtol * abs(value):
            return float(best), True
        return value, False
    for den in range(1, max_denominator + 1):
        num = round(value * den)
        if abs(num / den - value) <= rtol * abs(value):
            return float(Fraction(num, den)), True
    return value, False


# ---------------------------------------------------------------------------
# rate extraction


@dataclass
class RateFit:
    """Power-law decay fit ``|y| ~ (alpha0 ell (ell-2) t)**(-1/(ell-2))``."""

    ell_star: float
    alpha0: float
    fit_window: tuple[float, float]
    residual: float          # worst affine-model misfit of kappa, relative
    method: str
    ell_raw: float
    snapped: bool

    def to_dict(self) -> dict:
        return {
            "ell_star": self.ell_star, "alpha0": self.alpha0,
            "fit_window": list(self.fit_window), "residual": self.residual,
            "method": self.method, "ell_raw": self.ell_raw,
            "snapped": self.snapped,
        }


def _exponential_screen(t, logr):
    """RMS residuals of affine fits in log-log and log-linear coordinates."""
    slope_ll, _, r_ll = _affine_fit(np.log(t), logr)
    slope_lin, _, r_lin = _affine_fit(t / t.max(), logr)
    return slope_ll, r_ll, slope_lin, r_lin


def _kappa_misfit(ell: float, t: np.ndarray, r: np.ndarray) -> float:
    kappa = r ** (2.0 - ell) / (ell * (ell - 2.0))
    a, b, _ = _affine_fit(t, kappa)
    return float(np.sqrt(np.mean(((kappa - (a * t + b)) / kappa) ** 2)))


def fit_rate(traj: Trajectory, window_decades: float = 2.0,
             candidates=None, max_denominator: int = 64,
             snap_rtol: float = 0.01, ell_max: float = 12.0,
             kappa_reject: float = 0.5) -> RateFit:
    """Fit the decay order and leading normalized value of a power-law tail.

    The decay law makes ``kappa(t) = |y|**(2-ell) / (ell (ell-2))`` affine in
    t at the true order (slope ``alpha0``, offset set by the initial data);
    the raw order is found by minimizing the relative misfit of that affine
    model over ell, which is immune to the offset-induced bias that a plain
    log-log slope picks up on finite windows.  The raw order is snapped to
    the simplest rational within ``snap_rtol`` (denominator up to
    ``max_denominator``, or an explicit candidate list); ``alpha0`` and the
    reported residual (worst relative misfit) come from the affine fit at
    the snapped order, and a large residual rejects the fit.

    Raises :class:`ExponentialTail` when the tail is exponential rather than
    a power law and :class:`InsufficientWindow` when fewer than the
    requested decades are resolved (or the model validation fails).
    """
    t_all = np.asarray(traj.t, dtype=float)
    r_all = traj.norms()
    mask = _tail_window(t_all, r_all, window_decades)
    t, r = t_all[mask], r_all[mask]
    logr = np.log(r)

    slope_ll, r_ll, _, r_lin = _exponential_screen(t, logr)
    # a non-decaying tail is "not enough data", not an exponential tail
    if slope_ll >= -1e-6:
        raise InsufficientWindow("tail norm is not decaying")
    if r_lin < 0.5 * r_ll:
        raise ExponentialTail(
            "tail is closer to exponential than to a power law "
            f"(log-linear rms {r_lin:.2e} vs log-log rms {r_ll:.2e})")

    grid = np.arange(2.05, ell_max + 0.025, 0.05)
    mis = [_kappa_misfit(ell, t, r) for ell in grid]
    k = int(np.argmin(mis))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(_kappa_misfit, args=(t, r), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-8})
    ell_raw = float(res.x)
    ell_star, snapped = _snap_rational(ell_raw, max_denominator, snap_rtol,
                                       candidates)
    if ell_star <= 2.0:
        raise InsufficientWindow(f"fitted order {ell_star:.4f} is not > 2")

    kappa = r ** (2.0 - ell_star) / (ell_star * (ell_star - 2.0))
    alpha0, offset, _ = _affine_fit(t, kappa)
    if alpha0 <= 0:
        raise InsufficientWindow("compensated quantity kappa is not growing")
    residual = float(np.max(np.abs(kappa - (alpha0 * t + offset))
                            / (alpha0 * t)))
    if residual > kappa_reject:
        raise InsufficientWindow(
            f"compensated quantity kappa is not affine in t "
            f"(residual {residual:.3f})")
    return RateFit(ell_star=float(ell_star), alpha0=alpha0,
                   fit_window=(float(t.min()), float(t.max())),
                   residual=residual, method="kappa-affine-argmin",
                   ell_raw=ell_raw, snapped=snapped)


# ---------------------------------------------------------------------------
# decay classification


@dataclass
class DecayClass:
    kind: str = field(init=False, default="undetermined")

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass
class Slow(DecayClass):
    rate_fit: RateFit
    direction: np.ndarray | None = None

    def __post_init__(self):
        self.kind = "slow"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate_fit": self.rate_fit.to_dict(),
                "direction": None if self.direction is None
                else [float(x) for x in self.direction]}


@dataclass
class FastEigen(DecayClass):
    rate: float
    direction: np.ndarray

    def __post_init__(self):
        self.kind = "fast_eigen"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate,
                "direction": [float(x) for x in self.direction]}


@dataclass
class FastOscillatory(DecayClass):
    envelope_rate: float
    frequencies: tuple[float, ...]

    def __post_init__(self):
        self.kind = "fast_oscillatory"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "envelope_rate": self.envelope_rate,
                "frequencies": list(self.frequencies)}


@dataclass
class FastResonant(DecayClass):
    rate: float              # envelope exponent of |y| / t

    def __post_init__(self):
        self.kind = "fast_resonant"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


@dataclass
class Undetermined(DecayClass):
    diagnostics: dict

    def __post_init__(self):
        self.kind = "undetermined"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "diagnostics": {
            k: (float(v) if np.isscalar(v) else str(v))
            for k, v in self.diagnostics.items()}}


def _secant_oscillation(t: np.ndarray, y: np.ndarray,
                        decades: float = 1.0) -> tuple[float, np.ndarray]:
    r = np.linalg.norm(y, axis=1)
    good = r > 0
    s = y[good] / r[good, None]
    tg = t[good]
    mask = tg >= tg[-1] / 10.0**decades
    tail = s[mask]
    last = tail[-1]
    dots = np.clip(tail @ last, -1.0, 1.0)
    return float(np.max(np.arccos(dots))), last


def _zero_crossing_frequency(t: np.ndarray, w: np.ndarray) -> float | None:
    sign = np.sign(w)
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(idx) < 4:
        return None
    # linear interpolation of each crossing time
    tc = t[idx] - w[idx] * (t[idx + 1] - t[idx]) / (w[idx + 1] - w[idx])
    span = tc[-1] - tc[0]
    if span <= 0:
        return None
    return float(math.pi * (len(tc) - 1) / span)


def _log_rate(t: np.ndarray, x: np.ndarray) -> float | None:
    """Affine slope of log|x| vs t, or None when too few usable samples."""
    ax = np.abs(x)
    good = ax > 0
    if good.sum() < 6:
        return None
    slope, _, _ = _affine_fit(t[good], np.log(ax[good]))
    return float(slope)


def _classify_by_modes(traj: Trajectory, sys: LinearizedSystem,
                       mask: np.ndarray, t: np.ndarray) -> DecayClass | None:
    """Exponential classification in the coordinates of the adapted basis.

    Projecting the pair (y, y' - (m/2) y) onto the eigenmodes turns the
    linear dynamics into decoupled scalar laws that are exactly exponential
    (no algebraic transients), so the fitted rates are exact up to solver
    noise.  Returns None when the projections are degenerate, letting the
    caller fall back to norm-profile heuristics.
    """
    phi = sys.eigvecs
    y = traj.y[mask]
    v = traj.v[mask]
    a = y @ phi                       # position coordinates per mode
    s = (v - (sys.m / 2.0) * y) @ phi   # shifted-velocity coordinates

    late = t >= t.max() / math.sqrt(10.0)
    if late.sum() < 8:
        late = np.ones(len(t), dtype=bool)
    power = np.sqrt(np.mean(a[late] ** 2, axis=0))
    if not np.any(power > 0):
        return None
    i_dom = int(np.argmax(power))
    t_late = t[late]

    if i_dom in sys.I1:
        active = [i for i in sys.I1 if power[i] >= 1e-3 * power[i_dom]]
        energy = np.zeros(len(t))
        freqs = []
        for i in active:
            energy += a[:, i] ** 2 + (s[:, i] / sys.betas[i]) ** 2
            fr = _zero_crossing_frequency(t, a[:, i])
            if fr is not None:
                freqs.append(fr)
        good = energy > 0
        if good.sum() < 8:
            return None
        slope, _, _ = _affine_fit(t[good], 0.5 * np.log(energy[good]))
        uniq: list[float] = []
        for fr in sorted(freqs):
            if not uniq or abs(fr - uniq[-1]) > 0.05 * fr:
                uniq.append(fr)
        return FastOscillatory(envelope_rate=float(slope),
                               frequencies=tuple(uniq))

    if i_dom in sys.I2:
        # s is exactly exponential for resonant modes; a carries the t factor
        s_late, a_late = s[late, i_dom], a[late, i_dom]
        if np.max(np.abs(s_late)) > 1e-10 * np.max(np.abs(a_late)):
            rate = _log_rate(t_late, s_late)
        else:
            rate = _log_rate(t_late, a_late)
        if rate is None:
            return None
        return FastResonant(rate=rate)

    # hyperbolic pair: xi_pm = a +- s/delta isolate the two exponentials
    delta = sys.gamma_plus[i_dom] - sys.m / 2.0
    xi_p = a[:, i_dom] + s[:, i_dom] / delta
    xi_m = a[:, i_dom] - s[:, i_dom] / delta
    use_plus = (np.sqrt(np.mean(xi_p[late] ** 2))
                >= np.sqrt(np.mean(xi_m[late] ** 2)))
    rate = _log_rate(t_late, xi_p[late] if use_plus else xi_m[late])
    if rate is None:
        return None
    if rate >= -1e-12:
        return None                  # dominant mode is not decaying
    sign = 1.0 if a[late, i_dom][-1] >= 0 else -1.0
    return FastEigen(rate=rate, direction=sign * phi[:, i_dom])


def classify_decay(traj: Trajectory, sys: LinearizedSystem | None = None,
                   window_decades: float = 2.0,
                   secant_tol: float = 1e-3) -> DecayClass:
    """Classify the tail of a decaying trajectory.

    Slow (power-law) tails are recognized by an affine log-log profile and
    delegated to :func:`fit_rate`.  For exponential tails, when the
    linearized system and velocities are available the verdict is read off
    the mode coordinates (oscillatory / resonant / hyperbolic, with exact
    exponential rates); otherwise the split falls back to norm-profile
    heuristics: a converged secant with rate matching m/2 and a flat
    ``|y| e^{-mt/2} / t`` ratio is resonant, a converged secant otherwise is
    a pure eigendirection, and a persistently rotating secant is oscillatory
    with a peak-based envelope.
    """
    t_all = np.asarray(traj.t, dtype=float)
    r_all = traj.norms()
    try:
        mask = _tail_window(t_all, r_all, window_decades)
    except InsufficientWindow:
        mask = (t_all > 0) & (r_all > 0)
        if mask.sum() < 8:
            return Undetermined({"reason": "too few usable samples"})
    t, r = t_all[mask], r_all[mask]
    logr = np.log(r)
    slope_ll, r_ll, slope_sc, r_lin = _exponential_screen(t, logr)
    diagnostics = {"loglog_rms": r_ll, "loglin_rms": r_lin,
                   "loglog_slope": slope_ll}

    m = sys.m if sys is not None else traj.meta.get("m")

    if r_ll <= 0.5 * r_lin and slope_ll < 0:
        try:
            fit = fit_rate(traj, window_decades=window_decades)
            direction = None
            try:
                osc, last = _secant_oscillation(t_all[mask], traj.y[mask])
                if osc < secant_tol:
                    direction = last
            except Exception:
                pass
            return Slow(rate_fit=fit, direction=direction)
        except (ExponentialTail, InsufficientWindow) as exc:
            diagnostics["slow_fit_error"] = str(exc)

    # exponential branch; exact in mode coordinates when the system is known
    if (sys is not None and traj.v is not None
            and traj.y.shape[1] == sys.n):
        out = _classify_by_modes(traj, sys, mask, t)
        if out is not None:
            return out

    rate, _, _ = _affine_fit(t, logr)
    osc, last = _secant_oscillation(t_all[mask], traj.y[mask])
    diagnostics["secant_oscillation"] = osc
    if osc < secant_tol:
        if m is not None and m < 0 and abs(rate - m / 2.0) <= 0.05 * abs(m) / 2.0:
            ratio = r * np.exp(-(m / 2.0) * t) / t
            spread = float(ratio.max() / ratio.min() - 1.0)
            if spread < 0.05:
                rr, _, _ = _affine_fit(t, np.log(r / t))
                return FastResonant(rate=float(rr))
        if rate < 0:
            return FastEigen(rate=float(rate), direction=last)
        diagnostics["reason"] = "converged direction but non-negative rate"
        return Undetermined(diagnostics)

    # oscillatory branch
    freqs: list[float] = []
    env_rate = None
    if sys is not None and sys.I1 and traj.v is not None:
        phi = sys.eigvecs
        energy = np.zeros(len(t))
        for i in sys.I1:
            a = traj.y[mask] @ phi[:, i]
            b = (traj.v[mask] @ phi[:, i] - (sys.m / 2.0) * a) / sys.betas[i]
            energy += a * a + b * b
            fr = _zero_crossing_frequency(t, a)
            if fr is not None:
                freqs.append(fr)
        if np.all(energy > 0):
            sl, _, _ = _affine_fit(t, 0.5 * np.log(energy))
            env_rate = float(sl)
    if env_rate is None:
        # peak-based envelope of the norm, falling back to the plain slope
        peaks = [k for k in range(1, len(r) - 1)
                 if r[k] >= r[k - 1] and r[k] >= r[k + 1]]
        if len(peaks) >= 4:
            sl, _, _ = _affine_fit(t[peaks], np.log(r[peaks]))
        else:
            sl = rate
        env_rate = float(sl)
        for j in range(traj.y.shape[1]):
            fr = _zero_crossing_frequency(t, traj.y[mask][:, j])
            if fr is not None:
                freqs.append(fr)
    uniq: list[float] = []
    for fr in sorted(freqs):
        if not uniq or abs(fr - uniq[-1]) > 0.05 * fr:
            uniq.append(fr)
    return FastOscillatory(envelope_rate=env_rate, frequencies=tuple(uniq))


# ---------------------------------------------------------------------------
# secants and arclength


@dataclass
class SecantReport:
    theta_star: np.ndarray
    tail_arclength: float
    criticality_residual: float | None
    value_at_limit: float | None
    sigma_ratio: np.ndarray      # arclength-to-remaining-radius ratio series
    sigma_ratio_final: float
    oscillation: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "theta_star": [float(x) for x in self.theta_star],
            "tail_arclength": self.tail_arclength,
            "criticality_residual": self.criticality_residual,
            "value_at_limit": self.value_at_limit,
            "sigma_ratio_final": self.sigma_ratio_final,
            "oscillation": self.oscillation,
            "window": list(self.window),
        }


def secant_analysis(traj: Trajectory, gp: Potential | None = None,
                    tail_decades: float = 1.0,
                    osc_tol: float = 1e-3) -> SecantReport:
    """Convergence report for the secant ``y/|y|``.

    The limit is the last sampled secant; convergence is certified by the
    largest angle between tail secants and the limit.  ``tail_arclength``
    accumulates secant increments over the final ``tail_decades`` decades
    (a Cauchy certificate), and ``sigma_ratio`` is the remaining trajectory
    arclength divided by the distance to the origin (>= 1, approaching 1
    for straightening tails).  When a potential is supplied (or found in the
    trajectory metadata) the spherical gradient of its leading homogeneous
    part at the limit is reported as the criticality residual.

    Raises :class:`NonConvergentSecant` (with the oscillation amplitude)
    when the tail secants keep moving by more than ``osc_tol``.
    """
    t = np.asarray(traj.t, dtype=float)
    r = traj.norms()
    good = r > 0
    if good.sum() < 4:
        raise InsufficientWindow("too few nonzero samples for secants")
    t, y, r = t[good], traj.y[good], r[good]
    s = y / r[:, None]

    pos = t > 0
    t_hi = t[pos].max()
    mask = pos & (t >= t_hi / 10.0**tail_decades)
    tail = s[mask]
    theta_star = tail[-1]
    dots = np.clip(tail @ theta_star, -1.0, 1.0)
    oscillation = float(np.max(np.arccos(dots)))
    if oscillation > osc_tol:
        raise NonConvergentSecant(
            f"secant oscillates with amplitude {oscillation:.3g}",
            amplitude=oscillation)
    arclength = float(np.sum(np.linalg.norm(np.diff(tail, axis=0), axis=1)))

    steps = np.linalg.norm(np.diff(y, axis=0), axis=1)
    remaining = np.concatenate([np.cumsum(steps[::-1])[::-1], [0.0]]) + r[-1]
    sigma_ratio = remaining / r

    residual = None
    value = None
    if gp is None:
        pot = traj.potential()
        if pot is not None:
            gp = pot.leading_part()
    if gp is not None:
        grad = gp.gradient(theta_star)
        residual = float(np.linalg.norm(grad - np.dot(grad, theta_star) * theta_star))
        value = float(gp.evaluate(theta_star))

    return SecantReport(
        theta_star=theta_star, tail_arclength=arclength,
        criticality_residual=residual, value_at_limit=value,
        sigma_ratio=sigma_ratio, sigma_ratio_final=float(sigma_ratio[mask][0]),
        oscillation=oscillation,
        window=(float(t[mask].min()), float(t[mask].max())))


# ---------------------------------------------------------------------------
# regions and characteristic exponents


@dataclass(frozen=True)
class RegionParams:
    """Parameters of the radially-dominated region and its exponent layers.

    ``epsilon`` controls radial domination (``epsilon |grad' g| <= |d_r g|``),
    ``r`` the ball radius, ``q`` the candidate exponent and ``omega`` in
    (0, 1/4] the layer thickness exponent.
    """

    epsilon: float
    r: float
    omega: float = 0.25
    q: float | None = None

    def __post_init__(self):
        if not (0.0 < self.omega <= 0.25):
            raise ValueError("omega must lie in (0, 1/4]")
        if self.epsilon <= 0 or self.r <= 0:
            raise ValueError("epsilon and r must be positive")


@dataclass
class RegionMembership:
    in_W: bool
    in_W_layer: bool
    q_ratio: float | None
    radial: float
    spherical: float
    value: float

    def to_dict(self) -> dict:
        return {"in_W": self.in_W, "in_W_layer": self.in_W_layer,
                "q_ratio": self.q_ratio, "radial": self.radial,
                "spherical": self.spherical, "value": self.value}


def region_membership(g: Potential, y, params: RegionParams) -> RegionMembership:
    """Test a point against the radially-dominated region (and its q-layer).

    ``in_W`` requires ``|y| <= r``, ``g(y) != 0`` and radial domination;
    ``in_W_layer`` additionally requires the normalized logarithmic
    derivative ``|y| d_r g / g`` to sit within ``|y|**(2 omega) / 2`` of the
    candidate exponent ``q`` (in the relative form
    ``|1 - q g / (|y| d_r g)| <= |y|**(2 omega) / 2``).
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (g.n,):
        raise ValueError(f"point shape {y.shape} vs potential n={g.n}")
    r = float(np.linalg.norm(y))
    if r == 0.0:
        raise ValueError("region membership is undefined at the origin")
    val = float(g.evaluate(y))
    rad = float(radial_derivative(g, y))
    sph = float(np.linalg.norm(spherical_gradient(g, y)))
    in_W = (r <= params.r) and (val != 0.0) and (params.epsilon * sph <= abs(rad))
    q_ratio = (r * rad / val) if val != 0.0 else None
    in_layer = False
    if in_W and params.q is not None and rad != 0.0:
        in_layer = abs(1.0 - params.q * val / (r * rad)) <= 0.5 * r ** (2.0 * params.omega)
    return RegionMembership(in_W=in_W, in_W_layer=in_layer, q_ratio=q_ratio,
                            radial=rad, spherical=sph, value=val)


@dataclass
class ExponentCluster:
    q: float                     # snapped cluster exponent
    q_raw: float                 # cluster center before snapping
    numerator: int
    denominator: int
    count: int
    share: float
    snapped: bool

    def to_dict(self) -> dict:
        return {"q": self.q, "q_raw": self.q_raw,
                "fraction": f"{self.numerator}/{self.denominator}",
                "count": self.count, "share": self.share,
                "snapped": self.snapped}


@dataclass
class ExponentReport:
    clusters: list[ExponentCluster]
    unresolved_share: float
    n_in_region: int
    n_sampled: int
    points: np.ndarray           # sampled region points (diagnostics)
    ratios: np.ndarray           # raw q(y) per region point
    assigned: np.ndarray         # snapped q per region point (nan = unresolved)

    def exponents(self) -> list[float]:
        return [c.q for c in self.clusters]

    def to_dict(self) -> dict:
        return {"clusters": [c.to_dict() for c in self.clusters],
                "unresolved_share": self.unresolved_share,
                "n_in_region": self.n_in_region,
                "n_sampled": self.n_sampled}


def _dense_runs(values: np.ndarray, width: float,
                min_count: int) -> list[np.ndarray]:
    """Member masks of density clusters of a 1d sample.

    Bins the values at the given width and keeps maximal runs of bins
    holding at least ``min_count`` samples each; sparse bins (transition
    zones between plateaus) separate the clusters and stay unassigned.
    """
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= width:
        return [np.ones(len(values), dtype=bool)]
    edges = np.arange(lo, hi + 2 * width, width)
    idx = np.clip(np.digitize(values, edges) - 1, 0, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1)
    dense = counts >= min_count
    runs: list[np.ndarray] = []
    k = 0
    while k < len(dense):
        if not dense[k]:
            k += 1
            continue
        j = k
        while j + 1 < len(dense) and dense[j + 1]:
            j += 1
        runs.append((idx >= k) & (idx <= j))
        k = j + 1
    return runs


def characteristic_exponents(g: Potential, r: float = 0.1,
                             epsilon: float = 0.1, n_samples: int = 4000,
                             seed: int = 0, radius_decades: float = 2.0,
                             max_denominator: int = 64,
                             snap_rtol: float = 0.01) -> ExponentReport:
    """Empirical logarithmic-derivative exponents near the origin.

    Samples points with log-uniform radii in ``[r / 10**radius_decades, r]``
    and uniform directions, keeps those inside the radially-dominated region
    ``W(epsilon, r)`` and computes ``q(y) = |y| d_r g(y) / g(y)``.  The
    values are clustered by density (sparse transition zones between
    plateaus stay unassigned) and each cluster center is snapped to a
    rational with denominator <= ``max_denominator``, preferring the
    smallest denominator within ``snap_rtol``.

    Raises :class:`EmptyRegion` when no sample lies in the region.
    """
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((n_samples, g.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = r * 10.0 ** (-radius_decades * rng.random(n_samples))
    pts = dirs * radii[:, None]

    vals = np.atleast_1d(g.evaluate(pts))
    grads = g.gradient(pts)
    rad = np.einsum("ki,ki->k", grads, pts) / radii
    sph = grads - (rad / radii)[:, None] * pts
    sphn = np.linalg.norm(sph, axis=1)
    in_w = (vals != 0.0) & (epsilon * sphn <= np.abs(rad))
    if not np.any(in_w):
        raise EmptyRegion(
            f"no sample satisfied the region predicate (epsilon={epsilon})")

    pts_w = pts[in_w]
    q_raw = radii[in_w] * rad[in_w] / vals[in_w]
    total = len(q_raw)
    scale = float(np.median(np.abs(q_raw)))
    width = max(0.5 * snap_rtol * max(scale, 1.0), 1e-9)
    min_count = max(5, int(round(0.001 * total)))

    assigned = np.full(total, np.nan)
    clusters: list[ExponentCluster] = []
    for members in _dense_runs(q_raw, width, min_count):
        center = float(np.median(q_raw[members]))
        q, snapped = _snap_rational(center, max_denominator, snap_rtol)
        frac = Fraction(q if snapped else center).limit_denominator(
            max_denominator)
        assigned[members] = float(frac)
        clusters.append(ExponentCluster(
            q=float(frac), q_raw=center, numerator=frac.numerator,
            denominator=frac.denominator, count=int(members.sum()),
            share=float(members.sum() / total), snapped=snapped))
    clusters.sort(key=lambda c: -c.count)
    unresolved = float(np.isnan(assigned).sum() / total)
    return ExponentReport(clusters=clusters, unresolved_share=unresolved,
                          n_in_region=total, n_sampled=n_samples,
                          points=pts_w, ratios=q_raw, assigned=assigned)


# ---------------------------------------------------------------------------
# normalized-value monitor


@dataclass
class GStarReport:
    t: np.ndarray
    gstar: np.ndarray
    lyapunov: np.ndarray         # gstar + |y|**omega_star
    h: np.ndarray                # (gstar - alpha0) + |y|**(omega_star/2)
    alpha0: float
    monotone_violations: int
    burn_in_index: int

    def to_dict(self) -> dict:
        return {"alpha0": self.alpha0,
                "monotone_violations": self.monotone_violations,
                "burn_in_index": self.burn_in_index,
                "t": [float(x) for x in self.t],
                "gstar": [float(x) for x in self.gstar],
                "h": [float(x) for x in self.h]}


def monitor_gstar(traj: Trajectory, ell_star: float, omega_star: float,
                  alpha0: float | None = None, burn_in: float = 0.1,
                  slack: float = 1e-10) -> GStarReport:
    """Track the degree-normalized value ``g(y(t)) / |y(t)|**ell_star``.

    Reports the series, the control function
    ``h = (gstar - alpha0) + |y|**(omega_star/2)`` and the number of
    increases of the almost-monotone combination ``gstar + |y|**omega_star``
    beyond ``slack`` after the burn-in prefix (fraction of samples).
    When ``alpha0`` is not given, the tail average of ``gstar`` is used.
    """
    g = traj.potential()
    if g is None:
        raise ValueError("trajectory metadata does not carry its potential")
    r = traj.norms()
    good = r > 0
    t = np.asarray(traj.t, dtype=float)[good]
    y = traj.y[good]
    r = r[good]
    gstar = np.atleast_1d(g.evaluate(y)) / r**ell_star
    lyap = gstar + r**omega_star
    if alpha0 is None:
        k0 = int(len(gstar) * 0.9)
        alpha0 = float(np.mean(gstar[k0:]))
    h = (gstar - alpha0) + r ** (omega_star / 2.0)
    burn = int(len(t) * burn_in)
    diffs = np.diff(lyap[burn:])
    violations = int(np.sum(diffs > slack))
    return GStarReport(t=t, gstar=gstar, lyapunov=lyap, h=h, alpha0=alpha0,
                       monotone_violations=violations, burn_in_index=burn)


# ---------------------------------------------------------------------------
# mode-splitting trichotomy


@dataclass
class MZReport:
    verdict: str                 # 'neutral' | 'stable_dominated' | 'violated'
    measured_rate: float | None
    bound_rate: float
    max_neutral_ratio: float
    max_stable_ratio: float
    window: tuple[float, float]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "measured_rate": self.measured_rate,
                "bound_rate": self.bound_rate,
                "max_neutral_ratio": self.max_neutral_ratio,
                "max_stable_ratio": self.max_stable_ratio,
                "window": list(self.window)}


def mz_trichotomy(t, xplus, xzero, xminus, b: float,
                  ratio_tol: float = 0.05,
                  window_decades: float = 1.0) -> MZReport:
    """Three-way splitting test for grouped amplitude series.

    Over the final ``window_decades`` decades, either the unstable+stable
    groups are dominated by the neutral one (``neutral``), or the
    unstable+neutral groups are dominated by the stable one
    (``stable_dominated``, in which case the measured decay rate of the
    stable group is reported against the expected bound ``-b``); otherwise
    the splitting hypothesis is violated.  A ratio counts as "-> 0" when it
    stays below ``ratio_tol`` throughout the window.
    """
    t = np.asarray(t, dtype=float)
    xplus = np.asarray(xplus, dtype=float)
    xzero = np.asarray(xzero, dtype=float)
    xminus = np.asarray(xminus, dtype=float)
    if b <= 0:
        raise ValueError("spectral gap b must be positive")
    pos = t > 0
    t_hi = t[pos].max()
    mask = pos & (t >= t_hi / 10.0**window_decades)
    tiny = np.finfo(float).tiny

    neutral_ratio = (xplus[mask] + xminus[mask]) / np.maximum(xzero[mask], tiny)
    stable_ratio = (xplus[mask] + xzero[mask]) / np.maximum(xminus[mask], tiny)
    max_neutral = float(np.max(neutral_ratio))
    max_stable = float(np.max(stable_ratio))
    window = (float(t[mask].min()), float(t[mask].max()))

    if max_neutral < ratio_tol:
        return MZReport("neutral", None, -b, max_neutral, max_stable, window)
    if max_stable < ratio_tol:
        good = xminus[mask] > 0
        rate, _, _ = _affine_fit(t[mask][good], np.log(xminus[mask][good]))
        return MZReport("stable_dominated", float(rate), -b,
                        max_neutral, max_stable, window)
    return MZReport("violated", None, -b, max_neutral, max_stable, window)


# ---------------------------------------------------------------------------
# a-posteriori envelope / error-bound check


@dataclass
class A1A2Report:
    D1: float
    D2: float
    alpha2: float
    bN_min: float
    passed: bool
    window: tuple[float, float]
    notes: str = ""

    def to_dict(self) -> dict:
        return {"D1": self.D1, "D2": self.D2, "alpha2": self.alpha2,
                "bN_min": self.bN_min, "passed": self.passed,
                "window": list(self.window), "notes": self.notes}


def verify_A1_A2(traj: Trajectory, g: Potential | None = None,
                 rho: float = 0.75, N: int = 4,
                 window_decades: float = 2.0) -> A1A2Report:
    """Check the two-sided decay envelope and the relative error bound.

    The envelope check fits ``|y| ~ D2 t**(-alpha2)`` on the tail (upper
    bound, requiring ``alpha2 <= 1`` so the lower bound ``D1/t`` can hold
    with ``D1 = min t |y|``).  The error bound check reconstructs
    ``Err = y' + grad g(y)`` from the stored velocities (finite differences
    when absent) and reports the smallest constant ``bN_min`` such that
    ``|Err| <= bN_min (|y|**rho |grad g| + |y|**N)`` holds on the window.
    """
    if g is None:
        g = traj.potential()
    if g is None:
        raise ValueError("trajectory metadata does not carry its potential")
    t_all = np.asarray(traj.t, dtype=float)
    r_all = traj.norms()
    mask = _tail_window(t_all, r_all, window_decades)
    t, y, r = t_all[mask], traj.y[mask], r_all[mask]

    slope, intercept, _ = _affine_fit(np.log(t), np.log(r))
    alpha2 = -slope
    D2 = float(np.max(r * t**alpha2))
    D1 = float(np.min(r * t))

    if traj.v is not None:
        v = traj.v[mask]
    else:
        v = np.gradient(traj.y, t_all, axis=0)[mask]
    grads = g.gradient(y)
    err = v + grads
    bound = r**rho * np.linalg.norm(grads, axis=1) + r ** float(N)
    ratios = np.linalg.norm(err, axis=1) / bound
    bN_min = float(np.max(ratios))

    passed = bool(np.isfinite([D1, D2, alpha2, bN_min]).all()
                  and D1 > 0 and 0 < alpha2 <= 1.0 + 1e-6)
    notes = "" if passed else "envelope outside the admissible range"
    return A1A2Report(D1=D1, D2=D2, alpha2=float(alpha2), bN_min=bN_min,
                      passed=passed, window=(float(t.min()), float(t.max())),
                      notes=notes)
