"""Fourier-spectral evolution of scalar semilinear heat flow on the circle.

The model is ``u_t = u_qq + u + nc * u^3`` for ``u(q, t)`` on ``[0, 2pi)``
with ``nc`` in {-1, 0, +1}; the default ``nc = -1`` is the gradient flow of
``F(u) = int( u_q^2/2 - u^2/2 + u^4/4 )``.  States live in truncated Fourier
space (modes ``|k| <= K``); the cubic term is evaluated pseudospectrally on
``M = 4(K+1)`` points, which both dealiases the retained modes exactly and
makes the quadrature for ``int u^4`` exact.

Time stepping is an integrating-factor RK4: the linear symbol ``1 - k^2`` is
handled exactly, only the cubic is advanced explicitly, so the scheme has no
stiffness restriction from high modes.

The linear symbol has one growing mode (k = 0) and a neutral pair (k = 1).
For initial data supported on a mode set whose signed triple sums never
reach k = 0, that protection is structural: the flow preserves the lattice
exactly and the evolution here zeroes the complementary modes after each
cubic evaluation, which reproduces the exact invariant-subspace arithmetic
instead of letting roundoff seed ``e^t`` growth.  For data whose lattice
does reach k = 0 the growth is genuine and a monitor raises
:class:`~thomlab.errors.UnstableModeExcited` once the unstable coefficient
leaves the noise floor.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BlowUp, UnstableModeExcited
from .flow import Trajectory, _fmt, _output_grid

__all__ = [
    "CircleModel",
    "SpectralState",
    "ModeSeries",
    "SlowDecayReport",
    "evolve",
    "run_series",
    "slow_decay_report",
    "project_modes",
    "energy",
    "invariant_mode_set",
    "write_series_csv",
    "read_series_csv",
    "write_state_csv",
    "read_state_csv",
]


class CircleModel(Enum):
    """Nonlinearity selector; the value is the cubic coefficient ``nc``."""

    CUBIC = -1.0
    LINEAR = 0.0
    CUBIC_FLIPPED = 1.0

    @property
    def nonlinear_coeff(self) -> float:
        return self.value


@dataclass
class SpectralState:
    """Truncated Fourier state: ``u = sum_{|k|<=K} c_k e^{ikq}``, c real-sym.

    ``c`` holds the nonnegative half (length K+1, numpy rfft layout divided
    by the grid size, so ``c[k]`` is the true coefficient of ``e^{ikq}``).
    """

    K: int
    c: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=complex)
        if self.c.shape != (self.K + 1,):
            raise ValueError(f"need K+1 = {self.K + 1} coefficients, "
                             f"got shape {self.c.shape}")
        self.c = self.c.copy()
        self.c[0] = self.c[0].real

    @classmethod
    def zeros(cls, K: int, t: float = 0.0) -> "SpectralState":
        return cls(K=K, c=np.zeros(K + 1, dtype=complex), t=t)

    @classmethod
    def from_modes(cls, K: int, cos: dict[int, float] | None = None,
                   sin: dict[int, float] | None = None,
                   t: float = 0.0) -> "SpectralState":
        """Build a state from real mode amplitudes ``sum a_k cos kq + b_k sin kq``."""
        c = np.zeros(K + 1, dtype=complex)
        for k, a in (cos or {}).items():
            if not 0 <= k <= K:
                raise ValueError(f"cos mode {k} outside 0..{K}")
            c[k] += a if k == 0 else a / 2.0
        for k, b in (sin or {}).items():
            if not 1 <= k <= K:
                raise ValueError(f"sin mode {k} outside 1..{K}")
            c[k] += -0.5j * b
        return cls(K=K, c=c, t=t)

    @classmethod
    def from_function(cls, fn, K: int, t: float = 0.0) -> "SpectralState":
        """Sample ``fn`` on the dealiased grid and truncate to K modes."""
        M = 4 * (K + 1)
        theta = 2.0 * math.pi * np.arange(M) / M
        u = np.asarray(fn(theta), dtype=float)
        c = np.fft.rfft(u)[: K + 1] / M
        return cls(K=K, c=c, t=t)

    def grid_values(self, M: int | None = None) -> np.ndarray:
        M = M or 4 * (self.K + 1)
        spec = np.zeros(M // 2 + 1, dtype=complex)
        spec[: self.K + 1] = self.c * M
        return np.fft.irfft(spec, M)

    def norm(self) -> float:
        """L2 norm on the circle (weight 1, total mass 2 pi)."""
        c = self.c
        return math.sqrt(2.0 * math.pi
                         * (abs(c[0]) ** 2 + 2.0 * np.sum(np.abs(c[1:]) ** 2)))

    def support(self, rel_tol: float = 1e-13) -> tuple[int, ...]:
        mags = np.abs(self.c)
        top = mags.max()
        if top == 0.0:
            return ()
        return tuple(int(k) for k in np.nonzero(mags > rel_tol * top)[0])

    def copy(self) -> "SpectralState":
        return SpectralState(K=self.K, c=self.c.copy(), t=self.t)


def _lattice_closure(support, K: int) -> np.ndarray:
    """Mode set reachable from ``support`` under signed triple sums.

    Works on the symmetric indicator over -K..K; one closure round is two
    convolutions (the cubic couples exactly the triples k1+k2+k3).
    """
    ind = np.zeros(2 * K + 1)
    for k in support:
        ind[K + k] = 1.0
        ind[K - k] = 1.0
    reach = ind > 0
    while True:
        dens = reach.astype(float)
        c3 = np.convolve(np.convolve(dens, dens), dens)
        new = reach | (c3[2 * K: 4 * K + 1] > 0.5)
        new |= new[::-1]
        if np.array_equal(new, reach):
            break
        reach = new
    return reach[K:]          # keep[k] for k = 0..K


def invariant_mode_set(state: SpectralState) -> np.ndarray:
    """Boolean keep-mask (length K+1) of the cubic-invariant mode lattice."""
    return _lattice_closure(state.support(), state.K)


def project_modes(state: SpectralState) -> np.ndarray:
    """Orthonormal real mode coefficients, ordered const, cos 1..K, sin 1..K.

    Basis functions are ``1/sqrt(2 pi)``, ``cos kq / sqrt(pi)`` and
    ``sin kq / sqrt(pi)``; the Euclidean norm of the output equals the L2
    norm of the state.
    """
    K, c = state.K, state.c
    xi = np.empty(2 * K + 1)
    xi[0] = math.sqrt(2.0 * math.pi) * c[0].real
    xi[1: K + 1] = 2.0 * math.sqrt(math.pi) * c[1:].real
    xi[K + 1:] = -2.0 * math.sqrt(math.pi) * c[1:].imag
    return xi


def _quartic_integral(state: SpectralState) -> float:
    # M = 4(K+1) > 4K, so the equispaced sum integrates u^4 exactly
    u = state.grid_values()
    return 2.0 * math.pi * float(np.mean(u**4))


def energy(state: SpectralState,
           model: CircleModel = CircleModel.CUBIC) -> float:
    """Free energy ``int( u_q^2/2 - u^2/2 - nc u^4/4 )`` driving the flow."""
    K, c = state.K, state.c
    k = np.arange(K + 1)
    lam = 1.0 - k.astype(float) ** 2
    quad = 2.0 * math.pi * (lam[0] * c[0].real ** 2
                            + 2.0 * np.sum(lam[1:] * np.abs(c[1:]) ** 2))
    nc = model.nonlinear_coeff
    out = -0.5 * quad
    if nc != 0.0:
        out -= nc * 0.25 * _quartic_integral(state)
    return float(out)


# ---------------------------------------------------------------------------
# time stepping


class _Stepper:
    """Integrating-factor RK4 worker bound to one (model, K, mask) triple."""

    def __init__(self, model: CircleModel, K: int,
                 keep: np.ndarray | None = None):
        self.model = model
        self.K = K
        self.M = 4 * (K + 1)
        k = np.arange(K + 1)
        self.lam = 1.0 - k.astype(float) ** 2
        self.nc = model.nonlinear_coeff
        self.keep = keep

    def _nonlinear(self, c: np.ndarray) -> np.ndarray:
        if self.nc == 0.0:
            return np.zeros_like(c)
        spec = np.zeros(self.M // 2 + 1, dtype=complex)
        spec[: self.K + 1] = c * self.M
        u = np.fft.irfft(spec, self.M)
        out = self.nc * np.fft.rfft(u**3)[: self.K + 1] / self.M
        if self.keep is not None:
            out[~self.keep] = 0.0
        return out

    def step(self, c: np.ndarray, h: float) -> np.ndarray:
        e_half = np.exp(0.5 * h * self.lam)
        e_full = e_half * e_half
        k1 = self._nonlinear(c)
        k2 = self._nonlinear(e_half * (c + 0.5 * h * k1))
        k3 = self._nonlinear(e_half * c + 0.5 * h * k2)
        k4 = self._nonlinear(e_full * c + h * e_half * k3)
        return (e_full * c
                + (h / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4))


def _unstable_coeff(c: np.ndarray) -> float:
    return math.sqrt(2.0 * math.pi) * abs(c[0].real)


def evolve(state: SpectralState, t_end: float, dt: float = 1e-3,
           model: CircleModel = CircleModel.CUBIC,
           mask_invariant: bool = True,
           accelerate: bool = False,
           unstable_tol: float = 1e-6,
           norm_guard: float = 1e3,
           callback=None) -> SpectralState:
    """Advance a spectral state to ``t_end`` with fixed-step IFRK4.

    With ``accelerate`` the step grows linearly with t (``dt * max(1, t)``),
    which tracks power-law decay over many decades at constant cost per
    decade.  ``mask_invariant`` zeroes the modes outside the invariant
    lattice of the initial support after every cubic evaluation; this is the
    exact arithmetic of the flow on that subspace, not a stabilization.

    Raises :class:`UnstableModeExcited` when the dynamically reachable k = 0
    coefficient exceeds ``unstable_tol``, and :class:`BlowUp` when the L2
    norm exceeds ``norm_guard``.
    """
    if t_end < state.t:
        raise ValueError("t_end must be >= the state time")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    keep = invariant_mode_set(state) if mask_invariant else None
    stepper = _Stepper(model, state.K, keep)
    c = state.c.copy()
    if keep is not None:
        c[~keep] = 0.0
    t = state.t
    # armed only when the data starts without a constant component: the
    # guard certifies non-decay when that excluded mode gets excited, while
    # deliberate k = 0 experiments run on to the norm guard instead
    check_unstable = ((keep is None or bool(keep[0]))
                      and _unstable_coeff(c) <= unstable_tol)
    while t < t_end:
        h = dt * max(1.0, t) if accelerate else dt
        h = min(h, t_end - t)
        c_new = stepper.step(c, h)
        t_new = t + h
        # aborts hand back the last valid state
        if check_unstable and _unstable_coeff(c_new) > unstable_tol:
            raise UnstableModeExcited(
                f"constant-mode coefficient reached "
                f"{_unstable_coeff(c_new):.3e} at t = {t_new:.6g}",
                t=t_new, series=SpectralState(K=state.K, c=c, t=t))
        nrm = math.sqrt(2.0 * math.pi * (abs(c_new[0]) ** 2
                                         + 2.0 * np.sum(np.abs(c_new[1:]) ** 2)))
        if not math.isfinite(nrm) or nrm > norm_guard:
            raise BlowUp(f"L2 norm reached {nrm:.3e} at t = {t_new:.6g}",
                         t_event=t_new,
                         trajectory=SpectralState(K=state.K, c=c, t=t))
        c, t = c_new, t_new
        if callback is not None:
            callback(t, c)
    return SpectralState(K=state.K, c=c, t=t)


# ---------------------------------------------------------------------------
# sampled runs


@dataclass
class ModeSeries:
    """Sampled spectral run: orthonormal mode coefficients and diagnostics."""

    t: np.ndarray                 # (n,)
    xi: np.ndarray                # (n, 2K+1) real mode coefficients
    norm: np.ndarray              # L2 norms
    F: np.ndarray                 # free-energy values
    K: int
    meta: dict = field(default_factory=dict)

    def kernel_coords(self) -> np.ndarray:
        """Coefficients on the neutral pair (cos q, sin q)."""
        return self.xi[:, [1, self.K + 1]]

    def group_amplitudes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X_plus, X_zero, X_minus): unstable / neutral / stable group norms."""
        xplus = np.abs(self.xi[:, 0])
        xzero = np.linalg.norm(self.kernel_coords(), axis=1)
        stable_cols = list(range(2, self.K + 1)) + \
            list(range(self.K + 2, 2 * self.K + 1))
        xminus = np.linalg.norm(self.xi[:, stable_cols], axis=1)
        return xplus, xzero, xminus

    def as_trajectory(self) -> Trajectory:
        meta = dict(self.meta)
        meta["kind"] = "pde_modes"
        return Trajectory(t=self.t.copy(), y=self.xi.copy(), v=None, meta=meta)

    def state_at(self, index: int) -> SpectralState:
        xi = self.xi[index]
        c = np.zeros(self.K + 1, dtype=complex)
        c[0] = xi[0] / math.sqrt(2.0 * math.pi)
        c[1:] = (xi[1: self.K + 1] - 1j * xi[self.K + 1:]) \
            / (2.0 * math.sqrt(math.pi))
        return SpectralState(K=self.K, c=c, t=float(self.t[index]))


def run_series(state: SpectralState, t_end: float, dt: float = 1e-3,
               model: CircleModel = CircleModel.CUBIC,
               samples_per_decade: int = 16, t_linear: float = 1.0,
               mask_invariant: bool = True, accelerate: bool = False,
               unstable_tol: float = 1e-6,
               label: str | None = None) -> ModeSeries:
    """Evolve and sample: linear spacing up to ``t_linear``, geometric after.

    The time stepper is shared across sample intervals (each sample lands
    exactly on a step boundary via one shortened step).
    """
    lin, geo = _output_grid(state.t, t_end, samples_per_decade, t_linear)
    times = np.concatenate([lin, geo[1:] if (lin.size and geo.size) else geo])
    if times.size == 0 or times[0] > state.t:
        times = np.concatenate([[state.t], times])

    cur = state.copy()
    rows_t: list[float] = [cur.t]
    states: list[SpectralState] = [cur.copy()]
    for ts in times:
        if ts <= cur.t:
            continue
        cur = evolve(cur, ts, dt=dt, model=model,
                     mask_invariant=mask_invariant, accelerate=accelerate,
                     unstable_tol=unstable_tol)
        rows_t.append(cur.t)
        states.append(cur.copy())

    xi = np.vstack([project_modes(s) for s in states])
    nrm = np.array([s.norm() for s in states])
    F = np.array([energy(s, model) for s in states])
    meta = {
        "kind": "pde_spectral",
        "model": model.name,
        "K": state.K,
        "dt": dt,
        "accelerate": accelerate,
        "mask_invariant": mask_invariant,
        "t0": float(state.t), "t_end": float(t_end),
        "samples_per_decade": samples_per_decade,
        "label": label or f"circle-{model.name.lower()}",
        "version": __version__,
    }
    return ModeSeries(t=np.array(rows_t), xi=xi, norm=nrm, F=F, K=state.K,
                      meta=meta)


# ---------------------------------------------------------------------------
# slow-decay pipeline


@dataclass
class SlowDecayReport:
    series: ModeSeries
    sqrt_t_norm_final: float
    limit_estimate: float         # extrapolated lim sqrt(t) ||u||
    direction_angle: float        # polar angle of the neutral coordinates
    ell_star: float
    alpha0: float
    rate_residual: float
    refinement_rel_change: float | None = None

    def sqrt_t_norm(self) -> np.ndarray:
        return np.sqrt(self.series.t) * self.series.norm

    def to_dict(self) -> dict:
        return {
            "sqrt_t_norm_final": self.sqrt_t_norm_final,
            "limit_estimate": self.limit_estimate,
            "direction_angle": self.direction_angle,
            "ell_star": self.ell_star,
            "alpha0": self.alpha0,
            "rate_residual": self.rate_residual,
            "refinement_rel_change": self.refinement_rel_change,
        }


def _limit_by_extrapolation(t: np.ndarray, nrm: np.ndarray,
                            decades: float = 2.0) -> float:
    """Extrapolate ``lim sqrt(t) ||u||`` from the affine law of 1/(t ||u||^2).

    On a slow tail ``1/(t ||u||^2) = 1/c^2 + const/t + o(1/t)``; a linear
    regression against 1/t gives the intercept 1/c^2 exactly to leading
    order in the window.
    """
    pos = (t > 0) & (nrm > 0)
    t_hi = t[pos].max()
    mask = pos & (t >= t_hi / 10.0**decades)
    x = 1.0 / t[mask]
    yv = 1.0 / (t[mask] * nrm[mask] ** 2)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, yv, rcond=None)
    intercept = float(coef[1])
    if intercept <= 0:
        raise ArithmeticError("extrapolation produced a nonpositive limit")
    return 1.0 / math.sqrt(intercept)


def _slow_run(amplitude: float, theta0: float, K: int, dt: float,
              t_end: float, model: CircleModel,
              samples_per_decade: int) -> ModeSeries:
    # amplitude * cos(q - theta0) split over the neutral pair
    u0 = SpectralState.from_modes(
        K, cos={1: amplitude * math.cos(theta0)},
        sin={1: amplitude * math.sin(theta0)})
    return run_series(u0, t_end, dt=dt, model=model,
                      samples_per_decade=samples_per_decade,
                      mask_invariant=True, accelerate=True,
                      label="slow-decay")


def slow_decay_report(amplitude: float = 0.1, theta0: float = 0.0,
                      K: int = 64, dt: float = 1e-3, t_end: float = 1e4,
                      model: CircleModel = CircleModel.CUBIC,
                      samples_per_decade: int = 16,
                      refine: bool = False) -> SlowDecayReport:
    """Slow-decay benchmark: neutral-mode data ``amplitude * cos(q - theta0)``.

    Runs the accelerated-step evolution to ``t_end``, reports the final and
    extrapolated values of ``sqrt(t) ||u||``, the polar angle of the neutral
    coordinates at the final time, and the fitted decay order / normalized
    value of the mode-coefficient trajectory.  With ``refine`` the run is
    repeated at (2K, dt/2) and the relative change of the extrapolated limit
    is reported.  The amplitude must stay small (<= 0.2) so the run starts
    inside the validity ball of the slow-decay analysis.
    """
    from .asymptotics import fit_rate

    if not 0.0 < amplitude <= 0.2:
        raise ValueError("amplitude must lie in (0, 0.2]")
    series = _slow_run(amplitude, theta0, K, dt, t_end, model,
                       samples_per_decade)
    final = float(math.sqrt(series.t[-1]) * series.norm[-1])
    limit = _limit_by_extrapolation(series.t, series.norm)
    x1, x2 = series.kernel_coords()[-1]
    angle = float(math.atan2(x2, x1))
    fit = fit_rate(series.as_trajectory(), window_decades=1.5)

    change = None
    if refine:
        fine = _slow_run(amplitude, theta0, 2 * K, dt / 2.0, t_end, model,
                         samples_per_decade)
        limit_fine = _limit_by_extrapolation(fine.t, fine.norm)
        change = abs(limit_fine - limit) / abs(limit_fine)
    return SlowDecayReport(series=series, sqrt_t_norm_final=final,
                           limit_estimate=limit, direction_angle=angle,
                           ell_star=fit.ell_star, alpha0=fit.alpha0,
                           rate_residual=fit.residual,
                           refinement_rel_change=change)


# ---------------------------------------------------------------------------
# CSV output


def write_series_csv(series: ModeSeries, path) -> Path:
    """Write ``t, norm_L2, x1, x2, F_u, Xplus, Xzero, Xminus`` rows.

    ``x1, x2`` are the neutral-pair coefficients.  Floats use shortest
    round-trip formatting; the metadata goes to a ``.meta.json`` sidecar.
    """
    path = Path(path)
    xp, xz, xm = series.group_amplitudes()
    kc = series.kernel_coords()
    with path.open("w", newline="") as fh:
        fh.write("t,norm_L2,x1,x2,F_u,Xplus,Xzero,Xminus\n")
        for i in range(len(series.t)):
            row = [series.t[i], series.norm[i], kc[i, 0], kc[i, 1],
                   series.F[i], xp[i], xz[i], xm[i]]
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    sidecar = path.with_name(path.stem + ".meta.json")
    sidecar.write_text(json.dumps(series.meta, sort_keys=True, indent=2,
                                  default=str) + "\n")
    return path


def read_series_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        data = np.array([[float(x) for x in line.strip().split(",")]
                         for line in fh if line.strip()])
    if data.size == 0:
        data = np.zeros((0, len(header)))
    return {name: data[:, j] for j, name in enumerate(header)}


def write_state_csv(state: SpectralState, path) -> Path:
    """Write the raw coefficients as ``k, re_ck, im_ck`` rows."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("k,re_ck,im_ck\n")
        for k in range(state.K + 1):
            fh.write(f"{k},{_fmt(state.c[k].real)},{_fmt(state.c[k].imag)}\n")
    return path


def read_state_csv(path, t: float = 0.0) -> SpectralState:
    path = Path(path)
    with path.open() as fh:
        fh.readline()
        rows = [line.strip().split(",") for line in fh if line.strip()]
    K = len(rows) - 1
    c = np.zeros(K + 1, dtype=complex)
    for row in rows:
        k = int(row[0])
        c[k] = float(row[1]) + 1j * float(row[2])
    return SpectralState(K=K, c=c, t=t)
