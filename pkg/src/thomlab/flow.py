"""Trajectory integration for gradient and damped second-order flows.

Two integration drivers share one core: ``integrate_gradient`` for
``y' = -grad g(y)`` (optionally with a synthetic, bound-respecting error
term) and ``integrate_heavy_ball`` for ``y'' - m y' - grad f(y) = 0``.

Decay happens over many decades of time, so for t >= 1 the core switches to
the substitution s = log t and integrates ``dy/ds = t * rhs(t, y)`` with an
adaptive embedded Runge-Kutta 5(4) pair; output samples are geometric in t
(a fixed count per decade).  Runs that leave the validity ball raise
:class:`~thomlab.errors.BlowUp` carrying the partial trajectory.

The module also contains the finite-dimensional vectorization of the damped
second-order linearization: the first-order block operator ``L``, the
positive-definite bilinear form ``G`` in which ``L`` has a complete
orthonormal eigen-like basis ``psi``, and the coefficient projections used
by the mode-splitting diagnostics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from . import __version__
from .errors import BlowUp, DimensionMismatch, StiffnessFailure
from .potential import Potential, check_flow_potential

__all__ = [
    "ErrorModel",
    "IntegrationControls",
    "Trajectory",
    "integrate_gradient",
    "integrate_heavy_ball",
    "LinearizedSystem",
    "vectorize",
    "project_coefficients",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


# ---------------------------------------------------------------------------
# error injection


@dataclass(frozen=True)
class ErrorModel:
    """Synthetic perturbation saturating a fraction of the decay-error bound.

    The injected term has magnitude exactly
    ``theta * b_N * (|y|**rho * |grad g(y)| + |y|**N)`` and a pseudorandom
    smoothly rotating unit direction, so the bound with constant ``b_N``
    holds pointwise by construction for any ``theta <= 1``.
    """

    kind: str = "synthetic_a2"
    rho: float = 0.75
    N: int = 4
    b_N: float = 1.0
    theta: float = 1.0
    seed: int = 0
    n_waves: int = 4

    def __post_init__(self):
        if self.kind != "synthetic_a2":
            raise ValueError(f"unknown error model kind {self.kind!r}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.N < 1:
            raise ValueError("N must be a positive integer")

    def describe(self) -> dict:
        return {
            "kind": self.kind, "rho": self.rho, "N": self.N,
            "b_N": self.b_N, "theta": self.theta, "seed": self.seed,
        }

    def realize(self, g: Potential):
        """Return ``err(t, y)`` for a potential; deterministic in the seed."""
        rng = np.random.default_rng(self.seed)
        waves = rng.standard_normal((self.n_waves, g.n))
        omegas = rng.uniform(0.5, 3.0, self.n_waves)
        phases = rng.uniform(0.0, 2.0 * math.pi, self.n_waves)
        fallback = np.zeros(g.n)
        fallback[0] = 1.0

        def direction(t: float) -> np.ndarray:
            s = math.log1p(max(t, 0.0))
            d = (waves * np.cos(omegas * s + phases)[:, None]).sum(axis=0)
            nrm = np.linalg.norm(d)
            return d / nrm if nrm > 1e-12 else fallback

        def err(t: float, y: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(y)
            gn = np.linalg.norm(g.gradient(y))
            bound = self.b_N * (r**self.rho * gn + r**self.N)
            return self.theta * bound * direction(t)

        return err

    def bound(self, g: Potential, y: np.ndarray) -> float:
        r = np.linalg.norm(y)
        gn = np.linalg.norm(g.gradient(y))
        return self.b_N * (r**self.rho * gn + r**self.N)


# ---------------------------------------------------------------------------
# integration controls and trajectory container


@dataclass(frozen=True)
class IntegrationControls:
    rtol: float = 1e-9
    atol: float = 1e-12
    samples_per_decade: int = 64
    ball_radius: float = 0.5
    blowup_factor: float = 10.0
    t_linear: float = 1.0  # switch to log-time integration beyond this
    method: str = "RK45"


@dataclass
class Trajectory:
    """Sampled trajectory: times, states and (optionally) velocities."""

    t: np.ndarray
    y: np.ndarray
    v: np.ndarray | None
    meta: dict = field(default_factory=dict)

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.y, axis=1)

    @property
    def n(self) -> int:
        return self.y.shape[1]

    def potential(self) -> Potential | None:
        data = self.meta.get("potential")
        return Potential.from_dict(data) if data else None


def _output_grid(t0: float, t_end: float, per_decade: int,
                 t_linear: float) -> tuple[np.ndarray, np.ndarray]:
    """(linear-phase times, log-phase times); both include their endpoints."""
    t_cut = min(t_end, max(t0, t_linear))
    lin = np.array([])
    if t0 < t_cut:
        lin = np.linspace(t0, t_cut, per_decade + 1)
    if t_end <= t_cut:
        if lin.size == 0:
            lin = np.array([t0, t_end])
        return lin, np.array([])
    n_geo = max(2, int(math.ceil(per_decade * math.log10(t_end / t_cut))) + 1)
    geo = np.geomspace(t_cut, t_end, n_geo)
    geo[0], geo[-1] = t_cut, t_end
    return lin, geo


def _run_phase(rhs, t_span, y_start, t_eval, ctrl, events, logtime):
    if logtime:
        def f(s, z):
            t = math.exp(s)
            return t * rhs(t, z)
        span = (math.log(t_span[0]), math.log(t_span[1]))
        ev = [(lambda s, z, e=e: e(math.exp(s), z)) for e in events]
        t_pts = np.log(t_eval)
    else:
        f = rhs
        span = t_span
        ev = list(events)
        t_pts = t_eval
    for k, e in enumerate(ev):
        e.terminal = True
        e.direction = 1.0
        e.tag = events[k].tag
    sol = solve_ivp(f, span, y_start, method=ctrl.method, rtol=ctrl.rtol,
                    atol=ctrl.atol, t_eval=t_pts, events=ev, dense_output=False)
    if sol.status == -1:
        raise StiffnessFailure(f"integrator failed: {sol.message}")
    times = np.exp(sol.t) if logtime else sol.t
    hit = None
    if sol.status == 1:
        for k, te in enumerate(sol.t_events):
            if len(te):
                t_hit = math.exp(te[0]) if logtime else te[0]
                hit = (ev[k].tag, t_hit)
                break
    return times, sol.y.T, hit


def _integrate(rhs, y0_full, n_pos, t0, t_end, ctrl, meta):
    if not (t_end > t0 >= 0.0):
        raise ValueError("need t_end > t0 >= 0")
    y0_full = np.asarray(y0_full, dtype=float)
    r0 = np.linalg.norm(y0_full[:n_pos])
    if r0 >= ctrl.ball_radius:
        raise ValueError(
            f"|y0| = {r0:.3g} is not inside the validity ball "
            f"(radius {ctrl.ball_radius:.3g})")

    thresholds = [("blowup", ctrl.blowup_factor * r0),
                  ("ball", ctrl.ball_radius)]
    events = []
    for tag, thr in thresholds:
        def e(t, z, thr=thr):
            return np.linalg.norm(z[:n_pos]) - thr
        e.tag = tag
        events.append(e)

    lin, geo = _output_grid(t0, t_end, ctrl.samples_per_decade, ctrl.t_linear)
    ts_all, ys_all = [], []
    hit = None
    state = y0_full
    if lin.size:
        times, ys, hit = _run_phase(rhs, (lin[0], lin[-1]), state, lin, ctrl,
                                    events, logtime=False)
        ts_all.append(times)
        ys_all.append(ys)
        if hit is None:
            state = ys[-1]
    if hit is None and geo.size:
        start = geo[0]
        times, ys, hit = _run_phase(rhs, (start, geo[-1]), state, geo, ctrl,
                                    events, logtime=True)
        skip = 1 if (ts_all and times.size and times[0] <= ts_all[-1][-1]) else 0
        ts_all.append(times[skip:])
        ys_all.append(ys[skip:])

    t = np.concatenate(ts_all) if ts_all else np.array([])
    y = np.vstack(ys_all) if ys_all else np.zeros((0, len(y0_full)))
    v = np.array([rhs(tk, yk) for tk, yk in zip(t, y)]) if t.size else None
    traj = Trajectory(t=t, y=y[:, :n_pos],
                      v=v[:, :n_pos] if v is not None else None, meta=meta)
    if y.shape[1] > n_pos:
        traj.meta = dict(meta)
        traj.meta["state_velocity"] = True
        traj.v = y[:, n_pos:]
    if hit is not None:
        tag, t_hit = hit
        raise BlowUp(
            f"trajectory left the {'validity ball' if tag == 'ball' else 'blow-up guard'} "
            f"at t = {t_hit:.6g}", t_event=t_hit, trajectory=traj)
    return traj


def integrate_gradient(g: Potential, y0, t0: float = 0.0, t_end: float = 1e4,
                       ctrl: IntegrationControls | None = None,
                       error_model: ErrorModel | None = None,
                       label: str | None = None) -> Trajectory:
    """Integrate ``y' = -grad g(y) (+ injected error)`` and sample the decay.

    Samples are linear in t up to ``ctrl.t_linear`` and geometric afterwards
    (``ctrl.samples_per_decade`` per decade).  The returned trajectory stores
    the exact right-hand side at every sample in ``v``, so residual-based
    diagnostics do not need to difference the samples.

    Raises :class:`BlowUp` if ``|y|`` exceeds ``blowup_factor * |y0|`` or
    leaves the validity ball, :class:`StiffnessFailure` if step control
    collapses, and ``ValueError`` on malformed input.
    """
    ctrl = ctrl or IntegrationControls()
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (g.n,):
        raise DimensionMismatch(f"y0 shape {y0.shape} vs potential n={g.n}")
    check_flow_potential(g)
    err = error_model.realize(g) if error_model is not None else None

    def rhs(t, y):
        out = -g.gradient(y)
        if err is not None:
            out = out + err(t, y)
        return out

    meta = {
        "kind": "gradient",
        "potential": g.to_dict(),
        "label": label or g.label,
        "y0": [float(x) for x in y0],
        "t0": t0, "t_end": t_end,
        "rtol": ctrl.rtol, "atol": ctrl.atol,
        "samples_per_decade": ctrl.samples_per_decade,
        "ball_radius": ctrl.ball_radius,
        "blowup_factor": ctrl.blowup_factor,
        "integrator": f"{ctrl.method} + log-time",
        "error_model": error_model.describe() if error_model else None,
        "version": __version__,
    }
    return _integrate(rhs, y0, g.n, t0, t_end, ctrl, meta)


def integrate_heavy_ball(f: Potential, m: float, y0, v0,
                         t0: float = 0.0, t_end: float = 1e4,
                         ctrl: IntegrationControls | None = None,
                         label: str | None = None) -> Trajectory:
    """Integrate ``y'' - m y' - grad f(y) = 0`` as a first-order system.

    The state is (y, v); the trajectory stores v (= y') alongside y.  Decay
    toward the origin requires m < 0, but the integrator accepts any m != 0
    so the linear classification cases can be exercised directly.
    """
    ctrl = ctrl or IntegrationControls()
    if m == 0:
        raise ValueError("damping coefficient m must be nonzero")
    y0 = np.asarray(y0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if y0.shape != (f.n,) or v0.shape != (f.n,):
        raise DimensionMismatch("y0/v0 shape does not match potential dimension")
    check_flow_potential(f)

    def rhs(t, z):
        y, v = z[:f.n], z[f.n:]
        return np.concatenate([v, m * v + f.gradient(y)])

    meta = {
        "kind": "heavyball",
        "potential": f.to_dict(),
        "label": label or f.label,
        "m": m,
        "y0": [float(x) for x in y0],
        "v0": [float(x) for x in v0],
        "t0": t0, "t_end": t_end,
        "rtol": ctrl.rtol, "atol": ctrl.atol,
        "samples_per_decade": ctrl.samples_per_decade,
        "ball_radius": ctrl.ball_radius,
        "blowup_factor": ctrl.blowup_factor,
        "integrator": f"{ctrl.method} + log-time",
        "error_model": None,
        "version": __version__,
    }
    return _integrate(rhs, np.concatenate([y0, v0]), f.n, t0, t_end, ctrl, meta)


# ---------------------------------------------------------------------------
# trajectory CSV + sidecar


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, path) -> Path:
    """Write ``t, y_i[, v_i], norm_y, g_y`` rows plus a metadata sidecar.

    Floats are rendered with shortest round-trip formatting, so identical
    runs produce identical bytes.
    """
    path = Path(path)
    n = traj.n
    cols = ["t"] + [f"y_{i+1}" for i in range(n)]
    if traj.v is not None:
        cols += [f"v_{i+1}" for i in range(n)]
    cols += ["norm_y", "g_y"]
    g = traj.potential()
    gy = g.evaluate(traj.y) if g is not None else np.full(len(traj.t), np.nan)
    gy = np.atleast_1d(gy)
    norms = traj.norms()
    with path.open("w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(traj.t)):
            row = [_fmt(traj.t[k])] + [_fmt(x) for x in traj.y[k]]
            if traj.v is not None:
                row += [_fmt(x) for x in traj.v[k]]
            row += [_fmt(norms[k]), _fmt(gy[k])]
            fh.write(",".join(row) + "\n")
    sidecar = path.with_name(path.stem + ".meta.json")
    sidecar.write_text(json.dumps(traj.meta, sort_keys=True, indent=2,
                                  default=str) + "\n")
    return path


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.asarray(rows) if rows else np.zeros((0, len(header)))
    y_cols = [i for i, c in enumerate(header) if c.startswith("y_")]
    v_cols = [i for i, c in enumerate(header) if c.startswith("v_")]
    t = data[:, header.index("t")] if len(data) else np.array([])
    y = data[:, y_cols] if len(data) else np.zeros((0, len(y_cols)))
    v = data[:, v_cols] if (v_cols and len(data)) else None
    sidecar = path.with_name(path.stem + ".meta.json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return Trajectory(t=t, y=y, v=v, meta=meta)


# ---------------------------------------------------------------------------
# vectorization of the damped second-order linearization


@dataclass
class LinearizedSystem:
    """First-order block form of ``u'' - m u' + A u = 0`` with its adapted
    bilinear form.

    The block operator acts on (v, w) = (u, u' - (m/2) u).  ``G`` is the
    positive-definite symmetric form in which the ``psi`` columns are an
    orthonormal family adapted to the spectrum of ``A``: oscillatory pairs
    for eigenvalues above m^2/4, a resonant pair at m^2/4, and real
    root-vector pairs below (with the zero modes singled out).
    """

    A: np.ndarray
    m: float
    eigvals: np.ndarray
    eigvecs: np.ndarray           # columns are the orthonormal modes
    I1: tuple[int, ...]           # lam > m^2/4 (oscillatory)
    I2: tuple[int, ...]           # lam = m^2/4 (resonant)
    I3: tuple[int, ...]           # lam = 0
    I4: tuple[int, ...]           # remaining real-root modes
    gamma_plus: dict[int, float]
    gamma_minus: dict[int, float]
    betas: dict[int, float]
    L: np.ndarray                 # 2n x 2n block operator
    G: np.ndarray                 # 2n x 2n bilinear form
    psi: np.ndarray               # 2n x 2n, columns = adapted basis
    psi_labels: tuple[tuple[int, str], ...]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def adjoint(self) -> np.ndarray:
        """G-adjoint of L (solves G Ldag = L^T G)."""
        return np.linalg.solve(self.G, self.L.T @ self.G)


def vectorize(A, m: float, tol: float = 1e-10) -> LinearizedSystem:
    """Build the block operator, bilinear form and adapted basis for ``A, m``.

    ``A`` must be symmetric; eigenvalues within ``tol`` (scaled) of m^2/4 or
    of 0 are classified as exactly resonant / kernel modes.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be a square matrix")
    if m == 0:
        raise ValueError("m must be nonzero")
    scale = max(1.0, float(np.abs(A).max()), m * m / 4.0)
    if np.abs(A - A.T).max() > tol * scale:
        raise ValueError("A must be symmetric")
    n = A.shape[0]
    lam, phi = np.linalg.eigh(A)
    q = m * m / 4.0
    I1, I2, I3, I4 = [], [], [], []
    for i, lv in enumerate(lam):
        if abs(lv - q) <= tol * scale:
            I2.append(i)
        elif lv > q:
            I1.append(i)
        elif abs(lv) <= tol * scale:
            I3.append(i)
        else:
            I4.append(i)

    gamma_plus, gamma_minus, betas = {}, {}, {}
    for i in I1:
        betas[i] = math.sqrt(lam[i] - q)
    for i in I3 + I4:
        lv = 0.0 if i in I3 else lam[i]
        disc = math.sqrt(max(q - lv, 0.0))
        gamma_plus[i] = m / 2.0 + disc
        gamma_minus[i] = m / 2.0 - disc

    eye = np.eye(n)
    L = np.block([[m / 2.0 * eye, eye],
                  [-A + q * eye, m / 2.0 * eye]])

    P = -A + q * eye
    for i in I1:
        P = P + 2.0 * betas[i] ** 2 * np.outer(phi[:, i], phi[:, i])
    for i in I2:
        P = P + np.outer(phi[:, i], phi[:, i])
    G = (2.0 / (m * m)) * np.block([[P, np.zeros((n, n))],
                                    [np.zeros((n, n)), eye]])

    cols, labels = [], []
    z = np.zeros(n)
    for i in range(n):
        f = phi[:, i]
        if i in I1:
            cols.append(np.concatenate([z, m / math.sqrt(2.0) * f]))
            labels.append((i, "osc_1"))
            cols.append(np.concatenate([m / (math.sqrt(2.0) * betas[i]) * f, z]))
            labels.append((i, "osc_2"))
        elif i in I2:
            cols.append(np.concatenate([z, m / math.sqrt(2.0) * f]))
            labels.append((i, "res_3"))
            cols.append(np.concatenate([m / math.sqrt(2.0) * f, z]))
            labels.append((i, "res_4"))
        else:
            for tag, gam in (("plus", gamma_plus[i]), ("minus", gamma_minus[i])):
                denom = m - 2.0 * gam
                cols.append(np.concatenate([m / denom * f, -m / 2.0 * f]))
                labels.append((i, tag))
    psi = np.column_stack(cols)

    return LinearizedSystem(
        A=A, m=float(m), eigvals=lam, eigvecs=phi,
        I1=tuple(I1), I2=tuple(I2), I3=tuple(I3), I4=tuple(I4),
        gamma_plus=gamma_plus, gamma_minus=gamma_minus, betas=betas,
        L=L, G=G, psi=psi, psi_labels=tuple(labels),
    )


@dataclass
class Coefficients:
    labels: tuple[tuple[int, str], ...]
    xi: np.ndarray
    q: np.ndarray

    def by_label(self) -> dict[tuple[int, str], float]:
        return {lbl: float(x) for lbl, x in zip(self.labels, self.xi)}


def project_coefficients(sys: LinearizedSystem, u, udot,
                         check_tol: float = 1e-10) -> Coefficients:
    """Coefficients of (u, u' - (m/2) u) in the adapted basis.

    Validates the expansion: the reconstruction must match the vectorized
    state and the G-norm must match the coefficient norm (both to
    ``check_tol`` relative), which certifies completeness of the basis.
    """
    u = np.asarray(u, dtype=float)
    udot = np.asarray(udot, dtype=float)
    if u.shape != (sys.n,) or udot.shape != (sys.n,):
        raise DimensionMismatch("u/udot shape does not match system dimension")
    qvec = np.concatenate([u, udot - sys.m / 2.0 * u])
    xi = sys.psi.T @ (sys.G @ qvec)
    recon = sys.psi @ xi
    scale = max(1.0, float(np.linalg.norm(qvec)))
    if np.linalg.norm(recon - qvec) > check_tol * scale:
        raise ArithmeticError("adapted-basis reconstruction failed")
    gnorm = float(qvec @ sys.G @ qvec)
    if abs(gnorm - float(xi @ xi)) > check_tol * max(1.0, gnorm):
        raise ArithmeticError("coefficient norm does not match the G-norm")
    return Coefficients(labels=sys.psi_labels, xi=xi, q=qvec)
