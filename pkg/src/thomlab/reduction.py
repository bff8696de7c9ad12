"""Kernel reduction of the discretized circle model.

The linearization of ``u_t = u_qq + u + nc u^3`` at ``u = 0`` is diagonal in
the real Fourier modes with eigenvalues ``1 - k^2``; its kernel is the
neutral pair ``cos q / sqrt(pi), sin q / sqrt(pi)``.  For kernel coordinates
``x`` inside a trust ball this module solves the complementary equation

    P_perp [ L (v + h) + nc (v + h)^3 ] = 0,   v = x . (kernel basis),

by Newton iteration, and evaluates the reduced functional

    f(x) = F(v + h(x)),     grad f(x) = - P_ker [ L (v+h) + nc (v+h)^3 ],

whose leading homogeneous part controls slow decay of the full flow.
``fit_reduced_polynomial`` recovers that leading part from samples (order
detection by log-log slopes across radii, then a least-squares monomial fit
at the detected order), and ``adams_simon_from_reduction`` runs the sign
condition of :mod:`~thomlab.sphere_critical` on the fitted polynomial.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, NoConvergence, SingularJacobian
from .pde_spectral import CircleModel, SpectralState, energy
from .potential import Potential
from .sphere_critical import AdamsSimonResult, adams_simon

__all__ = [
    "ReducedModel",
    "PolynomialFit",
    "fit_reduced_polynomial",
    "adams_simon_from_reduction",
]


def _xi_to_state(xi: np.ndarray, K: int) -> SpectralState:
    c = np.zeros(K + 1, dtype=complex)
    c[0] = xi[0] / math.sqrt(2.0 * math.pi)
    c[1:] = (xi[1: K + 1] - 1j * xi[K + 1:]) / (2.0 * math.sqrt(math.pi))
    return SpectralState(K=K, c=c)


class ReducedModel:
    """Reduction of one circle model onto its neutral modes.

    Holds the discrete spectrum, the kernel detection, the Newton settings
    for the corrector solve and an append-only cache of evaluated samples
    ``(x, h(x), f(x), grad f(x))`` in insertion order.
    """

    def __init__(self, model: CircleModel = CircleModel.CUBIC, K: int = 64,
                 gap_tol: float = 1e-8, tol: float = 1e-12,
                 max_iter: int = 40, trust_radius: float = 0.3):
        self.model = model
        self.K = K
        self.tol = tol
        self.max_iter = max_iter
        self.trust_radius = trust_radius
        k = np.arange(K + 1)
        lam_half = 1.0 - k.astype(float) ** 2
        # real-mode ordering: const, cos 1..K, sin 1..K
        self.lam = np.concatenate([lam_half, lam_half[1:]])
        self.kernel_indices = tuple(
            int(i) for i in np.nonzero(np.abs(self.lam) < gap_tol)[0])
        if not self.kernel_indices:
            raise ValueError("discretized linearization has no kernel")
        self.perp_indices = tuple(
            int(i) for i in range(2 * K + 1) if i not in self.kernel_indices)
        self._M = 4 * (K + 1)
        theta = 2.0 * math.pi * np.arange(self._M) / self._M
        cols = [np.full(self._M, 1.0 / math.sqrt(2.0 * math.pi))]
        cols += [np.cos(j * theta) / math.sqrt(math.pi) for j in k[1:]]
        cols += [np.sin(j * theta) / math.sqrt(math.pi) for j in k[1:]]
        self._basis = np.column_stack(cols)       # (M, 2K+1)
        self.cache: list[dict] = []
        self._seen: dict[tuple, int] = {}

    @property
    def J(self) -> int:
        return len(self.kernel_indices)

    # -- transforms ---------------------------------------------------------

    def _grid(self, xi: np.ndarray) -> np.ndarray:
        return self._basis @ xi

    def _coeffs_to_xi(self, c: np.ndarray) -> np.ndarray:
        xi = np.empty(2 * self.K + 1)
        xi[0] = math.sqrt(2.0 * math.pi) * c[0].real
        xi[1: self.K + 1] = 2.0 * math.sqrt(math.pi) * c[1:].real
        xi[self.K + 1:] = -2.0 * math.sqrt(math.pi) * c[1:].imag
        return xi

    def _rhs(self, xi: np.ndarray) -> np.ndarray:
        """Right-hand side ``L u + nc u^3`` in real-mode coefficients."""
        out = self.lam * xi
        nc = self.model.nonlinear_coeff
        if nc != 0.0:
            u = self._grid(xi)
            cub = np.fft.rfft(u**3)[: self.K + 1] / self._M
            out = out + nc * self._coeffs_to_xi(cub)
        return out

    def _mult_operator(self, w_grid: np.ndarray) -> np.ndarray:
        """Multiplication by a grid function as a matrix on mode coefficients."""
        prod = w_grid[:, None] * self._basis
        C = np.fft.rfft(prod, axis=0)[: self.K + 1] / self._M
        out = np.empty((2 * self.K + 1, 2 * self.K + 1))
        out[0] = math.sqrt(2.0 * math.pi) * C[0].real
        out[1: self.K + 1] = 2.0 * math.sqrt(math.pi) * C[1:].real
        out[self.K + 1:] = -2.0 * math.sqrt(math.pi) * C[1:].imag
        return out

    def embed(self, x) -> np.ndarray:
        """Kernel coordinates -> full mode-coefficient vector."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.J,):
            raise ValueError(f"need {self.J} kernel coordinates, "
                             f"got shape {x.shape}")
        xi = np.zeros(2 * self.K + 1)
        xi[list(self.kernel_indices)] = x
        return xi

    # -- corrector ----------------------------------------------------------

    def solve_corrector(self, x, tol: float | None = None,
                        max_iter: int | None = None) -> np.ndarray:
        """Off-kernel corrector ``h(x)``: Newton on the complement.

        Solves ``P_perp (L(v+h) + nc (v+h)^3) = 0`` for ``h`` orthogonal to
        the kernel, starting from ``h = 0``; the perpendicular projection is
        enforced after every step.  Raises :class:`NoConvergence` outside
        the trust ball or when the iteration stalls, and
        :class:`SingularJacobian` when the complement Jacobian degenerates.
        """
        tol = self.tol if tol is None else tol
        max_iter = self.max_iter if max_iter is None else max_iter
        x = np.asarray(x, dtype=float)
        r = float(np.linalg.norm(x))
        if r > self.trust_radius:
            raise NoConvergence(
                f"|x| = {r:.3g} outside the trust ball "
                f"(radius {self.trust_radius:.3g})")
        xi_v = self.embed(x)
        perp = list(self.perp_indices)
        ker = list(self.kernel_indices)
        h = np.zeros_like(xi_v)
        nc = self.model.nonlinear_coeff

        def residual(hvec):
            R = self._rhs(xi_v + hvec)
            R[ker] = 0.0
            return R

        R = residual(h)
        rn = float(np.linalg.norm(R))
        for _ in range(max_iter):
            if rn <= tol:
                return h
            u_grid = self._grid(xi_v + h)
            Jmat = np.diag(self.lam)
            if nc != 0.0:
                Jmat = Jmat + 3.0 * nc * self._mult_operator(u_grid**2)
            Jpp = Jmat[np.ix_(perp, perp)]
            try:
                delta = np.linalg.solve(Jpp, -R[perp])
            except np.linalg.LinAlgError as exc:
                raise SingularJacobian(str(exc)) from None
            if not np.all(np.isfinite(delta)):
                raise SingularJacobian("non-finite Newton step")
            step = 1.0
            for _ in range(8):
                trial = h.copy()
                trial[perp] += step * delta
                R_new = residual(trial)
                rn_new = float(np.linalg.norm(R_new))
                if rn_new < rn:
                    break
                step *= 0.5
            else:
                raise NoConvergence(
                    f"Newton stalled at residual {rn:.3e}")
            h, R, rn = trial, R_new, rn_new
        if rn <= tol:
            return h
        raise NoConvergence(
            f"corrector residual {rn:.3e} after {max_iter} iterations")

    # -- reduced functional ---------------------------------------------------

    def sample(self, x) -> dict:
        """Evaluate (and cache) the reduced data at kernel coordinates x."""
        x = np.asarray(x, dtype=float)
        key = tuple(float(v) for v in x)
        if key in self._seen:
            return self.cache[self._seen[key]]
        h = self.solve_corrector(x)
        xi_u = self.embed(x) + h
        state = _xi_to_state(xi_u, self.K)
        fval = energy(state, self.model)
        rhs = self._rhs(xi_u)
        grad = -rhs[list(self.kernel_indices)]
        rec = {"x": x.copy(), "h": h, "f": float(fval), "grad": grad,
               "residual": float(np.linalg.norm(
                   np.delete(rhs, list(self.kernel_indices))))}
        self._seen[key] = len(self.cache)
        self.cache.append(rec)
        return rec

    def reduced_value(self, x) -> float:
        return self.sample(x)["f"]

    def reduced_gradient(self, x) -> np.ndarray:
        return self.sample(x)["grad"].copy()

    def reconstruct_state(self, x) -> SpectralState:
        """Full field ``v + h(x)`` as a spectral state."""
        return _xi_to_state(self.embed(x) + self.solve_corrector(x), self.K)


# ---------------------------------------------------------------------------
# leading-polynomial fit


def _monomials(degree: int, nvars: int) -> list[tuple[int, ...]]:
    out = []
    for combo in itertools.combinations_with_replacement(range(nvars), degree):
        exps = [0] * nvars
        for i in combo:
            exps[i] += 1
        out.append(tuple(exps))
    # graded-lex within the fixed degree
    return sorted(out, reverse=True)


@dataclass
class PolynomialFit:
    """Leading homogeneous part of the reduced functional.

    ``p`` is None when the sampled values are zero to tolerance (integrable
    kernel); otherwise ``coefficients`` maps degree-p exponent tuples to
    fitted values in graded-lex order.
    """

    p: int | None
    coefficients: dict[tuple[int, ...], float]
    residual: float
    cond: float
    degree_estimate: float | None
    radii: tuple[float, ...]
    n_directions: int
    note: str = ""

    def coefficient_norm(self) -> float:
        if not self.coefficients:
            return 0.0
        return float(np.linalg.norm(list(self.coefficients.values())))

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(sum(c * np.prod(x**np.array(e))
                         for e, c in self.coefficients.items()))

    def leading_potential(self) -> Potential | None:
        if self.p is None:
            return None
        terms = tuple((e, c) for e, c in self.coefficients.items())
        return Potential(n=len(next(iter(self.coefficients))), terms=terms,
                         label=f"reduced-leading-deg{self.p}")

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "coefficients": [{"exps": list(e), "coef": c}
                             for e, c in self.coefficients.items()],
            "residual": self.residual,
            "cond": self.cond,
            "degree_estimate": self.degree_estimate,
            "radii": list(self.radii),
            "n_directions": self.n_directions,
            "note": self.note,
        }


def _directions(J: int, n: int, seed: int = 0) -> np.ndarray:
    if J == 2:
        ang = 2.0 * math.pi * np.arange(n) / n
        return np.column_stack([np.cos(ang), np.sin(ang)])
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n, J))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def _fit_degree(samples: np.ndarray, values: np.ndarray, degree: int,
                cond_guard: float) -> tuple[dict[tuple[int, ...], float],
                                            float, float]:
    monos = _monomials(degree, samples.shape[1])
    A = np.column_stack([np.prod(samples**np.array(e), axis=1)
                         for e in monos])
    scales = np.linalg.norm(A, axis=0)
    if np.any(scales == 0.0):
        raise DegenerateFit("degenerate monomial column in the fit design")
    An = A / scales
    cond = float(np.linalg.cond(An))
    if cond > cond_guard:
        raise DegenerateFit(
            f"fit design condition number {cond:.3e} exceeds the guard")
    coef, *_ = np.linalg.lstsq(An, values, rcond=None)
    coef = coef / scales
    resid = float(np.linalg.norm(A @ coef - values))
    return dict(zip(monos, (float(c) for c in coef))), resid, cond


def fit_reduced_polynomial(red: ReducedModel,
                           radii: tuple[float, ...] = (0.02, 0.04, 0.08),
                           n_directions: int = 32,
                           zero_tol: float = 1e-10,
                           coeff_floor: float = 1e-8,
                           cond_guard: float = 1e8) -> PolynomialFit:
    """Fit the leading homogeneous part of the reduced functional.

    Samples ``f`` on the given radii times ``n_directions`` directions, reads
    the homogeneity order off the log-log slope across radii (it must sit
    near an integer), and least-squares fits degree-p monomials in the
    kernel coordinates.  After the fit, every lower degree down to 2 is
    checked against the fit residuals; a lower degree whose projected
    coefficient norm exceeds ``coeff_floor`` takes over as p (the reported
    order is the lowest degree present above that floor).

    Values that vanish to ``zero_tol`` give ``p = None`` (integrable case).
    Raises :class:`DegenerateFit` on inconsistent slopes or an
    ill-conditioned design.
    """
    radii = tuple(sorted(float(r) for r in radii))
    if radii[0] <= 0:
        raise ValueError("radii must be positive")
    if max(radii) > red.trust_radius:
        raise ValueError("sample radii must stay inside the trust ball")
    dirs = _directions(red.J, n_directions)
    pts = np.vstack([r * dirs for r in radii])
    vals = np.array([red.reduced_value(x) for x in pts])

    vmax = float(np.max(np.abs(vals)))
    if vmax <= zero_tol:
        return PolynomialFit(
            p=None, coefficients={}, residual=vmax, cond=1.0,
            degree_estimate=None, radii=radii, n_directions=n_directions,
            note="reduced value vanishes within tolerance (integrable)")

    # order detection: per-direction log-log slope between extreme radii
    lo, hi = vals[: n_directions], vals[-n_directions:]
    usable = (np.abs(lo) > zero_tol) & (np.abs(hi) > zero_tol)
    if not np.any(usable):
        raise DegenerateFit("no direction has a usable radial profile")
    slopes = (np.log(np.abs(hi[usable])) - np.log(np.abs(lo[usable]))) \
        / (math.log(radii[-1]) - math.log(radii[0]))
    p_raw = float(np.median(slopes))
    p = int(round(p_raw))
    if p < 2 or abs(p_raw - p) > 0.2:
        raise DegenerateFit(
            f"radial profiles are not consistently homogeneous "
            f"(fitted order {p_raw:.3f})")

    coeffs, resid, cond = _fit_degree(pts, vals, p, cond_guard)
    # lowest-degree takeover check on the residuals
    res_vec = vals - np.array([sum(c * np.prod(x**np.array(e))
                                   for e, c in coeffs.items()) for x in pts])
    for d in range(2, p):
        low_coeffs, _, _ = _fit_degree(pts, res_vec, d, cond_guard)
        if np.linalg.norm(list(low_coeffs.values())) > coeff_floor:
            coeffs, resid, cond = _fit_degree(pts, vals, d, cond_guard)
            p = d
            break
    rel_resid = resid / float(np.linalg.norm(vals))
    return PolynomialFit(p=p, coefficients=coeffs, residual=rel_resid,
                         cond=cond, degree_estimate=p_raw, radii=radii,
                         n_directions=n_directions)


def adams_simon_from_reduction(red: ReducedModel,
                               fit: PolynomialFit | None = None,
                               mode: str = "parabolic",
                               m: float | None = None) -> AdamsSimonResult:
    """Run the restricted-critical-value sign test on the fitted leading part.

    An integrable kernel (fit with ``p = None``) fails by definition: the
    reduced value is constant, so no slowly decaying direction exists.
    """
    if fit is None:
        fit = fit_reduced_polynomial(red)
    if fit.p is None:
        return AdamsSimonResult(
            verdict="fails", best_value=None, witness=None, mode=mode,
            detail="reduced value constant (integrable); "
                   "decay must be exponential")
    gp = fit.leading_potential()
    return adams_simon(gp, mode=mode, m=m)
