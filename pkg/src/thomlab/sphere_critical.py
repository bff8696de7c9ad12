"""Critical directions of homogeneous potentials restricted to the unit sphere.

For a homogeneous polynomial ``g_p`` of degree p the restriction to the unit
sphere controls the leading behaviour of decaying flow trajectories: a unit
critical direction ``w`` with positive restricted value ``beta0 = g_p(w)``
carries the exact power-law solution returned by :func:`ansatz_solution`.

The solver is a multistart projected Newton iteration on the sphere with a
gradient-descent fallback, followed by deterministic deduplication and a
nearest-neighbour clustering pass that flags positive-dimensional critical
orbits (for instance critical circles of rotation-invariant potentials).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .potential import Potential

__all__ = [
    "CriticalPoint",
    "AdamsSimonResult",
    "critical_points",
    "adams_simon",
    "ansatz_solution",
    "ansatz_radius",
]


@dataclass(frozen=True)
class CriticalPoint:
    """A converged critical direction of the restricted potential.

    direction : unit vector (tuple for hashability/immutability)
    value     : g_p evaluated at the direction
    residual  : norm of the spherical gradient at the direction
    orbit_id  : index of the cluster this point belongs to; clusters with
                many members indicate a positive-dimensional orbit
    """

    direction: tuple[float, ...]
    value: float
    residual: float
    orbit_id: int

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.direction)


def _angle(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.arccos(np.clip(np.dot(a, b), -1.0, 1.0)))


def _newton_on_sphere(gp: Potential, w0: np.ndarray, p: int, tol: float,
                      max_iter: int) -> tuple[np.ndarray, float] | None:
    """Damped Riemannian Newton for the spherical gradient; None if stuck."""
    w = w0 / np.linalg.norm(w0)
    n = gp.n

    def sph_grad(w):
        grad = gp.gradient(w)
        return grad - np.dot(grad, w) * w

    res = sph_grad(w)
    rn = np.linalg.norm(res)
    for _ in range(max_iter):
        if rn <= tol:
            return w, rn
        grad = gp.gradient(w)
        hess = gp.hessian(w)
        P = np.eye(n) - np.outer(w, w)
        # Riemannian Hessian of the restriction plus a rank-one pin along w
        # to make the linear system nonsingular in the normal direction.
        H = P @ hess @ P - np.dot(grad, w) * P + np.outer(w, w)
        try:
            step = np.linalg.solve(H, -res)
        except np.linalg.LinAlgError:
            step = -res
        step = step - np.dot(step, w) * w
        # Armijo-style backtracking on the residual norm, with a plain
        # projected-gradient fallback when the Newton direction stalls.
        accepted = False
        for fallback in (False, True):
            direction = step if not fallback else -res
            scale = 1.0
            for _ in range(40):
                w_new = w + scale * direction
                w_new /= np.linalg.norm(w_new)
                r_new = sph_grad(w_new)
                rn_new = np.linalg.norm(r_new)
                if rn_new < rn * (1.0 - 1e-4 * scale) or rn_new <= tol:
                    w, res, rn = w_new, r_new, rn_new
                    accepted = True
                    break
                scale *= 0.5
            if accepted:
                break
        if not accepted:
            return None
    if rn <= tol:
        return w, rn
    return None


def critical_points(gp: Potential, n_starts: int = 256, seed: int = 0,
                    tol: float = 1e-9, max_iter: int = 120,
                    dedup_angle: float = 1e-6,
                    orbit_min_size: int = 11) -> list[CriticalPoint]:
    """Find critical directions of a homogeneous potential on the sphere.

    Multistart search from ``n_starts`` uniformly seeded directions.  Results
    are sorted deterministically, deduplicated at angular distance
    ``dedup_angle`` and clustered by nearest-neighbour linkage; a cluster
    containing more than ten points is flagged as one positive-dimensional
    orbit (all members share its ``orbit_id``).

    Raises ``ValueError`` if ``gp`` is not homogeneous of degree >= 2.
    """
    if not gp.terms or not gp.is_homogeneous():
        raise ValueError("critical_points expects a nonzero homogeneous potential")
    p = gp.order_p()
    if p < 2:
        raise ValueError("homogeneous degree must be >= 2")
    n = gp.n

    if n == 1:
        pts = []
        for w in (np.array([1.0]), np.array([-1.0])):
            pts.append((w, 0.0))
        found = pts
    else:
        rng = np.random.default_rng(seed)
        starts = rng.standard_normal((n_starts, n))
        starts /= np.linalg.norm(starts, axis=1, keepdims=True)
        found = []
        for w0 in starts:
            out = _newton_on_sphere(gp, w0, p, tol, max_iter)
            if out is not None:
                found.append(out)

    # deterministic ordering before dedup: by value then direction
    found.sort(key=lambda it: (round(float(gp.evaluate(it[0])), 12),)
               + tuple(np.round(it[0], 12)))
    kept: list[tuple[np.ndarray, float]] = []
    for w, rn in found:
        dup = None
        for k, (wk, rk) in enumerate(kept):
            if _angle(w, wk) < dedup_angle:
                dup = k
                break
        if dup is None:
            kept.append((w, rn))
        elif rn < kept[dup][1]:
            kept[dup] = (w, rn)

    if not kept:
        return []

    # single-linkage clustering: angular gap below 3x the multistart coverage
    # radius AND matching critical value links two points. Random starts cover
    # the sphere with radius ~ (log N / N)^(1/(n-1)), not N^(-1/(n-1)); the cap
    # keeps well-separated isolated points (>= pi/2 apart) in distinct orbits.
    if n == 1:
        link_angle = math.pi / 2
    else:
        cover = (math.log(float(n_starts) + 1.0) / float(n_starts)) ** (1.0 / (n - 1))
        link_angle = min(math.pi / 3.0, 3.0 * math.pi * cover)
    values = [float(gp.evaluate(w)) for w, _ in kept]
    vscale = max(1.0, max(abs(v) for v in values))
    parent = list(range(len(kept)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            if _angle(kept[i][0], kept[j][0]) < link_angle and \
                    abs(values[i] - values[j]) < 1e-6 * vscale:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    roots = sorted({find(i) for i in range(len(kept))},
                   key=lambda r: (round(values[r], 12),) + tuple(np.round(kept[r][0], 12)))
    orbit_of = {r: k for k, r in enumerate(roots)}

    points = [
        CriticalPoint(
            direction=tuple(float(x) for x in w),
            value=values[i],
            residual=float(rn),
            orbit_id=orbit_of[find(i)],
        )
        for i, (w, rn) in enumerate(kept)
    ]
    points.sort(key=lambda cp: (round(cp.value, 12), cp.direction))
    return points


def orbit_sizes(points: list[CriticalPoint]) -> dict[int, int]:
    sizes: dict[int, int] = {}
    for cp in points:
        sizes[cp.orbit_id] = sizes.get(cp.orbit_id, 0) + 1
    return sizes


def positive_dimensional_orbits(points: list[CriticalPoint],
                                min_size: int = 11) -> list[int]:
    """Orbit ids whose clusters are large enough to indicate a continuum."""
    return sorted(o for o, s in orbit_sizes(points).items() if s >= min_size)


@dataclass(frozen=True)
class AdamsSimonResult:
    """Outcome of the sign condition on restricted critical values.

    verdict: 'positive' if some critical value (parabolic) or value/m
    (elliptic) exceeds +tol; 'nonnegative_only' if the best one sits in
    [-tol, +tol]; 'fails' otherwise or when no critical point was found.
    """

    verdict: str
    best_value: float | None
    witness: tuple[float, ...] | None
    mode: str
    detail: str = ""


def adams_simon(gp: Potential, mode: str = "parabolic", m: float | None = None,
                tol: float = 1e-9, n_starts: int = 256, seed: int = 0,
                points: list[CriticalPoint] | None = None) -> AdamsSimonResult:
    """Sign test for the restricted critical values.

    ``mode='parabolic'`` tests the values themselves; ``mode='elliptic'``
    tests the values divided by the (negative) damping coefficient ``m``.
    Non-exponential decay requires the best tested value to be nonnegative;
    strict positivity is reported separately because it is the quantitative
    case the rate analysis relies on.
    """
    if mode not in ("parabolic", "elliptic"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "elliptic":
        if m is None or not m < 0:
            raise ValueError("elliptic mode needs a damping coefficient m < 0")
    if points is None:
        points = critical_points(gp, n_starts=n_starts, seed=seed)
    if not points:
        return AdamsSimonResult("fails", None, None, mode,
                                detail="no critical direction found")
    scale = 1.0 if mode == "parabolic" else 1.0 / m
    best = max(points, key=lambda cp: scale * cp.value)
    best_value = scale * best.value
    if best_value > tol:
        verdict = "positive"
    elif best_value >= -tol:
        verdict = "nonnegative_only"
    else:
        verdict = "fails"
    return AdamsSimonResult(verdict, float(best_value), best.direction, mode)


def ansatz_radius(beta0: float, p: int, t) -> np.ndarray:
    """Radius ``(beta0 * p * (p-2) * t)**(-1/(p-2))`` of the model solution."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("the model solution is defined for t > 0")
    return (beta0 * p * (p - 2) * t) ** (-1.0 / (p - 2))


def ansatz_solution(gp: Potential, w, t) -> np.ndarray:
    """Exact power-law trajectory along a positive critical direction.

    ``x(t) = (beta0 * p * (p-2) * t)**(-1/(p-2)) * w`` with
    ``beta0 = g_p(w)``; it solves ``x' = -grad g_p(x)`` exactly when ``w``
    is a unit critical direction of the restriction with ``beta0 > 0``.

    Raises ``ValueError`` when ``beta0 <= 0`` or the degree is < 3 (the
    power-law form degenerates at p = 2).
    """
    if not gp.is_homogeneous():
        raise ValueError("ansatz_solution expects a homogeneous potential")
    p = gp.order_p()
    if p <= 2:
        raise ValueError("power-law decay needs homogeneous degree p >= 3")
    w = np.asarray(w, dtype=float)
    nw = np.linalg.norm(w)
    if abs(nw - 1.0) > 1e-8:
        raise ValueError("direction must be a unit vector")
    beta0 = float(gp.evaluate(w))
    if beta0 <= 0:
        raise ValueError(f"restricted value at the direction is {beta0}; "
                         "the decaying branch needs beta0 > 0")
    r = ansatz_radius(beta0, p, t)
    return np.multiply.outer(r, w) if np.ndim(r) else r * w
