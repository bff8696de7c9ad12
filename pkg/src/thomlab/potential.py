"""Sparse polynomial potentials on R^n with exact calculus helpers.

A :class:`Potential` is an immutable multivariate polynomial stored as a
tuple of ``(exponents, coefficient)`` terms in graded-lexicographic order.
Evaluation, gradients and Hessians are computed term by term (no automatic
differentiation, no finite differences), and term sums are accumulated with
compensated (Neumaier) summation so near-cancelling coefficients do not lose
precision.

The module also provides the radial/spherical decomposition used throughout
the analysis code: the radial derivative ``d_r g``, the spherical gradient
(the component of the gradient orthogonal to the position ray) and the
degree-normalized value ``g(y) / |y|**q``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations_with_replacement

import numpy as np

__all__ = [
    "Potential",
    "monomial",
    "radial_power",
    "diagonal_powers",
    "bubble_sheet",
    "bubble_sheet_symmetric",
    "radial_derivative",
    "spherical_gradient",
    "normalized_value",
    "check_flow_potential",
]


def _neumaier(parts):
    """Compensated sum of an iterable of equally-shaped float arrays."""
    total = None
    comp = None
    for x in parts:
        x = np.asarray(x, dtype=float)
        if total is None:
            total = x.copy()
            comp = np.zeros_like(x)
            continue
        t = total + x
        # classic Neumaier correction: recover the low-order bits of whichever
        # addend was smaller in magnitude
        comp = comp + np.where(
            np.abs(total) >= np.abs(x), (total - t) + x, (x - t) + total
        )
        total = t
    if total is None:
        return np.asarray(0.0)
    return total + comp


def _canonical_terms(n: int, terms) -> tuple[tuple[tuple[int, ...], float], ...]:
    merged: dict[tuple[int, ...], float] = {}
    for item in terms:
        exps, coef = item
        exps = tuple(int(e) for e in exps)
        if len(exps) != n:
            raise ValueError(f"term {exps} does not match dimension n={n}")
        if any(e < 0 for e in exps):
            raise ValueError(f"negative exponent in term {exps}")
        coef = float(coef)
        if not math.isfinite(coef):
            raise ValueError("non-finite coefficient")
        merged[exps] = merged.get(exps, 0.0) + coef
    # graded-lex: total degree first, then lexicographic on the exponent tuple
    ordered = sorted(
        ((e, c) for e, c in merged.items() if c != 0.0),
        key=lambda item: (sum(item[0]), item[0]),
    )
    return tuple(ordered)


@dataclass(frozen=True)
class Potential:
    """Immutable sparse polynomial on R^n.

    Parameters
    ----------
    n : int
        Ambient dimension (number of variables).
    terms : sequence of (exponents, coefficient)
        Monomial terms; duplicates are merged, zero coefficients dropped,
        and the result is stored in graded-lexicographic order, which makes
        equality and serialization canonical.
    label : str
        Free-form description used in metadata and plots.
    """

    n: int
    terms: tuple[tuple[tuple[int, ...], float], ...] = field(default=())
    label: str = ""

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("dimension must be >= 1")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "terms", _canonical_terms(self.n, self.terms))

    # -- evaluation ----------------------------------------------------

    def _points(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape == () or y.shape[-1] != self.n:
            raise ValueError(f"point shape {y.shape} does not match n={self.n}")
        return y

    def evaluate(self, y) -> np.ndarray:
        """Evaluate at one point ``(n,)`` or a batch ``(..., n)``."""
        y = self._points(y)
        parts = []
        for exps, coef in self.terms:
            mono = np.ones(y.shape[:-1])
            for i, e in enumerate(exps):
                if e:
                    mono = mono * y[..., i] ** e
            parts.append(coef * mono)
        out = _neumaier(parts)
        if parts == []:
            out = np.zeros(y.shape[:-1])
        return out if out.shape else float(out)

    __call__ = evaluate

    def gradient(self, y) -> np.ndarray:
        """Exact gradient, shape ``(..., n)``."""
        y = self._points(y)
        cols = []
        for i in range(self.n):
            parts = []
            for exps, coef in self.terms:
                e_i = exps[i]
                if e_i == 0:
                    continue
                mono = np.ones(y.shape[:-1])
                for j, e in enumerate(exps):
                    p = e - 1 if j == i else e
                    if p:
                        mono = mono * y[..., j] ** p
                parts.append(coef * e_i * mono)
            col = _neumaier(parts) if parts else np.zeros(y.shape[:-1])
            cols.append(col)
        return np.stack([np.asarray(c, dtype=float) for c in cols], axis=-1)

    def hessian(self, y) -> np.ndarray:
        """Exact Hessian, shape ``(..., n, n)``; symmetric by construction."""
        y = self._points(y)
        base = y.shape[:-1]
        H = np.zeros(base + (self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                parts = []
                for exps, coef in self.terms:
                    if i == j:
                        fac = exps[i] * (exps[i] - 1)
                    else:
                        fac = exps[i] * exps[j]
                    if fac == 0:
                        continue
                    mono = np.ones(base)
                    for k, e in enumerate(exps):
                        p = e - (2 if (k == i and i == j) else 0)
                        if k in (i, j) and i != j:
                            p = e - 1
                        if p:
                            mono = mono * y[..., k] ** p
                    parts.append(coef * fac * mono)
                val = _neumaier(parts) if parts else np.zeros(base)
                H[..., i, j] = val
                H[..., j, i] = val
        return H

    # -- structure -----------------------------------------------------

    def partial(self, i: int) -> "Potential":
        """Partial derivative along coordinate ``i`` as a new Potential."""
        new = []
        for exps, coef in self.terms:
            if exps[i] == 0:
                continue
            e = list(exps)
            e[i] -= 1
            new.append((tuple(e), coef * exps[i]))
        return Potential(self.n, new, label=f"d{i} {self.label}".strip())

    def homogeneous_components(self) -> dict[int, "Potential"]:
        """Split into homogeneous pieces keyed by total degree."""
        by_deg: dict[int, list] = {}
        for exps, coef in self.terms:
            by_deg.setdefault(sum(exps), []).append((exps, coef))
        return {
            d: Potential(self.n, t, label=f"{self.label}[deg {d}]".strip())
            for d, t in sorted(by_deg.items())
        }

    def order_p(self) -> int:
        """Lowest total degree carrying a nonzero term."""
        if not self.terms:
            raise ValueError("zero polynomial has no leading order")
        return sum(self.terms[0][0])

    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e, _ in self.terms)

    def is_homogeneous(self) -> bool:
        degs = {sum(e) for e, _ in self.terms}
        return len(degs) <= 1

    def leading_part(self) -> "Potential":
        """Homogeneous component of lowest degree."""
        p = self.order_p()
        return self.homogeneous_components()[p]

    def scaled(self, c: float) -> "Potential":
        return Potential(
            self.n, [(e, c * co) for e, co in self.terms], label=self.label
        )

    def __neg__(self) -> "Potential":
        pot = self.scaled(-1.0)
        if self.label:
            object.__setattr__(pot, "label", f"-({self.label})")
        return pot

    def __add__(self, other: "Potential") -> "Potential":
        if not isinstance(other, Potential):
            return NotImplemented
        if other.n != self.n:
            raise ValueError("dimension mismatch in potential sum")
        return Potential(self.n, list(self.terms) + list(other.terms))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"exps": list(e), "coef": c} for e, c in self.terms],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Potential":
        return cls(
            int(data["n"]),
            [(tuple(t["exps"]), float(t["coef"])) for t in data["terms"]],
            label=str(data.get("label", "")),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Potential":
        return cls.from_dict(json.loads(text))


# -- named constructors -------------------------------------------------


def monomial(n: int, exps, coef: float = 1.0, label: str = "") -> Potential:
    return Potential(n, [(tuple(exps), coef)], label=label)


def radial_power(n: int, power: int, coef: float = 1.0) -> Potential:
    """``coef * |y|**power`` for even ``power`` (expanded exactly)."""
    if power % 2 != 0 or power < 2:
        raise ValueError("radial_power needs an even power >= 2")
    half = power // 2
    terms = []
    for combo in combinations_with_replacement(range(n), half):
        counts = [0] * n
        for i in combo:
            counts[i] += 1
        mult = math.factorial(half)
        for c in counts:
            mult //= math.factorial(c)
        terms.append((tuple(2 * c for c in counts), coef * mult))
    return Potential(n, terms, label=f"{coef}*|y|^{power}")


def diagonal_powers(powers, coefs=None) -> Potential:
    """``sum_i c_i * y_i**p_i`` (independent even/odd powers per axis)."""
    powers = list(powers)
    n = len(powers)
    if coefs is None:
        coefs = [1.0] * n
    terms = []
    for i, (p, c) in enumerate(zip(powers, coefs)):
        e = [0] * n
        e[i] = int(p)
        terms.append((tuple(e), c))
    return Potential(n, terms, label="+".join(f"y{i+1}^{p}" for i, p in enumerate(powers)))


def bubble_sheet() -> Potential:
    """Cubic model potential on R^3 with two isolated critical rays and
    axis rays on the unit sphere (see the critical-point tests)."""
    s2 = math.sqrt(2.0)
    return Potential(
        3,
        [
            ((3, 0, 0), 8.0 / 3.0),
            ((0, 3, 0), 8.0 / 3.0),
            ((1, 0, 2), s2),
            ((0, 1, 2), s2),
        ],
        label="bubble_sheet",
    )


def bubble_sheet_symmetric() -> Potential:
    """Rotation-invariant variant of :func:`bubble_sheet`.

    The mixed-term coefficient 4 makes the cubic invariant under the circle
    action that rotates the (y1 - y2, sqrt(2) y3) plane, so its restriction
    to the unit sphere has genuinely positive-dimensional critical orbits
    (two circles through the first two coordinate axes).
    """
    return Potential(
        3,
        [
            ((3, 0, 0), 8.0 / 3.0),
            ((0, 3, 0), 8.0 / 3.0),
            ((1, 0, 2), 4.0),
            ((0, 1, 2), 4.0),
        ],
        label="bubble_sheet_symmetric",
    )


# -- radial / spherical helpers ------------------------------------------


def _norms(y: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(y, axis=-1)
    if np.any(r == 0.0):
        raise ValueError("radial quantities are undefined at the origin")
    return r


def radial_derivative(g: Potential, y) -> np.ndarray:
    """Directional derivative of ``g`` along the position ray, <grad g, y/|y|>."""
    y = np.asarray(y, dtype=float)
    r = _norms(y)
    grad = g.gradient(y)
    out = np.einsum("...i,...i->...", grad, y) / r
    return out if out.shape else float(out)


def spherical_gradient(g: Potential, y) -> np.ndarray:
    """Component of the gradient orthogonal to the position ray."""
    y = np.asarray(y, dtype=float)
    r = _norms(y)
    grad = g.gradient(y)
    radial = np.einsum("...i,...i->...", grad, y) / (r * r)
    return grad - radial[..., None] * y


def normalized_value(g: Potential, y, q: float) -> np.ndarray:
    """Degree-q normalized value ``g(y) / |y|**q``."""
    y = np.asarray(y, dtype=float)
    r = _norms(y)
    out = g.evaluate(y) / r**q
    return out if np.ndim(out) else float(out)


def check_flow_potential(g: Potential) -> None:
    """Reject potentials whose flow does not fix the origin.

    Decay analysis needs g(0) = 0 and grad g(0) = 0, i.e. no constant and
    no linear terms.
    """
    for exps, _ in g.terms:
        if sum(exps) < 2:
            raise ValueError(
                "flow potential must have vanishing value and gradient at 0 "
                f"(offending term {exps})"
            )
