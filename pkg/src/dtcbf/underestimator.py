"""Quadratic-perturbation convex underestimators.

Given a twice continuously differentiable expression F and a box X, the
perturbed function

    F_under(x) = F(x) + sum_i alpha_i * (lo_i - x_i) * (hi_i - x_i)

is convex on X and bounded above by F whenever the per-dimension shifts
alpha_i >= 0 are large enough.  Shifts are computed from interval
Hessian enclosures with a Gerschgorin row bound; an optional fixed,
positive scale vector applies the scaled variant (the scale acts as a
diagonal similarity transform, so any positive scale certifies
convexity).  With the default uniform scale, shrinking the box never
increases any alpha, because interval enclosures are inclusion-isotone.

The maximum gap between F and its underestimator occurs at the box
center and equals sum_i alpha_i * width_i^2 / 4.
"""

from __future__ import annotations

import math

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .expressions import Expr, evaluate, interval_taylor2, taylor2
from .intervals import BoxN

__all__ = [
    "AlphaVector",
    "QuadraticModel",
    "Underestimator",
    "compute_alpha",
    "prepare",
    "build",
    "max_separation",
]


@dataclass(frozen=True)
class AlphaVector:
    """Per-dimension convexification shifts, recorded with their box."""

    alphas: tuple[float, ...]
    box: BoxN

    def __post_init__(self):
        if len(self.alphas) != self.box.n:
            raise DimensionMismatch("alpha vector and box dimensions differ")
        if any(a < 0.0 for a in self.alphas):
            raise ValueError("alpha entries must be non-negative")

    @property
    def max(self) -> float:
        return max(self.alphas)


def _alphas_from_interval_hessian(h, n, safety, scale) -> tuple[float, ...]:
    if scale is None:
        s = np.ones(n)
    else:
        s = np.asarray(scale, dtype=float).copy()
        if len(s) != n:
            raise DimensionMismatch("scale vector and box dimensions differ")
        s[s <= 0.0] = 1.0
    alphas = []
    for i in range(n):
        radius = 0.0
        for j in range(n):
            if j != i:
                radius += h[i][j].mag() * (s[j] / s[i])
        alphas.append(safety * max(0.0, -0.5 * (h[i][i].lo - radius)))
    return tuple(alphas)


def compute_alpha(
    e: Expr,
    box: BoxN,
    safety: float = 1.0,
    scale: np.ndarray | None = None,
    kind: str = "x",
    env: dict | None = None,
    inflation: float = 0.0,
) -> AlphaVector:
    """Gerschgorin shifts from the interval Hessian of e over box.

    alpha_i = safety * max(0, -(H_ii_lo - sum_{j!=i} |H_ij|_max * s_j/s_i) / 2)

    `scale` supplies the fixed positive weights s (default: all ones;
    entries <= 0 are treated as 1).  `env` provides boxes for variable
    kinds other than `kind`.
    """
    if safety < 1.0:
        raise ValueError("alpha safety multiplier must be >= 1")
    n = box.n
    ienv = dict(env) if env else {}
    ienv[kind] = box
    _, _, h = interval_taylor2(e, ienv, kind, n, inflation)
    return AlphaVector(_alphas_from_interval_hessian(h, n, safety, scale), box)


def _choose_alphas(h, box: BoxN, n: int, safety: float, scale) -> tuple[float, ...]:
    """Pick the Gerschgorin scaling with the smaller maximum separation.

    Candidates: the caller-supplied scale (or uniform weights), and the
    diagonal similarity d_i = 1/sqrt(|H_ii|) (handles positive-definite
    but not diagonally dominant Hessians).  Each candidate vector is
    independently a valid convexifier, so choosing per call is sound."""
    candidates = [_alphas_from_interval_hessian(h, n, safety, scale)]
    diag_mags = [h[i][i].mag() for i in range(n)]
    if n > 1 and max(diag_mags) > 1e-12:
        d = np.array([1.0 / math.sqrt(max(m, 1e-12)) for m in diag_mags])
        candidates.append(_alphas_from_interval_hessian(h, n, safety, d))
    widths_sq = [dim.width ** 2 for dim in box.dims]

    def separation(alphas):
        return sum(a * w for a, w in zip(alphas, widths_sq))

    return min(candidates, key=separation)


def prepare(
    e: Expr,
    box: BoxN,
    safety: float = 1.0,
    scale: np.ndarray | None = None,
    kind: str = "x",
    cache: dict | None = None,
) -> Underestimator:
    """Build an underestimator, detecting exactly-quadratic structure.

    When every interval Hessian entry over the box has zero width, the
    Hessian is constant there; since all expression primitives are real
    analytic on their domains, the base function is then quadratic and a
    closed-form model replaces expression walks.  With `cache` (keyed by
    expression identity), the constant Hessian, shifts and model are
    reused across boxes of the same run; non-constant expressions fall
    back to per-box computation.
    """
    if safety < 1.0:
        raise ValueError("alpha safety multiplier must be >= 1")
    n = box.n
    key = (id(e), kind) if cache is not None else None
    if key is not None and key in cache:
        entry = cache[key]
        if entry is not None:
            alphas, quad = entry
            return Underestimator(e, AlphaVector(alphas, box), box, kind, quad)
        # marked non-constant: fall through to per-box work
    _, _, h = interval_taylor2(e, {kind: box}, kind, n)
    constant = all(h[i][j].width == 0.0 for i in range(n) for j in range(n)) and all(
        d.width > 0.0 for d in box.dims
    )
    alphas = _choose_alphas(h, box, n, safety, scale)
    quad = None
    if constant:
        x_ref = np.array([d.mid for d in box.dims])
        v_ref, g_ref, _ = taylor2(e, {kind: x_ref}, kind, n)
        hess = np.array([[h[i][j].lo for j in range(n)] for i in range(n)], dtype=float)
        quad = QuadraticModel(x_ref, float(v_ref), np.array(g_ref, dtype=float), hess)
    if key is not None:
        cache[key] = (alphas, quad) if constant else None
    return Underestimator(e, AlphaVector(alphas, box), box, kind, quad)


@dataclass(frozen=True)
class QuadraticModel:
    """Exact closed form of an expression whose Hessian is constant on a
    box: value/gradient via second-order Taylor expansion around x_ref.
    Only sound where the Hessian really is constant (see prepare)."""

    x_ref: np.ndarray
    v_ref: float
    g_ref: np.ndarray
    hess: np.ndarray

    def eval2(self, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        d = x - self.x_ref
        hd = self.hess @ d
        v = self.v_ref + float(self.g_ref @ d) + 0.5 * float(d @ hd)
        return v, self.g_ref + hd, self.hess


@dataclass(frozen=True)
class Underestimator:
    """F plus its convexifying quadratic perturbation on a box.

    Exposes value/gradient/Hessian of the perturbed function; `base`
    evaluations are available for true-function bookkeeping.  When the
    base expression is known to be quadratic on the box, `quad` holds a
    closed-form model that bypasses the expression walk.
    """

    base: Expr
    alpha: AlphaVector
    box: BoxN
    kind: str = "x"
    quad: QuadraticModel | None = None

    def __post_init__(self):
        if self.alpha.box is not self.box and self.alpha.box != self.box:
            raise DimensionMismatch("alpha was computed for a different box")

    def _quad_pert(self, x: np.ndarray) -> float:
        q = 0.0
        for a, d, xi in zip(self.alpha.alphas, self.box.dims, x):
            if a != 0.0:
                q += a * (d.lo - xi) * (d.hi - xi)
        return q

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.quad is not None:
            v, _, _ = self.quad.eval2(x)
        else:
            v = float(evaluate(self.base, {self.kind: x}))
        return v + self._quad_pert(x)

    def base_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if self.quad is not None:
            return self.quad.eval2(x)[0]
        return float(evaluate(self.base, {self.kind: x}))

    def taylor2(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian of the perturbed function at x."""
        x = np.asarray(x, dtype=float)
        if self.quad is not None:
            v, g, h = self.quad.eval2(x)
            g = g.copy()
            h = h.copy()
        else:
            v, g, h = taylor2(self.base, {self.kind: x}, self.kind, self.box.n)
            g = np.array(g, dtype=float)
            h = np.array(h, dtype=float)
        for i, (a, d) in enumerate(zip(self.alpha.alphas, self.box.dims)):
            if a != 0.0:
                v += a * (d.lo - x[i]) * (d.hi - x[i])
                g[i] += a * (2.0 * x[i] - d.lo - d.hi)
                h[i, i] += 2.0 * a
        return v, g, h


def build(e: Expr, box: BoxN, alpha: AlphaVector, kind: str = "x") -> Underestimator:
    """Attach precomputed shifts to an expression over a box."""
    if alpha.box != box:
        raise DimensionMismatch("alpha was computed for a different box")
    return Underestimator(e, alpha, box, kind)


def max_separation(alpha: AlphaVector) -> float:
    """Largest gap between F and its underestimator on the recorded box;
    attained at the box center."""
    return 0.25 * float(
        sum(a * d.width**2 for a, d in zip(alpha.alphas, alpha.box.dims))
    )
