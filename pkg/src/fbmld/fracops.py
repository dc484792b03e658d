"""Fractional operators, Young integral engines, and path norms.

All operators act on uniform-grid ``GridFn`` samples with the same product
midpoint discipline: function data is frozen at cell midpoints while the
singular kernel factor ((t-s)^(alpha-1), (t-s)^(-alpha), t^(-alpha)) is
integrated in closed form over each cell.  The singularity is therefore never
sampled, and the rules are exact whenever the frozen factor is constant.

Sign conventions: the right-sided operators drop the complex unit factors
(-1)^alpha of the defining formulas and return real magnitudes; the pairing
in ``young_frac`` restores the product of those factors as an overall -1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_TOLERANCES, Tolerances
from .errors import DimensionError, DomainError, NumericError
from .gridfn import GridFn

__all__ = [
    "HolderReport",
    "gauss_2f1",
    "frac_integral",
    "weyl_derivative",
    "flagged_node",
    "young_rs",
    "young_frac",
    "norms",
]


# ---------------------------------------------------------------------------
# Gauss hypergeometric function
# ---------------------------------------------------------------------------

def _is_nonpositive_integer(c: float) -> bool:
    return c <= 0 and float(c).is_integer()


def gauss_2f1(a: float, b: float, c: float, z: float,
              tol: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Gauss hypergeometric function F(a, b, c; z) for z <= 1/2.

    For z < 0 the Pfaff transformation
    ``F(a,b,c;z) = (1-z)^(-a) F(a, c-b, c; z/(z-1))``
    maps the series argument into [0, 1).  The power series is truncated
    once a term falls below ``series_rel_tol`` of the partial sum.

    Raises
    ------
    DomainError
        if ``c`` is a non-positive integer or ``z > 1/2``.
    NumericError
        if the series has not converged after ``series_max_terms`` terms.
    """
    if _is_nonpositive_integer(c):
        raise DomainError(f"c must not be a non-positive integer, got {c}")
    if not np.isfinite(z) or z > 0.5:
        raise DomainError(f"argument z must satisfy z <= 1/2, got {z}")

    prefactor = 1.0
    if z < 0.0:
        prefactor = (1.0 - z) ** (-a)
        a, b, z = a, c - b, z / (z - 1.0)

    total = 1.0
    term = 1.0
    for k in range(tol.series_max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total += term
        if abs(term) <= tol.series_rel_tol * abs(total):
            return prefactor * total
    raise NumericError(
        f"2F1 series did not converge within {tol.series_max_terms} terms "
        f"(a={a}, b={b}, c={c}, z={z})"
    )


# ---------------------------------------------------------------------------
# product-midpoint building blocks
#
# Uniform grids make every kernel moment a function of the lag k - j alone,
# so the quadratures reduce to short convolutions.
# ---------------------------------------------------------------------------

def _convolve_lags(coeff: np.ndarray, data: np.ndarray) -> np.ndarray:
    """out[k] = sum_{l=1..k} coeff[l] * data[k-l] for k = 0..len(coeff)-1.

    ``coeff`` is indexed from lag 0 (coeff[0] unused, must be 0); ``data``
    has one row per cell and arbitrary trailing dimension.
    """
    n = data.shape[0]
    out = np.empty((len(coeff), data.shape[1]))
    for i in range(data.shape[1]):
        out[:, i] = np.convolve(coeff, data[:, i])[: len(coeff)]
    return out


def _riesz_moments(n: int, alpha: float, offset: float) -> np.ndarray:
    """Exact cell integrals of (tau - s)^(-alpha) by lag.

    ``m[l] = integral over the cell at lag l of (tau - s)^(-alpha) ds`` where
    the evaluation point sits ``offset`` cells past the cell's right node
    (offset=0: tau on the node grid; offset=1/2: tau at cell midpoints).
    Valid for alpha < 1; the closed form handles the cell touching tau.
    """
    dt = 1.0 / n
    ell = np.arange(n + 1, dtype=float)
    upper = np.maximum(ell + offset, 0.0) ** (1.0 - alpha)
    lower = np.maximum(ell - 1.0 + offset, 0.0) ** (1.0 - alpha)
    m = dt ** (1.0 - alpha) * (upper - lower) / (1.0 - alpha)
    m[0] = 0.0
    return m


def _weyl_left_core(values: np.ndarray, n: int, alpha: float,
                    at_midpoints: bool) -> np.ndarray:
    """D^alpha_{0+} f on (0, 1], real convention, per component.

    ``values`` is the (n+1, dim) node array.  Returns the derivative at the
    interior nodes t_1..t_n (``at_midpoints=False``, shape (n, dim)) or at
    all cell midpoints (``at_midpoints=True``, shape (n, dim)).  The frozen
    factor is the difference quotient (f(tau) - f(s)) / (tau - s) at each
    cell midpoint; (tau - s)^(-alpha) is integrated exactly per cell.
    """
    dt = 1.0 / n
    f_mid = 0.5 * (values[:-1] + values[1:])
    lags = np.arange(n + 1, dtype=float)

    if not at_midpoints:
        # evaluation points t_k, k = 1..n; full cells at lags 1..k, midpoint
        # of the lag-l cell sits (l - 1/2) dt away from t_k
        moments = _riesz_moments(n, alpha, offset=0.0)
        coeff = np.zeros(n + 1)
        coeff[1:] = moments[1:] / ((lags[1:] - 0.5) * dt)
        conv = _convolve_lags(coeff, f_mid)
        csum = np.cumsum(coeff)
        pts = values[1:]                                    # f(t_k), k=1..n
        integral = pts * csum[1 : n + 1, None] - conv[1 : n + 1]
        tau = np.arange(1, n + 1) * dt
        boundary = pts / tau[:, None] ** alpha
        return (boundary + alpha * integral) / math.gamma(1.0 - alpha)

    # evaluation points tau_k = (k + 1/2) dt, k = 0..n-1; full cells at lags
    # 1..k (midpoint distance l*dt) plus the half cell [t_k, tau_k)
    moments = _riesz_moments(n, alpha, offset=0.5)
    coeff = np.zeros(n + 1)
    coeff[1:] = moments[1:] / (lags[1:] * dt)
    conv = _convolve_lags(coeff, f_mid)
    csum = np.cumsum(coeff)
    pts = f_mid                                             # f(tau_k)
    integral = pts * csum[:n, None] - conv[:n]
    slope = (values[1:] - values[:-1]) / dt
    half_moment = (0.5 * dt) ** (1.0 - alpha) / (1.0 - alpha)
    integral += slope * half_moment
    tau = (np.arange(n) + 0.5) * dt
    boundary = pts / tau[:, None] ** alpha
    return (boundary + alpha * integral) / math.gamma(1.0 - alpha)


def _weyl_right_core(values: np.ndarray, n: int, alpha: float,
                     at_midpoints: bool) -> np.ndarray:
    """Right-sided mirror of :func:`_weyl_left_core` (real convention)."""
    out = _weyl_left_core(values[::-1], n, alpha, at_midpoints)
    return out[::-1]


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------

def frac_integral(f: GridFn, alpha: float, side: str = "left") -> GridFn:
    """Riemann-Liouville fractional integral I^alpha of order alpha in (0, 1].

    ``side="left"`` gives I^alpha_{0+} (vanishing at t=0), ``side="right"``
    gives I^alpha_{1-} (vanishing at t=1, real convention).  Cell data is the
    midpoint interpolant; the kernel (t-s)^(alpha-1) is integrated exactly
    per cell, so the result is exact for piecewise-constant integrands.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if side not in ("left", "right"):
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")

    n = f.n_steps
    vals = f.values if side == "left" else f.values[::-1]
    f_mid = 0.5 * (vals[:-1] + vals[1:])
    dt = 1.0 / n
    ell = np.arange(n + 1, dtype=float)
    moments = dt ** alpha * (ell ** alpha - np.maximum(ell - 1.0, 0.0) ** alpha) / alpha
    moments[0] = 0.0
    out = _convolve_lags(moments, f_mid) / math.gamma(alpha)
    if side == "right":
        out = out[::-1]
    return GridFn(n, out)


def flagged_node(side: str, n_steps: int) -> int:
    """Index of the endpoint node excluded from Weyl-derivative error metrics."""
    return 0 if side == "left" else n_steps


def weyl_derivative(f: GridFn, alpha: float, side: str = "left") -> GridFn:
    """Weyl (Marchaud-form) fractional derivative of order alpha in (0, 1).

    Computes the boundary term f(t)/(t-a)^alpha plus alpha times the
    singular increment integral on the interior nodes.  The formula is only
    defined a.e. on (0, 1): the endpoint node where it is singular (t=0 on
    the left, t=1 on the right) is filled by one-sided continuation and
    should be excluded from error metrics; see :func:`flagged_node`.

    Right-sided derivatives are returned in the real convention, without the
    complex factor (-1)^alpha of the defining formula.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if side not in ("left", "right"):
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")

    n = f.n_steps
    if side == "left":
        interior = _weyl_left_core(f.values, n, alpha, at_midpoints=False)
        out = np.vstack([interior[:1], interior])        # node 0 continued
    else:
        interior = _weyl_right_core(f.values, n, alpha, at_midpoints=False)
        out = np.vstack([interior, interior[-1:]])       # node n continued
    return GridFn(n, out)


def young_rs(f: GridFn, g: GridFn) -> GridFn:
    """Running Riemann-Stieltjes integral of f against g with left-point sums.

    ``out(t_k) = sum_{j<k} f(t_j) (g(t_{j+1}) - g(t_j))``, the discretisation
    valid in the Young regime and consistent with the Euler SDE scheme.

    Dimension rules: scalar f integrates against every component of g;
    ``f.dim == g.dim`` contracts to the scalar sum of componentwise
    integrals; ``f.dim == m * g.dim`` acts as a row-major (m, d) matrix.
    """
    if f.n_steps != g.n_steps:
        raise DimensionError(
            f"grid mismatch: f has {f.n_steps} steps, g has {g.n_steps}"
        )
    dg = g.increments()                                  # (n, d)
    fv = f.values[:-1]                                   # left-point samples
    d = g.dim
    if f.dim == 1:
        summand = fv * dg
    elif f.dim == d:
        summand = np.sum(fv * dg, axis=1, keepdims=True)
    elif f.dim % d == 0:
        m = f.dim // d
        summand = np.einsum("kij,kj->ki", fv.reshape(-1, m, d), dg)
    else:
        raise DimensionError(
            f"cannot pair f.dim={f.dim} with g.dim={d}"
        )
    out = np.vstack([np.zeros((1, summand.shape[1])), np.cumsum(summand, axis=0)])
    return GridFn(f.n_steps, out)


def _rough_holder_estimate(f: GridFn) -> float:
    """Crude grid-level Holder exponent from increment growth across lags.

    Compares the largest increment at lag 1 and lag 4; a lambda-Holder path
    scales by ~4^lambda.  Heuristic only, used for warnings.
    """
    vals = f.values
    top1 = float(np.linalg.norm(vals[1:] - vals[:-1], axis=1).max())
    top4 = float(np.linalg.norm(vals[4:] - vals[:-4], axis=1).max())
    if top1 == 0.0 or top4 == 0.0:
        return 1.0
    return min(1.0, max(0.05, math.log(top4 / top1) / math.log(4.0)))


def young_frac(f: GridFn, g: GridFn, alpha: float) -> float:
    """Young integral of f dg over [0,1] via fractional integration by parts.

    Evaluates ``(-1)^alpha * integral of D^alpha_{0+} f times
    D^(1-alpha)_{1-} g_{1-}``, with ``g_{1-}(t) = g(t) - g(1)``.  Both Weyl
    derivatives are taken at cell midpoints; the outer integrand's t^(-alpha)
    singularity at 0 is removed by freezing ``t^alpha * integrand`` per cell
    against the exact moments of t^(-alpha).  The two complex unit factors of
    the right-sided operator and the pairing combine to the real overall
    sign -1.

    Requires matching dims; vector inputs are contracted componentwise.
    Regularity is checked heuristically and warned about, never enforced.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if f.n_steps != g.n_steps:
        raise DimensionError(
            f"grid mismatch: f has {f.n_steps} steps, g has {g.n_steps}"
        )
    if f.dim != g.dim:
        raise DimensionError(f"dim mismatch: f.dim={f.dim}, g.dim={g.dim}")

    lam_f = _rough_holder_estimate(f)
    mu_g = _rough_holder_estimate(g)
    if lam_f <= alpha:
        warnings.warn(
            f"f looks rougher (~{lam_f:.2f}) than alpha={alpha}; the "
            "integration-by-parts quadrature may be inaccurate",
            stacklevel=2,
        )
    if mu_g <= 1.0 - alpha:
        warnings.warn(
            f"g looks rougher (~{mu_g:.2f}) than 1-alpha={1 - alpha}; the "
            "integration-by-parts quadrature may be inaccurate",
            stacklevel=2,
        )

    n = f.n_steps
    g_shift = g.values - g.values[-1]
    dl = _weyl_left_core(f.values, n, alpha, at_midpoints=True)
    dr = _weyl_right_core(g_shift, n, 1.0 - alpha, at_midpoints=True)

    tau = (np.arange(n) + 0.5) / n
    nodes = np.arange(n + 1) / n
    outer_moments = (nodes[1:] ** (1.0 - alpha) - nodes[:-1] ** (1.0 - alpha)) / (1.0 - alpha)
    regularized = tau[:, None] ** alpha * dl * dr
    return float(-np.sum(regularized.sum(axis=1) * outer_moments))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderReport:
    """Sup, Holder, and W^{alpha,infty} norms of a grid path."""

    sup_norm: float
    holder_norm: float
    holder_exponent: float
    w_alpha_norm: float
    alpha: float


def norms(f: GridFn, lam: float, alpha: float,
          tol: Tolerances = DEFAULT_TOLERANCES) -> HolderReport:
    """Path norms: sup over nodes, exact pairwise Holder scan at exponent
    ``lam``, and the W^{alpha,infty} norm with the product-midpoint rule.

    The Holder scan is O(n^2); above ``holder_scan_limit`` steps it strides
    the base index (the lag axis stays exact) to bound the cost.
    """
    if not 0.0 < lam < 1.0:
        raise DomainError(f"lambda must lie in (0, 1), got {lam}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    n = f.n_steps
    vals = f.values
    sup_norm = float(np.linalg.norm(vals, axis=1).max())

    stride = max(1, math.ceil(n / tol.holder_scan_limit))
    dt = 1.0 / n
    holder = 0.0
    base = vals[::stride]
    base_idx = np.arange(0, n + 1, stride)
    for ell in range(1, n + 1):
        hi = base_idx + ell
        keep = hi <= n
        if not keep.any():
            break
        diff = np.linalg.norm(vals[hi[keep]] - base[keep], axis=1)
        holder = max(holder, float(diff.max()) / (ell * dt) ** lam)

    # W^{alpha,infty}: sup_t |f(t)| + int_0^t |f(t)-f(s)| (t-s)^(-alpha-1) ds
    f_mid = 0.5 * (vals[:-1] + vals[1:])
    moments = _riesz_moments(n, alpha, offset=0.0)
    lags = np.arange(n + 1, dtype=float)
    coeff = np.zeros(n + 1)
    coeff[1:] = moments[1:] / ((lags[1:] - 0.5) * dt)
    w_best = float(np.linalg.norm(vals[0]))
    acc = np.zeros(n)                                    # integral at t_k, k=1..n
    for ell in range(1, n + 1):
        diff = np.linalg.norm(vals[ell:] - f_mid[: n + 1 - ell], axis=1)
        acc[ell - 1 :] += coeff[ell] * diff
    w_all = np.linalg.norm(vals[1:], axis=1) + acc
    w_best = max(w_best, float(w_all.max()))
    return HolderReport(
        sup_norm=sup_norm,
        holder_norm=holder,
        holder_exponent=lam,
        w_alpha_norm=w_best,
        alpha=alpha,
    )
