"""Rate functions, Laplace-principle checks, and rare-event sampling.

Controls are deterministic (open loop): piecewise-constant densities on
``n_ctrl`` equal blocks of [0, 1].  For the rate function this is exactly the
class the variational formula quantifies over; for the Laplace comparison it
yields a one-sided (upper) bound on the infimum over adapted controls, and
results are reported as such.

Tail probabilities accumulate in log space throughout.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from . import rng
from .cmspace import CmControl, cm_norm, control_from_cells, materialize_from_derivative
from .errors import DimensionError, DomainError, NumericError
from .fbm import sample_volterra
from .sde import CoefficientSet, skeleton, solve_increments

__all__ = [
    "EventSpec",
    "RateConfig",
    "RateResult",
    "BoundedFunctional",
    "get_functional",
    "functional_names",
    "rate_minimize",
    "laplace_variational",
    "LaplaceMcResult",
    "laplace_mc",
    "girsanov_weight",
    "ProbEstimate",
    "is_probability",
    "scaling_table",
]


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EventSpec:
    """Target event for rate/probability computations.

    kinds: ``terminal_exceedance`` (X^1_1 >= a), ``sup_exceedance``
    (max_t |X_t - phi_t| >= a with phi the zero-noise flow), and
    ``terminal_target`` (|X_1 - y| <= r).  ``a <= 0`` is allowed and makes
    the exceedance events trivially full.
    """

    kind: str
    a: float = 0.0
    y: float | np.ndarray = 0.0
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in ("terminal_exceedance", "sup_exceedance",
                             "terminal_target"):
            raise DomainError(f"unknown event kind {self.kind!r}")
        if self.kind == "terminal_target" and self.r <= 0.0:
            raise DomainError("terminal_target needs radius r > 0")

    def violation_fn(self, coeffs: CoefficientSet, x0, n_steps: int,
                     hurst: float):
        """Batch map from solved states (B, n+1, m) to constraint violations.

        Violations are in the event's natural units; values <= 0 mean the
        event holds.
        """
        if self.kind == "terminal_exceedance":
            a = self.a
            return lambda states: a - states[:, -1, 0]
        if self.kind == "terminal_target":
            y = np.atleast_1d(np.asarray(self.y, dtype=float))
            r = self.r
            return lambda states: (
                np.linalg.norm(states[:, -1, :] - y, axis=1) - r
            )
        from .cmspace import zero_control
        phi = skeleton(x0, coeffs,
                       zero_control(hurst, n_steps, coeffs.d)).path.values
        a = self.a
        return lambda states: a - np.linalg.norm(
            states - phi[None], axis=2).max(axis=1)


# ---------------------------------------------------------------------------
# bounded functionals for the Laplace checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundedFunctional:
    """A bounded path functional h with recorded bounds."""

    name: str
    fn: callable                   # (states (B, n+1, m), x0) -> (B,)
    inf_h: float
    sup_h: float
    params: dict


def _h_sup_norm_capped(m, params):
    cap = params.setdefault("cap", 1.0)
    return dict(
        fn=lambda states, x0: np.minimum(
            np.linalg.norm(states, axis=2).max(axis=1), cap),
        inf_h=0.0, sup_h=cap,
    )


def _h_terminal_rise_capped(m, params):
    cap = params.setdefault("cap", 1.0)
    return dict(
        fn=lambda states, x0: np.clip(states[:, -1, 0] - x0[0], 0.0, cap),
        inf_h=0.0, sup_h=cap,
    )


def _h_terminal_shortfall(m, params):
    cap = params.setdefault("cap", 1.0)
    target = params.setdefault("target", 1.0)
    return dict(
        fn=lambda states, x0: np.clip(
            target - (states[:, -1, 0] - x0[0]), 0.0, cap),
        inf_h=0.0, sup_h=cap,
    )


def _h_constant(m, params):
    level = params.setdefault("level", 1.0)
    return dict(
        fn=lambda states, x0: np.full(states.shape[0], level),
        inf_h=min(level, 0.0) if level < 0 else level,
        sup_h=level,
    )


_FUNCTIONALS = {
    "sup_norm_capped": _h_sup_norm_capped,
    "terminal_rise_capped": _h_terminal_rise_capped,
    "terminal_shortfall": _h_terminal_shortfall,
    "constant": _h_constant,
}


def functional_names() -> list[str]:
    return sorted(_FUNCTIONALS)


def get_functional(name: str, m: int = 1, **params) -> BoundedFunctional:
    if name not in _FUNCTIONALS:
        raise DomainError(f"unknown functional {name!r}; "
                          f"choose from {functional_names()}")
    params = dict(params)
    spec = _FUNCTIONALS[name](m, params)
    return BoundedFunctional(name=name, params=params, **spec)


# ---------------------------------------------------------------------------
# control parametrisation and batched objectives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateConfig:
    """Optimizer configuration for the control-space searches."""

    hurst: float
    n_steps: int = 256
    n_ctrl: int = 32
    penalty_init: float = 10.0
    penalty_factor: float = 10.0
    n_stages: int = 5
    n_starts: int = 3
    fd_step: float = 1e-5
    maxiter: int = 150
    feasibility_tol: float = 1e-3
    start_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.5 < self.hurst < 1.0:
            raise DomainError("rate computations require hurst in (1/2, 1)")
        if self.n_ctrl > 64:
            raise DomainError("n_ctrl is capped at 64")
        if self.n_steps % self.n_ctrl != 0:
            raise DomainError("n_steps must be a multiple of n_ctrl")


def expand_blocks(theta: np.ndarray, n_ctrl: int, n_steps: int,
                  d: int) -> np.ndarray:
    """Block coefficients (n_ctrl*d,) -> cell density samples (n_steps, d)."""
    blocks = theta.reshape(n_ctrl, d)
    return np.repeat(blocks, n_steps // n_ctrl, axis=0)


def control_from_blocks(theta: np.ndarray, cfg: RateConfig, d: int) -> CmControl:
    return control_from_cells(
        cfg.hurst, expand_blocks(np.asarray(theta, dtype=float),
                                 cfg.n_ctrl, cfg.n_steps, d))


@functools.lru_cache(maxsize=8)
def _block_increment_map(n_ctrl: int, n_steps: int, hurst: float,
                         d: int) -> np.ndarray:
    """Linear map from block coefficients to skeleton driver increments.

    Column (b, i) holds the dv increments of the unit control that is 1 on
    block b, component i; shape (n_ctrl * d, n_steps, d).
    """
    out = np.empty((n_ctrl * d, n_steps, d))
    for b in range(n_ctrl):
        for i in range(d):
            theta = np.zeros(n_ctrl * d)
            theta[b * d + i] = 1.0
            ctrl = control_from_cells(
                hurst, expand_blocks(theta, n_ctrl, n_steps, d))
            out[b * d + i] = materialize_from_derivative(ctrl).increments()
    out.setflags(write=False)
    return out


class _SkeletonObjective:
    """Batched objective evaluations over the block-control family.

    Evaluates ``0.5 ||vdot||^2 + weight * g(theta)`` where g is either the
    squared positive violation (penalty mode) or a bounded functional, with
    the skeleton solves for a whole finite-difference stencil batched into
    one Euler sweep.
    """

    def __init__(self, coeffs: CoefficientSet, x0, cfg: RateConfig):
        self.coeffs = coeffs
        self.x0 = np.asarray(x0, dtype=float).reshape(-1)
        self.cfg = cfg
        self.inc_map = _block_increment_map(
            cfg.n_ctrl, cfg.n_steps, cfg.hurst, coeffs.d)
        self.n_params = cfg.n_ctrl * coeffs.d
        self.n_solves = 0

    def norm_sq(self, thetas: np.ndarray) -> np.ndarray:
        return np.sum(thetas ** 2, axis=-1) / self.cfg.n_ctrl

    def map_batch(self, thetas: np.ndarray, fn) -> np.ndarray:
        """fn over the solved skeleton states for each row of thetas."""
        inc = np.einsum("bk,knd->bnd", thetas, self.inc_map)
        states = solve_increments(self.x0, self.coeffs, inc)
        self.n_solves += thetas.shape[0]
        return fn(states)

    def value_and_grad(self, theta: np.ndarray, fn, weight: float,
                       squared_hinge: bool):
        """Central finite differences of the full objective, batched."""
        k = self.n_params
        h = self.cfg.fd_step * np.maximum(1.0, np.abs(theta))
        stencil = np.tile(theta, (2 * k + 1, 1))
        rows = np.arange(k)
        stencil[1 + rows, rows] += h
        stencil[1 + k + rows, rows] -= h
        g = self.map_batch(stencil, fn)
        if squared_hinge:
            g = np.maximum(g, 0.0) ** 2
        obj = 0.5 * self.norm_sq(stencil) + weight * g
        grad = (obj[1 : 1 + k] - obj[1 + k :]) / (2.0 * h)
        return obj[0], grad

    def scalar(self, theta: np.ndarray, fn) -> float:
        return float(self.map_batch(theta[None], fn)[0])


def _starts(cfg: RateConfig, n_params: int, d: int) -> list[np.ndarray]:
    """Multi-start points: zero, seeded random signs, and a smooth bump."""
    zero = np.zeros(n_params)
    gen = rng.stream(cfg.seed, 1)
    rad = cfg.start_scale * gen.choice([-1.0, 1.0], size=n_params)
    centers = (np.arange(cfg.n_ctrl) + 0.5) / cfg.n_ctrl
    bump = np.exp(-0.5 * ((centers - 0.5) / 0.2) ** 2)
    bump = cfg.start_scale * np.tile(bump[:, None], (1, d)).ravel() / bump.max()
    return [zero, rad, bump][: cfg.n_starts]


@dataclass(frozen=True)
class RateResult:
    """Rate-function estimate with the minimizing control candidate.

    ``value`` is 0.5 * cm_norm(control)^2 when the event constraint is met
    within tolerance, and an upper bound on the discrete optimum by
    construction; an infeasibility report carries value = inf rather than a
    fake number.
    """

    value: float
    control: CmControl
    block_values: np.ndarray
    residual: float
    feasible: bool
    diagnostics: dict = field(repr=False)


def rate_minimize(coeffs: CoefficientSet, x0, event: EventSpec,
                  n_ctrl: int | None = None,
                  cfg: RateConfig | None = None) -> RateResult:
    """Minimize 0.5 ||vdot||^2 subject to the skeleton hitting the event.

    Exterior quadratic penalty with stage-escalated weights and L-BFGS
    descent on central finite-difference gradients; multi-start (zero,
    random signs, smooth bump).  After the stages a scalar feasibility
    polish rescales the control onto the constraint when that costs little.
    Returns the best feasible candidate, or an infeasibility report with
    value = inf when no start meets the tolerance.
    """
    if cfg is None:
        raise DomainError("rate_minimize needs a RateConfig")
    if n_ctrl is not None and n_ctrl != cfg.n_ctrl:
        cfg = replace(cfg, n_ctrl=n_ctrl)
    obj = _SkeletonObjective(coeffs, x0, cfg)
    viol = event.violation_fn(coeffs, obj.x0, cfg.n_steps, cfg.hurst)

    stages = [cfg.penalty_init * cfg.penalty_factor ** j
              for j in range(cfg.n_stages)]
    per_start = []
    thetas = []
    for start_idx, theta0 in enumerate(_starts(cfg, obj.n_params, coeffs.d)):
        theta = theta0.copy()
        iters = 0
        for mu in stages:
            res = scipy.optimize.minimize(
                lambda th: obj.value_and_grad(th, viol, mu, True),
                theta, jac=True, method="L-BFGS-B",
                options={"maxiter": cfg.maxiter},
            )
            theta = res.x
            iters += int(res.nit)
        residual = max(0.0, obj.scalar(theta, viol))
        theta, residual = _feasibility_polish(obj, viol, theta, residual)
        thetas.append(theta)
        value = 0.5 * obj.norm_sq(theta[None])[0]
        per_start.append({
            "start": start_idx, "value": float(value),
            "residual": float(residual), "iterations": iters,
            "feasible": bool(residual <= cfg.feasibility_tol),
        })

    diag = {
        "penalty_schedule": stages,
        "starts": per_start,
        "n_solves": obj.n_solves,
        "restarts": len(per_start),
        "iterations": sum(s["iterations"] for s in per_start),
    }
    feas = [s for s in per_start if s["feasible"]]
    chosen = min(feas, key=lambda s: (s["value"], s["start"])) if feas else \
        min(per_start, key=lambda s: (s["residual"], s["start"]))
    theta = thetas[chosen["start"]]
    ctrl = control_from_blocks(theta, cfg, coeffs.d)
    blocks = theta.reshape(cfg.n_ctrl, coeffs.d)
    return RateResult(
        value=chosen["value"] if feas else math.inf,
        control=ctrl, block_values=blocks,
        residual=chosen["residual"], feasible=bool(feas),
        diagnostics=diag,
    )


def _feasibility_polish(obj, viol, theta, residual):
    """Scale the control up to strict feasibility when that is cheap.

    Exterior penalties stop slightly infeasible; for outward-monotone events
    a small scalar rescaling lands on the constraint and makes the value a
    genuine upper bound.  Give up silently when scaling does not help.
    """
    if residual <= 0.0 or np.allclose(theta, 0.0):
        return theta, residual
    lo, hi = 1.0, 1.0
    r_hi = residual
    for _ in range(8):
        hi *= 1.05
        r_hi = obj.scalar(hi * theta, viol)
        if r_hi <= 0.0:
            break
    if r_hi > 0.0:
        return theta, residual
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if obj.scalar(mid * theta, viol) <= 0.0:
            hi = mid
        else:
            lo = mid
    theta = hi * theta
    return theta, max(0.0, obj.scalar(theta, viol))


def laplace_variational(coeffs: CoefficientSet, x0, h: BoundedFunctional,
                        n_ctrl: int | None = None,
                        cfg: RateConfig | None = None) -> float:
    """Deterministic side of the variational representation.

    Minimizes ``h(skeleton(v)) + 0.5 ||vdot||^2`` over the block-control
    family.  Restricting to deterministic controls makes this an upper bound
    for the infimum over adapted controls; non-convergence is flagged via a
    warning and the best value so far is returned.
    """
    if cfg is None:
        raise DomainError("laplace_variational needs a RateConfig")
    if n_ctrl is not None and n_ctrl != cfg.n_ctrl:
        cfg = replace(cfg, n_ctrl=n_ctrl)
    obj = _SkeletonObjective(coeffs, x0, cfg)
    x0v = obj.x0
    hfn = lambda states: h.fn(states, x0v)

    best, converged = math.inf, False
    for theta0 in _starts(cfg, obj.n_params, coeffs.d):
        res = scipy.optimize.minimize(
            lambda th: obj.value_and_grad(th, hfn, 1.0, False),
            theta0, jac=True, method="L-BFGS-B",
            options={"maxiter": cfg.maxiter},
        )
        best = min(best, float(res.fun))
        converged = converged or bool(res.success)
    if not converged:
        warnings.warn("laplace_variational: optimizer did not converge; "
                      "returning best value so far", stacklevel=2)
    return best


# ---------------------------------------------------------------------------
# Monte Carlo side
# ---------------------------------------------------------------------------

def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    if not np.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(x - m))))


@dataclass(frozen=True)
class LaplaceMcResult:
    value: float
    std_err: float
    n_samples: int

    def __iter__(self):
        return iter((self.value, self.std_err))


def laplace_mc(coeffs: CoefficientSet, x0, h: BoundedFunctional, eps: float,
               n_samples: int, seed: int, *, hurst: float,
               n_steps: int) -> LaplaceMcResult:
    """Monte Carlo Laplace functional -eps log E exp(-h(X^eps)/eps).

    Solves the small-noise SDE on a shared fBm batch and accumulates the
    exponential average in log space, so the output is always inside
    [inf h, sup h]; the standard error comes from the delta method.
    """
    if not 0.0 < eps <= 1.0:
        raise DomainError(f"eps must lie in (0, 1], got {eps}")
    if n_samples < 1000:
        raise DomainError("laplace_mc needs n_samples >= 1000")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    batch = sample_volterra(n_steps, hurst, coeffs.d, n_samples, seed)
    inc = math.sqrt(eps) * np.diff(batch.values, axis=1)
    states = solve_increments(x0, coeffs, inc)
    hv = h.fn(states, x0)
    if not np.all(np.isfinite(hv)):
        raise NumericError("functional produced non-finite values")
    x = -hv / eps
    log_m1 = _logsumexp(x) - math.log(n_samples)
    log_m2 = _logsumexp(2.0 * x) - math.log(n_samples)
    value = -eps * log_m1
    rel_var = math.exp(log_m2 - 2.0 * log_m1) - 1.0
    std_err = eps * math.sqrt(max(rel_var, 0.0) / n_samples)
    return LaplaceMcResult(value=value, std_err=std_err, n_samples=n_samples)


def girsanov_weight(ctrl: CmControl, eps: float, bm_increments: np.ndarray):
    """Radon-Nikodym weights of the control tilt on driving-BM increments.

    ``exp(-(1/sqrt(eps)) sum_j vdot(s_j) . dB_j - (1/(2 eps)) ||vdot||^2)``
    evaluated on the discrete L^2 pairing shared with the Volterra sampler.
    ``bm_increments`` is (n, d) for one path or (P, n, d) for a batch;
    returns (weight, log_weight), arrays in the batch case.  The log weight
    is the overflow-safe representation.
    """
    if eps <= 0.0:
        raise DomainError(f"eps must be > 0, got {eps}")
    inc = np.asarray(bm_increments, dtype=float)
    single = inc.ndim == 2
    if single:
        inc = inc[None]
    cells = ctrl.cell_values()
    if inc.shape[1] != ctrl.n_steps or inc.shape[2] != ctrl.dim:
        raise DimensionError("bm_increments do not match the control grid")
    ito = np.einsum("jd,pjd->p", cells, inc)
    norm_sq = float(np.sum(cells ** 2)) / ctrl.n_steps
    log_w = -ito / math.sqrt(eps) - norm_sq / (2.0 * eps)
    with np.errstate(over="ignore"):
        w = np.exp(log_w)
    if single:
        return float(w[0]), float(log_w[0])
    return w, log_w


@dataclass(frozen=True)
class ProbEstimate:
    """Probability estimate with Monte Carlo standard error."""

    p_hat: float
    std_err: float
    n_hits: int
    n_samples: int
    flagged: bool = False
    note: str = ""

    def __iter__(self):
        return iter((self.p_hat, self.std_err))


def is_probability(coeffs: CoefficientSet, x0, event: EventSpec, eps: float,
                   n_samples: int, seed: int, ctrl: CmControl | None = None,
                   *, hurst: float, n_steps: int,
                   rate_cfg: RateConfig | None = None) -> ProbEstimate:
    """Importance-sampled probability of the event under the small-noise SDE.

    Samples fBm through the Volterra map, shifts the driver by the control
    (the measure tilt eps^(-1/2) v), solves the controlled SDE, and averages
    indicator times Girsanov weight.  With ``ctrl=None`` the tilt is the
    rate minimizer; pass the zero control for crude Monte Carlo.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if ctrl is None:
        cfg = rate_cfg if rate_cfg is not None else RateConfig(hurst=hurst)
        result = rate_minimize(coeffs, x0, event, cfg=cfg)
        if not result.feasible:
            raise NumericError("rate minimization found no feasible tilt; "
                               "pass a control explicitly")
        cells = np.repeat(result.block_values,
                          n_steps // cfg.n_ctrl, axis=0)
        ctrl = control_from_cells(hurst, cells)
    if ctrl.n_steps != n_steps or ctrl.dim != coeffs.d:
        raise DimensionError("tilt control does not match the sampling grid")

    batch = sample_volterra(n_steps, hurst, coeffs.d, n_samples, seed)
    if np.any(ctrl.cell_values()):
        dv = materialize_from_derivative(ctrl).increments()
    else:
        dv = np.zeros((n_steps, ctrl.dim))    # crude MC, any hurst
    inc = dv[None] + math.sqrt(eps) * np.diff(batch.values, axis=1)
    states = solve_increments(x0, coeffs, inc)
    viol = event.violation_fn(coeffs, x0, n_steps, hurst)(states)
    hits = viol <= 0.0
    n_hits = int(hits.sum())
    _, log_w = girsanov_weight(ctrl, eps, batch.bm_increments)
    if n_hits == 0:
        return ProbEstimate(0.0, 0.0, 0, n_samples, flagged=True,
                            note="no hits; consider a larger tilt or eps")
    log_hit = log_w[hits]
    log_p = _logsumexp(log_hit) - math.log(n_samples)
    log_m2 = _logsumexp(2.0 * log_hit) - math.log(n_samples)
    p_hat = math.exp(log_p)
    var = max(math.exp(log_m2) - p_hat ** 2, 0.0)
    std_err = math.sqrt(var / n_samples)
    return ProbEstimate(p_hat, std_err, n_hits, n_samples)


def scaling_table(coeffs: CoefficientSet, x0, event: EventSpec,
                  eps_list, n_samples: int, seed: int, *, hurst: float,
                  n_steps: int, rate_cfg: RateConfig | None = None) -> list[dict]:
    """Small-noise scaling study: rows (eps, p_hat, -eps log p_hat, I, gap).

    The rate value I is computed once; each eps row reuses the same tilt
    with an independently derived seed.  ``eps_list`` must decrease so the
    gap column can be read as a convergence record.
    """
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise DomainError("eps_list must be strictly decreasing")
    cfg = rate_cfg if rate_cfg is not None else RateConfig(hurst=hurst)
    rate = rate_minimize(coeffs, x0, event, cfg=cfg)
    if not rate.feasible:
        raise NumericError("rate minimization infeasible; no tilt available")
    cells = np.repeat(rate.block_values, n_steps // cfg.n_ctrl, axis=0)
    tilt = control_from_cells(hurst, cells)
    rows = []
    for i, eps in enumerate(eps_list):
        est = is_probability(coeffs, x0, event, eps, n_samples,
                             rng.mix64(seed, i), ctrl=tilt,
                             hurst=hurst, n_steps=n_steps)
        neg = -eps * math.log(est.p_hat) if est.p_hat > 0 else math.inf
        rows.append({
            "eps": eps,
            "p_hat": est.p_hat,
            "std_err": est.std_err,
            "neg_eps_log_p": neg,
            "rate_value": rate.value,
            "gap": neg - rate.value,
        })
    return rows
