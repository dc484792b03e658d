import math

import numpy as np
import pytest

from fbmld import cmspace as cm
from fbmld import fbm, ldp, rng, sde
from fbmld.errors import DimensionError, DomainError

HURST = 0.6
ADDITIVE = sde.get_coefficients("constant")
SMALL_CFG = ldp.RateConfig(hurst=HURST, n_steps=128, n_ctrl=16, seed=3,
                           maxiter=80)


def qp_oracle(a, cfg):
    """Reproducing-kernel least-norm solution over the same block family."""
    n, nc = cfg.n_steps, cfg.n_ctrl
    krow = fbm.kernel_table(n, cfg.hurst)[n]
    w = 1.0 / nc
    c_b = krow.reshape(nc, n // nc).sum(axis=1) / n
    s = float(np.sum(c_b ** 2) / w)
    return a * a / (2.0 * s), a * (c_b / w) / s


# ---------------------------------------------------------------------------
# events and functionals
# ---------------------------------------------------------------------------

def test_event_validation():
    with pytest.raises(DomainError):
        ldp.EventSpec("first_passage", a=1.0)
    with pytest.raises(DomainError):
        ldp.EventSpec("terminal_target", y=0.0, r=0.0)
    ldp.EventSpec("terminal_exceedance", a=-1.0)   # trivially full is fine


def test_event_violations_semantics():
    states = np.zeros((2, 5, 1))
    states[0, -1, 0] = 2.0
    states[1, -1, 0] = 0.5
    v = ldp.EventSpec("terminal_exceedance", a=1.0).violation_fn(
        ADDITIVE, [0.0], 4, HURST)(states)
    assert v[0] <= 0.0 < v[1]
    v = ldp.EventSpec("terminal_target", y=2.0, r=0.25).violation_fn(
        ADDITIVE, [0.0], 4, HURST)(states)
    assert v[0] <= 0.0 < v[1]
    v = ldp.EventSpec("sup_exceedance", a=1.0).violation_fn(
        ADDITIVE, [0.0], 4, HURST)(states)
    assert v[0] <= 0.0 < v[1]


def test_functionals_bounded_and_unknown():
    states = rng.stream(1, 0).standard_normal((50, 9, 1)) * 10
    for name in ldp.functional_names():
        h = ldp.get_functional(name)
        vals = h.fn(states, np.zeros(1))
        assert np.all(vals >= h.inf_h - 1e-12)
        assert np.all(vals <= h.sup_h + 1e-12)
    with pytest.raises(DomainError):
        ldp.get_functional("entropy")


# ---------------------------------------------------------------------------
# girsanov weights
# ---------------------------------------------------------------------------

def test_girsanov_zero_control_weight_one():
    w, logw = ldp.girsanov_weight(cm.zero_control(HURST, 32), 0.5,
                                  np.zeros((32, 1)))
    assert w == 1.0 and logw == 0.0


def test_girsanov_martingale_mean_small():
    n = 128
    cells = rng.stream(9, 0).standard_normal(n)
    cells /= math.sqrt(float(np.sum(cells ** 2)) / n)
    ctrl = cm.control_from_cells(HURST, cells)
    batch = fbm.sample_volterra(n, HURST, 1, 4000, seed=21)
    w, logw = ldp.girsanov_weight(ctrl, 1.0, batch.bm_increments)
    assert abs(w.mean() - 1.0) <= 4 * w.std() / math.sqrt(4000)
    # log weights center on -||vdot||^2 / (2 eps)
    assert abs(logw.mean() + 0.5) <= 4 * logw.std() / math.sqrt(4000)


def test_girsanov_shape_checks():
    ctrl = cm.zero_control(HURST, 32)
    with pytest.raises(DimensionError):
        ldp.girsanov_weight(ctrl, 1.0, np.zeros((16, 1)))
    with pytest.raises(DomainError):
        ldp.girsanov_weight(ctrl, 0.0, np.zeros((32, 1)))


# ---------------------------------------------------------------------------
# rate minimization
# ---------------------------------------------------------------------------

def test_rate_minimize_additive_oracle():
    ev = ldp.EventSpec("terminal_exceedance", a=1.0)
    res = ldp.rate_minimize(ADDITIVE, [0.0], ev, cfg=SMALL_CFG)
    val_star, theta_star = qp_oracle(1.0, SMALL_CFG)
    assert res.feasible
    assert res.residual <= SMALL_CFG.feasibility_tol
    assert abs(res.value - 0.5) <= 0.025
    assert abs(res.value - val_star) <= 0.01
    l2 = np.linalg.norm(res.block_values[:, 0] - theta_star) \
        / np.linalg.norm(theta_star)
    assert l2 <= 0.05
    assert res.value == pytest.approx(0.5 * cm.cm_norm(res.control) ** 2,
                                      rel=1e-12)


def test_rate_minimize_trivial_event_zero_control():
    ev = ldp.EventSpec("terminal_exceedance", a=0.0)
    res = ldp.rate_minimize(ADDITIVE, [0.0], ev, cfg=SMALL_CFG)
    assert res.feasible
    assert res.value == 0.0
    assert np.abs(res.block_values).max() == 0.0


def test_rate_minimize_quadratic_scaling():
    ev1 = ldp.EventSpec("terminal_exceedance", a=0.5)
    ev2 = ldp.EventSpec("terminal_exceedance", a=1.0)
    r1 = ldp.rate_minimize(ADDITIVE, [0.0], ev1, cfg=SMALL_CFG)
    r2 = ldp.rate_minimize(ADDITIVE, [0.0], ev2, cfg=SMALL_CFG)
    assert abs(r2.value / r1.value - 4.0) <= 0.4


def test_rate_minimize_richer_family_does_not_worsen():
    ev = ldp.EventSpec("terminal_exceedance", a=1.0)
    r8 = ldp.rate_minimize(ADDITIVE, [0.0], ev,
                           cfg=ldp.RateConfig(hurst=HURST, n_steps=128,
                                              n_ctrl=8, seed=3, maxiter=80))
    r16 = ldp.rate_minimize(ADDITIVE, [0.0], ev, cfg=SMALL_CFG)
    assert r16.value <= r8.value * 1.02


def test_rate_minimize_infeasible_reports_inf():
    ev = ldp.EventSpec("terminal_target", y=1e6, r=1.0)
    cfg = ldp.RateConfig(hurst=HURST, n_steps=64, n_ctrl=8, seed=3,
                         maxiter=15, n_stages=2)
    res = ldp.rate_minimize(ADDITIVE, [0.0], ev, cfg=cfg)
    assert not res.feasible
    assert res.value == math.inf
    assert res.residual > cfg.feasibility_tol


def test_rate_minimize_nontrivial_coefficients_feasible():
    co = sde.get_coefficients("tanh")
    ev = ldp.EventSpec("terminal_exceedance", a=0.5)
    res = ldp.rate_minimize(co, [0.0], ev, cfg=SMALL_CFG)
    assert res.feasible
    assert 0.0 < res.value < 5.0


def test_rate_minimize_n_ctrl_override():
    ev = ldp.EventSpec("terminal_exceedance", a=1.0)
    res = ldp.rate_minimize(ADDITIVE, [0.0], ev, n_ctrl=8, cfg=SMALL_CFG)
    assert res.block_values.shape == (8, 1)


# ---------------------------------------------------------------------------
# laplace
# ---------------------------------------------------------------------------

def test_laplace_variational_trivial_functionals():
    h0 = ldp.get_functional("constant", level=0.0)
    assert ldp.laplace_variational(ADDITIVE, [0.0], h0, cfg=SMALL_CFG) == 0.0
    hc = ldp.get_functional("constant", level=0.7)
    assert ldp.laplace_variational(ADDITIVE, [0.0], hc,
                                   cfg=SMALL_CFG) == pytest.approx(0.7)


def test_laplace_variational_matches_scan_oracle():
    # additive case reduces to a 1-d problem: inf_z { h(z) + z^2/2 }
    zs = np.arange(-3.0, 3.0, 1e-4)
    for name in ("terminal_shortfall", "terminal_rise_capped"):
        h = ldp.get_functional(name)
        if name == "terminal_shortfall":
            hz = np.clip(1.0 - zs, 0.0, 1.0)
        else:
            hz = np.clip(zs, 0.0, 1.0)
        scan = float(np.min(hz + zs ** 2 / 2.0))
        val = ldp.laplace_variational(ADDITIVE, [0.0], h, cfg=SMALL_CFG)
        assert abs(val - scan) <= 0.01, name


def test_laplace_mc_constant_exact_and_guards():
    hc = ldp.get_functional("constant", level=0.7)
    r = ldp.laplace_mc(ADDITIVE, [0.0], hc, 0.3, 1000, seed=5,
                       hurst=HURST, n_steps=64)
    assert r.value == pytest.approx(0.7, abs=1e-12)
    assert r.std_err == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        ldp.laplace_mc(ADDITIVE, [0.0], hc, 1.5, 1000, seed=5,
                       hurst=HURST, n_steps=64)
    with pytest.raises(DomainError):
        ldp.laplace_mc(ADDITIVE, [0.0], hc, 0.3, 10, seed=5,
                       hurst=HURST, n_steps=64)


def test_laplace_mc_sandwich_always():
    h = ldp.get_functional("terminal_shortfall")
    for eps in (1.0, 0.25, 0.05):
        r = ldp.laplace_mc(ADDITIVE, [0.0], h, eps, 1000, seed=8,
                           hurst=HURST, n_steps=64)
        assert h.inf_h <= r.value <= h.sup_h


def test_laplace_mc_deterministic():
    h = ldp.get_functional("terminal_shortfall")
    a = ldp.laplace_mc(ADDITIVE, [0.0], h, 0.25, 1000, seed=9,
                       hurst=HURST, n_steps=64)
    b = ldp.laplace_mc(ADDITIVE, [0.0], h, 0.25, 1000, seed=9,
                       hurst=HURST, n_steps=64)
    assert a.value == b.value and a.std_err == b.std_err


# ---------------------------------------------------------------------------
# is_probability and scaling_table
# ---------------------------------------------------------------------------

def test_is_probability_sure_event():
    # all samples hit once eps is small against the threshold, and the
    # zero-tilt weights are exactly one, so p_hat is exactly 1
    ev = ldp.EventSpec("terminal_exceedance", a=-1.0)
    est = ldp.is_probability(ADDITIVE, [0.0], ev, 0.01, 500,
                             seed=1, ctrl=cm.zero_control(HURST, 64),
                             hurst=HURST, n_steps=64)
    assert est.p_hat == 1.0
    assert est.std_err == pytest.approx(0.0, abs=1e-12)
    assert est.n_hits == 500


def test_is_probability_zero_hits_flagged():
    ev = ldp.EventSpec("terminal_exceedance", a=50.0)
    est = ldp.is_probability(ADDITIVE, [0.0], ev, 0.01, 300,
                             seed=1, ctrl=cm.zero_control(HURST, 64),
                             hurst=HURST, n_steps=64)
    assert est.flagged and est.p_hat == 0.0 and "tilt" in est.note


def test_is_probability_crude_matches_gaussian():
    ev = ldp.EventSpec("terminal_exceedance", a=0.5)
    est = ldp.is_probability(ADDITIVE, [0.0], ev, 0.25, 4000,
                             seed=44, ctrl=cm.zero_control(HURST, 256),
                             hurst=HURST, n_steps=256)
    p_ref = 0.5 * math.erfc(1.0 / math.sqrt(2.0))     # P(Z >= 0.5/sqrt(0.25))
    assert abs(est.p_hat - p_ref) <= 4 * est.std_err


def test_is_probability_grid_mismatch():
    ev = ldp.EventSpec("terminal_exceedance", a=0.5)
    with pytest.raises(DimensionError):
        ldp.is_probability(ADDITIVE, [0.0], ev, 0.25, 100, seed=1,
                           ctrl=cm.zero_control(HURST, 32),
                           hurst=HURST, n_steps=64)


def test_is_probability_unpacks_as_pair():
    ev = ldp.EventSpec("terminal_exceedance", a=-1.0)
    p, se = ldp.is_probability(ADDITIVE, [0.0], ev, 0.01, 100, seed=1,
                               ctrl=cm.zero_control(HURST, 64),
                               hurst=HURST, n_steps=64)
    assert p == 1.0 and se == 0.0


def test_scaling_table_structure_and_determinism():
    ev = ldp.EventSpec("terminal_exceedance", a=0.5)
    kwargs = dict(hurst=HURST, n_steps=128, rate_cfg=SMALL_CFG)
    rows = ldp.scaling_table(ADDITIVE, [0.0], ev, [0.5, 0.25], 1000, 77,
                             **kwargs)
    rows2 = ldp.scaling_table(ADDITIVE, [0.0], ev, [0.5, 0.25], 1000, 77,
                              **kwargs)
    assert rows == rows2
    assert [r["eps"] for r in rows] == [0.5, 0.25]
    for r in rows:
        assert r["gap"] == pytest.approx(r["neg_eps_log_p"] - r["rate_value"])
    with pytest.raises(DomainError):
        ldp.scaling_table(ADDITIVE, [0.0], ev, [0.25, 0.5], 1000, 77,
                          **kwargs)
