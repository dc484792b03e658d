import math

import numpy as np
import pytest

from fbmld import cmspace as cm
from fbmld import fbm, rng, sde
from fbmld.errors import DimensionError, DomainError, NumericError
from fbmld.gridfn import GridFn


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def test_registry_lists_built_in_families():
    names = sde.registry_names()
    for expected in ("zero", "constant", "linear_drift", "linear_sigma",
                     "tanh", "rotation"):
        assert expected in names
    with pytest.raises(DomainError):
        sde.get_coefficients("heston")


@pytest.mark.parametrize("name,kwargs", [
    ("zero", {}),
    ("constant", {}),
    ("linear_drift", {"rate": 2.0}),
    ("linear_sigma", {}),
    ("tanh", {}),
    ("rotation", {"m": 2, "d": 2}),
])
def test_registry_lipschitz_metadata_spot_check(name, kwargs):
    # finite-difference probe: |b(t,x)-b(t,y)| <= 1.01 L |x-y| on random pairs
    m = kwargs.pop("m", 1)
    d = kwargs.pop("d", 1)
    co = sde.get_coefficients(name, m=m, d=d, **kwargs)
    gen = rng.stream(13, 0)
    for _ in range(50):
        t = gen.uniform()
        x = gen.standard_normal((1, m)) * 3
        y = gen.standard_normal((1, m)) * 3
        bgap = np.linalg.norm(co.drift(t, x) - co.drift(t, y))
        sgap = np.linalg.norm(co.diffusion(t, x) - co.diffusion(t, y))
        gap = np.linalg.norm(x - y)
        assert bgap <= 1.01 * co.lipschitz_drift * gap + 1e-12
        assert sgap <= 1.01 * co.lipschitz_sigma * gap + 1e-12


def test_admissible_alpha_interval():
    co = sde.get_coefficients("tanh")
    lo, hi = co.admissible_alpha(0.75)
    assert lo == 0.25 and hi == 0.5


# ---------------------------------------------------------------------------
# solver closed forms
# ---------------------------------------------------------------------------

def test_ode_exponential_decay():
    n = 512
    co = sde.get_coefficients("linear_drift", rate=1.0, scale=0.0)
    sol = sde.solve_young([1.0], co, GridFn.zeros(n, 1))
    assert abs(sol.path.values[-1, 0] - math.exp(-1.0)) <= 2.0 / n


def test_additive_telescopes_exactly():
    n = 256
    co = sde.get_coefficients("constant")
    g = GridFn.from_callable(lambda t: np.sin(3 * t) + 0.2 * t, n)
    sol = sde.solve_young([0.5], co, g)
    ref = 0.5 + g.values - g.values[0]
    assert np.abs(sol.path.values - ref).max() <= 1e-12


def test_geometric_young_chain_rule():
    co = sde.get_coefficients("linear_sigma")
    errs = []
    for n in (2048, 4096):
        g = GridFn.from_callable(lambda t: np.sin(2 * np.pi * t), n)
        sol = sde.solve_young([1.0], co, g)
        ref = math.exp(g.values[-1, 0] - g.values[0, 0])
        errs.append(abs(sol.path.values[-1, 0] - ref) / ref)
    assert errs[-1] <= 5e-3
    assert 0.4 <= errs[1] / errs[0] <= 0.6


def test_driver_grid_mismatch():
    co = sde.get_coefficients("constant")
    with pytest.raises(DimensionError):
        sde.solve_young([0.0], co, GridFn.zeros(64, 1), n_steps=32)
    with pytest.raises(DimensionError):
        sde.solve_young([0.0], co, GridFn.zeros(64, 2))


def test_overflow_guard_reports_step():
    co = sde.get_coefficients("linear_sigma")
    g = GridFn.from_callable(lambda t: 200.0 * t, 64)
    with pytest.raises(NumericError, match="step"):
        sde.solve_young([1.0], co, g)


# ---------------------------------------------------------------------------
# skeleton / controlled reductions
# ---------------------------------------------------------------------------

@pytest.fixture
def control_75():
    return cm.control_from_callable(lambda s: np.cos(np.pi * s), 256, 0.75)


def test_zero_control_skeleton_solves_ode(control_75):
    n, hurst = 256, 0.75
    co = sde.get_coefficients("linear_drift", rate=1.0, scale=1.0, d=1)
    sol = sde.skeleton([1.0], co, cm.zero_control(hurst, n))
    t = sol.path.times
    assert np.abs(sol.path.values[:, 0] - np.exp(-t)).max() <= 2.0 / n


def test_skeleton_additive_shifts_by_control_path(control_75):
    co = sde.get_coefficients("constant")
    sol = sde.skeleton([0.3], co, control_75)
    ref = 0.3 + cm.apply_kh(control_75.density, 0.75).values
    assert np.abs(sol.path.values - ref).max() <= 1e-2
    assert sol.driver_kind == "skeleton"


def test_eps_zero_reduction_bitwise(control_75):
    co = sde.get_coefficients("tanh")
    fpath = fbm.sample_volterra(256, 0.75, 1, 1, seed=3).path(0)
    sk = sde.skeleton([0.1], co, control_75)
    cp = sde.controlled_path([0.1], co, control_75, 0.0, fpath)
    np.testing.assert_array_equal(sk.path.values, cp.path.values)


def test_zero_control_reduction_bitwise(control_75):
    co = sde.get_coefficients("tanh")
    fpath = fbm.sample_volterra(256, 0.75, 1, 1, seed=3).path(0)
    zero = cm.zero_control(0.75, 256)
    cp = sde.controlled_path([0.1], co, zero, 0.3, fpath)
    sn = sde.small_noise_path([0.1], co, 0.3, fpath, hurst=0.75)
    np.testing.assert_array_equal(cp.path.values, sn.path.values)


def test_controlled_additive_closed_form(control_75):
    co = sde.get_coefficients("constant")
    fpath = fbm.sample_volterra(256, 0.75, 1, 1, seed=4).path(0)
    eps = 0.36
    cp = sde.controlled_path([0.0], co, control_75, eps, fpath)
    v = cm.materialize_from_derivative(control_75)
    ref = v.values + math.sqrt(eps) * fpath.values
    assert np.abs(cp.path.values - ref).max() <= 1e-12


def test_skeleton_lipschitz_in_control():
    # sup-distance of skeletons controlled by the control-space distance,
    # with a stable constant across shrinking perturbations
    n, hurst = 256, 0.75
    co = sde.get_coefficients("tanh")
    base = cm.control_from_callable(lambda s: np.sin(2 * np.pi * s), n, hurst)
    bump = rng.stream(71, 0).standard_normal((n, 1))
    bump /= math.sqrt(float(np.sum(bump ** 2)) / n)
    ratios = []
    sol0 = sde.skeleton([0.2], co, base)
    for delta in (0.1, 0.05, 0.025):
        pert = cm.control_from_cells(hurst,
                                     base.cell_values() + delta * bump)
        sol1 = sde.skeleton([0.2], co, pert)
        gap = np.abs(sol1.path.values - sol0.path.values).max()
        ratios.append(gap / delta)
    assert max(ratios) <= 2.0 * min(ratios)


# ---------------------------------------------------------------------------
# norm reports
# ---------------------------------------------------------------------------

def test_norm_report_values_and_rejections():
    hurst = 0.75
    co = sde.get_coefficients("linear_sigma")
    g = fbm.sample_cholesky(256, hurst, 1, 1, seed=9).path(0)
    sol = sde.solve_young([1.0], co, g)
    rep = sde.norm_report(sol, 0.35, 0.05, co, hurst=hurst, driver=g)
    assert rep.solution.sup_norm > 0
    assert rep.driver_holder is not None and rep.driver_holder > 0
    for alpha, delta in [(0.5, 0.05), (0.25, 0.01), (0.2, 0.01),
                         (0.35, 0.2), (0.35, 0.0)]:
        with pytest.raises(DomainError):
            sde.norm_report(sol, alpha, delta, co, hurst=hurst)
    with pytest.raises(DomainError):
        sde.norm_report(sol, 0.35, 0.05, co)   # hurst unknown


def test_solution_holder_norm_stable_under_refinement():
    # numerical echo of (1-alpha)-Holder continuity of solutions
    hurst, alpha = 0.75, 0.35
    co = sde.get_coefficients("tanh")
    vals = {}
    for n in (256, 512):
        g = fbm.sample_cholesky(512, hurst, 1, 1, seed=31).path(0)
        if n != 512:
            g = GridFn(n, g.values[:: 512 // n])
        sol = sde.solve_young([0.2], co, g)
        vals[n] = sde.norm_report(sol, alpha, 0.05, co,
                                  hurst=hurst).solution.holder_norm
    assert abs(vals[512] - vals[256]) <= 0.1 * vals[256]


def test_zero_driver_growth_is_flat():
    co = sde.get_coefficients("linear_drift", rate=1.0, scale=1.0)
    out = sde.driver_scaling_check([1.0], co, GridFn.zeros(128, 1), 0.35)
    assert out["within_bound"]
    assert out["sup_norms"][0] == pytest.approx(out["sup_norms"][-1])


def test_fbm_driver_growth_within_bound():
    hurst = 0.75
    co = sde.get_coefficients("linear_sigma")
    g = fbm.sample_cholesky(256, hurst, 1, 1, seed=12).path(0)
    out = sde.driver_scaling_check([1.0], co, g, 0.35)
    assert out["slope"] > 0.0
    assert out["within_bound"]
