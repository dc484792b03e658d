"""Experiment runner: one JSON config in, reproducible artifacts out.

Experiments are data, not shell history: the only command-line inputs are
the config path and an optional ``--seed`` override.  Every run writes its
results (CSV with 17 significant digits, JSON with sorted keys) plus a
manifest echoing the config, its hash, the seed, and the package version;
re-running a manifest's config reproduces the result files byte for byte
(the manifest's own timing fields are the only thing that varies).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, cmspace, fbm, fracops, ldp, rng, sde
from .errors import DomainError, FbmldError, NumericError
from .gridfn import GridFn

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4

_COMMANDS = ("sample", "solve", "rate", "ldp-scaling", "laplace-check",
             "validate-ops")


class SchemaError(DomainError):
    """Config file fails validation."""


@dataclasses.dataclass
class ExperimentConfig:
    """Validated experiment description; see docs/config schema in README."""

    command: str
    output_dir: str
    seed: int = 0
    hurst: float = 0.75
    n_steps: int = 256
    d: int = 1
    m: int = 1
    sampler: str = "volterra"
    n_paths: int = 100
    coefficient: str = "constant"
    coefficient_params: dict = dataclasses.field(default_factory=dict)
    x0: list = dataclasses.field(default_factory=lambda: [0.0])
    event: dict = dataclasses.field(default_factory=dict)
    functional: dict = dataclasses.field(default_factory=dict)
    eps: float = 0.25
    eps_list: list = dataclasses.field(default_factory=list)
    n_samples: int = 10000
    n_ctrl: int = 32
    alpha: float | None = None
    delta: float | None = None
    n_workers: int = 1            # throughput knob only; never changes results
    tolerances: dict = dataclasses.field(default_factory=dict)

    @staticmethod
    def from_file(path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config {path}: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise SchemaError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"unknown config keys: {sorted(unknown)}")
        missing = {"command", "output_dir"} - set(raw)
        if missing:
            raise SchemaError(f"missing required keys: {sorted(missing)}")
        cfg = ExperimentConfig(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.command not in _COMMANDS:
            raise SchemaError(f"command must be one of {_COMMANDS}")
        if not 0.0 < self.hurst < 1.0:
            raise SchemaError("hurst must lie in (0, 1)")
        if self.command in ("solve", "rate", "ldp-scaling", "laplace-check") \
                and not 0.5 < self.hurst < 1.0:
            raise SchemaError(f"{self.command} requires hurst in (1/2, 1)")
        if self.n_steps < 1:
            raise SchemaError("n_steps must be positive")
        if self.sampler not in ("volterra", "cholesky"):
            raise SchemaError("sampler must be 'volterra' or 'cholesky'")
        if self.command == "ldp-scaling" and not self.eps_list:
            raise SchemaError("ldp-scaling needs a decreasing eps_list")
        if self.command in ("rate", "ldp-scaling") and not self.event:
            raise SchemaError(f"{self.command} needs an event spec")
        if self.n_workers < 1:
            raise SchemaError("n_workers must be >= 1")

    def resolved_output_dir(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get("FBMLD_OUTPUT_ROOT")
        if root and not out.is_absolute():
            out = Path(root) / out
        return out

    def canonical_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


# ---------------------------------------------------------------------------
# artifact helpers
# ---------------------------------------------------------------------------

def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                f"{v:.17g}" if isinstance(v, float) else str(v) for v in row
            ) + "\n")


def _write_manifest(out: Path, cfg: ExperimentConfig, t0: float,
                    artifacts: list[str]) -> None:
    _write_json(out / "manifest.json", {
        "config": dataclasses.asdict(cfg),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "artifacts": sorted(artifacts),
        "wall_time_s": time.time() - t0,
        "created_unix": time.time(),
    })


def _event_from_config(cfg: ExperimentConfig) -> ldp.EventSpec:
    ev = dict(cfg.event)
    kind = ev.pop("kind", None)
    if kind is None:
        raise SchemaError("event spec needs a 'kind'")
    try:
        return ldp.EventSpec(kind=kind, **ev)
    except TypeError as exc:
        raise SchemaError(f"bad event spec: {exc}") from exc


def _coeffs_from_config(cfg: ExperimentConfig) -> sde.CoefficientSet:
    return sde.get_coefficients(cfg.coefficient, m=cfg.m, d=cfg.d,
                                **cfg.coefficient_params)


def _rate_cfg(cfg: ExperimentConfig) -> ldp.RateConfig:
    n_steps = cfg.n_steps
    if n_steps % cfg.n_ctrl != 0:
        raise SchemaError("n_steps must be a multiple of n_ctrl")
    return ldp.RateConfig(hurst=cfg.hurst, n_steps=min(n_steps, 512),
                          n_ctrl=cfg.n_ctrl, seed=cfg.seed)


# ---------------------------------------------------------------------------
# workflows
# ---------------------------------------------------------------------------

def _run_sample(cfg: ExperimentConfig, out: Path) -> list[str]:
    sampler = fbm.sample_volterra if cfg.sampler == "volterra" \
        else fbm.sample_cholesky
    batch = sampler(cfg.n_steps, cfg.hurst, cfg.d, cfg.n_paths, cfg.seed)
    with open(out / "paths.csv", "w") as fh:
        fbm.export_paths_csv(batch, fh)
    fbm.export_increments(batch, str(out / "increments.npz"))
    return ["paths.csv", "increments.npz"]


def _run_solve(cfg: ExperimentConfig, out: Path) -> list[str]:
    coeffs = _coeffs_from_config(cfg)
    batch = fbm.sample_volterra(cfg.n_steps, cfg.hurst, cfg.d, 1, cfg.seed)
    driver = batch.path(0)
    sol = sde.solve_young(cfg.x0, coeffs, driver)
    lo, hi = coeffs.admissible_alpha(cfg.hurst)
    alpha = cfg.alpha if cfg.alpha is not None else 0.5 * (lo + hi)
    delta = cfg.delta if cfg.delta is not None else 0.5 * (alpha - (1.0 - cfg.hurst))
    report = sde.norm_report(sol, alpha, delta, coeffs, hurst=cfg.hurst,
                             driver=driver)
    t = driver.times
    _write_csv(out / "solution.csv",
               ["t"] + [f"x{i}" for i in range(coeffs.m)],
               (tuple([float(t[k])] + [float(v) for v in sol.path.values[k]])
                for k in range(cfg.n_steps + 1)))
    _write_json(out / "norm_report.json", {
        "alpha": alpha, "delta": delta, "hurst": cfg.hurst,
        "sup_norm": report.solution.sup_norm,
        "holder_norm": report.solution.holder_norm,
        "holder_exponent": report.solution.holder_exponent,
        "w_alpha_norm": report.solution.w_alpha_norm,
        "driver_holder": report.driver_holder,
        "solver_config": sol.config,
    })
    return ["solution.csv", "norm_report.json"]


def _run_rate(cfg: ExperimentConfig, out: Path) -> list[str]:
    coeffs = _coeffs_from_config(cfg)
    event = _event_from_config(cfg)
    result = ldp.rate_minimize(coeffs, cfg.x0, event, cfg=_rate_cfg(cfg))
    with open(out / "control.csv", "w") as fh:
        cmspace.export_control_csv(result.control, fh)
    _write_json(out / "rate_result.json", {
        "value": result.value if math.isfinite(result.value) else "inf",
        "residual": result.residual,
        "feasible": result.feasible,
        "diagnostics": result.diagnostics,
        "event": dataclasses.asdict(event),
    })
    if not result.feasible:
        raise _Infeasible("rate problem infeasible at all starts")
    return ["control.csv", "rate_result.json"]


def _run_ldp_scaling(cfg: ExperimentConfig, out: Path) -> list[str]:
    coeffs = _coeffs_from_config(cfg)
    event = _event_from_config(cfg)
    rows = ldp.scaling_table(coeffs, cfg.x0, event, cfg.eps_list,
                             cfg.n_samples, cfg.seed, hurst=cfg.hurst,
                             n_steps=cfg.n_steps, rate_cfg=_rate_cfg(cfg))
    header = ["eps", "p_hat", "std_err", "neg_eps_log_p", "rate_value", "gap"]
    _write_csv(out / "scaling.csv", header,
               (tuple(r[k] for k in header) for r in rows))
    _write_json(out / "scaling.json", {"rows": rows})
    return ["scaling.csv", "scaling.json"]


def _run_laplace(cfg: ExperimentConfig, out: Path) -> list[str]:
    coeffs = _coeffs_from_config(cfg)
    fdict = dict(cfg.functional) or {"name": "terminal_shortfall"}
    name = fdict.pop("name")
    h = ldp.get_functional(name, m=cfg.m, **fdict)
    variational = ldp.laplace_variational(coeffs, cfg.x0, h, cfg=_rate_cfg(cfg))
    eps_list = cfg.eps_list or [cfg.eps]
    rows = []
    for i, eps in enumerate(eps_list):
        r = ldp.laplace_mc(coeffs, cfg.x0, h, eps, cfg.n_samples,
                           rng.mix64(cfg.seed, i), hurst=cfg.hurst,
                           n_steps=cfg.n_steps)
        rows.append({"eps": eps, "value": r.value, "std_err": r.std_err,
                     "variational": variational, "h_inf": h.inf_h,
                     "h_sup": h.sup_h})
    header = ["eps", "value", "std_err", "variational", "h_inf", "h_sup"]
    _write_csv(out / "laplace.csv", header,
               (tuple(r[k] for k in header) for r in rows))
    _write_json(out / "laplace.json",
                {"functional": {"name": name, **h.params}, "rows": rows})
    return ["laplace.csv", "laplace.json"]


def _validate_ops_checks(cfg: ExperimentConfig):
    """Fast cross-module invariant suite; yields (name, passed, detail)."""
    one = GridFn.from_callable(lambda t: np.ones_like(t), 128)
    ramp = GridFn.from_callable(lambda t: t, 128)

    v = fracops.gauss_2f1(1.0, 1.0, 2.0, -1.0)
    yield ("gauss_2f1 ln2", abs(v - math.log(2)) < 1e-12, f"{v!r}")
    sym = fracops.gauss_2f1(0.3, -0.2, 1.1, 0.4) == fracops.gauss_2f1(
        -0.2, 0.3, 1.1, 0.4)
    yield ("gauss_2f1 symmetry", sym, "series symmetric in (a,b)")

    ih = fracops.frac_integral(one, 0.5, "left")
    ref = one.times ** 0.5 / math.gamma(1.5)
    err = float(np.abs(ih.values[:, 0] - ref).max())
    yield ("frac_integral closed form", err < 1e-12, f"err={err:.2e}")

    dv = fracops.weyl_derivative(one, 0.3, "left")
    ref = one.times[1:] ** -0.3 / math.gamma(0.7)
    err = float(np.abs(dv.values[1:, 0] - ref).max())
    yield ("weyl constant closed form", err < 1e-10, f"err={err:.2e}")

    y = fracops.young_rs(one, ramp)
    err = float(np.abs(y.values[:, 0] - ramp.values[:, 0]).max())
    yield ("young_rs telescoping", err == 0.0, f"err={err:.2e}")

    yf = fracops.young_frac(one, ramp, 0.3)
    yield ("young_frac constant integrand", abs(yf - 1.0) < 1e-3, f"{yf!r}")

    c = fbm.covariance(0.3, 0.7, 0.5)
    yield ("covariance H=1/2 is min", abs(c - 0.3) < 1e-15, f"{c!r}")
    q = fbm.covariance_quadrature(0.5, 1.0, cfg.hurst, 256)
    err = abs(q - fbm.covariance(0.5, 1.0, cfg.hurst))
    yield ("kernel covariance reconstruction", err < 1e-3, f"err={err:.2e}")

    b1 = fbm.sample_volterra(64, cfg.hurst, 1, 8, cfg.seed)
    b2 = fbm.sample_volterra(64, cfg.hurst, 1, 8, cfg.seed)
    yield ("volterra determinism", np.array_equal(b1.values, b2.values), "")

    ctrl = cmspace.control_from_callable(lambda s: np.cos(2 * np.pi * s),
                                         128, max(cfg.hurst, 0.6))
    pa = cmspace.project(cmspace.project(ctrl, 0.7), 0.4)
    pb = cmspace.project(ctrl, 0.4)
    yield ("projection monotone",
           np.array_equal(pa.cell_values(), pb.cell_values()), "")
    n1 = cmspace.cm_norm(ctrl)
    rep = fracops.norms(ctrl.path, max(cfg.hurst, 0.6), 0.35)
    yield ("Holder embedding", rep.holder_norm <= 1.05 * n1,
           f"ratio={rep.holder_norm / n1:.3f}")

    co = sde.get_coefficients("constant")
    sk = sde.skeleton([0.0], co, ctrl)
    cp = sde.controlled_path([0.0], co, ctrl, 0.0,
                             GridFn.zeros(128, 1))
    yield ("eps=0 bitwise reduction",
           np.array_equal(sk.path.values, cp.path.values), "")

    zc = cmspace.zero_control(max(cfg.hurst, 0.6), 64)
    w, logw = ldp.girsanov_weight(zc, 1.0, np.zeros((64, 1)))
    yield ("girsanov zero-control weight", w == 1.0 and logw == 0.0, "")


def _run_validate_ops(cfg: ExperimentConfig, out: Path) -> list[str]:
    rows = []
    failures = 0
    for name, passed, detail in _validate_ops_checks(cfg):
        rows.append((name, "pass" if passed else "FAIL", detail))
        failures += 0 if passed else 1
    _write_csv(out / "validate.csv", ["check", "status", "detail"], rows)
    if failures:
        raise NumericError(f"{failures} validate-ops checks failed")
    return ["validate.csv"]


class _Infeasible(FbmldError):
    pass


_WORKFLOWS = {
    "sample": _run_sample,
    "solve": _run_solve,
    "rate": _run_rate,
    "ldp-scaling": _run_ldp_scaling,
    "laplace-check": _run_laplace,
    "validate-ops": _run_validate_ops,
}


def run(config_path: str, seed_override: int | None = None) -> int:
    """Execute the workflow named by the config; returns the exit status."""
    t0 = time.time()
    try:
        cfg = ExperimentConfig.from_file(config_path)
        if seed_override is not None:
            cfg.seed = int(seed_override)
            cfg.validate()
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    try:
        artifacts = _WORKFLOWS[cfg.command](cfg, out)
    except _Infeasible as exc:
        _write_json(out / "error.json", {"error": "infeasible", "detail": str(exc)})
        _write_manifest(out, cfg, t0, ["error.json"])
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DomainError as exc:
        # covers SchemaError and any config-content violation surfacing
        # from the numeric layers (bad dimensions, out-of-range parameters)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (NumericError, FloatingPointError) as exc:
        _write_json(out / "error.json", {"error": "numeric", "detail": str(exc)})
        _write_manifest(out, cfg, t0, ["error.json"])
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_manifest(out, cfg, t0, artifacts)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fbmld",
        description="fBm pathwise-calculus and large-deviation experiments",
    )
    parser.add_argument("config", help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    args = parser.parse_args(argv)
    return run(args.config, args.seed)


if __name__ == "__main__":
    sys.exit(main())
