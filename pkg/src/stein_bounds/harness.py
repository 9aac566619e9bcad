"""Seeded experiment orchestration: configure a model, run identity checks,
bounds and distances, and emit reproducible reports.

Reproducibility contract: the random stream of task k is derived as
``SeedSequence(seed).spawn``-child k (PCG64), in declared task order, so a
report depends only on (config, seed) and not on the worker count; the
``threads`` setting is recorded for provenance but never changes a number.
Every Monte Carlo figure carries its seed and rep count.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from . import bounds as bnd
from . import couplings
from . import distances as dst
from . import exchangeable as ex
from . import stein_equation as se
from .distributions import (
    FiniteDist,
    IndepSumModel,
    StateCapError,
    iid_model,
    make_finite,
    moments,
    rademacher,
    standardize,
    sum_law,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "ModelContext",
    "GaussianFunctional",
    "GAUSSIAN_FUNCTIONALS",
    "TASKS",
    "run",
    "random_admissible_matrix",
    "random_centered_law",
]


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


@dataclass(frozen=True)
class GaussianFunctional:
    """A smooth functional of n iid standard normals, with gradient oracle."""

    name: str
    n: int
    g: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


def _linear_functional(n: int) -> GaussianFunctional:
    def g(x):
        return np.asarray(x)[..., 0]

    def grad(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        out[:, 0] = 1.0
        return out

    return GaussianFunctional(name="linear", n=n, g=g, grad=grad)


def _quadratic_functional(n: int) -> GaussianFunctional:
    scale = math.sqrt(2.0 * n)

    def g(x):
        x = np.asarray(x, dtype=float)
        return (np.sum(x * x, axis=-1) - n) / scale

    def grad(x):
        return 2.0 * np.asarray(x, dtype=float) / scale

    return GaussianFunctional(name="quadratic", n=n, g=g, grad=grad)


GAUSSIAN_FUNCTIONALS: dict[str, Callable[[int], GaussianFunctional]] = {
    "linear": _linear_functional,
    "quadratic": _quadratic_functional,
}


@dataclass(frozen=True)
class ModelContext:
    """A resolved model: exactly one of the three families is populated."""

    kind: str
    indep: IndepSumModel | None = None
    base: FiniteDist | None = None          # unscaled iid component, when known
    comb: ex.CombinatorialModel | None = None
    gaussian: GaussianFunctional | None = None

    @property
    def n(self) -> int:
        if self.indep is not None:
            return self.indep.n
        if self.comb is not None:
            return self.comb.n
        return self.gaussian.n


def random_admissible_matrix(n: int, seed) -> ex.CombinatorialModel:
    """Draw iid uniforms, double-center, and rescale so that Var(W) = 1.

    The variance of the permutation sum of a double-centered array is
    sum c_ij^2 / (n-1); the formula is validated against full enumeration at
    small n in the test suite.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    c = rng.random((n, n))
    for _ in range(2):  # second pass clears float residue of the first
        c = c - c.mean(axis=1, keepdims=True)
        c = c - c.mean(axis=0, keepdims=True)
    var = ex.perm_sum_variance(c)
    if var <= 0:
        raise ValueError("degenerate draw")
    return ex.CombinatorialModel(c / math.sqrt(var), unit_variance=True)


def random_centered_law(rng: np.random.Generator, max_atoms: int = 8,
                        span: float = 3.0) -> FiniteDist:
    """A random finitely supported law with exact mean zero."""
    k = int(rng.integers(2, max_atoms + 1))
    atoms = np.sort(rng.uniform(-span, span, k))
    masses = rng.dirichlet(np.ones(k))
    law = make_finite(atoms, masses)
    mean = moments(law).mean
    return make_finite(law.atoms - mean, law.masses)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a model, a task list, and explicit randomness budget.

    The seed is always explicit; there is no wall-clock default, because a
    report must be reproducible from its config alone.
    """

    model: dict
    tasks: tuple[str, ...]
    seed: int
    reps: int = 100_000
    out: str | None = None
    format: str = "json"
    threads: int = 1
    intervals: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("task list must be nonempty")
        if self.seed is None:
            raise ConfigError("seed must be explicit")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        unknown = [t for t in self.tasks if t not in TASKS]
        if unknown:
            raise ConfigError(f"unknown tasks: {unknown}")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if any(t in MC_TASKS for t in self.tasks) and self.reps < 1000:
            raise ConfigError("Monte Carlo tasks need reps >= 1000")

    @staticmethod
    def from_dict(data: dict, overrides: dict | None = None) -> "ExperimentConfig":
        merged = dict(data)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        try:
            return ExperimentConfig(
                model=merged["model"],
                tasks=tuple(merged["tasks"]),
                seed=merged["seed"],
                reps=int(merged.get("reps", 100_000)),
                out=merged.get("out"),
                format=merged.get("format", "json"),
                threads=int(merged.get("threads", 1)),
                intervals=tuple(tuple(i) for i in merged["intervals"]) if merged.get("intervals") else None,
            )
        except KeyError as missing:
            raise ConfigError(f"missing config field: {missing}") from None

    @staticmethod
    def from_json(path, overrides: dict | None = None) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return ExperimentConfig.from_dict(data, overrides)


def build_model(spec: dict) -> ModelContext:
    kind = spec.get("kind")
    if kind in ("iid-rademacher", "iid_rademacher"):
        n = int(spec["n"])
        base = rademacher(1.0)
        model = standardize(iid_model(base, n))
        return ModelContext(kind="indep_sum", indep=model, base=base)
    if kind == "components":
        paths = spec.get("paths")
        if not paths:
            raise ConfigError("components model needs 'paths'")
        comps = tuple(FiniteDist.from_csv(p) for p in paths)
        model = standardize(IndepSumModel(components=comps))
        return ModelContext(kind="indep_sum", indep=model)
    if kind == "combinatorial":
        model, _ = ex.CombinatorialModel.from_csv(spec["path"])
        return ModelContext(kind="combinatorial", comb=model)
    if kind in ("combinatorial-random", "combinatorial_random"):
        n = int(spec["n"])
        model = random_admissible_matrix(n, int(spec.get("seed", 0)))
        return ModelContext(kind="combinatorial", comb=model)
    if kind in ("gaussian-linear", "gaussian-quadratic"):
        name = kind.split("-", 1)[1]
        n = int(spec["n"])
        return ModelContext(kind="gaussian", gaussian=GAUSSIAN_FUNCTIONALS[name](n))
    raise ConfigError(f"unknown model kind {kind!r}")


def _require(ctx: ModelContext, kind: str, task: str) -> None:
    if ctx.kind != kind:
        raise ConfigError(f"task {task!r} needs a {kind} model, got {ctx.kind}")


def _sample_w(ctx: ModelContext, rng: np.random.Generator, reps: int) -> np.ndarray:
    if ctx.indep is not None:
        total = np.zeros(reps)
        for comp in ctx.indep.components:
            total += comp.sample(rng, reps)
        return total
    if ctx.gaussian is not None:
        x = rng.standard_normal((reps, ctx.gaussian.n))
        return np.asarray(ctx.gaussian.g(x))
    w, _ = ex.sample_pair_comb(ctx.comb, rng, reps)
    return w


def _enumerable_law(ctx: ModelContext) -> FiniteDist | None:
    try:
        if ctx.indep is not None:
            return sum_law(ctx.indep)
        if ctx.comb is not None and ctx.comb.n <= 8:
            return ex.perm_sum_law(ctx.comb)
    except StateCapError:
        return None
    return None


# ---------------------------------------------------------------------------
# tasks: each returns a dict of report sections to merge


def _task_dw_indep(ctx, cfg, rng):
    _require(ctx, "indep_sum", "dw_indep")
    report = bnd.dw_indep(ctx.indep)
    law = _enumerable_law(ctx)
    if law is not None:
        report = bnd.attach_empirical(report, dst.wasserstein_exact(law), "exact")
    else:
        sample = dst.EmpiricalSample(_sample_w(ctx, rng, cfg.reps), source="sum of components")
        est = dst.distances_mc(sample)
        report = bnd.attach_empirical(report, est.d_w, "monte_carlo",
                                      std_err=est.d_w_bias_bound)
    return {"bounds": [report]}


def _task_be_iid(ctx, cfg, rng):
    _require(ctx, "indep_sum", "be_iid")
    if not ctx.indep.is_iid(tol=0.0):
        raise ConfigError("be_iid needs an iid model")
    base = ctx.base if ctx.base is not None else ctx.indep.components[0]
    mom = moments(base)
    report = bnd.be_iid(math.sqrt(mom.variance), mom.abs_third, ctx.indep.n)
    law = _enumerable_law(ctx)
    if law is not None:
        report = bnd.attach_empirical(report, dst.kolmogorov_exact(law), "exact")
    else:
        sample = dst.EmpiricalSample(_sample_w(ctx, rng, cfg.reps), source="sum of components")
        est = dst.distances_mc(sample)
        report = bnd.attach_empirical(report, est.d_k, "monte_carlo", std_err=est.dkw_width / 3.0)
    return {"bounds": [report]}


def _task_kolmogorov_exact(ctx, cfg, rng):
    law = _enumerable_law(ctx)
    if law is None:
        raise ConfigError("kolmogorov_exact needs an enumerable model")
    return {"distances": [{"name": "kolmogorov_exact", "value": dst.kolmogorov_exact(law)}]}


def _task_wasserstein_exact(ctx, cfg, rng):
    law = _enumerable_law(ctx)
    if law is None:
        raise ConfigError("wasserstein_exact needs an enumerable model")
    return {"distances": [{"name": "wasserstein_exact", "value": dst.wasserstein_exact(law)}]}


def _task_distances_mc(ctx, cfg, rng):
    sample = dst.EmpiricalSample(_sample_w(ctx, rng, cfg.reps), source=ctx.kind)
    est = dst.distances_mc(sample)
    return {"distances": [{
        "name": "distances_mc", "d_k": est.d_k, "d_w": est.d_w,
        "dkw_width": est.dkw_width, "d_w_bias_bound": est.d_w_bias_bound,
        "reps": est.n,
    }]}


def _task_dw_zero_bias(ctx, cfg, rng):
    _require(ctx, "indep_sum", "dw_zero_bias")
    sampler = lambda r, k: couplings.zero_bias_indep_sampler(ctx.indep, r, k)
    report = bnd.dw_zero_bias(sampler, cfg.reps, rng, seed=cfg.seed)
    law = _enumerable_law(ctx)
    if law is not None:
        report = bnd.attach_empirical(report, dst.wasserstein_exact(law), "exact")
    return {"bounds": [report]}


def _task_concentration(ctx, cfg, rng):
    _require(ctx, "indep_sum", "concentration")
    intervals = cfg.intervals
    if intervals is None:
        std = math.sqrt(ctx.indep.total_variance())
        edges = np.linspace(-2.0 * std, 2.0 * std, 11)
        intervals = [(float(a), float(b)) for a in edges for b in edges if a <= b][:50]
    reports = []
    for a, b in intervals:
        report, _ = bnd.concentration_bound(ctx.indep, a, b)
        reports.append(report)
    return {"bounds": reports}


def _exchangeable_stats(ctx, cfg, rng):
    if ctx.kind == "indep_sum":
        lam = ex.lambda_indep(ctx.indep.n)
        law = None
        try:
            law = ex.enumerate_pair_indep(ctx.indep)
        except StateCapError:
            pass
        if law is not None:
            return ex.pair_stats(law, lam, "exact"), lam, law
        sampler = lambda r, k: ex.sample_pair_indep(ctx.indep, r, k)
        return ex.pair_stats(sampler, lam, "monte_carlo", reps=cfg.reps, rng=rng,
                             seed=cfg.seed), lam, None
    if ctx.kind == "combinatorial":
        lam = ex.lambda_comb(ctx.comb.n)
        if ctx.comb.n <= 8:
            law = ex.enumerate_pair_comb(ctx.comb)
            return ex.pair_stats(law, lam, "exact"), lam, law
        sampler = lambda r, k: ex.sample_pair_comb(ctx.comb, r, k)
        return ex.pair_stats(sampler, lam, "monte_carlo", reps=cfg.reps, rng=rng,
                             seed=cfg.seed), lam, None
    raise ConfigError("exchangeable-pair tasks need an indep_sum or combinatorial model")


def _task_dw_exchangeable(ctx, cfg, rng):
    stats, _, _ = _exchangeable_stats(ctx, cfg, rng)
    report = bnd.dw_exchangeable(stats)
    law = _enumerable_law(ctx)
    if law is not None:
        report = bnd.attach_empirical(report, dst.wasserstein_exact(law),
                                      "exact" if stats.mode == "exact" else "monte_carlo",
                                      std_err=0.0)
    return {"bounds": [report]}


def _task_dk_exchangeable(ctx, cfg, rng):
    stats, _, _ = _exchangeable_stats(ctx, cfg, rng)
    report = bnd.dk_exchangeable(stats)
    law = _enumerable_law(ctx)
    if law is not None:
        report = bnd.attach_empirical(report, dst.kolmogorov_exact(law),
                                      "exact" if stats.mode == "exact" else "monte_carlo",
                                      std_err=0.0)
    return {"bounds": [report]}


def _task_dtv_interpolation(ctx, cfg, rng):
    _require(ctx, "gaussian", "dtv_interpolation")
    reps_outer = max(1000, min(cfg.reps, 20_000))
    report, diag = bnd.dtv_interpolation(
        ctx.gaussian.grad, ctx.gaussian.n,
        reps_outer=reps_outer, reps_inner=128, quad_points=32,
        rng=rng, seed=cfg.seed,
    )
    return {"bounds": [report], "residuals": [{
        "name": "interpolation_mean_t_minus_1",
        "value": diag["mean_t"] - 1.0,
        "std_err": diag["se_mean_t"],
    }]}


def _task_characterization(ctx, cfg, rng):
    """|E[f'(W) - W f(W)]| for a battery of solved test functions; each
    residual is bounded by the matching Wasserstein bound when available."""
    _require(ctx, "indep_sum", "characterization")
    law = _enumerable_law(ctx)
    if law is None:
        raise ConfigError("characterization needs an enumerable model")
    entries = []
    budget = bnd.dw_indep(ctx.indep).bound_value if ctx.indep.normalized else None
    for h in (se.lipschitz(np.cos, 1.0, "cos"),
              se.lipschitz(lambda t: np.abs(t), 1.0, "abs"),
              se.lipschitz(np.sin, 1.0, "sin")):
        sol = se.solve_smooth(h)
        res = se.characterization_residual(law, sol)
        entry = {"name": f"characterization[{h.label}]", "value": res}
        if budget is not None:
            entry["within_dw_bound"] = bool(abs(res) <= budget)
        entries.append(entry)
    return {"residuals": entries}


def _task_discrepancy(ctx, cfg, rng):
    """lhs/rhs agreement of the discrepancy identity on random laws."""
    entries = []
    for k in range(5):
        law = random_centered_law(rng)
        x = float(rng.uniform(-2, 2))
        for h in (se.indicator(x),
                  se.lipschitz(np.cos, 1.0, "cos"),
                  se.smoothed_indicator(x, 0.5)):
            lhs, rhs = se.discrepancy_identity_check(law, h)
            entries.append({
                "name": f"discrepancy[law{k},{h.label}]",
                "lhs": lhs, "rhs": rhs, "value": abs(lhs - rhs),
                "pass": bool(abs(lhs - rhs) <= 1e-7),
            })
    return {"residuals": entries}


def _task_regression(ctx, cfg, rng):
    stats_mode_exact = True
    if ctx.kind == "indep_sum":
        law = ex.enumerate_pair_indep(ctx.indep)
        lam = ex.lambda_indep(ctx.indep.n)
    elif ctx.kind == "combinatorial":
        if ctx.comb.n > 8:
            raise ConfigError("regression check needs n <= 8 for enumeration")
        law = ex.enumerate_pair_comb(ctx.comb)
        lam = ex.lambda_comb(ctx.comb.n)
    else:
        raise ConfigError("regression needs an indep_sum or combinatorial model")
    residual = ex.regression_check(law, lam)
    return {"residuals": [{"name": "regression", "lambda": lam, "value": residual,
                           "pass": bool(residual <= 1e-10)}]}


def _task_antisymmetry(ctx, cfg, rng):
    if ctx.kind == "indep_sum":
        sampler = lambda r, k: ex.sample_pair_indep(ctx.indep, r, k)
    elif ctx.kind == "combinatorial":
        sampler = lambda r, k: ex.sample_pair_comb(ctx.comb, r, k)
    else:
        raise ConfigError("antisymmetry needs an indep_sum or combinatorial model")
    entries = []
    for label, f in (("w^2", lambda w: w * w), ("cos", np.cos)):
        est, se_ = ex.antisymmetry_check(sampler, f, reps=cfg.reps, rng=rng)
        entries.append({"name": f"antisymmetry[{label}]", "value": est, "std_err": se_,
                        "pass": bool(abs(est) <= 3.0 * se_ + 1e-15)})
    return {"residuals": entries}


def _task_zero_bias_identity(ctx, cfg, rng):
    entries = []
    for k in range(5):
        law = random_centered_law(rng)
        zb = couplings.zero_bias(law)
        coeffs = rng.uniform(-1, 1, 6)  # f of degree 5
        deriv = coeffs[1:] * np.arange(1, 6)
        lhs = law.expect(lambda a: a * np.polynomial.polynomial.polyval(a, coeffs))
        rhs = zb.b_squared * zb.expect_poly(deriv)
        entries.append({"name": f"zero_bias_identity[law{k}]", "value": abs(lhs - rhs),
                        "pass": bool(abs(lhs - rhs) <= 1e-9)})
    return {"residuals": entries}


def _task_generator(ctx, cfg, rng):
    if ctx.kind == "indep_sum":
        sampler = lambda r, k: ex.sample_pair_indep(ctx.indep, r, k)
        lam = ex.lambda_indep(ctx.indep.n)
    elif ctx.kind == "combinatorial":
        sampler = lambda r, k: ex.sample_pair_comb(ctx.comb, r, k)
        lam = ex.lambda_comb(ctx.comb.n)
    else:
        raise ConfigError("generator needs an indep_sum or combinatorial model")
    est, se_ = ex.generator_identity_residual(
        sampler,
        f_prime=lambda w: 3.0 * w ** 2,
        f_double_prime=lambda w: 6.0 * w,
        f_triple_prime=lambda w: np.full_like(np.asarray(w, dtype=float), 6.0),
        lam=lam, reps=cfg.reps, rng=rng,
    )
    return {"residuals": [{"name": "generator[w^3]", "value": est, "std_err": se_,
                           "pass": bool(abs(est) <= 3.0 * se_ + 1e-15)}]}


TASKS: dict[str, Callable] = {
    "dw_indep": _task_dw_indep,
    "be_iid": _task_be_iid,
    "kolmogorov_exact": _task_kolmogorov_exact,
    "wasserstein_exact": _task_wasserstein_exact,
    "distances_mc": _task_distances_mc,
    "dw_zero_bias": _task_dw_zero_bias,
    "concentration": _task_concentration,
    "dw_exchangeable": _task_dw_exchangeable,
    "dk_exchangeable": _task_dk_exchangeable,
    "dtv_interpolation": _task_dtv_interpolation,
    "characterization": _task_characterization,
    "discrepancy": _task_discrepancy,
    "regression": _task_regression,
    "antisymmetry": _task_antisymmetry,
    "zero_bias_identity": _task_zero_bias_identity,
    "generator": _task_generator,
}

MC_TASKS = {
    "distances_mc", "dw_zero_bias", "dtv_interpolation", "antisymmetry", "generator",
}


@dataclass
class ExperimentReport:
    """Everything needed to re-derive any number: config echo, per-task
    outputs, and provenance.  Wall time is informational and excluded from
    the determinism contract."""

    config: dict
    version: str
    threads: int
    bounds: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    wall_time_s: float = 0.0

    def to_dict(self, include_wall_time: bool = True) -> dict:
        out = {
            "config": self.config,
            "version": self.version,
            "threads": self.threads,
            "bounds": [bnd.report_to_json(r) for r in self.bounds],
            "distances": self.distances,
            "residuals": self.residuals,
            "errors": self.errors,
        }
        if include_wall_time:
            out["wall_time_s"] = self.wall_time_s
        return out

    def to_json(self, include_wall_time: bool = True) -> str:
        return json.dumps(self.to_dict(include_wall_time), indent=2)

    def to_csv(self) -> str:
        return bnd.reports_to_csv(self.bounds)

    def any_exact_domination_failure(self) -> bool:
        return any(r.dominates is False and r.distance_mode == "exact" for r in self.bounds)


def _config_echo(cfg: ExperimentConfig) -> dict:
    return {
        "model": cfg.model,
        "tasks": list(cfg.tasks),
        "seed": cfg.seed,
        "reps": cfg.reps,
        "format": cfg.format,
        "threads": cfg.threads,
        "intervals": [list(i) for i in cfg.intervals] if cfg.intervals else None,
    }


def run(config: ExperimentConfig) -> ExperimentReport:
    """Execute the configured tasks in declared order.

    A failure inside one task is recorded as an error entry and does not
    abort the rest; long sweeps keep their completed work.
    """
    ctx = build_model(config.model)
    report = ExperimentReport(config=_config_echo(config), version=__version__,
                              threads=config.threads)
    t0 = time.perf_counter()
    streams = np.random.SeedSequence(config.seed).spawn(len(config.tasks))
    for task_name, stream in zip(config.tasks, streams):
        rng = np.random.Generator(np.random.PCG64(stream))
        try:
            sections = TASKS[task_name](ctx, config, rng)
        except Exception as exc:  # record and continue: task isolation
            report.errors.append({"task": task_name, "error": f"{type(exc).__name__}: {exc}"})
            continue
        report.bounds.extend(sections.get("bounds", []))
        report.distances.extend(sections.get("distances", []))
        report.residuals.extend(sections.get("residuals", []))
    report.wall_time_s = time.perf_counter() - t0
    return report
