"""Experiment configuration, sweep execution and output files.

Config files are flat ``key = value`` text; ``#`` starts a comment and
blank values mean "unset".  Recognised keys and their defaults are the
fields of :class:`ExperimentConfig`.  A sweep point is a pair ``(Q, K)``;
the instance for point ``Q`` uses ``L = Q * mu``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import theory
from .engine import SCHEDULE_KINDS, DelaySchedule, run_piag
from .errors import DivergenceError, InputError, StalenessError
from .problems import COMPONENT_KINDS, make_logistic_instance, make_quadratic_instance
from .prox import REGULARIZER_KINDS, Regularizer
from .reference import NotClosedForm, solve_cached, solve_closed_form, solve_prox_gradient

RATE_COLUMNS = ["Q", "K", "eta", "measured_rate", "eq7_rate", "eq8_rate", "hit_iter", "budget"]
SLOPE_COLUMNS = ["hit_slope", "loglog_slope"]
ORACLE_AGREEMENT = 1e-11


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "quadratic"
    m: int = 8
    n: int = 10
    mu: float = 1.0
    L: float = 10.0
    seed: int = 0
    regularizer: str = "l1"
    reg_lambda: float = 0.1
    reg_lambda2: float = 0.0
    box_lower: float = -1.0
    box_upper: float = 1.0
    schedule: str = "random-bounded"
    K: int = 2
    schedule_seed: int = 0
    step_policy: str = "theorem1-exact"
    step_fraction: float = 1.0
    max_iters: int = 200_000
    epsilon: float | None = None
    epsilon_rel: float = 1e-8
    sweep_K: tuple = ()
    sweep_Q: tuple = ()
    out: str = "piag_out"
    tol: float = 1e-9
    x0_scale: float = 2.0
    jobs: int = 1

    def points(self) -> list:
        Qs = self.sweep_Q or (self.L / self.mu,)
        Ks = self.sweep_K or (self.K,)
        return [(float(Q), int(K)) for Q in Qs for K in Ks]

    def regularizer_obj(self) -> Regularizer:
        return Regularizer(self.regularizer, lam=self.reg_lambda, lam2=self.reg_lambda2,
                           lower=self.box_lower, upper=self.box_upper)

    def validate(self):
        """Raise :class:`InputError` on anything the modules would reject."""
        if self.kind not in COMPONENT_KINDS:
            raise InputError(f"kind must be one of {COMPONENT_KINDS}")
        if self.regularizer not in REGULARIZER_KINDS:
            raise InputError(f"regularizer must be one of {REGULARIZER_KINDS}")
        if self.schedule not in SCHEDULE_KINDS:
            raise InputError(f"schedule must be one of {SCHEDULE_KINDS}")
        if self.m < 1 or self.n < 1:
            raise InputError("m and n must be positive")
        if not self.mu > 0:
            raise InputError("mu must be positive")
        if self.max_iters < 0 or self.jobs < 1:
            raise InputError("max_iters must be >= 0 and jobs >= 1")
        if self.epsilon is not None and not self.epsilon > 0:
            raise InputError("epsilon must be positive")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        self.regularizer_obj()
        theory.StepSizePolicy(self.step_policy, self.step_fraction)
        for Q, K in self.points():
            if Q < 1:
                raise InputError(f"Q={Q} < 1: mu exceeds L")
            if K < 0:
                raise InputError("K must be nonnegative")
            if self.kind == "quadratic" and self.n == 1 and Q != 1:
                raise InputError("one-dimensional quadratics need Q = 1")
            if self.schedule == "cyclic" and K < self.m - 1:
                raise InputError(f"cyclic schedule with m={self.m} needs K >= {self.m - 1}, got {K}")


DEFAULTS = {f.name: f.default for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    if key in ("sweep_K", "sweep_Q"):
        items = [t for t in raw.replace(",", " ").split() if t]
        conv = int if key == "sweep_K" else float
        return tuple(conv(t) for t in items)
    if raw == "":
        if default is None:
            return None
        raise InputError(f"{key} needs a value")
    if key == "epsilon":
        return float(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of typed overrides."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise InputError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise InputError(f"line {lineno}: bad value for {key}: {exc}") from None
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    fields_ = parse_config_text(Path(path).read_text()) if path else {}
    fields_.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**fields_)
    cfg.validate()
    return cfg


def build_problem(cfg: ExperimentConfig, Q: float):
    L = Q * cfg.mu
    reg = cfg.regularizer_obj()
    if cfg.kind == "quadratic":
        return make_quadratic_instance(cfg.m, cfg.n, cfg.mu, L, cfg.seed, reg)
    return make_logistic_instance(cfg.m, cfg.n, cfg.mu, cfg.seed, L_target=L, regularizer=reg)


def initial_point(cfg: ExperimentConfig, problem) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 7919])
    x0 = cfg.x0_scale * rng.normal(size=problem.n)
    reg = problem.regularizer
    if reg.kind == "box-indicator":
        x0 = np.clip(x0, reg.lower, reg.upper)
    return x0


def point_label(Q: float, K: int) -> str:
    return f"Q{Q:g}_K{K}"


@dataclass
class PointResult:
    Q: float
    K: int
    eta: float = math.nan
    measured_rate: float = math.nan
    eq7_rate: float = math.nan
    eq8_rate: float = math.nan
    hit_iter: int | None = None
    budget: int | None = None
    report: theory.CheckReport = field(default_factory=theory.CheckReport)
    oracle_failure: str = ""


def measured_rate(F) -> float:
    """Per-iteration geometric mean of ``F_{k+1} / F_k`` over the second half of the run."""
    F = np.asarray(F, dtype=float)
    T = F.size - 1
    mid = T // 2
    if T - mid < 1 or not (F[mid] > 0 and F[T] > 0):
        return math.nan
    return float(math.exp((math.log(F[T]) - math.log(F[mid])) / (T - mid)))


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def check_oracles(problem, tol_F=ORACLE_AGREEMENT):
    """Cross-validate the two reference solvers where a closed form exists.

    Returns ``(solution, CheckResult | None)``.
    """
    try:
        cf = solve_closed_form(problem)
    except NotClosedForm:
        return None, None
    pg = solve_prox_gradient(problem)
    diff = abs(cf.F_star - pg.F_star)
    verdict = theory.PASS if diff <= tol_F else theory.FAIL
    return cf, theory.CheckResult("oracle_agreement", verdict, diff, pg.iterations, tol_F)


def run_point(cfg: ExperimentConfig, Q: float, K: int) -> PointResult:
    """Solve, run PIAG, check, and write ``trace_<point>.csv``/``report_<point>.txt``."""
    out = Path(cfg.out)
    label = point_label(Q, K)
    res = PointResult(Q, K)
    problem = build_problem(cfg, Q)
    _atomic_write(out / f"instance_{label}.json", problem.to_text())

    ref, agreement = check_oracles(problem)
    if agreement is not None:
        res.report.append(agreement)
        if not agreement.holds:
            res.oracle_failure = "closed-form and prox-gradient optima disagree"
    if ref is None:
        ref = solve_cached(problem, out / "cache")

    mu, L = problem.mu, problem.L
    eta = theory.StepSizePolicy(cfg.step_policy, cfg.step_fraction).step_size(mu, L, K)
    res.eta = eta
    res.eq7_rate = float(theory.rate_eq7(eta, mu, 1))
    res.eq8_rate = float(theory.rate_eq8(problem.Q, K, 1))
    x0 = initial_point(cfg, problem)
    F0 = problem.eval_F(x0) - ref.F_floor
    eps = cfg.epsilon if cfg.epsilon is not None else cfg.epsilon_rel * F0
    tol = theory.default_tolerance(F0, cfg.tol)
    schedule = DelaySchedule(cfg.schedule, K, cfg.schedule_seed)
    try:
        trace = run_piag(problem, schedule, x0, eta, ref.F_floor, cfg.max_iters, eps)
    except (DivergenceError, StalenessError) as exc:
        res.report.append(theory.CheckResult("run", theory.FAIL, math.inf, -1, tol, str(exc)))
        _atomic_write(out / f"report_{label}.txt", res.report.to_text())
        return res

    res.report.extend([
        theory.check_lemma1(trace, L, K, tol),
        theory.check_lemma2(trace, mu, L, K, tol),
        theory.check_combined_recursion(trace, mu, L, K, tol),
        *theory.check_theorem1(trace, mu, problem.Q, K, eta, tol),
        theory.check_corollary1(trace, problem.Q, K, eps, mu),
        theory.check_limit_point(trace, ref.x_star, mu),
    ])
    res.measured_rate = measured_rate(trace.F)
    res.hit_iter = trace.hitting_time(eps)
    res.budget = theory.corollary1_budget(problem.Q, K, trace.F0, eps)

    buf = out / f"trace_{label}.csv"
    trace.to_csv(buf.with_name(buf.name + ".tmp"))
    os.replace(buf.with_name(buf.name + ".tmp"), buf)
    _atomic_write(out / f"report_{label}.txt", res.report.to_text())
    return res


def _slope(x, y) -> float:
    return float(np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)[0])


def rate_slopes(results: list) -> dict:
    """Per-Q least-squares slopes of ``hit_iter`` against ``K + 1``.

    Returns ``{Q: (linear_slope, loglog_slope)}`` for every Q with at least
    two points that reached the target.
    """
    groups = {}
    for r in results:
        if r.hit_iter is not None and r.hit_iter > 0:
            groups.setdefault(r.Q, []).append((r.K + 1, r.hit_iter))
    out = {}
    for Q, pts in groups.items():
        if len({k for k, _ in pts}) < 2:
            continue
        k1, hit = zip(*pts)
        out[Q] = (_slope(k1, hit), _slope(np.log(k1), np.log(hit)))
    return out


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def emit_rate_table(results: list, path=None) -> str:
    """Render (and optionally write) ``rates.csv``.

    Slope columns are appended only when the sweep has at least two points.
    """
    with_slopes = len(results) >= 2
    slopes = rate_slopes(results) if with_slopes else {}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RATE_COLUMNS + (SLOPE_COLUMNS if with_slopes else []))
    for r in results:
        row = [_fmt(r.Q), r.K, _fmt(r.eta), _fmt(r.measured_rate), _fmt(r.eq7_rate),
               _fmt(r.eq8_rate), _fmt(r.hit_iter), _fmt(r.budget)]
        if with_slopes:
            row += [_fmt(s) for s in slopes.get(r.Q, (None, None))]
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        _atomic_write(Path(path), text)
    return text


def _run_point_args(args):
    return run_point(*args)


def run_experiment(cfg: ExperimentConfig) -> tuple:
    """Run every sweep point; returns ``(exit_status, results)``.

    Exit status 0 when no check failed, 1 on a failed check, 3 when the
    reference solvers disagree.  Oracle exceptions propagate to the caller.
    """
    cfg.validate()
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, Q, K) for Q, K in cfg.points()]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_point_args, jobs))
    else:
        results = [run_point(*j) for j in jobs]
    emit_rate_table(results, Path(cfg.out) / "rates.csv")
    if any(r.oracle_failure for r in results):
        return 3, results
    if any(r.report.failed for r in results):
        return 1, results
    return 0, results
