"""The PIAG iteration: gradient table, delay schedules, update and traces.

At iteration ``k`` the scheduled components are re-evaluated at ``x_k``
first; the aggregated gradient ``g_k`` is then the mean of the stored
gradients and

    x_{k+1} = prox_r^eta(x_k - eta * g_k),    d_k = (x_{k+1} - x_k) / eta.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InputError, StalenessError
from .problems import CompositeProblem
from .prox import prox_point

SCHEDULE_KINDS = ("cyclic", "random-bounded", "adversarial-deadline", "full-refresh")
RESYNC_EVERY = 1000
DRIFT_LIMIT = 1e-10
DIVERGENCE_FACTOR = 1e6


class GradientTable:
    """Stored component gradients, their sample iterations and a running sum."""

    def __init__(self, grads: np.ndarray, tau: np.ndarray):
        self.grads = grads
        self.tau = tau
        self.running_sum = grads.sum(axis=0)

    @property
    def m(self) -> int:
        return self.grads.shape[0]

    def refresh(self, indices, new_grads, k: int):
        # indices must be distinct
        self.running_sum += (new_grads - self.grads[indices]).sum(axis=0)
        self.grads[indices] = new_grads
        self.tau[indices] = k

    def aggregated_gradient(self) -> np.ndarray:
        return self.running_sum / self.m

    def ages(self, k: int) -> np.ndarray:
        return k - self.tau

    def resync(self) -> float:
        """Recompute the running sum from scratch and return the drift it removed."""
        exact = self.grads.sum(axis=0)
        drift = float(np.linalg.norm(self.running_sum - exact))
        self.running_sum = exact
        return drift


def init_table(problem: CompositeProblem, x0) -> GradientTable:
    """Evaluate every component gradient at ``x0``; all sample times are 0."""
    x0 = problem._check_x(x0)
    grads = problem.component_grads(np.arange(problem.m), x0)
    return GradientTable(grads, np.zeros(problem.m, dtype=np.int64))


def aggregated_gradient(table: GradientTable) -> np.ndarray:
    return table.aggregated_gradient()


@dataclass(frozen=True)
class DelaySchedule:
    """Which components get fresh gradients at each iteration.

    ``K`` is the staleness bound the schedule promises: every stored
    gradient used at iteration ``k`` was computed at some ``tau >= k - K``.
    A cyclic schedule over ``m`` components needs ``K >= m - 1``.
    """

    kind: str
    K: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InputError(f"unknown schedule kind {self.kind!r}")
        if self.K < 0 or int(self.K) != self.K:
            raise InputError("K must be a nonnegative integer")


def schedule_refresh_set(schedule: DelaySchedule, k: int, staleness, rng=None) -> np.ndarray:
    """Indices (0-based, sorted) to refresh at iteration ``k``.

    ``staleness`` holds the age of each stored gradient as of the previous
    iteration, so an entry at age ``K`` must be refreshed now.

    * cyclic: ``{k mod m}``
    * random-bounded: one uniform index plus every entry at age ``K``
    * adversarial-deadline: exactly the entries at age ``K`` (may be empty)
    * full-refresh: everything
    """
    staleness = np.asarray(staleness)
    m = staleness.size
    kind = schedule.kind
    if kind == "cyclic":
        return np.array([k % m])
    if kind == "full-refresh":
        return np.arange(m)
    due = np.flatnonzero(staleness >= schedule.K)
    if kind == "adversarial-deadline":
        return due
    if rng is None:
        rng = np.random.default_rng((schedule.seed, k))
    pick = int(rng.integers(m))
    return due if pick in due else np.sort(np.append(due, pick))


def piag_step(problem: CompositeProblem, table: GradientTable, schedule: DelaySchedule,
              x_k: np.ndarray, eta: float, k: int, rng=None):
    """One PIAG iteration; returns ``(x_next, d_k, refreshed)``.

    Mutates ``table``.  Raises :class:`StalenessError` if, after the refresh,
    some stored gradient is older than ``schedule.K``.
    """
    prev_ages = np.maximum(k - 1, 0) - table.tau
    refreshed = schedule_refresh_set(schedule, k, prev_ages, rng)
    if refreshed.size:
        table.refresh(refreshed, problem.component_grads(refreshed, x_k), k)
    worst = int(np.max(k - table.tau))
    if worst > schedule.K:
        raise StalenessError(f"iteration {k}: gradient age {worst} exceeds K={schedule.K}")
    g = table.running_sum / table.m
    x_next = prox_point(problem.regularizer, eta, x_k - eta * g)
    d = (x_next - x_k) / eta
    return x_next, d, refreshed


@dataclass
class RunTrace:
    """Per-iteration record of a PIAG run.

    ``F[k]`` is the suboptimality at ``x_k`` for ``k = 0..iterations``;
    ``d_norm_sq[k]`` and ``max_staleness[k]`` describe the step from ``x_k``
    to ``x_{k+1}`` and have length ``iterations``.
    """

    F: np.ndarray
    d_norm_sq: np.ndarray
    max_staleness: np.ndarray
    eta: float
    K: int
    x_final: np.ndarray
    F_star_ref: float
    epsilon: float | None = None
    iterates: list | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.d_norm_sq)

    @property
    def F0(self) -> float:
        return float(self.F[0])

    def hitting_time(self, epsilon: float) -> int | None:
        hits = np.flatnonzero(self.F <= epsilon)
        return int(hits[0]) if hits.size else None

    def to_csv(self, path):
        """Write ``k,F_k,d_norm_sq,eta,max_staleness``; the last row has no step."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "F_k", "d_norm_sq", "eta", "max_staleness"])
            T = self.iterations
            for k in range(T + 1):
                if k < T:
                    w.writerow([k, repr(float(self.F[k])), repr(float(self.d_norm_sq[k])),
                                repr(self.eta), int(self.max_staleness[k])])
                else:
                    w.writerow([k, repr(float(self.F[k])), "", repr(self.eta), ""])


def read_trace_csv(path, K: int, F_star_ref: float = math.nan) -> RunTrace:
    """Load a trace written by :meth:`RunTrace.to_csv` (``x_final`` is not stored)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    F = np.array([float(r["F_k"]) for r in rows])
    steps = [r for r in rows if r["d_norm_sq"] != ""]
    return RunTrace(F=F,
                    d_norm_sq=np.array([float(r["d_norm_sq"]) for r in steps]),
                    max_staleness=np.array([int(r["max_staleness"]) for r in steps], dtype=int),
                    eta=float(rows[0]["eta"]), K=K, x_final=np.array([]),
                    F_star_ref=F_star_ref)


def run_piag(problem: CompositeProblem, schedule: DelaySchedule, x0, eta: float,
             F_star_ref: float, max_iters: int = 100_000, epsilon: float | None = None,
             record_iterates: bool = False) -> RunTrace:
    """Iterate PIAG from ``x0`` until ``F_k <= epsilon`` or ``max_iters`` steps.

    ``F_star_ref`` is the optimal value used to form ``F_k = F(x_k) - F_star_ref``;
    pass a slightly deflated optimum so that ``F_k`` stays nonnegative.

    Raises
    ------
    DivergenceError
        If ``F_k`` exceeds ``1e6 * F_0`` or becomes non-finite.
    """
    if not (np.isfinite(eta) and eta > 0):
        raise InputError(f"step size must be positive and finite, got {eta!r}")
    if schedule.kind == "cyclic" and schedule.K < problem.m - 1:
        raise InputError(f"cyclic schedule over m={problem.m} components needs K >= {problem.m - 1}")
    x = np.array(problem._check_x(x0), dtype=float)
    F0 = float(problem.eval_F(x) - F_star_ref)
    if not np.isfinite(F0):
        raise InputError("x0 lies outside the domain of the regularizer")
    limit = DIVERGENCE_FACTOR * max(F0, 1e-12)
    table = init_table(problem, x)
    rng = np.random.default_rng(schedule.seed)

    F = [F0]
    dsq = []
    ages = []
    iterates = [x.copy()] if record_iterates else None
    k = 0
    while k < max_iters and not (epsilon is not None and F[-1] <= epsilon):
        x, d, _ = piag_step(problem, table, schedule, x, eta, k, rng)
        ages.append(int(np.max(k - table.tau)))
        dsq.append(float(d @ d))
        Fk = problem.eval_F(x) - F_star_ref
        if not Fk <= limit:
            raise DivergenceError(
                f"iteration {k + 1}: F_k={Fk:.3e} exceeds {DIVERGENCE_FACTOR:g} * F_0; "
                f"step size eta={eta:.3e} is unstable for this instance")
        F.append(Fk)
        if record_iterates:
            iterates.append(x.copy())
        k += 1
        if k % RESYNC_EVERY == 0:
            scale = max(1.0, float(np.abs(table.grads).sum()))
            drift = table.resync()
            if drift > DRIFT_LIMIT * scale:
                raise RuntimeError(f"gradient running sum drifted by {drift:.3e}")

    return RunTrace(F=np.array(F), d_norm_sq=np.array(dsq),
                    max_staleness=np.array(ages, dtype=int), eta=float(eta), K=schedule.K,
                    x_final=x, F_star_ref=F_star_ref, epsilon=epsilon, iterates=iterates)
