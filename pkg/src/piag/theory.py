"""Step-size rules, rate bounds and runtime checkers for the PIAG convergence theory.

Every checker returns a :class:`CheckResult` with one of the verdicts

* ``pass`` / ``fail``: the inequality was evaluated; ``worst_residual`` is the
  largest violation ``lhs - rhs`` and the check passes iff it is ``<= tolerance``;
* ``not-applicable``: a stated precondition (step size, staleness bound) does
  not hold, so the inequality carries no claim;
* ``condition-not-met`` / ``precondition-violated`` (contraction lemma only);
* ``inconclusive``: the run stopped before the iteration budget was exhausted.

History sums of the form ``sum_{j=(k-K)_+}^{k-1} ||d_j||^2`` use the positive
part ``max(k - K, 0)``; at ``k = 0`` they are empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import RunTrace
from .errors import InputError

PASS = "pass"
FAIL = "fail"
NOT_APPLICABLE = "not-applicable"
CONDITION_NOT_MET = "condition-not-met"
PRECONDITION_VIOLATED = "precondition-violated"
INCONCLUSIVE = "inconclusive"

# relative slack when comparing a step size against its admissibility bound
STEP_RTOL = 1e-12


def _validate_constants(mu, L, K):
    if not (mu > 0 and np.isfinite(mu)):
        raise InputError(f"mu must be positive, got {mu!r}")
    if not (L >= mu and np.isfinite(L)):
        raise InputError(f"need L >= mu, got L={L!r}, mu={mu!r}")
    if K < 0 or int(K) != K:
        raise InputError(f"K must be a nonnegative integer, got {K!r}")


def theorem1_step_size(mu: float, L: float, K: int) -> float:
    """Largest step size covered by the main theorem.

    ``(16 / mu) * ((1 + 1/(48 Q))^(1/(K+1)) - 1)`` with ``Q = L / mu``,
    evaluated through ``expm1``/``log1p`` to avoid cancellation.  By
    Bernoulli's inequality the value never exceeds ``1 / (3 L (K+1))``;
    rounding can push the computed value an ulp above that, so the result is
    capped there.
    """
    _validate_constants(mu, L, K)
    Q = L / mu
    eta = 16.0 / mu * math.expm1(math.log1p(1.0 / (48.0 * Q)) / (K + 1))
    bound = 1.0 / (3.0 * L * (K + 1))
    assert eta <= bound * (1 + 4 * np.finfo(float).eps), (eta, bound)
    return min(eta, bound)


def classical_step_size(L: float, K: int) -> float:
    """``1 / (L (K+1))``: the range where the two descent lemmas apply."""
    return 1.0 / (L * (K + 1))


STEP_POLICIES = ("theorem1-exact", "theorem1-fraction", "classical-smoothness")


@dataclass(frozen=True)
class StepSizePolicy:
    kind: str = "theorem1-exact"
    fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in STEP_POLICIES:
            raise InputError(f"unknown step-size policy {self.kind!r}")
        if not 0 < self.fraction <= 1:
            raise InputError("fraction must lie in (0, 1]")

    def step_size(self, mu: float, L: float, K: int) -> float:
        if self.kind == "theorem1-exact":
            return theorem1_step_size(mu, L, K)
        if self.kind == "theorem1-fraction":
            return self.fraction * theorem1_step_size(mu, L, K)
        _validate_constants(mu, L, K)
        return self.fraction * classical_step_size(L, K)


def rate_eq7(eta: float, mu: float, k):
    """``(1 + eta * mu / 16) ** (-k)``; ``k`` may be an array."""
    return np.exp(-np.asarray(k, dtype=float) * math.log1p(eta * mu / 16.0))


def rate_eq8(Q: float, K: int, k):
    """``(1 - 1 / (49 Q (K+1))) ** k``; ``k`` may be an array."""
    if Q < 1 or K < 0:
        raise InputError("need Q >= 1 and K >= 0")
    return np.exp(np.asarray(k, dtype=float) * math.log1p(-1.0 / (49.0 * Q * (K + 1))))


def corollary1_budget(Q: float, K: int, F0: float, epsilon: float) -> int:
    """Iterations after which an epsilon-optimal point is guaranteed."""
    if F0 <= epsilon:
        return 0
    return math.ceil(49.0 * Q * (K + 1) * math.log(F0 / epsilon))


def default_tolerance(F0: float, rel: float = 1e-9) -> float:
    return float(rel * max(1.0, F0))


@dataclass(frozen=True)
class CheckResult:
    name: str
    verdict: str
    worst_residual: float
    worst_iteration: int
    tolerance: float
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict == PASS

    def to_line(self) -> str:
        fields = [f"name={self.name}", f"verdict={self.verdict}",
                  f"worst_residual={self.worst_residual!r}",
                  f"worst_iteration={self.worst_iteration}",
                  f"tolerance={self.tolerance!r}"]
        if self.note:
            fields.append("note=" + self.note)  # free text, always last
        return " ".join(fields)

    @classmethod
    def from_line(cls, line: str) -> "CheckResult":
        head, _, note = line.rstrip("\n").partition(" note=")
        kv = dict(tok.split("=", 1) for tok in head.split())
        return cls(kv["name"], kv["verdict"], float(kv["worst_residual"]),
                   int(kv["worst_iteration"]), float(kv["tolerance"]), note)


class CheckReport(list):
    """A list of :class:`CheckResult` with text (de)serialization."""

    @property
    def failed(self) -> list:
        return [r for r in self if r.verdict == FAIL]

    def to_text(self) -> str:
        return "".join(r.to_line() + "\n" for r in self)

    @classmethod
    def from_text(cls, text: str) -> "CheckReport":
        return cls(CheckResult.from_line(ln) for ln in text.splitlines() if ln.strip())


def _na(name, tol, note):
    return CheckResult(name, NOT_APPLICABLE, math.nan, -1, tol, note)


def _verdict(name, violation, tol, offset=0) -> CheckResult:
    if violation.size == 0:
        return CheckResult(name, PASS, -math.inf, -1, tol, "empty trace")
    i = int(np.argmax(violation))
    worst = float(violation[i])
    return CheckResult(name, PASS if worst <= tol else FAIL, worst, i + offset, tol)


def history_sums(d_norm_sq, K: int) -> np.ndarray:
    """``S_k = sum_{j=max(k-K,0)}^{k-1} D_j`` for each ``k`` in ``0..len(D)-1``."""
    D = np.asarray(d_norm_sq, dtype=float)
    if K == 0 or D.size == 0:
        return np.zeros_like(D)
    padded = np.concatenate([np.zeros(K), D[:-1]])
    return np.lib.stride_tricks.sliding_window_view(padded, K).sum(axis=1)


def _lemma_applicability(trace: RunTrace, L: float, K: int):
    if trace.eta > classical_step_size(L, K) * (1 + STEP_RTOL):
        return "step size exceeds 1/(L(K+1))"
    if trace.max_staleness.size and int(trace.max_staleness.max()) > K:
        return "trace staleness exceeds K"
    return None


def _require_steps(trace: RunTrace):
    if trace.d_norm_sq is None or len(trace.d_norm_sq) != len(trace.F) - 1:
        raise InputError("trace lacks per-step d_norm_sq records")


def check_lemma1(trace: RunTrace, L: float, K: int, tol: float) -> CheckResult:
    """Descent inequality with delayed-gradient error.

    ``F_{k+1} <= F_k - eta/2 ||d_k||^2 + eta^2 L/2 * S_k`` for every step.
    """
    _require_steps(trace)
    why = _lemma_applicability(trace, L, K)
    if why:
        return _na("lemma1", tol, why)
    F, D, eta = trace.F, trace.d_norm_sq, trace.eta
    S = history_sums(D, K)
    rhs = F[:-1] - 0.5 * eta * D + 0.5 * eta * eta * L * S
    return _verdict("lemma1", F[1:] - rhs, tol)


def check_lemma2(trace: RunTrace, mu: float, L: float, K: int, tol: float) -> CheckResult:
    """``-||d_k||^2 <= -(mu/4) F_{k+1} + eta L S_k`` for every step."""
    _require_steps(trace)
    why = _lemma_applicability(trace, L, K)
    if why:
        return _na("lemma2", tol, why)
    F, D, eta = trace.F, trace.d_norm_sq, trace.eta
    S = history_sums(D, K)
    violation = -D - (-0.25 * mu * F[1:] + eta * L * S)
    return _verdict("lemma2", violation, tol)


def check_combined_recursion(trace: RunTrace, mu: float, L: float, K: int,
                             tol: float) -> CheckResult:
    """The perturbed contraction obtained by merging the two lemmas.

    ``(1 + eta mu/16) F_{k+1} <= F_k - eta/4 ||d_k||^2 + 3 L eta^2 / 4 * S_k``.
    """
    _require_steps(trace)
    why = _lemma_applicability(trace, L, K)
    if why:
        return _na("combined_recursion", tol, why)
    F, D, eta = trace.F, trace.d_norm_sq, trace.eta
    S = history_sums(D, K)
    lhs = (1 + eta * mu / 16.0) * F[1:]
    rhs = F[:-1] - 0.25 * eta * D + 0.75 * L * eta * eta * S
    return _verdict("combined_recursion", lhs - rhs, tol)


@dataclass(frozen=True)
class ContractionSequenceSpec:
    """``alpha Z_{k+1} <= Z_k - beta Y_k + gamma sum_{j=k-A}^{k} Y_j`` (``Y_j = 0`` for ``j < 0``)."""

    alpha: float
    beta: float
    gamma: float
    A: int
    Z: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if not self.alpha > 1:
            raise InputError("alpha must exceed 1")
        if self.beta < 0 or self.gamma < 0:
            raise InputError("beta and gamma must be nonnegative")
        if self.A < 0 or int(self.A) != self.A:
            raise InputError("A must be a nonnegative integer")
        if len(self.Y) < len(self.Z) - 1:
            raise InputError("Y must cover every recursion step of Z")

    def condition_holds(self) -> bool:
        """``gamma (alpha^(A+1) - 1) <= beta (alpha - 1)``."""
        return self.gamma * (self.alpha ** (self.A + 1) - 1) <= self.beta * (self.alpha - 1)

    def _recursion_terms(self):
        Z = np.asarray(self.Z, dtype=float)
        T = Z.size - 1
        Y = np.asarray(self.Y, dtype=float)[:T]
        # direct window sums; differencing a cumulative sum loses small terms
        padded = np.concatenate([np.zeros(self.A), Y])
        window = np.lib.stride_tricks.sliding_window_view(padded, self.A + 1).sum(axis=1)
        return self.alpha * Z[1:], Z[:-1], self.beta * Y, self.gamma * window

    def recursion_violation(self) -> np.ndarray:
        lhs, z, by, gw = self._recursion_terms()
        return lhs - (z - by + gw)

    def recursion_rounding(self) -> np.ndarray:
        """Magnitude-scaled bound on the rounding error of :meth:`recursion_violation`."""
        lhs, z, by, gw = self._recursion_terms()
        return 8 * np.finfo(float).eps * (lhs + z + by + gw)


def check_lemma3_sequence(spec: ContractionSequenceSpec, tol: float) -> CheckResult:
    """Geometric decay ``Z_k <= alpha^(-k) Z_0`` of a perturbed contraction.

    The recursion itself is verified first; if it does not hold within
    ``tol`` (plus the rounding error of evaluating it) the verdict is
    ``precondition-violated``.  If the recursion holds but the gain condition
    does not, the verdict is ``condition-not-met``.
    """
    if np.any(np.asarray(spec.Z) < 0) or np.any(np.asarray(spec.Y) < 0):
        raise InputError("Z and Y must be nonnegative")
    rec = spec.recursion_violation() - spec.recursion_rounding()
    if rec.size and float(rec.max()) > tol:
        i = int(np.argmax(rec))
        return CheckResult("lemma3", PRECONDITION_VIOLATED, float(rec[i]), i, tol,
                           "recursion does not hold")
    if not spec.condition_holds():
        return CheckResult("lemma3", CONDITION_NOT_MET, math.nan, -1, tol,
                           "gamma(alpha^(A+1)-1) > beta(alpha-1)")
    Z = np.asarray(spec.Z, dtype=float)
    k = np.arange(Z.size)
    bound = np.exp(-k * math.log(spec.alpha)) * Z[0]
    return _verdict("lemma3", Z - bound, tol)


def contraction_spec_from_trace(trace: RunTrace, mu: float, L: float, K: int) -> ContractionSequenceSpec:
    """Map a PIAG trace onto the contraction lemma: ``Z = F``, ``Y = ||d||^2``, ``A = K``."""
    eta = trace.eta
    return ContractionSequenceSpec(alpha=1 + eta * mu / 16.0, beta=eta / 4.0,
                                   gamma=0.75 * L * eta * eta, A=K,
                                   Z=np.asarray(trace.F), Y=np.asarray(trace.d_norm_sq))


def is_exact_theorem1_step(eta: float, mu: float, L: float, K: int) -> bool:
    return abs(eta - theorem1_step_size(mu, L, K)) <= STEP_RTOL * eta


def check_theorem1(trace: RunTrace, mu: float, Q: float, K: int, eta: float,
                   tol: float) -> CheckReport:
    """Both linear-rate bounds of the main theorem along a trace.

    The ``(1 + eta mu/16)^(-k)`` bound applies to any step up to the
    theorem's limit; the ``(1 - 1/(49 Q (K+1)))^k`` bound only at the exact
    limit.
    """
    L = Q * mu
    limit = theorem1_step_size(mu, L, K)
    stale = trace.max_staleness.size and int(trace.max_staleness.max()) > K
    report = CheckReport()
    if eta > limit * (1 + STEP_RTOL) or stale:
        why = "trace staleness exceeds K" if stale else "step size above the theorem's limit"
        report.append(_na("theorem1_eq7", tol, why))
        report.append(_na("theorem1_eq8", tol, why))
        return report
    F = trace.F
    k = np.arange(F.size)
    report.append(_verdict("theorem1_eq7", F - rate_eq7(eta, mu, k) * F[0], tol))
    if is_exact_theorem1_step(eta, mu, L, K):
        report.append(_verdict("theorem1_eq8", F - rate_eq8(Q, K, k) * F[0], tol))
    else:
        report.append(_na("theorem1_eq8", tol, "step size is not the exact theorem value"))
    return report


def check_corollary1(trace: RunTrace, Q: float, K: int, epsilon: float,
                     mu: float | None = None) -> CheckResult:
    """First hitting time of ``F_k <= epsilon`` against the iteration budget.

    If ``mu`` is given the trace must use the exact theorem step size,
    otherwise the verdict is ``not-applicable``.
    """
    if mu is not None and not is_exact_theorem1_step(trace.eta, mu, Q * mu, K):
        return _na("corollary1", 0.0, "step size is not the exact theorem value")
    budget = corollary1_budget(Q, K, trace.F0, epsilon)
    hit = trace.hitting_time(epsilon)
    if hit is None:
        if trace.iterations < budget:
            return CheckResult("corollary1", INCONCLUSIVE, math.nan, -1, 0.0,
                               f"budget {budget} not exhausted")
        return CheckResult("corollary1", FAIL, float(trace.iterations - budget),
                           trace.iterations, 0.0, f"no hit within budget {budget}")
    return CheckResult("corollary1", PASS if hit <= budget else FAIL, float(hit - budget),
                       hit, 0.0, f"hit {hit} budget {budget}")


def check_limit_point(trace: RunTrace, x_star, mu: float, tol: float = 1e-6) -> CheckResult:
    """``||x_final - x*|| <= tol`` on runs that converged far enough to imply it.

    A run counts as converged when its final suboptimality certifies
    ``||x - x*|| <= tol`` through strong convexity, ``2 F / mu <= tol^2``.
    The measured distance to the reference ``x*`` is then an independent
    cross-check of the reference optimum against the trace.
    """
    F_last = float(trace.F[-1])
    if not 2.0 * F_last / mu <= tol * tol:
        return _na("limit_point", tol, "run not converged")
    err = float(np.linalg.norm(np.asarray(trace.x_final) - np.asarray(x_star)))
    return CheckResult("limit_point", PASS if err <= tol else FAIL, err, trace.iterations, tol)
