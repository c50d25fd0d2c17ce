"""Composite problems ``F(x) = (1/m) sum_i f_i(x) + r(x)`` and instance generators.

Two component families are supported, both with analytically known
gradient Lipschitz constants:

* ``quadratic``: ``f_i(x) = 0.5 * sum_j a_ij (x_j - c_ij)^2`` with ``a_ij >= 0``;
  ``L_i = max_j a_ij``.
* ``logistic``: ``f_i(x) = log(1 + exp(-b_i <a_i, x>)) + (ridge / 2) ||x||^2``
  with label ``b_i in {-1, +1}``; ``L_i = ridge + ||a_i||^2 / 4``.

Strong convexity always lives in ``f``; the regularizer only adds
non-smooth (or extra) structure.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .prox import Regularizer, eval_reg

COMPONENT_KINDS = ("quadratic", "logistic")


@dataclass(frozen=True, eq=False)
class ComponentFunction:
    """One smooth convex component ``f_i`` with Lipschitz constant ``lipschitz``."""

    kind: str
    params: dict
    lipschitz: float

    @classmethod
    def quadratic(cls, curvature, center) -> "ComponentFunction":
        a = np.array(curvature, dtype=float, ndmin=1)
        c = np.array(center, dtype=float, ndmin=1)
        if a.shape != c.shape or np.any(a < 0):
            raise InputError("quadratic needs matching shapes and nonnegative curvature")
        return cls("quadratic", {"curvature": a, "center": c}, float(a.max()))

    @classmethod
    def logistic(cls, row, label: float, ridge: float) -> "ComponentFunction":
        a = np.array(row, dtype=float, ndmin=1)
        if label not in (-1, 1) or ridge < 0:
            raise InputError("logistic needs label in {-1, +1} and ridge >= 0")
        return cls("logistic", {"row": a, "label": float(label), "ridge": float(ridge)},
                   float(ridge + a @ a / 4.0))

    @property
    def dim(self) -> int:
        p = self.params
        return p["curvature"].size if self.kind == "quadratic" else p["row"].size

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "quadratic":
            r = x - p["center"]
            return 0.5 * float(np.sum(p["curvature"] * r * r))
        z = -p["label"] * float(p["row"] @ x)
        return float(np.logaddexp(0.0, z)) + 0.5 * p["ridge"] * float(x @ x)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "quadratic":
            return p["curvature"] * (x - p["center"])
        b = p["label"]
        s = _sigmoid(-b * float(p["row"] @ x))
        return -b * s * p["row"] + p["ridge"] * x

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "lipschitz": self.lipschitz}
        for k, v in self.params.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ComponentFunction":
        if d["kind"] == "quadratic":
            comp = cls.quadratic(d["curvature"], d["center"])
        elif d["kind"] == "logistic":
            comp = cls.logistic(d["row"], d["label"], d["ridge"])
        else:
            raise InputError(f"unknown component kind {d['kind']!r}")
        if comp.lipschitz != d["lipschitz"]:
            raise InputError("stored Lipschitz constant does not match parameters")
        return comp


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(eq=False)
class CompositeProblem:
    """``F = f + r`` with ``f`` the mean of ``components``.

    ``mu`` is the strong-convexity modulus of ``f``; ``L`` is the mean of the
    component Lipschitz constants and ``Q = L / mu``.  Instances are treated
    as immutable once built.
    """

    components: list
    regularizer: Regularizer
    mu: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.components:
            raise InputError("need at least one component")
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise InputError("components disagree on dimension")
        self.n = dims.pop()
        self.m = len(self.components)
        if not self.mu > 0:
            raise InputError("mu must be positive")
        self.lipschitz = np.array([c.lipschitz for c in self.components])
        self.L = float(np.mean(self.lipschitz))
        if self.L < self.mu:
            raise InputError(f"L={self.L} is below mu={self.mu}; need Q >= 1")
        self.Q = self.L / self.mu
        self._stack()

    def _stack(self):
        quad = [i for i, c in enumerate(self.components) if c.kind == "quadratic"]
        logi = [i for i, c in enumerate(self.components) if c.kind == "logistic"]
        self._kind_index = np.array([0 if c.kind == "quadratic" else 1 for c in self.components])
        self._pos = np.zeros(self.m, dtype=int)
        self._pos[quad] = np.arange(len(quad))
        self._pos[logi] = np.arange(len(logi))
        self._quad = np.array(quad, dtype=int)
        self._logi = np.array(logi, dtype=int)
        comps = self.components
        self._A = np.array([comps[i].params["curvature"] for i in quad]).reshape(len(quad), self.n)
        self._C = np.array([comps[i].params["center"] for i in quad]).reshape(len(quad), self.n)
        self._X = np.array([comps[i].params["row"] for i in logi]).reshape(len(logi), self.n)
        self._b = np.array([comps[i].params["label"] for i in logi])
        self._ridge = np.array([comps[i].params["ridge"] for i in logi])
        self.homogeneous = len(quad) == self.m or len(logi) == self.m

    @property
    def is_diagonal_quadratic(self) -> bool:
        return len(self._quad) == self.m

    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise InputError(f"expected a vector of dimension {self.n}, got shape {x.shape}")
        return x

    def component_values(self, x) -> np.ndarray:
        x = self._check_x(x)
        out = np.empty(self.m)
        if self._quad.size:
            r = x - self._C
            out[self._quad] = 0.5 * np.sum(self._A * r * r, axis=1)
        if self._logi.size:
            z = -self._b * (self._X @ x)
            out[self._logi] = np.logaddexp(0.0, z) + 0.5 * self._ridge * float(x @ x)
        return out

    def component_grads(self, indices, x) -> np.ndarray:
        """Gradients of the listed components at ``x``, one row each."""
        idx = np.asarray(indices, dtype=int)
        if self._quad.size == self.m:
            return self._A[idx] * (x - self._C[idx])
        out = np.empty((idx.size, self.n))
        kinds = self._kind_index[idx]
        q = kinds == 0
        if np.any(q):
            p = self._pos[idx[q]]
            out[q] = self._A[p] * (x - self._C[p])
        if not np.all(q):
            p = self._pos[idx[~q]]
            b = self._b[p]
            s = _sigmoid(-b * (self._X[p] @ x))
            out[~q] = (-b * s)[:, None] * self._X[p] + self._ridge[p][:, None] * x
        return out

    def eval_f(self, x) -> float:
        """Mean of the component values at ``x``."""
        return float(np.mean(self.component_values(x)))

    def eval_F(self, x) -> float:
        return self.eval_f(x) + eval_reg(self.regularizer, x)

    def grad_f(self, x) -> np.ndarray:
        x = self._check_x(x)
        return self.component_grads(np.arange(self.m), x).mean(axis=0)

    def eval_grad_component(self, i: int, x) -> np.ndarray:
        """Gradient of component ``i`` (0-based) at ``x``."""
        if not 0 <= i < self.m:
            raise InputError(f"component index {i} out of range [0, {self.m})")
        x = self._check_x(x)
        return self.components[i].grad(x)

    # -- serialization -------------------------------------------------
    def to_text(self) -> str:
        """Canonical JSON description; identical instances give identical bytes."""
        kind = self.components[0].kind if self.homogeneous else "mixed"
        doc = {
            "kind": kind,
            "m": self.m,
            "n": self.n,
            "mu": self.mu,
            "L": self.L,
            "seed": self.meta.get("seed"),
            "regularizer": self.regularizer.to_dict(),
            "components": [c.to_dict() for c in self.components],
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CompositeProblem":
        doc = json.loads(text)
        comps = [ComponentFunction.from_dict(d) for d in doc["components"]]
        prob = cls(comps, Regularizer.from_dict(doc["regularizer"]), float(doc["mu"]),
                   meta={"seed": doc.get("seed")})
        if prob.L != doc["L"] or prob.m != doc["m"] or prob.n != doc["n"]:
            raise InputError("instance header disagrees with its components")
        return prob

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def eval_f(problem: CompositeProblem, x) -> float:
    return problem.eval_f(x)


def eval_grad_component(problem: CompositeProblem, i: int, x) -> np.ndarray:
    return problem.eval_grad_component(i, x)


def make_quadratic_instance(m: int, n: int, mu: float, L_target: float, seed: int,
                            regularizer: Regularizer | None = None) -> CompositeProblem:
    """Random diagonal-quadratic instance with mean Lipschitz constant ``L_target``.

    Component ``i`` has curvature ``w_i * s`` where the weights ``w`` have mean
    one and the profile ``s`` contains both ``L_target`` and ``mu``.  Hence
    ``L_i = w_i * L_target`` and the mean Hessian ``diag(s)`` has smallest
    eigenvalue ``mu`` and largest ``L_target``, so ``Q = L_target / mu``.
    With ``n == 1`` the only admissible choice is ``mu == L_target``.
    """
    if m < 1 or n < 1:
        raise InputError("m and n must be positive")
    if not 0 < mu <= L_target:
        raise InputError(f"need 0 < mu <= L_target, got mu={mu}, L_target={L_target}")
    if n == 1 and mu != L_target:
        raise InputError("a one-dimensional diagonal quadratic has Q = 1; set mu == L_target")
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 1.5, size=m) if m > 1 else np.ones(1)
    w = w / w.mean()
    s = np.empty(n)
    s[0] = L_target
    if n > 1:
        s[1] = mu
        s[2:] = rng.uniform(mu, L_target, size=n - 2)
        s = s[rng.permutation(n)]
    curv = w[:, None] * s[None, :]
    centers = rng.normal(size=(m, n))
    comps = [ComponentFunction.quadratic(curv[i], centers[i]) for i in range(m)]
    mu_eff = float(np.min(curv.mean(axis=0)))
    mu_eff = min(mu_eff, float(np.mean([c.lipschitz for c in comps])))
    return CompositeProblem(comps, regularizer or Regularizer(), mu_eff,
                            meta={"seed": seed, "generator": "quadratic"})


def make_logistic_instance(m: int, n: int, mu: float, seed: int,
                           L_target: float | None = None,
                           regularizer: Regularizer | None = None) -> CompositeProblem:
    """Ridge-regularized logistic instance, one data row per component.

    Rows are standard normal; if ``L_target`` is given they are rescaled so
    that ``mean_i ||a_i||^2 / 4 == L_target - mu`` (zero rows when equal).
    """
    if m < 1 or n < 1:
        raise InputError("m and n must be positive")
    if not mu > 0:
        raise InputError("mu must be positive")
    if L_target is not None and L_target < mu:
        raise InputError("L_target must be at least mu")
    rng = np.random.default_rng(seed)
    rows = rng.normal(size=(m, n))
    labels = rng.choice([-1.0, 1.0], size=m)
    if L_target is not None:
        excess = L_target - mu
        mean_sq = float(np.mean(np.sum(rows * rows, axis=1))) / 4.0
        rows = rows * np.sqrt(excess / mean_sq)
    comps = [ComponentFunction.logistic(rows[i], labels[i], mu) for i in range(m)]
    return CompositeProblem(comps, regularizer or Regularizer(), mu,
                            meta={"seed": seed, "generator": "logistic"})
