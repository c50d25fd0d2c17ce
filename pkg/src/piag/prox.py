"""Regularizers and their proximal operators.

The proximal map uses the scaling

    prox_r^eta(y) = argmin_x { 0.5 * ||x - y||^2 + eta * r(x) },

i.e. ``eta`` multiplies ``r`` and the quadratic term is unweighted.  Every
supported regularizer is separable and has a closed-form prox.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

REGULARIZER_KINDS = ("zero", "l1", "squared-l2", "box-indicator", "elastic-net")


@dataclass(frozen=True)
class Regularizer:
    """A proper, closed, convex, separable regularizer.

    ====================  =========================================
    kind                  r(x)
    ====================  =========================================
    ``zero``              0
    ``l1``                lam * ||x||_1
    ``squared-l2``        (lam / 2) * ||x||^2
    ``box-indicator``     0 if lower <= x_j <= upper for all j, else +inf
    ``elastic-net``       lam * ||x||_1 + (lam2 / 2) * ||x||^2
    ====================  =========================================
    """

    kind: str = "zero"
    lam: float = 0.0
    lam2: float = 0.0
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in REGULARIZER_KINDS:
            raise InputError(f"unknown regularizer kind {self.kind!r}")
        if not (self.lam >= 0 and self.lam2 >= 0):
            raise InputError("regularizer weights must be nonnegative")
        if self.kind == "box-indicator" and not self.lower <= self.upper:
            raise InputError(f"empty box [{self.lower}, {self.upper}]")

    def contains(self, x) -> bool:
        """True when ``x`` lies in the effective domain of r."""
        if self.kind != "box-indicator":
            return True
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": float(self.lam), "lam2": float(self.lam2),
                "lower": float(self.lower), "upper": float(self.upper)}

    @classmethod
    def from_dict(cls, d: dict) -> "Regularizer":
        return cls(kind=d["kind"], lam=float(d.get("lam", 0.0)),
                   lam2=float(d.get("lam2", 0.0)),
                   lower=float(d.get("lower", -math.inf)),
                   upper=float(d.get("upper", math.inf)))


@dataclass(frozen=True)
class ProxResult:
    """Output of :func:`prox`.

    ``point + eta * subgradient == y`` up to rounding, and ``subgradient``
    belongs to the subdifferential of r at ``point``.
    """

    point: np.ndarray
    subgradient: np.ndarray


def soft_threshold(y, t):
    return np.sign(y) * np.maximum(np.abs(y) - t, 0.0)


def eval_reg(reg: Regularizer, x) -> float:
    """Value of r at ``x``; ``inf`` outside a box-indicator's box."""
    x = np.asarray(x, dtype=float)
    kind = reg.kind
    if kind == "zero":
        return 0.0
    if kind == "l1":
        return reg.lam * float(np.sum(np.abs(x)))
    if kind == "squared-l2":
        return 0.5 * reg.lam * float(np.sum(x * x))
    if kind == "box-indicator":
        return 0.0 if reg.contains(x) else math.inf
    # elastic-net
    sq = float(np.sum(x * x))
    return reg.lam * float(np.sum(np.abs(x))) + 0.5 * reg.lam2 * sq


def prox_point(reg: Regularizer, eta, y: np.ndarray) -> np.ndarray:
    """Closed-form prox without argument validation (hot-loop version).

    ``eta`` may be a scalar or an array broadcastable against ``y``.
    """
    kind = reg.kind
    if kind == "zero":
        return np.array(y, dtype=float, copy=True)
    if kind == "l1":
        return soft_threshold(y, eta * reg.lam)
    if kind == "squared-l2":
        return y / (1.0 + eta * reg.lam)
    if kind == "box-indicator":
        return np.clip(y, reg.lower, reg.upper)
    return soft_threshold(y, eta * reg.lam) / (1.0 + eta * reg.lam2)


def prox(reg: Regularizer, eta: float, y) -> ProxResult:
    """Proximal map of ``eta * r`` at ``y`` together with the implied subgradient.

    The subgradient is ``(y - point) / eta``, the unique element of the
    subdifferential at ``point`` satisfying the prox optimality condition.

    Raises
    ------
    InputError
        If ``eta`` is not a positive finite number or ``y`` has non-finite
        entries.
    """
    if not (np.isfinite(eta) and eta > 0):
        raise InputError(f"step size must be positive and finite, got {eta!r}")
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InputError("prox input must be finite")
    point = prox_point(reg, eta, y)
    return ProxResult(point=point, subgradient=(y - point) / eta)
