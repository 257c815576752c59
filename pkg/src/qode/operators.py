"""Scalar max/log-sum-exp/mellowmax/Boltzmann operators, the stacked map H,
the Bellman map F, and weighted p-norms.

All exponential-family evaluations subtract the row maximum before
exponentiating, so nothing overflows for inputs up to ~1e300 in magnitude;
the operators are shift-covariant, which makes the trick exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .mdp import MdpModel

OPERATOR_NAMES = ("max", "lse", "mellowmax", "boltzmann")


@dataclass(frozen=True)
class OperatorKind:
    """One of the four operators, with a temperature for the smooth variants."""

    name: str
    temperature: float = 1.0

    def __post_init__(self):
        if self.name not in OPERATOR_NAMES:
            raise ValueError(f"unknown operator {self.name!r}; expected one of {OPERATOR_NAMES}")
        if self.name != "max" and not self.temperature > 0.0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def is_smooth(self) -> bool:
        return self.name != "max"


MAX_OP = OperatorKind("max")


def lse(temperature: float) -> OperatorKind:
    return OperatorKind("lse", temperature)


def mellowmax(temperature: float) -> OperatorKind:
    return OperatorKind("mellowmax", temperature)


def boltzmann(temperature: float) -> OperatorKind:
    return OperatorKind("boltzmann", temperature)


def smooth_max_rows(kind: OperatorKind, x: np.ndarray) -> np.ndarray:
    """Apply the operator along the last axis of ``x`` (vectorized)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 0:
        raise ValueError("operator input must have at least one entry")
    if not np.all(np.isfinite(x)):
        raise ValueError("operator input contains non-finite entries")
    m = x.max(axis=-1)
    if kind.name == "max":
        return m
    lam = kind.temperature
    e = np.exp(lam * (x - m[..., None]))
    if kind.name == "lse":
        return m + np.log(e.sum(axis=-1)) / lam
    if kind.name == "mellowmax":
        return m + (np.log(e.sum(axis=-1)) - math.log(x.shape[-1])) / lam
    return (x * e).sum(axis=-1) / e.sum(axis=-1)


def smooth_max(kind: OperatorKind, x: Iterable[float]) -> float:
    """h_max, h_lse, h_mellowmax, or h_boltzmann of a single vector."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    return float(smooth_max_rows(kind, x))


def gather_rows(q: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """View of a flat table as the (S, A) matrix with rows Q(s, .)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (n_states * n_actions,):
        raise ValueError(f"flat table has shape {q.shape}, expected ({n_states * n_actions},)")
    return q.reshape(n_actions, n_states).T


def apply_H(kind: OperatorKind, q: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """Stacked operator: component s is the chosen h applied to Q(s, .)."""
    return smooth_max_rows(kind, gather_rows(q, n_states, n_actions))


def bellman_F(mdp: MdpModel, kind: OperatorKind, q: np.ndarray) -> np.ndarray:
    """Bellman map F(Q) = R + gamma * P H(Q) in the flat layout."""
    h = apply_H(kind, q, mdp.n_states, mdp.n_actions)
    return mdp.r_flat + mdp.gamma * (mdp.p_flat @ h)


def bellman_F_batch(mdp: MdpModel, kind: OperatorKind, qs: np.ndarray) -> np.ndarray:
    """Bellman map applied to each row of a (m, S*A) batch of flat tables."""
    qs = np.asarray(qs, dtype=np.float64)
    m = qs.shape[0]
    rows = qs.reshape(m, mdp.n_actions, mdp.n_states).transpose(0, 2, 1)
    h = smooth_max_rows(kind, rows)  # (m, S)
    return mdp.r_flat[None, :] + mdp.gamma * (h @ mdp.p_flat.T)


@dataclass(frozen=True)
class WeightedNorm:
    """A (p, weights) pair: p is an even integer >= 2 or math.inf."""

    p: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if not np.all(w > 0.0):
            raise ValueError("all weights must be strictly positive")
        if not math.isinf(self.p):
            p = self.p
            if p != int(p) or int(p) < 2 or int(p) % 2 != 0:
                raise ValueError(f"finite p must be an even integer >= 2, got {p}")
        object.__setattr__(self, "weights", w)

    @property
    def w_min(self) -> float:
        return float(self.weights.min())

    @property
    def w_max(self) -> float:
        return float(self.weights.max())


def weighted_norm(x: np.ndarray, norm: WeightedNorm) -> float:
    """Weighted p-norm (sum_i w_i |x_i|^p)^(1/p), or max_i w_i |x_i| for p = inf."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != norm.weights.shape:
        raise ValueError(f"vector shape {x.shape} != weights shape {norm.weights.shape}")
    ax = np.abs(x)
    if math.isinf(norm.p):
        return float((norm.weights * ax).max())
    scale = float(ax.max())
    if scale == 0.0:
        return 0.0
    return scale * float((norm.weights * (ax / scale) ** norm.p).sum()) ** (1.0 / norm.p)


def weighted_norm_rows(xs: np.ndarray, norm: WeightedNorm) -> np.ndarray:
    """Weighted norm of each row of a 2-D array."""
    xs = np.asarray(xs, dtype=np.float64)
    ax = np.abs(xs)
    if math.isinf(norm.p):
        return (norm.weights[None, :] * ax).max(axis=1)
    scale = ax.max(axis=1)
    safe = np.where(scale == 0.0, 1.0, scale)
    s = ((ax / safe[:, None]) ** norm.p @ norm.weights) ** (1.0 / norm.p)
    return np.where(scale == 0.0, 0.0, scale * s)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack}


def check_operator_bounds(x: np.ndarray, lam: float) -> list[BoundCheck]:
    """Evaluate the four sandwich chains tying the smooth operators to the max.

    Returns one record per inequality; a slack below -1e-10 signals a
    property violation (the caller decides whether to fail).
    """
    if not lam > 0.0:
        raise ValueError(f"temperature must be positive, got {lam}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    n = x.size
    gap = math.log(n) / lam
    h_max = smooth_max(MAX_OP, x)
    h_lse = smooth_max(lse(lam), x)
    h_mm = smooth_max(mellowmax(lam), x)
    h_bz = smooth_max(boltzmann(lam), x)
    return [
        BoundCheck("max<=lse", h_max, h_lse),
        BoundCheck("lse<=max+ln(n)/lam", h_lse, h_max + gap),
        BoundCheck("max-ln(n)/lam<=mellowmax", h_max - gap, h_mm),
        BoundCheck("mellowmax<=max", h_mm, h_max),
        BoundCheck("max-ln(n)/lam<=boltzmann", h_max - gap, h_bz),
        BoundCheck("boltzmann<=max", h_bz, h_max),
        BoundCheck("boltzmann<=lse", h_bz, h_lse),
        BoundCheck("lse<=boltzmann+ln(n)/lam", h_lse, h_bz + gap),
    ]


def scaling_limit_error(kind: OperatorKind, x: np.ndarray, c: float) -> float:
    """Distance |h(c x)/c - h_max(x)| of the scaled operator from its limit."""
    if not c > 0.0:
        raise ValueError(f"scale must be positive, got {c}")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if kind.name == "max":
        # max is positively homogeneous, so the limit is attained identically
        return 0.0
    return abs(smooth_max(kind, c * x) / c - smooth_max(MAX_OP, x))
