"""Deterministic mean-field model dQ/dt = D(F(Q) - Q): trajectory integration,
weighted-norm Lyapunov series, and exponential decay-bound certification."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ConfigurationError, InadmissiblePError, NumericError, ValidationError
from .mdp import MdpModel, SamplingDistribution, build_sampling_distribution
from .operators import (
    OperatorKind,
    WeightedNorm,
    bellman_F,
    weighted_norm_rows,
)

P_NORM_CONTRACTION = "p_norm_contraction"
INF_NORM_CONTRACTION = "inf_norm_contraction"

DIVERGENCE_LIMIT = 1e12
DEFAULT_TOL_INT = 1e-6


@dataclass
class OdeSystem:
    """A flow D(F(x) - x) driven by a contraction F with diagonal gain D.

    ``alpha`` is the contraction modulus claimed for F; ``regime`` records the
    norm in which the claim holds. ``bellman_limit`` is the positively
    homogeneous map lim_c F(c x)/c that drives the large-state limit field.
    """

    n: int
    bellman: Callable[[np.ndarray], np.ndarray]
    d_diag: np.ndarray
    alpha: float
    regime: str
    bellman_limit: Callable[[np.ndarray], np.ndarray]
    fixed_point: np.ndarray | None = None

    def __post_init__(self):
        self.d_diag = np.asarray(self.d_diag, dtype=np.float64)
        if self.d_diag.shape != (self.n,):
            raise ValidationError(f"d_diag shape {self.d_diag.shape} != ({self.n},)")
        if not np.all(self.d_diag > 0.0):
            raise ValidationError("all diagonal gains must be strictly positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"contraction modulus must lie in (0, 1), got {self.alpha}")
        if self.regime not in (P_NORM_CONTRACTION, INF_NORM_CONTRACTION):
            raise ValidationError(f"unknown norm regime {self.regime!r}")

    @property
    def weights(self) -> np.ndarray:
        """Lyapunov weights w_i = 1/d_i."""
        return 1.0 / self.d_diag


def mdp_ode_system(
    mdp: MdpModel, kind: OperatorKind, dist: SamplingDistribution | None = None
) -> OdeSystem:
    """Mean-field system of the stochastic update on the given MDP."""
    if dist is None:
        dist = build_sampling_distribution(mdp)
    gamma, p_flat = mdp.gamma, mdp.p_flat
    S, A = mdp.n_states, mdp.n_actions

    def limit_map(q: np.ndarray) -> np.ndarray:
        rows = np.asarray(q, dtype=np.float64).reshape(A, S).T
        return gamma * (p_flat @ rows.max(axis=1))

    return OdeSystem(
        n=mdp.n_pairs,
        bellman=lambda q: bellman_F(mdp, kind, q),
        d_diag=dist.d_matrix_diag,
        alpha=mdp.gamma,
        regime=INF_NORM_CONTRACTION,
        bellman_limit=limit_map,
    )


def synthetic_affine_system(
    alpha: float,
    diag_a: np.ndarray,
    b: np.ndarray,
    d_diag: np.ndarray,
) -> OdeSystem:
    """Affine system F(x) = alpha * diag_a * x + b, contractive in every p-norm.

    The fixed point is solved directly and stored on the returned system.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    a = np.asarray(diag_a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = np.asarray(d_diag, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape or a.shape != d.shape:
        raise ValueError("diag_a, b, and d_diag must be vectors of one common length")
    if np.any(np.abs(a) > 1.0):
        raise ValueError("diag_a entries must lie in [-1, 1]")
    fixed_point = b / (1.0 - alpha * a)
    return OdeSystem(
        n=a.size,
        bellman=lambda x: alpha * a * x + b,
        d_diag=d,
        alpha=alpha,
        regime=P_NORM_CONTRACTION,
        bellman_limit=lambda x: alpha * a * x,
        fixed_point=fixed_point,
    )


def vector_field(system: OdeSystem, q: np.ndarray) -> np.ndarray:
    """Right-hand side D(F(q) - q)."""
    out = system.d_diag * (system.bellman(q) - q)
    if not np.all(np.isfinite(out)):
        raise NumericError("vector field produced non-finite values")
    return out


def f_infinity_field(system: OdeSystem, q: np.ndarray) -> np.ndarray:
    """Scaling-limit field lim_c f(c q)/c, evaluated directly via the limit map."""
    return system.d_diag * (system.bellman_limit(q) - q)


@dataclass
class Trajectory:
    times: np.ndarray   # (m,), uniformly spaced, starting at 0
    states: np.ndarray  # (m, n)
    step: float         # integrator step h
    scheme: str
    stride: int
    d_diag: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.shape[0] != self.times.size:
            raise ValidationError("times and states disagree on sample count")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValidationError("times must be strictly increasing")


def integrate(
    system: OdeSystem,
    q0: np.ndarray,
    t_end: float,
    h: float = 1e-3,
    scheme: str = "rk4",
    stride: int = 1,
) -> Trajectory:
    """Fixed-step integration of the flow, storing every ``stride``-th state.

    A state blowing past 1e12 in infinity norm raises: the true flow
    contracts, so divergence always signals a configuration bug.
    """
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if not h > 0.0:
        raise ValueError("step h must be positive")
    if t_end < h:
        raise ValueError("t_end must be at least one step")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n_steps = int(round(t_end / h))
    if abs(n_steps * h - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a whole number of steps of h={h}")
    if n_steps % stride != 0:
        raise ValueError(f"stride {stride} does not divide the step count {n_steps}")
    q = np.array(q0, dtype=np.float64)
    if q.shape != (system.n,):
        raise ValueError(f"initial state shape {q.shape} != ({system.n},)")
    m = n_steps // stride
    states = np.empty((m + 1, system.n))
    states[0] = q
    d = system.d_diag
    F = system.bellman
    for k in range(1, n_steps + 1):
        if scheme == "euler":
            q = q + h * (d * (F(q) - q))
        else:
            k1 = d * (F(q) - q)
            q2 = q + (0.5 * h) * k1
            k2 = d * (F(q2) - q2)
            q3 = q + (0.5 * h) * k2
            k3 = d * (F(q3) - q3)
            q4 = q + h * k3
            k4 = d * (F(q4) - q4)
            q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % stride == 0:
            states[k // stride] = q
            if float(np.max(np.abs(q))) > DIVERGENCE_LIMIT:
                raise NumericError(f"trajectory diverged at t={k * h:.6g}")
    times = np.arange(m + 1) * (stride * h)
    return Trajectory(times=times, states=states, step=h, scheme=scheme,
                      stride=stride, d_diag=d.copy())


def _check_weights(traj: Trajectory, norm: WeightedNorm) -> None:
    expected = 1.0 / traj.d_diag
    if norm.weights.shape != expected.shape or not np.allclose(
        norm.weights, expected, rtol=1e-9, atol=0.0
    ):
        raise ConfigurationError(
            "norm weights must equal the reciprocal diagonal gains of the system"
        )


def lyapunov_series(traj: Trajectory, q_star: np.ndarray, norm: WeightedNorm) -> np.ndarray:
    """Weighted-norm distance from the fixed point at every stored time."""
    _check_weights(traj, norm)
    return weighted_norm_rows(traj.states - np.asarray(q_star)[None, :], norm)


def choose_even_p(n: int, alpha: float) -> int:
    """Smallest even p making alpha * n^(1/p) contractive (and at least 2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    threshold = math.ceil(math.log(n) / math.log(1.0 / alpha))
    p = threshold + 1 if (threshold + 1) % 2 == 0 else threshold + 2
    p = max(p, 2)
    while alpha * n ** (1.0 / p) >= 1.0:
        p += 2
    return p


@dataclass
class DecayCertificate:
    """Per-trajectory comparison of Lyapunov values against the exponential envelope."""

    p: int
    w_min: float
    w_max: float
    rate: float
    times: np.ndarray
    observed_series: np.ndarray
    bound_series: np.ndarray
    observed_inf: np.ndarray | None
    bound_inf: np.ndarray | None
    max_violation: float
    passed: bool
    tol_int: float
    regime: str

    def to_dict(self) -> dict:
        doc = {
            "p": self.p,
            "rate": self.rate,
            "w_min": self.w_min,
            "w_max": self.w_max,
            "max_violation": self.max_violation,
            "passed": self.passed,
            "tol_int": self.tol_int,
            "regime": self.regime,
            "samples": [
                {"t": float(t), "observed": float(o), "bound": float(b)}
                for t, o, b in zip(self.times, self.observed_series, self.bound_series)
            ],
        }
        if self.observed_inf is not None:
            doc["samples_inf"] = [
                {"t": float(t), "observed": float(o), "bound": float(b)}
                for t, o, b in zip(self.times, self.observed_inf, self.bound_inf)
            ]
        return doc


def _envelope_violation(observed: np.ndarray, bound: np.ndarray) -> float:
    # relative excess over the envelope; an absolute floor keeps the
    # degenerate started-at-equilibrium case (all-zero envelope) well defined
    atol = 1e-12 * (1.0 + float(bound[0]))
    return float(np.max(observed / (bound + atol) - 1.0))


def certify_decay(
    traj: Trajectory,
    q_star: np.ndarray,
    system: OdeSystem,
    p: int | str = "auto",
    tol_int: float = DEFAULT_TOL_INT,
) -> DecayCertificate:
    """Check the trajectory against its theoretical exponential decay envelope.

    In the infinity-norm regime the even exponent p must satisfy
    alpha * n^(1/p) < 1 (chosen automatically when ``p='auto'``) and the
    certificate additionally checks the infinity-norm envelope with prefactor
    (n w_max / w_min)^(1/p). In the p-norm regime the rate uses the plain
    modulus and any even p is admissible.
    """
    n, alpha = system.n, system.alpha
    w = system.weights
    w_min, w_max = float(w.min()), float(w.max())
    inf_regime = system.regime == INF_NORM_CONTRACTION
    if p == "auto":
        p_val = choose_even_p(n, alpha) if inf_regime else 2
    else:
        p_val = int(p)
        if p_val < 2 or p_val % 2 != 0:
            raise ValueError(f"p must be an even integer >= 2, got {p}")
        if inf_regime and alpha * n ** (1.0 / p_val) >= 1.0:
            min_p = choose_even_p(n, alpha)
            raise InadmissiblePError(
                f"alpha * n^(1/p) = {alpha * n ** (1.0 / p_val):.6f} >= 1 at p={p_val}; "
                f"minimum admissible even p: {min_p}",
                min_even_p=min_p,
            )
    denom = w_max ** (1.0 / p_val) * w_min ** ((p_val - 1.0) / p_val)
    if inf_regime:
        rate = (alpha * n ** (1.0 / p_val) - 1.0) / denom
    else:
        rate = (alpha - 1.0) / denom

    norm = WeightedNorm(p=p_val, weights=w)
    observed = lyapunov_series(traj, q_star, norm)
    bound = observed[0] * np.exp(rate * traj.times)
    max_violation = _envelope_violation(observed, bound)

    observed_inf = bound_inf = None
    if inf_regime:
        observed_inf = np.max(np.abs(traj.states - np.asarray(q_star)[None, :]), axis=1)
        prefactor = (n * w_max / w_min) ** (1.0 / p_val)
        inf_rate = (alpha * n ** (1.0 / p_val) - 1.0) / w_min
        bound_inf = observed_inf[0] * prefactor * np.exp(inf_rate * traj.times)
        max_violation = max(max_violation, _envelope_violation(observed_inf, bound_inf))

    max_violation = max(0.0, max_violation)
    return DecayCertificate(
        p=p_val,
        w_min=w_min,
        w_max=w_max,
        rate=rate,
        times=traj.times,
        observed_series=observed,
        bound_series=bound,
        observed_inf=observed_inf,
        bound_inf=bound_inf,
        max_violation=max_violation,
        passed=max_violation <= tol_int,
        tol_int=tol_int,
        regime=system.regime,
    )


def save_trajectory_csv(traj: Trajectory, path) -> None:
    """Write the stored samples as ``t,q_0,...,q_{n-1}`` rows."""
    n = traj.states.shape[1]
    header = "t," + ",".join(f"q_{i}" for i in range(n))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for t, row in zip(traj.times, traj.states):
            fh.write(",".join(repr(float(v)) for v in (t, *row)) + "\n")
