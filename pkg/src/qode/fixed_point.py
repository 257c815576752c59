"""Fixed points of the Bellman maps, contraction-modulus estimation,
greedy policies, and a brute-force enumeration oracle for tiny MDPs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import CapacityError, NumericError
from .mdp import MdpModel
from .operators import OperatorKind, bellman_F, bellman_F_batch, gather_rows

BRUTE_FORCE_POLICY_CAP = 10**6
CONTRACTIVE_KINDS = ("max", "lse", "mellowmax")


@dataclass
class FixedPointResult:
    q_star: np.ndarray
    iterations: int
    residual: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "q_star": self.q_star.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
        }


def solve_fixed_point(
    mdp: MdpModel,
    kind: OperatorKind,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> FixedPointResult:
    """Picard iteration Q <- F(Q) from Q = 0.

    Stops once the residual ||F(Q) - Q||_inf falls below ``tol * (1 - gamma)``,
    which bounds the true error ||Q - Q*||_inf by ``tol`` for the three
    contractive operators. Boltzmann is solved best-effort: a run that does
    not settle within ``max_iter`` returns ``converged=False`` rather than
    raising, since no fixed point is guaranteed to exist at fixed temperature.
    """
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    exit_tol = tol * (1.0 - mdp.gamma)
    q = np.zeros(mdp.n_pairs)
    iterations = 0
    converged = False
    residual = np.inf
    for _ in range(max_iter):
        fq = bellman_F(mdp, kind, q)
        iterations += 1
        if not np.all(np.isfinite(fq)):
            raise NumericError(
                f"Picard iteration produced non-finite values at step {iterations}"
            )
        residual = float(np.max(np.abs(fq - q)))
        q = fq
        if residual <= exit_tol:
            converged = True
            break
    # report the residual of the iterate actually returned
    residual = float(np.max(np.abs(bellman_F(mdp, kind, q) - q)))
    return FixedPointResult(q_star=q, iterations=iterations, residual=residual, converged=converged)


def contraction_modulus_estimate(
    mdp: MdpModel,
    kind: OperatorKind,
    trials: int,
    rng: np.random.Generator,
    scale: float = 10.0,
) -> float:
    """Largest observed ratio ||F(x)-F(y)||_inf / ||x-y||_inf over random pairs.

    For max/lse/mellowmax the estimate never exceeds gamma (up to rounding);
    Boltzmann may legitimately exceed it and the value is simply reported.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    worst = 0.0
    batch = 2048
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        x = rng.uniform(-scale, scale, size=(m, mdp.n_pairs))
        y = rng.uniform(-scale, scale, size=(m, mdp.n_pairs))
        num = np.max(np.abs(bellman_F_batch(mdp, kind, x) - bellman_F_batch(mdp, kind, y)), axis=1)
        den = np.max(np.abs(x - y), axis=1)
        ok = den > 0.0
        if np.any(ok):
            worst = max(worst, float((num[ok] / den[ok]).max()))
        done += m
    return worst


def greedy_policy(q: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """Per-state argmax action; ties break toward the smallest action index."""
    return gather_rows(q, n_states, n_actions).argmax(axis=1)


def policy_q_values(mdp: MdpModel, policy: np.ndarray) -> np.ndarray:
    """Exact Q-table of a deterministic policy via a direct linear solve."""
    S = mdp.n_states
    idx = np.arange(S)
    p_pi = mdp.transition[idx, policy]          # (S, S)
    r_pi = mdp.expected_reward[idx, policy]     # (S,)
    v = np.linalg.solve(np.eye(S) - mdp.gamma * p_pi, r_pi)
    q_sa = mdp.expected_reward + mdp.gamma * (mdp.transition @ v)
    return q_sa.T.ravel()


def brute_force_optimal(mdp: MdpModel) -> tuple[np.ndarray, np.ndarray]:
    """Exact optimal policy and Q-function by enumerating all deterministic policies.

    Each candidate policy is evaluated by solving its linear Bellman system
    by direct elimination; the maximizer (first in lexicographic order on
    ties) is returned. Limited to |A|^|S| <= 1e6 policies.
    """
    S, A = mdp.n_states, mdp.n_actions
    if A**S > BRUTE_FORCE_POLICY_CAP:
        raise CapacityError(
            f"|A|^|S| = {A}**{S} exceeds the enumeration cap of {BRUTE_FORCE_POLICY_CAP}"
        )
    idx = np.arange(S)
    eye = np.eye(S)
    best_policy = None
    best_v = None
    best_score = -np.inf
    for pol in itertools.product(range(A), repeat=S):
        pol_arr = np.asarray(pol)
        p_pi = mdp.transition[idx, pol_arr]
        r_pi = mdp.expected_reward[idx, pol_arr]
        v = np.linalg.solve(eye - mdp.gamma * p_pi, r_pi)
        score = float(v.sum())
        if score > best_score:
            best_score = score
            best_policy = pol_arr
            best_v = v
    q_sa = mdp.expected_reward + mdp.gamma * (mdp.transition @ best_v)
    return best_policy, q_sa.T.ravel()
