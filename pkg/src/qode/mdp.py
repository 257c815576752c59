"""Finite MDP representation, validation, random generation, and i.i.d. transition sampling.

All flat vectors over state-action pairs use the Kronecker layout
``flat = a * n_states + s`` (see :func:`flat_index`); every other module
shares this single convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .exceptions import GenerationError, NonErgodicChainError, ValidationError

STOCHASTIC_TOL = 1e-12
MIN_JOINT_PROB = 1e-15
POWER_ITER_TOL = 1e-13
POWER_ITER_MAX_SWEEPS = 10**6


def flat_index(s: int, a: int, n_states: int) -> int:
    """Flat position of the pair (s, a) in the canonical a*|S|+s layout."""
    if not 0 <= s < n_states:
        raise ValueError(f"state index {s} out of range [0, {n_states})")
    if a < 0:
        raise ValueError(f"action index {a} must be nonnegative")
    return a * n_states + s


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    arr.setflags(write=False)
    return arr


def _check_rows_stochastic(rows: np.ndarray, what: str) -> np.ndarray:
    """Validate and renormalize a stack of probability rows (last axis)."""
    if np.any(rows < 0.0):
        idx = np.unravel_index(int(np.argmin(rows)), rows.shape)
        raise ValidationError(f"{what} has a negative entry at {idx}: {rows[idx]}")
    sums = rows.sum(axis=-1)
    bad = np.abs(sums - 1.0) > STOCHASTIC_TOL
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(np.abs(sums - 1.0))), sums.shape)
        raise ValidationError(
            f"{what} row {idx} sums to {sums[idx]!r}, outside 1 +/- {STOCHASTIC_TOL}"
        )
    # renormalize only rows that actually deviate: rescaling sub-ulp noise
    # would break construction idempotence and exact file round-trips
    needs = np.abs(sums - 1.0) > 1e-15
    if np.any(needs):
        rows = rows.copy()
        rows[needs] /= sums[needs][..., None]
    return rows


@dataclass
class MdpModel:
    """Finite discounted MDP with a deterministic reward and a fixed behavior policy.

    Attributes
    ----------
    n_states, n_actions : int
        Sizes of the state and action spaces (indices are zero-based).
    gamma : float
        Discount factor in [0, 1).
    transition : ndarray, shape (S, A, S)
        ``transition[s, a, s2] = P(s2 | s, a)``; rows sum to one.
    reward : ndarray, shape (S, A, S)
        Deterministic reward ``r(s, a, s2)``.
    behavior : ndarray, shape (S, A)
        Behavior policy ``beta(a | s)``; rows sum to one.
    stationary_override : ndarray or None
        Optional user-supplied stationary state distribution; when present it
        is used instead of the power-iteration solution.

    Instances are immutable after construction (arrays are read-only) and
    safe to share across threads.
    """

    n_states: int
    n_actions: int
    gamma: float
    transition: np.ndarray
    reward: np.ndarray
    behavior: np.ndarray
    stationary_override: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ValidationError("n_states and n_actions must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in [0, 1), got {self.gamma}")
        S, A = self.n_states, self.n_actions
        t = np.asarray(self.transition, dtype=np.float64)
        r = np.asarray(self.reward, dtype=np.float64)
        b = np.asarray(self.behavior, dtype=np.float64)
        if t.shape != (S, A, S):
            raise ValidationError(f"transition shape {t.shape} != {(S, A, S)}")
        if r.shape != (S, A, S):
            raise ValidationError(f"reward shape {r.shape} != {(S, A, S)}")
        if b.shape != (S, A):
            raise ValidationError(f"behavior shape {b.shape} != {(S, A)}")
        if not np.all(np.isfinite(r)):
            raise ValidationError("reward contains non-finite entries")
        self.transition = _readonly(_check_rows_stochastic(t, "transition"))
        self.behavior = _readonly(_check_rows_stochastic(b, "behavior"))
        self.reward = _readonly(r)
        if self.stationary_override is not None:
            p = np.asarray(self.stationary_override, dtype=np.float64)
            if p.shape != (S,):
                raise ValidationError(f"stationary shape {p.shape} != {(S,)}")
            self.stationary_override = _readonly(_check_rows_stochastic(p, "stationary"))

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """R(s, a) = sum_s2 P(s2|s,a) r(s,a,s2), shape (S, A)."""
        return _readonly(np.einsum("sat,sat->sa", self.transition, self.reward))

    @cached_property
    def p_flat(self) -> np.ndarray:
        """Transition kernel as the (S*A, S) matrix in the flat layout."""
        A, S = self.n_actions, self.n_states
        return _readonly(self.transition.transpose(1, 0, 2).reshape(A * S, S))

    @cached_property
    def r_flat(self) -> np.ndarray:
        """Expected reward as a flat vector."""
        return _readonly(self.expected_reward.T.ravel())

    @cached_property
    def _cum_behavior(self) -> np.ndarray:
        c = np.cumsum(self.behavior, axis=1)
        c[:, -1] = 1.0
        return _readonly(c)

    @cached_property
    def _cum_transition(self) -> np.ndarray:
        c = np.cumsum(self.transition, axis=2)
        c[:, :, -1] = 1.0
        return _readonly(c)


@dataclass
class SamplingDistribution:
    """Stationary state distribution and the induced joint d(s,a) = p(s) beta(a|s)."""

    stationary: np.ndarray     # (S,)
    joint: np.ndarray          # (S, A)
    d_matrix_diag: np.ndarray  # (S*A,) in the flat layout

    def __post_init__(self):
        self.stationary = _readonly(self.stationary)
        self.joint = _readonly(self.joint)
        self.d_matrix_diag = _readonly(self.d_matrix_diag)

    @cached_property
    def _cum_stationary(self) -> np.ndarray:
        c = np.cumsum(self.stationary)
        c[-1] = 1.0
        return _readonly(c)


class TransitionSample(NamedTuple):
    s: int
    a: int
    s_next: int
    r: float


def behavior_chain(mdp: MdpModel) -> np.ndarray:
    """State chain induced by the behavior policy: P_beta(s2|s) = sum_a beta(a|s) P(s2|s,a)."""
    return np.einsum("sa,sat->st", mdp.behavior, mdp.transition)


def build_sampling_distribution(mdp: MdpModel) -> SamplingDistribution:
    """Construct the i.i.d. sampling distribution for the behavior policy.

    The stationary distribution is found by power iteration on the induced
    state chain (or taken from ``mdp.stationary_override``); the joint
    distribution must be strictly positive on every pair, otherwise the
    instance fails sufficient-exploration validation.
    """
    p_beta = behavior_chain(mdp)
    if mdp.stationary_override is not None:
        p = mdp.stationary_override.copy()
        drift = float(np.max(np.abs(p @ p_beta - p)))
        if drift > 1e-10:
            raise ValidationError(
                f"supplied stationary distribution is not invariant (drift {drift:.3e})"
            )
    else:
        p = np.full(mdp.n_states, 1.0 / mdp.n_states)
        for _ in range(POWER_ITER_MAX_SWEEPS):
            p_next = p @ p_beta
            p_next /= p_next.sum()
            if float(np.max(np.abs(p_next - p))) < POWER_ITER_TOL:
                p = p_next
                break
            p = p_next
        else:
            raise NonErgodicChainError(
                "power iteration on the behavior chain did not converge "
                f"in {POWER_ITER_MAX_SWEEPS} sweeps (chain may be periodic or reducible)"
            )
    joint = p[:, None] * mdp.behavior
    if np.min(joint) <= MIN_JOINT_PROB:
        s, a = np.unravel_index(int(np.argmin(joint)), joint.shape)
        raise ValidationError(
            f"joint sampling probability d(s={s}, a={a}) = {joint[s, a]:.3e} "
            f"is not strictly positive; every pair must have d(s,a) > {MIN_JOINT_PROB}"
        )
    return SamplingDistribution(
        stationary=p, joint=joint, d_matrix_diag=joint.T.ravel()
    )


def sample_transition(
    mdp: MdpModel, dist: SamplingDistribution, rng: np.random.Generator
) -> TransitionSample:
    """Draw one i.i.d. transition: s ~ p, a ~ beta(.|s), s2 ~ P(.|s,a)."""
    u = rng.random(3)
    s = min(int(np.searchsorted(dist._cum_stationary, u[0], side="right")), mdp.n_states - 1)
    a = min(int(np.searchsorted(mdp._cum_behavior[s], u[1], side="right")), mdp.n_actions - 1)
    s2 = min(int(np.searchsorted(mdp._cum_transition[s, a], u[2], side="right")), mdp.n_states - 1)
    return TransitionSample(s=s, a=a, s_next=s2, r=float(mdp.reward[s, a, s2]))


def random_mdp(
    n_states: int,
    n_actions: int,
    seed: int,
    reward_range: tuple[float, float] = (0.0, 1.0),
    sparsity: float = 0.0,
    gamma: float = 0.9,
) -> MdpModel:
    """Generate a random ergodic MDP instance.

    Each transition row gets a random support of expected density
    ``1 - sparsity`` plus one guaranteed entry, filled with uniform positives
    and normalized. Rewards are uniform in ``reward_range`` and the behavior
    policy is uniform over actions. Draws are regenerated (at most 100 times)
    until the induced chain is ergodic and every pair has positive sampling
    probability, so the result always validates.
    """
    if n_states < 1 or n_actions < 1:
        raise ValidationError("n_states and n_actions must be positive")
    if not 0.0 <= sparsity <= 1.0:
        raise ValidationError(f"sparsity must lie in [0, 1], got {sparsity}")
    lo, hi = reward_range
    if not lo <= hi:
        raise ValidationError(f"empty reward range {reward_range}")
    rng = np.random.default_rng(seed)
    for _ in range(100):
        support = rng.random((n_states, n_actions, n_states)) < (1.0 - sparsity)
        anchor = rng.integers(0, n_states, size=(n_states, n_actions))
        vals = rng.random((n_states, n_actions, n_states))
        rewards = rng.uniform(lo, hi, size=(n_states, n_actions, n_states))
        s_idx, a_idx = np.indices((n_states, n_actions))
        support[s_idx, a_idx, anchor] = True
        t = np.where(support, vals, 0.0)
        sums = t.sum(axis=2, keepdims=True)
        if np.any(sums == 0.0):
            continue
        t /= sums
        beta = np.full((n_states, n_actions), 1.0 / n_actions)
        model = MdpModel(
            n_states=n_states,
            n_actions=n_actions,
            gamma=gamma,
            transition=t,
            reward=rewards,
            behavior=beta,
        )
        try:
            build_sampling_distribution(model)
        except (NonErgodicChainError, ValidationError):
            continue
        return model
    raise GenerationError(
        f"no ergodic instance with positive joint probabilities found in 100 attempts "
        f"(n_states={n_states}, n_actions={n_actions}, sparsity={sparsity})"
    )


def save_mdp(mdp: MdpModel, path) -> None:
    """Serialize to the JSON file format (values survive round-trip exactly)."""
    doc = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "behavior": mdp.behavior.tolist(),
    }
    if mdp.stationary_override is not None:
        doc["stationary"] = mdp.stationary_override.tolist()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_mdp(path) -> MdpModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return MdpModel(
            n_states=int(doc["n_states"]),
            n_actions=int(doc["n_actions"]),
            gamma=float(doc["gamma"]),
            transition=np.asarray(doc["transition"], dtype=np.float64),
            reward=np.asarray(doc["reward"], dtype=np.float64),
            behavior=np.asarray(doc["behavior"], dtype=np.float64),
            stationary_override=(
                np.asarray(doc["stationary"], dtype=np.float64)
                if "stationary" in doc
                else None
            ),
        )
    except KeyError as exc:
        raise ValidationError(f"MDP file {path} is missing key {exc}") from exc
