"""Estimator-style wrappers so the solvers compose with scikit-learn tooling.

Both estimators follow the fit/predict protocol with ``get_params`` /
``set_params`` implemented sklearn-compatibly (no scikit-learn dependency):
``fit`` consumes an :class:`~qode.mdp.MdpModel` and ``predict`` maps state
indices to greedy actions of the fitted table.
"""
from __future__ import annotations

import inspect
import warnings

import numpy as np

from .fixed_point import greedy_policy, solve_fixed_point
from .learner import AnnealSchedule, StepSizeSchedule, run_annealed_boltzmann, run_learning
from .mdp import MdpModel
from .operators import MAX_OP, OperatorKind


class NotFittedError(RuntimeError):
    pass


class BaseEstimator:
    """Minimal parameter-introspection base matching the sklearn contract."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"

    def _check_fitted(self):
        if not hasattr(self, "q_table_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted; call fit(mdp) first")


def _check_mdp(mdp) -> MdpModel:
    if not isinstance(mdp, MdpModel):
        raise TypeError(f"expected an MdpModel, got {type(mdp).__name__}")
    return mdp


def _check_states(states, n_states: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(states, dtype=np.int64))
    if arr.ndim != 1:
        raise ValueError("states must be a 1-D sequence of state indices")
    if np.any(arr < 0) or np.any(arr >= n_states):
        raise ValueError(f"state indices must lie in [0, {n_states})")
    return arr


def _operator_from_params(operator: str, temperature: float) -> OperatorKind:
    return MAX_OP if operator == "max" else OperatorKind(operator, temperature)


class FixedPointSolver(BaseEstimator):
    """Solve the chosen operator's fixed point and expose its greedy policy.

    After ``fit(mdp)``: ``q_table_`` holds the flat fixed-point table,
    ``policy_`` the greedy action per state, plus ``iterations_``,
    ``residual_`` and ``converged_`` diagnostics.
    """

    def __init__(self, operator: str = "max", temperature: float = 1.0,
                 tol: float = 1e-10, max_iter: int = 100_000):
        self.operator = operator
        self.temperature = temperature
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp: MdpModel, y=None):
        mdp = _check_mdp(mdp)
        kind = _operator_from_params(self.operator, self.temperature)
        result = solve_fixed_point(mdp, kind, tol=self.tol, max_iter=self.max_iter)
        self.n_states_ = mdp.n_states
        self.n_actions_ = mdp.n_actions
        self.q_table_ = result.q_star
        self.iterations_ = result.iterations
        self.residual_ = result.residual
        self.converged_ = result.converged
        self.policy_ = greedy_policy(result.q_star, mdp.n_states, mdp.n_actions)
        return self

    def predict(self, states) -> np.ndarray:
        self._check_fitted()
        return self.policy_[_check_states(states, self.n_states_)]

    def action_values(self, states) -> np.ndarray:
        """Rows Q(s, .) of the fitted table for the given states."""
        self._check_fitted()
        idx = _check_states(states, self.n_states_)
        table = self.q_table_.reshape(self.n_actions_, self.n_states_).T
        return table[idx]


class TabularQLearner(BaseEstimator):
    """Stochastic tabular learner with power-law steps and optional annealing.

    ``fit(mdp)`` draws i.i.d. transitions under the MDP's behavior policy and
    runs ``n_steps`` updates; the fitted attributes mirror
    :class:`FixedPointSolver` plus the full ``run_`` record.
    """

    def __init__(self, operator: str = "max", temperature: float = 1.0,
                 n_steps: int = 200_000, seed: int = 0,
                 step_scale: float = 10.0, step_offset: float = 100.0,
                 step_exponent: float = 1.0, step_cap: float = 0.5,
                 anneal: str = "none", anneal_rate: float = 0.6,
                 snapshot_stride: int = 1000, collect_noise: bool = False):
        self.operator = operator
        self.temperature = temperature
        self.n_steps = n_steps
        self.seed = seed
        self.step_scale = step_scale
        self.step_offset = step_offset
        self.step_exponent = step_exponent
        self.step_cap = step_cap
        self.anneal = anneal
        self.anneal_rate = anneal_rate
        self.snapshot_stride = snapshot_stride
        self.collect_noise = collect_noise

    def fit(self, mdp: MdpModel, y=None):
        mdp = _check_mdp(mdp)
        steps = StepSizeSchedule(self.step_scale, self.step_offset,
                                 self.step_exponent, self.step_cap)
        if self.anneal != "none":
            if self.operator != "boltzmann":
                raise ValueError("annealing is only defined for the boltzmann operator")
            schedule = AnnealSchedule(self.temperature, self.anneal, self.anneal_rate)
            run = run_annealed_boltzmann(
                mdp, steps, schedule, K=self.n_steps, seed=self.seed,
                snapshot_stride=self.snapshot_stride, collect_noise=self.collect_noise,
            )
        else:
            kind = _operator_from_params(self.operator, self.temperature)
            if kind.name == "boltzmann":
                warnings.warn(
                    "fixed-temperature Boltzmann: convergence not guaranteed by theory",
                    stacklevel=2,
                )
                ref = solve_fixed_point(mdp, MAX_OP).q_star
            else:
                ref = solve_fixed_point(mdp, kind).q_star
            run = run_learning(
                mdp, kind, steps, K=self.n_steps, seed=self.seed, q_ref=ref,
                snapshot_stride=self.snapshot_stride, collect_noise=self.collect_noise,
            )
        self.n_states_ = mdp.n_states
        self.n_actions_ = mdp.n_actions
        self.run_ = run
        self.q_table_ = run.final_q
        self.reference_ = run.q_ref
        self.final_error_ = float(run.error_series[-1])
        self.policy_ = greedy_policy(run.final_q, mdp.n_states, mdp.n_actions)
        return self

    def predict(self, states) -> np.ndarray:
        self._check_fitted()
        return self.policy_[_check_states(states, self.n_states_)]
