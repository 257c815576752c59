"""Stochastic tabular updates under the four operators, power-law step sizes,
annealed Boltzmann temperatures, and per-run noise statistics.

One run is strictly sequential, so the recursion lives in a compiled kernel;
all randomness is presampled from the run's own seeded generator, which makes
runs bit-reproducible and lets multi-seed sweeps execute in parallel threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import ValidationError
from .fixed_point import solve_fixed_point
from .mdp import MdpModel, SamplingDistribution, TransitionSample, build_sampling_distribution
from .operators import MAX_OP, OperatorKind, smooth_max

KIND_CODES = {"max": 0, "lse": 1, "mellowmax": 2, "boltzmann": 3}
_PRESAMPLE_CHUNK = 1 << 19
_RESYNC_PERIOD = 1 << 16


def thread_budget() -> int:
    """Worker cap for sweeps: the QODE_THREADS env var, else the CPU count."""
    raw = os.environ.get("QODE_THREADS")
    if raw is not None:
        return max(1, int(raw))
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class StepSizeSchedule:
    """Power-law step sizes alpha_k = min(c_max, a / (k + b)^q_exp)."""

    a: float
    b: float = 0.0
    q_exp: float = 1.0
    c_max: float = 1.0

    def __post_init__(self):
        if not self.b >= 0.0:
            raise ValidationError(f"offset b must be >= 0, got {self.b}")
        if not 0.0 < self.c_max <= 1.0:
            raise ValidationError(f"cap c_max must lie in (0, 1], got {self.c_max}")

    def alpha_at(self, k: np.ndarray | int) -> np.ndarray | float:
        k = np.asarray(k, dtype=np.float64)
        with np.errstate(divide="ignore"):
            base = self.a / (k + self.b) ** self.q_exp
        return np.minimum(self.c_max, base)


@dataclass(frozen=True)
class ScheduleVerdict:
    accepted: bool
    reason: str | None = None


def validate_schedule(steps: StepSizeSchedule) -> ScheduleVerdict:
    """Symbolic check of the divergent-sum / square-summable conditions.

    For the power-law family these hold exactly when a > 0 and the exponent
    lies in (0.5, 1]; the violated condition is named on rejection.
    """
    if not steps.a > 0.0:
        return ScheduleVerdict(False, "alpha_k > 0 requires a > 0")
    if steps.q_exp > 1.0:
        return ScheduleVerdict(False, "sum(alpha_k) < inf")
    if steps.q_exp <= 0.5:
        return ScheduleVerdict(False, "sum(alpha_k^2) = inf")
    return ScheduleVerdict(True)


@dataclass(frozen=True)
class AnnealSchedule:
    """Increasing temperature lambda_k -> inf: power (1+k)^r or geometric rho^k growth."""

    lambda0: float
    growth: str = "power"
    rate: float = 0.5

    def __post_init__(self):
        if not self.lambda0 > 0.0:
            raise ValidationError(f"lambda0 must be positive, got {self.lambda0}")
        if self.growth == "power":
            if not self.rate > 0.0:
                raise ValidationError("power growth needs rate r > 0")
        elif self.growth == "geometric":
            if not self.rate > 1.0:
                raise ValidationError("geometric growth needs ratio rho > 1")
        else:
            raise ValidationError(f"unknown growth {self.growth!r}")

    def lambda_at(self, k: np.ndarray | int) -> np.ndarray | float:
        k = np.asarray(k, dtype=np.float64)
        if self.growth == "power":
            return self.lambda0 * (1.0 + k) ** self.rate
        return self.lambda0 * self.rate**k


@dataclass
class NoiseStats:
    """Empirical noise record accumulated along one run.

    Bucket arrays are indexed by the visited pair's flat index; the moment
    and annealed-residual checks are evaluated at every step inside the
    kernel, with only their worst slack and strided series retained.
    """

    bucket_count: np.ndarray       # (n,)
    bucket_mean: np.ndarray        # (n, n): mean of each noise component per bucket
    bucket_std: np.ndarray         # (n, n)
    innovation_mean: np.ndarray    # (n,) per-bucket mean of the centered per-sample noise
    innovation_std: np.ndarray     # (n,)
    eps_sq_series: np.ndarray      # (m,) squared noise norm at snapshot points
    moment_bound_series: np.ndarray
    min_moment_slack: float
    r_max: float
    c_const: float
    residual_bound_series: np.ndarray | None = None  # annealed runs only
    max_residual_violation: float | None = None


@dataclass
class LearningRun:
    seed: int
    kind: OperatorKind
    n_steps: int
    snapshot_ks: np.ndarray
    snapshots: np.ndarray       # (m, n) iterate snapshots
    error_series: np.ndarray    # (m,) inf-norm distance to the reference table
    alpha_series: np.ndarray
    lambda_series: np.ndarray | None
    final_q: np.ndarray
    q_ref: np.ndarray
    noise: NoiseStats | None


@dataclass(frozen=True)
class NoiseReport:
    martingale_ok: bool
    worst_abs_z: float
    moment_ok: bool
    min_moment_slack: float
    residual_ok: bool | None
    max_residual_violation: float | None

    @property
    def all_ok(self) -> bool:
        return self.martingale_ok and self.moment_ok and self.residual_ok is not False


def q_update_step(
    q: np.ndarray,
    sample: TransitionSample,
    alpha: float,
    kind: OperatorKind,
    gamma: float,
    n_states: int,
    n_actions: int,
) -> np.ndarray:
    """One tabular update; only the visited pair's entry changes."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    i = sample.a * n_states + sample.s
    h = smooth_max(kind, q[sample.s_next :: n_states])
    out[i] = q[i] + alpha * (sample.r + gamma * h - q[i])
    return out


@njit(cache=True, inline="always")
def _h_row(q, s, S, A, lam, code):
    m = q[s]
    for a in range(1, A):
        v = q[s + a * S]
        if v > m:
            m = v
    if code == 0:
        return m
    if code == 3:
        num = 0.0
        den = 0.0
        for a in range(A):
            v = q[s + a * S]
            e = math.exp(lam * (v - m))
            num += v * e
            den += e
        return num / den
    acc = 0.0
    for a in range(A):
        acc += math.exp(lam * (q[s + a * S] - m))
    if code == 1:
        return m + math.log(acc) / lam
    return m + (math.log(acc) - math.log(A)) / lam


@njit(cache=True, nogil=True)
def _learn_kernel(
    q, idx, sp, rew, alphas, lams, gamma, S, A,
    update_code, noise_code, anneal, collect_noise,
    dr, dp_g, dd, r2max3, c_const, q_ref, stride,
    snap_q, err_out, alpha_out, lam_out, epsq_out, bound_out,
    sum_eps, sumsq_eps, counts, inn_sum, inn_sumsq,
):
    n = q.shape[0]
    K = idx.shape[0]
    ln_a = math.log(A)
    gfac = 3.0 * (gamma * gamma + 1.0)

    H = np.empty(S)
    f = np.empty(n)
    nq_sq = 0.0
    if collect_noise:
        for s in range(S):
            H[s] = _h_row(q, s, S, A, lams[0], noise_code)
        for j in range(n):
            acc = dr[j] - dd[j] * q[j]
            for s in range(S):
                acc += dp_g[j, s] * H[s]
            f[j] = acc
            nq_sq += q[j] * q[j]

    epsq_last = 0.0
    min_slack = 1e300
    max_resid = -1e300
    snap_i = 0

    for k in range(K):
        if k % stride == 0:
            err = 0.0
            for j in range(n):
                snap_q[snap_i, j] = q[j]
                d = abs(q[j] - q_ref[j])
                if d > err:
                    err = d
            err_out[snap_i] = err
            alpha_out[snap_i] = alphas[k]
            lam_out[snap_i] = lams[k]
            epsq_out[snap_i] = epsq_last
            # the bound applying to the upcoming step's noise, at Q_k
            bound_out[snap_i] = r2max3 + c_const + gfac * nq_sq
            snap_i += 1

        i = idx[k]
        s2 = sp[k]
        lam = lams[k]
        h_upd = _h_row(q, s2, S, A, lam, update_code)
        if anneal:
            h_noise = _h_row(q, s2, S, A, lam, 0)
            resid = abs(gamma * (h_upd - h_noise)) - gamma * ln_a / lam
            if resid > max_resid:
                max_resid = resid
        else:
            h_noise = h_upd
        delta_upd = rew[k] + gamma * h_upd - q[i]

        if collect_noise:
            delta = rew[k] + gamma * h_noise - q[i]
            fi = f[i]
            counts[i] += 1
            # innovation: delta minus its exact conditional mean given the pair
            inn = delta - fi / dd[i]
            inn_sum[i] += inn
            inn_sumsq[i] += inn * inn
            epsq = 0.0
            for j in range(n):
                fj = f[j]
                sum_eps[i, j] -= fj
                sumsq_eps[i, j] += fj * fj
                epsq += fj * fj
            sum_eps[i, i] += delta
            corr = (delta - fi) * (delta - fi) - fi * fi
            sumsq_eps[i, i] += corr
            epsq += corr
            epsq_last = epsq
            slack = r2max3 + c_const + gfac * nq_sq - epsq
            if slack < min_slack:
                min_slack = slack

        qold = q[i]
        q[i] = qold + alphas[k] * delta_upd

        if collect_noise:
            nq_sq += q[i] * q[i] - qold * qold
            s_i = i % S
            h_new = _h_row(q, s_i, S, A, lam, noise_code)
            dh = h_new - H[s_i]
            H[s_i] = h_new
            for j in range(n):
                f[j] += dp_g[j, s_i] * dh
            f[i] -= dd[i] * (q[i] - qold)
            if (k + 1) % _RESYNC_PERIOD == 0:
                # squash accumulated float drift in the incremental state
                lam_sync = lams[k]
                nq_sq = 0.0
                for s in range(S):
                    H[s] = _h_row(q, s, S, A, lam_sync, noise_code)
                for j in range(n):
                    acc = dr[j] - dd[j] * q[j]
                    for s in range(S):
                        acc += dp_g[j, s] * H[s]
                    f[j] = acc
                    nq_sq += q[j] * q[j]

    err = 0.0
    for j in range(n):
        snap_q[snap_i, j] = q[j]
        d = abs(q[j] - q_ref[j])
        if d > err:
            err = d
    err_out[snap_i] = err
    alpha_out[snap_i] = alphas[K - 1]
    lam_out[snap_i] = lams[K - 1]
    epsq_out[snap_i] = epsq_last
    bound_out[snap_i] = r2max3 + c_const + gfac * nq_sq
    return min_slack, max_resid


def _presample(
    mdp: MdpModel, dist: SamplingDistribution, K: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized i.i.d. draws of (flat index, next state, reward) for K steps."""
    S, A = mdp.n_states, mdp.n_actions
    cum_p = dist._cum_stationary
    cum_b = mdp._cum_behavior
    cum_t = mdp._cum_transition
    idx = np.empty(K, dtype=np.int64)
    sp = np.empty(K, dtype=np.int64)
    rew = np.empty(K, dtype=np.float64)
    done = 0
    while done < K:
        m = min(_PRESAMPLE_CHUNK, K - done)
        u = rng.random((m, 3))
        s = np.minimum(np.searchsorted(cum_p, u[:, 0], side="right"), S - 1)
        a = np.minimum((cum_b[s] <= u[:, 1, None]).sum(axis=1), A - 1)
        s2 = np.minimum((cum_t[s, a] <= u[:, 2, None]).sum(axis=1), S - 1)
        idx[done : done + m] = a * S + s
        sp[done : done + m] = s2
        rew[done : done + m] = mdp.reward[s, a, s2]
        done += m
    return idx, sp, rew


def _execute_run(
    mdp: MdpModel,
    update_kind: OperatorKind,
    steps: StepSizeSchedule,
    K: int,
    seed: int,
    q_ref: np.ndarray,
    lams: np.ndarray,
    noise_code: int,
    anneal: bool,
    c_const: float,
    snapshot_stride: int,
    collect_noise: bool,
) -> LearningRun:
    verdict = validate_schedule(steps)
    if not verdict.accepted:
        raise ValidationError(f"step-size schedule rejected: {verdict.reason}")
    if K < 1:
        raise ValueError("K must be >= 1")
    if K % snapshot_stride != 0:
        raise ValueError(f"snapshot stride {snapshot_stride} must divide K={K}")
    dist = build_sampling_distribution(mdp)
    q_ref = np.asarray(q_ref, dtype=np.float64)
    if q_ref.shape != (mdp.n_pairs,):
        raise ValueError(f"reference table shape {q_ref.shape} != ({mdp.n_pairs},)")

    rng = np.random.default_rng(seed)
    idx, sp, rew = _presample(mdp, dist, K, rng)
    alphas = np.asarray(steps.alpha_at(np.arange(K)), dtype=np.float64)

    n = mdp.n_pairs
    m = K // snapshot_stride + 1
    q = np.zeros(n)
    snap_q = np.empty((m, n))
    err_out = np.empty(m)
    alpha_out = np.empty(m)
    lam_out = np.empty(m)
    epsq_out = np.empty(m)
    bound_out = np.empty(m)
    sum_eps = np.zeros((n, n))
    sumsq_eps = np.zeros((n, n))
    counts = np.zeros(n, dtype=np.int64)
    inn_sum = np.zeros(n)
    inn_sumsq = np.zeros(n)
    dd = dist.d_matrix_diag
    dp_g = mdp.gamma * (dd[:, None] * mdp.p_flat)
    dr = dd * mdp.r_flat
    r_max = float(np.max(np.abs(mdp.reward)))

    min_slack, max_resid = _learn_kernel(
        q, idx, sp, rew, alphas, lams, mdp.gamma, mdp.n_states, mdp.n_actions,
        KIND_CODES[update_kind.name], noise_code, anneal, collect_noise,
        dr, dp_g, dd, 3.0 * r_max * r_max, c_const, q_ref,
        snapshot_stride,
        snap_q, err_out, alpha_out, lam_out, epsq_out, bound_out,
        sum_eps, sumsq_eps, counts, inn_sum, inn_sumsq,
    )

    noise = None
    if collect_noise:
        cnt = np.maximum(counts, 1).astype(np.float64)
        mean = sum_eps / cnt[:, None]
        var = np.maximum(sumsq_eps / cnt[:, None] - mean**2, 0.0)
        inn_mean = inn_sum / cnt
        inn_var = np.maximum(inn_sumsq / cnt - inn_mean**2, 0.0)
        noise = NoiseStats(
            bucket_count=counts,
            bucket_mean=mean,
            bucket_std=np.sqrt(var),
            innovation_mean=inn_mean,
            innovation_std=np.sqrt(inn_var),
            eps_sq_series=epsq_out,
            moment_bound_series=bound_out,
            min_moment_slack=float(min_slack),
            r_max=r_max,
            c_const=c_const,
        )
        if anneal:
            ks = np.arange(m) * snapshot_stride
            lam_snap = lams[np.minimum(ks, K - 1)]
            noise.residual_bound_series = mdp.gamma * math.log(mdp.n_actions) / lam_snap
            noise.max_residual_violation = float(max_resid)

    return LearningRun(
        seed=seed,
        kind=update_kind,
        n_steps=K,
        snapshot_ks=np.arange(m) * snapshot_stride,
        snapshots=snap_q,
        error_series=err_out,
        alpha_series=alpha_out,
        lambda_series=None if (update_kind.name == "max" and not anneal) else lam_out,
        final_q=q,
        q_ref=q_ref,
        noise=noise,
    )


def run_learning(
    mdp: MdpModel,
    kind: OperatorKind,
    steps: StepSizeSchedule,
    K: int,
    seed: int,
    q_ref: np.ndarray,
    snapshot_stride: int = 1000,
    collect_noise: bool = True,
) -> LearningRun:
    """Run K stochastic updates from Q = 0 under a fixed operator.

    The error series tracks the inf-norm distance to the supplied reference
    table. Noise statistics compare each step's realized update direction
    against the exact model-based mean field.
    """
    c_const = (
        math.log(mdp.n_actions) / kind.temperature if kind.name == "lse" else 0.0
    )
    lams = np.full(K, kind.temperature)
    return _execute_run(
        mdp, kind, steps, K, seed, q_ref, lams,
        noise_code=KIND_CODES[kind.name], anneal=False, c_const=c_const,
        snapshot_stride=snapshot_stride, collect_noise=collect_noise,
    )


def run_annealed_boltzmann(
    mdp: MdpModel,
    steps: StepSizeSchedule,
    anneal: AnnealSchedule,
    K: int,
    seed: int,
    snapshot_stride: int = 1000,
    collect_noise: bool = True,
    q_ref: np.ndarray | None = None,
) -> LearningRun:
    """Boltzmann updates with temperature lambda_k growing along the anneal schedule.

    The reference table is the fixed point of the max operator; the noise
    decomposition is likewise taken against the max-operator mean field, with
    the per-step softmax-vs-max residual checked against its theoretical
    bound gamma*ln|A|/lambda_k.
    """
    if q_ref is None:
        q_ref = solve_fixed_point(mdp, MAX_OP).q_star
    lams = np.asarray(anneal.lambda_at(np.arange(K)), dtype=np.float64)
    kind = OperatorKind("boltzmann", anneal.lambda0)
    return _execute_run(
        mdp, kind, steps, K, seed, q_ref, lams,
        noise_code=KIND_CODES["max"], anneal=True, c_const=0.0,
        snapshot_stride=snapshot_stride, collect_noise=collect_noise,
    )


def learning_sweep(run_fns) -> list[LearningRun]:
    """Execute independent run closures, in parallel when threads are allowed."""
    workers = min(thread_budget(), len(run_fns))
    if workers <= 1:
        return [fn() for fn in run_fns]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda fn: fn(), run_fns))


def noise_report(run: LearningRun, z_band: float = 4.0) -> NoiseReport:
    """Verdicts for the martingale-mean, second-moment, and annealed-residual checks.

    The martingale band is applied per bucket to the centered per-sample
    innovations: those are an exact martingale-difference sequence given the
    iterate history, so the 4-sigma/sqrt(count) band is statistically sound.
    The raw per-component means of the noise vector are kept in NoiseStats
    for inspection, but they carry the iterate's decaying transient and admit
    no comparable band.
    """
    if run.noise is None:
        raise ValueError("run was executed without noise accumulation")
    st = run.noise
    # ulp-level residue of the incremental mean-field bookkeeping is not signal
    atol = 1e-10 * max(1.0, st.r_max)
    worst_z = 0.0
    for b in range(st.bucket_count.size):
        cnt = st.bucket_count[b]
        if cnt == 0:
            continue
        sem = st.innovation_std[b] / math.sqrt(cnt)
        mean = abs(st.innovation_mean[b])
        if mean <= atol:
            z = 0.0
        elif sem > 0.0:
            z = mean / sem
        else:
            z = np.inf
        worst_z = max(worst_z, float(z))
    moment_ok = st.min_moment_slack >= -1e-12
    residual_ok = None
    if st.max_residual_violation is not None:
        residual_ok = st.max_residual_violation <= 1e-12
    return NoiseReport(
        martingale_ok=worst_z <= z_band,
        worst_abs_z=worst_z,
        moment_ok=moment_ok,
        min_moment_slack=st.min_moment_slack,
        residual_ok=residual_ok,
        max_residual_violation=st.max_residual_violation,
    )


def save_run_csv(run: LearningRun, path) -> None:
    """Write the strided series as ``k,error_inf,alpha,lambda,eps_sq,moment_bound``."""
    noise = run.noise
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,error_inf,alpha,lambda,eps_sq,moment_bound\n")
        for j, k in enumerate(run.snapshot_ks):
            lam = "" if run.lambda_series is None else repr(float(run.lambda_series[j]))
            eps = "" if noise is None else repr(float(noise.eps_sq_series[j]))
            bnd = "" if noise is None else repr(float(noise.moment_bound_series[j]))
            fh.write(
                f"{int(k)},{float(run.error_series[j])!r},"
                f"{float(run.alpha_series[j])!r},{lam},{eps},{bnd}\n"
            )
