"""Statistical experiments over ensembles of optimizer runs: the
in-expectation convergence-rate check, the noiseless subsequence decay
diagnostic, and the trajectory-smoothness comparison between the momentum
method and plain SGD.
"""

from __future__ import annotations

import numpy as np

from .optimizers import (
    StepSchedule,
    run_ensemble,
    run_trajectory,
    schedule_eval,
    sgdm_noise_multiplier,
)
from .problems import NoiseModel, Objective

__all__ = [
    "log_spaced_checkpoints",
    "ensemble_summary",
    "save_ensemble_csv",
    "expectation_rate_check",
    "subsequence_rate_check",
    "smoothness_comparison",
]


def log_spaced_checkpoints(K: int) -> np.ndarray:
    """1, 2, 5, 10, 20, 50, ... up to and including K."""
    pts = []
    base = 1
    while base <= K:
        for m in (1, 2, 5):
            v = m * base
            if v <= K:
                pts.append(v)
        base *= 10
    if pts[-1] != K:
        pts.append(K)
    return np.array(sorted(set(pts)), dtype=int)


def ensemble_summary(values: np.ndarray) -> dict:
    """Per-iteration mean, standard error, and 10/50/90 quantiles of a
    (K+1, M) ensemble array."""
    M = values.shape[1]
    q10, q50, q90 = np.quantile(values, [0.1, 0.5, 0.9], axis=1)
    return {
        "k": np.arange(values.shape[0]),
        "mean": np.mean(values, axis=1),
        "stderr": np.std(values, axis=1, ddof=1) / np.sqrt(M),
        "q10": q10,
        "q50": q50,
        "q90": q90,
    }


def save_ensemble_csv(path, summary: dict) -> None:
    cols = np.column_stack(
        [summary["k"], summary["mean"], summary["stderr"],
         summary["q10"], summary["q50"], summary["q90"]]
    )
    np.savetxt(path, cols, delimiter=",", header="k,mean,stderr,q10,q50,q90",
               comments="", fmt="%.17g")


def expectation_rate_bound(obj: Objective, sigma2: float, x0: np.ndarray, k) -> np.ndarray:
    """In-expectation ceiling (3 L ||x0 - x*||^2 + 4 sigma^2 / L)
    log(k+2) / (2 sqrt(k+1)) for the proof's stepsize choice."""
    k = np.asarray(k, dtype=float)
    L = obj.lipschitz
    d2 = float(np.sum((np.asarray(x0, dtype=float) - obj.xstar) ** 2))
    return (3.0 * L * d2 + 4.0 * sigma2 / L) * np.log(k + 2.0) / (2.0 * np.sqrt(k + 1.0))


def expectation_rate_check(
    obj: Objective,
    noise: NoiseModel,
    K: int,
    M: int,
    master_seed: int,
    x0: np.ndarray | None = None,
    c: float = 0.25,
    n_sigma: float = 3.0,
) -> dict:
    """Compare the ensemble-mean suboptimality against the in-expectation
    rate at logarithmically spaced checkpoints. The stepsize is the one the
    rate is proved for: eta_k = c / (L^2 log^2(k+2)) with c = 1/4, and the
    noise budget sigma^2 is the raw second moment E||xi||^2."""
    x0 = np.ones(obj.dim) if x0 is None else np.asarray(x0, dtype=float)
    sched = StepSchedule(kind="expectation_log2", L=obj.lipschitz, scale=c)
    tr = run_ensemble(obj, noise, sched, K=K, M=M, master_seed=master_seed,
                      x0=x0, record=("f_gap",))
    checkpoints = log_spaced_checkpoints(K)
    mean = np.mean(tr.f_gap[checkpoints], axis=1)
    se = np.std(tr.f_gap[checkpoints], axis=1, ddof=1) / np.sqrt(M)
    bound = expectation_rate_bound(obj, noise.sigma2, x0, checkpoints)
    ok = mean <= bound + n_sigma * se
    return {
        "checkpoints": checkpoints,
        "mean": mean,
        "stderr": se,
        "bound": bound,
        "passed": bool(np.all(ok)),
        "first_failure_k": int(checkpoints[np.argmin(ok)]) if not np.all(ok) else None,
        "summary": ensemble_summary(tr.f_gap),
    }


def subsequence_rate_check(
    obj: Objective,
    K: int,
    seed: int = 0,
    x0: np.ndarray | None = None,
    schedule: StepSchedule | None = None,
    checkpoints=(100,),
) -> dict:
    """Noiseless decay of the weighted running minimum

        m(K) = min_{k <= K} sqrt(k) log(log(k+2)) (f(x_k) - f*),

    which the theory sends to zero along a subsequence. Reports m at the
    requested checkpoints and at K so callers can verify strict decrease."""
    x0 = np.ones(obj.dim) if x0 is None else np.asarray(x0, dtype=float)
    if schedule is None:
        schedule = StepSchedule(kind="expectation_log2", L=obj.lipschitz, scale=0.25)
    noise = NoiseModel.noiseless(obj.dim)
    rec = run_trajectory(obj, noise, "sgdm", schedule, K, seed, x0=x0)
    ks = np.arange(1, K + 1, dtype=float)
    weighted = np.sqrt(ks) * np.log(np.log(ks + 2.0)) * rec.f_gap[1:]
    running_min = np.minimum.accumulate(weighted)
    at = {int(cp): float(running_min[cp - 1]) for cp in checkpoints if cp <= K}
    at[int(K)] = float(running_min[-1])
    return {"running_min": running_min, "at": at, "m_final": float(running_min[-1])}


def _increment_variances(f_gap: np.ndarray) -> np.ndarray:
    """Per-run variance of successive suboptimality increments over the last
    quarter of the horizon; f_gap has shape (K+1, M)."""
    K = f_gap.shape[0] - 1
    start = max(1, (3 * K) // 4)
    inc = np.diff(f_gap[start:], axis=0)
    return np.var(inc, axis=0, ddof=1)


def smoothness_comparison(
    obj: Objective,
    noise: NoiseModel,
    K: int,
    M: int,
    master_seed: int,
    x0: np.ndarray | None = None,
    schedule: StepSchedule | None = None,
    sgd_scale: float = 1.0,
) -> dict:
    """Compare late-horizon trajectory roughness of the momentum method
    against plain SGD with stepsize sgd_scale / sqrt(k), under the same
    noise. Roughness is the per-run variance of successive suboptimality
    increments over the last quarter of iterations; medians across runs are
    compared. Also reports the ratio of effective per-step noise multipliers
    at k = K as a deterministic cross-check of why the gap appears.
    """
    if noise.sigma2 == 0.0:
        return {"skipped": True,
                "reason": "noiseless runs have zero increment variance for both methods"}
    x0 = np.ones(obj.dim) if x0 is None else np.asarray(x0, dtype=float)
    if schedule is None:
        schedule = StepSchedule(kind="expectation_log2", L=obj.lipschitz, scale=0.25)
    tr_m = run_ensemble(obj, noise, schedule, K=K, M=M, master_seed=master_seed,
                        x0=x0, algorithm="sgdm", record=("f_gap",))
    tr_s = run_ensemble(obj, noise, schedule, K=K, M=M, master_seed=master_seed + 1,
                        x0=x0, algorithm="sgd", sgd_scale=sgd_scale, record=("f_gap",))
    var_m = _increment_variances(tr_m.f_gap)
    var_s = _increment_variances(tr_s.f_gap)
    med_m, med_s = float(np.median(var_m)), float(np.median(var_s))
    mult_ratio = float(sgdm_noise_multiplier(schedule, K) / (sgd_scale / np.sqrt(K)))
    out = {
        "skipped": False,
        "median_var_sgdm": med_m,
        "median_var_sgd": med_s,
        "noise_multiplier_ratio": mult_ratio,
        "passed": bool(med_m < med_s),
    }
    if med_m == med_s:
        out["note"] = ("medians are exactly equal; increase runs or horizon "
                       "to separate the methods")
    return out
