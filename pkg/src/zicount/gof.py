"""Discrete Kolmogorov-Smirnov statistic and its parametric-bootstrap p-value.

Bootstrap procedure, for ``b = 1..B``:

1. resample the data with replacement;
2. fit the model to the resample, giving ``theta_b``;
3. simulate ``n`` fresh values from ``theta_b``;
4. record the KS distance between the simulated sample and ``theta_b``.

The p-value is ``(#{D_b > D_n} + 1) / (B' + 1)`` where ``D_n`` is the distance
between the data and its own fit and ``B'`` counts the replicates whose fit
succeeded.  Replicate ``b`` draws from its own generator seeded by
``SeedSequence(seed, spawn_key=(b,))`` so results do not depend on the order
or the process in which replicates run.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fit import CountVector, FitOptions, FitResult, as_counts, fit_model
from .zero_models import Kind, ZeroModifiedModel

log = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP = 1000


def ks_statistic(data, model: ZeroModifiedModel) -> float:
    """``sup_x |F_n(x) - F(x)|`` for integer-valued data.

    Both cdfs are right-continuous steps that only jump at integers, so the
    supremum is a maximum over ``0..max(data)``; beyond ``max(data)`` the
    empirical cdf is 1 and the gap can only shrink.
    """
    values = data.values if isinstance(data, CountVector) else np.asarray(data, dtype=np.int64)
    top = int(values.max())
    empirical = np.cumsum(np.bincount(values, minlength=top + 1)) / values.size
    model_cdf = np.minimum(np.cumsum(model.pmf_table(top)), 1.0)
    return float(np.max(np.abs(empirical - model_cdf)))


def child_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def child_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed derived deterministically from ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class KSReport:
    d_n: float
    p_value: float
    b: int
    replicate_stats: np.ndarray
    seed: int
    fit_failures: int
    fit: FitResult | None = None
    resample: bool = True
    refit_simulated: bool = False
    replicate_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_dict(self) -> dict:
        return {
            "model": self.fit.model.label if self.fit else None,
            "d_n": self.d_n,
            "p_value": self.p_value,
            "bootstrap": self.b,
            "successful_replicates": int(self.replicate_stats.size),
            "fit_failures": self.fit_failures,
            "seed": self.seed,
            "resample": self.resample,
            "refit_simulated": self.refit_simulated,
        }


def _one_replicate(values, family, kind, index, seed, resample, opts, fitted, refit):
    rng = child_rng(seed, index)
    n = values.size
    if resample:
        boot = values[rng.integers(0, n, n)]
        try:
            result = fit_model(family, kind, boot, opts)
        except (ValueError, ArithmeticError) as exc:
            log.debug("replicate %d fit failed: %s", index, exc)
            return None
        if not np.isfinite(result.loglik):
            return None
        model = result.model
    else:
        model = fitted
    try:
        simulated = model.sample(n, rng)
        if refit:
            model = fit_model(family, kind, simulated, opts).model
    except (ValueError, ArithmeticError) as exc:
        log.debug("replicate %d simulation failed: %s", index, exc)
        return None
    return ks_statistic(simulated, model)


def _replicate_block(args):
    values, family, kind, indices, seed, resample, opts, fitted, refit = args
    return [_one_replicate(values, family, kind, i, seed, resample, opts, fitted, refit)
            for i in indices]


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def bootstrap_ks_pvalue(
    data,
    family: str,
    kind,
    b: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    *,
    resample: bool = True,
    opts: FitOptions | None = None,
    jobs: int = 1,
    fit: FitResult | None = None,
    refit_simulated: bool = False,
    replicate_starts: int | None = 2,
) -> KSReport:
    """Parametric-bootstrap KS p-value for ``data`` under the given model class.

    ``fit`` may carry an already computed MLE on ``data``; otherwise the
    model is fitted here (a failure propagates).  ``resample=False`` skips the
    resampling step and simulates every replicate from the original MLE.

    By default each simulated sample is compared with the parameters it was
    drawn from, while ``D_n`` compares the data with parameters fitted to that
    same data, which makes the test conservative.  ``refit_simulated=True``
    refits the model on every simulated sample before measuring the distance,
    so that both sides include the estimation step.

    Replicate fits start from the MLE on ``data`` plus ``replicate_starts - 1``
    default starts; ``None`` applies ``opts`` unchanged.
    """
    if b < 1:
        raise ValueError("need at least one bootstrap replicate")
    data = as_counts(data)
    kind = Kind.parse(kind)
    opts = opts or FitOptions()
    if fit is None:
        fit = fit_model(family, kind, data, opts)
    d_n = ks_statistic(data, fit.model)
    if replicate_starts is not None:
        opts = replace(opts, n_starts=max(1, int(replicate_starts)),
                       warm_start=tuple(float(v) for v in fit.theta.to_array()))

    values = np.asarray(data.values)
    jobs = max(1, int(jobs))
    if jobs == 1:
        stats = _replicate_block((values, family, kind, range(b), seed, resample, opts, fit.model,
                                  refit_simulated))
    else:
        blocks = np.array_split(np.arange(b), jobs)
        tasks = [(values, family, kind, blk.tolist(), seed, resample, opts, fit.model,
                  refit_simulated) for blk in blocks if blk.size]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            stats = [s for part in pool.map(_replicate_block, tasks) for s in part]

    ok = np.array([s is not None for s in stats], dtype=bool)
    replicate = np.array([s for s in stats if s is not None], dtype=float)
    exceed = int(np.sum(replicate > d_n))
    p_value = (exceed + 1) / (replicate.size + 1)
    return KSReport(
        d_n=d_n,
        p_value=p_value,
        b=int(b),
        replicate_stats=replicate,
        seed=int(seed),
        fit_failures=int(b - replicate.size),
        fit=fit,
        resample=resample,
        refit_simulated=refit_simulated,
        replicate_index=np.flatnonzero(ok),
    )
