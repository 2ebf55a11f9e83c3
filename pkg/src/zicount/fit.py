"""Maximum likelihood fitting of baseline, hurdle and zero-inflated models.

Hurdle models separate: ``phi_hat = 1 - m/n`` and ``theta_hat`` maximises the
zero-truncated likelihood of the nonzero observations alone.

Zero-inflated models are reparametrised by the total nonzero probability
``psi = (1 - phi)(1 - p0(theta))``.  With ``theta_star`` the truncated MLE,

1. if ``m/n <= 1 - p0(theta_star)`` the answer is ``theta_star`` and
   ``phi_hat = 1 - (m/n) / (1 - p0(theta_star))``;
2. otherwise ``theta`` maximises the profile
   ``(1 - psi(theta))**(n - m) psi(theta)**m prod f_tr(y_i | theta)`` with
   ``psi(theta) = min(m/n, 1 - p0(theta))``.

The smooth likelihoods are maximised by L-BFGS-B on log/logit transformed
parameters from several deterministic starting points.  The Poisson family
uses its likelihood equations directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .baselines import Baseline, Poisson, family_class
from .zero_models import Kind, ZeroModifiedModel


class InsufficientDataError(ValueError):
    """The sample has no nonzero observation, so ``theta`` is not identified."""

    def __init__(self, message: str, phi_hat: float = 1.0):
        super().__init__(message)
        self.phi_hat = phi_hat


class CountVector:
    """An observed sample of nonnegative integer counts.

    Besides the raw values it caches ``n``, the number of nonzero entries
    ``m`` and the distinct values with their multiplicities, which is all the
    likelihoods need.
    """

    __slots__ = ("values", "n", "m", "unique_values", "unique_counts", "_nz")

    def __init__(self, values):
        arr = np.asarray(values)
        if arr.ndim != 1:
            arr = arr.reshape(-1)
        if arr.size == 0:
            raise ValueError("a count vector needs at least one observation")
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("counts must be finite integers")
        elif arr.dtype.kind not in "iub":
            raise ValueError(f"counts must be integers, got dtype {arr.dtype}")
        arr = arr.astype(np.int64)
        if np.any(arr < 0):
            raise ValueError("counts must be nonnegative")
        arr.setflags(write=False)
        self.values = arr
        self.n = int(arr.size)
        self.unique_values, self.unique_counts = np.unique(arr, return_counts=True)
        self._nz = 1 if self.unique_values[0] == 0 else 0
        self.m = self.n - (int(self.unique_counts[0]) if self._nz else 0)

    @property
    def nonzero_values(self) -> np.ndarray:
        return self.unique_values[self._nz:]

    @property
    def nonzero_counts(self) -> np.ndarray:
        return self.unique_counts[self._nz:]

    @property
    def max(self) -> int:
        return int(self.unique_values[-1])

    @property
    def zero_count(self) -> int:
        return self.n - self.m

    def with_extra_zeros(self, k: int) -> "CountVector":
        return CountVector(np.concatenate([self.values, np.zeros(int(k), dtype=np.int64)]))

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"CountVector(n={self.n}, m={self.m}, max={self.max})"


def as_counts(data) -> CountVector:
    return data if isinstance(data, CountVector) else CountVector(data)


class Case(str, Enum):
    HURDLE = "hurdle_closed"
    ZI_CASE1 = "zi_case1"
    ZI_CASE2 = "zi_case2"
    BASELINE = "baseline_only"


@dataclass(frozen=True)
class FitOptions:
    """Optimiser settings.

    ``tol`` bounds the projected gradient (in transformed coordinates) and
    ``ftol`` the relative change of the objective; either stops a run.
    """

    tol: float = 1e-7
    ftol: float = 1e-10
    max_iter: int = 500
    n_starts: int = 5
    polish_iter: int = 200
    polish_tol: float = 1e-9
    #: loglik spread across starts above which ``FitResult.multimodal`` is set
    disagreement: float = 1e-6
    #: optional baseline parameters tried as the first start (counts toward ``n_starts``)
    warm_start: tuple[float, ...] | None = None


@dataclass
class FitResult:
    model: ZeroModifiedModel
    loglik: float
    converged: bool
    iterations: int
    grad_norm: float
    case: Case
    n: int
    m: int
    start_spread: float = 0.0
    message: str = ""
    multimodal: bool = False
    extras: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.model.baseline.family

    @property
    def kind(self) -> Kind:
        return self.model.kind

    @property
    def phi(self) -> float:
        return self.model.phi

    @property
    def theta(self) -> Baseline:
        return self.model.baseline

    def estimates(self) -> dict[str, float]:
        out = {} if self.kind is Kind.NONE else {"phi": self.phi}
        out.update(zip(self.theta.param_names, map(float, self.theta.to_array())))
        return out

    def to_dict(self) -> dict:
        d = {
            "model": self.model.label,
            "family": self.family,
            "kind": self.kind.value,
            "case": self.case.value,
            "n": self.n,
            "m": self.m,
            "estimates": self.estimates(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "start_spread": self.start_spread,
            "multimodal": self.multimodal,
        }
        if self.family == "bb":
            d["n_trials_rounded"] = self.theta.trials
        return d


# ---------------------------------------------------------------------------
# log-likelihoods


def _log1m_p0(lp0: float) -> float:
    return math.log(-math.expm1(lp0)) if lp0 < 0 else -math.inf


def truncated_loglik(params: Baseline, data) -> tuple[float, np.ndarray]:
    """Zero-truncated log-likelihood of the nonzero observations and its gradient.

    ``sum_i log f(y_i) - m log(1 - p0)``; the gradient is
    ``sum_i d log f(y_i) + m p0/(1 - p0) d log p0``.
    """
    data = as_counts(data)
    if data.m == 0:
        raise InsufficientDataError("no nonzero observations")
    y, w = data.nonzero_values, data.nonzero_counts
    lp0 = params.log_p0()
    log1m = _log1m_p0(lp0)
    if log1m == -math.inf:
        return -math.inf, np.full(params.n_params, np.nan)
    value = float(w @ params.log_pmf(y)) - data.m * log1m
    odds = math.exp(lp0 - log1m)
    grad = w @ params.grad_log_pmf(y) + data.m * odds * params.grad_log_p0()
    return value, grad


def truncated_neg_loglik(params: Baseline, data) -> tuple[float, np.ndarray]:
    """Negative of :func:`truncated_loglik` (the quantity that is minimised)."""
    value, grad = truncated_loglik(params, data)
    return -value, -grad


def baseline_loglik(params: Baseline, data) -> tuple[float, np.ndarray]:
    """Log-likelihood of the unmodified baseline over all observations."""
    data = as_counts(data)
    y, w = data.unique_values, data.unique_counts
    return float(w @ params.log_pmf(y)), w @ params.grad_log_pmf(y)


def zi_profile_loglik(params: Baseline, data) -> tuple[float, np.ndarray]:
    """Profile of the zero-inflated likelihood over ``psi(theta) = min(m/n, 1 - p0)``.

    Where ``1 - p0(theta) >= m/n`` this is the truncated likelihood plus the
    binomial term at ``psi = m/n``; elsewhere it equals the baseline
    likelihood (``phi = 0``).  The gradient is that of the active branch.
    """
    data = as_counts(data)
    n, m = data.n, data.m
    lp0 = params.log_p0()
    if -math.expm1(lp0) >= m / n:
        value, grad = truncated_loglik(params, data)
        q = m / n
        return value + special.xlogy(n - m, 1 - q) + special.xlogy(m, q), grad
    y, w = data.nonzero_values, data.nonzero_counts
    value = (n - m) * lp0 + float(w @ params.log_pmf(y))
    grad = (n - m) * params.grad_log_p0() + w @ params.grad_log_pmf(y)
    return value, grad


def model_loglik(model: ZeroModifiedModel, data) -> float:
    """Log-likelihood of any model by direct summation of its log pmf."""
    data = as_counts(data)
    lp = model.log_pmf(data.unique_values)
    w = data.unique_counts
    # 0 * log 0 = 0 for masses that vanish where no observation falls
    return float(np.sum(np.where(w > 0, w * lp, 0.0)))


# ---------------------------------------------------------------------------
# transformed-coordinate optimiser


def _to_free(cls, theta):
    theta = np.asarray(theta, dtype=float)
    return np.array([
        math.log(t) if tr == "log" else special.logit(t) for t, tr in zip(theta, cls.transforms)
    ])


def _from_free(cls, u, bounds):
    theta = np.array([
        math.exp(v) if tr == "log" else special.expit(v) for v, tr in zip(u, cls.transforms)
    ])
    lo, hi = np.array(bounds).T
    return np.clip(theta, lo, hi)


def _jacobian_diag(cls, theta):
    return np.array([t if tr == "log" else t * (1.0 - t) for t, tr in zip(theta, cls.transforms)])


def _projected_grad_norm(u, g, free_bounds):
    g = np.array(g, dtype=float)
    for i, (lo, hi) in enumerate(free_bounds):
        if u[i] <= lo + 1e-12 and g[i] > 0:
            g[i] = 0.0
        elif u[i] >= hi - 1e-12 and g[i] < 0:
            g[i] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


@dataclass
class _Run:
    theta: np.ndarray
    value: float
    success: bool
    nit: int
    grad_norm: float


def _maximize(
    cls: type[Baseline],
    loglik: Callable[[Baseline], tuple[float, np.ndarray]],
    starts: Sequence[np.ndarray],
    bounds: list[tuple[float, float]],
    opts: FitOptions,
    scale: float = 1.0,
    polish: bool = False,
) -> tuple[_Run, float]:
    """Multi-start L-BFGS-B maximisation; returns the best run and the loglik spread.

    The objective is divided by ``scale`` (the number of observations) so
    that gradients are O(1); otherwise the first projected step of L-BFGS-B
    tends to jump straight onto the box.  The reported gradient norm is that
    (max-norm, as in the L-BFGS-B stopping rule) of this per-observation
    objective in the transformed coordinates, with components pushing
    against an active bound removed.
    """
    free_bounds = []
    for (lo, hi), tr in zip(bounds, cls.transforms):
        if tr == "log":
            free_bounds.append((math.log(lo), math.log(hi)))
        else:
            free_bounds.append((float(special.logit(lo)), float(special.logit(hi))))

    def objective(u):
        theta = _from_free(cls, u, bounds)
        try:
            value, grad = loglik(cls.from_array(theta))
        except (ValueError, FloatingPointError):
            return 1e300, np.zeros_like(u)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            return 1e300, np.zeros_like(u)
        return -value / scale, -np.asarray(grad) * _jacobian_diag(cls, theta) / scale

    def finish(res, nit):
        f, g = objective(res.x)
        return _Run(res.x, -f * scale, bool(res.success), nit,
                    _projected_grad_norm(res.x, g, free_bounds))

    def lbfgsb(u0, ftol, maxiter):
        with np.errstate(all="ignore"):
            return optimize.minimize(
                objective, u0, jac=True, method="L-BFGS-B", bounds=free_bounds,
                options={"maxiter": maxiter, "gtol": opts.tol, "ftol": ftol},
            )

    runs = []
    for start in starts:
        u0 = np.clip(_to_free(cls, start), *np.array(free_bounds).T)
        res = lbfgsb(u0, opts.ftol, opts.max_iter)
        runs.append(finish(res, int(res.nit)))

    best = runs[0]
    for run in runs[1:]:
        if run.value > best.value + 1e-10:
            best = run
    values = [r.value for r in runs if r.value > -1e299]
    spread = (max(values) - min(values)) if values else math.inf

    if best.grad_norm > opts.tol and best.nit < opts.max_iter:
        # the relative-change test can stop short of the gradient tolerance;
        # restart with a fresh curvature model and only the gradient test
        res = lbfgsb(best.theta, 0.0, opts.max_iter - best.nit)
        refined = finish(res, best.nit + int(res.nit))
        if refined.value >= best.value and refined.grad_norm < best.grad_norm:
            refined.success = best.success or refined.success
            best = refined

    if polish:
        with np.errstate(all="ignore"):
            res = optimize.minimize(
                lambda u: objective(u)[0], best.theta, method="Nelder-Mead",
                bounds=free_bounds,
                options={"maxiter": opts.polish_iter, "fatol": opts.polish_tol, "xatol": 1e-10},
            )
        if -res.fun * scale > best.value:
            polished = finish(res, best.nit + int(res.nit))
            polished.success = best.success
            best = polished

    best = _Run(_from_free(cls, best.theta, bounds), best.value, best.success, best.nit, best.grad_norm)
    return best, spread


def _starts(cls, base, bounds, opts: FitOptions):
    if opts.warm_start is None:
        return _perturbed_starts(cls, base, bounds, opts.n_starts)
    warm = np.clip(np.asarray(opts.warm_start, dtype=float), *np.array(bounds).T)
    if opts.n_starts <= 1:
        return [warm]
    return [warm] + _perturbed_starts(cls, base, bounds, opts.n_starts - 1)


def _perturbed_starts(cls, base, bounds, n_starts):
    u0 = _to_free(cls, np.clip(base, *np.array(bounds).T))
    signs = np.array([(-1.0) ** i for i in range(len(u0))])
    steps = [0.0, 0.7, -0.7, 1.4, -1.4, 2.1, -2.1]
    starts = []
    for k in range(max(1, n_starts)):
        step = steps[k] if k < len(steps) else 0.7 * (k // 2 + 1) * (-1) ** (k + 1)
        starts.append(_from_free(cls, u0 + step * signs, bounds))
    return starts


def _weighted_moments(values, counts):
    w = counts / counts.sum()
    mean = float(w @ values)
    var = float(w @ (values - mean) ** 2)
    return mean, var


def initial_guess(family: str, values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Deterministic starting point computed from (distinct values, multiplicities)."""
    mean, var = _weighted_moments(values.astype(float), counts)
    if family == "poisson":
        return np.array([max(mean, 1e-3)])
    if family == "nb":
        if var > mean > 0:
            return np.array([mean * mean / (var - mean), 1.0 - mean / var])
        ybar = max(mean, 1e-3)
        return np.array([1.0, ybar / (1.0 + ybar)])
    if family == "bb":
        return np.array([max(float(values.max()), 1.0), 1.0, 1.0])
    if family == "bnb":
        return np.array([1.0, 2.0, 1.0])
    raise ValueError(f"unknown family {family!r}")


# ---------------------------------------------------------------------------
# Poisson likelihood equations


def solve_truncated_poisson(ybar: float) -> tuple[float, int]:
    """Root of ``lam = ybar (1 - exp(-lam))``, the zero-truncated Poisson MLE.

    For ``ybar <= 1`` the likelihood increases as ``lam -> 0`` and the lower
    parameter bound is returned.
    """
    lo_bound, hi_bound = Poisson.bounds()[0]

    def h(lam):
        return lam + ybar * math.expm1(-lam)

    if ybar <= 1.0 or h(lo_bound) >= 0:
        return lo_bound, 0
    root, info = optimize.brentq(h, lo_bound, min(ybar, hi_bound), xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                 full_output=True)
    return float(root), int(info.iterations)


def _theta_star(cls, data: CountVector, opts: FitOptions):
    """Maximiser of the truncated likelihood plus optimiser diagnostics."""
    bounds = cls.bounds(data.max)
    if cls is Poisson:
        ybar = float(data.nonzero_values @ data.nonzero_counts) / data.m
        lam, nit = solve_truncated_poisson(ybar)
        value, grad = truncated_loglik(Poisson(lam), data)
        interior = bounds[0][0] < lam < bounds[0][1]
        gnorm = abs(grad[0] * lam) / data.m if interior else 0.0
        return _Run(np.array([lam]), value, True, nit, gnorm), 0.0
    base = initial_guess(cls.family, data.nonzero_values, data.nonzero_counts)
    starts = _starts(cls, base, bounds, opts)
    return _maximize(cls, lambda t: truncated_loglik(t, data), starts, bounds, opts, scale=data.m)


def _result(model, data, run, case, spread, opts, **extras):
    return FitResult(
        model=model,
        loglik=model_loglik(model, data),
        converged=bool(run.success),
        iterations=run.nit,
        grad_norm=run.grad_norm,
        case=case,
        n=data.n,
        m=data.m,
        start_spread=spread,
        multimodal=bool(spread > opts.disagreement),
        extras=extras,
    )


def fit_hurdle(family: str, data, opts: FitOptions | None = None) -> FitResult:
    """Hurdle MLE: ``phi_hat = 1 - m/n`` and the truncated-likelihood maximiser."""
    opts = opts or FitOptions()
    data = as_counts(data)
    cls = family_class(family)
    if data.m == 0:
        raise InsufficientDataError("all observations are zero: phi_hat = 1, theta undefined")
    phi = 1.0 - data.m / data.n
    run, spread = _theta_star(cls, data, opts)
    model = ZeroModifiedModel(cls.from_array(run.theta), Kind.HURDLE, phi)
    return _result(model, data, run, Case.HURDLE, spread, opts)


def fit_zero_inflated(family: str, data, opts: FitOptions | None = None) -> FitResult:
    """Zero-inflated MLE by the two-case procedure on the ``psi`` reparametrisation."""
    opts = opts or FitOptions()
    data = as_counts(data)
    cls = family_class(family)
    if data.m == 0:
        raise InsufficientDataError("all observations are zero: phi_hat = 1, theta undefined")
    n, m = data.n, data.m
    star, spread = _theta_star(cls, data, opts)
    theta_star = cls.from_array(star.theta)
    nonzero_mass = -math.expm1(theta_star.log_p0())

    if m / n <= nonzero_mass:
        phi = min(max(1.0 - (m / n) / nonzero_mass, 0.0), 1.0)
        model = ZeroModifiedModel(theta_star, Kind.ZI, phi)
        return _result(model, data, star, Case.ZI_CASE1, spread, opts)

    bounds = cls.bounds(data.max)
    starts = [star.theta]
    try:
        plain = fit_baseline(family, data, opts)
        starts.append(plain.theta.to_array())
    except ValueError:
        pass
    base = initial_guess(cls.family, data.unique_values, data.unique_counts)
    starts.extend(_perturbed_starts(cls, base, bounds, max(opts.n_starts - len(starts), 1)))
    run, spread2 = _maximize(cls, lambda t: zi_profile_loglik(t, data), starts, bounds, opts,
                             scale=data.n, polish=True)
    theta = cls.from_array(run.theta)
    psi = min(m / n, -math.expm1(theta.log_p0()))
    phi = min(max(1.0 - psi / -math.expm1(theta.log_p0()), 0.0), 1.0)
    model = ZeroModifiedModel(theta, Kind.ZI, phi)
    candidate = ZeroModifiedModel(theta_star, Kind.ZI, 0.0)
    return _result(model, data, run, Case.ZI_CASE2, spread2, opts,
                   case1_candidate_loglik=model_loglik(candidate, data))


def fit_baseline(family: str, data, opts: FitOptions | None = None) -> FitResult:
    """Plain MLE of the unmodified baseline."""
    opts = opts or FitOptions()
    data = as_counts(data)
    cls = family_class(family)
    bounds = cls.bounds(data.max)
    if cls is Poisson:
        lam = float(np.clip(data.values.mean(), *bounds[0]))
        run, spread = _Run(np.array([lam]), 0.0, True, 0, 0.0), 0.0
    else:
        base = initial_guess(cls.family, data.unique_values, data.unique_counts)
        starts = _starts(cls, base, bounds, opts)
        run, spread = _maximize(cls, lambda t: baseline_loglik(t, data), starts, bounds, opts,
                                scale=data.n)
    model = ZeroModifiedModel(cls.from_array(run.theta), Kind.NONE, 0.0)
    return _result(model, data, run, Case.BASELINE, spread, opts)


def fit_model(family: str, kind, data, opts: FitOptions | None = None) -> FitResult:
    """Dispatch on the zero-modification kind."""
    kind = Kind.parse(kind)
    if kind is Kind.HURDLE:
        return fit_hurdle(family, data, opts)
    if kind is Kind.ZI:
        return fit_zero_inflated(family, data, opts)
    return fit_baseline(family, data, opts)
