"""Fisher information, standard errors and Wald intervals.

For a hurdle model the information of one observation is block diagonal::

    [[1 / (phi (1 - phi)), 0],
     [0, -(1 - phi) / (1 - p0) (E[H] + p0 / (1 - p0) g g^T)]]

and for a zero-inflated model, with ``P0 = phi + (1 - phi) p0``::

    [[(1 - p0) / (P0 (1 - phi)),  p0 / P0 g^T],
     [p0 / P0 g,                  -(1 - phi) (E[H] + phi p0 / P0 g g^T)]]

where ``g`` is the gradient of ``log p0`` and ``E[H]`` the expected Hessian of
the baseline log pmf.  ``E[H]`` is obtained by summing central differences of
the analytic gradient over the support (tail mass 1e-12); Poisson and negative
binomial additionally have closed forms, used by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .baselines import Baseline, NegBin, Poisson
from .fit import FitResult
from .specfun import trigamma
from .zero_models import Kind, ZeroModifiedModel

FISHER_TAIL = 1e-12


class BoundaryError(ValueError):
    """``phi`` sits on the edge of [0, 1], where the asymptotics do not apply."""


class SingularFisherError(ValueError):
    """The information matrix cannot be inverted reliably."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3g})")
        self.condition_number = condition_number


@dataclass(frozen=True)
class FisherMatrix:
    """Information matrix ordered ``(phi, theta_1, ..., theta_p)`` (no ``phi`` for plain baselines)."""

    matrix: np.ndarray
    names: tuple[str, ...]
    per_observation: bool = True
    n: int = 1

    def scaled(self, n: int) -> "FisherMatrix":
        base = self.matrix if self.per_observation else self.matrix / self.n
        return FisherMatrix(base * n, self.names, per_observation=False, n=int(n))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def covariance(self) -> np.ndarray:
        """Inverse information; raises :class:`SingularFisherError` when ill-posed."""
        eig = np.linalg.eigvalsh(self.matrix)
        cond = float(eig[-1] / eig[0]) if eig[0] > 0 else math.inf
        if not np.isfinite(cond) or cond > 1e13:
            raise SingularFisherError("Fisher information is singular or not positive definite", cond)
        return np.linalg.inv(self.matrix)


@dataclass(frozen=True)
class ConfidenceInterval:
    name: str
    estimate: float
    se: float
    lower: float
    upper: float
    level: float


# ---------------------------------------------------------------------------
# expectations over the baseline support


def _steps(baseline: Baseline) -> np.ndarray:
    theta = baseline.to_array()
    h = 1e-5 * np.maximum(1.0, np.abs(theta))
    lo, hi = np.zeros_like(theta), np.full_like(theta, np.inf)
    for i, tr in enumerate(baseline.transforms):
        if tr == "logit":
            hi[i] = 1.0
    if baseline.family == "bb":
        lo[0] = 1.0
    room = np.minimum(theta - lo, hi - theta)
    return np.minimum(h, 0.5 * room)


def hessian_log_pmf(baseline: Baseline, y) -> np.ndarray:
    """Hessian of ``log f(y)`` by central differences of the analytic gradient.

    Returns shape ``(len(y), p, p)``, symmetrised.
    """
    y = np.asarray(y)
    theta = baseline.to_array()
    cls = type(baseline)
    h = _steps(baseline)
    p = theta.size
    hess = np.empty((y.size, p, p))
    for i in range(p):
        e = np.zeros(p)
        e[i] = h[i]
        up = cls.from_array(theta + e)._grad_log_pmf(y)
        down = cls.from_array(theta - e)._grad_log_pmf(y)
        hess[:, i, :] = (up - down) / (2.0 * h[i])
    return 0.5 * (hess + np.swapaxes(hess, 1, 2))


def expected_hessian(baseline: Baseline, tail: float = FISHER_TAIL) -> np.ndarray:
    """``E[d^2 log f(Y') / d theta d theta^T]`` for ``Y'`` from the baseline."""
    top = baseline.support_max(tail)
    y = np.arange(top + 1)
    w = baseline.pmf_table(top)
    keep = w > 0
    return np.einsum("k,kij->ij", w[keep], hessian_log_pmf(baseline, y[keep]))


def expected_trigamma_term(params: NegBin, tail: float = FISHER_TAIL) -> float:
    """``Psi_1(r) - E[Psi_1(Y' + r)]`` for ``Y' ~ NB(r, p)``, by direct summation.

    Summed as ``sum_y f(y) (Psi_1(r) - Psi_1(y + r))`` so that the result stays
    accurate when ``Y'`` is concentrated at zero.
    """
    top = params.support_max(tail)
    if top == 0:
        return 0.0
    y = np.arange(1, top + 1)
    w = params.pmf_table(top)[1:]
    return float(w @ (trigamma(params.r) - trigamma(y + params.r)))


def _baseline_info_closed(baseline: Baseline) -> np.ndarray | None:
    """``-E[H]`` in closed form where available."""
    if isinstance(baseline, Poisson):
        return np.array([[1.0 / baseline.lam]])
    if isinstance(baseline, NegBin):
        r, p = baseline.r, baseline.p
        a = expected_trigamma_term(baseline)
        c = 1.0 / (1.0 - p)
        return np.array([[a, c], [c, r / (p * (1.0 - p) ** 2)]])
    return None


def _neg_expected_hessian(baseline: Baseline, method: str) -> np.ndarray:
    if method not in ("auto", "closed", "numeric"):
        raise ValueError(f"method must be auto, closed or numeric, got {method!r}")
    if method != "numeric":
        closed = _baseline_info_closed(baseline)
        if closed is not None:
            return closed
        if method == "closed":
            raise ValueError(f"no closed form for the {baseline.family} family")
    return -expected_hessian(baseline)


def _wrap(matrix, names, n):
    if n is None:
        return FisherMatrix(matrix, names, per_observation=True, n=1)
    return FisherMatrix(matrix * n, names, per_observation=False, n=int(n))


# ---------------------------------------------------------------------------
# information matrices


def fisher_baseline(baseline: Baseline, n: int | None = None, method: str = "auto") -> FisherMatrix:
    return _wrap(_neg_expected_hessian(baseline, method), baseline.param_names, n)


def fisher_hurdle(model: ZeroModifiedModel, n: int | None = None, method: str = "auto") -> FisherMatrix:
    """Information of a hurdle model; per observation unless ``n`` is given."""
    if model.kind is not Kind.HURDLE:
        raise ValueError("fisher_hurdle needs a hurdle model")
    phi, base = model.phi, model.baseline
    if not 0.0 < phi < 1.0:
        raise BoundaryError(f"phi = {phi!r} is on the boundary; information is undefined")
    lp0 = base.log_p0()
    p0 = math.exp(lp0)
    q = -math.expm1(lp0)
    g = base.grad_log_p0()
    if isinstance(base, Poisson) and method != "numeric":
        lam = base.lam
        f22 = np.array([[(1.0 - phi) / q * (1.0 / lam - p0 / q)]])
    else:
        info = _neg_expected_hessian(base, method)
        f22 = (1.0 - phi) / q * (info - p0 / q * np.outer(g, g))
    k = base.n_params + 1
    mat = np.zeros((k, k))
    mat[0, 0] = 1.0 / (phi * (1.0 - phi))
    mat[1:, 1:] = f22
    return _wrap(mat, ("phi",) + base.param_names, n)


def fisher_zero_inflated(model: ZeroModifiedModel, n: int | None = None,
                         method: str = "auto") -> FisherMatrix:
    """Information of a zero-inflated model, including the ``phi``-``theta`` cross terms."""
    if model.kind is not Kind.ZI:
        raise ValueError("fisher_zero_inflated needs a zero-inflated model")
    phi, base = model.phi, model.baseline
    if not 0.0 <= phi < 1.0:
        raise BoundaryError(f"phi = {phi!r}: information is undefined at phi = 1")
    lp0 = base.log_p0()
    p0 = math.exp(lp0)
    q = -math.expm1(lp0)
    zero = phi + (1.0 - phi) * p0
    g = base.grad_log_p0()
    k = base.n_params + 1
    mat = np.zeros((k, k))
    mat[0, 0] = q / (zero * (1.0 - phi))
    if isinstance(base, Poisson) and method != "numeric":
        lam = base.lam
        mat[0, 1] = mat[1, 0] = -p0 / zero
        mat[1, 1] = (1.0 - phi) * (1.0 / lam - phi * p0 / zero)
    else:
        info = _neg_expected_hessian(base, method)
        mat[0, 1:] = mat[1:, 0] = p0 / zero * g
        mat[1:, 1:] = (1.0 - phi) * (info - phi * p0 / zero * np.outer(g, g))
    return _wrap(mat, ("phi",) + base.param_names, n)


def fisher_information(model: ZeroModifiedModel, n: int | None = None,
                       method: str = "auto") -> FisherMatrix:
    if model.kind is Kind.HURDLE:
        return fisher_hurdle(model, n, method)
    if model.kind is Kind.ZI:
        return fisher_zero_inflated(model, n, method)
    return fisher_baseline(model.baseline, n, method)


# ---------------------------------------------------------------------------
# score of a single observation


def score(model: ZeroModifiedModel, y) -> np.ndarray:
    """Gradient of ``log P(Y = y)`` with respect to ``(phi, theta)``; shape ``(len(y), k)``."""
    y = np.atleast_1d(np.asarray(y))
    base = model.baseline
    gf = base._grad_log_pmf(np.maximum(y, 0))
    if model.kind is Kind.NONE:
        return gf
    phi = model.phi
    lp0 = base.log_p0()
    p0 = math.exp(lp0)
    g0 = base.grad_log_p0()
    zero = y == 0
    out = np.empty((y.size, base.n_params + 1))
    if model.kind is Kind.HURDLE:
        q = -math.expm1(lp0)
        out[:, 0] = np.where(zero, 1.0 / phi if phi > 0 else np.inf, -1.0 / (1.0 - phi))
        out[:, 1:] = np.where(zero[:, None], 0.0, gf + p0 / q * g0)
    else:
        p_zero = phi + (1.0 - phi) * p0
        out[:, 0] = np.where(zero, (1.0 - p0) / p_zero, -1.0 / (1.0 - phi))
        out[:, 1:] = np.where(zero[:, None], (1.0 - phi) * p0 / p_zero * g0, gf)
    return out


def score_covariance(model: ZeroModifiedModel, tail: float = FISHER_TAIL) -> np.ndarray:
    """``E[s s^T]`` by summation over the support: the information identity route."""
    top = model.support_max(tail)
    w = model.pmf_table(top)
    keep = w > 0
    s = score(model, np.arange(top + 1)[keep])
    return np.einsum("k,ki,kj->ij", w[keep], s, s)


def score_mean(model: ZeroModifiedModel, tail: float = FISHER_TAIL) -> np.ndarray:
    top = model.support_max(tail)
    w = model.pmf_table(top)
    keep = w > 0
    return w[keep] @ score(model, np.arange(top + 1)[keep])


# ---------------------------------------------------------------------------
# Wald intervals


def normal_quantile(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level!r}")
    return float(stats.norm.ppf(0.5 * (1.0 + level)))


def standard_errors(fit: FitResult, method: str = "auto") -> dict[str, float]:
    """Asymptotic standard errors of the fitted parameters.

    Hurdle fits use the block structure (``phi`` and ``theta`` are
    asymptotically independent); zero-inflated fits invert the full matrix.
    """
    model = fit.model
    if model.kind is not Kind.NONE and not 0.0 < model.phi < 1.0:
        raise BoundaryError(f"phi_hat = {model.phi!r} is on the boundary; Wald intervals suppressed")
    info = fisher_information(model, fit.n, method)
    if model.kind is Kind.HURDLE:
        phi = model.phi
        se = [math.sqrt(phi * (1.0 - phi) / fit.n)]
        block = FisherMatrix(info.matrix[1:, 1:], info.names[1:], per_observation=False, n=fit.n)
        se.extend(np.sqrt(np.diag(block.covariance())))
    else:
        se = np.sqrt(np.diag(info.covariance()))
    return dict(zip(info.names, map(float, se)))


def confidence_intervals(fit: FitResult, level: float = 0.95,
                         method: str = "auto") -> list[ConfidenceInterval]:
    """Wald intervals ``estimate +/- z * se``."""
    z = normal_quantile(level)
    ses = standard_errors(fit, method)
    est = fit.estimates()
    return [
        ConfidenceInterval(name, est[name], se, est[name] - z * se, est[name] + z * se, level)
        for name, se in ses.items()
    ]
