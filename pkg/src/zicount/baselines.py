"""Baseline count families: Poisson, negative binomial, beta binomial and
beta negative binomial.

Each family is a frozen dataclass holding its parameters.  All of them share
one surface (see :class:`Baseline`):

* ``log_pmf(y)`` / ``grad_log_pmf(y)`` vectorised over integer ``y``;
* ``p0()``, ``log_p0()`` and ``grad_log_p0()`` for the zero class;
* ``truncated_log_pmf(y)`` for the zero-truncated version;
* ``cdf(y)``, ``pmf_table(upto)``, ``support_max(tail)`` and ``sample``.

Parameterisations
-----------------
Poisson(lam)
    ``f(y) = exp(-lam) lam**y / y!``
NegBin(r, p)
    ``f(y) = Gamma(y + r) / (Gamma(y + 1) Gamma(r)) p**y (1 - p)**r``, so the
    mean is ``p r / (1 - p)`` and ``p0 = (1 - p)**r``.
BetaBin(n, alpha, beta)
    ``f(y) = C(n, y) B(y + alpha, n - y + beta) / B(alpha, beta)`` on
    ``0..n``.  ``n`` is a real number >= 1 so it can be estimated by a
    gradient method; distribution-level operations (cdf, sampling, support
    enumeration) use the integer trial count ``round(n)``.
BetaNegBin(r, alpha, beta)
    ``f(y) = Gamma(r + y) / (Gamma(r) y!) B(alpha + r, beta + y) / B(alpha, beta)``,
    the negative binomial above with ``1 - p ~ Beta(alpha, beta)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import astuple, dataclass, fields, replace
from typing import ClassVar

import numpy as np

from scipy import special

# Parameters are validated on construction and arguments below are then
# provably positive, so the hot paths call the unchecked kernels directly.
log_gamma = special.gammaln
digamma = special.psi
log_beta = special.betaln

#: Upper limit on the number of support points enumerated for unbounded families.
MAX_SUPPORT = 10_000_000
#: Tail mass left out when an infinite support has to be summed.
DEFAULT_TAIL = 1e-10
#: ``p0`` above this makes the zero-truncated distribution numerically degenerate.
DEGENERATE_P0 = 1.0 - 1e-12


class DegenerateDistributionError(ValueError):
    """The baseline puts (numerically) all of its mass at zero."""


class SupportError(ValueError):
    """A value outside the support was passed where a density is required."""


def _as_int_array(y):
    arr = np.asarray(y)
    if arr.dtype.kind == "f":
        arr = arr.astype(np.int64)
    return arr


def _scalar_or_array(value, y):
    if np.ndim(y) == 0:
        return float(np.asarray(value).reshape(()))
    return value


class Baseline(ABC):
    """Common interface of the baseline families."""

    family: ClassVar[str]
    label: ClassVar[str]
    param_names: ClassVar[tuple[str, ...]]
    #: ``"log"`` or ``"logit"``, the unconstrained reparametrisation used by the optimiser.
    transforms: ClassVar[tuple[str, ...]]

    # ---- parameter vector plumbing -------------------------------------
    def to_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "Baseline":
        return cls(*(float(v) for v in values))

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @classmethod
    @abstractmethod
    def bounds(cls, max_count: int = 0) -> list[tuple[float, float]]:
        """Box constraints used when the family is fitted to data with the given maximum."""

    # ---- densities ----------------------------------------------------
    @abstractmethod
    def _log_pmf(self, y: np.ndarray) -> np.ndarray:
        """Log pmf for in-support integer ``y``."""

    @abstractmethod
    def _grad_log_pmf(self, y: np.ndarray) -> np.ndarray:
        """Gradient of the log pmf, shape ``y.shape + (n_params,)``."""

    @abstractmethod
    def log_p0(self) -> float:
        ...

    @abstractmethod
    def grad_log_p0(self) -> np.ndarray:
        ...

    def in_support(self, y) -> np.ndarray:
        return np.asarray(y) >= 0

    def log_pmf(self, y):
        """Log probability of ``y``; ``-inf`` outside the support."""
        y = _as_int_array(y)
        ok = self.in_support(y)
        if np.all(ok):
            return _scalar_or_array(self._log_pmf(y), y)
        out = np.full(np.shape(y), -np.inf)
        if np.any(ok):
            out[ok] = self._log_pmf(y[ok])
        return _scalar_or_array(out, y)

    def pmf(self, y):
        return np.exp(self.log_pmf(y))

    def grad_log_pmf(self, y) -> np.ndarray:
        y = _as_int_array(y)
        if not np.all(self.in_support(y)):
            raise SupportError("gradient of the log pmf is undefined outside the support")
        return self._grad_log_pmf(y)

    def p0(self) -> float:
        return math.exp(self.log_p0())

    def truncated_log_pmf(self, y):
        """Log pmf of the zero-truncated distribution; ``-inf`` at ``y <= 0``."""
        lp0 = self.log_p0()
        if lp0 >= math.log(DEGENERATE_P0):
            raise DegenerateDistributionError(
                f"p0 = {math.exp(lp0)!r}: the zero-truncated {self.family} is degenerate"
            )
        y = _as_int_array(y)
        out = np.where(y >= 1, self.log_pmf(y), -np.inf) - math.log(-math.expm1(lp0))
        return _scalar_or_array(out, y)

    # ---- distribution-level helpers -----------------------------------
    def discretized(self) -> "Baseline":
        """The member of the family used for cdf/sampling (identity except BetaBin)."""
        return self

    def pmf_table(self, upto: int) -> np.ndarray:
        """pmf at ``0, 1, ..., upto``."""
        return np.exp(self.discretized().log_pmf(np.arange(int(upto) + 1)))

    def support_max(self, tail: float = DEFAULT_TAIL) -> int:
        """Smallest ``y*`` with ``cdf(y*) >= 1 - tail`` (capped at :data:`MAX_SUPPORT`)."""
        upto = 64
        while True:
            cum = np.cumsum(self.pmf_table(upto))
            hit = np.flatnonzero(cum >= 1.0 - tail)
            if hit.size:
                return int(hit[0])
            if upto >= MAX_SUPPORT:
                return MAX_SUPPORT
            upto = min(upto * 4, MAX_SUPPORT)

    def cdf(self, y):
        """``P(Y <= y)`` for real ``y``, by partial summation of the pmf."""
        y = np.asarray(y, dtype=float)
        k = np.floor(y)
        top = int(np.max(k, initial=-1))
        if top < 0:
            return _scalar_or_array(np.zeros(np.shape(y)), y)
        top = min(top, MAX_SUPPORT)
        cum = np.minimum(np.cumsum(self.pmf_table(top)), 1.0)
        idx = np.clip(k, -1, top).astype(np.int64)
        out = np.where(idx < 0, 0.0, cum[np.maximum(idx, 0)])
        return _scalar_or_array(out, y)

    @abstractmethod
    def _draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        ...

    def sample(self, size: int, seed=None) -> np.ndarray:
        """Draw ``size`` iid values.  ``seed`` is an int or a numpy ``Generator``."""
        rng = np.random.default_rng(seed)
        return self.discretized()._draw(rng, int(size)).astype(np.int64)


@dataclass(frozen=True)
class Poisson(Baseline):
    lam: float

    family: ClassVar[str] = "poisson"
    label: ClassVar[str] = "Poisson"
    param_names: ClassVar[tuple[str, ...]] = ("lambda",)
    transforms: ClassVar[tuple[str, ...]] = ("log",)

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"Poisson rate must be positive, got {self.lam!r}")

    @classmethod
    def bounds(cls, max_count=0):
        return [(1e-8, 1e8)]

    def _log_pmf(self, y):
        return y * math.log(self.lam) - self.lam - log_gamma(y + 1.0)

    def _grad_log_pmf(self, y):
        return (y / self.lam - 1.0)[..., None]

    def log_p0(self):
        return -self.lam

    def grad_log_p0(self):
        return np.array([-1.0])

    def _draw(self, rng, size):
        return rng.poisson(self.lam, size)


@dataclass(frozen=True)
class NegBin(Baseline):
    r: float
    p: float

    family: ClassVar[str] = "nb"
    label: ClassVar[str] = "negative binomial (NB)"
    param_names: ClassVar[tuple[str, ...]] = ("r", "p")
    transforms: ClassVar[tuple[str, ...]] = ("log", "logit")

    def __post_init__(self):
        if not (np.isfinite(self.r) and self.r > 0):
            raise ValueError(f"NB size r must be positive, got {self.r!r}")
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"NB probability p must lie in (0, 1), got {self.p!r}")

    @classmethod
    def bounds(cls, max_count=0):
        return [(1e-8, 1e6), (1e-10, 1.0 - 1e-10)]

    def _log_pmf(self, y):
        r, p = self.r, self.p
        return (log_gamma(y + r) - log_gamma(y + 1.0) - log_gamma(r)
                + y * math.log(p) + r * math.log1p(-p))

    def _grad_log_pmf(self, y):
        r, p = self.r, self.p
        y = np.asarray(y, dtype=float)
        d_r = digamma(y + r) - digamma(r) + math.log1p(-p)
        d_p = y / p - r / (1.0 - p)
        return np.stack(np.broadcast_arrays(d_r, d_p), axis=-1)

    def log_p0(self):
        return self.r * math.log1p(-self.p)

    def grad_log_p0(self):
        return np.array([math.log1p(-self.p), -self.r / (1.0 - self.p)])

    def _draw(self, rng, size):
        rates = rng.gamma(self.r, self.p / (1.0 - self.p), size)
        return rng.poisson(rates)


@dataclass(frozen=True)
class BetaBin(Baseline):
    n: float
    alpha: float
    beta: float

    family: ClassVar[str] = "bb"
    label: ClassVar[str] = "beta binomial (BB)"
    param_names: ClassVar[tuple[str, ...]] = ("n", "alpha", "beta")
    transforms: ClassVar[tuple[str, ...]] = ("log", "log", "log")

    def __post_init__(self):
        if not (np.isfinite(self.n) and self.n >= 1.0):
            raise ValueError(f"BB trial count n must be >= 1, got {self.n!r}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("BB shape parameters must be positive")

    @classmethod
    def bounds(cls, max_count=0):
        return [(float(max(max_count, 1)), 1e8), (1e-8, 1e6), (1e-8, 1e6)]

    @property
    def trials(self) -> int:
        return max(int(round(self.n)), 1)

    def discretized(self):
        return self if self.n == self.trials else replace(self, n=float(self.trials))

    def in_support(self, y):
        y = np.asarray(y)
        return (y >= 0) & (y <= self.n)

    def _log_pmf(self, y):
        n, a, b = self.n, self.alpha, self.beta
        return (log_gamma(n + 1.0) - log_gamma(y + 1.0) - log_gamma(n - y + 1.0)
                + log_beta(y + a, n - y + b) - log_beta(a, b))

    def _grad_log_pmf(self, y):
        n, a, b = self.n, self.alpha, self.beta
        y = np.asarray(y, dtype=float)
        common = digamma(a + b) - digamma(n + a + b)
        d_n = digamma(n + 1.0) - digamma(n - y + 1.0) + digamma(n - y + b) - digamma(n + a + b)
        d_a = digamma(y + a) - digamma(a) + common
        d_b = digamma(n - y + b) - digamma(b) + common
        return np.stack(np.broadcast_arrays(d_n, d_a, d_b), axis=-1)

    def log_p0(self):
        n, a, b = self.n, self.alpha, self.beta
        return log_gamma(n + b) + log_gamma(a + b) - log_gamma(n + a + b) - log_gamma(b)

    def grad_log_p0(self):
        n, a, b = self.n, self.alpha, self.beta
        psi_nab = digamma(n + a + b)
        return np.array([
            digamma(n + b) - psi_nab,
            digamma(a + b) - psi_nab,
            digamma(n + b) + digamma(a + b) - psi_nab - digamma(b),
        ])

    def support_max(self, tail=DEFAULT_TAIL):
        return self.trials

    def pmf_table(self, upto):
        table = np.zeros(int(upto) + 1)
        k = min(int(upto), self.trials)
        table[: k + 1] = np.exp(self.discretized().log_pmf(np.arange(k + 1)))
        return table

    def _draw(self, rng, size):
        return rng.binomial(self.trials, rng.beta(self.alpha, self.beta, size))


@dataclass(frozen=True)
class BetaNegBin(Baseline):
    r: float
    alpha: float
    beta: float

    family: ClassVar[str] = "bnb"
    label: ClassVar[str] = "beta negative binomial (BNB)"
    param_names: ClassVar[tuple[str, ...]] = ("r", "alpha", "beta")
    transforms: ClassVar[tuple[str, ...]] = ("log", "log", "log")

    def __post_init__(self):
        if not (self.r > 0 and self.alpha > 0 and self.beta > 0):
            raise ValueError("BNB parameters must be positive")
        if not all(np.isfinite((self.r, self.alpha, self.beta))):
            raise ValueError("BNB parameters must be finite")

    @classmethod
    def bounds(cls, max_count=0):
        return [(1e-8, 1e6), (1e-8, 1e6), (1e-8, 1e6)]

    def _log_pmf(self, y):
        r, a, b = self.r, self.alpha, self.beta
        return (log_gamma(y + r) - log_gamma(r) - log_gamma(y + 1.0)
                + log_beta(a + r, b + y) - log_beta(a, b))

    def _grad_log_pmf(self, y):
        r, a, b = self.r, self.alpha, self.beta
        y = np.asarray(y, dtype=float)
        psi_all = digamma(a + r + b + y)
        psi_ab = digamma(a + b)
        psi_ar = digamma(a + r)
        d_r = digamma(y + r) - digamma(r) + psi_ar - psi_all
        d_a = psi_ar - psi_all - digamma(a) + psi_ab
        d_b = digamma(b + y) - psi_all - digamma(b) + psi_ab
        return np.stack(np.broadcast_arrays(d_r, d_a, d_b), axis=-1)

    def log_p0(self):
        return log_beta(self.alpha + self.r, self.beta) - log_beta(self.alpha, self.beta)

    def grad_log_p0(self):
        r, a, b = self.r, self.alpha, self.beta
        psi_all = digamma(a + r + b)
        return np.array([
            digamma(a + r) - psi_all,
            digamma(a + r) - psi_all - digamma(a) + digamma(a + b),
            digamma(a + b) - psi_all,
        ])

    def _draw(self, rng, size):
        # success probability of the mixed NB; clipped so the gamma scale stays finite
        q = np.clip(rng.beta(self.alpha, self.beta, size), 1e-12, 1.0)
        rates = rng.gamma(self.r, (1.0 - q) / q)
        return rng.poisson(np.minimum(rates, 1e15))


FAMILIES: dict[str, type[Baseline]] = {
    cls.family: cls for cls in (Poisson, NegBin, BetaBin, BetaNegBin)
}

_ALIASES = {"lambda": "lam", "lam": "lam"}


def family_class(family: str) -> type[Baseline]:
    try:
        return FAMILIES[family.lower()]
    except KeyError:
        raise ValueError(
            f"unknown family {family!r}; expected one of {sorted(FAMILIES)}"
        ) from None


def make_baseline(family: str, **params: float) -> Baseline:
    """Build a baseline from keyword parameters, e.g. ``make_baseline("nb", r=2, p=0.5)``."""
    cls = family_class(family)
    kwargs = {_ALIASES.get(k, k): float(v) for k, v in params.items()}
    return cls(**kwargs)
