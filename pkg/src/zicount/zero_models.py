"""Hurdle (zero-altered) and zero-inflated versions of a baseline family.

Hurdle:
    ``P(0) = phi``, ``P(y) = (1 - phi) f(y) / (1 - p0)`` for ``y >= 1``.
Zero-inflated:
    ``P(0) = phi + (1 - phi) p0``, ``P(y) = (1 - phi) f(y)`` for ``y >= 1``.

``phi`` may sit exactly on 0 or 1; log-probabilities are then ``-inf`` where
the corresponding mass vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .baselines import DEFAULT_TAIL, MAX_SUPPORT, Baseline


class Kind(str, Enum):
    NONE = "none"
    ZI = "zi"
    HURDLE = "hurdle"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"zero_inflated": "zi", "inflated": "zi", "za": "hurdle", "zero_altered": "hurdle"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown kind {value!r}; expected none, zi or hurdle") from None


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class ZeroModifiedModel:
    """A baseline plus an optional zero modification with weight ``phi``."""

    baseline: Baseline
    kind: Kind = Kind.NONE
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi must lie in [0, 1], got {self.phi!r}")
        if self.kind is Kind.NONE and self.phi != 0.0:
            raise ValueError("an unmodified model has phi = 0")

    @property
    def label(self) -> str:
        return model_label(self.baseline.family, self.kind)

    def zero_probability(self) -> float:
        if self.kind is Kind.HURDLE:
            return self.phi
        return self.phi + (1.0 - self.phi) * self.baseline.p0()

    def nonzero_probability(self) -> float:
        """``1 - P(Y = 0)`` computed without cancellation."""
        if self.kind is Kind.HURDLE:
            return 1.0 - self.phi
        return (1.0 - self.phi) * -math.expm1(self.baseline.log_p0())

    def log_pmf(self, y):
        y = np.asarray(y)
        if self.kind is Kind.NONE:
            return self.baseline.log_pmf(y)
        if self.kind is Kind.HURDLE:
            log_zero = _log(self.phi)
            if self.phi < 1.0:
                positive = _log(1.0 - self.phi) + self.baseline.truncated_log_pmf(np.maximum(y, 1))
            else:
                positive = np.full(np.shape(y), -np.inf)
        else:
            log_zero = _log(self.zero_probability())
            positive = _log(1.0 - self.phi) + self.baseline.log_pmf(np.maximum(y, 1))
        out = np.where(y == 0, log_zero, np.where(y < 0, -np.inf, positive))
        return float(out) if out.ndim == 0 else out

    def pmf(self, y):
        return np.exp(self.log_pmf(y))

    def pmf_table(self, upto: int) -> np.ndarray:
        """Model pmf at ``0..upto`` (BB evaluated at its integer trial count)."""
        base = self.baseline.pmf_table(upto)
        if self.kind is Kind.NONE:
            return base
        out = np.empty_like(base)
        if self.kind is Kind.HURDLE:
            out[0] = self.phi
            out[1:] = (1.0 - self.phi) * base[1:] / (1.0 - base[0]) if self.phi < 1.0 else 0.0
        else:
            out[0] = self.phi + (1.0 - self.phi) * base[0]
            out[1:] = (1.0 - self.phi) * base[1:]
        return out

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        k = np.floor(y)
        top = min(int(np.max(k, initial=-1)), MAX_SUPPORT)
        if top < 0:
            out = np.zeros(np.shape(y))
        else:
            cum = np.minimum(np.cumsum(self.pmf_table(top)), 1.0)
            idx = np.clip(k, -1, top).astype(np.int64)
            out = np.where(idx < 0, 0.0, cum[np.maximum(idx, 0)])
        return float(out) if out.ndim == 0 else out

    def support_max(self, tail: float = DEFAULT_TAIL) -> int:
        return self.baseline.support_max(tail)

    def sample(self, size: int, seed=None) -> np.ndarray:
        """Two-stage draw: zero indicator first, then the baseline or its truncation."""
        rng = np.random.default_rng(seed)
        size = int(size)
        if self.kind is Kind.NONE:
            return self.baseline.sample(size, rng)
        out = np.zeros(size, dtype=np.int64)
        if self.kind is Kind.HURDLE:
            positive = rng.random(size) >= self.phi
            k = int(positive.sum())
            if k:
                out[positive] = sample_truncated(self.baseline, k, rng)
        else:
            keep = rng.random(size) >= self.phi
            k = int(keep.sum())
            if k:
                out[keep] = self.baseline.sample(k, rng)
        return out


def sample_truncated(baseline: Baseline, size: int, seed=None) -> np.ndarray:
    """Draws from the zero-truncated baseline.

    Rejection against the baseline sampler while ``p0 <= 0.9``; inversion of
    the truncated cdf table otherwise.
    """
    rng = np.random.default_rng(seed)
    p0 = baseline.discretized().p0()
    if p0 <= 0.9:
        chunks, have = [], 0
        while have < size:
            need = size - have
            draw = baseline.sample(int(need / max(1.0 - p0, 0.1)) + 16, rng)
            draw = draw[draw > 0][:need]
            chunks.append(draw)
            have += draw.size
        return np.concatenate(chunks)
    top = baseline.support_max(DEFAULT_TAIL * (1.0 - p0))
    table = baseline.pmf_table(top)
    table[0] = 0.0
    cum = np.cumsum(table)
    cum /= cum[-1]
    return np.searchsorted(cum, rng.random(size), side="right").astype(np.int64)


MODEL_LABELS = {
    ("poisson", Kind.NONE): "Poisson",
    ("nb", Kind.NONE): "negative binomial (NB)",
    ("bb", Kind.NONE): "beta binomial (BB)",
    ("bnb", Kind.NONE): "beta negative binomial (BNB)",
    ("poisson", Kind.ZI): "zero-inflated Poisson (ZIP)",
    ("nb", Kind.ZI): "zero-inflated negative binomial (ZINB)",
    ("bb", Kind.ZI): "zero-inflated beta binomial (ZIBB)",
    ("bnb", Kind.ZI): "zero-inflated beta negative binomial (ZIBNB)",
    ("poisson", Kind.HURDLE): "Poisson hurdle (PH)",
    ("nb", Kind.HURDLE): "negative binomial hurdle (NBH)",
    ("bb", Kind.HURDLE): "beta binomial hurdle (BBH)",
    ("bnb", Kind.HURDLE): "beta negative binomial hurdle (BNBH)",
}

#: Short codes for the twelve model variants, in report order.
MODEL_CODES = {
    "poisson": ("poisson", Kind.NONE),
    "nb": ("nb", Kind.NONE),
    "bb": ("bb", Kind.NONE),
    "bnb": ("bnb", Kind.NONE),
    "zip": ("poisson", Kind.ZI),
    "zinb": ("nb", Kind.ZI),
    "zibb": ("bb", Kind.ZI),
    "zibnb": ("bnb", Kind.ZI),
    "ph": ("poisson", Kind.HURDLE),
    "nbh": ("nb", Kind.HURDLE),
    "bbh": ("bb", Kind.HURDLE),
    "bnbh": ("bnb", Kind.HURDLE),
}


def model_label(family: str, kind) -> str:
    return MODEL_LABELS[(family, Kind.parse(kind))]


def parse_model_code(code: str) -> tuple[str, Kind]:
    try:
        return MODEL_CODES[code.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown model {code!r}; expected one of {list(MODEL_CODES)}") from None
