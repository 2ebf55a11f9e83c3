"""Log-gamma, digamma, trigamma and log-beta with domain checking.

Every pmf, gradient and information formula in the package is evaluated in
the log domain through these four functions.  They accept scalars or numpy
arrays and return the same shape (a Python float for scalar input).

The numerics are delegated to the Cephes-based kernels in
:mod:`scipy.special`; trigamma is evaluated as the Hurwitz zeta function
``zeta(2, x)``, which is cheaper than ``polygamma(1, x)``.
"""

import math

import numpy as np
from scipy import special


class DomainError(ValueError):
    """Raised when a special function is called outside ``x > 0``."""


def _checked(x, name):
    if isinstance(x, float):
        if not 0.0 < x < math.inf:
            raise DomainError(f"{name} requires finite positive arguments")
        return x
    arr = np.asarray(x, dtype=float)
    # min() propagates nan, so one comparison covers nan and x <= 0
    if arr.size and not (arr.min() > 0 and arr.max() < math.inf):
        raise DomainError(f"{name} requires finite positive arguments")
    return arr


def _out(value):
    if np.ndim(value) == 0:
        return float(value)
    return value


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    return _out(special.gammaln(_checked(x, "log_gamma")))


def digamma(x):
    """Digamma function, the derivative of ``log_gamma``."""
    return _out(special.psi(_checked(x, "digamma")))


def trigamma(x):
    """Trigamma function, the derivative of ``digamma``.  Always positive."""
    return _out(special.zeta(2.0, _checked(x, "trigamma")))


def log_beta(a, b):
    """``log B(a, b) = log_gamma(a) + log_gamma(b) - log_gamma(a + b)``."""
    return _out(special.betaln(_checked(a, "log_beta"), _checked(b, "log_beta")))
