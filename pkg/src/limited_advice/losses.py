"""Loss functions, their exp-concavity constants and numerical membership checks.

A loss is evaluated pointwise as ``loss(x, y)`` on numpy arrays or floats.
The checks below count violations of the midpoint inequalities that the
learners rely on:

* exp-concavity: ``exp(-eta * loss(., y))`` is midpoint concave;
* class ``E(c)``::

      f((x + x') / 2) <= f(x) / 2 + f(x') / 2 - (f(x) - f(x'))**2 / (2 c)
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExpConcave",
    "LipschitzStronglyConvex",
    "Loss",
    "LossSpec",
    "SampleTriple",
    "SquaredLoss",
    "check_ec_membership",
    "check_exp_concavity",
    "ec_constant",
    "eval_squared_loss",
    "lambda_bar",
    "sample_triples",
]

DEFAULT_TOL = 1e-12


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be a positive finite number, got {value!r}")


def lambda_bar(eta, B):
    """Largest admissible scale for the learning rate of the sampling learners.

    ``min(4 log(1 + eta^2 B^2 / 2) / (eta B^2), 1 / B)``
    """
    _require_positive(eta=eta, B=B)
    return min(4.0 * math.log1p(eta**2 * B**2 / 2.0) / (eta * B**2), 1.0 / B)


@dataclass(frozen=True)
class ExpConcave:
    """``B``-range-bounded and ``eta``-exp-concave loss."""

    eta: float
    B: float


@dataclass(frozen=True)
class LipschitzStronglyConvex:
    """``L``-Lipschitz and ``rho``-strongly convex loss."""

    L: float
    rho: float


def ec_constant(mode, corrected=False):
    """Constant ``c`` such that a loss described by ``mode`` lies in ``E(c)``.

    For :class:`ExpConcave` this is ``eta B^2 / (4 log(1 + eta^2 B^2 / 2))``,
    the reciprocal of the first branch of :func:`lambda_bar`.

    ``corrected=True`` returns ``eta B^2 / (2 log(1 + eta^2 B^2 / 8))`` instead.
    It comes from ``cosh(a) >= 1 + a^2 / 2`` applied at ``a = eta * delta / 2``
    (the uncorrected constant is obtained by applying it at ``a = eta * delta``),
    and is the one for which squared loss on ``[0, 1]`` passes
    :func:`check_ec_membership`; the exact threshold there is ``8``.
    """
    if isinstance(mode, ExpConcave):
        _require_positive(eta=mode.eta, B=mode.B)
        e2b2 = mode.eta**2 * mode.B**2
        if corrected:
            return mode.eta * mode.B**2 / (2.0 * math.log1p(e2b2 / 8.0))
        return mode.eta * mode.B**2 / (4.0 * math.log1p(e2b2 / 2.0))
    if isinstance(mode, LipschitzStronglyConvex):
        _require_positive(L=mode.L, rho=mode.rho)
        return 4.0 * mode.L**2 / mode.rho
    raise TypeError(f"unknown loss description {mode!r}")


@dataclass(frozen=True)
class LossSpec:
    """Range bound, exp-concavity and the constants derived from them."""

    B: float
    eta: float
    lambda_bar: float
    ec_constant: float

    @classmethod
    def from_exp_concavity(cls, eta, B):
        return cls(B=B, eta=eta, lambda_bar=lambda_bar(eta, B),
                   ec_constant=ec_constant(ExpConcave(eta, B)))


@dataclass(frozen=True)
class SampleTriple:
    x: float
    x_prime: float
    y: float


class Loss:
    """Pointwise loss ``loss(x, y)`` over a declared interval domain.

    Subclasses implement :meth:`evaluate` for numpy arrays and set ``spec``.
    """

    domain = (0.0, 1.0)
    outcome_domain = (0.0, 1.0)
    spec: LossSpec

    def evaluate(self, x, y):
        raise NotImplementedError

    def __call__(self, x, y):
        return self.evaluate(x, y)


class SquaredLoss(Loss):
    """``(x - y)^2`` on ``[lo, hi]``; range bound ``(hi - lo)^2``, ``eta = 1/(2B)``."""

    def __init__(self, lo=0.0, hi=1.0):
        if not hi > lo:
            raise ValueError("empty domain")
        self.domain = (float(lo), float(hi))
        self.outcome_domain = self.domain
        B = (hi - lo) ** 2
        self.spec = LossSpec.from_exp_concavity(1.0 / (2.0 * B), B)

    def evaluate(self, x, y):
        d = np.subtract(x, y)
        return d * d

    def __repr__(self):
        return f"SquaredLoss(lo={self.domain[0]}, hi={self.domain[1]})"


def eval_squared_loss(x, y):
    """Squared loss on ``[0, 1]``, rejecting arguments outside the domain."""
    for name, v in (("x", x), ("y", y)):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name}={v!r} outside [0, 1]")
    return (x - y) ** 2


def sample_triples(n, rng=None, domain=(0.0, 1.0), outcome_domain=None, grid=3):
    """Uniform random ``(x, x', y)`` triples plus every corner/midpoint combination.

    The deterministic part is the product of ``grid`` evenly spaced points of
    each interval (``grid=3`` gives endpoints and midpoint), where violations
    of the midpoint inequalities tend to concentrate.

    Returns an ``(n + grid**3, 3)`` array.
    """
    rng = np.random.default_rng(rng)
    outcome_domain = domain if outcome_domain is None else outcome_domain
    lo, hi = domain
    ylo, yhi = outcome_domain
    rand = np.column_stack([
        rng.uniform(lo, hi, n),
        rng.uniform(lo, hi, n),
        rng.uniform(ylo, yhi, n),
    ])
    xs = np.linspace(lo, hi, grid)
    ys = np.linspace(ylo, yhi, grid)
    corners = np.array(list(itertools.product(xs, xs, ys)), dtype=float)
    return np.vstack([rand, corners.reshape(-1, 3)])


def _as_array(samples):
    if len(samples) == 0:
        return np.empty((0, 3))
    if isinstance(samples[0], SampleTriple):
        return np.array([(s.x, s.x_prime, s.y) for s in samples], dtype=float)
    return np.asarray(samples, dtype=float).reshape(-1, 3)


def check_ec_membership(loss, c, samples, tol=DEFAULT_TOL):
    """Number of triples violating the ``E(c)`` midpoint inequality by more than ``tol``."""
    if not c > 0:
        raise ValueError("c must be positive")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    s = _as_array(samples)
    if s.shape[0] == 0:
        return 0
    x, xp, y = s.T
    fx, fxp = loss(x, y), loss(xp, y)
    fmid = loss((x + xp) / 2.0, y)
    bound = 0.5 * fx + 0.5 * fxp - (fx - fxp) ** 2 / (2.0 * c)
    return int(np.count_nonzero(fmid > bound + tol))


def check_exp_concavity(loss, eta, samples, tol=DEFAULT_TOL):
    """Number of triples where ``exp(-eta * loss)`` fails midpoint concavity by more than ``tol``."""
    _require_positive(eta=eta)
    s = _as_array(samples)
    if s.shape[0] == 0:
        return 0
    x, xp, y = s.T
    gx = np.exp(-eta * loss(x, y))
    gxp = np.exp(-eta * loss(xp, y))
    gmid = np.exp(-eta * loss((x + xp) / 2.0, y))
    return int(np.count_nonzero(gmid < 0.5 * gx + 0.5 * gxp - tol))
