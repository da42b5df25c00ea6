"""Oblivious forecast/outcome generators.

Generated instances use binary forecasts and ``y = 0``, so under squared
loss an expert's loss equals its forecast.  Random adversaries read their
uniforms from their own stream, a fixed number per round, so round ``t``'s
forecasts depend only on the stream key and ``t``; rounds must be requested
in increasing order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import EndOfSequence, SequenceParseError

__all__ = [
    "AdversaryConfig",
    "BernoulliAdversary",
    "ConstantAdversary",
    "FixedSequenceAdversary",
    "LowerBoundAdversary",
    "default_eps",
    "iid_bernoulli_forecasts",
    "load_fixed_sequence",
    "lower_bound_forecasts",
]

BLOCK = 4096


def _check_eps(eps):
    if not (0.0 < eps < 0.25):
        raise ValueError(f"eps must lie in (0, 1/4), got {eps!r}")


def lower_bound_forecasts(K, eps, i_star, u):
    """Correlated instance: everybody predicts ``1(u <= 1/2)`` except ``i_star``,
    which predicts ``1(u <= 1/2 - eps)``.  Returns ``(forecasts, 0.0)``."""
    _check_eps(eps)
    F = np.full(K, 1.0 if u <= 0.5 else 0.0)
    F[i_star] = 1.0 if u <= 0.5 - eps else 0.0
    return F, 0.0


def iid_bernoulli_forecasts(means, u):
    """``F_i = 1(u_i < means_i)``."""
    return (np.asarray(u) < np.asarray(means)).astype(float)


def default_eps(K, m, T):
    """``min(0.1, K / (900 m T))``; the horizon-matched gap of the lower-bound instance."""
    if T <= 0:
        return 0.1
    return min(0.1, K / (900.0 * m * T))


class _StreamAdversary:
    """Buffers per-round uniforms drawn sequentially from a private generator."""

    draws_per_round = 1

    def __init__(self, K, rng):
        self.K = K
        self._rng = rng
        self._start = 0
        self._u = np.empty((0, self.draws_per_round))

    def _uniforms(self, start, stop):
        if start < self._start:
            raise IndexError(f"round {start} was already discarded; rounds must be requested in order")
        end = self._start + self._u.shape[0]
        if stop > end:
            # skipped rounds still consume their draws
            fresh = self._rng.random((max(BLOCK, stop - end), self.draws_per_round))
            drop = min(start - self._start, self._u.shape[0])
            self._u = np.vstack([self._u[drop:], fresh])
            self._start += drop
        lo = start - self._start
        return self._u[lo:lo + (stop - start)]

    def _forecasts(self, u):
        raise NotImplementedError

    def block(self, start, stop):
        """Forecast matrix ``(stop - start, K)`` and outcomes for rounds ``start..stop-1``."""
        F = self._forecasts(self._uniforms(start, stop))
        return F, np.zeros(stop - start)

    def round(self, t):
        F, y = self.block(t, t + 1)
        return F[0], float(y[0])


class LowerBoundAdversary(_StreamAdversary):
    """The correlated two-level instance; ``i_star`` is better by ``eps`` per round.

    ``i_star``'s forecast never exceeds anybody else's, so it never errs alone.
    """

    def __init__(self, K, eps, i_star, rng):
        _check_eps(eps)
        if not 0 <= i_star < K:
            raise ValueError(f"i_star={i_star} out of range for K={K}")
        self.eps = eps
        self.i_star = i_star
        super().__init__(K, rng)

    def _forecasts(self, u):
        u = u[:, 0]
        F = np.repeat((u <= 0.5).astype(float)[:, None], self.K, axis=1)
        F[:, self.i_star] = (u <= 0.5 - self.eps)
        return F


class BernoulliAdversary(_StreamAdversary):
    """Independent Bernoulli forecasts with the given means; K uniforms per round."""

    def __init__(self, means, rng):
        means = np.asarray(means, dtype=float)
        if means.ndim != 1 or np.any((means < 0) | (means > 1)):
            raise ValueError("means must be a vector in [0, 1]")
        self.means = means
        self.draws_per_round = means.size
        super().__init__(means.size, rng)

    def _forecasts(self, u):
        return iid_bernoulli_forecasts(self.means, u)


class ConstantAdversary:
    """All experts forecast ``value`` every round; nobody can be beaten."""

    def __init__(self, K, value=0.4, outcome=0.0):
        self.K = K
        self.value = value
        self.outcome = outcome

    def block(self, start, stop):
        n = stop - start
        return np.full((n, self.K), float(self.value)), np.full(n, float(self.outcome))

    def round(self, t):
        return np.full(self.K, float(self.value)), float(self.outcome)


class FixedSequenceAdversary:
    """Replays a recorded forecast matrix ``(T, K)`` and outcome vector.

    ``offset`` is the game round that row 0 corresponds to.
    """

    def __init__(self, forecasts, outcomes, offset=0):
        F = np.asarray(forecasts, dtype=float)
        y = np.asarray(outcomes, dtype=float).reshape(-1)
        if F.ndim != 2 or F.shape[0] != y.shape[0]:
            raise ValueError("forecasts must be (T, K) with one outcome per row")
        self.forecasts = F
        self.outcomes = y
        self.K = F.shape[1]
        self.offset = offset

    def __len__(self):
        return self.forecasts.shape[0]

    def block(self, start, stop):
        lo, hi = start - self.offset, stop - self.offset
        if lo < 0 or hi > len(self):
            raise EndOfSequence(f"rounds {start}..{stop - 1} outside the recorded {len(self)} rounds")
        return self.forecasts[lo:hi], self.outcomes[lo:hi]

    def round(self, t):
        F, y = self.block(t, t + 1)
        return F[0], float(y[0])


def load_fixed_sequence(path, K=None):
    """Read a delimited text file: one row per round, K forecasts then the outcome.

    Commas, semicolons, tabs and spaces all separate fields; lines starting
    with ``#`` and blank lines are skipped.  An empty file gives a zero-length
    sequence (usable only with ``T = 0``) and then needs ``K``.
    """
    rows = []
    width = None if K is None else K + 1
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = [f for f in text.replace(",", " ").replace(";", " ").split() if f]
            try:
                values = [float(f) for f in fields]
            except ValueError as exc:
                raise SequenceParseError(lineno, str(exc)) from None
            if not all(math.isfinite(v) for v in values):
                raise SequenceParseError(lineno, "non-finite value")
            if width is None:
                if len(values) < 2:
                    raise SequenceParseError(lineno, "need at least one forecast and an outcome")
                width = len(values)
            if len(values) != width:
                raise SequenceParseError(lineno, f"expected {width} fields, found {len(values)}")
            rows.append(values)
    if not rows:
        if K is None:
            raise SequenceParseError(0, "empty sequence file; pass K explicitly")
        return FixedSequenceAdversary(np.empty((0, K)), np.empty(0))
    data = np.array(rows)
    return FixedSequenceAdversary(data[:, :-1], data[:, -1])


@dataclass(frozen=True)
class AdversaryConfig:
    """Which adversary to build: ``lower_bound``, ``bernoulli``, ``fixed`` or ``constant``."""

    kind: str
    K: int
    eps: float | None = None
    i_star: int = 0
    means: tuple | None = None
    file: str | None = None
    value: float = 0.4

    def __post_init__(self):
        if self.kind == "lower_bound":
            if self.eps is not None:
                _check_eps(self.eps)
            if not 0 <= self.i_star < self.K:
                raise ValueError(f"i_star={self.i_star} out of range for K={self.K}")
        elif self.kind == "bernoulli":
            if self.means is None or len(self.means) != self.K:
                raise ValueError(f"bernoulli adversary needs {self.K} means")
            if any(not 0.0 <= v <= 1.0 for v in self.means):
                raise ValueError("means must lie in [0, 1]")
        elif self.kind == "fixed":
            if not self.file:
                raise ValueError("fixed adversary needs a file")
        elif self.kind != "constant":
            raise ValueError(f"unknown adversary kind {self.kind!r}")

    def build(self, rng, m=2, T=0):
        """Instantiate with the adversary stream ``rng``; ``m``/``T`` fill a missing ``eps``."""
        if self.kind == "lower_bound":
            eps = self.eps if self.eps is not None else default_eps(self.K, m, T)
            return LowerBoundAdversary(self.K, eps, self.i_star, rng)
        if self.kind == "bernoulli":
            return BernoulliAdversary(self.means, rng)
        if self.kind == "fixed":
            adv = load_fixed_sequence(self.file, K=self.K)
            if adv.K != self.K:
                raise ValueError(f"{self.file} has {adv.K} experts, expected {self.K}")
            return adv
        return ConstantAdversary(self.K, self.value)
