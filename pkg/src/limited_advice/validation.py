"""Statistical checks of the samplers, estimators and loss-class assumptions.

Each suite returns a :class:`CheckResult`; :func:`run_all` runs the default
set with fixed seeds.  The Monte Carlo loops call the same compiled kernels
the learners use, with a fixed sampling law (the tree is never updated).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.stats import chi2

from .harness import chi_square_gof
from .learners import _choose_midpoint_pair, _choose_two_step
from .losses import (
    ExpConcave,
    SquaredLoss,
    check_ec_membership,
    check_exp_concavity,
    ec_constant,
    sample_triples,
)
from .rng import make_generator
from .sumtree import WeightTree

__all__ = [
    "CheckResult",
    "DEFAULT_PROBS5",
    "DEFAULT_PROBS6",
    "DEFAULT_LOSSES6",
    "check_ec_suite",
    "check_exp_concavity_suite",
    "check_tree_vs_naive",
    "check_two_step_joint",
    "check_two_step_marginal",
    "check_unbiasedness",
    "estimate_samples",
    "naive_sample",
    "run_all",
    "two_step_draws",
    "two_step_law",
]

DEFAULT_PROBS5 = np.array([0.4, 0.25, 0.15, 0.12, 0.08])
DEFAULT_PROBS6 = np.array([0.3, 0.25, 0.15, 0.12, 0.1, 0.08])
DEFAULT_LOSSES6 = np.array([0.1, 0.9, 0.35, 0.6, 0.0, 1.0])


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: str
    details: dict = field(default_factory=dict)

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.summary}"


# ---------------------------------------------------------------------------
# Monte Carlo kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _midpoint_estimates(nodes, cap, K, mt, U, losses, out):
    perm = np.arange(K)
    explore = np.empty(mt, dtype=np.int64)
    scale = K / mt
    for r in range(U.shape[0]):
        I, J = _choose_midpoint_pair(nodes, cap, K, mt, U[r], perm, explore)
        anchor = losses[I]
        for i in range(K):
            out[r, i] = anchor
        for j in range(mt):
            i = explore[j]
            out[r, i] = anchor + scale * (losses[i] - anchor)


@njit(cache=True)
def _two_step_estimates(nodes, cap, K, U, losses, out):
    for r in range(U.shape[0]):
        A, B, I, J = _choose_two_step(nodes, cap, K, U[r])
        anchor = losses[A]
        for i in range(K):
            out[r, i] = anchor
        out[r, B] = anchor + K * (losses[B] - anchor)


@njit(cache=True)
def _two_step_pairs(nodes, cap, K, U, out):
    for r in range(U.shape[0]):
        A, B, I, J = _choose_two_step(nodes, cap, K, U[r])
        out[r, 0] = I
        out[r, 1] = J


def estimate_samples(family, probs, losses, rounds, rng, m_tilde=2):
    """``(rounds, K)`` matrix of unbiased loss estimates for a fixed sampling law.

    ``family="midpoint"``: anchor ``I ~ p`` plus ``m_tilde`` uniformly chosen
    experts, scaled by ``K / m_tilde``.  ``family="two_step"``: anchor
    ``A ~ p`` plus one uniform expert ``B`` scaled by ``K``.
    """
    probs = np.asarray(probs, dtype=float)
    losses = np.asarray(losses, dtype=float)
    K = probs.size
    tree = WeightTree(probs)
    out = np.empty((rounds, K))
    if family == "midpoint":
        U = rng.random((rounds, 2 + m_tilde))
        _midpoint_estimates(tree.nodes, tree.capacity, K, m_tilde, U, losses, out)
    elif family == "two_step":
        U = rng.random((rounds, 4))
        _two_step_estimates(tree.nodes, tree.capacity, K, U, losses, out)
    else:
        raise ValueError(f"unknown estimator family {family!r}")
    return out


def two_step_draws(probs, draws, rng):
    """``(draws, 2)`` array of ``(I, J)`` from the two-step sampler."""
    probs = np.asarray(probs, dtype=float)
    tree = WeightTree(probs)
    out = np.empty((draws, 2), dtype=np.int64)
    _two_step_pairs(tree.nodes, tree.capacity, probs.size, rng.random((draws, 4)), out)
    return out


def two_step_law(probs):
    """Exact joint law ``P(I = i, J = j)`` of the two-step sampler, by enumeration."""
    p = np.asarray(probs, dtype=float)
    p = p / p.sum()
    K = p.size
    P = np.zeros((K, K))
    for a in range(K):
        for b in range(K):
            w = p[a] / K
            if a == b:
                P[a, a] += w
                continue
            q = np.zeros(K)
            q[a] = p[a] / (p[a] + p[b])
            q[b] = p[b] / (p[a] + p[b])
            P += w * np.outer(q, q)
    return P


def naive_sample(weights, u):
    """Linear-scan inverse CDF: first index whose running mass exceeds ``u * total``."""
    w = np.asarray(weights, dtype=float)
    cdf = np.cumsum(w)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    while idx < w.size - 1 and w[idx] == 0.0:
        idx += 1
    return min(idx, w.size - 1)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def check_unbiasedness(family, probs=DEFAULT_PROBS6, losses=DEFAULT_LOSSES6, rounds=100_000,
                       m_tilde=2, seed=0, z=4.0):
    """Empirical mean of each estimate within ``z`` standard errors of the true loss."""
    rng = make_generator(seed, 0, f"unbiased-{family}")
    est = estimate_samples(family, probs, losses, rounds, rng, m_tilde)
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / math.sqrt(rounds)
    dev = np.abs(mean - np.asarray(losses))
    ok = np.where(se > 0, dev <= z * se, dev <= 1e-12)
    worst = float(np.max(dev / np.where(se > 0, se, np.inf)))
    return CheckResult(f"unbiasedness[{family}]", bool(ok.all()),
                       f"max |mean - loss| / stderr = {worst:.3f} (limit {z})",
                       {"mean": mean, "stderr": se, "losses": np.asarray(losses)})


def check_two_step_marginal(probs=DEFAULT_PROBS5, draws=100_000, seed=0, level=0.999):
    """Chi-square test that the first two-step draw ``I`` follows ``probs``."""
    rng = make_generator(seed, 0, "two-step-marginal")
    pairs = two_step_draws(probs, draws, rng)
    counts = np.bincount(pairs[:, 0], minlength=len(probs))
    stat, dof = chi_square_gof(counts, probs)
    crit = float(chi2.ppf(level, dof))
    return CheckResult("two-step marginal", stat < crit,
                       f"chi2 = {stat:.3f}, dof = {dof}, critical({level}) = {crit:.3f}",
                       {"counts": counts, "statistic": stat, "dof": dof, "critical": crit})


def check_two_step_joint(probs=DEFAULT_PROBS5, draws=100_000, seed=0, divisor=5.0, z=3.0):
    """Every pair frequency at least ``p_i p_j / divisor`` minus ``z`` binomial stderrs."""
    rng = make_generator(seed, 0, "two-step-joint")
    p = np.asarray(probs, dtype=float)
    K = p.size
    pairs = two_step_draws(p, draws, rng)
    freq = np.bincount(pairs[:, 0] * K + pairs[:, 1], minlength=K * K).reshape(K, K) / draws
    floor = np.outer(p, p) / divisor
    se = np.sqrt(floor * (1.0 - floor) / draws)
    margin = freq - (floor - z * se)
    return CheckResult("two-step joint", bool(np.all(margin >= 0)),
                       f"min slack = {float(margin.min()):.3e} over {K * K} pairs",
                       {"freq": freq, "floor": floor, "stderr": se})


def check_tree_vs_naive(K=1000, updates=10_000, grid=10_000, seed=0, rtol=1e-9):
    """Random multiplicative updates, then compare tree sampling with a linear scan."""
    rng = make_generator(seed, 0, "tree-vs-naive")
    tree = WeightTree(np.ones(K))
    naive = np.ones(K)
    leaves = rng.integers(0, K, updates)
    factors = np.exp(rng.normal(0.0, 1.0, updates))
    for i, f in zip(leaves, factors):
        tree.multiply_leaf(int(i), float(f))
        naive[i] *= f
    us = (np.arange(grid) + 0.5) / grid
    mism = sum(tree.sample(float(u)) != naive_sample(naive, u) for u in us)
    p_tree = tree.probabilities()
    p_naive = naive / naive.sum()
    rel = float(np.max(np.abs(p_tree - p_naive) / p_naive))
    ok = mism == 0 and rel <= rtol
    return CheckResult("tree vs naive", ok,
                       f"{mism} index mismatches over {grid} grid points, max relative prob error {rel:.2e}",
                       {"mismatches": int(mism), "max_rel": rel})


def check_ec_suite(c=None, n=10_000, seed=0, tol=1e-12, eta=0.5, B=1.0):
    """Count E(c) midpoint violations of squared loss on [0, 1]."""
    c = ec_constant(ExpConcave(eta, B)) if c is None else c
    samples = sample_triples(n, make_generator(seed, 0, "ec-triples"))
    bad = check_ec_membership(SquaredLoss(), c, samples, tol)
    return CheckResult("E(c) membership", bad == 0,
                       f"{bad} violations of {len(samples)} triples with c = {c:.7g}",
                       {"violations": bad, "c": c})


def check_exp_concavity_suite(eta=0.5, n=10_000, seed=0, tol=1e-12):
    """Midpoint concavity of ``exp(-eta * squared loss)`` on [0, 1]."""
    samples = sample_triples(n, make_generator(seed, 0, "exp-concavity-triples"))
    bad = check_exp_concavity(SquaredLoss(), eta, samples, tol)
    return CheckResult("exp-concavity", bad == 0,
                       f"{bad} violations of {len(samples)} triples with eta = {eta}",
                       {"violations": bad})


def run_all(seed=0):
    return [
        check_unbiasedness("midpoint", seed=seed),
        check_unbiasedness("two_step", seed=seed),
        check_two_step_marginal(seed=seed),
        check_two_step_joint(seed=seed),
        check_tree_vs_naive(seed=seed),
        check_ec_suite(seed=seed),
        check_exp_concavity_suite(seed=seed),
    ]
