"""Compiled game loop for long Monte Carlo runs.

:func:`simulate` plays the same game as :func:`limited_advice.protocol.run_game`
with squared loss, but runs the rounds inside numba kernels and keeps only
per-round regret, cumulative learner loss and the sampled pair ``(I, J)``.
It works on the state arrays of an ordinary learner object, draws the same
uniforms in the same order from the learner and adversary streams, and
calls the same tree and update kernels, so both paths produce identical
numbers.  No action validation happens here; the learners' actions are
legal by construction and the reference path checks them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .learners import (
    Exp3,
    MidpointEW,
    TwoStepMidpointEW,
    UniformPair,
    VarianceMidpointEW,
    WeightedAverage,
    _apply_pseudo_losses,
    _choose_midpoint_pair,
    _choose_two_step,
    _exp3_probabilities,
    _inverse_cdf,
    _softmax_into,
    _uniform_index,
    exp3_gamma,
)
from .losses import SquaredLoss

__all__ = ["SimulationResult", "simulate"]

CHUNK = 8192
_TWO_STEP, _PAIR, _UNIFORM, _EWA, _EXP3 = range(5)


@dataclass
class SimulationResult:
    """Per-round trace of one game (index ``t`` = after ``t + 1`` rounds)."""

    regret: np.ndarray
    learner_loss: np.ndarray
    picks: np.ndarray

    def at(self, checkpoints):
        """Regret after each round count in ``checkpoints`` (0 means before play)."""
        out = np.zeros(len(checkpoints))
        for k, c in enumerate(checkpoints):
            if c > 0:
                out[k] = self.regret[c - 1]
        return out

    def learner_loss_at(self, checkpoints):
        out = np.zeros(len(checkpoints))
        for k, c in enumerate(checkpoints):
            if c > 0:
                out[k] = self.learner_loss[c - 1]
        return out


@njit(cache=True)
def _account(pred, Frow, yr, cum, cum_experts, r, regret_out, loss_out):
    d = pred - yr
    cum[0] += d * d
    best = np.inf
    for i in range(Frow.shape[0]):
        e = Frow[i] - yr
        cum_experts[i] += e * e
        if cum_experts[i] < best:
            best = cum_experts[i]
    regret_out[r] = cum[0] - best
    loss_out[r] = cum[0]


@njit(cache=True)
def _pair_prediction(Frow, I, J):
    ref = Frow[I]
    pred = ref
    if I != J:
        pred += 0.5 * (Frow[J] - ref)
    return pred


@njit(cache=True)
def _run_tree_chunk(kind, nodes, cap, counter, L, V, lam, K, mt, use_var, perm, explore,
                    F, y, U, cum, cum_experts, regret_out, loss_out, picks):
    n = F.shape[0]
    count = counter[0]
    vals = np.empty(max(mt, 1))
    one_idx = np.empty(1, dtype=np.int64)
    scale = K / mt if kind == _PAIR else float(K)
    A = 0
    B = 0
    for r in range(n):
        u = U[r]
        Frow = F[r]
        if kind == _TWO_STEP:
            A, B, I, J = _choose_two_step(nodes, cap, K, u)
        else:
            I, J = _choose_midpoint_pair(nodes, cap, K, mt, u, perm, explore)
        picks[r, 0] = I
        picks[r, 1] = J
        _account(_pair_prediction(Frow, I, J), Frow, y[r], cum, cum_experts, r,
                 regret_out, loss_out)
        if kind == _TWO_STEP:
            one_idx[0] = B
            e = Frow[B] - y[r]
            vals[0] = e * e
            e = Frow[A] - y[r]
            count = _apply_pseudo_losses(nodes, cap, count, L, V, lam, scale, one_idx, 1,
                                         vals, e * e, use_var)
        else:
            for j in range(mt):
                e = Frow[explore[j]] - y[r]
                vals[j] = e * e
            e = Frow[I] - y[r]
            count = _apply_pseudo_losses(nodes, cap, count, L, V, lam, scale, explore, mt,
                                         vals, e * e, use_var)
    counter[0] = count


@njit(cache=True)
def _run_baseline_chunk(kind, K, lam, state_i, gammas, Lhat, probs,
                        F, y, U, cum, cum_experts, regret_out, loss_out, picks, fixed_horizon):
    n = F.shape[0]
    for r in range(n):
        Frow = F[r]
        if kind == _UNIFORM:
            I = _uniform_index(U[r, 0], K)
            J = _uniform_index(U[r, 1], K)
            pred = _pair_prediction(Frow, I, J)
        elif kind == _EWA:
            _softmax_into(Lhat, lam, probs)
            ref = Frow[0]
            pred = ref
            for i in range(K):
                pred += probs[i] * (Frow[i] - ref)
            I = -1
            J = -1
        else:
            gamma = gammas[state_i[0]]
            _exp3_probabilities(Lhat, gamma / K, gamma, probs)
            I = _inverse_cdf(probs, U[r, 0])
            J = I
            pred = Frow[I]
        picks[r, 0] = I
        picks[r, 1] = J
        _account(pred, Frow, y[r], cum, cum_experts, r, regret_out, loss_out)
        if kind == _EWA:
            for i in range(K):
                e = Frow[i] - y[r]
                Lhat[i] += e * e
        elif kind == _EXP3:
            e = Frow[I] - y[r]
            Lhat[I] += e * e / probs[I]
            state_i[1] -= 1
            if state_i[1] == 0 and not fixed_horizon:
                state_i[0] += 1
                state_i[1] = 1 << state_i[0]
                for i in range(K):
                    Lhat[i] = 0.0


def _kind(learner):
    if isinstance(learner, TwoStepMidpointEW):
        return _TWO_STEP
    if isinstance(learner, (MidpointEW, VarianceMidpointEW)):
        if getattr(learner, "estimates", "shifted") != "shifted":
            raise ValueError("the compiled engine only runs shifted estimates")
        return _PAIR
    if isinstance(learner, UniformPair):
        return _UNIFORM
    if isinstance(learner, WeightedAverage):
        return _EWA
    if isinstance(learner, Exp3):
        return _EXP3
    raise TypeError(f"no compiled loop for {type(learner).__name__}")


def simulate(learner, adversary, config, rng, chunk=CHUNK):
    """Reset ``learner`` for ``config`` and play ``config.T`` rounds in compiled code."""
    loss = getattr(learner, "loss", None)
    if loss is not None and not isinstance(loss, SquaredLoss):
        raise ValueError("the compiled engine supports squared loss only")
    if adversary.K != config.K:
        raise ValueError(f"adversary has K={adversary.K}, game has K={config.K}")
    kind = _kind(learner)
    learner.reset(config)
    T, K = config.T, config.K
    regret_out = np.zeros(T)
    loss_out = np.zeros(T)
    picks = np.zeros((T, 2), dtype=np.int64)
    cum = np.zeros(1)
    cum_experts = np.zeros(K)
    d = learner.draws_per_round

    if kind in (_TWO_STEP, _PAIR):
        tree = learner.tree_
        counter = np.array([tree.rounds_since_rebuild], dtype=np.int64)
        mt = learner.m_tilde_ if kind == _PAIR else 1
        explore = learner._explore if kind == _PAIR else np.empty(1, dtype=np.int64)
    else:
        if kind == _EXP3:
            Lhat = learner.estimated_losses_
            probs = learner._probs
            fixed = learner.horizon is not None
            state_i = np.array([0, learner._epoch_left], dtype=np.int64)
            gammas = np.array([learner.gamma_] if fixed else
                              [exp3_gamma(K, 1 << k) for k in range(63)])
            lam = 0.0
        elif kind == _EWA:
            Lhat = learner.cumulative_losses_
            probs = learner._probs
            state_i = np.zeros(2, dtype=np.int64)
            gammas = np.zeros(1)
            fixed = True
            lam = learner.lambda_
        else:
            Lhat = np.zeros(K)
            probs = np.zeros(K)
            state_i = np.zeros(2, dtype=np.int64)
            gammas = np.zeros(1)
            fixed = True
            lam = 0.0

    for start in range(0, T, chunk):
        stop = min(T, start + chunk)
        F, y = adversary.block(start, stop)
        F = np.ascontiguousarray(F, dtype=np.float64)
        y = np.ascontiguousarray(y, dtype=np.float64)
        U = rng.random((stop - start, d))
        sl = slice(start, stop)
        if kind in (_TWO_STEP, _PAIR):
            _run_tree_chunk(kind, tree.nodes, tree.capacity, counter, learner.pseudo_losses_,
                            learner.variances_, learner.lambda_, K, mt, learner.use_variance,
                            learner._perm, explore, F, y, U, cum, cum_experts,
                            regret_out[sl], loss_out[sl], picks[sl])
        else:
            _run_baseline_chunk(kind, K, lam, state_i, gammas, Lhat, probs, F, y, U, cum,
                                cum_experts, regret_out[sl], loss_out[sl], picks[sl], fixed)

    learner.t_ = T
    if kind in (_TWO_STEP, _PAIR):
        tree.rounds_since_rebuild = int(counter[0])
    elif kind == _EXP3:
        learner.epoch_ = int(state_i[0])
        learner._epoch_left = int(state_i[1])
        learner.gamma_ = float(gammas[state_i[0]])
    return SimulationResult(regret_out, loss_out, picks)
