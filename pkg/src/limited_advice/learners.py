"""Exponential-weights learners for prediction with limited expert advice.

All sampling learners keep cumulative *shifted* pseudo-losses: every round
the unbiased estimates of all K experts differ from the anchor expert's
observed loss by a quantity that is zero outside the exploration set, and
a common shift cancels in the exponential-weights normalisation.  Only the
explored experts' leaves in the :class:`~limited_advice.sumtree.WeightTree`
are touched, so a round costs O(m log K).

Learners follow the scikit-learn estimator conventions: constructor
arguments are hyperparameters (``get_params``/``set_params`` work), state
set by :meth:`OnlineLearner.reset` ends with an underscore, and
``fit(X, y)`` plays a full game against the forecast matrix ``X``
(shape ``(T, K)``) and outcomes ``y``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .exceptions import ConfigurationError
from .losses import SquaredLoss, lambda_bar
from .protocol import GameConfig, LearnerAction, StepOutcome, Trajectory, play_round, regret
from .rng import as_generator
from .sumtree import WeightTree, _tree_after_update, _tree_descend, _tree_multiply

__all__ = [
    "LEARNERS",
    "Exp3",
    "MidpointEW",
    "OnlineLearner",
    "TwoStepMidpointEW",
    "UniformPair",
    "VarianceMidpointEW",
    "WeightedAverage",
    "default_lambda",
    "ew_probabilities",
    "exp3_gamma",
    "pseudo_loss",
]


# ---------------------------------------------------------------------------
# reference formulas
# ---------------------------------------------------------------------------

def ew_probabilities(L, V, lam):
    """Exponential-weights law ``p_i ∝ exp(-lam L_i + lam^2 V_i)`` in O(K)."""
    L = np.asarray(L, dtype=float)
    V = np.asarray(V, dtype=float)
    if not (np.all(np.isfinite(L)) and np.all(np.isfinite(V))):
        raise ValueError("cumulative statistics must be finite")
    if not (math.isfinite(lam) and lam > 0):
        raise ValueError("lam must be positive")
    z = -lam * L + lam * lam * V
    w = np.exp(z - z.max())
    return w / w.sum()


def pseudo_loss(in_explore, loss_i, anchor_loss, K, m_tilde):
    """Shifted estimate and its variance term ``(K/m~ (loss_i - anchor), that^2)``.

    Zero for experts outside the exploration set.
    """
    if m_tilde < 1:
        raise ValueError("m_tilde must be at least 1")
    if not in_explore:
        return 0.0, 0.0
    lt = K / m_tilde * (loss_i - anchor_loss)
    return lt, lt * lt


def default_lambda(setting, K, m, eta, B):
    """Half the supremum of the admissible learning-rate interval.

    ========  ==================================  =====================
    setting   admissible interval                 returned value
    ========  ==================================  =====================
    algo2     (0, (m-2)/(4K) lam_bar)             (m-2)/(8K) lam_bar
    algo3     (0, m~/(128K) lam_bar)              m~/(256K) lam_bar
    algo4     (0, lam_bar/(352 K^2))              lam_bar/(704 K^2)
    ========  ==================================  =====================

    with ``m~ = max(m - 2, 1)``.  For algo3 the high-probability statement
    is also quoted with ``(m-1)`` in place of ``m~``; the smaller ``m~``
    form is the one the supporting argument establishes, so it is used here.
    """
    lb = lambda_bar(eta, B)
    if K < 1:
        raise ConfigurationError("K must be positive")
    if setting == "algo2":
        if m < 3:
            raise ConfigurationError("algo2 needs m >= 3")
        return 0.5 * (m - 2) / (4.0 * K) * lb
    if setting == "algo3":
        if m < 2:
            raise ConfigurationError("algo3 needs m >= 2")
        return 0.5 * max(m - 2, 1) / (128.0 * K) * lb
    if setting == "algo4":
        if m != 2:
            raise ConfigurationError("algo4 needs m == 2")
        return 0.5 * lb / (352.0 * K * K)
    raise ConfigurationError(f"unknown setting {setting!r}")


def exp3_gamma(K, T):
    """Exploration rate ``min(1, sqrt(K ln K / T))`` for a known horizon ``T``."""
    if T <= 0:
        return 1.0
    return min(1.0, math.sqrt(K * math.log(K) / T))


# ---------------------------------------------------------------------------
# numba kernels shared with the simulation engine
# ---------------------------------------------------------------------------

@njit(cache=True)
def _uniform_index(u, n):
    r = int(u * n)
    return r if r < n else n - 1


@njit(cache=True)
def _pick_subset(perm, K, k, u, offset, out):
    """Partial Fisher-Yates: k distinct experts from k uniforms; ``perm`` is restored."""
    for j in range(k):
        r = j + _uniform_index(u[offset + j], K - j)
        tmp = perm[j]
        perm[j] = perm[r]
        perm[r] = tmp
        out[j] = perm[j]
    for j in range(k - 1, -1, -1):
        r = j + _uniform_index(u[offset + j], K - j)
        tmp = perm[j]
        perm[j] = perm[r]
        perm[r] = tmp


@njit(cache=True)
def _choose_midpoint_pair(nodes, cap, K, k, u, perm, explore):
    I, _ = _tree_descend(nodes, cap, u[0])
    J, _ = _tree_descend(nodes, cap, u[1])
    _pick_subset(perm, K, k, u, 2, explore)
    return I, J


@njit(cache=True)
def _choose_two_step(nodes, cap, K, u):
    A, _ = _tree_descend(nodes, cap, u[0])
    B = _uniform_index(u[1], K)
    if A == B:
        return A, B, A, A
    wa = nodes[cap + A]
    qa = wa / (wa + nodes[cap + B])
    I = A if u[2] < qa else B
    J = A if u[3] < qa else B
    return A, B, I, J


@njit(cache=True)
def _apply_pseudo_losses(nodes, cap, count, L, V, lam, scale, idx, k, losses, anchor, use_var):
    for j in range(k):
        i = idx[j]
        lt = scale * (losses[j] - anchor)
        v = lt * lt if use_var else 0.0
        L[i] += lt
        V[i] += v
        _tree_multiply(nodes, cap, i, math.exp(-lam * lt + lam * lam * v))
        count = _tree_after_update(nodes, cap, count)
    return count


@njit(cache=True)
def _softmax_into(L, lam, out):
    K = L.shape[0]
    zmax = -lam * L[0]
    for i in range(1, K):
        z = -lam * L[i]
        if z > zmax:
            zmax = z
    total = 0.0
    for i in range(K):
        out[i] = math.exp(-lam * L[i] - zmax)
        total += out[i]
    for i in range(K):
        out[i] /= total


@njit(cache=True)
def _exp3_probabilities(Lhat, eta, gamma, out):
    K = Lhat.shape[0]
    _softmax_into(Lhat, eta, out)
    for i in range(K):
        out[i] = (1.0 - gamma) * out[i] + gamma / K


@njit(cache=True)
def _inverse_cdf(probs, u):
    """First index whose cumulative mass exceeds ``u``; skips zero-mass tails."""
    K = probs.shape[0]
    acc = 0.0
    last = 0
    for i in range(K):
        if probs[i] > 0.0:
            last = i
        acc += probs[i]
        if u < acc and probs[i] > 0.0:
            return i
    return last


# ---------------------------------------------------------------------------
# estimator classes
# ---------------------------------------------------------------------------

class OnlineLearner(BaseEstimator):
    """Shared plumbing: budget checks, ``fit``/``partial_fit`` over a forecast matrix."""

    setting = None

    def _budget(self, K):
        """``(p, m, ic)`` the learner plays with on K experts."""
        raise NotImplementedError

    def _check_config(self, config):
        pass

    def _loss(self):
        loss = getattr(self, "loss", None)
        return SquaredLoss() if loss is None else loss

    def _resolve_lambda(self, config):
        lam = getattr(self, "lam", None)
        if lam is not None and config.lam is not None and lam != config.lam:
            raise ConfigurationError(f"learner lam={lam} conflicts with game lam={config.lam}")
        lam = lam if lam is not None else config.lam
        if lam is None:
            spec = self._loss().spec
            lam = default_lambda(self.setting, config.K, config.m, spec.eta, spec.B)
        if not (math.isfinite(lam) and lam > 0):
            raise ConfigurationError("lam must be positive")
        return float(lam)

    def reset(self, config):
        self._check_config(config)
        self.config_ = config
        self.K_ = config.K
        self.t_ = 0
        self._start(config)
        return self

    def _start(self, config):
        raise NotImplementedError

    @property
    def draws_per_round(self):
        raise NotImplementedError

    def act(self, u):
        raise NotImplementedError

    def observe(self, losses):
        raise NotImplementedError

    def _validate_data(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        check_consistent_length(X, y)
        return X, y

    def fit(self, X, y):
        """Play a fresh game: round ``t`` uses forecasts ``X[t]`` and outcome ``y[t]``."""
        from .adversaries import FixedSequenceAdversary

        X, y = self._validate_data(X, y)
        p, m, ic = self._budget(X.shape[1])
        config = GameConfig(K=X.shape[1], p=p, m=m, ic=ic, T=X.shape[0])
        self._rng = as_generator(getattr(self, "random_state", None))
        self.reset(config)
        self.trajectory_ = Trajectory(config)
        self._play(FixedSequenceAdversary(X, y), X.shape[0])
        return self

    def partial_fit(self, X, y):
        """Continue the current game (or start one) on more rounds."""
        from .adversaries import FixedSequenceAdversary

        X, y = self._validate_data(X, y)
        if not hasattr(self, "trajectory_"):
            p, m, ic = self._budget(X.shape[1])
            config = GameConfig(K=X.shape[1], p=p, m=m, ic=ic, T=0)
            self._rng = as_generator(getattr(self, "random_state", None))
            self.reset(config)
            self.trajectory_ = Trajectory(config)
        elif X.shape[1] != self.K_:
            raise ValueError(f"X has {X.shape[1]} experts, learner was started with {self.K_}")
        start = len(self.trajectory_.rounds)
        adversary = FixedSequenceAdversary(X, y, offset=start)
        self._play(adversary, X.shape[0], start)
        return self

    def _play(self, adversary, n, start=0):
        loss = self._loss()
        for t in range(start, start + n):
            self.trajectory_.rounds.append(
                play_round(self, adversary, t, self._rng, self.config_, loss))
        self.regret_ = regret(self.trajectory_)

    def score(self, X=None, y=None):
        """Negative regret of the game played by the last ``fit``."""
        check_is_fitted(self, "trajectory_")
        return -self.regret_


class _TreeLearner(OnlineLearner):
    """Exponential weights over shifted pseudo-losses, sampled from a sum tree."""

    use_variance = True

    def _budget(self, K):
        return 2, self.m, self.ic

    def _start(self, config):
        K = config.K
        self.lambda_ = self._resolve_lambda(config)
        self.pseudo_losses_ = np.zeros(K)
        self.variances_ = np.zeros(K)
        self.tree_ = WeightTree(np.ones(K))
        self.last_updated_ = ()
        self._perm = np.arange(K, dtype=np.int64)
        self._pending = None

    def probabilities(self):
        """Current sampling law read off the tree."""
        check_is_fitted(self, "tree_")
        return self.tree_.probabilities()

    def _update_shifted(self, idx, losses, anchor, scale):
        tree = self.tree_
        tree.rounds_since_rebuild = _apply_pseudo_losses(
            tree.nodes, tree.capacity, tree.rounds_since_rebuild,
            self.pseudo_losses_, self.variances_, self.lambda_, scale,
            idx, len(idx), losses, anchor, self.use_variance)
        self.last_updated_ = tuple(int(i) for i in idx)

    @staticmethod
    def _played(I, J):
        if I == J:
            return (I,), (1.0,)
        return (I, J), (0.5, 0.5)


class _ExploringPairLearner(_TreeLearner):
    """Two independent EW draws played at their midpoint plus uniform exploration."""

    def _explore_size(self, m):
        raise NotImplementedError

    def _start(self, config):
        super()._start(config)
        self.m_tilde_ = self._explore_size(config.m)
        self._explore = np.empty(self.m_tilde_, dtype=np.int64)

    @property
    def draws_per_round(self):
        return 2 + self.m_tilde_

    def _observed(self, I, J, U):
        return tuple(sorted(set(U) | {I, J}))

    def act(self, u):
        tree = self.tree_
        u = np.asarray(u, dtype=np.float64)
        I, J = _choose_midpoint_pair(tree.nodes, tree.capacity, self.K_, self.m_tilde_,
                                     u, self._perm, self._explore)
        I, J = int(I), int(J)
        U = tuple(int(i) for i in self._explore)
        S, w = self._played(I, J)
        C = self._observed(I, J, U)
        self._pending = (I, U)
        return StepOutcome(LearnerAction(S, w, C), {"I": I, "J": J}, U)

    def observe(self, losses):
        I, U = self._pending
        self._pending = None
        anchor = losses[I]
        idx = np.array(U, dtype=np.int64)
        vals = np.array([losses[i] for i in U], dtype=np.float64)
        self._update_shifted(idx, vals, anchor, self.K_ / self.m_tilde_)
        self.t_ += 1


class MidpointEW(_ExploringPairLearner):
    """EW learner with expected constant regret (``p = 2``, ``m >= 3``).

    Draws two experts independently from the EW law, plays their midpoint
    and explores ``m - 2`` uniformly chosen experts; no variance correction.

    Parameters
    ----------
    m : int
        Observation budget, at least 3.
    ic : bool
        Inclusion condition of the game; the learner always observes its
        played experts so either value is legal.
    lam : float, optional
        Learning rate; defaults to :func:`default_lambda` for ``"algo2"``.
    loss : Loss, optional
        Defaults to squared loss on ``[0, 1]``.
    random_state : int, Generator or None
        Learner stream used by ``fit``/``partial_fit``.
    """

    setting = "algo2"
    use_variance = False

    def __init__(self, m=3, ic=False, lam=None, loss=None, random_state=None):
        self.m = m
        self.ic = ic
        self.lam = lam
        self.loss = loss
        self.random_state = random_state

    def _check_config(self, config):
        if config.p != 2 or config.m < 3:
            raise ConfigurationError("MidpointEW needs p = 2 and m >= 3")
        if config.m != self.m:
            raise ConfigurationError(f"learner m={self.m} but game m={config.m}")

    def _explore_size(self, m):
        return m - 2


class VarianceMidpointEW(_ExploringPairLearner):
    """EW learner with high-probability constant regret.

    Valid for ``p = 2`` with ``m >= 3``, or ``m = 2`` without the inclusion
    condition.  The EW exponent carries an optimistic ``+lam^2 V`` term
    built from squared pseudo-losses.  With ``m = 2`` only the first draw
    ``I`` is observed together with one exploration expert.

    ``estimates="raw"`` keeps the unshifted estimates and updates all K
    leaves every round; it samples the same experts and exists to check
    that equivalence.
    """

    setting = "algo3"

    def __init__(self, m=3, ic=False, lam=None, loss=None, estimates="shifted",
                 random_state=None):
        self.m = m
        self.ic = ic
        self.lam = lam
        self.loss = loss
        self.estimates = estimates
        self.random_state = random_state

    def _check_config(self, config):
        if config.p != 2:
            raise ConfigurationError("VarianceMidpointEW needs p = 2")
        if not (config.m >= 3 or (config.m == 2 and not config.ic)):
            raise ConfigurationError("VarianceMidpointEW needs m >= 3, or m = 2 with ic=False")
        if config.m != self.m or bool(config.ic) != bool(self.ic):
            raise ConfigurationError("learner (m, ic) does not match the game")
        if self.estimates not in ("shifted", "raw"):
            raise ConfigurationError(f"unknown estimates mode {self.estimates!r}")

    def _explore_size(self, m):
        return max(m - 2, 1)

    def _observed(self, I, J, U):
        if self.config_.m >= 3:
            return tuple(sorted(set(U) | {I, J}))
        return tuple(sorted(set(U) | {I}))

    def observe(self, losses):
        if self.estimates == "shifted":
            return super().observe(losses)
        I, U = self._pending
        self._pending = None
        anchor = losses[I]
        scale = self.K_ / self.m_tilde_
        lam = self.lambda_
        for i in range(self.K_):
            if i in U:
                lhat = scale * losses[i] + (1.0 - scale) * anchor
            else:
                lhat = anchor
            v = (lhat - anchor) ** 2
            self.pseudo_losses_[i] += lhat
            self.variances_[i] += v
            self.tree_.multiply_leaf(i, math.exp(-lam * lhat + lam * lam * v))
        self.last_updated_ = tuple(range(self.K_))
        self.t_ += 1


class TwoStepMidpointEW(_TreeLearner):
    """EW learner for ``p = m = 2`` under the inclusion condition.

    Draws ``A`` from the EW law and ``B`` uniformly, observes ``{A, B}``,
    then draws the two played experts independently from the EW law
    restricted to ``{A, B}``.  Only ``B``'s pseudo-loss ``K (l_B - l_A)``
    is updated, which is zero when ``B = A``.
    """

    setting = "algo4"

    def __init__(self, lam=None, loss=None, random_state=None):
        self.lam = lam
        self.loss = loss
        self.random_state = random_state

    def _budget(self, K):
        return 2, 2, True

    def _check_config(self, config):
        if not (config.p == 2 and config.m == 2 and config.ic):
            raise ConfigurationError("TwoStepMidpointEW needs p = m = 2 and ic=True")

    draws_per_round = 4

    def act(self, u):
        tree = self.tree_
        A, B, I, J = _choose_two_step(tree.nodes, tree.capacity, self.K_,
                                      np.asarray(u, dtype=np.float64))
        A, B, I, J = int(A), int(B), int(I), int(J)
        S, w = self._played(I, J)
        self._pending = (A, B)
        return StepOutcome(LearnerAction(S, w, tuple(sorted({A, B}))),
                           {"A": A, "B": B, "I": I, "J": J}, (B,))

    def observe(self, losses):
        A, B = self._pending
        self._pending = None
        self._update_shifted(np.array([B], dtype=np.int64),
                             np.array([losses[B]], dtype=np.float64),
                             losses[A], float(self.K_))
        self.t_ += 1


class WeightedAverage(OnlineLearner):
    """Full-information exponentially weighted average of all K forecasts.

    Needs ``p = m = K``; the learning rate defaults to the loss's
    exp-concavity ``eta``.
    """

    setting = "ewa"
    draws_per_round = 0

    def __init__(self, lam=None, loss=None):
        self.lam = lam
        self.loss = loss

    def _budget(self, K):
        return K, K, True

    def _check_config(self, config):
        if config.p != config.K or config.m != config.K:
            raise ConfigurationError("WeightedAverage needs p = m = K")

    def _resolve_lambda(self, config):
        if self.lam is None and config.lam is None:
            return float(self._loss().spec.eta)
        return super()._resolve_lambda(config)

    def _start(self, config):
        self.lambda_ = self._resolve_lambda(config)
        self.cumulative_losses_ = np.zeros(config.K)
        self._probs = np.empty(config.K)

    def act(self, u):
        _softmax_into(self.cumulative_losses_, self.lambda_, self._probs)
        S = tuple(range(self.K_))
        return StepOutcome(LearnerAction(S, tuple(float(x) for x in self._probs), S))

    def observe(self, losses):
        for i, v in losses.items():
            self.cumulative_losses_[i] += v
        self.t_ += 1


class Exp3(OnlineLearner):
    """Bandit baseline (``p = m = 1``): EW over importance-weighted losses mixed with uniform.

    With ``horizon`` given, ``gamma = min(1, sqrt(K ln K / horizon))`` and
    ``eta = gamma / K`` stay fixed.  Without it the doubling trick is used:
    epochs of length 1, 2, 4, ... each restart from uniform weights with
    the exploration rate tuned to the epoch length.
    """

    setting = "exp3"
    draws_per_round = 1

    def __init__(self, horizon=None, random_state=None):
        self.horizon = horizon
        self.random_state = random_state

    def _budget(self, K):
        return 1, 1, True

    def _check_config(self, config):
        if config.p != 1 or config.m != 1:
            raise ConfigurationError("Exp3 needs p = m = 1")

    def _start(self, config):
        self.estimated_losses_ = np.zeros(config.K)
        self._probs = np.empty(config.K)
        self.epoch_ = 0
        self._epoch_left = self.horizon if self.horizon is not None else 1
        self.gamma_ = exp3_gamma(config.K, self._epoch_left)
        self._arm = None

    def act(self, u):
        K = self.K_
        _exp3_probabilities(self.estimated_losses_, self.gamma_ / K, self.gamma_, self._probs)
        arm = int(_inverse_cdf(self._probs, float(u[0])))
        self._arm = arm
        return StepOutcome(LearnerAction((arm,), (1.0,), (arm,)), {"I": arm})

    def observe(self, losses):
        arm = self._arm
        self.estimated_losses_[arm] += losses[arm] / self._probs[arm]
        self.t_ += 1
        self._epoch_left -= 1
        if self._epoch_left == 0 and self.horizon is None:
            self.epoch_ += 1
            self._epoch_left = 1 << self.epoch_
            self.gamma_ = exp3_gamma(self.K_, self._epoch_left)
            self.estimated_losses_[:] = 0.0


class UniformPair(OnlineLearner):
    """Plays the midpoint of two independent uniform draws and observes them."""

    setting = "uniform"
    draws_per_round = 2

    def __init__(self, m=2, random_state=None):
        self.m = m
        self.random_state = random_state

    def _budget(self, K):
        return 2, self.m, True

    def _check_config(self, config):
        if config.p != 2 or config.m < 2:
            raise ConfigurationError("UniformPair needs p = 2 and m >= 2")

    def _start(self, config):
        pass

    def act(self, u):
        K = self.K_
        I, J = int(_uniform_index(u[0], K)), int(_uniform_index(u[1], K))
        S, w = _TreeLearner._played(I, J)
        return StepOutcome(LearnerAction(S, w, tuple(sorted({I, J}))), {"I": I, "J": J})

    def observe(self, losses):
        self.t_ += 1


LEARNERS = {
    "algo2": MidpointEW,
    "algo3": VarianceMidpointEW,
    "algo4": TwoStepMidpointEW,
    "ewa": WeightedAverage,
    "exp3": Exp3,
    "uniform": UniformPair,
}


def make_learner(algo, config, exp3_horizon=None):
    """Learner for the CLI/harness id ``algo`` matched to ``config``'s budgets."""
    if algo in ("algo2", "algo3"):
        return LEARNERS[algo](m=config.m, ic=config.ic, lam=config.lam)
    if algo == "algo4":
        return TwoStepMidpointEW(lam=config.lam)
    if algo == "ewa":
        return WeightedAverage(lam=config.lam)
    if algo == "exp3":
        return Exp3(horizon=exp3_horizon)
    if algo == "uniform":
        return UniformPair(m=config.m)
    raise ConfigurationError(f"unknown algorithm {algo!r}")
