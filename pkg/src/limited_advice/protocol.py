"""The game between a learner and an oblivious adversary.

Each round the learner commits to a played set ``S`` with convex weights and
an observed set ``C``; the environment evaluates the combined prediction,
then shows the learner the losses of the experts in ``C`` and nothing else.
Full loss vectors are kept in the :class:`RoundRecord` for regret accounting.

Learners implement::

    reset(config)              # start a fresh game
    draws_per_round            # number of uniforms consumed by act()
    act(u) -> StepOutcome      # u: that many uniforms in [0, 1)
    observe(losses)            # dict {expert: loss} restricted to C

Adversaries implement ``K`` and ``round(t) -> (forecasts, outcome)``.
Expert indices are 0-based throughout.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import RoundError
from .losses import SquaredLoss

__all__ = [
    "ActionViolation",
    "GameConfig",
    "LearnerAction",
    "RoundRecord",
    "StepOutcome",
    "Trajectory",
    "TRAJECTORY_COLUMNS",
    "play_round",
    "regret",
    "run_game",
    "validate_action",
    "write_trajectory_csv",
]

WEIGHT_TOL = 1e-12
TRAJECTORY_COLUMNS = ("t", "played_indices", "observed_indices", "prediction",
                      "learner_loss", "best_expert_running_loss")


@dataclass(frozen=True)
class GameConfig:
    """Budgets of a game: ``p`` experts combined, at most ``m`` observed.

    ``ic`` (inclusion condition) forces the played set inside the observed
    set.  ``lam`` is the learning rate handed to the learner; ``None`` lets
    the learner pick its default.
    """

    K: int
    p: int
    m: int
    ic: bool = False
    T: int = 0
    lam: float | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 1 <= self.p <= self.K:
            raise ValueError(f"p={self.p} must lie in [1, K={self.K}]")
        if not 1 <= self.m <= self.K:
            raise ValueError(f"m={self.m} must lie in [1, K={self.K}]")
        if self.ic and self.p > self.m:
            raise ValueError("the inclusion condition requires p <= m")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if self.lam is not None and not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError("lam must be positive")


@dataclass(frozen=True)
class LearnerAction:
    """Played experts ``S`` (in play order), their weights, and observed set ``C``."""

    S: tuple
    weights: tuple
    C: tuple


@dataclass(frozen=True)
class StepOutcome:
    action: LearnerAction
    sampled: dict = field(default_factory=dict)
    exploration_set: tuple = ()


@dataclass(frozen=True)
class ActionViolation:
    """Why an action is illegal; ``kind`` is one of size, index, inclusion, convexity."""

    kind: str
    message: str

    def __str__(self):
        return f"{self.kind} violation: {self.message}"


def validate_action(action, config):
    """Return ``None`` for a legal action, else the first :class:`ActionViolation`.

    Played sets may be smaller than ``p`` (a pair that collapses to one
    expert) and observed sets smaller than ``m``.
    """
    S, C, w = tuple(action.S), tuple(action.C), tuple(action.weights)
    for i in S + C:
        if not (isinstance(i, (int, np.integer)) and 0 <= i < config.K):
            return ActionViolation("index", f"expert {i!r} not in [0, {config.K})")
    if len(S) == 0 or len(set(S)) != len(S) or len(S) > config.p:
        return ActionViolation("size", f"played set {S} must hold 1..{config.p} distinct experts")
    if len(set(C)) != len(C) or len(C) > config.m:
        return ActionViolation("size", f"observed set {C} must hold at most {config.m} distinct experts")
    if config.ic and not set(S) <= set(C):
        return ActionViolation("inclusion", f"played set {S} not contained in observed set {C}")
    if len(w) != len(S):
        return ActionViolation("convexity", f"{len(w)} weights for {len(S)} played experts")
    if any(not math.isfinite(x) or x < 0 for x in w):
        return ActionViolation("convexity", f"weights {w} must be nonnegative")
    if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
        return ActionViolation("convexity", f"weights sum to {math.fsum(w)!r}, not 1")
    return None


@dataclass(frozen=True)
class RoundRecord:
    t: int
    action: LearnerAction
    prediction: float
    learner_loss: float
    expert_losses: np.ndarray


@dataclass
class Trajectory:
    config: GameConfig
    rounds: list = field(default_factory=list)

    def learner_losses(self):
        return np.array([r.learner_loss for r in self.rounds], dtype=float)

    def expert_losses(self):
        if not self.rounds:
            return np.empty((0, self.config.K))
        return np.vstack([r.expert_losses for r in self.rounds])

    def regret_curve(self):
        """Regret after each round, accumulated in round order."""
        out = np.empty(len(self.rounds))
        cum_learner = 0.0
        cum_experts = np.zeros(self.config.K)
        for k, r in enumerate(self.rounds):
            cum_learner += r.learner_loss
            cum_experts += r.expert_losses
            out[k] = cum_learner - cum_experts.min()
        return out


def regret(trajectory):
    """Cumulative learner loss minus the smallest cumulative expert loss."""
    if not trajectory.rounds:
        return 0.0
    return float(trajectory.regret_curve()[-1])


def best_expert(trajectory):
    """Index of the best expert in hindsight (lowest index on ties)."""
    totals = trajectory.expert_losses().sum(axis=0)
    return int(np.argmin(totals))


def play_round(learner, adversary, t, rng, config, loss=None):
    """Run round ``t``: draw uniforms, act, validate, reveal the observed losses."""
    loss = SquaredLoss() if loss is None else loss
    u = rng.random(learner.draws_per_round)
    outcome = learner.act(u)
    action = outcome.action
    violation = validate_action(action, config)
    if violation is not None:
        raise RoundError(t, violation)

    forecasts, y = adversary.round(t)
    forecasts = np.asarray(forecasts, dtype=float)
    # centred on the first played forecast so that equal forecasts combine exactly
    ref = forecasts[action.S[0]]
    prediction = ref
    for i, w in zip(action.S, action.weights):
        prediction += w * (forecasts[i] - ref)
    expert_losses = np.asarray(loss(forecasts, y), dtype=float)
    learner_loss = float(loss(prediction, y))
    learner.observe({int(i): float(expert_losses[i]) for i in action.C})
    return RoundRecord(t, action, float(prediction), learner_loss, expert_losses)


def run_game(learner, adversary, config, rng, loss=None):
    """Reset ``learner`` for ``config`` and play ``config.T`` rounds."""
    if adversary.K != config.K:
        raise ValueError(f"adversary has K={adversary.K}, game has K={config.K}")
    learner.reset(config)
    traj = Trajectory(config)
    for t in range(config.T):
        traj.rounds.append(play_round(learner, adversary, t, rng, config, loss))
    return traj


def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory_csv(trajectory, dest=None):
    """Serialise a trajectory; returns the text when ``dest`` is None.

    Index lists are ``;``-separated.  Floats use 17 significant digits.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    cum = np.zeros(trajectory.config.K)
    for r in trajectory.rounds:
        cum += r.expert_losses
        writer.writerow([
            r.t,
            ";".join(str(i) for i in r.action.S),
            ";".join(str(i) for i in r.action.C),
            _fmt(r.prediction),
            _fmt(r.learner_loss),
            _fmt(cum.min()),
        ])
    text = buf.getvalue()
    if dest is None:
        return text
    with open(dest, "w", newline="") as fh:
        fh.write(text)
    return text
