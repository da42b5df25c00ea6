"""Prediction with limited expert advice: exponential-weights learners, games and experiments."""

from .adversaries import (
    AdversaryConfig,
    BernoulliAdversary,
    ConstantAdversary,
    FixedSequenceAdversary,
    LowerBoundAdversary,
    load_fixed_sequence,
)
from .learners import (
    Exp3,
    MidpointEW,
    TwoStepMidpointEW,
    UniformPair,
    VarianceMidpointEW,
    WeightedAverage,
    default_lambda,
    ew_probabilities,
)
from .losses import LossSpec, SquaredLoss, ec_constant, lambda_bar
from .protocol import GameConfig, LearnerAction, Trajectory, regret, run_game
from .sumtree import WeightTree

__version__ = "0.1.0"
