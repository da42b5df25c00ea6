"""Seeded multi-trial experiments, aggregation and CSV/JSON emission.

Trial ``k`` of an experiment draws its learner uniforms from
``make_generator(master_seed, k, "learner")`` and its adversary uniforms from
``make_generator(master_seed, k, "adversary")``, so every trial can be
replayed on its own and the outputs depend only on the configuration.
Trials run one after another; results are stored by trial index before any
aggregation, so running them in another order cannot change the output.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .adversaries import AdversaryConfig, FixedSequenceAdversary
from .engine import simulate
from .exceptions import ConfigurationError, OutputPathError
from .learners import make_learner
from .protocol import GameConfig, run_game
from .rng import ADVERSARY_STREAM, LEARNER_STREAM, generator_metadata, make_generator

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "ExperimentResult",
    "REGRET_FLOOR",
    "chi_square_gof",
    "default_checkpoints",
    "growth_exponent",
    "nearest_rank",
    "run_experiment",
    "run_sweep",
    "slope_fit",
]

ALGORITHMS = ("algo2", "algo3", "algo4", "ewa", "exp3", "uniform")
REGRET_FLOOR = 1e-6
CSV_HEADER = ("trial", "checkpoint", "regret")


def default_checkpoints(T):
    """Powers of two from 64 up to ``T``, with ``T`` itself appended."""
    if T <= 0:
        return (0,)
    points = []
    c = 64
    while c <= T:
        points.append(c)
        c *= 2
    if not points or points[-1] != T:
        points.append(T)
    return tuple(points)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output.

    ``out`` is a directory that receives ``regret.csv`` and ``summary.json``
    (``None`` keeps results in memory).  ``exp3_tuning`` picks the baseline's
    exploration schedule: ``"horizon"`` tunes to ``game.T``, ``"doubling"``
    restarts on epochs of doubling length.  ``engine="reference"`` plays
    through the validated protocol loop instead of the compiled kernels.
    """

    game: GameConfig
    adversary: AdversaryConfig
    algorithm: str
    trials: int = 1
    master_seed: int = 0
    delta: float = 0.05
    checkpoints: tuple | None = None
    out: str | None = None
    exp3_tuning: str = "horizon"
    engine: str = "fast"

    def __post_init__(self):
        if self.checkpoints is None:
            object.__setattr__(self, "checkpoints", default_checkpoints(self.game.T))
        else:
            object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        self.validate()

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise ConfigurationError("trials must be a positive integer")
        if not (0.0 < self.delta < 1.0):
            raise ConfigurationError("delta must lie in (0, 1)")
        cps = self.checkpoints
        if len(cps) == 0:
            raise ConfigurationError("at least one checkpoint is required")
        if any(c < 0 or c > self.game.T for c in cps):
            raise ConfigurationError(f"checkpoints must lie in [0, T={self.game.T}]")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ConfigurationError("checkpoints must be strictly increasing")
        if self.adversary.K != self.game.K:
            raise ConfigurationError(f"adversary K={self.adversary.K} differs from game K={self.game.K}")
        if self.exp3_tuning not in ("horizon", "doubling"):
            raise ConfigurationError("exp3_tuning must be 'horizon' or 'doubling'")
        if self.engine not in ("fast", "reference"):
            raise ConfigurationError("engine must be 'fast' or 'reference'")

    def make_learner(self):
        horizon = None
        if self.algorithm == "exp3" and self.exp3_tuning == "horizon":
            horizon = max(self.game.T, 1)
        return make_learner(self.algorithm, self.game, exp3_horizon=horizon)

    def make_adversary(self, trial):
        rng = make_generator(self.master_seed, trial, ADVERSARY_STREAM)
        return self.adversary.build(rng, m=self.game.m, T=self.game.T)

    def echo(self):
        """JSON-ready description of the configuration (without the output path)."""
        adv = asdict(self.adversary)
        if adv["means"] is not None:
            adv["means"] = list(adv["means"])
        return {
            "game": asdict(self.game),
            "adversary": adv,
            "algorithm": self.algorithm,
            "trials": int(self.trials),
            "master_seed": self.master_seed,
            "delta": self.delta,
            "checkpoints": list(self.checkpoints),
            "exp3_tuning": self.exp3_tuning,
            "engine": self.engine,
        }


def nearest_rank(values, q):
    """Empirical ``q``-quantile: the ``ceil(q n)``-th smallest value (rank at least 1)."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("quantile of an empty sample")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    rank = max(1, math.ceil(q * x.size - 1e-12))
    return float(x[rank - 1])


def slope_fit(points):
    """Least-squares slope through ``(x, y)`` points."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("slope_fit needs at least two (x, y) points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("slope_fit points must be finite")
    x, y = pts[:, 0], pts[:, 1]
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("slope_fit needs at least two distinct x values")
    return float(dx @ (y - y.mean())) / sxx


def growth_exponent(checkpoints, regrets, floor=REGRET_FLOOR):
    """Slope of ``log max(regret, floor)`` against ``log T`` over positive checkpoints."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    pts = [(math.log(c), math.log(max(float(r), floor)))
           for c, r in zip(checkpoints, regrets) if c > 0]
    return slope_fit(pts)


def chi_square_gof(counts, probs, min_expected=5.0):
    """Pearson goodness-of-fit statistic and degrees of freedom.

    Zero-probability cells are dropped (an observation in one makes the
    statistic infinite).  Cells whose expected count is below
    ``min_expected`` are pooled into one cell; if that pool is itself too
    small it is merged into the smallest remaining cell.
    """
    O = np.asarray(counts, dtype=float).reshape(-1)
    p = np.asarray(probs, dtype=float).reshape(-1)
    if O.shape != p.shape:
        raise ValueError(f"{O.size} counts for {p.size} probabilities")
    if np.any(O < 0) or np.any(p < 0):
        raise ValueError("counts and probabilities must be nonnegative")
    N = O.sum()
    if N < 1:
        raise ValueError("need at least one observation")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must sum to 1")
    zero = p == 0
    if np.any(O[zero] > 0):
        return math.inf, int(np.count_nonzero(~zero)) - 1
    O, E = O[~zero], N * p[~zero]
    small = E < min_expected
    if np.any(small) and np.count_nonzero(small) < E.size:
        cells_O = list(O[~small]) + [O[small].sum()]
        cells_E = list(E[~small]) + [E[small].sum()]
        if cells_E[-1] < min_expected and len(cells_E) > 1:
            k = int(np.argmin(cells_E[:-1]))
            cells_O[k] += cells_O.pop()
            cells_E[k] += cells_E.pop()
        O, E = np.array(cells_O), np.array(cells_E)
    elif np.any(small):
        O, E = np.array([O.sum()]), np.array([E.sum()])
    stat = float(np.sum((O - E) ** 2 / E))
    return stat, int(E.size) - 1


def _fmt(x):
    return format(float(x), ".17g")


@dataclass
class ExperimentResult:
    """Per-trial checkpoint regrets and their per-checkpoint aggregates."""

    config: ExperimentConfig
    checkpoints: np.ndarray
    regrets: np.ndarray            # (trials, checkpoints)
    learner_losses: np.ndarray     # (trials, checkpoints)
    lam: float | None = None
    mean: np.ndarray = field(init=False)
    stderr: np.ndarray = field(init=False)
    quantile: np.ndarray = field(init=False)
    median: np.ndarray = field(init=False)
    exponent: float | None = field(init=False)

    def __post_init__(self):
        R = self.regrets
        n = R.shape[0]
        self.mean = R.mean(axis=0)
        if n > 1:
            self.stderr = R.std(axis=0, ddof=1) / math.sqrt(n)
        else:
            self.stderr = np.zeros(R.shape[1])
        q = 1.0 - self.config.delta
        self.quantile = np.array([nearest_rank(R[:, k], q) for k in range(R.shape[1])])
        self.median = np.array([nearest_rank(R[:, k], 0.5) for k in range(R.shape[1])])
        positive = self.checkpoints > 0
        if np.count_nonzero(positive) >= 3:
            self.exponent = growth_exponent(self.checkpoints, self.median)
        else:
            self.exponent = None

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for trial in range(self.regrets.shape[0]):
            for k, c in enumerate(self.checkpoints):
                writer.writerow([trial, int(c), _fmt(self.regrets[trial, k])])
        return buf.getvalue()

    def summary(self):
        cps = []
        for k, c in enumerate(self.checkpoints):
            cps.append({
                "checkpoint": int(c),
                "mean": float(self.mean[k]),
                "stderr": float(self.stderr[k]),
                "quantile": float(self.quantile[k]),
                "median": float(self.median[k]),
            })
        return {
            "config": self.config.echo(),
            "lambda": self.lam,
            "quantile_level": 1.0 - self.config.delta,
            "checkpoints": cps,
            "exponent": self.exponent,
            "regret_floor": REGRET_FLOOR,
            "generator": generator_metadata(),
        }

    def to_json(self):
        return json.dumps(self.summary(), sort_keys=True, indent=2) + "\n"

    def write(self, out):
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "regret.csv"), "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(os.path.join(out, "summary.json"), "w", newline="") as fh:
            fh.write(self.to_json())


def _prepare_output(out):
    if out is None:
        return
    if os.path.exists(out) and not os.path.isdir(out):
        raise OutputPathError(f"output path {out!r} exists and is not a directory")
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OutputPathError(f"cannot create output directory {out!r}: {exc}") from None
    for name in ("regret.csv", "summary.json"):
        path = os.path.join(out, name)
        if os.path.exists(path) and not os.access(path, os.W_OK):
            raise OutputPathError(f"cannot write {path!r}")
    if not os.access(out, os.W_OK | os.X_OK):
        raise OutputPathError(f"output directory {out!r} is not writable")


def _play_trial(config, trial):
    learner = config.make_learner()
    adversary = config.make_adversary(trial)
    rng = make_generator(config.master_seed, trial, LEARNER_STREAM)
    cps = config.checkpoints
    if config.engine == "fast":
        res = simulate(learner, adversary, config.game, rng)
        return res.at(cps), res.learner_loss_at(cps), learner
    traj = run_game(learner, adversary, config.game, rng)
    curve = traj.regret_curve()
    cum = np.cumsum(traj.learner_losses())
    reg = np.array([curve[c - 1] if c > 0 else 0.0 for c in cps])
    ll = np.array([cum[c - 1] if c > 0 else 0.0 for c in cps])
    return reg, ll, learner


def run_experiment(config):
    """Play ``config.trials`` independent games and aggregate checkpoint regrets.

    Configuration problems (incompatible budgets, short sequence files,
    unwritable output) raise before any round is played.
    """
    config.validate()
    probe = config.make_learner()
    probe.reset(config.game)          # budget and learning-rate checks
    lam = getattr(probe, "lambda_", None)
    adversary = config.make_adversary(0)
    if isinstance(adversary, FixedSequenceAdversary) and len(adversary) < config.game.T:
        raise ConfigurationError(
            f"sequence file has {len(adversary)} rounds, T={config.game.T} requested")
    _prepare_output(config.out)

    n, k = config.trials, len(config.checkpoints)
    regrets = np.zeros((n, k))
    losses = np.zeros((n, k))
    for trial in range(n):
        regrets[trial], losses[trial], _ = _play_trial(config, trial)
    result = ExperimentResult(config, np.array(config.checkpoints, dtype=np.int64), regrets,
                              losses, lam=None if lam is None else float(lam))
    if config.out is not None:
        result.write(config.out)
    return result


def run_sweep(config, T_list=None, m_list=None):
    """Run one experiment per ``(T, m)`` cell; each cell writes to ``out/T{T}_m{m}``.

    Every cell uses the default checkpoints for its own horizon.
    """
    T_list = list(T_list) if T_list else [config.game.T]
    m_list = list(m_list) if m_list else [config.game.m]
    cells = []
    for T in T_list:
        for m in m_list:
            game = replace(config.game, T=int(T), m=int(m),
                           p=min(config.game.p, int(m)) if config.game.ic else config.game.p)
            out = None if config.out is None else os.path.join(config.out, f"T{T}_m{m}")
            cell = replace(config, game=game, checkpoints=None, out=out)
            cells.append(((int(T), int(m)), run_experiment(cell)))
    return cells
