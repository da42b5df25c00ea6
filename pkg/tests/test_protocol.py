import hashlib
from pathlib import Path

import numpy as np
import pytest

from limited_advice import BernoulliAdversary, SquaredLoss, VarianceMidpointEW
from limited_advice.adversaries import ConstantAdversary, FixedSequenceAdversary
from limited_advice.exceptions import RoundError
from limited_advice.learners import MidpointEW, TwoStepMidpointEW, UniformPair
from limited_advice.losses import Loss
from limited_advice.protocol import (
    TRAJECTORY_COLUMNS,
    GameConfig,
    LearnerAction,
    RoundRecord,
    StepOutcome,
    Trajectory,
    best_expert,
    play_round,
    regret,
    run_game,
    validate_action,
    write_trajectory_csv,
)
from limited_advice.rng import make_generator

GOLDEN = Path(__file__).parent / "golden"


class Scripted:
    """Plays a fixed action every round and records what it is shown."""

    draws_per_round = 0

    def __init__(self, S, weights, C):
        self.action = LearnerAction(tuple(S), tuple(weights), tuple(C))
        self.seen = []

    def reset(self, config):
        self.seen = []

    def act(self, u):
        return StepOutcome(self.action)

    def observe(self, losses):
        self.seen.append(dict(losses))


class Spy:
    """Wraps a learner and checks it is only shown losses from its observed set."""

    def __init__(self, inner):
        self.inner = inner
        self.shown = []

    @property
    def draws_per_round(self):
        return self.inner.draws_per_round

    def reset(self, config):
        self.inner.reset(config)

    def act(self, u):
        out = self.inner.act(u)
        self._C = set(out.action.C)
        return out

    def observe(self, losses):
        assert set(losses) == self._C
        self.shown.append(set(losses))
        self.inner.observe(losses)


class TestValidateAction:
    def test_inclusion_violation(self):
        cfg = GameConfig(K=5, p=2, m=2, ic=True)
        v = validate_action(LearnerAction((0, 1), (0.5, 0.5), (0, 2)), cfg)
        assert v.kind == "inclusion"

    def test_convexity_violation(self):
        cfg = GameConfig(K=5, p=2, m=3)
        v = validate_action(LearnerAction((0, 1), (0.6, 0.6), (0, 1)), cfg)
        assert v.kind == "convexity"
        assert "convexity" in str(v)

    def test_ok(self):
        cfg = GameConfig(K=5, p=2, m=3, ic=True)
        assert validate_action(LearnerAction((0, 1), (0.5, 0.5), (0, 1, 4)), cfg) is None

    @pytest.mark.parametrize("action,kind", [
        (LearnerAction((0, 5), (0.5, 0.5), (0,)), "index"),
        (LearnerAction((0, 1, 2), (0.2, 0.3, 0.5), (0,)), "size"),
        (LearnerAction((), (), (0,)), "size"),
        (LearnerAction((1, 1), (0.5, 0.5), (1,)), "size"),
        (LearnerAction((0,), (1.0,), (0, 1, 2, 3)), "size"),
        (LearnerAction((0, 1), (1.5, -0.5), (0,)), "convexity"),
        (LearnerAction((0, 1), (1.0,), (0,)), "convexity"),
    ])
    def test_violations(self, action, kind):
        assert validate_action(action, GameConfig(K=5, p=2, m=3)).kind == kind

    def test_smaller_sets_are_legal(self):
        cfg = GameConfig(K=5, p=2, m=3, ic=True)
        assert validate_action(LearnerAction((2,), (1.0,), (2,)), cfg) is None

    @pytest.mark.parametrize("kw", [dict(K=0, p=1, m=1), dict(K=3, p=4, m=1), dict(K=3, p=1, m=0),
                                    dict(K=3, p=3, m=2, ic=True), dict(K=3, p=1, m=1, T=-1),
                                    dict(K=3, p=1, m=1, lam=0.0)])
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            GameConfig(**kw)


class TestPlayRound:
    def test_identical_experts(self):
        cfg = GameConfig(K=3, p=2, m=2)
        rec = play_round(Scripted((0, 1), (0.5, 0.5), (0, 1)), ConstantAdversary(3, 0.4), 0,
                         make_generator(0), cfg)
        assert rec.prediction == pytest.approx(0.4)
        assert rec.learner_loss == pytest.approx(0.16)

    def test_midpoint_of_zero_and_one(self):
        adv = FixedSequenceAdversary([[0.0, 1.0]], [0.0])
        cfg = GameConfig(K=2, p=2, m=2)
        rec = play_round(Scripted((0, 1), (0.5, 0.5), (0, 1)), adv, 0, make_generator(0), cfg)
        assert rec.learner_loss == 0.25
        np.testing.assert_array_equal(rec.expert_losses, [0.0, 1.0])

    def test_only_observed_losses_revealed(self):
        adv = FixedSequenceAdversary([[0.1, 0.2, 0.3, 0.4]], [0.0])
        learner = Scripted((0,), (1.0,), (0, 2))
        play_round(learner, adv, 0, make_generator(0), GameConfig(K=4, p=1, m=2))
        assert set(learner.seen[0]) == {0, 2}

    def test_invalid_action_raises_before_disclosure(self):
        adv = FixedSequenceAdversary([[0.1, 0.2, 0.3]], [0.0])
        learner = Scripted((0, 1), (0.5, 0.5), (0, 2))
        with pytest.raises(RoundError) as err:
            play_round(learner, adv, 0, make_generator(0), GameConfig(K=3, p=2, m=2, ic=True))
        assert err.value.violation.kind == "inclusion"
        assert learner.seen == []

    def test_first_round_uniform(self):
        # fresh learner: each expert is drawn first with frequency ~ 1/K
        cfg = GameConfig(K=4, p=2, m=3)
        learner = VarianceMidpointEW(m=3)
        rng = make_generator(5)
        counts = np.zeros(4)
        for _ in range(4000):
            learner.reset(cfg)
            counts[learner.act(rng.random(learner.draws_per_round)).sampled["I"]] += 1
        assert np.all(np.abs(counts / 4000 - 0.25) < 4 * np.sqrt(0.25 * 0.75 / 4000))

    @pytest.mark.parametrize("make,cfg", [
        (lambda: VarianceMidpointEW(m=4), GameConfig(K=7, p=2, m=4, T=300)),
        (lambda: VarianceMidpointEW(m=2), GameConfig(K=7, p=2, m=2, T=300)),
        (lambda: MidpointEW(m=5), GameConfig(K=7, p=2, m=5, T=300)),
        (lambda: TwoStepMidpointEW(), GameConfig(K=7, p=2, m=2, ic=True, T=300)),
        (lambda: UniformPair(m=2), GameConfig(K=7, p=2, m=2, ic=True, T=300)),
    ])
    def test_information_hiding(self, make, cfg):
        spy = Spy(make())
        adv = BernoulliAdversary(np.linspace(0.2, 0.8, 7), make_generator(2, 0, "adversary"))
        run_game(spy, adv, cfg, make_generator(2))
        assert len(spy.shown) == cfg.T
        assert all(len(s) <= cfg.m for s in spy.shown)


class TestRegret:
    def test_empty_game(self):
        traj = run_game(Scripted((0,), (1.0,), (0,)), ConstantAdversary(2), GameConfig(K=2, p=1, m=1, T=0),
                        make_generator(0))
        assert traj.rounds == []
        assert regret(traj) == 0.0

    def test_midpoint_against_perfect_expert(self):
        adv = FixedSequenceAdversary([[0.0, 1.0]] * 4, [0.0] * 4)
        traj = run_game(Scripted((0, 1), (0.5, 0.5), (0, 1)), adv, GameConfig(K=2, p=2, m=2, T=4),
                        make_generator(0))
        assert regret(traj) == 1.0

    def test_playing_best_expert(self):
        adv = FixedSequenceAdversary([[0.0, 1.0]] * 4, [0.0] * 4)
        traj = run_game(Scripted((0,), (1.0,), (0,)), adv, GameConfig(K=2, p=1, m=1, T=4), make_generator(0))
        assert regret(traj) == 0.0

    def test_direct_sum(self):
        # losses 0.1 and 0.3 per round, learner always on the worse expert
        class Fixed(Loss):
            spec = SquaredLoss().spec

            def evaluate(self, x, y):
                return np.asarray(x, dtype=float)

        adv = FixedSequenceAdversary([[0.1, 0.3]] * 10, [0.0] * 10)
        cfg = GameConfig(K=2, p=1, m=1, T=10)
        traj = run_game(Scripted((1,), (1.0,), (1,)), adv, cfg, make_generator(0), loss=Fixed())
        assert regret(traj) == pytest.approx(2.0, abs=1e-12)
        assert best_expert(traj) == 0

    @pytest.mark.parametrize("T", [1, 17, 200])
    def test_identical_experts_zero_regret(self, T):
        cfg = GameConfig(K=5, p=2, m=4, T=T)
        traj = run_game(VarianceMidpointEW(m=4), ConstantAdversary(5, 0.4), cfg, make_generator(T))
        assert regret(traj) == 0.0

    def test_regret_dominates_each_fixed_expert(self):
        cfg = GameConfig(K=6, p=2, m=3, T=250)
        adv = BernoulliAdversary(np.linspace(0.3, 0.7, 6), make_generator(4, 0, "adversary"))
        traj = run_game(VarianceMidpointEW(m=3), adv, cfg, make_generator(4))
        total = traj.learner_losses().sum()
        per_expert = traj.expert_losses().sum(axis=0)
        r = regret(traj)
        assert all(r >= total - e - 1e-9 for e in per_expert)
        assert r == pytest.approx(total - per_expert.min(), abs=1e-9)

    def test_best_expert_ties_lowest_index(self):
        traj = Trajectory(GameConfig(K=3, p=1, m=1))
        act = LearnerAction((0,), (1.0,), (0,))
        traj.rounds.append(RoundRecord(0, act, 0.0, 0.0, np.array([0.5, 0.2, 0.2])))
        assert best_expert(traj) == 1


class ShiftedSquaredLoss(Loss):
    """Squared loss plus an outcome-dependent constant; dyadic so shifts are exact."""

    spec = SquaredLoss().spec

    def evaluate(self, x, y):
        return (np.asarray(x, dtype=float) - y) ** 2 + np.where(np.asarray(y) > 0.5, 0.5, 0.25)


def test_common_shift_invariance():
    rng = np.random.default_rng(7)
    T, K = 400, 6
    F = rng.choice([0.0, 0.5, 1.0], size=(T, K))
    y = rng.choice([0.0, 1.0], size=T)
    cfg = GameConfig(K=K, p=2, m=4, T=T)
    runs = []
    for loss in (SquaredLoss(), ShiftedSquaredLoss()):
        learner = VarianceMidpointEW(m=4, loss=loss, lam=0.05)
        traj = run_game(learner, FixedSequenceAdversary(F, y), cfg, make_generator(11), loss=loss)
        runs.append(traj)
    a, b = runs
    assert [r.action for r in a.rounds] == [r.action for r in b.rounds]
    assert regret(a) == pytest.approx(regret(b), abs=1e-9)


class TestTrajectoryCsv:
    def make(self):
        cfg = GameConfig(K=4, p=2, m=3, T=100)
        adv = BernoulliAdversary([0.2, 0.4, 0.6, 0.8], make_generator(1, 0, "adversary"))
        return run_game(VarianceMidpointEW(m=3), adv, cfg, make_generator(1, 0, "learner"))

    def test_golden(self):
        text = write_trajectory_csv(self.make())
        golden = (GOLDEN / "trajectory_algo3_K4_T100.csv").read_text()
        assert text == golden
        assert hashlib.sha256(text.encode()).hexdigest() == hashlib.sha256(golden.encode()).hexdigest()

    def test_repeatable(self):
        assert write_trajectory_csv(self.make()) == write_trajectory_csv(self.make())

    def test_format(self, tmp_path):
        traj = self.make()
        dest = tmp_path / "t.csv"
        write_trajectory_csv(traj, dest)
        raw = dest.read_bytes()
        assert b"\r" not in raw
        lines = raw.decode().splitlines()
        assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
        assert len(lines) == 101
        first = lines[1].split(",")
        assert first[0] == "0"
        assert set(first[1].split(";")) <= set(first[2].split(";"))
        assert float(lines[-1].split(",")[5]) == traj.expert_losses().sum(axis=0).min()

    def test_float_precision(self):
        adv = FixedSequenceAdversary([[0.1, 0.7]], [0.0])
        traj = run_game(Scripted((0, 1), (0.5, 0.5), (0, 1)), adv, GameConfig(K=2, p=2, m=2, T=1),
                        make_generator(0))
        row = write_trajectory_csv(traj).splitlines()[1].split(",")
        assert float(row[3]) == traj.rounds[0].prediction
        assert row[3] == format(traj.rounds[0].prediction, ".17g")
