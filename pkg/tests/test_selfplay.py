"""
Unit Tests for Self-Play, Game Logs and the Replay Buffer
"""

import numpy as np
import pytest

from src.control.archives import (
    CircularArchive,
    InitialOnlyPolicy,
    PrioritizedRegretBuffer,
    RestartVariant,
)
from src.control.regret import Provenance
from src.games import make_game
from src.models.network import NetConfig, init_params
from src.search.mcts import MCTSConfig
from src.selfplay.records import (
    LoggedGame,
    append_game_logs,
    read_game_logs,
    truncate_game_logs,
)
from src.selfplay.replay import ReplayBuffer, build_batch, make_batches
from src.selfplay.worker import (
    SelfPlayConfig,
    SelfPlayError,
    SelfPlayWorker,
    play_game,
    run_workers,
    split_budget,
)


@pytest.fixture
def game():
    return make_game('hex', 3)


@pytest.fixture
def params(game):
    config = NetConfig(in_planes=3, size=3, action_size=game.action_size, torso='mlp',
                       hidden=8, head_hidden=4)
    return init_params(config, seed=0)


@pytest.fixture
def cfg():
    return SelfPlayConfig(mcts=MCTSConfig(simulations=4), gesc_nodes_per_move=2)


class TestPlayGame:
    """Test suite for play_game()."""

    def test_initial_only_game(self, game, params, cfg):
        """Test targets, outcome perspective and regrets of a plain game."""
        record = play_game(params, InitialOnlyPolicy(game), cfg, np.random.default_rng(0))
        traj = record.trajectory
        assert traj.finished
        assert record.provenance == Provenance.INITIAL_STATE
        assert record.states[0] == game.initial_state()
        assert len(record.policy_targets) == record.length
        for target in record.policy_targets:
            assert target.sum() == pytest.approx(1.0)
        values = record.value_targets()
        assert values[0] == traj.z
        if record.length > 1:
            assert values[1] == -traj.z
        assert np.all((record.regrets >= 0) & (record.regrets <= 4))
        assert record.candidate is None and record.ema is None

    def test_prb_offers_candidate(self, game, params, cfg):
        """Test that a game from the initial state offers one candidate."""
        prb = PrioritizedRegretBuffer(game, 4, buffer_rate=0.0, temperature=1.0, ema_alpha=0.5)
        record = play_game(params, prb, cfg, np.random.default_rng(1))
        assert record.candidate is not None
        assert record.inserted is True
        assert prb.size == 1
        assert prb.entries[0].state == record.candidate.state

    def test_buffer_opened_game_updates_entry(self, game, params, cfg):
        """Test the EMA update with the regret at the opening, without an offer."""
        prb = PrioritizedRegretBuffer(game, 4, buffer_rate=0.0, temperature=1.0, ema_alpha=0.5)
        rng = np.random.default_rng(2)
        play_game(params, prb, cfg, rng)
        prb.buffer_rate = 1.0
        entry = prb.entries[0]
        before = entry.regret
        record = play_game(params, prb, cfg, rng)

        assert record.provenance == Provenance.BUFFER
        assert record.trajectory.opening_entry_id == entry.entry_id
        assert record.states[0] == entry.state
        assert record.candidate is None
        old, new = record.ema
        assert old == pytest.approx(before)
        assert new == pytest.approx(0.5 * before + 0.5 * record.regrets[0])
        assert entry.updates == 1
        assert prb.size == 1

    def test_gevc_pushes_trajectory(self, game, params, cfg):
        """Test that GEVC stores the game's decision states."""
        archive = CircularArchive(game, 100, buffer_rate=0.0, variant=RestartVariant.GEVC)
        record = play_game(params, archive, cfg, np.random.default_rng(3))
        assert list(archive.states) == record.states
        assert record.archive_pushes == record.length

    def test_gesc_pushes_tree_nodes(self, game, params, cfg):
        """Test that GESC stores k search nodes per move."""
        archive = CircularArchive(game, 100, buffer_rate=0.0, variant=RestartVariant.GESC)
        record = play_game(params, archive, cfg, np.random.default_rng(4))
        assert archive.size == record.archive_pushes
        assert record.length <= archive.size <= 2 * record.length
        assert all(not s.terminal for s in archive.states)

    def test_terminal_opening_rejected(self, game, params, cfg):
        """Test that a finished stored state cannot open a game."""
        archive = CircularArchive(game, 4, buffer_rate=1.0)
        state = game.initial_state()
        for a in [0, 2, 3, 5, 6]:
            state = game.apply(state, a)
        archive.push([state])
        with pytest.raises(SelfPlayError):
            play_game(params, archive, cfg, np.random.default_rng(0))


class TestRestartAccounting:
    """Test suite for the share of games opened from a stored state."""

    @pytest.fixture
    def seeded_prb(self, game, params, cfg):
        prb = PrioritizedRegretBuffer(game, 4, buffer_rate=0.0, temperature=1.0, ema_alpha=0.5)
        play_game(params, prb, cfg, np.random.default_rng(11))
        prb.buffer_rate = 0.5
        prb.reset_counters()
        return prb

    def test_opening_draw_fraction(self, seeded_prb):
        """Test that half of 1e4 openings come from the buffer, within 3 sigma."""
        n = 10_000
        rng = np.random.default_rng(12)
        from_buffer = sum(seeded_prb.draw_opening(rng).provenance == Provenance.BUFFER
                          for _ in range(n))
        assert abs(from_buffer - 0.5 * n) <= 3.0 * np.sqrt(n * 0.25)
        assert seeded_prb.stats()['buffer_openings'] == from_buffer

    @pytest.mark.slow
    def test_buffer_opened_game_fraction(self, seeded_prb, params):
        """Test that half of 1e4 self-played games open from the buffer, within 3 sigma."""
        n = 10_000
        cfg = SelfPlayConfig(mcts=MCTSConfig(simulations=1))
        rng = np.random.default_rng(13)
        opened = 0
        for _ in range(n):
            record = play_game(params, seeded_prb, cfg, rng)
            if record.provenance == Provenance.BUFFER:
                opened += 1
                assert record.states[0] == seeded_prb.get(record.trajectory.opening_entry_id).state
        assert abs(opened - 0.5 * n) <= 3.0 * np.sqrt(n * 0.25)
        assert seeded_prb.stats()['buffer_openings'] == opened


class TestGameLogs:
    """Test suite for games.jsonl."""

    def test_log_and_replay(self, game, params, cfg, tmp_path):
        """Test that logged games replay to the same decision states."""
        prb = PrioritizedRegretBuffer(game, 4, buffer_rate=0.0, temperature=1.0, ema_alpha=0.5)
        rng = np.random.default_rng(5)
        records = [play_game(params, prb, cfg, rng, iteration=i) for i in (1, 2)]
        path = tmp_path / "games.jsonl"
        append_game_logs(path, records)

        logged = list(read_game_logs(path))
        assert [g['iteration'] for g in logged] == [1, 2]
        assert logged[0]['candidate']['inserted'] is True
        replayed = LoggedGame.from_dict(logged[0])
        assert replayed.states == records[0].states
        np.testing.assert_allclose(replayed.regrets, records[0].regrets)

        truncate_game_logs(path, max_iteration=1)
        assert [g['iteration'] for g in read_game_logs(path)] == [1]


class TestWorkers:
    """Test suite for workers and the thread pool fan-out."""

    def test_split_budget(self):
        """Test the even split with remainders going to the first workers."""
        assert split_budget(10, 3) == [4, 3, 3]
        assert sum(split_budget(7, 4)) == 7

    def test_run_iteration_meets_budget(self, game, params, cfg):
        """Test that exactly `budget` states are kept, cutting the last game."""
        worker = SelfPlayWorker(0, InitialOnlyPolicy(game), cfg, np.random.SeedSequence(0))
        output = worker.run_iteration(params, 1, budget=11)
        assert output.samples == 11
        assert all(k <= r.length for r, k in zip(output.records, output.kept))
        assert worker.games_played == len(output.records)

    def test_parallel_workers_are_deterministic(self, game, params, cfg):
        """Test identical games across runs with the same seeds."""
        def moves():
            seeds = np.random.SeedSequence(42).spawn(2)
            workers = [SelfPlayWorker(w, InitialOnlyPolicy(game), cfg, seeds[w]) for w in range(2)]
            outputs = run_workers(workers, params, 1, games=4)
            assert [o.worker_id for o in outputs] == [0, 1]
            return [[r.action for r in rec.trajectory.records] for o in outputs for rec in o.records]

        assert moves() == moves()

    def test_worker_state_resume(self, game, params, cfg):
        """Test that restoring the RNG state replays the same game."""
        worker = SelfPlayWorker(0, InitialOnlyPolicy(game), cfg, np.random.SeedSequence(1))
        saved = worker.get_state()
        first = worker.play(params, 1)
        worker.set_state(saved)
        again = worker.play(params, 1)
        assert again.states == first.states
        assert again.game_index == first.game_index

    def test_run_workers_needs_one_limit(self, game, params, cfg):
        """Test argument validation."""
        worker = SelfPlayWorker(0, InitialOnlyPolicy(game), cfg, np.random.SeedSequence(0))
        with pytest.raises(SelfPlayError):
            run_workers([worker], params, 1)


class TestReplayBuffer:
    """Test suite for the replay window and batches."""

    @pytest.fixture
    def outputs(self, game, params, cfg):
        worker = SelfPlayWorker(0, InitialOnlyPolicy(game), cfg, np.random.SeedSequence(3))
        return [worker.run_iteration(params, i, budget=8) for i in range(4)]

    def test_window(self, outputs):
        """Test that only the last `window` iterations are retained."""
        replay = ReplayBuffer(window=2)
        for i, out in enumerate(outputs):
            replay.add_iteration(i, [out])
        assert replay.iteration_ids == [2, 3]
        assert len(replay) == 16
        assert len(replay.index()) == 16

    def test_batch_groups_by_game(self, outputs):
        """Test that states of one game form one ranking group."""
        replay = ReplayBuffer()
        replay.add_iteration(0, [outputs[0]])
        samples = replay.index()
        batch = build_batch(samples)
        assert batch.states.shape == (8, 3, 3, 3)
        record_of = [id(r) for r, _ in samples]
        for group in batch.ranking_groups:
            assert len(group) >= 2
            assert len({record_of[i] for i in group}) == 1
        np.testing.assert_allclose(batch.policy_targets.sum(axis=1), 1.0)

    def test_make_batches(self, outputs):
        """Test batch count and sizes, with replacement only when needed."""
        replay = ReplayBuffer()
        replay.add_iteration(0, [outputs[0]])
        rng = np.random.default_rng(0)
        batches = list(make_batches(replay, 5, rng, steps=3))
        assert len(batches) == 3
        assert all(len(b) == 5 for b in batches)
        assert all(len(b) == 20 for b in make_batches(replay, 20, rng, steps=2))
        with pytest.raises(ValueError):
            next(make_batches(ReplayBuffer(), 4, rng))


if __name__ == "__main__":
    """Run tests from command line."""
    pytest.main([__file__, "-v"])
