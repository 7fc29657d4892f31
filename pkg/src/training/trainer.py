"""
Training Loop

Alternates a self-play phase and an optimisation phase:

    for iteration in start+1 .. iterations:
        1. workers play until states_per_iteration decision states are collected
        2. the iteration joins the replay window (the last `replay_window` iterations)
        3. optimization_steps_per_iteration SGD steps on uniform batches
        4. checkpoint ckpt_{iteration} (model.npz, state.joblib, buffers/)
        5. one metrics.csv row; optional evaluation match

Run directory:
    config.yaml       resolved configuration
    metrics.csv       one row per iteration, fixed columns
    evaluations.csv   periodic matches (run.eval_every > 0)
    games.jsonl       one line per self-play game
    freeze_losses.csv per-step head losses of the frozen-backbone phase, if run
    ckpt_{k}/         checkpoint of iteration k

Resuming:
- same method: the checkpoint's run hash must match; replay, RNG streams,
  optimiser momentum and restart stores are restored, so the continuation is
  identical to an uninterrupted run
- different method: only the weights carry over (model hash must match);
  moving a net without trained regret heads to rgsc first runs the
  frozen-backbone phase
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import joblib
import numpy as np
import orjson
import pandas as pd
import yaml

from src.control.archives import InitialOnlyPolicy, build_restart_policy, restore_policy
from src.evaluation.match import play_match
from src.models.checkpoint import (
    Checkpoint,
    CheckpointError,
    checkpoint_dir,
    load_checkpoint,
    save_checkpoint,
)
from src.models.losses import HEADS, LossWeights, evaluate_losses, loss_and_grads
from src.models.network import NetParams, init_params
from src.models.optimizer import SGDOptimizer, regret_heads_only
from src.selfplay.records import append_game_logs, truncate_game_logs
from src.selfplay.replay import ReplayBuffer, build_batch, make_batches
from src.selfplay.worker import SelfPlayConfig, SelfPlayWorker, WorkerOutput, run_workers
from src.training.run_config import STORE_METHODS, RunConfig
from src.utils.logger import get_logger

logger = get_logger(__name__)

STATE_FILE = "state.joblib"
BUFFER_DIR = "buffers"
METRICS_FILE = "metrics.csv"
EVALUATIONS_FILE = "evaluations.csv"
GAMES_FILE = "games.jsonl"
FREEZE_FILE = "freeze_losses.csv"

METRICS_COLUMNS = [
    'iteration', 'games', 'states', 'mean_game_length',
    'loss_total', 'loss_policy', 'loss_value', 'loss_regret', 'loss_rank',
    'buffer_size', 'buffer_mean_regret', 'buffer_openings', 'evictions',
    'mean_opening_length',
]

EVALUATION_COLUMNS = ['iteration', 'opponent', 'games', 'wins', 'draws', 'losses',
                      'win_rate', 'ci_low', 'ci_high']


def _selfplay_config(cfg: RunConfig) -> SelfPlayConfig:
    return SelfPlayConfig(mcts=cfg.mcts_config(is_selfplay=True),
                          candidate_scoring=cfg.restart.candidate_scoring,
                          gesc_nodes_per_move=cfg.restart.gesc_nodes_per_move)


def _build_workers(cfg: RunConfig, seeds: List[np.random.SeedSequence],
                   initial_only: bool = False) -> List[SelfPlayWorker]:
    game = cfg.make_game()
    sp_cfg = _selfplay_config(cfg)
    workers = []
    for w, seed in enumerate(seeds):
        if initial_only:
            policy = InitialOnlyPolicy(game)
        else:
            r = cfg.restart
            policy = build_restart_policy(cfg.run.method, game, r.capacity, r.buffer_rate,
                                          r.temperature, r.ema_alpha)
        workers.append(SelfPlayWorker(w, policy, sp_cfg, seed))
    return workers


FREEZE_COLUMNS = ['step', 'train_rank', 'train_regret', 'heldout_rank', 'heldout_regret']


@dataclass
class FreezePhaseResult:
    """
    Outcome of the frozen-backbone phase.

    losses has one row per step (step 0 before any update) with the rank and
    regret losses on the phase's training games and on its held-out fifth;
    held-out columns are NaN when fewer than two games were played.
    """
    params: NetParams
    losses: pd.DataFrame


def run_freeze_phase(cfg: RunConfig, base: Checkpoint,
                     seed: Optional[np.random.SeedSequence] = None) -> FreezePhaseResult:
    """
    Train only the regret-value and ranking heads of a trained network.

    Plays run.freeze_games initial-state games with the base network, then
    runs run.freeze_steps SGD steps whose updates touch nothing outside the
    regret and ranking heads, evaluating both head losses after every step.
    """
    params = base.params
    steps, games = cfg.run.freeze_steps, cfg.run.freeze_games
    if steps == 0 or games == 0:
        logger.warning("Frozen-backbone phase skipped (freeze_steps or freeze_games is 0)")
        return FreezePhaseResult(params, pd.DataFrame(columns=FREEZE_COLUMNS))

    seed = seed if seed is not None else np.random.SeedSequence((cfg.run.seed, base.iteration))
    worker_seed, batch_seed = seed.spawn(2)
    workers = _build_workers(cfg, worker_seed.spawn(cfg.resolved_workers()), initial_only=True)
    outputs = run_workers(workers, params, base.iteration, games=games)

    records = [r for o in outputs for r in o.records]
    holdout_count = max(1, len(records) // 5) if len(records) > 1 else 0
    train_records, holdout = records[holdout_count:], records[:holdout_count]

    replay = ReplayBuffer(window=1)
    replay.add_iteration(base.iteration, [WorkerOutput(0, train_records,
                                                       [r.length for r in train_records])])
    weights = LossWeights(policy=0.0, value=0.0, regret=cfg.loss_weights.regret,
                          rank=cfg.loss_weights.rank)
    train_batch = build_batch([(r, t) for r in train_records for t in range(r.length)])
    heldout_batch = (build_batch([(r, t) for r in holdout for t in range(r.length)])
                     if holdout else None)

    def measure(step: int, current: NetParams) -> Dict[str, float]:
        row = {'step': step, 'heldout_rank': np.nan, 'heldout_regret': np.nan}
        train = evaluate_losses(current, train_batch, weights)
        row.update(train_rank=train['rank'], train_regret=train['regret'])
        if heldout_batch is not None:
            held = evaluate_losses(current, heldout_batch, weights)
            row.update(heldout_rank=held['rank'], heldout_regret=held['regret'])
        return row

    optimizer = SGDOptimizer(cfg.optimizer.learning_rate, cfg.optimizer.momentum,
                             cfg.optimizer.weight_decay, trainable=regret_heads_only)
    rng = np.random.default_rng(batch_seed)
    rows = [measure(0, params)]
    for step, batch in enumerate(make_batches(replay, cfg.run.batch_size, rng, steps=steps), 1):
        _, grads = loss_and_grads(params, batch, weights)
        params = optimizer.step(params, grads)
        rows.append(measure(step, params))

    losses = pd.DataFrame(rows, columns=FREEZE_COLUMNS)
    first, last = losses.iloc[0], losses.iloc[-1]
    logger.info(f"Frozen-backbone phase: {steps} steps on {len(train_records)} games; "
                f"rank loss {first['train_rank']:.4f} -> {last['train_rank']:.4f} "
                f"(held-out {first['heldout_rank']:.4f} -> {last['heldout_rank']:.4f}), "
                f"regret loss {first['train_regret']:.4f} -> {last['train_regret']:.4f}")
    return FreezePhaseResult(params, losses)


def freeze_heads_phase(cfg: RunConfig, base: Checkpoint,
                       seed: Optional[np.random.SeedSequence] = None) -> NetParams:
    """
    Parameters after the frozen-backbone phase; torso, policy and value heads
    are bit-identical to the base.
    """
    return run_freeze_phase(cfg, base, seed).params


class Trainer:
    """
    Self-play / optimisation loop for one method.

    Usage:
        cfg = RunConfig.load('run.yaml').validate()
        run_dir = Trainer(cfg).run()
    """

    def __init__(self, cfg: RunConfig, resume: Optional[Path] = None):
        self.cfg = cfg.validate()
        self.resume = Path(resume) if resume is not None else None
        if self.resume is not None and self.resume.is_file():
            self.resume = self.resume.parent
        self.run_dir = cfg.output_path()
        self.net_config = cfg.net_config()
        self.weights = cfg.effective_loss_weights()
        self.num_workers = cfg.resolved_workers()

        root = np.random.SeedSequence(cfg.run.seed)
        worker_seeds, trainer_seed, self.freeze_seed = root.spawn(3)
        self.workers = _build_workers(cfg, worker_seeds.spawn(self.num_workers))
        self.rng = np.random.default_rng(trainer_seed)

        self.params: Optional[NetParams] = None
        self.optimizer = SGDOptimizer(cfg.optimizer.learning_rate, cfg.optimizer.momentum,
                                      cfg.optimizer.weight_decay)
        self.replay = ReplayBuffer(cfg.run.replay_window)
        self.iteration = 0
        self.regret_heads_trained = False

    # ------------------------------------------------------------------
    # setup
    # ------------------------------------------------------------------

    def _start_fresh(self) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        for name in (METRICS_FILE, EVALUATIONS_FILE, GAMES_FILE):
            (self.run_dir / name).unlink(missing_ok=True)
        self.params = init_params(self.net_config, seed=self.cfg.network.init_seed)
        self.regret_heads_trained = self.cfg.uses_regret_heads
        self._warmup()
        logger.info(f"Starting {self.cfg.run.method} run in {self.run_dir} "
                    f"({self.params.num_params} parameters, {self.num_workers} workers)")

    def _resume_same_method(self, ckpt: Checkpoint) -> None:
        if ckpt.metadata.get('run_hash') != self.cfg.run_hash():
            raise CheckpointError(
                f"Cannot resume from {self.resume}: run hash {ckpt.metadata.get('run_hash')} "
                f"does not match the current configuration ({self.cfg.run_hash()})"
            )
        state_path = self.resume / STATE_FILE
        if not state_path.exists():
            raise CheckpointError(f"Resume state missing: {state_path}")
        state = joblib.load(state_path)

        self.params = ckpt.params
        self.iteration = ckpt.iteration
        self.regret_heads_trained = ckpt.regret_heads_trained
        self.optimizer.load_flat_velocity(self.params, ckpt.velocity)
        self.replay = state['replay']
        self.rng.bit_generator.state = state['rng']
        for worker, worker_state in zip(self.workers, state['workers']):
            worker.set_state(worker_state)
            snapshot = self.resume / BUFFER_DIR / f"worker_{worker.worker_id}.json"
            if snapshot.exists():
                worker.policy = restore_policy(orjson.loads(snapshot.read_bytes()))

        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._truncate_outputs(self.iteration)
        logger.info(f"Resumed {self.cfg.run.method} run at iteration {self.iteration}")

    def _resume_cross_method(self, ckpt: Checkpoint) -> None:
        logger.info(f"Continuing a {ckpt.method} network (iteration {ckpt.iteration}) "
                    f"with method {self.cfg.run.method}")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        for name in (METRICS_FILE, EVALUATIONS_FILE, GAMES_FILE):
            (self.run_dir / name).unlink(missing_ok=True)
        self.iteration = ckpt.iteration
        self.params = ckpt.params
        self.regret_heads_trained = ckpt.regret_heads_trained
        if self.cfg.uses_regret_heads and not ckpt.regret_heads_trained:
            frozen = run_freeze_phase(self.cfg, ckpt, self.freeze_seed)
            frozen.losses.to_csv(self.run_dir / FREEZE_FILE, index=False)
            self.params = frozen.params
            self.regret_heads_trained = True
        self._warmup()

    def _warmup(self) -> None:
        """Fill the restart stores with games excluded from the training data."""
        games = self.cfg.run.warmup_games
        if games == 0 or self.cfg.run.method not in STORE_METHODS:
            return
        outputs = run_workers(self.workers, self.params, self.iteration, games=games)
        for worker in self.workers:
            worker.policy.reset_counters()
        logger.info(f"Warm-up: {sum(len(o.records) for o in outputs)} games, store sizes "
                    f"{[w.policy.size for w in self.workers]}")

    def _truncate_outputs(self, iteration: int) -> None:
        for name in (METRICS_FILE, EVALUATIONS_FILE):
            path = self.run_dir / name
            if path.exists():
                df = pd.read_csv(path, float_precision='round_trip')
                kept = df[df['iteration'] <= iteration]
                if len(kept) < len(df):
                    kept.to_csv(path, index=False)
        truncate_game_logs(self.run_dir / GAMES_FILE, iteration)

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def _metadata(self) -> Dict:
        return {
            'iteration': self.iteration,
            'method': self.cfg.run.method,
            'model_hash': self.cfg.model_hash(),
            'run_hash': self.cfg.run_hash(),
            'regret_heads_trained': self.regret_heads_trained,
            'game': self.cfg.game.name,
            'size': self.cfg.game.size,
        }

    def save(self) -> Path:
        directory = checkpoint_dir(self.run_dir, self.iteration)
        save_checkpoint(directory, self.params, self.optimizer.flat_velocity(self.params),
                        self._metadata())
        joblib.dump({
            'replay': self.replay,
            'rng': self.rng.bit_generator.state,
            'workers': [w.get_state() for w in self.workers],
        }, directory / STATE_FILE)

        if self.cfg.run.method in STORE_METHODS:
            buffer_dir = directory / BUFFER_DIR
            buffer_dir.mkdir(exist_ok=True)
            for worker in self.workers:
                (buffer_dir / f"worker_{worker.worker_id}.json").write_bytes(
                    orjson.dumps(worker.policy.snapshot(), option=orjson.OPT_SERIALIZE_NUMPY)
                )
        return directory

    def _write_config(self) -> None:
        with open(self.run_dir / "config.yaml", 'w') as f:
            yaml.safe_dump(self.cfg.to_dict(), f, sort_keys=False)

    # ------------------------------------------------------------------
    # iteration
    # ------------------------------------------------------------------

    def _optimize(self) -> Dict[str, float]:
        totals = {h: 0.0 for h in HEADS + ('total',)}
        steps = self.cfg.run.optimization_steps_per_iteration
        for batch in make_batches(self.replay, self.cfg.run.batch_size, self.rng, steps=steps):
            losses, grads = loss_and_grads(self.params, batch, self.weights)
            self.params = self.optimizer.step(self.params, grads)
            for key in totals:
                totals[key] += losses[key]
        return {key: value / steps for key, value in totals.items()}

    def _metrics_row(self, outputs: List[WorkerOutput], losses: Dict[str, float]) -> Dict:
        records = [r for o in outputs for r in o.records]
        row = {
            'iteration': self.iteration,
            'games': len(records),
            'states': sum(o.samples for o in outputs),
            'mean_game_length': float(np.mean([r.length for r in records])),
            'loss_total': losses['total'],
            'loss_policy': losses['policy'],
            'loss_value': losses['value'],
            'loss_regret': losses['regret'] if self.cfg.uses_regret_heads else None,
            'loss_rank': losses['rank'] if self.cfg.uses_regret_heads else None,
            'buffer_size': None,
            'buffer_mean_regret': None,
            'buffer_openings': None,
            'evictions': None,
            'mean_opening_length': None,
        }
        if self.cfg.run.method in STORE_METHODS:
            stats = [w.policy.stats() for w in self.workers]
            row['buffer_size'] = sum(s['buffer_size'] for s in stats)
            row['buffer_openings'] = sum(s['buffer_openings'] for s in stats)
            row['mean_opening_length'] = float(np.mean([r.trajectory.opening_move_count
                                                        for r in records]))
            if self.cfg.run.method == 'rgsc':
                regrets = np.concatenate([w.policy.regrets() for w in self.workers])
                row['buffer_mean_regret'] = float(regrets.mean()) if regrets.size else None
                row['evictions'] = sum(s['evictions'] for s in stats)
        return row

    def _append_csv(self, name: str, row: Dict, columns: List[str]) -> None:
        path = self.run_dir / name
        pd.DataFrame([row], columns=columns).to_csv(path, mode='a', header=not path.exists(),
                                                    index=False)

    def _evaluate(self, ckpt: Path) -> None:
        run = self.cfg.run
        result = play_match(ckpt, run.eval_opponent, games=run.eval_games,
                            simulations=run.eval_simulations, temperature=self.cfg.mcts.temperature,
                            seed=run.seed + self.iteration)
        low, high = result.confidence_interval()
        self._append_csv(EVALUATIONS_FILE, {
            'iteration': self.iteration, 'opponent': str(run.eval_opponent),
            'games': result.games, 'wins': result.wins, 'draws': result.draws,
            'losses': result.losses, 'win_rate': result.win_rate,
            'ci_low': low, 'ci_high': high,
        }, EVALUATION_COLUMNS)
        logger.info(f"Iteration {self.iteration} vs {run.eval_opponent}: "
                    f"win rate {result.win_rate:.3f} [{low:.3f}, {high:.3f}]")

    def run_iteration(self) -> Dict:
        self.iteration += 1
        outputs = run_workers(self.workers, self.params, self.iteration,
                              budget=self.cfg.run.states_per_iteration)
        self.replay.add_iteration(self.iteration, outputs)
        append_game_logs(self.run_dir / GAMES_FILE, [r for o in outputs for r in o.records])

        losses = self._optimize()
        row = self._metrics_row(outputs, losses)
        for worker in self.workers:
            worker.policy.reset_counters()

        ckpt = self.save()
        self._append_csv(METRICS_FILE, row, METRICS_COLUMNS)
        logger.info(f"Iteration {self.iteration}/{self.cfg.run.iterations}: {row['games']} games, "
                    f"loss {row['loss_total']:.4f} (policy {row['loss_policy']:.4f}, "
                    f"value {row['loss_value']:.4f})")

        if self.cfg.run.eval_every and self.iteration % self.cfg.run.eval_every == 0:
            self._evaluate(ckpt)
        return row

    def run(self) -> Path:
        """Run (or resume) to cfg.run.iterations; returns the run directory."""
        if self.resume is None:
            self._start_fresh()
            self.save()
        else:
            ckpt = load_checkpoint(self.resume, expected_model_hash=self.cfg.model_hash())
            if ckpt.method == self.cfg.run.method:
                self._resume_same_method(ckpt)
            else:
                self._resume_cross_method(ckpt)
                self.save()
        self._write_config()

        while self.iteration < self.cfg.run.iterations:
            self.run_iteration()

        logger.info(f"Run finished at iteration {self.iteration}: {self.run_dir}")
        return self.run_dir


def run(cfg: RunConfig, resume: Optional[Path] = None) -> Path:
    return Trainer(cfg, resume).run()
