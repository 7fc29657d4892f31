"""
Regret Diagnostics

Offline analyses over a run directory:
- analyze_selected_regret: true regret of the states each regret head
  ranks highest, against a uniform sample (with a bootstrap interval)
- analyze_prb_shift: regret of evicted buffer entries when they entered
  versus when they left
- analyze_opening_lengths: share of stored openings per opening-length bucket,
  per buffer snapshot
- track_opening_regret: the regret of one buffer entry across its EMA updates

Buffer snapshots live in {run}/ckpt_{k}/buffers/worker_{w}.json, game logs in
{run}/games.jsonl.
"""

import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import orjson
import pandas as pd
from scipy.stats import bootstrap

from src.evaluation.match import EvaluationError
from src.games import get_game
from src.models.checkpoint import load_checkpoint
from src.models.network import forward_batch
from src.selfplay.records import LoggedGame, read_game_logs
from src.utils.logger import get_logger, log_function_call

logger = get_logger(__name__)

SNAPSHOT_PATTERN = re.compile(r"ckpt_(\d+)/buffers/worker_(\d+)\.json$")


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def load_buffer_snapshots(run_dir: Path) -> List[Tuple[int, int, Dict[str, Any]]]:
    """(iteration, worker, snapshot) for every stored snapshot, in iteration then worker order."""
    found = []
    for path in Path(run_dir).glob("ckpt_*/buffers/worker_*.json"):
        match = SNAPSHOT_PATTERN.search(path.as_posix())
        if match:
            found.append((int(match.group(1)), int(match.group(2)), orjson.loads(path.read_bytes())))
    return sorted(found, key=lambda item: (item[0], item[1]))


def load_logged_games(path: Path, iterations: Optional[Sequence[int]] = None) -> List[LoggedGame]:
    games = [LoggedGame.from_dict(g) for g in read_game_logs(path)
             if iterations is None or g['iteration'] in iterations]
    logger.debug(f"Loaded {len(games)} games from {path}")
    return games


# ---------------------------------------------------------------------------
# selected regret
# ---------------------------------------------------------------------------

def _head_scores(params, states: List, chunk: int = 1024) -> Tuple[np.ndarray, np.ndarray]:
    game = get_game(states[0].game_id)
    gammas, values = [], []
    for start in range(0, len(states), chunk):
        out, _ = forward_batch(params, game.encode_batch(states[start:start + chunk]))
        gammas.append(out.gamma)
        values.append(out.regret_value)
    return np.concatenate(gammas), np.concatenate(values)


def _top_mean(scores: np.ndarray, regrets: np.ndarray, n: int) -> float:
    order = np.argsort(-scores, kind='stable')
    return float(regrets[order[:n]].mean())


def selected_regret_row(scores_gamma: np.ndarray, scores_value: np.ndarray, regrets: np.ndarray,
                        top_n: int, rng: np.random.Generator,
                        resamples: int = 1000) -> Dict[str, Any]:
    """One analysis row from precomputed head outputs and true regrets."""
    total = len(regrets)
    n = min(top_n, total)
    uniform = regrets[rng.choice(total, size=n, replace=False)]
    if n > 1 and np.ptp(uniform) > 0:
        ci = bootstrap((uniform,), np.mean, confidence_level=0.95, n_resamples=resamples,
                       method='percentile', rng=rng).confidence_interval
        low, high = float(ci.low), float(ci.high)
    else:
        low = high = float(uniform.mean())
    return {
        'states': total,
        'top_n': top_n,
        'used_n': n,
        'truncated': n < top_n,
        'ranking_top_regret': _top_mean(scores_gamma, regrets, n),
        'value_top_regret': _top_mean(scores_value, regrets, n),
        'uniform_regret': float(uniform.mean()),
        'uniform_ci_low': low,
        'uniform_ci_high': high,
        'global_mean_regret': float(regrets.mean()),
    }


@log_function_call
def analyze_selected_regret(games_path: Path, checkpoints: Sequence[Path], top_n: int = 200,
                            seed: int = 0, iterations: Optional[Sequence[int]] = None,
                            resamples: int = 1000) -> pd.DataFrame:
    """
    Average true regret of the top_n states by each regret head, per checkpoint.

    Every decision state of the logged games is scored by the checkpoint's
    ranking head and regret-value head; a uniform sample of the same size is
    the baseline. With fewer than top_n states all of them are used and the
    row is flagged as truncated.
    """
    games = load_logged_games(games_path, iterations)
    if not games:
        raise EvaluationError(f"No games found in {games_path}")
    states = [s for g in games for s in g.states]
    regrets = np.concatenate([g.regrets for g in games])

    rows = []
    for i, path in enumerate(checkpoints):
        ckpt = load_checkpoint(path)
        gamma, value = _head_scores(ckpt.params, states)
        rng = np.random.default_rng([seed, i])
        row = {'checkpoint': str(path), 'iteration': ckpt.iteration}
        row.update(selected_regret_row(gamma, value, regrets, top_n, rng, resamples))
        rows.append(row)
        if row['truncated']:
            logger.warning(f"Only {row['states']} states available, top_n={top_n} truncated")
        logger.info(f"{path}: ranking-top {row['ranking_top_regret']:.4f}, "
                    f"value-top {row['value_top_regret']:.4f}, uniform {row['uniform_regret']:.4f}")
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# buffer shift
# ---------------------------------------------------------------------------

def collect_evictions(run_dir: Path) -> List[Dict[str, Any]]:
    """Eviction records from the latest snapshot of every worker."""
    latest: Dict[int, Dict[str, Any]] = {}
    for _, worker, dump in load_buffer_snapshots(run_dir):
        latest[worker] = dump
    return [e for dump in latest.values() for e in dump.get('evictions', [])]


@log_function_call
def analyze_prb_shift(evictions: List[Dict[str, Any]],
                      bins: int = 20) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """
    Histograms of first-entry and final regret over evicted entries.

    Returns:
        (histogram frame with bin_low, bin_high, first_count, final_count;
         summary with evicted, mean_first, mean_final, passed)

    Raises:
        EvaluationError: empty eviction log
    """
    if not evictions:
        raise EvaluationError("Eviction log is empty")
    first = np.array([e['first_regret'] for e in evictions], dtype=np.float64)
    final = np.array([e['final_regret'] for e in evictions], dtype=np.float64)

    upper = max(first.max(), final.max())
    edges = np.linspace(0.0, upper if upper > 0 else 1.0, bins + 1)
    first_counts, _ = np.histogram(first, bins=edges)
    final_counts, _ = np.histogram(final, bins=edges)
    histogram = pd.DataFrame({
        'bin_low': edges[:-1], 'bin_high': edges[1:],
        'first_count': first_counts, 'final_count': final_counts,
    })
    summary = {
        'evicted': len(evictions),
        'mean_first': float(first.mean()),
        'mean_final': float(final.mean()),
        'passed': bool(final.mean() < first.mean()),
    }
    logger.info(f"Regret shift over {summary['evicted']} evictions: "
                f"{summary['mean_first']:.4f} -> {summary['mean_final']:.4f} "
                f"({'pass' if summary['passed'] else 'fail'})")
    return histogram, summary


# ---------------------------------------------------------------------------
# opening lengths
# ---------------------------------------------------------------------------

def _opening_lengths(dump: Dict[str, Any]) -> List[int]:
    if 'entries' in dump:
        return [int(e['opening_move_count']) for e in dump['entries']]
    game = get_game(dump['game_id'])
    return [game.state_from_string(s).move_count for s in dump.get('states', [])]


@log_function_call
def analyze_opening_lengths(snapshots: List[Tuple[int, int, Dict[str, Any]]],
                            bucket_width: int = 5) -> pd.DataFrame:
    """
    Proportion of stored openings per length bucket, per iteration.

    Workers' snapshots of the same iteration are pooled. Buckets are
    [k * width, (k + 1) * width - 1] and cover 0 .. the game's maximum length.

    Raises:
        EvaluationError: fewer than two snapshot iterations
    """
    by_iteration: Dict[int, List[int]] = {}
    max_length = 0
    for iteration, _, dump in snapshots:
        by_iteration.setdefault(iteration, []).extend(_opening_lengths(dump))
        max_length = max(max_length, get_game(dump['game_id']).max_game_length)
    if len(by_iteration) < 2:
        raise EvaluationError(f"Need snapshots from at least two iterations, got {len(by_iteration)}")

    n_buckets = max_length // bucket_width + 1
    rows = []
    for iteration, lengths in sorted(by_iteration.items()):
        if not lengths:
            logger.warning(f"Snapshot of iteration {iteration} is empty, skipped")
            continue
        counts = np.bincount(np.asarray(lengths) // bucket_width, minlength=n_buckets)
        for k in range(n_buckets):
            rows.append({
                'iteration': iteration,
                'bucket_low': k * bucket_width,
                'bucket_high': (k + 1) * bucket_width - 1,
                'count': int(counts[k]),
                'proportion': counts[k] / len(lengths),
            })
    return pd.DataFrame(rows, columns=['iteration', 'bucket_low', 'bucket_high', 'count', 'proportion'])


# ---------------------------------------------------------------------------
# per-entry regret
# ---------------------------------------------------------------------------

@log_function_call
def track_opening_regret(snapshots: List[Tuple[int, int, Dict[str, Any]]], entry_id: int,
                         worker: int = 0) -> pd.DataFrame:
    """
    Regret of one buffer entry after each EMA update (update 0 is its entry regret).

    Reads the entry's history from the latest snapshot that still holds it,
    or from the eviction log once it has left.

    Raises:
        EvaluationError: the entry never appears in this worker's snapshots
    """
    history = None
    for _, w, dump in snapshots:
        if w != worker:
            continue
        for entry in dump.get('entries', []):
            if entry['entry_id'] == entry_id:
                history = entry['history']
        for record in dump.get('evictions', []):
            if record['entry_id'] == entry_id:
                history = record['history']
    if history is None:
        raise EvaluationError(f"Entry {entry_id} not found in worker {worker}'s buffer snapshots")
    return pd.DataFrame({'update': np.arange(len(history)), 'regret': history})
