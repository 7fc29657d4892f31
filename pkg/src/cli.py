"""
Command-line interface.

    rgsc_lab train --config run.yaml --method rgsc --seed 0
    rgsc_lab toy --levels 5 --levels 6 --seeds 25
    rgsc_lab match runs/rgsc_seed0/ckpt_40 runs/alphazero_seed0/ckpt_40 --games 400
    rgsc_lab elo matches.csv --anchor runs/alphazero_seed0/ckpt_40
    rgsc_lab analyze prb-shift runs/rgsc_seed0
    rgsc_lab sweep --param tau --values 0.1,0.5,1 --seeds 2
    rgsc_lab gradcheck --trials 100

Exit codes: 0 success, 1 runtime failure, 2 configuration or checkpoint error.
"""

import sys
from functools import wraps
from pathlib import Path
from typing import List, Optional, Tuple

import click
import orjson
import pandas as pd
import yaml

from src.models.checkpoint import CheckpointError
from src.utils.config import ConfigurationError, get_config
from src.utils.logger import LoggerSetup, get_logger

logger = get_logger(__name__)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def handle_errors(func):
    """Map exceptions to exit codes after logging them."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigurationError, CheckpointError) as e:
            logger.error(str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
        except click.exceptions.Exit:
            raise
        except Exception as e:
            logger.exception(f"{func.__name__} failed: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


def parse_overrides(pairs: Tuple[str, ...]) -> dict:
    """KEY=VALUE pairs (values parsed as YAML scalars) to a dotted-key dict."""
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition('=')
        if not sep:
            raise ConfigurationError(f"--set expects section.key=value, got {pair!r}")
        overrides[key.strip()] = yaml.safe_load(value)
    return overrides


def parse_values(text: Optional[str]) -> Optional[List[float]]:
    if not text:
        return None
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--values must be a comma-separated list of numbers, got {text!r}")


def latest_checkpoint(run_dir: Path) -> Path:
    ckpts = sorted(Path(run_dir).glob("ckpt_*"), key=lambda p: int(p.name.split('_')[1]))
    if not ckpts:
        raise CheckpointError(f"No checkpoints in {run_dir}")
    return ckpts[-1]


def _write_frame(df: pd.DataFrame, output: Optional[Path]) -> None:
    if output is None:
        click.echo(df.to_string(index=False))
        return
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(output, index=False)
    click.echo(f"Wrote {len(df)} rows to {output}")


@click.group()
@click.option('--log-level', default=None, help='DEBUG, INFO, WARNING or ERROR (default: $LOG_LEVEL or INFO).')
@click.option('--log-to-file/--no-log-to-file', default=False, help='Also write rotating log files to $LOG_DIR.')
def cli(log_level: Optional[str], log_to_file: bool):
    """Regret-guided search control experiments."""
    LoggerSetup.reset()
    LoggerSetup.setup(log_level=log_level, log_to_file=log_to_file)


# ---------------------------------------------------------------------------
# train / sweep
# ---------------------------------------------------------------------------

@cli.command()
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None,
              help='YAML file merged over configs/training.yaml.')
@click.option('--method', type=click.Choice(['alphazero', 'gevc', 'gesc', 'rgsc']), default=None)
@click.option('--seed', type=int, default=None)
@click.option('--iterations', type=int, default=None)
@click.option('--workers', type=int, default=None, help='Self-play workers (0 = all cores).')
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@click.option('--resume', type=click.Path(path_type=Path), default=None,
              help='Checkpoint directory to continue from.')
@click.option('--set', 'overrides', multiple=True, help='Override any field: section.key=value.')
@handle_errors
def train(config_path, method, seed, iterations, workers, output_dir, resume, overrides):
    """Train one method with alternating self-play and optimisation."""
    from src.training.run_config import RunConfig
    from src.training.trainer import Trainer

    values = parse_overrides(overrides)
    values.update({'run.method': method, 'run.seed': seed, 'run.iterations': iterations,
                   'run.workers': workers,
                   'run.output_dir': str(output_dir) if output_dir else None})
    cfg = RunConfig.load(config_path, values).validate()
    run_dir = Trainer(cfg, resume).run()
    click.echo(f"Run directory: {run_dir}")


@cli.command()
@click.option('--param', type=click.Choice(['lambda', 'tau', 'kappa', 'alpha']), required=True)
@click.option('--values', default=None, help='Comma-separated values (default: grid from training.yaml).')
@click.option('--seeds', type=int, default=1)
@click.option('--config', 'config_path', type=click.Path(path_type=Path), default=None)
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@click.option('--set', 'overrides', multiple=True)
@handle_errors
def sweep(param, values, seeds, config_path, output_dir, overrides):
    """One rgsc run per (value, seed) plus a comparison table."""
    from src.training.run_config import RunConfig
    from src.training.sweep import run_sweep

    base = RunConfig.load(config_path, {'run.method': 'rgsc', **parse_overrides(overrides)})
    comparison = run_sweep(base, param, parse_values(values), seeds, output_dir)
    click.echo(comparison.to_string(index=False))


# ---------------------------------------------------------------------------
# toy experiment
# ---------------------------------------------------------------------------

@cli.command()
@click.option('--levels', type=int, multiple=True, help='Tree depths (default: from toy.yaml).')
@click.option('--seeds', type=int, default=None)
@click.option('--iterations', type=int, default=None)
@click.option('--strategy', 'strategies', type=click.Choice(['none', 'random', 'regret']),
              multiple=True, help='Strategies to run (default: all three).')
@click.option('--jobs', type=int, default=1, help='Parallel runs.')
@click.option('--output-dir', type=click.Path(path_type=Path), default=None)
@handle_errors
def toy(levels, seeds, iterations, strategies, jobs, output_dir):
    """Q-learning on sparse-reward binary trees under three restart strategies."""
    from src.toy.binary_tree import ToySettings, aggregate_runs, final_scores, run_toy_experiment

    defaults = get_config().get_toy_settings()
    if iterations is not None:
        defaults['iterations'] = iterations
    settings = ToySettings.from_dict(defaults)
    levels = list(levels) or list(defaults.get('levels', [5, 6]))
    seeds = seeds if seeds is not None else int(defaults.get('seeds', 25))
    strategies = list(strategies) or ['none', 'random', 'regret']
    if seeds < 1 or any(n < 1 for n in levels):
        raise ConfigurationError("--seeds and --levels must be positive")

    out = Path(output_dir) if output_dir else get_config().get_output_root() / "toy"
    out.mkdir(parents=True, exist_ok=True)

    runs = run_toy_experiment(levels, seeds, settings, strategies, n_jobs=jobs)
    runs.to_csv(out / "runs.csv", index=False)
    aggregate_runs(runs).to_csv(out / "aggregate.csv", index=False)
    final = final_scores(runs, settings.final_points)
    final.to_csv(out / "final.csv", index=False)
    click.echo(final.to_string(index=False))
    click.echo(f"Outputs in {out}")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@cli.command()
@click.argument('player_a')
@click.argument('player_b')
@click.option('--games', type=int, default=200)
@click.option('--simulations', type=int, default=50)
@click.option('--temperature', type=float, default=1.0)
@click.option('--seed', type=int, default=0)
@click.option('--workers', type=int, default=1)
@click.option('--game', 'game_name', type=click.Choice(['hex', 'othello']), default=None,
              help='Needed only when both players are random.')
@click.option('--size', type=int, default=5)
@click.option('--output', type=click.Path(path_type=Path), default=None,
              help='CSV to append the summary row to.')
@click.option('--games-log', type=click.Path(path_type=Path), default=None,
              help='JSON file receiving every game.')
@handle_errors
def match(player_a, player_b, games, simulations, temperature, seed, workers, game_name,
          size, output, games_log):
    """Paired games between two checkpoints (or 'random')."""
    from src.evaluation.match import play_match
    from src.games import make_game

    if games < 1 or simulations < 1:
        raise ConfigurationError("--games and --simulations must be positive")
    game = make_game(game_name, size) if game_name else None
    result = play_match(player_a, player_b, games, simulations, temperature, seed,
                        game=game, workers=workers)
    summary = pd.DataFrame([result.summary()])
    if output is not None:
        output = Path(output)
        output.parent.mkdir(parents=True, exist_ok=True)
        summary.to_csv(output, mode='a', header=not output.exists(), index=False)
    if games_log is not None:
        Path(games_log).write_bytes(orjson.dumps(result.games_log))
    click.echo(summary.to_string(index=False))


@cli.command()
@click.argument('summaries', nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option('--anchor', required=True, help='Player pinned at 1000.')
@click.option('--prior-games', type=float, default=0.0)
@click.option('--output', type=click.Path(path_type=Path), default=None)
@handle_errors
def elo(summaries, anchor, prior_games, output):
    """Anchored Elo from match summary CSVs."""
    from src.evaluation.elo import compute_elo
    from src.evaluation.match import MatchResult

    frame = pd.concat([pd.read_csv(p) for p in summaries], ignore_index=True)
    results = [MatchResult.from_counts(r.player_a, r.player_b, int(r.wins), int(r.draws),
                                       int(r.losses))
               for r in frame.itertuples()]
    table = compute_elo(results, anchor, prior_games=prior_games)
    _write_frame(table.to_frame(), output)


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------

@cli.group()
def analyze():
    """Regret diagnostics over a run directory."""


@analyze.command('selected-regret')
@click.argument('run_dir', type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option('--checkpoint', 'checkpoints', multiple=True, type=click.Path(path_type=Path),
              help='Checkpoints to score with (default: the latest).')
@click.option('--top-n', type=int, default=200)
@click.option('--seed', type=int, default=0)
@click.option('--output', type=click.Path(path_type=Path), default=None)
@handle_errors
def selected_regret(run_dir, checkpoints, top_n, seed, output):
    """True regret of the states each regret head ranks highest."""
    from src.evaluation.analysis import analyze_selected_regret
    from src.training.trainer import GAMES_FILE

    checkpoints = list(checkpoints) or [latest_checkpoint(run_dir)]
    df = analyze_selected_regret(run_dir / GAMES_FILE, checkpoints, top_n, seed)
    _write_frame(df, output)


@analyze.command('prb-shift')
@click.argument('run_dir', type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option('--bins', type=int, default=20)
@click.option('--output', type=click.Path(path_type=Path), default=None)
@handle_errors
def prb_shift(run_dir, bins, output):
    """First-entry versus final regret of evicted buffer entries."""
    from src.evaluation.analysis import analyze_prb_shift, collect_evictions

    histogram, summary = analyze_prb_shift(collect_evictions(run_dir), bins)
    _write_frame(histogram, output)
    click.echo(f"evicted={summary['evicted']} mean_first={summary['mean_first']:.4f} "
               f"mean_final={summary['mean_final']:.4f} "
               f"{'PASS' if summary['passed'] else 'FAIL'}")


@analyze.command('opening-lengths')
@click.argument('run_dir', type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option('--bucket-width', type=int, default=5)
@click.option('--output', type=click.Path(path_type=Path), default=None)
@handle_errors
def opening_lengths(run_dir, bucket_width, output):
    """Stored openings per length bucket over the run."""
    from src.evaluation.analysis import analyze_opening_lengths, load_buffer_snapshots

    _write_frame(analyze_opening_lengths(load_buffer_snapshots(run_dir), bucket_width), output)


@analyze.command('track-entry')
@click.argument('run_dir', type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option('--entry-id', type=int, required=True)
@click.option('--worker', type=int, default=0)
@click.option('--output', type=click.Path(path_type=Path), default=None)
@handle_errors
def track_entry(run_dir, entry_id, worker, output):
    """Regret of one buffer entry across its updates."""
    from src.evaluation.analysis import load_buffer_snapshots, track_opening_regret

    _write_frame(track_opening_regret(load_buffer_snapshots(run_dir), entry_id, worker), output)


@analyze.command('plot')
@click.argument('kind', type=click.Choice(['losses', 'toy', 'shift', 'openings']))
@click.argument('source', type=click.Path(exists=True, path_type=Path))
@click.option('--output', type=click.Path(path_type=Path), required=True,
              help='Image file (.png or .svg).')
@handle_errors
def plot(kind, source, output):
    """Render a figure from a metrics, toy aggregate or analysis CSV."""
    from src.evaluation import plots

    df = pd.read_csv(source)
    renderers = {
        'losses': plots.plot_losses,
        'toy': plots.plot_toy_curves,
        'shift': plots.plot_regret_shift,
        'openings': plots.plot_opening_lengths,
    }
    click.echo(f"Figure written to {renderers[kind](df, output)}")


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

@cli.command()
@click.option('--trials', type=int, default=100)
@click.option('--seed', type=int, default=0)
@click.option('--tolerance', type=float, default=1e-4)
@handle_errors
def gradcheck(trials, seed, tolerance):
    """Finite-difference check of every head's analytic gradient."""
    from src.models.gradcheck import check_gradients

    if trials < 0:
        raise ConfigurationError(f"--trials must be >= 0, got {trials}")
    if trials == 0:
        logger.warning("gradcheck with 0 trials checks nothing")
    results = check_gradients(trials, seed=seed, tolerance=tolerance)
    for r in results:
        click.echo(f"{r.head:<8} max relative error {r.max_relative_error:.3e}  "
                   f"{'PASS' if r.passed else 'FAIL'}")
    if not all(r.passed for r in results):
        sys.exit(EXIT_RUNTIME)


def main() -> None:
    cli()


if __name__ == '__main__':
    main()
