"""
Anchored maximum-likelihood Elo.

P(i beats j) = 1 / (1 + 10^(-(r_i - r_j) / 400)); draws count as half a
win. The anchor's rating is pinned and the remaining ratings maximise the
match log-likelihood, found by damped Newton steps until the gradient norm
drops below 1e-9.
"""

from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import expit

from src.evaluation.match import EvaluationError, MatchResult
from src.utils.logger import get_logger

logger = get_logger(__name__)

SCALE = np.log(10.0) / 400.0
GRADIENT_TOLERANCE = 1e-9
MAX_NEWTON_STEPS = 200


@dataclass
class EloTable:
    ratings: Dict[str, float]
    anchor: str
    games: Dict[str, int]

    def expected_score(self, a: str, b: str) -> float:
        return float(expit(SCALE * (self.ratings[a] - self.ratings[b])))

    def to_frame(self) -> pd.DataFrame:
        rows = [{'player': p, 'elo': r, 'games': self.games[p], 'anchor': p == self.anchor}
                for p, r in self.ratings.items()]
        return pd.DataFrame(rows, columns=['player', 'elo', 'games', 'anchor']) \
            .sort_values('elo', ascending=False, kind='mergesort').reset_index(drop=True)


def _pair_totals(results: List[MatchResult], players: List[str]):
    index = {p: i for i, p in enumerate(players)}
    m = len(players)
    score = np.zeros((m, m))
    count = np.zeros((m, m))
    for res in results:
        i, j = index[res.player_a], index[res.player_b]
        if i == j:
            continue
        a_score = res.wins + 0.5 * res.draws
        score[i, j] += a_score
        score[j, i] += res.games - a_score
        count[i, j] += res.games
        count[j, i] += res.games
    return score, count


def compute_elo(results: List[MatchResult], anchor: str, anchor_rating: float = 1000.0,
                prior_games: float = 0.0) -> EloTable:
    """
    Fit ratings to match results with `anchor` pinned at `anchor_rating`.

    Args:
        results: head-to-head results (player names are the MatchResult names)
        anchor: player whose rating is fixed
        prior_games: virtual drawn games added to every pair that met

    Raises:
        EvaluationError: anchor missing, a player not connected to the anchor,
            or no finite maximum (a perfect score without prior_games)
    """
    players = sorted({r.player_a for r in results} | {r.player_b for r in results})
    if anchor not in players:
        raise EvaluationError(f"Anchor {anchor!r} played no games")
    score, count = _pair_totals(results, players)
    played = count.sum(axis=1)
    if prior_games > 0:
        met = count > 0
        score = score + met * prior_games / 2.0
        count = count + met * prior_games

    a = players.index(anchor)
    _, labels = connected_components(csr_matrix(count > 0), directed=False)
    orphans = [p for p, lab in zip(players, labels) if lab != labels[a]]
    if orphans:
        raise EvaluationError(f"Players not connected to anchor {anchor!r}: {', '.join(orphans)}")
    # a finite maximum needs every player to have scored against every group it met
    n_groups, _ = connected_components(csr_matrix(score > 0), directed=True, connection='strong')
    if n_groups > 1:
        raise EvaluationError(
            "Ratings are unbounded: a player or group has a perfect score (use prior_games > 0)"
        )

    m = len(players)
    free = np.array([i for i in range(m) if i != a], dtype=int)
    r = np.full(m, float(anchor_rating))

    def gradient(r):
        p = expit(SCALE * (r[:, None] - r[None, :]))
        return SCALE * (score - count * p).sum(axis=1), p

    def loglik(r):
        d = SCALE * (r[:, None] - r[None, :])
        return float(-(score * np.logaddexp(0.0, -d)).sum())

    for step in range(MAX_NEWTON_STEPS):
        g, p = gradient(r)
        if free.size == 0 or np.linalg.norm(g[free]) < GRADIENT_TOLERANCE:
            break
        w = SCALE ** 2 * count * p * (1.0 - p)
        hessian = w - np.diag(w.sum(axis=1))
        delta = np.linalg.solve(hessian[np.ix_(free, free)], -g[free])
        current = loglik(r)
        t = 1.0
        while True:
            trial = r.copy()
            trial[free] += t * delta
            if loglik(trial) >= current - 1e-12 or t < 1e-8:
                break
            t *= 0.5
        r = trial
    else:
        raise EvaluationError(
            "Elo fit did not converge; a player may have a perfect score (use prior_games > 0)"
        )

    if not np.all(np.isfinite(r)):
        raise EvaluationError("Elo fit diverged")

    games = {p: int(played[i]) for i, p in enumerate(players)}
    table = EloTable({p: float(r[i]) for i, p in enumerate(players)}, anchor, games)
    logger.info(f"Elo fit over {len(players)} players converged in {step} Newton steps")
    return table
