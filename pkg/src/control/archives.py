"""
Restart-State Stores

Every store answers draw_opening(rng) with the position a self-play game
starts from. `buffer_rate` is the probability of drawing from the store for
every variant; an empty store always yields the initial state.

- InitialOnlyPolicy: AlphaZero, always the initial state
- CircularArchive: Go-Exploit archives (GEVC from visited states, GESC from
  search-tree nodes), FIFO overwrite, uniform sampling
- PrioritizedRegretBuffer: keeps the highest-regret candidates, samples with
  P(i) proportional to R_i^(1/temperature), EMA-updates the regret of an
  entry after each game restarted from it

Stores are owned by one self-play worker each and serialise to JSON
snapshots (see snapshot/restore_policy).
"""

from abc import ABC, abstractmethod
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from scipy.special import softmax

from src.control.regret import Candidate, Provenance
from src.games import get_game
from src.games.base import Game, GameState
from src.utils.logger import get_logger

logger = get_logger(__name__)

SNAPSHOT_VERSION = 1


class ArchiveError(Exception):
    """Raised on bad store parameters, unknown entries or unusable snapshots."""
    pass


class RestartVariant(str, Enum):
    INITIAL_ONLY = 'initial_only'
    GEVC = 'gevc'
    GESC = 'gesc'
    PRB = 'prb'


METHOD_VARIANTS = {
    'alphazero': RestartVariant.INITIAL_ONLY,
    'gevc': RestartVariant.GEVC,
    'gesc': RestartVariant.GESC,
    'rgsc': RestartVariant.PRB,
}


@dataclass(frozen=True)
class Opening:
    state: GameState
    provenance: Provenance
    entry_id: Optional[int] = None


@dataclass
class BufferEntry:
    """
    A stored restart candidate.

    history holds first_regret followed by the regret after every EMA update.
    """
    entry_id: int
    state: GameState
    regret: float
    first_regret: float
    updates: int = 0
    opening_move_count: int = 0
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        game = get_game(self.state.game_id)
        return {
            'entry_id': self.entry_id,
            'state': game.state_to_string(self.state),
            'regret': self.regret,
            'first_regret': self.first_regret,
            'updates': self.updates,
            'opening_move_count': self.opening_move_count,
            'history': list(self.history),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], game: Game) -> "BufferEntry":
        return cls(
            entry_id=int(data['entry_id']),
            state=game.state_from_string(data['state']),
            regret=float(data['regret']),
            first_regret=float(data['first_regret']),
            updates=int(data['updates']),
            opening_move_count=int(data['opening_move_count']),
            history=[float(r) for r in data['history']],
        )


@dataclass(frozen=True)
class EvictionRecord:
    """Regret bookkeeping of an entry that left the buffer."""
    entry_id: int
    first_regret: float
    final_regret: float
    updates: int
    opening_move_count: int
    history: List[float]


class RestartPolicy(ABC):
    """Common interface of the restart stores."""

    variant: RestartVariant

    def __init__(self, game: Game, buffer_rate: float = 0.0):
        if not 0.0 <= buffer_rate <= 1.0:
            raise ArchiveError(f"buffer_rate must be in [0, 1], got {buffer_rate}")
        self.game = game
        self.buffer_rate = buffer_rate
        self.openings_from_store = 0

    @property
    @abstractmethod
    def size(self) -> int:
        pass

    @abstractmethod
    def _draw_stored(self, rng: np.random.Generator) -> Opening:
        pass

    def draw_opening(self, rng: np.random.Generator) -> Opening:
        """Initial state with probability 1 - buffer_rate (or when empty), else a stored state."""
        if rng.random() < self.buffer_rate and self.size > 0:
            self.openings_from_store += 1
            return self._draw_stored(rng)
        return Opening(self.game.initial_state(), Provenance.INITIAL_STATE)

    def parameters(self) -> Dict[str, Any]:
        return {'buffer_rate': self.buffer_rate}

    def stats(self) -> Dict[str, Any]:
        return {'buffer_size': self.size, 'buffer_openings': self.openings_from_store}

    def reset_counters(self) -> None:
        self.openings_from_store = 0

    def snapshot(self) -> Dict[str, Any]:
        return {
            'version': SNAPSHOT_VERSION,
            'variant': self.variant.value,
            'game_id': self.game.game_id,
            'parameters': self.parameters(),
            'openings_from_store': self.openings_from_store,
        }


class InitialOnlyPolicy(RestartPolicy):
    variant = RestartVariant.INITIAL_ONLY

    def __init__(self, game: Game, buffer_rate: float = 0.0):
        super().__init__(game, 0.0)

    @property
    def size(self) -> int:
        return 0

    def draw_opening(self, rng: np.random.Generator) -> Opening:
        return Opening(self.game.initial_state(), Provenance.INITIAL_STATE)

    def _draw_stored(self, rng: np.random.Generator) -> Opening:
        raise ArchiveError("InitialOnlyPolicy has no stored states")

    def stats(self) -> Dict[str, Any]:
        return {}


class CircularArchive(RestartPolicy):
    """Go-Exploit archive: FIFO ring of states, uniform sampling."""

    def __init__(self, game: Game, capacity: int, buffer_rate: float,
                 variant: RestartVariant = RestartVariant.GEVC):
        super().__init__(game, buffer_rate)
        if capacity < 1:
            raise ArchiveError(f"capacity must be >= 1, got {capacity}")
        if variant not in (RestartVariant.GEVC, RestartVariant.GESC):
            raise ArchiveError(f"CircularArchive variant must be gevc or gesc, got {variant}")
        self.variant = variant
        self.capacity = capacity
        self.states: deque = deque(maxlen=capacity)

    @property
    def size(self) -> int:
        return len(self.states)

    def push(self, states: Iterable[GameState]) -> None:
        for state in states:
            self.states.append(state)

    def _draw_stored(self, rng: np.random.Generator) -> Opening:
        state = self.states[int(rng.integers(len(self.states)))]
        return Opening(state, Provenance.ARCHIVE)

    def parameters(self) -> Dict[str, Any]:
        return {'buffer_rate': self.buffer_rate, 'capacity': self.capacity}

    def stats(self) -> Dict[str, Any]:
        stats = super().stats()
        stats['mean_opening_length'] = (
            float(np.mean([s.move_count for s in self.states])) if self.states else None
        )
        return stats

    def snapshot(self) -> Dict[str, Any]:
        dump = super().snapshot()
        dump['states'] = [self.game.state_to_string(s) for s in self.states]
        return dump


class PrioritizedRegretBuffer(RestartPolicy):
    """
    Capacity-bounded store of high-regret restart states.

    An entry only leaves through offer(): a candidate with strictly higher
    regret than the current minimum replaces it. EMA updates never evict.
    """

    variant = RestartVariant.PRB

    def __init__(self, game: Game, capacity: int, buffer_rate: float,
                 temperature: float, ema_alpha: float):
        super().__init__(game, buffer_rate)
        if capacity < 1:
            raise ArchiveError(f"capacity must be >= 1, got {capacity}")
        if temperature <= 0:
            raise ArchiveError(f"temperature must be > 0, got {temperature}")
        if not 0.0 < ema_alpha <= 1.0:
            raise ArchiveError(f"ema_alpha must be in (0, 1], got {ema_alpha}")
        self.capacity = capacity
        self.temperature = temperature
        self.ema_alpha = ema_alpha
        self.entries: List[BufferEntry] = []
        self.evictions: List[EvictionRecord] = []
        self.evictions_since_reset = 0
        self._next_id = 0

    @property
    def size(self) -> int:
        return len(self.entries)

    def regrets(self) -> np.ndarray:
        return np.array([e.regret for e in self.entries], dtype=np.float64)

    def get(self, entry_id: int) -> BufferEntry:
        for entry in self.entries:
            if entry.entry_id == entry_id:
                return entry
        raise ArchiveError(f"Unknown buffer entry id {entry_id}")

    def probabilities(self) -> np.ndarray:
        """P(i) = R_i^(1/T) / sum_j R_j^(1/T), computed in log space; uniform if all R are 0."""
        regrets = self.regrets()
        if regrets.size == 0:
            return regrets
        if not np.any(regrets > 0):
            logger.warning("All stored regrets are zero, sampling the buffer uniformly")
            return np.full(regrets.size, 1.0 / regrets.size)
        with np.errstate(divide='ignore'):
            log_weights = np.log(regrets) / self.temperature
        return softmax(log_weights)

    def _draw_stored(self, rng: np.random.Generator) -> Opening:
        idx = int(rng.choice(self.size, p=self.probabilities()))
        entry = self.entries[idx]
        return Opening(entry.state, Provenance.BUFFER, entry.entry_id)

    def offer(self, candidate: Candidate) -> bool:
        """Insert if there is room or the candidate beats the minimum regret strictly."""
        if candidate.regret < 0:
            raise ArchiveError(f"Candidate regret must be >= 0, got {candidate.regret}")
        if self.size >= self.capacity:
            min_idx = int(np.argmin(self.regrets()))
            if not candidate.regret > self.entries[min_idx].regret:
                return False
            evicted = self.entries.pop(min_idx)
            self.evictions.append(EvictionRecord(
                evicted.entry_id, evicted.first_regret, evicted.regret,
                evicted.updates, evicted.opening_move_count, list(evicted.history),
            ))
            self.evictions_since_reset += 1
            logger.debug(f"Evicted buffer entry {evicted.entry_id} "
                         f"(first {evicted.first_regret:.4f}, final {evicted.regret:.4f})")

        regret = float(candidate.regret)
        self.entries.append(BufferEntry(
            entry_id=self._next_id,
            state=candidate.state,
            regret=regret,
            first_regret=regret,
            opening_move_count=candidate.state.move_count,
            history=[regret],
        ))
        self._next_id += 1
        return True

    def ema_update(self, entry_id: int, new_regret: float) -> float:
        """R <- (1 - alpha) * R + alpha * new_regret; returns the stored value."""
        entry = self.get(entry_id)
        entry.regret = (1.0 - self.ema_alpha) * entry.regret + self.ema_alpha * float(new_regret)
        entry.updates += 1
        entry.history.append(entry.regret)
        return entry.regret

    def parameters(self) -> Dict[str, Any]:
        return {'buffer_rate': self.buffer_rate, 'capacity': self.capacity,
                'temperature': self.temperature, 'ema_alpha': self.ema_alpha}

    def stats(self) -> Dict[str, Any]:
        stats = super().stats()
        stats['buffer_mean_regret'] = float(self.regrets().mean()) if self.entries else None
        stats['evictions'] = self.evictions_since_reset
        stats['mean_opening_length'] = (
            float(np.mean([e.opening_move_count for e in self.entries])) if self.entries else None
        )
        return stats

    def reset_counters(self) -> None:
        super().reset_counters()
        self.evictions_since_reset = 0

    def snapshot(self) -> Dict[str, Any]:
        dump = super().snapshot()
        dump['next_id'] = self._next_id
        dump['evictions_since_reset'] = self.evictions_since_reset
        dump['entries'] = [e.to_dict() for e in self.entries]
        dump['evictions'] = [asdict(r) for r in self.evictions]
        return dump


def build_restart_policy(method: str, game: Game, capacity: int = 100,
                         buffer_rate: float = 0.5, temperature: float = 0.1,
                         ema_alpha: float = 0.5) -> RestartPolicy:
    """Store for a training method ('alphazero', 'gevc', 'gesc', 'rgsc')."""
    if method not in METHOD_VARIANTS:
        raise ArchiveError(f"Unknown method {method!r}, expected one of {sorted(METHOD_VARIANTS)}")
    variant = METHOD_VARIANTS[method]
    if variant is RestartVariant.INITIAL_ONLY:
        return InitialOnlyPolicy(game)
    if variant is RestartVariant.PRB:
        return PrioritizedRegretBuffer(game, capacity, buffer_rate, temperature, ema_alpha)
    return CircularArchive(game, capacity, buffer_rate, variant)


def restore_policy(dump: Dict[str, Any]) -> RestartPolicy:
    """
    Rebuild a store from snapshot().

    Raises:
        ArchiveError: unknown version or variant
    """
    if dump.get('version') != SNAPSHOT_VERSION:
        raise ArchiveError(f"Snapshot version {dump.get('version')} is not supported "
                           f"(expected {SNAPSHOT_VERSION})")
    try:
        variant = RestartVariant(dump['variant'])
    except ValueError as exc:
        raise ArchiveError(f"Unknown restart variant {dump.get('variant')!r}") from exc

    game = get_game(dump['game_id'])
    params = dump['parameters']

    if variant is RestartVariant.INITIAL_ONLY:
        policy: RestartPolicy = InitialOnlyPolicy(game)
    elif variant is RestartVariant.PRB:
        policy = PrioritizedRegretBuffer(game, params['capacity'], params['buffer_rate'],
                                         params['temperature'], params['ema_alpha'])
        policy.entries = [BufferEntry.from_dict(e, game) for e in dump['entries']]
        policy.evictions = [EvictionRecord(**r) for r in dump['evictions']]
        policy.evictions_since_reset = int(dump['evictions_since_reset'])
        policy._next_id = int(dump['next_id'])
    else:
        policy = CircularArchive(game, params['capacity'], params['buffer_rate'], variant)
        policy.push(game.state_from_string(s) for s in dump['states'])

    policy.openings_from_store = int(dump['openings_from_store'])
    return policy


# Function-style entry points over the store methods

def draw_opening(policy: RestartPolicy, rng: np.random.Generator) -> Opening:
    return policy.draw_opening(rng)


def prb_offer(prb: PrioritizedRegretBuffer, candidate: Candidate) -> bool:
    return prb.offer(candidate)


def prb_ema_update(prb: PrioritizedRegretBuffer, entry_id: int, new_regret: float) -> float:
    return prb.ema_update(entry_id, new_regret)


def archive_push(archive: CircularArchive, states: Iterable[GameState]) -> None:
    archive.push(states)


def prb_snapshot(prb: RestartPolicy) -> Dict[str, Any]:
    return prb.snapshot()


def prb_restore(dump: Dict[str, Any]) -> RestartPolicy:
    return restore_policy(dump)
