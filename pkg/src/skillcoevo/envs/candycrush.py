"""Match-3 on an 8x8 board with four candy colors.

A swap of two orthogonally adjacent candies is valid only if it produces at
least one run of three or more. Matched candies are cleared, columns fall,
and new candies drop in from the seeded RNG until the board is stable. The
reward of a swap is the total number of candies cleared over the whole
cascade. A board with no valid swap is rearranged in place (same color
multiset) before the next move; this costs no move.

Predicate vocabulary:

    valid_swaps_ge_<k>          k in 1, 3, 5, 10
    best_swap_clear_ge_<k>      k in 3, 4, 5
    color_pair_count_ge_<k>     adjacent equal pairs, k in 3, 10, 20, 30
    dominant_color=<C>
    color_<C>_ge_20
    moves_left_le_<k>           k in 10, 25
"""

from __future__ import annotations

import numpy as np

from .base import (EnvConfig, EpisodeDoneError, InvalidActionError, Observation, StepResult,
                   Swap)

SIZE = 8
N_COLORS = 4
COLOR_NAMES = "RGBY"
EMPTY = -1
MAX_ARRANGE_ATTEMPTS = 10_000


def find_matches(board: np.ndarray) -> np.ndarray:
    """Boolean mask of cells belonging to a horizontal or vertical run of >= 3."""
    b = board
    mask = np.zeros(b.shape, dtype=bool)
    h = (b[:, :-2] == b[:, 1:-1]) & (b[:, 1:-1] == b[:, 2:]) & (b[:, :-2] != EMPTY)
    for k in range(3):
        mask[:, k:k + h.shape[1]] |= h
    v = (b[:-2, :] == b[1:-1, :]) & (b[1:-1, :] == b[2:, :]) & (b[:-2, :] != EMPTY)
    for k in range(3):
        mask[k:k + v.shape[0], :] |= v
    return mask


def _swapped(board: np.ndarray, s: Swap) -> np.ndarray:
    b = board.copy()
    b[s.r1, s.c1], b[s.r2, s.c2] = b[s.r2, s.c2], b[s.r1, s.c1]
    return b


def swap_clear_count(board: np.ndarray, s: Swap) -> int:
    """Candies cleared by the first match wave of a swap (no cascade)."""
    return int(find_matches(_swapped(board, s)).sum())


def valid_swaps(board: np.ndarray) -> list[Swap]:
    out = []
    for r in range(SIZE):
        for c in range(SIZE):
            for r2, c2 in ((r, c + 1), (r + 1, c)):
                if r2 >= SIZE or c2 >= SIZE or board[r, c] == board[r2, c2]:
                    continue
                s = Swap(r, c, r2, c2)
                if swap_clear_count(board, s):
                    out.append(s)
    return out


def is_adjacent_in_bounds(s: Swap) -> bool:
    cells_ok = all(0 <= v < SIZE for v in (s.r1, s.c1, s.r2, s.c2))
    return cells_ok and abs(s.r1 - s.r2) + abs(s.c1 - s.c2) == 1


def _creates_run(board: np.ndarray, r: int, c: int, color: int) -> bool:
    if c >= 2 and board[r, c - 1] == color and board[r, c - 2] == color:
        return True
    if r >= 2 and board[r - 1, c] == color and board[r - 2, c] == color:
        return True
    return False


def arrange(colors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Lay out a color multiset on the board with no runs and at least one valid swap."""
    pool_all = np.asarray(colors).ravel()
    for _ in range(MAX_ARRANGE_ATTEMPTS):
        pool = list(pool_all[rng.permutation(len(pool_all))])
        board = np.full((SIZE, SIZE), EMPTY, dtype=np.int64)
        ok = True
        for r in range(SIZE):
            for c in range(SIZE):
                for i, color in enumerate(pool):
                    if not _creates_run(board, r, c, color):
                        board[r, c] = pool.pop(i)
                        break
                else:
                    ok = False
                    break
            if not ok:
                break
        if ok and valid_swaps(board):
            return board
    raise RuntimeError("could not arrange a playable board from this color multiset")


def collapse(board: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Let candies fall into cleared cells and refill from the top."""
    b = board.copy()
    for c in range(SIZE):
        col = [v for v in b[:, c] if v != EMPTY]
        missing = SIZE - len(col)
        fresh = [int(v) for v in rng.integers(N_COLORS, size=missing)]
        b[:, c] = fresh + col
    return b


def resolve(board: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, int, int]:
    """Clear matches until stable. Returns (board, candies_cleared, waves)."""
    cleared = 0
    waves = 0
    while True:
        mask = find_matches(board)
        n = int(mask.sum())
        if not n:
            return board, cleared, waves
        cleared += n
        waves += 1
        board = board.copy()
        board[mask] = EMPTY
        board = collapse(board, rng)


def _adjacent_equal_pairs(board: np.ndarray) -> int:
    return int((board[:, :-1] == board[:, 1:]).sum() + (board[:-1, :] == board[1:, :]).sum())


def board_predicates(payload: dict) -> frozenset[str]:
    board = np.array(payload["board"], dtype=np.int64)
    swaps = valid_swaps(board)
    preds = set()
    preds.update(f"valid_swaps_ge_{k}" for k in (1, 3, 5, 10) if len(swaps) >= k)
    best = max((swap_clear_count(board, s) for s in swaps), default=0)
    preds.update(f"best_swap_clear_ge_{k}" for k in (3, 4, 5) if best >= k)
    pairs = _adjacent_equal_pairs(board)
    preds.update(f"color_pair_count_ge_{k}" for k in (3, 10, 20, 30) if pairs >= k)
    counts = np.bincount(board.ravel(), minlength=N_COLORS)
    preds.add(f"dominant_color={COLOR_NAMES[int(np.argmax(counts))]}")
    preds.update(f"color_{COLOR_NAMES[i]}_ge_20" for i in range(N_COLORS) if counts[i] >= 20)
    moves_left = payload["moves_left"]
    preds.update(f"moves_left_le_{k}" for k in (10, 25) if moves_left <= k)
    return frozenset(preds)


def render(payload: dict, score: float) -> str:
    board = np.array(payload["board"], dtype=np.int64)
    lines = ["   " + " ".join(str(c) for c in range(SIZE))]
    for r in range(SIZE):
        lines.append(f"{r}: " + " ".join(COLOR_NAMES[v] for v in board[r]))
    swaps = valid_swaps(board)
    lines.append(f"score: {score:g}")
    lines.append(f"moves left: {payload['moves_left']}")
    lines.append(f"valid swaps: {len(swaps)}")
    lines.append("swaps: " + "; ".join(f"({s.r1},{s.c1})-({s.r2},{s.c2})" for s in swaps))
    return "\n".join(lines)


class CandyCrushEnv:
    game_id = "candycrush"

    def __init__(self, config: EnvConfig):
        self.config = config
        self.reset()

    def reset(self) -> Observation:
        self.rng = np.random.default_rng(self.config.seed)
        colors = self.rng.integers(N_COLORS, size=SIZE * SIZE)
        self.board = arrange(colors, self.rng)
        self.score = 0.0
        self.steps = 0
        self.done = False
        self.reshuffles = 0
        return self.observation()

    def observation(self) -> Observation:
        payload = {"board": self.board.tolist(),
                   "moves_left": self.config.max_steps - self.steps,
                   "score": self.score}
        return Observation(self.game_id, self.steps, render(payload, self.score), payload, self.score)

    def valid_actions(self) -> list[Swap]:
        if self.done:
            return []
        return valid_swaps(self.board)

    def step(self, action: Swap) -> StepResult:
        if self.done:
            raise EpisodeDoneError("episode is over")
        if not isinstance(action, Swap) or not is_adjacent_in_bounds(action):
            raise InvalidActionError(f"not an adjacent in-bounds swap: {action!r}")
        if not swap_clear_count(self.board, action):
            raise InvalidActionError(f"swap {action!r} produces no match")
        board, cleared, waves = resolve(_swapped(self.board, action), self.rng)
        reshuffled = False
        if not valid_swaps(board):
            board = arrange(board, self.rng)
            self.reshuffles += 1
            reshuffled = True
        self.board = board
        self.score += cleared
        self.steps += 1
        self.done = self.steps >= self.config.max_steps
        info = {"candies_cleared": cleared, "cascade_waves": waves, "reshuffled": reshuffled}
        return StepResult(self.observation(), float(cleared), self.done, info)
