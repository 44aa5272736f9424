"""2048 on a 4x4 board.

Reward is the merge score of a move. After every effective move one tile
spawns uniformly over the empty cells: 2 with probability 0.9, else 4.

Predicate vocabulary (all threshold functions of the board):

    max_tile=<v>                 exact max tile
    max_tile_ge_<k>              k in 64, 128, 256, 512, 1024, 2048
    empty_ge_<k>                 k in 1, 2, 4, 8, 12
    empty_le_2
    merges_ge_<k>                adjacent equal pairs, k in 1, 2, 4
    max_in_corner
    monotone_rows / monotone_cols
    can_<dir>                    dir in up, down, left, right
    no_moves
"""

from __future__ import annotations

import numpy as np

from .base import (DIRECTIONS, Direction, EnvConfig, EpisodeDoneError, InvalidActionError,
                   Observation, StepResult)

SIZE = 4
MAX_TILE_LADDER = (64, 128, 256, 512, 1024, 2048)
EMPTY_LADDER = (1, 2, 4, 8, 12)
MERGE_LADDER = (1, 2, 4)


def merge_row_left(row: list[int]) -> tuple[list[int], int]:
    """Slide one row to the left, merging each tile at most once."""
    tiles = [v for v in row if v]
    out: list[int] = []
    reward = 0
    i = 0
    while i < len(tiles):
        if i + 1 < len(tiles) and tiles[i] == tiles[i + 1]:
            out.append(tiles[i] * 2)
            reward += tiles[i] * 2
            i += 2
        else:
            out.append(tiles[i])
            i += 1
    return out + [0] * (len(row) - len(out)), reward


def apply_move(board: np.ndarray, direction: str) -> tuple[np.ndarray, int, bool]:
    """Return (new_board, merge_reward, changed) without spawning."""
    # rotate so the move becomes "left", then rotate back
    k = {"left": 0, "up": 1, "right": 2, "down": 3}[direction]
    rotated = np.rot90(board, k)
    rows = []
    reward = 0
    for row in rotated:
        merged, r = merge_row_left([int(v) for v in row])
        rows.append(merged)
        reward += r
    new = np.rot90(np.array(rows, dtype=np.int64), -k)
    return new, reward, not np.array_equal(new, board)


def legal_directions(board: np.ndarray) -> list[str]:
    return [d for d in DIRECTIONS if apply_move(board, d)[2]]


def _adjacent_pairs(board: np.ndarray) -> int:
    n = 0
    for r in range(SIZE):
        for c in range(SIZE):
            v = board[r, c]
            if not v:
                continue
            if c + 1 < SIZE and board[r, c + 1] == v:
                n += 1
            if r + 1 < SIZE and board[r + 1, c] == v:
                n += 1
    return n


def _monotone(lines) -> bool:
    for line in lines:
        diffs = np.diff(line)
        if not (np.all(diffs >= 0) or np.all(diffs <= 0)):
            return False
    return True


def board_predicates(board: np.ndarray) -> frozenset[str]:
    preds = set()
    max_tile = int(board.max())
    empty = int(np.count_nonzero(board == 0))
    preds.add(f"max_tile={max_tile}")
    preds.update(f"max_tile_ge_{k}" for k in MAX_TILE_LADDER if max_tile >= k)
    preds.update(f"empty_ge_{k}" for k in EMPTY_LADDER if empty >= k)
    if empty <= 2:
        preds.add("empty_le_2")
    pairs = _adjacent_pairs(board)
    preds.update(f"merges_ge_{k}" for k in MERGE_LADDER if pairs >= k)
    if max_tile and max_tile in (board[0, 0], board[0, -1], board[-1, 0], board[-1, -1]):
        preds.add("max_in_corner")
    if _monotone(board):
        preds.add("monotone_rows")
    if _monotone(board.T):
        preds.add("monotone_cols")
    legal = legal_directions(board)
    preds.update(f"can_{d}" for d in legal)
    if not legal:
        preds.add("no_moves")
    return frozenset(preds)


def render(payload: dict, score: float) -> str:
    board = np.array(payload["board"], dtype=np.int64)
    width = max(4, len(str(int(board.max()))))
    lines = [" ".join(f"{int(v) if v else '.':>{width}}" for v in row) for row in board]
    lookahead = []
    for d in DIRECTIONS:
        _, r, changed = apply_move(board, d)
        lookahead.append(f"{d}={'+' + str(r) if changed else 'invalid'}")
    lines.append(f"score: {score:g}")
    lines.append(f"max tile: {int(board.max())}")
    lines.append(f"empty cells: {int(np.count_nonzero(board == 0))}")
    lines.append("lookahead: " + ", ".join(lookahead))
    return "\n".join(lines)


class G2048Env:
    game_id = "g2048"

    def __init__(self, config: EnvConfig):
        self.config = config
        self.reset()

    def reset(self) -> Observation:
        self.rng = np.random.default_rng(self.config.seed)
        self.board = np.zeros((SIZE, SIZE), dtype=np.int64)
        self.score = 0.0
        self.steps = 0
        self.done = False
        self._spawn()
        self._spawn()
        return self.observation()

    @classmethod
    def from_board(cls, board, seed: int = 0, max_steps: int | None = None) -> "G2048Env":
        env = cls(EnvConfig("g2048", seed=seed, max_steps=max_steps))
        env.board = np.array(board, dtype=np.int64).reshape(SIZE, SIZE)
        env.done = not legal_directions(env.board)
        return env

    def _spawn(self) -> None:
        empty = np.argwhere(self.board == 0)
        if len(empty) == 0:
            return
        r, c = empty[self.rng.integers(len(empty))]
        self.board[r, c] = 2 if self.rng.random() < 0.9 else 4

    def observation(self) -> Observation:
        payload = {"board": self.board.tolist(), "score": self.score}
        return Observation(self.game_id, self.steps, render(payload, self.score), payload, self.score)

    def valid_actions(self) -> list[Direction]:
        if self.done:
            return []
        return [Direction(d) for d in legal_directions(self.board)]

    def step(self, action: Direction) -> StepResult:
        if self.done:
            raise EpisodeDoneError("episode is over")
        if not isinstance(action, Direction) or action.direction not in DIRECTIONS:
            raise InvalidActionError(f"not a 2048 action: {action!r}")
        new, reward, changed = apply_move(self.board, action.direction)
        if not changed:
            raise InvalidActionError(f"move {action.direction} does not change the board")
        self.board = new
        self._spawn()
        self.score += reward
        self.steps += 1
        self.done = self.steps >= self.config.max_steps or not legal_directions(self.board)
        info = {"merge_reward": reward, "max_tile": int(self.board.max())}
        return StepResult(self.observation(), float(reward), self.done, info)
