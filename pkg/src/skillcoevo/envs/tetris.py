"""Tetris on a 10x20 board with placement macro-actions.

An action is ``Placement(rotation, column)``: the piece in the given rotation
is dropped straight down with its bounding box's left edge at ``column``.
A placement is valid when the piece fits at the top of the board in that
column. Pieces come from a seeded 7-bag; four upcoming pieces are visible.
Reward is 100 per cleared line.

Predicate vocabulary:

    holes_le_<k>           k in 0, 2, 5
    holes_gt_5
    height_le_<k>          k in 4, 8, 12
    danger_height_ge_<k>   k in 15, 18
    bumpiness_le_<k>       k in 3, 6, 10
    lines_ge_<k>           k in 1, 5, 10, 20
    level_ge_<k>           k in 2, 3
    row_nearly_full
    well_open
    current_piece=<P> / next_piece=<P>
    i_piece_in_preview
"""

from __future__ import annotations

import numpy as np

from .base import (EnvConfig, EpisodeDoneError, InvalidActionError, Observation, Placement,
                   StepResult)

WIDTH = 10
HEIGHT = 20
PREVIEW = 4
LINE_SCORE = 100

# cells as (row, col) offsets from the bounding box's top-left corner
PIECES: dict[str, list[tuple[tuple[int, int], ...]]] = {
    "I": [((0, 0), (0, 1), (0, 2), (0, 3)),
          ((0, 0), (1, 0), (2, 0), (3, 0))],
    "O": [((0, 0), (0, 1), (1, 0), (1, 1))],
    "T": [((0, 1), (1, 0), (1, 1), (1, 2)),
          ((0, 0), (1, 0), (1, 1), (2, 0)),
          ((0, 0), (0, 1), (0, 2), (1, 1)),
          ((0, 1), (1, 0), (1, 1), (2, 1))],
    "S": [((0, 1), (0, 2), (1, 0), (1, 1)),
          ((0, 0), (1, 0), (1, 1), (2, 1))],
    "Z": [((0, 0), (0, 1), (1, 1), (1, 2)),
          ((0, 1), (1, 0), (1, 1), (2, 0))],
    "J": [((0, 0), (1, 0), (1, 1), (1, 2)),
          ((0, 0), (0, 1), (1, 0), (2, 0)),
          ((0, 0), (0, 1), (0, 2), (1, 2)),
          ((0, 1), (1, 1), (2, 0), (2, 1))],
    "L": [((0, 2), (1, 0), (1, 1), (1, 2)),
          ((0, 0), (1, 0), (2, 0), (2, 1)),
          ((0, 0), (0, 1), (0, 2), (1, 0)),
          ((0, 0), (0, 1), (1, 1), (2, 1))],
}
PIECE_ORDER = "IOTSZJL"


def piece_width(piece: str, rotation: int) -> int:
    return max(c for _, c in PIECES[piece][rotation]) + 1


def _fits(board: np.ndarray, cells, top: int, left: int) -> bool:
    for dr, dc in cells:
        r, c = top + dr, left + dc
        if r >= HEIGHT or c < 0 or c >= WIDTH or board[r, c]:
            return False
    return True


def drop_row(board: np.ndarray, piece: str, rotation: int, column: int) -> int | None:
    """Resting row of the bounding box for a straight drop, or None if blocked at the top."""
    cells = PIECES[piece][rotation]
    if not _fits(board, cells, 0, column):
        return None
    top = 0
    while _fits(board, cells, top + 1, column):
        top += 1
    return top


def placements(board: np.ndarray, piece: str) -> list[Placement]:
    out = []
    for rot in range(len(PIECES[piece])):
        for col in range(WIDTH - piece_width(piece, rot) + 1):
            if drop_row(board, piece, rot, col) is not None:
                out.append(Placement(rot, col))
    return out


def place(board: np.ndarray, piece: str, rotation: int, column: int) -> tuple[np.ndarray, int]:
    """Drop a piece and clear full rows. Returns (new_board, lines_cleared)."""
    top = drop_row(board, piece, rotation, column)
    if top is None:
        raise InvalidActionError(f"placement rot={rotation} col={column} is blocked")
    new = board.copy()
    for dr, dc in PIECES[piece][rotation]:
        new[top + dr, column + dc] = 1
    full = new.all(axis=1)
    lines = int(full.sum())
    if lines:
        kept = new[~full]
        new = np.vstack([np.zeros((lines, WIDTH), dtype=new.dtype), kept])
    return new, lines


def column_heights(board: np.ndarray) -> list[int]:
    heights = []
    for c in range(WIDTH):
        filled = np.flatnonzero(board[:, c])
        heights.append(HEIGHT - int(filled[0]) if len(filled) else 0)
    return heights


def board_stats(board: np.ndarray) -> dict[str, int]:
    heights = column_heights(board)
    holes = 0
    for c in range(WIDTH):
        filled = np.flatnonzero(board[:, c])
        if len(filled):
            holes += int(np.count_nonzero(board[filled[0]:, c] == 0))
    bumpiness = sum(abs(a - b) for a, b in zip(heights, heights[1:]))
    return {"height": max(heights), "holes": holes, "bumpiness": bumpiness}


def board_predicates(payload: dict) -> frozenset[str]:
    board = np.array(payload["board"], dtype=np.int8)
    stats = board_stats(board)
    heights = column_heights(board)
    preds = set()
    preds.update(f"holes_le_{k}" for k in (0, 2, 5) if stats["holes"] <= k)
    if stats["holes"] > 5:
        preds.add("holes_gt_5")
    preds.update(f"height_le_{k}" for k in (4, 8, 12) if stats["height"] <= k)
    preds.update(f"danger_height_ge_{k}" for k in (15, 18) if stats["height"] >= k)
    preds.update(f"bumpiness_le_{k}" for k in (3, 6, 10) if stats["bumpiness"] <= k)
    lines = payload["lines"]
    preds.update(f"lines_ge_{k}" for k in (1, 5, 10, 20) if lines >= k)
    preds.update(f"level_ge_{k}" for k in (2, 3) if payload["level"] >= k)
    if (board.sum(axis=1) == WIDTH - 1).any():
        preds.add("row_nearly_full")
    walls = [HEIGHT] + heights + [HEIGHT]
    if any(min(walls[i - 1], walls[i + 1]) - walls[i] >= 3 for i in range(1, WIDTH + 1)):
        preds.add("well_open")
    if payload["current"]:
        preds.add(f"current_piece={payload['current']}")
    if payload["preview"]:
        preds.add(f"next_piece={payload['preview'][0]}")
    if "I" in payload["preview"]:
        preds.add("i_piece_in_preview")
    return frozenset(preds)


def render(payload: dict, score: float) -> str:
    board = np.array(payload["board"], dtype=np.int8)
    stats = board_stats(board)
    lines = ["|" + "".join("#" if v else "." for v in row) + "|" for row in board]
    lines.append("+" + "-" * WIDTH + "+")
    lines.append(f"current piece: {payload['current'] or '-'}")
    lines.append(f"next: {' '.join(payload['preview'])}")
    lines.append(f"score: {score:g}")
    lines.append(f"stack height: {stats['height']}")
    lines.append(f"holes: {stats['holes']}")
    lines.append(f"cleared lines: {payload['lines']}")
    lines.append(f"level: {payload['level']}")
    return "\n".join(lines)


class TetrisEnv:
    game_id = "tetris"

    def __init__(self, config: EnvConfig):
        self.config = config
        self.reset()

    def reset(self) -> Observation:
        self.rng = np.random.default_rng(self.config.seed)
        self.board = np.zeros((HEIGHT, WIDTH), dtype=np.int8)
        self.queue: list[str] = []
        self._refill()
        self.current = self.queue.pop(0)
        self._refill()
        self.lines = 0
        self.score = 0.0
        self.steps = 0
        self.done = not placements(self.board, self.current)
        return self.observation()

    def _refill(self) -> None:
        while len(self.queue) < PREVIEW:
            self.queue.extend(PIECE_ORDER[i] for i in self.rng.permutation(len(PIECE_ORDER)))

    @property
    def level(self) -> int:
        return 1 + self.lines // 10

    def observation(self) -> Observation:
        payload = {
            "board": self.board.tolist(),
            "current": self.current,
            "preview": list(self.queue[:PREVIEW]),
            "lines": self.lines,
            "level": self.level,
            "score": self.score,
        }
        return Observation(self.game_id, self.steps, render(payload, self.score), payload, self.score)

    def valid_actions(self) -> list[Placement]:
        if self.done:
            return []
        return placements(self.board, self.current)

    def step(self, action: Placement) -> StepResult:
        if self.done:
            raise EpisodeDoneError("episode is over")
        if not isinstance(action, Placement) or action not in self.valid_actions():
            raise InvalidActionError(f"invalid placement {action!r}")
        self.board, lines = place(self.board, self.current, action.rotation, action.column)
        reward = float(LINE_SCORE * lines)
        self.lines += lines
        self.score += reward
        self.steps += 1
        self.current = self.queue.pop(0)
        self._refill()
        self.done = self.steps >= self.config.max_steps or not placements(self.board, self.current)
        info = {"lines_cleared": lines, **board_stats(self.board)}
        return StepResult(self.observation(), reward, self.done, info)
