"""Mini-Breakout: deterministic integer-grid brick breaker with auto-fire.

A wall of ``brick_rows x brick_cols`` bricks sits near the top; row 0 is the
lowest row. Destroying a brick in row ``r`` yields ``reward_table[r]``
(default ``r + 1``, so higher rows pay more). The paddle moves along the
bottom (RIGHT moves right, LEFT moves left). The ball is launched
automatically at the start and after every lost life. The episode ends when
all lives are lost or the wall is cleared.

Physics, per emulator frame:

1. the paddle moves by ``paddle_speed`` (clamped to the field);
2. the ball moves by ``(vx, vy)`` and reflects off the left, right and top
   walls;
3. if the ball overlaps a brick, the first such brick (scanning from the top
   row, left to right) is removed, its reward paid and ``vy`` flipped;
4. a ball crossing the paddle's top face while overlapping it horizontally
   bounces up with ``vx = round(offset * max_vx)`` (never 0);
5. a ball below the field costs a life and is relaunched.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import ArgumentError
from .minipong import ACTION_NAMES, LEFT, NOOP, RIGHT

BACKGROUND = (0, 0, 0)
PADDLE_COLOR = (200, 72, 72)
BALL_COLOR = (200, 72, 72)
# bottom row first
ROW_COLORS = ((66, 72, 200), (72, 160, 72), (162, 162, 42), (180, 122, 48), (198, 108, 58), (200, 72, 72))

LAUNCH_VX = (1, -1, 2, -2)


@dataclass(frozen=True)
class MiniBreakoutSpec:
    size: int = 84
    scale: int = 1
    brick_rows: int = 6
    brick_cols: int = 12
    brick_height: int = 3
    brick_top: int = 12
    reward_table: Optional[Tuple[float, ...]] = None
    paddle_width: int = 12
    paddle_height: int = 2
    paddle_speed: int = 3
    ball_size: int = 2
    ball_speed: int = 2
    max_vx: int = 2
    lives: int = 5
    max_frames: int = 20000

    def rewards(self) -> Tuple[float, ...]:
        if self.reward_table is not None:
            if len(self.reward_table) != self.brick_rows:
                raise ArgumentError("reward_table needs one entry per brick row")
            return tuple(float(r) for r in self.reward_table)
        return tuple(float(r + 1) for r in range(self.brick_rows))

    def max_return(self) -> float:
        return float(sum(self.rewards()) * self.brick_cols)

    def to_dict(self) -> dict:
        return asdict(self)


class MiniBreakout:
    name = "mini-breakout"
    n_actions = 3
    action_names = ACTION_NAMES

    def __init__(self, spec: MiniBreakoutSpec = MiniBreakoutSpec(), seed: int = 0):
        self.spec = spec
        self.seed = int(seed)
        self.brick_width = spec.size // spec.brick_cols
        self.paddle_y = spec.size - 6
        self.reset()

    def reset(self) -> np.ndarray:
        s = self.spec
        self.bricks = np.ones((s.brick_rows, s.brick_cols), dtype=bool)
        self._wall = None
        self.paddle_x = (s.size - s.paddle_width) // 2
        self.lives = s.lives
        self.frame_count = 0
        self.truncated = False
        self.done = False
        self._launch_idx = self.seed
        self._launch()
        return self.render()

    def _launch(self):
        s = self.spec
        i = self._launch_idx
        self._launch_idx += 1
        self.ball_x = (s.size - s.ball_size) // 2
        self.ball_y = s.brick_top + s.brick_rows * s.brick_height + 8
        self.vx = int(np.clip(LAUNCH_VX[i % len(LAUNCH_VX)], -s.max_vx, s.max_vx))
        self.vy = s.ball_speed

    def _brick_rect(self, row: int, col: int):
        s = self.spec
        # row 0 is the lowest row on screen
        y0 = s.brick_top + (s.brick_rows - 1 - row) * s.brick_height
        x0 = col * self.brick_width
        return x0, y0, x0 + self.brick_width, y0 + s.brick_height

    def _hit_brick(self) -> float:
        s = self.spec
        bx0, by0 = self.ball_x, self.ball_y
        bx1, by1 = bx0 + s.ball_size, by0 + s.ball_size
        wall_top = s.brick_top
        wall_bottom = s.brick_top + s.brick_rows * s.brick_height
        if by1 <= wall_top or by0 >= wall_bottom:
            return 0.0
        rewards = s.rewards()
        for row in range(s.brick_rows - 1, -1, -1):
            for col in range(s.brick_cols):
                if not self.bricks[row, col]:
                    continue
                x0, y0, x1, y1 = self._brick_rect(row, col)
                if bx0 < x1 and bx1 > x0 and by0 < y1 and by1 > y0:
                    self.bricks[row, col] = False
                    self._wall = None
                    self.vy = -self.vy
                    return rewards[row]
        return 0.0

    def step(self, action: int):
        if action not in (NOOP, RIGHT, LEFT):
            raise ArgumentError(f"invalid action {action!r}")
        s = self.spec
        if self.done:
            return self.render(), 0.0, True
        self.frame_count += 1

        if action == RIGHT:
            self.paddle_x = min(s.size - s.paddle_width, self.paddle_x + s.paddle_speed)
        elif action == LEFT:
            self.paddle_x = max(0, self.paddle_x - s.paddle_speed)

        prev_y = self.ball_y
        self.ball_x += self.vx
        self.ball_y += self.vy
        right = s.size - s.ball_size
        if self.ball_x < 0:
            self.ball_x, self.vx = -self.ball_x, -self.vx
        elif self.ball_x > right:
            self.ball_x, self.vx = 2 * right - self.ball_x, -self.vx
        if self.ball_y < 0:
            self.ball_y, self.vy = -self.ball_y, -self.vy

        reward = self._hit_brick()

        face = self.paddle_y
        if (
            self.vy > 0
            and prev_y + s.ball_size <= face < self.ball_y + s.ball_size
            and self.ball_x < self.paddle_x + s.paddle_width
            and self.ball_x + s.ball_size > self.paddle_x
        ):
            self.ball_y = face - s.ball_size
            self.vy = -self.vy
            ball_c = self.ball_x + s.ball_size / 2
            pad_c = self.paddle_x + s.paddle_width / 2
            offset = (ball_c - pad_c) / ((s.paddle_width + s.ball_size) / 2)
            vx = int(np.clip(np.round(offset * s.max_vx), -s.max_vx, s.max_vx))
            self.vx = vx if vx != 0 else (1 if offset >= 0 else -1)

        if self.ball_y + s.ball_size > s.size:
            self.lives -= 1
            if self.lives > 0:
                self._launch()
            else:
                self.ball_y = s.size - s.ball_size

        terminal = self.lives <= 0 or not self.bricks.any()
        self.done = terminal
        if not terminal and self.frame_count >= s.max_frames:
            self.truncated = True
        return self.render(), reward, terminal

    def _render_wall(self) -> np.ndarray:
        s = self.spec
        img = np.empty((s.size, s.size, 3), dtype=np.uint8)
        img[...] = BACKGROUND
        for row in range(s.brick_rows):
            color = ROW_COLORS[row % len(ROW_COLORS)]
            for col in range(s.brick_cols):
                if self.bricks[row, col]:
                    x0, y0, x1, y1 = self._brick_rect(row, col)
                    img[y0:y1, x0:x1] = color
        return img

    def render(self) -> np.ndarray:
        s = self.spec
        if self._wall is None:
            self._wall = self._render_wall()
        img = self._wall.copy()
        img[self.paddle_y : self.paddle_y + s.paddle_height, self.paddle_x : self.paddle_x + s.paddle_width] = PADDLE_COLOR
        img[self.ball_y : self.ball_y + s.ball_size, self.ball_x : self.ball_x + s.ball_size] = BALL_COLOR
        if s.scale > 1:
            img = img.repeat(s.scale, axis=0).repeat(s.scale, axis=1)
        return img

    def state_dict(self) -> dict:
        return {
            "ball": (self.ball_x, self.ball_y, self.vx, self.vy),
            "paddle_x": self.paddle_x,
            "lives": self.lives,
            "bricks_left": int(self.bricks.sum()),
        }
