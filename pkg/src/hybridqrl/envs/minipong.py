"""Mini-Pong: deterministic integer-grid paddle-and-ball game.

The agent controls the right paddle (RIGHT moves up, LEFT moves down), a
scripted opponent controls the left paddle. Every point is served from the
centre towards the agent. Rewards are +1 when the opponent misses and -1
when the agent misses; the episode ends when either side reaches
``score_to_win``.

Physics, per emulator frame:

1. the agent paddle moves by ``paddle_speed`` (clamped to the field);
2. while the ball travels left, the opponent moves towards the ball centre
   by at most ``opponent_speed``;
3. the ball moves by ``(vx, vy)`` and reflects off the top/bottom edges;
4. a ball crossing a paddle's face while overlapping it vertically is
   returned: ``vx`` flips and ``vy`` is set from the hit offset
   (``round(offset * max_vy)``, offset in [-1, 1] from paddle centre,
   never 0);
   every ``speedup_hits`` agent returns within one point raise ``|vx|`` by
   one, up to ``max_ball_speed``;
5. a ball that leaves the field scores a point and is re-served.

Serve rows and vertical speeds cycle through fixed tables; ``seed`` only
selects the starting position in those tables.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ArgumentError

NOOP, RIGHT, LEFT = 0, 1, 2
ACTION_NAMES = ("NOOP", "RIGHT", "LEFT")

BACKGROUND = (144, 72, 17)
AGENT_COLOR = (92, 186, 92)
OPPONENT_COLOR = (213, 130, 74)
BALL_COLOR = (236, 236, 236)

SERVE_ROWS = (41, 20, 62, 30, 52, 12, 70)
SERVE_VY = (1, -2, 2, -1, 0)


@dataclass(frozen=True)
class MiniPongSpec:
    size: int = 84
    scale: int = 1
    paddle_height: int = 16
    paddle_width: int = 2
    paddle_speed: int = 3
    opponent_speed: int = 1
    opponent_height: int = 6
    opponent_reach: int = 20
    ball_size: int = 2
    ball_speed: int = 2
    max_vy: int = 2
    speedup_hits: int = 3
    max_ball_speed: int = 4
    score_to_win: int = 5
    max_frames: int = 20000

    def to_dict(self) -> dict:
        return asdict(self)


class MiniPong:
    name = "mini-pong"
    n_actions = 3
    action_names = ACTION_NAMES

    def __init__(self, spec: MiniPongSpec = MiniPongSpec(), seed: int = 0):
        self.spec = spec
        self.seed = int(seed)
        self.agent_x = spec.size - 4 - spec.paddle_width
        self.opp_x = 4
        self.reset()

    # -- state
    def reset(self) -> np.ndarray:
        s = self.spec
        self.agent_y = (s.size - s.paddle_height) // 2
        self.opp_y = (s.size - s.opponent_height) // 2
        self.agent_score = 0
        self.opp_score = 0
        self.frame_count = 0
        self.truncated = False
        self.done = False
        self._serve_idx = self.seed
        self._serve()
        return self.render()

    def _serve(self):
        s = self.spec
        i = self._serve_idx
        self._serve_idx += 1
        self.ball_x = (s.size - s.ball_size) // 2
        self.ball_y = SERVE_ROWS[i % len(SERVE_ROWS)]
        self.vx = s.ball_speed
        self.rally = 0
        self.vy = int(np.clip(SERVE_VY[i % len(SERVE_VY)], -s.max_vy, s.max_vy))

    def _deflect(self, paddle_y: int, height: int) -> int:
        s = self.spec
        ball_c = self.ball_y + s.ball_size / 2
        pad_c = paddle_y + height / 2
        offset = (ball_c - pad_c) / ((height + s.ball_size) / 2)
        vy = int(np.clip(np.round(offset * s.max_vy), -s.max_vy, s.max_vy))
        # no perfectly flat returns
        return vy if vy != 0 else (1 if offset >= 0 else -1)

    def step(self, action: int):
        if action not in (NOOP, RIGHT, LEFT):
            raise ArgumentError(f"invalid action {action!r}")
        s = self.spec
        if self.done:
            return self.render(), 0.0, True
        self.frame_count += 1
        top = s.size - s.paddle_height

        if action == RIGHT:
            self.agent_y = max(0, self.agent_y - s.paddle_speed)
        elif action == LEFT:
            self.agent_y = min(top, self.agent_y + s.paddle_speed)

        if self.vx < 0 and self.ball_x < s.opponent_reach:
            diff = (self.ball_y + s.ball_size / 2) - (self.opp_y + s.opponent_height / 2)
            move = int(np.clip(np.round(diff), -s.opponent_speed, s.opponent_speed))
            self.opp_y = int(np.clip(self.opp_y + move, 0, s.size - s.opponent_height))

        prev_x = self.ball_x
        self.ball_x += self.vx
        self.ball_y += self.vy
        bottom = s.size - s.ball_size
        if self.ball_y < 0:
            self.ball_y, self.vy = -self.ball_y, -self.vy
        elif self.ball_y > bottom:
            self.ball_y, self.vy = 2 * bottom - self.ball_y, -self.vy

        def overlaps(py, height):
            return self.ball_y < py + height and self.ball_y + s.ball_size > py

        face = self.agent_x
        if self.vx > 0 and prev_x + s.ball_size <= face < self.ball_x + s.ball_size and overlaps(self.agent_y, s.paddle_height):
            self.ball_x = face - s.ball_size
            self.rally += 1
            speed = min(s.ball_speed + self.rally // s.speedup_hits, s.max_ball_speed)
            self.vx = -speed
            self.vy = self._deflect(self.agent_y, s.paddle_height)
        face = self.opp_x + s.paddle_width
        if self.vx < 0 and self.ball_x < face <= prev_x and overlaps(self.opp_y, s.opponent_height):
            self.ball_x = face
            self.vx = abs(self.vx)
            self.vy = self._deflect(self.opp_y, s.opponent_height)

        reward = 0.0
        if self.ball_x < 0:
            self.agent_score += 1
            reward = 1.0
            self._serve()
        elif self.ball_x + s.ball_size > s.size:
            self.opp_score += 1
            reward = -1.0
            self._serve()

        terminal = max(self.agent_score, self.opp_score) >= s.score_to_win
        self.done = terminal
        if not terminal and self.frame_count >= s.max_frames:
            self.truncated = True
        return self.render(), reward, terminal

    # -- rendering
    def render(self) -> np.ndarray:
        s = self.spec
        img = np.empty((s.size, s.size, 3), dtype=np.uint8)
        img[...] = BACKGROUND
        img[self.opp_y : self.opp_y + s.opponent_height, self.opp_x : self.opp_x + s.paddle_width] = OPPONENT_COLOR
        img[self.agent_y : self.agent_y + s.paddle_height, self.agent_x : self.agent_x + s.paddle_width] = AGENT_COLOR
        x0, y0 = max(self.ball_x, 0), max(self.ball_y, 0)
        x1, y1 = min(self.ball_x + s.ball_size, s.size), min(self.ball_y + s.ball_size, s.size)
        if x1 > x0 and y1 > y0:
            img[y0:y1, x0:x1] = BALL_COLOR
        if s.scale > 1:
            img = img.repeat(s.scale, axis=0).repeat(s.scale, axis=1)
        return img

    def state_dict(self) -> dict:
        return {
            "ball": (self.ball_x, self.ball_y, self.vx, self.vy),
            "agent_y": self.agent_y,
            "opp_y": self.opp_y,
            "score": (self.agent_score, self.opp_score),
        }
