import numpy as np
import pytest


class ToyEnv:
    """8x8x1 corridor: the agent's column is lit; RIGHT earns +1 at the wall and ends the episode."""

    n_actions = 3

    def __init__(self, length=6, max_steps=20):
        self.length = length
        self.max_steps = max_steps
        self.truncated = False

    def _obs(self):
        obs = np.zeros((8, 8, 1), np.uint8)
        obs[:, self.pos, 0] = 255
        return obs

    def reset(self):
        self.pos, self.steps, self.truncated = 0, 0, False
        return self._obs()

    def step(self, action):
        self.steps += 1
        if action == 1:
            self.pos += 1
        elif action == 2:
            self.pos = max(self.pos - 1, 0)
        if self.pos >= self.length:
            self.pos = self.length
            return self._obs(), 1.0, True
        self.truncated = self.steps >= self.max_steps
        return self._obs(), 0.0, False


@pytest.fixture
def toy_env():
    return ToyEnv()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
