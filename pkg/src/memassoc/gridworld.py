"""Sixteen-state corridor world and a tabular Q-learning data collector.

The agent sits in one of four corridor cells and faces one of four compass
directions; ``state_id = position * 4 + direction``. Reaching the rightmost
cell ends the episode with reward +1; every other step costs 0.01.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError
from .rng import Rng
from .short_memory import ShortTermMemory

NUM_POSITIONS = 4
NUM_DIRECTIONS = 4
NUM_STATES = NUM_POSITIONS * NUM_DIRECTIONS
NUM_ACTIONS = 3
TURN_LEFT, TURN_RIGHT, FORWARD = 0, 1, 2
NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
GOAL = NUM_POSITIONS - 1
STEP_LIMIT = 50
STEP_REWARD = -0.01
GOAL_REWARD = 1.0
SCREEN = 16
START_STATE = 0 * NUM_DIRECTIONS + EAST


def state_id(position: int, direction: int) -> int:
    return position * NUM_DIRECTIONS + direction


def decode_state(sid: int) -> tuple[int, int]:
    if not 0 <= sid < NUM_STATES:
        raise IndexError(f"state {sid} out of range [0, {NUM_STATES})")
    return divmod(sid, NUM_DIRECTIONS)


def env_step(sid: int, action: int) -> tuple[int, float, bool]:
    """One transition; returns ``(next_state, reward, reached_goal)``.

    The step limit is enforced by the episode loop, not here.
    """
    pos, d = decode_state(sid)
    if action == TURN_LEFT:
        d = (d + 3) % 4
    elif action == TURN_RIGHT:
        d = (d + 1) % 4
    elif action == FORWARD:
        if d == EAST and pos < NUM_POSITIONS - 1:
            pos += 1
        elif d == WEST and pos > 0:
            pos -= 1
    else:
        raise ContractError(f"invalid action {action}")
    if pos == GOAL:
        return state_id(pos, d), GOAL_REWARD, True
    return state_id(pos, d), STEP_REWARD, False


# notch rows/cols relative to the agent block's top-left corner
_NOTCH = {NORTH: (0, 1), EAST: (1, 2), SOUTH: (2, 1), WEST: (1, 0)}


def render_screen(sid: int) -> np.ndarray:
    """16x16 screen, flattened: corridor band 0.25, agent 1.0, direction notch 0.5."""
    pos, d = decode_state(sid)
    img = np.zeros((SCREEN, SCREEN))
    img[6:10, :] = 0.25
    img[6:10, 4 * pos:4 * pos + 4] = 1.0
    r, c = _NOTCH[d]
    img[6 + r:8 + r, 4 * pos + c:4 * pos + c + 2] = 0.5
    return img.reshape(-1)


def greedy_action(q: np.ndarray, sid: int) -> int:
    # np.argmax returns the first maximum: ties go to the lowest action
    return int(np.argmax(q[sid]))


def train_q_policy(rng: Rng, episodes: int = 500, alpha: float = 0.1, gamma: float = 0.9,
                   epsilon: float = 0.1, start: int = START_STATE) -> np.ndarray:
    """Tabular Q-learning with an epsilon-greedy behaviour policy; returns Q (16 x 3)."""
    q = np.zeros((NUM_STATES, NUM_ACTIONS))
    for _ in range(episodes):
        s = start
        for _ in range(STEP_LIMIT):
            if rng.uniform() < epsilon:
                a = rng.randbelow(NUM_ACTIONS)
            else:
                a = greedy_action(q, s)
            s2, r, done = env_step(s, a)
            target = r if done else r + gamma * q[s2].max()
            q[s, a] += alpha * (target - q[s, a])
            s = s2
            if done:
                break
    return q


def rollout(q: np.ndarray | None, rng: Rng | None = None, start: int = START_STATE):
    """Run one episode; greedy on ``q``, or uniformly random when ``q`` is None.

    Returns the visited states (start and terminal included) and the
    undiscounted return.
    """
    s, total, visited = start, 0.0, [start]
    for _ in range(STEP_LIMIT):
        a = greedy_action(q, s) if q is not None else rng.randbelow(NUM_ACTIONS)
        s, r, done = env_step(s, a)
        total += r
        visited.append(s)
        if done:
            break
    return visited, total


def collect_screens(q: np.ndarray, episodes: int, mem: ShortTermMemory,
                    start: int = START_STATE) -> ShortTermMemory:
    """Insert the screen of every state the greedy policy visits."""
    if mem.num_classes != NUM_STATES:
        raise ContractError(f"gridworld memory needs {NUM_STATES} classes, has {mem.num_classes}")
    for _ in range(episodes):
        visited, _ = rollout(q, start=start)
        for s in visited:
            mem.insert(s, render_screen(s))
    return mem
