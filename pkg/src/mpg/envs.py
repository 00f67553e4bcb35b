"""Platform2D-v1 navigation task and a small parametrized-action task.

Both use potential-based rewards ``phi(s) - phi(s')`` with
``phi(s) = ||s - goal||``, so the undiscounted return of an episode
telescopes to ``phi(s_0) - phi(s_T)``.

Interface consumed by the trainer::

    env.reset(seed=None) -> state
    env.step(action) -> StepResult
    env.obs_dim, env.action_kind
"""

import enum
import math
from dataclasses import dataclass

import numpy as np


class Outcome(str, enum.Enum):
    NONE = "none"
    GOAL = "goal"
    FELL_OFF = "fell_off"
    TRUNCATED = "truncated"

    @property
    def done(self):
        return self is not Outcome.NONE


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: Outcome


def potential(state, goal):
    return np.linalg.norm(np.asarray(state, dtype=float) - goal, axis=-1)


class Platform2D:
    """Move a point across the square platform [-1.5, 1.5]^2 to the goal.

    The executed action is a unit direction; the agent moves ``step_size``
    along it. Reaching the goal ball or leaving the platform ends the
    episode; so does hitting ``max_steps``.
    """

    obs_dim = 2
    action_kind = "direction"

    def __init__(self, step_size=0.1, goal_radius=0.1, max_steps=200,
                 start=(-1.0, -1.0), goal=(1.0, 1.0), half_width=1.5):
        if step_size <= 0 or goal_radius <= 0 or max_steps < 1:
            raise ValueError("step_size, goal_radius and max_steps must be positive")
        self.step_size = float(step_size)
        self.goal_radius = float(goal_radius)
        self.max_steps = int(max_steps)
        self.start = np.array(start, dtype=float)
        self.goal = np.array(goal, dtype=float)
        self.half_width = float(half_width)
        self.state = self.start.copy()
        self.t = 0

    def reset(self, seed=None):
        self.state = self.start.copy()
        self.t = 0
        return self.state.copy()

    def phi(self, state):
        # sqrt(dx^2 + dy^2) spelled out so step() and transition() agree bitwise
        d = np.asarray(state, dtype=float) - self.goal
        return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])

    def _phi_xy(self, x, y):
        dx, dy = x - self.goal[0], y - self.goal[1]
        return math.sqrt(dx * dx + dy * dy)

    def transition(self, state, direction):
        """Vectorised ``(next_state, reward, terminal_mask)`` without step counting.

        ``terminal_mask`` flags goal or fall-off; used by critic-based q.
        """
        state = np.asarray(state, dtype=float)
        nxt = state + self.step_size * np.asarray(direction, dtype=float)
        reward = self.phi(state) - self.phi(nxt)
        goal = self.phi(nxt) <= self.goal_radius
        off = np.any(np.abs(nxt) > self.half_width, axis=-1)
        return nxt, reward, goal | off

    def step(self, direction):
        # scalar arithmetic: this runs once per worker per environment step
        ux, uy = float(direction[0]), float(direction[1])
        if len(direction) != 2 or abs(math.sqrt(ux * ux + uy * uy) - 1.0) > 1e-9:
            raise ValueError("Platform2D actions must be unit vectors")
        x, y = float(self.state[0]), float(self.state[1])
        nx, ny = x + self.step_size * ux, y + self.step_size * uy
        phi_next = self._phi_xy(nx, ny)
        reward = self._phi_xy(x, y) - phi_next
        nxt = np.array([nx, ny])
        self.state = nxt
        self.t += 1
        if phi_next <= self.goal_radius:
            outcome = Outcome.GOAL
        elif abs(nx) > self.half_width or abs(ny) > self.half_width:
            outcome = Outcome.FELL_OFF
        elif self.t >= self.max_steps:
            outcome = Outcome.TRUNCATED
        else:
            outcome = Outcome.NONE
        return StepResult(nxt.copy(), reward, outcome)

    def optimal_steps(self):
        """Steps of the straight-line policy from the start to the goal ball."""
        dist = float(self.phi(self.start)) - self.goal_radius
        return int(np.ceil(dist / self.step_size - 1e-12))

    def optimal_return(self, gamma):
        """Discounted return of the straight-line policy."""
        n = self.optimal_steps()
        rewards = np.full(n, self.step_size)
        # the last step may overshoot the goal centre
        rewards[-1] = float(self.phi(self.start)) - (n - 1) * self.step_size \
            - abs(float(self.phi(self.start)) - n * self.step_size)
        return float(np.sum(rewards * gamma ** np.arange(n)))


class ToyParamEnv:
    """Two parametrized actions on the plane, fixed 50-step episodes.

    ``k = 0`` ("move") takes a unit direction and moves ``step_size`` along it;
    ``k = 1`` ("thrust") takes a scalar in [-1, 1] and moves ``step_size * w``
    along the x-axis.
    """

    obs_dim = 2
    action_kind = "parametrized"
    n_actions = 2
    param_dims = (2, 1)

    def __init__(self, step_size=0.1, episode_len=50, start=(-1.0, -1.0), goal=(1.0, 1.0)):
        self.step_size = float(step_size)
        self.episode_len = int(episode_len)
        self.start = np.array(start, dtype=float)
        self.goal = np.array(goal, dtype=float)
        self.state = self.start.copy()
        self.t = 0

    def reset(self, seed=None):
        self.state = self.start.copy()
        self.t = 0
        return self.state.copy()

    def displacement(self, k, omega):
        k = np.asarray(k)
        omega0, omega1 = omega
        move = self.step_size * np.asarray(omega0, dtype=float)
        thrust = self.step_size * np.asarray(omega1, dtype=float)[..., :1] * np.array([1.0, 0.0])
        return np.where((k == 0)[..., None], move, thrust)

    def transition(self, state, k, omega):
        """Vectorised ``(next_state, reward)``; ``omega`` is ``(directions, thrusts)``."""
        nxt = np.asarray(state, dtype=float) + self.displacement(k, omega)
        return nxt, potential(state, self.goal) - potential(nxt, self.goal)

    def step(self, action):
        k, w = action
        k = int(k)
        if k == 0:
            w = np.asarray(w, dtype=float)
            if w.shape != (2,) or abs(np.linalg.norm(w) - 1.0) > 1e-9:
                raise ValueError("move needs a unit 2-vector")
            disp = self.step_size * w
        elif k == 1:
            w = float(np.asarray(w).reshape(-1)[0])
            if not -1.0 <= w <= 1.0:
                raise ValueError("thrust must lie in [-1, 1]")
            disp = np.array([self.step_size * w, 0.0])
        else:
            raise ValueError(f"invalid discrete action {k}")
        nxt = self.state + disp
        reward = float(potential(self.state, self.goal) - potential(nxt, self.goal))
        self.state = nxt
        self.t += 1
        outcome = Outcome.TRUNCATED if self.t >= self.episode_len else Outcome.NONE
        return StepResult(nxt.copy(), reward, outcome)


ENVIRONMENTS = {"platform2d": Platform2D, "toy_param": ToyParamEnv}


def make_env(name, **kwargs):
    try:
        return ENVIRONMENTS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown environment {name!r}") from None
