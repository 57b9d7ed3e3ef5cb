"""Small episodic environments with a shared reset/step interface.

All environments are deterministic given the reset seed and the action
sequence.  Observations are float vectors; discrete actions are integers in
``range(n_actions)`` and continuous actions are float vectors inside the
declared box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bandit_dynamics import BanditSpec
from .policy_opt import EXAMPLE1_BANDIT, ContinuousBanditSpec


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    horizon: int
    reward_scale: float
    n_actions: int | None = None
    action_low: tuple[float, ...] | None = None
    action_high: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if (self.n_actions is None) == (self.action_low is None):
            raise ValueError("declare either a finite action set or box bounds")
        if self.action_low is not None:
            low, high = np.asarray(self.action_low), np.asarray(self.action_high)
            if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high)) and np.all(low < high)):
                raise ValueError("box bounds must be finite with low < high")

    @property
    def discrete(self) -> bool:
        return self.n_actions is not None

    @property
    def action_dim(self) -> int:
        return 1 if self.discrete else len(self.action_low)


@dataclass
class Transition:
    state: np.ndarray
    action: object
    reward: float
    next_state: np.ndarray
    terminal: bool


class Env:
    spec: EnvSpec

    def reset(self, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> Transition:
        raise NotImplementedError

    def _check_action(self, action):
        if self.spec.discrete:
            if isinstance(action, (float, np.floating)) or not 0 <= int(action) < self.spec.n_actions:
                raise ValueError(f"action {action!r} outside 0..{self.spec.n_actions - 1}")
            return int(action)
        a = np.asarray(action, dtype=float).reshape(-1)
        low, high = np.asarray(self.spec.action_low), np.asarray(self.spec.action_high)
        if a.shape != low.shape or not np.all(np.isfinite(a)) or np.any(a < low) or np.any(a > high):
            raise ValueError(f"action {action!r} outside the box [{low}, {high}]")
        return a


class DiscreteBanditEnv(Env):
    """One-step episodes; the single observation is a constant."""

    def __init__(self, bandit: BanditSpec = EXAMPLE1_BANDIT):
        self.bandit = bandit
        scale = float(np.max(np.abs(bandit.reward_array)))
        self.spec = EnvSpec("bandit", 1, 1, scale, n_actions=bandit.n_actions)
        self._state = np.ones(1)

    def reset(self, seed=None):
        return self._state.copy()

    def step(self, action):
        a = self._check_action(action)
        return Transition(self._state.copy(), a, self.bandit.rewards[a], self._state.copy(), True)


class ContinuousBanditEnv(Env):
    def __init__(self, bandit: ContinuousBanditSpec | None = None, low=-5.0, high=10.0):
        self.bandit = bandit or ContinuousBanditSpec()
        self.spec = EnvSpec("bandit-continuous", 1, 1, self.bandit.optimal_reward,
                            action_low=(low,), action_high=(high,))
        self._state = np.ones(1)

    def reset(self, seed=None):
        return self._state.copy()

    def step(self, action):
        a = self._check_action(action)
        reward = float(self.bandit.reward(a)[0])
        return Transition(self._state.copy(), a, reward, self._state.copy(), True)


class ChainEnv(Env):
    """A corridor with a small reward one step left of the start and a large
    one at the right end.

    Cells are ``0 .. length-1``; the agent starts in cell 1.  Moving left
    from the start reaches the attractor (cell 0) and ends the episode with
    ``attractor_reward``; walking right to the last cell ends it with
    ``goal_reward``.  Observations are one-hot cell indicators.
    """

    LEFT, RIGHT = 0, 1

    def __init__(self, length=12, attractor_reward=0.1, goal_reward=1.0, horizon=40):
        if length < 3:
            raise ValueError("chain needs at least 3 cells")
        self.length = length
        self.attractor_reward = attractor_reward
        self.goal_reward = goal_reward
        self.start = 1
        self.spec = EnvSpec("chain", length, horizon, max(attractor_reward, goal_reward),
                            n_actions=2)
        self.pos = self.start
        self.t = 0

    def _obs(self):
        obs = np.zeros(self.length)
        obs[self.pos] = 1.0
        return obs

    def reset(self, seed=None):
        self.pos, self.t = self.start, 0
        return self._obs()

    def step(self, action):
        a = self._check_action(action)
        before = self._obs()
        self.pos += 1 if a == self.RIGHT else -1
        self.t += 1
        reward, terminal = 0.0, False
        if self.pos == 0:
            reward, terminal = self.attractor_reward, True
        elif self.pos == self.length - 1:
            reward, terminal = self.goal_reward, True
        terminal = terminal or self.t >= self.spec.horizon
        return Transition(before, a, reward, self._obs(), terminal)

    def optimal_return(self, gamma=1.0):
        steps = self.length - 1 - self.start
        return self.goal_reward * gamma ** (steps - 1)


class CartPoleLite(Env):
    """Linearised pole-on-cart difference equations, one continuous force.

    State is (cart position, cart velocity, pole angle, angular velocity).
    The pole angle is unstable: ``omega += dt * (gain * angle - force)``;
    the force also accelerates the cart.  Every step alive pays 1; the
    episode ends when the angle or position leaves its limit.
    """

    def __init__(self, horizon=200, dt=0.05, gain=10.0, perturbation=0.05,
                 angle_limit=0.2, position_limit=2.4):
        self.dt, self.gain = dt, gain
        self.perturbation = perturbation
        self.angle_limit, self.position_limit = angle_limit, position_limit
        self.spec = EnvSpec("cartpole-lite", 4, horizon, 1.0,
                            action_low=(-1.0,), action_high=(1.0,))
        self.state = np.zeros(4)
        self.t = 0

    def reset(self, seed=None):
        rng = np.random.default_rng(seed)
        self.state = rng.uniform(-self.perturbation, self.perturbation, 4)
        self.t = 0
        return self.state.copy()

    def step(self, action):
        a = float(self._check_action(action)[0])
        x, v, th, om = self.state
        before = self.state.copy()
        force = 10.0 * a
        v = v + self.dt * force
        x = x + self.dt * v
        om = om + self.dt * (self.gain * th - force)
        th = th + self.dt * om
        self.state = np.array([x, v, th, om])
        self.t += 1
        failed = abs(th) > self.angle_limit or abs(x) > self.position_limit
        terminal = failed or self.t >= self.spec.horizon
        return Transition(before, np.array([a]), 0.0 if failed else 1.0, self.state.copy(),
                          terminal)

    @staticmethod
    def centering_action(state) -> np.ndarray:
        """Hand-tuned linear controller that keeps the pole up near the centre."""
        x, v, th, om = state
        return np.clip(np.array([4.0 * th + 1.2 * om + 0.05 * x + 0.15 * v]), -1.0, 1.0)


@dataclass
class _Entry:
    factory: Callable[..., Env]
    # trainer defaults that differ from the global ones
    overrides: dict = field(default_factory=dict)


REGISTRY: dict[str, _Entry] = {
    "bandit": _Entry(DiscreteBanditEnv, dict(rollout_steps=64, minibatches=2)),
    "bandit-continuous": _Entry(ContinuousBanditEnv, dict(rollout_steps=64, minibatches=2)),
    "chain": _Entry(ChainEnv, dict(rollout_steps=256)),
    "cartpole-lite": _Entry(CartPoleLite, dict(rollout_steps=1024)),
}


def make_env(name: str, **kwargs) -> Env:
    try:
        entry = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; known: {sorted(REGISTRY)}") from None
    return entry.factory(**kwargs)


def env_overrides(name: str) -> dict:
    return dict(REGISTRY[name].overrides)
