import numpy as np
import pytest

from trgppo.envs import (REGISTRY, CartPoleLite, ChainEnv, ContinuousBanditEnv,
                         DiscreteBanditEnv, EnvSpec, make_env)


def random_episode(env, rng, seed):
    state = env.reset(seed)
    steps, rewards = 0, []
    while True:
        if env.spec.discrete:
            action = int(rng.integers(env.spec.n_actions))
        else:
            action = rng.uniform(env.spec.action_low, env.spec.action_high)
        tr = env.step(action)
        np.testing.assert_array_equal(tr.state, state)
        state = tr.next_state
        steps += 1
        rewards.append(tr.reward)
        if tr.terminal:
            return steps, rewards


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_bounded_rewards_and_horizon(name):
    env = make_env(name)
    rng = np.random.default_rng(0)
    for seed in range(20):
        steps, rewards = random_episode(env, rng, seed)
        assert 1 <= steps <= env.spec.horizon
        assert all(np.isfinite(r) and abs(r) <= env.spec.reward_scale for r in rewards)


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_deterministic_given_seed_and_actions(name):
    traces = []
    for _ in range(2):
        env = make_env(name)
        steps, rewards = random_episode(env, np.random.default_rng(5), 17)
        traces.append((steps, rewards))
    assert traces[0] == traces[1]


def test_same_seed_same_start():
    a, b = CartPoleLite().reset(3), CartPoleLite().reset(3)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, CartPoleLite().reset(4))


def test_out_of_space_actions():
    with pytest.raises(ValueError):
        ChainEnv().step(2)
    with pytest.raises(ValueError):
        DiscreteBanditEnv().step(-1)
    with pytest.raises(ValueError):
        CartPoleLite().step([1.5])
    with pytest.raises(ValueError):
        ContinuousBanditEnv().step([np.nan])


def test_spec_validation():
    with pytest.raises(ValueError):
        EnvSpec("x", 1, 0, 1.0, n_actions=2)
    with pytest.raises(ValueError):
        EnvSpec("x", 1, 5, 1.0, action_low=(0.0,), action_high=(np.inf,))
    with pytest.raises(ValueError):
        EnvSpec("x", 1, 5, 1.0)


def test_unknown_name():
    with pytest.raises(KeyError):
        make_env("pong")


def test_bandits_are_one_step():
    env = DiscreteBanditEnv()
    np.testing.assert_array_equal(env.reset(0), [1.0])
    tr = env.step(2)
    assert tr.terminal and tr.reward == -50.0
    tr = ContinuousBanditEnv().step([3.0])
    assert tr.terminal and tr.reward == 1.0


class TestChain:
    def test_starts_next_to_attractor(self):
        env = ChainEnv()
        assert np.argmax(env.reset(0)) == 1
        tr = env.step(ChainEnv.LEFT)
        assert tr.terminal and tr.reward == 0.1

    def test_move_right_reaches_goal(self):
        env = ChainEnv()
        env.reset(0)
        total, steps = 0.0, 0
        for _ in range(env.length):
            tr = env.step(ChainEnv.RIGHT)
            total += tr.reward
            steps += 1
            if tr.terminal:
                break
        # cells 1 -> 11 takes ten moves
        assert (total, steps) == (1.0, 10)
        assert env.optimal_return(0.99) == pytest.approx(0.99 ** 9)

    def test_discounted_goal_beats_attractor(self):
        assert ChainEnv().optimal_return(0.99) > 0.1

    def test_horizon_cutoff(self):
        env = ChainEnv()
        env.reset(0)
        for t in range(40):
            tr = env.step(ChainEnv.RIGHT if t % 2 == 0 else ChainEnv.LEFT)
        assert tr.terminal and tr.reward == 0.0


class TestCartPole:
    def run(self, env, seed):
        state, steps = env.reset(seed), 0
        while True:
            tr = env.step(env.centering_action(state))
            state, steps = tr.next_state, steps + 1
            if tr.terminal:
                return steps

    def test_balanced_start_survives(self):
        env = CartPoleLite(perturbation=0.0)
        assert self.run(env, 0) >= env.spec.horizon // 2

    def test_perturbed_starts_survive(self):
        env = CartPoleLite()
        assert all(self.run(env, s) >= env.spec.horizon // 2 for s in range(10))

    def test_falls_without_control(self):
        env = CartPoleLite()
        env.reset(0)
        steps = 0
        while not env.step([0.0]).terminal:
            steps += 1
        assert steps < env.spec.horizon // 2
