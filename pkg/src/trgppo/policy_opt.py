"""Gradient-based bandit experiments with Gibbs and Gaussian policies.

Each iteration draws a fresh batch from the current policy, freezes it as
the old policy, computes per-sample clipping ranges and then takes several
gradient-ascent steps on the clipped surrogate.  Vanilla policy gradient
takes a single score-function step instead.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from scipy.special import log_softmax, ndtr

from .bandit_dynamics import BanditSpec
from .clip_solver import (DEFAULT_CONFIG, eval_g, gaussian_clip_ranges, gaussian_delta_for_ratio,
                          solve_clip_ranges, truncate_ranges)

Method = Literal["PPO", "TRGPPO", "PG"]

EXAMPLE1_BANDIT = BanditSpec((1.0, 0.5, -50.0))
EXAMPLE1_INIT = (0.2, 0.6, 0.2)

# defaults filled in for unset config fields, per bandit kind
GIBBS_DEFAULTS = dict(batch_size=4, learning_rate=0.1, ascent_steps=30, delta=0.1)
GAUSSIAN_DEFAULTS = dict(batch_size=32, learning_rate=0.02, ascent_steps=50, delta="adaptive")


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

@dataclass
class GibbsPolicy:
    theta: np.ndarray
    # logits more than this far below the max are held there so every
    # probability stays strictly positive
    logit_span: float = 30.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float).copy()

    @property
    def params(self) -> np.ndarray:
        return self.theta

    @params.setter
    def params(self, value):
        theta = np.asarray(value, dtype=float)
        top = theta.max()
        self.theta = np.maximum(theta - top, -self.logit_span)

    def probs(self, params=None) -> np.ndarray:
        return np.exp(log_softmax(self.theta if params is None else params))

    def log_prob(self, actions, params=None) -> np.ndarray:
        return log_softmax(self.theta if params is None else params)[actions]

    def grad_log_prob(self, actions, params=None) -> np.ndarray:
        """Per-sample score, shape (n, n_actions)."""
        p = self.probs(params)
        g = -np.broadcast_to(p, (len(actions), p.size)).copy()
        g[np.arange(len(actions)), actions] += 1.0
        return g

    def sample(self, rng, n) -> np.ndarray:
        return rng.choice(self.theta.size, size=n, p=self.probs())


@dataclass
class GaussianPolicy1D:
    mu: float
    log_sigma: float = 0.0
    min_log_sigma: float = -10.0

    @property
    def params(self) -> np.ndarray:
        return np.array([self.mu, self.log_sigma])

    @params.setter
    def params(self, value):
        self.mu = float(value[0])
        self.log_sigma = float(max(value[1], self.min_log_sigma))

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    def log_prob(self, actions, params=None) -> np.ndarray:
        mu, ls = self.params if params is None else params
        a = np.asarray(actions, dtype=float)
        return -ls - 0.5 * ((a - mu) / np.exp(ls)) ** 2 - 0.5 * math.log(2 * math.pi)

    def grad_log_prob(self, actions, params=None) -> np.ndarray:
        mu, ls = self.params if params is None else params
        z = (np.asarray(actions, dtype=float) - mu) / np.exp(ls)
        return np.column_stack([z / np.exp(ls), z * z - 1.0])

    def sample(self, rng, n) -> np.ndarray:
        return self.mu + self.sigma * rng.standard_normal(n)


# ---------------------------------------------------------------------------
# bandits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousBanditSpec:
    # (low, high, reward) on open intervals; zero elsewhere
    intervals: tuple[tuple[float, float, float], ...] = ((1.0, 2.0, 0.5), (2.5, 5.0, 1.0))

    def __post_init__(self):
        for lo, hi, _ in self.intervals:
            if not lo < hi:
                raise ValueError("reward intervals must have low < high")

    @property
    def optimal_reward(self) -> float:
        return max(max(r for _, _, r in self.intervals), 0.0)

    def reward(self, actions) -> np.ndarray:
        a = np.asarray(actions, dtype=float)
        out = np.zeros_like(a)
        for lo, hi, r in self.intervals:
            out = np.where((a > lo) & (a < hi), r, out)
        return out

    def expected_reward(self, mu: float, sigma: float) -> float:
        total = 0.0
        for lo, hi, r in self.intervals:
            total += r * (ndtr((hi - mu) / sigma) - ndtr((lo - mu) / sigma))
        return float(total)


@dataclass
class SampleBatch:
    actions: np.ndarray
    rewards: np.ndarray
    old_log_probs: np.ndarray

    def __len__(self):
        return len(self.actions)


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------

def clipped_surrogate(policy, params, batch: SampleBatch, lower, upper):
    """Mean clipped surrogate and its exact gradient.

    A sample stops contributing once its ratio has passed the bound in the
    direction its reward pushes (``r >= u`` for positive, ``r <= l`` for
    negative reward); there the clipped term is the minimum and is flat.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if not (len(lower) == len(upper) == len(batch)):
        raise ValueError("ranges must align with the batch")
    c = batch.rewards
    ratio = np.exp(policy.log_prob(batch.actions, params) - batch.old_log_probs)
    clipped = np.clip(ratio, lower, upper)
    value = np.mean(np.minimum(ratio * c, clipped * c))
    frozen = ((c > 0) & (ratio >= upper)) | ((c < 0) & (ratio <= lower))
    weight = np.where(frozen, 0.0, c * ratio)
    grad = weight @ policy.grad_log_prob(batch.actions, params) / len(batch)
    return float(value), grad


def vanilla_pg_gradient(policy, params, batch: SampleBatch) -> np.ndarray:
    if len(batch) == 0:
        raise ValueError("empty batch")
    return batch.rewards @ policy.grad_log_prob(batch.actions, params) / len(batch)


def exact_gibbs_gradient(theta, rewards) -> np.ndarray:
    """Gradient of the expected reward for a Gibbs policy, in closed form."""
    p = np.exp(log_softmax(np.asarray(theta, dtype=float)))
    r = np.asarray(rewards, dtype=float)
    return p * (r - p @ r)


# ---------------------------------------------------------------------------
# training runs
# ---------------------------------------------------------------------------

@dataclass
class TrainRunConfig:
    method: Method = "PPO"
    iterations: int = 1000
    batch_size: int | None = None
    learning_rate: float | None = None
    ascent_steps: int | None = None
    seed: int = 0
    epsilon: float = 0.2
    # "adaptive", a fixed KL budget, or None for the bandit's default
    delta: float | str | None = None
    # "normal" draws from the default distribution; "example1" pins the
    # discrete fixture; a number fixes the Gaussian mean
    init: str | float = "normal"
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.method not in ("PPO", "TRGPPO", "PG"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate is not None and self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.ascent_steps is not None and self.ascent_steps < 1:
            raise ValueError("ascent_steps must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.delta not in (None, "adaptive") and not float(self.delta) > 0:
            raise ValueError("delta must be 'adaptive' or positive")

    def resolved(self, discrete: bool) -> "TrainRunConfig":
        """Copy with unset fields taken from the bandit kind's defaults."""
        defaults = GIBBS_DEFAULTS if discrete else GAUSSIAN_DEFAULTS
        return replace(self, **{k: v for k, v in defaults.items() if getattr(self, k) is None})

    def to_dict(self):
        return asdict(self)


class Adam:
    """Adam ascent on stacked parameters; moments persist across iterations."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params + self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, shape, lr):
        self.lr = lr

    def step(self, params, grad):
        return params + self.lr * grad


@dataclass
class BanditRun:
    config: TrainRunConfig
    curve: np.ndarray
    final_params: np.ndarray
    optimal_reward: float
    failed: bool = False
    message: str = ""
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # largest |ratio - 1| seen at the first ascent step of any iteration
    first_step_ratio_error: float = 0.0
    # smallest action probability seen (Gibbs only)
    min_prob: float = float("nan")


class _GibbsFamily:
    """Row-stacked Gibbs policies, one row per seed."""

    def __init__(self, n_actions, logit_span=30.0):
        self.k = n_actions
        self.logit_span = logit_span

    def guard(self, theta):
        return np.maximum(theta - theta.max(axis=1, keepdims=True), -self.logit_span)

    def log_prob(self, theta, actions):
        return np.take_along_axis(log_softmax(theta, axis=1), actions, axis=1)

    def score(self, theta, actions):
        p = np.exp(log_softmax(theta, axis=1))
        g = -np.repeat(p[:, None, :], actions.shape[1], axis=1)
        np.put_along_axis(g, actions[..., None], np.take_along_axis(g, actions[..., None], 2) + 1.0, 2)
        return g

    def sample(self, theta, uniforms):
        cdf = np.cumsum(np.exp(log_softmax(theta, axis=1)), axis=1)
        cdf[:, -1] = 1.0
        return np.minimum((uniforms[..., None] > cdf[:, None, :]).sum(axis=2), self.k - 1)


class _GaussianFamily:
    """Row-stacked 1-D Gaussians with parameters (mu, log_sigma)."""

    def __init__(self, min_log_sigma=-10.0):
        self.min_log_sigma = min_log_sigma

    def guard(self, params):
        out = params.copy()
        out[:, 1] = np.maximum(out[:, 1], self.min_log_sigma)
        return out

    def log_prob(self, params, actions):
        mu, ls = params[:, :1], params[:, 1:]
        return -ls - 0.5 * ((actions - mu) / np.exp(ls)) ** 2 - 0.5 * math.log(2 * math.pi)

    def score(self, params, actions):
        mu, ls = params[:, :1], params[:, 1:]
        z = (actions - mu) / np.exp(ls)
        return np.stack([z / np.exp(ls), z * z - 1.0], axis=2)

    def sample(self, params, normals):
        return params[:, :1] + np.exp(params[:, 1:]) * normals


def _stacked_ranges(config, old_logp, actions, rewards, params, discrete):
    """Per-seed clipping ranges, shape (seeds, batch), and the budgets used."""
    eps = config.epsilon
    shape = rewards.shape
    lower = np.full(shape, 1.0 - eps)
    upper = np.full(shape, 1.0 + eps)
    deltas = np.full(shape[0], np.nan)
    if config.method != "TRGPPO":
        return lower, upper, deltas
    pos, neg = rewards > 0, rewards < 0
    if discrete:
        probs = DEFAULT_CONFIG.clamp(np.exp(old_logp))
        if config.delta == "adaptive":
            feasible = pos & (probs * (1.0 + eps) < 1.0 - DEFAULT_CONFIG.p_min)
            p_plus = np.where(feasible, probs, -np.inf).max(axis=1)
            p_minus = np.where(neg, probs, -np.inf).max(axis=1)
            arm_pos = np.full(shape[0], -np.inf)
            arm_neg = np.full(shape[0], -np.inf)
            has_pos, has_neg = np.isfinite(p_plus), np.isfinite(p_minus)
            if has_pos.any():
                arm_pos[has_pos] = eval_g(p_plus[has_pos], 1.0 + eps)
            if has_neg.any():
                arm_neg[has_neg] = eval_g(p_minus[has_neg], 1.0 - eps)
            deltas = np.maximum(arm_pos, arm_neg)
        else:
            deltas = np.full(shape[0], float(config.delta))
        rows = np.isfinite(deltas)
        if rows.any():
            lo, up = solve_clip_ranges(probs[rows], deltas[rows, None])
            lower[rows], upper[rows] = truncate_ranges(lo, up, eps)
    else:
        z = (actions - params[:, :1]) / np.exp(params[:, 1:])
        if config.delta == "adaptive":
            az = np.abs(z)
            z_pos = np.where(pos, az, np.inf).min(axis=1)
            z_neg = np.where(neg, az, np.inf).min(axis=1)
            arm_pos = np.full(shape[0], -np.inf)
            arm_neg = np.full(shape[0], -np.inf)
            has_pos, has_neg = np.isfinite(z_pos), np.isfinite(z_neg)
            if has_pos.any():
                arm_pos[has_pos] = gaussian_delta_for_ratio(z_pos[has_pos], 1.0 + eps)
            if has_neg.any():
                arm_neg[has_neg] = gaussian_delta_for_ratio(z_neg[has_neg], 1.0 - eps)
            deltas = np.maximum(arm_pos, arm_neg)
        else:
            deltas = np.full(shape[0], float(config.delta))
        rows = np.isfinite(deltas)
        if rows.any():
            lo, up = gaussian_clip_ranges(z[rows], deltas[rows, None])
            lower[rows], upper[rows] = truncate_ranges(lo, up, eps)
    return lower, upper, deltas


def _clipped_gradient(rewards, ratio, lower, upper, score):
    frozen = ((rewards > 0) & (ratio >= upper)) | ((rewards < 0) & (ratio <= lower))
    weight = np.where(frozen, 0.0, rewards * ratio)
    return np.einsum("sn,snd->sd", weight, score) / rewards.shape[1]


def run_bandit_sweep(spec, config: TrainRunConfig, seeds: Sequence[int]) -> list[BanditRun]:
    """Train one run per seed in lockstep; each seed owns its random stream.

    Every run is identical to ``run_bandit_training`` with that seed.  The
    learning curve holds the exact expected reward before training and after
    each iteration.
    """
    seeds = list(seeds)
    rngs = [np.random.default_rng(s) for s in seeds]
    discrete = isinstance(spec, BanditSpec)
    config = config.resolved(discrete)
    lr, steps, n = config.learning_rate, config.ascent_steps, config.batch_size

    if discrete:
        family = _GibbsFamily(spec.n_actions)
        rewards_table = spec.reward_array
        optimum = float(rewards_table.max())
        if config.init == "example1":
            theta0 = np.tile(np.log(np.asarray(EXAMPLE1_INIT)), (len(seeds), 1))
        elif config.init == "normal":
            theta0 = np.stack([g.standard_normal(spec.n_actions) for g in rngs])
        else:
            raise ValueError(f"unknown discrete init {config.init!r}")
        params = family.guard(theta0)

        def expected(P):
            return np.exp(log_softmax(P, axis=1)) @ rewards_table
    else:
        family = _GaussianFamily()
        optimum = spec.optimal_reward
        if config.init == "normal":
            mu0 = np.array([g.uniform(-1.0, 6.0) for g in rngs])
        else:
            mu0 = np.full(len(seeds), float(config.init))
        params = np.column_stack([mu0, np.zeros(len(seeds))])

        def expected(P):
            return np.array([spec.expected_reward(m, math.exp(ls)) for m, ls in P])

    optimizer = (Adam if config.optimizer == "adam" else SGD)(params.shape, lr)
    curves = np.full((config.iterations + 1, len(seeds)), np.nan)
    curves[0] = expected(params)
    deltas = np.full((config.iterations, len(seeds)), np.nan)
    alive = np.ones(len(seeds), dtype=bool)
    messages = [""] * len(seeds)
    ratio_err = 0.0
    min_prob = np.exp(log_softmax(params, axis=1)).min(axis=1) if discrete else None

    for it in range(config.iterations):
        if discrete:
            actions = family.sample(params, np.stack([g.random(n) for g in rngs]))
            rewards = rewards_table[actions]
        else:
            actions = family.sample(params, np.stack([g.standard_normal(n) for g in rngs]))
            rewards = spec.reward(actions)
        old = params.copy()
        old_logp = family.log_prob(old, actions)
        if config.method == "PG":
            grad = np.einsum("sn,snd->sd", rewards, family.score(old, actions)) / n
            params = family.guard(optimizer.step(old, grad))
        else:
            lower, upper, deltas[it] = _stacked_ranges(config, old_logp, actions, rewards,
                                                       old, discrete)
            for step in range(steps):
                ratio = np.exp(family.log_prob(params, actions) - old_logp)
                if step == 0:
                    ratio_err = max(ratio_err, float(np.max(np.abs(ratio - 1.0))))
                grad = _clipped_gradient(rewards, ratio, lower, upper,
                                         family.score(params, actions))
                params = family.guard(optimizer.step(params, grad))
        broken = alive & ~np.all(np.isfinite(params), axis=1)
        for i in np.flatnonzero(broken):
            messages[i] = f"non-finite parameters at iteration {it}"
        alive &= ~broken
        params[~alive] = np.nan_to_num(old[~alive])
        curves[it + 1] = np.where(alive, expected(params), np.nan)
        if discrete:
            min_prob = np.minimum(min_prob, np.exp(log_softmax(params, axis=1)).min(axis=1))

    runs = []
    for i, seed in enumerate(seeds):
        cfg = replace(config, seed=int(seed))
        curve = curves[:, i]
        runs.append(BanditRun(cfg, curve[np.isfinite(curve)], params[i].copy(), optimum,
                              not alive[i], messages[i], deltas[:, i].copy(), ratio_err,
                              float(min_prob[i]) if discrete else float("nan")))
    return runs


def run_bandit_training(spec, config: TrainRunConfig) -> BanditRun:
    """Train on a discrete (``BanditSpec``) or continuous bandit."""
    return run_bandit_sweep(spec, config, [config.seed])[0]


# ---------------------------------------------------------------------------
# trap statistics
# ---------------------------------------------------------------------------

@dataclass
class TrapRateReport:
    counts: dict
    totals: dict
    failed: dict
    threshold: float
    window: float

    def rate(self, method) -> float:
        total = self.totals.get(method, 0)
        return self.counts.get(method, 0) / total if total else float("nan")

    def rows(self):
        for m in sorted(self.totals):
            yield {"method": m, "trapped": self.counts[m], "total": self.totals[m],
                   "failed": self.failed.get(m, 0), "rate": self.rate(m),
                   "threshold": self.threshold, "window": self.window}


def is_trapped(curve, optimum: float, threshold: float = 0.9, window: float = 0.1) -> bool:
    curve = np.asarray(curve, dtype=float)
    n = max(1, int(math.ceil(window * len(curve))))
    return bool(np.mean(curve[-n:]) < threshold * optimum)


def trap_rate(runs: Sequence, threshold: float = 0.9, window: float = 0.1,
              optimum: float | None = None) -> TrapRateReport:
    """Count runs whose trailing mean reward stays below ``threshold * optimum``.

    ``runs`` holds ``BanditRun`` objects or ``(method, curve)`` pairs; in the
    latter case ``optimum`` must be given.  Failed runs are excluded from the
    totals and reported separately.
    """
    counts, totals, failed = {}, {}, {}
    for run in runs:
        if isinstance(run, BanditRun):
            method, curve, opt = run.config.method, run.curve, run.optimal_reward
            if run.failed:
                failed[method] = failed.get(method, 0) + 1
                counts.setdefault(method, 0)
                totals.setdefault(method, 0)
                continue
        else:
            method, curve = run
            opt = optimum
        counts.setdefault(method, 0)
        totals[method] = totals.get(method, 0) + 1
        if is_trapped(curve, opt, threshold, window):
            counts[method] += 1
    return TrapRateReport(counts, totals, failed, threshold, window)
