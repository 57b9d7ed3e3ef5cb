"""Exact dynamics of single-sample policy iteration on a discrete bandit.

Each step samples one action from the current tabular policy and moves that
action's probability to its clip bound (up for positive reward, down for
negative), spreading the difference evenly over the other actions.  Because
the policy after ``t`` steps depends only on the sampled sequence, the
expected policy can be computed exactly by enumerating every sequence,
weighted by its sampling probability.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .clip_solver import eval_g, solve_clip_ranges, truncate_ranges

DEFAULT_BRANCH_BUDGET = 10**7


@dataclass(frozen=True)
class BanditSpec:
    rewards: tuple[float, ...]

    def __post_init__(self):
        r = np.asarray(self.rewards, dtype=float)
        if r.size < 2:
            raise ValueError("a bandit needs at least two actions")
        if np.sum(r == r.max()) != 1:
            raise ValueError("the optimal action must be unique")
        object.__setattr__(self, "rewards", tuple(float(x) for x in r))

    @property
    def n_actions(self) -> int:
        return len(self.rewards)

    @property
    def reward_array(self) -> np.ndarray:
        return np.asarray(self.rewards)

    @property
    def optimal(self) -> int:
        return int(np.argmax(self.rewards))

    @property
    def positive(self) -> np.ndarray:
        return self.reward_array > 0

    @property
    def negative(self) -> np.ndarray:
        return self.reward_array < 0

    @property
    def suboptimal(self) -> np.ndarray:
        mask = self.positive.copy()
        mask[self.optimal] = False
        return mask


def check_policy(probs, atol=1e-12) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > atol:
        raise ValueError(f"not a probability vector: {probs}")
    return probs


@dataclass(frozen=True)
class ClipRule:
    kind: Literal["ppo", "trgppo"] = "ppo"
    epsilon: float = 0.2
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in ("ppo", "trgppo"):
            raise ValueError(f"unknown clip rule {self.kind!r}")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.kind == "trgppo" and not (self.delta and self.delta > 0):
            raise ValueError("the trust-region rule needs delta > 0")

    def ranges(self, probs):
        """Per-action (lower, upper) for a policy; works on stacked policies."""
        probs = np.asarray(probs, dtype=float)
        if self.kind == "ppo":
            return (np.full(probs.shape, 1.0 - self.epsilon),
                    np.full(probs.shape, 1.0 + self.epsilon))
        lower, upper = solve_clip_ranges(probs, self.delta)
        return truncate_ranges(lower, upper, self.epsilon)


@dataclass
class ExplorationCurve:
    values: np.ndarray
    rule: ClipRule
    # probability mass of sampled paths on which the projection fired, per step
    projected_mass: np.ndarray = field(default_factory=lambda: np.zeros(0))
    expected_probs: np.ndarray | None = None

    def to_csv(self, path, mode="w"):
        with open(path, mode, newline="") as fh:
            writer = csv.writer(fh)
            if mode == "w":
                writer.writerow(["t", "E_t", "rule", "exact"])
            for t, e in enumerate(self.values):
                writer.writerow([t, f"{e:.17g}", self.rule.kind, 1])


def raw_update(probs, action: int, spec: BanditSpec, rule: ClipRule, ranges=None):
    """The unnormalised five-case update; may leave the simplex."""
    probs = np.asarray(probs, dtype=float)
    c = spec.rewards[action]
    if c == 0:
        return probs.copy()
    lower, upper = rule.ranges(probs) if ranges is None else ranges
    k = spec.n_actions
    new = probs.copy()
    if c > 0:
        gain = probs[action] * (upper[action] - 1.0)
        new -= gain / (k - 1)
        new[action] = probs[action] * upper[action]
    else:
        loss = probs[action] * (1.0 - lower[action])
        new += loss / (k - 1)
        new[action] = probs[action] * lower[action]
    return new


def normalize(raw) -> tuple[np.ndarray, bool]:
    """Identity on the simplex; otherwise clip to [0, 1] and renormalise."""
    raw = np.asarray(raw, dtype=float)
    if np.all(raw >= 0) and np.all(raw <= 1):
        return raw, False
    clipped = np.clip(raw, 0.0, 1.0)
    return clipped / clipped.sum(), True


def ppo_update(probs, sampled_action: int, spec: BanditSpec, rule: ClipRule) -> np.ndarray:
    probs = check_policy(probs, atol=1e-9)
    if not 0 <= sampled_action < spec.n_actions:
        raise IndexError(f"action {sampled_action} outside 0..{spec.n_actions - 1}")
    new, _ = normalize(raw_update(probs, sampled_action, spec, rule))
    return new


def _step_all(P, spec: BanditSpec, rule: ClipRule, raw=False):
    """Apply every possible sampled action to every policy row.

    Returns (children, weights, projected) with children of shape
    (rows * k, k) ordered row-major by (row, action).
    """
    n, k = P.shape
    lower, upper = rule.ranges(P)
    c = spec.reward_array
    rows = []
    for a in range(k):
        new = P.copy()
        if c[a] > 0:
            gain = P[:, a] * (upper[:, a] - 1.0)
            new -= (gain / (k - 1))[:, None]
            new[:, a] = P[:, a] * upper[:, a]
        elif c[a] < 0:
            loss = P[:, a] * (1.0 - lower[:, a])
            new += (loss / (k - 1))[:, None]
            new[:, a] = P[:, a] * lower[:, a]
        rows.append(new)
    children = np.stack(rows, axis=1).reshape(n * k, k)
    weights = P.reshape(n * k)
    if raw:
        return children, weights, np.zeros(n * k, dtype=bool)
    bad = np.any(children < 0, axis=1) | np.any(children > 1, axis=1)
    if bad.any():
        fixed = np.clip(children[bad], 0.0, 1.0)
        children[bad] = fixed / fixed.sum(axis=1, keepdims=True)
    return children, weights, bad


def exploration_curve_exact(policy0, spec: BanditSpec, rule: ClipRule, horizon: int,
                            budget: int = DEFAULT_BRANCH_BUDGET, raw: bool = False,
                            visit=None) -> ExplorationCurve:
    """Exact E_t = 1 - E[pi_t(a_opt)] for t = 0..horizon by full enumeration.

    ``visit`` is called with the stacked policies reached at each depth
    (before the step), which lets callers check conditions along every
    enumerated path.  ``raw=True`` skips the projection.
    """
    P = check_policy(policy0)[None, :].copy()
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if spec.n_actions ** horizon > budget:
        raise ValueError(f"{spec.n_actions}^{horizon} branches exceed the budget of {budget}")
    W = np.ones(1)
    opt = spec.optimal
    values = [1.0 - P[0, opt]]
    expected = [P[0].copy()]
    projected = [0.0]
    for _ in range(horizon):
        if visit is not None:
            visit(P)
        # zero-probability branches contribute nothing and are pruned
        P, w, bad = _step_all(P, spec, rule, raw=raw)
        W = np.repeat(W, spec.n_actions) * w
        keep = W > 0
        P, W, bad = P[keep], W[keep], bad[keep]
        values.append(1.0 - float(W @ P[:, opt]))
        expected.append(W @ P)
        projected.append(float(W[bad].sum()))
    if visit is not None:
        visit(P)
    return ExplorationCurve(np.array(values), rule, np.array(projected), np.array(expected))


def distance_to_optimum_exact(policy0, spec: BanditSpec, rule: ClipRule, horizon: int):
    """E[||pi_t - pi*||_inf] computed directly from the norm, for t = 0..horizon."""
    P = check_policy(policy0)[None, :].copy()
    W = np.ones(1)
    target = np.zeros(spec.n_actions)
    target[spec.optimal] = 1.0
    out = [float(np.max(np.abs(P[0] - target)))]
    for _ in range(horizon):
        P, w, _ = _step_all(P, spec, rule)
        W = np.repeat(W, spec.n_actions) * w
        out.append(float(W @ np.max(np.abs(P - target), axis=1)))
    return np.array(out)


def expected_next_prob(probs, action: int, spec: BanditSpec, rule: ClipRule) -> float:
    """Closed-form one-step conditional expectation of pi_{t+1}(action)."""
    probs = check_policy(probs, atol=1e-9)
    if spec.rewards[action] <= 0:
        raise ValueError("the closed form holds for positive-reward actions only")
    lower, upper = rule.ranges(probs)
    k = spec.n_actions
    pos = spec.positive.copy()
    pos[action] = False
    neg = spec.negative
    sq = probs ** 2
    return float(probs[action] + sq[action] * (upper[action] - 1.0)
                 - np.sum(sq[pos] * (upper[pos] - 1.0)) / (k - 1)
                 + np.sum(sq[neg] * (1.0 - lower[neg])) / (k - 1))


def check_drift_condition(policy0, spec: BanditSpec) -> bool:
    """Initial policy bad enough that constant clipping drifts away from the optimum."""
    p = check_policy(policy0, atol=1e-9)
    lhs = p[spec.optimal] ** 2 * spec.n_actions
    rhs = np.sum(p[spec.suboptimal] ** 2) - np.sum(p[spec.negative] ** 2)
    return bool(lhs < rhs)


def ordering_delta_threshold(probs, spec: BanditSpec, epsilon: float) -> float:
    """Largest delta for which the trust-region rule is guaranteed no worse."""
    p = np.asarray(probs, dtype=float)
    if not spec.suboptimal.any():
        raise ValueError("no sub-optimal positive-reward action")
    top = float(np.max(p[..., spec.suboptimal], axis=-1)) if p.ndim == 1 else None
    if p.ndim > 1:
        raise ValueError("expects a single policy")
    if top * (1.0 + epsilon) >= 1.0:
        return float("inf")
    if top <= 0.0:
        return 0.0
    return eval_g(top, 1.0 + epsilon)


def check_ordering_condition(policy, spec: BanditSpec, delta: float, epsilon: float) -> bool:
    return bool(delta <= ordering_delta_threshold(policy, spec, epsilon))


# ---------------------------------------------------------------------------
# minimum-KL optima of the per-state clipped surrogate
# ---------------------------------------------------------------------------

def kl_divergence(p_old, p_new) -> float:
    p_old = np.asarray(p_old, dtype=float)
    p_new = np.asarray(p_new, dtype=float)
    mask = p_old > 0
    return float(np.sum(p_old[mask] * (np.log(p_old[mask]) - np.log(p_new[mask]))))


def min_kl_surrogate_optimum(p_old, action: int, advantage: float, lower: float, upper: float):
    """Closest (in KL from the old policy) maximiser of the one-sample clipped surrogate.

    With a positive advantage every policy with ratio >= upper on the
    sampled action is optimal, with a negative one every ratio <= lower.
    The KL-closest such policy pins the ratio at the bound and rescales the
    other actions proportionally.
    """
    p_old = np.asarray(p_old, dtype=float)
    p = p_old[action]
    if advantage == 0:
        return p_old.copy()
    bound = upper if advantage > 0 else lower
    target = p * bound
    if not 0 < target < 1:
        raise ValueError("the clip bound is not attainable inside the simplex")
    new = p_old * (1.0 - target) / (1.0 - p)
    new[action] = target
    return new
