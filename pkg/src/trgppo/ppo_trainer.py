"""Actor-critic trainer for PPO-style methods with constant or KL-derived clipping.

The policy and value functions are separate tanh MLPs (see ``mlp``).
Discrete environments get a softmax head; box environments get a Gaussian
head whose log standard deviation is a state-independent parameter vector.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .clip_solver import (SolverFailure, _joint_gaussian_ranges, batch_adaptive_delta,
                          gaussian_adaptive_delta, gaussian_clip_ranges, solve_clip_ranges,
                          truncate_ranges)
from .clip_table import ClipTable, TableCache
from .envs import Env, EnvSpec, env_overrides, make_env
from .mlp import MLP, AdamState

__all__ = [
    "MethodVariant", "VARIANTS", "variant", "TrainerConfig", "MlpParams", "init_params",
    "RolloutBatch", "collect_rollout", "RangeBatch", "compute_ranges", "policy_loss",
    "DiagnosticsRecord", "BoundTerms", "bound_constant", "empirical_bound", "update_policy",
    "TrainerOptim", "TrainingResult", "run_training", "ADVERSARIAL_CHAIN_BIAS",
]

LOG_2PI = math.log(2.0 * math.pi)

# Tables are keyed by snapped budget and never mutated after build, so every
# run in the process can share them.
SHARED_TABLES = TableCache()

# Policy-head bias pushing every chain state toward the attractor side.
ADVERSARIAL_CHAIN_BIAS = (0.2, -0.2)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodVariant:
    """``delta`` is None for constant clipping, "adaptive" for the batch rule,
    or a fixed positive KL budget."""

    tag: str
    epsilon: float = 0.2
    entropy_coef: float = 0.0
    delta: object = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.entropy_coef < 0:
            raise ValueError("entropy coefficient must be >= 0")
        if self.delta is not None and self.delta != "adaptive":
            if not (isinstance(self.delta, (int, float)) and self.delta > 0):
                raise ValueError(f"bad delta policy {self.delta!r}")

    @property
    def constant(self) -> bool:
        return self.delta is None


VARIANTS = {
    "PPO": MethodVariant("PPO", 0.2),
    "PPO-0.6": MethodVariant("PPO-0.6", 0.6),
    "PPO-entropy": MethodVariant("PPO-entropy", 0.2, entropy_coef=0.01),
    "TRGPPO": MethodVariant("TRGPPO", 0.2, delta="adaptive"),
}


def variant(tag: str) -> MethodVariant:
    try:
        return VARIANTS[tag]
    except KeyError:
        raise ValueError(f"unknown method {tag!r}; known: {sorted(VARIANTS)}") from None


@dataclass(frozen=True)
class TrainerConfig:
    iterations: int = 100
    rollout_steps: int | None = None   # per-env default, else 2048
    epochs: int = 10
    minibatches: int | None = None     # per-env default, else 4
    learning_rate: float = 3e-4
    value_learning_rate: float = 1e-3
    max_grad_norm: float = 0.5
    gamma: float = 0.99
    lam: float = 0.95
    hidden: int = 32
    seed: int = 0
    range_backend: str = "table"       # "table" or "solver"
    init_logit_bias: tuple | None = None
    init_log_std: float = 0.0

    def __post_init__(self):
        if self.iterations < 1 or self.epochs < 0:
            raise ValueError("iterations must be >= 1 and epochs >= 0")
        if self.rollout_steps is not None and self.rollout_steps < 1:
            raise ValueError("rollout_steps must be >= 1")
        if self.minibatches is not None and self.minibatches < 1:
            raise ValueError("minibatches must be >= 1")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lambda must lie in [0, 1]")
        if self.range_backend not in ("table", "solver"):
            raise ValueError("range_backend must be 'table' or 'solver'")

    def resolved(self, env_name: str) -> "TrainerConfig":
        extra = env_overrides(env_name)
        return replace(self,
                       rollout_steps=self.rollout_steps or extra.get("rollout_steps", 2048),
                       minibatches=self.minibatches or extra.get("minibatches", 4))

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["init_logit_bias"] is not None:
            out["init_logit_bias"] = list(out["init_logit_bias"])
        return out

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: f.type for f in fields(cls)}


# ---------------------------------------------------------------------------
# parameters and policy evaluation
# ---------------------------------------------------------------------------

@dataclass
class MlpParams:
    policy: MLP
    value: MLP
    log_std: np.ndarray | None = None

    @property
    def discrete(self) -> bool:
        return self.log_std is None

    def copy(self) -> "MlpParams":
        return MlpParams(self.policy.copy(), self.value.copy(),
                         None if self.log_std is None else self.log_std.copy())

    def policy_arrays(self) -> list[np.ndarray]:
        arrays = list(self.policy.params)
        if self.log_std is not None:
            arrays.append(self.log_std)
        return arrays

    def set_policy_arrays(self, arrays):
        n = len(self.policy.params)
        self.policy.params = list(arrays[:n])
        if self.log_std is not None:
            self.log_std = arrays[n]

    def all_finite(self) -> bool:
        ok = self.policy.all_finite() and self.value.all_finite()
        return ok and (self.log_std is None or bool(np.all(np.isfinite(self.log_std))))


def init_params(spec: EnvSpec, rng: np.random.Generator, hidden: int = 32,
                logit_bias=None, log_std: float = 0.0) -> MlpParams:
    out_dim = spec.n_actions if spec.discrete else spec.action_dim
    policy = MLP((spec.obs_dim, hidden, hidden, out_dim), rng, out_scale=0.01)
    value = MLP((spec.obs_dim, hidden, hidden, 1), rng, out_scale=1.0)
    if logit_bias is not None:
        bias = np.asarray(logit_bias, dtype=float)
        if bias.shape != (out_dim,):
            raise ValueError(f"initial bias needs {out_dim} entries")
        policy.params[-1] = policy.params[-1] + bias
    std = None if spec.discrete else np.full(spec.action_dim, float(log_std))
    return MlpParams(policy, value, std)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass
class PolicyEval:
    """Head outputs for a batch of states plus what backprop needs."""

    head: np.ndarray            # logits or means
    activations: list
    log_probs_all: np.ndarray | None = None
    log_std: np.ndarray | None = None

    def log_prob(self, actions):
        if self.log_probs_all is not None:
            return self.log_probs_all[np.arange(len(actions)), actions]
        diff = (actions - self.head) * np.exp(-self.log_std)
        return np.sum(-0.5 * diff ** 2 - self.log_std - 0.5 * LOG_2PI, axis=1)

    def entropy(self):
        if self.log_probs_all is not None:
            return -np.sum(np.exp(self.log_probs_all) * self.log_probs_all, axis=1)
        value = np.sum(self.log_std + 0.5 * (LOG_2PI + 1.0))
        return np.full(self.head.shape[0], value)


def evaluate_policy(params: MlpParams, obs) -> PolicyEval:
    head, acts = params.policy.forward(obs)
    if params.discrete:
        return PolicyEval(head, acts, log_probs_all=_log_softmax(head))
    return PolicyEval(head, acts, log_std=params.log_std)


def _kl_per_state(old: PolicyEval, new: PolicyEval):
    if old.log_probs_all is not None:
        p = np.exp(old.log_probs_all)
        return np.maximum(np.sum(p * (old.log_probs_all - new.log_probs_all), axis=1), 0.0)
    var_old = np.exp(2 * old.log_std)
    var_new = np.exp(2 * new.log_std)
    kl = (new.log_std - old.log_std
          + (var_old + (old.head - new.head) ** 2) / (2 * var_new) - 0.5)
    return np.maximum(kl.sum(axis=1), 0.0)


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

@dataclass
class RolloutBatch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    old_log_probs: np.ndarray
    old_head: np.ndarray               # logits (discrete) or means (Gaussian)
    old_log_std: np.ndarray | None
    advantages: np.ndarray             # raw GAE estimates
    returns: np.ndarray                # value targets
    episode_returns: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)

    @property
    def discrete(self) -> bool:
        return self.old_log_std is None

    @property
    def normalized_advantages(self) -> np.ndarray:
        adv = self.advantages
        if adv.size < 2:
            return adv.copy()
        return (adv - adv.mean()) / (adv.std() + 1e-8)

    @property
    def old_probs(self) -> np.ndarray:
        """Old-policy probability of each taken action (discrete heads)."""
        return np.exp(self.old_log_probs)

    @property
    def standardized_offsets(self) -> np.ndarray:
        return (self.actions - self.old_head) * np.exp(-self.old_log_std)

    @property
    def eta_hat(self) -> float:
        """Old-policy performance estimate: mean return of finished episodes,
        or the mean value target when none finished."""
        if self.episode_returns:
            return float(np.mean(self.episode_returns))
        return float(self.returns.mean())

    def subset(self, idx) -> "RolloutBatch":
        return replace(self, obs=self.obs[idx], actions=self.actions[idx],
                       rewards=self.rewards[idx], dones=self.dones[idx],
                       values=self.values[idx], old_log_probs=self.old_log_probs[idx],
                       old_head=self.old_head[idx], advantages=self.advantages[idx],
                       returns=self.returns[idx], episode_returns=[])


def _sample_action(ev: PolicyEval, rng, spec: EnvSpec):
    if ev.log_probs_all is not None:
        cdf = np.cumsum(np.exp(ev.log_probs_all[0]))
        return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"),
                       spec.n_actions - 1))
    return ev.head[0] + np.exp(ev.log_std) * rng.standard_normal(ev.head.shape[1])


def collect_rollout(env: Env, params: MlpParams, steps: int, rng: np.random.Generator,
                    gamma: float = 0.99, lam: float = 0.95) -> RolloutBatch:
    """Run the current policy for ``steps`` transitions, starting a fresh episode.

    An episode cut off by the end of the rollout is bootstrapped with the
    value of its last state.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    spec = env.spec
    obs_l, act_l, rew_l, done_l, val_l, logp_l, head_l = [], [], [], [], [], [], []
    episode_returns = []
    state = env.reset(int(rng.integers(2 ** 31)))
    running = 0.0
    for _ in range(steps):
        ev = evaluate_policy(params, state[None])
        action = _sample_action(ev, rng, spec)
        env_action = action
        if not spec.discrete:
            env_action = np.clip(action, spec.action_low, spec.action_high)
        tr = env.step(env_action)
        obs_l.append(state)
        act_l.append(action)
        rew_l.append(tr.reward)
        done_l.append(tr.terminal)
        val_l.append(float(params.value(state[None])[0, 0]))
        logp_l.append(float(ev.log_prob(np.atleast_2d(action) if not spec.discrete
                                        else np.array([action]))[0]))
        head_l.append(ev.head[0])
        running += tr.reward
        if tr.terminal:
            episode_returns.append(running)
            running = 0.0
            state = env.reset(int(rng.integers(2 ** 31)))
        else:
            state = tr.next_state
    last_value = 0.0 if done_l[-1] else float(params.value(state[None])[0, 0])

    rewards = np.asarray(rew_l, dtype=float)
    dones = np.asarray(done_l, dtype=bool)
    values = np.asarray(val_l)
    adv = np.zeros(steps)
    gae = 0.0
    next_value = last_value
    for t in reversed(range(steps)):
        nonterminal = 0.0 if dones[t] else 1.0
        td = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = td + gamma * lam * nonterminal * gae
        adv[t] = gae
        next_value = values[t]
    actions = np.asarray(act_l, dtype=int if spec.discrete else float)
    return RolloutBatch(
        obs=np.asarray(obs_l, dtype=float), actions=actions, rewards=rewards, dones=dones,
        values=values, old_log_probs=np.asarray(logp_l), old_head=np.asarray(head_l),
        old_log_std=None if spec.discrete else params.log_std.copy(),
        advantages=adv, returns=adv + values, episode_returns=episode_returns)


# ---------------------------------------------------------------------------
# clipping ranges
# ---------------------------------------------------------------------------

@dataclass
class RangeBatch:
    lower: np.ndarray
    upper: np.ndarray
    delta: float | None = None
    raw_lower: np.ndarray | None = None   # before truncation
    raw_upper: np.ndarray | None = None

    def __len__(self):
        return len(self.lower)


def _checked(lower, upper):
    bad = ~(np.isfinite(lower) & np.isfinite(upper) & (lower > 0) & (upper > 0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SolverFailure(f"clip range for sample {i} is not finite: "
                            f"({lower[i]!r}, {upper[i]!r})")
    return lower, upper


def compute_ranges(batch: RolloutBatch, method: MethodVariant, table=None) -> RangeBatch:
    """Per-sample clipping ranges for one rollout batch.

    ``table`` may be a ``TableCache`` or ``ClipTable`` (discrete heads only);
    with ``None`` the bracketed solver is used directly.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    eps = method.epsilon
    if method.constant:
        return RangeBatch(np.full(n, 1.0 - eps), np.full(n, 1.0 + eps))
    adv = batch.normalized_advantages
    if batch.discrete:
        p = batch.old_probs
        delta = batch_adaptive_delta(p, adv, eps) if method.delta == "adaptive" \
            else float(method.delta)
        if delta is None:
            return RangeBatch(np.full(n, 1.0 - eps), np.full(n, 1.0 + eps))
        if isinstance(table, TableCache):
            lower, upper = table.ranges(p, delta)
        elif isinstance(table, ClipTable) and delta <= table.delta:
            lower, upper = table.query_many(p, delta=delta)
        else:
            lower, upper = solve_clip_ranges(p, delta)
    else:
        z = batch.standardized_offsets
        dims = z.shape[1]
        if method.delta == "adaptive":
            delta = gaussian_adaptive_delta(z if dims > 1 else z[:, 0], adv, eps, dims=dims)
        else:
            delta = float(method.delta)
        if delta is None:
            return RangeBatch(np.full(n, 1.0 - eps), np.full(n, 1.0 + eps))
        if dims == 1:
            lower, upper = gaussian_clip_ranges(z[:, 0], delta)
        else:
            lower, upper = _joint_gaussian_ranges(z, delta, dims)
    lower, upper = _checked(np.asarray(lower, dtype=float), np.asarray(upper, dtype=float))
    t_lower, t_upper = truncate_ranges(lower, upper, eps)
    return RangeBatch(t_lower, t_upper, float(delta), lower, upper)


# ---------------------------------------------------------------------------
# losses and gradients
# ---------------------------------------------------------------------------

def _frozen(ratio, adv, lower, upper):
    return ((adv > 0) & (ratio >= upper)) | ((adv < 0) & (ratio <= lower))


def policy_loss(params: MlpParams, batch: RolloutBatch, lower, upper, adv,
                entropy_coef: float = 0.0):
    """Negative clipped surrogate minus the entropy bonus, and its gradient.

    Returns ``(loss, grads, ev)`` with grads aligned to ``params.policy_arrays()``.
    """
    n = len(batch)
    ev = evaluate_policy(params, batch.obs)
    logp = ev.log_prob(batch.actions)
    ratio = np.exp(logp - batch.old_log_probs)
    surrogate = np.minimum(ratio * adv, np.clip(ratio, lower, upper) * adv)
    entropy = ev.entropy()
    loss = -surrogate.mean() - entropy_coef * entropy.mean()
    # d loss / d log pi(a_i|s_i)
    coef = np.where(_frozen(ratio, adv, lower, upper), 0.0, -adv * ratio / n)
    if params.discrete:
        probs = np.exp(ev.log_probs_all)
        onehot = np.zeros_like(probs)
        onehot[np.arange(n), batch.actions] = 1.0
        g_head = coef[:, None] * (onehot - probs)
        if entropy_coef:
            g_head += (entropy_coef / n) * probs * (ev.log_probs_all + entropy[:, None])
        grads = params.policy.backward(ev.activations, g_head)
    else:
        inv_var = np.exp(-2.0 * params.log_std)
        diff = batch.actions - ev.head
        g_head = coef[:, None] * diff * inv_var
        g_log_std = (coef[:, None] * (diff ** 2 * inv_var - 1.0)).sum(axis=0)
        g_log_std = g_log_std - entropy_coef
        grads = params.policy.backward(ev.activations, g_head) + [g_log_std]
    return float(loss), grads, ev


def value_loss(params: MlpParams, obs, targets):
    pred, acts = params.value.forward(obs)
    err = pred[:, 0] - targets
    loss = 0.5 * float(np.mean(err ** 2))
    grads = params.value.backward(acts, (err / len(err))[:, None])
    return loss, grads


def _clip_by_norm(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm and norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def bound_constant(max_abs_adv: float, gamma: float) -> float:
    """Penalty weight of the KL lower bound on performance."""
    if gamma >= 1.0:
        return math.inf
    return max_abs_adv * 4.0 * gamma / (1.0 - gamma) ** 2


@dataclass
class BoundTerms:
    surrogate: float       # L-hat
    max_kl: float
    penalty_coef: float    # C
    lower_bound: float     # M-hat
    eta_hat: float


def empirical_bound(batch: RolloutBatch, params_old: MlpParams, params_new: MlpParams,
                    gamma: float) -> BoundTerms:
    old = evaluate_policy(params_old, batch.obs)
    new = evaluate_policy(params_new, batch.obs)
    ratio = np.exp(new.log_prob(batch.actions) - old.log_prob(batch.actions))
    eta = batch.eta_hat
    surrogate = eta + float(np.mean(ratio * batch.advantages))
    max_kl = float(_kl_per_state(old, new).max())
    c = bound_constant(float(np.abs(batch.advantages).max()), gamma)
    penalty = c * max_kl if max_kl > 0 else 0.0
    return BoundTerms(surrogate, max_kl, c, surrogate - penalty, eta)


@dataclass
class DiagnosticsRecord:
    iteration: int
    entropy: float
    mean_kl: float
    max_kl: float
    upper_min: float
    upper_median: float
    upper_mean: float
    upper_max: float
    saturation: float
    surrogate: float
    penalty_coef: float
    lower_bound: float
    delta: float | None
    value_loss: float
    aborted: bool = False
    message: str = ""

    COLUMNS = ("iteration", "entropy", "mean_kl", "max_kl", "upper_min", "upper_median",
               "upper_mean", "upper_max", "saturation", "surrogate", "penalty_coef",
               "lower_bound", "delta", "value_loss", "aborted")

    def as_row(self) -> dict:
        row = {k: getattr(self, k) for k in self.COLUMNS}
        row["delta"] = "" if self.delta is None else self.delta
        row["aborted"] = int(self.aborted)
        return row


@dataclass
class TrainerOptim:
    policy: AdamState
    value: AdamState

    @classmethod
    def fresh(cls, params: MlpParams, lr: float, value_lr: float) -> "TrainerOptim":
        return cls(AdamState(params.policy_arrays(), lr),
                   AdamState(params.value.params, value_lr))


def update_policy(params: MlpParams, batch: RolloutBatch, ranges: RangeBatch,
                  method: MethodVariant, epochs: int, minibatch_size: int,
                  learning_rate: float, rng: np.random.Generator | None = None,
                  optim: TrainerOptim | None = None, value_learning_rate: float = 1e-3,
                  gamma: float = 0.99, max_grad_norm: float = 0.5, iteration: int = 0):
    """Minibatch epochs on the clipped surrogate and the value regression.

    Returns ``(new_params, DiagnosticsRecord)``; on a non-finite loss the
    input parameters are returned unchanged and the record is flagged.
    """
    if len(ranges) != len(batch):
        raise ValueError("ranges are not aligned with the batch")
    if minibatch_size < 1:
        raise ValueError("minibatch size must be >= 1")
    rng = rng or np.random.default_rng(0)
    optim = optim or TrainerOptim.fresh(params, learning_rate, value_learning_rate)
    optim.policy.lr = learning_rate
    new = params.copy()
    adv = batch.normalized_advantages
    n = len(batch)
    v_loss = math.nan
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, minibatch_size):
            idx = order[start:start + minibatch_size]
            mb = batch.subset(idx)
            with np.errstate(invalid="ignore", over="ignore"):
                loss, grads, _ = policy_loss(new, mb, ranges.lower[idx], ranges.upper[idx],
                                             adv[idx], method.entropy_coef)
                v_loss, v_grads = value_loss(new, mb.obs, mb.returns)
            if not (math.isfinite(loss) and math.isfinite(v_loss)):
                rec = _diagnostics(params, params, batch, ranges, adv, gamma, iteration, v_loss)
                rec.aborted, rec.message = True, f"non-finite loss ({loss}, {v_loss})"
                return params, rec
            arrays = new.policy_arrays()
            optim.policy.step(arrays, _clip_by_norm(grads, max_grad_norm))
            new.set_policy_arrays(arrays)
            optim.value.step(new.value.params, _clip_by_norm(v_grads, max_grad_norm))
    if not new.all_finite():
        rec = _diagnostics(params, params, batch, ranges, adv, gamma, iteration, v_loss)
        rec.aborted, rec.message = True, "parameters became non-finite"
        return params, rec
    return new, _diagnostics(params, new, batch, ranges, adv, gamma, iteration, v_loss)


def _diagnostics(old_params, new_params, batch, ranges, adv, gamma, iteration, v_loss):
    old = evaluate_policy(old_params, batch.obs)
    new = evaluate_policy(new_params, batch.obs)
    kl = _kl_per_state(old, new)
    ratio = np.exp(new.log_prob(batch.actions) - batch.old_log_probs)
    saturation = float(np.mean(_frozen(ratio, adv, ranges.lower, ranges.upper)))
    bound = empirical_bound(batch, old_params, new_params, gamma)
    up = ranges.upper
    return DiagnosticsRecord(
        iteration=iteration, entropy=float(new.entropy().mean()), mean_kl=float(kl.mean()),
        max_kl=float(kl.max()), upper_min=float(up.min()), upper_median=float(np.median(up)),
        upper_mean=float(up.mean()), upper_max=float(up.max()), saturation=saturation,
        surrogate=bound.surrogate, penalty_coef=bound.penalty_coef,
        lower_bound=bound.lower_bound, delta=ranges.delta, value_loss=float(v_loss))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainingResult:
    env: str
    method: MethodVariant
    config: TrainerConfig
    returns: np.ndarray                 # mean finished-episode return per iteration
    diagnostics: list[DiagnosticsRecord]
    params: MlpParams
    range_seconds: float
    total_seconds: float

    def final_return(self, window: float = 0.1) -> float:
        k = max(1, int(round(window * len(self.returns))))
        tail = self.returns[-k:]
        tail = tail[np.isfinite(tail)]
        return float(tail.mean()) if tail.size else math.nan

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics], dtype=float)


def run_training(env_name: str, method: MethodVariant | str, config: TrainerConfig,
                 table=None) -> TrainingResult:
    if isinstance(method, str):
        method = variant(method)
    cfg = config.resolved(env_name)
    env = make_env(env_name)
    init_rng, roll_rng, shuffle_rng = (np.random.default_rng(s) for s in
                                       np.random.SeedSequence(cfg.seed).spawn(3))
    params = init_params(env.spec, init_rng, cfg.hidden, cfg.init_logit_bias, cfg.init_log_std)
    optim = TrainerOptim.fresh(params, cfg.learning_rate, cfg.value_learning_rate)
    if table is None and cfg.range_backend == "table" and not method.constant:
        table = SHARED_TABLES
    minibatch = max(1, cfg.rollout_steps // cfg.minibatches)
    returns, records = [], []
    range_seconds = 0.0
    start = time.perf_counter()
    for it in range(cfg.iterations):
        batch = collect_rollout(env, params, cfg.rollout_steps, roll_rng, cfg.gamma, cfg.lam)
        returns.append(float(np.mean(batch.episode_returns)) if batch.episode_returns
                       else math.nan)
        t0 = time.perf_counter()
        ranges = compute_ranges(batch, method, table if cfg.range_backend == "table" else None)
        range_seconds += time.perf_counter() - t0
        params, rec = update_policy(params, batch, ranges, method, cfg.epochs, minibatch,
                                    cfg.learning_rate, shuffle_rng, optim,
                                    cfg.value_learning_rate, cfg.gamma, cfg.max_grad_norm, it)
        records.append(rec)
    total = time.perf_counter() - start
    return TrainingResult(env_name, method, cfg, np.asarray(returns), records, params,
                          range_seconds, total)
