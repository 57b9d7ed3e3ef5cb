"""KL-constrained clipping ranges for discrete and Gaussian policies.

For a discrete old policy that puts probability ``p`` on the sampled action,
the widest ratio interval reachable inside a KL ball of radius ``delta`` is
given by the two roots of

    g(p, x) = (1 - p) * log((1 - p) / (1 - p x)) - p * log(x) = delta

one in (0, 1) and one in (1, 1/p).  ``g(p, .)`` is strictly decreasing on
(0, 1), strictly increasing on (1, 1/p) and vanishes at x = 1, so each root
has a guaranteed bracket.  Both are found by bisection in log coordinates
(``log x`` on the lower branch, ``log(1 - p x)`` on the upper one), which keeps
tiny lower roots and upper roots close to 1/p resolvable.

All solvers are vectorised over numpy arrays; the scalar entry points wrap
them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClipRange",
    "ConstraintPoint",
    "GaussianQuery",
    "SolverConfig",
    "SolverFailure",
    "TruncatedClipRange",
    "adaptive_delta",
    "batch_adaptive_delta",
    "best_representable",
    "eval_g",
    "gaussian_adaptive_delta",
    "gaussian_clip_range",
    "gaussian_clip_ranges",
    "gaussian_delta_for_ratio",
    "gaussian_kl",
    "gaussian_log_ratio",
    "polish_roots",
    "solve_clip_range",
    "solve_clip_ranges",
    "truncate_range",
    "truncate_ranges",
]

_LOG_TINY = float(np.log(np.finfo(float).tiny))


class SolverFailure(RuntimeError):
    """Raised when a root cannot be bracketed or the iteration cap is hit."""

    def __init__(self, message: str, bracket=None):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-10
    max_iter: int = 200
    p_min: float = 1e-8

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.p_min < 0.5:
            raise ValueError("p_min must lie in (0, 0.5)")

    def clamp(self, p):
        return np.clip(p, self.p_min, 1.0 - self.p_min)


DEFAULT_CONFIG = SolverConfig()


@dataclass(frozen=True)
class ConstraintPoint:
    p: float
    delta: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"probability must lie in (0, 1), got {self.p}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class ClipRange:
    lower: float
    upper: float

    def contains(self, ratio: float) -> bool:
        return self.lower <= ratio <= self.upper


@dataclass(frozen=True)
class TruncatedClipRange(ClipRange):
    epsilon: float = 0.2


@dataclass(frozen=True)
class GaussianQuery:
    z: float
    delta: float

    def __post_init__(self):
        if not np.isfinite(self.z):
            raise ValueError("z must be finite")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


# ---------------------------------------------------------------------------
# the constraint function
# ---------------------------------------------------------------------------

_SERIES_ORDER = 20


def _log1p_minus_id(y):
    """log1p(y) - y without cancellation for small |y|."""
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < 0.1
    ys = np.where(small, y, 0.0)
    series = np.zeros_like(ys)
    power = ys * ys
    for k in range(2, _SERIES_ORDER):
        series += (-1) ** (k + 1) * power / k
        power = power * ys
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.log1p(np.where(small, 0.0, y)) - np.where(small, 0.0, y)
    return np.where(small, series, direct)


def eval_g(p, x):
    """KL divergence from the old policy to the closest policy with ratio ``x``.

    Raises ``ValueError`` outside the domain ``0 < x < 1/p``.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(p * x >= 1.0):
        raise ValueError("eval_g requires 0 < x < 1/p")
    q = 1.0 - p
    h = x - 1.0
    t = -p * h / q
    # the linear parts of both logs cancel exactly, leaving two terms >= 0
    near = t > -0.5
    with np.errstate(divide="ignore"):
        far_head = q * np.log(q / np.where(near, 1.0, 1.0 - p * x)) - p * h
    head = np.where(near, -q * _log1p_minus_id(np.where(near, t, 0.0)), far_head)
    # log1p(h) loses x's precision for tiny x; use log(x) off the series range
    small_h = np.abs(h) < 0.1
    tail = np.where(small_h, _log1p_minus_id(np.where(small_h, h, 0.0)), np.log(x) - h)
    out = head - p * tail
    return float(out) if out.ndim == 0 else out


def _g_of_logx(p, s):
    # lower branch, s = log x, x in (0, 1)
    q = 1.0 - p
    return -q * np.log1p(-p * np.expm1(s) / q) - p * s


def _g_of_logr(p, rho):
    # upper branch, rho = log(1 - p x), x = (1 - r)/p in (1, 1/p)
    q = 1.0 - p
    r = np.exp(rho)
    return q * (np.log(q) - rho) - p * (np.log1p(-r) - np.log(p))


def _bisect(fun, lo, hi, target, max_iter):
    """Vectorised bisection for increasing ``fun`` on [lo, hi].

    Runs until every bracket has collapsed to adjacent doubles or
    ``max_iter`` halvings.  Returns (lo, hi, iterations).
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        above = fun(mid) >= target
        hi = np.where(active & above, mid, hi)
        lo = np.where(active & ~above, mid, lo)
    return lo, hi, it


def _inside_domain(p, upper):
    # the upper root can round onto 1/p; step back until p * u < 1 holds
    upper = np.array(upper, dtype=float)
    for _ in range(8):
        bad = p * upper >= 1.0
        if not bad.any():
            break
        upper = np.where(bad, np.nextafter(upper, 0.0), upper)
    return upper


def _pick(fun, lo, hi, target):
    flo = fun(lo)
    fhi = fun(hi)
    return np.where(np.abs(flo - target) <= np.abs(fhi - target), lo, hi)


def solve_clip_ranges(p, delta, config: SolverConfig = DEFAULT_CONFIG):
    """Vectorised root solve.  Returns arrays ``(lower, upper)``.

    ``p`` is clamped to ``[p_min, 1 - p_min]``.  When a root lies beyond
    double precision (e.g. the lower root for ``delta > 744 p``) the closest
    representable point of the bracket is returned.
    """
    p = config.clamp(np.asarray(p, dtype=float))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), p.shape)
    if np.any(~(delta > 0)):
        raise ValueError("delta must be positive")
    p, delta = np.broadcast_arrays(p, delta)
    p = np.array(p, dtype=float)
    delta = np.array(delta, dtype=float)

    # lower root: g decreasing in s=log x, so bisect on -g
    def neg_g_lower(s):
        return -_g_of_logx(p, s)

    s_lo, s_hi, _ = _bisect(neg_g_lower, np.full_like(p, _LOG_TINY),
                            np.zeros_like(p), -delta, config.max_iter)
    s_root = _pick(neg_g_lower, s_lo, s_hi, -delta)
    lower = np.exp(s_root)

    # upper root: g decreasing in rho=log r as well (r shrinks toward 1/p)
    def neg_g_upper(rho):
        return -_g_of_logr(p, rho)

    rho_lo, rho_hi, _ = _bisect(neg_g_upper, np.full_like(p, _LOG_TINY),
                                np.log1p(-p), -delta, config.max_iter)
    rho_root = _pick(neg_g_upper, rho_lo, rho_hi, -delta)
    upper = -np.expm1(rho_root) / p

    lower = np.minimum(lower, np.nextafter(1.0, 0.0))
    upper = _inside_domain(p, np.maximum(upper, np.nextafter(1.0, 2.0)))
    return lower, upper


def best_representable(p, delta, root) -> np.ndarray:
    """Whether no double does better than ``root`` by more than one step.

    True when the neighbouring doubles of ``root`` straddle ``delta``, when
    ``root`` is the last double below ``1/p`` and still short of ``delta``, or
    when it sits on the smallest normal double.  Used to tell precision
    limits apart from solver errors.
    """
    p, delta, root = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p, delta, root)))
    tiny = np.finfo(float).tiny
    lo = np.maximum(np.nextafter(root, 0.0), tiny)
    hi = np.nextafter(root, np.inf)
    at_edge = p * hi >= 1.0
    hi = np.where(at_edge, root, hi)
    g_lo = eval_g(p, lo)
    g_hi = eval_g(p, hi)
    straddles = (np.minimum(g_lo, g_hi) <= delta) & (delta <= np.maximum(g_lo, g_hi))
    return straddles | (at_edge & (g_hi <= delta)) | (root <= 2.0 * tiny)


def solve_clip_range(point: ConstraintPoint, config: SolverConfig = DEFAULT_CONFIG) -> ClipRange:
    lower, upper = solve_clip_ranges(point.p, point.delta, config)
    return ClipRange(float(lower), float(upper))


def polish_roots(p, delta, lower0, upper0, brackets=None, config: SolverConfig = DEFAULT_CONFIG,
                 tol=None):
    """Refine initial guesses with bracketed Newton steps in log coordinates.

    ``brackets`` is an optional tuple ``(l_lo, l_hi, u_lo, u_hi)`` of arrays;
    without it the full branch brackets are used.  Iteration stops per
    element once ``|g - delta| <= tol`` (default ``abs_tol / 100``) or the
    Newton step no longer moves the iterate.  Returns
    ``(lower, upper, iterations)`` where ``iterations`` is the per-element
    maximum over the two branches.
    """
    p = config.clamp(np.asarray(p, dtype=float))
    p, delta, lower0, upper0 = (np.array(a, dtype=float) for a in
                                np.broadcast_arrays(p, delta, lower0, upper0))
    tol = config.abs_tol / 100 if tol is None else tol
    q = 1.0 - p
    if brackets is None:
        s_lo = np.full_like(p, _LOG_TINY)
        s_hi = np.zeros_like(p)
        r_lo = np.full_like(p, _LOG_TINY)
        r_hi = np.log1p(-p)
    else:
        l_lo, l_hi, u_lo, u_hi = (np.broadcast_to(np.asarray(b, float), p.shape) for b in brackets)
        s_lo = np.log(np.clip(l_lo, np.finfo(float).tiny, 1.0))
        s_hi = np.log(np.clip(l_hi, np.finfo(float).tiny, 1.0))
        # larger u <-> smaller rho
        r_lo = np.log(np.clip(1.0 - p * np.minimum(u_hi, 1.0 / p), np.finfo(float).tiny, None))
        r_hi = np.log(np.clip(1.0 - p * np.maximum(u_lo, 1.0), np.finfo(float).tiny, None))

    # lower branch: f(s) = g - delta, decreasing in s
    s = np.clip(np.log(np.clip(lower0, np.finfo(float).tiny, 1.0)), s_lo, s_hi)
    s_iters = np.zeros(p.shape, dtype=int)
    lo, hi = s_lo.copy(), s_hi.copy()
    for _ in range(config.max_iter):
        f = _g_of_logx(p, s) - delta
        todo = np.abs(f) > tol
        if not todo.any():
            break
        # keep a valid bracket: f > 0 means root lies to the right
        lo = np.where(todo & (f > 0), s, lo)
        hi = np.where(todo & (f < 0), s, hi)
        x = np.exp(s)
        d = p * q * x / (1.0 - p * x) - p
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d != 0, f / d, 0.0)
        cand = s - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        stuck = cand == s
        s = np.where(todo, cand, s)
        s_iters += todo
        if np.all(~todo | stuck):
            break

    rho = np.clip(np.log(np.clip(1.0 - p * np.minimum(upper0, 1.0 / p), np.finfo(float).tiny, None)),
                  r_lo, r_hi)
    r_iters = np.zeros(p.shape, dtype=int)
    lo, hi = r_lo.copy(), r_hi.copy()
    for _ in range(config.max_iter):
        f = _g_of_logr(p, rho) - delta
        todo = np.abs(f) > tol
        if not todo.any():
            break
        # g decreasing in rho: f > 0 means root lies to the right
        lo = np.where(todo & (f > 0), rho, lo)
        hi = np.where(todo & (f < 0), rho, hi)
        r = np.exp(rho)
        d = -q + p * r / (1.0 - r)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d != 0, f / d, 0.0)
        cand = rho - step
        bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        stuck = cand == rho
        rho = np.where(todo, cand, rho)
        r_iters += todo
        if np.all(~todo | stuck):
            break

    lower = np.minimum(np.exp(s), np.nextafter(1.0, 0.0))
    upper = _inside_domain(p, np.maximum(-np.expm1(rho) / p, np.nextafter(1.0, 2.0)))
    return lower, upper, np.maximum(s_iters, r_iters)


def truncate_range(clip: ClipRange, epsilon: float) -> TruncatedClipRange:
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return TruncatedClipRange(min(clip.lower, 1.0 - epsilon),
                              max(clip.upper, 1.0 + epsilon), epsilon)


def truncate_ranges(lower, upper, epsilon: float):
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    return np.minimum(lower, 1.0 - epsilon), np.maximum(upper, 1.0 + epsilon)


# ---------------------------------------------------------------------------
# KL budget from the PPO clip coefficient
# ---------------------------------------------------------------------------

def adaptive_delta(p_plus, p_minus, epsilon: float, config: SolverConfig = DEFAULT_CONFIG) -> float:
    """KL budget under which ratio 1+eps (1-eps) stays reachable at p_plus (p_minus).

    Either probability may be ``None`` when its sign class is empty; that
    arm of the max is skipped.  ``p_plus * (1 + eps) >= 1`` has no finite
    answer and raises ``ValueError``.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    arms = []
    if p_plus is not None:
        pp = float(config.clamp(p_plus))
        arms.append(eval_g(pp, 1.0 + epsilon))
    if p_minus is not None:
        pm = float(config.clamp(p_minus))
        arms.append(eval_g(pm, 1.0 - epsilon))
    if not arms:
        raise ValueError("adaptive_delta needs at least one non-empty sign class")
    return float(max(arms))


def batch_adaptive_delta(probs, advantages, epsilon: float,
                         config: SolverConfig = DEFAULT_CONFIG):
    """``adaptive_delta`` over a sampled batch.

    Positive-advantage samples whose probability is too large for ratio
    ``1 + epsilon`` to exist (``p (1 + eps) >= 1 - p_min``) are left out of
    the positive maximum; their truncated range is the constant one anyway.
    Returns ``None`` when neither class contributes.
    """
    probs = config.clamp(np.asarray(probs, dtype=float))
    adv = np.asarray(advantages, dtype=float)
    pos = (adv > 0) & (probs * (1.0 + epsilon) < 1.0 - config.p_min)
    neg = adv < 0
    p_plus = float(probs[pos].max()) if pos.any() else None
    p_minus = float(probs[neg].max()) if neg.any() else None
    if p_plus is None and p_minus is None:
        return None
    return adaptive_delta(p_plus, p_minus, epsilon, config)


# ---------------------------------------------------------------------------
# Gaussian policies, standardised to an N(0, 1) old policy
# ---------------------------------------------------------------------------

def gaussian_kl(mu, log_sigma):
    """KL(N(0, 1) || N(mu, sigma^2))."""
    sigma2 = np.exp(2.0 * np.asarray(log_sigma, dtype=float))
    return log_sigma + (1.0 + np.asarray(mu, dtype=float) ** 2) / (2.0 * sigma2) - 0.5


def gaussian_log_ratio(z, mu, log_sigma):
    """log N(z; mu, sigma^2) - log N(z; 0, 1)."""
    sigma2 = np.exp(2.0 * np.asarray(log_sigma, dtype=float))
    return -log_sigma - (z - mu) ** 2 / (2.0 * sigma2) + 0.5 * np.asarray(z, dtype=float) ** 2


def _boundary_mu2(s, delta):
    # mu^2 on the KL = delta boundary for log-sigma s
    return 2.0 * np.exp(2.0 * s) * (delta + 0.5 - s) - 1.0


def _sigma_interval(delta, max_iter: int = 200):
    """log-sigma interval on which the KL ball is non-empty, per delta."""
    delta = np.asarray(delta, dtype=float)

    def h(s):
        return _boundary_mu2(s, delta)

    _, s_lo, _ = _bisect(h, np.full(delta.shape, -60.0), np.minimum(delta, 0.0), 0.0, max_iter)
    # h decreasing on (delta, delta + 1/2]
    s_hi, _, _ = _bisect(lambda s: -h(s), delta.copy(), delta + 0.5, 0.0, max_iter)
    return s_lo, s_hi


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_max(fun, a, b, iters=80):
    """Vectorised golden-section maximisation on [a, b]."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, fun(new_c), fd)
        fd_next = np.where(left, fc, fun(new_d))
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    x = 0.5 * (a + b)
    # endpoints may beat the interior when the optimum sits on the edge
    cands = np.stack([a, x, b])
    vals = np.stack([fun(a), fun(x), fun(b)])
    best = np.argmax(vals, axis=0)
    return np.take_along_axis(cands, best[None], 0)[0], np.take_along_axis(vals, best[None], 0)[0]


def gaussian_clip_ranges(z, delta, grid: int = 96, iters: int = 40):
    """Vectorised Gaussian clipping ranges for standardised offsets ``z``.

    The optimum saturates the KL budget, so both the max and min of the
    density ratio are searched along the boundary ``KL = delta``, which is
    parametrised by log-sigma with ``|mu|`` fixed by the budget.  ``delta``
    is a scalar or broadcasts against ``z``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    delta = np.broadcast_to(np.asarray(delta, dtype=float), z.shape)
    if not np.all(delta > 0):
        raise ValueError("delta must be positive")
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    shape = z.shape
    z, delta = z.reshape(-1), delta.reshape(-1)
    s_lo, s_hi = _sigma_interval(delta)
    sign = np.where(z >= 0, 1.0, -1.0)

    def boundary_log_ratio(zz, sg, dd, s, direction):
        m = np.sqrt(np.maximum(_boundary_mu2(s, dd), 0.0))
        return gaussian_log_ratio(zz, direction * sg * m, s)

    frac = np.linspace(0.0, 1.0, grid)[None, :]
    s_grid = s_lo[:, None] + frac * (s_hi - s_lo)[:, None]
    rows = np.arange(z.size)
    out = []
    # direction +1: mu moves toward z (max ratio); -1: away from z (min ratio)
    for direction in (1.0, -1.0):
        vals = direction * boundary_log_ratio(z[:, None], sign[:, None], delta[:, None],
                                              s_grid, direction)
        k = np.argmax(vals, axis=1)
        a = s_grid[rows, np.maximum(k - 1, 0)]
        b = s_grid[rows, np.minimum(k + 1, grid - 1)]
        _, best = _golden_max(
            lambda s, d=direction: d * boundary_log_ratio(z, sign, delta, s, d), a, b, iters)
        out.append(np.exp(direction * best))
    upper, lower = out
    return np.minimum(lower, 1.0).reshape(shape), np.maximum(upper, 1.0).reshape(shape)


def gaussian_clip_range(query: GaussianQuery, config: SolverConfig = DEFAULT_CONFIG) -> ClipRange:
    lower, upper = gaussian_clip_ranges(np.array([query.z]), query.delta)
    if not (np.isfinite(lower[0]) and np.isfinite(upper[0])):
        raise SolverFailure("gaussian range search produced a non-finite bound")
    return ClipRange(float(lower[0]), float(upper[0]))


def gaussian_delta_for_ratio(z, ratio: float, grid: int = 400, iters: int = 80):
    """Smallest KL budget whose Gaussian range at ``z`` reaches ``ratio``.

    Minimises KL(N(0,1) || N(mu, sigma^2)) over the curve of (mu, sigma)
    with density ratio exactly ``ratio`` at ``z``.  Vectorised over ``z``.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=float)).reshape(-1)
    if ratio == 1.0:
        out = np.zeros(z.shape)
        return float(out[0]) if scalar else out
    log_r = float(np.log(ratio))

    def kl_on_curve(s, zz):
        # (z - mu)^2 = 2 sigma^2 (z^2/2 - s - log_r)
        rhs = 2.0 * np.exp(2.0 * s) * (0.5 * zz * zz - s - log_r)
        ok = rhs >= 0
        dev = np.sqrt(np.where(ok, rhs, 0.0))
        # of the two mu solutions pick the one closer to the origin
        mu = np.where(np.abs(zz - dev) <= np.abs(zz + dev), zz - dev, zz + dev)
        return np.where(ok, -gaussian_kl(mu, s), -np.inf)

    s_max = 0.5 * z * z - log_r  # rhs >= 0 requires s <= s_max
    s_min = np.minimum(s_max, 0.0) - 8.0
    frac = np.linspace(0.0, 1.0, grid)[None, :]
    s_grid = s_min[:, None] + frac * (s_max - s_min)[:, None]
    vals = kl_on_curve(s_grid, z[:, None])
    k = np.argmax(vals, axis=1)
    rows = np.arange(z.size)
    a = s_grid[rows, np.maximum(k - 1, 0)]
    b = s_grid[rows, np.minimum(k + 1, grid - 1)]
    _, best = _golden_max(lambda s: kl_on_curve(s, z), a, b, iters)
    return float(-best[0]) if scalar else -best


def gaussian_adaptive_delta(z, advantages, epsilon: float, dims: int = 1):
    """Gaussian analogue of ``batch_adaptive_delta``.

    The binding positive (negative) sample is the one with the smallest
    ``|z|``, because the Gaussian range widens with ``|z|``.  For ``dims > 1``
    the budget is split evenly, so the per-dimension budget is multiplied
    back by ``dims``.  ``z`` is ``(n,)`` or ``(n, dims)``; for several
    dimensions the joint range is the product of per-dimension ranges and the
    budget is found by bisection.
    """
    z = np.asarray(z, dtype=float)
    adv = np.asarray(advantages, dtype=float)
    pos = adv > 0
    neg = adv < 0
    if not (pos.any() or neg.any()):
        return None
    if z.ndim == 1 or z.shape[1] == 1:
        zf = z.reshape(-1)
        arms = []
        if pos.any():
            arms.append(gaussian_delta_for_ratio(float(np.abs(zf[pos]).min()), 1.0 + epsilon))
        if neg.any():
            arms.append(gaussian_delta_for_ratio(float(np.abs(zf[neg]).min()), 1.0 - epsilon))
        return float(max(arms))

    def reaches(total):
        lo, up = _joint_gaussian_ranges(z, total, dims)
        ok = True
        if pos.any():
            ok &= bool(np.all(up[pos] >= 1.0 + epsilon))
        if neg.any():
            ok &= bool(np.all(lo[neg] <= 1.0 - epsilon))
        return ok

    lo, hi = 0.0, 1e-3
    while not reaches(hi):
        lo, hi = hi, hi * 2.0
        if hi > 1e3:
            raise SolverFailure("no finite KL budget reaches the requested ratio", (lo, hi))
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if reaches(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _joint_gaussian_ranges(z, delta_total, dims):
    per_dim = delta_total / dims
    lower = np.ones(z.shape[0])
    upper = np.ones(z.shape[0])
    for d in range(dims):
        lo, up = gaussian_clip_ranges(z[:, d], per_dim)
        lower *= lo
        upper *= up
    return lower, upper
