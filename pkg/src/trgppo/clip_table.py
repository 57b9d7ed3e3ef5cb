"""Precomputed clipping ranges over a probability grid for one KL budget.

Knots are spaced uniformly in logit(p).  Queries interpolate ``log l`` and
``log u`` linearly in logit coordinates, which tracks the ``u ~ delta / p``
growth near p -> 0 far better than interpolating raw values.  With
``polish`` set, the interpolated guess is refined by bracketed Newton steps;
the neighbouring knots give the bracket because both bounds are monotone
in ``p``.
"""
from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clip_solver import (DEFAULT_CONFIG, ClipRange, SolverConfig, SolverFailure,
                          polish_roots, solve_clip_ranges)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_MAGIC = b"TRGCLIP\0"
_HEADER = struct.Struct("<8sIdQd?")
CACHE_ENV = "TRGPPO_TABLE_CACHE"


@dataclass(frozen=True)
class ClipTableSpec:
    delta: float
    grid_size: int = 4096
    p_min: float = 1e-8
    polish: bool = True

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")
        if not 0 < self.p_min < 0.5:
            raise ValueError("p_min must lie in (0, 0.5)")

    def knots(self) -> np.ndarray:
        edge = np.log(self.p_min) - np.log1p(-self.p_min)
        return 1.0 / (1.0 + np.exp(-np.linspace(edge, -edge, self.grid_size)))

    def file_name(self) -> str:
        return (f"cliptable_v{FORMAT_VERSION}_d{self.delta:.12e}_n{self.grid_size}"
                f"_pmin{self.p_min:.3e}.bin")


@dataclass
class ClipTable:
    spec: ClipTableSpec
    knots: np.ndarray
    lowers: np.ndarray
    uppers: np.ndarray
    config: SolverConfig = DEFAULT_CONFIG
    max_interp_error: float = float("nan")
    clamped_queries: int = field(default=0, compare=False)

    def __post_init__(self):
        self._logit = np.log(self.knots) - np.log1p(-self.knots)
        self._log_l = np.log(self.lowers)
        self._log_u = np.log(self.uppers)

    @property
    def delta(self) -> float:
        return self.spec.delta

    def _interpolate(self, p):
        x = np.log(p) - np.log1p(-p)
        lower = np.exp(np.interp(x, self._logit, self._log_l))
        upper = np.exp(np.interp(x, self._logit, self._log_u))
        return lower, upper

    def query_many(self, p, delta=None, polish=None, return_iterations=False):
        """Ranges for an array of probabilities.

        ``delta`` may differ from the table's budget as long as it is not
        larger; the table value then serves as the outer end of the polish
        bracket and polishing is forced on.
        """
        p = np.asarray(p, dtype=float)
        lo_edge, hi_edge = self.knots[0], self.knots[-1]
        out_of_range = (p < lo_edge) | (p > hi_edge)
        if out_of_range.any():
            self.clamped_queries += int(out_of_range.sum())
            log.debug("clamped %d probabilities into the table range", int(out_of_range.sum()))
        p = np.clip(p, lo_edge, hi_edge)
        lower, upper = self._interpolate(p)
        polish = self.spec.polish if polish is None else polish
        iters = np.zeros(p.shape, dtype=int)
        if delta is None or delta == self.delta:
            delta = self.delta
            if polish:
                idx = np.clip(np.searchsorted(self.knots, p), 1, self.knots.size - 1)
                brackets = (self.lowers[idx - 1], self.lowers[idx],
                            self.uppers[idx], self.uppers[idx - 1])
                lower, upper, iters = polish_roots(p, delta, lower, upper, brackets, self.config)
        else:
            if delta > self.delta:
                raise ValueError("query delta exceeds the table budget")
            brackets = (lower, np.ones_like(p), np.ones_like(p), upper)
            lower, upper, iters = polish_roots(p, delta, lower, upper, brackets, self.config)
        if return_iterations:
            return lower, upper, iters
        return lower, upper

    def query(self, p: float) -> ClipRange:
        lower, upper = self.query_many(np.array([p]))
        return ClipRange(float(lower[0]), float(upper[0]))

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(_MAGIC, FORMAT_VERSION, self.spec.delta, self.spec.grid_size,
                            self.spec.p_min, self.spec.polish)
        body = np.stack([self.knots, self.lowers, self.uppers]).astype("<f8").tobytes()
        return head + struct.pack("<d", self.max_interp_error) + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ClipTable":
        magic, version, delta, n, p_min, polish = _HEADER.unpack_from(blob, 0)
        if magic != _MAGIC:
            raise ValueError("not a clip table file")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported clip table version {version}")
        off = _HEADER.size
        (err,) = struct.unpack_from("<d", blob, off)
        off += 8
        arr = np.frombuffer(blob, dtype="<f8", count=3 * n, offset=off).reshape(3, n)
        spec = ClipTableSpec(delta, int(n), p_min, bool(polish))
        return cls(spec, arr[0].copy(), arr[1].copy(), arr[2].copy(), max_interp_error=err)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "ClipTable":
        return cls.from_bytes(Path(path).read_bytes())

    def export_text(self, path) -> Path:
        path = Path(path)
        header = (f"clip table v{FORMAT_VERSION} delta={self.spec.delta!r} "
                  f"grid_size={self.spec.grid_size} p_min={self.spec.p_min!r}\n"
                  "p,lower,upper")
        np.savetxt(path, np.column_stack([self.knots, self.lowers, self.uppers]),
                   delimiter=",", header=header, fmt="%.17g")
        return path


def build_table(spec: ClipTableSpec, config: SolverConfig | None = None) -> ClipTable:
    config = config or SolverConfig(p_min=min(spec.p_min, DEFAULT_CONFIG.p_min))
    knots = spec.knots()
    lowers, uppers = solve_clip_ranges(knots, spec.delta, config)
    # lower roots below the smallest normal double saturate; skip those knots
    resolvable = lowers[1:] > 2.0 * np.finfo(float).tiny
    broken = (np.diff(uppers) >= 0) | ((np.diff(lowers) <= 0) & resolvable)
    if broken.any():
        bad = int(np.flatnonzero(broken)[0])
        raise SolverFailure(f"clip table not monotone at knot {bad} (p={knots[bad]!r})",
                            (knots[bad], knots[bad + 1]))
    table = ClipTable(spec, knots, lowers, uppers, config)
    # interpolation error at cell midpoints, in ratio units
    mids = np.sqrt(knots[:-1] * knots[1:])
    exact_l, exact_u = solve_clip_ranges(mids, spec.delta, config)
    approx_l, approx_u = table._interpolate(mids)
    table.max_interp_error = float(max(np.max(np.abs(exact_l - approx_l)),
                                       np.max(np.abs(exact_u - approx_u))))
    return table


def cache_dir(override=None) -> Path:
    return Path(override or os.environ.get(CACHE_ENV, Path.home() / ".cache" / "trgppo"))


def load_or_build(spec: ClipTableSpec, directory=None) -> ClipTable:
    """Fetch a table from the cache directory, building and saving on a miss."""
    directory = cache_dir(directory)
    path = directory / spec.file_name()
    if path.exists():
        table = ClipTable.load(path)
        if table.spec == spec:
            return table
    table = build_table(spec)
    directory.mkdir(parents=True, exist_ok=True)
    table.save(path)
    return table


class TableCache:
    """In-memory tables for budgets snapped upward onto a log grid.

    A batch-adaptive budget is served by the table of the next grid value
    at or above it, then polished to the exact budget.
    """

    def __init__(self, per_decade: int = 16, grid_size: int = 4096, p_min: float = 1e-8):
        self.per_decade = per_decade
        self.grid_size = grid_size
        self.p_min = p_min
        self._tables: dict[int, ClipTable] = {}

    def snap(self, delta: float) -> float:
        return 10.0 ** (self._key(delta) / self.per_decade)

    def _key(self, delta: float) -> int:
        k = int(np.ceil(np.log10(delta) * self.per_decade - 1e-9))
        return k

    def table_for(self, delta: float) -> ClipTable:
        key = self._key(delta)
        table = self._tables.get(key)
        if table is None:
            snapped = 10.0 ** (key / self.per_decade)
            table = build_table(ClipTableSpec(snapped, self.grid_size, self.p_min))
            self._tables[key] = table
        return table

    def ranges(self, p, delta: float):
        table = self.table_for(delta)
        if delta > table.delta:
            # rounding put delta just above the snapped knot
            return solve_clip_ranges(p, delta)
        return table.query_many(p, delta=delta)

    def __len__(self):
        return len(self._tables)
