"""``trgppo`` command line: solver queries, bandit experiments, training runs, reports.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.

Run artifacts live under ``--out``::

    runs/<kind>-<env>-<method>-s<seed>-<hash>/{manifest.json, returns.csv, diagnostics.csv}
    reports/summary.csv, reports/trap_rates.csv

Files contain no timestamps or timings, so rerunning a config rewrites
them byte for byte.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bandit_dynamics import BanditSpec, ClipRule, exploration_curve_exact, ordering_delta_threshold
from .clip_solver import (ConstraintPoint, SolverFailure, eval_g, solve_clip_range,
                          truncate_range)
from .clip_table import CACHE_ENV, ClipTableSpec, build_table, cache_dir, load_or_build
from .envs import REGISTRY
from .policy_opt import (EXAMPLE1_BANDIT, EXAMPLE1_INIT, ContinuousBanditSpec, TrainRunConfig,
                         run_bandit_sweep, trap_rate)
from .ppo_trainer import VARIANTS, TrainerConfig, run_training, variant

SCHEMA_VERSION = 1
RETURNS_COLUMNS = ("iteration", "return")
SUMMARY_COLUMNS = ("kind", "env", "method", "runs", "failed", "mean_final_return",
                   "mean_entropy", "mean_max_kl")
TRAP_COLUMNS = ("env", "method", "trapped", "total", "failed", "rate", "threshold", "window")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x)) if math.isfinite(x) else str(float(x))
    return str(x)


def _write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def parse_seeds(text: str) -> list[int]:
    """``"20"`` means seeds 0..19; ``"3,5,9"`` lists them; ``"10-19"`` is a range."""
    text = str(text).strip()
    try:
        if "," in text:
            seeds = [int(s) for s in text.split(",") if s.strip()]
        elif "-" in text.lstrip("-"):
            lo, hi = text.split("-", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise UsageError(f"cannot parse seeds {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise UsageError("need at least one non-negative seed")
    return seeds


def parse_methods(text: str, allowed) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in allowed]
    if bad or not methods:
        raise UsageError(f"unknown method(s) {bad or text!r}; choose from {sorted(allowed)}")
    return methods


def read_config(path) -> dict:
    """Key = value lines; an optional ``[run]`` header is accepted."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[run]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        out.update(parser[section])
    return out


def _coerce(value: str, example):
    if isinstance(example, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(example, int):
        return int(value)
    if isinstance(example, float):
        return float(value)
    return value


def _number_list(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


# ---------------------------------------------------------------------------
# solve / table
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    if args.p is None or args.delta is None:
        raise UsageError("solve needs --p and --delta")
    try:
        point = ConstraintPoint(args.p, args.delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    clip = solve_clip_range(point)
    print(f"l = {clip.lower!r}")
    print(f"u = {clip.upper!r}")
    print(f"residual_l = {eval_g(args.p, clip.lower) - args.delta:.3e}")
    print(f"residual_u = {eval_g(args.p, clip.upper) - args.delta:.3e}")
    if args.epsilon is not None:
        if not 0 < args.epsilon < 1:
            raise UsageError("--epsilon must lie in (0, 1)")
        t = truncate_range(clip, args.epsilon)
        print(f"l_truncated = {t.lower!r}")
        print(f"u_truncated = {t.upper!r}")
    return 0


def cmd_table_build(args) -> int:
    if args.delta is None:
        raise UsageError("table-build needs --delta")
    try:
        spec = ClipTableSpec(args.delta, grid_size=args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = build_table(spec)
    target = Path(args.out) if args.out else cache_dir()
    path = table.save(target / spec.file_name())
    if args.text:
        table.export_text(path.with_suffix(".csv"))
    print(f"table {path} knots={spec.grid_size} max_interp_error={table.max_interp_error:.3e}")
    return 0


def cmd_table_query(args) -> int:
    if args.delta is None or not args.p:
        raise UsageError("table-query needs --delta and at least one --p")
    try:
        spec = ClipTableSpec(args.delta, grid_size=args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    p = np.asarray(args.p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise UsageError("--p values must lie in (0, 1)")
    table = load_or_build(spec, args.out)
    lower, upper = table.query_many(p)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["p", "lower", "upper"])
    for row in zip(p, lower, upper):
        writer.writerow([_fmt(v) for v in row])
    return 0


# ---------------------------------------------------------------------------
# bandits
# ---------------------------------------------------------------------------

def cmd_bandit_exact(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    rewards = _number_list(cfg.get("rewards", "")) or EXAMPLE1_BANDIT.rewards
    init = _number_list(cfg.get("init", "")) or EXAMPLE1_INIT
    horizon = args.iterations if args.iterations is not None else int(cfg.get("horizon", 6))
    eps = args.epsilon if args.epsilon is not None else float(cfg.get("epsilon", 0.2))
    try:
        spec = BanditSpec(tuple(rewards))
        delta = args.delta if args.delta is not None else cfg.get("delta")
        if delta is None:
            # half the largest budget for which the ordering is guaranteed
            delta = 0.5 * ordering_delta_threshold(np.asarray(init), spec, eps)
        delta = float(delta)
        if not math.isfinite(delta) or delta <= 0:
            raise UsageError("no finite default delta for this instance; pass --delta")
        rules = [ClipRule("ppo", eps), ClipRule("trgppo", eps, delta)]
        curves = [exploration_curve_exact(init, spec, r, horizon) for r in rules]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rows = [{"t": t, "E_ppo": curves[0].values[t], "E_trgppo": curves[1].values[t],
             "delta": delta} for t in range(horizon + 1)]
    columns = ("t", "E_ppo", "E_trgppo", "delta")
    if args.out:
        _write_csv(Path(args.out), columns, rows)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    return 0


def _bandit_config(args, cfg: dict, method: str) -> TrainRunConfig:
    kwargs = {}
    example = TrainRunConfig()
    for key in ("batch_size", "learning_rate", "ascent_steps", "optimizer", "init", "delta"):
        if key in cfg:
            value = cfg[key]
            if key in ("batch_size", "ascent_steps"):
                value = int(value)
            elif key == "learning_rate":
                value = float(value)
            elif key == "delta" and value != "adaptive":
                value = float(value)
            kwargs[key] = value
    if args.delta is not None:
        kwargs["delta"] = args.delta
    iterations = args.iterations if args.iterations is not None else \
        int(cfg.get("iterations", example.iterations))
    eps = args.epsilon if args.epsilon is not None else float(cfg.get("epsilon", 0.2))
    try:
        return TrainRunConfig(method, iterations, epsilon=eps, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_bandit_train(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    env = args.env or cfg.get("env", "bandit")
    if env not in ("bandit", "bandit-continuous"):
        raise UsageError("bandit-train runs on 'bandit' or 'bandit-continuous'")
    spec = EXAMPLE1_BANDIT if env == "bandit" else ContinuousBanditSpec()
    methods = parse_methods(args.method or cfg.get("method", "PPO,TRGPPO"),
                            ("PPO", "TRGPPO", "PG"))
    seeds = parse_seeds(args.seeds or cfg.get("seeds", "10"))
    out = Path(args.out)
    all_runs, failures = [], []
    for method in methods:
        base = _bandit_config(args, cfg, method)
        for run in run_bandit_sweep(spec, base, seeds):
            all_runs.append(run)
            manifest = {"kind": "bandit-train", "env": env, "method": method,
                        "seed": run.config.seed,
                        "config": run.config.resolved(env == "bandit").to_dict()}
            run_dir = _run_dir(out, manifest)
            _write_run(run_dir, manifest,
                       [{"iteration": i, "return": v} for i, v in enumerate(run.curve)],
                       ("iteration", "delta"),
                       [{"iteration": i + 1, "delta": d} for i, d in enumerate(run.deltas)],
                       failed=run.failed, message=run.message)
            if run.failed:
                failures.append((method, run.config.seed, run.message))
    report = trap_rate(all_runs)
    rows = [dict(r, env=env) for r in report.rows()]
    _write_csv(out / "reports" / "trap_rates.csv", TRAP_COLUMNS, rows)
    _print_table(TRAP_COLUMNS, rows)
    _write_summary(out)
    return _report_failures(failures)


# ---------------------------------------------------------------------------
# trainer runs
# ---------------------------------------------------------------------------

def _trainer_config(args, cfg: dict, seed: int) -> TrainerConfig:
    example = TrainerConfig()
    kwargs = {}
    for key, value in cfg.items():
        if key in ("env", "method", "seeds", "workers"):
            continue
        if not hasattr(example, key):
            raise UsageError(f"unknown config key {key!r}")
        if key == "init_logit_bias":
            kwargs[key] = _number_list(value) or None
        elif key in ("rollout_steps", "minibatches"):
            kwargs[key] = int(value)
        else:
            kwargs[key] = _coerce(value, getattr(example, key))
    if args.iterations is not None:
        kwargs["iterations"] = args.iterations
    kwargs["seed"] = seed
    try:
        return TrainerConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _method_for(args, cfg, tag):
    method = variant(tag)
    eps = args.epsilon if args.epsilon is not None else cfg.get("epsilon")
    delta = args.delta if args.delta is not None else cfg.get("delta")
    try:
        if eps is not None:
            method = type(method)(method.tag, float(eps), method.entropy_coef, method.delta)
        if delta is not None and not method.constant:
            method = type(method)(method.tag, method.epsilon, method.entropy_coef,
                                  delta if delta == "adaptive" else float(delta))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return method


def _train_one(job):
    env, method, config, out = job
    manifest = {"kind": "train", "env": env, "method": method.tag, "seed": config.seed,
                "variant": {"epsilon": method.epsilon, "entropy_coef": method.entropy_coef,
                            "delta": method.delta},
                "config": config.resolved(env).to_dict()}
    run_dir = _run_dir(Path(out), manifest)
    try:
        result = run_training(env, method, config)
    except (SolverFailure, FloatingPointError, ArithmeticError) as exc:
        _write_run(run_dir, manifest, [], ("iteration",), [], failed=True, message=str(exc))
        return method.tag, config.seed, str(exc)
    aborted = [d for d in result.diagnostics if d.aborted]
    _write_run(run_dir, manifest,
               [{"iteration": i, "return": r} for i, r in enumerate(result.returns)],
               result.diagnostics[0].COLUMNS if result.diagnostics else ("iteration",),
               [d.as_row() for d in result.diagnostics],
               failed=False, message=f"{len(aborted)} aborted iterations" if aborted else "")
    return None


def cmd_train(args) -> int:
    cfg = read_config(args.config) if args.config else {}
    env = args.env or cfg.get("env", "chain")
    if env not in REGISTRY:
        raise UsageError(f"unknown environment {env!r}; choose from {sorted(REGISTRY)}")
    methods = parse_methods(args.method or cfg.get("method", "PPO,TRGPPO"), VARIANTS)
    seeds = parse_seeds(args.seeds or cfg.get("seeds", "3"))
    workers = args.workers or int(cfg.get("workers", 1))
    jobs = [(env, _method_for(args, cfg, m), _trainer_config(args, cfg, s), str(args.out))
            for m in methods for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_train_one, jobs))
    else:
        outcomes = [_train_one(job) for job in jobs]
    failures = [o for o in outcomes if o is not None]
    rows = _write_summary(Path(args.out))
    _print_table(SUMMARY_COLUMNS, rows)
    return _report_failures(failures)


# ---------------------------------------------------------------------------
# artifacts and reports
# ---------------------------------------------------------------------------

def _run_dir(out: Path, manifest: dict) -> Path:
    digest = config_hash(manifest)
    name = f"{manifest['kind']}-{manifest['env']}-{manifest['method']}-s{manifest['seed']}-{digest}"
    return out / "runs" / name


def _write_run(run_dir: Path, manifest, returns, diag_columns, diagnostics, failed, message):
    run_dir.mkdir(parents=True, exist_ok=True)
    body = dict(manifest, config_hash=config_hash(manifest), schema_version=SCHEMA_VERSION,
                package_version=__version__, status="failed" if failed else "ok",
                message=message)
    (run_dir / "manifest.json").write_text(json.dumps(body, indent=2, sort_keys=True,
                                                      default=str) + "\n")
    _write_csv(run_dir / "returns.csv", RETURNS_COLUMNS, returns)
    _write_csv(run_dir / "diagnostics.csv", diag_columns, diagnostics)


def _read_column(path: Path, column: str) -> np.ndarray:
    if not path.exists():
        return np.zeros(0)
    with open(path, newline="") as fh:
        values = [row[column] for row in csv.DictReader(fh) if row.get(column, "") != ""]
    return np.asarray(values, dtype=float)


def collect_summary(out: Path) -> list[dict]:
    groups: dict[tuple, dict] = {}
    for manifest_path in sorted(Path(out).glob("runs/*/manifest.json")):
        manifest = json.loads(manifest_path.read_text())
        key = (manifest["kind"], manifest["env"], manifest["method"])
        g = groups.setdefault(key, {"runs": 0, "failed": 0, "final": [], "entropy": [],
                                    "kl": []})
        g["runs"] += 1
        if manifest.get("status") != "ok":
            g["failed"] += 1
            continue
        run_dir = manifest_path.parent
        returns = _read_column(run_dir / "returns.csv", "return")
        returns = returns[np.isfinite(returns)]
        if returns.size:
            k = max(1, int(math.ceil(0.1 * returns.size)))
            g["final"].append(returns[-k:].mean())
        for col, bucket in (("entropy", "entropy"), ("max_kl", "kl")):
            series = _read_column(run_dir / "diagnostics.csv", col)
            if series.size:
                g[bucket].append(series.mean())
    rows = []
    for (kind, env, method), g in sorted(groups.items()):
        mean = lambda xs: float(np.mean(xs)) if xs else math.nan  # noqa: E731
        rows.append({"kind": kind, "env": env, "method": method, "runs": g["runs"],
                     "failed": g["failed"], "mean_final_return": mean(g["final"]),
                     "mean_entropy": mean(g["entropy"]), "mean_max_kl": mean(g["kl"])})
    return rows


def _write_summary(out: Path) -> list[dict]:
    rows = collect_summary(out)
    _write_csv(out / "reports" / "summary.csv", SUMMARY_COLUMNS, rows)
    return rows


def _print_table(columns, rows):
    print("\t".join(columns))
    for row in rows:
        print("\t".join(_fmt(row[c]) if not isinstance(row[c], float)
                        else f"{row[c]:.6g}" for c in columns))


def _report_failures(failures) -> int:
    for method, seed, message in failures:
        print(f"run failed: method={method} seed={seed}: {message}", file=sys.stderr)
    return 2 if failures else 0


def cmd_report(args) -> int:
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} is not a directory")
    rows = collect_summary(out) if out.exists() else []
    if out.exists():
        _write_csv(out / "reports" / "summary.csv", SUMMARY_COLUMNS, rows)
    _print_table(SUMMARY_COLUMNS, rows)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trgppo", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="clipping range for one (p, delta)")
    p.add_argument("--p", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("table-build", help="precompute a lookup table")
    p.add_argument("--delta", type=float)
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--text", action="store_true", help="also export a CSV copy")
    p.add_argument("--out", help=f"directory (default: ${CACHE_ENV} or the user cache)")

    p = sub.add_parser("table-query", help="query a (cached) lookup table")
    p.add_argument("--delta", type=float)
    p.add_argument("--p", type=float, action="append")
    p.add_argument("--grid", type=int, default=4096)
    p.add_argument("--out", help="table directory")

    p = sub.add_parser("bandit-exact", help="exact exploration curves, PPO vs trust-region rule")
    p.add_argument("--config")
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--iterations", type=int, help="horizon")
    p.add_argument("--out", help="CSV path (default: stdout)")

    for name, help_text in (("bandit-train", "seeded bandit training sweep with trap rates"),
                            ("train", "actor-critic training runs")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config")
        p.add_argument("--env")
        p.add_argument("--method", help="comma-separated methods")
        p.add_argument("--seeds", help="count, list a,b,c or range a-b")
        p.add_argument("--iterations", type=int)
        p.add_argument("--delta", type=_delta_arg)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--out", required=True)
        if name == "train":
            p.add_argument("--workers", type=int, default=0)

    p = sub.add_parser("report", help="aggregate run directories")
    p.add_argument("--out", required=True)
    return parser


def _delta_arg(text):
    return text if text == "adaptive" else float(text)


COMMANDS = {"solve": cmd_solve, "table-build": cmd_table_build, "table-query": cmd_table_query,
            "bandit-exact": cmd_bandit_exact, "bandit-train": cmd_bandit_train,
            "train": cmd_train, "report": cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"trgppo: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"trgppo: error: {exc}", file=sys.stderr)
        return 1
    except (SolverFailure, FloatingPointError) as exc:
        print(f"trgppo: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
