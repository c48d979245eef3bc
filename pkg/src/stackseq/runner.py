"""Experiment grids: seeded runs over targets, persisted as JSONL records.

A grid is targets x restarts x bond-dimension caps x sweep directions.
Every cell is seeded independently of execution order, records are
appended to a single JSONL file by one writer, and a rerun with
``resume`` skips cells already present under the same config hash.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, fields
from pathlib import Path
from time import perf_counter

import numpy as np

from .dmrg import DmrgPlan, SweepDirection, dmrg_run
from .errors import DomainError
from .laminate import (
    SsrProblem,
    loss,
    problem_from_dict,
    rmse,
    total_penalty,
    total_value,
    violation_counts,
)
from .mpo import loss_mpo_sum
from .mps import random_mps
from .targets import TargetSet, inequivalent_targets, kde_uniform_targets

logger = logging.getLogger("stackseq.runner")

RECORDS_NAME = "records.jsonl"

#: config keys that affect results and therefore the config hash
_SEMANTIC_KEYS = (
    "schema",
    "problem",
    "targets",
    "chis",
    "directions",
    "plan",
    "restarts",
    "seed",
    "exact_tol",
)
#: plan keys the grid or the seeding protocol owns
_RESERVED_PLAN_KEYS = ("chi_max", "direction", "seed")


def canonical_json(data) -> str:
    """Deterministic JSON used for hashing and canonical files."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict) -> str:
    semantic = {k: resolved[k] for k in _SEMANTIC_KEYS if k in resolved}
    return hashlib.sha256(canonical_json(semantic).encode()).hexdigest()


def _seed_int(master: int, spawn_key: tuple[int, ...]) -> int:
    ss = np.random.SeedSequence(master, spawn_key=spawn_key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def init_seed(master: int, target_id: int, restart: int) -> int:
    """Seed of the random initial state; shared across chi and direction."""
    return _seed_int(master, (0, target_id, restart))


def run_seed(master: int, target_id: int, restart: int, chi: int, dir_idx: int) -> int:
    """Seed of one cell's eigensolver restarts."""
    return _seed_int(master, (1, target_id, restart, chi, dir_idx))


def _resolve_targets(source, problem_data: dict, base_dir: Path) -> tuple[TargetSet, dict]:
    """Load or generate the target set; returns (set, hashable source dict)."""
    if not isinstance(source, dict):
        raise DomainError("config 'targets' must be an object")
    if source.get("schema") == 1:
        return TargetSet.from_json_dict(source), source
    method = source.get("method")
    if method == "file":
        path = Path(source["path"])
        if not path.is_absolute():
            path = base_dir / path
        data = json.loads(path.read_text())
        return TargetSet.from_json_dict(data), data
    problem = problem_from_dict(problem_data)
    if method == "inequivalent":
        ts = inequivalent_targets(problem, int(source["count"]), int(source["seed"]))
    elif method == "kde":
        ts = kde_uniform_targets(
            problem,
            n_samples=int(source["n_samples"]),
            count=int(source["count"]),
            seed=int(source["seed"]),
        )
    else:
        raise DomainError(f"unknown target source {method!r}")
    return ts, dict(source)


@dataclass
class ExperimentConfig:
    """A resolved experiment grid.

    ``resolved`` is the plain-JSON form the config hash covers; file-based
    target sources are inlined there so the hash pins actual content.
    """

    problem_data: dict
    targets: TargetSet
    chis: tuple[int, ...]
    directions: tuple[str, ...]
    plan_base: dict
    restarts: int
    master_seed: int
    exact_tol: float
    out_dir: str | None
    jobs: int
    resolved: dict

    @classmethod
    def from_dict(
        cls,
        data: dict,
        base_dir: str | Path | None = None,
        seed_override: int | None = None,
    ) -> "ExperimentConfig":
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        data = dict(data)
        if data.get("schema", 1) != 1:
            raise DomainError(f"unsupported config schema {data.get('schema')!r}")
        if "problem" not in data or "targets" not in data:
            raise DomainError("config needs 'problem' and 'targets' entries")
        if seed_override is not None:
            data["seed"] = int(seed_override)
        problem_data = dict(data["problem"])
        targets, targets_resolved = _resolve_targets(data["targets"], problem_data, base_dir)
        chis = tuple(int(c) for c in data.get("chis", ()))
        directions = tuple(str(d) for d in data.get("directions", ()))
        if not chis or not directions:
            raise DomainError("config needs nonempty 'chis' and 'directions' lists")
        for d in directions:
            SweepDirection(d)
        plan_base = dict(data.get("plan") or {})
        for key in _RESERVED_PLAN_KEYS:
            if key in plan_base:
                raise DomainError(f"plan key {key!r} is controlled by the grid")
        restarts = int(data.get("restarts", 1))
        if restarts < 0:
            raise DomainError("restarts must be nonnegative")
        resolved = {
            "schema": 1,
            "problem": problem_data,
            "targets": targets_resolved,
            "chis": list(chis),
            "directions": list(directions),
            "plan": plan_base,
            "restarts": restarts,
            "seed": int(data.get("seed", 0)),
            "exact_tol": float(data.get("exact_tol", 1e-8)),
        }
        return cls(
            problem_data=problem_data,
            targets=targets,
            chis=chis,
            directions=directions,
            plan_base=plan_base,
            restarts=restarts,
            master_seed=resolved["seed"],
            exact_tol=resolved["exact_tol"],
            out_dir=data.get("out"),
            jobs=int(data.get("jobs", 1)),
            resolved=resolved,
        )

    @classmethod
    def load(cls, source, seed_override: int | None = None) -> "ExperimentConfig":
        if isinstance(source, ExperimentConfig):
            return source
        if isinstance(source, dict):
            return cls.from_dict(source, seed_override=seed_override)
        path = Path(source)
        return cls.from_dict(
            json.loads(path.read_text()), base_dir=path.parent, seed_override=seed_override
        )

    @property
    def hash(self) -> str:
        return config_hash(self.resolved)

    def problem_for(self, target_id: int) -> SsrProblem:
        return problem_from_dict(self.problem_data, target=self.targets.points[target_id])

    def cells(self):
        for t in range(len(self.targets)):
            for r in range(self.restarts):
                for chi in self.chis:
                    for dir_idx, direction in enumerate(self.directions):
                        yield t, r, chi, dir_idx, direction


@dataclass
class RunRecord:
    """Outcome of one grid cell, self-contained for later summaries."""

    config_hash: str
    target_id: int
    restart: int
    chi: int
    direction: str
    seed: int
    init_seed: int
    plan: dict
    constrained: bool
    collapsed: bool
    sequence: tuple[int, ...] | None
    final_expectation: float | None
    final_loss: float | None
    final_rmse: float | None
    final_penalty: float | None
    final_total: float | None
    violations: dict | None
    n_violations: int | None
    exact: bool
    duration_s: float
    trace: list
    error: str | None = None

    @property
    def cell(self) -> tuple[int, int, int, str]:
        return (self.target_id, self.restart, self.chi, self.direction)

    def to_json_dict(self) -> dict:
        out = {"schema": 1}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if f.name == "sequence" and value is not None else value
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "RunRecord":
        if data.get("schema") != 1:
            raise DomainError(f"unsupported record schema {data.get('schema')!r}")
        kwargs = {f.name: data[f.name] for f in fields(cls)}
        if kwargs["sequence"] is not None:
            kwargs["sequence"] = tuple(kwargs["sequence"])
        return cls(**kwargs)


def _evaluate_final(problem: SsrProblem, result, exact_tol: float) -> dict:
    seq = result.sequence
    out = {
        "collapsed": seq is not None,
        "sequence": tuple(seq) if seq is not None else None,
        "final_expectation": result.trace.expectation[-1],
        "final_loss": None,
        "final_rmse": None,
        "final_penalty": None,
        "final_total": None,
        "violations": None,
        "n_violations": None,
        "exact": False,
    }
    if seq is not None:
        viol = violation_counts(problem, seq)
        out.update(
            final_loss=loss(problem, seq),
            final_rmse=rmse(problem, seq),
            final_penalty=total_penalty(problem, seq),
            final_total=total_value(problem, seq),
            violations=viol,
            n_violations=int(sum(viol.values())),
        )
        out["exact"] = out["final_loss"] <= exact_tol
    return out


def execute_cell(
    base: dict, target_id: int, restart: int, chi: int, dir_idx: int, direction: str
) -> dict:
    """Run one grid cell; importable at module level for process pools."""
    plan_dict = dict(
        base["plan"],
        chi_max=chi,
        direction=direction,
        seed=run_seed(base["seed"], target_id, restart, chi, dir_idx),
    )
    record = {
        "config_hash": base["config_hash"],
        "target_id": target_id,
        "restart": restart,
        "chi": chi,
        "direction": direction,
        "seed": plan_dict["seed"],
        "init_seed": init_seed(base["seed"], target_id, restart),
        "plan": plan_dict,
        "constrained": bool(base["problem"].get("constraints")),
        "collapsed": False,
        "sequence": None,
        "final_expectation": None,
        "final_loss": None,
        "final_rmse": None,
        "final_penalty": None,
        "final_total": None,
        "violations": None,
        "n_violations": None,
        "exact": False,
        "duration_s": 0.0,
        "trace": [],
        "error": None,
    }
    try:
        targets = TargetSet.from_json_dict(base["targets"])
        problem = problem_from_dict(base["problem"], target=targets.points[target_id])
        terms = loss_mpo_sum(problem, include_penalties=True)
        plan = DmrgPlan(**plan_dict)
        init = random_mps(problem.n_plies, problem.d, chi, record["init_seed"])
        t0 = perf_counter()
        result = dmrg_run(problem, terms, init, plan)
        record["duration_s"] = perf_counter() - t0
        record["trace"] = result.trace.to_records()
        record.update(_evaluate_final(problem, result, base["exact_tol"]))
    except Exception as exc:  # partial failure stays in the batch
        record["error"] = f"{type(exc).__name__}: {exc}"
        logger.error("cell %s failed: %s", (target_id, restart, chi, direction), exc)
    return record


def _load_existing(path: Path, want_hash: str) -> tuple[list[RunRecord], set]:
    records, done = [], set()
    if not path.exists():
        return records, done
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = RunRecord.from_json_dict(json.loads(line))
            if rec.config_hash != want_hash:
                continue
            records.append(rec)
            if rec.error is None:
                done.add(rec.cell)
    return records, done


def run_experiment(
    config,
    out: str | Path | None = None,
    jobs: int | None = None,
    resume: bool = False,
    seed: int | None = None,
) -> list[RunRecord]:
    """Execute the grid, appending one JSONL record per completed cell.

    ``out``, ``jobs``, and ``seed`` override the corresponding config
    fields.  With ``resume``, cells already recorded without error under
    the same config hash are skipped.
    """
    cfg = ExperimentConfig.load(config, seed_override=seed)
    h = cfg.hash
    jobs = jobs if jobs is not None else cfg.jobs
    out = out if out is not None else cfg.out_dir
    records, done = [], set()
    records_path = None
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        records_path = out_dir / RECORDS_NAME
        (out_dir / "config.json").write_text(canonical_json(cfg.resolved) + "\n")
        if resume:
            records, done = _load_existing(records_path, h)
        elif records_path.exists():
            raise DomainError(
                f"{records_path} exists; pass resume=True to continue it"
            )
    todo = [cell for cell in cfg.cells() if (cell[0], cell[1], cell[2], cell[4]) not in done]
    logger.info("grid has %d cells, %d to run", len(done) + len(todo), len(todo))
    base = {
        "config_hash": h,
        "problem": cfg.problem_data,
        "targets": cfg.targets.to_json_dict(),
        "plan": cfg.plan_base,
        "seed": cfg.master_seed,
        "exact_tol": cfg.exact_tol,
    }
    sink = None
    if records_path is not None:
        sink = records_path.open("a")
    try:
        for record_dict in _iter_results(base, todo, jobs):
            rec = RunRecord.from_json_dict({"schema": 1, **record_dict})
            records.append(rec)
            if sink is not None:
                sink.write(canonical_json(rec.to_json_dict()) + "\n")
                sink.flush()
            logger.info(
                "cell %s done: loss=%s exact=%s",
                rec.cell,
                rec.final_loss,
                rec.exact,
            )
    finally:
        if sink is not None:
            sink.close()
    order = {d: i for i, d in enumerate(cfg.directions)}
    records.sort(key=lambda r: (r.target_id, r.restart, r.chi, order.get(r.direction, 0)))
    return records


def _iter_results(base: dict, todo: list, jobs: int):
    if jobs <= 1 or len(todo) <= 1:
        for cell in todo:
            yield execute_cell(base, *cell)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        pending = {pool.submit(execute_cell, base, *cell) for cell in todo}
        while pending:
            finished, pending = wait(pending, return_when=FIRST_COMPLETED)
            for fut in finished:
                yield fut.result()


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def trimmed_mean_duration(
    duration_lists, head: int = 10, tail: int = 10, trim_frac: float = 0.10
) -> float:
    """Mean sweep duration after windowing and symmetric trimming.

    Each run drops its first ``head`` and last ``tail`` sweeps; the pooled
    remainder drops its lowest and highest ``trim_frac`` fraction.
    """
    pool: list[float] = []
    for durations in duration_lists:
        ds = list(durations)
        stop = len(ds) - tail if tail else len(ds)
        pool.extend(ds[head:stop])
    if not pool:
        return float("nan")
    pool.sort()
    k = int(len(pool) * trim_frac)
    kept = pool[k : len(pool) - k] if k else pool
    return float(np.mean(kept)) if kept else float("nan")


def _sweep_durations(rec: RunRecord) -> list[float] | None:
    ds = [entry.get("duration_s") for entry in rec.trace[1:]]
    if not ds or any(d is None for d in ds):
        return None
    return ds


def _or_none(value: float) -> float | None:
    """NaN-free statistics so summary rows stay strict JSON."""
    return None if value != value else value


def summarize(records, require_single_config: bool = True) -> list[dict]:
    """Per (chi, direction, constrained) aggregates of a record set.

    RMSE statistics cover collapsed runs; the exact ratio counts all
    non-failed runs (an uncollapsed run is not exact); the violation
    ratio is the fraction of collapsed runs with at least one violation.
    """
    if isinstance(records, (str, Path)):
        lines = Path(records).read_text().splitlines()
        records = [RunRecord.from_json_dict(json.loads(s)) for s in lines if s.strip()]
    records = [
        r if isinstance(r, RunRecord) else RunRecord.from_json_dict(r) for r in records
    ]
    hashes = {r.config_hash for r in records}
    if require_single_config and len(hashes) > 1:
        raise DomainError(f"records mix {len(hashes)} configs; summarize one at a time")
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.config_hash, r.chi, r.direction, r.constrained), []).append(r)
    rows = []
    for (h, chi, direction, constrained), group in sorted(groups.items()):
        ok = [r for r in group if r.error is None]
        collapsed = [r for r in ok if r.collapsed]
        rmses = np.array([r.final_rmse for r in collapsed]) if collapsed else np.array([])
        duration_lists = [d for d in map(_sweep_durations, ok) if d is not None]
        rows.append(
            {
                "config_hash": h,
                "chi": chi,
                "direction": direction,
                "constrained": constrained,
                "n_runs": len(group),
                "n_failed": len(group) - len(ok),
                "collapsed_ratio": len(collapsed) / len(ok) if ok else None,
                "mean_rmse": float(rmses.mean()) if rmses.size else None,
                "std_rmse": float(rmses.std()) if rmses.size else None,
                "exact_ratio": sum(r.exact for r in ok) / len(ok) if ok else None,
                "violation_ratio": (
                    sum(bool(r.n_violations) for r in collapsed) / len(collapsed)
                    if collapsed
                    else None
                ),
                "mean_duration_s": (
                    float(np.mean([r.duration_s for r in ok])) if ok else None
                ),
                "trimmed_sweep_s": _or_none(trimmed_mean_duration(duration_lists)),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Single-target solve
# ---------------------------------------------------------------------------


def solve_single(
    problem: SsrProblem, plan_data: dict, restarts: int = 1, seed: int = 0
) -> dict:
    """Run restarts against one target and keep the best outcome.

    Best means lowest final total among collapsed runs, falling back to
    the lowest final expectation when nothing collapsed.
    """
    if restarts < 1:
        raise DomainError("restarts must be at least 1")
    plan_data = dict(plan_data)
    if "seed" in plan_data:
        raise DomainError("plan seeds are derived from the master seed")
    terms = loss_mpo_sum(problem, include_penalties=True)
    chi = int(plan_data.get("chi_max", 8))
    runs = []
    for r in range(restarts):
        plan = DmrgPlan(**plan_data, seed=run_seed(seed, 0, r, chi, 0))
        init = random_mps(problem.n_plies, problem.d, chi, init_seed(seed, 0, r))
        t0 = perf_counter()
        result = dmrg_run(problem, terms, init, plan)
        duration = perf_counter() - t0
        run = {
            "restart": r,
            "seed": plan.seed,
            "duration_s": duration,
            "trace": result.trace.to_records(),
        }
        run.update(_evaluate_final(problem, result, exact_tol=1e-8))
        runs.append(run)

    def rank(run):
        if run["collapsed"]:
            return (0, run["final_total"])
        return (1, run["final_expectation"])

    best = min(runs, key=rank)
    return {"schema": 1, "best": best, "runs": runs}
