"""Solving search models: an external MILP solver driven as a subprocess, and
exhaustive joint-path enumeration.

The subprocess contract is a command template with ``{lp}``, ``{sol}``,
``{timeout}`` and ``{threads}`` placeholders (plus optional ``{gap}``,
``{presolve}`` and ``{python}``). The solver, usually through a thin adapter
script, must write a solution file of whitespace-separated ``name value``
lines; ``#`` starts a comment and the keys ``objective``, ``status`` and
``gap`` are reserved for the objective value, the termination status and the
relative MIP gap.
"""
from __future__ import annotations

import logging
import math
import os
import shlex
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .belief import evaluate_joint_plan
from .instance import Instance
from .lpformat import write_lp
from .milp import MilpModel, x_name, y_name

log = logging.getLogger(__name__)

SOLVER_CMD_ENV = "MESPP_SOLVER_CMD"
TMPDIR_ENV = "MESPP_TMPDIR"
DEFAULT_COMMAND = (
    "{python} -m mespp.adapters.highs {lp} {sol} --time-limit {timeout}"
    " --threads {threads} --gap {gap} --presolve {presolve}"
)
DEFAULT_ENUM_CAP = 10**7

OPTIMAL = "optimal"
TIMEOUT = "feasible-timeout"
INFEASIBLE = "infeasible"
ERROR = "error"

_STATUS_ALIASES = {
    "optimal": OPTIMAL,
    "feasible-timeout": TIMEOUT,
    "timeout": TIMEOUT,
    "time_limit": TIMEOUT,
    "time-limit": TIMEOUT,
    "feasible": TIMEOUT,
    "infeasible": INFEASIBLE,
    "error": ERROR,
}


class DecodeError(ValueError):
    pass


class EnumerationCapExceeded(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"enumeration would explore {count:.3e} joint paths, above the cap of {cap:.0e}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class SolverSpec:
    backend: str = "external"
    command: str | None = None
    timeout: float = 1800.0
    threads: int = 8
    gap_tol: float = 1e-9
    presolve: bool = True
    enum_cap: int = DEFAULT_ENUM_CAP

    def __post_init__(self) -> None:
        if self.backend not in ("external", "enumeration"):
            raise ValueError(f"unknown solver backend {self.backend!r}")
        if self.timeout <= 0:
            raise ValueError(f"solver timeout must be positive, got {self.timeout}")

    def command_template(self) -> str:
        return self.command or os.environ.get(SOLVER_CMD_ENV) or DEFAULT_COMMAND


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    values: dict[str, float] = field(default_factory=dict)
    mip_gap: float = math.nan
    wall_time: float = 0.0
    solver: str = ""
    message: str = ""
    plan: tuple[tuple[int, ...], ...] | None = None
    explored: int = 0

    @property
    def has_incumbent(self) -> bool:
        return self.status in (OPTIMAL, TIMEOUT) and (bool(self.values) or self.plan is not None)


# -- solution files ---------------------------------------------------------

def read_solution(text: str) -> tuple[dict[str, float], dict[str, str]]:
    """Split a solution file into variable values and reserved header keys."""
    values: dict[str, float] = {}
    header: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise ValueError(f"solution line {lineno}: expected 'name value', got {line!r}")
        key, value = tokens
        if key in ("objective", "status", "gap"):
            header[key] = value
            continue
        try:
            values[key] = float(value)
        except ValueError:
            raise ValueError(f"solution line {lineno}: value {value!r} is not a number") from None
    return values, header


def write_solution(values: Mapping[str, float], objective: float | None = None,
                   status: str | None = None, gap: float | None = None) -> str:
    lines = []
    if status is not None:
        lines.append(f"status {status}")
    if objective is not None:
        lines.append(f"objective {objective!r}")
    if gap is not None:
        lines.append(f"gap {gap!r}")
    lines += [f"{name} {float(v)!r}" for name, v in values.items()]
    return "\n".join(lines) + "\n"


# -- external solver --------------------------------------------------------

def solve_external(model: MilpModel, spec: SolverSpec) -> SolveResult:
    """Write ``model`` as LP text, run the solver command and parse its answer."""
    template = spec.command_template()
    solver_id = shlex.split(template)[0] if template else "?"
    if "mespp.adapters." in template:
        solver_id = template.split("mespp.adapters.", 1)[1].split()[0]
    workdir = Path(tempfile.mkdtemp(prefix="mespp-", dir=os.environ.get(TMPDIR_ENV)))
    try:
        lp_path, sol_path = workdir / "model.lp", workdir / "model.sol"
        lp_path.write_text(write_lp(model))
        cmd = template.format(
            lp=shlex.quote(str(lp_path)),
            sol=shlex.quote(str(sol_path)),
            timeout=spec.timeout,
            threads=spec.threads,
            gap=spec.gap_tol,
            presolve="off" if not spec.presolve else "on",
            python=shlex.quote(sys.executable),
        )
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(
                shlex.split(cmd), capture_output=True, text=True, timeout=spec.timeout + 60
            )
        except FileNotFoundError as exc:
            return SolveResult(ERROR, solver=solver_id, message=f"solver command not found: {exc}")
        except subprocess.TimeoutExpired:
            return SolveResult(ERROR, wall_time=time.perf_counter() - t0, solver=solver_id,
                               message="solver did not exit within its time limit")
        wall = time.perf_counter() - t0
        if proc.returncode != 0:
            return SolveResult(ERROR, wall_time=wall, solver=solver_id,
                               message=f"exit code {proc.returncode}: {proc.stderr.strip()[-2000:]}")
        if not sol_path.exists():
            return SolveResult(ERROR, wall_time=wall, solver=solver_id,
                               message=f"solver wrote no solution file; stderr: {proc.stderr.strip()[-2000:]}")
        try:
            values, header = read_solution(sol_path.read_text())
        except ValueError as exc:
            return SolveResult(ERROR, wall_time=wall, solver=solver_id, message=str(exc))
    finally:
        if not os.environ.get("MESPP_KEEP_TMP"):
            shutil.rmtree(workdir, ignore_errors=True)

    status = _STATUS_ALIASES.get(header.get("status", OPTIMAL if values else ERROR).lower(), ERROR)
    if status in (INFEASIBLE, ERROR):
        return SolveResult(status, wall_time=wall, solver=solver_id,
                           message=header.get("status", "no incumbent reported"))
    if not values:
        return SolveResult(ERROR, wall_time=wall, solver=solver_id,
                           message=f"status {status} without an incumbent")
    objective = float(header["objective"]) if "objective" in header else model.objective_value(values)
    gap = float(header.get("gap", 0.0 if status == OPTIMAL else math.nan))
    if status == OPTIMAL and gap > spec.gap_tol:
        status = TIMEOUT
    return SolveResult(status, objective, values, gap, wall, solver_id)


def decode_paths(model: MilpModel, result: SolveResult) -> tuple[tuple[int, ...], ...]:
    """Read each searcher's path off the ``x`` variables of an incumbent."""
    if result.plan is not None:
        return result.plan
    if not result.values:
        raise DecodeError(f"result has no incumbent (status {result.status})")
    names = model.var_map
    plan = []
    for s in range(1, model.m + 1):
        path = []
        for t in range(model.horizon + 1):
            hits = [v for v in model.positions[(s, t)] if result.values.get(x_name(s, t, v), 0.0) >= 0.5]
            if len(hits) != 1:
                raise DecodeError(f"searcher {s} at time {t}: {len(hits)} vertices with x >= 0.5")
            if t and y_name(s, t - 1, path[-1], hits[0]) not in names:
                raise DecodeError(f"searcher {s} at time {t}: illegal move {path[-1]}->{hits[0]}")
            path.append(hits[0])
        plan.append(tuple(path))
    return tuple(plan)


# -- enumeration ------------------------------------------------------------

def count_paths(instance: Instance, start: int, horizon: int) -> int:
    """Number of closed-neighborhood walks of length ``horizon`` from ``start``."""
    g = instance.graph
    counts = [0] * (g.n + 1)
    counts[start] = 1
    for _ in range(horizon):
        nxt = [0] * (g.n + 1)
        for u in g.vertices():
            if counts[u]:
                nxt[u] += counts[u]
                for v in g.adjacency[u]:
                    nxt[v] += counts[u]
        counts = nxt
    return sum(counts)


def enumerate_paths(instance: Instance, start: int, horizon: int) -> np.ndarray:
    """All legal single-searcher paths, lexicographically sorted, one per row."""
    g = instance.graph
    closed = [()] + [tuple(sorted(set(g.adjacency[v]) | {v})) for v in g.vertices()]
    paths = [(start,)]
    for _ in range(horizon):
        paths = [p + (v,) for p in paths for v in closed[p[-1]]]
    return np.array(paths, dtype=np.int64).reshape(len(paths), horizon + 1)


def joint_path_count(instance: Instance, fixed: Mapping[int, Sequence[int]] | None = None) -> int:
    fixed = fixed or {}
    return math.prod(
        1 if s in fixed else count_paths(instance, v, instance.horizon)
        for s, v in enumerate(instance.starts, start=1)
    )


def _coverage_masks(instance: Instance) -> list[np.ndarray]:
    masks = []
    for s in range(instance.m):
        mask = np.zeros((instance.n + 1, instance.n), dtype=bool)
        for u in instance.graph.vertices():
            mask[u, [v - 1 for v in instance.capture.coverage(instance.graph, u)]] = True
        masks.append(mask)
    return masks


def _score_chunk(instance, path_sets, masks, flat_idx) -> np.ndarray:
    shape = tuple(len(p) for p in path_sets)
    idx = np.unravel_index(flat_idx, shape)
    k = flat_idx.size
    B = np.tile(np.asarray(instance.b0, dtype=float), (k, 1))
    reward = B[:, 0].copy()
    for t in range(1, instance.horizon + 1):
        B[:, 1:] = B[:, 1:] @ instance.motion
        for s, paths in enumerate(path_sets):
            zeta = instance.capture.zetas[s]
            mask = masks[s][paths[idx[s], t]]
            covered = np.where(mask, B[:, 1:], 0.0)
            B[:, 0] += (1.0 - zeta) * covered.sum(axis=1)
            B[:, 1:] = np.where(mask, zeta * B[:, 1:], B[:, 1:])
        reward += instance.gamma ** t * B[:, 0]
    return reward


def solve_enumeration(
    instance: Instance,
    cap: int = DEFAULT_ENUM_CAP,
    fixed: Mapping[int, Sequence[int]] | None = None,
    tie_tol: float = 1e-12,
) -> SolveResult:
    """Exhaustively score every joint path over the planning horizon.

    Searchers listed in ``fixed`` (1-based) follow the given path. Ties are
    broken towards the lexicographically smallest joint plan.
    """
    fixed = dict(fixed or {})
    count = joint_path_count(instance, fixed)
    if count > cap:
        raise EnumerationCapExceeded(count, cap)
    t0 = time.perf_counter()
    path_sets = []
    for s, v in enumerate(instance.starts, start=1):
        if s in fixed:
            path = tuple(fixed[s])
            if len(path) != instance.horizon + 1 or path[0] != v:
                raise ValueError(f"fixed path for searcher {s} does not match start/horizon")
            path_sets.append(np.array([path], dtype=np.int64))
        else:
            path_sets.append(enumerate_paths(instance, v, instance.horizon))
    masks = _coverage_masks(instance)
    chunk = max(1, 2_000_000 // (instance.n + 1))
    rewards = np.empty(count)
    for lo in range(0, count, chunk):
        hi = min(count, lo + chunk)
        rewards[lo:hi] = _score_chunk(instance, path_sets, masks, np.arange(lo, hi))
    best = int(np.flatnonzero(rewards >= rewards.max() - tie_tol)[0])
    idx = np.unravel_index(best, tuple(len(p) for p in path_sets))
    plan = tuple(tuple(int(v) for v in paths[i]) for paths, i in zip(path_sets, idx))
    objective, _ = evaluate_joint_plan(instance, plan)
    return SolveResult(
        OPTIMAL, objective, mip_gap=0.0, wall_time=time.perf_counter() - t0,
        solver="enumeration", plan=plan, explored=count,
    )
