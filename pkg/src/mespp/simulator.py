"""Monte-Carlo missions against a sampled target, and the experiment harness.

Randomness comes from :class:`numpy.random.Generator` (PCG64). Instance ``i``
of an experiment with master seed ``seed`` draws from the stream
``default_rng([seed, i])``, so results do not depend on execution order.
"""
from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .belief import (
    CaptureConfig,
    IllegalPlanError,
    evaluate_joint_plan,
    motion_random_walk,
    motion_static,
    uniform_belief,
    update_belief,
)
from .graph_env import Graph, neighbors_closed
from .instance import Instance
from .planner import (
    CAPTURE_TOL,
    MissionRecord,
    pad_paths,
    plan_centralized,
    plan_distributed_step,
    run_receding_horizon,
)
from .solver import SolverSpec

log = logging.getLogger(__name__)

PLANNERS = ("centralized", "distributed", "enumeration", "distributed-enumeration")


class UnsupportedStartError(ValueError):
    pass


@dataclass
class MissionState:
    t: int
    target: int
    positions: tuple[int, ...]
    belief: np.ndarray
    captured: bool = False


def sample_target_start(b0: np.ndarray, rng: np.random.Generator) -> int:
    """Draw the target's initial vertex from the free part of ``b0``."""
    b0 = np.asarray(b0, dtype=float)
    if b0[0] > 0:
        raise UnsupportedStartError(f"initial capture mass is {b0[0]}, simulation needs 0")
    p = b0[1:] / b0[1:].sum()
    return int(rng.choice(p.size, p=p)) + 1


def detect(instance: Instance, target: int, positions: Sequence[int], rng: np.random.Generator) -> bool:
    """Sample detections; each covering searcher detects independently with ``1 - zeta``."""
    hit = False
    for s, u in enumerate(positions):
        if target in instance.capture.coverage(instance.graph, u):
            if rng.random() >= instance.capture.zetas[s]:
                hit = True
    return hit


def step_mission(state: MissionState, actions: Sequence[int], rng: np.random.Generator,
                 instance: Instance) -> MissionState:
    """Advance one step: target moves, searchers move to ``actions``, then sense."""
    g = instance.graph
    for s, (u, v) in enumerate(zip(state.positions, actions), start=1):
        if v not in neighbors_closed(g, u):
            raise IllegalPlanError(s, state.t + 1, f"move {u}->{v} is not along an edge")
    row = instance.motion[state.target - 1]
    target = int(rng.choice(g.n, p=row)) + 1
    positions = tuple(int(v) for v in actions)
    captured = state.captured or detect(instance, target, positions, rng)
    belief = update_belief(state.belief, instance.motion, positions, instance.capture, g)
    return MissionState(state.t + 1, target, positions, belief, captured)


def simulate_plan(instance: Instance, plan: Sequence[Sequence[int]], rng: np.random.Generator) -> MissionRecord:
    """Execute a fixed joint plan against one sampled target trajectory."""
    state = MissionState(0, sample_target_start(instance.b0, rng), instance.starts, np.array(instance.b0))
    beliefs = [state.belief]
    steps = len(plan[0]) - 1
    for t in range(1, steps + 1):
        state = step_mission(state, [p[t] for p in plan], rng, instance)
        beliefs.append(state.belief)
        if state.captured:
            break
    reward, _ = evaluate_joint_plan(instance, pad_paths(plan, instance.deadline + 1))
    return MissionRecord(
        paths=tuple(tuple(p[: state.t + 1]) for p in plan),
        beliefs=np.array(beliefs),
        captured=state.captured,
        capture_time=state.t if state.captured else instance.deadline + 1,
        mission_time=state.t,
        reward=reward,
    )


def execute_plan(instance: Instance, plan: Sequence[Sequence[int]]) -> MissionRecord:
    """Deterministic-belief execution: stop once capture is (numerically) certain."""
    reward, traj = evaluate_joint_plan(instance, pad_paths(plan, instance.deadline + 1))
    done = np.flatnonzero(traj[:, 0] > 1.0 - CAPTURE_TOL)
    end = int(done[0]) if done.size else instance.deadline
    return MissionRecord(
        paths=tuple(tuple(p[: end + 1]) for p in plan),
        beliefs=traj[: end + 1],
        captured=bool(done.size),
        capture_time=end if done.size else instance.deadline + 1,
        mission_time=end,
        reward=reward,
    )


# -- experiments ------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    graph: Graph
    m: int
    deadline: int
    horizon: int
    gamma: float = 0.99
    zeta: float = 0.0
    capture_mode: str = "same-vertex"
    radius: int = 0
    motion: str = "static"
    stay_prob: float = 0.5
    belief_count: tuple[int, int] = (5, 5)
    scenario: str = "uniform"
    grid_shape: tuple[int, int] | None = None
    planners: tuple[str, ...] = ("centralized", "distributed")
    instances: int = 1
    seed: int = 0
    simulate: bool = False
    central_spec: SolverSpec = field(default_factory=lambda: SolverSpec(timeout=1800.0))
    distributed_spec: SolverSpec = field(default_factory=lambda: SolverSpec(timeout=10.0))
    config_id: str = ""

    def __post_init__(self) -> None:
        for p in self.planners:
            if p not in PLANNERS:
                raise ValueError(f"unknown planner {p!r}; choose from {', '.join(PLANNERS)}")
        if self.scenario not in ("uniform", "corners"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "corners" and self.grid_shape is None:
            raise ValueError("the corners scenario needs a grid environment")
        lo, hi = self.belief_count
        if not 1 <= lo <= hi <= self.graph.n:
            raise ValueError(f"belief vertex count range {self.belief_count} invalid for n={self.graph.n}")

    def capture(self) -> CaptureConfig:
        if self.capture_mode == "same-vertex":
            return CaptureConfig.same_vertex(self.m, self.zeta)
        return CaptureConfig.hop_radius(self.m, self.radius, self.zeta)

    def motion_matrix(self) -> np.ndarray:
        if self.motion == "static":
            return motion_static(self.graph.n)
        if self.motion == "random-walk":
            return motion_random_walk(self.graph, self.stay_prob)
        raise ValueError(f"unknown motion kernel {self.motion!r}")


def _corner_blocks(rows: int, cols: int) -> list[list[int]]:
    size_r, size_c = min(3, rows), min(3, cols)
    blocks = []
    for r0 in (0, rows - size_r):
        for c0 in (0, cols - size_c):
            blocks.append([r * cols + c + 1 for r in range(r0, r0 + size_r) for c in range(c0, c0 + size_c)])
    return blocks


def _central_block(rows: int, cols: int) -> list[int]:
    r0, r1 = rows // 3, rows - rows // 3
    c0, c1 = cols // 3, cols - cols // 3
    return [r * cols + c + 1 for r in range(r0, r1) for c in range(c0, c1)]


def generate_instance(config: ExperimentConfig, index: int) -> Instance:
    rng = np.random.default_rng([config.seed, index])
    n = config.graph.n
    if config.scenario == "corners":
        rows, cols = config.grid_shape
        support = sorted({int(rng.choice(block)) for block in _corner_blocks(rows, cols)})
        central = [v for v in _central_block(rows, cols) if v not in support]
        starts = tuple(int(rng.choice(central)) for _ in range(config.m))
    else:
        lo, hi = config.belief_count
        k = int(rng.integers(lo, hi + 1))
        support = sorted(int(v) + 1 for v in rng.choice(n, size=k, replace=False))
        starts = tuple(int(v) + 1 for v in rng.integers(0, n, size=config.m))
    return Instance(
        graph=config.graph,
        starts=starts,
        capture=config.capture(),
        motion=config.motion_matrix(),
        b0=uniform_belief(n, support),
        deadline=config.deadline,
        horizon=config.horizon,
        gamma=config.gamma,
        motion_kind=config.motion,
    )


def _target_observer(instance: Instance, rng: np.random.Generator):
    state = {"target": sample_target_start(instance.b0, rng)}

    def observe(t: int, positions: tuple[int, ...]) -> bool:
        row = instance.motion[state["target"] - 1]
        state["target"] = int(rng.choice(instance.n, p=row)) + 1
        return detect(instance, state["target"], positions, rng)

    return observe


def run_mission(instance: Instance, planner: str, config: ExperimentConfig, rng_seed) -> tuple[MissionRecord, float, float]:
    """Run one planner on one instance; returns the record, solve time and worst MIP gap."""
    rng = np.random.default_rng(rng_seed) if config.simulate else None
    if planner in ("centralized", "enumeration"):
        spec = config.central_spec if planner == "centralized" else replace(config.central_spec, backend="enumeration")
        outcome = plan_centralized(instance.replace(horizon=instance.deadline), spec)
        if rng is not None:
            record = simulate_plan(instance, outcome.plan, rng)
        else:
            record = execute_plan(instance, outcome.plan)
        record.solve_times = [outcome.wall_time]
        record.gaps = [outcome.mip_gap]
        return record, outcome.wall_time, outcome.mip_gap
    spec = config.distributed_spec
    if planner == "distributed-enumeration":
        spec = replace(spec, backend="enumeration")
    observe = _target_observer(instance, rng) if rng is not None else None
    record = run_receding_horizon(instance, spec, observe=observe, planner=plan_distributed_step)
    gaps = [g for g in record.gaps if not math.isnan(g)]
    return record, sum(record.solve_times), max(gaps) if gaps else math.nan


def _sem(xs: Sequence[float]) -> float:
    return statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0


def _agg(xs: Sequence[float], prefix: str) -> dict[str, float]:
    xs = [x for x in xs if not math.isnan(x)]
    if not xs:
        return {f"{prefix}_mean": math.nan, f"{prefix}_median": math.nan, f"{prefix}_sem": math.nan}
    return {
        f"{prefix}_mean": statistics.fmean(xs),
        f"{prefix}_median": statistics.median(xs),
        f"{prefix}_sem": _sem(xs),
    }


@dataclass
class ExperimentSummary:
    """Per-mission rows and per-planner aggregates.

    ``missions``/``summary`` hold only seed-determined quantities; wall-clock
    solve times and MIP gaps go to ``timings``/``timing_summary``.
    """

    config_id: str
    seed: int
    missions: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    timing_summary: list[dict] = field(default_factory=list)
    failures: int = 0

    def rows_for(self, planner: str) -> list[dict]:
        return [r for r in self.missions if r["planner"] == planner and not r["error"]]

    def write_csvs(self, outdir: Path) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        files = {
            "missions": (outdir / "missions.csv", self.missions),
            "summary": (outdir / "summary.csv", self.summary),
            "timings": (outdir / "timings.csv", self.timings),
            "timing_summary": (outdir / "timing_summary.csv", self.timing_summary),
        }
        for path, rows in files.values():
            path.write_text(to_csv(rows))
        return {k: p for k, (p, _) in files.items()}


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def run_experiment(config: ExperimentConfig) -> ExperimentSummary:
    summary = ExperimentSummary(config.config_id, config.seed)
    for i in range(config.instances):
        try:
            instance = generate_instance(config, i)
        except Exception as exc:  # noqa: BLE001 - recorded, not fatal
            log.error("instance %d: generation failed: %s", i, exc)
            summary.failures += 1
            continue
        for planner in config.planners:
            base = {
                "config_id": config.config_id,
                "seed": config.seed,
                "instance": i,
                "planner": planner,
                "m": instance.m,
                "horizon": instance.deadline if planner in ("centralized", "enumeration") else instance.horizon,
                "deadline": instance.deadline,
                "starts": " ".join(map(str, instance.starts)),
            }
            try:
                record, solve_time, gap = run_mission(instance, planner, config, [config.seed, i, 1])
            except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                log.error("instance %d, planner %s: %s", i, planner, exc)
                summary.failures += 1
                summary.missions.append({**base, "captured": "", "capture_time": "", "mission_time": "",
                                         "reward": math.nan, "fallbacks": "", "paths": "",
                                         "error": type(exc).__name__})
                summary.timings.append({**base, "solve_time": math.nan, "mip_gap": math.nan,
                                        "n_solves": 0, "error": type(exc).__name__})
                continue
            summary.missions.append({
                **base,
                "captured": int(record.captured),
                "capture_time": record.capture_time,
                "mission_time": record.mission_time,
                "reward": record.reward,
                "fallbacks": record.fallbacks,
                "paths": " | ".join(" ".join(map(str, p)) for p in record.paths),
                "error": "",
            })
            summary.timings.append({**base, "solve_time": solve_time, "mip_gap": gap,
                                    "n_solves": len(record.solve_times), "error": ""})
    _aggregate(summary, config)
    return summary


def relative_reward_loss(central: float, distributed: float) -> float:
    return (central - distributed) / central if central > 0 else 0.0


def _aggregate(summary: ExperimentSummary, config: ExperimentConfig) -> None:
    central = {r["instance"]: r["reward"] for r in summary.rows_for("centralized")}
    if not central:
        central = {r["instance"]: r["reward"] for r in summary.rows_for("enumeration")}
    for planner in config.planners:
        rows = summary.rows_for(planner)
        failed = sum(1 for r in summary.missions if r["planner"] == planner and r["error"])
        row = {"config_id": config.config_id, "seed": config.seed, "planner": planner,
               "missions": len(rows), "failures": failed,
               "capture_rate": statistics.fmean(r["captured"] for r in rows) if rows else math.nan}
        row.update(_agg([float(r["mission_time"]) for r in rows], "mission_time"))
        row.update(_agg([r["reward"] for r in rows], "reward"))
        losses = [relative_reward_loss(central[r["instance"]], r["reward"])
                  for r in rows if r["instance"] in central]
        row.update(_agg(losses, "reward_loss"))
        summary.summary.append(row)

        trows = [r for r in summary.timings if r["planner"] == planner and not r["error"]]
        trow = {"config_id": config.config_id, "seed": config.seed, "planner": planner}
        trow.update(_agg([r["solve_time"] for r in trows], "solve_time"))
        trow.update(_agg([r["mip_gap"] for r in trows], "mip_gap"))
        gaps = [r["mip_gap"] for r in trows if not math.isnan(r["mip_gap"])]
        trow["mip_gap_max"] = max(gaps) if gaps else math.nan
        summary.timing_summary.append(trow)


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:12]
