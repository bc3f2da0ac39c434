"""Centralized (offline) planning and distributed implicit coordination with
receding-horizon replanning."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .belief import evaluate_joint_plan, update_belief
from .instance import Instance
from .milp import build_model, fix_searcher_path, model_kind
from .solver import (
    ERROR,
    SolveResult,
    SolverSpec,
    decode_paths,
    solve_enumeration,
    solve_external,
)

log = logging.getLogger(__name__)

CAPTURE_TOL = 1e-9


class SolverError(RuntimeError):
    def __init__(self, result: SolveResult):
        super().__init__(f"solver {result.solver or '?'} returned {result.status}: {result.message}")
        self.result = result


@dataclass
class SolveStat:
    searcher: int | None
    status: str
    wall_time: float
    mip_gap: float
    objective: float
    fallback: bool = False


@dataclass
class PlanningOutcome:
    plan: tuple[tuple[int, ...], ...]
    objective: float
    kind: str
    stats: list[SolveStat] = field(default_factory=list)
    fallback: tuple[bool, ...] = ()

    @property
    def wall_time(self) -> float:
        return sum(s.wall_time for s in self.stats)

    @property
    def mip_gap(self) -> float:
        gaps = [s.mip_gap for s in self.stats if not math.isnan(s.mip_gap)]
        return max(gaps) if gaps else math.nan


@dataclass
class MissionRecord:
    """One executed mission.

    ``capture_time`` is ``deadline + 1`` when the target was not captured.
    ``reward`` is the oracle reward of the executed paths, padded with
    stay-put moves up to the deadline.
    """

    paths: tuple[tuple[int, ...], ...]
    beliefs: np.ndarray
    captured: bool
    capture_time: int
    mission_time: int
    reward: float
    solve_times: list[float] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    fallbacks: int = 0
    seed: int | None = None


def _solve(instance: Instance, spec: SolverSpec, fixed: dict[int, tuple[int, ...]]) -> tuple[SolveResult, object]:
    if spec.backend == "enumeration":
        return solve_enumeration(instance, cap=spec.enum_cap, fixed=fixed), None
    model = build_model(instance)
    for j, path in fixed.items():
        model = fix_searcher_path(model, j, path)
    return solve_external(model, spec), model


def plan_centralized(instance: Instance, spec: SolverSpec) -> PlanningOutcome:
    """Plan all searchers jointly over the instance's horizon."""
    result, model = _solve(instance, spec, {})
    if not result.has_incumbent:
        raise SolverError(result)
    plan = decode_paths(model, result) if model is not None else result.plan
    stat = SolveStat(None, result.status, result.wall_time, result.mip_gap, result.objective)
    return PlanningOutcome(plan, result.objective, model_kind(instance), [stat], (False,) * instance.m)


def plan_distributed_step(instance: Instance, positions: Sequence[int], spec: SolverSpec) -> PlanningOutcome:
    """One sweep of implicit coordination from ``positions``.

    Searcher ``i`` is optimized with the searchers before it fixed to their
    fresh paths and the ones after it assumed to stay put. A failed solve
    leaves searcher ``i`` in place.
    """
    positions = tuple(int(p) for p in positions)
    inst = instance.replace(starts=positions)
    h = inst.horizon
    planned = {j: (p,) * (h + 1) for j, p in enumerate(positions, start=1)}
    stats, fallback = [], []
    objective = math.nan
    for i in range(1, inst.m + 1):
        fixed = {j: path for j, path in planned.items() if j != i}
        try:
            result, model = _solve(inst, spec, fixed)
        except Exception as exc:  # noqa: BLE001 - any failure falls back to stay-put
            result, model = SolveResult(ERROR, message=str(exc)), None
        failed = not result.has_incumbent
        if not failed:
            try:
                planned[i] = (decode_paths(model, result) if model is not None else result.plan)[i - 1]
            except ValueError as exc:
                log.warning("searcher %d: %s", i, exc)
                failed = True
        if failed:
            log.warning("searcher %d: %s (%s); holding position", i, result.status, result.message)
            objective, _ = evaluate_joint_plan(inst, [planned[j] for j in sorted(planned)])
        else:
            objective = result.objective
        stats.append(SolveStat(i, result.status, result.wall_time, result.mip_gap, objective, failed))
        fallback.append(failed)
    plan = tuple(planned[j] for j in range(1, inst.m + 1))
    return PlanningOutcome(plan, objective, model_kind(inst), stats, tuple(fallback))


def pad_paths(paths: Sequence[Sequence[int]], length: int) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(p) + (p[-1],) * (length - len(p)) for p in paths)


def run_receding_horizon(
    instance: Instance,
    spec: SolverSpec,
    observe: Callable[[int, tuple[int, ...]], bool] | None = None,
    planner: Callable[[Instance, Sequence[int], SolverSpec], PlanningOutcome] = plan_distributed_step,
) -> MissionRecord:
    """Replan every step, execute the first move, update the belief.

    Without ``observe`` the mission ends once the capture mass is within
    ``CAPTURE_TOL`` of one. With ``observe(t, positions)`` (simulation mode)
    it ends when the callback reports a detection.
    """
    tau = instance.deadline
    positions = instance.starts
    belief = np.array(instance.b0, dtype=float)
    executed = [[p] for p in positions]
    beliefs = [belief]
    times, gaps = [], []
    fallbacks = 0
    captured, capture_time = False, tau + 1
    for t in range(tau):
        h = min(instance.horizon, tau - t)
        step = instance.replace(starts=positions, b0=belief, horizon=h)
        outcome = planner(step, positions, spec)
        times.append(outcome.wall_time)
        gaps.append(outcome.mip_gap)
        fallbacks += sum(outcome.fallback)
        positions = tuple(path[1] for path in outcome.plan)
        for path, p in zip(executed, positions):
            path.append(p)
        belief = update_belief(belief, instance.motion, positions, instance.capture, instance.graph)
        beliefs.append(belief)
        if observe is not None:
            if observe(t + 1, positions):
                captured, capture_time = True, t + 1
                break
        elif belief[0] > 1.0 - CAPTURE_TOL:
            captured, capture_time = True, t + 1
            break
    mission_time = len(beliefs) - 1
    padded = pad_paths(executed, tau + 1)
    reward, _ = evaluate_joint_plan(instance, padded)
    return MissionRecord(
        paths=tuple(tuple(p) for p in executed),
        beliefs=np.array(beliefs),
        captured=captured,
        capture_time=capture_time,
        mission_time=mission_time,
        reward=reward,
        solve_times=times,
        gaps=gaps,
        fallbacks=fallbacks,
    )
