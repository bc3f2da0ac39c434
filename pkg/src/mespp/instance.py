"""Problem instances: environment, team, target model and mission timing."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .belief import CaptureConfig, check_belief, check_motion
from .graph_env import DistanceMatrix, Graph, ReachableSet, reachable_states


@dataclass(frozen=True, eq=False)
class Instance:
    graph: Graph
    starts: tuple[int, ...]
    capture: CaptureConfig
    motion: np.ndarray
    b0: np.ndarray
    deadline: int
    horizon: int
    gamma: float = 0.99
    motion_kind: str = "custom"

    def __post_init__(self) -> None:
        object.__setattr__(self, "starts", tuple(self.graph.check_vertex(v) for v in self.starts))
        if not self.starts:
            raise ValueError("instance needs at least one searcher")
        if len(self.starts) != self.capture.m:
            raise ValueError(
                f"{len(self.starts)} searcher starts but {self.capture.m} false-negative rates"
            )
        motion = check_motion(self.motion, self.graph if self.motion_kind != "custom" else None)
        b0 = check_belief(self.b0, self.graph.n)
        motion.setflags(write=False)
        b0 = b0.copy()
        b0.setflags(write=False)
        object.__setattr__(self, "motion", motion)
        object.__setattr__(self, "b0", b0)
        if self.deadline < 0:
            raise ValueError(f"deadline must be nonnegative, got {self.deadline}")
        if self.horizon < 1:
            raise ValueError(f"planning horizon must be at least 1, got {self.horizon}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.gamma}")

    @property
    def m(self) -> int:
        return len(self.starts)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def distances(self) -> DistanceMatrix:
        return self.graph.distances

    @cached_property
    def reachable(self) -> tuple[ReachableSet, ...]:
        return tuple(reachable_states(self.graph, v, self.horizon) for v in self.starts)

    def replace(self, **changes) -> "Instance":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        """Stable content hash used to tag models and artifacts."""
        h = hashlib.sha256()
        h.update(self.graph.to_text().encode())
        h.update(repr((self.starts, self.capture, self.deadline, self.horizon, self.gamma)).encode())
        h.update(np.ascontiguousarray(self.motion).tobytes())
        h.update(np.ascontiguousarray(self.b0).tobytes())
        return h.hexdigest()[:16]
