"""Target motion, capture matrices and the exact belief recursion.

The belief is a dense vector ``[b_c, b_1, ..., b_n]``: entry 0 is the
probability that the target has been captured, entry ``v`` the probability
that it is still free at vertex ``v``. One step applies the target motion to
the free part and then each searcher's capture operator in team order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph_env import Graph, neighbors_closed

NORM_TOL = 1e-9
CLAMP_TOL = 1e-12


class IllegalPlanError(ValueError):
    def __init__(self, s: int, t: int, msg: str):
        super().__init__(f"searcher {s}, step {t}: {msg}")
        self.searcher = s
        self.step = t


@dataclass(frozen=True)
class CaptureConfig:
    """Sensing model shared by the team.

    ``mode`` is ``"same-vertex"`` or ``"radius"``; ``zetas[s-1]`` is the
    false-negative rate of searcher ``s``.
    """

    zetas: tuple[float, ...]
    mode: str = "same-vertex"
    radius: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("same-vertex", "radius"):
            raise ValueError(f"unknown capture mode {self.mode!r}")
        if self.radius < 0:
            raise ValueError(f"capture radius must be nonnegative, got {self.radius}")
        if self.mode == "same-vertex" and self.radius != 0:
            raise ValueError("same-vertex capture has no radius")
        for z in self.zetas:
            if not 0.0 <= z < 1.0:
                raise ValueError(f"false-negative rate must lie in [0, 1), got {z}")
        object.__setattr__(self, "zetas", tuple(float(z) for z in self.zetas))

    @classmethod
    def same_vertex(cls, m: int, zeta: float = 0.0) -> "CaptureConfig":
        return cls((zeta,) * m)

    @classmethod
    def hop_radius(cls, m: int, radius: int, zeta: float = 0.0) -> "CaptureConfig":
        return cls((zeta,) * m, "radius", radius)

    @property
    def m(self) -> int:
        return len(self.zetas)

    @property
    def effective_radius(self) -> int:
        return self.radius if self.mode == "radius" else 0

    @property
    def perfect(self) -> bool:
        return all(z == 0.0 for z in self.zetas)

    def coverage(self, g: Graph, u: int) -> tuple[int, ...]:
        """Vertices a searcher at ``u`` can detect the target in, sorted."""
        u = g.check_vertex(u)
        if self.mode == "same-vertex":
            return (u,)
        row = g.distances.matrix[u - 1]
        return tuple(int(v) + 1 for v in np.flatnonzero(row <= self.radius))


# -- motion kernels ---------------------------------------------------------

def motion_static(n: int) -> np.ndarray:
    return np.eye(n)


def motion_random_walk(g: Graph, stay_prob: float) -> np.ndarray:
    """Lazy random walk: stay with ``stay_prob``, else move to a uniform neighbor."""
    if not 0.0 <= stay_prob <= 1.0:
        raise ValueError(f"stay_prob must lie in [0, 1], got {stay_prob}")
    M = np.zeros((g.n, g.n))
    for u in g.vertices():
        nbrs = g.adjacency[u]
        if not nbrs:
            M[u - 1, u - 1] = 1.0
            continue
        M[u - 1, u - 1] = stay_prob
        for v in nbrs:
            M[u - 1, v - 1] = (1.0 - stay_prob) / len(nbrs)
    return M


def check_motion(M: np.ndarray, g: Graph | None = None) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"motion matrix must be square, got shape {M.shape}")
    if (M < 0).any() or (M > 1).any():
        raise ValueError("motion matrix entries must lie in [0, 1]")
    bad = np.flatnonzero(np.abs(M.sum(axis=1) - 1.0) > NORM_TOL)
    if bad.size:
        raise ValueError(f"motion matrix row {bad[0] + 1} does not sum to 1")
    if g is not None:
        if M.shape[0] != g.n:
            raise ValueError(f"motion matrix is {M.shape[0]}x{M.shape[0]}, graph has n={g.n}")
        for u in g.vertices():
            allowed = neighbors_closed(g, u)
            for v in np.flatnonzero(M[u - 1] > 0):
                if int(v) + 1 not in allowed:
                    raise ValueError(f"motion matrix moves the target {u}->{v + 1}, not an edge")
    return M


def check_belief(b: np.ndarray, n: int | None = None) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or (n is not None and b.shape[0] != n + 1):
        raise ValueError(f"belief must be a vector of length n+1, got shape {b.shape}")
    if (b < -NORM_TOL).any() or (b > 1 + NORM_TOL).any():
        raise ValueError("belief entries must lie in [0, 1]")
    if abs(b.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"belief sums to {b.sum()!r}, expected 1")
    return b


def uniform_belief(n: int, vertices: Sequence[int]) -> np.ndarray:
    """Zero capture mass, target uniform over ``vertices``."""
    b = np.zeros(n + 1)
    vs = sorted(set(vertices))
    b[vs] = 1.0 / len(vs)
    return b


# -- capture ----------------------------------------------------------------

def capture_matrix(g: Graph, config: CaptureConfig, s: int, u: int) -> np.ndarray:
    """The ``(n+1) x (n+1)`` capture operator of searcher ``s`` (1-based) at ``u``."""
    zeta = config.zetas[s - 1]
    C = np.eye(g.n + 1)
    for v in config.coverage(g, u):
        C[v, v] = zeta
        C[v, 0] = 1.0 - zeta
    return C


def _hygiene(b: np.ndarray) -> np.ndarray:
    b[np.abs(b) < CLAMP_TOL] = 0.0
    b[np.abs(b - 1.0) < CLAMP_TOL] = 1.0
    return b / b.sum()


def update_belief(
    b: np.ndarray,
    M: np.ndarray,
    positions: Sequence[int],
    config: CaptureConfig,
    g: Graph,
) -> np.ndarray:
    """One step of the belief recursion with searchers at ``positions``.

    Equivalent to ``b @ blockdiag(1, M) @ C^{1,p1} @ ... @ C^{m,pm}`` but
    applies each capture operator in place: only covered columns change.
    """
    out = np.empty_like(b, dtype=float)
    out[0] = b[0]
    out[1:] = b[1:] @ M
    for s, u in enumerate(positions):
        zeta = config.zetas[s]
        cov = list(config.coverage(g, u))
        out[0] += (1.0 - zeta) * out[cov].sum()
        out[cov] *= zeta
    return _hygiene(out)


def discounted_reward(capture_trajectory: Sequence[float], gamma: float) -> float:
    """Sum over t of ``gamma**t * b_c(t)``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount must lie in (0, 1], got {gamma}")
    traj = np.asarray(capture_trajectory, dtype=float)
    return float(np.dot(gamma ** np.arange(traj.size), traj))


# -- plans ------------------------------------------------------------------

def check_plan(g: Graph, plan: Sequence[Sequence[int]], starts: Sequence[int] | None = None) -> tuple[tuple[int, ...], ...]:
    """Validate a joint plan: equal lengths, legal starts, closed-neighborhood moves."""
    plan = tuple(tuple(int(v) for v in path) for path in plan)
    if not plan:
        raise ValueError("joint plan has no searchers")
    length = len(plan[0])
    for s, path in enumerate(plan, start=1):
        if len(path) != length:
            raise IllegalPlanError(s, 0, f"path has {len(path)} vertices, expected {length}")
        if starts is not None and path[0] != starts[s - 1]:
            raise IllegalPlanError(s, 0, f"path starts at {path[0]}, searcher starts at {starts[s - 1]}")
        for t, v in enumerate(path):
            if not 1 <= v <= g.n:
                raise IllegalPlanError(s, t, f"vertex {v} outside 1..{g.n}")
            if t and v not in neighbors_closed(g, path[t - 1]):
                raise IllegalPlanError(s, t, f"move {path[t - 1]}->{v} is not along an edge")
    return plan


def belief_trajectory(instance, plan: Sequence[Sequence[int]]) -> np.ndarray:
    """Beliefs ``b(0..T)`` along a joint plan, one row per step."""
    plan = check_plan(instance.graph, plan, instance.starts)
    steps = len(plan[0]) - 1
    traj = np.empty((steps + 1, instance.graph.n + 1))
    traj[0] = instance.b0
    for t in range(1, steps + 1):
        traj[t] = update_belief(
            traj[t - 1], instance.motion, [p[t] for p in plan], instance.capture, instance.graph
        )
    return traj


def evaluate_joint_plan(instance, plan: Sequence[Sequence[int]]) -> tuple[float, np.ndarray]:
    """Discounted capture reward and belief trajectory of a joint plan.

    This is the reference evaluator every solver result is checked against.
    """
    traj = belief_trajectory(instance, plan)
    return discounted_reward(traj[:, 0], instance.gamma), traj


# -- file formats -----------------------------------------------------------

def _numeric_lines(text: str) -> list[tuple[int, list[float]]]:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append((lineno, [float(tok) for tok in line.split()]))
        except ValueError:
            raise ValueError(f"line {lineno}: expected decimal numbers, got {line!r}") from None
    return rows


def load_motion(text: str) -> np.ndarray:
    """Parse a motion-matrix file: ``n=<int>`` header, then ``n`` dense rows."""
    lines = [ln for ln in text.splitlines() if ln.split("#", 1)[0].strip()]
    if not lines or not lines[0].strip().startswith("n="):
        raise ValueError("motion file must start with an 'n=<int>' header")
    n = int(lines[0].strip()[2:])
    rows = _numeric_lines("\n".join(lines[1:]))
    if len(rows) != n or any(len(r) != n for _, r in rows):
        raise ValueError(f"motion file must hold {n} rows of {n} numbers")
    return check_motion(np.array([r for _, r in rows]))


def load_belief(text: str) -> np.ndarray:
    """Parse an initial-belief file: ``n+1`` numbers, capture mass first."""
    values = [x for _, row in _numeric_lines(text) for x in row]
    return check_belief(np.array(values))


def format_matrix(M: np.ndarray) -> str:
    lines = [f"n={M.shape[0]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in M]
    return "\n".join(lines) + "\n"
