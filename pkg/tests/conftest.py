
import numpy as np
import pytest

from mespp.belief import CaptureConfig, motion_random_walk, motion_static, uniform_belief
from mespp.graph_env import build_grid, build_path
from mespp.instance import Instance
from mespp.solver import SolverSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def _highs_available() -> bool:
    try:
        import highspy  # noqa: F401
    except ImportError:
        return False
    return True


requires_solver = pytest.mark.skipif(not _highs_available(), reason="highspy not installed")


@pytest.fixture
def spec():
    return SolverSpec(timeout=60.0, threads=1)


def make_instance(graph, starts, b0_vertices=None, *, b0=None, horizon=2, deadline=None,
                  gamma=1.0, zeta=0.0, radius=None, motion=None, motion_kind="static"):
    m = len(starts)
    if radius is None:
        cap = CaptureConfig.same_vertex(m, zeta)
    else:
        cap = CaptureConfig.hop_radius(m, radius, zeta)
    if b0 is None:
        b0 = uniform_belief(graph.n, b0_vertices)
    if motion is None:
        motion = motion_static(graph.n)
    return Instance(graph, tuple(starts), cap, motion, np.asarray(b0, dtype=float),
                    deadline if deadline is not None else horizon, horizon, gamma, motion_kind)


@pytest.fixture
def sv_fixture():
    """Path 1-2-3, one searcher at 1, static target uniform on {2, 3}, h=2."""
    return make_instance(build_path(3), [1], [2, 3], horizon=2, gamma=1.0)


@pytest.fixture
def fn_fixture():
    """Path 1-2, one searcher at 1 (zeta=0.3), all mass at vertex 1, h=2."""
    return make_instance(build_path(2), [1], b0=[0, 1, 0], horizon=2, gamma=1.0, zeta=0.3)


def random_instance(rng, *, kind="SV", max_side=4, max_m=2, max_h=4, cap=10**5):
    """Small random instance whose joint-path count stays under ``cap``."""
    from mespp.solver import joint_path_count

    while True:
        rows, cols = int(rng.integers(1, max_side + 1)), int(rng.integers(2, max_side + 1))
        g = build_grid(rows, cols)
        m = int(rng.integers(1, max_m + 1))
        h = int(rng.integers(1, max_h + 1))
        starts = [int(v) for v in rng.integers(1, g.n + 1, size=m)]
        k = int(rng.integers(1, min(5, g.n) + 1))
        support = [int(v) + 1 for v in rng.choice(g.n, size=k, replace=False)]
        if rng.random() < 0.5:
            motion, mk = motion_static(g.n), "static"
        else:
            motion, mk = motion_random_walk(g, float(rng.choice([0.0, 0.3, 0.6]))), "random-walk"
        gamma = float(rng.choice([1.0, 0.99, 0.9]))
        radius = None if kind == "SV" else int(rng.integers(0, 2))
        zeta = 0.0
        if kind == "FN":
            zeta = float(rng.choice([0.0, 0.2, 0.3, 0.5]))
            zetas = [zeta] * m
            if m > 1 and rng.random() < 0.5:
                zetas = [float(z) for z in rng.choice([0.1, 0.3, 0.6], size=m)]
        inst = make_instance(g, starts, support, horizon=h, gamma=gamma, zeta=zeta,
                             radius=radius, motion=motion, motion_kind=mk)
        if kind == "FN" and m > 1:
            cap_cfg = CaptureConfig(tuple(zetas), inst.capture.mode, inst.capture.radius)
            inst = inst.replace(capture=cap_cfg)
        if joint_path_count(inst) <= cap:
            return inst


def scipy_solve(model):
    """Solve a MilpModel in-process with scipy; returns (objective, values) or None."""
    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    names = [v.name for v in model.variables]
    col = {name: i for i, name in enumerate(names)}
    A = lil_matrix((len(model.constraints), len(names)))
    lo = np.empty(len(model.constraints))
    hi = np.empty(len(model.constraints))
    for r, con in enumerate(model.constraints):
        for name, coef in con.terms:
            A[r, col[name]] += coef
        lo[r] = con.rhs if con.sense in ("=", ">=") else -np.inf
        hi[r] = con.rhs if con.sense in ("=", "<=") else np.inf
    c = np.zeros(len(names))
    for name, coef in model.objective:
        c[col[name]] -= coef
    res = milp(
        c,
        constraints=LinearConstraint(A.tocsr(), lo, hi),
        integrality=np.array([v.binary for v in model.variables], dtype=int),
        bounds=Bounds([v.lo for v in model.variables], [v.hi for v in model.variables]),
        options={"mip_rel_gap": 1e-9},
    )
    if res.status != 0:
        return None
    return -res.fun, dict(zip(names, res.x))


def assignment_from_plan(instance, model, plan):
    """Every model variable's value implied by a legal joint plan."""
    from mespp.belief import evaluate_joint_plan

    _, traj = evaluate_joint_plan(instance, plan)
    vals = {v.name: 0.0 for v in model.variables}
    h, n = instance.horizon, instance.n
    for s, path in enumerate(plan, start=1):
        for t, v in enumerate(path):
            vals[f"x_{s}_{t}_{v}"] = 1.0
            nxt = path[t + 1] if t < h else "g"
            vals[f"y_{s}_{t}_{v}_{nxt}"] = 1.0
    M = instance.motion
    for t in range(h + 1):
        vals[f"beta_c_{t}"] = traj[t, 0]
        for v in range(1, n + 1):
            vals[f"beta_{t}_{v}"] = traj[t, v]
        if t == 0:
            continue
        alpha = traj[t - 1, 1:] @ M
        for v in range(1, n + 1):
            vals[f"alpha_{t}_{v}"] = alpha[v - 1]
            covered = [s for s, path in enumerate(plan, start=1)
                       if v in instance.capture.coverage(instance.graph, path[t])]
            if f"psi_{t}_{v}" in vals:
                vals[f"psi_{t}_{v}"] = float(bool(covered))
            prev = alpha[v - 1]
            for s in range(1, instance.m + 1):
                if f"betaS_{s}_{t}_{v}" not in vals:
                    break
                psi = float(s in covered)
                zeta = instance.capture.zetas[s - 1]
                vals[f"psiS_{s}_{t}_{v}"] = psi
                vals[f"delta_{s}_{t}_{v}"] = prev * (1 - psi)
                prev = (1 - zeta) * prev * (1 - psi) + zeta * prev
                vals[f"betaS_{s}_{t}_{v}"] = prev
    return vals


def violations(model, values, tol=1e-9):
    out = []
    for con in model.constraints:
        lhs = sum(coef * values[name] for name, coef in con.terms)
        ok = {"=": abs(lhs - con.rhs) <= tol, "<=": lhs <= con.rhs + tol, ">=": lhs >= con.rhs - tol}[con.sense]
        if not ok:
            out.append((con.name, lhs, con.sense, con.rhs))
    return out
