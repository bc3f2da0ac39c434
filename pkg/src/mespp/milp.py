"""Solver-agnostic MILP models for multi-searcher target search.

Three model kinds share the path-legality and target-motion blocks and
differ in how capture events are linked to the searchers' positions:

* ``SV``     same-vertex capture, perfect detection
* ``MV``     arbitrary capture range, perfect detection
* ``FN-MV``  arbitrary capture range with per-searcher false negatives

Variable names are stable and double as the LP-file identifiers::

    x_<s>_<t>_<v>        searcher s at v at time t                 (binary)
    y_<s>_<t>_<u>_<v>    searcher s moves u->v between t and t+1    (binary)
    y_<s>_<h>_<u>_g      terminal arc into the dummy goal           (binary)
    alpha_<t>_<v>        belief after target motion                 [0, 1]
    beta_<t>_<v>         belief after capture                       [0, 1]
    beta_c_<t>           capture mass                               [0, 1]
    psi_<t>_<v>          some searcher covers v at t                (binary)
    betaS_<s>_<t>_<v>    belief after searcher s's capture (FN)     [0, 1]
    psiS_<s>_<t>_<v>     searcher s covers v at t (FN)              (binary)
    delta_<s>_<t>_<v>    betaS_<s-1> * (1 - psiS_<s>) (FN)          [0, 1]
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

from .instance import Instance

SV, MV, FN = "SV", "MV", "FN-MV"


class WrongModelError(ValueError):
    pass


class InfeasibleFixingError(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    name: str
    family: str
    indices: tuple
    binary: bool
    lo: float = 0.0
    hi: float = 1.0


@dataclass(frozen=True)
class Constraint:
    """``sum(coef * var) <sense> rhs`` with ``sense`` in ``=``, ``<=``, ``>=``.

    ``group`` names the model block the row belongs to (``start``,
    ``flow_in``, ``capture_link_ub`` ...).
    """

    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str
    rhs: float
    group: str = ""


@dataclass(frozen=True)
class MilpModel:
    kind: str
    variables: tuple[Var, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[str, float], ...]
    horizon: int
    m: int
    digest: str
    sense: str = "maximize"
    x_index: tuple[tuple[tuple[int, int], tuple[int, ...]], ...] = ()

    @cached_property
    def var_map(self) -> dict[str, Var]:
        return {v.name: v for v in self.variables}

    @cached_property
    def positions(self) -> dict[tuple[int, int], tuple[int, ...]]:
        """``(s, t) -> vertices`` carrying an ``x`` variable."""
        return dict(self.x_index)

    def count(self, family: str) -> int:
        return sum(1 for v in self.variables if v.family == family)

    def constraints_in(self, group: str) -> list[Constraint]:
        return [c for c in self.constraints if c.group == group]

    def objective_value(self, values: dict[str, float]) -> float:
        return sum(c * values.get(name, 0.0) for name, c in self.objective)

    def validate(self) -> None:
        names = set(self.var_map)
        if len(names) != len(self.variables):
            raise ValueError("duplicate variable names")
        seen = set()
        for con in self.constraints:
            if con.name in seen:
                raise ValueError(f"duplicate constraint name {con.name}")
            seen.add(con.name)
            for name, _ in con.terms:
                if name not in names:
                    raise ValueError(f"constraint {con.name} uses undeclared variable {name}")
        for name, _ in self.objective:
            if name not in names:
                raise ValueError(f"objective uses undeclared variable {name}")


def x_name(s: int, t: int, v: int) -> str:
    return f"x_{s}_{t}_{v}"


def y_name(s: int, t: int, u: int, v) -> str:
    return f"y_{s}_{t}_{u}_{v}"


def beta_name(t: int, v) -> str:
    return f"beta_c_{t}" if v == "c" else f"beta_{t}_{v}"


@dataclass
class _Builder:
    instance: Instance
    kind: str
    variables: list[Var] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: list[tuple[str, float]] = field(default_factory=list)
    x_index: dict[tuple[int, int], tuple[int, ...]] = field(default_factory=dict)

    def var(self, family: str, indices: tuple, name: str, binary: bool = False) -> str:
        self.variables.append(Var(name, family, indices, binary))
        return name

    def con(self, name: str, terms: Iterable[tuple[str, float]], sense: str, rhs: float, group: str) -> None:
        terms = tuple((v, float(c)) for v, c in terms if c != 0)
        self.constraints.append(Constraint(name, terms, sense, float(rhs), group))

    def freeze(self) -> MilpModel:
        return MilpModel(
            kind=self.kind,
            variables=tuple(self.variables),
            constraints=tuple(self.constraints),
            objective=tuple(self.objective),
            horizon=self.instance.horizon,
            m=self.instance.m,
            digest=self.instance.digest(),
            x_index=tuple(sorted(self.x_index.items())),
        )


def _add_paths(b: _Builder) -> None:
    inst = b.instance
    h, g = inst.horizon, inst.graph
    closed = [()] + [tuple(sorted(set(g.adjacency[v]) | {v})) for v in g.vertices()]
    for s, reach in enumerate(inst.reachable, start=1):
        for t in range(h + 1):
            b.x_index[(s, t)] = reach.at(t)
            for v in reach.at(t):
                b.var("x", (s, t, v), x_name(s, t, v), binary=True)
        for t in range(h):
            for u in reach.at(t):
                for v in closed[u]:
                    b.var("y", (s, t, u, v), y_name(s, t, u, v), binary=True)
        for u in reach.at(h):
            b.var("y", (s, h, u, "g"), y_name(s, h, u, "g"), binary=True)

        vo = reach.start
        b.con(f"start_{s}", [(x_name(s, 0, vo), 1)], "=", 1, "start")
        b.con(f"leave_{s}", [(y_name(s, 0, vo, j), 1) for j in closed[vo]], "=", 1, "start")
        b.con(f"goal_{s}", [(y_name(s, h, j, "g"), 1) for j in reach.at(h)], "=", 1, "start")
        for t in range(1, h + 1):
            prev = set(reach.at(t - 1))
            for v in reach.at(t):
                inflow = [(y_name(s, t - 1, j, v), -1) for j in closed[v] if j in prev]
                b.con(f"in_{s}_{t}_{v}", [(x_name(s, t, v), 1)] + inflow, "=", 0, "flow_in")
                if t < h:
                    outflow = [(y_name(s, t, v, i), -1) for i in closed[v]]
                    b.con(f"out_{s}_{t}_{v}", [(x_name(s, t, v), 1)] + outflow, "=", 0, "flow_out")
                else:
                    b.con(f"end_{s}_{t}_{v}", [(x_name(s, t, v), 1), (y_name(s, t, v, "g"), -1)], "=", 0, "flow_out")


def _add_motion(b: _Builder) -> None:
    inst = b.instance
    n, h, M = inst.n, inst.horizon, inst.motion
    for t in range(h + 1):
        b.var("beta", (t, "c"), beta_name(t, "c"))
        for v in range(1, n + 1):
            b.var("beta", (t, v), beta_name(t, v))
    for t in range(1, h + 1):
        for v in range(1, n + 1):
            b.var("alpha", (t, v), f"alpha_{t}_{v}")
    b.con("init_c", [(beta_name(0, "c"), 1)], "=", inst.b0[0], "init_belief")
    for v in range(1, n + 1):
        b.con(f"init_{v}", [(beta_name(0, v), 1)], "=", inst.b0[v], "init_belief")
    for t in range(1, h + 1):
        for v in range(1, n + 1):
            terms = [(f"alpha_{t}_{v}", 1.0)]
            terms += [(beta_name(t - 1, u), -M[u - 1, v - 1]) for u in range(1, n + 1)]
            b.con(f"motion_{t}_{v}", terms, "=", 0, "motion")


def _coverage_links(inst: Instance) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """``(t, v) -> [(s, u), ...]``: positions from which searcher s covers v at t."""
    links: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for s, reach in enumerate(inst.reachable, start=1):
        for t in range(1, inst.horizon + 1):
            for u in reach.at(t):
                for v in inst.capture.coverage(inst.graph, u):
                    links[(t, v)].append((s, u))
    for key in links:
        links[key].sort()
    return links


def _add_perfect_capture(b: _Builder) -> None:
    inst = b.instance
    m = inst.m
    links = _coverage_links(inst)
    for t in range(1, inst.horizon + 1):
        for v in inst.graph.vertices():
            beta, alpha = beta_name(t, v), f"alpha_{t}_{v}"
            link = links.get((t, v))
            if not link:
                b.con(f"free_{t}_{v}", [(beta, 1), (alpha, -1)], "=", 0, "uncovered")
                continue
            psi = b.var("psi", (t, v), f"psi_{t}_{v}", binary=True)
            b.con(f"bel_ub1_{t}_{v}", [(beta, 1), (psi, 1)], "<=", 1, "belief_lin")
            b.con(f"bel_ub2_{t}_{v}", [(beta, 1), (alpha, -1)], "<=", 0, "belief_lin")
            b.con(f"bel_lb_{t}_{v}", [(beta, 1), (alpha, -1), (psi, 1)], ">=", 0, "belief_lin")
            xs = [(x_name(s, t, u), 1) for s, u in link]
            b.con(f"cap_ub_{t}_{v}", xs + [(psi, -m)], "<=", 0, "capture_link_ub")
            b.con(f"cap_lb_{t}_{v}", [(psi, 1)] + [(x, -1) for x, _ in xs], "<=", 0, "capture_link_lb")


def _add_fn_capture(b: _Builder) -> None:
    inst = b.instance
    links = _coverage_links(inst)
    for t in range(1, inst.horizon + 1):
        for v in inst.graph.vertices():
            by_searcher: dict[int, list[int]] = defaultdict(list)
            for s, u in links.get((t, v), ()):
                by_searcher[s].append(u)
            prev = f"alpha_{t}_{v}"
            for s in range(1, inst.m + 1):
                zeta = inst.capture.zetas[s - 1]
                bs = b.var("betaS", (s, t, v), f"betaS_{s}_{t}_{v}")
                psi = b.var("psiS", (s, t, v), f"psiS_{s}_{t}_{v}", binary=True)
                dl = b.var("delta", (s, t, v), f"delta_{s}_{t}_{v}")
                b.con(f"fn_d_ub1_{s}_{t}_{v}", [(dl, 1), (psi, 1)], "<=", 1, "fn_lin")
                b.con(f"fn_d_ub2_{s}_{t}_{v}", [(dl, 1), (prev, -1)], "<=", 0, "fn_lin")
                b.con(f"fn_d_lb_{s}_{t}_{v}", [(dl, 1), (prev, -1), (psi, 1)], ">=", 0, "fn_lin")
                b.con(
                    f"fn_bel_{s}_{t}_{v}",
                    [(bs, 1), (dl, -(1.0 - zeta)), (prev, -zeta)],
                    "=", 0, "fn_belief",
                )
                xs = [x_name(s, t, u) for u in by_searcher.get(s, ())]
                if xs:
                    b.con(f"fn_cap_ub_{s}_{t}_{v}", [(x, 1) for x in xs] + [(psi, -1)], "<=", 0, "capture_link_ub")
                b.con(f"fn_cap_lb_{s}_{t}_{v}", [(psi, 1)] + [(x, -1) for x in xs], "<=", 0, "capture_link_lb")
                prev = bs
            b.con(f"fn_final_{t}_{v}", [(beta_name(t, v), 1), (prev, -1)], "=", 0, "fn_final")


def _add_capture_mass_and_objective(b: _Builder) -> None:
    inst = b.instance
    for t in range(1, inst.horizon + 1):
        terms = [(beta_name(t, "c"), 1)] + [(beta_name(t, v), 1) for v in inst.graph.vertices()]
        b.con(f"capmass_{t}", terms, "=", 1, "capture_mass")
    b.objective = [(beta_name(t, "c"), inst.gamma ** t) for t in range(inst.horizon + 1)]


def build_path_constraints(instance: Instance) -> MilpModel:
    """Only the path-legality block (``x``/``y`` variables and flow rows)."""
    b = _Builder(instance, "paths")
    _add_paths(b)
    return b.freeze()


def build_motion_constraints(instance: Instance) -> MilpModel:
    """Only the initial-belief and target-motion block."""
    b = _Builder(instance, "motion")
    _add_motion(b)
    return b.freeze()


def build_sv_model(instance: Instance) -> MilpModel:
    cap = instance.capture
    if cap.mode != "same-vertex":
        raise WrongModelError("same-vertex model needs same-vertex capture; use build_mv_model for a capture radius")
    if not cap.perfect:
        raise WrongModelError("same-vertex model assumes perfect detection; use build_fn_model for false negatives")
    return _build(instance, SV)


def build_mv_model(instance: Instance) -> MilpModel:
    if not instance.capture.perfect:
        raise WrongModelError("range model assumes perfect detection; use build_fn_model for false negatives")
    return _build(instance, MV)


def build_fn_model(instance: Instance) -> MilpModel:
    return _build(instance, FN)


def model_kind(instance: Instance) -> str:
    cap = instance.capture
    if not cap.perfect:
        return FN
    return SV if cap.mode == "same-vertex" else MV


def build_model(instance: Instance, kind: str | None = None) -> MilpModel:
    kind = kind or model_kind(instance)
    builders = {SV: build_sv_model, MV: build_mv_model, FN: build_fn_model}
    if kind not in builders:
        raise WrongModelError(f"unknown model kind {kind!r}")
    return builders[kind](instance)


def _build(instance: Instance, kind: str) -> MilpModel:
    b = _Builder(instance, kind)
    _add_paths(b)
    _add_motion(b)
    if kind == FN:
        _add_fn_capture(b)
    else:
        _add_perfect_capture(b)
    _add_capture_mass_and_objective(b)
    return b.freeze()


def fix_searcher_path(model: MilpModel, s: int, path: Sequence[int]) -> MilpModel:
    """Pin searcher ``s``'s position variables to ``path`` with equality rows."""
    if len(path) != model.horizon + 1:
        raise InfeasibleFixingError(
            f"path for searcher {s} has {len(path)} vertices, model horizon needs {model.horizon + 1}"
        )
    names = model.var_map
    rows = []
    for t, v in enumerate(path):
        options = model.positions.get((s, t))
        if options is None:
            raise InfeasibleFixingError(f"model has no searcher {s}")
        if v not in options:
            raise InfeasibleFixingError(f"searcher {s} cannot be at vertex {v} at time {t}")
        if t and y_name(s, t - 1, path[t - 1], v) not in names:
            raise InfeasibleFixingError(f"searcher {s} cannot move {path[t - 1]}->{v} at time {t - 1}")
        for u in options:
            rows.append(Constraint(f"fix_{s}_{t}_{u}", ((x_name(s, t, u), 1.0),), "=", float(u == v), "fix"))
    return MilpModel(
        kind=model.kind,
        variables=model.variables,
        constraints=model.constraints + tuple(rows),
        objective=model.objective,
        horizon=model.horizon,
        m=model.m,
        digest=model.digest,
        sense=model.sense,
        x_index=model.x_index,
    )
