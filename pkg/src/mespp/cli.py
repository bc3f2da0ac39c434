"""Command-line front end.

    mespp plan       --config run.ini [--planner centralized|distributed|enumeration]
    mespp export-lp  --config run.ini
    mespp benchmark  --config run.ini

Config files are INI text; see ``RunConfig`` for the keys.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .belief import (
    CaptureConfig,
    evaluate_joint_plan,
    load_belief,
    load_motion,
    motion_random_walk,
    motion_static,
    uniform_belief,
)
from .graph_env import Graph, build_grid, load_graph
from .instance import Instance
from .lpformat import write_lp
from .milp import build_model, model_kind
from .planner import plan_centralized, run_receding_horizon
from .simulator import PLANNERS, ExperimentConfig, run_experiment
from .solver import SOLVER_CMD_ENV, SolverSpec

log = logging.getLogger("mespp")

DEFAULT_GAMMA = 0.99
CENTRAL_TIMEOUT = 1800.0
DISTRIBUTED_TIMEOUT = 10.0
DEFAULT_THREADS = 8

# (section, key, attribute) in serialization order
_LAYOUT = [
    ("environment", "grid", "grid"),
    ("environment", "graph", "graph_file"),
    ("searchers", "starts", "starts"),
    ("searchers", "zeta", "zetas"),
    ("capture", "mode", "capture_mode"),
    ("capture", "radius", "radius"),
    ("motion", "kind", "motion"),
    ("motion", "stay_prob", "stay_prob"),
    ("motion", "file", "motion_file"),
    ("belief", "vertices", "belief_vertices"),
    ("belief", "file", "belief_file"),
    ("mission", "deadline", "deadline"),
    ("mission", "horizon", "horizon"),
    ("mission", "gamma", "gamma"),
    ("planner", "name", "planner"),
    ("solver", "command", "solver_cmd"),
    ("solver", "timeout", "timeout"),
    ("solver", "threads", "threads"),
    ("solver", "gap", "gap"),
    ("solver", "presolve", "presolve"),
    ("solver", "enum_cap", "enum_cap"),
    ("run", "seed", "seed"),
    ("run", "out", "out"),
    ("experiment", "instances", "instances"),
    ("experiment", "searchers", "searchers"),
    ("experiment", "scenario", "scenario"),
    ("experiment", "belief_count", "belief_count"),
    ("experiment", "planners", "planners"),
    ("experiment", "simulate", "simulate"),
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    grid: tuple[int, int] | None = None
    graph_file: str | None = None
    starts: tuple[int, ...] = ()
    zetas: tuple[float, ...] = ()
    capture_mode: str = "same-vertex"
    radius: int = 0
    motion: str = "static"
    stay_prob: float = 0.5
    motion_file: str | None = None
    belief_vertices: tuple[int, ...] = ()
    belief_file: str | None = None
    deadline: int = 10
    horizon: int | None = None
    gamma: float = DEFAULT_GAMMA
    planner: str = "centralized"
    solver_cmd: str | None = None
    timeout: float | None = None
    threads: int = DEFAULT_THREADS
    gap: float = 1e-9
    presolve: bool = True
    enum_cap: int = 10**7
    seed: int = 0
    out: str = "out"
    instances: int = 1
    searchers: int | None = None
    scenario: str = "uniform"
    belief_count: tuple[int, int] = (5, 5)
    planners: tuple[str, ...] = ("centralized", "distributed")
    simulate: bool = False
    base_dir: str = field(default=".", compare=False)

    # -- (de)serialization --------------------------------------------------

    @classmethod
    def from_text(cls, text: str, base_dir: str = ".") -> "RunConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        known = {(sec, key) for sec, key, _ in _LAYOUT}
        for sec in cp.sections():
            for key in cp[sec]:
                if (sec, key) not in known:
                    raise ConfigError(f"unknown config key [{sec}] {key}")
        kwargs = {}
        types = {f.name: f for f in fields(cls)}
        for sec, key, attr in _LAYOUT:
            if cp.has_option(sec, key):
                kwargs[attr] = _parse_value(attr, cp.get(sec, key), types[attr].default)
        return cls(**kwargs, base_dir=base_dir)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        return cls.from_text(path.read_text(), base_dir=str(path.parent))

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        default = RunConfig()
        for sec, key, attr in _LAYOUT:
            value = getattr(self, attr)
            if value is None or (value == getattr(default, attr) and attr not in ("deadline", "planner", "seed")):
                continue
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, key, _format_value(attr, value))
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)

    def digest(self) -> str:
        # where artifacts go is not part of the experiment
        text = replace(self, out=RunConfig.out).to_text()
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    # -- building domain objects -------------------------------------------

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def _read(self, name: str, what: str) -> str:
        path = self.resolve(name)
        if not path.exists():
            raise ConfigError(f"{what} file not found: {path}")
        return path.read_text()

    def build_graph(self) -> Graph:
        if self.grid and self.graph_file:
            raise ConfigError("set either [environment] grid or graph, not both")
        if self.grid:
            return build_grid(*self.grid)
        if self.graph_file:
            return load_graph(self._read(self.graph_file, "graph"))
        raise ConfigError("config needs [environment] grid or graph")

    def m(self) -> int:
        if self.starts:
            return len(self.starts)
        if self.searchers:
            return self.searchers
        raise ConfigError("config needs [searchers] starts or [experiment] searchers")

    def zeta_list(self) -> tuple[float, ...]:
        m = self.m()
        if not self.zetas:
            return (0.0,) * m
        if len(self.zetas) == 1:
            return self.zetas * m
        if len(self.zetas) != m:
            raise ConfigError(f"{len(self.zetas)} false-negative rates for {m} searchers")
        return self.zetas

    def capture(self) -> CaptureConfig:
        radius = self.radius if self.capture_mode == "radius" else 0
        return CaptureConfig(self.zeta_list(), self.capture_mode, radius)

    def motion_matrix(self, g: Graph) -> np.ndarray:
        if self.motion == "static":
            return motion_static(g.n)
        if self.motion == "random-walk":
            return motion_random_walk(g, self.stay_prob)
        if self.motion == "file":
            if not self.motion_file:
                raise ConfigError("motion kind 'file' needs [motion] file")
            return load_motion(self._read(self.motion_file, "motion"))
        raise ConfigError(f"unknown motion kind {self.motion!r}")

    def plan_horizon(self) -> int:
        return self.horizon if self.horizon is not None else self.deadline

    def build_instance(self) -> Instance:
        g = self.build_graph()
        if not self.starts:
            raise ConfigError("config needs [searchers] starts")
        if self.belief_file:
            b0 = load_belief(self._read(self.belief_file, "belief"))
        elif self.belief_vertices:
            b0 = uniform_belief(g.n, self.belief_vertices)
        else:
            raise ConfigError("config needs [belief] vertices or file")
        kind = self.motion if self.motion != "file" else "custom"
        return Instance(g, self.starts, self.capture(), self.motion_matrix(g), b0,
                        self.deadline, self.plan_horizon(), self.gamma, kind)

    def solver_spec(self, planner: str) -> SolverSpec:
        default = DISTRIBUTED_TIMEOUT if planner.startswith("distributed") else CENTRAL_TIMEOUT
        return SolverSpec(
            backend="enumeration" if planner == "enumeration" else "external",
            command=self.solver_cmd,
            timeout=self.timeout or default,
            threads=self.threads,
            gap_tol=self.gap,
            presolve=self.presolve,
            enum_cap=self.enum_cap,
        )

    def experiment(self) -> ExperimentConfig:
        g = self.build_graph()
        if self.motion == "file":
            raise ConfigError("benchmarks generate instances; use motion kind static or random-walk")
        m = self.m()
        zetas = set(self.zeta_list())
        if len(zetas) != 1:
            raise ConfigError("benchmarks use one false-negative rate for the whole team")
        return ExperimentConfig(
            graph=g, m=m, deadline=self.deadline, horizon=self.plan_horizon(), gamma=self.gamma,
            zeta=zetas.pop(), capture_mode=self.capture_mode,
            radius=self.radius if self.capture_mode == "radius" else 0,
            motion=self.motion, stay_prob=self.stay_prob, belief_count=self.belief_count,
            scenario=self.scenario, grid_shape=self.grid, planners=self.planners,
            instances=self.instances, seed=self.seed, simulate=self.simulate,
            central_spec=self.solver_spec("centralized"),
            distributed_spec=self.solver_spec("distributed"),
            config_id=self.digest(),
        )


def _split(raw: str) -> list[str]:
    return raw.replace(",", " ").split()


def _parse_value(attr: str, raw: str, default):
    raw = raw.strip()
    try:
        if attr == "grid":
            r, _, c = raw.lower().partition("x")
            return (int(r), int(c))
        if attr in ("starts", "belief_vertices"):
            return tuple(int(t) for t in _split(raw))
        if attr == "zetas":
            return tuple(float(t) for t in _split(raw))
        if attr == "planners":
            return tuple(_split(raw))
        if attr == "belief_count":
            parts = [int(t) for t in raw.replace("-", " ").split()]
            return (parts[0], parts[-1])
        if attr in ("presolve", "simulate"):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if attr in ("radius", "deadline", "horizon", "threads", "seed", "instances", "searchers"):
            return int(raw)
        if attr == "enum_cap":
            return int(float(raw))
        if attr in ("stay_prob", "gamma", "timeout", "gap"):
            return float(raw)
        return raw
    except (ValueError, IndexError):
        raise ConfigError(f"bad value for {attr}: {raw!r}") from None


def _format_value(attr: str, value) -> str:
    if attr == "grid":
        return f"{value[0]}x{value[1]}"
    if attr == "belief_count":
        return f"{value[0]}-{value[1]}"
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, tuple):
        return " ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- commands ---------------------------------------------------------------

def _plan_text(cfg: RunConfig, planner: str, kind: str, status: str, objective: float,
               reward: float, gap: float, paths) -> str:
    lines = [
        f"# mespp {__version__} plan",
        f"config_digest {cfg.digest()}",
        f"seed {cfg.seed}",
        f"planner {planner}",
        f"model {kind}",
        f"status {status}",
        f"objective {objective!r}",
        f"oracle_reward {reward!r}",
        f"mip_gap {gap!r}",
    ]
    lines += [f"s{s}: " + " ".join(map(str, p)) for s, p in enumerate(paths, start=1)]
    return "\n".join(lines) + "\n"


def cmd_plan(cfg: RunConfig) -> dict:
    """Plan per the config and write ``plan.txt`` plus ``plan_stats.json``."""
    inst = cfg.build_instance()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    planner = cfg.planner
    if planner not in ("centralized", "distributed", "enumeration"):
        raise ConfigError(f"unknown planner {planner!r}")
    spec = cfg.solver_spec(planner)
    if planner == "distributed":
        record = run_receding_horizon(inst, spec)
        paths = record.paths
        reward = record.reward
        status = "fallback" if record.fallbacks else "ok"
        text = _plan_text(cfg, planner, model_kind(inst), status, reward, reward,
                          max(record.gaps, default=0.0), paths)
        stats = {"solve_times": record.solve_times, "mission_time": record.mission_time,
                 "captured": record.captured}
    else:
        outcome = plan_centralized(inst.replace(horizon=inst.deadline), spec)
        paths = outcome.plan
        reward, _ = evaluate_joint_plan(inst, paths)
        status = outcome.stats[0].status
        text = _plan_text(cfg, planner, outcome.kind, status, outcome.objective, reward,
                          outcome.stats[0].mip_gap, paths)
        stats = {"solve_time": outcome.wall_time, "mip_gap": outcome.mip_gap, "status": status}
    (out / "plan.txt").write_text(text)
    stats.update(config_digest=cfg.digest(), seed=cfg.seed, planner=planner)
    (out / "plan_stats.json").write_text(json.dumps(stats, indent=2, default=float) + "\n")
    return {"paths": paths, "reward": reward, "plan_file": out / "plan.txt"}


def cmd_export_lp(cfg: RunConfig) -> Path:
    inst = cfg.build_instance()
    model = build_model(inst)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "model.lp"
    header = f"\\ config {cfg.digest()} seed {cfg.seed}\n"
    path.write_text(header + write_lp(model))
    return path


def cmd_benchmark(cfg: RunConfig) -> dict[str, Path]:
    summary = run_experiment(cfg.experiment())
    files = summary.write_csvs(Path(cfg.out))
    if summary.failures:
        log.warning("%d mission(s) failed; see the error column of missions.csv", summary.failures)
    return files


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mespp", description="Multi-robot search planning on graphs.")
    ap.add_argument("--version", action="version", version=f"mespp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("plan", "plan searcher paths"),
                        ("export-lp", "write the MILP model as an LP file"),
                        ("benchmark", "run a seeded experiment and write CSVs")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--planner", choices=PLANNERS if name == "benchmark" else ("centralized", "distributed", "enumeration"))
        p.add_argument("--solver-cmd", help=f"solver command template (default: ${SOLVER_CMD_ENV} or the HiGHS adapter)")
        p.add_argument("--timeout", type=float)
        p.add_argument("--out")
        p.add_argument("--presolve-off", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.planner:
        changes["planner"] = args.planner
        if args.command == "benchmark":
            changes["planners"] = (args.planner,)
    if args.solver_cmd:
        changes["solver_cmd"] = args.solver_cmd
    if args.timeout is not None:
        changes["timeout"] = args.timeout
    if args.out:
        changes["out"] = args.out
    if args.presolve_off:
        changes["presolve"] = False
    return replace(cfg, **changes)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(RunConfig.load(args.config), args)
        if args.command == "plan":
            result = cmd_plan(cfg)
            print(result["plan_file"].read_text(), end="")
        elif args.command == "export-lp":
            print(cmd_export_lp(cfg))
        else:
            for path in cmd_benchmark(cfg).values():
                print(path)
    except Exception as exc:  # noqa: BLE001 - report and exit nonzero
        if args.verbose:
            log.exception("command failed")
        print(f"mespp: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
