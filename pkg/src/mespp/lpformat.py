"""CPLEX-style LP text for :class:`~mespp.milp.MilpModel`, and a reader for it.

The writer is deterministic: variables and rows keep model order and numbers
use the shortest repr that round-trips through ``float``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

from .milp import Constraint, MilpModel, Var

_WRAP = 160


def fmt_num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _expr(terms) -> str:
    parts = []
    for i, (name, coef) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1 else f"{fmt_num(mag)} {name}"
        if i == 0:
            parts.append(body if sign == "+" else f"- {body}")
        else:
            parts.append(f"{sign} {body}")
    lines, cur = [], ""
    for p in parts:
        if cur and len(cur) + len(p) + 1 > _WRAP:
            lines.append(cur)
            cur = "   " + p
        else:
            cur = f"{cur} {p}" if cur else p
    lines.append(cur)
    return "\n".join(lines)


def write_lp(model: MilpModel) -> str:
    out = [
        f"\\ model {model.kind} digest {model.digest} horizon {model.horizon} searchers {model.m}",
        "Maximize" if model.sense == "maximize" else "Minimize",
        " obj: " + _expr(model.objective),
        "Subject To",
    ]
    for c in model.constraints:
        lhs = _expr(c.terms) if c.terms else "0 " + model.variables[0].name
        out.append(f" {c.name}: {lhs} {c.sense} {fmt_num(c.rhs)}")
    out.append("Bounds")
    for v in model.variables:
        if not v.binary:
            out.append(f" {fmt_num(v.lo)} <= {v.name} <= {fmt_num(v.hi)}")
    binaries = [v.name for v in model.variables if v.binary]
    if binaries:
        out.append("Binary")
        out.extend(f" {name}" for name in binaries)
    out.append("End")
    return "\n".join(out) + "\n"


@dataclass
class ParsedLP:
    """Structural content of an LP file."""

    sense: str
    objective: dict[str, float]
    constraints: dict[str, tuple[dict[str, float], str, float]]
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    binaries: list[str] = field(default_factory=list)
    generals: list[str] = field(default_factory=list)


_TOKEN = re.compile(
    r"<=|>=|=<|=>|="
    r"|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
    r"|[+-]"
    r"|[A-Za-z_][\w.\[\]]*"
)
_SECTIONS = {
    "maximize": "obj", "maximum": "obj", "max": "obj",
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binary": "bin", "binaries": "bin", "bin": "bin",
    "general": "gen", "generals": "gen", "gen": "gen",
    "end": "end",
}


def _is_number(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def _parse_linear(tokens: list[str]) -> dict[str, float]:
    terms: dict[str, float] = {}
    sign, coef = 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
        elif _is_number(tok):
            coef = float(tok)
        else:
            terms[tok] = terms.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
            sign, coef = 1.0, None
    return terms


def _split_rows(lines: list[str]) -> list[str]:
    """Join continuation lines onto the preceding ``name:`` row."""
    rows, cur = [], ""
    for ln in lines:
        starts_new = re.match(r"^\s*[A-Za-z_][\w.\[\]]*\s*:", ln) is not None
        if starts_new and cur:
            rows.append(cur)
            cur = ""
        cur = f"{cur} {ln.strip()}" if cur else ln.strip()
    if cur:
        rows.append(cur)
    return rows


def read_lp(text: str) -> ParsedLP:
    section = None
    buckets: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "bin": [], "gen": []}
    sense = "maximize"
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "obj":
                sense = "maximize" if key.startswith("max") else "minimize"
            if section == "end":
                break
            continue
        if section is None:
            raise ValueError(f"content before any section header: {line!r}")
        buckets[section].append(line)

    obj_text = " ".join(buckets["obj"])
    if ":" in obj_text:
        obj_text = obj_text.split(":", 1)[1]
    objective = _parse_linear(_TOKEN.findall(obj_text))

    constraints = {}
    for row in _split_rows(buckets["st"]):
        name, _, body = row.partition(":")
        toks = _TOKEN.findall(body)
        rel = next(i for i, t in enumerate(toks) if t in ("<=", ">=", "=", "=<", "=>"))
        sense_tok = {"=<": "<=", "=>": ">="}.get(toks[rel], toks[rel])
        rhs_toks = toks[rel + 1:]
        rhs = float("".join(rhs_toks))
        constraints[name.strip()] = (_parse_linear(toks[:rel]), sense_tok, rhs)

    bounds = {}
    for line in buckets["bounds"]:
        toks = line.split()
        if len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
            bounds[toks[2]] = (float(toks[0]), float(toks[4]))
        elif len(toks) == 3 and toks[1] == "=":
            bounds[toks[0]] = (float(toks[2]), float(toks[2]))
        else:
            raise ValueError(f"unsupported bound line: {line!r}")
    binaries = [t for line in buckets["bin"] for t in line.split()]
    generals = [t for line in buckets["gen"] for t in line.split()]
    return ParsedLP(sense, objective, constraints, bounds, binaries, generals)


def model_from_lp(parsed: ParsedLP, template: MilpModel) -> MilpModel:
    """Rebuild a model from parsed LP content, borrowing metadata from ``template``."""
    tvars = template.var_map
    binaries = set(parsed.binaries)
    names = list(parsed.bounds) + parsed.binaries
    variables = []
    order = {name: i for i, name in enumerate(tvars)}
    for name in sorted(names, key=lambda n: order.get(n, len(order))):
        base = tvars.get(name)
        lo, hi = parsed.bounds.get(name, (0.0, 1.0))
        variables.append(Var(name, base.family if base else "", base.indices if base else (), name in binaries, lo, hi))
    constraints = tuple(
        Constraint(name, tuple(terms.items()), sense, rhs)
        for name, (terms, sense, rhs) in parsed.constraints.items()
    )
    return MilpModel(
        kind=template.kind,
        variables=tuple(variables),
        constraints=constraints,
        objective=tuple(parsed.objective.items()),
        horizon=template.horizon,
        m=template.m,
        digest=template.digest,
        sense=parsed.sense,
        x_index=template.x_index,
    )
