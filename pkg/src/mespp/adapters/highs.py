"""Solve an LP file with HiGHS and write the toolkit's solution dialect.

Usage::

    python -m mespp.adapters.highs model.lp model.sol --time-limit 10 --threads 8
"""
from __future__ import annotations

import argparse
import sys

import highspy


def solve(lp: str, sol: str, time_limit: float, threads: int, gap: float, presolve: str) -> int:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(time_limit))
    h.setOptionValue("threads", int(threads))
    h.setOptionValue("presolve", presolve)
    h.setOptionValue("mip_rel_gap", float(gap))
    h.setOptionValue("mip_abs_gap", 0.0)
    h.setOptionValue("mip_feasibility_tolerance", 1e-9)
    h.setOptionValue("primal_feasibility_tolerance", 1e-9)
    if h.readModel(lp) == highspy.HighsStatus.kError:
        print(f"HiGHS could not read {lp}", file=sys.stderr)
        return 2
    h.run()
    status = h.getModelStatus()
    info = h.getInfo()
    has_incumbent = info.primal_solution_status == 2  # kSolutionStatusFeasible
    with open(sol, "w") as out:
        out.write(f"# HiGHS {h.version()} {h.modelStatusToString(status)}\n")
        if status == highspy.HighsModelStatus.kOptimal:
            out.write("status optimal\n")
        elif status == highspy.HighsModelStatus.kInfeasible:
            out.write("status infeasible\n")
            return 0
        elif has_incumbent and status in (
            highspy.HighsModelStatus.kTimeLimit,
            highspy.HighsModelStatus.kIterationLimit,
            highspy.HighsModelStatus.kSolutionLimit,
            highspy.HighsModelStatus.kInterrupt,
        ):
            out.write("status feasible-timeout\n")
        else:
            out.write("status error\n")
            return 0
        out.write(f"objective {info.objective_function_value!r}\n")
        out.write(f"gap {max(0.0, info.mip_gap)!r}\n")
        names = h.getLp().col_names_
        for name, value in zip(names, h.getSolution().col_value):
            out.write(f"{name} {value!r}\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="mespp.adapters.highs", description=__doc__)
    ap.add_argument("lp")
    ap.add_argument("sol")
    ap.add_argument("--time-limit", type=float, default=1800.0)
    ap.add_argument("--threads", type=int, default=8)
    ap.add_argument("--gap", type=float, default=1e-9)
    ap.add_argument("--presolve", choices=("on", "off"), default="on")
    args = ap.parse_args(argv)
    return solve(args.lp, args.sol, args.time_limit, args.threads, args.gap, args.presolve)


if __name__ == "__main__":
    sys.exit(main())
