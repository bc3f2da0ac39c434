import math
import sys
import textwrap

import numpy as np
import pytest

from mespp.belief import evaluate_joint_plan
from mespp.graph_env import build_grid, build_path
from mespp.milp import Constraint, MilpModel, build_model, build_sv_model, fix_searcher_path
from mespp.solver import (
    ERROR,
    INFEASIBLE,
    OPTIMAL,
    TIMEOUT,
    DecodeError,
    EnumerationCapExceeded,
    SolveResult,
    SolverSpec,
    count_paths,
    decode_paths,
    enumerate_paths,
    joint_path_count,
    read_solution,
    solve_enumeration,
    solve_external,
    write_solution,
)

from conftest import make_instance, random_instance, requires_solver


def recursive_count(g, v, steps):
    if steps == 0:
        return 1
    return sum(recursive_count(g, w, steps - 1) for w in (v,) + g.neighbors(v))


def fake_solver(tmp_path, body):
    script = tmp_path / "fake_solver.py"
    script.write_text("import sys\nlp, sol = sys.argv[1], sys.argv[2]\n" + textwrap.dedent(body))
    return f"{{python}} {script} {{lp}} {{sol}} {{timeout}} {{threads}} {{presolve}}"


class TestSpec:
    def test_timeout_positive(self):
        with pytest.raises(ValueError):
            SolverSpec(timeout=0)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            SolverSpec(backend="gurobi")

    def test_env_template(self, monkeypatch):
        monkeypatch.setenv("MESPP_SOLVER_CMD", "mysolver {lp} {sol}")
        assert SolverSpec().command_template() == "mysolver {lp} {sol}"
        assert SolverSpec(command="other {lp} {sol}").command_template() == "other {lp} {sol}"


class TestSolutionDialect:
    def test_round_trip(self):
        text = write_solution({"x_1_0_1": 1.0, "beta_c_1": 0.25}, objective=1.5, status="optimal", gap=0.0)
        values, header = read_solution(text)
        assert values == {"x_1_0_1": 1.0, "beta_c_1": 0.25}
        assert header == {"objective": "1.5", "status": "optimal", "gap": "0.0"}

    def test_comments(self):
        values, _ = read_solution("# solver banner\nx 1  # pinned\n\n")
        assert values == {"x": 1.0}

    @pytest.mark.parametrize("text", ["x", "x 1 2", "x one"])
    def test_malformed(self, text):
        with pytest.raises(ValueError, match="line 1"):
            read_solution(text)


@requires_solver
class TestExternal:
    def test_fixture_objective(self, sv_fixture, spec):
        res = solve_external(build_sv_model(sv_fixture), spec)
        assert res.status == OPTIMAL
        assert res.objective == pytest.approx(1.5, abs=1e-6)
        assert res.mip_gap <= spec.gap_tol
        assert res.solver == "highs" and res.wall_time > 0

    def test_fixture_decodes(self, sv_fixture, spec):
        model = build_sv_model(sv_fixture)
        assert decode_paths(model, solve_external(model, spec)) == ((1, 2, 3),)

    @pytest.mark.parametrize("kind,seed", [("SV", 1), ("MV", 2), ("FN", 3)])
    def test_all_pinned_equals_oracle(self, kind, seed, spec):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng, kind=kind)
        plan = [tuple(int(v) for v in enumerate_paths(inst, s, inst.horizon)[-1]) for s in inst.starts]
        model = build_model(inst)
        for s, path in enumerate(plan, start=1):
            model = fix_searcher_path(model, s, path)
        res = solve_external(model, spec)
        assert res.status == OPTIMAL
        assert res.objective == pytest.approx(evaluate_joint_plan(inst, plan)[0], abs=1e-6)
        assert decode_paths(model, res) == tuple(plan)

    def test_contradictory_pins_infeasible(self, sv_fixture, spec):
        model = build_sv_model(sv_fixture)
        bad = MilpModel(
            model.kind, model.variables,
            model.constraints + (Constraint("pin_a", (("x_1_1_2", 1.0),), "=", 1.0),
                                 Constraint("pin_b", (("x_1_1_2", 1.0),), "=", 0.0)),
            model.objective, model.horizon, model.m, model.digest, x_index=model.x_index,
        )
        res = solve_external(bad, spec)
        assert res.status == INFEASIBLE and not res.has_incumbent

    def test_presolve_off(self, sv_fixture):
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(timeout=60, threads=1, presolve=False))
        assert res.status == OPTIMAL and res.objective == pytest.approx(1.5)

    def test_tmpdir_override(self, sv_fixture, spec, tmp_path, monkeypatch):
        monkeypatch.setenv("MESPP_TMPDIR", str(tmp_path))
        monkeypatch.setenv("MESPP_KEEP_TMP", "1")
        solve_external(build_sv_model(sv_fixture), spec)
        kept = list(tmp_path.glob("mespp-*/model.lp"))
        assert len(kept) == 1 and kept[0].read_text().startswith("\\ model SV")


class TestExternalFailures:
    def test_nonzero_exit(self, sv_fixture, tmp_path):
        cmd = fake_solver(tmp_path, "sys.stderr.write('license expired')\nsys.exit(3)\n")
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command=cmd))
        assert res.status == ERROR
        assert "exit code 3" in res.message and "license expired" in res.message

    def test_missing_binary(self, sv_fixture):
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command="/nonexistent/solver {lp} {sol}"))
        assert res.status == ERROR and "not found" in res.message

    def test_no_solution_file(self, sv_fixture, tmp_path):
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command=fake_solver(tmp_path, "pass\n")))
        assert res.status == ERROR and "no solution file" in res.message

    def test_garbage_output(self, sv_fixture, tmp_path):
        cmd = fake_solver(tmp_path, "open(sol, 'w').write('this is not a solution file\\n')\n")
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command=cmd))
        assert res.status == ERROR and "line 1" in res.message

    def test_timeout_with_incumbent(self, sv_fixture, tmp_path):
        body = """
        open(sol, 'w').write('status feasible-timeout\\nobjective 1.0\\ngap 0.5\\n'
                             'x_1_0_1 1\\nx_1_1_1 1\\nx_1_2_2 1\\n')
        """
        model = build_sv_model(sv_fixture)
        res = solve_external(model, SolverSpec(command=fake_solver(tmp_path, body)))
        assert res.status == TIMEOUT and res.has_incumbent
        assert res.mip_gap == 0.5 and res.objective == 1.0
        assert decode_paths(model, res) == ((1, 1, 2),)

    def test_timeout_without_incumbent(self, sv_fixture, tmp_path):
        cmd = fake_solver(tmp_path, "open(sol, 'w').write('status feasible-timeout\\n')\n")
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command=cmd))
        assert res.status == ERROR and not res.has_incumbent

    def test_bare_values_count_as_optimal(self, sv_fixture, tmp_path):
        body = "open(sol, 'w').write('x_1_0_1 1\\nbeta_c_1 0.5\\nbeta_c_2 1\\n')\n"
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command=fake_solver(tmp_path, body)))
        assert res.status == OPTIMAL and res.objective == pytest.approx(1.5) and res.mip_gap == 0.0

    def test_optimal_claim_with_gap_is_downgraded(self, sv_fixture, tmp_path):
        body = "open(sol, 'w').write('status optimal\\nobjective 1\\ngap 0.2\\nx_1_0_1 1\\n')\n"
        res = solve_external(build_sv_model(sv_fixture), SolverSpec(command=fake_solver(tmp_path, body)))
        assert res.status == TIMEOUT and res.mip_gap == 0.2

    def test_placeholders_substituted(self, sv_fixture, tmp_path):
        seen = tmp_path / "argv.txt"
        body = f"open({str(seen)!r}, 'w').write(' '.join(sys.argv[3:]))\nopen(sol, 'w').write('x_1_0_1 1\\n')\n"
        cmd = fake_solver(tmp_path, body)
        solve_external(build_sv_model(sv_fixture), SolverSpec(command=cmd, timeout=7, threads=3, presolve=False))
        assert seen.read_text() == "7 3 off"


class TestDecode:
    def _result(self, model, overrides):
        values = {v.name: 0.0 for v in model.variables}
        values.update(overrides)
        return SolveResult(OPTIMAL, 0.0, values)

    def test_threshold_picks_majority(self, sv_fixture):
        model = build_sv_model(sv_fixture)
        res = self._result(model, {"x_1_0_1": 1, "x_1_1_1": 0.4, "x_1_1_2": 0.6, "x_1_2_2": 1})
        assert decode_paths(model, res) == ((1, 2, 2),)

    def test_ambiguous(self, sv_fixture):
        model = build_sv_model(sv_fixture)
        res = self._result(model, {"x_1_0_1": 1, "x_1_1_1": 0.5, "x_1_1_2": 0.5, "x_1_2_2": 1})
        with pytest.raises(DecodeError, match="time 1"):
            decode_paths(model, res)

    def test_missing_vertex(self, sv_fixture):
        model = build_sv_model(sv_fixture)
        with pytest.raises(DecodeError):
            decode_paths(model, self._result(model, {"x_1_0_1": 1, "x_1_1_2": 1}))

    def test_illegal_jump(self):
        inst = make_instance(build_path(4), [2], [4], horizon=2)
        model = build_sv_model(inst)
        res = self._result(model, {"x_1_0_2": 1, "x_1_1_1": 1, "x_1_2_3": 1})
        with pytest.raises(DecodeError, match="illegal move 1->3"):
            decode_paths(model, res)

    def test_pinned_plan(self, sv_fixture):
        model = fix_searcher_path(build_sv_model(sv_fixture), 1, (1, 1, 2))
        res = self._result(model, {"x_1_0_1": 1, "x_1_1_1": 1, "x_1_2_2": 1})
        assert decode_paths(model, res) == ((1, 1, 2),)

    def test_no_incumbent(self, sv_fixture):
        with pytest.raises(DecodeError):
            decode_paths(build_sv_model(sv_fixture), SolveResult(INFEASIBLE))


class TestEnumeration:
    def test_fixture(self, sv_fixture):
        res = solve_enumeration(sv_fixture)
        assert res.status == OPTIMAL and res.mip_gap == 0.0
        assert res.objective == pytest.approx(1.5, abs=1e-9)
        assert res.plan == ((1, 2, 3),) and res.explored == 5

    def test_two_searchers_25_leaves(self, sv_fixture):
        res = solve_enumeration(sv_fixture.replace(starts=(1, 1), capture=sv_fixture.capture.same_vertex(2)))
        assert res.explored == 25

    @pytest.mark.parametrize("rows,cols,start,h", [(1, 3, 1, 2), (3, 3, 5, 3), (2, 4, 1, 4), (4, 4, 6, 3)])
    def test_count_matches_recursion(self, rows, cols, start, h):
        g = build_grid(rows, cols)
        inst = make_instance(g, [start], [1], horizon=h)
        assert count_paths(inst, start, h) == recursive_count(g, start, h)
        assert len(enumerate_paths(inst, start, h)) == recursive_count(g, start, h)

    def test_joint_count_is_product(self):
        g = build_grid(3, 3)
        inst = make_instance(g, [1, 5], [9], horizon=2)
        assert joint_path_count(inst) == recursive_count(g, 1, 2) * recursive_count(g, 5, 2)
        assert joint_path_count(inst, {1: (1, 1, 1)}) == recursive_count(g, 5, 2)

    def test_paths_sorted_and_legal(self):
        g = build_grid(3, 3)
        paths = enumerate_paths(make_instance(g, [5], [1], horizon=3), 5, 3)
        as_tuples = [tuple(p) for p in paths]
        assert as_tuples == sorted(as_tuples) and len(set(as_tuples)) == len(as_tuples)

    def test_cap_refusal(self):
        inst = make_instance(build_grid(10, 10), [1, 45, 100], [50], horizon=6)
        with pytest.raises(EnumerationCapExceeded) as exc:
            solve_enumeration(inst)
        assert exc.value.count > 10**7 and "joint paths" in str(exc.value)

    def test_lexicographic_tie_break(self):
        # symmetric: vertices 1 and 3 carry equal mass, both moves score the same
        inst = make_instance(build_path(3), [2], [1, 3], horizon=1)
        assert solve_enumeration(inst).plan == ((2, 1),)

    def test_fixed_teammate(self):
        inst = make_instance(build_path(3), [2, 2], [1, 3], horizon=1)
        res = solve_enumeration(inst, fixed={1: (2, 1)})
        assert res.plan == ((2, 1), (2, 3)) and res.objective == pytest.approx(1.0)

    @pytest.mark.parametrize("kind,seed", [(k, s) for k in ("SV", "MV", "FN") for s in range(5)])
    def test_vectorized_scores_match_oracle(self, kind, seed):
        inst = random_instance(np.random.default_rng(500 + seed), kind=kind, cap=2000)
        res = solve_enumeration(inst)
        best = -math.inf
        sets = [enumerate_paths(inst, s, inst.horizon) for s in inst.starts]
        grids = np.meshgrid(*[np.arange(len(p)) for p in sets], indexing="ij")
        for idx in zip(*[g.ravel() for g in grids]):
            best = max(best, evaluate_joint_plan(inst, [sets[s][i] for s, i in enumerate(idx)])[0])
        assert res.objective == pytest.approx(best, abs=1e-12)
        assert evaluate_joint_plan(inst, res.plan)[0] == res.objective


def test_python_placeholder_is_current_interpreter(sv_fixture, tmp_path):
    out = tmp_path / "exe.txt"
    cmd = fake_solver(tmp_path, f"open({str(out)!r}, 'w').write(sys.executable)\nopen(sol, 'w').write('x_1_0_1 1\\n')\n")
    solve_external(build_sv_model(sv_fixture), SolverSpec(command=cmd))
    assert out.read_text() == sys.executable
