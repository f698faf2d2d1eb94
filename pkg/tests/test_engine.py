import random
from fractions import Fraction

import pytest

from cartaneq import Context
from cartaneq.engine import (
    EngineError,
    GStructureProblem,
    Policy,
    ReductionNeeded,
    build_absorption,
    cartan_characters,
    classify_torsion,
    compute_structure_data,
    prolong,
    prolonged_group,
    reduce_group,
    run_loop,
    solve_absorption,
)
from cartaneq.forms import Chart, Coframe, structure_functions
from cartaneq.groups import ParamGroup

from genutil import (
    flat_gl2_problem,
    flat_identity_problem,
    lagrangian_problem,
    toy_diag_problem,
)


def scaling_problem():
    ctx = Context()
    x, y = ctx.declare_symbols(["x", "y"], "coordinate")
    chart = Chart(ctx, [x, y])
    eta = Coframe(chart, ["e1", "e2"], [[ctx.one, ctx.zero], [ctx.zero, ctx.one]])
    a = ctx.declare_symbols(["a"], "group-parameter")
    G = ParamGroup(ctx, 2, a, [[ctx.sym("a"), ctx.zero], [ctx.zero, ctx.sym("a")]], {a[0]: 1})
    return GStructureProblem(ctx, chart, eta, G, title="scaling")


def test_structure_data_flat():
    p = flat_gl2_problem()
    data = compute_structure_data(p)
    assert all(e.is_zero() for e in data.B.values())
    assert all(e.is_zero() for e in data.C.values())


def test_structure_data_toy_c_value():
    p = toy_diag_problem()
    data = compute_structure_data(p)
    ctx = p.ctx
    assert data.C[(1, 0, 1)] == 1 / (ctx.sym("a") * ctx.sym("x"))
    assert data.B[(1, 0, 1)] == 1 / ctx.sym("x")


def test_structure_data_identity_compatibility_lagrangian():
    p = lagrangian_problem()
    data = compute_structure_data(p)  # raises on violation
    ident = {s: p.ctx.expr(v) for s, v in p.group.identity_values.items()}
    for key, c in data.C.items():
        assert (c.subs(ident) - data.B[key]).is_zero()


def test_absorption_counting():
    # n = 2, r = 1: one equation pair (i, (1,2)) per i, two unknowns
    p = toy_diag_problem()
    data = compute_structure_data(p)
    sys = build_absorption(p, data)
    assert len(sys.slots) == 2
    assert len(sys.unknowns) == 2
    # n = 3, r = 5: 9 equations in 15 unknowns
    lag = lagrangian_problem()
    sys2 = build_absorption(lag, compute_structure_data(lag))
    assert len(sys2.slots) == 9
    assert len(sys2.unknowns) == 15
    # r = 0: pure torsion
    flat = flat_identity_problem()
    sys3 = build_absorption(flat, compute_structure_data(flat))
    assert len(sys3.unknowns) == 0


def test_solve_absorption_lagrangian_loop1():
    p = lagrangian_problem()
    data = compute_structure_data(p)
    sol = solve_absorption(build_absorption(p, data))
    nontrivial = [t for t in sol.torsion if not t.expr.is_zero()]
    assert len(nontrivial) == 1
    assert nontrivial[0].expr == p.ctx.parse("-(a4^2)/(a1*L_pp(x,u,p))")
    assert sol.r2 == 8


def test_solution_satisfies_system():
    # substituting z = P z + Q (c - lhs) back satisfies every equation up to
    # the torsion rows, where the defect is exactly minus the residual
    for maker in (toy_diag_problem, lagrangian_problem, flat_gl2_problem):
        p = maker()
        ctx = p.ctx
        data = compute_structure_data(p)
        sys = build_absorption(p, data)
        sol = solve_absorption(sys)
        par_index = {u: t for t, u in enumerate(sol.parametric)}
        zvals = {}
        rng = random.Random(9)
        free = [ctx.expr(Fraction(rng.randint(-5, 5), rng.randint(1, 2))) for _ in sol.parametric]
        for c, unk in enumerate(sys.unknowns):
            if unk in par_index:
                zvals[unk] = free[par_index[unk]]
            else:
                acc = sol.z_affine_part(*unk)
                for c2, unk2 in enumerate(sys.unknowns):
                    w = sol.P[unk][c2]
                    if w and unk2 in par_index:
                        acc = acc + ctx.expr(w) * free[par_index[unk2]]
                zvals[unk] = acc
        gaps = []
        for e, slot in enumerate(sys.slots):
            # gap = sum coeff z* - (lhs - C)
            acc = data.C[slot] - sys.lhs[e]
            for c, unk in enumerate(sys.unknowns):
                w = sys.coeffs[e][c]
                if w:
                    acc = acc + ctx.expr(w) * zvals[unk]
            gaps.append(acc)
        if not sol.torsion:
            assert all(g.is_zero() for g in gaps)
        for res in sol.torsion:
            contracted = ctx.zero
            for e, w in enumerate(res.combination):
                if w:
                    contracted = contracted + ctx.expr(w) * gaps[e]
            assert (contracted + res.expr).is_zero()


def test_exact_mode_same_r2_and_P():
    p = lagrangian_problem()
    data = compute_structure_data(p)
    solN = solve_absorption(build_absorption(p, data, "normalized"))
    solE = solve_absorption(build_absorption(p, data, "exact"))
    assert solN.r2 == solE.r2
    assert solN.P == solE.P
    assert solE.b is not None and solN.b is None


def test_classify_torsion():
    p = lagrangian_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    cls = classify_torsion(sol, random.Random(0))
    kinds = sorted(cls.kinds)
    assert kinds == ["group-dependent", "trivial"]
    assert cls.full_rank

    flat = flat_identity_problem()
    sol2 = solve_absorption(build_absorption(flat, compute_structure_data(flat)))
    assert all(k == "trivial" for k in classify_torsion(sol2).kinds)


def test_classify_genuine_invariant():
    ctx = Context()
    x, y = ctx.declare_symbols(["x", "y"], "coordinate")
    chart = Chart(ctx, [x, y])
    eta = Coframe(chart, ["e1", "e2"], [[ctx.one, ctx.zero], [ctx.zero, ctx.sym("x")]])
    G = ParamGroup(ctx, 2, (), [[ctx.one, ctx.zero], [ctx.zero, ctx.one]], {})
    p = GStructureProblem(ctx, chart, eta, G)
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    cls = classify_torsion(sol)
    assert "genuine" in cls.kinds


def test_reduce_group_lagrangian():
    p = lagrangian_problem()
    ctx = p.ctx
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    res = [t for t in sol.torsion if not t.expr.is_zero()][0]
    red = reduce_group(p, sol, {res.label: Fraction(-1)})
    # adapted coframe ((1/L_pp) dx, du - p dx, -E dx + L_pp dp)
    Lpp = ctx.parse("L_pp(x,u,p)")
    assert red.coframe.transition[0][0] == 1 / Lpp
    assert red.coframe.transition[1][0] == -ctx.sym("p")
    assert red.coframe.transition[1][1] == ctx.one
    assert red.coframe.transition[2][2] == Lpp
    # isotropy subgroup: b1 = b4^2 pattern
    assert red.group.r == 4
    names = [s.name for s in red.group.params]
    b2, b3, b4, b5 = (ctx.sym(nm) for nm in names)
    assert red.group.entries[0][0] == b4 ** 2
    assert red.group.entries[0][1] == b2
    assert red.group.entries[1][1] == b4
    assert red.group.entries[2][1] == b5
    assert red.group.entries[2][2] == 1 / b4


def test_reduce_group_toy():
    p = toy_diag_problem()
    ctx = p.ctx
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    res = [t for t in sol.torsion if not t.expr.is_zero()][0]
    assert res.expr == ctx.parse("-1/(x*a)")
    red = reduce_group(p, sol, {res.label: Fraction(-1)})
    assert red.group.r == 0
    assert red.coframe.transition[0][0] == 1 / ctx.sym("x")
    assert red.coframe.transition[1][1] == ctx.sym("x")


def test_reduce_group_empty_is_identity():
    p = flat_gl2_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    assert reduce_group(p, sol, {}) is p


def test_reduction_soundness():
    # after reduction the residual slots of the new problem evaluate to the
    # chosen targets at the identity of the reduced group
    p = lagrangian_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    res = [t for t in sol.torsion if not t.expr.is_zero()][0]
    red = reduce_group(p, sol, {res.label: Fraction(-1)})
    sol2 = solve_absorption(build_absorption(red, compute_structure_data(red)))
    consts = [t.expr.as_fraction() for t in sol2.torsion]
    assert Fraction(-1) in consts
    assert all(c is not None for c in consts)


def test_characters_examples():
    lag = lagrangian_problem()
    sol = solve_absorption(build_absorption(lag, compute_structure_data(lag)))
    ch = cartan_characters(lag, sol)
    assert ch.s == [3, 1, 1] and ch.r2 == 8

    gl2 = flat_gl2_problem()
    sol2 = solve_absorption(build_absorption(gl2, compute_structure_data(gl2)))
    ch2 = cartan_characters(gl2, sol2)
    assert ch2.s == [2, 2] and ch2.r2 == 6 and ch2.involutive

    flat = flat_identity_problem()
    sol3 = solve_absorption(build_absorption(flat, compute_structure_data(flat)))
    ch3 = cartan_characters(flat, sol3)
    assert ch3.s == [0, 0] and ch3.r2 == 0 and ch3.involutive


def test_characters_lagrangian_loop2():
    p = lagrangian_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    res = [t for t in sol.torsion if not t.expr.is_zero()][0]
    red = reduce_group(p, sol, {res.label: Fraction(-1)})
    sol2 = solve_absorption(build_absorption(red, compute_structure_data(red)))
    ch = cartan_characters(red, sol2)
    assert sol2.r2 == 5
    assert ch.s == [3, 1, 0]
    assert ch.involutive  # 5 = 1*3 + 2*1 + 3*0
    assert ch.witnesses[0] is not None


def test_prolong_refused_when_involutive():
    p = flat_gl2_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    ch = cartan_characters(p, sol)
    with pytest.raises(EngineError):
        prolong(p, sol, ch)


def test_prolong_dimensions_and_group():
    p = scaling_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    ch = cartan_characters(p, sol)
    assert not ch.involutive and sol.r2 == 0
    pro = prolong(p, sol, ch)
    assert pro.n == p.n + p.group.r
    assert pro.group.r == sol.r2
    # the prolonged coframe contains g eta and the pi forms
    assert len(pro.coframe.names) == 3


def test_prolonged_group_abelian():
    rng = random.Random(12)
    p = flat_gl2_problem()
    sol = solve_absorption(build_absorption(p, compute_structure_data(p)))
    g2 = prolonged_group(p, sol)
    assert g2.r == sol.r2
    for _ in range(5):
        v = {s: Fraction(rng.randint(-4, 4)) for s in g2.params}
        y = {s: Fraction(rng.randint(-4, 4)) for s in g2.params}
        mv = g2.at_numeric(v)
        my = g2.at_numeric(y)
        prod = [
            [sum(mv[i][k] * my[k][j] for k in range(g2.n)) for j in range(g2.n)]
            for i in range(g2.n)
        ]
        direct = g2.at_numeric({s: v[s] + y[s] for s in g2.params})
        assert prod == direct


def test_run_loop_lagrangian():
    res = run_loop(lagrangian_problem(), Policy(max_loops=6, seed=0))
    assert res.outcome == "involutive"
    assert [r.action for r in res.loops] == ["reduce", "involutive"]
    assert res.loops[1].characters.s == [3, 1, 0]
    assert res.loops[1].solution.r2 == 5


def test_run_loop_flat_identity_involutive():
    res = run_loop(flat_identity_problem(), Policy(seed=0))
    assert res.outcome == "involutive"
    assert res.loops[0].characters.s == [0, 0]


def test_run_loop_toy_e_structure():
    res = run_loop(toy_diag_problem(), Policy(seed=0))
    assert res.outcome == "e-structure"
    assert res.final.group.r == 0


def test_run_loop_genuine_invariant():
    ctx = Context()
    x, y = ctx.declare_symbols(["x", "y"], "coordinate")
    chart = Chart(ctx, [x, y])
    eta = Coframe(chart, ["e1", "e2"], [[ctx.one, ctx.zero], [ctx.zero, ctx.sym("x")]])
    G = ParamGroup(ctx, 2, (), [[ctx.one, ctx.zero], [ctx.zero, ctx.one]], {})
    res = run_loop(GStructureProblem(ctx, chart, eta, G), Policy(seed=0))
    assert res.outcome == "constant-type-violation"
    assert res.invariants and res.invariants[0] == ctx.parse("-1/x")


def test_run_loop_prolongs_scaling_to_e_structure():
    res = run_loop(scaling_problem(), Policy(seed=0))
    assert res.outcome == "e-structure"
    assert [r.action for r in res.loops] == ["prolong"]
    # monotone progress: chart dimension grew
    assert res.final.n == 3


def test_run_loop_cap():
    res = run_loop(lagrangian_problem(), Policy(max_loops=0, seed=0))
    assert res.outcome == "cap-exceeded"


def test_character_report_fields_every_loop():
    res = run_loop(lagrangian_problem(), Policy(seed=0))
    for rec in res.loops:
        assert rec.characters.r2 is not None
        assert isinstance(rec.characters.involutive, bool)
        assert len(rec.characters.s) == rec.chart_dim
