"""One full loop of Cartan's equivalence method, iterated to termination.

The loop on a G-structure (coframe eta = A(x) dx with structure group G):
compute structure data B, C and the Maurer-Cartan constants F; set up and
solve the absorption equations for the second-order unknowns z; classify the
leftover torsion residuals; then either reduce the structure group along a
normalization section, pass Cartan's test on the reduced characters, or
prolong to the G(2)-structure on the absorbed coframe bundle.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .characters import CharacterReport, reduced_characters
from .exprs import Context, Expr, ExprError, PoleError, Symbol
from .forms import Chart, Coframe, DiffForm, rewrite_in_coframe, structure_functions
from .groups import (
    MCBasis,
    ParamGroup,
    recover_params,
    right_mc,
    slot_symbols,
    solve_power_in,
)
from .linalg import mat_mul

__all__ = [
    "EngineError",
    "ReductionNeeded",
    "GStructureProblem",
    "StructureData",
    "AbsorptionSystem",
    "AbsorptionSolution",
    "TorsionResidual",
    "TorsionClassification",
    "Policy",
    "LoopRecord",
    "EquivalenceResult",
    "compute_structure_data",
    "build_absorption",
    "solve_absorption",
    "classify_torsion",
    "reduce_group",
    "cartan_characters",
    "prolong",
    "prolonged_group",
    "run_loop",
    "target_symbol",
    "residual_label",
]


class EngineError(ExprError):
    pass


class ReductionNeeded(EngineError):
    """Structured failure: residuals the triangular solver cannot normalize."""

    def __init__(self, message: str, residuals: list[Expr] | None = None):
        super().__init__(message)
        self.residuals = residuals or []


@dataclass
class GStructureProblem:
    """A coframe eta = A(x) dx together with a structure group."""

    ctx: Context
    chart: Chart
    coframe: Coframe
    group: ParamGroup
    stage: int = 0
    provenance: list[str] = field(default_factory=list)
    title: str = ""

    def __post_init__(self):
        if self.group.n != self.chart.n:
            raise EngineError("group size must match chart dimension")

    @property
    def n(self) -> int:
        return self.chart.n


@dataclass
class StructureData:
    B: dict[tuple[int, int, int], Expr]
    C: dict[tuple[int, int, int], Expr]
    mc: MCBasis
    g_coframe: Coframe


def target_symbol(ctx: Context, coord: Symbol) -> Symbol:
    """Target-coordinate twin of a chart coordinate (x -> X)."""
    name = coord.name[:1].upper() + coord.name[1:]
    if name == coord.name:
        name = "T" + name
    return ctx.declare_symbol(name, "jet-variable")


def residual_label(e: Expr) -> str:
    """Stable label of a torsion residual: hash of its canonical print."""
    return hashlib.sha256(str(e).encode()).hexdigest()[:12]


def compute_structure_data(p: GStructureProblem) -> StructureData:
    """Structure functions B of eta, torsion sources C of g d(eta) in the
    g-eta coframe, and the Maurer-Cartan basis; checks C(x, identity) = B(x).
    """
    ctx = p.ctx
    n = p.n
    B = structure_functions(p.coframe)
    mc = right_mc(p.group)
    gA = mat_mul(p.group.entries, p.coframe.transition)
    g_coframe = Coframe(p.chart, tuple(f"w{i + 1}" for i in range(n)), gA)
    id_binds = {s: ctx.expr(v) for s, v in p.group.identity_values.items()}
    C: dict[tuple[int, int, int], Expr] = {}
    for i in range(n):
        coeffs = {}
        for j in range(n):
            for k in range(j + 1, n):
                acc = ctx.zero
                for m in range(n):
                    acc = acc + p.group.entries[i][m] * B[(m, j, k)]
                if not acc.is_zero():
                    coeffs[(j, k)] = acc
        gde = rewrite_in_coframe(DiffForm(2, p.coframe, coeffs), g_coframe)
        for j in range(n):
            for k in range(j + 1, n):
                C[(i, j, k)] = gde.coeff(j, k)
    for key, c in C.items():
        if not (c.subs(id_binds) - B[key]).is_zero():
            raise EngineError(f"identity compatibility C(x, I) = B(x) fails at slot {key}")
    return StructureData(B, C, mc, g_coframe)


@dataclass
class AbsorptionSystem:
    """Affine equations for the z-unknowns, one per (i, j<k) slot."""

    problem: GStructureProblem
    data: StructureData
    mode: str  # "normalized" | "exact"
    slots: list[tuple[int, int, int]]
    unknowns: list[tuple[int, int]]  # (kappa, j), both 0-based
    coeffs: list[list[Fraction]]  # per slot, per unknown
    lhs: list[Expr]  # normalization constants or B(X) expressions


@dataclass
class TorsionResidual:
    expr: Expr
    combination: list[Fraction]  # weights over the system slots
    label: str


@dataclass
class AbsorptionSolution:
    system: AbsorptionSystem
    principal: list[tuple[int, int]]
    parametric: list[tuple[int, int]]
    P: dict[tuple[int, int], list[Fraction]]
    Q: dict[tuple[int, int], list[Fraction]]
    c: list[Expr]
    b: list[Expr] | None
    torsion: list[TorsionResidual]
    r2: int

    def z_affine_part(self, kappa: int, j: int) -> Expr:
        """The (x, g)-dependent part of the solved z^kappa_j."""
        ctx = self.system.problem.ctx
        acc = ctx.zero
        qrow = self.Q[(kappa, j)]
        for f, w in enumerate(qrow):
            if w:
                acc = acc + ctx.expr(w) * (self.c[f] - self.system.lhs[f])
        return acc


def build_absorption(
    p: GStructureProblem,
    data: StructureData,
    mode: str = "normalized",
) -> AbsorptionSystem:
    """One equation per (i, j<k): lhs = sum_k(F^{ik} z_j - F^{ij} z_k) + C^i_{jk}.

    Normalized mode puts the default constant 0 on every left side; exact mode
    puts B^i_{jk}(X) with X the target-coordinate twins.
    """
    ctx = p.ctx
    n, r = p.n, p.group.r
    if mode not in ("normalized", "exact"):
        raise EngineError(f"unknown absorption mode {mode!r}")
    slots = [(i, j, k) for i in range(n) for j in range(n) for k in range(j + 1, n)]
    unknowns = [(kappa, j) for kappa in range(r) for j in range(n)]
    coeffs = []
    for (i, j, k) in slots:
        Fik = data.mc.F[(i, k)]
        Fij = data.mc.F[(i, j)]
        row = []
        for (kappa, jj) in unknowns:
            val = Fraction(0)
            if jj == j:
                val += Fik[kappa]
            if jj == k:
                val -= Fij[kappa]
            row.append(val)
        coeffs.append(row)
    if mode == "normalized":
        lhs = [ctx.zero for _ in slots]
    else:
        targets = {x: ctx.expr(target_symbol(ctx, x)) for x in p.chart.coords}
        lhs = [data.B[slot].subs(targets) for slot in slots]
    return AbsorptionSystem(p, data, mode, slots, unknowns, coeffs, lhs)


def solve_absorption(sys: AbsorptionSystem) -> AbsorptionSolution:
    """Gaussian elimination on the rational z-coefficients.

    Unknowns are eliminated in lexicographic (kappa, j) order with the first
    nonzero pivot; right sides lhs - C ride along symbolically.  Rows left
    with no unknowns are the torsion residuals.
    """
    ctx = sys.problem.ctx
    nslots = len(sys.slots)
    nunk = len(sys.unknowns)
    rows = [list(r) for r in sys.coeffs]
    rhs = [sys.lhs[e] - sys.data.C[sys.slots[e]] for e in range(nslots)]
    tmat = [[Fraction(1 if f == e else 0) for f in range(nslots)] for e in range(nslots)]

    pivot_of_col: dict[int, int] = {}
    used = [False] * nslots
    for col in range(nunk):
        piv = None
        for e in range(nslots):
            if not used[e] and rows[e][col]:
                piv = e
                break
        if piv is None:
            continue
        used[piv] = True
        pivot_of_col[col] = piv
        pv = rows[piv][col]
        if pv != 1:
            rows[piv] = [x / pv for x in rows[piv]]
            tmat[piv] = [x / pv for x in tmat[piv]]
            rhs[piv] = rhs[piv] / ctx.expr(pv)
        for e in range(nslots):
            if e == piv:
                continue
            f = rows[e][col]
            if not f:
                continue
            rows[e] = [x - f * y for x, y in zip(rows[e], rows[piv])]
            tmat[e] = [x - f * y for x, y in zip(tmat[e], tmat[piv])]
            rhs[e] = rhs[e] - ctx.expr(f) * rhs[piv]

    principal = [sys.unknowns[c] for c in sorted(pivot_of_col)]
    parametric = [u for c, u in enumerate(sys.unknowns) if c not in pivot_of_col]
    P: dict[tuple[int, int], list[Fraction]] = {}
    Q: dict[tuple[int, int], list[Fraction]] = {}
    for c, unk in enumerate(sys.unknowns):
        if c in pivot_of_col:
            e = pivot_of_col[c]
            P[unk] = [
                (-rows[e][c2] if c2 != c else Fraction(0)) for c2 in range(nunk)
            ]
            Q[unk] = [-t for t in tmat[e]]
        else:
            P[unk] = [Fraction(1 if c2 == c else 0) for c2 in range(nunk)]
            Q[unk] = [Fraction(0)] * nslots

    torsion = []
    for e in range(nslots):
        if used[e]:
            continue
        expr = rhs[e]
        torsion.append(TorsionResidual(expr, list(tmat[e]), residual_label(expr)))

    cvec = [sys.data.C[slot] for slot in sys.slots]
    bvec = list(sys.lhs) if sys.mode == "exact" else None
    r2 = nunk - len(pivot_of_col)
    return AbsorptionSolution(
        sys, principal, parametric, P, Q, cvec, bvec, torsion, r2
    )


@dataclass
class TorsionClassification:
    kinds: list[str]  # per residual: trivial | group-dependent | genuine
    constant_targets: dict[int, Fraction]  # residual index -> forced constant
    full_rank: bool
    genuine: list[int]
    notes: list[str] = field(default_factory=list)

    def group_dependent(self) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == "group-dependent"]


def _generic_point_for(exprs: Sequence[Expr], group: ParamGroup, rng: random.Random,
                       positive: bool = False) -> dict:
    """A random rational point binding every atom, params near the identity."""
    atoms = []
    seen = set()
    for e in exprs:
        for a in e.atoms():
            if id(a) not in seen:
                seen.add(id(a))
                atoms.append(a)
    for _ in range(80):
        point = {}
        for a in atoms:
            if isinstance(a, Symbol) and a in group.identity_values:
                point[a] = group.identity_values[a] + Fraction(rng.randint(-4, 4), rng.randint(2, 5))
            elif positive:
                point[a] = Fraction(rng.randint(1, 9), rng.randint(1, 3))
            else:
                point[a] = Fraction(rng.choice([-1, 1]) * rng.randint(1, 9), rng.randint(1, 3))
        try:
            for e in exprs:
                e.eval_at(point)
        except PoleError:
            continue
        return point
    raise EngineError("could not sample a generic point clear of all poles")


def classify_torsion(sol: AbsorptionSolution, rng: random.Random | None = None) -> TorsionClassification:
    """Tag residuals and test joint full rank in the group parameters."""
    rng = rng or random.Random(0)
    group = sol.system.problem.group
    kinds: list[str] = []
    const_targets: dict[int, Fraction] = {}
    genuine: list[int] = []
    notes: list[str] = []
    grads: list[list[Expr]] = []
    for idx, res in enumerate(sol.torsion):
        e = res.expr
        if e.is_zero():
            kinds.append("trivial")
            continue
        cval = e.as_fraction()
        if cval is not None:
            kinds.append("trivial")
            const_targets[idx] = cval
            notes.append(f"residual {res.label} is the constant {cval}; absorbed into the normalization")
            continue
        grad = [e.diff(a) for a in group.params]
        if any(not g.is_zero() for g in grad):
            kinds.append("group-dependent")
            grads.append(grad)
        else:
            kinds.append("genuine")
            genuine.append(idx)
    full_rank = True
    if grads:
        point = _generic_point_for([g for row in grads for g in row], group, rng)
        numeric = [[g.eval_at(point) for g in row] for row in grads]
        rank = _numeric_rank(numeric)
        full_rank = rank == len(grads)
        if not full_rank:
            notes.append(
                f"group-dependent residuals have parameter Jacobian rank {rank} < {len(grads)}; "
                "normalizing a sub-collection would expose a genuine invariant"
            )
    return TorsionClassification(kinds, const_targets, full_rank, genuine, notes)


def _numeric_rank(rows: list[list[Fraction]]) -> int:
    if not rows:
        return 0
    work = [r[:] for r in rows]
    ncols = len(work[0])
    rank = 0
    for col in range(ncols):
        piv = None
        for r in range(rank, len(work)):
            if work[r][col] != 0:
                piv = r
                break
        if piv is None:
            continue
        work[rank], work[piv] = work[piv], work[rank]
        pv = work[rank][col]
        for r in range(len(work)):
            if r == rank:
                continue
            f = work[r][col] / pv
            if f:
                work[r] = [x - f * y for x, y in zip(work[r], work[rank])]
        rank += 1
        if rank == len(work):
            break
    return rank


def _solve_residual_for_param(e: Expr, params: Sequence[Symbol]) -> tuple[Symbol, Expr] | None:
    """First parameter (creation order) the residual equation solves for."""
    for a in params:
        if a not in e.free_symbols:
            continue
        sol = solve_power_in(e, a)
        if sol is not None and a not in sol.free_symbols:
            return a, sol
    return None


def reduce_group(
    p: GStructureProblem,
    sol: AbsorptionSolution,
    targets: dict[str, Fraction],
    rng: random.Random | None = None,
) -> GStructureProblem:
    """Normalize the group-dependent residuals to the target constants.

    Solves H = b for a normalization section g(x) by triangular elimination
    (one parameter per residual, remaining parameters at identity values),
    then passes to the isotropy group of the target point with the adapted
    coframe g(x) eta.
    """
    ctx = p.ctx
    rng = rng or random.Random(0)
    classification = classify_torsion(sol, rng)
    if classification.genuine:
        raise ReductionNeeded(
            "genuine invariants present; reduction of the structure group does not apply",
            [sol.torsion[i].expr for i in classification.genuine],
        )
    if not classification.full_rank:
        raise ReductionNeeded("residuals are not jointly full rank in the group parameters")
    active = [sol.torsion[i] for i in classification.group_dependent()]
    if not active:
        return p

    # infinitesimal transitivity of the G-action on the residual range, at a
    # generic group element (right translation makes this the same rank
    # condition as at the identity-neighborhood sample used in classify)
    grads = [[res.expr.diff(a) for a in p.group.params] for res in active]
    point = _generic_point_for([g for row in grads for g in row], p.group, rng)
    if _numeric_rank([[g.eval_at(point) for g in row] for row in grads]) != len(active):
        raise ReductionNeeded("infinitesimal transitivity check failed at a generic point")

    # normalization section
    solved: dict[Symbol, Expr] = {}
    for res in active:
        if res.label not in targets:
            raise ReductionNeeded(f"no normalization target for residual {res.label}")
        b = targets[res.label]
        eq = (res.expr - ctx.expr(b)).subs(solved)
        hit = _solve_residual_for_param(eq, p.group.params)
        if hit is None:
            raise ReductionNeeded(
                f"residual {res.expr} = {b} is not solvable for a group parameter "
                "by triangular elimination",
                [res.expr],
            )
        a, val = hit
        solved = {s: v.subs({a: val}) for s, v in solved.items()}
        solved[a] = val
    section = dict(solved)
    for a in p.group.params:
        if a not in section:
            section[a] = ctx.expr(p.group.identity_values[a])
    for _ in range(p.group.r + 1):
        changed = False
        for a, v in section.items():
            if any(s in v.free_symbols for s in p.group.params):
                section[a] = v.subs(section)
                changed = True
        if not changed:
            break
    else:
        raise ReductionNeeded("normalization section does not close under back-substitution")

    section_matrix = [[e.subs(section) for e in row] for row in p.group.entries]

    # isotropy group of the target point
    plan = recover_params(p.group)
    if plan is None:
        raise ReductionNeeded("cannot recover group parameters of h g(x): no triangular plan")
    h_params = [
        ctx.declare_symbol(f"{a.name}_{p.stage + 1}", "group-parameter") for a in p.group.params
    ]
    h_group = p.group.with_params(h_params)
    prod = mat_mul(h_group.entries, section_matrix)
    slots = slot_symbols(ctx, p.n)
    slot_binds = {slots[i][j]: prod[i][j] for i in range(p.n) for j in range(p.n)}
    recovered = {a: plan[a].subs(slot_binds) for a in p.group.params}

    iso_solved: dict[Symbol, Expr] = {}
    conditions: list[str] = []
    for res in active:
        b = targets[res.label]
        eq = (res.expr.subs(recovered) - ctx.expr(b)).subs(iso_solved)
        hit = _solve_residual_for_param(eq, h_params)
        if hit is None:
            raise ReductionNeeded(
                f"isotropy equation for residual {res.label} not solvable by triangular elimination",
                [res.expr],
            )
        a, val = hit
        iso_solved = {s: v.subs({a: val}) for s, v in iso_solved.items()}
        iso_solved[a] = val
        conditions.append(f"{a.name} = {val}")

    new_params = tuple(a for a in h_params if a not in iso_solved)
    new_entries = [[e.subs(iso_solved) for e in row] for row in h_group.entries]
    new_group = ParamGroup(
        ctx,
        p.n,
        new_params,
        new_entries,
        {a: h_group.identity_values[a] for a in new_params},
    )
    new_group.validate()
    if new_group.r != p.group.r - len(active):
        raise ReductionNeeded("isotropy dimension does not match the number of residuals")

    new_transition = mat_mul(section_matrix, p.coframe.transition)
    new_coframe = Coframe(p.chart, p.coframe.names, new_transition)
    prov = list(p.provenance)
    prov.append(
        "reduced structure group from dim {} to dim {}; isotropy: {}".format(
            p.group.r, new_group.r, "; ".join(conditions)
        )
    )
    return GStructureProblem(ctx, p.chart, new_coframe, new_group, p.stage + 1, prov, p.title)


def cartan_characters(
    p: GStructureProblem,
    sol: AbsorptionSolution,
    rng: random.Random | None = None,
) -> CharacterReport:
    """Reduced characters from the constant F-table; test r2 = sum i s_i."""
    rng = rng or random.Random(0)
    ctx = p.ctx
    n, r = p.n, p.group.r
    F = sol.system.data.mc.F

    def build_rows(v: Sequence[Expr]) -> list[list[Expr]]:
        rows = []
        for i in range(n):
            row = []
            for kappa in range(r):
                acc = ctx.zero
                for l in range(n):
                    f = F[(i, l)][kappa]
                    if f:
                        acc = acc + v[l] * ctx.expr(f)
                row.append(acc)
            rows.append(row)
        return rows

    report = reduced_characters(ctx, n, r, build_rows, rng)
    return report.with_fiber_dimension(sol.r2)


def prolonged_group(p: GStructureProblem, sol: AbsorptionSolution) -> ParamGroup:
    """The abelian block-unipotent group [[I, 0], [M(v), I]] with M(v)
    entries P^kappa_j . v, parametrized by the parametric-z directions."""
    ctx = p.ctx
    n, r = p.n, p.group.r
    N = n + r
    vparams = [
        ctx.declare_symbol(f"v{t + 1}_{p.stage + 1}", "group-parameter")
        for t in range(sol.r2)
    ]
    par_index = {unk: t for t, unk in enumerate(sol.parametric)}
    entries = [[ctx.one if i == j else ctx.zero for j in range(N)] for i in range(N)]
    for kappa in range(r):
        for j in range(n):
            prow = sol.P[(kappa, j)]
            acc = ctx.zero
            for c, unk in enumerate(sol.system.unknowns):
                w = prow[c]
                if w and unk in par_index:
                    acc = acc + ctx.expr(w) * ctx.expr(vparams[par_index[unk]])
            entries[n + kappa][j] = acc
    return ParamGroup(ctx, N, tuple(vparams), entries, {v: Fraction(0) for v in vparams})


def prolong(
    p: GStructureProblem,
    sol: AbsorptionSolution,
    chars: CharacterReport | None = None,
) -> GStructureProblem:
    """The G(2)-structure on the absorbed coframe bundle.

    New chart: (x, group parameters); new coframe: (g eta, pi) with
    pi^k = alpha^k - (Q^k_j . (c - lhs)) (g eta)^j; new group: the abelian
    block-unipotent group with M(v) entries P^k_j . v, of dimension r2.
    """
    if chars is None:
        chars = cartan_characters(p, sol)
    if chars.involutive is True:
        raise EngineError("prolongation refused: the problem is involutive")
    ctx = p.ctx
    n, r = p.n, p.group.r
    data = sol.system.data
    gA = data.g_coframe.transition
    mc = data.mc

    new_coords = tuple(p.chart.coords) + tuple(p.group.params)
    new_chart = Chart(ctx, new_coords)
    N = n + r

    rows: list[list[Expr]] = []
    for i in range(n):
        rows.append([gA[i][j] for j in range(n)] + [ctx.zero] * r)
    for kappa in range(r):
        xpart = [ctx.zero] * n
        for j in range(n):
            shift = sol.z_affine_part(kappa, j)
            if shift.is_zero():
                continue
            for t in range(n):
                xpart[t] = xpart[t] - shift * gA[j][t]
        apart = [mc.alpha_coeffs[kappa][t] for t in range(r)]
        rows.append(xpart + apart)
    names = tuple(p.coframe.names) + tuple(f"pi{kappa + 1}" for kappa in range(r))
    new_coframe = Coframe(new_chart, names, rows)

    new_group = prolonged_group(p, sol)
    new_group.validate()
    prov = list(p.provenance)
    prov.append(
        f"prolonged to the G(2)-structure: chart dim {n} -> {N}, group dim {sol.r2}"
    )
    return GStructureProblem(ctx, new_chart, new_coframe, new_group, p.stage + 1, prov, p.title)


@dataclass
class Policy:
    max_loops: int = 10
    seed: int = 0
    target_overrides: dict[str, Fraction] = field(default_factory=dict)


def _choose_targets(
    p: GStructureProblem,
    active: list[TorsionResidual],
    policy: Policy,
    rng: random.Random,
) -> tuple[dict[str, Fraction], list[str]]:
    """Per-residual normalization constants: overrides, else 0, else the
    generic sign of the residual on the positive branch."""
    ctx = p.ctx
    targets: dict[str, Fraction] = {}
    notes: list[str] = []
    for res in active:
        if res.label in policy.target_overrides:
            targets[res.label] = Fraction(policy.target_overrides[res.label])
            notes.append(f"residual {res.label}: target {targets[res.label]} (override)")
            continue
        candidates = [Fraction(0)]
        point = _generic_point_for([res.expr], p.group, rng, positive=True)
        idpoint = dict(point)
        for a in p.group.params:
            if a in idpoint:
                idpoint[a] = p.group.identity_values[a]
        try:
            sign = res.expr.eval_at(idpoint)
        except PoleError:
            sign = res.expr.eval_at(point)
        if sign > 0:
            candidates += [Fraction(1), Fraction(-1)]
        else:
            candidates += [Fraction(-1), Fraction(1)]
        chosen = None
        for b in candidates:
            if _solve_residual_for_param(res.expr - ctx.expr(b), p.group.params) is not None:
                chosen = b
                break
        if chosen is None:
            chosen = candidates[1]
        targets[res.label] = chosen
        notes.append(f"residual {res.label}: target {chosen} (automatic)")
    return targets, notes


@dataclass
class LoopRecord:
    stage: int
    chart_dim: int
    group_dim: int
    data: StructureData
    solution: AbsorptionSolution
    classification: TorsionClassification
    characters: CharacterReport
    action: str
    action_detail: dict
    targets: dict[str, Fraction] = field(default_factory=dict)


@dataclass
class EquivalenceResult:
    problem: GStructureProblem
    outcome: str  # involutive | e-structure | constant-type-violation | cap-exceeded
    loops: list[LoopRecord]
    final: GStructureProblem
    invariants: list[Expr] = field(default_factory=list)
    policy: Policy = field(default_factory=Policy)


def run_loop(p: GStructureProblem, policy: Policy | None = None) -> EquivalenceResult:
    """Iterate compute -> absorb -> classify -> {reduce | test | prolong}."""
    policy = policy or Policy()
    rng = random.Random(policy.seed)
    loops: list[LoopRecord] = []
    current = p
    initial_trivial = p.group.r == 0
    for _ in range(policy.max_loops):
        if current.group.r == 0 and not (initial_trivial and current.stage == p.stage):
            return EquivalenceResult(p, "e-structure", loops, current, policy=policy)
        data = compute_structure_data(current)
        system = build_absorption(current, data, "normalized")
        sol = solve_absorption(system)
        classification = classify_torsion(sol, rng)
        chars = cartan_characters(current, sol, rng)
        if classification.genuine or not classification.full_rank:
            invs = [sol.torsion[i].expr for i in classification.genuine]
            rec = LoopRecord(
                current.stage, current.n, current.group.r, data, sol, classification,
                chars, "halt", {"reason": "constant-type violation"},
            )
            loops.append(rec)
            return EquivalenceResult(p, "constant-type-violation", loops, current, invs, policy)
        active = [sol.torsion[i] for i in classification.group_dependent()]
        if active:
            targets, notes = _choose_targets(current, active, policy, rng)
            reduced = reduce_group(current, sol, targets, rng)
            assert reduced.group.r < current.group.r
            rec = LoopRecord(
                current.stage, current.n, current.group.r, data, sol, classification,
                chars, "reduce",
                {"notes": notes, "new_group_dim": reduced.group.r,
                 "provenance": reduced.provenance[-1]},
                targets,
            )
            loops.append(rec)
            current = reduced
            continue
        if chars.involutive:
            rec = LoopRecord(
                current.stage, current.n, current.group.r, data, sol, classification,
                chars, "involutive", {},
            )
            loops.append(rec)
            return EquivalenceResult(p, "involutive", loops, current, policy=policy)
        prolonged = prolong(current, sol, chars)
        assert prolonged.n > current.n
        rec = LoopRecord(
            current.stage, current.n, current.group.r, data, sol, classification,
            chars, "prolong",
            {"new_chart_dim": prolonged.n, "new_group_dim": prolonged.group.r},
        )
        loops.append(rec)
        current = prolonged
    return EquivalenceResult(p, "cap-exceeded", loops, current, policy=policy)
