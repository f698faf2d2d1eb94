"""Parametrized matrix Lie groups and their right-invariant form bases.

A group is given parametrically: an n x n matrix of expressions in r group
parameters, with stated identity parameter values and optional membership
equations cutting the group out of GL(n).  The right Maurer-Cartan matrix
dg g^{-1} yields a basis of invariant one-forms; every entry of dg g^{-1} is a
rational-constant combination of the basis, and that constancy is asserted,
not assumed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .exprs import Context, Expr, ExprError, Symbol
from .linalg import SingularMatrixError, mat_det, mat_inverse, symbolic_rank

__all__ = [
    "GroupError",
    "ParamGroup",
    "MCBasis",
    "group_inverse",
    "right_mc",
    "check_closure",
    "recover_params",
    "derive_membership",
    "slot_symbols",
    "solve_linear_in",
    "normalize_sign",
]


class GroupError(ExprError):
    pass


def slot_symbols(ctx: Context, n: int) -> list[list[Symbol]]:
    """Matrix-slot symbols g11..gnn used by membership equations."""
    if n > 9:
        raise GroupError("slot symbol convention gij supports n <= 9")
    return [
        [ctx.declare_symbol(f"g{i + 1}{j + 1}", "auxiliary") for j in range(n)]
        for i in range(n)
    ]


def normalize_sign(e: Expr) -> Expr:
    """Scale by -1 when the leading numerator coefficient is negative."""
    from .exprs import _plead  # internal, stable

    if e.is_zero():
        return e
    _, c = _plead(e._num)
    return -e if c < 0 else e


def solve_linear_in(e: Expr, atom) -> Expr | None:
    """Solve e = 0 for an atom occurring to degree exactly 1 in the numerator.

    Returns the solution expression (free of the atom) or None when the
    equation is not linear in it.
    """
    from .exprs import _as_univar, _ONE

    uni = _as_univar(e._num, atom)
    if set(uni) - {0, 1} or 1 not in uni:
        return None
    ctx = e.ctx
    c1 = Expr(ctx, uni[1], {(): _ONE})
    if atom in set(c1.atoms()):
        return None
    c0 = Expr(ctx, uni.get(0, {}), {(): _ONE})
    return -c0 / c1


def solve_power_in(e: Expr, atom) -> Expr | None:
    """Solve e = 0 for atom when the numerator is c_d atom^d + c_0.

    Only pure powers with an exact rational d-th root on a constant right side
    are accepted beyond the linear case; sign is chosen positive.
    """
    from .exprs import _as_univar, _ONE

    uni = _as_univar(e._num, atom)
    degs = sorted(uni)
    if degs == [0, 1] or degs == [1]:
        return solve_linear_in(e, atom)
    if len(degs) != 2 or degs[0] != 0:
        return None
    d = degs[1]
    ctx = e.ctx
    cd = Expr(ctx, uni[d], {(): _ONE})
    if atom in set(cd.atoms()):
        return None
    c0 = Expr(ctx, uni[0], {(): _ONE})
    rhs = -c0 / cd
    val = rhs.as_fraction()
    if val is None or val < 0:
        return None
    num = _iroot(val.numerator, d)
    den = _iroot(val.denominator, d)
    if num is None or den is None:
        return None
    return ctx.expr(Fraction(num, den))


def _iroot(v: int, d: int) -> int | None:
    if v < 0:
        return None
    r = round(v ** (1.0 / d))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**d == v:
            return cand
    return None


@dataclass
class ParamGroup:
    """A parametrized subgroup of GL(n) with exact identity values."""

    ctx: Context
    n: int
    params: tuple[Symbol, ...]
    entries: list[list[Expr]]
    identity_values: dict[Symbol, Fraction]
    membership_eqs: list[Expr] | None = None

    def __post_init__(self):
        self.params = tuple(self.params)
        self.entries = [[self.ctx.expr(e) for e in row] for row in self.entries]
        if len(self.entries) != self.n or any(len(r) != self.n for r in self.entries):
            raise GroupError("entry matrix must be n x n")
        if len(self.params) > self.n * self.n:
            raise GroupError("more parameters than matrix slots")
        self.identity_values = {s: Fraction(v) for s, v in self.identity_values.items()}
        if set(self.identity_values) != set(self.params):
            raise GroupError("identity values must cover exactly the group parameters")

    @property
    def r(self) -> int:
        return len(self.params)

    def validate(self):
        ident = self.at(self.identity_values)
        for i in range(self.n):
            for j in range(self.n):
                want = Fraction(1 if i == j else 0)
                if ident[i][j] != want:
                    raise GroupError(
                        f"identity values do not give the identity matrix at slot ({i + 1},{j + 1})"
                    )
        if mat_det(self.entries).is_zero():
            raise GroupError("group parametrization has identically zero determinant")

    def at(self, values) -> list[list[Expr]]:
        binds = {s: self.ctx.expr(v) for s, v in values.items()}
        return [[e.subs(binds) for e in row] for row in self.entries]

    def at_numeric(self, values: dict[Symbol, Fraction]) -> list[list[Fraction]]:
        return [[e.eval_at(values) for e in row] for row in self.entries]

    def with_params(self, new_params: Sequence[Symbol]) -> "ParamGroup":
        """The same parametrization written in fresh parameter symbols."""
        if len(new_params) != self.r:
            raise GroupError("parameter count mismatch")
        binds = dict(zip(self.params, (self.ctx.sym(s.name) for s in new_params)))
        return ParamGroup(
            self.ctx,
            self.n,
            tuple(new_params),
            [[e.subs(binds) for e in row] for row in self.entries],
            {ns: self.identity_values[s] for s, ns in zip(self.params, new_params)},
            self.membership_eqs,
        )


@dataclass
class MCBasis:
    """Basis alpha^1..alpha^r chosen among the entries of dg g^{-1}.

    ``coeff_rows[(i, j)]`` is the coefficient vector of the (i,j) entry of
    dg g^{-1} against the parameter differentials da_1..da_r, and
    ``F[(i, j)]`` the rational constants with entry = sum_k F^{ij}_k alpha^k.
    """

    group: ParamGroup
    slots: list[tuple[int, int]]
    alpha_coeffs: list[list[Expr]]
    coeff_rows: dict[tuple[int, int], list[Expr]]
    F: dict[tuple[int, int], tuple[Fraction, ...]]

    @property
    def r(self) -> int:
        return len(self.slots)

    def F_row(self, i: int, j: int) -> tuple[Fraction, ...]:
        return self.F[(i, j)]


def group_inverse(g: ParamGroup) -> list[list[Expr]]:
    """Exact symbolic inverse of the group matrix."""
    try:
        return mat_inverse(g.entries)
    except SingularMatrixError:
        raise GroupError("group matrix is singular") from None


def right_mc(g: ParamGroup) -> MCBasis:
    """Right Maurer-Cartan matrix dg g^{-1} and a deterministic entry basis.

    Basis rule: first, for each parameter in order, take the first row-major
    entry whose restriction to the identity is exactly that parameter's
    differential; then complete with the remaining row-major entries that are
    independent over the function field.
    """
    ctx = g.ctx
    if g.r == 0:
        return MCBasis(g, [], [], {(i, j): [] for i in range(g.n) for j in range(g.n)}, {(i, j): () for i in range(g.n) for j in range(g.n)})
    inv = group_inverse(g)
    coeff_rows: dict[tuple[int, int], list[Expr]] = {}
    ident_rows: dict[tuple[int, int], list[Fraction]] = {}
    id_binds = {s: ctx.expr(v) for s, v in g.identity_values.items()}
    for i in range(g.n):
        for j in range(g.n):
            vec = []
            for a in g.params:
                acc = ctx.zero
                for m in range(g.n):
                    d = g.entries[i][m].diff(a)
                    if not d.is_zero():
                        acc = acc + d * inv[m][j]
                vec.append(acc)
            coeff_rows[(i, j)] = vec
            ident = []
            for e in vec:
                val = e.subs(id_binds).as_fraction()
                if val is None:
                    raise GroupError("entries must be expressions in the group parameters only")
                ident.append(val)
            ident_rows[(i, j)] = ident

    order = [(i, j) for i in range(g.n) for j in range(g.n)]
    chosen: list[tuple[int, int] | None] = [None] * g.r
    taken: set[tuple[int, int]] = set()
    for k in range(g.r):
        unit = [Fraction(1 if t == k else 0) for t in range(g.r)]
        for slot in order:
            if slot not in taken and ident_rows[slot] == unit:
                chosen[k] = slot
                taken.add(slot)
                break
    basis_rows = [coeff_rows[s] for s in chosen if s is not None]
    for k in range(g.r):
        if chosen[k] is not None:
            continue
        for slot in order:
            if slot in taken:
                continue
            cand = basis_rows + [coeff_rows[slot]]
            if symbolic_rank(cand) == len(cand):
                chosen[k] = slot
                taken.add(slot)
                basis_rows = cand
                break
        if chosen[k] is None:
            raise GroupError("fewer independent Maurer-Cartan entries than group parameters")

    slots = [s for s in chosen if s is not None]
    alpha_coeffs = [coeff_rows[s] for s in slots]

    # Express every entry in the basis: solve the r x r system once.
    A = [[alpha_coeffs[k][t] for k in range(g.r)] for t in range(g.r)]
    Ainv = mat_inverse(A)
    F: dict[tuple[int, int], tuple[Fraction, ...]] = {}
    for slot in order:
        w = coeff_rows[slot]
        fs = []
        for k in range(g.r):
            acc = ctx.zero
            for t in range(g.r):
                acc = acc + Ainv[k][t] * w[t]
            val = acc.as_fraction()
            if val is None:
                raise GroupError(
                    f"entry {slot} of dg g^-1 is not a constant combination of the basis; "
                    "the parametrization is not a matrix group"
                )
            fs.append(val)
        # exact reconstruction check
        for t in range(g.r):
            acc = ctx.zero
            for k in range(g.r):
                acc = acc + ctx.expr(fs[k]) * alpha_coeffs[k][t]
            if not (acc - w[t]).is_zero():
                raise GroupError(f"Maurer-Cartan reconstruction failed at entry {slot}")
        F[slot] = tuple(fs)
    return MCBasis(g, slots, alpha_coeffs, coeff_rows, F)


def _random_point(g: ParamGroup, rng: random.Random) -> dict[Symbol, Fraction]:
    for _ in range(60):
        vals = {}
        for s in g.params:
            base = g.identity_values[s]
            vals[s] = base + Fraction(rng.randint(-6, 6), rng.randint(1, 4))
        try:
            m = g.at_numeric(vals)
        except ExprError:
            continue
        det = _numeric_det(m)
        if det != 0:
            return vals
    raise GroupError("could not sample a generic group element")


def _numeric_det(m: list[list[Fraction]]) -> Fraction:
    n = len(m)
    a = [row[:] for row in m]
    det = Fraction(1)
    for col in range(n):
        piv = None
        for r in range(col, n):
            if a[r][col] != 0:
                piv = r
                break
        if piv is None:
            return Fraction(0)
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            det = -det
        det *= a[col][col]
        for r in range(col + 1, n):
            if a[r][col] == 0:
                continue
            f = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
    return det


def check_closure(g: ParamGroup, samples: int = 5, rng: random.Random | None = None) -> tuple[bool, list[str]]:
    """Sample pairs of elements and test that the product is in the group."""
    if samples < 1:
        raise GroupError("samples must be at least 1")
    rng = rng or random.Random(0)
    notes: list[str] = []
    eqs = g.membership_eqs
    plan = None
    if eqs is None:
        plan = recover_params(g)
        if plan is None:
            return False, ["no membership equations and parameter recovery failed"]
        slots = slot_symbols(g.ctx, g.n)
    for t in range(samples):
        va = _random_point(g, rng)
        vb = _random_point(g, rng)
        ma = g.at_numeric(va)
        mb = g.at_numeric(vb)
        prod = [
            [sum(ma[i][k] * mb[k][j] for k in range(g.n)) for j in range(g.n)]
            for i in range(g.n)
        ]
        if eqs is not None:
            binding = {}
            ss = slot_symbols(g.ctx, g.n)
            for i in range(g.n):
                for j in range(g.n):
                    binding[ss[i][j]] = prod[i][j]
            for eq in eqs:
                if eq.eval_at(binding) != 0:
                    notes.append(f"sample {t}: product violates membership equation {eq}")
                    return False, notes
        else:
            binding = {}
            for i in range(g.n):
                for j in range(g.n):
                    binding[slots[i][j]] = prod[i][j]
            try:
                rec = {s: plan[s].eval_at(binding) for s in g.params}
            except ExprError as exc:
                notes.append(f"sample {t}: parameter recovery failed numerically ({exc})")
                return False, notes
            back = g.at_numeric(rec)
            if back != prod:
                notes.append(f"sample {t}: product is outside the parametrized image")
                return False, notes
    notes.append(f"{samples} closure samples passed")
    return True, notes


def recover_params(g: ParamGroup) -> dict[Symbol, Expr] | None:
    """Express the parameters in the matrix slots by triangular elimination."""
    ctx = g.ctx
    slots = slot_symbols(ctx, g.n)
    solved: dict[Symbol, Expr] = {}
    remaining = set(g.params)
    progress = True
    while remaining and progress:
        progress = False
        for i in range(g.n):
            for j in range(g.n):
                eq = g.entries[i][j].subs(solved) - ctx.expr(slots[i][j])
                free = [s for s in eq.free_symbols if s in remaining]
                if len(free) != 1:
                    continue
                sol = solve_linear_in(eq, free[0])
                if sol is None:
                    continue
                if any(s in sol.free_symbols for s in remaining if s is not free[0]):
                    continue
                remaining.discard(free[0])
                solved = {s: v.subs({free[0]: sol}) for s, v in solved.items()}
                solved[free[0]] = sol
                progress = True
    if remaining:
        return None
    return solved


def derive_membership(g: ParamGroup) -> list[Expr] | None:
    """Defining equations of the group in the matrix slots, when recoverable."""
    plan = recover_params(g)
    if plan is None:
        return None
    ctx = g.ctx
    slots = slot_symbols(ctx, g.n)
    from .exprs import Expr as _Expr, _ONE

    eqs = []
    for i in range(g.n):
        for j in range(g.n):
            e = g.entries[i][j].subs(plan) - ctx.expr(slots[i][j])
            if not e.is_zero():
                # clear the denominator: only the zero set matters
                eqs.append(normalize_sign(_Expr(ctx, e._num, {(): _ONE})))
    return eqs


def membership_equations(g: ParamGroup) -> list[Expr]:
    """Given or derived membership equations; raises when unavailable."""
    if g.membership_eqs is not None:
        return g.membership_eqs
    eqs = derive_membership(g)
    if eqs is None:
        raise GroupError(
            "group has no membership equations and the parametrization is not "
            "recoverable by triangular elimination"
        )
    return eqs
