"""Tour of the exact rational expression kernel.

Everything downstream (forms, groups, the equivalence loop) runs on these
canonical expressions: exact rational arithmetic, decidable zero-testing,
and opaque function symbols whose mixed partials commute by construction.
"""

from fractions import Fraction

from cartaneq import Context


def main():
    ctx = Context()
    x, u, p = ctx.declare_symbols(["x", "u", "p"], "coordinate")
    ctx.declare_opaque("L", ["x", "u", "p"])

    print("-- canonical forms --")
    e = ctx.parse("(x^2 - 1)/(x - 1)")
    print("(x^2 - 1)/(x - 1) canonicalizes to:", e)
    print("structural equality decides zero-testing:",
          ctx.parse("(x+1)*(x-1) - x^2 + 1").is_zero())

    print("\n-- opaque functions and the chain rule --")
    Et = ctx.parse("L_u(x,u,p) - L_xp(x,u,p) - p*L_up(x,u,p)")
    print("truncated Euler-Lagrange expression:", Et)
    print("its p-derivative (the L_up terms cancel exactly):", Et.diff(p))
    print("mixed partials are the same atom:",
          ctx.parse("L_px(x,u,p) - L_xp(x,u,p)").is_zero())

    print("\n-- substitution and exact evaluation --")
    a1 = ctx.declare_symbol("a1", "group-parameter")
    a4 = ctx.declare_symbol("a4", "group-parameter")
    H = ctx.parse("-(a4^2)/(a1*L_pp(x,u,p))")
    print("torsion residual:", H)
    section = H.subs({a1: ctx.parse("1/L_pp(x,u,p)"), a4: ctx.one})
    print("on the normalization section a1 = 1/L_pp, a4 = 1 it becomes:", section)
    L = ctx.get_opaque("L")
    atom = ctx.atom(L, [ctx.sym("x"), ctx.sym("u"), ctx.sym("p")], [0, 0, 2])
    val = H.eval_at({a1: Fraction(1), a4: Fraction(2), atom: Fraction(4)})
    print("numeric probe at a1=1, a4=2, L_pp=4:", val)

    print("\n-- print/parse round trip --")
    print("parse(str(H)) == H:", ctx.parse(str(H)) == H)


if __name__ == "__main__":
    main()
