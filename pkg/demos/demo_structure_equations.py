"""Structure equations of a coframe: d eta^i = sum B^i_jk eta^j ^ eta^k.

Computes the structure functions of the contact coframe of a first-order
Lagrangian L(x, u, p), the starting data of the divergence-equivalence
problem, and shows the exterior-algebra toolkit along the way.
"""

from cartaneq import Context
from cartaneq.forms import (
    Chart,
    Coframe,
    DiffForm,
    VectorField,
    coordinate_coframe,
    exterior_derivative,
    interior_product,
    structure_functions,
    wedge,
)


def main():
    ctx = Context()
    x, u, p = ctx.declare_symbols(["x", "u", "p"], "coordinate")
    ctx.declare_opaque("L", ["x", "u", "p"])
    chart = Chart(ctx, [x, u, p])

    Et = ctx.parse("L_u(x,u,p) - L_xp(x,u,p) - p*L_up(x,u,p)")
    Lpp = ctx.parse("L_pp(x,u,p)")
    eta = Coframe(
        chart,
        ["eta1", "eta2", "eta3"],
        [[ctx.one, ctx.zero, ctx.zero],
         [-ctx.sym("p"), ctx.one, ctx.zero],
         [-Et, ctx.zero, Lpp]],
    )
    print("coframe: eta1 = dx, eta2 = du - p dx, eta3 = -E dx + L_pp dp")
    print("coframe determinant (must be nonzero):", eta.det())

    print("\n-- structure functions --")
    B = structure_functions(eta)
    for (i, j, k), val in sorted(B.items()):
        if not val.is_zero():
            print(f"B^{i + 1}_({j + 1}{k + 1}) =", val)
    print("(every other entry vanishes; note B^3_(13) = 0: the coframe is adapted)")

    print("\n-- exterior algebra spot checks --")
    cc = coordinate_coframe(chart)
    eta2 = DiffForm(1, cc, {(0,): -ctx.sym("p"), (1,): ctx.one})
    eta3 = DiffForm(1, cc, {(0,): -Et, (2,): Lpp})
    w = wedge(eta2, eta3)
    print("eta2 ^ eta3 =", w)
    d3 = exterior_derivative(eta3)
    print("d eta3 =", d3)
    v = VectorField(cc, [ctx.one, ctx.zero, ctx.zero])
    print("d/dx . (eta2 ^ eta3) =", interior_product(v, w))

    f = DiffForm.function(cc, ctx.parse("L(x,u,p)*x"))
    print("d(d(L x)) is zero:", exterior_derivative(exterior_derivative(f)).is_zero())


if __name__ == "__main__":
    main()
