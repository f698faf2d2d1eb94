"""Exact rational expression kernel.

Every scalar in the package is an :class:`Expr`: a canonical fraction of
multivariate polynomials with ``fractions.Fraction`` coefficients.  The
indeterminates ("atoms") are either declared :class:`Symbol` objects or
:class:`OpaqueAtom` applications of undetermined functions which carry an
accumulated multi-index of partial derivatives (so mixed partials commute by
construction).

Canonical form: gcd(numerator, denominator) = 1 and the denominator is monic
with respect to a fixed graded-lexicographic monomial order.  Two Expr values
are structurally equal iff they are equal as rational expressions, which makes
``is_zero`` (and hence all rank computations downstream) decidable.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, Union

__all__ = [
    "ExprError",
    "PoleError",
    "SingularSubstitutionError",
    "UnboundAtomError",
    "Symbol",
    "OpaqueFunc",
    "OpaqueAtom",
    "Context",
    "Expr",
    "Scalar",
]

KINDS = ("coordinate", "group-parameter", "jet-variable", "auxiliary")


class ExprError(Exception):
    """Base error of the expression kernel."""


class PoleError(ExprError):
    """Numeric evaluation hit a zero denominator."""


class SingularSubstitutionError(ExprError):
    """A substitution made a denominator vanish identically."""


class UnboundAtomError(ExprError):
    """Numeric evaluation found an atom without a binding."""


class Symbol:
    """A declared indeterminate with a fixed kind and creation order."""

    __slots__ = ("name", "kind", "order", "_key")

    def __init__(self, name: str, kind: str, order: int):
        if kind not in KINDS:
            raise ExprError(f"unknown symbol kind {kind!r}")
        self.name = name
        self.kind = kind
        self.order = order
        self._key = (0, order)

    @property
    def sort_key(self):
        return self._key

    def __repr__(self):
        return f"Symbol({self.name})"

    def __str__(self):
        return self.name


class OpaqueFunc:
    """An undetermined function symbol with named argument slots."""

    __slots__ = ("name", "slots", "order")

    def __init__(self, name: str, slots: tuple[str, ...], order: int):
        if len(slots) < 1:
            raise ExprError("opaque function needs at least one argument slot")
        if len(set(slots)) != len(slots):
            raise ExprError(f"duplicate slot names in {name}")
        self.name = name
        self.slots = slots
        self.order = order

    @property
    def arity(self) -> int:
        return len(self.slots)

    def __repr__(self):
        return f"OpaqueFunc({self.name}({', '.join(self.slots)}))"


class OpaqueAtom:
    """An application of an OpaqueFunc, with accumulated partial derivatives.

    ``deriv`` counts derivatives per argument slot; it is a multiset, so the
    atom for L_px and L_xp is the identical object.  Atoms are interned by the
    owning Context, so identity comparison is safe inside polynomial dicts.
    """

    __slots__ = ("func", "deriv", "args", "_key", "_free", "_hash")

    def __init__(self, func: OpaqueFunc, deriv: tuple[int, ...], args: tuple["Expr", ...]):
        self.func = func
        self.deriv = deriv
        self.args = args
        self._key = (1, func.order, deriv, tuple(a._struct_key() for a in args))
        free: set[Symbol] = set()
        for a in args:
            free |= a.free_symbols
        self._free = frozenset(free)
        self._hash = hash(self._key)

    @property
    def sort_key(self):
        return self._key

    @property
    def name(self) -> str:
        suffix = "".join(s * d for s, d in zip(self.func.slots, self.deriv))
        return self.func.name + ("_" + suffix if suffix else "")

    def __str__(self):
        return f"{self.name}({', '.join(str(a) for a in self.args)})"

    def __repr__(self):
        return f"OpaqueAtom({self})"


Atom = Union[Symbol, OpaqueAtom]
Scalar = Union[int, Fraction, "Expr"]

# A monomial is a tuple of (atom, positive exponent) pairs sorted by atom
# sort_key; () is the monomial 1.  A polynomial is a dict monomial -> Fraction
# with no zero coefficients.
Mono = tuple
Poly = dict


def _mono_mul(a: Mono, b: Mono) -> Mono:
    if not a:
        return b
    if not b:
        return a
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        ka, kb = a[i][0].sort_key, b[j][0].sort_key
        if ka == kb:
            out.append((a[i][0], a[i][1] + b[j][1]))
            i += 1
            j += 1
        elif ka < kb:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return tuple(out)


def _mono_cmp(a: Mono, b: Mono) -> int:
    """Graded lex; atoms with smaller sort_key are the more significant."""
    da = sum(e for _, e in a)
    db = sum(e for _, e in b)
    if da != db:
        return -1 if da < db else 1
    i = j = 0
    while i < len(a) and j < len(b):
        ka, kb = a[i][0].sort_key, b[j][0].sort_key
        if ka < kb:
            return 1
        if kb < ka:
            return -1
        if a[i][1] != b[j][1]:
            return 1 if a[i][1] > b[j][1] else -1
        i += 1
        j += 1
    if i < len(a):
        return 1
    if j < len(b):
        return -1
    return 0


def _mono_divides(d: Mono, m: Mono) -> bool:
    j = 0
    for atom, e in d:
        while j < len(m) and m[j][0].sort_key < atom.sort_key:
            j += 1
        if j >= len(m) or m[j][0] is not atom or m[j][1] < e:
            return False
    return True


def _mono_div(m: Mono, d: Mono) -> Mono:
    out = []
    j = 0
    for atom, e in m:
        ed = 0
        for a2, e2 in d:
            if a2 is atom:
                ed = e2
                break
        if e - ed > 0:
            out.append((atom, e - ed))
    return tuple(out)


def _mono_gcd(a: Mono, b: Mono) -> Mono:
    out = []
    for atom, e in a:
        for a2, e2 in b:
            if a2 is atom:
                out.append((atom, min(e, e2)))
                break
    return tuple(out)


_ZERO = Fraction(0)
_ONE = Fraction(1)


def _padd(p: Poly, q: Poly) -> Poly:
    out = dict(p)
    for m, c in q.items():
        s = out.get(m, _ZERO) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def _pneg(p: Poly) -> Poly:
    return {m: -c for m, c in p.items()}


def _pscale(p: Poly, c: Fraction) -> Poly:
    if not c:
        return {}
    return {m: cc * c for m, cc in p.items()}


def _pmul(p: Poly, q: Poly) -> Poly:
    if not p or not q:
        return {}
    if len(p) > len(q):
        p, q = q, p
    out: Poly = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            m = _mono_mul(m1, m2)
            s = out.get(m, _ZERO) + c1 * c2
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def _ppow(p: Poly, n: int) -> Poly:
    result = {(): _ONE}
    base = p
    while n:
        if n & 1:
            result = _pmul(result, base)
        n >>= 1
        if n:
            base = _pmul(base, base)
    return result


def _plead(p: Poly) -> tuple[Mono, Fraction]:
    it = iter(p.items())
    best = next(it)
    for item in it:
        if _mono_cmp(item[0], best[0]) > 0:
            best = item
    return best


def _pmonic(p: Poly) -> Poly:
    if not p:
        return p
    _, c = _plead(p)
    if c == 1:
        return p
    return _pscale(p, 1 / c)


def _pconst(p: Poly) -> Fraction | None:
    if not p:
        return _ZERO
    if len(p) == 1 and () in p:
        return p[()]
    return None


def _pmono_content(p: Poly) -> Mono:
    it = iter(p)
    g = next(it)
    for m in it:
        if not g:
            break
        g = _mono_gcd(g, m)
    return g


def _patoms(p: Poly) -> set:
    out = set()
    for m in p:
        for atom, _ in m:
            out.add(atom)
    return out


def _pdiv_exact(p: Poly, d: Poly) -> Poly:
    """Divide p by d, asserting the division is exact."""
    if not d:
        raise ZeroDivisionError("polynomial division by zero")
    dc = _pconst(d)
    if dc is not None:
        return _pscale(p, 1 / dc)
    out: Poly = {}
    rem = dict(p)
    dl_m, dl_c = _plead(d)
    while rem:
        rl_m, rl_c = _plead(rem)
        if not _mono_divides(dl_m, rl_m):
            raise ExprError("inexact polynomial division")
        qm = _mono_div(rl_m, dl_m)
        qc = rl_c / dl_c
        out[qm] = out.get(qm, _ZERO) + qc
        rem = _padd(rem, _pneg(_pmul({qm: qc}, d)))
    return {m: c for m, c in out.items() if c}


def _as_univar(p: Poly, v: Atom) -> dict[int, Poly]:
    out: dict[int, Poly] = {}
    for m, c in p.items():
        deg = 0
        rest = []
        for atom, e in m:
            if atom is v:
                deg = e
            else:
                rest.append((atom, e))
        coeff = out.setdefault(deg, {})
        rm = tuple(rest)
        s = coeff.get(rm, _ZERO) + c
        if s:
            coeff[rm] = s
        else:
            coeff.pop(rm, None)
    return {d: c for d, c in out.items() if c}


def _from_univar(u: dict[int, Poly], v: Atom) -> Poly:
    out: Poly = {}
    for deg, coeff in u.items():
        vm = ((v, deg),) if deg else ()
        for m, c in coeff.items():
            mm = _mono_mul(m, vm)
            s = out.get(mm, _ZERO) + c
            if s:
                out[mm] = s
            else:
                out.pop(mm, None)
    return out


def _u_content(u: dict[int, Poly]) -> Poly:
    g: Poly = {}
    for coeff in u.values():
        g = _pgcd(g, coeff)
        if _pconst(g) is not None and g:
            return {(): _ONE}
    return g


def _u_primitive(u: dict[int, Poly]) -> dict[int, Poly]:
    cont = _u_content(u)
    if _pconst(cont) == 1:
        return u
    return {d: _pdiv_exact(c, cont) for d, c in u.items()}


def _u_scale(u: dict[int, Poly], f: Poly) -> dict[int, Poly]:
    return {d: _pmul(c, f) for d, c in u.items()}


def _u_sub(a: dict[int, Poly], b: dict[int, Poly]) -> dict[int, Poly]:
    out = {d: dict(c) for d, c in a.items()}
    for d, c in b.items():
        s = _padd(out.get(d, {}), _pneg(c))
        if s:
            out[d] = s
        else:
            out.pop(d, None)
    return out


def _prem(a: dict[int, Poly], b: dict[int, Poly]) -> dict[int, Poly]:
    """Pseudo-remainder of univariate polynomials with Poly coefficients."""
    db = max(b)
    lb = b[db]
    r = a
    while r and max(r) >= db:
        dr = max(r)
        lr = r[dr]
        shifted = {d + dr - db: _pmul(c, lr) for d, c in b.items()}
        r = _u_sub(_u_scale(r, lb), shifted)
    return r


def _peval_int(p: Poly, point: dict) -> Fraction:
    total = _ZERO
    for m, c in p.items():
        val = c
        for atom, e in m:
            val *= point[id(atom)] ** e
        total += val
    return total


def _univar_fraction_gcd_degree(a: dict[int, Fraction], b: dict[int, Fraction]) -> int:
    """Degree of gcd of univariate polynomials over Q (dense Euclid)."""
    da, db = max(a), max(b)
    A = [a.get(i, _ZERO) for i in range(da + 1)]
    B = [b.get(i, _ZERO) for i in range(db + 1)]
    while B and any(B):
        while B and B[-1] == 0:
            B.pop()
        if len(B) == 0:
            break
        if len(A) < len(B):
            A, B = B, A
            continue
        lb = B[-1]
        while len(A) >= len(B):
            la = A[-1]
            if la:
                shift = len(A) - len(B)
                f = la / lb
                for i in range(len(B)):
                    A[i + shift] -= f * B[i]
            A.pop()
            while A and A[-1] == 0:
                A.pop()
            if not A:
                break
        A, B = B, A
    while A and A[-1] == 0:
        A.pop()
    return len(A) - 1 if A else -1


def _gcd_probe_trivial(p1: Poly, q1: Poly, v: Atom) -> bool:
    """Sound probe: True when gcd(p1, q1) certainly has no v-dependence.

    Evaluates every other atom at a fixed point; valid whenever the leading
    v-coefficients of both inputs survive the evaluation."""
    others = [a for a in (_patoms(p1) | _patoms(q1)) if a is not v]
    au = _as_univar(p1, v)
    bu = _as_univar(q1, v)
    for shiftbase in (2, 17, 53):
        point = {id(a): Fraction(shiftbase + 3 * i) for i, a in enumerate(others)}
        try:
            ae = {d: _peval_int(c, point) for d, c in au.items()}
            be = {d: _peval_int(c, point) for d, c in bu.items()}
        except KeyError:
            return False
        if ae[max(au)] == 0 or be[max(bu)] == 0:
            continue
        ae = {d: c for d, c in ae.items() if c}
        be = {d: c for d, c in be.items() if c}
        if not ae or not be:
            continue
        if _univar_fraction_gcd_degree(ae, be) == 0:
            return True
        return False
    return False


def _pgcd(p: Poly, q: Poly) -> Poly:
    """Monic gcd of multivariate polynomials over the rationals."""
    if not p:
        return _pmonic(q)
    if not q:
        return _pmonic(p)
    if _pconst(p) is not None or _pconst(q) is not None:
        return {(): _ONE}
    mp = _pmono_content(p)
    mq = _pmono_content(q)
    mg = _mono_gcd(mp, mq)
    p1 = {_mono_div(m, mp): c for m, c in p.items()}
    q1 = {_mono_div(m, mq): c for m, c in q.items()}
    if _pconst(p1) is not None or _pconst(q1) is not None:
        return _pmonic({mg: _ONE})
    shared = _patoms(p1) & _patoms(q1)
    if not shared:
        return _pmonic({mg: _ONE})
    v = min(shared, key=lambda a: a.sort_key)
    if _gcd_probe_trivial(p1, q1, v):
        ca = _u_content(_as_univar(p1, v))
        cb = _u_content(_as_univar(q1, v))
        inner = _pgcd(ca, cb)
        return _pmonic(_pmul({mg: _ONE}, inner))
    a = _as_univar(p1, v)
    b = _as_univar(q1, v)
    if 0 in a and len(a) == 1:
        inner = _pgcd(a[0], q1)
        return _pmonic(_pmul({mg: _ONE}, inner))
    if 0 in b and len(b) == 1:
        inner = _pgcd(p1, b[0])
        return _pmonic(_pmul({mg: _ONE}, inner))
    ca = _u_content(a)
    cb = _u_content(b)
    d = _pgcd(ca, cb)
    a = {deg: _pdiv_exact(c, ca) for deg, c in a.items()}
    b = {deg: _pdiv_exact(c, cb) for deg, c in b.items()}
    if max(a) < max(b):
        a, b = b, a
    while True:
        r = _prem(a, b)
        if not r:
            g = b
            break
        if max(r) == 0:
            g = {0: {(): _ONE}}
            break
        a, b = b, _u_primitive(r)
    core = _from_univar(g, v)
    return _pmonic(_pmul(_pmul({mg: _ONE}, d), core))


class Context:
    """Session-level registry of symbols, opaque functions and interned atoms.

    Append-only; Expr values from the same context can be combined freely.
    """

    def __init__(self):
        self._symbols: dict[str, Symbol] = {}
        self._funcs: dict[str, OpaqueFunc] = {}
        self._atoms: dict[tuple, OpaqueAtom] = {}
        self._counter = 0
        self.zero = Expr(self, {}, {(): _ONE})
        self.one = Expr(self, {(): _ONE}, {(): _ONE})

    def _next_order(self) -> int:
        self._counter += 1
        return self._counter

    def declare_symbol(self, name: str, kind: str = "auxiliary") -> Symbol:
        if name in self._symbols:
            existing = self._symbols[name]
            if existing.kind != kind:
                raise ExprError(f"symbol {name!r} already declared with kind {existing.kind!r}")
            return existing
        if name in self._funcs:
            raise ExprError(f"name {name!r} already used by an opaque function")
        sym = Symbol(name, kind, self._next_order())
        self._symbols[name] = sym
        return sym

    def declare_symbols(self, names: Iterable[str], kind: str = "auxiliary") -> list[Symbol]:
        return [self.declare_symbol(n, kind) for n in names]

    def declare_opaque(self, name: str, slots: Sequence[str]) -> OpaqueFunc:
        if name in self._funcs:
            existing = self._funcs[name]
            if existing.slots != tuple(slots):
                raise ExprError(f"opaque function {name!r} already declared with other slots")
            return existing
        if name in self._symbols:
            raise ExprError(f"name {name!r} already used by a symbol")
        fn = OpaqueFunc(name, tuple(slots), self._next_order())
        self._funcs[name] = fn
        return fn

    def has_symbol(self, name: str) -> bool:
        return name in self._symbols

    def get_symbol(self, name: str) -> Symbol:
        try:
            return self._symbols[name]
        except KeyError:
            raise ExprError(f"unknown symbol {name!r}") from None

    def get_opaque(self, name: str) -> OpaqueFunc | None:
        return self._funcs.get(name)

    def atom(self, func: OpaqueFunc, args: Sequence["Expr"], deriv: Sequence[int] | None = None) -> OpaqueAtom:
        if len(args) != func.arity:
            raise ExprError(f"{func.name} expects {func.arity} arguments, got {len(args)}")
        dv = tuple(deriv) if deriv is not None else (0,) * func.arity
        if len(dv) != func.arity or any(d < 0 for d in dv):
            raise ExprError("bad derivative multi-index")
        args = tuple(self.expr(a) for a in args)
        key = (func.order, dv, tuple(a._struct_key() for a in args))
        atom = self._atoms.get(key)
        if atom is None:
            atom = OpaqueAtom(func, dv, args)
            self._atoms[key] = atom
        return atom

    def apply(self, func: OpaqueFunc, args: Sequence["Expr"], deriv: Sequence[int] | None = None) -> "Expr":
        return Expr.from_atom(self, self.atom(func, args, deriv))

    def sym(self, name: str) -> "Expr":
        return Expr.from_atom(self, self.get_symbol(name))

    def expr(self, value: Scalar) -> "Expr":
        if isinstance(value, Expr):
            if value.ctx is not self:
                raise ExprError("expression belongs to a different context")
            return value
        if isinstance(value, (int, Fraction)):
            f = Fraction(value)
            return Expr(self, {(): f} if f else {}, {(): _ONE})
        if isinstance(value, Symbol):
            return Expr.from_atom(self, value)
        if isinstance(value, OpaqueAtom):
            return Expr.from_atom(self, value)
        raise ExprError(f"cannot coerce {value!r} to Expr")

    def parse(self, text: str) -> "Expr":
        from .parsing import parse_expr

        return parse_expr(text, self)


class Expr:
    """Canonical rational expression; immutable and hashable."""

    __slots__ = ("ctx", "_num", "_den", "_hash", "_skey", "_free")

    def __init__(self, ctx: Context, num: Poly, den: Poly):
        self.ctx = ctx
        self._num = num
        self._den = den
        self._hash = None
        self._skey = None
        self._free = None

    @staticmethod
    def _make(ctx: Context, num: Poly, den: Poly) -> "Expr":
        if not den:
            raise ZeroDivisionError("division by zero expression")
        if not num:
            return ctx.zero
        dc = _pconst(den)
        if dc is None:
            g = _pgcd(num, den)
            if _pconst(g) is None or g[()] != 1:
                num = _pdiv_exact(num, g)
                den = _pdiv_exact(den, g)
            _, lc = _plead(den)
            if lc != 1:
                num = _pscale(num, 1 / lc)
                den = _pscale(den, 1 / lc)
        elif dc != 1:
            num = _pscale(num, 1 / dc)
            den = {(): _ONE}
        return Expr(ctx, num, den)

    @staticmethod
    def from_atom(ctx: Context, atom: Atom) -> "Expr":
        return Expr(ctx, {((atom, 1),): _ONE}, {(): _ONE})

    # -- structure ---------------------------------------------------------

    def _sorted_terms(self, poly: Poly) -> list[tuple[Mono, Fraction]]:
        import functools

        return sorted(poly.items(), key=functools.cmp_to_key(lambda a, b: _mono_cmp(b[0], a[0])))

    def _struct_key(self):
        if self._skey is None:
            def pk(p):
                return tuple(
                    (tuple((a.sort_key, e) for a, e in m), (c.numerator, c.denominator))
                    for m, c in self._sorted_terms(p)
                )

            self._skey = (pk(self._num), pk(self._den))
        return self._skey

    @property
    def free_symbols(self) -> frozenset:
        if self._free is None:
            out: set[Symbol] = set()
            for atom in self.atoms():
                if isinstance(atom, Symbol):
                    out.add(atom)
                else:
                    out |= atom._free
            self._free = frozenset(out)
        return self._free

    def atoms(self) -> Iterator[Atom]:
        """All atoms appearing in numerator or denominator (not recursing
        into opaque arguments)."""
        seen = set()
        for poly in (self._num, self._den):
            for m in poly:
                for atom, _ in m:
                    if id(atom) not in seen:
                        seen.add(id(atom))
                        yield atom

    def all_atoms(self) -> Iterator[Atom]:
        """Atoms including those inside opaque-function arguments."""
        seen = set()
        stack = [self]
        while stack:
            e = stack.pop()
            for atom in e.atoms():
                if id(atom) in seen:
                    continue
                seen.add(id(atom))
                yield atom
                if isinstance(atom, OpaqueAtom):
                    stack.extend(atom.args)

    def is_zero(self) -> bool:
        return not self._num

    def is_one(self) -> bool:
        return self == self.ctx.one

    def as_fraction(self) -> Fraction | None:
        """The exact rational value if the expression is constant, else None."""
        if not self._num:
            return _ZERO
        nc = _pconst(self._num)
        dc = _pconst(self._den)
        if nc is None or dc is None:
            return None
        return nc / dc

    def depends_on(self, s: Symbol) -> bool:
        return s in self.free_symbols

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other: Scalar) -> "Expr | None":
        if isinstance(other, Expr):
            if other.ctx is not self.ctx:
                raise ExprError("mixed expression contexts")
            return other
        if isinstance(other, (int, Fraction)):
            return self.ctx.expr(other)
        return None

    def __add__(self, other: Scalar) -> "Expr":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if self._den == o._den:
            return Expr._make(self.ctx, _padd(self._num, o._num), self._den)
        num = _padd(_pmul(self._num, o._den), _pmul(o._num, self._den))
        return Expr._make(self.ctx, num, _pmul(self._den, o._den))

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr(self.ctx, _pneg(self._num), self._den)

    def __sub__(self, other: Scalar) -> "Expr":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other: Scalar) -> "Expr":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other: Scalar) -> "Expr":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return Expr._make(self.ctx, _pmul(self._num, o._num), _pmul(self._den, o._den))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "Expr":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if o.is_zero():
            raise ZeroDivisionError("division by zero expression")
        return Expr._make(self.ctx, _pmul(self._num, o._den), _pmul(self._den, o._num))

    def __rtruediv__(self, other: Scalar) -> "Expr":
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o / self

    def __pow__(self, n: int) -> "Expr":
        if not isinstance(n, int):
            return NotImplemented
        if n == 0:
            return self.ctx.one
        if n < 0:
            if self.is_zero():
                raise ZeroDivisionError("zero to a negative power")
            return Expr._make(self.ctx, _ppow(self._den, -n), _ppow(self._num, -n))
        return Expr._make(self.ctx, _ppow(self._num, n), _ppow(self._den, n))

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = self.ctx.expr(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self._num == other._num and self._den == other._den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((frozenset(self._num.items()), frozenset(self._den.items())))
        return self._hash

    # -- calculus ----------------------------------------------------------

    def _atom_derivative(self, atom: Atom, s: Symbol) -> "Expr":
        ctx = self.ctx
        if isinstance(atom, Symbol):
            return ctx.one if atom is s else ctx.zero
        if s not in atom._free:
            return ctx.zero
        total = ctx.zero
        for k, arg in enumerate(atom.args):
            darg = arg.diff(s)
            if darg.is_zero():
                continue
            dv = list(atom.deriv)
            dv[k] += 1
            total = total + ctx.apply(atom.func, atom.args, dv) * darg
        return total

    def _poly_diff(self, poly: Poly, s: Symbol) -> "Expr":
        ctx = self.ctx
        total = ctx.zero
        for m, c in poly.items():
            for idx, (atom, e) in enumerate(m):
                if isinstance(atom, Symbol):
                    if atom is not s:
                        continue
                    datom = ctx.one
                else:
                    if s not in atom._free:
                        continue
                    datom = self._atom_derivative(atom, s)
                    if datom.is_zero():
                        continue
                rest = list(m)
                if e == 1:
                    del rest[idx]
                else:
                    rest[idx] = (atom, e - 1)
                term = Expr(ctx, {tuple(rest): c * e}, {(): _ONE})
                total = total + term * datom
        return total

    def diff(self, s: Symbol) -> "Expr":
        """Exact partial derivative; opaque atoms follow the chain rule."""
        if s not in self.free_symbols:
            return self.ctx.zero
        dn = self._poly_diff(self._num, s)
        if _pconst(self._den) is not None:
            return dn / self.ctx.expr(self._den[()])
        dd = self._poly_diff(self._den, s)
        num = Expr(self.ctx, self._num, {(): _ONE})
        den = Expr(self.ctx, self._den, {(): _ONE})
        return (dn * den - num * dd) / (den * den)

    def subs(self, bindings: Mapping[Symbol, Scalar]) -> "Expr":
        """Simultaneous substitution of symbols by expressions."""
        ctx = self.ctx
        bound = {s: ctx.expr(v) for s, v in bindings.items()}
        if not any(s in self.free_symbols for s in bound):
            return self

        cache: dict[int, Expr] = {}

        def image(atom: Atom) -> Expr:
            got = cache.get(id(atom))
            if got is not None:
                return got
            if isinstance(atom, Symbol):
                out = bound.get(atom)
                if out is None:
                    out = Expr.from_atom(ctx, atom)
            elif atom._free.isdisjoint(bound):
                out = Expr.from_atom(ctx, atom)
            else:
                new_args = tuple(sub_expr(a) for a in atom.args)
                out = ctx.apply(atom.func, new_args, atom.deriv)
            cache[id(atom)] = out
            return out

        def sub_poly(poly: Poly) -> Expr:
            total = ctx.zero
            for m, c in poly.items():
                term = ctx.expr(c)
                for atom, e in m:
                    term = term * image(atom) ** e
                total = total + term
            return total

        def sub_expr(e: Expr) -> Expr:
            if not any(s in e.free_symbols for s in bound):
                return e
            n = sub_poly(e._num)
            d = sub_poly(e._den)
            if d.is_zero():
                raise SingularSubstitutionError("substitution makes a denominator vanish identically")
            return n / d

        return sub_expr(self)

    def eval_at(self, point: Mapping[Atom, Fraction | int]) -> Fraction:
        """Exact numeric value with every atom bound to a rational."""

        def eval_poly(poly: Poly) -> Fraction:
            total = _ZERO
            for m, c in poly.items():
                val = c
                for atom, e in m:
                    try:
                        v = point[atom]
                    except KeyError:
                        raise UnboundAtomError(f"no binding for {atom}") from None
                    val *= Fraction(v) ** e
                total += val
            return total

        den = eval_poly(self._den)
        if den == 0:
            raise PoleError(f"denominator vanishes at the given point: {self}")
        return eval_poly(self._num) / den

    # -- printing ----------------------------------------------------------

    def _poly_str(self, poly: Poly) -> str:
        if not poly:
            return "0"
        parts = []
        for m, c in self._sorted_terms(poly):
            factors = []
            for atom, e in m:
                s = str(atom)
                factors.append(s if e == 1 else f"{s}^{e}")
            mag = abs(c)
            if not factors:
                body = str(mag)
            elif mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([str(mag)] + factors)
            parts.append(("-" if c < 0 else "+", body))
        sign, body = parts[0]
        out = ("-" if sign == "-" else "") + body
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __str__(self):
        num = self._poly_str(self._num)
        if _pconst(self._den) is not None:
            return num
        return f"({num})/({self._poly_str(self._den)})"

    def __repr__(self):
        return f"Expr({self})"


def differentiate(e: Expr, s: Symbol) -> Expr:
    return e.diff(s)


def substitute(e: Expr, bindings: Mapping[Symbol, Scalar]) -> Expr:
    return e.subs(bindings)


def is_zero(e: Expr) -> bool:
    return e.is_zero()


def eval_numeric(e: Expr, point: Mapping[Atom, Fraction | int]) -> Fraction:
    return e.eval_at(point)
