"""Cartan's equivalence method for G-structures, executable.

The package implements one full loop of the equivalence method (structure
data, absorption of torsion, normalization and reduction of the structure
group, reduced Cartan characters, Cartan's test, prolongation) over an exact
rational expression kernel, together with the classical jet-space completion
machinery, so that both routes can be run on the same problem and compared.
"""

from .exprs import Context, Expr, ExprError, OpaqueAtom, OpaqueFunc, Symbol
from .parsing import ParseError, parse_expr

__all__ = [
    "Context",
    "Expr",
    "ExprError",
    "OpaqueAtom",
    "OpaqueFunc",
    "Symbol",
    "ParseError",
    "parse_expr",
]

__version__ = "0.1.0"
