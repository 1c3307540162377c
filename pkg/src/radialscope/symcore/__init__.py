"""Symbolic expressions, calculus on canonical charts and sampling tests."""

from .calculus import (
    ChartError,
    ChartSpec,
    VectorFieldSym,
    conjugate,
    differentiate,
    hamilton_field,
    homogeneity_degree,
    imag_part,
    poisson_bracket,
    real_part,
    substitute,
)
from .expr import (
    Call,
    Const,
    EvaluationError,
    FunctionDef,
    ImplicitRoot,
    Power,
    Product,
    Quotient,
    Sum,
    SymExpr,
    Var,
    add,
    as_expr,
    call,
    div,
    evaluate,
    implicit_root,
    mul,
    neg,
    node_count,
    power,
    sqrt,
    sub,
)
from .functions import BUILTINS, CutoffFamily, cos, cutoff, exp, log, rsqrtp, sin, sqrtp, tanh
from .parser import ParseError, parse
from .printer import to_string
from .sampling import SampleComparison, equal_on_samples, sample_box

__all__ = [name for name in dir() if not name.startswith("_")]
