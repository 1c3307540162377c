"""Infix printer whose output the parser reads back to an equal tree."""

from __future__ import annotations

from .expr import Call, Const, ImplicitRoot, Power, Product, Quotient, Sum, SymExpr, Var

# binding strength, higher binds tighter
_PREC = {Sum: 1, Product: 2, Quotient: 2, Power: 4}
_ATOM = 5


def _fmt_real(v) -> str:
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _fmt_const(v) -> tuple[str, int]:
    if isinstance(v, complex):
        re, im = v.real, v.imag
        if re == 0:
            body = "I" if im == 1 else f"{_fmt_real(_tidy(im))}*I"
            return (body, _ATOM if im == 1 else 2) if im > 0 else (f"-({_fmt_real(_tidy(-im))}*I)", 3)
        sign = "+" if im >= 0 else "-"
        return f"({_fmt_real(_tidy(re))} {sign} {_fmt_real(_tidy(abs(im)))}*I)", _ATOM
    s = _fmt_real(v)
    return (s, 3) if v < 0 else (s, _ATOM)


def _tidy(x: float):
    return int(x) if float(x).is_integer() and abs(x) < 2**53 else x


def _prec(e: SymExpr) -> int:
    if isinstance(e, Const):
        return _fmt_const(e.value)[1]
    return _PREC.get(type(e), _ATOM)


def _wrap(e: SymExpr, min_prec: int) -> str:
    s = to_string(e)
    return f"({s})" if _prec(e) < min_prec else s


def to_string(e: SymExpr) -> str:
    if isinstance(e, Const):
        return _fmt_const(e.value)[0]
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Sum):
        out = to_string(e.terms[0])
        for t in e.terms[1:]:
            s = _wrap(t, 2)
            if s.startswith("-") and _negative_lead(t):
                out += " - " + s[1:]
            elif s.startswith("-"):
                out += " + (" + s + ")"
            else:
                out += " + " + s
        return out
    if isinstance(e, Product):
        parts = []
        for i, f in enumerate(e.factors):
            if i == 0 and isinstance(f, Const) and f.value == -1 and len(e.factors) > 1:
                parts.append("-")
                continue
            # quotients inside products are parenthesized so a*(b/c)*d stays unambiguous
            need = 3 if isinstance(f, Quotient) else (2 if i == 0 else 3)
            parts.append(_wrap(f, need))
        if parts[0] == "-":
            return "-" + "*".join(parts[1:])
        return "*".join(parts)
    if isinstance(e, Quotient):
        return f"{_wrap(e.num, 2)}/{_wrap(e.den, 3)}"
    if isinstance(e, Power):
        return f"{_wrap(e.base, _ATOM)}^{_wrap(e.exponent, _ATOM)}"
    if isinstance(e, Call):
        return f"{e.fn.name}({to_string(e.arg)})"
    if isinstance(e, ImplicitRoot):
        return f"root[{e.var}]({to_string(e.equation)}; {to_string(e.guess)})"
    raise TypeError(type(e).__name__)


def _negative_lead(t: SymExpr) -> bool:
    return isinstance(t, Product) and isinstance(t.factors[0], Const) and not isinstance(t.factors[0].value, complex) and t.factors[0].value < 0
