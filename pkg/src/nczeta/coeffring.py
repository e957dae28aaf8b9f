"""Exact commutative coefficients.

A :class:`ScalarPoly` is a sparse polynomial with rational coefficients in the
fixed variables ``pi, tau1, tau2, xi1, xi2, r, u``.  ``tau2`` may carry
negative exponents; every other exponent is non-negative.  ``|tau|^2`` is
never stored, it is always expanded as ``tau1^2 + tau2^2``.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from typing import Iterator, Mapping, Union

VARIABLES = ("pi", "tau1", "tau2", "xi1", "xi2", "r", "u")
_INDEX = {name: i for i, name in enumerate(VARIABLES)}
_NVARS = len(VARIABLES)
_ZERO_MONO = (0,) * _NVARS

Mono = tuple  # exponent tuple aligned with VARIABLES
Number = Union[int, Fraction]


class UnboundVariableError(KeyError):
    """Raised by :meth:`ScalarPoly.evaluate` when a variable has no value."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"variable {self.name!r} is not bound"


class ParseError(ValueError):
    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos}: {text[max(0, pos - 10):pos + 10]!r}")
        self.pos = pos


def _check_mono(mono: Mono) -> None:
    for name, e in zip(VARIABLES, mono):
        if e < 0 and name != "tau2":
            raise ValueError(f"negative exponent for {name}")


class ScalarPoly:
    """Immutable sparse polynomial, ``{exponent tuple: Fraction}``."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Mono, Number] | None = None):
        clean = {}
        if terms:
            for mono, c in terms.items():
                if c:
                    mono = tuple(mono)
                    if len(mono) != _NVARS:
                        raise ValueError("monomial has wrong arity")
                    clean[mono] = Fraction(c)
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "ScalarPoly":
        # terms already canonical: Fraction values, no zeros
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._hash = None
        return obj

    # -- constructors -----------------------------------------------------
    @classmethod
    def const(cls, c: Number) -> "ScalarPoly":
        return cls._raw({_ZERO_MONO: Fraction(c)}) if c else cls._raw({})

    @classmethod
    def var(cls, name: str, exp: int = 1) -> "ScalarPoly":
        return cls.mono(1, **{name: exp})

    @classmethod
    def mono(cls, coeff: Number = 1, **exps: int) -> "ScalarPoly":
        e = [0] * _NVARS
        for name, k in exps.items():
            e[_INDEX[name]] = k
        mono = tuple(e)
        _check_mono(mono)
        return cls._raw({mono: Fraction(coeff)}) if coeff else cls._raw({})

    # -- basic protocol -----------------------------------------------------
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[Mono, Fraction]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = ScalarPoly.const(other)
        if not isinstance(other, ScalarPoly):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"ScalarPoly({self.to_text()!r})"

    def __str__(self) -> str:
        return self.to_text()

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other) -> "ScalarPoly":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        if not other._terms:
            return self
        out = dict(self._terms)
        for m, c in other._terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return ScalarPoly._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "ScalarPoly":
        return ScalarPoly._raw({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "ScalarPoly":
        other = _coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "ScalarPoly":
        return (-self) + other

    def __mul__(self, other) -> "ScalarPoly":
        if isinstance(other, (int, Fraction)):
            if not other:
                return ScalarPoly._raw({})
            return ScalarPoly._raw({m: c * other for m, c in self._terms.items()})
        if not isinstance(other, ScalarPoly):
            return NotImplemented
        out: dict = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0) + c1 * c2
        return ScalarPoly._raw({m: c for m, c in out.items() if c})

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "ScalarPoly":
        if not isinstance(other, (int, Fraction)):
            return NotImplemented
        return self * (Fraction(1) / other)

    def __pow__(self, n: int) -> "ScalarPoly":
        if n < 0:
            # only monomials invert (tau2 is the one Laurent variable)
            if len(self._terms) != 1:
                raise ValueError("negative power of a non-monomial")
            ((mono, c),) = self._terms.items()
            return ScalarPoly({tuple(-e for e in mono): 1 / c}) ** -n
        result = ScalarPoly.const(1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    # -- queries ------------------------------------------------------------
    def is_constant(self) -> bool:
        return all(m == _ZERO_MONO for m in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self._terms.get(_ZERO_MONO, Fraction(0))

    def coefficient(self, **exps: int) -> Fraction:
        e = [0] * _NVARS
        for name, k in exps.items():
            e[_INDEX[name]] = k
        return self._terms.get(tuple(e), Fraction(0))

    def variables(self) -> set[str]:
        used = set()
        for m in self._terms:
            for name, e in zip(VARIABLES, m):
                if e:
                    used.add(name)
        return used

    def degree(self, *names: str) -> int:
        """Maximum total degree in ``names`` (``-1`` for the zero polynomial)."""
        idx = [_INDEX[n] for n in names]
        return max((sum(m[i] for i in idx) for m in self._terms), default=-1)

    def split(self, *names: str) -> dict[tuple, "ScalarPoly"]:
        """Group by the exponents of ``names``; values have those exponents zeroed."""
        idx = [_INDEX[n] for n in names]
        groups: dict = {}
        for m, c in self._terms.items():
            key = tuple(m[i] for i in idx)
            rest = list(m)
            for i in idx:
                rest[i] = 0
            groups.setdefault(key, {})[tuple(rest)] = c
        return {k: ScalarPoly._raw(v) for k, v in groups.items()}

    # -- calculus and substitution -----------------------------------------------
    def diff(self, name: str) -> "ScalarPoly":
        i = _INDEX[name]
        out = {}
        for m, c in self._terms.items():
            e = m[i]
            if e:
                mm = list(m)
                mm[i] = e - 1
                out[tuple(mm)] = c * e
        return ScalarPoly._raw(out)

    def subs(self, values: Mapping[str, "ScalarPoly | Number"]) -> "ScalarPoly":
        """Substitute polynomials (or numbers) for variables."""
        idx = {_INDEX[k]: (v if isinstance(v, ScalarPoly) else ScalarPoly.const(v))
               for k, v in values.items()}
        result = ScalarPoly()
        powers: dict = {}
        for m, c in self._terms.items():
            rest = list(m)
            term = ScalarPoly.const(c)
            for i, v in idx.items():
                e = m[i]
                rest[i] = 0
                if e < 0:
                    raise ValueError("cannot substitute into a negative power")
                if e:
                    key = (i, e)
                    if key not in powers:
                        powers[key] = v ** e
                    term = term * powers[key]
            result = result + term * ScalarPoly._raw({tuple(rest): Fraction(1)})
        return result

    def evaluate(self, point: Mapping[str, object], dps: int | None = None):
        """Numeric value at ``point``.

        Exact ``Fraction`` when every bound value is rational and ``pi`` does
        not occur.  With ``pi`` present the result is a float, or an mpmath
        number when ``dps`` is given.
        """
        if not self._terms:
            return Fraction(0)
        for name in self.variables():
            if name != "pi" and name not in point:
                raise UnboundVariableError(name)
        if "tau2" in point and point["tau2"] == 0:
            raise ZeroDivisionError("tau2 = 0")
        exact = all(isinstance(point[n], (int, Fraction))
                    for n in self.variables() if n != "pi")
        has_pi = "pi" in self.variables()
        if exact and not has_pi:
            total = Fraction(0)
            for m, c in self._terms.items():
                v = c
                for name, e in zip(VARIABLES, m):
                    if e:
                        v *= Fraction(point[name]) ** e
                total += v
            return total
        if dps is not None:
            import mpmath

            with mpmath.workdps(dps):
                vals = {n: mpmath.mpf(point[n]) if not isinstance(point[n], Fraction)
                        else mpmath.mpf(point[n].numerator) / point[n].denominator
                        for n in self.variables() if n != "pi"}
                vals["pi"] = mpmath.pi
                total = mpmath.mpf(0)
                for m, c in self._terms.items():
                    v = mpmath.mpf(c.numerator) / c.denominator
                    for name, e in zip(VARIABLES, m):
                        if e:
                            v *= vals[name] ** e
                    total += v
                return +total
        vals = {n: float(point[n]) for n in self.variables() if n != "pi"}
        vals["pi"] = math.pi
        total = 0.0
        for m, c in self._terms.items():
            v = float(c)
            for name, e in zip(VARIABLES, m):
                if e:
                    v *= vals[name] ** e
            total += v
        return total

    # -- text forms ---------------------------------------------------------
    def sorted_items(self) -> list[tuple[Mono, Fraction]]:
        return sorted(self._terms.items(), key=lambda mc: mc[0], reverse=True)

    def to_text(self, explicit: bool = True) -> str:
        """Canonical text, e.g. ``6*tau1^1*xi1^2*xi2^1 - 1/2``.

        ``explicit=False`` drops unit exponents and spaces (display form).
        """
        if not self._terms:
            return "0"
        parts = []
        for i, (m, c) in enumerate(self.sorted_items()):
            factors = [f"{n}^{e}" if (explicit or e != 1) else n
                       for n, e in zip(VARIABLES, m) if e]
            mag = abs(c)
            if factors and mag == 1:
                body = "*".join(factors)
            else:
                body = "*".join([str(mag)] + factors)
            sign = "-" if c < 0 else "+"
            if explicit:
                parts.append(("-" if c < 0 else "") + body if i == 0 else f" {sign} {body}")
            else:
                parts.append(("-" if c < 0 else "") + body if i == 0 else f"{sign}{body}")
        return "".join(parts)

    @classmethod
    def parse(cls, text: str) -> "ScalarPoly":
        return _Parser(text).parse()


def _coerce(x) -> ScalarPoly | None:
    if isinstance(x, ScalarPoly):
        return x
    if isinstance(x, (int, Fraction)):
        return ScalarPoly.const(x)
    return None


_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<name>[a-z][a-z0-9]*)|(?P<op>[-+*^()]))")


class _Parser:
    """Recursive-descent parser for sums of products with integer powers."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            mt = _TOKEN.match(text, pos)
            if not mt or mt.end() == pos:
                raise ParseError("unexpected character", text, pos)
            kind = mt.lastgroup
            self.tokens.append((kind, mt.group(kind), mt.start(kind)))
            pos = mt.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> ScalarPoly:
        if not self.tokens:
            raise ParseError("empty polynomial", self.text, 0)
        result = self.expr()
        kind, val, pos = self.peek()
        if kind is not None:
            raise ParseError(f"unexpected {val!r}", self.text, pos)
        return result

    def expr(self) -> ScalarPoly:
        sign = 1
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1 if val == "-" else 1
        total = self.term() * sign
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                t = self.term()
                total = total + t if val == "+" else total - t
            else:
                return total

    def term(self) -> ScalarPoly:
        value = self.power()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                value = value * self.power()
            else:
                return value

    def power(self) -> ScalarPoly:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            neg = False
            kind, val, pos = self.peek()
            if kind == "op" and val == "-":
                self.take()
                neg = True
            kind, val, pos = self.take()
            if kind != "num" or "/" in val:
                raise ParseError("expected integer exponent", self.text, pos)
            e = int(val)
            if neg:
                if len(base) != 1 or next(iter(base._terms.values())) != 1:
                    raise ParseError("negative power of a non-monomial", self.text, pos)
                (m,) = base._terms
                mono = tuple(-x * e for x in m)
                try:
                    _check_mono(mono)
                except ValueError as exc:
                    raise ParseError(str(exc), self.text, pos) from None
                return ScalarPoly._raw({mono: Fraction(1)})
            return base ** e
        return base

    def atom(self) -> ScalarPoly:
        kind, val, pos = self.take()
        if kind == "num":
            return ScalarPoly.const(Fraction(val))
        if kind == "name":
            if val not in _INDEX:
                raise ParseError(f"unknown variable {val!r}", self.text, pos)
            return ScalarPoly.var(val)
        if kind == "op" and val == "(":
            inner = self.expr()
            kind, val, pos = self.take()
            if val != ")":
                raise ParseError("expected ')'", self.text, pos)
            return inner
        raise ParseError("unexpected token", self.text, pos)


# Frequently used constants.
ONE = ScalarPoly.const(1)
ZERO = ScalarPoly()
TAU1 = ScalarPoly.var("tau1")
TAU2 = ScalarPoly.var("tau2")
XI1 = ScalarPoly.var("xi1")
XI2 = ScalarPoly.var("xi2")
R = ScalarPoly.var("r")
PI = ScalarPoly.var("pi")
TAU_ABS2 = TAU1 * TAU1 + TAU2 * TAU2


def scalar_add(a: ScalarPoly, b: ScalarPoly) -> ScalarPoly:
    return a + b


def scalar_mul(a: ScalarPoly, b: ScalarPoly) -> ScalarPoly:
    return a * b


def scalar_eval(a: ScalarPoly, point: Mapping[str, object], dps: int | None = None):
    return a.evaluate(point, dps=dps)
