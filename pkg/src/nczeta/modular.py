"""Functions of the modular operator and the final identity.

A :class:`SpectralFn` is a finite combination of ``u^q`` and ``u^q L_m(u)``
(q a half-integer, m = 1, 2, 3) where

    L_m(u) = (-1)^m (u-1)^-(m+1) (log u - sum_{j=1..m} (-1)^(j+1) (u-1)^j / j)

so that ``L_m(Delta)`` is the radial integral with one b0 in the middle.
A :class:`ModularExpr` stores, for each pair (i, j), the function F_ij with

    zeta(0) + 1 = (2 pi / tau2) * sum_ij phi(F_ij(Delta)(d_i k) d_j k),   phi(x) = tau0(x k^-2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import mpmath
import numpy as np
import sympy as sp

from .coeffring import ONE, PI, TAU1, TAU2, TAU_ABS2, ScalarPoly
from .ncalg import DK, K, NCPoly, word_to_text

CONCLUSION = "ζ(0) is independent of k and τ; ζ(0) = −1"


class IdentityError(ArithmeticError):
    """An exact identity failed; ``residual`` holds the nonzero remainder."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ModularKey(NamedTuple):
    """``k^-2 (u^twist L_m)(Delta)(d_i k) d_j k``; m = 0 means no L factor."""
    m: int
    twist: Fraction
    i: int
    j: int


ModularTerms = dict  # ModularKey -> ScalarPoly


def add_term(acc: dict, key, value: ScalarPoly) -> None:
    total = acc.get(key, ScalarPoly()) + value
    if total:
        acc[key] = total
    else:
        acc.pop(key, None)


def modular_terms_to_json(terms: ModularTerms) -> list:
    rows = [{"m": k.m, "twist": str(k.twist), "i": k.i, "j": k.j, "coeff": c.to_text()}
            for k, c in terms.items()]
    return sorted(rows, key=lambda d: (d["m"], Fraction(d["twist"]), d["i"], d["j"]))


def modular_terms_from_json(rows: list) -> ModularTerms:
    out: ModularTerms = {}
    for d in rows:
        add_term(out, ModularKey(d["m"], Fraction(d["twist"]), d["i"], d["j"]),
                 ScalarPoly.parse(d["coeff"]))
    return out


# -- spectral functions -----------------------------------------------------------------

class SpectralFn:
    """Mapping (q, m) -> ScalarPoly for ``u^q`` (m = 0) or ``u^q L_m(u)``."""

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        clean = {}
        for (q, m), c in (terms or {}).items():
            c = c if isinstance(c, ScalarPoly) else ScalarPoly.const(c)
            key = (Fraction(q), int(m))
            total = clean.get(key, ScalarPoly()) + c
            if total:
                clean[key] = total
            else:
                clean.pop(key, None)
        self.terms = clean

    def __eq__(self, other):
        return isinstance(other, SpectralFn) and self.terms == other.terms

    def __bool__(self):
        return bool(self.terms)

    def __add__(self, other: "SpectralFn") -> "SpectralFn":
        t = dict(self.terms)
        for k, c in other.terms.items():
            t[k] = t.get(k, ScalarPoly()) + c
        return SpectralFn(t)

    def __neg__(self):
        return self.scale(-ONE)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "SpectralFn":
        c = c if isinstance(c, ScalarPoly) else ScalarPoly.const(c)
        return SpectralFn({k: v * c for k, v in self.terms.items()})

    def shift(self, half_steps: int) -> "SpectralFn":
        """Multiply by ``u^(half_steps/2)``."""
        d = Fraction(half_steps, 2)
        return SpectralFn({(q + d, m): c for (q, m), c in self.terms.items()})

    def is_tau_free(self) -> bool:
        return all(c.is_constant() for c in self.terms.values())

    def to_json(self) -> list:
        return [{"q": str(q), "m": m, "coeff": c.to_text()}
                for (q, m), c in sorted(self.terms.items())]

    @classmethod
    def from_json(cls, rows) -> "SpectralFn":
        return cls({(Fraction(d["q"]), d["m"]): ScalarPoly.parse(d["coeff"]) for d in rows})

    def __repr__(self):
        parts = []
        for (q, m), c in sorted(self.terms.items()):
            base = f"u^{q}" if q else "1"
            if m:
                base = f"{base}*L{m}" if q else f"L{m}"
            parts.append(f"({c.to_text(explicit=False)})*{base}")
        return "SpectralFn(" + " + ".join(parts) + ")" if parts else "SpectralFn(0)"


# (q, m) -> coefficient of the regrouped function
#   f(u) = u^-1/2/6 - 1/3 + L1 - 2(1 + u^1/2) L2 + (1 + u^1/2)^2 L3
LEMMA_F = SpectralFn({
    (Fraction(-1, 2), 0): Fraction(1, 6),
    (0, 0): Fraction(-1, 3),
    (0, 1): 1,
    (0, 2): -2,
    (Fraction(1, 2), 2): -2,
    (0, 3): 1,
    (Fraction(1, 2), 3): 2,
    (1, 3): 1,
})


@dataclass
class ModularExpr:
    slots: dict = field(default_factory=dict)  # (i, j) -> SpectralFn
    prefactor: ScalarPoly = field(default_factory=lambda: 2 * PI * TAU2 ** -1)

    def slot(self, i: int, j: int) -> SpectralFn:
        return self.slots.get((i, j), SpectralFn())

    def __eq__(self, other):
        if not isinstance(other, ModularExpr):
            return NotImplemented
        keys = set(self.slots) | set(other.slots)
        return self.prefactor == other.prefactor and all(
            self.slot(*k) == other.slot(*k) for k in keys)

    def to_json(self) -> dict:
        return {
            "format": "nczeta modular-expr",
            "prefactor": self.prefactor.to_text(),
            "slots": {f"{i},{j}": self.slot(i, j).to_json()
                      for (i, j) in sorted(self.slots) if self.slot(i, j)},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModularExpr":
        slots = {}
        for key, rows in doc["slots"].items():
            i, j = (int(v) for v in key.split(","))
            slots[i, j] = SpectralFn.from_json(rows)
        return cls(slots, ScalarPoly.parse(doc["prefactor"]))


def _first_order(at) -> int | None:
    if at.kind == DK and not at.twist and at.a + at.b == 1:
        return 1 if at.a else 2
    return None


def direct_to_modular(direct: NCPoly) -> ModularTerms:
    """Rewrite ``k^-1 d_i d_j(k)`` and ``k^-2 d_i(k) d_j(k)`` as modular bilinears.

    Under the trace, k^-1 d_i d_j(k) = k^-1 d_i(k) k^-1 d_j(k) = k^-2 Delta^-1/2(d_i k) d_j k.
    The mixed second derivative is split evenly between (1,2) and (2,1).
    """
    out: ModularTerms = {}
    for w, c in direct.terms.items():
        if len(w) == 2 and w[0] == (K, -1, 0, 0) and w[1].kind == DK and w[1].a + w[1].b == 2 \
                and not w[1].twist:
            a, b = w[1].a, w[1].b
            half = Fraction(-1, 2)
            if a == 2:
                add_term(out, ModularKey(0, half, 1, 1), c)
            elif b == 2:
                add_term(out, ModularKey(0, half, 2, 2), c)
            else:
                add_term(out, ModularKey(0, half, 1, 2), c / 2)
                add_term(out, ModularKey(0, half, 2, 1), c / 2)
            continue
        if len(w) == 3 and w[0] == (K, -2, 0, 0):
            i, j = _first_order(w[1]), _first_order(w[2])
            if i and j:
                add_term(out, ModularKey(0, Fraction(0), i, j), c)
                continue
        raise IdentityError(f"not a modular bilinear: {word_to_text(w)}")
    return out


def assemble_premain(terms: ModularTerms, direct: NCPoly | None = None) -> ModularExpr:
    """Collect all bilinears into slots, with the overall sign change for lambda = -1."""
    allterms = dict(terms)
    if direct is not None:
        for k, v in direct_to_modular(direct).items():
            add_term(allterms, k, v)
    slots: dict = {}
    for key, c in allterms.items():
        fn = SpectralFn({(key.twist, key.m): -c})
        slots[key.i, key.j] = slots.get((key.i, key.j), SpectralFn()) + fn
    return ModularExpr({k: v for k, v in slots.items() if v})


# -- regrouping -------------------------------------------------------------------------

SLOT_RATIOS = {(1, 1): ONE, (2, 2): TAU_ABS2, (1, 2): TAU1, (2, 1): TAU1}


def _offending(got: SpectralFn, want: SpectralFn) -> list:
    diff = got - want
    return [{"q": str(q), "m": m, "residual": c.to_text()} for (q, m), c in sorted(diff.terms.items())]


def regroup_f(expr: ModularExpr, expected: SpectralFn = LEMMA_F):
    """Extract f from slot (1,1) and certify all four slots as (1, |tau|^2, tau1, tau1) * f."""
    f = expr.slot(1, 1)
    cert = {"f_tau_free": f.is_tau_free(), "slots": {}}
    for (i, j), ratio in SLOT_RATIOS.items():
        want = f.scale(ratio)
        bad = _offending(expr.slot(i, j), want)
        cert["slots"][f"{i},{j}"] = {"ratio": ratio.to_text(explicit=False), "pass": not bad,
                                     "offending": bad}
    extra = sorted(set(expr.slots) - set(SLOT_RATIOS))
    bad_f = _offending(f, expected)
    cert["f_match"] = not bad_f
    cert["f_offending"] = bad_f
    cert["unexpected_slots"] = [f"{i},{j}" for i, j in extra]
    cert["pass"] = (cert["f_tau_free"] and cert["f_match"] and not extra
                    and all(s["pass"] for s in cert["slots"].values()))
    return f, cert


# -- exponential form: y = e^(x/2), x = log u ------------------------------------------

Y, X = sp.symbols("y x")


class ExpRational:
    """Rational function in y = e^(x/2) with polynomial x-dependence, kept reduced."""

    __slots__ = ("expr",)

    def __init__(self, expr):
        self.expr = sp.cancel(sp.together(sp.sympify(expr)))

    def __add__(self, other):
        return ExpRational(self.expr + _expr(other))

    def __sub__(self, other):
        return ExpRational(self.expr - _expr(other))

    def __mul__(self, other):
        return ExpRational(self.expr * _expr(other))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (self - other).is_zero()

    def is_zero(self) -> bool:
        return sp.cancel(self.expr) == 0

    def reflect(self) -> "ExpRational":
        """x -> -x (so y -> 1/y)."""
        return ExpRational(self.expr.subs({Y: 1 / Y, X: -X}, simultaneous=True))

    def numerator_denominator(self):
        return sp.fraction(sp.factor(self.expr))

    def evaluate(self, x, dps: int = 50):
        with mpmath.workdps(dps):
            xv = mpmath.mpf(x)
            fn = sp.lambdify((Y, X), self.expr, "mpmath")
            return fn(mpmath.exp(xv / 2), xv)

    def __repr__(self):
        return f"ExpRational({sp.sstr(sp.factor(self.expr))})"


def _expr(v):
    return v.expr if isinstance(v, ExpRational) else sp.sympify(v)


def _frac(q: Fraction):
    return sp.Rational(q.numerator, q.denominator)


def L_exp(m: int):
    """L_m(u) with u = y^2, log u = x."""
    u = Y ** 2
    s = sum(sp.Integer(-1) ** (j + 1) * (u - 1) ** j / j for j in range(1, m + 1))
    return sp.Integer(-1) ** m * (X - s) / (u - 1) ** (m + 1)


def to_exp_form(s: SpectralFn) -> ExpRational:
    if not s.is_tau_free():
        raise IdentityError("exp form needs a tau-free spectral function")
    total = sp.Integer(0)
    for (q, m), c in s.terms.items():
        base = Y ** int(2 * q)
        if m:
            base = base * L_exp(m)
        total += _frac(c.constant_value()) * base
    return ExpRational(total)


def expected_h() -> ExpRational:
    """h(x) = -y^-1 (-1 + 3y + 3y^2 + 6y^3 x - 3y^4 - 3y^5 + y^6) / (6 (y-1)^4 (y+1)^2)."""
    num = -1 + 3 * Y + 3 * Y ** 2 + 6 * Y ** 3 * X - 3 * Y ** 4 - 3 * Y ** 5 + Y ** 6
    return ExpRational(-num / (Y * 6 * (Y - 1) ** 4 * (Y + 1) ** 2))


def sh_form_K() -> ExpRational:
    """-(x - sh(x/2) - sh(x) + sh(3x/2)/3) / (x^2 sh(x/2)^2), sh(a x/2) = (y^a - y^-a)/2."""
    def sh(a):
        return (Y ** a - Y ** -a) / 2
    return ExpRational(-(X - sh(1) - sh(2) + sh(3) / 3) / (X ** 2 * sh(1) ** 2))


def K_from_h(h: ExpRational) -> ExpRational:
    return ExpRational(4 * X ** -2 * (Y - 1) ** 2 * h.expr)


def K_series(order: int = 6):
    """Taylor expansion of the sh-form of K at x = 0 (removable singularity)."""
    t = sp.Symbol("t")
    sh = sp.sinh
    k = -(t - sh(t / 2) - sh(t) + sh(3 * t / 2) / 3) / (t ** 2 * sh(t / 2) ** 2)
    return sp.series(k, t, 0, order).removeO().subs(t, X)


def compute_K(h: ExpRational, strict: bool = True) -> tuple[ExpRational, dict]:
    """K = 4 x^-2 (y-1)^2 h, checked against the sh-form and for oddness."""
    K_ = K_from_h(h)
    sh_res = K_ - sh_form_K()
    odd_res = K_ + K_.reflect()
    series = K_series()
    cert = {
        "K_equals_sh_form": sh_res.is_zero(),
        "K_odd": odd_res.is_zero(),
        "K_at_0": str(series.subs(X, 0)),
        "K_series_odd": sp.expand(series + series.subs(X, -X)) == 0,
    }
    cert["K_numeric_1e-3"] = float(K_.evaluate("1e-3"))
    cert["pass"] = cert["K_equals_sh_form"] and cert["K_odd"] and cert["K_at_0"] == "0"
    if strict and not cert["K_odd"]:
        raise IdentityError("K(x) + K(-x) is not identically zero", sp.factor(odd_res.expr))
    if strict and not cert["K_equals_sh_form"]:
        raise IdentityError("K differs from the sh-form", sp.factor(sh_res.expr))
    return K_, cert


def exp_form_certificate(f: SpectralFn) -> tuple[ExpRational, dict]:
    h = to_exp_form(f)
    diff = h - expected_h()
    return h, {"h_match": diff.is_zero(),
               "h_residual": None if diff.is_zero() else sp.sstr(sp.factor(diff.expr))}


# -- conclusion -------------------------------------------------------------------------

def antisymmetric_total(expr: ModularExpr, f: SpectralFn) -> dict:
    """Reduce sum_ij c_ij B(i,j), B(i,j) = phi(f(Delta)(d_i k) d_j k), using B(j,i) = -B(i,j).

    Returns the surviving coefficients (empty when everything cancels).
    """
    coeffs = {}
    for (i, j), ratio in SLOT_RATIOS.items():
        if expr.slot(i, j) != f.scale(ratio):
            raise IdentityError(f"slot {i},{j} is not proportional to f")
        coeffs[i, j] = ratio
    out = {}
    for i in (1, 2):
        for j in (1, 2):
            if i < j:
                c = coeffs[i, j] - coeffs[j, i]
                if c:
                    out[f"{i},{j}"] = c.to_text(explicit=False)
    return out


def conclude(expr: ModularExpr, regroup_cert: dict, k_cert: dict, h_cert: dict) -> dict:
    missing = [name for name, cert in (("regroup", regroup_cert), ("K", k_cert))
               if not cert.get("pass")]
    if not h_cert.get("h_match"):
        missing.append("h")
    report = {"prerequisites_failed": missing}
    if missing:
        report.update(proved=False, conclusion=None)
        return report
    leftover = antisymmetric_total(expr, expr.slot(1, 1))
    report["antisymmetric_residual"] = leftover
    report["proved"] = not leftover
    report["zeta0"] = "-1" if not leftover else None
    report["conclusion"] = CONCLUSION if not leftover else None
    return report


# -- numerical evaluation ---------------------------------------------------------------

SERIES_RADIUS = 0.1
SERIES_TERMS = 18


def _L_series(m: int, eps):
    total = 0.0 * eps
    for n in range(SERIES_TERMS, -1, -1):
        total = total * (-eps) + 1.0 / (n + m + 1)
    return total


def _L_closed(m: int, u):
    eps = u - 1.0
    s = 0.0 * eps
    for j in range(1, m + 1):
        s = s + (-1) ** (j + 1) * eps ** j / j
    return (-1) ** m * (np.log1p(eps) - s) / eps ** (m + 1)


def L_value(m: int, u):
    """Vectorized L_m(u) for u > 0."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("L_m is defined for u > 0 only")
    eps = u - 1.0
    near = np.abs(eps) < SERIES_RADIUS
    out = np.empty_like(u)
    if np.any(near):
        out[near] = _L_series(m, eps[near])
    if np.any(~near):
        out[~near] = _L_closed(m, u[~near])
    return out


def eval_spectral(s: SpectralFn, u, point: dict | None = None):
    """Evaluate s at u (scalar or array); tau-dependent coefficients need ``point``."""
    scalar = np.ndim(u) == 0
    uu = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(uu <= 0):
        raise ValueError("spectral functions are evaluated at u > 0")
    total = np.zeros_like(uu)
    for (q, m), c in s.terms.items():
        coef = float(c.constant_value()) if c.is_constant() else float(c.evaluate(point or {}))
        base = uu ** float(q)
        if m:
            base = base * L_value(m, uu)
        total = total + coef * base
    return float(total[0]) if scalar else total


def L_value_mp(m: int, u, dps: int = 40):
    with mpmath.workdps(dps):
        u = mpmath.mpf(u)
        s = sum((-1) ** (j + 1) * (u - 1) ** j / j for j in range(1, m + 1))
        return (-1) ** m * (mpmath.log(u) - s) / (u - 1) ** (m + 1)


def lemma_integral(m: int, u: float) -> float:
    """L_m(u) as the scalar integral int_0^inf x^m / ((x+1)^(m+1) (u x + 1)) dx (k = 1 case
    of the modified-logarithm template with Delta = u); used as an independent check."""
    from scipy.integrate import quad
    val, _ = quad(lambda x: x ** m / ((x + 1) ** (m + 1) * (u * x + 1)), 0, math.inf,
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return val
