"""Graded symbols, their product and adjoint, and the parametrix of k Delta k + 1."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial

from .coeffring import ONE, TAU1, TAU2, XI1, XI2, ScalarPoly
from .ncalg import (
    B0, DK, K, LOGK, NCPoly, S_GENERAL, b0, b0_degree, derive, derive_many, dk, kpow,
    star, word_mul,
)


@dataclass
class GradedSymbol:
    """Homogeneous components ``{order: NCPoly}`` at the xi stage."""

    components: dict = field(default_factory=dict)
    s: ScalarPoly = S_GENERAL

    def __getitem__(self, order: int) -> NCPoly:
        return self.components.get(order, NCPoly({}, "xi"))

    def orders(self) -> list[int]:
        return sorted(self.components, reverse=True)

    def truncate(self, min_order: int) -> "GradedSymbol":
        return GradedSymbol({o: c for o, c in self.components.items() if o >= min_order and c}, self.s)

    def __add__(self, other: "GradedSymbol") -> "GradedSymbol":
        out = dict(self.components)
        for o, c in other.components.items():
            out[o] = out[o] + c if o in out else c
        return GradedSymbol({o: c for o, c in out.items() if c}, self.s)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GradedSymbol):
            return NotImplemented
        a = {o: c for o, c in self.components.items() if c}
        b = {o: c for o, c in other.components.items() if c}
        return a == b


def tau_metric(tau1=None, tau2=None) -> dict:
    """Substitution for a fixed conformal class; empty for the symbolic one."""
    sub = {}
    if tau1 is not None:
        sub["tau1"] = Fraction(tau1)
    if tau2 is not None:
        sub["tau2"] = Fraction(tau2)
    return sub


def quadratic_form(tau1=None, tau2=None) -> ScalarPoly:
    sub = tau_metric(tau1, tau2)
    return S_GENERAL.subs(sub) if sub else S_GENERAL


def laplacian_symbol(tau1=None, tau2=None) -> GradedSymbol:
    """Components a2, a1, a0 of the symbol of k Delta k."""
    t1 = TAU1 if tau1 is None else ScalarPoly.const(Fraction(tau1))
    t2 = TAU2 if tau2 is None else ScalarPoly.const(Fraction(tau2))
    tt = t1 * t1 + t2 * t2
    k1, d1, d2 = kpow(1), dk(1, 0), dk(0, 1)
    a2 = NCPoly({(kpow(2),): XI1 * XI1 + tt * XI2 * XI2 + 2 * t1 * XI1 * XI2})
    a1 = NCPoly({
        (k1, d1): 2 * XI1 + 2 * t1 * XI2,
        (k1, d2): 2 * tt * XI2 + 2 * t1 * XI1,
    })
    a0 = NCPoly({
        (k1, dk(2, 0)): ONE,
        (k1, dk(0, 2)): tt,
        (k1, dk(1, 1)): 2 * t1,
    })
    return GradedSymbol({2: a2, 1: a1, 0: a0}, quadratic_form(tau1, tau2))


def laplacian_flat_symbol(tau1=None, tau2=None) -> GradedSymbol:
    """Symbol of Delta itself: the scalar quadratic form, order 2."""
    s = quadratic_form(tau1, tau2)
    return GradedSymbol({2: NCPoly({(): s})}, s)


def multiplication_symbol(*atoms) -> GradedSymbol:
    return GradedSymbol({0: NCPoly.word(*atoms)})


def _multi_indices(total: int):
    for l1 in range(total + 1):
        yield l1, total - l1


class _DerivCache:
    def __init__(self, x: NCPoly, s: ScalarPoly):
        self.x, self.s, self.cache = x, s, {(0, 0, 0, 0): x}

    def get(self, xi1: int, xi2: int, d1: int, d2: int) -> NCPoly:
        key = (xi1, xi2, d1, d2)
        if key in self.cache:
            return self.cache[key]
        # peel one derivative off the largest index
        if d2:
            prev, direction = (xi1, xi2, d1, d2 - 1), "delta2"
        elif d1:
            prev, direction = (xi1, xi2, d1 - 1, d2), "delta1"
        elif xi2:
            prev, direction = (xi1, xi2 - 1, d1, d2), "xi2"
        else:
            prev, direction = (xi1 - 1, xi2, d1, d2), "xi1"
        base = self.get(*prev)
        val = derive(base, direction, self.s) if base else base
        self.cache[key] = val
        return val


def symbol_product(p: GradedSymbol, q: GradedSymbol, min_order: int) -> GradedSymbol:
    """sum over l1, l2 of 1/(l1! l2!) d_xi^l(p) delta^l(q), orders >= min_order."""
    s = p.s
    out: dict = {}
    caches_p = {o: _DerivCache(c, s) for o, c in p.components.items() if c}
    caches_q = {o: _DerivCache(c, s) for o, c in q.components.items() if c}
    for op, cp in caches_p.items():
        for oq, cq in caches_q.items():
            lmax = op + oq - min_order
            for total in range(lmax + 1):
                order = op + oq - total
                for l1, l2 in _multi_indices(total):
                    left = cp.get(l1, l2, 0, 0)
                    if not left:
                        continue
                    right = cq.get(0, 0, l1, l2)
                    if not right:
                        continue
                    term = word_mul(left, right)
                    w = Fraction(1, factorial(l1) * factorial(l2))
                    term = term.scale(w) if w != 1 else term
                    out[order] = out[order] + term if order in out else term
    return GradedSymbol({o: c for o, c in out.items() if c}, s)


def symbol_adjoint(p: GradedSymbol, min_order: int) -> GradedSymbol:
    """sum over l of 1/(l1! l2!) d_xi^l delta^l (p^*), orders >= min_order."""
    s = p.s
    out: dict = {}
    for op, c in p.components.items():
        cache = _DerivCache(star(c), s)
        for total in range(op - min_order + 1):
            order = op - total
            for l1, l2 in _multi_indices(total):
                dd = cache.get(0, 0, l1, l2)
                if not dd:
                    continue
                term = derive_many(dd, ["xi1"] * l1 + ["xi2"] * l2, s)
                if not term:
                    continue
                term = term.scale(Fraction(1, factorial(l1) * factorial(l2)))
                out[order] = out[order] + term if order in out else term
    return GradedSymbol({o: c for o, c in out.items() if c}, s)


def parametrix(n_max: int, sigma: GradedSymbol | None = None) -> GradedSymbol:
    """b0, ..., b_{n_max} with lambda = -1 folded into b0 = (a2 + 1)^-1.

    ``b_n = - sum 1/(l1! l2!) d^l(b_j) delta^l(a_k) b0`` over
    ``2 + j + l1 + l2 - k = n``, ``j < n``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if sigma is None:
        sigma = laplacian_symbol()
    s = sigma.s
    b0w = NCPoly.word(b0(1))
    bs: dict[int, NCPoly] = {0: b0w}
    a_caches = {k: _DerivCache(sigma[k], s) for k in (0, 1, 2)}
    b_caches: dict = {0: _DerivCache(b0w, s)}
    for n in range(1, n_max + 1):
        acc: dict = {}
        for j in range(n):
            for k in (0, 1, 2):
                total = n - 2 - j + k
                if total < 0:
                    continue
                for l1, l2 in _multi_indices(total):
                    left = b_caches[j].get(l1, l2, 0, 0)
                    right = a_caches[k].get(0, 0, l1, l2)
                    if not left or not right:
                        continue
                    term = word_mul(word_mul(left, right), b0w)
                    term = term.scale(Fraction(-1, factorial(l1) * factorial(l2)))
                    for w, c in term.terms.items():
                        v = acc.get(w)
                        acc[w] = c if v is None else v + c
        bs[n] = NCPoly({w: c for w, c in acc.items() if c}, "xi", _canonical=True)
        b_caches[n] = _DerivCache(bs[n], s)
    return GradedSymbol({-2 - n: c for n, c in bs.items()}, s)


def order_of(word, mono) -> int:
    """deg_xi - 2 * (b0 exponent): the homogeneity order of one term."""
    return mono[3] + mono[4] - 2 * b0_degree(word)


def grading_violations(sym: GradedSymbol) -> list:
    bad = []
    for order, comp in sym.components.items():
        for w, c in comp.terms.items():
            for mono, _ in c.items():
                if order_of(w, mono) != order:
                    bad.append((order, w, mono))
    return bad


def shifted(sym: GradedSymbol, one_at: int = 2) -> GradedSymbol:
    """sym + 1, with the constant placed in component ``one_at``."""
    return sym + GradedSymbol({one_at: NCPoly.scalar(1)}, sym.s)


# -- exact check of identities involving b0 = (s k^2 + 1)^-1 -------------------------

def eliminate_b0(x: NCPoly, s: ScalarPoly) -> dict:
    """Clear b0 denominators slot by slot.

    Every word is a run of b0/k blocks separated by derivative atoms.  Each
    block is read as a function of an independent commuting variable ``k_i``,
    ``b0 = 1/(s k_i^2 + 1)``.  Terms are grouped by their derivative pattern
    and multiplied by ``prod_i (s k_i^2 + 1)^M_i``; the resulting polynomials
    vanish iff ``x`` vanishes under this reading.  Returns the nonzero
    remainders (empty dict means ``x == 0``).
    """
    groups: dict = {}
    for w, c in x.terms.items():
        pattern, blocks = [], [[0, 0]]
        for at in w:
            if at.kind == B0:
                blocks[-1][0] += at.a
            elif at.kind == K:
                blocks[-1][1] += at.a
            else:
                pattern.append(at)
                blocks.append([0, 0])
        groups.setdefault(tuple(pattern), []).append((c, blocks))
    residues = {}
    for pattern, items in groups.items():
        nslots = len(pattern) + 1
        top = [max(b[i][0] for _, b in items) for i in range(nslots)]
        acc: dict = {}
        for c, blocks in items:
            # expand prod_i (s k_i^2 + 1)^(top_i - m_i) * k_i^p_i
            partial = {(): c}
            for i in range(nslots):
                m, p = blocks[i]
                e = top[i] - m
                nxt: dict = {}
                for key, val in partial.items():
                    for j in range(e + 1):
                        binom = Fraction(factorial(e), factorial(j) * factorial(e - j))
                        newkey = key + (p + 2 * j,)
                        add = val * (s ** j) * binom
                        nxt[newkey] = nxt.get(newkey, ScalarPoly()) + add
                partial = nxt
            for key, val in partial.items():
                acc[key] = acc.get(key, ScalarPoly()) + val
        leftover = {key: val for key, val in acc.items() if val}
        if leftover:
            residues[pattern] = leftover
    return residues


def composition_residual(n: int, sigma: GradedSymbol | None = None,
                         b: GradedSymbol | None = None) -> dict:
    """Compose b0 + ... + b_n with sigma + 1 and subtract 1.

    Returns ``{order: residues}`` for every order ``>= -n`` that fails to
    cancel exactly; empty means the parametrix is verified through order n.
    """
    if sigma is None:
        sigma = laplacian_symbol()
    if b is None:
        b = parametrix(n, sigma)
    prod = symbol_product(b.truncate(-2 - n), shifted(sigma), -n)
    failures = {}
    for order in range(0, -n - 1, -1):
        comp = prod[order]
        if order == 0:
            comp = comp - NCPoly.scalar(1)
        res = eliminate_b0(comp, sigma.s)
        if res:
            failures[order] = res
    return failures


def left_multiplication_route(tau1=None, tau2=None) -> GradedSymbol:
    """sigma(k) . sigma(Delta) . sigma(k) through the product rule."""
    k = multiplication_symbol(kpow(1))
    lap = laplacian_flat_symbol(tau1, tau2)
    k.s = lap.s
    return symbol_product(symbol_product(k, lap, 0), k, 0)


def specialize(sym: GradedSymbol, tau1, tau2) -> GradedSymbol:
    sub = tau_metric(tau1, tau2)
    return GradedSymbol({o: c.map_coefficients(lambda p: p.subs(sub)) for o, c in sym.components.items()},
                        quadratic_form(tau1, tau2))


def contains_atom_kind(x: NCPoly, kind: int) -> bool:
    return any(at.kind == kind for w in x.terms for at in w)


__all__ = [
    "GradedSymbol", "laplacian_symbol", "symbol_product", "symbol_adjoint", "parametrix",
    "composition_residual", "eliminate_b0", "grading_violations", "left_multiplication_route",
    "specialize", "shifted", "order_of", "DK", "LOGK",
]
