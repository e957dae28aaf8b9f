"""From the xi-stage b2 term list to modular-operator bilinears.

Stages: cyclic rearrangement under the trace, polar coordinates adapted to
the quadratic form ``s(xi)``, angular averaging, then radial integration of
three word families (one b0 block; b0 in the middle; b0^2 in the middle).

Throughout, the r-stage reads ``b0 = (r^2 k^2 + 1)^-1`` and every r-stage
expression is implicitly multiplied by the prefactor ``2*pi/tau2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial

from .coeffring import PI, TAU1, TAU2, ScalarPoly, VARIABLES
from .ncalg import (B0, DK, K, NCPoly, Word, b0, cyclic_normalize, cyclic_rotations,
                    dk, kpow, normal_word, word_to_text)
from .modular import ModularKey, ModularTerms, add_term

PREFACTOR = 2 * PI * TAU2 ** -1

ALL_LEFT = "AllLeft"
SINGLE_MIDDLE = "SingleMiddle"
SQUARED_MIDDLE = "SquaredMiddle"

_XI1 = VARIABLES.index("xi1")
_XI2 = VARIABLES.index("xi2")
_R = VARIABLES.index("r")


class IntegrationError(ValueError):
    """A term does not fit the closed-form family it was routed to."""


# -- polar coordinates ------------------------------------------------------------------

class TrigPoly:
    """Sum over (a, b) of ``cos^a(theta) sin^b(theta)`` times an r-stage NCPoly."""

    def __init__(self, parts: dict | None = None):
        self.parts = {k: v for k, v in (parts or {}).items() if v}

    def __eq__(self, other):
        return isinstance(other, TrigPoly) and self.parts == other.parts

    def __repr__(self):
        return f"TrigPoly({len(self.parts)} trig monomials)"

    def add(self, ab: tuple, x: NCPoly) -> None:
        cur = self.parts.get(ab)
        total = x if cur is None else cur + x
        if total:
            self.parts[ab] = total
        else:
            self.parts.pop(ab, None)


def _trig_expansion(p: int, q: int) -> dict:
    """xi1^p xi2^q in polar form, without the r^(p+q) factor.

    xi1 = r(cos - (tau1/tau2) sin), xi2 = (r/tau2) sin.
    """
    out: dict = {}
    inv = TAU2 ** -1
    for j in range(p + 1):
        coeff = comb(p, j) * (-TAU1 * inv) ** j * inv ** q
        key = (p - j, j + q)
        out[key] = out.get(key, ScalarPoly()) + coeff
    return out


def polar_substitute(x: NCPoly) -> TrigPoly:
    """Rewrite xi1, xi2 in polar coordinates and multiply by the Jacobian r/tau2."""
    if x.stage != "xi":
        raise IntegrationError("polar substitution needs a xi-stage expression")
    jac = ScalarPoly.mono(1, r=1, tau2=-1)
    cache: dict = {}
    out = TrigPoly()
    for w, c in x.terms.items():
        for mono, coef in c.items():
            p, q = mono[_XI1], mono[_XI2]
            rest = list(mono)
            rest[_XI1] = rest[_XI2] = 0
            rest[_R] += p + q
            base = ScalarPoly({tuple(rest): coef}) * jac
            if (p, q) not in cache:
                cache[p, q] = _trig_expansion(p, q)
            for ab, tc in cache[p, q].items():
                out.add(ab, NCPoly({w: base * tc}, "r"))
    return out


def angular_weight(a: int, b: int) -> Fraction:
    """(1/2pi) * integral over [0, 2pi] of cos^a sin^b."""
    if a % 2 or b % 2:
        return Fraction(0)

    def dfact(n):
        return 1 if n <= 0 else n * dfact(n - 2)

    return Fraction(dfact(a - 1) * dfact(b - 1), dfact(a + b))


def angular_integrate(t: TrigPoly) -> NCPoly:
    """Integrate over theta; the result carries the implicit factor 2*pi/tau2."""
    total = NCPoly(stage="r")
    for (a, b), x in t.parts.items():
        w = angular_weight(a, b)
        if w:
            total = total + x.scale(ScalarPoly.const(w) * TAU2)
    for c in total.terms.values():
        for mono, _ in c.items():
            if mono[VARIABLES.index("tau2")] < 0:
                raise IntegrationError("negative tau2 power survived angular integration")
    return total


# -- classification -------------------------------------------------------------------

def b0_atoms(word: Word) -> list:
    return [(i, at.a) for i, at in enumerate(word) if at.kind == B0]


def classify(word: Word) -> str:
    """Family of a canonical r-stage word, by the b0 atoms it contains."""
    found = b0_atoms(word)
    if len(found) == 1 and found[0][0] == 0:
        return ALL_LEFT
    if len(found) == 2 and found[0][0] == 0:
        if found[1][1] == 1:
            return SINGLE_MIDDLE
        if found[1][1] == 2:
            return SQUARED_MIDDLE
    raise IntegrationError(f"unclassifiable word {word_to_text(word)}")


@dataclass(frozen=True)
class RadialTerm:
    coefficient: ScalarPoly
    word: Word
    kind: str

    def poly(self) -> NCPoly:
        return NCPoly({self.word: self.coefficient}, "r")


def radial_terms(x: NCPoly) -> list[RadialTerm]:
    x = cyclic_normalize(x)
    return [RadialTerm(c, w, classify(w)) for w, c in x.terms.items()]


def split_by_class(x: NCPoly) -> dict:
    groups = {ALL_LEFT: {}, SINGLE_MIDDLE: {}, SQUARED_MIDDLE: {}}
    for t in radial_terms(x):
        groups[t.kind][t.word] = t.coefficient
    return {k: NCPoly(v, "r") for k, v in groups.items()}


def _r_powers(c: ScalarPoly) -> dict:
    """Split a coefficient into {r exponent: r-free coefficient}."""
    return {key[0]: rest for key, rest in c.split("r").items()}


# -- one b0 block: Beta integrals ------------------------------------------------------

def beta(x: int, y: int) -> Fraction:
    return Fraction(factorial(x - 1) * factorial(y - 1), factorial(x + y - 1))


def integrate_all_left(t: RadialTerm) -> NCPoly:
    """integral_0^inf r^(2a+1) b0^m dr = (1/2) B(a+1, m-a-1) k^(-2a-2)."""
    if t.kind != ALL_LEFT:
        raise IntegrationError(f"{t.kind} term routed to the Beta integral")
    m = t.word[0].a
    rest = t.word[1:]
    out: dict = {}
    for n, c in _r_powers(t.coefficient).items():
        if n % 2 == 0:
            raise IntegrationError(f"even r power r^{n} in {word_to_text(t.word)}")
        a = (n - 1) // 2
        if m - a - 1 < 1:
            raise IntegrationError(f"divergent radial integral r^{n} b0^{m}")
        w = normal_word((kpow(-2 * a - 2),) + rest)
        val = c * (Fraction(1, 2) * beta(a + 1, m - a - 1))
        out[w] = out.get(w, ScalarPoly()) + val
    return NCPoly(out, "final")


# -- b0^2 in the middle: integration by parts ---------------------------------------------

def _middle_shape(word: Word):
    """(A, a, Di, mid, b, Dj) for ``b0^A k^a Di b0^mid k^b Dj``, else None."""
    atoms = list(word)
    if not atoms or atoms[0].kind != B0:
        return None
    A = atoms[0].a
    i = 1
    a = 0
    if i < len(atoms) and atoms[i].kind == K:
        a = atoms[i].a
        i += 1
    if i >= len(atoms) or atoms[i].kind != DK:
        return None
    Di = atoms[i]
    i += 1
    if i >= len(atoms) or atoms[i].kind != B0:
        return None
    mid = atoms[i].a
    i += 1
    b = 0
    if i < len(atoms) and atoms[i].kind == K:
        b = atoms[i].a
        i += 1
    if i != len(atoms) - 1 or atoms[i].kind != DK:
        return None
    return A, a, Di, mid, b, atoms[i]


def _ibp_word(c: ScalarPoly, word: Word) -> NCPoly | None:
    """``r b0^2 k^2 = -(1/2) d/dr b0`` on the middle block, then integrate by parts.

    Returns None when the middle block is not ``b0^2 k^b`` with b >= 2.
    """
    shape = _middle_shape(word)
    if shape is None:
        return None
    A, a, Di, mid, b, Dj = shape
    if mid != 2 or b < 2:
        return None
    out = NCPoly(stage="r")
    for n_odd, cr in _r_powers(c).items():
        if n_odd % 2 == 0:
            raise IntegrationError(f"even r power in {word_to_text(word)}")
        n = (n_odd - 1) // 2
        # boundary term r^(2n) b0^A ... b0 must vanish at 0 and at infinity
        if n < 1 or n > A:
            raise IntegrationError(f"boundary term survives for r^{n_odd} {word_to_text(word)}")
        tail = (Di, b0(1), kpow(b - 2), Dj)
        first = NCPoly({(b0(A), kpow(a)) + tail: cr * ScalarPoly.mono(n, r=2 * n - 1)}, "r")
        second = NCPoly({(b0(A + 1), kpow(a + 2)) + tail: cr * ScalarPoly.mono(-A, r=2 * n + 1)},
                        "r")
        out = out + first + second
    return out


def ibp_rewrite(t: RadialTerm) -> NCPoly:
    """Equivalent b0-in-the-middle terms for a b0^2-in-the-middle term."""
    if t.kind != SQUARED_MIDDLE:
        raise IntegrationError(f"{t.kind} term routed to integration by parts")
    for rot in cyclic_rotations(t.word):
        res = _ibp_word(t.coefficient, rot)
        if res is not None:
            return res
    raise IntegrationError(f"no b0^2 k^2 block to integrate by parts in {word_to_text(t.word)}")


# -- b0 in the middle: the modified-logarithm template -----------------------------------

def _direction(at) -> int:
    if at.kind != DK or at.twist or at.a + at.b != 1:
        raise IntegrationError("template needs untwisted first-order derivatives")
    return 1 if at.a else 2


def apply_Dm(t: RadialTerm) -> ModularTerms:
    """integral r^(2m+1) b0^(m+1) k^a Di b0 k^b Dj dr = (1/2) k^-2 D_m(Delta^(b/2) Di) Dj.

    Uses ``x k^b = k^b Delta^(b/2)(x)`` and requires a + b = 2m.
    """
    if t.kind != SINGLE_MIDDLE:
        raise IntegrationError(f"{t.kind} term routed to the modified-logarithm template")
    shape = _middle_shape(t.word)
    if shape is None:
        raise IntegrationError(f"unexpected shape {word_to_text(t.word)}")
    A, a, Di, mid, b, Dj = shape
    m = A - 1
    i, j = _direction(Di), _direction(Dj)
    out: ModularTerms = {}
    for n_odd, cr in _r_powers(t.coefficient).items():
        if n_odd != 2 * m + 1 or m < 1 or a + b != 2 * m:
            raise IntegrationError(
                f"exponent budget mismatch: r^{n_odd} {word_to_text(t.word)}")
        add_term(out, ModularKey(m, Fraction(b, 2), i, j), cr / 2)
    return out


SPLIT_WORD = (b0(3), kpow(4), dk(1, 0), b0(1), dk(0, 1))


def _split_pieces(c: ScalarPoly, word: Word) -> NCPoly:
    """r^5 b0^3 k^2 = r^3 b0^2 - (1/4) d/dr(r^4 b0^2), integrate by parts, then put
    half of the resulting b0^2-middle term in each cyclic order."""
    _, a, Di, _, b, Dj = _middle_shape(word)
    direct = NCPoly({(b0(2), kpow(a - 2), Di, b0(1), kpow(b), Dj): c * ScalarPoly.mono(1, r=3)},
                    "r")
    # -(c/4) d/dr(r^4 b0^2) k^2 Di b0 Dj  ->  (c/4) r^4 b0^2 k^2 Di (-2 r k^2 b0^2) Dj
    squared = c * ScalarPoly.mono(Fraction(-1, 4), r=5)
    out = direct
    for first, second in ((Di, Dj), (Dj, Di)):
        w = (b0(2), kpow(2), first, b0(2), kpow(2), second)
        res = _ibp_word(squared, w)
        out = out + res
    return out


def _check_split_target(t: RadialTerm) -> ScalarPoly:
    if t.word != SPLIT_WORD:
        raise IntegrationError(f"symmetric split applies only to {word_to_text(SPLIT_WORD)}")
    powers = _r_powers(t.coefficient)
    if set(powers) != {5}:
        raise IntegrationError("symmetric split expects a pure r^5 coefficient")
    return powers[5]


def symmetric_split(t: RadialTerm) -> ModularTerms:
    """Symmetrized treatment of ``r^5 b0^3 k^4 d1(k) b0 d2(k)``."""
    c = _check_split_target(t)
    out: ModularTerms = {}
    for rt in radial_terms_raw(_split_pieces(c, t.word)):
        for key, v in apply_Dm(rt).items():
            add_term(out, key, v)
    return out


def unsymmetrized_split(t: RadialTerm) -> ModularTerms:
    _check_split_target(t)
    return apply_Dm(t)


def radial_terms_raw(x: NCPoly) -> list[RadialTerm]:
    """Like radial_terms, but keeps each word's rotation (the order matters here)."""
    return [RadialTerm(c, w, classify(w)) for w, c in x.terms.items()]


# -- the whole reduction ----------------------------------------------------------------

@dataclass
class Reduction:
    xi_list: NCPoly
    r_list: NCPoly
    all_left_input: NCPoly
    single_middle: NCPoly
    squared_middle: NCPoly
    all_left_result: NCPoly
    post_ibp: NCPoly
    modular: ModularTerms
    modular_unsymmetrized: ModularTerms
    prefactor: ScalarPoly = field(default_factory=lambda: PREFACTOR)


def trace_rearrange(b2: NCPoly) -> NCPoly:
    return cyclic_normalize(b2)


def reduce_b2(b2: NCPoly, fault=None) -> Reduction:
    """Run every integration stage; ``fault`` may perturb an intermediate."""
    inject = fault or (lambda stage, x: x)
    xi_list = trace_rearrange(b2)
    r_list = cyclic_normalize(angular_integrate(polar_substitute(xi_list)))
    r_list = inject("rlist", r_list)
    groups = split_by_class(r_list)

    all_left = NCPoly(stage="final")
    for t in radial_terms(groups[ALL_LEFT]):
        all_left = all_left + integrate_all_left(t)
    all_left = inject("radial", all_left)

    post_ibp = groups[SINGLE_MIDDLE]
    for t in radial_terms(groups[SQUARED_MIDDLE]):
        post_ibp = post_ibp + ibp_rewrite(t)
    post_ibp = cyclic_normalize(post_ibp)

    modular: ModularTerms = {}
    unsym: ModularTerms = {}
    for t in radial_terms(post_ibp):
        if t.word == SPLIT_WORD:
            sym, plain = symmetric_split(t), unsymmetrized_split(t)
        else:
            sym = plain = apply_Dm(t)
        for key, v in sym.items():
            add_term(modular, key, v)
        for key, v in plain.items():
            add_term(unsym, key, v)
    modular = inject("modular_terms", modular)
    return Reduction(xi_list, r_list, groups[ALL_LEFT], groups[SINGLE_MIDDLE],
                     groups[SQUARED_MIDDLE], all_left, post_ibp, modular, unsym)
