"""Noncommutative words over k, b0 and derivatives of k.

Atoms are small tuples ``(kind, a, b, twist)``:

* ``B0`` -- ``b0^a`` where ``b0 = (s*k^2 + 1)^-1`` (``s = r^2`` at the r-stage),
* ``K`` -- ``k^a`` (``a`` a nonzero integer),
* ``DK`` -- ``Delta^twist(delta1^a delta2^b (k))``,
* ``LOGK`` -- the same with ``log k`` in place of ``k``.

Because ``b0`` is a function of ``k`` the two commute, so every maximal run of
``b0``/``k`` atoms collapses to ``b0^m k^p``.  Everything else is free.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple

from .coeffring import ONE, R, TAU1, TAU_ABS2, XI1, XI2, ParseError, ScalarPoly

B0, K, DK, LOGK = 0, 1, 2, 3
STAGES = ("xi", "r", "final")
DIRECTIONS = ("delta1", "delta2", "xi1", "xi2", "r")


class StageError(ValueError):
    pass


class Atom(NamedTuple):
    kind: int
    a: int
    b: int = 0
    twist: Fraction = Fraction(0)

    def __str__(self) -> str:
        return atom_text(self)


def b0(m: int = 1) -> Atom:
    return Atom(B0, m)


def kpow(p: int = 1) -> Atom:
    return Atom(K, p)


def dk(a: int, b: int, twist=0) -> Atom:
    if a < 0 or b < 0 or a + b < 1:
        raise ValueError("derivative multi-index must be non-negative and nonzero")
    return Atom(DK, a, b, Fraction(twist))


def logk(a: int, b: int, twist=0) -> Atom:
    if a < 0 or b < 0 or a + b < 1:
        raise ValueError("derivative multi-index must be non-negative and nonzero")
    return Atom(LOGK, a, b, Fraction(twist))


Word = tuple  # tuple[Atom, ...] in normal form

# s(xi) = xi1^2 + 2 tau1 xi1 xi2 + |tau|^2 xi2^2, the scalar part of a2.
S_GENERAL = XI1 * XI1 + 2 * TAU1 * XI1 * XI2 + TAU_ABS2 * XI2 * XI2
S_RADIAL = R * R


def atom_key(atom: Atom) -> tuple:
    """Total order used for canonical cyclic representatives.

    B0 < K < DK < LOGK; larger b0 powers first, smaller k powers first,
    delta1-heavy derivatives first.
    """
    kind = atom.kind
    if kind == B0:
        return (0, -atom.a, 0, 0)
    if kind == K:
        return (1, atom.a, 0, 0)
    return (kind, -atom.a, atom.b, atom.twist)


def word_key(word: Word) -> tuple:
    return tuple(atom_key(a) for a in word)


def normal_word(atoms: Iterable[Atom]) -> Word:
    """Merge every b0/k run into ``b0^m k^p``."""
    out = []
    m = p = 0
    for at in atoms:
        kind = at.kind
        if kind == B0:
            m += at.a
        elif kind == K:
            p += at.a
        else:
            if m:
                out.append(Atom(B0, m))
            if p:
                out.append(Atom(K, p))
            m = p = 0
            out.append(at)
    if m:
        out.append(Atom(B0, m))
    if p:
        out.append(Atom(K, p))
    return tuple(out)


def b0_degree(word: Word) -> int:
    return sum(at.a for at in word if at.kind == B0)


def k_degree(word: Word) -> int:
    return sum(at.a for at in word if at.kind == K)


def derivative_count(word: Word) -> int:
    return sum(at.a + at.b for at in word if at.kind in (DK, LOGK))


class NCPoly:
    """Finite sum ``coefficient * word`` with ScalarPoly coefficients.

    ``stage`` records how ``b0`` is read: ``xi`` (``b0 = (s k^2+1)^-1``),
    ``r`` (``b0 = (r^2 k^2+1)^-1``) or ``final`` (no ``b0`` left).
    """

    __slots__ = ("terms", "stage")

    def __init__(self, terms: Mapping[Word, ScalarPoly] | None = None, stage: str = "xi",
                 _canonical: bool = False):
        if stage not in STAGES:
            raise StageError(f"unknown stage {stage!r}")
        self.stage = stage
        if _canonical:
            self.terms = terms
            return
        clean: dict = {}
        if terms:
            for w, c in terms.items():
                w = normal_word(w)
                v = clean.get(w)
                v = c if v is None else v + c
                if v:
                    clean[w] = v
                else:
                    clean.pop(w, None)
        self.terms = clean

    @classmethod
    def scalar(cls, c, stage: str = "xi") -> "NCPoly":
        c = c if isinstance(c, ScalarPoly) else ScalarPoly.const(c)
        return cls({(): c}, stage)

    @classmethod
    def word(cls, *atoms: Atom, coeff=ONE, stage: str = "xi") -> "NCPoly":
        c = coeff if isinstance(coeff, ScalarPoly) else ScalarPoly.const(coeff)
        return cls({tuple(atoms): c}, stage)

    def __len__(self) -> int:
        return len(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, NCPoly):
            return NotImplemented
        return self.stage == other.stage and self.terms == other.terms

    def __repr__(self) -> str:
        from .serialize import ncpoly_to_text

        return f"NCPoly(stage={self.stage!r}, {len(self.terms)} terms)\n" + ncpoly_to_text(self)

    def _same_stage(self, other: "NCPoly") -> None:
        if self.stage != other.stage:
            raise StageError(f"mixing stages {self.stage} and {other.stage}")

    def __add__(self, other: "NCPoly") -> "NCPoly":
        self._same_stage(other)
        out = dict(self.terms)
        _accumulate(out, other.terms)
        return NCPoly(out, self.stage, _canonical=True)

    def __neg__(self) -> "NCPoly":
        return NCPoly({w: -c for w, c in self.terms.items()}, self.stage, _canonical=True)

    def __sub__(self, other: "NCPoly") -> "NCPoly":
        return self + (-other)

    def scale(self, c) -> "NCPoly":
        if not c:
            return NCPoly({}, self.stage)
        return NCPoly({w: v * c for w, v in self.terms.items()}, self.stage)

    def __mul__(self, other) -> "NCPoly":
        if isinstance(other, NCPoly):
            return word_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other) -> "NCPoly":
        return self.scale(other)

    def coefficient(self, word: Iterable[Atom]) -> ScalarPoly:
        return self.terms.get(normal_word(word), ScalarPoly())

    def map_coefficients(self, fn) -> "NCPoly":
        return NCPoly({w: fn(c) for w, c in self.terms.items()}, self.stage)

    def with_stage(self, stage: str) -> "NCPoly":
        return NCPoly(dict(self.terms), stage, _canonical=True)


def _accumulate(out: dict, terms: Mapping) -> None:
    for w, c in terms.items():
        v = out.get(w)
        if v is None:
            out[w] = c
        else:
            v = v + c
            if v:
                out[w] = v
            else:
                del out[w]


def word_mul(x: NCPoly, y: NCPoly) -> NCPoly:
    x._same_stage(y)
    out: dict = {}
    for w1, c1 in x.terms.items():
        for w2, c2 in y.terms.items():
            w = normal_word(w1 + w2)
            c = c1 * c2
            v = out.get(w)
            out[w] = c if v is None else v + c
    return NCPoly({w: c for w, c in out.items() if c}, x.stage, _canonical=True)


def word_prod(*factors: NCPoly) -> NCPoly:
    result = factors[0]
    for f in factors[1:]:
        result = word_mul(result, f)
    return result


# -- derivations ----------------------------------------------------------------

def _k_power_derivative(p: int, j: int) -> list:
    """delta_j(k^p) as a list of (coefficient, atoms)."""
    d = dk(1, 0) if j == 1 else dk(0, 1)
    if p > 0:
        return [(1, [kpow(i), d, kpow(p - 1 - i)]) for i in range(p)]
    # delta(k^-1) = -k^-1 delta(k) k^-1, Leibniz over |p| factors of k^-1
    q = -p
    return [(-1, [kpow(-i - 1), d, kpow(-(q - i))]) for i in range(q)]


@lru_cache(maxsize=None)
def _delta_atom(atom: Atom, j: int, s: ScalarPoly) -> tuple:
    """delta_j(atom) as ((ScalarPoly, atoms), ...)."""
    kind = atom.kind
    if kind in (DK, LOGK):
        if atom.twist:
            raise StageError("delta of a Delta-twisted atom is not defined here")
        a, b = (atom.a + 1, atom.b) if j == 1 else (atom.a, atom.b + 1)
        return ((ONE, (Atom(kind, a, b, Fraction(0)),)),)
    if kind == K:
        return tuple((ScalarPoly.const(c), tuple(at for at in atoms if not (at.kind == K and at.a == 0)))
                     for c, atoms in _k_power_derivative(atom.a, j))
    # b0^m: Leibniz over factors, delta(b0) = -b0 delta(a2) b0, a2 = s k^2
    d = dk(1, 0) if j == 1 else dk(0, 1)
    m = atom.a
    out = []
    for i in range(m):
        left = (b0(i + 1),)
        right = (b0(m - i),)
        out.append((-s, left + (d, kpow(1)) + right))
        out.append((-s, left + (kpow(1), d) + right))
    return tuple(out)


def _check_direction(x: NCPoly, d: str) -> None:
    if d not in DIRECTIONS:
        raise ValueError(f"unknown direction {d!r}")
    if d in ("xi1", "xi2") and x.stage != "xi":
        raise StageError(f"{d} derivative requires the xi stage, got {x.stage}")
    if d == "r" and x.stage != "r":
        raise StageError(f"r derivative requires the r stage, got {x.stage}")


def derive(x: NCPoly, d: str, s: ScalarPoly | None = None) -> NCPoly:
    """Apply one of ``delta1, delta2, xi1, xi2, r`` with the Leibniz rule.

    ``s`` is the scalar with ``b0 = (s k^2 + 1)^-1``; it defaults to the
    general quadratic form at the xi stage and ``r^2`` at the r stage.
    """
    _check_direction(x, d)
    if s is None:
        s = S_GENERAL if x.stage == "xi" else S_RADIAL
    out: dict = {}

    def add(word, c):
        w = normal_word(word)
        v = out.get(w)
        out[w] = c if v is None else v + c

    if d in ("delta1", "delta2"):
        j = 1 if d == "delta1" else 2
        for w, c in x.terms.items():
            for i, at in enumerate(w):
                if at.kind == B0 and x.stage == "final":
                    raise StageError("b0 atom at the final stage")
                for c2, repl in _delta_atom(at, j, s):
                    add(w[:i] + repl + w[i + 1:], c * c2)
    else:
        var = d
        ds = s.diff(var)
        for w, c in x.terms.items():
            dc = c.diff(var)
            if dc:
                add(w, dc)
            if not ds:
                continue
            for i, at in enumerate(w):
                if at.kind == B0:
                    # d(b0^m) = -m (d s) k^2 b0^(m+1)
                    add(w[:i] + (b0(at.a + 1), kpow(2)) + w[i + 1:], c * ds * (-at.a))
    return NCPoly({w: c for w, c in out.items() if c}, x.stage, _canonical=True)


def derive_many(x: NCPoly, directions: Iterable[str], s: ScalarPoly | None = None) -> NCPoly:
    for d in directions:
        if not x:
            return x
        x = derive(x, d, s)
    return x


# -- adjoint ----------------------------------------------------------------------

def star_word(word: Word) -> tuple[int, Word]:
    """Adjoint of a word: reversed, with delta(k)* = -delta(k) per derivative."""
    sign = 1
    out = []
    for at in reversed(word):
        if at.kind in (DK, LOGK):
            if (at.a + at.b) % 2:
                sign = -sign
            out.append(Atom(at.kind, at.a, at.b, -at.twist))
        else:
            out.append(at)
    return sign, normal_word(out)


def star(x: NCPoly) -> NCPoly:
    out: dict = {}
    for w, c in x.terms.items():
        sign, sw = star_word(w)
        out[sw] = out.get(sw, ScalarPoly()) + (c if sign > 0 else -c)
    return NCPoly(out, x.stage)


# -- trace-cyclic normal form ---------------------------------------------------------

def _segments(word: Word) -> list:
    """Split a normal word into cyclic segments (b0/k blocks and single atoms)."""
    segs: list = []
    for at in word:
        if at.kind in (B0, K) and segs and segs[-1][0] == "block":
            segs[-1][1].append(at)
        elif at.kind in (B0, K):
            segs.append(("block", [at]))
        else:
            segs.append(("atom", [at]))
    if len(segs) > 1 and segs[0][0] == "block" and segs[-1][0] == "block":
        first = segs.pop(0)
        segs[-1] = ("block", segs[-1][1] + first[1])
    return [tuple(normal_word(s[1])) for s in segs]


def cyclic_rotations(word: Word) -> list[Word]:
    segs = _segments(word)
    if not segs:
        return [()]
    rots = []
    for i in range(len(segs)):
        atoms = []
        for seg in segs[i:] + segs[:i]:
            atoms.extend(seg)
        rots.append(tuple(atoms))
    return rots


@lru_cache(maxsize=None)
def cyclic_word(word: Word) -> Word:
    """Lexicographically least rotation under :func:`atom_key`."""
    return min(cyclic_rotations(word), key=word_key)


def cyclic_normalize(x: NCPoly) -> NCPoly:
    """Replace each word by its canonical rotation (valid under the trace)."""
    out: dict = {}
    for w, c in x.terms.items():
        cw = cyclic_word(w)
        v = out.get(cw)
        out[cw] = c if v is None else v + c
    return NCPoly({w: c for w, c in out.items() if c}, x.stage, _canonical=True)


# -- text grammar -----------------------------------------------------------------

def _fmt_twist(q: Fraction) -> str:
    return str(q)


def atom_text(at: Atom) -> str:
    if at.kind == B0:
        return f"b0^{at.a}"
    if at.kind == K:
        return f"k^{at.a}"
    name = "dk" if at.kind == DK else "logk"
    return f"{name}({at.a},{at.b};{_fmt_twist(at.twist)})"


def word_to_text(word: Word) -> str:
    return " ".join(atom_text(a) for a in word) if word else "1"


_ATOM_RE = re.compile(
    r"(?P<b0>b0\^(?P<m>-?\d+))|(?P<k>k\^(?P<p>-?\d+))|"
    r"(?P<d>(?P<dn>dk|logk)\((?P<da>\d+),(?P<db>\d+);(?P<dq>-?\d+(?:/\d+)?)\))"
)


def parse_word(text: str) -> Word:
    text = text.strip()
    if text == "1":
        return ()
    atoms = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        mt = _ATOM_RE.match(text, pos)
        if not mt:
            raise ParseError("bad atom", text, pos)
        if mt.group("b0"):
            m = int(mt.group("m"))
            if m < 1:
                raise ParseError("b0 power must be positive", text, pos)
            atoms.append(b0(m))
        elif mt.group("k"):
            p = int(mt.group("p"))
            if p == 0:
                raise ParseError("k power must be nonzero", text, pos)
            atoms.append(kpow(p))
        else:
            a, b = int(mt.group("da")), int(mt.group("db"))
            if a + b < 1:
                raise ParseError("empty derivative", text, pos)
            ctor = dk if mt.group("dn") == "dk" else logk
            atoms.append(ctor(a, b, Fraction(mt.group("dq"))))
        pos = mt.end()
        if pos < n and not text[pos].isspace():
            raise ParseError("atoms must be whitespace-separated", text, pos)
    return tuple(atoms)
