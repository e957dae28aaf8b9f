"""Deterministic text forms for term lists and graded symbols.

Term-list grammar, one term per line::

    # nczeta term-list stage=xi
    [order -4]
    <ScalarPoly canonical text> :: <word>

Lines are sorted by the canonical word order, so equal values always produce
byte-identical output.
"""

from __future__ import annotations

import re

from .coeffring import VARIABLES, ParseError, ScalarPoly
from .ncalg import B0, DK, K, STAGES, NCPoly, parse_word, word_key, word_to_text
from .symbolcalc import GradedSymbol

HEADER = "# nczeta term-list"
_HEADER_RE = re.compile(r"^# nczeta term-list stage=(\w+)\s*$")
_ORDER_RE = re.compile(r"^\[order (-?\d+)\]\s*$")


def _sorted_terms(x: NCPoly):
    return sorted(x.terms.items(), key=lambda wc: word_key(wc[0]))


def ncpoly_lines(x: NCPoly) -> list[str]:
    return [f"{c.to_text()} :: {word_to_text(w)}" for w, c in _sorted_terms(x)]


def ncpoly_to_text(x: NCPoly) -> str:
    return "\n".join([f"{HEADER} stage={x.stage}"] + ncpoly_lines(x)) + "\n"


def symbol_to_text(sym: GradedSymbol) -> str:
    stage = next((c.stage for c in sym.components.values()), "xi")
    lines = [f"{HEADER} stage={stage}"]
    for order in sym.orders():
        lines.append(f"[order {order}]")
        lines.extend(ncpoly_lines(sym.components[order]))
    return "\n".join(lines) + "\n"


def _parse_lines(text: str):
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty term list", text, 0)
    mt = _HEADER_RE.match(lines[0])
    if not mt or mt.group(1) not in STAGES:
        raise ParseError("missing or bad header", lines[0], 0)
    stage = mt.group(1)
    sections: dict = {None: {}}
    current = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        mo = _ORDER_RE.match(line)
        if mo:
            current = int(mo.group(1))
            sections.setdefault(current, {})
            continue
        if " :: " not in line:
            raise ParseError(f"line {lineno}: expected 'coefficient :: word'", line, 0)
        coeff_txt, word_txt = line.split(" :: ", 1)
        try:
            coeff = ScalarPoly.parse(coeff_txt)
            word = parse_word(word_txt)
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}", line, exc.pos) from None
        bucket = sections[current]
        bucket[word] = bucket.get(word, ScalarPoly()) + coeff
    return stage, sections


def parse_ncpoly(text: str) -> NCPoly:
    stage, sections = _parse_lines(text)
    terms = {}
    for bucket in sections.values():
        for w, c in bucket.items():
            terms[w] = terms.get(w, ScalarPoly()) + c
    return NCPoly(terms, stage)


def parse_symbol(text: str) -> GradedSymbol:
    stage, sections = _parse_lines(text)
    if sections.get(None):
        raise ParseError("terms before the first [order] section", text, 0)
    return GradedSymbol({o: NCPoly(t, stage) for o, t in sections.items() if o is not None})


# -- display form ---------------------------------------------------------------------

_TAU = {"tau1", "tau2"}


def _atom_display(at) -> str:
    if at.kind == B0:
        return "b0" if at.a == 1 else f"b0^{at.a}"
    if at.kind == K:
        return "k" if at.a == 1 else f"k^{at.a}"
    parts = []
    if at.a:
        parts.append("d1" if at.a == 1 else f"d1^{at.a}")
    if at.b:
        parts.append("d2" if at.b == 1 else f"d2^{at.b}")
    inner = "".join(parts) + ("(k)" if at.kind == DK else "(log k)")
    if at.twist:
        inner = f"Delta^{at.twist}({inner})"
    return inner


def pretty(x: NCPoly) -> str:
    """Human-readable form grouping tau-dependence, e.g.

    ``xi1^2*k^2 + (tau1^2+tau2^2)*xi2^2*k^2 + 2*tau1*xi1*xi2*k^2``
    """
    tau_idx = [VARIABLES.index(v) for v in _TAU]
    rest_idx = [i for i in range(len(VARIABLES)) if i not in tau_idx]
    groups = []
    for w, c in _sorted_terms(x):
        by_rest: dict = {}
        for mono, coef in c.items():
            rest = tuple(mono[i] for i in rest_idx)
            tau_mono = [0] * len(VARIABLES)
            for i in tau_idx:
                tau_mono[i] = mono[i]
            by_rest.setdefault(rest, {})[tuple(tau_mono)] = coef
        keys = sorted(by_rest, key=lambda r: (sum(1 for e in r if e), tuple(-e for e in r)))
        for rest in keys:
            groups.append((w, rest, ScalarPoly(by_rest[rest])))
    if not groups:
        return "0"
    out = []
    for i, (w, rest, tc) in enumerate(groups):
        factors = [n if e == 1 else f"{n}^{e}"
                   for n, e in zip((VARIABLES[j] for j in rest_idx), rest) if e]
        factors += [_atom_display(a) for a in w]
        sign = "+"
        if len(tc) == 1:
            ((mono, coef),) = tc.items()
            if coef < 0:
                sign, tc = "-", -tc
            lead = tc.to_text(explicit=False)
            if lead != "1" or not factors:
                factors.insert(0, lead)
        else:
            factors.insert(0, f"({tc.to_text(explicit=False)})")
        body = "*".join(factors)
        if i == 0:
            out.append(("-" if sign == "-" else "") + body)
        else:
            out.append(f" {sign} {body}")
    return "".join(out)
