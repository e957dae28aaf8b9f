import math
from fractions import Fraction

import pytest

from nczeta.coeffring import ScalarPoly, TAU1, TAU2, TAU_ABS2, XI1, XI2
from nczeta.integrate import (ALL_LEFT, SINGLE_MIDDLE, SPLIT_WORD, SQUARED_MIDDLE,
                              IntegrationError, RadialTerm, angular_integrate, angular_weight,
                              apply_Dm, beta, classify, ibp_rewrite, integrate_all_left,
                              polar_substitute, radial_terms, symmetric_split,
                              unsymmetrized_split)
from nczeta.modular import ModularKey
from nczeta.ncalg import S_GENERAL, NCPoly, b0, cyclic_normalize, dk, kpow, normal_word
from nczeta.pipeline import golden_dir
from nczeta.serialize import parse_ncpoly


def r(n, c=1):
    return ScalarPoly.mono(c, r=n)


def term(coeff, *atoms):
    w = normal_word(atoms)
    return RadialTerm(coeff, w, classify(w))


def trig_value(t, theta, point):
    total = 0.0
    for (a, b), x in t.parts.items():
        ((w, c),) = x.terms.items()
        total += float(c.evaluate(point)) * math.cos(theta) ** a * math.sin(theta) ** b
    return total


def test_polar_quadratic_form_is_r_squared():
    t = polar_substitute(NCPoly.scalar(S_GENERAL))
    point = {"tau1": 0.7, "tau2": 1.3, "r": 2.0}
    jac = 2.0 / 1.3
    for theta in (0.0, 0.4, 2.1, 5.0):
        assert trig_value(t, theta, point) == pytest.approx(4.0 * jac, rel=1e-13)
    assert angular_integrate(t) == NCPoly.scalar(r(3), "r")


def test_polar_xi2_and_constant():
    t = polar_substitute(NCPoly.scalar(XI2))
    assert set(t.parts) == {(0, 1)}
    assert t.parts[0, 1] == NCPoly.scalar(ScalarPoly.mono(1, r=2, tau2=-2), "r")
    one = polar_substitute(NCPoly.scalar(1))
    assert one.parts == {(0, 0): NCPoly.scalar(ScalarPoly.mono(1, r=1, tau2=-1), "r")}


def test_angular_weights():
    assert angular_weight(1, 1) == 0
    assert angular_weight(2, 0) == Fraction(1, 2)
    assert angular_weight(2, 2) == Fraction(1, 8)
    assert angular_weight(0, 0) == 1


def test_angular_group_gives_4r3():
    c = 6 * XI1 ** 2 + 12 * TAU1 * XI1 * XI2 + 4 * TAU1 ** 2 * XI2 ** 2 + 2 * TAU_ABS2 * XI2 ** 2
    word = (b0(3), kpow(3), dk(2, 0))
    got = angular_integrate(polar_substitute(NCPoly({word: c})))
    assert got == NCPoly({word: r(3, 4)}, "r")


def test_beta():
    assert beta(1, 1) == 1
    assert beta(2, 3) == Fraction(1, 12)


def test_all_left_single():
    t = term(r(1), b0(2), kpow(1), dk(2, 0))
    assert integrate_all_left(t) == NCPoly({(kpow(-1), dk(2, 0)): ScalarPoly.const(Fraction(1, 2))},
                                           "final")


def test_all_left_family():
    fam = [term(r(1, -1), b0(2), kpow(1), dk(2, 0)),
           term(r(3, 4), b0(3), kpow(3), dk(2, 0)),
           term(r(5, -4), b0(4), kpow(5), dk(2, 0))]
    total = sum((integrate_all_left(t) for t in fam[1:]), integrate_all_left(fam[0]))
    assert total == NCPoly({(kpow(-1), dk(2, 0)): ScalarPoly.const(Fraction(-1, 6))}, "final")


def test_all_left_divergent():
    with pytest.raises(IntegrationError):
        integrate_all_left(term(r(3), b0(2), kpow(3), dk(2, 0)))


def test_all_left_closed_form(reduction, golden):
    want = golden["all_left_result.terms"]
    assert reduction.all_left_result == want
    assert len(want) == 7


def test_ibp_example():
    t = term(r(5), b0(2), kpow(2), dk(1, 0), b0(2), kpow(2), dk(1, 0))
    assert t.kind == SQUARED_MIDDLE
    want = NCPoly({(b0(2), kpow(2), dk(1, 0), b0(1), dk(1, 0)): r(3, 2),
                   (b0(3), kpow(4), dk(1, 0), b0(1), dk(1, 0)): r(5, -2)}, "r")
    assert ibp_rewrite(t) == want


def test_ibp_rejects_single_middle():
    with pytest.raises(IntegrationError):
        ibp_rewrite(term(r(3), b0(2), kpow(2), dk(1, 0), b0(1), dk(1, 0)))


def test_post_ibp_matches_golden(reduction, golden):
    assert reduction.post_ibp == golden["post_ibp.terms"]
    assert all(t.kind == SINGLE_MIDDLE for t in radial_terms(reduction.post_ibp))


@pytest.mark.parametrize("coeff, atoms, key, value", [
    (r(5, 4), (b0(3), kpow(3), dk(1, 0), b0(1), kpow(1), dk(1, 0)),
     ModularKey(2, Fraction(1, 2), 1, 1), 2),
    (r(3, -2), (b0(2), kpow(2), dk(1, 0), b0(1), dk(1, 0)),
     ModularKey(1, Fraction(0), 1, 1), -1),
    (-2 * TAU_ABS2 * r(7), (b0(4), kpow(4), dk(0, 1), b0(1), kpow(2), dk(0, 1)),
     ModularKey(3, Fraction(1), 2, 2), -TAU_ABS2),
])
def test_apply_Dm(coeff, atoms, key, value):
    got = apply_Dm(term(coeff, *atoms))
    want = value if isinstance(value, ScalarPoly) else ScalarPoly.const(value)
    assert got == {key: want}


def test_apply_Dm_budget_mismatch():
    with pytest.raises(IntegrationError, match="budget"):
        apply_Dm(term(r(3), b0(2), kpow(3), dk(1, 0), b0(1), dk(1, 0)))


def test_symmetric_split():
    t = RadialTerm(8 * TAU1 * r(5), SPLIT_WORD, SINGLE_MIDDLE)
    k = lambda m, i, j: ModularKey(m, Fraction(0), i, j)  # noqa: E731
    assert symmetric_split(t) == {k(1, 1, 2): 2 * TAU1, k(2, 1, 2): 2 * TAU1,
                                  k(1, 2, 1): -2 * TAU1, k(2, 2, 1): 2 * TAU1}
    assert unsymmetrized_split(t) == {k(2, 1, 2): 4 * TAU1}


def test_symmetric_split_guard():
    with pytest.raises(IntegrationError):
        symmetric_split(term(r(3, -2), b0(2), kpow(2), dk(1, 0), b0(1), dk(1, 0)))


def test_b2_matches_reference(b2, golden):
    assert b2 == golden["b2_reference.terms"]


def golden_terms(name):
    return parse_ncpoly((golden_dir() / f"{name}.terms").read_text())


def test_xi_list_matches_reference(reduction):
    assert cyclic_normalize(reduction.xi_list) == cyclic_normalize(golden_terms("xi_list_reference"))


@pytest.mark.parametrize("name", ["r_list", "all_left_input", "single_middle", "squared_middle"])
def test_reduction_stages_match_golden(reduction, name):
    assert getattr(reduction, name) == golden_terms(name)


def test_classification_total_and_exclusive(reduction):
    terms = radial_terms(reduction.r_list)
    assert len(terms) == len(reduction.r_list)
    kinds = {t.kind for t in terms}
    assert kinds == {ALL_LEFT, SINGLE_MIDDLE, SQUARED_MIDDLE}


def test_no_radial_variable_survives(reduction):
    for c in reduction.all_left_result.terms.values():
        assert not c.variables() & {"r", "u", "xi1", "xi2"}
    for c in reduction.modular.values():
        assert not c.variables() & {"r", "u", "xi1", "xi2"}


def test_prefactor(reduction):
    assert reduction.prefactor == 2 * ScalarPoly.var("pi") * TAU2 ** -1
