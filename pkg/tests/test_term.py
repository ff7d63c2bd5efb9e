import random

import pytest

from app.errors import SubstitutionError, TermError
from app.models.term import (
    App, BOOL, Const, Goal, NUM, SUC, Theorem, Type, Var, ZERO, alpha_equal, alpha_key, dest_binder, free_vars,
    fun_ty, mk_conj, mk_eq, mk_forall, mk_suc, occurs_in, replace_all, subst, subterms, variant,
)
from app.utils.syntax import parse_term
from tests.conftest import random_goal

x = Var("x", NUM)
y = Var("y", NUM)
p = Var("p", BOOL)


def test_application_checks_types():
    with pytest.raises(TermError):
        App(SUC, p)
    with pytest.raises(TermError):
        App(ZERO, x)
    assert App(SUC, x).ty == NUM


def test_goal_members_must_be_boolean():
    with pytest.raises(TermError):
        Goal((), x)
    with pytest.raises(TermError):
        Goal((x,), p)


def test_theorem_rejects_assumptions():
    with pytest.raises(TermError):
        Theorem("BAD", Goal((p,), p))


def test_alpha_equality_ignores_bound_names():
    a = parse_term("!x:num. x = x")
    b = parse_term("!y:num. y = y")
    assert a != b
    assert alpha_equal(a, b)
    assert alpha_key(a) == alpha_key(b)
    assert not alpha_equal(parse_term("!x:num. x = y:num"), parse_term("!y:num. y = y"))


def test_free_vars():
    term = parse_term("!x:num. x + y:num = z:num")
    assert {v.name for v in free_vars(term)} == {"y", "z"}


def test_variant_adds_primes():
    assert variant(x, {"x", "x'"}).name == "x''"
    assert variant(x, {"y"}) is x


def test_substitution_avoids_capture():
    term = parse_term("!y:num. x:num + y = y")
    result = subst(term, {x: y})
    _, bound, body = dest_binder(result)
    assert bound.name == "y'"
    assert y in free_vars(result)
    assert alpha_equal(result, parse_term("!z:num. y:num + z = z"))


def test_substitution_rejects_type_mismatch():
    with pytest.raises(SubstitutionError):
        subst(mk_eq(x, x), {x: p})


def test_substitution_leaves_bound_variable_alone():
    term = mk_forall(x, mk_eq(x, y))
    assert subst(term, {x: ZERO}) is term


def test_replace_all_and_occurs_in():
    term = mk_conj(mk_eq(mk_suc(x), y), mk_eq(y, mk_suc(x)))
    replaced = replace_all(term, mk_suc(x), ZERO)
    assert alpha_equal(replaced, mk_conj(mk_eq(ZERO, y), mk_eq(y, ZERO)))
    assert occurs_in(mk_suc(x), term)
    assert not occurs_in(mk_suc(y), term)


def test_occurs_in_respects_binders():
    term = mk_forall(x, mk_eq(mk_suc(x), y))
    assert not occurs_in(mk_suc(x), term)


def test_goal_equality_is_alpha_and_assumption_order_free():
    a = Goal((p, parse_term("q:bool")), parse_term("!x:num. x = x"))
    b = Goal((parse_term("q:bool"), p), parse_term("!z:num. z = z"))
    assert a == b
    assert hash(a) == hash(b)
    assert a != Goal((p,), parse_term("!x:num. x = x"))


def test_with_conclusion_deduplicates_assumptions():
    base = Goal((p,), p)
    extended = base.with_conclusion(parse_term("q:bool"), [p, parse_term("r:bool")])
    assert len(extended.assumptions) == 2
    assert extended.has_assumption(parse_term("r:bool"))


def test_subterm_views():
    term = parse_term("SUC (x:num + 0)")
    applied = subterms(term)
    curried = subterms(term, curried=True)
    # 完全套用檢視不含部分套用
    assert len(applied) == 4
    assert any(isinstance(t, Const) and t.name == "+" for t in curried)
    assert len(curried) > len(applied)


def test_type_constructors():
    ty = fun_ty(NUM, BOOL)
    assert ty.constructors() == frozenset({"fun", "num", "bool"})
    with pytest.raises(TermError):
        Type("fun", (NUM,))


def same_goal(a, b):
    return alpha_equal(a.conclusion, b.conclusion) and all(b.has_assumption(t) for t in a.assumptions) \
        and all(a.has_assumption(t) for t in b.assumptions)


@pytest.mark.parametrize("seed", range(30))
def test_goal_equality_is_an_equivalence(seed):
    rng = random.Random(seed)
    goals = []
    for _ in range(6):
        state = rng.getstate()
        original = random_goal(rng, "a")
        rng.setstate(state)
        renamed = random_goal(rng, "b")
        assert original == renamed and hash(original) == hash(renamed)
        goals += [original, Goal(tuple(reversed(renamed.assumptions)), renamed.conclusion)]

    for a in goals:
        assert a == a
        for b in goals:
            assert (a == b) == (b == a) == same_goal(a, b)
            if a != b:
                continue
            assert hash(a) == hash(b)
            for c in goals:
                if b == c:
                    assert a == c
