import random

import pytest

from app.errors import ScriptError
from app.models.tactic import Failure, Subgoals, Timeout
from app.models.term import BOOL, FALSE, Var, NUM, type_check
from app.services.tactic_service import (
    TacticLibrary, apply_with_budget, builtin_rewrite, match, reference_tactics, rules_of,
)
from app.utils.syntax import parse_term
from tests.conftest import goal, random_goal, theorem


def goals_of(outcome):
    assert isinstance(outcome, Subgoals), outcome
    return outcome.goals


def test_accept_tac(library):
    assert library.apply("accept_tac", goal("p:bool |- p")).closed
    assert isinstance(library.apply("accept_tac", goal("p:bool ==> p")), Failure)


def test_gen_strip_tac(library, signature):
    result = goals_of(library.apply("gen_strip_tac", goal("!n:num. P n ==> P n", signature)))
    assert result == (goal("P (n:num) |- P n", signature),)


def test_strip_tac_splits_antecedents(library, signature):
    assert goals_of(library.apply("strip_tac", goal("p:bool /\\ q:bool ==> r:bool"))) == \
        (goal("p:bool, q:bool |- r:bool"),)
    assert goals_of(library.apply("strip_tac", goal("p:bool \\/ q:bool ==> r:bool"))) == \
        (goal("p:bool |- r:bool"), goal("q:bool |- r:bool"))
    assert goals_of(library.apply("strip_tac", goal("(?x:num. P x) ==> Q c", signature))) == \
        (goal("P (x:num) |- Q c", signature),)
    assert isinstance(library.apply("strip_tac", goal("p:bool /\\ q:bool")), Failure)


def test_conj_and_disj(library):
    assert goals_of(library.apply("conj_tac", goal("p:bool /\\ q:bool"))) == (goal("p:bool"), goal("q:bool"))
    assert isinstance(library.apply("conj_tac", goal("p:bool")), Failure)
    assert goals_of(library.apply("disj1_tac", goal("p:bool \\/ q:bool"))) == (goal("p:bool"),)
    assert goals_of(library.apply("disj2_tac", goal("p:bool \\/ q:bool"))) == (goal("q:bool"),)


def test_contra_tac(library):
    assert goals_of(library.apply("contra_tac", goal("~p:bool"))) == (goal("p:bool |- F"),)


def test_refl_and_sym(library):
    assert library.apply("refl_tac", goal("0 + 0 = 0 + 0")).closed
    assert isinstance(library.apply("refl_tac", goal("0 = SUC 0")), Failure)
    assert goals_of(library.apply("sym_tac", goal("SUC 0 = 0 + SUC 0"))) == (goal("0 + SUC 0 = SUC 0"),)


def test_eq_subst_tac(library):
    assert goals_of(library.apply("eq_subst_tac", goal("x:num = 0 |- SUC x = SUC 0"))) == \
        (goal("x:num = 0 |- SUC 0 = SUC 0"),)
    assert isinstance(library.apply("eq_subst_tac", goal("SUC 0 = SUC 0")), Failure)


def test_induct_num_tac(library):
    base, step = goals_of(library.apply("induct_num_tac", goal("!n:num. n + 0 = n")))
    assert base == goal("0 + 0 = 0")
    assert step == goal("(n:num) + 0 = n |- SUC n + 0 = SUC n")
    assert isinstance(library.apply("induct_num_tac", goal("!l:list(num). l = l")), Failure)


def test_induct_list_tac(library):
    base, step = goals_of(library.apply("induct_list_tac", goal("!l:list(num). l = l")))
    assert base == goal("NIL = NIL")
    assert step == goal("(l:list(num)) = l |- !h:num. h :: l = h :: l")


def test_absurd_tac(library):
    assert library.apply("absurd_tac", goal("F |- p:bool")).closed
    assert library.apply("absurd_tac", goal("p:bool, ~p |- q:bool")).closed
    assert isinstance(library.apply("absurd_tac", goal("p:bool |- q:bool")), Failure)


def test_res_tac(library, signature):
    (result,) = goals_of(library.apply("res_tac", goal("!x:num. P x ==> Q x, P c |- Q c", signature)))
    assert result.has_assumption(parse_term("Q c", signature))
    assert library.apply("accept_tac", result).closed
    assert isinstance(library.apply("res_tac", result), Failure)


def test_disj_cases_tac(library):
    assert goals_of(library.apply("disj_cases_tac", goal("p:bool \\/ q:bool |- q \\/ p"))) == \
        (goal("p:bool |- (q:bool) \\/ p"), goal("q:bool |- q \\/ (p:bool)"))


def test_cases_tactics(library):
    tactic = library.tactic("cases_num_tac `n:num`")
    assert tactic.canonical_string == "cases_num_tac `(n:num)`"
    zero, succ = goals_of(library.apply(tactic, goal("(n:num) + 0 = n")))
    assert zero == goal("0 + 0 = 0")
    assert succ == goal("SUC (n:num) + 0 = SUC n")
    assert isinstance(library.apply(tactic, goal("0 = 0")), Failure)

    empty, cons = goals_of(library.apply("cases_list_tac `l:list(num)`", goal("(l:list(num)) = l")))
    assert empty == goal("NIL = NIL")
    assert cons == goal("(h:num) :: (l:list(num)) = h :: l")


def test_exists_tac(library):
    tactic = library.tactic("exists_tac `SUC 0`")
    assert tactic.canonical_string == "exists_tac `SUC 0`"
    assert goals_of(library.apply(tactic, goal("?n:num. n = SUC 0"))) == (goal("SUC 0 = SUC 0"),)
    assert isinstance(library.apply("exists_tac `T`", goal("?n:num. n = SUC 0")), Failure)


def test_rewrite_with_theorems(library, signature):
    assert library.apply("rewrite_tac [ADD_0]", goal("0 + (0 + c) = c", signature)).closed
    assert library.apply("rewrite_tac [ADD_SUC]", goal("SUC c + 0 = SUC (c + 0)", signature)).closed
    assert goals_of(library.apply("rewrite_tac [ADD_0]", goal("0 + c = SUC c", signature))) == \
        (goal("c = SUC c", signature),)
    outcome = library.apply("rewrite_tac [ADD_0]", goal("c + 0 = c", signature))
    assert isinstance(outcome, Failure)
    assert "no progress" in outcome.reason


def test_rewrite_with_assumptions_and_constructors(library, signature):
    assert library.apply("rewrite_tac []", goal("x:num = 0 |- SUC x = SUC 0")).closed
    assert goals_of(library.apply("rewrite_tac []", goal("SUC c = SUC 0", signature))) == \
        (goal("c = 0", signature),)
    assert library.apply("rewrite_tac []", goal("~(0 = SUC c)", signature)).closed


def test_rewrite_limit(signature):
    comm = theorem("ADD_COMM", "!m:num n:num. m + n = n + m", signature)
    library = TacticLibrary({"ADD_COMM": comm}, signature)
    outcome = library.apply("rewrite_tac [ADD_COMM]", goal("c + 0 = 0", signature))
    assert isinstance(outcome, Failure)
    assert "limit" in outcome.reason


def test_rules_and_matching():
    (rule,) = rules_of(parse_term("!n:num. ~(SUC n = 0)"), "SUC_NOT_ZERO")
    assert rule.rhs == FALSE
    n = Var("n", NUM)
    binding = match(parse_term("0 + n:num"), parse_term("0 + SUC 0"), {n})
    assert binding == {n: parse_term("SUC 0")}
    assert match(parse_term("0 + n:num"), parse_term("SUC 0 + 0"), {n}) is None
    assert builtin_rewrite(parse_term("p:bool /\\ T")) == parse_term("p:bool")
    assert builtin_rewrite(parse_term("SUC 0 = 0")) == FALSE


def test_tiny_budget_times_out(library):
    assert isinstance(library.apply("conj_tac", goal("p:bool /\\ q:bool"), 1e-5), Timeout)
    with pytest.raises(ValueError):
        apply_with_budget(library.tactic("conj_tac"), goal("p:bool /\\ q:bool"), 0)


def test_unknown_tactics_are_script_errors(library):
    with pytest.raises(ScriptError):
        library.tactic("frobnicate_tac")
    with pytest.raises(ScriptError):
        library.tactic("rewrite_tac [NO_SUCH_THEOREM]")
    with pytest.raises(ScriptError):
        library.tactic("conj_tac [ADD_0]")
    with pytest.raises(ScriptError):
        library.tactic("exists_tac")


def test_canonical_strings(library):
    tactic = library.tactic("rewrite_tac [ADD_0,ADD_SUC]")
    assert tactic.canonical_string == "rewrite_tac [ADD_0, ADD_SUC]"
    assert library.tactic(tactic.canonical_string) is tactic
    names = [t.canonical_string for t in reference_tactics()]
    assert "rewrite_tac []" in names and "induct_num_tac" in names


@pytest.mark.parametrize("seed", range(20))
def test_subgoals_are_well_typed(library, seed):
    rng = random.Random(seed)
    tactics = library.reference_tactics() + [library.tactic(text) for text in (
        "rewrite_tac [ADD_0, ADD_SUC]", "cases_num_tac `x:num`", "cases_list_tac `l:list(num)`", "exists_tac `SUC 0`",
    )]
    for _ in range(10):
        conjecture = random_goal(rng)
        for tactic in tactics:
            outcome = library.apply(tactic, conjecture)
            if not isinstance(outcome, Subgoals):
                continue
            for sub in outcome.goals:
                for term in (*sub.assumptions, sub.conclusion):
                    type_check(term)
                    assert term.ty == BOOL, (tactic.canonical_string, conjecture)
