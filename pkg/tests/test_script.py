import pytest

from app.errors import ParseError, ScriptError, UnsupportedTacticalError
from app.models.tactic import Failure, Subgoals
from app.utils.script import Atomic, Then, Thenl, atomic_tactics, parse_script, print_script, replay, run_script
from tests.conftest import goal


def test_then_is_left_associative():
    ast = parse_script("strip_tac THEN conj_tac THEN refl_tac")
    assert ast == Then(Then(Atomic("strip_tac"), Atomic("conj_tac")), Atomic("refl_tac"))
    assert print_script(ast) == "strip_tac THEN conj_tac THEN refl_tac"


def test_thenl_and_arguments():
    ast = parse_script("induct_num_tac THENL [rewrite_tac [ADD_0], strip_tac THEN rewrite_tac [ADD_SUC]]")
    assert isinstance(ast, Thenl)
    assert len(ast.branches) == 2
    assert print_script(parse_script(print_script(ast))) == print_script(ast)
    assert atomic_tactics(ast) == ["induct_num_tac", "rewrite_tac [ADD_0]", "strip_tac",
                                   "rewrite_tac [ADD_SUC]"]


def test_parenthesized_second_operand():
    ast = parse_script("strip_tac THEN (conj_tac THEN refl_tac)")
    assert ast == Then(Atomic("strip_tac"), Then(Atomic("conj_tac"), Atomic("refl_tac")))
    assert print_script(ast) == "strip_tac THEN (conj_tac THEN refl_tac)"


def test_term_arguments_survive_parsing():
    ast = parse_script("exists_tac `SUC 0` THEN refl_tac")
    assert atomic_tactics(ast) == ["exists_tac `SUC 0`", "refl_tac"]


@pytest.mark.parametrize("text", [
    "strip_tac ORELSE conj_tac",
    "REPEAT strip_tac",
    "strip_tac >> conj_tac",
])
def test_unsupported_tacticals(text):
    with pytest.raises(UnsupportedTacticalError):
        parse_script(text)


def test_malformed_scripts():
    with pytest.raises(ParseError):
        parse_script("strip_tac THEN")
    with pytest.raises(ParseError):
        parse_script("conj_tac THENL []")


def test_run_script_then(library):
    outcome = run_script(parse_script("conj_tac THEN refl_tac"), goal("0 = 0 /\\ SUC 0 = SUC 0"), library)
    assert isinstance(outcome, Subgoals) and outcome.closed


def test_run_script_reports_failure(library):
    outcome = run_script(parse_script("conj_tac THEN refl_tac"), goal("0 = 0 /\\ SUC 0 = 0"), library)
    assert isinstance(outcome, Failure)
    assert outcome.reason.startswith("refl_tac")


def test_thenl_branch_count_must_match(library):
    with pytest.raises(ScriptError):
        run_script(parse_script("conj_tac THENL [refl_tac]"), goal("0 = 0 /\\ 0 = 0"), library)


def test_recorder_sees_canonical_strings(library):
    seen = []
    script = parse_script("induct_num_tac THENL [rewrite_tac [ADD_0], rewrite_tac [ADD_SUC]]")
    conjecture = goal("!n:num. n + 0 = n")
    outcome = run_script(script, conjecture, library, recorder=lambda g, t, o: seen.append((g, t)))
    assert isinstance(outcome, Subgoals) and outcome.closed
    assert [t for _, t in seen] == ["induct_num_tac", "rewrite_tac [ADD_0]", "rewrite_tac [ADD_SUC]"]
    assert seen[0][0] == conjecture


def test_replay(library):
    assert replay(goal("!n:num. 0 + n = n"), "gen_strip_tac THEN rewrite_tac [ADD_0]", library)
    assert not replay(goal("!n:num. 0 + n = n"), "gen_strip_tac", library)
    assert not replay(goal("0 = 0 /\\ 0 = 0"), "conj_tac THENL [refl_tac]", library)
    with pytest.raises(ParseError):
        replay(goal("0 = 0"), "refl_tac THEN", library)


def test_errors_point_at_the_failing_line():
    with pytest.raises(ParseError) as info:
        parse_script("strip_tac THEN\n  conj_tac THEN")
    assert info.value.line == 2
