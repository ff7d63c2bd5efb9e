import itertools
import random

import pytest

from app.errors import BudgetExceeded, TacticError, UnsupportedFragmentError
from app.models.feature_db import FeatureDb
from app.models.search import HammerConfig
from app.models.tactic import Budget, Failure, Subgoals, Timeout
from app.models.term import (
    BOOL, Goal, Theorem, Var, dest_binary, dest_eq, dest_neg, free_vars, is_const, mk_binary, mk_disj, mk_imp, mk_neg,
)
from app.services.knn_service import record_invocation
from app.services.prover_service import (
    SKOLEM_PREFIX, Proof, clausify, hammer_tactic, preselect_theorems, refute, select_premises, unify,
)
from app.services.tactic_service import TacticLibrary, apply_metered
from app.utils.syntax import parse_term
from tests.conftest import goal, theorem


def test_unify():
    assert unify(("f", "X", ("a",)), ("f", ("b",), "Y")) == {"X": ("b",), "Y": ("a",)}
    assert unify("X", ("f", "X")) is None
    assert unify(("a",), ("b",)) is None
    assert unify(("f", "X", "X"), ("f", ("a",), ("b",))) is None


def test_clausify_negates_the_conclusion():
    clauses = clausify(goal("p:bool ==> p"), [])
    assert sorted(c.literals for c in clauses) == [((False, ("p:bool",)),), ((True, ("p:bool",)),)]
    assert {c.source for c in clauses} == {"goal"}


def test_clausify_adds_equality_axioms():
    clauses = clausify(goal("SUC 0 = 0"), [])
    assert any(c.source == "equality" for c in clauses)


def test_skolem_functions_do_not_capture_free_variables(signature):
    conjecture = goal("(?x:num. P x) ==> P (sk0:num)", signature)
    symbols = {atom[1][0] for c in clausify(conjecture, []) for _, atom in c.literals}
    assert symbols == {SKOLEM_PREFIX + "0", "sk0:num"}
    with pytest.raises(TacticError):
        refute(conjecture, [], Budget(5.0))


def test_free_variables_are_keyed_by_type():
    mixed = Goal((parse_term("!y:num. (f:num->num) y = 0"),), parse_term("(f:list(num)->num) NIL = 0"))
    heads = {atom[1][0] for c in clausify(mixed, []) if c.source != "equality" for _, atom in c.literals}
    assert heads == {"f:num->num", "f:list(num)->num"}
    with pytest.raises((TacticError, BudgetExceeded)):
        refute(mixed, [], Budget(0.5))

    same = Goal((parse_term("!y:num. (f:num->num) y = 0"),), parse_term("(f:num->num) (SUC 0) = 0"))
    assert isinstance(refute(same, [], Budget(5.0)), Proof)


def evaluate(term, assignment):
    if is_const(term, "T"):
        return True
    if is_const(term, "F"):
        return False
    if isinstance(term, Var):
        return assignment[term.name]
    negated = dest_neg(term)
    if negated is not None:
        return not evaluate(negated, assignment)
    for name, fn in (("/\\", lambda a, b: a and b), ("\\/", lambda a, b: a or b),
                     ("==>", lambda a, b: (not a) or b), ("<=>", lambda a, b: a == b)):
        parts = dest_binary(term, name)
        if parts is not None:
            return fn(evaluate(parts[0], assignment), evaluate(parts[1], assignment))
    lhs, rhs = dest_eq(term)
    return evaluate(lhs, assignment) == evaluate(rhs, assignment)


def is_tautology(term):
    names = sorted({v.name for v in free_vars(term)})
    return all(evaluate(term, dict(zip(names, values)))
               for values in itertools.product((True, False), repeat=len(names)))


PROPOSITIONS = [
    "p:bool \\/ ~p",
    "(p:bool ==> q:bool) ==> ~q ==> ~p",
    "(p:bool /\\ q:bool ==> r:bool) <=> (p ==> q ==> r)",
    "((p:bool ==> q:bool) ==> p) ==> p",
    "(p:bool <=> q:bool) <=> (q <=> p)",
    "~(p:bool <=> ~p)",
    "(p:bool = q:bool) ==> q = p",
    "p:bool /\\ (q:bool \\/ r:bool) <=> p /\\ q \\/ p /\\ r",
    "p:bool ==> q:bool",
    "(p:bool \\/ q:bool) ==> p /\\ q",
    "(p:bool ==> q:bool) ==> q ==> p",
    "p:bool <=> ~q:bool",
    "T",
    "F",
]


@pytest.mark.parametrize("text", PROPOSITIONS)
def test_refutation_agrees_with_truth_tables(text):
    conjecture = goal(text)
    budget = Budget(10.0)
    if is_tautology(conjecture.conclusion):
        assert refute(conjecture, [], budget).clause_count > 0
    else:
        with pytest.raises(TacticError):
            refute(conjecture, [], budget)


def random_formula(rng, atoms, depth):
    if depth == 0 or rng.random() < 0.25:
        atom = Var(rng.choice(atoms), BOOL)
        return mk_neg(atom) if rng.random() < 0.3 else atom
    op = rng.choice(("/\\", "\\/", "==>", "<=>", "~"))
    if op == "~":
        return mk_neg(random_formula(rng, atoms, depth - 1))
    return mk_binary(op, random_formula(rng, atoms, depth - 1), random_formula(rng, atoms, depth - 1))


@pytest.mark.parametrize("seed", range(25))
def test_random_propositions_agree_with_truth_tables(seed):
    rng = random.Random(seed)
    for index in range(20):
        atoms = ["p", "q", "r", "s"][:rng.randint(1, 4)]
        formula = random_formula(rng, atoms, 3)
        if index % 4 == 0:
            formula = mk_imp(formula, mk_disj(formula, random_formula(rng, atoms, 2)))
        conjecture = Goal((), formula)
        if is_tautology(formula):
            assert isinstance(refute(conjecture, [], Budget(10.0)), Proof)
        else:
            with pytest.raises(TacticError):
                refute(conjecture, [], Budget(10.0))


def test_first_order_refutation_reports_premises(signature):
    imp = theorem("IMP", "!x:num. Q x ==> P x", signature)
    qc = theorem("QC", "Q c", signature)
    unrelated = theorem("UNRELATED", "!x:num. x = x", signature)
    proof = refute(goal("P c", signature), [imp, unrelated, qc], Budget(5.0))
    assert set(proof.used_premises) == {"IMP", "QC"}
    assert proof.derivation[-1].is_empty


def test_equality_reasoning(signature):
    add_0_r = theorem("ADD_0_R", "!n:num. n + 0 = n", signature)
    proof = refute(goal("SUC (c + 0) = SUC c", signature), [add_0_r], Budget(5.0))
    assert proof.used_premises == ("ADD_0_R",)


def test_tiny_budget_raises_budget_exceeded():
    with pytest.raises(BudgetExceeded):
        refute(goal("((p:bool ==> q:bool) ==> p) ==> p"), [], Budget(1e-5))


def test_higher_order_input_is_rejected():
    with pytest.raises(UnsupportedFragmentError):
        clausify(goal("!f:num->num. f 0 = f 0"), [])
    with pytest.raises(UnsupportedFragmentError):
        clausify(goal("(\\x:num. x) 0 = 0"), [])
    outcome = TacticLibrary().apply("hammer_tac []", goal("!f:num->num. f 0 = f 0"))
    assert isinstance(outcome, Failure)


def test_hammer_certificate_replays(signature):
    imp = theorem("IMP", "!x:num. Q x ==> P x", signature, 0)
    qc = theorem("QC", "Q c", signature, 1)
    unrelated = theorem("UNRELATED", "!x:num. x = x", signature, 2)
    tactic = hammer_tactic(FeatureDb(), [unrelated, qc, imp], HammerConfig())
    outcome, _ = apply_metered(tactic, goal("P c", signature), 1.0)
    assert isinstance(outcome, Subgoals) and outcome.closed
    assert outcome.certificate == "hammer_tac [QC, IMP]"

    library = TacticLibrary({t.name: t for t in (imp, qc, unrelated)}, signature)
    assert library.apply(outcome.certificate, goal("P c", signature)).closed
    assert isinstance(library.apply("hammer_tac [QC]", goal("P c", signature)), Failure)


def test_hammer_config_validation():
    with pytest.raises(ValueError):
        HammerConfig(preselect_n=8, final_n=16)
    with pytest.raises(ValueError):
        HammerConfig(budget=0)


@pytest.fixture
def statement_db():
    db = FeatureDb()
    texts = [
        ("ADD_0_R", "!n:num. n + 0 = n"),
        ("IMP_REFL", "!p:bool. p ==> p"),
        ("MUL_1", "!n:num. n * SUC 0 = n"),
    ]
    for index, (_, text) in enumerate(texts):
        record_invocation(db, goal(text), "gen_strip_tac", sequence_index=index)
    record_invocation(db, goal("T"), "rewrite_tac []", sequence_index=3)
    for index, (name, text) in enumerate(texts):
        deps = ("IMP_REFL",) if name == "MUL_1" else ()
        db.add_statement(theorem(name, text, index=index, dependencies=deps))
    return db


def test_premise_preselection_uses_dependency_bonus(statement_db):
    conjecture = goal("!m:num. m * SUC 0 = m")
    assert [t.name for t in preselect_theorems(statement_db, conjecture, n=2)] == ["MUL_1", "IMP_REFL"]
    no_deps = statement_db.copy()
    mul_1 = no_deps.statements["MUL_1"]
    no_deps.add_statement(Theorem(mul_1.name, mul_1.statement, (), mul_1.sequence_index))
    assert [t.name for t in preselect_theorems(no_deps, conjecture, n=2)] == ["MUL_1", "ADD_0_R"]


def test_premise_selection(statement_db):
    conjecture = goal("!m:num. m * SUC 0 = m")
    preselected = list(statement_db.statements.values())
    assert [t.name for t in select_premises(preselected, conjecture, 1, statement_db)] == ["MUL_1"]
    assert select_premises(preselected, conjecture, 0, statement_db) == []


def test_hammer_certificate_replays_under_the_hammer_budget(signature):
    imp = theorem("IMP", "!x:num. Q x ==> P x", signature, 0)
    qc = theorem("QC", "Q c", signature, 1)
    library = TacticLibrary({t.name: t for t in (imp, qc)}, signature, replay_timeout=5.0, hammer_timeout=1e-5)
    assert library.hammer_timeout == 1e-5
    assert isinstance(library.apply("hammer_tac [QC, IMP]", goal("P c", signature)), Timeout)
    # 其他戰術仍使用一般重播預算
    assert library.apply("accept_tac", goal("p:bool |- p")).closed

    relaxed = library.with_hammer_timeout(HammerConfig().budget)
    assert relaxed.theorems is library.theorems
    assert relaxed.apply("hammer_tac [QC, IMP]", goal("P c", signature)).closed
    assert library.with_hammer_timeout(1e-5) is library
    assert TacticLibrary().hammer_timeout == HammerConfig().budget
