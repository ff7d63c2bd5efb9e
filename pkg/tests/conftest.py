import pytest

from app.models.term import (
    BOOL, Goal, NIL, NUM, NUM_LIST, TRUE, Theorem, Var, ZERO, mk_binary, mk_binder, mk_cons, mk_eq, mk_neg, mk_suc,
)
from app.services.harness_service import record_corpus
from app.services.tactic_service import TacticLibrary
from app.utils.corpus import default_corpus_path, parse_corpus
from app.utils.syntax import Signature, parse_goal, parse_term, parse_type


def goal(text, signature=None):
    return parse_goal(text, signature)


def theorem(name, text, signature=None, index=0, dependencies=()):
    return Theorem(name, Goal((), parse_term(text, signature)), tuple(dependencies), index)


def nat_signature():
    signature = Signature()
    signature.declare("P", parse_type("num -> bool"))
    signature.declare("Q", parse_type("num -> bool"))
    signature.declare("c", parse_type("num"))
    return signature


@pytest.fixture(scope="session")
def corpus():
    return parse_corpus(default_corpus_path())


@pytest.fixture(scope="session")
def corpus_library(corpus):
    return corpus.library()


@pytest.fixture(scope="session")
def recorded_db(corpus, corpus_library):
    return record_corpus(corpus, corpus_library)


@pytest.fixture
def signature():
    return nat_signature()


@pytest.fixture
def library(signature):
    theorems = {
        "ADD_0": theorem("ADD_0", "!n:num. 0 + n = n", signature, 0),
        "ADD_SUC": theorem("ADD_SUC", "!m:num n:num. SUC m + n = SUC (m + n)", signature, 1),
    }
    return TacticLibrary(theorems, signature)


MINI_CORPUS = '''
# 小型語料
theory base
axiom AX: "!p:bool. p ==> p"
thm T_TRUE: "T"
proof: rewrite_tac []

theory more
requires base
const DOUBLE : num -> num
thm CONJ_T: "T /\\ T"
proof: conj_tac THENL [rewrite_tac [],
  rewrite_tac []]
thm USES_AX: "!q:bool. q ==> q"
proof: rewrite_tac [AX]
'''

FREE_NUMS = (Var("x", NUM), Var("y", NUM))
FREE_BOOLS = (Var("p", BOOL), Var("q", BOOL), TRUE)
FREE_LIST = Var("l", NUM_LIST)


def random_goal(rng, bound="a"):
    """
    隨機產生小型目標。

    從相同的 rng 狀態以不同的 bound 前綴產生，得到只差在約束變數名稱的目標。
    """
    assumptions = tuple(_random_formula(rng, bound, [], 2) for _ in range(rng.randint(0, 2)))
    return Goal(assumptions, _random_formula(rng, bound, [], 3))


def _random_num(rng, scope, depth):
    if depth > 0 and rng.random() < 0.3:
        return mk_suc(_random_num(rng, scope, depth - 1))
    options = [ZERO, *FREE_NUMS, *scope]
    return options[rng.randrange(len(options))]


def _random_list(rng, scope):
    tail = FREE_LIST if rng.random() < 0.5 else NIL
    return mk_cons(_random_num(rng, scope, 1), tail) if rng.random() < 0.5 else tail


def _random_formula(rng, bound, scope, depth):
    kind = rng.randrange(6) if depth > 0 else rng.randrange(3)
    if kind == 0:
        return FREE_BOOLS[rng.randrange(len(FREE_BOOLS))]
    if kind == 1:
        return mk_eq(_random_num(rng, scope, 2), _random_num(rng, scope, 2))
    if kind == 2:
        return mk_eq(_random_list(rng, scope), _random_list(rng, scope))
    if kind == 3:
        return mk_neg(_random_formula(rng, bound, scope, depth - 1))
    if kind == 4:
        op = ("/\\", "\\/", "==>", "<=>")[rng.randrange(4)]
        return mk_binary(op, _random_formula(rng, bound, scope, depth - 1),
                         _random_formula(rng, bound, scope, depth - 1))
    var = Var(f"{bound}{len(scope)}", NUM)
    quantifier = "!" if rng.random() < 0.5 else "?"
    return mk_binder(quantifier, var, _random_formula(rng, bound, scope + [var], depth - 1))
