import pytest

from app.errors import DatabaseFormatError
from app.models.feature_db import FeatureDb, GoalVector, dumps, load_db, loads, save_db
from app.models.term import Theorem
from app.services.knn_service import record_invocation, record_theorem
from app.utils.syntax import parse_type
from tests.conftest import goal, nat_signature, theorem


@pytest.fixture
def db():
    signature = nat_signature()
    db = FeatureDb(signature=signature)
    add_0 = theorem("ADD_0", "!n:num. 0 + n = n", signature, 0)
    p_c = theorem("P_C", "P c", signature, 1, dependencies=("ADD_0",))
    db.add_statement(add_0)
    record_invocation(db, add_0.statement, "gen_strip_tac", sequence_index=0)
    record_invocation(db, goal("0 + (n:num) = n"), "rewrite_tac [ADD_0]", "generated", 0)
    record_theorem(db, add_0, ["gen_strip_tac", "rewrite_tac [ADD_0]"])
    db.add_statement(p_c)
    record_invocation(db, p_c.statement, "hammer_tac [ADD_0]", sequence_index=1)
    record_theorem(db, p_c, ["hammer_tac [ADD_0]"])
    return db


def test_dumps_and_loads_preserve_everything(db):
    loaded = loads(dumps(db))
    assert loaded.goal_vectors == db.goal_vectors
    assert loaded.theorem_vectors == db.theorem_vectors
    assert loaded.statements == db.statements
    assert loaded.signature == db.signature
    assert loaded.doc_frequency == db.doc_frequency
    assert dumps(loaded) == dumps(db)


def test_doc_frequency_matches_vectors(db):
    assert db.rebuild_doc_frequency() == db.doc_frequency
    assert db.total_docs == 3
    assert db.tactic_count() == 3
    assert db.coverage("gen_strip_tac") == 1
    assert db.first_index("hammer_tac [ADD_0]") == 1
    assert db.max_sequence_index() == 1


def test_snapshot_before_index(db):
    snapshot = db.before(1)
    assert snapshot.total_docs == 2
    assert list(snapshot.statements) == ["ADD_0"]
    assert [v.name for v in snapshot.theorem_vectors] == ["ADD_0"]
    assert snapshot.rebuild_doc_frequency() == snapshot.doc_frequency
    assert db.before(0).total_docs == 0
    assert dumps(db.copy()) == dumps(db)


def test_statements_drop_theory_metadata():
    db = FeatureDb()
    axiom = theorem("AX", "!n:num. n = n")
    db.add_statement(Theorem(axiom.name, axiom.statement, theory="nat", is_axiom=True))
    assert db.statements["AX"].theory == ""
    assert not db.statements["AX"].is_axiom


def test_bad_origin_is_rejected():
    with pytest.raises(ValueError):
        FeatureDb().add_goal_vector(GoalVector("conj_tac", frozenset(), "imported"))


@pytest.mark.parametrize("text, line", [
    ("S\t0\tX\nQ\tjunk\n", 2),
    ("G\thuman\tconj_tac\n", 1),
    ("S\t0\t\nG\tmachine\tconj_tac\tconst:T\n", 2),
    ("G\thuman\tconj_tac\tbogus\n", 1),
    ("C\tP\tnum -> bool\nC\tP\tbool\n", 2),
    ("S\tzero\t\n", 1),
    ("H\tX\t0\t\tFOO = 0\n", 1),
])
def test_format_errors_carry_line_numbers(text, line):
    with pytest.raises(DatabaseFormatError) as info:
        loads(text)
    assert info.value.line == line


def test_save_and_load(db, tmp_path):
    path = tmp_path / "feature.db"
    save_db(db, str(path))
    loaded = load_db(str(path))
    assert loaded.goal_vectors == db.goal_vectors
    assert loaded.signature.get("P") == parse_type("num -> bool")
