import math
import random

import pytest

from app.errors import ParseError
from app.models.feature_db import FeatureDb, GoalVector
from app.services.feature_service import Feature, features_of_goal
from app.services.knn_service import (
    nearest_goal_vectors, normalized, preselect_tactics, record_invocation, record_theorem, score_tactics,
    tactic_score_1, tactic_score_2, tfidf,
)
from tests.conftest import goal, theorem

f1, f2, f3, f4 = (Feature("const", name) for name in ("A1", "A2", "A3", "A4"))


@pytest.fixture
def small_db():
    db = FeatureDb()
    db.add_goal_vector(GoalVector("a", frozenset({f1, f2}), "human", 0))
    db.add_goal_vector(GoalVector("b", frozenset({f2, f3}), "human", 1))
    db.add_goal_vector(GoalVector("a", frozenset({f2, f3}), "generated", 2))
    return db


def test_tfidf(small_db):
    assert tfidf(small_db, f1) == pytest.approx(math.log(3 / 2))
    # 出現在每一份文件中的特徵權重為 0
    assert tfidf(small_db, f2) == 0.0
    assert tfidf(small_db, f4) == pytest.approx(math.log(3))
    assert tfidf(FeatureDb(), f1) == 0.0


def test_tactic_scores(small_db):
    f_o = frozenset({f1, f2, f4})
    expected = math.log(3 / 2) ** 2
    assert tactic_score_1(small_db, f_o, frozenset({f1, f2}), tau1=2) == pytest.approx(expected)
    assert tactic_score_2(small_db, f_o, frozenset({f1, f2}), tau1=2) == \
        pytest.approx(expected / (1 + math.log(4)))
    assert tactic_score_1(small_db, f_o, frozenset({f3}), tau1=2) == 0.0


def test_normalized():
    assert normalized(2.0, 4.0, frozenset(), frozenset()) == 0.5
    assert normalized(5.0, 4.0, frozenset(), frozenset()) == 1.0
    assert normalized(0.0, 0.0, frozenset({f1}), frozenset({f1, f2})) == 1.0
    assert normalized(0.0, 0.0, frozenset({f1}), frozenset({f2})) == 0.0


@pytest.fixture
def goal_db():
    db = FeatureDb()
    record_invocation(db, goal("!n:num. n + 0 = n"), "induct_num_tac", sequence_index=0)
    record_invocation(db, goal("p:bool /\\ q:bool"), "conj_tac", sequence_index=1)
    record_invocation(db, goal("q:bool /\\ r:bool"), "conj_tac", sequence_index=2)
    return db


def test_score_tactics(goal_db):
    scored = score_tactics(goal_db, goal("p:bool /\\ r:bool"), ["induct_num_tac", "conj_tac", "refl_tac"])
    assert [s.tactic for s in scored] == ["conj_tac", "induct_num_tac", "refl_tac"]
    assert scored[0].norm_score == pytest.approx(0.5)
    assert all(0.0 <= s.norm_score <= 1.0 for s in scored)
    assert score_tactics(FeatureDb(), goal("p:bool"), ["conj_tac"]) == []


def test_identical_goal_scores_one(goal_db):
    scored = score_tactics(goal_db, goal("!n:num. n + 0 = n"), ["induct_num_tac"], variant=2)
    assert scored[0].norm_score == pytest.approx(1.0)


def test_nearest_goal_vectors(goal_db):
    (nearest,) = nearest_goal_vectors(goal_db, goal("!m:num. m + 0 = m"), 1)
    assert nearest.tactic == "induct_num_tac"


def test_preselection_follows_similar_theorems():
    db = FeatureDb()
    record_invocation(db, goal("!p:bool q:bool. p /\\ q ==> q /\\ p"), "gen_strip_tac", sequence_index=0)
    record_invocation(db, goal("!n:num. n + 0 = n"), "induct_num_tac", sequence_index=1)
    record_invocation(db, goal("T"), "rewrite_tac []", sequence_index=2)
    record_theorem(db, theorem("CONJ_SYM", "!p:bool q:bool. p /\\ q ==> q /\\ p", index=0),
                   ["gen_strip_tac", "conj_tac", "accept_tac", "gen_strip_tac"])
    record_theorem(db, theorem("ADD_0_R", "!n:num. n + 0 = n", index=1), ["induct_num_tac", "rewrite_tac []"])
    assert db.theorem_vectors[0].tactics == ("gen_strip_tac", "conj_tac", "accept_tac")

    assert preselect_tactics(db, goal("!m:num. m + 0 = m"), n=1) == ["induct_num_tac"]
    assert preselect_tactics(db, goal("!m:num. m + 0 = m"), n=3) == \
        ["induct_num_tac", "rewrite_tac []", "gen_strip_tac"]
    assert len(preselect_tactics(db, goal("!m:num. m + 0 = m"), n=500)) == 5


def test_orthogonalization_prefers_covering_tactic(library):
    db = FeatureDb()
    record_invocation(db, goal("p:bool ==> q:bool"), "gen_strip_tac", sequence_index=0)
    record_invocation(db, goal("q:bool ==> p:bool"), "gen_strip_tac", sequence_index=1)
    record_invocation(db, goal("p:bool /\\ q:bool"), "conj_tac", sequence_index=2)

    stored = record_invocation(db, goal("r:bool ==> q:bool"), "strip_tac", sequence_index=3,
                               library=library, ortho=True)
    assert stored == "gen_strip_tac"
    assert db.coverage("gen_strip_tac") == 3

    stored = record_invocation(db, goal("r:bool ==> q:bool"), "strip_tac", sequence_index=4)
    assert stored == "strip_tac"


def test_orthogonalization_keeps_unmatched_tactic(library):
    db = FeatureDb()
    record_invocation(db, goal("p:bool /\\ q:bool"), "conj_tac", sequence_index=0)
    stored = record_invocation(db, goal("r:bool ==> q:bool"), "strip_tac", sequence_index=1,
                               library=library, ortho=True)
    assert stored == "strip_tac"
    with pytest.raises(ValueError):
        record_invocation(db, goal("r:bool ==> q:bool"), "strip_tac", ortho=True)


def test_unparsable_tactic_is_rejected_before_recording():
    db = FeatureDb()
    with pytest.raises(ParseError):
        record_invocation(db, goal("p:bool |- p"), "this is )) not a tactic")
    with pytest.raises(ParseError):
        record_invocation(db, goal("p:bool |- p"), "strip_tac THEN conj_tac")
    assert db.total_docs == 0
    assert record_invocation(db, goal("p:bool |- p"), "rewrite_tac [A,B]") == "rewrite_tac [A, B]"
    assert db.total_docs == 1


def brute_force_scores(vectors, f_o, tau1, variant):
    total = len(vectors)

    def weight(feature):
        df = sum(1 for _, features in vectors if feature in features)
        return max(0.0, math.log(total / (1 + df))) ** tau1

    def raw(f_p):
        value = sum(weight(f) for f in f_o if f in f_p)
        return value / (1 + math.log(1 + len(f_o))) if variant == 2 else value

    own = raw(f_o)
    best = {}
    for tactic, f_p in vectors:
        if own > 0:
            norm = min(1.0, raw(f_p) / own)
        else:
            norm = 1.0 if f_o <= f_p else 0.0
        best[tactic] = max(best.get(tactic, 0.0), norm)
    return best


@pytest.mark.parametrize("seed", range(100))
def test_scores_match_brute_force(seed):
    rng = random.Random(seed)
    conjecture = goal(rng.choice(["!n:num. n + 0 = n", "p:bool /\\ q:bool ==> q", "!l:list(num). l = l"]))
    own = sorted(features_of_goal(conjecture))
    universe = own + [Feature("const", f"X{i}") for i in range(6)]
    vectors = []
    db = FeatureDb()
    for index in range(rng.randint(1, 50)):
        tactic = f"tac_{rng.randint(0, 7)}"
        features = frozenset(rng.sample(universe, rng.randint(0, len(universe))))
        vectors.append((tactic, features))
        db.add_goal_vector(GoalVector(tactic, features, "human", index))
    tau1 = rng.choice([1.0, 2.0, 6.0])
    variant = rng.choice([1, 2])

    expected = brute_force_scores(vectors, frozenset(own), tau1, variant)
    scored = score_tactics(db, conjecture, list(expected), variant=variant, tau1=tau1)
    assert {s.tactic for s in scored} == set(expected)
    for s in scored:
        assert s.norm_score == pytest.approx(expected[s.tactic], rel=1e-9, abs=1e-12)
        assert 0.0 <= s.norm_score <= 1.0
    assert [s.norm_score for s in scored] == sorted((s.norm_score for s in scored), reverse=True)
