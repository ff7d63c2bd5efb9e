"""
k-NN 戰術預測：TF-IDF 權重、tactic_score_1/2、正規化、預選、正交化與紀錄。
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

from app.models.feature_db import FeatureDb, GoalVector, TheoremVector
from app.models.tactic import Subgoals
from app.models.term import Goal, Theorem
from app.services.feature_service import FeatureSet, features_of_goal, features_of_statement, mask
from app.utils.script import parse_tactic_call

logger = logging.getLogger(__name__)

DEFAULT_TAU1 = 6.0


@dataclass(frozen=True)
class ScoredTactic:
    tactic: str
    norm_score: float


def tfidf(db: FeatureDb, feature) -> float:
    """ln(N / (1 + df))，下限為 0"""
    if db.total_docs < 1:
        return 0.0
    return max(0.0, math.log(db.total_docs / (1 + db.doc_frequency.get(feature, 0))))


def weights(db: FeatureDb, features: Iterable, tau1: float = DEFAULT_TAU1) -> Dict[object, float]:
    return {f: tfidf(db, f) ** tau1 for f in features}


def tactic_score_1(db: FeatureDb, f_o: FeatureSet, f_p: FeatureSet, tau1: float = DEFAULT_TAU1,
                   weight: Optional[Dict] = None) -> float:
    shared = f_o & f_p
    if weight is None:
        return sum(tfidf(db, f) ** tau1 for f in sorted(shared))
    return sum(weight[f] for f in sorted(shared))


def length_penalty(f_o: FeatureSet) -> float:
    return 1 + math.log(1 + len(f_o))


def tactic_score_2(db: FeatureDb, f_o: FeatureSet, f_p: FeatureSet, tau1: float = DEFAULT_TAU1,
                   weight: Optional[Dict] = None) -> float:
    return tactic_score_1(db, f_o, f_p, tau1, weight) / length_penalty(f_o)


def _score(variant, db, f_o, f_p, tau1, weight):
    if variant == 2:
        return tactic_score_2(db, f_o, f_p, tau1, weight)
    return tactic_score_1(db, f_o, f_p, tau1, weight)


def normalized(raw: float, self_score: float, f_o: FeatureSet, f_p: FeatureSet) -> float:
    if self_score > 0:
        return min(1.0, raw / self_score)
    # 所有共同特徵權重皆為 0 時，只有完全覆蓋才算相同
    return 1.0 if f_o <= f_p else 0.0


def score_tactics(db: FeatureDb, goal: Goal, candidates: Iterable[str], variant: int = 1,
                  tau1: float = DEFAULT_TAU1, classes=None, budget=None) -> List[ScoredTactic]:
    """
    對每個候選戰術取其關聯目標中最相似者的正規化分數，依分數遞減排序。

    :param classes: 開放目標端保留的特徵類別（None 表示全部）
    :param budget: 若提供，每比較一個向量就 tick 一次
    """
    if db.total_docs == 0:
        return []
    f_o = mask(features_of_goal(goal), classes)
    weight = weights(db, f_o, tau1)
    self_score = _score(variant, db, f_o, f_o, tau1, weight)
    scored = []
    for tactic in set(candidates):
        best = 0.0
        for vector in db.vectors_of(tactic):
            if budget is not None:
                budget.tick()
            raw = _score(variant, db, f_o, vector.features, tau1, weight)
            best = max(best, normalized(raw, self_score, f_o, vector.features))
        scored.append(ScoredTactic(tactic, best))
    scored.sort(key=lambda s: (-s.norm_score, db.first_index(s.tactic), s.tactic))
    return scored


def rank_theorem_vectors(db: FeatureDb, conjecture: Goal, tau1: float = DEFAULT_TAU1) -> List[TheoremVector]:
    f_o = features_of_goal(conjecture)
    weight = weights(db, f_o, tau1)
    keyed = [(-tactic_score_1(db, f_o, vector.features, tau1, weight), vector.sequence_index, position, vector)
             for position, vector in enumerate(db.theorem_vectors)]
    keyed.sort(key=lambda item: item[:3])
    return [item[3] for item in keyed]


def preselect_tactics(db: FeatureDb, conjecture: Goal, n: int = 500, tau1: float = DEFAULT_TAU1) -> List[str]:
    """沿著與猜想最相似的定理向量往下收集戰術，直到收集到 n 個不同的戰術"""
    selected: Dict[str, None] = {}
    for vector in rank_theorem_vectors(db, conjecture, tau1):
        for tactic in vector.tactics:
            if len(selected) >= n:
                return list(selected)
            selected.setdefault(tactic)
    return list(selected)[:n]


def nearest_goal_vectors(db: FeatureDb, goal: Goal, k: int, tau1: float = DEFAULT_TAU1) -> List[GoalVector]:
    f_o = features_of_goal(goal)
    weight = weights(db, f_o, tau1)
    keyed = sorted(((-tactic_score_1(db, f_o, vector.features, tau1, weight), position)
                    for position, vector in enumerate(db.goal_vectors)))
    return [db.goal_vectors[position] for _, position in keyed[:k]]


def orthogonalize(db: FeatureDb, tactic: str, goal: Goal, outcome: Subgoals, library,
                  neighborhood: int = 20, tau1: float = DEFAULT_TAU1) -> str:
    """
    在最接近的 neighborhood 個目標向量中舉辦競賽：依全庫覆蓋數遞減排序各戰術，
    選第一個在此目標上產生相同子目標集合的戰術；沒有就保留原戰術。
    """
    competitors: Dict[str, None] = {}
    for vector in nearest_goal_vectors(db, goal, neighborhood, tau1):
        competitors.setdefault(vector.tactic)
    ranked = sorted(competitors, key=lambda t: (-db.coverage(t), db.first_index(t), t))
    for candidate in ranked:
        if candidate == tactic:
            return tactic
        other = library.apply(candidate, goal, library.tactic_timeout)
        if outcome.same_effect(other):
            logger.debug(f"Orthogonalization replaced `{tactic}` by `{candidate}`")
            return candidate
    return tactic


def record_invocation(db: FeatureDb, goal: Goal, tactic: str, origin: str = "human",
                      sequence_index: int = 0, library=None, ortho: bool = False,
                      outcome: Optional[Subgoals] = None, neighborhood: int = 20,
                      tau1: float = DEFAULT_TAU1) -> str:
    """
    新增一筆目標向量，回傳實際存入的戰術字串。

    啟用正交化時需要 library 與 outcome（原戰術在此目標上的結果）。

    :raises ParseError: 戰術字串不符合戰術語法
    """
    if library is not None:
        tactic = library.tactic(tactic).canonical_string
    else:
        tactic = str(parse_tactic_call(tactic))
    if ortho:
        if library is None:
            raise ValueError("orthogonalization needs a tactic library")
        if outcome is None:
            outcome = library.apply(tactic, goal)
        if isinstance(outcome, Subgoals):
            tactic = orthogonalize(db, tactic, goal, outcome, library, neighborhood, tau1)
    db.add_goal_vector(GoalVector(tactic, features_of_goal(goal), origin, sequence_index))
    return tactic


def record_theorem(db: FeatureDb, theorem: Theorem, tactics: Sequence[str]):
    """新增定理向量（定理名稱、敘述特徵、證明中用到的所有戰術）"""
    unique = tuple(dict.fromkeys(tactics))
    db.add_theorem_vector(TheoremVector(theorem.name, features_of_statement(theorem), unique,
                                        theorem.sequence_index))
