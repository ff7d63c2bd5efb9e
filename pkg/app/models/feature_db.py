"""
特徵資料庫：戰術字串與目標特徵的對應、定理向量、定理敘述，以及文件頻率統計。

檔案格式（UTF-8，每行一筆，欄位以 TAB 分隔）::

    C  name  type                               常數宣告
    S  index  theorem                           之後各行所屬的時間序
    H  name  index  dep;dep  statement          定理敘述與相依
    G  origin  tactic  feature,feature,...      目標向量
    T  name  tactic;tactic  feature,...         定理向量
"""
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from app.errors import DatabaseFormatError, ParseError, TermError
from app.models.term import Goal, Theorem
from app.services.feature_service import FeatureSet, deserialize, serialize
from app.utils.syntax import Signature, parse_term, parse_type, print_term, print_type

logger = logging.getLogger(__name__)

ORIGINS = ("human", "generated")


@dataclass(frozen=True)
class GoalVector:
    tactic: str
    features: FeatureSet
    origin: str = "human"
    sequence_index: int = 0


@dataclass(frozen=True)
class TheoremVector:
    name: str
    features: FeatureSet
    tactics: tuple
    sequence_index: int = 0


@dataclass
class FeatureDb:
    goal_vectors: List[GoalVector] = field(default_factory=list)
    theorem_vectors: List[TheoremVector] = field(default_factory=list)
    statements: Dict[str, Theorem] = field(default_factory=dict)
    signature: Signature = field(default_factory=Signature)
    doc_frequency: Counter = field(default_factory=Counter)
    # 戰術字串 -> goal_vectors 中的位置
    by_tactic: Dict[str, List[int]] = field(default_factory=dict)

    @property
    def total_docs(self) -> int:
        return len(self.goal_vectors)

    def add_goal_vector(self, vector: GoalVector):
        if vector.origin not in ORIGINS:
            raise ValueError(f"unknown origin {vector.origin}")
        self.by_tactic.setdefault(vector.tactic, []).append(len(self.goal_vectors))
        self.goal_vectors.append(vector)
        self.doc_frequency.update(vector.features)

    def add_theorem_vector(self, vector: TheoremVector):
        self.theorem_vectors.append(vector)

    def add_statement(self, theorem: Theorem):
        # 檔案中不保存理論名稱與公理標記
        self.statements[theorem.name] = replace(theorem, theory="", is_axiom=False)

    def coverage(self, tactic: str) -> int:
        """帶有這個戰術的目標向量數"""
        return len(self.by_tactic.get(tactic, ()))

    def vectors_of(self, tactic: str) -> List[GoalVector]:
        return [self.goal_vectors[i] for i in self.by_tactic.get(tactic, ())]

    def first_index(self, tactic: str) -> int:
        positions = self.by_tactic.get(tactic)
        return self.goal_vectors[positions[0]].sequence_index if positions else 0

    def tactic_count(self) -> int:
        return len(self.by_tactic)

    def max_sequence_index(self) -> int:
        indices = [v.sequence_index for v in self.goal_vectors]
        indices += [v.sequence_index for v in self.theorem_vectors]
        indices += [t.sequence_index for t in self.statements.values()]
        return max(indices, default=-1)

    def before(self, index: int) -> "FeatureDb":
        """只含 sequence_index < index 的快照"""
        snapshot = FeatureDb(signature=self.signature)
        for vector in self.goal_vectors:
            if vector.sequence_index < index:
                snapshot.add_goal_vector(vector)
        for vector in self.theorem_vectors:
            if vector.sequence_index < index:
                snapshot.add_theorem_vector(vector)
        for theorem in self.statements.values():
            if theorem.sequence_index < index:
                snapshot.add_statement(theorem)
        return snapshot

    def rebuild_doc_frequency(self) -> Counter:
        counts = Counter()
        for vector in self.goal_vectors:
            counts.update(vector.features)
        return counts

    def copy(self) -> "FeatureDb":
        return self.before(self.max_sequence_index() + 1)


def dumps(db: FeatureDb) -> str:
    lines = [f"C\t{name}\t{print_type(ty)}" for name, ty in db.signature.declared.items()]
    groups: Dict[int, List[str]] = {}
    names: Dict[int, str] = {}

    def group(index):
        return groups.setdefault(index, [])

    for theorem in db.statements.values():
        names.setdefault(theorem.sequence_index, theorem.name)
        statement = print_term(theorem.statement.conclusion, signature=db.signature)
        group(theorem.sequence_index).append(
            f"H\t{theorem.name}\t{theorem.sequence_index}\t{';'.join(theorem.dependencies)}\t{statement}")
    for vector in db.goal_vectors:
        group(vector.sequence_index).append(
            f"G\t{vector.origin}\t{vector.tactic}\t{serialize(vector.features)}")
    for vector in db.theorem_vectors:
        names[vector.sequence_index] = vector.name
        group(vector.sequence_index).append(
            f"T\t{vector.name}\t{';'.join(vector.tactics)}\t{serialize(vector.features)}")
    for index in sorted(groups):
        lines.append(f"S\t{index}\t{names.get(index, '')}")
        lines.extend(groups[index])
    return "".join(line + "\n" for line in lines)


def loads(text: str) -> FeatureDb:
    db = FeatureDb()
    index = 0
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        kind = fields[0]
        expected = {"C": 3, "S": 3, "H": 5, "G": 4, "T": 4}.get(kind)
        if expected is None:
            raise DatabaseFormatError(f"unknown record type {kind!r}", number)
        if len(fields) != expected:
            raise DatabaseFormatError(f"{kind} record needs {expected} fields, got {len(fields)}", number)
        try:
            index = _load_record(db, fields, index)
        except (ParseError, TermError, ValueError) as ex:
            raise DatabaseFormatError(str(ex), number) from ex
    return db


def _load_record(db: FeatureDb, fields: List[str], index: int) -> int:
    kind = fields[0]
    if kind == "C":
        db.signature.declare(fields[1], parse_type(fields[2]))
    elif kind == "S":
        index = int(fields[1])
    elif kind == "H":
        _, name, position, deps, statement = fields
        conclusion = parse_term(statement, db.signature)
        dependencies = tuple(dep for dep in deps.split(";") if dep)
        db.add_statement(Theorem(name, Goal((), conclusion), dependencies, int(position)))
    elif kind == "G":
        _, origin, tactic, features = fields
        db.add_goal_vector(GoalVector(tactic, deserialize(features), origin, index))
    else:
        _, name, tactics, features = fields
        db.add_theorem_vector(TheoremVector(name, deserialize(features),
                                            tuple(t for t in tactics.split(";") if t), index))
    return index


def save_db(db: FeatureDb, path: str):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps(db))
    logger.info(f"Saved feature db to {path}: {db.total_docs} goal vectors, "
                f"{len(db.theorem_vectors)} theorem vectors, {len(db.statements)} statements")


def load_db(path: Optional[str]) -> FeatureDb:
    with open(path, encoding="utf-8") as handle:
        db = loads(handle.read())
    logger.info(f"Loaded feature db from {path}: {db.total_docs} goal vectors")
    return db
