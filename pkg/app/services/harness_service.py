"""
依時間序重新證明語料：策略預設、人類證明的紀錄、評估迴圈、U(X) 比較表與報表輸出。
"""
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from app.errors import CorpusError, InvariantViolation, ScriptError, TacsearchError
from app.models.feature_db import FeatureDb
from app.models.search import CoDistance, EvalRecord, HammerConfig, SearchResult, StrategyConfig
from app.models.tactic import Subgoals
from app.services.feature_service import ALL_CLASSES
from app.services.knn_service import DEFAULT_TAU1, record_invocation, record_theorem
from app.services.search_service import audit_ancestors, audit_cost_order, audit_siblings, search
from app.utils.corpus import Corpus, CorpusEntry
from app.utils.script import parse_script, run_script

logger = logging.getLogger(__name__)

TIME_BUCKET = 0.1

_NH = StrategyConfig("nh", CoDistance(5, 0.8, 0.8))

PRESETS: Dict[str, StrategyConfig] = {
    "d0": StrategyConfig("d0", CoDistance(2)),
    "d1": StrategyConfig("d1", CoDistance(1)),
    "d2": StrategyConfig("d2", CoDistance(1), feature_classes=ALL_CLASSES - {"top"}),
    "d3": StrategyConfig("d3", CoDistance(1), feature_classes=ALL_CLASSES - {"hosub"}),
    "d4": StrategyConfig("d4", CoDistance(1), tactic_budget=0.004),
    "d5": StrategyConfig("d5", CoDistance(1), tactic_budget=0.1),
    "d6": StrategyConfig("d6", CoDistance(3, 0.8, 0.8)),
    "d7": StrategyConfig("d7", CoDistance(4, 0.8, 0.8)),
    "d8": StrategyConfig("d8", CoDistance(4, 0.4, 0.4)),
    "d9": replace(_NH, name="d9"),
    "d16": replace(_NH, name="d16", hammer=HammerConfig(final_n=8, budget=0.02)),
    "d17": replace(_NH, name="d17", hammer=HammerConfig(final_n=16, budget=0.02)),
    "d18": replace(_NH, name="d18", hammer=HammerConfig(final_n=8, budget=0.1)),
    "d19": replace(_NH, name="d19", hammer=HammerConfig(final_n=16, budget=0.1)),
    "nh": _NH,
    "sh": replace(_NH, name="sh", hammer=HammerConfig(final_n=16, budget=0.1)),
    "e2": replace(_NH, name="e2", self_learn=True),
    "e3": replace(_NH, name="e3", self_learn=True, ortho=True),
    "greedy": StrategyConfig("greedy", CoDistance(1), greedy=True),
}


def strategy(name: str, **overrides) -> StrategyConfig:
    """
    取得預設策略並套用覆寫值（值為 None 的覆寫會被忽略）。

    :raises TacsearchError: 未知的策略名稱
    """
    base = PRESETS.get(name)
    if base is None:
        raise TacsearchError(f"unknown strategy {name}; known presets: {', '.join(PRESETS)}")
    changes = {key: value for key, value in overrides.items() if value is not None}
    return replace(base, **changes) if changes else base


# ---------------------------------------------------------------------------
# 紀錄
# ---------------------------------------------------------------------------

def record_proof(db: FeatureDb, entry: CorpusEntry, script: str, library, origin: str = "human",
                 ortho: bool = False, neighborhood: int = 20, tau1: float = DEFAULT_TAU1) -> List[str]:
    """
    重播腳本並把每個原子戰術呼叫記成目標向量，回傳存入的戰術字串。

    :raises CorpusError: 腳本無法關閉定理
    """
    theorem = entry.theorem
    stored: List[str] = []

    def recorder(goal, label, outcome):
        stored.append(record_invocation(db, goal, label, origin, theorem.sequence_index, library=library,
                                        ortho=ortho, outcome=outcome, neighborhood=neighborhood, tau1=tau1))

    try:
        outcome = run_script(parse_script(script), theorem.statement, library, recorder)
    except ScriptError as ex:
        logger.error(f"Proof of {theorem.name} failed: {ex}")
        raise CorpusError(f"{entry.source}:{entry.line}: proof of {theorem.name} failed: {ex}") from ex
    if not (isinstance(outcome, Subgoals) and outcome.closed):
        logger.error(f"Proof of {theorem.name} does not close the goal: {outcome}")
        raise CorpusError(f"{entry.source}:{entry.line}: proof of {theorem.name} does not close the goal")
    return stored


def record_entry(db: FeatureDb, entry: CorpusEntry, library, ortho: bool = False, neighborhood: int = 20,
                 tau1: float = DEFAULT_TAU1, generated: Optional[str] = None):
    """紀錄一個語料條目：公理只存敘述，定理另存目標向量與定理向量"""
    if entry.is_axiom:
        db.add_statement(entry.theorem)
        return
    tactics: List[str] = []
    if generated is not None:
        tactics += record_proof(db, entry, generated, library, "generated", ortho, neighborhood, tau1)
    tactics += record_proof(db, entry, entry.proof, library, "human", ortho, neighborhood, tau1)
    record_theorem(db, entry.theorem, tactics)
    db.add_statement(entry.theorem)


def record_corpus(corpus: Corpus, library, ortho: bool = False, neighborhood: int = 20,
                  tau1: float = DEFAULT_TAU1) -> FeatureDb:
    """依時間序重播所有人類證明並建立特徵資料庫"""
    db = FeatureDb(signature=corpus.signature.copy())
    for theory in corpus:
        for entry in theory.entries:
            record_entry(db, entry, library, ortho, neighborhood, tau1)
        logger.info(f"Recorded theory {theory.name}: {db.total_docs} goal vectors so far")
    logger.info(f"Recording finished: {db.total_docs} goal vectors, {db.tactic_count()} distinct tactics")
    return db


# ---------------------------------------------------------------------------
# 評估
# ---------------------------------------------------------------------------

def audit_snapshot(db: FeatureDb, index: int):
    """資料庫中不得有序號大於等於 index 的任何紀錄"""
    latest = db.max_sequence_index()
    if latest >= index:
        raise InvariantViolation(f"feature db holds data from position {latest} while attempting position {index}")


def audit_search(result: SearchResult, cfg: StrategyConfig):
    bad_nodes = audit_ancestors(result)
    if bad_nodes:
        raise InvariantViolation(f"nodes {bad_nodes} contain an ancestor goal")
    bad_siblings = audit_siblings(result)
    if bad_siblings:
        raise InvariantViolation(f"duplicate sibling goal sets under {bad_siblings}")
    if cfg.codist.variant == 5 and cfg.codist.k1 == cfg.codist.k2:
        out_of_order = audit_cost_order(result)
        if out_of_order:
            raise InvariantViolation(f"expansions {out_of_order} did not pick a cheapest frontier node")


def _db_key(cfg: StrategyConfig) -> Tuple:
    # 沒有自我學習的策略只看人類證明，可共用資料庫；正交化的結果另外取決於 tau1
    return (cfg.ortho, cfg.tau1 if cfg.ortho else None, cfg.name if cfg.self_learn else None)


@dataclass
class StrategyRow:
    strategy: str
    attempted: int
    solved: int
    solved_pct: float
    unique: int


@dataclass
class StrategyTable:
    reference: str
    rows: List[StrategyRow] = field(default_factory=list)

    def row(self, name: str) -> StrategyRow:
        for row in self.rows:
            if row.strategy == name:
                return row
        raise KeyError(name)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([vars(row) for row in self.rows],
                             columns=["strategy", "attempted", "solved", "solved_pct", "unique"])
        frame.insert(len(frame.columns), "reference", self.reference)
        return frame


def solved_set(records: Sequence[EvalRecord], name: str) -> set:
    return {r.theorem for r in records if r.strategy == name and r.outcome == "proved"}


def unique_solved(records: Sequence[EvalRecord], name: str, reference: str) -> int:
    """U(X)：name 證出而 reference 沒證出的定理數"""
    return len(solved_set(records, name) - solved_set(records, reference))


def strategy_table(records: Sequence[EvalRecord], reference: Optional[str] = None) -> StrategyTable:
    names = list(dict.fromkeys(r.strategy for r in records))
    reference = reference or (names[0] if names else "")
    table = StrategyTable(reference)
    for name in names:
        attempted = sum(1 for r in records if r.strategy == name)
        solved = len(solved_set(records, name))
        table.rows.append(StrategyRow(name, attempted, solved, 100.0 * solved / attempted if attempted else 0.0,
                                      unique_solved(records, name, reference)))
    return table


@dataclass
class Evaluation:
    records: List[EvalRecord]
    table: StrategyTable
    # 每個策略資料庫最後的不同戰術數
    tactic_counts: Dict[str, int] = field(default_factory=dict)


def evaluate(corpus: Corpus, strategies: Sequence[StrategyConfig], library, stride: int = 1,
             neighborhood: int = 20, audit: bool = False, reference: Optional[str] = None) -> Evaluation:
    """
    依時間序走過語料：每 stride 個定理嘗試一次，每個策略只看得到先前定理的資料，
    嘗試之後才紀錄該定理的人類證明（自我學習的策略另外紀錄自己找到的證明）。

    :param audit: 對每次搜尋執行祖先、兄弟節點與展開順序稽核
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if not strategies:
        raise ValueError("no strategy to evaluate")
    dbs: Dict[Tuple, FeatureDb] = {}
    owners: Dict[Tuple, StrategyConfig] = {}
    for cfg in strategies:
        key = _db_key(cfg)
        if key not in dbs:
            dbs[key] = FeatureDb(signature=corpus.signature.copy())
            owners[key] = cfg

    records: List[EvalRecord] = []
    position = 0
    for theory in corpus:
        logger.info(f"Evaluating theory {theory.name} ({len(theory.entries)} entries)")
        for entry in theory.entries:
            generated: Dict[Tuple, str] = {}
            if not entry.is_axiom:
                if position % stride == 0:
                    for cfg in strategies:
                        db = dbs[_db_key(cfg)]
                        record = attempt(entry, db, library, cfg, audit)
                        records.append(record)
                        if cfg.self_learn and record.script:
                            generated[_db_key(cfg)] = record.script
                position += 1
            for key, db in dbs.items():
                owner = owners[key]
                record_entry(db, entry, library, owner.ortho, neighborhood, owner.tau1, generated.get(key))

    table = strategy_table(records, reference)
    for row in table.rows:
        logger.info(f"Strategy {row.strategy}: {row.solved}/{row.attempted} proved, U={row.unique}")
        if row.attempted and not row.solved:
            logger.warning(f"Strategy {row.strategy} proved nothing")
    counts = {cfg.name: dbs[_db_key(cfg)].tactic_count() for cfg in strategies}
    return Evaluation(records, table, counts)


def attempt(entry: CorpusEntry, db: FeatureDb, library, cfg: StrategyConfig, audit: bool = False) -> EvalRecord:
    theorem = entry.theorem
    audit_snapshot(db, theorem.sequence_index)
    result = search(theorem.statement, db, library, cfg, audit=audit)
    if audit:
        audit_search(result, cfg)
    logger.info(f"{cfg.name} {theorem.name}: {result.outcome} "
                f"({result.stats.node_count} nodes, {result.stats.elapsed:.3f}s)")
    return EvalRecord(theorem.name, cfg.name, result.outcome, result.stats.elapsed, result.stats.node_count,
                      result.stats.proof_size, result.script or "", theorem.theory, theorem.sequence_index)


# ---------------------------------------------------------------------------
# 報表
# ---------------------------------------------------------------------------

RESULT_COLUMNS = ["theorem", "theory", "sequence_index", "strategy", "outcome", "elapsed", "node_count",
                  "proof_size", "script"]


def results_frame(records: Sequence[EvalRecord]) -> pd.DataFrame:
    return pd.DataFrame([{column: getattr(r, column) for column in RESULT_COLUMNS} for r in records],
                        columns=RESULT_COLUMNS)


def size_histogram(records: Sequence[EvalRecord]) -> pd.DataFrame:
    frame = results_frame(records)
    proved = frame[frame["outcome"] == "proved"]
    if proved.empty:
        return pd.DataFrame(columns=["strategy", "proof_size", "count"])
    counts = proved.groupby(["strategy", "proof_size"], sort=False).size().reset_index(name="count")
    return counts.sort_values(["strategy", "proof_size"], kind="stable").reset_index(drop=True)


def time_curve(records: Sequence[EvalRecord], bucket: float = TIME_BUCKET) -> pd.DataFrame:
    """每個時間點 t（以 bucket 遞增）之前證出的累計數"""
    rows = []
    names = list(dict.fromkeys(r.strategy for r in records))
    longest = max((r.elapsed for r in records), default=0.0)
    steps = max(1, math.ceil(round(longest / bucket, 9)) + 1)
    for name in names:
        times = [r.elapsed for r in records if r.strategy == name and r.outcome == "proved"]
        for k in range(1, steps + 1):
            limit = round(k * bucket, 6)
            rows.append({"strategy": name, "time": limit, "solved": sum(1 for t in times if t < limit)})
    return pd.DataFrame(rows, columns=["strategy", "time", "solved"])


def per_theory(records: Sequence[EvalRecord]) -> pd.DataFrame:
    frame = results_frame(records)
    columns = ["theory", "strategy", "attempted", "solved", "solved_pct"]
    if frame.empty:
        return pd.DataFrame(columns=columns)
    frame["proved"] = frame["outcome"] == "proved"
    grouped = frame.groupby(["theory", "strategy"], sort=False).agg(
        attempted=("theorem", "count"), solved=("proved", "sum")).reset_index()
    grouped["solved"] = grouped["solved"].astype(int)
    grouped["solved_pct"] = 100.0 * grouped["solved"] / grouped["attempted"]
    return grouped[columns]


def search_stats(records: Sequence[EvalRecord]) -> pd.DataFrame:
    """失敗搜尋的節點數、成功搜尋的證明長度與時間"""
    columns = ["strategy", "avg_nodes_failed", "max_nodes_failed", "avg_size_proved", "max_size_proved",
               "avg_time_proved"]
    rows = []
    for name in dict.fromkeys(r.strategy for r in records):
        failed = [r.node_count for r in records if r.strategy == name and r.outcome != "proved"]
        proved = [r for r in records if r.strategy == name and r.outcome == "proved"]
        rows.append({
            "strategy": name,
            "avg_nodes_failed": sum(failed) / len(failed) if failed else 0.0,
            "max_nodes_failed": max(failed, default=0),
            "avg_size_proved": sum(r.proof_size for r in proved) / len(proved) if proved else 0.0,
            "max_size_proved": max((r.proof_size for r in proved), default=0),
            "avg_time_proved": sum(r.elapsed for r in proved) / len(proved) if proved else 0.0,
        })
    return pd.DataFrame(rows, columns=columns)


def report(records: Sequence[EvalRecord], out_dir: str, reference: Optional[str] = None) -> Dict[str, str]:
    """把評估結果寫成 CSV，回傳 檔名 -> 路徑"""
    os.makedirs(out_dir, exist_ok=True)
    frames = {
        "results.csv": results_frame(records),
        "strategy_table.csv": strategy_table(records, reference).to_frame(),
        "size_histogram.csv": size_histogram(records),
        "time_curve.csv": time_curve(records),
        "per_theory.csv": per_theory(records),
        "search_stats.csv": search_stats(records),
    }
    written = {}
    for name, frame in frames.items():
        path = os.path.join(out_dir, name)
        frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
        written[name] = path
    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return written
