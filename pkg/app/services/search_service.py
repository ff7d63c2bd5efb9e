"""
修改版 A* 證明搜尋。

節點保存戰術產生的目標串列：目前的開放目標與其後的待處理目標。每次展開挑選
co-distance 最大的節點，對它的開放目標套用下一個尚未用過的預測戰術。
目標被解決時刪除同一目標底下的其他分支並前進到下一個待處理目標；
根節點的目標解決即為證明成功，frontier 清空為飽和，超過預算為逾時。
"""
import heapq
import logging
import time
from contextlib import contextmanager
from typing import Dict, List, Optional, Sequence, Tuple

from app.errors import ContractViolation, InvariantViolation, ScriptError
from app.models.feature_db import FeatureDb
from app.models.search import (
    CoDistance, Expansion, ProofTree, SearchNode, SearchResult, SearchStats, StrategyConfig,
    TIME_BUCKETS,
)
from app.models.tactic import Budget, Failure, Subgoals
from app.models.term import Goal, goal_set_key
from app.services.knn_service import ScoredTactic, preselect_tactics, score_tactics
from app.services.prover_service import hammer_tactic, preselect_theorems
from app.services.tactic_service import apply_metered
from app.utils.script import Atomic, Then, Thenl, print_script, replay

logger = logging.getLogger(__name__)

NODE_COST = 20
PREDICTION_BASE_COST = 10
GREEDY_MAX_DEPTH = 50
HAMMER_LABEL = "hammer_tac"


def codist_value(cfg: CoDistance, d: int, w: int, score: float) -> float:
    if cfg.variant in (1, 2):
        return score
    if cfg.variant == 3:
        return cfg.k1 ** d * score
    if cfg.variant == 4:
        return cfg.k1 ** d * cfg.k2 ** w * score
    return cfg.k1 ** d * cfg.k2 ** w


class StepCounter:
    """與 Budget 相同介面、但不會中斷的計步器"""

    def __init__(self):
        self.steps = 0

    def tick(self, n: int = 1):
        self.steps += n


class SearchClock:
    """
    搜尋時間帳：steps 模式以步數換算的虛擬時間計時（可重現），wall 模式量測實際時間。
    """

    def __init__(self, mode: str, steps_per_second: int, limit: float):
        self.mode = mode
        self.steps_per_second = steps_per_second
        self.limit = limit
        self.spent: Dict[str, float] = {bucket: 0.0 for bucket in TIME_BUCKETS}
        self.started = time.monotonic()
        self.backstop = max(Budget.WALL_BACKSTOP_MIN, limit * Budget.WALL_BACKSTOP_FACTOR)

    def charge(self, bucket: str, steps: int):
        if self.mode == "steps":
            self.spent[bucket] += steps / self.steps_per_second

    @contextmanager
    def timed(self, bucket: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            if self.mode == "wall":
                self.spent[bucket] += time.perf_counter() - start

    @property
    def elapsed(self) -> float:
        if self.mode == "wall":
            return time.monotonic() - self.started
        return sum(self.spent.values())

    def expired(self) -> bool:
        if self.elapsed > self.limit:
            return True
        return time.monotonic() - self.started > self.backstop


def _exact(goal: Goal):
    # 快取以結構相等為鍵：alpha 等價但名稱不同的目標，戰術字串未必能重播
    return goal.assumptions, goal.conclusion


class _Search:
    def __init__(self, conjecture: Goal, db: FeatureDb, library, cfg: StrategyConfig, audit: bool):
        self.conjecture = conjecture
        self.db = db
        self.library = library
        self.cfg = cfg
        self.audit = audit
        self.clock = SearchClock(library.clock, library.steps_per_second, cfg.search_budget)
        self.nodes: List[SearchNode] = []
        self.frontier: list = []
        self.trace: List[Expansion] = []
        self.predictions: Dict[tuple, List[ScoredTactic]] = {}
        self.outcomes: Dict[tuple, object] = {}
        self.proven: Dict[tuple, ProofTree] = {}
        self.preselected: List[str] = []
        self.hammer = None
        self.result: Optional[ProofTree] = None

    # ------------------------------------------------------------------
    def run(self) -> SearchResult:
        self._prepare()
        root = self._new_node(None, None, (self.conjecture,), (0,), 0, None)
        self._activate(root)
        while self.result is None:
            if self.clock.expired():
                return self._finish("timeout")
            popped = self._pop()
            if popped is None:
                return self._finish("saturated")
            self._expand(*popped)
        return self._finish("proved")

    def _prepare(self):
        counter = StepCounter()
        with self.clock.timed("prediction"):
            self.preselected = preselect_tactics(self.db, self.conjecture, self.cfg.preselect_n, self.cfg.tau1)
            counter.tick(len(self.db.theorem_vectors))
            if self.cfg.hammer is not None:
                premises = preselect_theorems(self.db, self.conjecture, self.cfg.hammer.preselect_n, self.cfg.tau1)
                counter.tick(len(self.db.statements))
                self.hammer = hammer_tactic(self.db, premises, self.cfg.hammer, self.cfg.tau1)
        self.clock.charge("prediction", counter.steps)

    # ------------------------------------------------------------------
    def predict(self, goal: Goal) -> List[ScoredTactic]:
        key = _exact(goal)
        if self.cfg.cache and key in self.predictions:
            return self.predictions[key]
        counter = StepCounter()
        counter.tick(PREDICTION_BASE_COST)
        with self.clock.timed("prediction"):
            scored = score_tactics(self.db, goal, self.preselected, variant=self.cfg.codist.scoring,
                                   tau1=self.cfg.tau1, classes=self.cfg.feature_classes, budget=counter)
            if self.cfg.codist.drops_zero_scores:
                scored = [s for s in scored if s.norm_score > 0]
        self.clock.charge("prediction", counter.steps)
        if self.cfg.cache:
            self.predictions[key] = scored
        return scored

    def apply(self, tactic, goal: Goal, seconds: float):
        key = (_exact(goal), tactic.canonical_string, seconds)
        if self.cfg.cache and key in self.outcomes:
            self.clock.charge("tactic_application", 1)
            return self.outcomes[key]
        with self.clock.timed("tactic_application"):
            outcome, steps = apply_metered(tactic, goal, seconds, self.library.clock,
                                           self.library.steps_per_second)
        self.clock.charge("tactic_application", steps)
        if self.cfg.cache:
            self.outcomes[key] = outcome
        return outcome

    def _hardness(self, goal: Goal) -> float:
        scored = self.predict(goal)
        return scored[0].norm_score if scored else 0.0

    # ------------------------------------------------------------------
    def _new_node(self, parent, tactic, goals, order, d, parent_goal_index) -> SearchNode:
        with self.clock.timed("node_creation"):
            node = SearchNode(len(self.nodes), parent, tactic, tuple(goals), tuple(order), d, parent_goal_index)
            self.nodes.append(node)
        self.clock.charge("node_creation", NODE_COST)
        return node

    def _activate(self, node: SearchNode):
        goal = node.open_goal
        node.w = 0
        node.candidates = []
        cached = self.proven.get(_exact(goal)) if self.cfg.cache else None
        if cached is not None:
            logger.debug(f"Goal {goal} already proven in this search")
            self._solve(node, cached)
            return
        if self.hammer is not None:
            outcome = self.apply(self.hammer, goal, self.cfg.hammer.budget)
            if isinstance(outcome, Subgoals) and outcome.closed:
                self._solve(node, ProofTree(outcome.certificate))
                return
            node.candidates.append(ScoredTactic(HAMMER_LABEL, 1.0))
            node.w = 1
        node.candidates.extend(self.predict(goal))
        self._push(node)

    def _solve(self, node: SearchNode, tree: ProofTree):
        node.solved[node.open_index] = tree
        if self.cfg.cache:
            self.proven[_exact(node.open_goal)] = tree
        self._delete_branches(node, node.open_index)
        for index in range(node.open_index + 1, len(node.goals)):
            if index not in node.solved:
                node.open_index = index
                node.version += 1
                self._activate(node)
                return
        node.status = "solved"
        node.version += 1
        if node.parent is None:
            self.result = node.solved[0]
            return
        by_position = {position: node.solved[i] for i, position in enumerate(node.original_order)}
        children = tuple(by_position[position] for position in range(len(node.goals)))
        parent = self.nodes[node.parent]
        if parent.status != "open" or parent.open_index != node.parent_goal_index:
            raise InvariantViolation(f"solved node {node.id} is detached from its parent goal")
        self._solve(parent, ProofTree(node.producing_tactic, children))

    def _delete_branches(self, node: SearchNode, index: int):
        with self.clock.timed("node_deletion"):
            stack = list(node.children.get(index, ()))
            deleted = 0
            while stack:
                child = self.nodes[stack.pop()]
                if child.status == "open":
                    child.status = "dead"
                    deleted += 1
                for ids in child.children.values():
                    stack.extend(ids)
        self.clock.charge("node_deletion", deleted)

    # ------------------------------------------------------------------
    def _key(self, node: SearchNode) -> float:
        best = node.best_unused()
        return codist_value(self.cfg.codist, node.d, node.w, best.norm_score)

    def _push(self, node: SearchNode):
        best = node.best_unused()
        if node.status != "open" or best is None:
            return
        node.version += 1
        heapq.heappush(self.frontier, (-self._key(node), node.id, best.tactic, node.version))

    def _pop(self) -> Optional[Tuple[SearchNode, float]]:
        with self.clock.timed("node_selection"):
            while self.frontier:
                negative, node_id, _, version = heapq.heappop(self.frontier)
                self.clock.charge("node_selection", 1)
                node = self.nodes[node_id]
                if node.version == version and node.status == "open" and node.best_unused() is not None:
                    return node, -negative
        return None

    def _frontier_min_cost(self) -> int:
        costs = [n.d + n.w for n in self.nodes if n.status == "open" and n.best_unused() is not None]
        return min(costs)

    def _expand(self, node: SearchNode, value: float):
        candidate = node.best_unused()
        minimum = self._frontier_min_cost() if self.audit else None
        self.trace.append(Expansion(node.id, node.d, node.w, value, candidate.tactic, minimum))
        node.w += 1
        goal = node.open_goal
        try:
            tactic = self.library.tactic(candidate.tactic)
            outcome = self.apply(tactic, goal, self.cfg.tactic_budget)
        except ScriptError as ex:
            outcome = Failure(str(ex))
        logger.debug(f"Expanded node {node.id} (d={node.d}, w={node.w - 1}) with `{candidate.tactic}`: "
                     f"{type(outcome).__name__}")
        if isinstance(outcome, Subgoals):
            label = outcome.certificate or tactic.canonical_string
            if outcome.closed:
                self._solve(node, ProofTree(label))
            else:
                self._add_child(node, label, outcome.goals)
        if node.status == "open":
            self._push(node)

    def _ancestor_goals(self, node: SearchNode) -> List[Goal]:
        goals = [node.open_goal]
        current = node
        while current.parent is not None:
            parent = self.nodes[current.parent]
            goals.append(parent.goals[current.parent_goal_index])
            current = parent
        return goals

    def _add_child(self, node: SearchNode, label: str, goals: Sequence[Goal]):
        ancestors = self._ancestor_goals(node)
        if any(goal == ancestor for goal in goals for ancestor in ancestors):
            return
        key = goal_set_key(goals)
        keys = node.child_keys.setdefault(node.open_index, set())
        if key in keys:
            return
        keys.add(key)
        order = sorted(range(len(goals)), key=lambda i: (self._hardness(goals[i]), i))
        child = self._new_node(node.id, label, [goals[i] for i in order], order, node.d + 1, node.open_index)
        node.children.setdefault(node.open_index, []).append(child.id)
        self._activate(child)

    # ------------------------------------------------------------------
    def _finish(self, outcome: str) -> SearchResult:
        stats = SearchStats(node_count=len(self.nodes), elapsed=self.clock.elapsed,
                            time_breakdown=dict(self.clock.spent))
        result = SearchResult(outcome, stats, trace=self.trace, nodes=self.nodes)
        if outcome == "proved":
            result.tree = self.result
            result.script = reconstruct(self.result)
            stats.proof_size = self.result.size()
            check_replay(self.conjecture, result.script, self.library, self.cfg)
        return result


def search(conjecture: Goal, db: FeatureDb, library, cfg: StrategyConfig, audit: bool = False) -> SearchResult:
    """
    在特徵資料庫的預測引導下搜尋 conjecture 的證明。

    :param db: 不含 conjecture 自身紀錄的時間序快照
    :param audit: 記錄每次展開時 frontier 的最小 d + w（供成本順序稽核）
    """
    if cfg.greedy:
        return search_greedy(conjecture, db, library, cfg)
    result = _Search(conjecture, db, library, cfg, audit).run()
    logger.debug(f"Search finished: {result.outcome} after {result.stats.node_count} nodes")
    return result


class _OutOfTime(Exception):
    pass


def search_greedy(conjecture: Goal, db: FeatureDb, library, cfg: StrategyConfig) -> SearchResult:
    """只採用第一個可套用的預測戰術、不回溯的基準策略"""
    state = _Search(conjecture, db, library, cfg, audit=False)
    state._prepare()
    created = [0]

    def prove(goal: Goal, ancestors: List[Goal], depth: int) -> Optional[ProofTree]:
        if state.clock.expired():
            raise _OutOfTime()
        if depth > GREEDY_MAX_DEPTH:
            return None
        if state.hammer is not None:
            outcome = state.apply(state.hammer, goal, cfg.hammer.budget)
            if isinstance(outcome, Subgoals) and outcome.closed:
                return ProofTree(outcome.certificate)
        for candidate in state.predict(goal):
            try:
                tactic = library.tactic(candidate.tactic)
            except ScriptError:
                continue
            outcome = state.apply(tactic, goal, cfg.tactic_budget)
            if not isinstance(outcome, Subgoals):
                continue
            path = ancestors + [goal]
            if any(sub == ancestor for sub in outcome.goals for ancestor in path):
                continue
            created[0] += 1
            state.clock.charge("node_creation", NODE_COST)
            children = []
            for sub in outcome.goals:
                child = prove(sub, path, depth + 1)
                if child is None:
                    return None
                children.append(child)
            return ProofTree(outcome.certificate or tactic.canonical_string, tuple(children))
        return None

    try:
        tree = prove(conjecture, [], 0)
        outcome = "proved" if tree is not None else "saturated"
    except _OutOfTime:
        tree, outcome = None, "timeout"
    stats = SearchStats(node_count=created[0] + 1, elapsed=state.clock.elapsed,
                        time_breakdown=dict(state.clock.spent))
    result = SearchResult(outcome, stats)
    if tree is not None:
        result.tree = tree
        result.script = reconstruct(tree)
        stats.proof_size = tree.size()
        check_replay(conjecture, result.script, library, cfg)
    return result


# ---------------------------------------------------------------------------
# 重建與稽核
# ---------------------------------------------------------------------------

def _to_ast(tree: Optional[ProofTree]):
    if tree is None:
        raise ContractViolation("cannot reconstruct an unsolved proof tree")
    head = Atomic(tree.tactic)
    if not tree.children:
        return head
    if len(tree.children) == 1:
        return Then(head, _to_ast(tree.children[0]))
    return Thenl(head, tuple(_to_ast(child) for child in tree.children))


def reconstruct(tree: Optional[ProofTree]) -> str:
    """把已解決的證明樹轉成只含 THEN / THENL 的腳本"""
    return print_script(_to_ast(tree))


def check_replay(conjecture: Goal, script: str, library, cfg: Optional[StrategyConfig] = None):
    """重建的腳本必須在同一個戰術庫中關閉 conjecture；hammer_tac 以搜尋時的 hammer 預算重播"""
    if cfg is not None and cfg.hammer is not None:
        library = library.with_hammer_timeout(cfg.hammer.budget)
    if not replay(conjecture, script, library):
        logger.error(f"Reconstructed script does not replay: {script}")
        raise InvariantViolation(f"reconstructed script `{script}` does not close {conjecture}")


def audit_ancestors(result: SearchResult) -> List[int]:
    """回傳含有祖先目標的節點編號"""
    nodes = result.nodes
    bad = []
    for node in nodes:
        ancestors = []
        current = node
        while current.parent is not None:
            parent = nodes[current.parent]
            ancestors.append(parent.goals[current.parent_goal_index])
            current = parent
        if any(goal == ancestor for goal in node.goals for ancestor in ancestors):
            bad.append(node.id)
    return bad


def audit_siblings(result: SearchResult) -> List[Tuple[int, int]]:
    """回傳目標集合重複的兄弟節點 (父節點, 子節點)"""
    bad = []
    seen = set()
    for node in result.nodes:
        if node.parent is None:
            continue
        key = (node.parent, node.parent_goal_index, goal_set_key(node.goals))
        if key in seen:
            bad.append((node.parent, node.id))
        seen.add(key)
    return bad


def audit_cost_order(result: SearchResult) -> List[int]:
    """
    變體 5 且 k1 = k2 時，co-distance 只依 d + w 單調遞減，
    因此每次展開的節點必須是 frontier 中 d + w 最小者。回傳違反的展開序號。
    """
    return [position for position, step in enumerate(result.trace)
            if step.frontier_min_cost is not None and step.d + step.w != step.frontier_min_cost]
