from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

from app.models.term import Goal

TIME_BUCKETS = ("prediction", "tactic_application", "node_creation", "node_selection", "node_deletion")


@dataclass(frozen=True)
class CoDistance:
    variant: int = 5
    k1: float = 0.8
    k2: float = 0.8
    # 變體 3–5 使用的正規化分數種類
    score_variant: int = 1

    def __post_init__(self):
        if self.variant not in (1, 2, 3, 4, 5):
            raise ValueError(f"codist variant must be 1..5, got {self.variant}")
        if not (0 < self.k1 < 1 and 0 < self.k2 < 1):
            raise ValueError(f"k1 and k2 must lie strictly inside (0, 1), got {self.k1}, {self.k2}")
        if self.score_variant not in (1, 2):
            raise ValueError(f"score variant must be 1 or 2, got {self.score_variant}")

    @property
    def scoring(self) -> int:
        """計算候選分數時使用的 tactic_score 變體"""
        return 2 if self.variant == 2 else (1 if self.variant == 1 else self.score_variant)

    @property
    def drops_zero_scores(self) -> bool:
        return self.variant in (3, 4)


@dataclass(frozen=True)
class HammerConfig:
    preselect_n: int = 500
    final_n: int = 16
    budget: float = 0.1

    def __post_init__(self):
        if self.final_n > self.preselect_n:
            raise ValueError("final_n must not exceed preselect_n")
        if self.budget <= 0:
            raise ValueError("hammer budget must be positive")


@dataclass(frozen=True)
class StrategyConfig:
    name: str = "nh"
    codist: CoDistance = field(default_factory=CoDistance)
    search_budget: float = 5.0
    tactic_budget: float = 0.02
    preselect_n: int = 500
    hammer: Optional[HammerConfig] = None
    ortho: bool = False
    self_learn: bool = False
    tau1: float = 6.0
    feature_classes: Optional[FrozenSet[str]] = None
    greedy: bool = False
    cache: bool = True

    def __post_init__(self):
        if self.search_budget <= 0 or self.tactic_budget <= 0:
            raise ValueError("budgets must be positive")


@dataclass
class ProofTree:
    """已解決目標的戰術樹；children 依戰術產生子目標的原始順序排列"""
    tactic: str
    children: Tuple[Optional["ProofTree"], ...] = ()

    def size(self) -> int:
        return 1 + sum(child.size() for child in self.children if child is not None)


@dataclass
class SearchNode:
    id: int
    parent: Optional[int]
    producing_tactic: Optional[str]
    # 依難度（最佳候選分數由低到高）排列的目標
    goals: Tuple[Goal, ...]
    # goals[i] 在戰術輸出中的原始位置
    original_order: Tuple[int, ...]
    d: int
    parent_goal_index: Optional[int] = None
    open_index: int = 0
    w: int = 0
    candidates: List = field(default_factory=list)
    solved: Dict[int, ProofTree] = field(default_factory=dict)
    children: Dict[int, List[int]] = field(default_factory=dict)
    child_keys: Dict[int, set] = field(default_factory=dict)
    status: str = "open"
    version: int = 0

    @property
    def open_goal(self) -> Goal:
        return self.goals[self.open_index]

    def best_unused(self) -> Optional[object]:
        return self.candidates[self.w] if self.w < len(self.candidates) else None


@dataclass(frozen=True)
class Expansion:
    node_id: int
    d: int
    w: int
    codist: float
    tactic: str
    # 展開當下 frontier 中最小的 d + w
    frontier_min_cost: Optional[int] = None


@dataclass
class SearchStats:
    node_count: int = 0
    proof_size: int = 0
    elapsed: float = 0.0
    time_breakdown: Dict[str, float] = field(default_factory=lambda: {b: 0.0 for b in TIME_BUCKETS})


@dataclass
class SearchResult:
    outcome: str
    stats: SearchStats
    tree: Optional[ProofTree] = None
    script: Optional[str] = None
    trace: List[Expansion] = field(default_factory=list)
    nodes: List[SearchNode] = field(default_factory=list)

    @property
    def proved(self) -> bool:
        return self.outcome == "proved"


@dataclass(frozen=True)
class EvalRecord:
    theorem: str
    strategy: str
    outcome: str
    elapsed: float
    node_count: int
    proof_size: int
    script: str = ""
    theory: str = ""
    sequence_index: int = 0
