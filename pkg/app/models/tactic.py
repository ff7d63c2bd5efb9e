import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

from app.errors import BudgetExceeded
from app.models.term import Goal, goal_set_key


@dataclass(frozen=True)
class Subgoals:
    """戰術成功；goals 為空代表目標已被關閉"""
    goals: Tuple[Goal, ...]
    # 可重播的戰術字串（小型 hammer 會回報實際用到的前提）
    certificate: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))

    @property
    def closed(self) -> bool:
        return not self.goals

    def same_effect(self, other: "TacticOutcome") -> bool:
        return isinstance(other, Subgoals) and goal_set_key(self.goals) == goal_set_key(other.goals)


@dataclass(frozen=True)
class Failure:
    reason: str

    def same_effect(self, other) -> bool:
        return False


@dataclass(frozen=True)
class Timeout:
    reason: str = "budget exceeded"

    def same_effect(self, other) -> bool:
        return False


TacticOutcome = (Subgoals, Failure, Timeout)


class Budget:
    """
    合作式預算：戰術在每個改寫／歸結步驟呼叫 tick()。

    steps 模式下只計步數（可重現）；wall 模式下同時檢查 monotonic 時鐘。
    兩種模式都有寬鬆的牆鐘上限，避免任何呼叫卡住。
    """

    WALL_BACKSTOP_FACTOR = 50.0
    WALL_BACKSTOP_MIN = 1.0

    def __init__(self, seconds: float, steps_per_second: int = 100000, clock: str = "steps"):
        if seconds <= 0:
            raise ValueError("budget must be positive")
        self.seconds = seconds
        self.clock = clock
        self.max_steps = max(1, math.ceil(seconds * steps_per_second))
        self.steps = 0
        self.started = time.monotonic()
        if clock == "wall":
            self.deadline = self.started + seconds
        else:
            self.deadline = self.started + max(self.WALL_BACKSTOP_MIN, seconds * self.WALL_BACKSTOP_FACTOR)

    def tick(self, n: int = 1):
        self.steps += n
        if self.clock == "steps" and self.steps > self.max_steps:
            raise BudgetExceeded(f"step budget of {self.max_steps} exhausted")
        # 每 64 步才看一次時鐘
        if self.steps & 63 == 0 and time.monotonic() > self.deadline:
            raise BudgetExceeded(f"time budget of {self.seconds}s exhausted")

    def check_clock(self):
        if time.monotonic() > self.deadline:
            raise BudgetExceeded(f"time budget of {self.seconds}s exhausted")

    @property
    def elapsed(self) -> float:
        return time.monotonic() - self.started


@dataclass(frozen=True, eq=False)
class Tactic:
    """
    有名稱、可用字串表示的目標轉換器。

    run(goal, budget) 可能丟出 TacticError（轉成 Failure）或 BudgetExceeded（轉成 Timeout），
    兩者都由 tactic_service.apply_with_budget 處理。
    """
    canonical_string: str
    run: Callable[[Goal, Budget], Tuple[Goal, ...]] = field(repr=False)
    is_hammer: bool = False

    def __str__(self):
        return self.canonical_string
