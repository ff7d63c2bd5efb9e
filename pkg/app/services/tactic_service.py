"""
參考戰術庫：具名、可由字串重建的目標轉換器，以及有預算的戰術執行。
"""
import copy
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from app.errors import (
    BudgetExceeded, ParseError, ScriptError, TacticError, TermError, UnsupportedFragmentError,
)
from app.models.search import HammerConfig
from app.models.tactic import Budget, Failure, Subgoals, Tactic, Timeout
from app.models.term import (
    Abs, App, Const, FALSE, Goal, NIL, NUM, NUM_LIST, TRUE, Term, Theorem, Var, ZERO,
    add_assumptions, alpha_equal, dest_binary, dest_binder, dest_eq, dest_neg, free_vars, is_const, mk_binder,
    mk_conj, mk_cons, mk_eq, mk_neg, mk_suc, replace_all, strip_app, subst, variant,
)
from app.services.prover_service import hammer_replay
from app.utils.script import TacticCall, parse_tactic_call
from app.utils.syntax import DEFAULT_SIGNATURE, Signature, parse_term, print_term

logger = logging.getLogger(__name__)

# 每次戰術呼叫的固定成本（步數）
TACTIC_BASE_COST = 50
REWRITE_LIMIT = 1000

THEOREM_ARGUMENT = ("rewrite_tac", "hammer_tac")
TERM_ARGUMENT = ("cases_num_tac", "cases_list_tac", "exists_tac")


def _names(terms: Iterable[Term]) -> set:
    names = set()
    for term in terms:
        names |= {v.name for v in free_vars(term)}
    return names


def _goal_names(goal: Goal) -> set:
    return {v.name for v in goal.free_vars()}


# ---------------------------------------------------------------------------
# 無參數戰術
# ---------------------------------------------------------------------------

def accept_tac(goal: Goal, budget: Budget):
    if goal.has_assumption(goal.conclusion):
        return ()
    raise TacticError("conclusion is not an assumption")


def _strip_assume(term: Term, avoid: set) -> List[List[Term]]:
    """把前件拆成分支：合取併入同一分支，析取產生兩個分支，存在量詞換成見證變數"""
    conj = dest_binary(term, "/\\")
    if conj is not None:
        branches = []
        for left in _strip_assume(conj[0], avoid):
            for right in _strip_assume(conj[1], avoid):
                branches.append(left + right)
        return branches
    disj = dest_binary(term, "\\/")
    if disj is not None:
        return _strip_assume(disj[0], avoid) + _strip_assume(disj[1], avoid)
    exists = dest_binder(term, "?")
    if exists is not None:
        _, var, body = exists
        witness = variant(var, avoid)
        avoid.add(witness.name)
        return _strip_assume(subst(body, {var: witness}), avoid)
    return [[term]]


def _strip_once(goal: Goal) -> Optional[Tuple[Goal, ...]]:
    forall = dest_binder(goal.conclusion, "!")
    if forall is not None:
        _, var, body = forall
        fresh = variant(var, _goal_names(goal))
        return (Goal(goal.assumptions, subst(body, {var: fresh})),)
    imp = dest_binary(goal.conclusion, "==>")
    if imp is not None:
        antecedent, consequent = imp
        avoid = _goal_names(goal)
        return tuple(goal.with_conclusion(consequent, branch)
                     for branch in _strip_assume(antecedent, avoid))
    return None


def strip_tac(goal: Goal, budget: Budget):
    result = _strip_once(goal)
    if result is None:
        raise TacticError("nothing to strip")
    return result


def gen_strip_tac(goal: Goal, budget: Budget):
    first = _strip_once(goal)
    if first is None:
        raise TacticError("nothing to strip")
    done, todo = [], list(first)
    while todo:
        budget.tick()
        current = todo.pop(0)
        stripped = _strip_once(current)
        if stripped is None:
            done.append(current)
        else:
            todo = list(stripped) + todo
    return tuple(done)


def conj_tac(goal: Goal, budget: Budget):
    parts = dest_binary(goal.conclusion, "/\\")
    if parts is None:
        raise TacticError("no conjunction at top")
    return Goal(goal.assumptions, parts[0]), Goal(goal.assumptions, parts[1])


def disj1_tac(goal: Goal, budget: Budget):
    parts = dest_binary(goal.conclusion, "\\/")
    if parts is None:
        raise TacticError("no disjunction at top")
    return (Goal(goal.assumptions, parts[0]),)


def disj2_tac(goal: Goal, budget: Budget):
    parts = dest_binary(goal.conclusion, "\\/")
    if parts is None:
        raise TacticError("no disjunction at top")
    return (Goal(goal.assumptions, parts[1]),)


def contra_tac(goal: Goal, budget: Budget):
    negated = dest_neg(goal.conclusion)
    if negated is None:
        raise TacticError("no negation at top")
    return (goal.with_conclusion(FALSE, [negated]),)


def refl_tac(goal: Goal, budget: Budget):
    parts = dest_eq(goal.conclusion) or dest_binary(goal.conclusion, "<=>")
    if parts is None or not alpha_equal(*parts):
        raise TacticError("conclusion is not a reflexive equation")
    return ()


def sym_tac(goal: Goal, budget: Budget):
    parts = dest_eq(goal.conclusion)
    if parts is not None:
        return (Goal(goal.assumptions, mk_eq(parts[1], parts[0])),)
    parts = dest_binary(goal.conclusion, "<=>")
    if parts is not None:
        return (Goal(goal.assumptions, App(App(goal.conclusion.fn.fn, parts[1]), parts[0])),)
    raise TacticError("conclusion is not an equation")


def eq_subst_tac(goal: Goal, budget: Budget):
    for assumption in goal.assumptions:
        parts = dest_eq(assumption)
        if parts is None or alpha_equal(*parts):
            continue
        lhs, rhs = parts
        budget.tick()
        rewritten = replace_all(goal.conclusion, lhs, rhs)
        if not alpha_equal(rewritten, goal.conclusion):
            return (Goal(goal.assumptions, rewritten),)
    raise TacticError("no equational assumption applies")


def _induction_split(goal: Goal, ty) -> Tuple[Var, Term, set]:
    """找出前導 ! 串中第一個型別為 ty 的變數；之前的變數先被剝除"""
    term = goal.conclusion
    avoid = _goal_names(goal)
    while True:
        parts = dest_binder(term, "!")
        if parts is None:
            raise TacticError(f"no universally quantified {ty} variable")
        _, var, body = parts
        if var.ty == ty:
            return var, body, avoid
        fresh = variant(var, avoid)
        avoid.add(fresh.name)
        term = subst(body, {var: fresh})


def induct_num_tac(goal: Goal, budget: Budget):
    var, body, avoid = _induction_split(goal, NUM)
    n = variant(var, avoid)
    base = Goal(goal.assumptions, subst(body, {var: ZERO}))
    hypothesis = subst(body, {var: n})
    step = goal.with_conclusion(subst(body, {var: mk_suc(n)}), [hypothesis])
    return base, step


def induct_list_tac(goal: Goal, budget: Budget):
    var, body, avoid = _induction_split(goal, NUM_LIST)
    tail = variant(var, avoid)
    base = Goal(goal.assumptions, subst(body, {var: NIL}))
    hypothesis = subst(body, {var: tail})
    head = variant(Var("h", NUM), avoid | {tail.name} | _names([body]))
    step = goal.with_conclusion(mk_binder("!", head, subst(body, {var: mk_cons(head, tail)})),
                                [hypothesis])
    return base, step


def absurd_tac(goal: Goal, budget: Budget):
    for assumption in goal.assumptions:
        if is_const(assumption, "F"):
            return ()
        negated = dest_neg(assumption)
        if negated is not None and goal.has_assumption(negated):
            return ()
    raise TacticError("assumptions are not contradictory")


def res_tac(goal: Goal, budget: Budget):
    derived = []
    for assumption in goal.assumptions:
        pattern_vars, body = _strip_forall_vars(assumption)
        imp = dest_binary(body, "==>")
        if imp is None:
            continue
        antecedent, consequent = imp
        for fact in goal.assumptions:
            budget.tick()
            binding = match(antecedent, fact, pattern_vars)
            if binding is None or not free_vars(consequent) & pattern_vars <= set(binding):
                continue
            conclusion = subst(consequent, binding)
            if not goal.has_assumption(conclusion) \
                    and not any(alpha_equal(conclusion, d) for d in derived):
                derived.append(conclusion)
    if not derived:
        raise TacticError("no new consequences")
    return (goal.with_conclusion(goal.conclusion, derived),)


def disj_cases_tac(goal: Goal, budget: Budget):
    for position, assumption in enumerate(goal.assumptions):
        parts = dest_binary(assumption, "\\/")
        if parts is None:
            continue
        rest = goal.assumptions[:position] + goal.assumptions[position + 1:]
        base = Goal(rest, goal.conclusion)
        return base.with_conclusion(goal.conclusion, [parts[0]]), \
            base.with_conclusion(goal.conclusion, [parts[1]])
    raise TacticError("no disjunctive assumption")


# ---------------------------------------------------------------------------
# 有項參數的戰術
# ---------------------------------------------------------------------------

def _free_variable(goal: Goal, term: Term, ty) -> Var:
    if not isinstance(term, Var) or term.ty != ty:
        raise TacticError(f"argument must be a {ty} variable")
    if term not in goal.free_vars():
        raise TacticError(f"{term.name} is not free in the goal")
    return term


def cases_num(term: Term):
    def run(goal: Goal, budget: Budget):
        var = _free_variable(goal, term, NUM)
        return _cases(goal, {var: ZERO}), _cases(goal, {var: mk_suc(var)})
    return run


def cases_list(term: Term):
    def run(goal: Goal, budget: Budget):
        var = _free_variable(goal, term, NUM_LIST)
        head = variant(Var("h", NUM), _goal_names(goal))
        return _cases(goal, {var: NIL}), _cases(goal, {var: mk_cons(head, var)})
    return run


def _cases(goal: Goal, binding) -> Goal:
    assumptions = add_assumptions((), [subst(a, binding) for a in goal.assumptions])
    return Goal(assumptions, subst(goal.conclusion, binding))


def exists_witness(term: Term):
    def run(goal: Goal, budget: Budget):
        parts = dest_binder(goal.conclusion, "?")
        if parts is None:
            raise TacticError("no existential at top")
        _, var, body = parts
        if var.ty != term.ty:
            raise TacticError(f"witness has type {term.ty}, expected {var.ty}")
        return (Goal(goal.assumptions, subst(body, {var: term})),)
    return run


# ---------------------------------------------------------------------------
# 改寫
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewriteRule:
    lhs: Term
    rhs: Term
    pattern_vars: FrozenSet[Var]
    source: str


def _strip_forall_vars(term: Term) -> Tuple[FrozenSet[Var], Term]:
    variables = set()
    while True:
        parts = dest_binder(term, "!")
        if parts is None:
            return frozenset(variables), term
        variables.add(parts[1])
        term = parts[2]


def rules_of(term: Term, source: str, pattern_vars: FrozenSet[Var] = frozenset()) -> List[RewriteRule]:
    """
    從定理或假設取出改寫規則。

    前導 ! 變數成為樣式變數；合取拆開；`l = r`、`l <=> r` 由左往右；
    `~p` 變成 p -> F，其餘公式 p 變成 p -> T。
    """
    forall = dest_binder(term, "!")
    if forall is not None:
        return rules_of(forall[2], source, pattern_vars | {forall[1]})
    conj = dest_binary(term, "/\\")
    if conj is not None:
        return rules_of(conj[0], source, pattern_vars) + rules_of(conj[1], source, pattern_vars)
    if is_const(term, "T"):
        return []
    parts = dest_eq(term) or dest_binary(term, "<=>")
    if parts is None:
        negated = dest_neg(term)
        parts = (negated, FALSE) if negated is not None else (term, TRUE)
    lhs, rhs = parts
    if alpha_equal(lhs, rhs) or lhs in pattern_vars:
        return []
    if not (free_vars(rhs) & pattern_vars) <= free_vars(lhs):
        return []
    return [RewriteRule(lhs, rhs, frozenset(pattern_vars), source)]


def theorem_rules(theorem: Theorem) -> List[RewriteRule]:
    # 定理中的自由變數視同全稱
    return rules_of(theorem.statement.conclusion, theorem.name, free_vars(theorem.statement.conclusion))


def match(pattern: Term, term: Term, pattern_vars, binding=None,
          bound: Tuple[Tuple[Var, Var], ...] = ()) -> Optional[Dict[Var, Term]]:
    """一階比對：回傳樣式變數的代換，失敗回傳 None"""
    binding = dict(binding or {})
    if not _match(pattern, term, pattern_vars, binding, bound):
        return None
    return binding


def _match(pattern, term, pattern_vars, binding, bound) -> bool:
    if pattern.ty != term.ty:
        return False
    if isinstance(pattern, Var):
        for p_var, t_var in reversed(bound):
            if pattern == p_var:
                return term == t_var
        # 目標中被綁定的變數只能對應到樣式中的綁定變數
        target_bound = {t for _, t in bound}
        if pattern in pattern_vars:
            if free_vars(term) & target_bound:
                return False
            previous = binding.get(pattern)
            if previous is None:
                binding[pattern] = term
                return True
            return alpha_equal(previous, term)
        return pattern == term and term not in target_bound
    if isinstance(pattern, Const):
        return pattern == term
    if isinstance(pattern, App):
        return isinstance(term, App) and _match(pattern.fn, term.fn, pattern_vars, binding, bound) \
            and _match(pattern.arg, term.arg, pattern_vars, binding, bound)
    return isinstance(term, Abs) and pattern.bound.ty == term.bound.ty \
        and _match(pattern.body, term.body, pattern_vars, binding, bound + ((pattern.bound, term.bound),))


def builtin_rewrite(term: Term) -> Optional[Term]:
    """內建的布林與建構子化簡"""
    binder = dest_binder(term)
    if binder is not None:
        _, var, body = binder
        if is_const(body, "T") or var not in free_vars(body):
            return body
        return None

    negated = dest_neg(term)
    if negated is not None:
        if is_const(negated, "T"):
            return FALSE
        if is_const(negated, "F"):
            return TRUE
        inner = dest_neg(negated)
        return inner

    head, args = strip_app(term)
    if not isinstance(head, Const) or len(args) != 2:
        return None
    lhs, rhs = args
    name = head.name

    if name == "=":
        return _rewrite_eq(lhs, rhs)
    if name == "<=>":
        if alpha_equal(lhs, rhs):
            return TRUE
        for unit, other in ((lhs, rhs), (rhs, lhs)):
            if is_const(unit, "T"):
                return other
            if is_const(unit, "F"):
                return mk_neg(other)
        return None
    if name == "/\\":
        for unit, other in ((lhs, rhs), (rhs, lhs)):
            if is_const(unit, "T"):
                return other
            if is_const(unit, "F"):
                return FALSE
        return None
    if name == "\\/":
        for unit, other in ((lhs, rhs), (rhs, lhs)):
            if is_const(unit, "T"):
                return TRUE
            if is_const(unit, "F"):
                return other
        return None
    if name == "==>":
        if is_const(lhs, "T"):
            return rhs
        if is_const(lhs, "F") or is_const(rhs, "T"):
            return TRUE
        if is_const(rhs, "F"):
            return mk_neg(lhs)
    return None


def _rewrite_eq(lhs: Term, rhs: Term) -> Optional[Term]:
    if alpha_equal(lhs, rhs):
        return TRUE
    l_head, l_args = strip_app(lhs)
    r_head, r_args = strip_app(rhs)
    if not (isinstance(l_head, Const) and isinstance(r_head, Const)):
        return None
    constructors = {("SUC", 1), ("0", 0), ("CONS", 2), ("NIL", 0)}
    l_key, r_key = (l_head.name, len(l_args)), (r_head.name, len(r_args))
    if l_key not in constructors or r_key not in constructors:
        return None
    if l_key != r_key:
        return FALSE
    if l_head.name == "SUC":
        return mk_eq(l_args[0], r_args[0])
    if l_head.name == "CONS":
        return mk_conj(mk_eq(l_args[0], r_args[0]), mk_eq(l_args[1], r_args[1]))
    return None


class Rewriter:
    """
    由外而內、由左而右的改寫；每次改寫後從根重新開始，最多 REWRITE_LIMIT 步。
    """

    def __init__(self, rules: Sequence[RewriteRule], fixed_names: set):
        self.rules = list(rules)
        self.fixed_names = fixed_names

    def normalize(self, term: Term, budget: Budget) -> Term:
        for _ in range(REWRITE_LIMIT):
            rewritten = self.rewrite_once(term, budget)
            if rewritten is None:
                return term
            term = rewritten
        if self.rewrite_once(term, budget) is None:
            return term
        raise TacticError(f"rewrite limit of {REWRITE_LIMIT} steps reached")

    def rewrite_once(self, term: Term, budget: Budget) -> Optional[Term]:
        budget.tick()
        for rule in self.rules:
            binding = match(rule.lhs, term, rule.pattern_vars)
            if binding is not None:
                result = subst(rule.rhs, binding)
                if not alpha_equal(result, term):
                    return result
        result = builtin_rewrite(term)
        if result is not None and not alpha_equal(result, term):
            return result
        if isinstance(term, App):
            fn = self.rewrite_once(term.fn, budget)
            if fn is not None:
                return App(fn, term.arg)
            arg = self.rewrite_once(term.arg, budget)
            if arg is not None:
                return App(term.fn, arg)
            return None
        if isinstance(term, Abs):
            var, body = term.bound, term.body
            if var.name in self.fixed_names:
                fresh = variant(var, self.fixed_names | _names([body]))
                body = subst(body, {var: fresh})
                var = fresh
            inner = self.rewrite_once(body, budget)
            return Abs(var, inner) if inner is not None else None
        return None


def rewrite_with(theorems: Sequence[Theorem]):
    theorem_rule_list = [rule for theorem in theorems for rule in theorem_rules(theorem)]

    def run(goal: Goal, budget: Budget):
        rules = list(theorem_rule_list)
        for assumption in goal.assumptions:
            rules += rules_of(assumption, "assumption")
        fixed = _names(goal.assumptions)
        rewritten = Rewriter(rules, fixed).normalize(goal.conclusion, budget)
        if is_const(rewritten, "T"):
            return ()
        if alpha_equal(rewritten, goal.conclusion):
            raise TacticError("rewriting made no progress")
        return (Goal(goal.assumptions, rewritten),)
    return run


# ---------------------------------------------------------------------------
# 戰術庫
# ---------------------------------------------------------------------------

SIMPLE_TACTICS = {
    "accept_tac": accept_tac,
    "strip_tac": strip_tac,
    "gen_strip_tac": gen_strip_tac,
    "conj_tac": conj_tac,
    "disj1_tac": disj1_tac,
    "disj2_tac": disj2_tac,
    "contra_tac": contra_tac,
    "refl_tac": refl_tac,
    "sym_tac": sym_tac,
    "eq_subst_tac": eq_subst_tac,
    "induct_num_tac": induct_num_tac,
    "induct_list_tac": induct_list_tac,
    "absurd_tac": absurd_tac,
    "res_tac": res_tac,
    "disj_cases_tac": disj_cases_tac,
}


class TacticLibrary:
    """
    戰術字串到 Tactic 的轉換，以及有預算的執行。

    :param theorems: 定理環境（名稱 -> Theorem），rewrite_tac / hammer_tac 的參數由此解析
    :param signature: 解析項參數用的常數表
    :param hammer_timeout: hammer_tac 重播的預算，與搜尋時 hammer 的預算相同
    """

    def __init__(self, theorems: Optional[Dict[str, Theorem]] = None, signature: Optional[Signature] = None,
                 clock: str = "steps", steps_per_second: int = 100000,
                 replay_timeout: float = 1.0, tactic_timeout: float = 0.02,
                 hammer_timeout: float = HammerConfig.budget):
        self.theorems: Dict[str, Theorem] = dict(theorems or {})
        self.signature = signature or DEFAULT_SIGNATURE
        self.clock = clock
        self.steps_per_second = steps_per_second
        self.replay_timeout = replay_timeout
        self.tactic_timeout = tactic_timeout
        self.hammer_timeout = hammer_timeout
        self._cache: Dict[str, Tactic] = {}

    def add_theorem(self, theorem: Theorem):
        self.theorems[theorem.name] = theorem

    def resolve(self, names: Iterable[str]) -> List[Theorem]:
        theorems = []
        for name in names:
            theorem = self.theorems.get(name)
            if theorem is None:
                raise ScriptError(f"unknown theorem {name}")
            theorems.append(theorem)
        return theorems

    def tactic(self, text: str) -> Tactic:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        try:
            call = parse_tactic_call(text)
        except ParseError as ex:
            raise ScriptError(f"cannot parse tactic `{text}`: {ex}") from ex
        tactic = self._build(call)
        self._cache[text] = tactic
        self._cache[tactic.canonical_string] = tactic
        return tactic

    def _build(self, call: TacticCall) -> Tactic:
        name = call.name
        if name in SIMPLE_TACTICS:
            if call.theorems is not None or call.term is not None:
                raise ScriptError(f"{name} takes no argument")
            return Tactic(name, SIMPLE_TACTICS[name])
        if name in THEOREM_ARGUMENT:
            if call.theorems is None:
                raise ScriptError(f"{name} expects a theorem list")
            theorems = self.resolve(call.theorems)
            canonical = f"{name} [{', '.join(call.theorems)}]"
            if name == "rewrite_tac":
                return Tactic(canonical, rewrite_with(theorems))
            return Tactic(canonical, hammer_replay(theorems), is_hammer=True)
        if name in TERM_ARGUMENT:
            if call.term is None:
                raise ScriptError(f"{name} expects a term argument")
            try:
                term = parse_term(call.term, self.signature)
            except ParseError as ex:
                raise ScriptError(f"bad argument to {name}: {ex}") from ex
            canonical = f"{name} `{print_term(term, signature=self.signature)}`"
            builder = {"cases_num_tac": cases_num, "cases_list_tac": cases_list,
                       "exists_tac": exists_witness}[name]
            return Tactic(canonical, builder(term))
        raise ScriptError(f"unknown tactic {name}")

    def apply(self, tactic, goal: Goal, seconds: Optional[float] = None):
        """在預算內套用戰術（可傳入 Tactic 或戰術字串）"""
        return self.apply_metered(tactic, goal, seconds)[0]

    def apply_metered(self, tactic, goal: Goal, seconds: Optional[float] = None):
        if isinstance(tactic, str):
            tactic = self.tactic(tactic)
        if not seconds:
            seconds = self.hammer_timeout if tactic.is_hammer else self.replay_timeout
        return apply_metered(tactic, goal, seconds, clock=self.clock, steps_per_second=self.steps_per_second)

    def with_hammer_timeout(self, seconds: float) -> "TacticLibrary":
        """共用定理與快取、只換 hammer_tac 重播預算的戰術庫"""
        if seconds == self.hammer_timeout:
            return self
        other = copy.copy(self)
        other.hammer_timeout = seconds
        return other

    def reference_tactics(self) -> List[Tactic]:
        return [self.tactic(name) for name in SIMPLE_TACTICS] + [self.tactic("rewrite_tac []")]


def reference_tactics() -> List[Tactic]:
    return TacticLibrary().reference_tactics()


def apply_metered(tactic: Tactic, goal: Goal, seconds: float, clock: str = "steps",
                  steps_per_second: int = 100000):
    """
    在預算內執行戰術，回傳 (結果, 使用的步數)。

    TacticError 與型別錯誤轉成 Failure，BudgetExceeded 轉成 Timeout。
    """
    budget = Budget(seconds, steps_per_second, clock)
    try:
        budget.tick(TACTIC_BASE_COST)
        result = tactic.run(goal, budget)
    except BudgetExceeded:
        return Timeout(), budget.max_steps
    except (TacticError, TermError, UnsupportedFragmentError) as ex:
        return Failure(str(ex)), budget.steps
    except RecursionError:
        return Failure("term too deep"), budget.steps
    if isinstance(result, Subgoals):
        return result, budget.steps
    return Subgoals(tuple(result)), budget.steps


def apply_with_budget(tactic: Tactic, goal: Goal, seconds: float, clock: str = "steps",
                      steps_per_second: int = 100000):
    if seconds <= 0:
        raise ValueError("tactic budget must be positive")
    return apply_metered(tactic, goal, seconds, clock, steps_per_second)[0]
